"""Software selection: expand variants, minimise license/operation/hardware cost, emit installations."""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from . import optimizer
from .errors import Infeasible, UnsatisfiableDependency
from .model import (
    INTERNET,
    Employee,
    InputParameters,
    SoftwareInstallation,
    SoftwareVariant,
    TemplateSet,
    matches,
)


def expand_variants(templates: TemplateSet) -> list[SoftwareVariant]:
    """One variant per template per combination of local-dependency alternatives."""
    variants = []
    for t in templates.software:
        slots = []
        for k, group in enumerate(t.requires_local_software):
            hits = sorted(u.cpe_idn for u in templates.software if u is not t and matches(group, u.cpe_idn))
            if not hits:
                raise UnsatisfiableDependency(t.cpe_idn, k)
            slots.append(hits)
        for platform in itertools.product(*slots):
            vid = t.cpe_idn if not platform else f"{t.cpe_idn}@{'+'.join(platform)}"
            variants.append(SoftwareVariant(t, tuple(platform), vid))
    variants.sort(key=lambda v: (v.cpe_idn, v.platform))
    return variants


def is_internet_group(group: str) -> bool:
    return matches(group, INTERNET)


def providers(variants: list[SoftwareVariant], group: str) -> list[SoftwareVariant]:
    return [v for v in variants if any(matches(group, s) for s in v.template.provides_network_services)]


def user_providers(variants: list[SoftwareVariant], group: str) -> list[SoftwareVariant]:
    return [v for v in variants if any(matches(group, s) for s in v.template.provides_user_services)]


def unit_cost(v: SoftwareVariant, w_h: int) -> int:
    t = v.template
    return w_h * t.requires_hardware_quota + t.lc_n + t.oc_n


def first_install_premium(v: SoftwareVariant) -> int:
    t = v.template
    return t.lc_0 + t.oc_0 - t.lc_n - t.oc_n


def selection_cost(variants: list[SoftwareVariant], installations: list[SoftwareInstallation], w_h: int) -> int:
    """Evaluate the cost function on installation counts."""
    nn = Counter(inst.variant_id for inst in installations)
    total = 0
    for v in variants:
        n = nn.get(v.variant_id, 0)
        if n:
            t = v.template
            total += w_h * n * t.requires_hardware_quota + (t.lc_0 + t.oc_0) + (n - 1) * (t.lc_n + t.oc_n)
    return total


@dataclass
class SelectionProblem:
    problem: optimizer.IlpProblem
    roles: list[str]
    role_counts: dict[str, int]
    extra_slots: dict[str, int] = field(default_factory=dict)
    client_vars: dict[tuple[str, int, str], int] = field(default_factory=dict)
    server_vars: dict[str, int] = field(default_factory=dict)
    used_vars: dict[str, int] = field(default_factory=dict)


@dataclass
class Selection:
    employees: list[Employee]
    installations: list[SoftwareInstallation]
    variants: list[SoftwareVariant]
    cost: int


def _variants_of(variants: list[SoftwareVariant], cpe: str) -> list[SoftwareVariant]:
    return [v for v in variants if v.cpe_idn == cpe]


def build_problem(variants: list[SoftwareVariant], templates: TemplateSet, params: InputParameters) -> SelectionProblem:
    role_counts: dict[str, int] = defaultdict(int)
    for ers in params.erss:
        role_counts[ers.role_id] += ers.count
    roles = [r.role_id for r in templates.roles if role_counts.get(r.role_id, 0) > 0]

    # candidate client variants per role: user-service providers plus their platform closure
    client_cand: dict[str, list[SoftwareVariant]] = {}
    for role_id in roles:
        role = templates.role(role_id)
        picked: dict[str, SoftwareVariant] = {}
        todo = []
        for k, group in enumerate(role.required_user_services):
            hits = user_providers(variants, group)
            if not hits:
                raise Infeasible("1", f"role {role_id!r}: no software provides user service {group!r}")
            todo.extend(hits)
        while todo:
            v = todo.pop()
            if v.variant_id in picked:
                continue
            picked[v.variant_id] = v
            for cpe in v.platform:
                todo.extend(_variants_of(variants, cpe))
        client_cand[role_id] = [v for v in variants if v.variant_id in picked]

    services = [templates.service(s) for s in params.provided_external_services]
    demanded: list[str] = [g for s in services for g in s.required_network_services if not is_internet_group(g)]
    for cands in client_cand.values():
        demanded += [g for v in cands for g in v.template.requires_network_services if not is_internet_group(g)]
    server: dict[str, SoftwareVariant] = {}
    todo = [v for g in demanded for v in providers(variants, g)]
    while todo:
        v = todo.pop()
        if v.variant_id in server:
            continue
        server[v.variant_id] = v
        for cpe in v.platform:
            todo.extend(_variants_of(variants, cpe))
        for g in v.template.requires_network_services:
            if not is_internet_group(g):
                todo.extend(providers(variants, g))
    server_cand = [v for v in variants if v.variant_id in server]

    sp = SelectionProblem(optimizer.IlpProblem(0, []), roles, dict(role_counts))
    # Slot 0 is the configuration shared by most of a role; each extra slot is one employee
    # set apart. Moving an employee to slot 0 never costs more unless they are the only
    # holder of a variant whose first install is cheaper than later ones, which bounds
    # the number of extra slots by the count of such variants.
    for role_id in roles:
        cheap_first = sum(first_install_premium(v) < 0 for v in client_cand[role_id])
        sp.extra_slots[role_id] = min(role_counts[role_id] - 1, cheap_first)
    objective: list[int] = []
    w_h = params.w_h
    for role_id in roles:
        extra = sp.extra_slots[role_id]
        for slot in range(extra + 1):
            weight = role_counts[role_id] - extra if slot == 0 else 1
            for v in client_cand[role_id]:
                sp.client_vars[(role_id, slot, v.variant_id)] = len(objective)
                objective.append(weight * unit_cost(v, w_h))
    for v in server_cand:
        sp.server_vars[v.variant_id] = len(objective)
        objective.append(unit_cost(v, w_h))
    used_ids = {vid for (_, _, vid) in sp.client_vars} | set(sp.server_vars)
    for v in variants:
        if v.variant_id in used_ids:
            sp.used_vars[v.variant_id] = len(objective)
            objective.append(first_install_premium(v))
    n = len(objective)
    prob = optimizer.IlpProblem(n, objective)
    sp.problem = prob
    by_id = {v.variant_id: v for v in variants}

    # (1) user services per role and slot
    for role_id in roles:
        for slot in range(sp.extra_slots[role_id] + 1):
            for group in templates.role(role_id).required_user_services:
                providers_ = user_providers(client_cand[role_id], group)
                prob.add({sp.client_vars[(role_id, slot, v.variant_id)]: 1 for v in providers_}, ">=", 1)
    # (2) network services of organizational services
    for s in services:
        for group in s.required_network_services:
            if is_internet_group(group):
                continue
            cols = {sp.server_vars[v.variant_id]: 1 for v in providers(server_cand, group)}
            if not cols:
                raise Infeasible("2", f"service {s.service_id!r}: nothing provides {group!r}")
            prob.add(cols, ">=", 1)
    # (3) local dependencies in the same installation context
    for (role_id, slot, vid), col in sp.client_vars.items():
        for cpe in by_id[vid].platform:
            cols = {sp.client_vars[(role_id, slot, u.variant_id)]: 1 for u in _variants_of(client_cand[role_id], cpe)}
            cols[col] = cols.get(col, 0) - 1
            prob.add(cols, ">=", 0)
    for vid, col in sp.server_vars.items():
        for cpe in by_id[vid].platform:
            cols = {sp.server_vars[u.variant_id]: 1 for u in _variants_of(server_cand, cpe)}
            cols[col] = cols.get(col, 0) - 1
            prob.add(cols, ">=", 0)
    # (4) network requirements of anything installed
    for vid, used in sp.used_vars.items():
        for group in by_id[vid].template.requires_network_services:
            if is_internet_group(group):
                continue
            cols = {sp.server_vars[u.variant_id]: 1 for u in providers(server_cand, group)}
            cols[used] = cols.get(used, 0) - 1
            prob.add(cols, ">=", 0)
    # n0 links: installed-at-all iff some installation exists
    for vid, used in sp.used_vars.items():
        total = {used: 1}
        for role_id in roles:
            extra = sp.extra_slots[role_id]
            for slot in range(extra + 1):
                col = sp.client_vars.get((role_id, slot, vid))
                if col is not None:
                    prob.add({used: 1, col: -1}, ">=", 0)
                    total[col] = -(role_counts[role_id] - extra if slot == 0 else 1)
        col = sp.server_vars.get(vid)
        if col is not None:
            prob.add({used: 1, col: -1}, ">=", 0)
            total[col] = -1
        prob.add(total, "<=", 0)
    return sp


def make_employees(params: InputParameters) -> list[Employee]:
    employees = []
    for ers in params.erss:
        for _ in range(ers.count):
            employees.append(Employee(len(employees), ers.subgroup_id, ers.role_id))
    return employees


def choose_software(
    templates: TemplateSet,
    params: InputParameters,
    variants: list[SoftwareVariant] | None = None,
    node_budget: int = optimizer.DEFAULT_NODE_BUDGET,
) -> Selection:
    if variants is None:
        variants = expand_variants(templates)
    sp = build_problem(variants, templates, params)
    solution = optimizer.solve(sp.problem, node_budget=node_budget)
    if solution.status is optimizer.Status.INFEASIBLE:
        raise Infeasible("3/4", "local or network dependencies cannot be satisfied together")
    x = solution.values
    by_id = {v.variant_id: v for v in variants}
    employees = make_employees(params)
    roles = {r.role_id: r for r in templates.roles}

    # the last employees of a role take the extra slots
    slot_of: dict[int, int] = {}
    for role_id in sp.roles:
        members = [e.id for e in employees if e.role_id == role_id]
        extra = sp.extra_slots[role_id]
        for k, eid in enumerate(members):
            slot_of[eid] = max(0, k - (len(members) - extra) + 1)

    installations: list[SoftwareInstallation] = []
    for e in employees:
        chosen = [
            vid for (role_id, slot, vid), col in sp.client_vars.items() if role_id == e.role_id and slot == slot_of[e.id] and x[col]
        ]
        for vid in sorted(chosen):
            installations.append(SoftwareInstallation(len(installations), vid, e.id))
    for vid, col in sorted(sp.server_vars.items()):
        if x[col]:
            installations.append(SoftwareInstallation(len(installations), vid, None))

    _link_dependencies(installations, by_id)
    services = [templates.service(s) for s in params.provided_external_services]
    demanded = {g for s in services for g in s.required_network_services}
    for vid in {inst.variant_id for inst in installations}:
        demanded.update(by_id[vid].template.requires_network_services)
    depended = {d for inst in installations for d in inst.depends_on}
    for inst in installations:
        t = by_id[inst.variant_id].template
        if inst.owner is None:
            needed = any(matches(g, s) for g in demanded for s in t.provides_network_services)
            inst.org_services = [
                s.service_id
                for s in services
                if any(matches(g, p) for g in s.required_network_services for p in t.provides_network_services)
            ]
        else:
            role = roles[employees[inst.owner].role_id]
            needed = any(matches(g, s) for g in role.required_user_services for s in t.provides_user_services)
        inst.dependency_only = inst.id in depended and not needed
    propagate_org_services(installations)
    cost = selection_cost(variants, installations, params.w_h)
    assert cost == solution.objective_value, (cost, solution.objective_value)
    return Selection(employees, installations, variants, cost)


def _link_dependencies(installations: list[SoftwareInstallation], by_id: dict[str, SoftwareVariant]) -> None:
    by_owner: dict[int | None, list[SoftwareInstallation]] = defaultdict(list)
    for inst in installations:
        by_owner[inst.owner].append(inst)
    for inst in installations:
        deps = []
        for cpe in by_id[inst.variant_id].platform:
            dep = next(o for o in by_owner[inst.owner] if by_id[o.variant_id].cpe_idn == cpe)
            deps.append(dep.id)
        inst.depends_on = deps


def propagate_org_services(installations: list[SoftwareInstallation]) -> None:
    """Dependency-only software inherits the organizational services of what it supports."""
    index = {i.id: i for i in installations}
    changed = True
    while changed:
        changed = False
        for inst in installations:
            for dep_id in inst.depends_on:
                dep = index[dep_id]
                if not dep.dependency_only:
                    continue
                merged = sorted(set(dep.org_services) | set(inst.org_services))
                if merged != dep.org_services:
                    dep.org_services = merged
                    changed = True


def audit_selection(selection: Selection, templates: TemplateSet, params: InputParameters) -> list[str]:
    """Re-check selection criteria 1-4 on the produced installations."""
    problems = []
    by_id = {v.variant_id: v for v in selection.variants}
    installs = selection.installations
    by_owner: dict[int | None, list[SoftwareInstallation]] = defaultdict(list)
    for inst in installs:
        by_owner[inst.owner].append(inst)
    servers = [by_id[i.variant_id].template for i in by_owner[None]]
    for e in selection.employees:
        mine = [by_id[i.variant_id].template for i in by_owner[e.id]]
        for group in templates.role(e.role_id).required_user_services:
            if not any(matches(group, s) for t in mine for s in t.provides_user_services):
                problems.append(f"criterion 1: employee {e.id} lacks {group!r}")
    for sid in params.provided_external_services:
        for group in templates.service(sid).required_network_services:
            if not is_internet_group(group) and not any(
                matches(group, s) for t in servers for s in t.provides_network_services
            ):
                problems.append(f"criterion 2: service {sid!r} lacks {group!r}")
    for inst in installs:
        v = by_id[inst.variant_id]
        local = {by_id[o.variant_id].cpe_idn for o in by_owner[inst.owner]}
        for cpe in v.platform:
            if cpe not in local:
                problems.append(f"criterion 3: installation {inst.id} lacks local {cpe!r}")
        for group in v.template.requires_network_services:
            if not is_internet_group(group) and not any(
                matches(group, s) for t in servers for s in t.provides_network_services
            ):
                problems.append(f"criterion 4: installation {inst.id} lacks network {group!r}")
    return problems
