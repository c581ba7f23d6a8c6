"""Independent brute-force oracles shared by unit and acceptance tests."""

from __future__ import annotations

import itertools
import random
import re
from collections import Counter

from itsforge.model import (
    EmployeeRoleSubgroup,
    EmployeeRoleTemplate,
    InputParameters,
    OrganizationalServiceTemplate,
    SoftwareTemplate,
    SoftwareVariant,
    TemplateSet,
)


def _m(pattern: str, text: str) -> bool:
    return re.fullmatch(pattern, text) is not None


# -- software selection ----------------------------------------------------------------


def random_catalog(rng: random.Random) -> tuple[TemplateSet, InputParameters]:
    """At most 6 variants, 4 employees and 2 organizational services."""
    while True:
        templates, params = _catalog(rng)
        if len(oracle_variants(templates)) <= 6:
            return templates, params


def _catalog(rng: random.Random) -> tuple[TemplateSet, InputParameters]:
    oses = [
        SoftwareTemplate(f"cpe:/o:os{k}", f"OS {k}", requires_hardware_quota=rng.randint(1, 3), lc_0=rng.randint(0, 60), oc_0=rng.randint(0, 9), lc_n=rng.randint(0, 30), oc_n=rng.randint(0, 5))
        for k in range(rng.randint(1, 2))
    ]
    apps = []
    for k in range(rng.randint(1, 3)):
        needs_os = rng.random() < 0.7
        apps.append(
            SoftwareTemplate(
                f"cpe:/a:app{k}",
                f"App {k}",
                requires_local_software=("cpe:/o:os.*",) if needs_os else (),
                requires_network_services=(rng.choice(["(Net0).*", "(Net1).*"]),) if rng.random() < 0.4 else (),
                provides_user_services=tuple(sorted(rng.sample(["U0", "U1"], rng.randint(1, 2)))),
                requires_hardware_quota=rng.randint(0, 3),
                lc_0=rng.randint(0, 90),
                lc_n=rng.randint(0, 40),
                oc_0=rng.randint(0, 9),
                oc_n=rng.randint(0, 4),
            )
        )
    servers = []
    for k in range(rng.randint(1, 2)):
        servers.append(
            SoftwareTemplate(
                f"cpe:/a:srv{k}",
                f"Server {k}",
                requires_local_software=("cpe:/o:os.*",) if rng.random() < 0.5 else (),
                provides_network_services=tuple(sorted(rng.sample(["Net0", "Net1"], rng.randint(1, 2)))),
                requires_hardware_quota=rng.randint(1, 4),
                lc_0=rng.randint(0, 200),
                lc_n=rng.randint(0, 100),
                oc_0=rng.randint(0, 20),
                oc_n=rng.randint(0, 10),
            )
        )
    software = tuple(oses + apps + servers)
    roles = (
        EmployeeRoleTemplate("r0", ("(U0).*",)),
        EmployeeRoleTemplate("r1", tuple(rng.sample(["(U0).*", "(U1).*"], rng.randint(1, 2)))),
    )
    services = (
        OrganizationalServiceTemplate("S0", ("(Net0).*",)),
        OrganizationalServiceTemplate("S1", ("(Net1).*",)),
    )
    total = rng.randint(1, 4)
    first = rng.randint(0, total)
    erss = tuple(e for e in (EmployeeRoleSubgroup("r0", "g0", first), EmployeeRoleSubgroup("r1", "g1", total - first)) if e.count)
    provided = tuple(sorted(rng.sample(["S0", "S1"], rng.randint(0, 2))))
    params = InputParameters(erss=erss, provided_external_services=provided, w_h=rng.randint(0, 10))
    return TemplateSet(software, roles, services), params


def oracle_variants(templates: TemplateSet) -> list[SoftwareVariant]:
    out = []
    for t in templates.software:
        slots = [[u.cpe_idn for u in templates.software if u is not t and _m(g, u.cpe_idn)] for g in t.requires_local_software]
        for combo in itertools.product(*slots):
            out.append(SoftwareVariant(t, tuple(combo), t.cpe_idn + "".join("@" + c for c in combo)))
    return out


def _closed(chosen: tuple[SoftwareVariant, ...]) -> bool:
    cpes = {v.cpe_idn for v in chosen}
    return all(c in cpes for v in chosen for c in v.platform)


def _minimal(sets: list[frozenset]) -> list[frozenset]:
    return [s for s in sets if not any(o < s for o in sets)]


def exhaustive_selection_cost(templates: TemplateSet, params: InputParameters) -> int | None:
    """Minimum of the cost function over every per-employee and server assignment."""
    variants = oracle_variants(templates)
    if len(variants) > 8:
        raise ValueError("catalog too large for exhaustive search")
    subsets = [c for n in range(len(variants) + 1) for c in itertools.combinations(variants, n)]
    per_employee = []
    for ers in params.erss:
        role = templates.role(ers.role_id)
        ok = [
            frozenset(c)
            for c in subsets
            if _closed(c) and all(any(_m(g, s) for v in c for s in v.template.provides_user_services) for g in role.required_user_services)
        ]
        per_employee += [_minimal(ok)] * ers.count
    if any(not opts for opts in per_employee):
        return None
    demanded = [g for sid in params.provided_external_services for g in templates.service(sid).required_network_services]
    best = None
    for servers in subsets:
        if not _closed(servers):
            continue
        provided = [s for v in servers for s in v.template.provides_network_services]
        if not all(any(_m(g, p) for p in provided) for g in demanded):
            continue
        for choice in itertools.product(*per_employee):
            installed = [v for c in choice for v in c] + list(servers)
            needs = {g for v in installed for g in v.template.requires_network_services}
            if not all(_m(g, "Internet") or any(_m(g, p) for p in provided) for g in needs):
                continue
            cost = 0
            for v, n in Counter(installed).items():
                t = v.template
                cost += params.w_h * n * t.requires_hardware_quota + t.lc_0 + t.oc_0 + (n - 1) * (t.lc_n + t.oc_n)
            if best is None or cost < best:
                best = cost
    return best


# -- boolean satisfiability and segmentation ---------------------------------------------


def brute_force_models(num_vars: int, clauses) -> bool:  # type: ignore[no-untyped-def]
    for bits in itertools.product((False, True), repeat=num_vars):
        if all(any(bits[abs(l) - 1] == (l > 0) for l in c) for c in clauses):
            return True
    return False


def brute_force_min_segments(n: int, constraints: list[tuple], max_k: int) -> int | None:
    """Smallest k admitting a segment assignment of ``n`` objects, by full enumeration.

    Constraints: ("distinct", i, j), ("same", i, j), ("common", i, j),
    ("only_with", i, partners) every segment of i holds a partner,
    ("exposed", i) i sits in some internet-facing segment,
    ("hidden", i) i sits in no internet-facing segment.
    """
    for k in range(1, max_k + 1):
        nonempty = [frozenset(c) for r in range(1, k + 1) for c in itertools.combinations(range(k), r)]
        for facing_mask in range(1 << k):
            facing = frozenset(s for s in range(k) if facing_mask >> s & 1)
            for assign in itertools.product(nonempty, repeat=n):
                if all(_holds(c, assign, facing) for c in constraints):
                    return k
    return None


def _holds(c: tuple, assign, facing) -> bool:  # type: ignore[no-untyped-def]
    kind = c[0]
    if kind == "distinct":
        return not assign[c[1]] & assign[c[2]]
    if kind == "same":
        return assign[c[1]] == assign[c[2]]
    if kind == "common":
        return bool(assign[c[1]] & assign[c[2]])
    if kind == "only_with":
        return all(any(s in assign[p] for p in c[2]) for s in assign[c[1]])
    if kind == "exposed":
        return bool(assign[c[1]] & facing)
    if kind == "hidden":
        return not assign[c[1]] & facing
    raise ValueError(kind)


# -- dataset instance counts --------------------------------------------------------------


def enumerate_instances(collection, employees, services, clients_by_employee, servers) -> list[tuple]:  # type: ignore[no-untyped-def]
    """Instances as (employees, services, software) by direct enumeration of the split modes.

    ``servers``: list of (id, org_services, is_database); clients: list of (id, is_database).
    """
    emode = collection.employee_mode.value
    if not employees:
        emp_groups = [()]
    elif emode == "PerEmployee":
        emp_groups = [(e.id,) for e in employees]
    elif emode == "PerERS":
        groups: dict[str, list[int]] = {}
        for e in employees:
            groups.setdefault(e.subgroup_id, []).append(e.id)
        emp_groups = [tuple(v) for _, v in sorted(groups.items())]
    else:
        emp_groups = [tuple(e.id for e in employees)]
    if not services:
        svc_groups = [()]
    elif collection.service_mode.value == "PerService":
        svc_groups = [(s,) for s in services]
    else:
        svc_groups = [tuple(services)]
    out = []
    smode = collection.software_mode.value
    for eg in emp_groups:
        for sg in svc_groups:
            soft = [sid for sid, org, _ in servers if set(org) <= set(sg)]
            soft += [cid for e in eg for cid, _ in clients_by_employee.get(e, [])]
            soft = sorted(soft)
            db = {sid for sid, _, d in servers if d} | {cid for e in eg for cid, d in clients_by_employee.get(e, []) if d}
            srv = {sid for sid, _, _ in servers}
            if smode == "AllShared" or not soft:
                outs = [tuple(soft)]
            elif smode == "PerSoftware":
                outs = [(s,) for s in soft]
            else:
                key = {"PerDatabase": db, "PerServer": srv, "PerClient": set(soft) - srv}[smode]
                split = [s for s in soft if s in key]
                rest = [s for s in soft if s not in key]
                outs = [tuple(sorted(rest + [s])) for s in split] or [tuple(rest)]
            for s in outs:
                if eg or sg or s:
                    out.append((eg, sg, s))
    return out


# -- random segmentation problems ---------------------------------------------------------


def random_segmentation_case(rng: random.Random, max_objects: int = 5):  # type: ignore[no-untyped-def]
    """A small model plus user rules, and the same problem as oracle constraints."""
    from itsforge.model import (
        DatasetInstance,
        Employee,
        ItsModel,
        ObjectKind,
        ObjectQuery,
        RuleKind,
        SegmentationRule,
        SoftwareInstallation,
    )

    n_inst = rng.randint(1, max_objects)
    n_data = rng.randint(0, max_objects - n_inst)
    model = ItsModel()
    variants = []
    for j in range(n_inst):
        t = SoftwareTemplate(f"cpe:/a:x:t{j}", f"T{j}")
        variants.append(SoftwareVariant(t, (), t.cpe_idn))
        owner = None
        if rng.random() < 0.4:
            owner = len(model.employees)
            model.employees.append(Employee(owner, f"g{j}", "r"))
        model.installations.append(SoftwareInstallation(j, t.cpe_idn, owner, org_services=["S"] if rng.random() < 0.25 else []))
    model.variants = variants
    for j in range(1, n_inst):
        if rng.random() < 0.3:
            dep = rng.randrange(j)
            model.installations[j].depends_on = [dep]
    depended = {d for i in model.installations for d in i.depends_on}
    for i in model.installations:
        if i.id in depended and not i.org_services and rng.random() < 0.5:
            i.dependency_only = True
    for k in range(n_data):
        linked = sorted(rng.sample(range(n_inst), rng.randint(1, n_inst)))
        model.dataset_instances.append(
            DatasetInstance(
                n_inst + k,
                f"D{k}",
                rng.randint(1, 5),
                linked_services=["S"] if rng.random() < 0.2 else [],
                linked_installations=linked,
                primary_store_installation=linked[0],
            )
        )
    n = n_inst + n_data
    inst_ids = list(range(n_inst))
    data_ids = list(range(n_inst, n))

    def query(pool: str):  # type: ignore[no-untyped-def]
        if pool == "inst" or not data_ids:
            chosen = sorted(rng.sample(inst_ids, rng.randint(1, len(inst_ids))))
            regex = "cpe:/a:x:t(" + "|".join(str(c) for c in chosen) + ")"
            return ObjectQuery("cpe_idn", regex=regex, kind=ObjectKind.SOFTWARE_INSTALLATION), chosen
        chosen = sorted(rng.sample(data_ids, rng.randint(1, len(data_ids))))
        regex = "D(" + "|".join(str(c - n_inst) for c in chosen) + ")"
        return ObjectQuery("dataset_identifier", regex=regex, kind=ObjectKind.DATASET_INSTANCE), chosen

    rules = []
    cons: list[tuple] = []
    for _ in range(rng.randint(0, 3)):
        kind = rng.choice(["distinct", "same", "common", "collocated", "range", "exposure"])
        if kind in ("distinct", "same", "common"):
            (qa, a), (qb, b) = query(rng.choice(["inst", "data"])), query(rng.choice(["inst", "data"]))
            rk = {"distinct": RuleKind.REQUIRE_DISTINCT, "same": RuleKind.REQUIRE_SAME, "common": RuleKind.REQUIRE_COMMON}[kind]
            rules.append(SegmentationRule(rk, qa, qb))
            cons += [(kind, o, p) for o in a for p in b if o != p]
        elif kind == "collocated":
            rules.append(SegmentationRule(RuleKind.COLLOCATED_LOCAL_DEPENDENCIES))
            cons += [("common", i.id, d) for i in model.installations for d in i.depends_on]
        elif kind == "range":
            limit = rng.randint(0, 2)
            rules.append(SegmentationRule(RuleKind.PROTECTION_LEVEL_RANGE, allowed_difference=limit))
            ds = model.dataset_instances
            cons += [
                ("distinct", x.id, y.id)
                for x, y in itertools.combinations(ds, 2)
                if abs(x.protection_level - y.protection_level) > limit
            ]
        else:
            qa, a = query(rng.choice(["inst", "data"]))
            rules.append(SegmentationRule(RuleKind.INTERNET_EXPOSURE_ONLY_FOR, qa))
            cons += [("hidden", o) for o in range(n) if o not in a]

    # default rules
    for i in model.installations:
        if i.dependency_only:
            cons.append(("only_with", i.id, tuple(o.id for o in model.installations if i.id in o.depends_on)))
        if i.org_services:
            cons.append(("exposed", i.id))
    for d in model.dataset_instances:
        cons += [("common", d.id, j) for j in d.linked_installations]
        cons.append(("only_with", d.id, tuple(d.linked_installations)))
        if d.linked_services:
            cons.append(("exposed", d.id))
    return model, rules, n, cons


def storable(c, want, installs, variants):
    """Whether every enumerated instance has software of the primary-storage kind."""
    by_v = {v.variant_id: v for v in variants}
    kind = {
        "Database": lambda i: by_v[i.variant_id].template.database,
        "Server": lambda i: i.owner is None,
        "Client": lambda i: i.owner is not None,
    }[c.primary_storage.value]
    return all(any(kind(installs[j]) for j in w) for _, _, w in want)
