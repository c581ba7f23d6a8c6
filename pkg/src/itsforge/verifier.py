"""Post-hoc model checker.

Everything here is written from the rule definitions, not from the generator's
encoders: queries are re-evaluated with a separate attribute reader and rules are
checked directly on the final segment memberships.
"""

from __future__ import annotations

import itertools
import operator
import re
from collections import defaultdict
from dataclasses import dataclass

from .model import (
    DataCollection,
    DatasetInstance,
    EmployeeMode,
    InputParameters,
    ItsModel,
    ObjectKind,
    ObjectQuery,
    PrimaryStorage,
    RuleKind,
    ServiceMode,
    SoftwareInstallation,
    SoftwareMode,
    SoftwareTemplate,
    TemplateSet,
)

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq, "!=": operator.ne}


@dataclass(frozen=True)
class Violation:
    rule_ref: str  # "rule[3]", "default:dependency", "structure:hq", ...
    object_ids: tuple[int, ...]
    detail: str

    def __str__(self) -> str:
        ids = ",".join(str(i) for i in self.object_ids)
        return f"{self.rule_ref} [{ids}] {self.detail}"


def _full(pattern: str, text: str) -> bool:
    return re.fullmatch(pattern, text) is not None


class _View:
    """Read-only lookups over a model."""

    def __init__(self, model: ItsModel) -> None:
        self.m = model
        self.variants = {v.variant_id: v for v in model.variants}
        self.inst = {i.id: i for i in model.installations}
        self.data = {d.id: d for d in model.dataset_instances}
        self.emp = {e.id: e for e in model.employees}
        self.comp = {c.id: c for c in model.computers}
        self.host: dict[int, list[int]] = defaultdict(list)
        for c in model.computers:
            for i in c.installation_ids:
                self.host[i].append(c.id)
        self.facing = {s.id for s in model.segments if s.internet_facing}

    def t(self, inst_id: int) -> SoftwareTemplate:
        return self.variants[self.inst[inst_id].variant_id].template

    def segs(self, obj_id: int) -> set[int]:
        obj = self.inst.get(obj_id) or self.data[obj_id]
        return set(obj.segment_ids)

    def all_ids(self) -> list[int]:
        return sorted([*self.inst, *self.data])

    def value(self, obj_id: int, attribute: str):  # type: ignore[no-untyped-def]
        if obj_id in self.inst:
            i = self.inst[obj_id]
            t = self.t(obj_id)
            table = {
                "cpe_idn": lambda: t.cpe_idn,
                "name": lambda: t.name,
                "variant_id": lambda: i.variant_id,
                "provides_user_services": lambda: list(t.provides_user_services),
                "provides_network_services": lambda: list(t.provides_network_services),
                "is_server": lambda: i.owner is None,
                "is_database": lambda: t.database,
                "org_services": lambda: list(i.org_services),
                "subgroup_id": lambda: None if i.owner is None else self.emp[i.owner].subgroup_id,
                "data_types": lambda: [x for entry in t.data_types for x in entry.split("|")],
                "social_engineering_attacks": lambda: t.social_engineering_attacks,
            }
        else:
            d = self.data[obj_id]
            table = {
                "dataset_identifier": lambda: d.collection_id,
                "protection_level": lambda: d.protection_level,
                "org_services": lambda: list(d.linked_services),
                "subgroup_id": lambda: sorted({self.emp[e].subgroup_id for e in d.linked_employees}),
            }
        getter = table.get(attribute)
        return None if getter is None else getter()

    def select(self, q: ObjectQuery) -> list[int]:
        out = []
        for oid in self.all_ids():
            if q.kind is ObjectKind.SOFTWARE_INSTALLATION and oid not in self.inst:
                continue
            if q.kind is ObjectKind.DATASET_INSTANCE and oid not in self.data:
                continue
            v = self.value(oid, q.attribute)
            if v is None:
                continue
            if q.op is not None:
                if isinstance(v, int) and not isinstance(v, bool) and _OPS[q.op](v, q.value):
                    out.append(oid)
                continue
            items = v if isinstance(v, list) else [v]
            texts = [("true" if x else "false") if isinstance(x, bool) else str(x) for x in items]
            if any(_full(q.regex, x) for x in texts):  # type: ignore[arg-type]
                out.append(oid)
        return out


# -- segmentation rules --------------------------------------------------------------


def _user_rules(v: _View, params: InputParameters) -> list[Violation]:
    out = []
    for n, rule in enumerate(params.network_policies):
        ref = f"rule[{n}]"
        if rule.kind is RuleKind.REQUIRE_DISTINCT:
            a, b = v.select(rule.a), v.select(rule.b)  # type: ignore[arg-type]
            for o in a:
                for p in b:
                    if o != p and v.segs(o) & v.segs(p):
                        out.append(Violation(ref, (o, p), "share a segment but must be kept apart"))
        elif rule.kind is RuleKind.REQUIRE_SAME:
            for o, p in itertools.product(v.select(rule.a), v.select(rule.b)):  # type: ignore[arg-type]
                if o != p and v.segs(o) != v.segs(p):
                    out.append(Violation(ref, (o, p), "segment sets differ but must be identical"))
        elif rule.kind is RuleKind.REQUIRE_COMMON:
            for o, p in itertools.product(v.select(rule.a), v.select(rule.b)):  # type: ignore[arg-type]
                if o != p and not v.segs(o) & v.segs(p):
                    out.append(Violation(ref, (o, p), "no shared segment"))
        elif rule.kind is RuleKind.COLLOCATED_LOCAL_DEPENDENCIES:
            for i in v.m.installations:
                for d in i.depends_on:
                    if not v.segs(i.id) & v.segs(d):
                        out.append(Violation(ref, (i.id, d), "local dependency never in a shared segment"))
        elif rule.kind is RuleKind.PROTECTION_LEVEL_RANGE:
            for a, b in itertools.combinations(v.m.dataset_instances, 2):
                gap = abs(a.protection_level - b.protection_level)
                if gap > rule.allowed_difference and set(a.segment_ids) & set(b.segment_ids):  # type: ignore[operator]
                    out.append(Violation(ref, (a.id, b.id), f"protection levels {gap} apart share a segment"))
        elif rule.kind is RuleKind.INTERNET_EXPOSURE_ONLY_FOR:
            allowed = set(v.select(rule.a))  # type: ignore[arg-type]
            for oid in v.all_ids():
                if oid not in allowed and v.segs(oid) & v.facing:
                    out.append(Violation(ref, (oid,), "exposed to the Internet without permission"))
    return out


def _default_rules(v: _View) -> list[Violation]:
    out = []
    dependents: dict[int, set[int]] = defaultdict(set)
    for i in v.m.installations:
        for d in i.depends_on:
            dependents[d].add(i.id)
    for i in v.m.installations:
        if i.dependency_only:
            for s in sorted(v.segs(i.id)):
                if not any(s in v.segs(o) for o in dependents[i.id]):
                    out.append(Violation("default:dependency", (i.id,), f"segment {s} holds no software depending on it"))
        if i.org_services and not v.segs(i.id) & v.facing:
            out.append(Violation("default:exposure-software", (i.id,), "organizational-service software is not internet-facing"))
    for d in v.m.dataset_instances:
        for i in d.linked_installations:
            if not v.segs(d.id) & v.segs(i):
                out.append(Violation("default:dataset-link", (d.id, i), "dataset shares no segment with linked software"))
        for s in sorted(v.segs(d.id)):
            if not any(s in v.segs(i) for i in d.linked_installations):
                out.append(Violation("default:dataset-link", (d.id,), f"segment {s} holds none of its linked software"))
        if d.linked_services and not v.segs(d.id) & v.facing:
            out.append(Violation("default:exposure-dataset", (d.id,), "organizational-service dataset is not internet-facing"))
    return out


# -- structure -----------------------------------------------------------------------


def _references(v: _View) -> list[Violation]:
    out = []
    segs = {s.id for s in v.m.segments}

    def bad(ref: str, ids: tuple[int, ...], what: str) -> None:
        out.append(Violation("structure:reference", ids, f"{ref}: {what} does not resolve"))

    for i in v.m.installations:
        if i.variant_id not in v.variants:
            bad("installation", (i.id,), f"variant {i.variant_id!r}")
        if i.owner is not None and i.owner not in v.emp:
            bad("installation", (i.id,), f"owner {i.owner}")
        for j in [*i.depends_on, *i.uses, *([i.replica_of] if i.replica_of is not None else [])]:
            if j not in v.inst:
                bad("installation", (i.id, j), "installation link")
        for s in i.segment_ids:
            if s not in segs:
                bad("installation", (i.id,), f"segment {s}")
    for d in v.m.dataset_instances:
        for e in d.linked_employees:
            if e not in v.emp:
                bad("dataset", (d.id,), f"employee {e}")
        for j in d.linked_installations:
            if j not in v.inst:
                bad("dataset", (d.id, j), "installation link")
        for s in d.segment_ids:
            if s not in segs:
                bad("dataset", (d.id,), f"segment {s}")
    for c in v.m.computers:
        for j in c.installation_ids:
            if j not in v.inst:
                bad("computer", (c.id, j), "installation")
        for s in c.segment_ids:
            if s not in segs:
                bad("computer", (c.id,), f"segment {s}")
    for cr in v.m.credentials:
        if cr.stored_on_computer not in v.comp:
            bad("credential", (cr.id,), f"computer {cr.stored_on_computer}")
        for j in cr.accepted_by_installations:
            if j not in v.inst:
                bad("credential", (cr.id, j), "installation")
        for e in cr.used_by_employees:
            if e not in v.emp:
                bad("credential", (cr.id,), f"employee {e}")
    for r in v.m.firewall_rules:
        for j in (r.source, r.target):
            if j is not None and j not in v.inst:
                bad("firewall", (j,), "endpoint")
    return out


def _placement(v: _View) -> list[Violation]:
    out = []
    objects = v.all_ids()
    if objects and not v.m.segments:
        return [Violation("structure:segments", (), "objects exist but no segment does")]
    for oid in objects:
        if not v.segs(oid):
            out.append(Violation("structure:segments", (oid,), "object has no segment"))
    for s in v.m.segments:
        if s.internet_facing:
            needed = [
                o for o in objects if s.id in v.segs(o) and (o in v.inst and v.inst[o].org_services or o in v.data and v.data[o].linked_services)
            ]
            if not needed:
                out.append(Violation("structure:segments", (), f"segment {s.id} is internet-facing without need"))
    if v.m.computers:
        for i in v.m.installations:
            hosts = v.host.get(i.id, [])
            if len(hosts) != 1:
                out.append(Violation("structure:placement", (i.id,), f"installed on {len(hosts)} computers"))
            elif not set(i.segment_ids) <= set(v.comp[hosts[0]].segment_ids):
                out.append(Violation("structure:placement", (i.id, hosts[0]), "segments not on its computer"))
    return out


def _hardware(v: _View) -> list[Violation]:
    out = []
    clients: dict[int, int] = defaultdict(int)
    for i in v.m.installations:
        for u in i.uses:
            clients[u] += 1
    for c in v.m.computers:
        total = 0
        for j in c.installation_ids:
            t = v.t(j)
            total += t.requires_hardware_quota
            if v.inst[j].owner is None:
                total += t.requires_hardware_quota_per_client * clients[j]
        if total != c.hq_used:
            out.append(Violation("structure:hq", (c.id,), f"hq_used {c.hq_used} but installations need {total}"))
        if c.hq_used > v.m.hq_limit:
            out.append(Violation("structure:hq", (c.id,), f"hq_used {c.hq_used} exceeds limit {v.m.hq_limit}"))
    return out


def _dependencies(v: _View) -> list[Violation]:
    out = []
    if not v.m.computers:
        return out
    for i in v.m.installations:
        hosts = v.host.get(i.id, [])
        if len(hosts) != 1:
            continue
        local = v.comp[hosts[0]].installation_ids
        cpes = {v.t(j).cpe_idn for j in local}
        for cpe in v.variants[i.variant_id].platform:
            if cpe not in cpes:
                out.append(Violation("structure:dependency", (i.id,), f"{cpe} is not on its computer"))
        for d in i.depends_on:
            if d not in local:
                out.append(Violation("structure:dependency", (i.id, d), "depends on software on another computer"))
    for i in v.m.installations:
        for group in v.t(i.id).requires_network_services:
            if _full(group, "Internet"):
                continue
            if not any(_full(group, s) for u in i.uses for s in v.t(u).provides_network_services):
                out.append(Violation("structure:network", (i.id,), f"requirement {group!r} has no provider"))
    return out


def _dc(v: _View) -> tuple[int, int] | None:
    for c in sorted(v.m.computers, key=lambda c: c.id):
        ldap = sorted(j for j in c.installation_ids if any(_full(r"(LDAP).*", s) for s in v.t(j).provides_network_services))
        if ldap:
            return c.id, ldap[0]
    return None


def _credentials(v: _View) -> list[Violation]:
    out = []
    if not v.m.computers:
        return out
    dc = _dc(v)
    accepted: set[int] = set()
    for cr in v.m.credentials:
        accepted.update(cr.accepted_by_installations)
        if cr.scope == "domain":
            if dc is None:
                out.append(Violation("structure:credential", (cr.id,), "domain credential without a domain controller"))
            elif cr.stored_on_computer != dc[0]:
                out.append(Violation("structure:credential", (cr.id,), "domain credential not stored on the DC"))
        if cr.purpose == "user":
            if len(cr.used_by_employees) != 1:
                out.append(Violation("structure:credential", (cr.id,), "user credential must belong to one employee"))
                continue
            owner = cr.used_by_employees[0]
            for j in cr.accepted_by_installations:
                if v.inst[j].owner != owner:
                    out.append(Violation("structure:least-privilege", (cr.id, j), f"employee {owner} does not use it"))
        if cr.purpose == "root":
            for j in cr.accepted_by_installations:
                if not v.t(j).is_operating_system or j not in v.comp[cr.stored_on_computer].installation_ids:
                    out.append(Violation("structure:credential", (cr.id, j), "root credential outside its computer's OS"))
        if not cr.privileged and cr.purpose in ("root", "domain_admin"):
            out.append(Violation("structure:credential", (cr.id,), "administrative credential is not privileged"))
        if cr.privileged and cr.purpose in ("user", "service"):
            out.append(Violation("structure:least-privilege", (cr.id,), f"{cr.purpose} credential is privileged"))
    for i in v.m.installations:
        if v.t(i.id).uses_credentials and i.id not in accepted:
            out.append(Violation("structure:credential", (i.id,), "software needs credentials but accepts none"))
    return out


def expected_firewall(model: ItsModel) -> dict[tuple[int | None, int | None], set[str]]:
    """Connections the model needs, recomputed from installations, uses and credentials."""
    v = _View(model)
    want: dict[tuple[int | None, int | None], set[str]] = defaultdict(set)
    org_groups = [g for s in model.services for g in s.required_network_services]
    for i in model.installations:
        t = v.t(i.id)
        if i.owner is None and any(_full(g, p) for g in org_groups for p in t.provides_network_services):
            want[(None, i.id)].add("a")
        if any(_full(g, "Internet") for g in t.requires_network_services):
            want[(i.id, None)].add("b")
        for u in i.uses:
            if not v.segs(i.id) & v.segs(u):
                want[(i.id, u)].add("c")
    dc = _dc(v)
    if dc is not None:
        for cr in model.credentials:
            if cr.scope == "domain":
                for j in cr.accepted_by_installations:
                    if j != dc[1] and not v.segs(j) & v.segs(dc[1]):
                        want[(j, dc[1])].add("d")
    return want


def _firewall(v: _View) -> list[Violation]:
    out = []
    if not v.m.computers:
        return out
    want = expected_firewall(v.m)
    have: dict[tuple[int | None, int | None], set[str]] = {}
    for r in v.m.firewall_rules:
        key = (r.source, r.target)
        if key in have:
            out.append(Violation("structure:firewall", tuple(x for x in key if x is not None), "duplicate rule"))
        have[key] = set(r.causes)
    for key in sorted(set(want) | set(have), key=lambda k: (k[0] is not None, k[0] or 0, k[1] is not None, k[1] or 0)):
        ids = tuple(x for x in key if x is not None)
        if key not in have:
            out.append(Violation("structure:firewall", ids, f"missing rule for causes {sorted(want[key])}"))
        elif key not in want:
            out.append(Violation("structure:firewall", ids, "rule has no cause (default deny)"))
        elif have[key] != want[key]:
            out.append(Violation("structure:firewall", ids, f"causes {sorted(have[key])} != {sorted(want[key])}"))
    return out


# -- dataset laws ----------------------------------------------------------------------


def _dataset_laws(v: _View, params: InputParameters) -> list[Violation]:
    out = []
    by_coll: dict[str, list[DatasetInstance]] = defaultdict(list)
    for d in v.m.dataset_instances:
        by_coll[d.collection_id].append(d)
    provided = set(params.provided_external_services)
    for coll in params.data_collections:
        ref = f"dataset:{coll.identifier}"
        inst = by_coll.get(coll.identifier, [])
        eligible = {e.id for e in v.m.employees if e.subgroup_id in coll.linked_erss}
        services = {s for s in coll.linked_services if s in provided}
        out += _employee_law(v, coll, inst, eligible, ref)
        out += _service_law(coll, inst, services, ref)
        out += _software_law(v, coll, inst, ref)
    return out


def _employee_law(v: _View, coll: DataCollection, inst: list[DatasetInstance], eligible: set[int], ref: str) -> list[Violation]:
    out = []
    sets = {tuple(d.linked_employees) for d in inst}
    covered = {e for d in inst for e in d.linked_employees}
    if not eligible:
        if covered:
            out.append(Violation(ref, (), "links employees outside its subgroups"))
        return out
    if inst and covered != eligible:
        out.append(Violation(ref, tuple(d.id for d in inst), "linked employees do not cover the eligible ones exactly"))
    if coll.employee_mode is EmployeeMode.PER_EMPLOYEE:
        bad = [d.id for d in inst if len(d.linked_employees) != 1]
    elif coll.employee_mode is EmployeeMode.PER_ERS:
        by_group: dict[str, set[int]] = defaultdict(set)
        for e in eligible:
            by_group[v.emp[e].subgroup_id].add(e)
        bad = [d.id for d in inst if set(d.linked_employees) not in by_group.values()]
    else:
        bad = [d.id for d in inst if set(d.linked_employees) != eligible]
    if bad:
        out.append(Violation(ref, tuple(bad), f"employee links break {coll.employee_mode.value}"))
    del sets
    return out


def _service_law(coll: DataCollection, inst: list[DatasetInstance], services: set[str], ref: str) -> list[Violation]:
    covered = {s for d in inst for s in d.linked_services}
    if inst and covered != services:
        return [Violation(ref, tuple(d.id for d in inst), "linked services do not cover the eligible ones exactly")]
    if not services:
        return []
    if coll.service_mode is ServiceMode.PER_SERVICE:
        bad = [d.id for d in inst if len(d.linked_services) != 1]
    else:
        bad = [d.id for d in inst if set(d.linked_services) != services]
    return [Violation(ref, tuple(bad), f"service links break {coll.service_mode.value}")] if bad else []


def _software_law(v: _View, coll: DataCollection, inst: list[DatasetInstance], ref: str) -> list[Violation]:
    out = []
    cls = coll.data_class
    for d in inst:
        t_of = {j: v.t(j) for j in d.linked_installations}
        for j, t in t_of.items():
            if cls not in [x for entry in t.data_types for x in entry.split("|")]:
                out.append(Violation(ref, (d.id, j), f"linked software does not handle {cls}"))
        store = d.primary_store_installation
        if store is None or store not in t_of:
            out.append(Violation(ref, (d.id,), "primary store is not a linked installation"))
        else:
            kind = coll.primary_storage
            ok = (
                (kind is PrimaryStorage.DATABASE and t_of[store].database)
                or (kind is PrimaryStorage.SERVER and v.inst[store].owner is None)
                or (kind is PrimaryStorage.CLIENT and v.inst[store].owner is not None)
            )
            if not ok:
                out.append(Violation(ref, (d.id, store), f"primary store is not a {kind.value.lower()}"))
        mode = coll.software_mode
        if mode is SoftwareMode.PER_SOFTWARE and len(t_of) != 1:
            out.append(Violation(ref, (d.id,), "PerSoftware instance must link exactly one installation"))
        limits = {
            SoftwareMode.PER_DATABASE: [j for j, t in t_of.items() if t.database],
            SoftwareMode.PER_SERVER: [j for j in t_of if v.inst[j].owner is None],
            SoftwareMode.PER_CLIENT: [j for j in t_of if v.inst[j].owner is not None],
        }
        if mode in limits and len(limits[mode]) > 1:
            out.append(Violation(ref, (d.id,), f"{mode.value} instance links {len(limits[mode])} of its split category"))
    return out


# -- entry point -----------------------------------------------------------------------


def verify(model: ItsModel, params: InputParameters, templates: TemplateSet | None = None) -> list[Violation]:
    """Every broken rule or invariant; empty means the model is valid."""
    del templates  # the model carries its variants
    v = _View(model)
    out = _references(v)
    if out:
        return out
    out += _placement(v)
    out += _user_rules(v, params)
    out += _default_rules(v)
    out += _hardware(v)
    out += _dependencies(v)
    out += _credentials(v)
    out += _firewall(v)
    out += _dataset_laws(v, params)
    return out
