"""Network segmenter: minimum segment count search over representative objects.

For k = 1, 2, ... the user rules and the default rules are encoded as clauses over
membership variables ``x[o][s]`` and internet-facing flags ``i[s]``. The first
satisfiable k wins. Related objects are then joined where possible, excess
memberships are pruned, and the representative result is copied to every object.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field

from .csp import CspProblem
from .errors import SegmentationInfeasible, UnknownAttribute
from .model import (
    KNOWN_ATTRIBUTES,
    DatasetInstance,
    ItsModel,
    NetworkSegment,
    ObjectQuery,
    QueryContext,
    RuleKind,
    SegmentationRule,
    SoftwareInstallation,
)

Obj = SoftwareInstallation | DatasetInstance


# -- representatives -----------------------------------------------------------------


@dataclass
class RepresentativeGroups:
    rep_of: dict[int, int] = field(default_factory=dict)  # object id -> representative object id
    members: dict[int, list[int]] = field(default_factory=dict)  # representative -> objects
    employee_groups: list[list[int]] = field(default_factory=list)  # representative employee first
    owned: dict[int, list[int]] = field(default_factory=dict)  # employee -> owned object ids

    @property
    def representatives(self) -> list[int]:
        return sorted(self.members)

    def multiplicity(self, rep: int) -> int:
        return len(self.members[rep])


def _private_owner(inst: DatasetInstance, owner_of: dict[int, int | None]) -> int | None:
    """An instance belongs to one employee when it links exactly that employee."""
    if len(inst.linked_employees) != 1:
        return None
    e = inst.linked_employees[0]
    if any(owner_of[i] not in (None, e) for i in inst.linked_installations):
        return None
    return e


def get_representative_objects(model: ItsModel) -> RepresentativeGroups:
    """Group employees whose objects are interchangeable; one employee stands for each group."""
    owner_of = {i.id: i.owner for i in model.installations}
    variant_of = {i.id: i.variant_id for i in model.installations}
    owned: dict[int, list[int]] = defaultdict(list)
    for inst in model.installations:
        if inst.owner is not None:
            owned[inst.owner].append(inst.id)
    private: dict[int, int] = {}
    for ds in model.dataset_instances:
        e = _private_owner(ds, owner_of)
        if e is not None:
            private[ds.id] = e
            owned[e].append(ds.id)

    def slot(obj_id: int, e: int, instances: dict[int, DatasetInstance]) -> tuple:
        """Position of an owned object inside its employee, comparable across employees."""
        if obj_id in variant_of:
            return ("software", variant_of[obj_id])
        ds = instances[obj_id]
        mine = tuple(sorted(variant_of[i] for i in ds.linked_installations if owner_of[i] == e))
        other = tuple(sorted(i for i in ds.linked_installations if owner_of[i] != e))
        return ("dataset", ds.collection_id, mine, other, tuple(ds.linked_services))

    instances = {d.id: d for d in model.dataset_instances}
    shared_links: dict[int, list[tuple]] = defaultdict(list)
    for ds in model.dataset_instances:
        if ds.id in private:
            continue
        for i in ds.linked_installations:
            e = owner_of[i]
            if e is not None:
                shared_links[e].append((ds.id, variant_of[i]))

    groups: dict[tuple, list[int]] = defaultdict(list)
    slots: dict[int, list[tuple[tuple, int]]] = {}
    for emp in model.employees:
        mine = sorted((slot(o, emp.id, instances), o) for o in owned[emp.id])
        slots[emp.id] = mine
        key = (emp.subgroup_id, tuple(s for s, _ in mine), tuple(sorted(shared_links[emp.id])))
        groups[key].append(emp.id)

    out = RepresentativeGroups(owned={e: sorted(v) for e, v in owned.items()})
    for members in sorted(groups.values()):
        rep = members[0]
        out.employee_groups.append(members)
        for e in members:
            for (_, obj), (_, rep_obj) in zip(slots[e], slots[rep]):
                out.rep_of[obj] = rep_obj
    for obj in model.objects():
        out.rep_of.setdefault(obj.id, obj.id)
    for obj_id, rep in sorted(out.rep_of.items()):
        out.members.setdefault(rep, []).append(obj_id)
    return out


# -- encoding ------------------------------------------------------------------------


@dataclass
class SegmentAssignment:
    memberships: dict[int, list[int]] = field(default_factory=dict)  # object id -> segment indices
    segment_count: int = 0
    internet_facing: list[bool] = field(default_factory=list)
    names: list[str] = field(default_factory=list)


class _Encoder:
    """Clauses for one candidate segment count over the representative objects."""

    def __init__(self, model: ItsModel, groups: RepresentativeGroups, rules: list[SegmentationRule], k: int) -> None:
        self.model = model
        self.groups = groups
        self.k = k
        self.ctx = QueryContext(model)
        index: dict[int, Obj] = {o.id: o for o in model.objects()}
        self.objs: list[Obj] = [index[r] for r in groups.representatives]
        self.p = CspProblem()
        self.x: dict[int, list[int]] = {o.id: self.p.new_vars(k) for o in self.objs}
        self.i: list[int] = self.p.new_vars(k)
        for o in self.objs:
            self.p.add_clause(self.x[o.id])
        self._defaults()
        for rule in rules:
            self.add_rule(rule)

    # helpers
    def rep(self, obj_id: int) -> int:
        return self.groups.rep_of[obj_id]

    def select(self, q: ObjectQuery) -> list[int]:
        if q.attribute not in KNOWN_ATTRIBUTES:
            raise UnknownAttribute(q.attribute)
        return [o.id for o in self.objs if self.ctx.satisfies(o, q)]

    def never_together(self, a: int, b: int) -> None:
        for s in range(self.k):
            self.p.add_clause([-self.x[a][s], -self.x[b][s]])

    def same(self, a: int, b: int) -> None:
        for s in range(self.k):
            self.p.add_clause([-self.x[a][s], self.x[b][s]])
            self.p.add_clause([self.x[a][s], -self.x[b][s]])

    def common(self, a: int, b: int) -> None:
        if a == b:
            return
        aux = self.p.new_vars(self.k)
        self.p.add_clause(aux)
        for s, c in enumerate(aux):
            self.p.add_clause([-c, self.x[a][s]])
            self.p.add_clause([-c, self.x[b][s]])

    def exposed(self, a: int) -> None:
        aux = self.p.new_vars(self.k)
        self.p.add_clause(aux)
        for s, c in enumerate(aux):
            self.p.add_clause([-c, self.x[a][s]])
            self.p.add_clause([-c, self.i[s]])

    def only_with(self, a: int, partners: list[int]) -> None:
        """Every segment holding ``a`` also holds one of ``partners``."""
        for s in range(self.k):
            self.p.add_clause([-self.x[a][s], *(self.x[b][s] for b in partners)])

    def _defaults(self) -> None:
        dependents: dict[int, set[int]] = defaultdict(set)
        for o in self.objs:
            if isinstance(o, SoftwareInstallation):
                for d in o.depends_on:
                    dependents[self.rep(d)].add(o.id)
        for o in self.objs:
            if isinstance(o, SoftwareInstallation):
                if o.dependency_only:
                    self.only_with(o.id, sorted(dependents[o.id]))
                if o.org_services and not o.dependency_only:
                    # propagated services follow the exposed dependent, which is constrained itself
                    self.exposed(o.id)
            else:
                linked = sorted({self.rep(i) for i in o.linked_installations})
                for inst in linked:
                    self.common(o.id, inst)
                if linked:
                    self.only_with(o.id, linked)
                if o.linked_services:
                    self.exposed(o.id)

    def add_rule(self, rule: SegmentationRule) -> None:
        kind = rule.kind
        if kind is RuleKind.REQUIRE_DISTINCT:
            a, b = self.select(rule.a), self.select(rule.b)  # type: ignore[arg-type]
            bset = set(b)
            for o in a:
                if o in bset and self.groups.multiplicity(o) > 1:
                    # two members of one group always share segments
                    for s in range(self.k):
                        self.p.add_clause([-self.x[o][s]])
                for p in b:
                    if p != o:
                        self.never_together(o, p)
        elif kind is RuleKind.REQUIRE_SAME:
            for o, p in itertools.product(self.select(rule.a), self.select(rule.b)):  # type: ignore[arg-type]
                if o != p:
                    self.same(o, p)
        elif kind is RuleKind.REQUIRE_COMMON:
            for o, p in itertools.product(self.select(rule.a), self.select(rule.b)):  # type: ignore[arg-type]
                self.common(o, p)
        elif kind is RuleKind.COLLOCATED_LOCAL_DEPENDENCIES:
            for o in self.objs:
                if isinstance(o, SoftwareInstallation):
                    for d in sorted({self.rep(d) for d in o.depends_on}):
                        self.common(o.id, d)
        elif kind is RuleKind.PROTECTION_LEVEL_RANGE:
            inst = [o for o in self.objs if isinstance(o, DatasetInstance)]
            for o, p in itertools.combinations(inst, 2):
                if abs(o.protection_level - p.protection_level) > rule.allowed_difference:  # type: ignore[operator]
                    self.never_together(o.id, p.id)
        elif kind is RuleKind.INTERNET_EXPOSURE_ONLY_FOR:
            allowed = set(self.select(rule.a))  # type: ignore[arg-type]
            for o in self.objs:
                if o.id not in allowed:
                    for s in range(self.k):
                        self.p.add_clause([-self.x[o.id][s], -self.i[s]])
        else:  # pragma: no cover - closed enumeration
            raise ValueError(kind)

    # decoding
    def decision_vars(self) -> list[tuple[int, int | None, int]]:
        """(segment, object or None for the internet flag, variable) in pruning order."""
        out = []
        for s in reversed(range(self.k)):
            for o in self.objs:
                out.append((s, o.id, self.x[o.id][s]))
            out.append((s, None, self.i[s]))
        return out


def _related_groups(groups: RepresentativeGroups, installations: set[int]) -> list[list[int]]:
    """Software of each representative employee, which the join step tries to keep together.

    Private datasets are left out: they must also meet their server software, so
    joining them with the workstation would almost never be satisfiable.
    """
    out = []
    for members in groups.employee_groups:
        objs = [o for o in groups.owned.get(members[0], []) if o in installations]
        if len(objs) > 1:
            out.append(objs)
    return out


def _join(enc: _Encoder, groups: RepresentativeGroups, installations: set[int]) -> None:
    for objs in _related_groups(groups, installations):
        enc.p.push()
        for other in objs[1:]:
            enc.same(objs[0], other)
        if not enc.p.solve():
            enc.p.pop()


def _prune(enc: _Encoder) -> dict[int, bool]:
    """Drop memberships and flags, highest segment first, until none can be dropped."""
    if not enc.p.solve():
        raise AssertionError("pruning started from an unsatisfiable state")
    order = enc.decision_vars()
    current = {v: enc.p.model[v] for _, _, v in order}
    changed = True
    while changed:
        changed = False
        for _, _, var in order:
            if not current[var]:
                continue
            assume = [(v if val else -v) for v, val in current.items() if v != var]
            assume.append(-var)
            if enc.p.solve(assume):
                current[var] = False
                changed = True
    return current


def _segment_name(kinds: set[str], facing: bool) -> str:
    if facing:
        return "DMZ"
    if kinds == {"server"}:
        return "Servers"
    if kinds == {"client"}:
        return "Workstations"
    return "Mixed"


def _finish(enc: _Encoder, current: dict[int, bool], model: ItsModel) -> SegmentAssignment:
    k = enc.k
    rep_segments: dict[int, list[int]] = {o.id: [s for s in range(k) if current[enc.x[o.id][s]]] for o in enc.objs}
    facing = [current[enc.i[s]] for s in range(k)]
    index = {o.id: o for o in model.objects()}
    kinds: list[set[str]] = [set() for _ in range(k)]
    first: list[int] = [len(index)] * k
    for oid, segs in rep_segments.items():
        obj = index[oid]
        kind = "client" if isinstance(obj, SoftwareInstallation) and obj.owner is not None else "server"
        if isinstance(obj, DatasetInstance):
            kind = ""
        for s in segs:
            if kind:
                kinds[s].add(kind)
            first[s] = min(first[s], oid)
    used = [s for s in range(k) if any(s in segs for segs in rep_segments.values())]
    rank = {"DMZ": 0, "Servers": 1, "Mixed": 2, "Workstations": 3}
    used.sort(key=lambda s: (rank[_segment_name(kinds[s], facing[s])], first[s]))
    renumber = {s: n for n, s in enumerate(used)}
    names = [_segment_name(kinds[s], facing[s]) for s in used]
    seen: dict[str, int] = defaultdict(int)
    for n, name in enumerate(names):
        seen[name] += 1
    counter: dict[str, int] = defaultdict(int)
    for n, name in enumerate(list(names)):
        if seen[name] > 1:
            counter[name] += 1
            names[n] = f"{name} {counter[name]}"
    out = SegmentAssignment(segment_count=len(used), internet_facing=[facing[s] for s in used], names=names)
    for obj in model.objects():
        segs = rep_segments[enc.groups.rep_of[obj.id]]
        out.memberships[obj.id] = sorted(renumber[s] for s in segs)
    return out


def _conflict(model: ItsModel, groups: RepresentativeGroups, rules: list[SegmentationRule], k: int) -> str:
    """Best-effort: the default rules alone, else the first single rule or pair that fails."""
    if not _Encoder(model, groups, [], k).p.solve():
        return "default rules"
    for n in (1, 2):
        for combo in itertools.combinations(range(len(rules)), n):
            enc = _Encoder(model, groups, [rules[j] for j in combo], k)
            if not enc.p.solve():
                return "rule " + " and rule ".join(str(j) for j in combo)
    return "no single rule or pair of rules; the full set conflicts"


def segment_network(
    model: ItsModel, rules: list[SegmentationRule] | tuple[SegmentationRule, ...], max_segments: int
) -> SegmentAssignment:
    """Smallest segment count satisfying ``rules`` plus the default rules."""
    rules = list(rules)
    objs = model.objects()
    if not objs:
        return SegmentAssignment()
    groups = get_representative_objects(model)
    for k in range(1, max_segments + 1):
        enc = _Encoder(model, groups, rules, k)
        if enc.p.solve():
            _join(enc, groups, {i.id for i in model.installations})
            current = _prune(enc)
            return _finish(enc, current, model)
    raise SegmentationInfeasible(max_segments, _conflict(model, groups, rules, max_segments))


def apply_assignment(model: ItsModel, assignment: SegmentAssignment) -> None:
    model.segments = [
        NetworkSegment(n, assignment.names[n], assignment.internet_facing[n]) for n in range(assignment.segment_count)
    ]
    for obj in model.objects():
        obj.segment_ids = list(assignment.memberships.get(obj.id, []))
