"""Computers, credentials and firewall rules for a segmented model."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .errors import QuotaImpossible
from .model import (
    ADMIN_ROLE,
    Computer,
    Credential,
    FirewallRule,
    ItsModel,
    SoftwareInstallation,
    SoftwareTemplate,
    matches,
)

LDAP_PATTERN = r"(LDAP).*"


def _templates(model: ItsModel) -> dict[int, SoftwareTemplate]:
    variants = model.variant_index()
    return {i.id: variants[i.variant_id].template for i in model.installations}


# -- service resolution --------------------------------------------------------------


def resolve_uses(model: ItsModel) -> None:
    """Point every network requirement at one provider: shared segment first, then lowest id."""
    tmpl = _templates(model)
    servers = [i for i in model.installations if i.owner is None and tmpl[i.id].provides_network_services]
    for inst in model.installations:
        used = set()
        mine = set(inst.segment_ids)
        for group in tmpl[inst.id].requires_network_services:
            cands = [
                s for s in servers if s.id != inst.id and any(matches(group, p) for p in tmpl[s.id].provides_network_services)
            ]
            if not cands:
                continue  # the reserved Internet group, served from outside
            best = min(cands, key=lambda s: (not (mine & set(s.segment_ids)), s.id))
            used.add(best.id)
        inst.uses = sorted(used)


def client_counts(model: ItsModel) -> dict[int, int]:
    counts: dict[int, int] = defaultdict(int)
    for inst in model.installations:
        for s in inst.uses:
            counts[s] += 1
    return counts


def installation_hq(t: SoftwareTemplate, inst: SoftwareInstallation, clients: dict[int, int]) -> int:
    extra = t.requires_hardware_quota_per_client * clients.get(inst.id, 0) if inst.owner is None else 0
    return t.requires_hardware_quota + extra


# -- computers -----------------------------------------------------------------------


@dataclass
class ProtoComputer:
    segment_ids: tuple[int, ...]
    kind: str
    owner: int | None
    installation_ids: list[int] = field(default_factory=list)


def build_proto_computers(model: ItsModel) -> list[ProtoComputer]:
    """One proto-server per segment set and one proto-workstation per employee per segment set."""
    protos: dict[tuple, ProtoComputer] = {}
    for inst in model.installations:
        if inst.dependency_only:
            continue  # added back wherever a dependent lands
        key = (inst.owner is not None, -1 if inst.owner is None else inst.owner, tuple(inst.segment_ids))
        if key not in protos:
            kind = "server" if inst.owner is None else "workstation"
            protos[key] = ProtoComputer(tuple(inst.segment_ids), kind, inst.owner)
        protos[key].installation_ids.append(inst.id)
    return [protos[k] for k in sorted(protos)]


def _closure(inst_id: int, index: dict[int, SoftwareInstallation]) -> list[int]:
    out: list[int] = []
    todo = list(index[inst_id].depends_on)
    while todo:
        d = todo.pop()
        if d not in out:
            out.append(d)
            todo.extend(index[d].depends_on)
    return sorted(out)


@dataclass
class _Bin:
    proto: ProtoComputer
    members: list[int] = field(default_factory=list)
    deps: list[int] = field(default_factory=list)  # dependency originals needed here
    used: int = 0


def _units(proto: ProtoComputer, index: dict[int, SoftwareInstallation]) -> list[list[int]]:
    """Installations of one proto that depend on each other are placed together."""
    parent = {i: i for i in proto.installation_ids}

    def find(i: int) -> int:
        while parent[i] != i:
            i = parent[i]
        return i

    for i in proto.installation_ids:
        for d in _closure(i, index):
            if d in parent:
                parent[find(d)] = find(i)
    groups: dict[int, list[int]] = defaultdict(list)
    for i in proto.installation_ids:
        groups[find(i)].append(i)
    return sorted(groups.values())


def pack(
    model: ItsModel, proto: ProtoComputer, hq: dict[int, int], index: dict[int, SoftwareInstallation] | None = None
) -> list[_Bin]:
    """First-fit decreasing over dependency-closed units within one proto-computer."""
    if index is None:
        index = model.installation_index()
    units = []
    for unit in _units(proto, index):
        deps = sorted({d for i in unit for d in _closure(i, index)} - set(unit))
        own = sum(hq[i] for i in unit)
        total = own + sum(hq[d] for d in deps)
        if total > model.hq_limit:
            raise QuotaImpossible(unit[0], total, model.hq_limit)
        units.append((total, unit, deps, own))
    units.sort(key=lambda u: (-u[0], u[1]))
    bins: list[_Bin] = []
    for total, unit, deps, own in units:
        for b in bins:
            need = own + sum(hq[d] for d in deps if d not in b.deps)
            if b.used + need <= model.hq_limit:
                break
        else:
            b = _Bin(proto)
            bins.append(b)
        b.members.extend(unit)
        for d in deps:
            if d not in b.deps:
                b.deps.append(d)
                b.used += hq[d]
        b.used += own
    return bins


def install_computers(model: ItsModel) -> list[Computer]:
    """Pack installations into computers; dependencies are copied onto every computer needing them."""
    resolve_uses(model)
    tmpl = _templates(model)
    clients = client_counts(model)
    hq = {i.id: installation_hq(tmpl[i.id], i, clients) for i in model.installations}
    index = model.installation_index()
    bins = [b for proto in build_proto_computers(model) for b in pack(model, proto, hq, index)]
    base_deps = {i.id: list(i.depends_on) for i in model.installations}

    # the original of each dependency goes to the first computer in its own segments
    host: dict[int, int] = {}
    placed = {i for b in bins for i in b.members}
    for n, b in enumerate(bins):
        for d in b.deps:
            if d in placed:
                continue
            if d not in host or (
                tuple(index[d].segment_ids) == b.proto.segment_ids
                and tuple(index[d].segment_ids) != bins[host[d]].proto.segment_ids
            ):
                host[d] = n

    computers = []
    for n, b in enumerate(bins):
        local: dict[int, int] = {}  # dependency original -> copy on this computer
        for d in sorted(b.deps):
            if d not in placed and host[d] == n:
                local[d] = d
                index[d].segment_ids = list(b.proto.segment_ids)
            else:
                orig = index[d]
                rep = SoftwareInstallation(
                    id=model.next_object_id(),
                    variant_id=orig.variant_id,
                    owner=orig.owner,
                    segment_ids=list(b.proto.segment_ids),
                    depends_on=list(base_deps[orig.id]),
                    dependency_only=True,
                    replica_of=orig.id,
                )
                model.installations.append(rep)
                index[rep.id] = rep
                tmpl[rep.id] = tmpl[orig.id]
                hq[rep.id] = hq[orig.id]
                local[d] = rep.id
        ids = sorted([*b.members, *local.values()])
        for i in ids:
            index[i].depends_on = sorted(local.get(d, d) for d in base_deps.get(i, index[i].depends_on))
        computers.append(
            Computer(
                id=len(computers),
                kind=b.proto.kind,
                segment_ids=list(b.proto.segment_ids),
                installation_ids=ids,
                hq_used=sum(hq[i] for i in ids),
                owner=b.proto.owner,
            )
        )
    _localize_org_services(model, computers)
    model.computers = computers
    return computers


def _localize_org_services(model: ItsModel, computers: list[Computer]) -> None:
    """Dependency-only software serves the organizational services of its local dependents."""
    index = model.installation_index()
    for comp in computers:
        deps = [index[i] for i in comp.installation_ids if index[i].dependency_only]
        for d in deps:
            d.org_services = []
        changed = True
        while changed:
            changed = False
            for i in comp.installation_ids:
                inst = index[i]
                for dep_id in inst.depends_on:
                    dep = index[dep_id]
                    if dep.dependency_only:
                        merged = sorted(set(dep.org_services) | set(inst.org_services))
                        if merged != dep.org_services:
                            dep.org_services = merged
                            changed = True


# -- credentials ---------------------------------------------------------------------


def find_dc(model: ItsModel) -> tuple[Computer, SoftwareInstallation] | None:
    """Lowest-id computer hosting software that provides an LDAP service."""
    tmpl = _templates(model)
    index = model.installation_index()
    for comp in sorted(model.computers, key=lambda c: c.id):
        for i in comp.installation_ids:
            if any(matches(LDAP_PATTERN, s) for s in tmpl[i].provides_network_services):
                return comp, index[i]
    return None


def init_auth(model: ItsModel) -> list[Credential]:
    tmpl = _templates(model)
    dc = find_dc(model)
    host = {i: c for c in model.computers for i in c.installation_ids}
    admins = [e.id for e in model.employees if e.role_id == ADMIN_ROLE]
    creds: list[Credential] = []

    def add(scope: str, privileged: bool, purpose: str, stored: int, accepted: list[int], users: list[int]) -> None:
        creds.append(Credential(len(creds), scope, privileged, purpose, stored, sorted(accepted), sorted(users)))

    def domain_ok(i: int) -> bool:
        return dc is not None and tmpl[i].supports_domain_accounts and not tmpl[i].requires_local_accounts

    by_owner: dict[int, list[int]] = defaultdict(list)
    for inst in model.installations:
        if inst.owner is not None and tmpl[inst.id].uses_credentials:
            by_owner[inst.owner].append(inst.id)

    for e in model.employees:
        mine = by_owner.get(e.id, [])
        if dc is not None:
            domain = [i for i in mine if domain_ok(i)]
            if domain:
                add("domain", False, "user", dc[0].id, domain, [e.id])
        local: dict[int, list[int]] = defaultdict(list)
        for i in mine:
            if not domain_ok(i):
                local[host[i].id].append(i)
        for comp_id, accepted in sorted(local.items()):
            add("local", False, "user", comp_id, accepted, [e.id])

    if dc is not None:
        everything = [i.id for i in model.installations if domain_ok(i.id)]
        add("domain", True, "domain_admin", dc[0].id, everything, admins)
    for comp in model.computers:
        oses = [i for i in comp.installation_ids if tmpl[i].is_operating_system]
        if oses:
            add("local", True, "root", comp.id, oses, admins)
    for inst in model.installations:
        t = tmpl[inst.id]
        if inst.owner is None and not inst.dependency_only and t.uses_credentials and not t.is_operating_system:
            targets = [inst.id, *(u for u in inst.uses if tmpl[u].uses_credentials)]
            if domain_ok(inst.id):
                add("domain", False, "service", dc[0].id, targets, [])  # type: ignore[index]
            else:
                add("local", False, "service", host[inst.id].id, targets, [])
    model.credentials = creds
    return creds


# -- firewall ------------------------------------------------------------------------


def firewall_causes(model: ItsModel) -> dict[tuple[int | None, int | None], set[str]]:
    """Every connection the model needs across segment borders, keyed by (source, target)."""
    tmpl = _templates(model)
    index = model.installation_index()
    services = {s.service_id: s for s in model.services}
    edges: dict[tuple[int | None, int | None], set[str]] = defaultdict(set)

    def apart(a: int, b: int) -> bool:
        return not set(index[a].segment_ids) & set(index[b].segment_ids)

    demanded = [g for s in services.values() for g in s.required_network_services]
    for inst in model.installations:
        t = tmpl[inst.id]
        if inst.owner is None and any(matches(g, p) for g in demanded for p in t.provides_network_services):
            edges[(None, inst.id)].add("a")
        if t.requires_internet:
            edges[(inst.id, None)].add("b")
        for u in inst.uses:
            if apart(inst.id, u):
                edges[(inst.id, u)].add("c")
    dc = find_dc(model)
    if dc is not None:
        target = dc[1].id
        for cred in model.credentials:
            if cred.scope != "domain":
                continue
            for i in cred.accepted_by_installations:
                if i != target and apart(i, target):
                    edges[(i, target)].add("d")
    return edges


def init_firewall(model: ItsModel) -> list[FirewallRule]:
    edges = firewall_causes(model)
    order = sorted(edges, key=lambda k: (-1 if k[0] is None else k[0], -1 if k[1] is None else k[1]))
    rules = [FirewallRule(src, dst, sorted(edges[(src, dst)])) for src, dst in order]
    model.firewall_rules = rules
    return rules
