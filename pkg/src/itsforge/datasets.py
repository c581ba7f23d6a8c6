"""Dataset linker: turn data collections into linked dataset instances.

Each collection is split three times, over employees, then organizational
services, then software, every split working on the output of the previous one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NoEligibleStore
from .model import (
    DataCollection,
    DatasetInstance,
    Employee,
    EmployeeMode,
    PrimaryStorage,
    ServiceMode,
    SoftwareInstallation,
    SoftwareMode,
    SoftwareVariant,
)


@dataclass
class _Draft:
    employees: list[int] = field(default_factory=list)
    services: list[str] = field(default_factory=list)
    software: list[int] | None = None  # None until the software split ran


@dataclass
class InstantiationContext:
    """Everything a collection may link to, drawn from phase-1 output."""

    collection: DataCollection
    employees: list[Employee]
    services: list[str]
    installations: list[SoftwareInstallation]
    variants: dict[str, SoftwareVariant]

    def __post_init__(self) -> None:
        self.index = {i.id: i for i in self.installations}
        self._servers: list[SoftwareInstallation] = []
        self._clients: dict[int, list[int]] = {}
        for inst in self.installations:
            if inst.dependency_only or not self.handles(inst):
                continue
            if inst.owner is None:
                self._servers.append(inst)
            else:
                self._clients.setdefault(inst.owner, []).append(inst.id)

    def handles(self, inst: SoftwareInstallation) -> bool:
        return self.variants[inst.variant_id].template.handles_data(self.collection.data_class)

    def is_database(self, inst: SoftwareInstallation) -> bool:
        return self.variants[inst.variant_id].template.database

    def candidates(self, draft: _Draft) -> list[int]:
        """Clients of the draft's employees plus servers serving only the draft's services."""
        services = set(draft.services)
        out = [s.id for s in self._servers if set(s.org_services) <= services]
        for e in set(draft.employees):
            out.extend(self._clients.get(e, ()))
        return sorted(out)


def _split_employees(ctx: InstantiationContext) -> list[_Draft]:
    mode = ctx.collection.employee_mode
    if mode is EmployeeMode.PER_EMPLOYEE:
        return [_Draft([e.id]) for e in ctx.employees]
    if mode is EmployeeMode.PER_ERS:
        groups: dict[str, list[int]] = {}
        for e in ctx.employees:
            groups.setdefault(e.subgroup_id, []).append(e.id)
        return [_Draft(ids) for _, ids in sorted(groups.items())]
    return [_Draft([e.id for e in ctx.employees])]


def _split_services(ctx: InstantiationContext, drafts: list[_Draft]) -> list[_Draft]:
    if ctx.collection.service_mode is ServiceMode.PER_SERVICE:
        return [_Draft(list(d.employees), [s]) for d in drafts for s in ctx.services]
    return [_Draft(list(d.employees), list(ctx.services)) for d in drafts]


def _split_software(ctx: InstantiationContext, drafts: list[_Draft], index: dict[int, SoftwareInstallation]) -> list[_Draft]:
    mode = ctx.collection.software_mode
    out = []
    for d in drafts:
        cands = ctx.candidates(d)
        if mode is SoftwareMode.ALL_SHARED or not cands:
            out.append(_Draft(d.employees, d.services, cands))
            continue
        if mode is SoftwareMode.PER_SOFTWARE:
            out.extend(_Draft(d.employees, d.services, [c]) for c in cands)
            continue
        if mode is SoftwareMode.PER_DATABASE:
            split = [c for c in cands if ctx.is_database(index[c])]
        elif mode is SoftwareMode.PER_SERVER:
            split = [c for c in cands if index[c].owner is None]
        else:
            split = [c for c in cands if index[c].owner is not None]
        chosen = set(split)
        rest = [c for c in cands if c not in chosen]
        if not split:
            out.append(_Draft(d.employees, d.services, rest))
        for c in split:
            out.append(_Draft(d.employees, d.services, sorted([*rest, c])))
    return out


def split_factors(ctx: InstantiationContext) -> list[_Draft]:
    """Run the three splits for one collection; dummy starts where a stage produced nothing."""
    index = ctx.index
    drafts: list[_Draft] = []
    if ctx.employees:
        drafts = _split_employees(ctx)
    if ctx.services:
        drafts = _split_services(ctx, drafts or [_Draft()])
    whole = _Draft([e.id for e in ctx.employees], list(ctx.services))
    if ctx.candidates(whole):
        drafts = _split_software(ctx, drafts or [_Draft()], index)
    return [d for d in drafts if d.employees or d.services or d.software]


def primary_store(ctx: InstantiationContext, software: list[int]) -> int:
    index = ctx.index
    kind = ctx.collection.primary_storage
    for sid in sorted(software):
        inst = index[sid]
        if kind is PrimaryStorage.DATABASE and ctx.is_database(inst):
            return sid
        if kind is PrimaryStorage.SERVER and inst.owner is None:
            return sid
        if kind is PrimaryStorage.CLIENT and inst.owner is not None:
            return sid
    raise NoEligibleStore(f"collection {ctx.collection.identifier!r}: no linked {kind.value.lower()} software")


def instantiate_datasets(
    collections: list[DataCollection] | tuple[DataCollection, ...],
    employees: list[Employee],
    services: list[str] | tuple[str, ...],
    installations: list[SoftwareInstallation],
    variants: list[SoftwareVariant],
    first_id: int | None = None,
) -> list[DatasetInstance]:
    """Instances for every collection with ids continuing after the installations."""
    next_id = len(installations) if first_id is None else first_id
    by_variant = {v.variant_id: v for v in variants}
    out: list[DatasetInstance] = []
    for coll in collections:
        linked = set(coll.linked_erss)
        ctx = InstantiationContext(
            coll,
            [e for e in employees if e.subgroup_id in linked],
            [s for s in coll.linked_services if s in services],
            installations,
            by_variant,
        )
        for d in split_factors(ctx):
            software = sorted(d.software or [])
            store = primary_store(ctx, software)
            out.append(
                DatasetInstance(
                    id=next_id,
                    collection_id=coll.identifier,
                    protection_level=coll.protection_level,
                    linked_employees=sorted(d.employees),
                    linked_services=sorted(d.services),
                    linked_installations=software,
                    primary_store_installation=store,
                )
            )
            next_id += 1
    return out
