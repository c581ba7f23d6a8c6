"""Domain types shared by every phase, the generated model container and object queries."""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Iterable

from .errors import UnknownAttribute

INTERNET = "Internet"
"""Reserved network-service tag that is always available from outside the organization."""

ADMIN_ROLE = "admin"


class StrEnum(str, Enum):
    def __str__(self) -> str:
        return self.value


class PrimaryStorage(StrEnum):
    DATABASE = "Database"
    SERVER = "Server"
    CLIENT = "Client"


class EmployeeMode(StrEnum):
    PER_EMPLOYEE = "PerEmployee"
    PER_ERS = "PerERS"
    ALL_SHARED = "AllShared"


class ServiceMode(StrEnum):
    PER_SERVICE = "PerService"
    ALL_SHARED = "AllShared"


class SoftwareMode(StrEnum):
    PER_DATABASE = "PerDatabase"
    PER_SERVER = "PerServer"
    PER_CLIENT = "PerClient"
    PER_SOFTWARE = "PerSoftware"
    ALL_SHARED = "AllShared"


class ObjectKind(StrEnum):
    SOFTWARE_INSTALLATION = "SoftwareInstallation"
    DATASET_INSTANCE = "DatasetInstance"
    ANY = "Any"


class RuleKind(StrEnum):
    REQUIRE_DISTINCT = "RequireDistinctNetworksForSets"
    REQUIRE_SAME = "RequireSameNetworksForSets"
    REQUIRE_COMMON = "RequireCommonNetworksForSets"
    COLLOCATED_LOCAL_DEPENDENCIES = "RequireCollocatedLocalDependencies"
    PROTECTION_LEVEL_RANGE = "LimitAllowedProtectionLevelRange"
    INTERNET_EXPOSURE_ONLY_FOR = "AllowInternetExposureOnlyFor"


PAIR_RULES = (RuleKind.REQUIRE_DISTINCT, RuleKind.REQUIRE_SAME, RuleKind.REQUIRE_COMMON)


def compile_regex(pattern: str) -> re.Pattern[str]:
    return _compile(pattern)


@lru_cache(maxsize=4096)
def _compile(pattern: str) -> re.Pattern[str]:
    return re.compile(pattern)


def matches(pattern: str, value: str) -> bool:
    return _compile(pattern).fullmatch(value) is not None


# -- templates -------------------------------------------------------------


@dataclass(frozen=True)
class SoftwareTemplate:
    cpe_idn: str
    name: str
    requires_local_software: tuple[str, ...] = ()
    requires_network_services: tuple[str, ...] = ()
    provides_network_services: tuple[str, ...] = ()
    provides_user_services: tuple[str, ...] = ()
    requires_hardware_quota: int = 0
    requires_hardware_quota_per_client: int = 0
    lc_0: int = 0
    lc_n: int = 0
    oc_0: int = 0
    oc_n: int = 0
    data_types: tuple[str, ...] = ()
    database: bool = False
    social_engineering_attacks: bool = False

    @property
    def data_type_tags(self) -> tuple[str, ...]:
        """Every tag in ``data_types`` with ``|`` alternatives flattened."""
        return tuple(tag for entry in self.data_types for tag in entry.split("|"))

    @property
    def supports_domain_accounts(self) -> bool:
        return "UserAccounts:domain" in self.data_type_tags

    @property
    def requires_local_accounts(self) -> bool:
        # an entry without a domain alternative cannot be served by the DC
        return any(entry.split("|") == ["UserAccounts:local"] for entry in self.data_types)

    @property
    def uses_credentials(self) -> bool:
        return any(tag.startswith("UserAccounts:") for tag in self.data_type_tags)

    @property
    def is_operating_system(self) -> bool:
        return self.cpe_idn.startswith("cpe:/o:")

    def handles_data(self, data_class: str) -> bool:
        return data_class in self.data_type_tags

    @property
    def requires_internet(self) -> bool:
        return any(matches(group, INTERNET) for group in self.requires_network_services)


@dataclass(frozen=True)
class SoftwareVariant:
    """A template bound to one concrete template per local-dependency slot."""

    template: SoftwareTemplate
    platform: tuple[str, ...]
    variant_id: str

    @property
    def cpe_idn(self) -> str:
        return self.template.cpe_idn


@dataclass(frozen=True)
class EmployeeRoleTemplate:
    role_id: str
    required_user_services: tuple[str, ...] = ()


@dataclass(frozen=True)
class OrganizationalServiceTemplate:
    service_id: str
    required_network_services: tuple[str, ...] = ()


@dataclass(frozen=True)
class TemplateSet:
    software: tuple[SoftwareTemplate, ...] = ()
    roles: tuple[EmployeeRoleTemplate, ...] = ()
    services: tuple[OrganizationalServiceTemplate, ...] = ()

    def role(self, role_id: str) -> EmployeeRoleTemplate:
        for role in self.roles:
            if role.role_id == role_id:
                return role
        raise KeyError(role_id)

    def service(self, service_id: str) -> OrganizationalServiceTemplate:
        for service in self.services:
            if service.service_id == service_id:
                return service
        raise KeyError(service_id)


# -- input parameters --------------------------------------------------------


@dataclass(frozen=True)
class EmployeeRoleSubgroup:
    role_id: str
    subgroup_id: str
    count: int


@dataclass(frozen=True)
class DataCollection:
    identifier: str
    protection_level: int
    primary_storage: PrimaryStorage
    employee_mode: EmployeeMode
    service_mode: ServiceMode
    software_mode: SoftwareMode
    linked_services: tuple[str, ...] = ()
    linked_erss: tuple[str, ...] = ()

    @property
    def data_class(self) -> str:
        """``"FinancialData:banking"`` -> ``"FinancialData"``."""
        return self.identifier.split(":", 1)[0]


@dataclass(frozen=True)
class ObjectQuery:
    """Select objects whose ``attribute`` satisfies a regex or an integer comparison."""

    attribute: str
    regex: str | None = None
    op: str | None = None
    value: int | None = None
    kind: ObjectKind = ObjectKind.ANY

    def __post_init__(self) -> None:
        if (self.regex is None) == (self.op is None):
            raise ValueError("query needs exactly one of regex or op/value")
        if self.op is not None and (self.op not in _COMPARISONS or not isinstance(self.value, int)):
            raise ValueError(f"bad comparison {self.op!r} {self.value!r}")
        if self.regex is not None:
            compile_regex(self.regex)


_COMPARISONS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


@dataclass(frozen=True)
class SegmentationRule:
    kind: RuleKind
    a: ObjectQuery | None = None
    b: ObjectQuery | None = None
    allowed_difference: int | None = None

    def __post_init__(self) -> None:
        if self.kind in PAIR_RULES and (self.a is None or self.b is None):
            raise ValueError(f"{self.kind} needs two queries")
        if self.kind is RuleKind.INTERNET_EXPOSURE_ONLY_FOR and self.a is None:
            raise ValueError(f"{self.kind} needs a query")
        if self.kind is RuleKind.PROTECTION_LEVEL_RANGE:
            if self.allowed_difference is None or self.allowed_difference < 0:
                raise ValueError("allowed_difference must be a non-negative integer")


@dataclass(frozen=True)
class InputParameters:
    erss: tuple[EmployeeRoleSubgroup, ...] = ()
    data_collections: tuple[DataCollection, ...] = ()
    provided_external_services: tuple[str, ...] = ()
    network_policies: tuple[SegmentationRule, ...] = ()
    hq_limit: int = 16
    w_h: int = 10
    max_segments: int = 32
    seed: int = 0

    @property
    def employee_count(self) -> int:
        return sum(ers.count for ers in self.erss)

    def scaled(self, multiplier: int) -> InputParameters:
        """Multiply every subgroup count, as done for the performance sweep."""
        from dataclasses import replace

        erss = tuple(replace(ers, count=ers.count * multiplier) for ers in self.erss)
        return replace(self, erss=erss)


# -- generated model -------------------------------------------------------------


@dataclass
class Employee:
    id: int
    subgroup_id: str
    role_id: str


@dataclass
class SoftwareInstallation:
    id: int
    variant_id: str
    owner: int | None  # employee id, None for server software
    segment_ids: list[int] = field(default_factory=list)
    depends_on: list[int] = field(default_factory=list)
    uses: list[int] = field(default_factory=list)
    org_services: list[str] = field(default_factory=list)
    dependency_only: bool = False
    replica_of: int | None = None

    @property
    def is_server(self) -> bool:
        return self.owner is None


@dataclass
class DatasetInstance:
    id: int
    collection_id: str
    protection_level: int
    linked_employees: list[int] = field(default_factory=list)
    linked_services: list[str] = field(default_factory=list)
    linked_installations: list[int] = field(default_factory=list)
    primary_store_installation: int | None = None
    segment_ids: list[int] = field(default_factory=list)


@dataclass
class NetworkSegment:
    id: int
    name: str
    internet_facing: bool = False


@dataclass
class Computer:
    id: int
    kind: str  # "workstation" | "server"
    segment_ids: list[int] = field(default_factory=list)
    installation_ids: list[int] = field(default_factory=list)
    hq_used: int = 0
    owner: int | None = None


@dataclass
class Credential:
    id: int
    scope: str  # "local" | "domain"
    privileged: bool
    purpose: str  # "user" | "root" | "domain_admin" | "service"
    stored_on_computer: int
    accepted_by_installations: list[int] = field(default_factory=list)
    used_by_employees: list[int] = field(default_factory=list)


@dataclass
class FirewallRule:
    """Allow connections established from ``source`` to ``target``; ``None`` is the Internet."""

    source: int | None
    target: int | None
    causes: list[str] = field(default_factory=list)


@dataclass
class ItsModel:
    variants: list[SoftwareVariant] = field(default_factory=list)
    services: list[OrganizationalServiceTemplate] = field(default_factory=list)
    employees: list[Employee] = field(default_factory=list)
    installations: list[SoftwareInstallation] = field(default_factory=list)
    dataset_instances: list[DatasetInstance] = field(default_factory=list)
    segments: list[NetworkSegment] = field(default_factory=list)
    computers: list[Computer] = field(default_factory=list)
    credentials: list[Credential] = field(default_factory=list)
    firewall_rules: list[FirewallRule] = field(default_factory=list)
    hq_limit: int = 0

    def next_object_id(self) -> int:
        """Installations and dataset instances share one dense id space."""
        return len(self.installations) + len(self.dataset_instances)

    def variant_index(self) -> dict[str, SoftwareVariant]:
        return {v.variant_id: v for v in self.variants}

    def installation_index(self) -> dict[int, SoftwareInstallation]:
        return {inst.id: inst for inst in self.installations}

    def instance_index(self) -> dict[int, DatasetInstance]:
        return {inst.id: inst for inst in self.dataset_instances}

    def employee_index(self) -> dict[int, Employee]:
        return {e.id: e for e in self.employees}

    def objects(self) -> list[SoftwareInstallation | DatasetInstance]:
        """All segmentable objects ordered by id."""
        objs: list[SoftwareInstallation | DatasetInstance] = [*self.installations, *self.dataset_instances]
        return sorted(objs, key=lambda o: o.id)


# -- queries ------------------------------------------------------------------

INSTALLATION_ATTRIBUTES = frozenset(
    {
        "cpe_idn",
        "name",
        "variant_id",
        "provides_user_services",
        "provides_network_services",
        "is_server",
        "is_database",
        "org_services",
        "subgroup_id",
        "data_types",
        "social_engineering_attacks",
    }
)
INSTANCE_ATTRIBUTES = frozenset({"dataset_identifier", "protection_level", "org_services", "subgroup_id"})
KNOWN_ATTRIBUTES = INSTALLATION_ATTRIBUTES | INSTANCE_ATTRIBUTES


class QueryContext:
    """Precomputed lookups so that many queries over one model stay cheap."""

    def __init__(self, model: ItsModel) -> None:
        self.model = model
        self.variants = model.variant_index()
        self.employees = model.employee_index()

    def attribute(self, obj: SoftwareInstallation | DatasetInstance, name: str) -> Any:
        if isinstance(obj, SoftwareInstallation):
            if name not in INSTALLATION_ATTRIBUTES:
                return None
            tmpl = self.variants[obj.variant_id].template
            if name == "cpe_idn":
                return tmpl.cpe_idn
            if name == "name":
                return tmpl.name
            if name == "variant_id":
                return obj.variant_id
            if name == "provides_user_services":
                return list(tmpl.provides_user_services)
            if name == "provides_network_services":
                return list(tmpl.provides_network_services)
            if name == "is_server":
                return obj.is_server
            if name == "is_database":
                return tmpl.database
            if name == "org_services":
                return list(obj.org_services)
            if name == "subgroup_id":
                return None if obj.owner is None else self.employees[obj.owner].subgroup_id
            if name == "data_types":
                return list(tmpl.data_type_tags)
            return tmpl.social_engineering_attacks
        if name not in INSTANCE_ATTRIBUTES:
            return None
        if name == "dataset_identifier":
            return obj.collection_id
        if name == "protection_level":
            return obj.protection_level
        if name == "org_services":
            return list(obj.linked_services)
        groups = {self.employees[e].subgroup_id for e in obj.linked_employees}
        return sorted(groups)

    def satisfies(self, obj: SoftwareInstallation | DatasetInstance, q: ObjectQuery) -> bool:
        if q.kind is ObjectKind.SOFTWARE_INSTALLATION and not isinstance(obj, SoftwareInstallation):
            return False
        if q.kind is ObjectKind.DATASET_INSTANCE and not isinstance(obj, DatasetInstance):
            return False
        return _predicate(self.attribute(obj, q.attribute), q)

    def resolve(self, q: ObjectQuery) -> set[int]:
        if q.attribute not in KNOWN_ATTRIBUTES:
            raise UnknownAttribute(q.attribute)
        return {o.id for o in self.model.objects() if self.satisfies(o, q)}


def _predicate(value: Any, q: ObjectQuery) -> bool:
    if value is None:
        return False
    if q.op is not None:
        if isinstance(value, bool) or not isinstance(value, int):
            return False
        return _COMPARISONS[q.op](value, q.value)
    values = value if isinstance(value, list) else [value]
    for v in values:
        text = ("true" if v else "false") if isinstance(v, bool) else str(v)
        if matches(q.regex, text):  # type: ignore[arg-type]
            return True
    return False


def resolve_query(model: ItsModel, q: ObjectQuery) -> set[int]:
    """Ids of the installations and dataset instances selected by ``q``."""
    return QueryContext(model).resolve(q)


@dataclass(frozen=True)
class ModelStatistics:
    employees: int = 0
    computers: int = 0
    segments: int = 0
    installations: int = 0
    instances: int = 0
    credentials: int = 0
    firewall_edges: int = 0


def model_statistics(model: ItsModel) -> ModelStatistics:
    return ModelStatistics(
        employees=len(model.employees),
        computers=len(model.computers),
        segments=len(model.segments),
        installations=len(model.installations),
        instances=len(model.dataset_instances),
        credentials=len(model.credentials),
        firewall_edges=len(model.firewall_rules),
    )


def sorted_unique(values: Iterable[int]) -> list[int]:
    return sorted(set(values))
