"""CSV template loading, JSON parameters and models, DOT views."""

from __future__ import annotations

import csv
import io
import json
import re
from collections import Counter, defaultdict
from dataclasses import asdict
from enum import Enum
from typing import Any, Callable

from .errors import DuplicateId, InvalidRegex, ParseError, SchemaError, UnknownRoleOrService
from .model import (
    Computer,
    Credential,
    DataCollection,
    DatasetInstance,
    Employee,
    EmployeeMode,
    EmployeeRoleSubgroup,
    EmployeeRoleTemplate,
    FirewallRule,
    InputParameters,
    ItsModel,
    NetworkSegment,
    ObjectKind,
    ObjectQuery,
    OrganizationalServiceTemplate,
    PrimaryStorage,
    RuleKind,
    SegmentationRule,
    ServiceMode,
    SoftwareInstallation,
    SoftwareMode,
    SoftwareTemplate,
    SoftwareVariant,
    TemplateSet,
)

FORMAT_VERSION = "1"

SOFTWARE_COLUMNS = (
    "cpe_idn",
    "name",
    "requires_local_software",
    "requires_network_services",
    "provides_network_services",
    "provides_user_services",
    "requires_hardware_quota",
    "requires_hardware_quota_per_client",
    "lc_0",
    "lc_n",
    "oc_0",
    "oc_n",
    "data_types",
    "database",
    "social_engineering_attacks",
)
ROLE_COLUMNS = ("role_id", "required_user_services")
SERVICE_COLUMNS = ("service_id", "required_network_services")

_REGEX_COLUMNS = {
    "requires_local_software",
    "requires_network_services",
    "required_user_services",
    "required_network_services",
}
_INT_COLUMNS = {
    "requires_hardware_quota",
    "requires_hardware_quota_per_client",
    "lc_0",
    "lc_n",
    "oc_0",
    "oc_n",
}
_BOOL_COLUMNS = {"database", "social_engineering_attacks"}


# -- templates -------------------------------------------------------------------


def _split_list(cell: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in cell.split(";") if part.strip())


def _read_rows(text: str, columns: tuple[str, ...]) -> list[dict[str, Any]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "<header>", "missing header row") from None
    if tuple(h.strip() for h in header) != columns:
        raise ParseError(1, "<header>", f"expected columns {','.join(columns)}")
    rows = []
    for rownum, raw in enumerate(reader, start=2):
        if not any(cell.strip() for cell in raw):
            continue
        if len(raw) != len(columns):
            raise ParseError(rownum, "<row>", f"expected {len(columns)} cells, got {len(raw)}")
        row: dict[str, Any] = {}
        for col, cell in zip(columns, raw):
            cell = cell.strip()
            if col in _INT_COLUMNS:
                try:
                    value = int(cell)
                except ValueError:
                    raise ParseError(rownum, col, f"not an integer: {cell!r}") from None
                if value < 0:
                    raise ParseError(rownum, col, "must be non-negative")
                row[col] = value
            elif col in _BOOL_COLUMNS:
                lowered = cell.lower()
                if lowered not in ("0", "1", "true", "false"):
                    raise ParseError(rownum, col, f"not a boolean: {cell!r}")
                row[col] = lowered in ("1", "true")
            elif col in ("cpe_idn", "name", "role_id", "service_id"):
                if not cell:
                    raise ParseError(rownum, col, "empty identifier")
                row[col] = cell
            else:
                row[col] = _split_list(cell)
            if col in _REGEX_COLUMNS:
                for pattern in row[col]:
                    try:
                        re.compile(pattern)
                    except re.error as exc:
                        raise InvalidRegex(f"row {rownum}, column {col!r}: {pattern!r}: {exc}") from None
        rows.append(row)
    return rows


def _unique(items: list[Any], key: Callable[[Any], str], what: str) -> None:
    seen: set[str] = set()
    for item in items:
        k = key(item)
        if k in seen:
            raise DuplicateId(f"duplicate {what} {k!r}")
        seen.add(k)


def load_templates(software_csv: str, roles_csv: str, services_csv: str) -> TemplateSet:
    software = [SoftwareTemplate(**row) for row in _read_rows(software_csv, SOFTWARE_COLUMNS)]
    roles = [EmployeeRoleTemplate(**row) for row in _read_rows(roles_csv, ROLE_COLUMNS)]
    services = [OrganizationalServiceTemplate(**row) for row in _read_rows(services_csv, SERVICE_COLUMNS)]
    _unique(software, lambda t: t.cpe_idn, "software template")
    _unique(roles, lambda r: r.role_id, "role")
    _unique(services, lambda s: s.service_id, "organizational service")
    return TemplateSet(tuple(software), tuple(roles), tuple(services))


def load_template_dir(path: str) -> TemplateSet:
    from pathlib import Path

    root = Path(path)
    return load_templates(
        (root / "software.csv").read_text(encoding="utf-8"),
        (root / "roles.csv").read_text(encoding="utf-8"),
        (root / "services.csv").read_text(encoding="utf-8"),
    )


def dump_templates(templates: TemplateSet) -> tuple[str, str, str]:
    """Inverse of :func:`load_templates`."""

    def cell(value: Any) -> str:
        if isinstance(value, bool):
            return "1" if value else "0"
        if isinstance(value, tuple):
            return ";".join(value)
        return str(value)

    out = []
    for columns, rows in (
        (SOFTWARE_COLUMNS, templates.software),
        (ROLE_COLUMNS, templates.roles),
        (SERVICE_COLUMNS, templates.services),
    ):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([cell(getattr(row, c)) for c in columns])
        out.append(buf.getvalue())
    return out[0], out[1], out[2]


# -- parameters ---------------------------------------------------------------


def _expect(cond: bool, path: str, detail: str) -> None:
    if not cond:
        raise SchemaError(path, detail)


def _get(doc: dict[str, Any], key: str, path: str, kind: type | tuple[type, ...], default: Any = ...) -> Any:
    if key not in doc:
        _expect(default is not ..., f"{path}.{key}", "missing")
        return default
    value = doc[key]
    ok = isinstance(value, kind) and not (isinstance(value, bool) and bool not in _as_tuple(kind))
    _expect(ok, f"{path}.{key}", f"expected {kind}")
    return value


def _as_tuple(kind: type | tuple[type, ...]) -> tuple[type, ...]:
    return kind if isinstance(kind, tuple) else (kind,)


def _enum(cls: type[Enum], value: Any, path: str) -> Any:
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(path, f"expected one of {[e.value for e in cls]}") from None


def _str_list(doc: dict[str, Any], key: str, path: str) -> tuple[str, ...]:
    values = _get(doc, key, path, list, [])
    for i, v in enumerate(values):
        _expect(isinstance(v, str), f"{path}.{key}[{i}]", "expected string")
    return tuple(values)


def _parse_query(doc: Any, path: str) -> ObjectQuery:
    _expect(isinstance(doc, dict), path, "expected object")
    attribute = _get(doc, "attribute", path, str)
    kind = _enum(ObjectKind, doc.get("kind", "Any"), f"{path}.kind")
    try:
        if "regex" in doc:
            return ObjectQuery(attribute, regex=_get(doc, "regex", path, str), kind=kind)
        return ObjectQuery(attribute, op=_get(doc, "op", path, str), value=_get(doc, "value", path, int), kind=kind)
    except (ValueError, re.error) as exc:
        raise SchemaError(path, str(exc)) from None


def _parse_rule(doc: Any, path: str) -> SegmentationRule:
    _expect(isinstance(doc, dict), path, "expected object")
    kind = _enum(RuleKind, doc.get("rule"), f"{path}.rule")
    a = _parse_query(doc["a"], f"{path}.a") if "a" in doc else None
    b = _parse_query(doc["b"], f"{path}.b") if "b" in doc else None
    diff = _get(doc, "allowed_difference", path, int, None)
    try:
        return SegmentationRule(kind, a, b, diff)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def params_from_dict(doc: Any, templates: TemplateSet | None = None) -> InputParameters:
    _expect(isinstance(doc, dict), "$", "expected object")
    version = doc.get("format_version", FORMAT_VERSION)
    _expect(version == FORMAT_VERSION, "$.format_version", f"unsupported version {version!r}")
    erss = []
    for i, e in enumerate(_get(doc, "erss", "$", list, [])):
        p = f"$.erss[{i}]"
        _expect(isinstance(e, dict), p, "expected object")
        count = _get(e, "count", p, int)
        _expect(count >= 0, f"{p}.count", "must be non-negative")
        erss.append(EmployeeRoleSubgroup(_get(e, "role", p, str), _get(e, "subgroup", p, str), count))
    _unique_schema([e.subgroup_id for e in erss], "$.erss", "subgroup")
    collections = []
    for i, c in enumerate(_get(doc, "data_collections", "$", list, [])):
        p = f"$.data_collections[{i}]"
        _expect(isinstance(c, dict), p, "expected object")
        collections.append(
            DataCollection(
                identifier=_get(c, "identifier", p, str),
                protection_level=_get(c, "protection_level", p, int),
                primary_storage=_enum(PrimaryStorage, c.get("primary_storage"), f"{p}.primary_storage"),
                employee_mode=_enum(EmployeeMode, c.get("employee_mode", "AllShared"), f"{p}.employee_mode"),
                service_mode=_enum(ServiceMode, c.get("service_mode", "AllShared"), f"{p}.service_mode"),
                software_mode=_enum(SoftwareMode, c.get("software_mode", "AllShared"), f"{p}.software_mode"),
                linked_services=_str_list(c, "linked_services", p),
                linked_erss=_str_list(c, "linked_erss", p),
            )
        )
    _unique_schema([c.identifier for c in collections], "$.data_collections", "identifier")
    services = _str_list(doc, "provided_external_services", "$")
    rules = tuple(_parse_rule(r, f"$.network_policies[{i}]") for i, r in enumerate(_get(doc, "network_policies", "$", list, [])))
    hq_limit = _get(doc, "hq_limit", "$", int, InputParameters.hq_limit)
    w_h = _get(doc, "w_h", "$", int, InputParameters.w_h)
    max_segments = _get(doc, "max_segments", "$", int, InputParameters.max_segments)
    seed = _get(doc, "seed", "$", int, InputParameters.seed)
    _expect(hq_limit > 0, "$.hq_limit", "must be positive")
    _expect(w_h >= 0, "$.w_h", "must be non-negative")
    _expect(max_segments > 0, "$.max_segments", "must be positive")
    _expect(-(2**63) <= seed < 2**64, "$.seed", "must fit in 64 bits")
    params = InputParameters(
        erss=tuple(erss),
        data_collections=tuple(collections),
        provided_external_services=services,
        network_policies=rules,
        hq_limit=hq_limit,
        w_h=w_h,
        max_segments=max_segments,
        seed=seed,
    )
    if templates is not None:
        check_references(params, templates)
    return params


def _unique_schema(values: list[str], path: str, what: str) -> None:
    dupes = [v for v, n in Counter(values).items() if n > 1]
    _expect(not dupes, path, f"duplicate {what} {dupes}")


def check_references(params: InputParameters, templates: TemplateSet) -> None:
    roles = {r.role_id for r in templates.roles}
    services = {s.service_id for s in templates.services}
    for ers in params.erss:
        if ers.role_id not in roles:
            raise UnknownRoleOrService(f"unknown role {ers.role_id!r} in subgroup {ers.subgroup_id!r}")
    for service in params.provided_external_services:
        if service not in services:
            raise UnknownRoleOrService(f"unknown organizational service {service!r}")


def load_params(text: str, templates: TemplateSet | None = None) -> InputParameters:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return params_from_dict(doc, templates)


def _query_to_dict(q: ObjectQuery) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": q.kind.value, "attribute": q.attribute}
    if q.regex is not None:
        out["regex"] = q.regex
    else:
        out["op"], out["value"] = q.op, q.value
    return out


def params_to_dict(params: InputParameters) -> dict[str, Any]:
    rules = []
    for r in params.network_policies:
        doc: dict[str, Any] = {"rule": r.kind.value}
        if r.a is not None:
            doc["a"] = _query_to_dict(r.a)
        if r.b is not None:
            doc["b"] = _query_to_dict(r.b)
        if r.allowed_difference is not None:
            doc["allowed_difference"] = r.allowed_difference
        rules.append(doc)
    return {
        "format_version": FORMAT_VERSION,
        "erss": [{"role": e.role_id, "subgroup": e.subgroup_id, "count": e.count} for e in params.erss],
        "data_collections": [
            {
                "identifier": c.identifier,
                "protection_level": c.protection_level,
                "primary_storage": c.primary_storage.value,
                "employee_mode": c.employee_mode.value,
                "service_mode": c.service_mode.value,
                "software_mode": c.software_mode.value,
                "linked_services": list(c.linked_services),
                "linked_erss": list(c.linked_erss),
            }
            for c in params.data_collections
        ],
        "provided_external_services": list(params.provided_external_services),
        "network_policies": rules,
        "hq_limit": params.hq_limit,
        "w_h": params.w_h,
        "max_segments": params.max_segments,
        "seed": params.seed,
    }


# -- models -----------------------------------------------------------------------------


def model_to_dict(model: ItsModel) -> dict[str, Any]:
    variants = []
    for v in model.variants:
        t = asdict(v.template)
        variants.append({"variant_id": v.variant_id, "platform": list(v.platform), "template": t})
    return {
        "format_version": FORMAT_VERSION,
        "hq_limit": model.hq_limit,
        "variants": _lists(variants),
        "services": [
            {"service_id": s.service_id, "required_network_services": list(s.required_network_services)}
            for s in model.services
        ],
        "employees": [asdict(e) for e in model.employees],
        "installations": [asdict(i) for i in model.installations],
        "dataset_instances": [asdict(d) for d in model.dataset_instances],
        "segments": [asdict(s) for s in model.segments],
        "computers": [asdict(c) for c in model.computers],
        "credentials": [asdict(c) for c in model.credentials],
        "firewall_rules": [asdict(f) for f in model.firewall_rules],
    }


def _lists(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_lists(v) for v in value]
    if isinstance(value, dict):
        return {k: _lists(v) for k, v in value.items()}
    return value


def write_model(model: ItsModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n"


_MODEL_KEYS = (
    "variants",
    "services",
    "employees",
    "installations",
    "dataset_instances",
    "segments",
    "computers",
    "credentials",
    "firewall_rules",
)


def _records(doc: dict[str, Any], key: str, cls: type) -> list[Any]:
    out = []
    for i, rec in enumerate(doc.get(key, [])):
        try:
            out.append(cls(**rec))
        except TypeError as exc:
            raise SchemaError(f"$.{key}[{i}]", str(exc)) from None
    return out


def model_from_dict(doc: Any) -> ItsModel:
    _expect(isinstance(doc, dict), "$", "expected object")
    _expect(doc.get("format_version") == FORMAT_VERSION, "$.format_version", "unsupported or missing")
    for key in _MODEL_KEYS:
        _expect(isinstance(doc.get(key, []), list), f"$.{key}", "expected array")
    variants = []
    for i, v in enumerate(doc.get("variants", [])):
        try:
            t = {k: tuple(x) if isinstance(x, list) else x for k, x in v["template"].items()}
            variants.append(SoftwareVariant(SoftwareTemplate(**t), tuple(v["platform"]), v["variant_id"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"$.variants[{i}]", str(exc)) from None
    services = [
        OrganizationalServiceTemplate(s["service_id"], tuple(s["required_network_services"]))
        for s in doc.get("services", [])
    ]
    return ItsModel(
        variants=variants,
        services=services,
        employees=_records(doc, "employees", Employee),
        installations=_records(doc, "installations", SoftwareInstallation),
        dataset_instances=_records(doc, "dataset_instances", DatasetInstance),
        segments=_records(doc, "segments", NetworkSegment),
        computers=_records(doc, "computers", Computer),
        credentials=_records(doc, "credentials", Credential),
        firewall_rules=_records(doc, "firewall_rules", FirewallRule),
        hq_limit=_get(doc, "hq_limit", "$", int, 0),
    )


def read_model(text: str) -> ItsModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


# -- DOT views -------------------------------------------------------------------


class DotView(str, Enum):
    LANDSCAPE = "Landscape"
    DATASETS = "Datasets"
    CREDENTIALS = "Credentials"
    FIREWALL = "Firewall"


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def computer_groups(model: ItsModel) -> list[list[Computer]]:
    """Identically configured computers: same segments, same variant multiset, same subgroup."""
    installs = model.installation_index()
    employees = model.employee_index()
    groups: dict[tuple[Any, ...], list[Computer]] = defaultdict(list)
    for c in model.computers:
        variants = tuple(sorted(installs[i].variant_id for i in c.installation_ids))
        subgroup = employees[c.owner].subgroup_id if c.owner is not None else None
        groups[(tuple(sorted(c.segment_ids)), variants, subgroup or "")].append(c)
    return sorted(groups.values(), key=lambda g: g[0].id)


def export_dot(model: ItsModel, view: DotView | str) -> str:
    view = DotView(view)
    lines = [f"digraph {view.value} {{", "  compound=true;", "  node [shape=box];"]
    variants = model.variant_index()
    installs = model.installation_index()
    names = {i.id: variants[i.variant_id].template.name for i in model.installations}

    if view is DotView.LANDSCAPE:
        employees = model.employee_index()
        by_segment: dict[int, list[str]] = defaultdict(list)
        for group in computer_groups(model):
            rep = group[0]
            software = sorted(Counter(names[i] for i in rep.installation_ids).items())
            label = f"{len(group)} x {rep.kind}"
            if rep.owner is not None:
                label += f" ({employees[rep.owner].subgroup_id})"
            label += "\\n" + "\\n".join(n if k == 1 else f"{n} x{k}" for n, k in software)
            node = f"  c{rep.id} [label={_q(label)}];"
            home = min(rep.segment_ids) if rep.segment_ids else -1
            by_segment[home].append(node)
            for other in sorted(rep.segment_ids)[1:]:
                by_segment[other].append(f"  // c{rep.id} is also attached here")
        for seg in model.segments:
            style = "filled" if seg.internet_facing else "rounded"
            lines.append(f"  subgraph cluster_{seg.id} {{")
            lines.append(f"    label={_q(seg.name)}; style={style};")
            lines.extend("  " + n for n in by_segment.get(seg.id, []))
            lines.append("  }")
        lines.extend(by_segment.get(-1, []))
    elif view is DotView.DATASETS:
        used: set[int] = set()
        for d in model.dataset_instances:
            lines.append(f"  d{d.id} [shape=cylinder, label={_q(d.collection_id + ' #' + str(d.id))}];")
            for i in d.linked_installations:
                used.add(i)
                style = "bold" if i == d.primary_store_installation else "dashed"
                lines.append(f"  d{d.id} -> i{i} [dir=none, style={style}];")
        for i in sorted(used):
            lines.append(f"  i{i} [label={_q(names[i] + ' #' + str(i))}];")
    elif view is DotView.CREDENTIALS:
        hosts: set[int] = set()
        used = set()
        for cred in model.credentials:
            shape = "octagon" if cred.privileged else "ellipse"
            tag = ("@" if cred.scope == "domain" else "") + cred.purpose
            lines.append(f"  k{cred.id} [shape={shape}, label={_q(tag + ' #' + str(cred.id))}];")
            lines.append(f"  k{cred.id} -> c{cred.stored_on_computer};")
            hosts.add(cred.stored_on_computer)
            for i in cred.accepted_by_installations:
                used.add(i)
                lines.append(f"  k{cred.id} -> i{i} [dir=none, style=dashed];")
        for c in sorted(hosts):
            lines.append(f"  c{c} [shape=box3d, label={_q('computer #' + str(c))}];")
        for i in sorted(used):
            lines.append(f"  i{i} [label={_q(names[i] + ' #' + str(i))}];")
    else:
        nodes: set[int] = set()
        internet = False
        for rule in model.firewall_rules:
            src = "internet" if rule.source is None else f"i{rule.source}"
            dst = "internet" if rule.target is None else f"i{rule.target}"
            internet |= rule.source is None or rule.target is None
            nodes.update(x for x in (rule.source, rule.target) if x is not None)
            lines.append(f"  {src} -> {dst} [label={_q(','.join(rule.causes))}];")
        if internet:
            lines.append('  internet [shape=doublecircle, label="Internet"];')
        for i in sorted(nodes):
            if i in installs:
                lines.append(f"  i{i} [label={_q(names[i] + ' #' + str(i))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
