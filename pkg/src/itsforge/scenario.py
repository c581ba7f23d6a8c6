"""The bundled financial-institution scenario: fixture loading and parameter building."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .io import FORMAT_VERSION, load_template_dir, params_from_dict
from .model import InputParameters, TemplateSet

FIXTURES = Path(str(resources.files("itsforge") / "fixtures"))
TEMPLATE_DIR = FIXTURES / "templates"

EMPLOYEE_CONFIGS = ("5ers", "7ers")
RULE_CONFIGS: dict[str, tuple[str, ...]] = {
    "3rules": ("R1", "R2", "R3"),
    "5rules": ("R1", "R2", "R3", "R4", "R5"),
}
PROVIDED_SERVICES = ["Internet_banking"]
# Frozen by the procedure in fixtures/hq_calibration.md.
HQ_LIMIT = 1508


def _load(name: str) -> Any:
    return json.loads((FIXTURES / name).read_text())


def load_templates() -> TemplateSet:
    return load_template_dir(TEMPLATE_DIR)


def scenario_dict(employee_config: str = "7ers", rule_config: str = "5rules", multiplier: int = 1, seed: int = 0) -> dict:
    """Parameters document for one cell of the benchmark grid."""
    if employee_config not in EMPLOYEE_CONFIGS:
        raise ValueError(f"unknown employee config {employee_config!r}; expected one of {EMPLOYEE_CONFIGS}")
    if rule_config not in RULE_CONFIGS:
        raise ValueError(f"unknown rule config {rule_config!r}; expected one of {tuple(RULE_CONFIGS)}")
    if multiplier < 1:
        raise ValueError("multiplier must be at least 1")
    erss = [dict(e, count=e["count"] * multiplier) for e in _load(f"employees_{employee_config}.json")]
    rules = _load("rules.json")
    return {
        "format_version": FORMAT_VERSION,
        "erss": erss,
        "data_collections": _load("collections.json"),
        "provided_external_services": list(PROVIDED_SERVICES),
        "network_policies": [rules[r] for r in RULE_CONFIGS[rule_config]],
        "hq_limit": HQ_LIMIT,
        "seed": seed,
    }


def scenario_params(
    employee_config: str = "7ers",
    rule_config: str = "5rules",
    multiplier: int = 1,
    seed: int = 0,
    templates: TemplateSet | None = None,
) -> InputParameters:
    doc = scenario_dict(employee_config, rule_config, multiplier, seed)
    return params_from_dict(doc, templates if templates is not None else load_templates())
