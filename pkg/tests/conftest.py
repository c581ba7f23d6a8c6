import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))


@pytest.fixture(scope="session")
def generated():
    """The 7-subgroup, 5-rule scenario, generated once; tests must not mutate it."""
    from itsforge import pipeline, scenario

    templates = scenario.load_templates()
    params = scenario.scenario_params(templates=templates)
    model, report = pipeline.generate(templates, params)
    return templates, params, model, report


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
