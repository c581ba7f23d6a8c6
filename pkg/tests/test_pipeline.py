import dataclasses

import pytest

from itsforge import io, pipeline, scenario, verifier
from itsforge.errors import PhaseError, QuotaImpossible, SegmentationInfeasible
from itsforge.model import InputParameters


def test_report_covers_every_phase(generated):
    _, _, model, report = generated
    assert tuple(report.durations) == pipeline.PHASES
    assert all(d >= 0 for d in report.durations.values())
    assert report.total_seconds == pytest.approx(sum(report.durations.values()))
    assert report.peak_bytes > 0
    assert len(report.model_id) == 16


def test_generation_is_deterministic(generated):
    templates, params, model, report = generated
    again, report2 = pipeline.generate(templates, params, measure_memory=False)
    assert report2.model_id == report.model_id
    assert io.write_model(again) == io.write_model(model)
    for view in io.DotView:
        assert io.export_dot(again, view) == io.export_dot(model, view)


def test_seed_does_not_change_the_model(generated):
    templates, params, model, _ = generated
    other = dataclasses.replace(params, seed=12345)
    again, _ = pipeline.generate(templates, other, verify=False, measure_memory=False)
    assert io.write_model(again) == io.write_model(model)


def test_empty_parameters_give_empty_model():
    model, report = pipeline.generate(scenario.load_templates(), InputParameters())
    assert model.installations == [] and model.computers == [] and model.firewall_rules == []


def test_segmentation_failure_is_wrapped():
    t = scenario.load_templates()
    p = dataclasses.replace(scenario.scenario_params(templates=t), max_segments=2)
    with pytest.raises(PhaseError) as e:
        pipeline.generate(t, p, measure_memory=False)
    assert e.value.phase == "segmenter"
    assert isinstance(e.value.cause, SegmentationInfeasible)


def test_quota_failure_is_wrapped():
    t = scenario.load_templates()
    p = dataclasses.replace(scenario.scenario_params(templates=t), hq_limit=3)
    with pytest.raises(PhaseError) as e:
        pipeline.generate(t, p, measure_memory=False)
    assert e.value.phase == "computers"
    assert isinstance(e.value.cause, QuotaImpossible)


def test_verification_failure_is_wrapped(monkeypatch):
    t = scenario.load_templates()
    p = scenario.scenario_params("5ers", "3rules", templates=t)
    monkeypatch.setattr(verifier, "verify", lambda *a: [verifier.Violation("structure:hq", (0,), "forced")])
    with pytest.raises(PhaseError) as e:
        pipeline.generate(t, p, measure_memory=False)
    assert e.value.phase == "verify"
    assert isinstance(e.value.cause, pipeline.ModelVerificationError)
    assert "forced" in str(e.value)
