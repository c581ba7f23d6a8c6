"""Run every phase in order and assemble the model."""

from __future__ import annotations

import hashlib
import time
import tracemalloc
from dataclasses import dataclass, field

from . import chooser, datasets, realizer, segmenter
from .errors import ItsForgeError, PhaseError
from .io import write_model
from .model import InputParameters, ItsModel, TemplateSet

PHASES = ("chooser", "datasets", "segmenter", "computers", "auth", "firewall", "verify")


@dataclass
class GenerationReport:
    durations: dict[str, float] = field(default_factory=dict)  # seconds per phase
    peak_bytes: int = 0
    model_id: str = ""

    @property
    def total_seconds(self) -> float:
        return sum(self.durations.values())


class ModelVerificationError(ItsForgeError):
    def __init__(self, violations: list) -> None:
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        super().__init__(f"{len(violations)} violation(s): {head}")


def generate(
    templates: TemplateSet,
    params: InputParameters,
    *,
    verify: bool = True,
    measure_memory: bool = True,
) -> tuple[ItsModel, GenerationReport]:
    """Templates and parameters in, verified model and timing/memory report out."""
    from .verifier import verify as verify_model

    report = GenerationReport()
    started = False
    if measure_memory and not tracemalloc.is_tracing():
        tracemalloc.start()
        started = True
    if measure_memory:
        tracemalloc.reset_peak()
        baseline = tracemalloc.get_traced_memory()[0]

    model = ItsModel(services=[templates.service(s) for s in params.provided_external_services], hq_limit=params.hq_limit)

    def run(phase: str, fn):  # type: ignore[no-untyped-def]
        t0 = time.perf_counter()
        try:
            return fn()
        except PhaseError:
            raise
        except ItsForgeError as exc:
            raise PhaseError(phase, exc) from exc
        finally:
            report.durations[phase] = time.perf_counter() - t0

    try:
        sel = run("chooser", lambda: chooser.choose_software(templates, params))
        model.variants = sel.variants
        model.employees = sel.employees
        model.installations = sel.installations
        model.dataset_instances = run(
            "datasets",
            lambda: datasets.instantiate_datasets(
                params.data_collections,
                model.employees,
                params.provided_external_services,
                model.installations,
                model.variants,
            ),
        )
        assignment = run("segmenter", lambda: segmenter.segment_network(model, params.network_policies, params.max_segments))
        segmenter.apply_assignment(model, assignment)
        run("computers", lambda: realizer.install_computers(model))
        run("auth", lambda: realizer.init_auth(model))
        run("firewall", lambda: realizer.init_firewall(model))
        if measure_memory:
            report.peak_bytes = max(0, tracemalloc.get_traced_memory()[1] - baseline)
        if verify:
            violations = run("verify", lambda: verify_model(model, params, templates))
            if violations:
                raise PhaseError("verify", ModelVerificationError(violations))
    finally:
        if started:
            tracemalloc.stop()
    report.model_id = hashlib.sha256(write_model(model).encode()).hexdigest()[:16]
    return model, report
