"""Command-line frontend: generate, verify, visualize and bench."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

from . import errors, io, pipeline, scenario, verifier
from .model import InputParameters

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_VIOLATIONS = 3

SEED_ENV = "ITSFORGE_SEED"
BENCH_HEADER = ("employee_config", "rule_config", "multiplier", "repeat", "duration_s", "peak_bytes", "segments", "computers")

_INFEASIBLE = (
    errors.Infeasible,
    errors.SegmentationInfeasible,
    errors.QuotaImpossible,
    errors.NoEligibleStore,
    errors.UnsatisfiableDependency,
)


@dataclass(frozen=True)
class BenchmarkConfig:
    employee_configs: tuple[str, ...] = scenario.EMPLOYEE_CONFIGS
    rule_configs: tuple[str, ...] = tuple(scenario.RULE_CONFIGS)
    multipliers: tuple[int, ...] = tuple(range(1, 16))
    repeats: int = 3

    def __post_init__(self) -> None:
        if not self.multipliers or min(self.multipliers) < 1:
            raise ValueError("multipliers must be at least 1")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def runs(self) -> list[tuple[str, str, int, int]]:
        grid = itertools.product(self.employee_configs, self.rule_configs, self.multipliers, range(1, self.repeats + 1))
        return list(grid)


def _err(msg: str) -> None:
    print(f"itsforge: {msg}", file=sys.stderr)


def _seed(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env, 0)
    except ValueError:
        raise errors.SchemaError(SEED_ENV, f"not an integer: {env!r}") from None


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _load_params(path: str, templates, seed: int | None) -> InputParameters:  # type: ignore[no-untyped-def]
    params = io.load_params(_read(path), templates)
    return params if seed is None else dataclasses.replace(params, seed=seed)


def _write_dot(model, directory: str) -> None:  # type: ignore[no-untyped-def]
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for view in io.DotView:
        (out / f"{view.value.lower()}.dot").write_text(io.export_dot(model, view), encoding="utf-8")


# -- subcommands -----------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        templates = io.load_template_dir(args.templates)
        params = _load_params(args.params, templates, _seed(args.seed))
    except (OSError, errors.ItsForgeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        model, report = pipeline.generate(templates, params, verify=not args.no_verify)
    except errors.PhaseError as exc:
        _err(str(exc))
        if isinstance(exc.cause, pipeline.ModelVerificationError):
            for v in exc.cause.violations:
                print(v, file=sys.stderr)
            return EXIT_VIOLATIONS
        return EXIT_INFEASIBLE if isinstance(exc.cause, _INFEASIBLE) else EXIT_INPUT
    try:
        Path(args.out).write_text(io.write_model(model), encoding="utf-8")
        if args.dot:
            _write_dot(model, args.dot)
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(
        f"{len(model.employees)} employees, {len(model.computers)} computers, "
        f"{len(model.segments)} segments in {report.total_seconds:.2f} s (model {report.model_id})",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        model = io.read_model(_read(args.model))
        params = io.load_params(_read(args.params))
    except (OSError, errors.ItsForgeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    violations = verifier.verify(model, params)
    for v in violations:
        print(v)
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_visualize(args: argparse.Namespace) -> int:
    try:
        model = io.read_model(_read(args.model))
        _write_dot(model, args.out)
    except (OSError, errors.ItsForgeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    return EXIT_OK


def bench_run(employee_config: str, rule_config: str, multiplier: int, repeat: int, seed: int = 0) -> list[str]:
    """One CSV row; metrics become FAILED when the run raises."""
    row = [employee_config, rule_config, str(multiplier), str(repeat)]
    try:
        templates = scenario.load_templates()
        params = scenario.scenario_params(employee_config, rule_config, multiplier, seed, templates)
        model, report = pipeline.generate(templates, params, verify=False)
    except Exception as exc:  # noqa: BLE001 - one failed run must not stop the sweep
        _err(f"{employee_config}/{rule_config} x{multiplier} #{repeat}: {exc}")
        return row + ["FAILED"] * 4
    return row + [f"{report.total_seconds:.6f}", str(report.peak_bytes), str(len(model.segments)), str(len(model.computers))]


def run_bench(config: BenchmarkConfig, out: TextIO, jobs: int = 1, seed: int = 0) -> int:
    """Write the CSV report; returns the number of failed rows."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BENCH_HEADER)
    runs = config.runs()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = pool.map(bench_run, *zip(*runs), itertools.repeat(seed, len(runs)))
            rows = list(rows)
    else:
        rows = (bench_run(*r, seed) for r in runs)
    failed = 0
    for row in rows:
        writer.writerow(row)
        out.flush()
        failed += row[-1] == "FAILED"
    return failed


def _multipliers(text: str) -> tuple[int, ...]:
    """Accepts "1..15", "3" or "1,2,5"."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            values = tuple(range(int(lo), int(hi) + 1))
        else:
            values = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad multiplier range {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("multipliers must be at least 1")
    return values


def _names(choices: Sequence[str]):  # type: ignore[no-untyped-def]
    def parse(text: str) -> tuple[str, ...]:
        names = tuple(x for x in text.split(",") if x)
        bad = [n for n in names if n not in choices]
        if bad or not names:
            raise argparse.ArgumentTypeError(f"expected a comma list of {', '.join(choices)}")
        return names

    return parse


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        seed = _seed(args.seed) or 0
        config = BenchmarkConfig(args.employee_configs, args.rule_configs, args.multipliers, args.repeats)
    except (ValueError, errors.ItsForgeError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        if args.report:
            with open(args.report, "w", encoding="utf-8", newline="") as fh:
                run_bench(config, fh, args.jobs, seed)
        else:
            run_bench(config, sys.stdout, args.jobs, seed)
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itsforge", description="Generate and check organizational IT system models.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run the generator")
    g.add_argument("--templates", required=True, metavar="DIR", help="directory with software.csv, roles.csv, services.csv")
    g.add_argument("--params", required=True, metavar="FILE")
    g.add_argument("--out", required=True, metavar="FILE")
    g.add_argument("--dot", metavar="DIR", help="also write the DOT views here")
    g.add_argument("--seed", type=int, help=f"recorded in the model; falls back to ${SEED_ENV}")
    g.add_argument("--no-verify", action="store_true", help="skip the final model check")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", help="check a model against its parameters")
    v.add_argument("--model", required=True, metavar="FILE")
    v.add_argument("--params", required=True, metavar="FILE")
    v.add_argument("--seed", type=int, help="accepted for symmetry; verification does not use it")
    v.set_defaults(func=cmd_verify)

    z = sub.add_parser("visualize", help="write DOT views of a model")
    z.add_argument("--model", required=True, metavar="FILE")
    z.add_argument("--out", required=True, metavar="DIR")
    z.add_argument("--seed", type=int, help="accepted for symmetry; rendering does not use it")
    z.set_defaults(func=cmd_visualize)

    b = sub.add_parser("bench", help="timing and memory sweep over the bundled scenario")
    b.add_argument("--employee-configs", type=_names(scenario.EMPLOYEE_CONFIGS), default=scenario.EMPLOYEE_CONFIGS)
    b.add_argument("--rule-configs", type=_names(tuple(scenario.RULE_CONFIGS)), default=tuple(scenario.RULE_CONFIGS))
    b.add_argument("--multipliers", type=_multipliers, default=tuple(range(1, 16)), help='e.g. "1..15" or "1,2,4"')
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--jobs", type=int, default=1, help="parallel generations")
    b.add_argument("--report", metavar="FILE", help="CSV destination (default stdout)")
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except errors.SchemaError as exc:  # bad ITSFORGE_SEED
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
