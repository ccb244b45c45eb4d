"""Command-line front end: Nash solve, solver runs, and the property suite.

Configuration is a single JSON document with a ``mode`` discriminator; flags
can override seeds and the output directory.  Exit codes: 0 success,
1 configuration or parse error, 2 infeasible instance, 3 divergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certify, verify
from .exact import DivergenceError, ExactSolverConfig, outer_npg_exact
from .model import (LqGame, ModelError, StructuredGain, benchmark_initial_gain,
                    lift_gain, resolve_game, zero_gain)
from .trace import RunTrace, fmt
from .zo import ZoConfig, outer_zo_npg

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGENCE = 3
EXIT_VERIFY = 4

_MODES = ("nash", "exact-npg", "zo-npg", "verify")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a game source, a mode, parameters, seeds, output dir."""

    game: str = "benchmark"
    mode: str = "nash"
    seeds: tuple[int, ...] = (0,)
    out: str = "out"
    solver: dict = field(default_factory=dict)
    zo: dict = field(default_factory=dict)
    initial_gain: list | str | None = None
    verify_seed: int = 0
    verify_instances: int = 20

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: line {exc.lineno}: {exc.msg}") from exc
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    if "seeds" in doc:
        doc["seeds"] = tuple(int(s) for s in doc["seeds"])
    try:
        return ExperimentConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_initial_gain(config: ExperimentConfig, game: LqGame) -> StructuredGain:
    spec = config.initial_gain
    if spec is None:
        if config.game == "benchmark":
            return benchmark_initial_gain()
        return zero_gain(game, "K")
    if spec == "zero":
        return zero_gain(game, "K")
    if spec == "benchmark":
        return benchmark_initial_gain()
    return lift_gain([np.array(b, dtype=float) for b in spec], side="K")


def _solver_config(config: ExperimentConfig) -> ExactSolverConfig:
    try:
        return ExactSolverConfig(**config.solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver parameters: {exc}") from exc


def _zo_config(config: ExperimentConfig, seed: int) -> ZoConfig:
    doc = dict(config.zo)
    doc["seed"] = seed
    try:
        return ZoConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad zo parameters: {exc}") from exc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_nash(config: ExperimentConfig, out: Path, dump_certificate: bool) -> int:
    game = resolve_game(config.game)
    try:
        sol = certify.solve_nash(game)
    except certify.NashInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"value={sol.value:.4f} margin={sol.margin:.4f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "nash.json").write_text(json.dumps(sol.to_dict(), sort_keys=True) + "\n")
    if dump_certificate:
        cert = certify.certificate(game, sol.Kstar, sol.Lstar)
        (out / "certificate.json").write_text(json.dumps(cert.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def _write_summary(out: Path, traces: dict[int, RunTrace], total_trajectories: int) -> None:
    rows = max((len(t.rows) for t in traces.values()), default=0)
    lines = ["t,median_objective_gap"]
    for t in range(rows):
        gaps = [tr.rows[t].objective_gap for tr in traces.values() if len(tr.rows) > t]
        lines.append(f"{t},{fmt(statistics.median(gaps))}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    doc = {
        "seeds": sorted(traces),
        "total_trajectories": total_trajectories,
        "final_gaps": {str(s): tr.final_gap() for s, tr in sorted(traces.items())},
        "initial_gaps": {str(s): (tr.rows[0].objective_gap if tr.rows else None)
                         for s, tr in sorted(traces.items())},
    }
    (out / "summary.json").write_text(json.dumps(doc, sort_keys=True) + "\n")


def cmd_run(config: ExperimentConfig, out: Path, timings: bool) -> int:
    if config.mode not in ("exact-npg", "zo-npg"):
        raise ConfigError(f"run requires mode exact-npg or zo-npg, got {config.mode!r}")
    game = resolve_game(config.game)
    K0 = _resolve_initial_gain(config, game)
    out.mkdir(parents=True, exist_ok=True)
    try:
        nash_value = certify.solve_nash(game).value
    except certify.NashInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    traces: dict[int, RunTrace] = {}
    total_traj = 0
    for seed in config.seeds:
        csv_path = out / f"trace_seed{seed}.csv"
        try:
            if config.mode == "exact-npg":
                _, trace = outer_npg_exact(game.compact(), K0, _solver_config(config),
                                           nash_value=nash_value)
            else:
                _, trace = outer_zo_npg(game, K0, _zo_config(config, seed),
                                        nash_value=nash_value)
        except certify.NashInfeasibleError as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        except DivergenceError as exc:
            exc.trace.write_csv(csv_path, include_timings=timings)
            print(f"divergence (seed {seed}): {exc}; partial trace at {csv_path}",
                  file=sys.stderr)
            return EXIT_DIVERGENCE
        trace.write_csv(csv_path, include_timings=timings)
        traces[seed] = trace
        if trace.rows and trace.rows[-1].samples_used_inner is not None:
            total_traj += (trace.rows[-1].samples_used_inner
                           + trace.rows[-1].samples_used_outer)
    _write_summary(out, traces, total_traj)
    print(f"{config.mode}: {len(config.seeds)} seed(s), artifacts in {out}")
    return EXIT_OK


def cmd_verify(config: ExperimentConfig, out: Path, full: bool) -> int:
    instances = config.verify_instances * (5 if full else 1)
    reports = verify.run_property_suite(seed=config.verify_seed, instances=instances)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "verify_reports.jsonl"
    verify.write_reports(reports, report_path)
    print(verify.summary_table(reports))
    if any(not r.passed for r in reports):
        print(f"failures recorded in {report_path}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqgames",
        description="Finite-horizon zero-sum LQ games: Nash solve, policy "
                    "gradient runs, and verification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("nash", "run", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, action="append", default=None,
                       help="seed override (repeatable)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--dump-certificate", action="store_true",
                       help="also write the full value certificate")
        p.add_argument("--timings", action="store_true",
                       help="include wall-clock timings in CSV artifacts")
        p.add_argument("--full", action="store_true",
                       help="enlarge the verification workload")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed:
            config = dataclasses.replace(config, seeds=tuple(args.seed))
        out = Path(args.out) if args.out else Path(config.out)
        if args.command == "nash":
            return cmd_nash(config, out, args.dump_certificate)
        if args.command == "run":
            return cmd_run(config, out, args.timings)
        return cmd_verify(config, out, args.full)
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
