"""Per-iteration run records and their CSV form.

Floats are serialized with 17 significant digits so artifacts round-trip
exactly.  Wall-clock timings are recorded in memory but written to CSV only
on request, keeping default artifacts byte-identical across repeat runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path


def fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


@dataclass
class TraceRow:
    t: int
    objective_gap: float
    frob_F: float
    lambda_min_H: float
    in_Khat: bool
    wallclock_ms: float = 0.0
    samples_used_inner: int | None = None
    samples_used_outer: int | None = None
    covariance_gate_hits: int | None = None


@dataclass
class RunTrace:
    """Ordered per-iteration records for one solver run."""

    rows: list[TraceRow] = field(default_factory=list)
    stochastic: bool = False

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    @property
    def columns(self) -> list[str]:
        cols = ["t", "objective_gap", "frob_F", "lambda_min_H", "in_Khat", "wallclock_ms"]
        if self.stochastic:
            cols += ["samples_used_inner", "samples_used_outer", "covariance_gate_hits"]
        return cols

    def write_csv(self, path, include_timings: bool = False) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                vals = [row.t, row.objective_gap, row.frob_F, row.lambda_min_H, row.in_Khat,
                        row.wallclock_ms if include_timings else ""]
                if self.stochastic:
                    vals += [row.samples_used_inner, row.samples_used_outer,
                             row.covariance_gate_hits]
                writer.writerow([fmt(v) if v != "" else "" for v in vals])

    def final_gap(self) -> float:
        return self.rows[-1].objective_gap if self.rows else float("nan")

    def gaps(self) -> list[float]:
        return [r.objective_gap for r in self.rows]
