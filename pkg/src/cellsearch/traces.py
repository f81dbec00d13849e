"""Convergence traces: rows of (step index, simulated seconds, best-so-far
true accuracy where known, best-so-far fitness).

Simulated seconds and both best-so-far columns are nondecreasing; the true
accuracy column may be empty on rows where no ground truth has been observed
yet (predictor-guided search phases).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError

TRACE_HEADER = "index,sim_seconds,best_true_acc,best_fitness"

_EPS = 1e-12


@dataclass(frozen=True)
class TraceRow:
    index: int
    sim_seconds: float
    best_true_acc: float | None
    best_fitness: float


@dataclass
class SearchTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, index: int, sim_seconds: float, best_true_acc, best_fitness: float) -> None:
        self.rows.append(TraceRow(index, float(sim_seconds), best_true_acc, float(best_fitness)))

    def validate(self) -> None:
        last_s = -float("inf")
        last_true = -float("inf")
        last_fit = -float("inf")
        for row in self.rows:
            if row.sim_seconds < last_s - _EPS:
                raise ValueError(f"sim_seconds decreases at row {row.index}")
            if row.best_fitness < last_fit - _EPS:
                raise ValueError(f"best_fitness decreases at row {row.index}")
            if row.best_true_acc is not None:
                if row.best_true_acc < last_true - _EPS:
                    raise ValueError(f"best_true_acc decreases at row {row.index}")
                last_true = row.best_true_acc
            last_s = row.sim_seconds
            last_fit = row.best_fitness

    def first_time_reaching(self, target: float):
        """Earliest simulated time whose best-so-far true accuracy meets the
        target, or None if the run never got there."""
        for row in self.rows:
            if row.best_true_acc is not None and row.best_true_acc >= target - _EPS:
                return row.sim_seconds
        return None

    def final_row(self) -> TraceRow:
        if not self.rows:
            raise ValueError("empty trace")
        return self.rows[-1]

    def to_csv_lines(self) -> list[str]:
        self.validate()
        lines = [TRACE_HEADER]
        for row in self.rows:
            true_part = "" if row.best_true_acc is None else repr(row.best_true_acc)
            lines.append(
                f"{row.index},{repr(row.sim_seconds)},{true_part},{repr(row.best_fitness)}"
            )
        return lines


def write_trace(trace: SearchTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trace.to_csv_lines()) + "\n")


def read_trace(path) -> SearchTrace:
    trace = SearchTrace()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ParseError(f"{path}: missing trace header")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 fields")
        try:
            trace.append(
                int(parts[0]),
                float(parts[1]),
                None if parts[2] == "" else float(parts[2]),
                float(parts[3]),
            )
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    trace.validate()
    return trace
