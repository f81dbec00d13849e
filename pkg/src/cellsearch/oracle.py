"""Ground-truth fitness: a file-backed benchmark table or a deterministic
synthetic benchmark, plus the simulated training-time clock.

Every ground-truth query charges the run's clock with the architecture's
training time (scaled by the query's charge fraction), which is the x-axis
of every convergence trace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import cellspace
from .cellspace import ModelSpec, SpaceLimits
from .errors import DuplicateHashError, ParseError, UnknownArchitectureError

DEFAULT_LABEL_THRESHOLD = 0.90
SYNTHETIC_THRESHOLD_QUANTILE = 0.90


@dataclass(frozen=True)
class BenchmarkRecord:
    spec_hash: str
    val_accuracy: float
    train_time_s: float

    def __post_init__(self):
        if not 0.0 <= self.val_accuracy <= 1.0:
            raise ValueError(f"val_accuracy {self.val_accuracy} outside [0, 1]")
        if self.train_time_s < 0.0:
            raise ValueError(f"train_time_s {self.train_time_s} is negative")


class SimClock:
    """Monotone accumulator of simulated training seconds."""

    def __init__(self):
        self.elapsed_s = 0.0

    def charge(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot charge negative time")
        self.elapsed_s += seconds


@dataclass(frozen=True)
class SyntheticOracleParams:
    """Coefficients of the synthetic accuracy/time functions. All defaults
    are design constants of this artifact, not measured data."""

    base_accuracy: float = 0.62
    conv3x3_gain: float = 0.045
    conv1x1_gain: float = 0.030
    maxpool_gain: float = 0.010
    depth_gain: float = 0.015
    edge_penalty: float = 0.004
    accuracy_cap: float = 0.95
    jitter_scale: float = 0.02
    time_base_s: float = 200.0
    time_conv3x3_s: float = 300.0
    time_conv1x1_s: float = 150.0
    time_maxpool_s: float = 60.0
    time_edge_s: float = 40.0

    def to_json_obj(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SyntheticOracleParams":
        return cls(**obj)


@dataclass
class BenchmarkTable:
    records: dict[str, BenchmarkRecord] = field(default_factory=dict)
    source: str = "FILE"

    def record_for(self, spec: ModelSpec) -> BenchmarkRecord:
        digest = cellspace.canonical_hash(spec)
        try:
            return self.records[digest]
        except KeyError:
            raise UnknownArchitectureError(
                f"no benchmark record for hash {digest}"
            ) from None


class SyntheticOracle:
    """Deterministic stand-in for training-and-evaluating an architecture."""

    source = "SYNTHETIC"

    def __init__(self, params: SyntheticOracleParams | None = None):
        self.params = params or SyntheticOracleParams()

    def record_for(self, spec: ModelSpec) -> BenchmarkRecord:
        return synth_record(spec, self.params)


def longest_path_edges(spec: ModelSpec) -> int:
    """Length in edges of the longest input->output path (DP over the
    topological vertex order)."""
    v = spec.num_vertices
    best = [None] * v
    best[0] = 0
    for j in range(1, v):
        reachable = [best[i] for i in spec.predecessors(j) if best[i] is not None]
        if reachable:
            best[j] = max(reachable) + 1
    if best[v - 1] is None:
        raise ValueError("no input->output path")
    return best[v - 1]


def spec_features(spec: ModelSpec) -> dict:
    ops = spec.ops[1:-1]
    return {
        "n_conv3x3": sum(op is cellspace.OpLabel.CONV3X3 for op in ops),
        "n_conv1x1": sum(op is cellspace.OpLabel.CONV1X1 for op in ops),
        "n_maxpool": sum(op is cellspace.OpLabel.MAXPOOL3X3 for op in ops),
        "n_edges": spec.num_edges,
        "depth": longest_path_edges(spec),
    }


def synth_record(spec: ModelSpec, params: SyntheticOracleParams) -> BenchmarkRecord:
    """Accuracy and training time as fixed functions of cell structure.

    Accuracy rewards convolutions and depth, penalizes edges, and carries a
    small deterministic jitter derived from the canonical hash so that no
    two non-isomorphic cells tie (almost surely). Time grows with the
    operation mix and edge count.
    """
    cellspace.require_canonical(spec)
    digest = cellspace.canonical_hash(spec)
    f = spec_features(spec)
    raw = (
        params.base_accuracy
        + params.conv3x3_gain * f["n_conv3x3"]
        + params.conv1x1_gain * f["n_conv1x1"]
        + params.maxpool_gain * f["n_maxpool"]
        + params.depth_gain * f["depth"]
        - params.edge_penalty * f["n_edges"]
    )
    jitter_fraction = int.from_bytes(bytes.fromhex(digest)[:8], "big") / 2.0**64
    jitter = (jitter_fraction - 0.5) * params.jitter_scale
    accuracy = min(max(raw + jitter, 0.0), params.accuracy_cap)
    time_s = (
        params.time_base_s
        + params.time_conv3x3_s * f["n_conv3x3"]
        + params.time_conv1x1_s * f["n_conv1x1"]
        + params.time_maxpool_s * f["n_maxpool"]
        + params.time_edge_s * f["n_edges"]
    )
    return BenchmarkRecord(digest, accuracy, time_s)


def query(
    oracle: BenchmarkTable | SyntheticOracle,
    spec: ModelSpec,
    clock: SimClock,
    charge: float = 1.0,
) -> BenchmarkRecord:
    """Fetch the ground-truth record for a spec, charging the clock
    `charge * train_time_s`. Full training charges 1.0; labeling may
    charge less."""
    if not 0.0 <= charge <= 1.0:
        raise ValueError(f"charge {charge} outside [0, 1]")
    record = oracle.record_for(spec)
    clock.charge(charge * record.train_time_s)
    return record


def label(record: BenchmarkRecord, threshold: float = DEFAULT_LABEL_THRESHOLD) -> int:
    """1 when validation accuracy strictly exceeds the threshold, else 0."""
    return 1 if record.val_accuracy > threshold else 0


def synthetic_label_threshold(
    params: SyntheticOracleParams, limits: SpaceLimits
) -> float:
    """Label threshold for synthetic runs: the 0.90 quantile of accuracy
    over the enumerated space, so both classes are populated regardless of
    where the synthetic accuracy range sits."""
    accs = [
        synth_record(spec, params).val_accuracy
        for spec in cellspace.enumerate_space(limits)
    ]
    return float(np.quantile(accs, SYNTHETIC_THRESHOLD_QUANTILE))


def load_table(path) -> BenchmarkTable:
    """Load a line-delimited benchmark file.

    Each line is a JSON object {"spec": <spec object>, "val_accuracy": x,
    "train_time_s": t}. Hashes are recomputed from the spec; a repeated
    hash is an error, as is any accuracy outside [0, 1].
    """
    table = BenchmarkTable(records={}, source="FILE")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                spec = ModelSpec.from_json_obj(obj["spec"])
                record = BenchmarkRecord(
                    spec_hash=cellspace.canonical_hash(spec),
                    val_accuracy=float(obj["val_accuracy"]),
                    train_time_s=float(obj["train_time_s"]),
                )
            except Exception as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if record.spec_hash in table.records:
                raise DuplicateHashError(
                    f"{path}:{lineno}: duplicate hash {record.spec_hash}"
                )
            table.records[record.spec_hash] = record
    return table


class OracleFitness:
    """Ground-truth fitness for the search loops: queries the oracle at full
    charge and returns validation accuracy.

    With memoization on (the default), repeat evaluations of an
    already-seen hash are served from a per-run memo without touching the
    clock — a trained model need not be retrained. Hits are counted for run
    metadata.
    """

    mode = "ORACLE"

    def __init__(self, source, memoize: bool = True):
        self.source = source
        self.memo: dict[str, float] | None = {} if memoize else None
        self.memo_hits = 0
        self.evaluations = 0

    def evaluate(self, spec: ModelSpec, clock: SimClock) -> float:
        # Search loops hand over raw genomes; the evaluated object is the
        # cell they prune to.
        phenotype = cellspace.prune(spec)
        digest = cellspace.canonical_hash(phenotype)
        if self.memo is not None and digest in self.memo:
            self.memo_hits += 1
            return self.memo[digest]
        record = query(self.source, phenotype, clock, charge=1.0)
        self.evaluations += 1
        if self.memo is not None:
            self.memo[digest] = record.val_accuracy
        return record.val_accuracy


def dump_table_lines(records) -> list[str]:
    """Serialize (spec, record) pairs to benchmark-file lines."""
    lines = []
    for spec, record in records:
        lines.append(
            json.dumps(
                {
                    "spec": spec.to_json_obj(),
                    "val_accuracy": record.val_accuracy,
                    "train_time_s": record.train_time_s,
                },
                sort_keys=True,
            )
        )
    return lines
