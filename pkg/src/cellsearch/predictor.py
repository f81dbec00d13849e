"""Architecture encoding and a small recurrent go/no-go classifier.

A cell is flattened to a token sequence (interior ops, a separator, then
the upper-triangular adjacency bits) and fed through a single-layer tanh
recurrence; the final hidden state is squashed to the probability that
the architecture clears the accuracy threshold. Everything — forward,
backprop-through-time, minibatch gradient descent — is written against
numpy directly so the arithmetic is fully inspectable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import cellspace
from .cellspace import ModelSpec, OpLabel
from .errors import ConfigError, DegenerateDataError, ParseError, ShapeError

# Token alphabet. Layout of a sequence: (v-2) interior op tokens in index
# order, one SEP, then v(v-1)/2 adjacency bits in row-major order.
OP_CONV3X3, OP_CONV1X1, OP_MAXPOOL, EDGE_0, EDGE_1, SEP = range(6)
ALPHABET_SIZE = 6
TOKEN_NAMES = ("OP_CONV3X3", "OP_CONV1X1", "OP_MAXPOOL", "EDGE_0", "EDGE_1", "SEP")

DEFAULT_HIDDEN = 16

# Weight-init half-width. Small Elman nets are memory-limited by the spectral
# radius of W_h: at +/-0.1 the hidden state forgets a token within ~2 steps
# and nothing past the separator ever reaches the readout, so training flat-
# lines at the base rate. 0.4 puts the recurrence near unit gain for
# hidden size 16 and trains reliably at the default learning rate.
DEFAULT_INIT_SCALE = 0.4

_OP_TOKENS = {
    OpLabel.CONV3X3: OP_CONV3X3,
    OpLabel.CONV1X1: OP_CONV1X1,
    OpLabel.MAXPOOL3X3: OP_MAXPOOL,
}

# Probabilities are kept strictly inside (0,1) so the log-loss stays finite
# even when the output unit saturates in float64.
_P_LO = np.nextafter(0.0, 1.0)
_P_HI = np.nextafter(1.0, 0.0)


def encode(spec: ModelSpec) -> np.ndarray:
    """Flatten a pruned cell to its token sequence (int64 array)."""
    cellspace.require_canonical(spec)
    tokens = [_OP_TOKENS[op] for op in spec.ops[1:-1]]
    tokens.append(SEP)
    edges = set(spec.edges)
    for i in range(spec.num_vertices):
        for j in range(i + 1, spec.num_vertices):
            tokens.append(EDGE_1 if (i, j) in edges else EDGE_0)
    return np.asarray(tokens, dtype=np.int64)


@dataclass
class RnnParams:
    """Weights of the Elman cell plus the scalar output head."""

    W_x: np.ndarray  # hidden x alphabet
    W_h: np.ndarray  # hidden x hidden
    b_h: np.ndarray  # hidden
    w_o: np.ndarray  # hidden
    b_o: float
    hidden_size: int = DEFAULT_HIDDEN

    @classmethod
    def zeros(cls, hidden_size: int = DEFAULT_HIDDEN) -> "RnnParams":
        return cls(
            W_x=np.zeros((hidden_size, ALPHABET_SIZE)),
            W_h=np.zeros((hidden_size, hidden_size)),
            b_h=np.zeros(hidden_size),
            w_o=np.zeros(hidden_size),
            b_o=0.0,
            hidden_size=hidden_size,
        )

    @classmethod
    def seeded(
        cls, seed: int, hidden_size: int = DEFAULT_HIDDEN, init_scale: float = DEFAULT_INIT_SCALE
    ) -> "RnnParams":
        gen = np.random.default_rng(seed)
        u = lambda *shape: gen.uniform(-init_scale, init_scale, shape)
        return cls(
            W_x=u(hidden_size, ALPHABET_SIZE),
            W_h=u(hidden_size, hidden_size),
            b_h=u(hidden_size),
            w_o=u(hidden_size),
            b_o=float(gen.uniform(-init_scale, init_scale)),
            hidden_size=hidden_size,
        )

    def to_json_obj(self) -> dict:
        return {
            "hidden": self.hidden_size,
            "alphabet": ALPHABET_SIZE,
            "W_x": self.W_x.tolist(),
            "W_h": self.W_h.tolist(),
            "b_h": self.b_h.tolist(),
            "w_o": self.w_o.tolist(),
            "b_o": float(self.b_o),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RnnParams":
        try:
            if obj["alphabet"] != ALPHABET_SIZE:
                raise ParseError(f"alphabet size {obj['alphabet']} != {ALPHABET_SIZE}")
            params = cls(
                W_x=np.asarray(obj["W_x"], dtype=float),
                W_h=np.asarray(obj["W_h"], dtype=float),
                b_h=np.asarray(obj["b_h"], dtype=float),
                w_o=np.asarray(obj["w_o"], dtype=float),
                b_o=float(obj["b_o"]),
                hidden_size=int(obj["hidden"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed predictor object: {exc}") from exc
        _check_shapes(params)
        return params


def _check_shapes(params: RnnParams) -> None:
    h = params.hidden_size
    expect = {
        "W_x": (h, ALPHABET_SIZE),
        "W_h": (h, h),
        "b_h": (h,),
        "w_o": (h,),
    }
    for name, shape in expect.items():
        got = getattr(params, name).shape
        if got != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {got}")
    for name in expect:
        if not np.all(np.isfinite(getattr(params, name))):
            raise ShapeError(f"{name} contains non-finite entries")
    if not np.isfinite(params.b_o):
        raise ShapeError("b_o is non-finite")


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_tokens(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise ShapeError("token sequence must be a nonempty 1-d array")
    if seq.min() < 0 or seq.max() >= ALPHABET_SIZE:
        raise ShapeError("token id outside alphabet")
    return seq


def forward(params: RnnParams, seq) -> float:
    """Run the recurrence over one sequence; return P(label = 1) in (0,1)."""
    _check_shapes(params)
    seq = _check_tokens(seq)
    h = np.zeros(params.hidden_size)
    for t in seq:
        h = np.tanh(params.W_x[:, t] + params.W_h @ h + params.b_h)
    p = _sigmoid(params.w_o @ h + params.b_o)
    return float(np.clip(p, _P_LO, _P_HI))


def loss_and_grad(params: RnnParams, batch):
    """Mean binary cross-entropy over a batch plus exact gradients.

    `batch` is a list of (token sequence, 0/1 label). Sequences of unequal
    length are left-padded and masked, which leaves the arithmetic identical
    to running each sequence alone (the hidden state is carried through
    padded steps unchanged, starting from the shared zero state).
    Returns (loss, RnnParams-shaped gradient).
    """
    _check_shapes(params)
    if not batch:
        raise ValueError("empty batch")
    seqs = [_check_tokens(seq) for seq, _ in batch]
    y = np.array([float(label) for _, label in batch])
    B = len(seqs)
    T = max(len(s) for s in seqs)
    H = params.hidden_size

    X = np.zeros((B, T), dtype=np.int64)
    M = np.zeros((B, T), dtype=bool)
    for b, s in enumerate(seqs):
        X[b, T - len(s) :] = s
        M[b, T - len(s) :] = True

    hs = np.zeros((B, T + 1, H))
    for t in range(T):
        a = params.W_x[:, X[:, t]].T + hs[:, t] @ params.W_h.T + params.b_h
        hs[:, t + 1] = np.where(M[:, t : t + 1], np.tanh(a), hs[:, t])

    z = hs[:, T] @ params.w_o + params.b_o
    p = np.clip(_sigmoid(z), _P_LO, _P_HI)
    loss = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))

    dz = (p - y) / B
    g_w_o = hs[:, T].T @ dz
    g_b_o = float(dz.sum())
    g_W_x = np.zeros_like(params.W_x)
    g_W_h = np.zeros_like(params.W_h)
    g_b_h = np.zeros_like(params.b_h)

    dh = np.outer(dz, params.w_o)
    for t in reversed(range(T)):
        m = M[:, t : t + 1]
        da = np.where(m, dh * (1.0 - hs[:, t + 1] ** 2), 0.0)
        g_b_h += da.sum(axis=0)
        g_W_h += da.T @ hs[:, t]
        np.add.at(g_W_x, (slice(None), X[:, t]), da.T)
        dh = np.where(m, da @ params.W_h, dh)

    grad = RnnParams(g_W_x, g_W_h, g_b_h, g_w_o, g_b_o, hidden_size=H)
    return loss, grad


def predict(params: RnnParams, spec: ModelSpec) -> float:
    """encode + forward. Pure; never touches any clock."""
    return forward(params, encode(spec))


# ---------------------------------------------------------------------------
# datasets and training


@dataclass(frozen=True)
class LabeledDataset:
    """Specs with binary labels, tagged with the split they belong to."""

    items: tuple  # of (ModelSpec, int)
    split: str  # TRAIN or HELDOUT

    def __post_init__(self):
        if self.split not in ("TRAIN", "HELDOUT"):
            raise ConfigError(f"unknown split tag {self.split!r}")
        for _, label in self.items:
            if label not in (0, 1):
                raise ConfigError(f"label must be 0 or 1, got {label!r}")

    def __len__(self):
        return len(self.items)

    def positives(self) -> int:
        return sum(label for _, label in self.items)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    batch: int = 16
    seed: int = 0
    init_scale: float = DEFAULT_INIT_SCALE
    hidden_size: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.learning_rate <= 0 or self.init_scale <= 0:
            raise ConfigError("learning_rate and init_scale must be positive")
        if self.epochs <= 0 or self.batch <= 0 or self.hidden_size <= 0:
            raise ConfigError("epochs, batch and hidden_size must be positive")


def stratified_split(
    labeled,
    rng: np.random.Generator,
    heldout_fraction: float = 0.2,
    target_positive_share: float = 0.2,
):
    """Split labeled (spec, y) pairs into TRAIN/HELDOUT datasets.

    The held-out set takes `heldout_fraction` of each class (so its base
    rate matches the pool). The training set keeps every remaining positive
    and subsamples negatives until positives make up at least
    `target_positive_share` of it — well-performing cells are rare, and a
    classifier fed the raw ratio just learns to say "no". When positives
    are too scarce to matter the shortfall is reported, not hidden.

    Returns (train, heldout, meta dict).
    """
    pos = [(s, y) for s, y in labeled if y == 1]
    neg = [(s, y) for s, y in labeled if y == 0]
    pos_order = rng.permutation(len(pos))
    neg_order = rng.permutation(len(neg))
    n_held_pos = int(round(heldout_fraction * len(pos)))
    n_held_neg = int(round(heldout_fraction * len(neg)))
    held = [pos[i] for i in pos_order[:n_held_pos]]
    held += [neg[i] for i in neg_order[:n_held_neg]]
    train_pos = [pos[i] for i in pos_order[n_held_pos:]]
    train_neg = [neg[i] for i in neg_order[n_held_neg:]]

    kept_neg = len(train_neg)
    if train_pos and target_positive_share > 0:
        cap = int(len(train_pos) * (1.0 - target_positive_share) / target_positive_share)
        kept_neg = min(kept_neg, cap)
    train = train_pos + train_neg[:kept_neg]

    train_share = (len(train_pos) / len(train)) if train else 0.0
    meta = {
        "pool_size": len(labeled),
        "pool_positives": len(pos),
        "heldout_positives": n_held_pos,
        "train_positives": len(train_pos),
        "train_negatives_kept": kept_neg,
        "train_negatives_dropped": len(train_neg) - kept_neg,
        "train_positive_share": train_share,
        "target_positive_share": target_positive_share,
        "positive_share_shortfall": max(0.0, target_positive_share - train_share),
    }
    return (
        LabeledDataset(tuple(train), "TRAIN"),
        LabeledDataset(tuple(held), "HELDOUT"),
        meta,
    )


def train(data: LabeledDataset, cfg: TrainConfig):
    """Minibatch gradient descent from a seeded uniform init.

    Returns (params, per-epoch mean loss list). Fails fast when the data
    cannot define the task (a single class present).
    """
    n = len(data.items)
    if n == 0:
        raise DegenerateDataError("empty training set")
    n_pos = data.positives()
    if n_pos == 0 or n_pos == n:
        raise DegenerateDataError(
            f"training set has {n_pos}/{n} positives; both classes are required"
        )
    encoded = [(encode(spec), label) for spec, label in data.items]
    params = RnnParams.seeded(cfg.seed, cfg.hidden_size, cfg.init_scale)
    gen = np.random.default_rng(cfg.seed + 1)
    lr = cfg.learning_rate
    epoch_losses = []
    for _ in range(cfg.epochs):
        order = gen.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            batch = [encoded[i] for i in idx]
            loss, g = loss_and_grad(params, batch)
            total += loss * len(batch)
            params = RnnParams(
                params.W_x - lr * g.W_x,
                params.W_h - lr * g.W_h,
                params.b_h - lr * g.b_h,
                params.w_o - lr * g.w_o,
                params.b_o - lr * g.b_o,
                hidden_size=params.hidden_size,
            )
        epoch_losses.append(total / n)
    return params, epoch_losses


def heldout_accuracy(params: RnnParams, data: LabeledDataset) -> float:
    """Fraction of items whose thresholded probability matches the label."""
    if not data.items:
        raise DegenerateDataError("empty held-out set")
    hits = sum(
        (predict(params, spec) > 0.5) == bool(label) for spec, label in data.items
    )
    return hits / len(data.items)


# ---------------------------------------------------------------------------
# persistence


@dataclass(frozen=True)
class TrainedPredictor:
    """A trained parameter set plus the provenance needed to reuse it."""

    params: RnnParams
    threshold_used: float
    train_seed: int


def save_predictor(trained: TrainedPredictor, path) -> None:
    obj = trained.params.to_json_obj()
    obj["threshold_used"] = trained.threshold_used
    obj["train_seed"] = trained.train_seed
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_predictor(path) -> TrainedPredictor:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    params = RnnParams.from_json_obj(obj)
    try:
        return TrainedPredictor(
            params=params,
            threshold_used=float(obj["threshold_used"]),
            train_seed=int(obj["train_seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: missing or bad metadata: {exc}") from exc


class PredictorFitness:
    """Fitness adapter: predicted probability of clearing the threshold.

    Free to evaluate — the simulated clock is never charged.
    """

    mode = "PREDICTOR"

    def __init__(self, params: RnnParams):
        self.params = params
        self.evaluations = 0

    def evaluate(self, spec: ModelSpec, clock) -> float:
        self.evaluations += 1
        return predict(self.params, cellspace.prune(spec))
