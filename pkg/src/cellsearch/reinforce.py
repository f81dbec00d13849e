"""Policy-gradient architecture search.

An autoregressive recurrent controller emits one decision per step — every
possible edge (binary), then every interior op (ternary) — and the whole
action sequence is assembled into a cell. The controller is trained with
the score-function estimator: advantage-weighted gradients of the sampled
sequence log-probability, against an exponential-moving-average baseline.
All gradients are exact backprop through the sampling-time forward pass.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .cellspace import ModelSpec, OpLabel, SpaceLimits, prune, validate
from .errors import ConfigError, NoPathError, ParseError, ShapeError
from .oracle import SimClock
from .traces import SearchTrace

# Interior op chosen by each ternary action, in action-index order.
ACTION_OPS = (OpLabel.CONV3X3, OpLabel.CONV1X1, OpLabel.MAXPOOL3X3)

# Embedding-table rows: the learned start token, then one row per
# (step type, action) pair.
_EMB_START = 0
_EMB_BINARY = (1, 2)
_EMB_TERNARY = (3, 4, 5)
N_EMBEDDINGS = 6

DEFAULT_HIDDEN = 32
DEFAULT_EMB_DIM = 8


@dataclass(frozen=True)
class DecisionSchedule:
    """Ordered decision arities, plus (optionally) how to assemble the
    resulting actions into a cell.

    The full-space schedule for max_vertices v is C(v,2) binary edge
    decisions in row-major upper-triangle order followed by v-2 ternary op
    decisions. Schedules built directly from an arity tuple (no limits)
    support sampling and gradients but not assembly — useful for bandit
    probes of the estimator.
    """

    arities: tuple
    edge_pairs: tuple = ()
    num_vertices: int = 0
    limits: SpaceLimits | None = None

    def __post_init__(self):
        for a in self.arities:
            if a not in (2, 3):
                raise ConfigError(f"unsupported arity {a}")
        if self.num_vertices:
            n_edges = len(self.edge_pairs)
            n_ops = self.num_vertices - 2
            if self.arities != (2,) * n_edges + (3,) * n_ops:
                raise ConfigError("arities do not match the assembly layout")

    @classmethod
    def from_limits(cls, limits: SpaceLimits) -> "DecisionSchedule":
        v = limits.max_vertices
        pairs = tuple((i, j) for i in range(v) for j in range(i + 1, v))
        arities = (2,) * len(pairs) + (3,) * (v - 2)
        return cls(arities, pairs, v, limits)

    @property
    def num_steps(self) -> int:
        return len(self.arities)

    def assemble(self, actions) -> ModelSpec | None:
        """Actions -> pruned spec, or None when the result is not a valid
        cell (no IN->OUT path, or over the edge budget after pruning)."""
        if not self.num_vertices:
            raise ConfigError("schedule has no assembly layout")
        edges = tuple(
            pair for pair, a in zip(self.edge_pairs, actions) if a == 1
        )
        op_actions = actions[len(self.edge_pairs) :]
        ops = (
            (OpLabel.IN,)
            + tuple(ACTION_OPS[a] for a in op_actions)
            + (OpLabel.OUT,)
        )
        try:
            phenotype = prune(ModelSpec(self.num_vertices, edges, ops))
        except NoPathError:
            return None
        return phenotype if validate(phenotype, self.limits).valid else None


@dataclass
class ControllerState:
    """Recurrent core + action embeddings + per-arity output heads."""

    W_e: np.ndarray  # hidden x emb_dim
    W_h: np.ndarray  # hidden x hidden
    b_h: np.ndarray  # hidden
    emb: np.ndarray  # N_EMBEDDINGS x emb_dim
    W2: np.ndarray  # 2 x hidden
    b2: np.ndarray  # 2
    W3: np.ndarray  # 3 x hidden
    b3: np.ndarray  # 3
    hidden_size: int = DEFAULT_HIDDEN
    emb_dim: int = DEFAULT_EMB_DIM

    @classmethod
    def zeros(cls, hidden_size=DEFAULT_HIDDEN, emb_dim=DEFAULT_EMB_DIM):
        return cls(
            W_e=np.zeros((hidden_size, emb_dim)),
            W_h=np.zeros((hidden_size, hidden_size)),
            b_h=np.zeros(hidden_size),
            emb=np.zeros((N_EMBEDDINGS, emb_dim)),
            W2=np.zeros((2, hidden_size)),
            b2=np.zeros(2),
            W3=np.zeros((3, hidden_size)),
            b3=np.zeros(3),
            hidden_size=hidden_size,
            emb_dim=emb_dim,
        )

    @classmethod
    def seeded(
        cls,
        seed: int,
        hidden_size=DEFAULT_HIDDEN,
        emb_dim=DEFAULT_EMB_DIM,
        init_scale: float = 0.1,
    ):
        gen = np.random.default_rng(seed)
        u = lambda *shape: gen.uniform(-init_scale, init_scale, shape)
        return cls(
            W_e=u(hidden_size, emb_dim),
            W_h=u(hidden_size, hidden_size),
            b_h=u(hidden_size),
            emb=u(N_EMBEDDINGS, emb_dim),
            W2=u(2, hidden_size),
            b2=u(2),
            W3=u(3, hidden_size),
            b3=u(3),
            hidden_size=hidden_size,
            emb_dim=emb_dim,
        )

    _FIELDS = ("W_e", "W_h", "b_h", "emb", "W2", "b2", "W3", "b3")

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(getattr(self, name)).ravel() for name in self._FIELDS]
        )

    @classmethod
    def from_flat(cls, theta: np.ndarray, hidden_size, emb_dim):
        shapes = {
            "W_e": (hidden_size, emb_dim),
            "W_h": (hidden_size, hidden_size),
            "b_h": (hidden_size,),
            "emb": (N_EMBEDDINGS, emb_dim),
            "W2": (2, hidden_size),
            "b2": (2,),
            "W3": (3, hidden_size),
            "b3": (3,),
        }
        parts = {}
        at = 0
        for name in cls._FIELDS:
            shape = shapes[name]
            size = int(np.prod(shape))
            parts[name] = theta[at : at + size].reshape(shape).copy()
            at += size
        if at != theta.size:
            raise ShapeError(f"flat vector has {theta.size} entries, expected {at}")
        return cls(hidden_size=hidden_size, emb_dim=emb_dim, **parts)


def _check_controller(controller: ControllerState) -> None:
    h, e = controller.hidden_size, controller.emb_dim
    expect = {
        "W_e": (h, e),
        "W_h": (h, h),
        "b_h": (h,),
        "emb": (N_EMBEDDINGS, e),
        "W2": (2, h),
        "b2": (2,),
        "W3": (3, h),
        "b3": (3,),
    }
    for name, shape in expect.items():
        arr = getattr(controller, name)
        if arr.shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError(f"{name} contains non-finite entries")


@dataclass
class Baseline:
    """Exponential moving average of batch-mean rewards. Reads as 0.0
    until the first update."""

    value: float = 0.0
    beta: float = 0.9
    initialized: bool = False

    def read(self) -> float:
        return self.value if self.initialized else 0.0

    def update(self, batch_mean: float) -> None:
        if self.initialized:
            self.value = self.beta * self.value + (1.0 - self.beta) * batch_mean
        else:
            self.value = float(batch_mean)
            self.initialized = True


@dataclass
class SampledArch:
    """One controller rollout: actions, their exact log-probabilities, the
    assembled (pruned) cell or the invalid marker, and the reward."""

    actions: tuple
    logprob_terms: tuple
    spec: ModelSpec | None
    invalid: bool
    reward: float = 0.0

    @property
    def logprob(self) -> float:
        return float(sum(self.logprob_terms))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - math.log(np.exp(z).sum())


def _head(controller, arity):
    if arity == 2:
        return controller.W2, controller.b2
    return controller.W3, controller.b3


def _embedding_row(arity: int, action: int) -> int:
    return _EMB_BINARY[action] if arity == 2 else _EMB_TERNARY[action]


def sample(controller: ControllerState, schedule: DecisionSchedule, rng: random.Random) -> SampledArch:
    """Roll the controller forward for one architecture.

    Step input is the embedding of the previous action (the start embedding
    at step one); the arity-matched head produces logits; the action is
    drawn from their softmax. Exact per-step log-probabilities are kept for
    the gradient pass.
    """
    _check_controller(controller)
    h = np.zeros(controller.hidden_size)
    row = _EMB_START
    actions = []
    terms = []
    for arity in schedule.arities:
        h = np.tanh(controller.W_e @ controller.emb[row] + controller.W_h @ h + controller.b_h)
        W, b = _head(controller, arity)
        logp = _log_softmax(W @ h + b)
        p = np.exp(logp)
        r = rng.random()
        action = arity - 1
        acc = 0.0
        for a in range(arity):
            acc += p[a]
            if r < acc:
                action = a
                break
        actions.append(action)
        terms.append(float(logp[action]))
        row = _embedding_row(arity, action)

    spec = None
    invalid = False
    if schedule.num_vertices:
        spec = schedule.assemble(actions)
        invalid = spec is None
    return SampledArch(tuple(actions), tuple(terms), spec, invalid)


def reward_of(s: SampledArch, fitness, clock: SimClock) -> float:
    """Fitness of the sampled cell; invalid samples earn 0.0 and cost
    nothing."""
    if s.invalid:
        return 0.0
    if s.spec is None:
        raise ConfigError("sample carries no architecture; supply a custom reward")
    return fitness.evaluate(s.spec, clock)


def logprob_and_grad(controller: ControllerState, schedule: DecisionSchedule, actions):
    """Log-probability of a fixed action sequence and its exact gradient.

    Replays the forward pass, then backpropagates through time. Returns
    (logprob, gradient as a flat vector aligned with flatten())."""
    _check_controller(controller)
    T = schedule.num_steps
    if len(actions) != T:
        raise ShapeError(f"expected {T} actions, got {len(actions)}")

    hs = [np.zeros(controller.hidden_size)]
    rows = []
    probs = []
    logprob = 0.0
    row = _EMB_START
    for t, arity in enumerate(schedule.arities):
        rows.append(row)
        h = np.tanh(
            controller.W_e @ controller.emb[row] + controller.W_h @ hs[-1] + controller.b_h
        )
        hs.append(h)
        W, b = _head(controller, arity)
        logp = _log_softmax(W @ h + b)
        probs.append(np.exp(logp))
        a = actions[t]
        logprob += float(logp[a])
        row = _embedding_row(arity, a)

    g = ControllerState.zeros(controller.hidden_size, controller.emb_dim)
    dh_next = np.zeros(controller.hidden_size)
    for t in reversed(range(T)):
        arity = schedule.arities[t]
        W, _ = _head(controller, arity)
        dlogits = -probs[t]
        dlogits[actions[t]] += 1.0
        if arity == 2:
            g.W2 += np.outer(dlogits, hs[t + 1])
            g.b2 += dlogits
        else:
            g.W3 += np.outer(dlogits, hs[t + 1])
            g.b3 += dlogits
        dh = W.T @ dlogits + dh_next
        da = dh * (1.0 - hs[t + 1] ** 2)
        g.W_e += np.outer(da, controller.emb[rows[t]])
        g.emb[rows[t]] += controller.W_e.T @ da
        g.W_h += np.outer(da, hs[t])
        g.b_h += da
        dh_next = controller.W_h.T @ da
    return logprob, g.flatten()


def reinforce_update(
    controller: ControllerState,
    schedule: DecisionSchedule,
    batch,
    baseline,
    learning_rate: float,
) -> ControllerState:
    """One ascent step along (1/m) sum_k (R_k - b) grad log P(actions_k).

    `baseline` may be a Baseline (read, never updated here) or a plain
    number; pass the value read before this batch's baseline update.
    """
    if not batch:
        raise ConfigError("empty batch")
    b = baseline.read() if isinstance(baseline, Baseline) else float(baseline)
    total = np.zeros(controller.flatten().size)
    for s in batch:
        advantage = s.reward - b
        if advantage == 0.0:
            continue
        _, g = logprob_and_grad(controller, schedule, s.actions)
        total += advantage * g
    theta = controller.flatten() + learning_rate * total / len(batch)
    return ControllerState.from_flat(theta, controller.hidden_size, controller.emb_dim)


@dataclass(frozen=True)
class ReinforceConfig:
    limits: SpaceLimits = field(default_factory=SpaceLimits)
    batch_size: int = 20
    iterations: int = 50
    learning_rate: float = 0.005
    seed: int = 0
    hidden_size: int = DEFAULT_HIDDEN
    emb_dim: int = DEFAULT_EMB_DIM
    init_scale: float = 0.1
    beta: float = 0.9

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.learning_rate <= 0 or self.init_scale <= 0:
            raise ConfigError("learning_rate and init_scale must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1)")


@dataclass
class ReinforceResult:
    controller: ControllerState
    baseline: Baseline
    trace: SearchTrace
    history: list  # of SampledArch, in sampling order
    invalid_count: int


def run_reinforce(
    cfg: ReinforceConfig,
    fitness,
    clock: SimClock,
    schedule: DecisionSchedule | None = None,
    reward_fn=None,
) -> ReinforceResult:
    """Batched policy-gradient loop.

    Per iteration: sample `batch_size` rollouts, attach rewards, read the
    baseline, fold the batch mean into the baseline, then take the ascent
    step using the pre-update baseline value. One trace row per batch.
    A custom `reward_fn(sample, clock)` replaces the fitness adapter
    (bandit probes); otherwise fitness supplies rewards via reward_of.
    """
    if schedule is None:
        schedule = DecisionSchedule.from_limits(cfg.limits)
    if reward_fn is None and fitness is None:
        raise ConfigError("need a fitness adapter or a reward function")
    controller = ControllerState.seeded(
        cfg.seed, cfg.hidden_size, cfg.emb_dim, cfg.init_scale
    )
    rng = random.Random(cfg.seed)
    baseline = Baseline(beta=cfg.beta)
    trace = SearchTrace()
    history = []
    invalid_count = 0
    best = 0.0
    true_known = reward_fn is None and getattr(fitness, "mode", None) == "ORACLE"

    for it in range(1, cfg.iterations + 1):
        batch = [sample(controller, schedule, rng) for _ in range(cfg.batch_size)]
        for s in batch:
            s.reward = (
                reward_fn(s, clock) if reward_fn is not None else reward_of(s, fitness, clock)
            )
            invalid_count += s.invalid
            history.append(s)
            if s.reward > best:
                best = s.reward
        b = baseline.read()
        baseline.update(sum(s.reward for s in batch) / len(batch))
        controller = reinforce_update(controller, schedule, batch, b, cfg.learning_rate)
        trace.append(it, clock.elapsed_s, best if true_known else None, best)
    return ReinforceResult(controller, baseline, trace, history, invalid_count)


# ---------------------------------------------------------------------------
# checkpoints


def save_controller(
    controller: ControllerState,
    schedule: DecisionSchedule,
    baseline: Baseline,
    path,
) -> None:
    obj = {
        "hidden": controller.hidden_size,
        "emb_dim": controller.emb_dim,
        "schedule": {
            "arities": list(schedule.arities),
            "edge_pairs": [list(p) for p in schedule.edge_pairs],
            "num_vertices": schedule.num_vertices,
            "limits": (
                {
                    "max_vertices": schedule.limits.max_vertices,
                    "max_edges": schedule.limits.max_edges,
                }
                if schedule.limits
                else None
            ),
        },
        "baseline": {
            "value": baseline.value,
            "beta": baseline.beta,
            "initialized": baseline.initialized,
        },
    }
    for name in ControllerState._FIELDS:
        obj[name] = getattr(controller, name).tolist()
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_controller(path):
    """Returns (controller, schedule, baseline)."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        controller = ControllerState(
            hidden_size=int(obj["hidden"]),
            emb_dim=int(obj["emb_dim"]),
            **{
                name: np.asarray(obj[name], dtype=float)
                for name in ControllerState._FIELDS
            },
        )
        sched = obj["schedule"]
        lim = sched["limits"]
        schedule = DecisionSchedule(
            arities=tuple(sched["arities"]),
            edge_pairs=tuple(tuple(p) for p in sched["edge_pairs"]),
            num_vertices=int(sched["num_vertices"]),
            limits=SpaceLimits(lim["max_vertices"], lim["max_edges"]) if lim else None,
        )
        base = obj["baseline"]
        baseline = Baseline(
            value=float(base["value"]),
            beta=float(base["beta"]),
            initialized=bool(base["initialized"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed controller checkpoint: {exc}") from exc
    _check_controller(controller)
    return controller, schedule, baseline
