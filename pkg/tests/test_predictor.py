"""Token encoding, the recurrent classifier, its gradients, training, and
persistence. Gradient checks use central finite differences; forward passes
are cross-checked against a plain-loop reimplementation."""

import math
import random

import numpy as np
import pytest

from cellsearch import cellspace
from cellsearch.cellspace import ModelSpec, OpLabel, SpaceLimits
from cellsearch.errors import (
    ConfigError,
    DegenerateDataError,
    InvalidSpecError,
    ParseError,
    ShapeError,
)
from cellsearch.oracle import SimClock
from cellsearch.predictor import (
    ALPHABET_SIZE,
    EDGE_0,
    EDGE_1,
    OP_CONV1X1,
    OP_CONV3X3,
    OP_MAXPOOL,
    SEP,
    LabeledDataset,
    PredictorFitness,
    RnnParams,
    TrainConfig,
    TrainedPredictor,
    encode,
    forward,
    heldout_accuracy,
    load_predictor,
    loss_and_grad,
    predict,
    save_predictor,
    stratified_split,
    train,
)

from conftest import (
    central_differences,
    make_spec,
    max_relative_error,
    reference_bce,
    reference_rnn_prob,
)


def _flatten(params: RnnParams) -> np.ndarray:
    return np.concatenate(
        [
            params.W_x.ravel(),
            params.W_h.ravel(),
            params.b_h,
            params.w_o,
            [params.b_o],
        ]
    )


def _unflatten(theta: np.ndarray, hidden: int) -> RnnParams:
    sizes = [hidden * ALPHABET_SIZE, hidden * hidden, hidden, hidden, 1]
    parts = np.split(theta, np.cumsum(sizes)[:-1])
    return RnnParams(
        W_x=parts[0].reshape(hidden, ALPHABET_SIZE),
        W_h=parts[1].reshape(hidden, hidden),
        b_h=parts[2].copy(),
        w_o=parts[3].copy(),
        b_o=float(parts[4][0]),
        hidden_size=hidden,
    )


# ---------------------------------------------------------------------------
# encoding


def test_encode_two_vertex(two_vertex):
    assert encode(two_vertex).tolist() == [SEP, EDGE_1]


def test_encode_three_vertex_chain(chain3_conv1x1):
    assert encode(chain3_conv1x1).tolist() == [OP_CONV1X1, SEP, EDGE_1, EDGE_0, EDGE_1]


def test_encode_op_tokens_in_index_order():
    spec = make_spec(
        5,
        [(0, 1), (1, 2), (2, 3), (3, 4)],
        [OpLabel.MAXPOOL3X3, OpLabel.CONV3X3, OpLabel.CONV1X1],
    )
    seq = encode(spec).tolist()
    assert seq[:4] == [OP_MAXPOOL, OP_CONV3X3, OP_CONV1X1, SEP]
    assert len(seq) == (5 - 2) + 1 + 10


def test_encode_length_formula():
    rng = random.Random(0)
    for _ in range(100):
        spec = cellspace.random_spec(rng, SpaceLimits(7, 9))
        v = spec.num_vertices
        assert len(encode(spec)) == (v - 2) + 1 + v * (v - 1) // 2


def test_encode_injective_exhaustive_v_le_4():
    specs = list(cellspace.enumerate_space(SpaceLimits(4, 9)))
    seen = {}
    for spec in specs:
        key = tuple(encode(spec).tolist())
        assert key not in seen, f"collision between {spec} and {seen[key]}"
        seen[key] = spec
    assert len(seen) == len(specs)


def test_encode_rejects_unpruned():
    # vertex 1 unreachable from IN
    spec = ModelSpec(
        3, ((0, 2), (1, 2)), (OpLabel.IN, OpLabel.CONV3X3, OpLabel.OUT)
    )
    with pytest.raises(InvalidSpecError):
        encode(spec)


# ---------------------------------------------------------------------------
# forward


def test_forward_zero_params_is_half(two_vertex, chain3_conv1x1):
    params = RnnParams.zeros()
    assert forward(params, encode(two_vertex)) == 0.5
    assert forward(params, encode(chain3_conv1x1)) == 0.5


def test_forward_saturated_bias(two_vertex):
    params = RnnParams.zeros()
    params.b_o = 20.0
    assert forward(params, encode(two_vertex)) > 0.999


def test_forward_matches_reference_recomputation():
    rng = random.Random(3)
    for seed in range(20):
        params = RnnParams.seeded(seed, hidden_size=16, init_scale=0.5)
        spec = cellspace.random_spec(rng, SpaceLimits(7, 9))
        seq = encode(spec)
        expected = reference_rnn_prob(
            params.W_x, params.W_h, params.b_h, params.w_o, params.b_o, seq.tolist()
        )
        assert abs(forward(params, seq) - expected) < 1e-12


def test_forward_stays_inside_open_interval(two_vertex):
    seq = encode(two_vertex)
    for b_o in (1000.0, -1000.0):
        params = RnnParams.zeros()
        params.b_o = b_o
        p = forward(params, seq)
        assert 0.0 < p < 1.0
        # and the resulting loss is finite
        loss, _ = loss_and_grad(params, [(seq, 0), (seq, 1)])
        assert math.isfinite(loss)


def test_forward_shape_errors(two_vertex):
    params = RnnParams.zeros()
    params.W_h = np.zeros((16, 15))
    with pytest.raises(ShapeError):
        forward(params, encode(two_vertex))
    with pytest.raises(ShapeError):
        forward(RnnParams.zeros(), np.array([0, 6]))
    with pytest.raises(ShapeError):
        forward(RnnParams.zeros(), np.array([], dtype=int))


# ---------------------------------------------------------------------------
# loss and gradients


def test_loss_zero_params_is_ln2(two_vertex, chain3_conv1x1):
    params = RnnParams.zeros()
    batch = [(encode(two_vertex), 0), (encode(chain3_conv1x1), 1)]
    loss, _ = loss_and_grad(params, batch)
    assert abs(loss - math.log(2)) < 1e-15


def test_loss_matches_reference_bce_mixed_lengths():
    rng = random.Random(7)
    params = RnnParams.seeded(11, hidden_size=16, init_scale=0.4)
    specs = [cellspace.random_spec(rng, SpaceLimits(7, 9)) for _ in range(8)]
    labels = [rng.randrange(2) for _ in specs]
    batch = [(encode(s), y) for s, y in zip(specs, labels)]
    loss, _ = loss_and_grad(params, batch)
    expected = float(
        np.mean(
            [
                reference_bce(
                    reference_rnn_prob(
                        params.W_x,
                        params.W_h,
                        params.b_h,
                        params.w_o,
                        params.b_o,
                        seq.tolist(),
                    ),
                    y,
                )
                for seq, y in batch
            ]
        )
    )
    assert abs(loss - expected) < 1e-12


def test_gradients_match_finite_differences():
    # Small hidden sizes keep the FD sweep cheap; batches mix lengths so the
    # masking path is exercised. The larger-scale sweep lives in the
    # acceptance suite.
    rng = random.Random(12)
    worst = 0.0
    for draw in range(25):
        hidden = rng.choice([3, 4, 5])
        gen = np.random.default_rng(100 + draw)
        theta0 = gen.uniform(-0.7, 0.7, hidden * ALPHABET_SIZE + hidden * hidden + 2 * hidden + 1)
        specs = [
            cellspace.random_spec(rng, SpaceLimits(7, 9))
            for _ in range(rng.randint(1, 5))
        ]
        batch = [(encode(s), rng.randrange(2)) for s in specs]

        def f(theta):
            loss, _ = loss_and_grad(_unflatten(theta, hidden), batch)
            return loss

        _, grad = loss_and_grad(_unflatten(theta0, hidden), batch)
        numeric = central_differences(f, theta0)
        err = max_relative_error(_flatten(grad), numeric)
        worst = max(worst, err)
    assert worst <= 1e-4, f"worst relative error {worst}"


def test_loss_rejects_empty_batch():
    with pytest.raises(ValueError):
        loss_and_grad(RnnParams.zeros(), [])


# ---------------------------------------------------------------------------
# training


def _toy_dataset():
    """Labels follow a clean rule: any 3x3 convolution present."""
    specs = cellspace.enumerate_space(SpaceLimits(4, 9))
    items = [
        (s, int(any(op is OpLabel.CONV3X3 for op in s.ops))) for s in specs
    ]
    return items


def test_train_learns_separable_rule():
    items = _toy_dataset()
    train_set, held, meta = stratified_split(items, np.random.default_rng(5))
    params, losses = train(train_set, TrainConfig(seed=3))
    assert heldout_accuracy(params, held) == 1.0
    # training made progress and is stable late
    assert losses[-1] < losses[0]
    for a, b in zip(losses[10:], losses[11:]):
        assert b <= a + 1e-3


def test_train_is_deterministic():
    items = _toy_dataset()
    train_set, _, _ = stratified_split(items, np.random.default_rng(5))
    cfg = TrainConfig(seed=9, epochs=12)
    p1, l1 = train(train_set, cfg)
    p2, l2 = train(train_set, cfg)
    assert l1 == l2
    assert np.array_equal(p1.W_x, p2.W_x)
    assert np.array_equal(p1.W_h, p2.W_h)
    assert np.array_equal(p1.b_h, p2.b_h)
    assert np.array_equal(p1.w_o, p2.w_o)
    assert p1.b_o == p2.b_o


def test_train_rejects_single_class(two_vertex, chain3_conv1x1):
    data = LabeledDataset(((two_vertex, 1), (chain3_conv1x1, 1)), "TRAIN")
    with pytest.raises(DegenerateDataError):
        train(data, TrainConfig())
    with pytest.raises(DegenerateDataError):
        train(LabeledDataset((), "TRAIN"), TrainConfig())


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(batch=-1)


# ---------------------------------------------------------------------------
# stratified split


def test_split_disjoint_and_proportional():
    items = _toy_dataset()
    n_pos = sum(y for _, y in items)
    train_set, held, meta = stratified_split(items, np.random.default_rng(0))
    train_hashes = {cellspace.canonical_hash(s) for s, _ in train_set.items}
    held_hashes = {cellspace.canonical_hash(s) for s, _ in held.items}
    assert not (train_hashes & held_hashes)
    assert held.positives() == round(0.2 * n_pos)
    assert len(held) == round(0.2 * n_pos) + round(0.2 * (len(items) - n_pos))
    assert train_set.split == "TRAIN" and held.split == "HELDOUT"


def test_split_rebalances_scarce_positives():
    # 6 positives in a pool of 106: raw share ~5.7%, the training set must
    # be rebalanced to at least 20% positive.
    rng = random.Random(21)
    specs = []
    seen = set()
    while len(specs) < 106:
        s = cellspace.random_spec(rng, SpaceLimits(5, 9))
        h = cellspace.canonical_hash(s)
        if h not in seen:
            seen.add(h)
            specs.append(s)
    items = [(s, 1 if i < 6 else 0) for i, s in enumerate(specs)]
    train_set, held, meta = stratified_split(items, np.random.default_rng(1))
    share = train_set.positives() / len(train_set)
    assert share >= 0.2
    assert meta["train_negatives_dropped"] > 0
    assert meta["positive_share_shortfall"] == 0.0
    # every positive that wasn't held out is in the training set
    assert train_set.positives() == 6 - held.positives()


def test_split_reports_shortfall_when_no_positives():
    rng = random.Random(2)
    items = [(cellspace.random_spec(rng, SpaceLimits(5, 9)), 0) for _ in range(20)]
    train_set, held, meta = stratified_split(items, np.random.default_rng(3))
    assert meta["train_positive_share"] == 0.0
    assert meta["positive_share_shortfall"] == pytest.approx(0.2)


def test_dataset_rejects_bad_labels(two_vertex):
    with pytest.raises(ConfigError):
        LabeledDataset(((two_vertex, 2),), "TRAIN")
    with pytest.raises(ConfigError):
        LabeledDataset((), "VALIDATION")


# ---------------------------------------------------------------------------
# persistence


def test_save_load_round_trip(tmp_path):
    params = RnnParams.seeded(42, hidden_size=16, init_scale=0.3)
    trained = TrainedPredictor(params, threshold_used=0.767, train_seed=42)
    path = tmp_path / "predictor.json"
    save_predictor(trained, path)
    loaded = load_predictor(path)
    assert loaded.threshold_used == 0.767
    assert loaded.train_seed == 42
    rng = random.Random(0)
    for _ in range(20):
        spec = cellspace.random_spec(rng, SpaceLimits(7, 9))
        assert abs(predict(loaded.params, spec) - predict(params, spec)) < 1e-12


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("not json at all\n")
    with pytest.raises(ParseError):
        load_predictor(path)


def test_load_rejects_wrong_alphabet(tmp_path):
    params = RnnParams.seeded(1)
    obj = params.to_json_obj()
    obj["alphabet"] = 7
    obj["threshold_used"] = 0.9
    obj["train_seed"] = 0
    import json

    path = tmp_path / "alpha.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(ParseError):
        load_predictor(path)


def test_load_rejects_inconsistent_shapes(tmp_path):
    params = RnnParams.seeded(1)
    obj = params.to_json_obj()
    obj["W_h"] = [row[:-1] for row in obj["W_h"]]
    obj["threshold_used"] = 0.9
    obj["train_seed"] = 0
    import json

    path = tmp_path / "shape.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(ShapeError):
        load_predictor(path)


def test_load_requires_metadata(tmp_path):
    params = RnnParams.seeded(1)
    import json

    path = tmp_path / "meta.json"
    path.write_text(json.dumps(params.to_json_obj()))
    with pytest.raises(ParseError):
        load_predictor(path)


# ---------------------------------------------------------------------------
# predict / fitness adapter


def test_predict_is_encode_then_forward(chain3_conv1x1):
    params = RnnParams.seeded(5)
    assert predict(params, chain3_conv1x1) == forward(params, encode(chain3_conv1x1))
    assert predict(params, chain3_conv1x1) == predict(params, chain3_conv1x1)


def test_predictor_fitness_prunes_and_never_charges():
    params = RnnParams.seeded(8)
    fitness = PredictorFitness(params)
    clock = SimClock()
    # an unpruned genome: vertex 2 is dormant (half-connected)
    genome = ModelSpec(
        4,
        ((0, 1), (0, 2), (1, 3)),
        (OpLabel.IN, OpLabel.CONV3X3, OpLabel.CONV1X1, OpLabel.OUT),
    )
    value = fitness.evaluate(genome, clock)
    assert value == predict(params, cellspace.prune(genome))
    assert clock.elapsed_s == 0.0
    assert fitness.mode == "PREDICTOR"
    assert fitness.evaluations == 1
