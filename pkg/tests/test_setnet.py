"""Set-network tests: scalar forward oracle, finite differences, metrics."""

import math

import numpy as np
import pytest

from risbeam.scene import UEInfoMatrix
from risbeam.setnet import (
    Batch,
    NetParams,
    ScoreVector,
    TrainConfig,
    _forward_internal,
    eval_metrics,
    forward,
    grad,
    init_net_params,
    load_net_params,
    loss,
    multi_hot,
    predict_set,
    save_net_params,
    train,
)


# ---------------------------------------------------------------------------
# Scalar oracles
# ---------------------------------------------------------------------------

def forward_oracle(params: NetParams, columns) -> list:
    """Chained scalar matrix products, one column at a time, then sigmoid."""
    q = params.layer_dims[-1]
    logits = [0.0] * q
    last = len(params.weights) - 1
    for col in columns:
        h = list(col)
        for li, (w, b) in enumerate(zip(params.weights, params.biases)):
            out = []
            for j in range(w.shape[1]):
                acc = b[j]
                for i in range(w.shape[0]):
                    acc += h[i] * w[i, j]
                out.append(acc if li == last else max(acc, 0.0))
            h = out
        logits = [a + z for a, z in zip(logits, h)]
    return [1.0 / (1.0 + math.exp(-z)) for z in logits]


def loss_oracle(params: NetParams, batch: Batch) -> float:
    total = 0.0
    for s in range(len(batch)):
        cols = [batch.features[s, u] for u in range(batch.valid[s])]
        scores = forward_oracle(params, cols)
        for j, t in enumerate(batch.targets[s]):
            sc = min(max(scores[j], 1e-7), 1 - 1e-7)
            total += -(t * math.log(sc) + (1 - t) * math.log(1 - sc))
    return total / math.log(2.0)


def random_batch(rng, n_samples, u_max, f_dim, q_dim) -> Batch:
    feats = np.zeros((n_samples, u_max, f_dim))
    valid = rng.integers(0, u_max + 1, size=n_samples)
    for s in range(n_samples):
        feats[s, :valid[s]] = rng.uniform(0.0, 1.0, size=(valid[s], f_dim))
    targets = (rng.uniform(size=(n_samples, q_dim)) < 0.3).astype(float)
    return Batch(feats, valid, targets)


def info_from_rows(rows, u_max) -> UEInfoMatrix:
    rows = np.asarray(rows, dtype=float)
    mat = np.zeros((u_max, rows.shape[1] if rows.size else 1))
    if rows.size:
        mat[:rows.shape[0]] = rows
    return UEInfoMatrix(mat, valid_count=len(rows))


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

class TestForward:
    def test_empty_input_scores_half(self):
        params = init_net_params([7, 8, 5], seed=1)
        info = UEInfoMatrix(np.zeros((4, 7)), valid_count=0)
        np.testing.assert_array_equal(forward(params, info).scores, 0.5)

    def test_duplicate_column_doubles_logits(self):
        params = init_net_params([5, 6, 4], seed=2)
        rng = np.random.default_rng(3)
        col = rng.uniform(size=5)
        one = Batch(np.stack([np.vstack([col, np.zeros(5)])]), np.array([1]))
        two = Batch(np.stack([np.vstack([col, col])]), np.array([2]))
        _, cache_one = _forward_internal(params, one)
        logit_one = cache_one["post"][-1][0]
        out_two, _ = _forward_internal(params, two)
        # pooled logits of the duplicate pair are exactly twice the single copy
        logits_two = np.log(out_two / (1 - out_two))
        np.testing.assert_allclose(logits_two[0], 2 * logit_one, rtol=1e-9)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(4)
        params = init_net_params([6, 9, 7, 5], seed=5)
        rows = rng.uniform(size=(2, 6))
        info = info_from_rows(rows, u_max=4)
        got = forward(params, info).scores
        want = forward_oracle(params, [rows[0], rows[1]])
        np.testing.assert_allclose(got, want, rtol=1e-9)

    def test_permutation_invariance_is_exact(self):
        rng = np.random.default_rng(6)
        params = init_net_params([5, 12, 8], seed=7)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            rows = rng.uniform(size=(n, 5))
            base = forward(params, info_from_rows(rows, 6)).scores
            perm = forward(params, info_from_rows(rows[rng.permutation(n)], 6)).scores
            np.testing.assert_array_equal(base, perm)

    def test_padding_neutrality_is_exact(self):
        rng = np.random.default_rng(8)
        params = init_net_params([5, 12, 8], seed=9)
        rows = rng.uniform(size=(3, 5))
        narrow = forward(params, info_from_rows(rows, 3)).scores
        wide = forward(params, info_from_rows(rows, 10)).scores
        np.testing.assert_array_equal(narrow, wide)

    def test_rejects_dimension_mismatch(self):
        params = init_net_params([7, 4], seed=0)
        with pytest.raises(ValueError):
            forward(params, UEInfoMatrix(np.zeros((2, 6)), valid_count=1))

    def test_scores_strictly_inside_unit_interval(self):
        params = init_net_params([4, 64], seed=10)
        for w in params.weights:
            w *= 50.0  # drive logits into saturation
        info = info_from_rows(np.ones((3, 4)), 4)
        s = forward(params, info).scores
        assert np.all(s > 0.0) and np.all(s < 1.0)

    def test_score_vector_validation(self):
        with pytest.raises(ValueError):
            ScoreVector(np.array([0.0, 0.5]))
        with pytest.raises(ValueError):
            ScoreVector(np.array([0.5, 1.0]))


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

class TestLoss:
    def test_uniform_scores_cost_one_bit_per_beam(self):
        params = init_net_params([3, 4], seed=0)
        params.weights[0][:] = 0.0
        batch = Batch(np.zeros((1, 2, 3)), np.array([0]),
                      np.array([[1.0, 0.0, 1.0, 1.0]]))
        assert loss(params, batch) == pytest.approx(4.0, rel=1e-12)

    def test_saturated_match_stays_near_clamp_floor(self):
        params = init_net_params([3, 4], seed=0)
        params.weights[0][:] = 0.0
        params.biases[0][:] = np.array([40.0, -40.0, 40.0, -40.0])
        batch = Batch(np.zeros((1, 1, 3)), np.array([1]),
                      np.array([[1.0, 0.0, 1.0, 0.0]]))
        assert loss(params, batch) < 1e-5

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(11)
        params = init_net_params([5, 7, 6], seed=12)
        batch = random_batch(rng, 4, 3, 5, 6)
        assert loss(params, batch) == pytest.approx(loss_oracle(params, batch),
                                                    rel=1e-9)

    def test_rejects_empty_or_untargeted_batches(self):
        params = init_net_params([3, 2], seed=0)
        with pytest.raises(ValueError):
            loss(params, Batch(np.zeros((0, 2, 3)), np.zeros(0, dtype=int),
                               np.zeros((0, 2))))
        with pytest.raises(ValueError):
            loss(params, Batch(np.zeros((1, 2, 3)), np.array([0])))


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

def finite_difference_check(params: NetParams, batch: Batch, h=1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    analytic = grad(params, batch)
    worst = 0.0
    for li in range(len(params.weights)):
        for arrays, ga in ((params.weights, analytic.weights),
                           (params.biases, analytic.biases)):
            arr = arrays[li]
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss(params, batch)
                arr[idx] = orig - h
                down = loss(params, batch)
                arr[idx] = orig
                fd = (up - down) / (2 * h)
                a = ga[li][idx]
                err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                worst = max(worst, err)
    return worst


class TestGradients:
    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(13)
        for trial in range(5):
            dims = [4, int(rng.integers(3, 7)), int(rng.integers(3, 7)), 5]
            params = init_net_params(dims, seed=100 + trial)
            for b in params.biases:
                # generic biases keep pre-activations off the exact ReLU
                # kink, where central differences are not meaningful
                b[:] = rng.normal(0.0, 0.1, size=b.shape)
            batch = random_batch(rng, 3, 3, 4, 5)
            assert finite_difference_check(params, batch) < 1e-4

    def test_duplicate_sample_doubles_gradient(self):
        rng = np.random.default_rng(14)
        params = init_net_params([4, 6, 3], seed=15)
        single = random_batch(rng, 1, 2, 4, 3)
        double = Batch(np.concatenate([single.features] * 2),
                       np.concatenate([single.valid] * 2),
                       np.concatenate([single.targets] * 2))
        g1 = grad(params, single)
        g2 = grad(params, double)
        for a, b in zip(g1.weights, g2.weights):
            np.testing.assert_allclose(b, 2 * a, rtol=1e-12)
        for a, b in zip(g1.biases, g2.biases):
            np.testing.assert_allclose(b, 2 * a, rtol=1e-12)

    def test_zero_weight_single_layer_bias_gradient(self):
        """With zero weights the logits are valid_count * bias, so at bias 0
        the bias gradient is sum_i valid_i * (0.5 - t_i) / ln(2)."""
        params = NetParams([3, 2], [np.zeros((3, 2))], [np.zeros(2)])
        feats = np.random.default_rng(16).uniform(size=(3, 2, 3))
        valid = np.array([1, 2, 0])
        targets = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        g = grad(params, Batch(feats, valid, targets))
        want = sum(v * (0.5 - t) for v, t in zip(valid, targets)) / math.log(2)
        np.testing.assert_allclose(g.biases[0], want, rtol=1e-12)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class TestTrain:
    def test_zero_learning_rate_keeps_params(self):
        rng = np.random.default_rng(17)
        init = init_net_params([4, 5, 3], seed=18)
        batch = random_batch(rng, 6, 2, 4, 3)
        cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=2, seed=0)
        out, _ = train(batch, cfg, init)
        for a, b in zip(out.weights, init.weights):
            np.testing.assert_array_equal(a, b)

    def test_single_sample_overfit(self):
        rng = np.random.default_rng(19)
        init = init_net_params([4, 16, 6], seed=20)
        batch = random_batch(rng, 1, 3, 4, 6)
        cfg = TrainConfig(learning_rate=0.1, epochs=250, batch_size=1, seed=0)
        params, curves = train(batch, cfg, init, test_batch=None)
        bits = [c["train_bits"] for c in curves]
        assert bits[-1] < 0.05
        tail = bits[50:]
        assert all(b1 >= b2 - 1e-9 for b1, b2 in zip(tail, tail[1:]))

    def test_fixed_seed_reproduces_curves_exactly(self):
        rng = np.random.default_rng(21)
        init = init_net_params([4, 8, 3], seed=22)
        batch = random_batch(rng, 10, 2, 4, 3)
        cfg = TrainConfig(learning_rate=0.05, epochs=5, batch_size=4, seed=7)
        p1, c1 = train(batch, cfg, init)
        p2, c2 = train(batch, cfg, init)
        assert c1 == c2
        for a, b in zip(p1.weights, p2.weights):
            np.testing.assert_array_equal(a, b)

    def test_rejects_empty_training_set(self):
        init = init_net_params([3, 2], seed=0)
        empty = Batch(np.zeros((0, 2, 3)), np.zeros(0, dtype=int), np.zeros((0, 2)))
        with pytest.raises(ValueError):
            train(empty, TrainConfig(epochs=1), init)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(threshold=0.0)
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0)


# ---------------------------------------------------------------------------
# Prediction and metrics
# ---------------------------------------------------------------------------

def make_score_params(logit_values) -> tuple:
    """1-layer net + all-zero single-column input producing chosen scores."""
    q = len(logit_values)
    params = NetParams([2, q], [np.zeros((2, q))],
                       [np.asarray(logit_values, dtype=float)])
    info = UEInfoMatrix(np.zeros((1, 2)), valid_count=1)
    return params, info


class TestPredictSet:
    def test_threshold_includes_everything_above(self):
        params, info = make_score_params([math.log(9)] * 5)  # scores 0.9
        got = predict_set(params, info, threshold=0.5)
        assert list(got) == [0, 1, 2, 3, 4]

    def test_threshold_is_inclusive(self):
        params, info = make_score_params([0.0, 1.0, -1.0])  # scores .5, .73, .27
        got = predict_set(params, info, threshold=0.5)
        assert list(got) == [0, 1]

    def test_top_one_unique_max(self):
        logits = [0.0] * 10
        logits[7] = 2.0
        params, info = make_score_params(logits)
        assert list(predict_set(params, info, top_k=1)) == [7]

    def test_top_k_tie_goes_to_smaller_index(self):
        params, info = make_score_params([1.0, 3.0, 3.0, 3.0, 0.5])
        got = predict_set(params, info, top_k=3)
        scores = forward(params, info).scores
        oracle = sorted(range(5), key=lambda j: (-scores[j], j))[:3]
        assert sorted(oracle) == list(got) == [1, 2, 3]

    def test_top_k_nesting(self):
        rng = np.random.default_rng(23)
        params, info = make_score_params(rng.normal(size=12))
        prev = set()
        for k in range(1, 13):
            cur = set(predict_set(params, info, top_k=k))
            assert prev <= cur
            prev = cur

    def test_mode_validation(self):
        params, info = make_score_params([0.0, 0.0])
        with pytest.raises(ValueError):
            predict_set(params, info)
        with pytest.raises(ValueError):
            predict_set(params, info, threshold=0.5, top_k=1)
        with pytest.raises(ValueError):
            predict_set(params, info, top_k=3)


class TestEvalMetrics:
    def test_perfect_predictions(self):
        sets = [{1, 2}, {0}, {5, 6, 7}]
        assert eval_metrics(sets, sets) == (1.0, 1.0)

    def test_half_overlap(self):
        acc, rec = eval_metrics([{1, 2}], [{2, 3}])
        assert (acc, rec) == (0.5, 0.5)

    def test_random_against_set_oracle(self):
        rng = np.random.default_rng(24)
        preds, truths = [], []
        for _ in range(50):
            preds.append(set(rng.choice(16, size=rng.integers(0, 5), replace=False)))
            truths.append(set(rng.choice(16, size=rng.integers(0, 5), replace=False)))
        acc, rec = eval_metrics(preds, truths)
        accs, recs = [], []
        for p, t in zip(preds, truths):
            inter = len(p.intersection(t))
            accs.append(inter / len(p) if p else (1.0 if not t else 0.0))
            recs.append(inter / len(t) if t else 1.0)
        assert acc == pytest.approx(sum(accs) / 50)
        assert rec == pytest.approx(sum(recs) / 50)

    def test_empty_denominator_conventions(self):
        assert eval_metrics([set()], [set()]) == (1.0, 1.0)
        acc, rec = eval_metrics([set()], [{1}])
        assert (acc, rec) == (0.0, 0.0)
        acc, rec = eval_metrics([{1}], [set()])
        assert (acc, rec) == (0.0, 1.0)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            eval_metrics([{1}], [])


# ---------------------------------------------------------------------------
# Serialization and helpers
# ---------------------------------------------------------------------------

class TestSerialization:
    def test_round_trip_exact(self, tmp_path):
        params = init_net_params([7, 64, 64, 64], seed=33)
        path = tmp_path / "net.txt"
        save_net_params(params, path)
        back = load_net_params(path)
        assert back.layer_dims == params.layer_dims
        assert back.seed == 33
        for a, b in zip(back.weights, params.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(back.biases, params.biases):
            np.testing.assert_array_equal(a, b)

    def test_rejects_unknown_format(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something-else v9\n")
        with pytest.raises(ValueError):
            load_net_params(path)


class TestMultiHot:
    def test_basic(self):
        np.testing.assert_array_equal(multi_hot([1, 3], 5), [0, 1, 0, 1, 0])
        np.testing.assert_array_equal(multi_hot([], 3), [0, 0, 0])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            multi_hot([5], 5)
