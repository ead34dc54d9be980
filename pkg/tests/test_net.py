import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from modules import net
from modules.errors import NumericError, ParameterError, RunStoreError
from modules.net import Batch, ModelParams
from modules.synthdata import Dataset, generate_clusters
from modules.trainer import total_loss

EPS = 1e-5


def _zero_params(d=3, h=4, k=5):
    return ModelParams(W1=np.zeros((d, h)), b1=np.zeros(h), W2=np.zeros((h, k)), b2=np.zeros(k))


def _random_batch(rng, b, d, k, weighted=True):
    weights = rng.uniform(0.1, 1.0, size=b) if weighted else np.ones(b)
    return Batch(rng.normal(size=(b, d)), rng.integers(0, k, size=b), weights)


def _finite_difference(fn, params):
    grads = {}
    for name, arr in params.arrays().items():
        g = np.zeros_like(arr)
        for pos in np.ndindex(arr.shape):
            plus, minus = arr.copy(), arr.copy()
            plus[pos] += EPS
            minus[pos] -= EPS
            hi = fn(ModelParams(**{**params.arrays(), name: plus}))
            lo = fn(ModelParams(**{**params.arrays(), name: minus}))
            g[pos] = (hi - lo) / (2 * EPS)
        grads[name] = g
    return grads


def _assert_close_relative(analytic, numeric):
    for name in net.PARAM_NAMES:
        a, n = analytic[name], numeric[name]
        scale = np.maximum(np.abs(a) + np.abs(n), 1e-5)
        assert np.all(np.abs(a - n) / scale < 1e-4), name


def test_init_is_seeded_with_zero_biases():
    a = net.init_params(16, 64, 10, seed=5)
    b = net.init_params(16, 64, 10, seed=5)
    assert a.equals(b)
    assert not np.any(a.b1) and not np.any(a.b2)
    assert abs(np.std(a.W1) - 1 / np.sqrt(16)) <= 0.2 / np.sqrt(16)
    assert abs(np.std(a.W2) - 1 / np.sqrt(64)) <= 0.2 / np.sqrt(64)


def test_init_rejects_empty_dimensions():
    with pytest.raises(ParameterError):
        net.init_params(0, 4, 3, seed=0)


def test_zero_weights_give_uniform_probabilities():
    probs = net.forward(_zero_params(), np.ones((4, 3)))
    assert np.allclose(probs, 0.2)


def test_forward_matches_unfused_reference(rng):
    params = net.init_params(5, 7, 4, seed=1)
    x = rng.normal(size=(6, 5))
    hidden = np.zeros((6, 7))
    for i in range(6):
        for j in range(7):
            hidden[i, j] = max(0.0, sum(x[i, t] * params.W1[t, j] for t in range(5)) + params.b1[j])
    logits = hidden @ params.W2 + params.b2
    ref = np.exp(logits - logits.max(axis=1, keepdims=True))
    ref /= ref.sum(axis=1, keepdims=True)
    assert np.allclose(net.forward(params, x), ref, atol=1e-12, rtol=0)


def test_forward_rejects_non_finite_input():
    x = np.ones((2, 3))
    x[1, 1] = np.nan
    with pytest.raises(NumericError):
        net.forward(_zero_params(), x)


def test_forward_rejects_wrong_width():
    with pytest.raises(ParameterError):
        net.forward(_zero_params(d=3), np.ones((2, 4)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-1e4, 1e4)))
def test_softmax_rows_stay_on_the_simplex(logits):
    probs = net.softmax(logits)
    assert np.all(np.isfinite(probs))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs >= 0) and np.all(probs <= 1)


def test_weighted_ce_values():
    assert net.weighted_ce(np.array([[0.5, 0.5]]), np.array([0]), np.array([1.0])) == pytest.approx(np.log(2))
    probs = np.array([[0.7, 0.3], [0.2, 0.8]])
    assert net.weighted_ce(probs, np.array([0, 1]), np.zeros(2)) == 0.0
    a, b = -np.log(0.7), -np.log(0.8)
    assert net.weighted_ce(probs, np.array([0, 1]), np.array([1.0, 0.5])) == pytest.approx((a + 0.5 * b) / 1.5)


def test_weighted_ce_is_finite_on_zero_probability():
    assert np.isfinite(net.weighted_ce(np.array([[1.0, 0.0]]), np.array([1]), np.array([1.0])))


def test_batch_weights_must_lie_in_unit_interval():
    with pytest.raises(ParameterError):
        Batch(np.ones((2, 3)), np.zeros(2, dtype=int), np.array([1.0, 1.5]))
    with pytest.raises(ParameterError):
        Batch(np.ones((0, 3)), np.zeros(0, dtype=int), np.zeros(0))


def test_lr_zero_leaves_params_unchanged(rng):
    params = net.init_params(3, 4, 2, seed=0)
    new, loss = net.sgd_step(params, _random_batch(rng, 5, 3, 2), 0.0)
    assert new.equals(params)
    assert loss > 0


def test_three_sample_gradient_matches_finite_differences(rng):
    params = net.init_params(3, 5, 4, seed=2)
    batch = _random_batch(rng, 3, 3, 4)
    _, grads = net.loss_and_grad(params, batch)
    numeric = _finite_difference(lambda p: net.weighted_ce(net.forward(p, batch.features), batch.labels,
                                                           batch.weights), params)
    _assert_close_relative(grads.arrays(), numeric)


@pytest.mark.parametrize("trial", range(10))
def test_gradients_on_random_micro_batches(trial):
    rng = np.random.default_rng(100 + trial)
    params = net.init_params(4, 6, 3, seed=trial)
    batch = _random_batch(rng, 8, 4, 3, weighted=trial % 2 == 0)
    _, grads = net.loss_and_grad(params, batch)
    numeric = _finite_difference(lambda p: net.weighted_ce(net.forward(p, batch.features), batch.labels,
                                                           batch.weights), params)
    _assert_close_relative(grads.arrays(), numeric)


@pytest.mark.parametrize("trial", range(10))
def test_total_loss_gradient_on_random_micro_batches(trial):
    rng = np.random.default_rng(200 + trial)
    params = net.init_params(4, 6, 3, seed=trial)
    clean, noisy, reg = (_random_batch(rng, 5, 4, 3) for _ in range(3))
    lambda_n, lambda_r = 0.7, 1.3
    grads = None
    for batch, coef in [(clean, 1.0), (noisy, lambda_n), (reg, lambda_r)]:
        _, g = net.loss_and_grad(params, batch)
        g = g.map(lambda a: coef * a)
        grads = g if grads is None else grads.map(np.add, g)
    numeric = _finite_difference(lambda p: total_loss(p, clean, noisy, reg, lambda_n, lambda_r).total, params)
    _assert_close_relative(grads.arrays(), numeric)


def test_composite_step_matches_manual_update(rng):
    params = net.init_params(3, 4, 2, seed=3)
    a, b = _random_batch(rng, 4, 3, 2), _random_batch(rng, 3, 3, 2)
    new, loss = net.composite_step(params, [(a, 1.0), (b, 0.5)], lr=0.1)
    la, ga = net.loss_and_grad(params, a)
    lb, gb = net.loss_and_grad(params, b)
    assert loss == pytest.approx(la + 0.5 * lb)
    assert np.allclose(new.W1, params.W1 - 0.1 * (ga.W1 + 0.5 * gb.W1))
    assert net.composite_step(params, [], lr=0.1)[0] is params


def test_step_decreases_loss_on_separable_batch():
    params = net.init_params(2, 8, 2, seed=4)
    batch = Batch.unweighted(np.array([[2.0, 0.0], [1.5, 0.5], [-2.0, 0.0], [-1.5, -0.5]]),
                             np.array([0, 0, 1, 1]))
    new, before = net.sgd_step(params, batch, 0.1)
    after = net.weighted_ce(net.forward(new, batch.features), batch.labels, batch.weights)
    assert after < before


def test_ema_teacher_endpoints_and_scalar_case():
    teacher = ModelParams(W1=np.ones((1, 1)), b1=np.ones(1), W2=np.ones((1, 1)), b2=np.ones(1))
    student = teacher.map(np.zeros_like)
    assert net.ema_update_teacher(teacher, student, 1.0).equals(teacher)
    assert net.ema_update_teacher(teacher, student, 0.0).equals(student)
    assert net.ema_update_teacher(teacher, student, 0.95).W1[0, 0] == pytest.approx(0.95)


@pytest.mark.parametrize("k", [1, 7, 50, 100])
def test_ema_teacher_closed_form(k):
    t0 = net.init_params(3, 4, 2, seed=0)
    s = net.init_params(3, 4, 2, seed=1)
    alpha = 0.9
    teacher = t0
    for _ in range(k):
        teacher = net.ema_update_teacher(teacher, s, alpha)
    expected = t0.map(lambda a, b: alpha ** k * a + (1 - alpha ** k) * b, s)
    for got, want in zip(teacher.arrays().values(), expected.arrays().values()):
        assert np.allclose(got, want, atol=1e-12, rtol=0)


def test_ema_teacher_rejects_mismatched_shapes():
    with pytest.raises(ParameterError):
        net.ema_update_teacher(net.init_params(3, 4, 2, 0), net.init_params(3, 5, 2, 0), 0.5)


def _dataset(features, labels, k):
    return Dataset(features=features, given_labels=labels, true_labels=labels, num_classes=k, split_tag="test")


def test_evaluate_perfect_and_inverted_models():
    # the model predicts class 0 for positive x, class 1 otherwise
    params = ModelParams(W1=np.array([[1.0, -1.0]]), b1=np.zeros(2),
                         W2=np.array([[1.0, 0.0], [0.0, 1.0]]), b2=np.zeros(2))
    x = np.array([[1.0], [2.0], [-1.0], [-3.0]])
    assert net.evaluate(params, _dataset(x, np.array([0, 0, 1, 1]), 2)) == 1.0
    assert net.evaluate(params, _dataset(x, np.array([1, 1, 0, 0]), 2)) == 0.0


def test_evaluate_is_permutation_invariant(rng):
    ds = generate_clusters(3, 4, 20, 1.0, seed=2)
    params = net.init_params(4, 5, 3, seed=0)
    perm = rng.permutation(ds.num_samples)
    shuffled = _dataset(ds.features[perm], ds.true_labels[perm], 3)
    assert net.evaluate(params, ds) == net.evaluate(params, shuffled)


def test_ties_go_to_the_lowest_class():
    assert np.all(net.predict(_zero_params(), np.ones((3, 3))) == 0)


def test_training_reaches_high_accuracy_on_separable_clusters():
    train = generate_clusters(5, 8, 60, 0.5, seed=1)
    test = generate_clusters(5, 8, 30, 0.5, seed=1)
    params = net.init_params(8, 32, 5, seed=0)
    order_rng = np.random.default_rng(0)
    for _ in range(50):
        order = order_rng.permutation(train.num_samples)
        for start in range(0, order.size, 32):
            idx = order[start:start + 32]
            params, _ = net.sgd_step(params, Batch.unweighted(train.features[idx], train.true_labels[idx]), 0.1)
    assert net.evaluate(params, test) >= 0.98


def test_checkpoint_round_trip(tmp_path):
    params = net.init_params(3, 4, 2, seed=8)
    net.save_checkpoint(params, tmp_path / "ckpt" / "a.json")
    assert net.load_checkpoint(tmp_path / "ckpt" / "a.json").equals(params)


def test_checkpoint_rejects_foreign_documents(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else", "version": 1}', encoding="utf-8")
    with pytest.raises(RunStoreError):
        net.load_checkpoint(path)
