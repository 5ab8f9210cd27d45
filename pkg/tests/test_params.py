import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colearn.errors import CheckpointError, DegenerateReferenceError, InvalidInputError
from colearn.params import (
    Batch, ModelSpec, average, checkpoint_bytes, empirical_loss, forward, gradient,
    init_params, load_checkpoint, logits, params_from_checkpoint_bytes, rel_change,
    save_checkpoint, sgd_step,
)

from oracles import (
    finite_difference_gradient, gradient_rel_error, near_relu_kink, random_instance, scalar_forward,
    scalar_loss,
)


def test_param_count():
    assert ModelSpec.logistic(20, 5).param_count == 20 * 5 + 5
    assert ModelSpec.mlp(2, [16, 16], 2).param_count == (2 * 16 + 16) + (16 * 16 + 16) + (16 * 2 + 2)


@pytest.mark.parametrize("widths", [(3,), (0, 2), (2, 0)])
def test_bad_widths(widths):
    with pytest.raises(InvalidInputError):
        ModelSpec("mlp", widths)


def test_logistic_needs_one_layer():
    with pytest.raises(InvalidInputError):
        ModelSpec("logistic-regression", (2, 3, 2))


def test_zero_params_give_uniform_probabilities():
    spec = ModelSpec.mlp(4, [5], 7)
    p = forward(spec, np.zeros(spec.param_count), np.random.default_rng(0).standard_normal((6, 4)))
    np.testing.assert_array_equal(p, np.full((6, 7), 1 / 7))


def test_softmax_saturation():
    spec = ModelSpec.logistic(1, 2)
    # W = [[50, -50]], b = 0, x = 1 -> logits (+50, -50)
    p = forward(spec, [50.0, -50.0, 0.0, 0.0], [[1.0]])
    assert abs(p[0, 0] - 1) < 1e-9 and abs(p[0, 1]) < 1e-9


def test_mlp_forward_matches_scalar_oracle():
    spec = ModelSpec.mlp(2, [3], 2, activation="relu")
    # hand-set weights: W1 (2x3), b1, W2 (3x2), b2
    params = [0.5, -1.0, 0.25,
              1.5, 0.75, -0.5,
              0.1, 0.0, -0.2,
              1.0, -1.0,
              0.5, 0.5,
              -2.0, 1.0,
              0.3, -0.3]
    x = [0.8, -0.4]
    expected = scalar_forward(spec, params, x)
    np.testing.assert_allclose(forward(spec, params, [x])[0], expected, rtol=0, atol=1e-12)


def test_forward_dimension_mismatch():
    spec = ModelSpec.logistic(3, 2)
    with pytest.raises(InvalidInputError):
        forward(spec, np.zeros(spec.param_count), np.zeros((2, 4)))
    with pytest.raises(InvalidInputError):
        forward(spec, np.zeros(spec.param_count + 1), np.zeros((2, 3)))


def test_loss_zero_when_certain():
    spec = ModelSpec.logistic(1, 2)
    params = [1000.0, -1000.0, 0.0, 0.0]
    batch = Batch([[1.0], [2.0]], [0, 0])
    assert empirical_loss(spec, params, batch) == 0.0


def test_loss_uniform_is_log_classes():
    spec = ModelSpec.logistic(3, 10)
    batch = Batch(np.ones((4, 3)), [0, 3, 5, 9])
    assert empirical_loss(spec, np.zeros(spec.param_count), batch) == pytest.approx(math.log(10), abs=1e-12)
    assert math.log(10) == pytest.approx(2.302585, abs=1e-6)


def test_loss_matches_scalar_oracle():
    spec = ModelSpec.mlp(2, [4], 3, activation="tanh")
    rng = np.random.default_rng(3)
    params = rng.standard_normal(spec.param_count)
    x = rng.standard_normal((3, 2))
    y = np.array([2, 0, 1])
    assert empirical_loss(spec, params, Batch(x, y)) == pytest.approx(
        scalar_loss(spec, params, x, y), rel=1e-12)


def test_loss_rejects_empty_batch():
    spec = ModelSpec.logistic(2, 2)
    with pytest.raises(InvalidInputError):
        empirical_loss(spec, np.zeros(spec.param_count), Batch(np.zeros((0, 2)), np.zeros(0, int)))


def test_gradient_at_optimum_is_stationary():
    # symmetric, non-separable data; the optimum of the mean cross-entropy is W = 0, b = 0
    spec = ModelSpec.logistic(1, 2)
    batch = Batch([[1.0], [1.0], [-1.0], [-1.0]], [0, 1, 0, 1])
    assert np.linalg.norm(gradient(spec, np.zeros(spec.param_count), batch)) < 1e-8


def test_gradient_closed_form_single_sample():
    spec = ModelSpec.logistic(3, 4)
    rng = np.random.default_rng(11)
    params = rng.standard_normal(spec.param_count)
    x = rng.standard_normal(3)
    y = 2
    W = params[:12].reshape(3, 4)
    b = params[12:]
    z = x @ W + b
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    err = p - np.eye(4)[y]
    expected = np.concatenate([np.outer(x, err).ravel(), err])
    np.testing.assert_allclose(gradient(spec, params, Batch([x], [y])), expected, rtol=1e-12, atol=1e-15)


def test_gradient_matches_finite_differences_mlp():
    rng = np.random.default_rng(5)
    spec = ModelSpec.mlp(4, [6, 5], 3, activation="tanh")
    params = rng.standard_normal(spec.param_count) * 0.5
    batch = Batch(rng.standard_normal((7, 4)), rng.integers(0, 3, size=7))
    err = gradient_rel_error(gradient(spec, params, batch),
                             finite_difference_gradient(spec, params, batch))
    assert err < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_check_property(seed):
    rng = np.random.default_rng(seed)
    spec, params, batch = random_instance(rng)
    while near_relu_kink(spec, params, batch.features):
        spec, params, batch = random_instance(rng)
    err = gradient_rel_error(gradient(spec, params, batch),
                             finite_difference_gradient(spec, params, batch))
    assert err < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_softmax_rows_and_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    spec, params, batch = random_instance(rng)
    p = forward(spec, params, batch.features)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p >= 0)
    # adding a constant to every logit = shifting every output bias
    shifted = params.copy()
    shifted[-spec.classes:] += shift
    assert empirical_loss(spec, shifted, batch) == pytest.approx(
        empirical_loss(spec, params, batch), abs=1e-9)
    np.testing.assert_allclose(logits(spec, shifted, batch.features),
                               logits(spec, params, batch.features) + shift, atol=1e-9)


def test_sgd_step_examples():
    np.testing.assert_array_equal(sgd_step([1.0, 2.0], [0.0, 0.0], 0.1), [1.0, 2.0])
    np.testing.assert_allclose(sgd_step([1.0, 2.0], [10.0, -10.0], 0.01), [0.9, 2.1], rtol=0, atol=1e-15)


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=20),
       st.integers(-1000, 1000), st.integers(-7, 0))
def test_sgd_step_inverse(p_units, g_unit, lr_exp):
    # dyadic values keep p - lr*g exactly representable, so the round trip is exact
    p = np.array(p_units, dtype=float) / 8
    g = np.full_like(p, g_unit / 4)
    lr = 2.0 ** lr_exp
    np.testing.assert_array_equal(sgd_step(sgd_step(p, g, lr), g, -lr), p)


def test_sgd_step_length_mismatch():
    with pytest.raises(InvalidInputError):
        sgd_step([1.0, 2.0], [1.0], 0.1)


def test_average_examples():
    np.testing.assert_array_equal(average([np.array([1.0, 2.0]), np.array([3.0, 4.0])]), [2.0, 3.0])
    v = np.random.default_rng(0).standard_normal(9)
    assert average([v]).tobytes() == v.tobytes()
    np.testing.assert_allclose(average([v] * 7), v, rtol=0, atol=1e-12)


def test_average_errors():
    with pytest.raises(InvalidInputError):
        average([])
    with pytest.raises(InvalidInputError):
        average([np.zeros(2), np.zeros(3)])


def test_rel_change_examples():
    w = np.array([3.0, 4.0])
    assert rel_change(w, w) == 0
    assert rel_change([3.0, 9.0], [3.0, 4.0]) == 1.0
    assert rel_change(1.01 * w, w) == pytest.approx(0.01, abs=1e-12)
    assert rel_change([3.0, 9.0], [3.0, 4.0], norm="linf") == 5 / 4
    with pytest.raises(DegenerateReferenceError):
        rel_change([1.0, 1.0], [0.0, 0.0])


def test_one_step_equivalence():
    rng = np.random.default_rng(2)
    spec = ModelSpec.mlp(3, [5], 4, activation="tanh")
    start = init_params(spec, 0)
    x = rng.standard_normal((40, 3))
    y = rng.integers(0, 4, size=40)
    lr = 0.1
    local = [sgd_step(start, gradient(spec, start, Batch(x[i::5], y[i::5])), lr) for i in range(5)]
    pooled = sgd_step(start, gradient(spec, start, Batch(x, y)), lr)
    avg = average(local)
    assert np.linalg.norm(avg - pooled) / np.linalg.norm(pooled) < 1e-9


def test_init_params_glorot_bounds():
    spec = ModelSpec.mlp(10, [6], 4)
    p = init_params(spec, 3)
    (w1, b1, fi1, fo1), (w2, b2, fi2, fo2) = spec.layer_slices()
    assert np.all(np.abs(p[w1]) <= math.sqrt(6 / (fi1 + fo1)))
    assert np.all(np.abs(p[w2]) <= math.sqrt(6 / (fi2 + fo2)))
    assert not np.any(p[b1]) and not np.any(p[b2])
    np.testing.assert_array_equal(p, init_params(spec, 3))


def test_checkpoint_layout(tmp_path):
    params = np.array([1.5, -2.0, 0.1])
    blob = checkpoint_bytes(params)
    assert blob[:4] == b"CLRN"
    assert int.from_bytes(blob[4:6], "little") == 1
    assert int.from_bytes(blob[6:14], "little") == 3
    assert blob[14:] == params.astype("<f8").tobytes()
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, params)
    np.testing.assert_array_equal(load_checkpoint(path), params)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + (2).to_bytes(2, "little") + b[6:],
    lambda b: b[:-1],
    lambda b: b[:5],
])
def test_checkpoint_rejects_corruption(mutate):
    with pytest.raises(CheckpointError):
        params_from_checkpoint_bytes(mutate(checkpoint_bytes(np.arange(4.0))))
