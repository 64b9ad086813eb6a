import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from libreface_lab.errors import ConfigError, NumericError, ShapeError, UsageError
from libreface_lab.losses import mse_task_loss
from libreface_lab.tensor import (
    Dense,
    NetworkSpec,
    OptimizerState,
    ReLU,
    Sigmoid,
    Softmax,
    adamw_step,
    backward,
    forward,
    grad_check,
    init_network,
    log_softmax,
    mlp,
    numeric_gradient,
    sigmoid,
    softmax,
)


def quad(out):
    return float(0.5 * np.sum(out ** 2)), out


def test_init_is_deterministic_per_seed():
    spec = NetworkSpec((Dense(3, 2),), role="classifier")
    a, b = init_network(spec, 7), init_network(spec, 7)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = init_network(spec, 8)
    assert not np.array_equal(a["0.weight"], c["0.weight"])


def test_biases_start_at_zero():
    params = init_network(NetworkSpec((Dense(4, 4),), role="classifier"), 99)
    assert np.all(params["0.bias"] == 0.0)


def test_he_scale_of_wide_layer():
    w = init_network(NetworkSpec((Dense(1000, 10),), role="classifier"), 1)["0.weight"]
    target = math.sqrt(2 / 1000)
    assert abs(w.std(ddof=1) - target) / target < 0.1


def test_identity_dense_passes_input_through():
    spec = NetworkSpec((Dense(2, 2),), role="classifier")
    out, _ = forward({"0.weight": np.eye(2), "0.bias": np.zeros(2)}, spec, np.array([1.0, 2.0]))
    np.testing.assert_array_equal(out, [1.0, 2.0])


def test_relu_forward():
    spec = NetworkSpec((Dense(3, 3), ReLU()), role="classifier")
    out, _ = forward({"0.weight": np.eye(3), "0.bias": np.zeros(3)}, spec, np.array([-1.0, 0.0, 3.0]))
    np.testing.assert_array_equal(out, [0.0, 0.0, 3.0])


def test_affine_by_hand():
    spec = NetworkSpec((Dense(2, 1),), role="classifier")
    out, _ = forward({"0.weight": np.array([[1.0], [1.0]]), "0.bias": np.array([0.5])}, spec, np.array([2.0, 3.0]))
    assert out.tolist() == pytest.approx([5.5])


def test_forward_rejects_wrong_width():
    spec = NetworkSpec((Dense(2, 1),), role="classifier")
    with pytest.raises(ShapeError):
        forward(init_network(spec, 0), spec, np.zeros(3))


def test_forward_flags_non_finite_output():
    spec = NetworkSpec((Dense(1, 1),), role="classifier")
    with pytest.raises(NumericError):
        forward({"0.weight": np.array([[np.inf]]), "0.bias": np.zeros(1)}, spec, np.array([1.0]))


def test_broken_dimension_chain_is_a_config_error():
    with pytest.raises(ConfigError):
        NetworkSpec((Dense(2, 3), ReLU(), Dense(4, 1)), role="classifier")


def test_zero_output_grad_gives_zero_gradients(rng):
    spec = mlp([3, 5, 2], role="classifier")
    params = init_network(spec, 0)
    out, tape = forward(params, spec, rng.standard_normal((4, 3)), record=True)
    grads, gx = backward(tape, np.zeros_like(out))
    assert all(not np.any(g) for g in grads.values())
    assert not np.any(gx)


def test_product_rule_on_scalar_dense():
    spec = NetworkSpec((Dense(1, 1, bias=False),), role="classifier")
    out, tape = forward({"0.weight": np.array([[3.0]])}, spec, np.array([2.0]), record=True)
    grads, gx = backward(tape, np.ones_like(out))
    assert grads["0.weight"][0, 0] == 2.0
    assert gx.tolist() == [3.0]


def test_tape_is_single_use(rng):
    spec = mlp([2, 2], role="classifier")
    out, tape = forward(init_network(spec, 0), spec, rng.standard_normal((1, 2)), record=True)
    backward(tape, np.ones_like(out))
    with pytest.raises(UsageError):
        backward(tape, np.ones_like(out))


def test_backward_needs_a_tape(rng):
    spec = mlp([2, 2], role="classifier")
    out, tape = forward(init_network(spec, 0), spec, rng.standard_normal((1, 2)))
    assert tape is None


def test_three_layer_network_matches_finite_differences(rng):
    spec = NetworkSpec((Dense(4, 6), Sigmoid(), Dense(6, 5), Softmax(), Dense(5, 3)), role="classifier")
    params = init_network(spec, 3)
    assert grad_check(spec, params, quad, rng.standard_normal((2, 4))) < 1e-5


def test_quadratic_on_dense_is_near_exact(rng):
    spec = NetworkSpec((Dense(2, 2),), role="classifier")
    assert grad_check(spec, init_network(spec, 0), quad, rng.standard_normal((3, 2))) < 1e-6


def test_constant_loss_has_zero_gradients(rng):
    spec = mlp([3, 4, 2], role="classifier")
    params = init_network(spec, 0)

    def const(out):
        return 1.0, np.zeros_like(out)

    out, tape = forward(params, spec, rng.standard_normal((2, 3)), record=True)
    grads, _ = backward(tape, const(out)[1])
    assert all(not np.any(g) for g in grads.values())
    num = numeric_gradient(lambda w: const(forward({**params, "0.weight": w}, spec, np.ones((1, 3)))[0])[0],
                           params["0.weight"])
    assert not np.any(num)
    assert grad_check(spec, params, const, rng.standard_normal((2, 3))) == 0.0


def test_grad_check_rejects_bad_eps():
    spec = mlp([2, 2], role="classifier")
    with pytest.raises(ConfigError):
        grad_check(spec, init_network(spec, 0), quad, np.ones((1, 2)), eps=0.0)


def test_adamw_zero_grad_no_decay_is_fixed_point():
    p = {"w": np.array([1.0, -2.0])}
    new, _ = adamw_step(OptimizerState(learning_rate=0.1, weight_decay=0.0), p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adamw_decoupled_decay_step():
    new, _ = adamw_step(OptimizerState(), {"w": np.array([1.0])}, {"w": np.array([0.0])})
    assert new["w"][0] == pytest.approx(0.999999997, abs=1e-15)


def test_adamw_first_step_moves_by_lr():
    new, state = adamw_step(OptimizerState(learning_rate=0.1, weight_decay=0.0), {"w": np.array([0.0])},
                            {"w": np.array([1.0])})
    assert new["w"][0] == pytest.approx(-0.1, rel=1e-6)
    assert state.step == 1


def test_adamw_does_not_mutate_inputs():
    p = {"w": np.array([1.0])}
    adamw_step(OptimizerState(learning_rate=0.1), p, {"w": np.array([1.0])})
    assert p["w"][0] == 1.0


def test_adamw_names_the_bad_parameter():
    with pytest.raises(NumericError, match="layer.w"):
        adamw_step(OptimizerState(), {"layer.w": np.zeros(1)}, {"layer.w": np.array([np.nan])})


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=8))
def test_softmax_is_a_distribution(z):
    p = softmax(np.array(z))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.exp(log_softmax(np.array(z))), p, atol=1e-12)


@given(st.floats(-800, 800))
def test_sigmoid_stable_and_bounded(z):
    s = sigmoid(np.array([z]))[0]
    assert 0.0 <= s <= 1.0
    assert sigmoid(np.array([-z]))[0] == pytest.approx(1.0 - s, abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_random_relu_nets_pass_grad_check(seed):
    rng = np.random.default_rng(seed)
    spec = mlp([3, 4, 2], role="classifier")
    params = init_network(spec, seed)
    x = rng.standard_normal((2, 3))
    # keep probes off the relu kink
    pre = x @ params["0.weight"] + params["0.bias"]
    params["0.bias"] = params["0.bias"] + np.where(np.abs(pre).min(axis=0) < 1e-3, 0.1, 0.0)
    assert grad_check(spec, params, quad, x) < 1e-5
