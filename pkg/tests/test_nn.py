import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gnnfdia.nn import (
    DenseParams,
    Optimizer,
    activation,
    bce_grad,
    binary_cross_entropy,
    dense_backward,
    dense_forward,
    elu,
    finite_difference_check,
    init_dense,
    load_checkpoint,
    relu,
    save_checkpoint,
    sigmoid,
)


def test_bce_example():
    assert binary_cross_entropy([1, 0], [0.9, 0.1]) == pytest.approx(-np.log(0.9), abs=1e-12)
    assert binary_cross_entropy([1, 0], [0.9, 0.1]) == pytest.approx(0.10536, abs=1e-5)


def test_bce_clipped_and_finite():
    assert np.isfinite(binary_cross_entropy([1, 0], [0.0, 1.0]))
    assert binary_cross_entropy([1, 0], [0.0, 1.0]) == pytest.approx(-np.log(1e-7), rel=1e-6)
    np.testing.assert_array_equal(bce_grad([1, 0], [0.0, 1.0]), [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.01, 0.99)), min_size=1, max_size=20))
def test_bce_grad_matches_difference(pairs):
    y = np.array([float(a) for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    g = bce_grad(y, p)
    for i in range(len(p)):
        up, down = p.copy(), p.copy()
        up[i] += 1e-7
        down[i] -= 1e-7
        num = (binary_cross_entropy(y, up) - binary_cross_entropy(y, down)) / 2e-7
        assert g[i] == pytest.approx(num, rel=1e-4, abs=1e-7)


def test_sigmoid_stable_at_extremes():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(float, 8, elements=st.floats(-30, 30)))
def test_activation_derivatives(x):
    for name in ("relu", "elu", "tanh", "sigmoid", "linear"):
        f, d = activation(name)
        keep = np.abs(x) > 1e-4  # stay off the kinks
        num = (f(x + 1e-7) - f(x - 1e-7)) / 2e-7
        np.testing.assert_allclose(d(x, f(x))[keep], num[keep], rtol=1e-4, atol=1e-6)


def test_activation_values():
    np.testing.assert_array_equal(relu(np.array([-1.0, 2.0])), [0.0, 2.0])
    np.testing.assert_allclose(elu(np.array([-1.0, 2.0])), [np.exp(-1) - 1, 2.0])
    with pytest.raises(ValueError):
        activation("gelu")


def test_dense_shapes_and_validation():
    p = init_dense(np.random.default_rng(0), 3, 4)
    assert p.size == 16 and np.all(p.bias == 0)
    assert np.abs(p.weights).max() <= np.sqrt(6 / 7)
    assert dense_forward(p, np.ones((5, 3))).shape == (5, 4)
    with pytest.raises(ValueError):
        dense_forward(p, np.ones((5, 2)))
    with pytest.raises(ValueError):
        DenseParams(np.ones((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        DenseParams(np.full((1, 1), np.nan), np.ones(1))


def test_dense_backward_gradcheck():
    rng = np.random.default_rng(1)
    p = init_dense(rng, 4, 3)
    x = rng.standard_normal((6, 4))
    w = rng.standard_normal((6, 3))

    def loss():
        return float(np.sum(w * np.tanh(dense_forward(p, x))))

    out = dense_forward(p, x)
    dw, db, dx = dense_backward(p, x, w * (1 - np.tanh(out) ** 2))
    rep = finite_difference_check(loss, [p.weights, p.bias, x], [dw, db, dx])
    assert rep.passed, rep


def test_gradcheck_detects_wrong_gradient():
    a = np.array([1.0, 2.0])
    rep = finite_difference_check(lambda: float(np.sum(a ** 2)), [a], [np.array([2.0, 5.0])])
    assert not rep.passed and rep.checked == 2


@pytest.mark.parametrize("kind", Optimizer.KINDS)
def test_optimizers_minimize_quadratic(kind):
    x = np.array([3.0, -2.0])
    opt = Optimizer(kind, lr=0.05)
    for _ in range(2000):
        opt.step([x], [2 * x])
    assert np.abs(x).max() < 0.05


def test_adam_first_step_size():
    x = np.array([1.0])
    Optimizer("adam", lr=0.1).step([x], [np.array([123.0])])
    assert x[0] == pytest.approx(0.9, abs=1e-6)


def test_optimizer_errors():
    with pytest.raises(ValueError):
        Optimizer("lbfgs")
    with pytest.raises(ValueError):
        Optimizer("sgd", lr=0)
    with pytest.raises(ValueError):
        Optimizer("sgd").step([np.zeros(2)], [np.zeros(3)])


def test_checkpoint_roundtrip(tmp_path):
    arrays_in = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([0.5]), "s": np.array(2.0)}
    path = save_checkpoint(tmp_path / "m", {"model": "x"}, arrays_in)
    assert path.suffix == ".json" and (tmp_path / "m.bin").stat().st_size == 8 * 8
    manifest, back = load_checkpoint(path)
    assert manifest == {"model": "x"}
    for k, v in arrays_in.items():
        np.testing.assert_array_equal(back[k], v)
