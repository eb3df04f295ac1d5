import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivecausal.harness.gradchecks import OP_CASES, check_op
from drivecausal.numerics import (SGD, LayerNorm, Linear, NonDeterministicError, NonFiniteError,
                                  ShapeError, Tensor, grad_check, no_grad, ops)
from drivecausal.numerics.gradcheck import relative_error
from drivecausal.numerics.optim import grad_norm


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def test_non_finite_rejected_at_construction():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        Tensor([np.inf])


def test_broadcast_rules():
    a = leaf(np.ones((3, 4)))
    assert ops.add(a, leaf(np.ones((1, 4)))).shape == (3, 4)
    with pytest.raises(ShapeError):
        ops.add(a, leaf(np.ones(4)))        # rank must match
    with pytest.raises(ShapeError):
        ops.mul(a, leaf(np.ones((2, 4))))


def test_broadcast_gradient_sums_over_expanded_axis():
    a, b = leaf(np.ones((3, 4))), leaf(np.ones((1, 4)))
    ops.sum(ops.mul(a, b)).backward()
    np.testing.assert_array_equal(b.grad, np.full((1, 4), 3.0))


def test_gradient_accumulates_over_reuse():
    x = leaf([2.0])
    ops.sum(ops.add(ops.mul(x, x), x)).backward()
    np.testing.assert_allclose(x.grad, [5.0])


def test_getitem_repeated_index_accumulates():
    x = leaf(np.arange(3.0))
    ops.sum(ops.getitem(x, np.array([0, 0, 2]))).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


def test_no_grad_records_nothing():
    x = leaf([1.0, 2.0])
    with no_grad():
        y = ops.mul(x, x)
    assert not y.requires_grad


def test_backward_needs_scalar_or_seed():
    x = leaf([1.0, 2.0])
    with pytest.raises(ValueError):
        ops.mul(x, x).backward()


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ops.matmul(leaf(np.ones((2, 3))), leaf(np.ones((2, 3))))


def test_softmax_matches_direct_formula():
    x = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    e = np.exp(x)
    np.testing.assert_allclose(ops.softmax(leaf(x)).data, e / e.sum(axis=1, keepdims=True))
    np.testing.assert_allclose(ops.log_softmax(leaf(x)).data,
                               np.log(e / e.sum(axis=1, keepdims=True)))


def test_softmax_is_shift_invariant_and_stable():
    x = np.array([1000.0, 1001.0, 1002.0])
    np.testing.assert_allclose(ops.softmax(leaf(x)).data, ops.softmax(leaf(x - 1000)).data)


def test_layer_norm_matches_direct_formula():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 5))
    ln = LayerNorm(5)
    expect = (x - x.mean(1, keepdims=True)) / np.sqrt(x.var(1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(ln(leaf(x)).data, expect)


def test_conv3d_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 3, 5, 5, 2))
    w = rng.normal(size=(2, 3, 3, 2, 4))
    b = rng.normal(size=4)
    out = ops.conv3d(leaf(x), leaf(w), leaf(b), stride=(1, 2, 2), padding=(0, 1, 1)).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((1, 2, 3, 3, 4))
    for t in range(2):
        for i in range(3):
            for j in range(3):
                patch = xp[0, t:t + 2, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
                ref[0, t, i, j] = np.tensordot(patch, w, axes=4) + b
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_cross_entropy_masks_positions():
    logits = leaf(np.zeros((1, 2, 4)))
    loss = ops.cross_entropy(logits, np.array([[1, 2]]), np.array([[1.0, 0.0]]))
    assert float(loss.data) == pytest.approx(np.log(4))


def test_kl_rejects_non_distributions():
    q = ops.softmax(leaf(np.zeros((1, 3))))
    with pytest.raises(ValueError):
        ops.kl_div(np.array([[0.5, 0.6, 0.0]]), q)


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_operation_gradients(name):
    for seed in range(3):
        res = check_op(name, seed)
        assert res.passed, f"{name} seed {seed}: {res.report}"


def test_gradcheck_negative_control_detects_corrupted_gradient():
    x = leaf(np.linspace(-1, 1, 5))
    report = grad_check(lambda: ops.sum(ops.square(x)), {"x": x},
                        grad_hook=lambda name, g: g * 1.01)
    assert not report.passed


def test_gradcheck_rejects_nondeterministic_function():
    rng = np.random.default_rng(0)
    x = leaf([1.0])
    with pytest.raises(NonDeterministicError):
        grad_check(lambda: ops.sum(ops.scale(x, float(rng.random()))), {"x": x})


def test_relative_error_is_scaled_by_magnitude():
    assert relative_error(np.array([100.0]), np.array([100.01])) == pytest.approx(1e-4, rel=1e-3)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
    # a zero gradient against finite-difference round-off is not an error
    assert relative_error(np.zeros(1), np.array([1.8e-10])) < 1e-4
    assert relative_error(np.zeros(1), np.array([1e-6])) == pytest.approx(0.1)


def test_sgd_step_and_clipping():
    p = leaf([1.0, 1.0])
    p.grad = np.array([3.0, 4.0])
    opt = SGD({"p": p}, lr=0.1, clip_norm=1.0)
    norm = opt.step()
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(p.data, [1 - 0.1 * 0.6, 1 - 0.1 * 0.8])
    assert p.grad is None and opt.state.step_count == 1


def test_sgd_lr_scale_multiplies_named_parameters():
    p, q = leaf([1.0]), leaf([1.0])
    p.grad, q.grad = np.array([1.0]), np.array([1.0])
    SGD({"p": p, "q": q}, lr=0.1, lr_scale={"q": 10.0}).step()
    np.testing.assert_allclose([p.data[0], q.data[0]], [0.9, 0.0])
    with pytest.raises(KeyError):
        SGD({"p": p}, lr=0.1, lr_scale={"nope": 2.0})


def test_sgd_requires_gradients():
    p = leaf([1.0])
    with pytest.raises(RuntimeError):
        SGD({"p": p}, lr=0.1).step()


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_linear_forward_matches_numpy(n_in, n_out, seed):
    rng = np.random.default_rng(seed)
    lin = Linear(rng, n_in, n_out)
    x = rng.normal(size=(2, n_in))
    np.testing.assert_allclose(lin(leaf(x)).data, x @ lin.weight.data + lin.bias.data)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.integers(0, 100))
def test_softmax_sums_to_one(values, shift):
    s = ops.softmax(leaf(np.array(values) + shift)).data
    assert s.sum() == pytest.approx(1.0)
    assert np.all(s >= 0)


def test_grad_norm():
    a = leaf([3.0])
    a.grad = np.array([3.0])
    b = leaf([4.0])
    b.grad = np.array([4.0])
    assert grad_norm({"a": a, "b": b}) == pytest.approx(5.0)
