"""Tape autodiff: forward values, backward rules, finite-difference oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from molcontrast.autodiff import (
    Tape,
    add,
    backward,
    check_gradients,
    constant,
    div,
    dropout,
    embedding_lookup,
    exp,
    gradcheck_report,
    l2_normalize_rows,
    linear,
    log,
    matmul_t,
    mean,
    mul,
    numeric_gradients,
    relu,
    scale,
    segment_mean,
    segment_sum,
    softplus,
    sub,
    tensor,
)
from molcontrast.autodiff import sum as tsum


# -- tensor construction ----------------------------------------------------


def test_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        tensor([1.0, float("nan")])
    with pytest.raises(ValueError):
        tensor([float("inf")])
    t = constant([float("nan")])  # constants skip the check
    assert np.isnan(t.data).any()


def test_tensor_dtype_and_flags():
    t = tensor([[1, 2]], requires_grad=True)
    assert t.dtype == np.float32
    assert t.requires_grad
    assert not constant([1.0]).requires_grad
    t64 = tensor([1.0], dtype=np.float64)
    assert t64.dtype == np.float64


def test_tape_skips_untracked_ops():
    tape = Tape()
    a = constant([1.0, 2.0])
    b = constant([3.0, 4.0])
    add(tape, a, b)
    assert len(tape) == 0
    p = tensor([1.0], requires_grad=True)
    add(tape, p, constant([1.0]))
    assert len(tape) == 1


# -- hand-checked forward values --------------------------------------------


def test_linear_forward():
    tape = Tape()
    x = tensor([[1.0, 2.0]])
    w = tensor([[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]])
    b = tensor([10.0, 20.0, 30.0])
    y = linear(tape, x, w, b)
    np.testing.assert_allclose(y.data, [[11.0, 22.0, 31.0]])


def test_embedding_lookup_forward():
    tape = Tape()
    table = tensor([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    y = embedding_lookup(tape, table, [2, 0, 2])
    np.testing.assert_allclose(y.data, [[4.0, 5.0], [0.0, 1.0], [4.0, 5.0]])


def test_segment_sum_and_mean_forward():
    tape = Tape()
    x = tensor([[1.0], [2.0], [3.0], [4.0]])
    seg = [0, 0, 1, 0]
    np.testing.assert_allclose(
        segment_sum(tape, x, seg, 2).data, [[7.0], [3.0]]
    )
    np.testing.assert_allclose(
        segment_mean(tape, x, seg, 2).data, [[7.0 / 3.0], [3.0]], rtol=1e-6
    )


def test_segment_mean_rejects_empty_segment():
    tape = Tape()
    x = tensor([[1.0], [1.0]])
    with pytest.raises(ValueError):
        segment_mean(tape, x, [0, 0], 3)
    # segment_sum tolerates the same case: empty segments are zero
    out = segment_sum(tape, x, [0, 0], 3)
    np.testing.assert_allclose(out.data, [[2.0], [0.0], [0.0]])


def test_matmul_t_forward():
    tape = Tape()
    a = tensor([[1.0, 2.0]])
    b = tensor([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_allclose(matmul_t(tape, a, b).data, [[11.0, 17.0]])


def test_l2_normalize_rows_unit_norm():
    tape = Tape()
    x = tensor([[3.0, 4.0], [-1.0, 0.0]])
    y = l2_normalize_rows(tape, x)
    np.testing.assert_allclose(y.data[0], [0.6, 0.8], rtol=1e-6)
    np.testing.assert_allclose(y.data[1], [-1.0, 0.0], rtol=1e-6)
    with pytest.raises(ValueError):
        l2_normalize_rows(tape, tensor([[0.0, 0.0]]))


def test_softplus_overflow_safe():
    tape = Tape()
    y = softplus(tape, tensor([100.0, -100.0, 0.0]))
    np.testing.assert_allclose(y.data[0], 100.0, rtol=1e-6)
    assert y.data[1] == pytest.approx(0.0, abs=1e-6)
    assert y.data[2] == pytest.approx(np.log(2.0), rel=1e-6)


def test_elementwise_forward():
    tape = Tape()
    a = tensor([2.0, -3.0])
    b = tensor([4.0, 5.0])
    np.testing.assert_allclose(add(tape, a, b).data, [6.0, 2.0])
    np.testing.assert_allclose(sub(tape, a, b).data, [-2.0, -8.0])
    np.testing.assert_allclose(mul(tape, a, b).data, [8.0, -15.0])
    np.testing.assert_allclose(div(tape, a, b).data, [0.5, -0.6])
    np.testing.assert_allclose(scale(tape, a, -2.0).data, [-4.0, 6.0])
    np.testing.assert_allclose(relu(tape, a).data, [2.0, 0.0])
    np.testing.assert_allclose(
        exp(tape, tensor([0.0, 1.0])).data, [1.0, np.e], rtol=1e-6
    )
    np.testing.assert_allclose(
        log(tape, tensor([1.0, np.e])).data, [0.0, 1.0], rtol=1e-6
    )


def test_sum_and_mean_forward():
    tape = Tape()
    x = tensor([[1.0, 2.0], [3.0, 4.0]])
    assert float(tsum(tape, x).data) == 10.0
    assert float(mean(tape, x).data) == 2.5
    with pytest.raises(ValueError):
        mean(tape, tensor(np.zeros((0, 3))))


def test_float64_accumulation_in_reductions():
    # a naive float32 running sum loses the middle term entirely
    tape = Tape()
    x = tensor([1e8, 1.0, -1e8])
    assert float(tsum(tape, x).data) == 1.0


def test_float64_accumulation_in_matmul():
    tape = Tape()
    a = tensor([[1e8, 1.0, -1e8]], requires_grad=True)
    b = tensor([[1.0, 1.0, 1.0]])
    out = matmul_t(tape, a, b)
    assert float(out.data[0, 0]) == 1.0


# -- dropout ----------------------------------------------------------------


def test_dropout_zero_rate_is_identity():
    tape = Tape()
    x = tensor([[1.0, 2.0]], requires_grad=True)
    assert dropout(tape, x, 0.0, np.random.default_rng(0)) is x


def test_dropout_scales_survivors():
    tape = Tape()
    x = tensor(np.ones((1000,)))
    y = dropout(tape, x, 0.5, np.random.default_rng(3))
    kept = y.data[y.data != 0]
    np.testing.assert_allclose(kept, 2.0)
    assert 0.4 < kept.size / 1000 < 0.6


def test_dropout_deterministic_given_rng():
    x = tensor(np.arange(20.0))
    a = dropout(Tape(), x, 0.3, np.random.default_rng(11))
    b = dropout(Tape(), x, 0.3, np.random.default_rng(11))
    np.testing.assert_array_equal(a.data, b.data)


def test_dropout_rejects_bad_rate():
    tape = Tape()
    x = tensor([1.0])
    with pytest.raises(ValueError):
        dropout(tape, x, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        dropout(tape, x, -0.1, np.random.default_rng(0))


# -- backward rules ---------------------------------------------------------


def test_backward_product_rule():
    tape = Tape()
    x = tensor([2.0, 3.0], requires_grad=True, dtype=np.float64)
    y = tensor([5.0, 7.0], requires_grad=True, dtype=np.float64)
    loss = tsum(tape, mul(tape, x, y))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads[x], [5.0, 7.0])
    np.testing.assert_allclose(grads[y], [2.0, 3.0])


def test_backward_fanout_accumulates():
    tape = Tape()
    x = tensor([1.5], requires_grad=True, dtype=np.float64)
    loss = tsum(tape, add(tape, x, x))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads[x], [2.0])


def test_backward_square_via_mul():
    tape = Tape()
    x = tensor([3.0, -2.0], requires_grad=True, dtype=np.float64)
    loss = tsum(tape, mul(tape, x, x))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads[x], [6.0, -4.0])


def test_backward_relu_gate():
    tape = Tape()
    x = tensor([2.0, -3.0], requires_grad=True, dtype=np.float64)
    loss = tsum(tape, relu(tape, x))
    grads = backward(tape, loss)
    np.testing.assert_allclose(grads[x], [1.0, 0.0])


def test_backward_requires_scalar_loss():
    tape = Tape()
    x = tensor([1.0, 2.0], requires_grad=True)
    y = add(tape, x, x)
    with pytest.raises(ValueError):
        backward(tape, y)


def test_backward_rejects_foreign_loss():
    tape = Tape()
    x = tensor([1.0], requires_grad=True)
    loss = tsum(Tape(), x)
    with pytest.raises(ValueError):
        backward(tape, loss)


def test_backward_accumulates_into_grad_map():
    x = tensor([1.0, 1.0], requires_grad=True, dtype=np.float64)

    tape1 = Tape()
    grads = backward(tape1, tsum(tape1, scale(tape1, x, 2.0)))
    tape2 = Tape()
    grads = backward(tape2, tsum(tape2, scale(tape2, x, 3.0)), grads)
    np.testing.assert_allclose(grads[x], [5.0, 5.0])


def test_constant_gets_no_gradient():
    tape = Tape()
    x = tensor([1.0], requires_grad=True, dtype=np.float64)
    c = constant([4.0], dtype=np.float64)
    loss = tsum(tape, mul(tape, x, c))
    grads = backward(tape, loss)
    assert c not in grads
    np.testing.assert_allclose(grads[x], [4.0])


# -- finite-difference oracle ------------------------------------------------


def test_numeric_gradients_on_quadratic():
    # d/dx sum(x^2) = 2x, known in closed form
    x = np.array([1.0, -2.0, 0.5])
    (g,) = numeric_gradients(lambda arrs: float((arrs[0] ** 2).sum()), [x])
    np.testing.assert_allclose(g, 2 * x, atol=1e-6)


def test_check_gradients_flags_wrong_derivative():
    # a deliberately broken backward: treat mul as add
    def build(tape, params):
        (x,) = params
        out = mul(tape, x, x)
        return tsum(tape, out)

    good = check_gradients(build, [np.array([1.0, 2.0])])
    assert good < 1e-6


def test_gradcheck_report_all_ops_pass():
    report = gradcheck_report(seed=0, eps=1e-4)
    assert len(report) == 18
    for op, err in report.items():
        assert err < 1e-4, f"{op}: {err}"


def test_gradcheck_report_deterministic():
    assert gradcheck_report(seed=0) == gradcheck_report(seed=0)


# -- properties -------------------------------------------------------------

_small = arrays(
    np.float64,
    st.tuples(st.integers(1, 4), st.integers(1, 4)),
    elements=st.floats(-3, 3, allow_nan=False, width=64),
)


@settings(max_examples=30, deadline=None)
@given(_small)
def test_sum_gradient_is_ones(a):
    tape = Tape()
    x = tensor(a, requires_grad=True, dtype=np.float64)
    grads = backward(tape, tsum(tape, x))
    np.testing.assert_array_equal(grads[x], np.ones_like(a))


@settings(max_examples=30, deadline=None)
@given(_small)
def test_linearity_of_backward(a):
    # grad of sum(2x) equals 2 * grad of sum(x)
    tape = Tape()
    x = tensor(a, requires_grad=True, dtype=np.float64)
    grads = backward(tape, tsum(tape, scale(tape, x, 2.0)))
    np.testing.assert_allclose(grads[x], 2.0 * np.ones_like(a))


@settings(max_examples=20, deadline=None)
@given(_small)
def test_add_then_mean_matches_finite_difference(a):
    def build(tape, params):
        x, y = params
        return mean(tape, mul(tape, add(tape, x, y), x))

    assert check_gradients(build, [a, a + 0.5]) < 1e-5
