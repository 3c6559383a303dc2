import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diagconv.convops import (
    ConvSpec,
    GroupingStrategy,
    conv_depthwise_cbyc,
    conv_depthwise_diag,
    conv_depthwise_direct,
    conv_masked,
    conv_standard,
    diagonal_blocks,
    plan_diagonalwise,
)
from diagconv.grad import (
    backward_depthwise,
    backward_diag,
    backward_masked,
    backward_standard,
    fd_check,
    sgd_step,
)
from diagconv.tensor import fill_random

from helpers import depthwise_case


def bits_zero(a):
    """True when every entry is +0.0 (bit pattern all zero)."""
    return not np.ascontiguousarray(a, dtype=np.float64).view(np.uint64).any()


def test_scalar_chain_rule():
    spec = ConvSpec.dense(1, 1, 1)
    x = fill_random((1, 1, 3, 3), 1)
    w = np.array([[1.7]])
    d = np.ones((1, 1, 3, 3))
    g = backward_standard(x, w, spec, d)
    assert np.array_equal(g.d_input, np.full_like(x, 1.7))
    assert g.d_weights[0, 0] == pytest.approx(x.sum(), abs=1e-14)


def test_standard_matches_finite_differences():
    spec = ConvSpec.dense(2, 3, 3, 1, 1)
    x = fill_random((1, 2, 5, 5), 37)
    w = fill_random(spec.weight_shape, 38)
    d = fill_random((1, 3, 5, 5), 39)
    g = backward_standard(x, w, spec, d)
    err_w = fd_check(lambda t: conv_standard(x, t.reshape(w.shape), spec), w, g.d_weights, d)
    err_x = fd_check(lambda t: conv_standard(t.reshape(x.shape), w, spec), x, g.d_input, d)
    assert err_w <= 1e-6 and err_x <= 1e-6


@pytest.mark.parametrize("strategy", ["cbyc", "direct"])
def test_depthwise_matches_finite_differences(strategy):
    spec, x, w = depthwise_case(3, 5, 3, 1, 1, seed=41, batch=1)
    d = fill_random(spec.output_shape(x.shape), 42)
    fwd = conv_depthwise_cbyc if strategy == "cbyc" else (lambda a, b, s: conv_depthwise_direct(a, b, s))
    g = backward_depthwise(x, w, spec, d, strategy)
    assert fd_check(lambda t: fwd(x, t.reshape(w.shape), spec), w, g.d_weights, d) <= 1e-6
    assert fd_check(lambda t: fwd(t.reshape(x.shape), w, spec), x, g.d_input, d) <= 1e-6


@pytest.mark.parametrize("mode", ["literal", "compact"])
def test_diag_matches_finite_differences(mode):
    spec, x, w = depthwise_case(8, 7, 3, 1, 1, seed=43, batch=1)
    d = fill_random(spec.output_shape(x.shape), 44)
    plan = plan_diagonalwise(w, spec, GroupingStrategy.by_size(4), mode)
    g = backward_diag(x, plan, spec, d)
    dw = np.concatenate([diagonal_blocks(G, 9) for G in g.d_weights]) if mode == "literal" \
        else g.d_weights
    ref = backward_depthwise(x, w, spec, d, "direct")

    def forward_w(t):
        return conv_depthwise_diag(x, plan_diagonalwise(t.reshape(w.shape), spec,
                                                        GroupingStrategy.by_size(4), mode), spec)

    assert fd_check(forward_w, w, dw, d) <= 1e-6
    assert fd_check(lambda t: conv_depthwise_diag(t.reshape(x.shape), plan, spec), x,
                    g.d_input, d) <= 1e-6
    assert np.allclose(dw, ref.d_weights, rtol=1e-12, atol=0)
    assert np.allclose(g.d_input, ref.d_input, rtol=1e-12, atol=0)


def test_masked_matches_finite_differences():
    spec = ConvSpec.dense(3, 3, 3, 1, 1)
    x = fill_random((1, 3, 5, 5), 47)
    w = fill_random(spec.weight_shape, 48)
    mask = (fill_random(spec.weight_shape, 49) > 0).astype(float)
    d = fill_random((1, 3, 5, 5), 50)
    g = backward_masked(x, w, mask, spec, d)
    live = np.flatnonzero(mask)
    err = fd_check(lambda t: conv_masked(x, t.reshape(w.shape), mask, spec), w, g.d_weights, d,
                   indices=live)
    assert err <= 1e-6
    assert bits_zero(g.d_weights[mask == 0])
    assert fd_check(lambda t: conv_masked(t.reshape(x.shape), w, mask, spec), x, g.d_input, d) <= 1e-6


def test_constant_input_weight_gradient_counts_positions():
    spec = ConvSpec.depthwise(2, 3, 1, 0)
    x = np.ones((1, 2, 5, 5))
    d = np.ones(spec.output_shape(x.shape))
    for strategy in ("cbyc", "direct"):
        g = backward_depthwise(x, np.zeros((2, 9)), spec, d, strategy)
        assert np.array_equal(g.d_weights, np.full((2, 9), 9.0))


def test_delta_kernel_input_gradient_is_identity():
    spec, x, _ = depthwise_case(3, 6, 3, 1, 1, seed=2)
    delta = np.zeros((3, 9))
    delta[:, 4] = 1.0
    d = fill_random(x.shape, 3)
    for strategy in ("cbyc", "direct"):
        assert np.array_equal(backward_depthwise(x, delta, spec, d, strategy).d_input, d)
    for mode in ("literal", "compact"):
        plan = plan_diagonalwise(delta, spec, GroupingStrategy.by_size(3), mode)
        assert np.array_equal(backward_diag(x, plan, spec, d).d_input, d)


def test_off_diagonal_gradient_is_exactly_zero():
    spec, x, w = depthwise_case(8, 6, 3, 2, 1, seed=55)
    d = fill_random(spec.output_shape(x.shape), 56)
    for grouping in (GroupingStrategy.none(), GroupingStrategy.by_size(4), GroupingStrategy.by_count(2)):
        plan = plan_diagonalwise(w, spec, grouping, "literal")
        g = backward_diag(x, plan, spec, d)
        for group, G in zip(plan.groups, g.d_weights):
            assert G.shape == group.mask.shape
            assert bits_zero(G[group.mask == 0])
            assert np.any(G[group.mask == 1] != 0)


def test_sgd_keeps_off_diagonal_zero():
    spec, x, w = depthwise_case(8, 6, 3, 1, 1, seed=57)
    d = fill_random(spec.output_shape(x.shape), 58)
    lit = plan_diagonalwise(w, spec, GroupingStrategy.by_size(4), "literal")
    cmp_ = plan_diagonalwise(w, spec, GroupingStrategy.by_size(4), "compact")
    filters = w.copy()
    for _ in range(10):
        sgd_step(lit, backward_diag(x, lit, spec, d).d_weights, 0.01)
        sgd_step(cmp_, backward_diag(x, cmp_, spec, d).d_weights, 0.01)
        filters -= 0.01 * backward_depthwise(x, filters, spec, d, "direct").d_weights
        for g in lit.groups:
            assert bits_zero(g.weights[g.mask == 0])
    assert np.allclose(lit.current_filters(), filters, rtol=1e-12, atol=1e-15)
    assert np.array_equal(lit.current_filters(), cmp_.current_filters())


def test_skip_weight_grad():
    spec, x, w = depthwise_case(3, 5, 3, 1, 1, seed=59)
    d = fill_random(spec.output_shape(x.shape), 60)
    full = backward_depthwise(x, w, spec, d)
    for strategy in ("cbyc", "direct"):
        g = backward_depthwise(x, w, spec, d, strategy, skip_weight_grad=True)
        assert g.d_weights is None
        assert np.array_equal(g.d_input, full.d_input)


def test_backward_errors():
    spec, x, w = depthwise_case(3, 5, 3, 1, 1, seed=61)
    with pytest.raises(ValueError, match="shape mismatch"):
        backward_depthwise(x, w, spec, np.zeros((2, 3, 4, 4)))
    with pytest.raises(ValueError):
        backward_depthwise(x, w, spec, np.zeros((2, 3, 5, 5)), strategy="fft")
    with pytest.raises(ValueError):
        backward_depthwise(x, np.zeros((3, 27)), ConvSpec.dense(3, 3, 3, 1, 1), np.zeros((2, 3, 5, 5)))


def test_fd_check_linear_and_zero():
    a = fill_random((6,), 3)
    assert fd_check(lambda t: a * t, np.ones(6), a) <= 1e-10
    assert fd_check(lambda t: np.zeros(3), np.ones(4), np.zeros(4)) == 0.0
    # a wrong gradient is caught
    assert fd_check(lambda t: a * t, np.ones(6), 2 * a) > 0.4
    with pytest.raises(ValueError):
        fd_check(lambda t: t, np.ones(3), np.ones(3), step=0)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([1, 2, 4]), st.integers(3, 7), st.sampled_from([1, 3]),
       st.integers(1, 2), st.integers(0, 1), st.integers(0, 10_000))
def test_adjoint_and_strategy_agreement(M, F, K, s, p, seed):
    spec, x, w = depthwise_case(M, F, K, s, p, seed, batch=1)
    d = fill_random(spec.output_shape(x.shape), seed + 7)
    v = fill_random(x.shape, seed + 9)
    ref = backward_depthwise(x, w, spec, d, "direct")
    # <dx, v> = <d_out, f(v)> since the convolution is linear in x
    lhs = float(np.vdot(ref.d_input, v))
    rhs = float(np.vdot(d, conv_depthwise_direct(v, w, spec)))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))
    grads = [backward_depthwise(x, w, spec, d, "cbyc")]
    for mode in ("literal", "compact"):
        for grouping in (GroupingStrategy.none(), GroupingStrategy.by_count(M)):
            plan = plan_diagonalwise(w, spec, grouping, mode)
            g = backward_diag(x, plan, spec, d)
            if mode == "literal":
                g.d_weights = np.concatenate([diagonal_blocks(G, K * K) for G in g.d_weights])
            grads.append(g)
    for g in grads:
        assert np.array_equal(g.d_input, ref.d_input)
        assert np.array_equal(g.d_weights, ref.d_weights)
