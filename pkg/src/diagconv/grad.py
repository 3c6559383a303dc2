"""Backward passes for every strategy and a finite-difference checker.

Weight gradients are summed over the batch.  Every backward function takes
``need_input`` / ``need_weights`` so the harness can time the two halves
separately; a skipped half comes back as ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .convops.forward import channel_spec
from .convops.plan import DiagonalPlan, as_filters, diagonal_blocks
from .convops.spec import ConvSpec, as_mask
from .lowering import DEFAULT_BLOCK, col2im_accumulate, gemm, im2col
from .tensor import as_tensor4


@dataclass
class ConvGradients:
    """``d_input`` matches x; ``d_weights`` matches the strategy's weight container.

    For literal diagonal plans ``d_weights`` is a list with one
    ``S x (S*K*K)`` matrix per group.
    """

    d_input: np.ndarray | None
    d_weights: np.ndarray | list | None


def _prepare(x, spec: ConvSpec, d_output):
    x = as_tensor4(x)
    d_output = as_tensor4(d_output, dtype=x.dtype)
    expected = spec.output_shape(x.shape)
    if d_output.shape != expected:
        raise ValueError(f"shape mismatch: d_output {d_output.shape} vs forward output {expected}")
    return x, d_output


def backward_standard(x, w, spec: ConvSpec, d_output, gemm_variant="naive",
                      block=DEFAULT_BLOCK, need_input=True, need_weights=True) -> ConvGradients:
    x, d_output = _prepare(x, spec, d_output)
    w = np.ascontiguousarray(w, dtype=x.dtype)
    if w.shape != spec.weight_shape:
        raise ValueError(f"shape mismatch: weights {w.shape} vs expected {spec.weight_shape}")
    B, N, Ho, Wo = d_output.shape
    H, W = x.shape[2:]
    dw = np.zeros_like(w) if need_weights else None
    dx = np.empty_like(x) if need_input else None
    wt = np.ascontiguousarray(w.T)
    for b in range(B):
        dz = d_output[b].reshape(N, Ho * Wo)
        if need_weights:
            cols = im2col(x[b], spec).matrix
            dw += gemm(dz, np.ascontiguousarray(cols.T), gemm_variant, block)
        if need_input:
            dcols = gemm(wt, dz, gemm_variant, block)
            dx[b] = col2im_accumulate(dcols, spec, (H, W))[0]
    return ConvGradients(dx, dw)


def backward_depthwise(x, w, spec: ConvSpec, d_output, strategy="cbyc", skip_weight_grad=False,
                       gemm_variant="naive", block=DEFAULT_BLOCK, need_input=True) -> ConvGradients:
    """Per-channel backward pass; ``strategy`` is ``"cbyc"`` or ``"direct"``.

    ``skip_weight_grad`` leaves the filter gradient uncomputed (``None``).
    """
    if spec.connectivity != "depthwise":
        raise ValueError(f"depthwise backward called with {spec.connectivity} connectivity")
    x, d_output = _prepare(x, spec, d_output)
    filters = np.ascontiguousarray(as_filters(w, spec), dtype=x.dtype)
    need_weights = not skip_weight_grad
    if strategy == "direct":
        return _backward_direct(x, filters, spec, d_output, need_input, need_weights)
    if strategy != "cbyc":
        raise ValueError(f"unknown depthwise strategy {strategy!r}")

    B, M, Ho, Wo = d_output.shape
    H, W = x.shape[2:]
    one = channel_spec(spec)
    dw = np.zeros_like(filters) if need_weights else None
    dx = np.empty_like(x) if need_input else None
    for b in range(B):
        for i in range(M):
            dz = d_output[b, i].reshape(1, Ho * Wo)
            if need_weights:
                cols = im2col(x[b, i:i + 1], one).matrix
                dw[i] += gemm(dz, np.ascontiguousarray(cols.T), gemm_variant, block)[0]
            if need_input:
                dcols = gemm(np.ascontiguousarray(filters[i:i + 1].T), dz, gemm_variant, block)
                dx[b, i] = col2im_accumulate(dcols, one, (H, W))[0, 0]
    return ConvGradients(dx, dw)


def _backward_direct(x, filters, spec, d_output, need_input, need_weights):
    K, s, p = spec.kernel, spec.stride, spec.padding
    dx = dw = None
    if need_input:
        dx = np.zeros_like(x)
        _kernels.direct_backward_input(d_output, filters, K, s, p, dx)
    if need_weights:
        dw = np.zeros_like(filters)
        _kernels.direct_backward_weights(x, d_output, K, s, p, dw, np.zeros(1, dtype=x.dtype))
    return ConvGradients(dx, dw)


def backward_diag(x, plan: DiagonalPlan, spec: ConvSpec, d_output, gemm_variant="naive",
                  block=DEFAULT_BLOCK, need_input=True, need_weights=True) -> ConvGradients:
    """Standard-convolution backward per group, with the weight gradient masked.

    Literal plans return ``G_g`` with every entry outside the diagonal blocks
    set to +0.0; compact plans gather the diagonal blocks into ``(M, K*K)``.
    The input gradient always flows through the masked weights.
    """
    plan.check_matches(spec)
    x, d_output = _prepare(x, spec, d_output)
    B, M, Ho, Wo = d_output.shape
    H, W = x.shape[2:]
    gspec = plan.group_spec
    kk = spec.patch_size
    dx = np.empty_like(x) if need_input else None
    group_grads = []
    for gi, g in enumerate(plan.groups):
        w_hat = np.ascontiguousarray(plan.masked_weights(gi), dtype=x.dtype)
        w_hat_t = np.ascontiguousarray(w_hat.T)
        G = np.zeros_like(w_hat) if need_weights else None
        for b in range(B):
            dz = np.ascontiguousarray(d_output[b, g.lo:g.hi].reshape(g.size, Ho * Wo))
            if need_weights:
                cols = im2col(x[b, g.lo:g.hi], gspec).matrix
                G += gemm(dz, np.ascontiguousarray(cols.T), gemm_variant, block)
            if need_input:
                dcols = gemm(w_hat_t, dz, gemm_variant, block)
                dx[b, g.lo:g.hi] = col2im_accumulate(dcols, gspec, (H, W))[0]
        if need_weights:
            if plan.mode == "literal":
                group_grads.append(np.where(g.mask != 0, G, 0.0).astype(x.dtype))
            else:
                group_grads.append(diagonal_blocks(G, kk))
    if not need_weights:
        dw = None
    elif plan.mode == "literal":
        dw = group_grads
    else:
        dw = np.concatenate(group_grads)
    return ConvGradients(dx, dw)


def backward_masked(x, w, mask, spec: ConvSpec, d_output, gemm_variant="naive",
                    block=DEFAULT_BLOCK, need_input=True, need_weights=True) -> ConvGradients:
    x = as_tensor4(x)
    w = np.asarray(w, dtype=x.dtype)
    m = as_mask(mask, w.shape).astype(x.dtype)
    grads = backward_standard(x, w * m, spec, d_output, gemm_variant, block,
                              need_input, need_weights)
    if grads.d_weights is not None:
        grads.d_weights = np.where(m != 0, grads.d_weights, 0.0).astype(x.dtype)
    return grads


def sgd_step(plan: DiagonalPlan, d_weights, lr: float):
    """In-place SGD update of a plan's weights from :func:`backward_diag` output."""
    if plan.mode == "literal":
        for g, dg in zip(plan.groups, d_weights):
            g.weights -= lr * dg
    else:
        plan.filters -= lr * np.asarray(d_weights)


def fd_check(forward: Callable[[np.ndarray], np.ndarray], params, analytic, d_output=None,
             step: float = 1e-4, indices=None) -> float:
    """Largest relative error between ``analytic`` and central differences.

    ``forward`` maps a flat parameter vector to an output array; the scalar
    being differentiated is ``<d_output, forward(theta)>`` (plain sum if
    ``d_output`` is None).  Only the coordinates in ``indices`` are probed
    when it is given.  The relative error of a coordinate uses the
    denominator ``max(|analytic|, |numeric|, 1e-12)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.array(params, dtype=np.float64).ravel()
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    if analytic.shape != theta.shape:
        raise ValueError(f"shape mismatch: analytic {analytic.shape} vs params {theta.shape}")

    def objective():
        out = np.asarray(forward(theta), dtype=np.float64)
        if d_output is None:
            return float(out.sum())
        return float(np.vdot(np.asarray(d_output, dtype=np.float64), out))

    coords = range(theta.size) if indices is None else np.asarray(indices).ravel()
    worst = 0.0
    for i in coords:
        orig = theta[i]
        theta[i] = orig + step
        f_plus = objective()
        theta[i] = orig - step
        f_minus = objective()
        theta[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        err = abs(numeric - analytic[i]) / max(abs(analytic[i]), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst
