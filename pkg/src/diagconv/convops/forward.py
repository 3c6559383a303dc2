"""Forward passes: standard, channel-by-channel, direct, diagonalwise, masked."""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..lowering import DEFAULT_BLOCK, gemm, im2col
from ..tensor import as_tensor4
from .plan import DiagonalPlan, as_filters
from .spec import ConvSpec, as_mask


def _prepare(x, spec: ConvSpec):
    x = as_tensor4(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    out_shape = spec.output_shape(x.shape)
    return x, out_shape


def _weight_matrix(w, spec: ConvSpec, dtype):
    w = np.asarray(w, dtype=dtype)
    if w.shape != spec.weight_shape:
        raise ValueError(f"shape mismatch: weights {w.shape} vs expected {spec.weight_shape}")
    return np.ascontiguousarray(w)


def _lowered(x, wmat, spec, out_shape, gemm_variant, block):
    B, N, Ho, Wo = out_shape
    out = np.empty(out_shape, dtype=x.dtype)
    for b in range(B):
        cols = im2col(x[b], spec).matrix
        out[b] = gemm(wmat, cols, gemm_variant, block).reshape(N, Ho, Wo)
    return out


def conv_standard(x, w, spec: ConvSpec, gemm_variant="naive", block=DEFAULT_BLOCK):
    """im2col + GEMM convolution with a full ``N x (M*K*K)`` weight matrix.

    The weights are used exactly as given; connectivity masks are the
    business of :func:`conv_masked`.
    """
    x, out_shape = _prepare(x, spec)
    wmat = _weight_matrix(w, spec, x.dtype)
    return _lowered(x, wmat, spec, out_shape, gemm_variant, block)


def _require_depthwise(spec: ConvSpec):
    if spec.connectivity != "depthwise":
        raise ValueError(f"depthwise strategy called with {spec.connectivity} connectivity")


def channel_spec(spec: ConvSpec) -> ConvSpec:
    """The one-channel standard convolution each depthwise channel reduces to."""
    return ConvSpec.dense(1, 1, spec.kernel, spec.stride, spec.padding)


def conv_depthwise_cbyc(x, w, spec: ConvSpec, gemm_variant="naive", block=DEFAULT_BLOCK):
    """One single-channel im2col + GEMM per input channel, results tiled by channel."""
    _require_depthwise(spec)
    x, out_shape = _prepare(x, spec)
    filters = as_filters(w, spec).astype(x.dtype, copy=False)
    B, M, Ho, Wo = out_shape
    one = channel_spec(spec)
    out = np.empty(out_shape, dtype=x.dtype)
    for b in range(B):
        for i in range(M):
            cols = im2col(x[b, i:i + 1], one).matrix
            out[b, i] = gemm(filters[i:i + 1], cols, gemm_variant, block).reshape(Ho, Wo)
    return out


def conv_depthwise_direct(x, w, spec: ConvSpec):
    """Per-pixel accumulation over each channel's own window; no column buffer."""
    _require_depthwise(spec)
    x, out_shape = _prepare(x, spec)
    filters = np.ascontiguousarray(as_filters(w, spec), dtype=x.dtype)
    out = np.zeros(out_shape, dtype=x.dtype)
    _kernels.direct_forward(x, filters, spec.kernel, spec.stride, spec.padding, out)
    return out


def conv_depthwise_diag(x, plan: DiagonalPlan, spec: ConvSpec,
                        gemm_variant="naive", block=DEFAULT_BLOCK):
    """Each channel group computed as one standard convolution with masked weights."""
    _require_depthwise(spec)
    plan.check_matches(spec)
    x, out_shape = _prepare(x, spec)
    B, M, Ho, Wo = out_shape
    gspec = plan.group_spec
    out = np.empty(out_shape, dtype=x.dtype)
    for gi, g in enumerate(plan.groups):
        w_hat = np.ascontiguousarray(plan.masked_weights(gi), dtype=x.dtype)
        for b in range(B):
            cols = im2col(x[b, g.lo:g.hi], gspec).matrix
            out[b, g.lo:g.hi] = gemm(w_hat, cols, gemm_variant, block).reshape(g.size, Ho, Wo)
    return out


def conv_masked(x, w, mask, spec: ConvSpec, gemm_variant="naive", block=DEFAULT_BLOCK):
    """Standard convolution with weights ``w * mask``.

    With the block-diagonal depthwise mask this is the diagonalwise form; a
    :func:`~diagconv.convops.spec.mask_for_groups` mask gives group
    convolution, and an arbitrary 0/1 mask gives a pruned convolution.
    """
    x, _ = _prepare(x, spec)
    wmat = _weight_matrix(w, spec, x.dtype)
    m = as_mask(mask, wmat.shape).astype(x.dtype)
    return conv_standard(x, wmat * m, spec, gemm_variant, block)
