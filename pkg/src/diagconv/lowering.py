"""im2col / col2im lowering and the two GEMM variants.

A standard convolution of one image is ``Z = W @ C`` where ``C = im2col(x)``
has one column per output position.  Rows of ``C`` are ordered channel
major, then kernel row, then kernel column, matching the row layout of the
``N x (M*K*K)`` weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels

if TYPE_CHECKING:
    from .convops.spec import ConvSpec

DEFAULT_BLOCK = 64
GEMM_VARIANTS = ("naive", "blocked")


@dataclass
class ColBuffer:
    """Lowered patches of one image plus the geometry needed to invert them."""

    matrix: np.ndarray
    spec: ConvSpec
    input_hw: tuple[int, int]

    @property
    def out_hw(self) -> tuple[int, int]:
        h, w = self.input_hw
        return self.spec.out_size(h), self.spec.out_size(w)


def _as_slice(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ValueError(f"expected a single batch slice, got shape {x.shape}")
        x = x[0]
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (1, C, H, W), got shape {x.shape}")
    return x


def im2col(x, spec: ConvSpec) -> ColBuffer:
    """Lower one image ``(C, H, W)`` (or ``(1, C, H, W)``) into a ColBuffer."""
    x = _as_slice(x)
    C, H, W = x.shape
    if C != spec.in_channels:
        raise ValueError(f"input has {C} channels, spec expects {spec.in_channels}")
    K, s, p = spec.kernel, spec.stride, spec.padding
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    cols = np.empty((C, K, K, Ho, Wo), dtype=x.dtype)
    for kh in range(K):
        for kw in range(K):
            cols[:, kh, kw] = xp[:, kh:kh + s * (Ho - 1) + 1:s, kw:kw + s * (Wo - 1) + 1:s]
    return ColBuffer(cols.reshape(C * K * K, Ho * Wo), spec, (H, W))


def col2im_accumulate(cols: ColBuffer | np.ndarray, spec: ConvSpec, input_hw=None) -> np.ndarray:
    """Scatter-add columns back onto a ``(1, C, H, W)`` image; the adjoint of im2col.

    ``cols`` may be a ColBuffer or a bare matrix, in which case ``input_hw``
    must give the image size.  Contributions landing on padding are dropped.
    """
    if isinstance(cols, ColBuffer):
        matrix = cols.matrix
        if input_hw is None:
            input_hw = cols.input_hw
        if cols.spec != spec:
            raise ValueError("geometry mismatch: ColBuffer built from a different spec")
    else:
        matrix = np.asarray(cols)
        if input_hw is None:
            raise ValueError("input_hw is required for a bare column matrix")
    H, W = input_hw
    C, K, s, p = spec.in_channels, spec.kernel, spec.stride, spec.padding
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    if matrix.shape != (C * K * K, Ho * Wo):
        raise ValueError(
            f"geometry mismatch: columns {matrix.shape} vs expected {(C * K * K, Ho * Wo)}")
    blocks = matrix.reshape(C, K, K, Ho, Wo)
    xp = np.zeros((C, H + 2 * p, W + 2 * p), dtype=matrix.dtype)
    for kh in range(K):
        for kw in range(K):
            xp[:, kh:kh + s * (Ho - 1) + 1:s, kw:kw + s * (Wo - 1) + 1:s] += blocks[:, kh, kw]
    return xp[None, :, p:p + H, p:p + W].copy()


def _check_gemm(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    dtype = np.result_type(a, b)
    return np.ascontiguousarray(a, dtype=dtype), np.ascontiguousarray(b, dtype=dtype)


def gemm_naive(a, b) -> np.ndarray:
    """Triple-loop product; each output sums over k strictly in order."""
    a, b = _check_gemm(a, b)
    out = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype)
    _kernels.gemm_naive_into(a, b, out)
    return out


def gemm_blocked(a, b, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Cache-blocked product: ``block``-sized tiles multiplied by the BLAS micro-kernel."""
    a, b = _check_gemm(a, b)
    if block < 1:
        raise ValueError("block size must be >= 1")
    m, kd = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for i0 in range(0, m, block):
        i1 = min(i0 + block, m)
        for k0 in range(0, kd, block):
            k1 = min(k0 + block, kd)
            a_tile = a[i0:i1, k0:k1]
            for j0 in range(0, n, block):
                j1 = min(j0 + block, n)
                out[i0:i1, j0:j1] += a_tile @ b[k0:k1, j0:j1]
    return out


def gemm(a, b, variant: str = "naive", block: int = DEFAULT_BLOCK) -> np.ndarray:
    if variant == "naive":
        return gemm_naive(a, b)
    if variant == "blocked":
        return gemm_blocked(a, b, block)
    raise ValueError(f"unknown gemm variant {variant!r}")
