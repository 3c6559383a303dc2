"""Brute-force reference convolutions.

Deliberately slow and self-contained: plain Python loops over nested lists,
explicit zero padding, double-precision accumulation.  Nothing here calls the
lowering or strategy kernels, so agreement with them is a meaningful check.
"""

from __future__ import annotations

import numpy as np

from .convops.spec import ConvSpec


def _padded(x_chan, pad):
    h = len(x_chan)
    w = len(x_chan[0]) if h else 0
    out = [[0.0] * (w + 2 * pad) for _ in range(h + 2 * pad)]
    for i in range(h):
        out[i + pad][pad:pad + w] = x_chan[i]
    return out


def _check_input(x, spec):
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ValueError(
            f"shape mismatch: input {x.shape} vs in_channels {spec.in_channels}")
    return x


def oracle_conv(x, w_full, spec: ConvSpec, mask=None, counter: dict | None = None):
    """Direct convolution ``z[b,n,oy,ox] = sum_{m,kh,kw} w[n,m,kh,kw] * xpad[...]``.

    ``w_full`` is the standard ``N x (M*K*K)`` weight matrix.  Weights whose
    ``mask`` entry is 0 are skipped entirely.  If ``counter`` is given, the
    number of multiplications executed is added to ``counter["mults"]``
    (padding positions are multiplied like any other input).
    """
    x = _check_input(x, spec)
    M, N, K = spec.in_channels, spec.out_channels, spec.kernel
    w_full = np.asarray(w_full, dtype=np.float64)
    if w_full.shape != (N, M * K * K):
        raise ValueError(f"shape mismatch: weights {w_full.shape} vs {(N, M * K * K)}")
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != w_full.shape:
            raise ValueError(f"shape mismatch: mask {mask.shape} vs weights {w_full.shape}")
        active = (mask != 0).tolist()
    else:
        active = None
    s, p = spec.stride, spec.padding
    B, _, H, W = x.shape
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    wl = w_full.tolist()
    out = np.zeros((B, N, Ho, Wo))
    mults = 0
    for b in range(B):
        xb = [_padded(ch, p) for ch in x[b].astype(np.float64).tolist()]
        for n in range(N):
            wn = wl[n]
            an = active[n] if active is not None else None
            for oy in range(Ho):
                for ox in range(Wo):
                    acc = 0.0
                    for m in range(M):
                        xm = xb[m]
                        base = m * K * K
                        for kh in range(K):
                            row = xm[oy * s + kh]
                            for kw in range(K):
                                idx = base + kh * K + kw
                                if an is not None and not an[idx]:
                                    continue
                                acc += wn[idx] * row[ox * s + kw]
                                mults += 1
                    out[b, n, oy, ox] = acc
    if counter is not None:
        counter["mults"] = counter.get("mults", 0) + mults
    return out


def oracle_depthwise(x, w, spec: ConvSpec, counter: dict | None = None):
    """Per-channel direct convolution; ``w`` has shape ``(M, K*K)``."""
    x = _check_input(x, spec)
    M, K = spec.in_channels, spec.kernel
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (M, K * K):
        raise ValueError(f"shape mismatch: filters {w.shape} vs {(M, K * K)}")
    s, p = spec.stride, spec.padding
    B, _, H, W = x.shape
    Ho, Wo = spec.out_size(H), spec.out_size(W)
    wl = w.tolist()
    out = np.zeros((B, M, Ho, Wo))
    mults = 0
    for b in range(B):
        for m, ch in enumerate(x[b].astype(np.float64).tolist()):
            xm = _padded(ch, p)
            wm = wl[m]
            for oy in range(Ho):
                for ox in range(Wo):
                    acc = 0.0
                    for kh in range(K):
                        row = xm[oy * s + kh]
                        for kw in range(K):
                            acc += wm[kh * K + kw] * row[ox * s + kw]
                            mults += 1
                    out[b, m, oy, ox] = acc
    if counter is not None:
        counter["mults"] = counter.get("mults", 0) + mults
    return out


def expand_depthwise(w, kernel: int):
    """Place per-channel filters on the block diagonal of an M x (M*K*K) matrix."""
    w = np.asarray(w, dtype=np.float64)
    M, kk = w.shape
    full = np.zeros((M, M * kk))
    for i in range(M):
        full[i, i * kk:(i + 1) * kk] = w[i]
    return full
