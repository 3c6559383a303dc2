"""Dense NCHW tensors and shared comparison / fixture helpers.

Tensors are plain C-contiguous ``numpy.ndarray`` objects.  A 4-D tensor has
shape ``(N, C, H, W)`` and element ``(n, c, h, w)`` lives at flat offset
``((n*C + c)*H + h)*W + w``; matrices are 2-D row-major arrays.  Element
precision is either ``float32`` ("single") or ``float64`` ("double").
"""

from __future__ import annotations

import numpy as np

PRECISIONS = {"single": np.float32, "double": np.float64}

# splitmix64 constants
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def resolve_dtype(precision) -> np.dtype:
    """Map ``"single"``/``"double"`` (or a numpy dtype) to a float dtype."""
    if isinstance(precision, str):
        try:
            return np.dtype(PRECISIONS[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    dt = np.dtype(precision)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported element type {dt}")
    return dt


def as_tensor4(x, dtype=None) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=dtype)
    if x.ndim != 4:
        raise ValueError(f"expected a 4-D (N, C, H, W) tensor, got shape {x.shape}")
    return x


def zeros(shape, precision="double") -> np.ndarray:
    return np.zeros(tuple(shape), dtype=resolve_dtype(precision))


def flat_offset(shape, n, c, h, w) -> int:
    _, C, H, W = shape
    return ((n * C + c) * H + h) * W + w


def unflatten(shape, offset):
    _, C, H, W = shape
    offset, w = divmod(offset, W)
    offset, h = divmod(offset, H)
    n, c = divmod(offset, C)
    return n, c, h, w


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of the splitmix64 generator seeded with ``seed``.

    splitmix64 is counter based: output ``i`` is ``mix(seed + (i+1)*gamma)``,
    so the whole stream is produced with vectorised uint64 arithmetic
    (wrapping modulo 2**64).
    """
    state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        z = state + _GAMMA * np.arange(1, count + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def fill_random(shape, seed: int, precision="double") -> np.ndarray:
    """Deterministic uniform[-1, 1) tensor (or matrix) of the given shape.

    Each value is ``2 * u - 1`` where ``u`` is the top 53 bits of a splitmix64
    output scaled to [0, 1).  Values are generated in double precision and then
    rounded to the requested element type, so a single-precision fixture is
    the rounded double-precision one.
    """
    shape = tuple(int(s) for s in shape)
    count = int(np.prod(shape, dtype=np.int64))
    bits = splitmix64(seed, count) >> np.uint64(11)
    u = bits.astype(np.float64) * (1.0 / 9007199254740992.0)
    return (2.0 * u - 1.0).reshape(shape).astype(resolve_dtype(precision))


def tensor_equal_within(a, b, rel_tol: float, abs_tol: float) -> bool:
    """True iff ``|a - b| <= abs_tol + rel_tol * max(|a|, |b|)`` elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    bound = abs_tol + rel_tol * np.maximum(np.abs(a64), np.abs(b64))
    return bool(np.all(np.abs(a64 - b64) <= bound))


def max_rel_diff(a, b) -> float:
    """Largest elementwise ``|a - b| / max(|a|, |b|)`` (0/0 counts as 0)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    denom = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(diff == 0, 0.0, diff / denom)
    return float(rel.max()) if rel.size else 0.0
