"""Diagonalwise plans: depthwise groups rewritten as block-diagonal convolutions.

A group of ``S`` depthwise channels becomes one standard convolution whose
``S x (S*K*K)`` weight matrix carries the channel filters on its block
diagonal.  ``literal`` plans store that matrix ``W_g`` together with the
constant mask ``A_g`` and apply ``W_g * A_g`` on every use.  ``compact``
plans keep only the per-channel filters and scatter them into a zeroed
matrix when a group is computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spec import ConvSpec, GroupingStrategy

MODES = ("literal", "compact")


def as_filters(w, spec: ConvSpec) -> np.ndarray:
    """Depthwise filters as an ``(M, K*K)`` array (``(M, K, K)`` is accepted)."""
    w = np.asarray(w)
    M, kk = spec.in_channels, spec.patch_size
    if w.ndim == 3:
        w = w.reshape(w.shape[0], -1)
    if w.shape != (M, kk):
        raise ValueError(f"shape mismatch: filters {w.shape} vs expected {(M, kk)}")
    return np.ascontiguousarray(w)


def block_diagonal(filters: np.ndarray) -> np.ndarray:
    """Place ``S`` filters of length ``KK`` on the diagonal of an ``S x (S*KK)`` matrix."""
    S, kk = filters.shape
    out = np.zeros((S, S, kk), dtype=filters.dtype)
    idx = np.arange(S)
    out[idx, idx] = filters
    return out.reshape(S, S * kk)


def diagonal_mask(S: int, kk: int, dtype=np.float64) -> np.ndarray:
    """The constant ``S x (S*KK)`` mask with one-blocks of length ``KK`` on the diagonal."""
    return block_diagonal(np.ones((S, kk), dtype=dtype))


def diagonal_blocks(matrix: np.ndarray, kk: int) -> np.ndarray:
    """Inverse of :func:`block_diagonal`: gather the diagonal blocks as ``(S, KK)``."""
    S = matrix.shape[0]
    idx = np.arange(S)
    return matrix.reshape(S, S, kk)[idx, idx].copy()


@dataclass
class DiagonalGroup:
    lo: int
    hi: int
    weights: np.ndarray | None = None
    mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.hi - self.lo


@dataclass
class DiagonalPlan:
    spec: ConvSpec
    grouping: GroupingStrategy
    mode: str
    filters: np.ndarray
    groups: list[DiagonalGroup] = field(default_factory=list)

    @property
    def group_size(self) -> int:
        return self.groups[0].size

    @property
    def group_spec(self) -> ConvSpec:
        s = self.spec
        S = self.group_size
        return ConvSpec.dense(S, S, s.kernel, s.stride, s.padding)

    def masked_weights(self, index: int) -> np.ndarray:
        """``W_g * A_g`` for group ``index``.

        In literal mode the stored ``W_g`` is first re-masked in place, so
        anything written off the diagonal (by an optimizer, say) is zeroed
        before it can reach the convolution.
        """
        g = self.groups[index]
        if self.mode == "literal":
            g.weights[g.mask == 0] = 0.0
            return g.weights * g.mask
        return block_diagonal(self.filters[g.lo:g.hi])

    def current_filters(self) -> np.ndarray:
        """Per-channel filters as currently held by the plan."""
        if self.mode == "compact":
            return self.filters
        kk = self.spec.patch_size
        return np.concatenate([diagonal_blocks(g.weights, kk) for g in self.groups])

    def check_matches(self, spec: ConvSpec):
        if spec != self.spec:
            raise ValueError(f"plan/spec mismatch: plan built for {self.spec}, got {spec}")


def plan_diagonalwise(w, spec: ConvSpec, strategy: GroupingStrategy | None = None,
                      mode: str = "literal") -> DiagonalPlan:
    """Split the depthwise channels into groups and expand each group to a block-diagonal weight matrix."""
    if spec.connectivity != "depthwise":
        raise ValueError("diagonalwise plans need a depthwise spec")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    strategy = strategy or GroupingStrategy.none()
    filters = as_filters(w, spec).copy()
    M, kk = spec.in_channels, spec.patch_size
    S = strategy.group_size(M)
    groups = []
    for lo in range(0, M, S):
        g = DiagonalGroup(lo, lo + S)
        if mode == "literal":
            g.weights = block_diagonal(filters[lo:lo + S])
            g.mask = diagonal_mask(S, kk, filters.dtype)
        groups.append(g)
    return DiagonalPlan(spec, strategy, mode, filters, groups)
