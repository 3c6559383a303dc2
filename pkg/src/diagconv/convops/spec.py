"""Convolution hyperparameters, grouping strategies and connectivity masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONNECTIVITY = ("dense", "depthwise", "grouped", "masked")


@dataclass(frozen=True)
class ConvSpec:
    """Square-kernel 2-D convolution without bias.

    ``weight_shape`` is the standard-convolution weight matrix layout
    ``N x (M*K*K)``: row ``n`` holds output channel ``n``'s filter, channel
    major, then kernel row, then kernel column.
    """

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    connectivity: str = "dense"
    groups: int = 1
    mask: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITY:
            raise ValueError(f"unknown connectivity {self.connectivity!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.kernel < 1:
            raise ValueError("kernel must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        if self.connectivity == "depthwise" and self.out_channels != self.in_channels:
            raise ValueError("depthwise convolution requires out_channels == in_channels")
        if self.connectivity == "grouped":
            g = self.groups
            if g < 1 or self.in_channels % g or self.out_channels % g:
                raise ValueError(
                    f"groups={g} must divide in_channels={self.in_channels} "
                    f"and out_channels={self.out_channels}")
        if self.connectivity == "masked":
            if self.mask is None:
                raise ValueError("masked connectivity needs a mask")
            object.__setattr__(self, "mask", as_mask(self.mask, self.weight_shape))

    @classmethod
    def dense(cls, in_channels, out_channels, kernel, stride=1, padding=0):
        return cls(in_channels, out_channels, kernel, stride, padding)

    @classmethod
    def depthwise(cls, channels, kernel, stride=1, padding=0):
        return cls(channels, channels, kernel, stride, padding, "depthwise")

    @classmethod
    def grouped(cls, in_channels, out_channels, kernel, groups, stride=1, padding=0):
        return cls(in_channels, out_channels, kernel, stride, padding, "grouped", groups)

    @classmethod
    def masked(cls, mask, in_channels, out_channels, kernel, stride=1, padding=0):
        return cls(in_channels, out_channels, kernel, stride, padding, "masked", mask=mask)

    @property
    def patch_size(self) -> int:
        return self.kernel * self.kernel

    @property
    def weight_shape(self) -> tuple[int, int]:
        return self.out_channels, self.in_channels * self.patch_size

    def out_size(self, size: int) -> int:
        """Output extent along one spatial axis of length ``size``."""
        span = size + 2 * self.padding - self.kernel
        if span < 0:
            raise ValueError(
                f"kernel exceeds padded input: kernel {self.kernel} > "
                f"{size} + 2*{self.padding}")
        return span // self.stride + 1

    def output_shape(self, input_shape) -> tuple[int, int, int, int]:
        n, c, h, w = input_shape
        if c != self.in_channels:
            raise ValueError(
                f"input has {c} channels, convolution expects {self.in_channels}")
        return n, self.out_channels, self.out_size(h), self.out_size(w)

    def connectivity_mask(self) -> np.ndarray:
        """The binary N x (M*K*K) mask implied by this spec's connectivity."""
        M, N, K = self.in_channels, self.out_channels, self.kernel
        if self.connectivity == "dense":
            return mask_for_groups(M, N, K, 1)
        if self.connectivity == "depthwise":
            return mask_for_groups(M, N, K, M)
        if self.connectivity == "grouped":
            return mask_for_groups(M, N, K, self.groups)
        return self.mask


@dataclass(frozen=True)
class GroupingStrategy:
    """How depthwise channels are split into diagonalwise groups.

    ``kind`` is ``"none"`` (one group of all channels), ``"count"`` (``value``
    groups) or ``"size"`` (groups of ``value`` channels).
    """

    kind: str = "none"
    value: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "count", "size"):
            raise ValueError(f"unknown grouping kind {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "value", None)
        elif self.value is None or self.value < 1:
            raise ValueError(f"grouping {self.kind} needs a positive value")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def by_count(cls, groups: int):
        return cls("count", int(groups))

    @classmethod
    def by_size(cls, size: int):
        return cls("size", int(size))

    @classmethod
    def parse(cls, text: str) -> "GroupingStrategy":
        """Parse ``none``, ``count=G`` / ``count:G`` or ``size=S`` / ``size:S``."""
        text = text.strip().lower()
        if text in ("none", ""):
            return cls.none()
        for sep in ("=", ":"):
            if sep in text:
                kind, value = text.split(sep, 1)
                return cls(kind.strip(), int(value))
        raise ValueError(f"cannot parse grouping {text!r}")

    def group_size(self, channels: int) -> int:
        """Channels per group; raises if the grouping does not divide ``channels``."""
        if self.kind == "none":
            return channels
        v = self.value
        if v > channels or channels % v:
            raise ValueError(
                f"group size must divide channel count: {self} with {channels} channels")
        return channels // v if self.kind == "count" else v

    def num_groups(self, channels: int) -> int:
        return channels // self.group_size(channels)

    def __str__(self):
        return "none" if self.kind == "none" else f"{self.kind}={self.value}"


def as_mask(mask, shape=None) -> np.ndarray:
    """Validate a binary connectivity mask and return it as a float64 array."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} does not match weights {tuple(shape)}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be 0 or 1")
    return m


def mask_for_groups(M: int, N: int, K: int, g: int) -> np.ndarray:
    """Block-diagonal mask of a ``g``-group convolution, shape N x (M*K*K).

    Output channels of block ``b`` see only the input channels of block ``b``.
    ``g == M == N`` gives the depthwise mask.
    """
    if g < 1 or M % g or N % g:
        raise ValueError(f"groups={g} must divide M={M} and N={N}")
    rows, cols = N // g, (M // g) * K * K
    mask = np.zeros((N, M * K * K))
    for b in range(g):
        mask[b * rows:(b + 1) * rows, b * cols:(b + 1) * cols] = 1.0
    return mask
