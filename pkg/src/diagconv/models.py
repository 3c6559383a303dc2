"""MobileNet layer catalog, its variants, and the analytic cost model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .convops.spec import ConvSpec, GroupingStrategy

KINDS = ("conv_std", "conv_dw", "conv_pw", "fully_connected")
KIND_LABELS = {
    "conv_pw": "Conv 1x1",
    "conv_dw": "Conv DW 3x3",
    "conv_std": "Conv 3x3",
    "fully_connected": "Fully Connected",
}
STRATEGIES = ("standard", "cbyc", "direct", "diag-literal", "diag-compact")
DEPTHWISE_STRATEGIES = ("cbyc", "direct", "diag-literal", "diag-compact")
WIDTHS = (1.0, 0.75, 0.5)
RESOLUTIONS = (224, 128)
NUM_CLASSES = 1000

# (stride, output channels) of the 13 depthwise separable blocks
_BLOCKS = [(1, 64), (2, 128), (1, 128), (2, 256), (1, 256), (2, 512)] \
    + [(1, 512)] * 5 + [(2, 1024), (1, 1024)]
_SHALLOW_DROP = set(range(14, 24))  # five 14x14x512 blocks: dw 14..22, pw 15..23


@dataclass(frozen=True)
class LayerConfig:
    """One layer; ``in_size`` is the square input extent F (1 for the FC layer)."""

    index: int
    kind: str
    kernel: int
    stride: int
    in_size: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv_dw" and self.out_channels != self.in_channels:
            raise ValueError("depthwise layer needs out_channels == in_channels")
        if self.kind == "conv_pw" and self.kernel != 1:
            raise ValueError("pointwise layer needs kernel 1")

    @property
    def padding(self) -> int:
        return self.kernel // 2

    @property
    def out_size(self) -> int:
        return (self.in_size + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def is_depthwise(self) -> bool:
        return self.kind == "conv_dw"

    def conv_spec(self) -> ConvSpec:
        if self.kind == "conv_dw":
            return ConvSpec.depthwise(self.in_channels, self.kernel, self.stride, self.padding)
        return ConvSpec.dense(self.in_channels, self.out_channels, self.kernel,
                              self.stride, self.padding)

    def label(self) -> str:
        if self.kind == "fully_connected":
            return f"fc {self.in_channels}->{self.out_channels}"
        F, M = self.in_size, self.in_channels
        text = f"{self.kernel}x{self.kernel}/{self.stride}, {F}x{F}x{M}"
        if self.kind != "conv_dw":
            text += f"->{self.out_channels}"
        return text

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "kernel": self.kernel,
            "stride": self.stride,
            "input": [self.in_size, self.in_size, self.in_channels],
            "out_channels": self.out_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayerConfig":
        F, F2, M = d["input"]
        if F != F2:
            raise ValueError(f"layer {d.get('index')}: only square inputs are supported")
        return cls(int(d["index"]), d["kind"], int(d["kernel"]), int(d["stride"]),
                   int(F), int(M), int(d["out_channels"]))


@dataclass(frozen=True)
class ModelVariant:
    shallow: bool = False
    width: float = 1.0
    resolution: int = 224

    def __post_init__(self):
        if self.width not in WIDTHS:
            raise ValueError(f"unsupported width multiplier {self.width}; choose from {WIDTHS}")
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"unsupported resolution {self.resolution}; choose from {RESOLUTIONS}")

    @classmethod
    def named(cls, name: str = "base", width: float = 1.0, resolution: int = 224):
        if name not in ("base", "shallow"):
            raise ValueError(f"unknown variant {name!r}")
        return cls(name == "shallow", float(width), int(resolution))

    def channels(self, c: int) -> int:
        # round half up
        return max(1, int(math.floor(c * self.width + 0.5)))

    def describe(self) -> str:
        base = "shallow" if self.shallow else "base"
        return f"{base} width={self.width} resolution={self.resolution}"


def _next_size(size, kernel, stride):
    return (size + 2 * (kernel // 2) - kernel) // stride + 1


def mobilenet_layers(variant: ModelVariant | None = None) -> list[LayerConfig]:
    """The 28 weighted layers of MobileNet (fewer if shallow), numbered 1..28.

    Layer 1 is the 3x3/2 stem convolution, even layers 2..26 are depthwise,
    odd layers 3..27 pointwise, and 28 the classifier.  The shallow variant
    keeps the original numbering.
    """
    v = variant or ModelVariant()
    layers = []
    F = v.resolution
    c = v.channels(32)
    layers.append(LayerConfig(1, "conv_std", 3, 2, F, 3, c))
    F = _next_size(F, 3, 2)
    index = 2
    for stride, out in _BLOCKS:
        out = v.channels(out)
        if not (v.shallow and index in _SHALLOW_DROP):
            layers.append(LayerConfig(index, "conv_dw", 3, stride, F, c, c))
            F = _next_size(F, 3, stride)
            layers.append(LayerConfig(index + 1, "conv_pw", 1, 1, F, c, out))
            c = out
        index += 2
    layers.append(LayerConfig(28, "fully_connected", 1, 1, 1, c, NUM_CLASSES))
    return layers


def depthwise_layers(layers) -> list[LayerConfig]:
    return [layer for layer in layers if layer.is_depthwise]


def catalog_to_json(layers) -> str:
    return json.dumps({"layers": [layer.to_dict() for layer in layers]}, indent=2)


def catalog_from_json(text: str) -> list[LayerConfig]:
    data = json.loads(text)
    items = data["layers"] if isinstance(data, dict) else data
    return [LayerConfig.from_dict(d) for d in items]


@dataclass
class LayerCost:
    """Analytic counters of one layer under one strategy (per image).

    ``mult_adds`` counts every multiply-accumulate the strategy executes,
    including products with structural zeros of an expanded weight matrix;
    ``effective_mult_adds`` counts only products with live weights.
    ``work_items`` is the number of independent output inner products per
    launch and ``launches`` the number of launches (GEMM calls or kernels).
    """

    layer: LayerConfig
    strategy: str
    grouping: str
    mult_adds: int
    effective_mult_adds: int
    parameters: int
    workspace_bytes: int
    work_items: int
    launches: int

    @property
    def total_work_items(self) -> int:
        return self.work_items * self.launches


@dataclass
class CostReport:
    layers: list[LayerCost] = field(default_factory=list)
    mult_add_ratios: dict = field(default_factory=dict)
    parameter_ratios: dict = field(default_factory=dict)

    def kind_totals(self, attr: str) -> dict:
        totals = {k: 0 for k in KINDS}
        for lc in self.layers:
            totals[lc.layer.kind] += getattr(lc, attr)
        return totals

    def to_dict(self) -> dict:
        rows = []
        for lc in self.layers:
            d = asdict(lc)
            d["layer"] = lc.layer.to_dict()
            rows.append(d)
        return {"layers": rows, "mult_add_ratios": self.mult_add_ratios,
                "parameter_ratios": self.parameter_ratios}


def _ratios(totals: dict) -> dict:
    grand = sum(totals.values())
    if grand == 0:
        return {KIND_LABELS[k]: 0.0 for k in KINDS}
    return {KIND_LABELS[k]: 100.0 * totals[k] / grand for k in KINDS}


def layer_cost(layer: LayerConfig, strategy: str = "cbyc",
               grouping: GroupingStrategy | None = None, itemsize: int = 4) -> LayerCost:
    """Counters for ``layer`` computed with ``strategy``.

    Dense layers are always computed as a standard convolution, whatever
    strategy is requested for the depthwise layers.  On a depthwise layer the
    ``standard`` strategy means a dense M -> M convolution of the same shape.
    Raises ``ValueError`` if ``grouping`` does not divide the channel count.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    grouping = grouping or GroupingStrategy.none()
    M, N, K = layer.in_channels, layer.out_channels, layer.kernel
    kk = K * K
    P = layer.out_size ** 2
    label = "none"

    if layer.kind == "fully_connected":
        macs = M * N
        return LayerCost(layer, strategy, label, macs, macs, macs, 0, N, 1)
    if not layer.is_depthwise or strategy == "standard":
        macs = N * M * kk * P
        ws = M * kk * P * itemsize
        return LayerCost(layer, strategy, label, macs, macs, N * M * kk, ws, N * P, 1)

    useful = M * kk * P
    params = M * kk
    if strategy == "cbyc":
        return LayerCost(layer, strategy, label, useful, useful, params, kk * P * itemsize, P, M)
    if strategy == "direct":
        return LayerCost(layer, strategy, label, useful, useful, params, 0, M * P, 1)

    S = grouping.group_size(M)
    G = M // S
    label = str(grouping)
    group_matrix = S * S * kk
    ws = S * kk * P + group_matrix  # one group's column buffer + masked-weight scratch
    if strategy == "diag-literal":
        ws += 2 * G * group_matrix  # stored W_g and A_g for every group
    return LayerCost(layer, strategy, label, S * M * kk * P, useful, params,
                     ws * itemsize, S * P, G)


def cost_model(layers, strategy: str = "cbyc", grouping: GroupingStrategy | None = None,
               itemsize: int = 4) -> CostReport:
    report = CostReport([layer_cost(layer, strategy, grouping, itemsize) for layer in layers])
    report.mult_add_ratios = _ratios(report.kind_totals("mult_adds"))
    report.parameter_ratios = _ratios(report.kind_totals("parameters"))
    return report


def masked_mult_adds(mask, out_size: int) -> int:
    """Live multiply-accumulates of a masked convolution with an ``out_size``^2 output."""
    return int(np.count_nonzero(np.asarray(mask))) * out_size * out_size


def format_ratio_table(report: CostReport) -> str:
    lines = [f"{'Type':<18}{'Mult-Adds':>12}{'Parameters':>12}"]
    for kind in ("conv_pw", "conv_dw", "conv_std", "fully_connected"):
        name = KIND_LABELS[kind]
        lines.append(f"{name:<18}{report.mult_add_ratios[name]:>11.2f}%"
                     f"{report.parameter_ratios[name]:>11.2f}%")
    ma = sum(lc.mult_adds for lc in report.layers)
    pa = sum(lc.parameters for lc in report.layers)
    lines.append(f"{'Total':<18}{ma:>12,}{pa:>12,}")
    return "\n".join(lines)
