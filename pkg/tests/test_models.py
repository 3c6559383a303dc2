import json
import math

import numpy as np
import pytest

from diagconv.convops import ConvSpec, GroupingStrategy, mask_for_groups
from diagconv.models import (
    LayerConfig,
    ModelVariant,
    catalog_from_json,
    catalog_to_json,
    cost_model,
    depthwise_layers,
    format_ratio_table,
    layer_cost,
    masked_mult_adds,
    mobilenet_layers,
)
from diagconv.oracle import expand_depthwise, oracle_conv
from diagconv.tensor import fill_random

# (index, stride, F, M) of the 13 MobileNet depthwise layers
TABLE3 = [(2, 1, 112, 32), (4, 2, 112, 64), (6, 1, 56, 128), (8, 2, 56, 128),
          (10, 1, 28, 256), (12, 2, 28, 256)] \
    + [(i, 1, 14, 512) for i in (14, 16, 18, 20, 22)] + [(24, 2, 14, 512), (26, 1, 7, 1024)]


def test_base_depthwise_layers_match_table():
    dw = depthwise_layers(mobilenet_layers())
    assert [(l.index, l.stride, l.in_size, l.in_channels) for l in dw] == TABLE3
    assert all(l.kernel == 3 and l.out_channels == l.in_channels for l in dw)
    assert dw[0].label() == "3x3/1, 112x112x32"


def test_base_catalog_structure():
    layers = mobilenet_layers()
    assert [l.index for l in layers] == list(range(1, 29))
    assert layers[0].kind == "conv_std" and layers[0].in_channels == 3 and layers[0].stride == 2
    assert all(l.kind == "conv_pw" for l in layers[2:27:2])
    assert layers[-1].kind == "fully_connected" and layers[-1].in_channels == 1024
    # each layer's output feeds the next
    for a, b in zip(layers[1:-2], layers[2:-1]):
        assert a.out_channels == b.in_channels and a.out_size == b.in_size


def test_width_multiplier():
    layers = mobilenet_layers(ModelVariant(width=0.5))
    l2 = next(l for l in layers if l.index == 2)
    assert (l2.in_size, l2.in_channels) == (112, 16)
    assert layers[-1].in_channels == 512 and layers[-1].out_channels == 1000
    l2 = next(l for l in mobilenet_layers(ModelVariant(width=0.75)) if l.index == 2)
    assert l2.in_channels == 24


def test_resolution_multiplier():
    layers = mobilenet_layers(ModelVariant(resolution=128))
    assert next(l for l in layers if l.index == 2).in_size == 64
    base = mobilenet_layers()
    for a, b in zip(base, layers):
        if a.kind != "fully_connected":
            assert b.in_size == math.ceil(a.in_size * 128 / 224)


def test_shallow_variant():
    layers = mobilenet_layers(ModelVariant(shallow=True))
    idx = [l.index for l in layers]
    assert not set(range(14, 24)) & set(idx)
    assert len(layers) == 18
    assert len(depthwise_layers(layers)) == 8
    for a, b in zip(layers[1:-2], layers[2:-1]):
        assert a.out_channels == b.in_channels and a.out_size == b.in_size


def test_invalid_variants():
    with pytest.raises(ValueError):
        ModelVariant(width=0.6)
    with pytest.raises(ValueError):
        ModelVariant(resolution=160)
    with pytest.raises(ValueError):
        ModelVariant.named("deep")


def test_layer_config_invariants():
    with pytest.raises(ValueError):
        LayerConfig(2, "conv_dw", 3, 1, 8, 4, 8)
    with pytest.raises(ValueError):
        LayerConfig(3, "conv_pw", 3, 1, 8, 4, 8)
    with pytest.raises(ValueError):
        LayerConfig(3, "pooling", 1, 1, 8, 4, 8)


def test_catalog_json_round_trip():
    for variant in (ModelVariant(), ModelVariant(True, 0.75, 128)):
        layers = mobilenet_layers(variant)
        text = catalog_to_json(layers)
        assert catalog_from_json(text) == layers
        assert json.loads(text)["layers"][1]["input"] == [layers[1].in_size] * 2 + [layers[1].in_channels]


def test_table1_ratios_close():
    report = cost_model(mobilenet_layers())
    p = report.parameter_ratios
    for name, ref in [("Conv 1x1", 74.59), ("Conv DW 3x3", 1.06), ("Conv 3x3", 0.02),
                      ("Fully Connected", 24.33)]:
        assert abs(p[name] - ref) <= 0.5
    m = report.mult_add_ratios
    for name, ref in [("Conv 1x1", 94.86), ("Conv DW 3x3", 3.06), ("Fully Connected", 0.18)]:
        assert abs(m[name] - ref) <= 0.5
    assert sum(lc.mult_adds for lc in report.layers) == 568_740_352
    assert sum(lc.parameters for lc in report.layers) == 4_209_088
    assert "Conv DW 3x3" in format_ratio_table(report)


@pytest.mark.parametrize("variant", [ModelVariant(), ModelVariant(True, 0.5, 128)])
@pytest.mark.parametrize("strategy", ["cbyc", "diag-literal", "standard"])
def test_ratios_sum_to_100(variant, strategy):
    report = cost_model(mobilenet_layers(variant), strategy)
    assert abs(sum(report.mult_add_ratios.values()) - 100) <= 0.01
    assert abs(sum(report.parameter_ratios.values()) - 100) <= 0.01


def test_full_group_equals_dense():
    layer = LayerConfig(6, "conv_dw", 3, 1, 56, 128, 128)
    diag = layer_cost(layer, "diag-compact", GroupingStrategy.by_size(128))
    dense = layer_cost(layer, "standard")
    assert diag.mult_adds == dense.mult_adds == 128 * 128 * 9 * 56 * 56


def test_diag_cost_monotone_in_group_size():
    layer = LayerConfig(10, "conv_dw", 3, 1, 28, 256, 256)
    sizes = [1, 2, 4, 8, 16, 32, 64, 128, 256]
    counts = [layer_cost(layer, "diag-compact", GroupingStrategy.by_size(s)).mult_adds for s in sizes]
    assert counts == sorted(counts)
    assert counts[0] == layer_cost(layer, "cbyc").mult_adds == 256 * 9 * 28 * 28
    for s, c in zip(sizes, counts):
        assert c == s * 256 * 9 * 28 * 28
        assert layer_cost(layer, "diag-literal", GroupingStrategy.by_size(s)).effective_mult_adds \
            == counts[0]


def test_cost_formulas_dense_and_fc():
    pw = LayerConfig(3, "conv_pw", 1, 1, 112, 32, 64)
    c = layer_cost(pw)
    assert c.mult_adds == 64 * 32 * 112 * 112 and c.parameters == 64 * 32
    fc = LayerConfig(28, "fully_connected", 1, 1, 1, 1024, 1000)
    c = layer_cost(fc)
    assert c.mult_adds == c.parameters == 1024 * 1000


def test_workspace_accounting():
    layer = LayerConfig(8, "conv_dw", 3, 2, 56, 128, 128)
    P = 28 * 28
    assert layer_cost(layer, "direct").workspace_bytes == 0
    assert layer_cost(layer, "cbyc", itemsize=8).workspace_bytes == 9 * P * 8
    g = GroupingStrategy.by_size(32)
    lit = layer_cost(layer, "diag-literal", g).workspace_bytes
    cmp_ = layer_cost(layer, "diag-compact", g).workspace_bytes
    assert cmp_ == (32 * 9 * P + 32 * 32 * 9) * 4
    assert lit - cmp_ == 2 * 4 * 32 * 32 * 9 * 4


def test_thread_ratio_layer26_vs_layer2():
    layers = {l.index: l for l in mobilenet_layers()}
    c2 = layer_cost(layers[2], "cbyc")
    c26 = layer_cost(layers[26], "cbyc")
    assert c26.total_work_items * 8 == c2.total_work_items
    # per launch the gap is far larger: 49 vs 12544 output positions
    assert (c26.work_items, c2.work_items) == (49, 12544)


def test_bad_grouping_raises():
    layer = LayerConfig(2, "conv_dw", 3, 1, 8, 6, 6)
    with pytest.raises(ValueError, match="group size must divide"):
        layer_cost(layer, "diag-compact", GroupingStrategy.by_size(4))
    with pytest.raises(ValueError):
        layer_cost(layer, "winograd")


SMALL = [(1, 4, 3, 1), (2, 5, 3, 2), (3, 6, 3, 1), (4, 4, 1, 1), (2, 7, 5, 2),
         (4, 6, 3, 2), (6, 5, 3, 1), (8, 4, 3, 1), (1, 3, 3, 1), (4, 8, 5, 1)]


def oracle_counts(M, F, K, s, seed):
    """Multiplications the oracle executes for each strategy's arithmetic."""
    layer = LayerConfig(2, "conv_dw", K, s, F, M, M)
    spec = layer.conv_spec()
    x = fill_random((1, M, F, F), seed)
    w = fill_random((M, K * K), seed + 1)
    live = {}
    oracle_conv(x, expand_depthwise(w, K), spec, mask=mask_for_groups(M, M, K, M), counter=live)
    dense = {}
    oracle_conv(x, fill_random((M, M * K * K), seed + 2), ConvSpec.dense(M, M, K, s, K // 2),
                counter=dense)
    return layer, live["mults"], dense["mults"]


@pytest.mark.parametrize("M,F,K,s", SMALL)
def test_counters_match_oracle_counts(M, F, K, s):
    layer, live, dense = oracle_counts(M, F, K, s, M + F)
    assert layer_cost(layer, "cbyc").mult_adds == live
    assert layer_cost(layer, "direct").mult_adds == live
    assert layer_cost(layer, "standard").mult_adds == dense
    for S in (1, 2, M):
        if M % S == 0:
            c = layer_cost(layer, "diag-literal", GroupingStrategy.by_size(S))
            # executed: one S-channel dense conv per group; live: the depthwise count
            per_group = oracle_counts(S, F, K, s, M + F)[2]
            assert c.mult_adds == per_group * (M // S)
            assert c.effective_mult_adds == live


def test_masked_mult_adds_counts_live_weights():
    mask = (fill_random((3, 27), 5) > 0).astype(float)
    counter = {}
    spec = ConvSpec.dense(3, 3, 3, 1, 1)
    oracle_conv(fill_random((1, 3, 6, 6), 6), fill_random((3, 27), 7), spec, mask=mask,
                counter=counter)
    assert masked_mult_adds(mask, 6) == counter["mults"]
