"""Shared test helpers."""

import numpy as np

from diagconv.convops import ConvSpec
from diagconv.oracle import oracle_depthwise
from diagconv.tensor import fill_random


def depthwise_case(M, F, K, stride, pad, seed, batch=2, precision="double"):
    """Random (spec, x, filters) triple for a depthwise layer."""
    spec = ConvSpec.depthwise(M, K, stride, pad)
    x = fill_random((batch, M, F, F), seed, precision)
    w = fill_random((M, K * K), seed + 1, precision)
    return spec, x, w


def magnitude_bound(x, w, spec):
    """Elementwise sum of |products| feeding each depthwise output."""
    return oracle_depthwise(np.abs(x), np.abs(w), spec)


def assert_scaled_close(out, ref, mag, rel):
    err = np.abs(np.asarray(out, np.float64) - ref)
    assert np.all(err <= rel * mag), f"max scaled error {np.max(err / np.maximum(mag, 1e-300)):.3e}"


# criterion number -> list of (ok, detail); filled by test_acceptance, printed by conftest
ACCEPTANCE: dict = {}


def record(criterion, ok, detail):
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail
