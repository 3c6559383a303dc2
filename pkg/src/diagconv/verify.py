"""Quick self-check: strategies against the oracle, gradients against finite differences."""

from __future__ import annotations

import numpy as np

from .convops import (
    ConvSpec,
    GroupingStrategy,
    conv_depthwise_cbyc,
    conv_depthwise_diag,
    conv_depthwise_direct,
    conv_masked,
    conv_standard,
    plan_diagonalwise,
)
from .grad import backward_depthwise, backward_diag, backward_standard, fd_check, sgd_step
from .oracle import expand_depthwise, oracle_conv, oracle_depthwise
from .tensor import fill_random, max_rel_diff

CASES = [
    # (channels, size, kernel, stride, padding)
    (4, 6, 3, 1, 1),
    (8, 7, 3, 2, 1),
    (6, 5, 1, 1, 0),
    (8, 9, 5, 2, 2),
]


def _check_forward(M, F, K, s, p, seed):
    spec = ConvSpec.depthwise(M, K, s, p)
    x = fill_random((2, M, F, F), seed)
    w = fill_random((M, K * K), seed + 1)
    ref = oracle_depthwise(x, w, spec)
    outs = [conv_depthwise_cbyc(x, w, spec), conv_depthwise_direct(x, w, spec)]
    for mode in ("literal", "compact"):
        for g in (GroupingStrategy.none(), GroupingStrategy.by_count(2)):
            outs.append(conv_depthwise_diag(x, plan_diagonalwise(w, spec, g, mode), spec))
    return max(max_rel_diff(o, ref) for o in outs)


def _check_gradients(M, F, K, s, p, seed):
    spec = ConvSpec.depthwise(M, K, s, p)
    x = fill_random((2, M, F, F), seed)
    w = fill_random((M, K * K), seed + 1)
    d = fill_random(spec.output_shape(x.shape), seed + 2)
    g = backward_depthwise(x, w, spec, d, "direct")
    err_w = fd_check(lambda t: oracle_depthwise(x, t.reshape(w.shape), spec), w, g.d_weights, d)
    err_x = fd_check(lambda t: oracle_depthwise(t.reshape(x.shape), w, spec), x, g.d_input, d)
    return max(err_w, err_x)


def run_checks(log=print) -> bool:
    ok = True

    def report(name, passed, detail):
        nonlocal ok
        ok &= bool(passed)
        log(f"{'PASS' if passed else 'FAIL'}  {name:<44} {detail}")

    for i, case in enumerate(CASES):
        err = _check_forward(*case, seed=500 + 10 * i)
        report(f"forward strategies vs oracle {case}", err <= 1e-12, f"max rel {err:.2e}")
    for i, case in enumerate(CASES[:2]):
        err = _check_gradients(*case, seed=600 + 10 * i)
        report(f"gradients vs finite differences {case}", err <= 1e-6, f"max rel {err:.2e}")

    spec = ConvSpec.dense(3, 2, 3, 1, 1)
    x = fill_random((1, 3, 5, 5), 700)
    w = fill_random(spec.weight_shape, 701)
    err = max_rel_diff(conv_standard(x, w, spec), oracle_conv(x, w, spec))
    report("standard conv vs oracle", err <= 1e-12, f"max rel {err:.2e}")
    d = fill_random(spec.output_shape(x.shape), 702)
    g = backward_standard(x, w, spec, d)
    err = fd_check(lambda t: oracle_conv(x, t.reshape(w.shape), spec), w, g.d_weights, d)
    report("standard conv weight gradient", err <= 1e-6, f"max rel {err:.2e}")

    dspec = ConvSpec.depthwise(4, 3, 1, 1)
    x = fill_random((1, 4, 6, 6), 710)
    wd = fill_random((4, 9), 711)
    out = conv_masked(x, expand_depthwise(wd, 3), dspec.connectivity_mask(), dspec)
    err = max_rel_diff(out, oracle_depthwise(x, wd, dspec))
    report("masked conv with depthwise mask", err <= 1e-12, f"max rel {err:.2e}")

    plan = plan_diagonalwise(wd, dspec, GroupingStrategy.by_size(2), "literal")
    d = fill_random(dspec.output_shape(x.shape), 712)
    for _ in range(10):
        sgd_step(plan, backward_diag(x, plan, dspec, d).d_weights, 0.01)
    off = np.concatenate([grp.weights[grp.mask == 0] for grp in plan.groups])
    report("off-diagonal weights after 10 SGD steps", not off.view(np.uint64).any(),
           f"{off.size} entries")
    return ok
