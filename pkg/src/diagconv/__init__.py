"""Depthwise convolution on the CPU by four strategies, with backward passes,
a brute-force oracle, a MobileNet cost model and a benchmark harness."""

from .convops import (
    ConvSpec,
    DiagonalPlan,
    GroupingStrategy,
    conv_depthwise_cbyc,
    conv_depthwise_diag,
    conv_depthwise_direct,
    conv_masked,
    conv_standard,
    mask_for_groups,
    plan_diagonalwise,
)
from .grad import (
    ConvGradients,
    backward_depthwise,
    backward_diag,
    backward_masked,
    backward_standard,
    fd_check,
)
from .tensor import fill_random, tensor_equal_within

__version__ = "0.1.0"
