"""Depthwise convolution strategies, including block-diagonal (diagonalwise) grouping."""

from .forward import (
    channel_spec,
    conv_depthwise_cbyc,
    conv_depthwise_diag,
    conv_depthwise_direct,
    conv_masked,
    conv_standard,
)
from .plan import (
    DiagonalGroup,
    DiagonalPlan,
    as_filters,
    block_diagonal,
    diagonal_blocks,
    diagonal_mask,
    plan_diagonalwise,
)
from .spec import ConvSpec, GroupingStrategy, as_mask, mask_for_groups

__all__ = [
    "ConvSpec", "GroupingStrategy", "DiagonalGroup", "DiagonalPlan",
    "as_filters", "as_mask", "block_diagonal", "diagonal_blocks", "diagonal_mask",
    "mask_for_groups", "plan_diagonalwise", "channel_spec",
    "conv_standard", "conv_depthwise_cbyc", "conv_depthwise_direct",
    "conv_depthwise_diag", "conv_masked",
]
