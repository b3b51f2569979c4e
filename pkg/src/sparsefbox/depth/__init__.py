"""Halfspace, band and revised functional depths and directional outlyingness."""

from .functional import (
    MFHD,
    DepthError,
    DepthReport,
    WeightScheme,
    depth_ranks,
    mbd,
    mfhd,
    revised_depth,
    time_weights,
)
from .halfspace import halfspace_depth, pointwise_depth, unit_directions
from .outlyingness import DirectionalOutlyingness, OutlyingnessReport, directional_outlyingness

__all__ = [
    "MFHD",
    "DepthError",
    "DepthReport",
    "DirectionalOutlyingness",
    "OutlyingnessReport",
    "WeightScheme",
    "depth_ranks",
    "directional_outlyingness",
    "halfspace_depth",
    "mbd",
    "mfhd",
    "pointwise_depth",
    "revised_depth",
    "time_weights",
    "unit_directions",
]
