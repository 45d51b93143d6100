from .compensation import MotionCompensation, motion_compensate
from .extrapolation import FlowExtrapolator, MotionState, extrapolate_flow
from .flow_net import FlowEstimator, estimate_flow
from .warp import warp

__all__ = [
    "FlowEstimator",
    "FlowExtrapolator",
    "MotionCompensation",
    "MotionState",
    "estimate_flow",
    "extrapolate_flow",
    "motion_compensate",
    "warp",
]
