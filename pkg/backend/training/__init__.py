from .data import (
    SyntheticClipConfig,
    SyntheticClipDataset,
    YuvClipDataset,
    build_loader,
    synthetic_clip,
)
from .losses import RdLoss, distortion, flow_loss, rd_loss
from .phases import TRAINING_PLAN, LossKind, PhaseRunner, TrainPhase, build_schedule
from .trainer import Trainer, synthetic_data_factory

__all__ = [
    "LossKind",
    "PhaseRunner",
    "RdLoss",
    "SyntheticClipConfig",
    "SyntheticClipDataset",
    "TRAINING_PLAN",
    "TrainPhase",
    "Trainer",
    "YuvClipDataset",
    "build_loader",
    "distortion",
    "flow_loss",
    "rd_loss",
    "synthetic_clip",
    "synthetic_data_factory",
]
