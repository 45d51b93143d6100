import operator
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Dict, List

import torch
from typing_extensions import NotRequired, TypedDict


# ──────────────────────────────────────────────
# Enumerations shared across sub-packages
# ──────────────────────────────────────────────
class MaskMode(str, Enum):
    LEARNED = "learned"
    ZERO = "zero"     # conditional coding
    ONE = "one"       # conditional residual coding


class ContextKind(str, Enum):
    HYPERPRIOR_ONLY = "hyper"
    CHARM = "charm"
    CHECKERBOARD = "checkerboard"
    SPATIAL_CHANNEL = "spatial_channel"


class CstbVariant(str, Enum):
    SYMMETRIC_SELF_ATTN = "a"
    CONCAT = "b"
    CROSS_Q_INPUT = "c"
    CROSS_Q_CONDITION = "d"


class QuantMode(str, Enum):
    NOISE = "noise"
    ROUND = "round"


class FrameType(str, Enum):
    INTRA = "I"
    INTER = "P"


class Metric(str, Enum):
    MSE = "mse"
    MSSSIM = "msssim"


class Command(str, Enum):
    TRAIN = "train"
    ENCODE = "encode"
    DECODE = "decode"
    EVAL = "eval"
    ABLATE = "ablate"
    PLOT = "plot"
    SANDBOX = "sandbox"


class PhaseName(str, Enum):
    INTRA_CODING = "intra_coding"
    MOTION_ESTIMATION = "motion_estimation"
    MOTION_CODING = "motion_coding"
    MOTION_COMPENSATION = "motion_compensation"
    INTER_CODING_3F = "inter_coding_3f"
    INTER_CODING_5F = "inter_coding_5f"
    FINETUNE = "finetune"
    FINETUNE_EPA_A = "finetune_epa_a"
    FINETUNE_EPA_B = "finetune_epa_b"


# Wire codes used by the container header
MASK_MODE_CODES: Dict[MaskMode, int] = {MaskMode.LEARNED: 0, MaskMode.ZERO: 1, MaskMode.ONE: 2}
CONTEXT_KIND_CODES: Dict[ContextKind, int] = {
    ContextKind.HYPERPRIOR_ONLY: 0,
    ContextKind.CHARM: 1,
    ContextKind.CHECKERBOARD: 2,
    ContextKind.SPATIAL_CHANNEL: 3,
}

# Numeric floors of the entropy model
SCALE_FLOOR = 0.11
LIKELIHOOD_FLOOR = 2.0 ** -16
PSNR_CAP_DB = 100.0

# Decoded picture buffer capacity
DPB_FRAMES = 3
DPB_FLOWS = 2


# ──────────────────────────────────────────────
# Domain types
# ──────────────────────────────────────────────
@dataclass(frozen=True)
class Frame:
    """One RGB picture in [0,1], shape (3, H, W)."""
    pixels: torch.Tensor
    bit_depth_origin: int = 8

    @property
    def height(self) -> int:
        return int(self.pixels.shape[-2])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[-1])

    def batch(self) -> torch.Tensor:
        """(1, 3, H, W) view for the networks."""
        return self.pixels.unsqueeze(0)


@dataclass
class RawSequence:
    """YUV420 planar 8-bit frames as (Y, U, V) uint8 numpy planes."""
    frames: List[Any]
    width: int
    height: int

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    quality: float
    metric: str = "psnr_rgb"


@dataclass
class ComplexityReport:
    param_count: int
    enc_kmac_per_pixel: float
    dec_kmac_per_pixel: float
    buffer_planes: float
    per_module: Dict[str, float] = field(default_factory=dict)


# ──────────────────────────────────────────────
# LangGraph state for the staged training schedule
# ──────────────────────────────────────────────
class TrainState(TypedDict):
    """
    State schema for the training schedule graph.

    history uses Annotated[..., operator.add] so each phase node can return
    history: [phase_summary] and it gets APPENDED (not replaced).
    """
    phase_index: int
    history: Annotated[List[Dict[str, Any]], operator.add]
    diverged: NotRequired[bool]
    snapshot: NotRequired[str]
    manifest_path: NotRequired[str]
