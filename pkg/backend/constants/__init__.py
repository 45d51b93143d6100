from .codec_constant import (
    CONTEXT_KIND_CODES,
    DPB_FLOWS,
    DPB_FRAMES,
    LIKELIHOOD_FLOOR,
    MASK_MODE_CODES,
    PSNR_CAP_DB,
    SCALE_FLOOR,
    Command,
    ComplexityReport,
    ContextKind,
    CstbVariant,
    Frame,
    FrameType,
    MaskMode,
    Metric,
    PhaseName,
    QuantMode,
    RawSequence,
    RdPoint,
    TrainState,
)

__all__ = [
    "CONTEXT_KIND_CODES",
    "DPB_FLOWS",
    "DPB_FRAMES",
    "LIKELIHOOD_FLOOR",
    "MASK_MODE_CODES",
    "PSNR_CAP_DB",
    "SCALE_FLOOR",
    "Command",
    "ComplexityReport",
    "ContextKind",
    "CstbVariant",
    "Frame",
    "FrameType",
    "MaskMode",
    "Metric",
    "PhaseName",
    "QuantMode",
    "RawSequence",
    "RdPoint",
    "TrainState",
]
