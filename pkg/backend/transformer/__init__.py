from .cstb import ConditionalSwinBlock, cstb_forward
from .swin import SwinLayer, WindowAttention
from .transforms import (
    AnalysisTransform,
    ConditionExtractor,
    ConditionPyramid,
    SynthesisTransform,
    analysis_transform,
    extract_conditions,
    synthesis_transform,
)

__all__ = [
    "AnalysisTransform",
    "ConditionExtractor",
    "ConditionPyramid",
    "ConditionalSwinBlock",
    "SwinLayer",
    "SynthesisTransform",
    "WindowAttention",
    "analysis_transform",
    "cstb_forward",
    "extract_conditions",
    "synthesis_transform",
]
