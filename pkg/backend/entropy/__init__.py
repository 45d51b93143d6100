from .context import (
    HyperAnalysis,
    HyperSynthesis,
    LatentCoding,
    LatentEntropyModel,
    checkerboard_mask,
    model_probabilities,
)
from .ctm import ChannelTransformModule, channel_correlation, ctm_forward, ctm_inverse_side
from .factorized import FactorizedPrior, factorized_prior_bits
from .gaussian import EntropyParams, element_bits, gaussian_likelihood, rate_bits
from .quantize import quantize, quantize_ste, round_half_away

__all__ = [
    "ChannelTransformModule",
    "EntropyParams",
    "FactorizedPrior",
    "HyperAnalysis",
    "HyperSynthesis",
    "LatentCoding",
    "LatentEntropyModel",
    "channel_correlation",
    "checkerboard_mask",
    "ctm_forward",
    "ctm_inverse_side",
    "element_bits",
    "factorized_prior_bits",
    "gaussian_likelihood",
    "model_probabilities",
    "quantize",
    "quantize_ste",
    "rate_bits",
    "round_half_away",
]
