import math
from dataclasses import dataclass

import torch
from compressai.ops import LowerBound

from backend.constants import LIKELIHOOD_FLOOR, SCALE_FLOOR
from backend.utils.exception import ContractViolation, check_same_shape


@dataclass
class EntropyParams:
    """Per-element mean and scale of the conditional Gaussian, same shape as y."""
    mean: torch.Tensor
    scale: torch.Tensor

    def check(self) -> None:
        check_same_shape(self.mean, self.scale, "entropy params")
        # compared at float32 precision, where the scale bound is held
        floor = torch.tensor(SCALE_FLOOR, dtype=torch.float32)
        if self.scale.numel() and bool(self.scale.min().float().cpu() < floor):
            raise ContractViolation(
                f"scale {float(self.scale.min()):.4f} below floor {SCALE_FLOOR}"
            )


class ScaleBound(torch.nn.Module):
    """Lower-bounds the predicted scale at the floor, keeping gradients above it."""

    def __init__(self, floor: float = SCALE_FLOOR):
        super().__init__()
        self.bound = LowerBound(floor)

    def forward(self, scale: torch.Tensor) -> torch.Tensor:
        return self.bound(scale)


def standard_cumulative(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * torch.erfc(-x / math.sqrt(2.0))


def gaussian_likelihood(y_hat: torch.Tensor, params: EntropyParams) -> torch.Tensor:
    """
    P(y_hat) of a Gaussian convolved with U(-0.5, 0.5), floored per element.

    Evaluated on the lower tail (|y - mu|) for precision far from the mean.
    """
    check_same_shape(y_hat, params.mean, "rate_bits")
    scale = params.scale.clamp_min(SCALE_FLOOR)
    values = torch.abs(y_hat - params.mean)
    upper = standard_cumulative((0.5 - values) / scale)
    lower = standard_cumulative((-0.5 - values) / scale)
    likelihood = upper - lower
    return torch.clamp(likelihood, min=LIKELIHOOD_FLOOR)


def element_bits(y_hat: torch.Tensor, params: EntropyParams) -> torch.Tensor:
    return -torch.log2(gaussian_likelihood(y_hat, params))


def rate_bits(y_hat: torch.Tensor, params: EntropyParams) -> torch.Tensor:
    """Total estimated bits of y_hat under the mean-scale model."""
    return element_bits(y_hat, params).sum()
