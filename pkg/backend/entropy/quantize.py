from typing import Optional

import torch

from backend.constants import QuantMode


def round_half_away(x: torch.Tensor) -> torch.Tensor:
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)


def quantize(y: torch.Tensor, mode: QuantMode | str, means: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    noise: y + u, u ~ U(-0.5, 0.5)   (training surrogate)
    round: means + round_half_away(y - means)
    """
    mode = QuantMode(mode)
    if mode is QuantMode.NOISE:
        return y + torch.empty_like(y).uniform_(-0.5, 0.5)
    if means is None:
        return round_half_away(y)
    return means + round_half_away(y - means)


def quantize_ste(y: torch.Tensor, means: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Round mode with a straight-through gradient."""
    hard = quantize(y, QuantMode.ROUND, means)
    return y + (hard - y).detach()


def symbols(y: torch.Tensor, means: torch.Tensor) -> torch.Tensor:
    """Integer symbols handed to the range coder."""
    return round_half_away(y - means).to(torch.int64)
