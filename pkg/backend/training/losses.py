from dataclasses import dataclass
from typing import Union

import torch

from backend.constants import Frame, Metric
from backend.evaluation.quality import ms_ssim
from backend.motion import warp
from backend.utils.exception import check_same_shape

Picture = Union[Frame, torch.Tensor]


@dataclass
class RdLoss:
    rate_bpp: torch.Tensor
    distortion: torch.Tensor
    lam: float

    @property
    def total(self) -> torch.Tensor:
        return self.rate_bpp + self.lam * self.distortion

    def __add__(self, other: "RdLoss") -> "RdLoss":
        # Cascaded frames share one lambda
        return RdLoss(self.rate_bpp + other.rate_bpp, self.distortion + other.distortion, self.lam)


def _tensor(p: Picture) -> torch.Tensor:
    t = p.pixels if isinstance(p, Frame) else p
    return t.unsqueeze(0) if t.dim() == 3 else t


def distortion(x: Picture, x_hat: Picture, metric: Metric | str = Metric.MSE) -> torch.Tensor:
    a, b = _tensor(x), _tensor(x_hat)
    check_same_shape(a, b, "distortion")
    if Metric(metric) is Metric.MSSSIM:
        return 1.0 - ms_ssim(a, b).mean()
    return torch.mean((a - b) ** 2)


def rd_loss(x: Picture, x_hat: Picture, bits: torch.Tensor | float, lam: float,
            metric: Metric | str = Metric.MSE) -> RdLoss:
    """R + lambda * D with R in bits per pixel of the batch."""
    a = _tensor(x)
    b, _, h, w = a.shape
    bits = torch.as_tensor(bits, dtype=a.dtype, device=a.device)
    return RdLoss(rate_bpp=bits / (b * h * w), distortion=distortion(x, x_hat, metric), lam=lam)


def flow_loss(target: torch.Tensor, reference: torch.Tensor, flow: torch.Tensor,
              smoothness: float = 0.01) -> torch.Tensor:
    """Photometric warping error plus first-order flow smoothness."""
    photometric = torch.mean((warp(reference, flow) - target) ** 2)
    dx = flow[..., :, 1:] - flow[..., :, :-1]
    dy = flow[..., 1:, :] - flow[..., :-1, :]
    return photometric + smoothness * (dx.abs().mean() + dy.abs().mean())
