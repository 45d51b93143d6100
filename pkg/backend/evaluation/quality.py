import math
from typing import Union

import torch
import torch.nn.functional as F
from pytorch_msssim.ssim import _fspecial_gauss_1d, _ssim

from backend.constants import PSNR_CAP_DB, Frame
from backend.utils.exception import check_same_shape

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WIN_SIZE = 11
WIN_SIGMA = 1.5

Picture = Union[Frame, torch.Tensor]


def _as_batch(p: Picture) -> torch.Tensor:
    t = p.pixels if isinstance(p, Frame) else p
    return t.unsqueeze(0) if t.dim() == 3 else t


def msssim_levels(height: int, width: int, max_levels: int = len(MSSSIM_WEIGHTS)) -> int:
    """Largest L with min(H, W) >= 2^(L-1) * 11; at least one scale."""
    side = min(height, width)
    levels = 1
    while levels < max_levels and side >= (2 ** levels) * WIN_SIZE:
        levels += 1
    return levels


def ms_ssim(x: torch.Tensor, y: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """
    Per-image MS-SSIM of (N, C, H, W) batches, differentiable.

    Frames too small for five dyadic scales use the first L weights,
    renormalized to sum to one.
    """
    check_same_shape(x, y, "ms_ssim")
    levels = msssim_levels(x.shape[-2], x.shape[-1])
    weights = torch.tensor(MSSSIM_WEIGHTS[:levels], dtype=x.dtype, device=x.device)
    weights = weights / weights.sum()

    win = _fspecial_gauss_1d(WIN_SIZE, WIN_SIGMA).to(x.device, x.dtype)
    win = win.repeat([x.shape[1]] + [1] * (x.dim() - 1))

    mcs = []
    for i in range(levels):
        ssim_per_channel, cs = _ssim(x, y, data_range=data_range, win=win, size_average=False)
        if i < levels - 1:
            mcs.append(torch.relu(cs))
            padding = [s % 2 for s in x.shape[2:]]
            x = F.avg_pool2d(x, kernel_size=2, padding=padding)
            y = F.avg_pool2d(y, kernel_size=2, padding=padding)

    stacked = torch.stack(mcs + [torch.relu(ssim_per_channel)], dim=0)
    per_channel = torch.prod(stacked ** weights.view(-1, 1, 1), dim=0)
    return per_channel.mean(dim=1)


def psnr_rgb(a: Picture, b: Picture) -> float:
    """10*log10(1/MSE) on [0, 1] data, capped for identical inputs."""
    x, y = _as_batch(a).double(), _as_batch(b).double()
    check_same_shape(x, y, "psnr_rgb")
    mse = float(torch.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def msssim_rgb(a: Picture, b: Picture) -> float:
    x, y = _as_batch(a).double(), _as_batch(b).double()
    return float(ms_ssim(x, y).mean())
