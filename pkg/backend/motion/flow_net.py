import torch
import torch.nn.functional as F
from torch import nn

from backend.motion.warp import warp
from backend.utils.exception import ContractViolation, check_same_shape


class _FlowRefiner(nn.Sequential):
    """One pyramid level: (target, warped reference, current flow) -> flow update."""

    def __init__(self, width: int):
        super().__init__(
            nn.Conv2d(8, width, 5, padding=2), nn.ReLU(inplace=True),
            nn.Conv2d(width, width * 2, 5, padding=2), nn.ReLU(inplace=True),
            nn.Conv2d(width * 2, width, 5, padding=2), nn.ReLU(inplace=True),
            nn.Conv2d(width, width // 2, 5, padding=2), nn.ReLU(inplace=True),
            nn.Conv2d(width // 2, 2, 5, padding=2),
        )


class FlowEstimator(nn.Module):
    """
    Coarse-to-fine pyramid flow network, trained from scratch.

    Returns backward flow f such that warp(reference, f) approximates target.
    """

    def __init__(self, levels: int = 3, width: int = 32):
        super().__init__()
        self.levels = levels
        self.refiners = nn.ModuleList([_FlowRefiner(width) for _ in range(levels)])

    def forward(self, target: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
        check_same_shape(target, reference, "estimate_flow")
        grain = 2 ** (self.levels - 1)
        if target.shape[-1] % grain or target.shape[-2] % grain:
            raise ContractViolation(
                f"estimate_flow: size {tuple(target.shape[-2:])} not divisible by {grain}"
            )

        targets, references = [target], [reference]
        for _ in range(self.levels - 1):
            targets.insert(0, F.avg_pool2d(targets[0], 2))
            references.insert(0, F.avg_pool2d(references[0], 2))

        b, _, h, w = targets[0].shape
        flow = target.new_zeros(b, 2, h, w)
        for level, refiner in enumerate(self.refiners):
            if level > 0:
                flow = F.interpolate(flow, scale_factor=2, mode="bilinear", align_corners=False) * 2.0
            warped = warp(references[level], flow)
            flow = flow + refiner(torch.cat([targets[level], warped, flow], dim=1))
        return flow


def estimate_flow(net: FlowEstimator, target: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    return net(target, reference)
