import torch
from torch import nn

from backend.utils.exception import check_same_shape

# x_c may overshoot [0,1]; it only has to stay finite
PREDICTOR_RANGE = (-0.5, 1.5)


class _ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(self.act(x))))


class MotionCompensation(nn.Module):
    """MCNet: refines the warped frame using x̂_{t-1}; six conv layers."""

    def __init__(self, width: int = 32):
        super().__init__()
        self.head = nn.Conv2d(6, width, 3, padding=1)
        self.body = nn.Sequential(_ResBlock(width), _ResBlock(width))
        self.tail = nn.Conv2d(width, 3, 3, padding=1)

    def forward(self, warped: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
        check_same_shape(warped, reference, "motion_compensate")
        refined = warped + self.tail(self.body(self.head(torch.cat([warped, reference], dim=1))))
        return refined.clamp(*PREDICTOR_RANGE)


def motion_compensate(net: MotionCompensation, warped: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    return net(warped, reference)
