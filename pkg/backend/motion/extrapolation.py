from collections import deque
from typing import Deque, Optional

import torch
import torch.nn.functional as F
from torch import nn

from backend.constants import DPB_FLOWS, DPB_FRAMES


class MotionState:
    """
    Decoded picture buffer of the motion path.

    Holds at most the last 3 decoded frames and the last 2 decoded flows,
    newest first. One instance per coding session.
    """

    def __init__(self, height: int, width: int):
        self.height = height
        self.width = width
        self.decoded_frames: Deque[torch.Tensor] = deque(maxlen=DPB_FRAMES)
        self.decoded_flows: Deque[torch.Tensor] = deque(maxlen=DPB_FLOWS)

    def reset(self) -> None:
        self.decoded_frames.clear()
        self.decoded_flows.clear()

    def push(self, frame: torch.Tensor, flow: Optional[torch.Tensor] = None, detach: bool = True) -> None:
        """Newest first; ``detach=False`` keeps the graph for error-propagation-aware training."""
        self.decoded_frames.appendleft(frame.detach() if detach else frame)
        if flow is not None:
            self.decoded_flows.appendleft(flow.detach() if detach else flow)

    @property
    def is_full(self) -> bool:
        return len(self.decoded_frames) == DPB_FRAMES and len(self.decoded_flows) == DPB_FLOWS

    @property
    def latest(self) -> torch.Tensor:
        return self.decoded_frames[0]

    def planes(self) -> int:
        """Occupancy in full-resolution feature-map equivalents."""
        return 3 * len(self.decoded_frames) + 2 * len(self.decoded_flows)

    def zero_flow(self) -> torch.Tensor:
        if not self.decoded_frames:
            return torch.zeros(1, 2, self.height, self.width)
        like = self.decoded_frames[0]
        return like.new_zeros(like.shape[0], 2, self.height, self.width)


class FlowExtrapolator(nn.Module):
    """Small U-Net predicting f_c from (x̂_{t-1..t-3}, f̂_{t-1}, f̂_{t-2})."""

    def __init__(self, width: int = 24):
        super().__init__()
        in_ch = 3 * DPB_FRAMES + 2 * DPB_FLOWS
        self.enc1 = nn.Sequential(nn.Conv2d(in_ch, width, 3, padding=1), nn.LeakyReLU(0.1))
        self.enc2 = nn.Sequential(
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(width * 2, width * 2, 3, padding=1), nn.LeakyReLU(0.1),
        )
        self.dec = nn.Sequential(nn.Conv2d(width * 3, width, 3, padding=1), nn.LeakyReLU(0.1))
        self.out = nn.Conv2d(width, 2, 3, padding=1)

    def forward(self, frames: torch.Tensor, flows: torch.Tensor) -> torch.Tensor:
        x1 = self.enc1(torch.cat([frames, flows], dim=1))
        x2 = self.enc2(x1)
        up = F.interpolate(x2, size=x1.shape[-2:], mode="bilinear", align_corners=False)
        # Extrapolate from the newest decoded flow
        return flows[:, :2] + self.out(self.dec(torch.cat([x1, up], dim=1)))

    def extrapolate(self, state: MotionState) -> torch.Tensor:
        # Cold start: the first two P-frames of a GOP lack history
        if not state.is_full:
            return state.zero_flow()
        frames = torch.cat(list(state.decoded_frames), dim=1)
        flows = torch.cat(list(state.decoded_flows), dim=1)
        return self(frames, flows)


def extrapolate_flow(net: FlowExtrapolator, state: MotionState) -> torch.Tensor:
    return net.extrapolate(state)
