import torch
import torch.nn.functional as F
from torch import nn

from backend.constants import MaskMode
from backend.utils.exception import check_same_shape, check_spatial_match


def flow_gradient_magnitude(flow: torch.Tensor) -> torch.Tensor:
    """|∇f| summed over both flow components, (B, 1, H, W)."""
    padded = F.pad(flow, (0, 1, 0, 1), mode="replicate")
    dx = padded[..., :-1, 1:] - padded[..., :-1, :-1]
    dy = padded[..., 1:, :-1] - padded[..., :-1, :-1]
    return torch.sqrt((dx ** 2 + dy ** 2).sum(dim=1, keepdim=True) + 1e-6)


class MaskGenerator(nn.Module):
    """
    Soft mask m in [0,1] from decoder-side signals only (x_c and f̂_t).

    One channel is produced and broadcast to the three colour channels.
    """

    def __init__(self, width: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(6, width, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(width, width, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(width, width, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(width, 1, 3, padding=1),
        )

    def forward(self, x_c: torch.Tensor, f_hat: torch.Tensor) -> torch.Tensor:
        check_spatial_match(x_c, f_hat, "generate_mask")
        features = torch.cat([x_c, f_hat, flow_gradient_magnitude(f_hat)], dim=1)
        return torch.sigmoid(self.net(features))


def generate_mask(net: MaskGenerator, x_c: torch.Tensor, f_hat: torch.Tensor,
                  mode: MaskMode = MaskMode.LEARNED) -> torch.Tensor:
    """Learned mask, or the constant 0 / 1 masks of the two reference coding modes."""
    if mode is MaskMode.ZERO:
        return x_c.new_zeros(x_c.shape[0], 1, *x_c.shape[-2:])
    if mode is MaskMode.ONE:
        return x_c.new_ones(x_c.shape[0], 1, *x_c.shape[-2:])
    return net(x_c, f_hat)


def mix_input(x_t: torch.Tensor, x_c: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """x_t - m ⊙ x_c; equals (1-m)⊙x_t + m⊙(x_t-x_c). Not clipped."""
    check_same_shape(x_t, x_c, "mix_input")
    return x_t - m * x_c


def reconstruct(decoded: torch.Tensor, x_c: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    check_same_shape(decoded, x_c, "reconstruct")
    return (decoded + m * x_c).clamp(0.0, 1.0)
