from typing import Tuple

import torch
from compressai.layers import GDN
from torch import nn

from backend.constants import ContextKind, QuantMode
from backend.constants.presets import ContextConfig
from backend.entropy import LatentCoding, LatentEntropyModel
from backend.utils.exception import ContractViolation

INTRA_STRIDE = 8


class IntraCodec(nn.Module):
    """Convolutional hyperprior image codec (GDN transforms, stride 8)."""

    def __init__(self, width: int = 64, latent_channels: int = 96, hyper_channels: int = 64):
        super().__init__()
        self.latent_channels = latent_channels
        self.analysis = nn.Sequential(
            nn.Conv2d(3, width, 5, stride=2, padding=2), GDN(width),
            nn.Conv2d(width, width, 5, stride=2, padding=2), GDN(width),
            nn.Conv2d(width, latent_channels, 5, stride=2, padding=2),
        )
        self.synthesis = nn.Sequential(
            nn.ConvTranspose2d(latent_channels, width, 5, stride=2, padding=2, output_padding=1),
            GDN(width, inverse=True),
            nn.ConvTranspose2d(width, width, 5, stride=2, padding=2, output_padding=1),
            GDN(width, inverse=True),
            nn.ConvTranspose2d(width, 3, 5, stride=2, padding=2, output_padding=1),
        )
        self.entropy = LatentEntropyModel(
            latent_channels, hyper_channels, ContextConfig(kind=ContextKind.HYPERPRIOR_ONLY)
        )

    def _check(self, x: torch.Tensor) -> None:
        grain = INTRA_STRIDE * 4
        if x.shape[-2] % grain or x.shape[-1] % grain:
            raise ContractViolation(f"intra frame {tuple(x.shape[-2:])} is not a multiple of {grain}")

    def forward(self, x: torch.Tensor, mode: QuantMode | str = QuantMode.NOISE,
                straight_through: bool = False) -> Tuple[torch.Tensor, LatentCoding]:
        self._check(x)
        coding = self.entropy(self.analysis(x), mode, straight_through=straight_through)
        return self.synthesis(coding.y_hat).clamp(0.0, 1.0), coding

    @torch.no_grad()
    def compress(self, x: torch.Tensor) -> Tuple[bytes, bytes, torch.Tensor, float]:
        self._check(x)
        hyper, main, y_hat, _, bits = self.entropy.compress(self.analysis(x))
        return hyper, main, self.synthesis(y_hat).clamp(0.0, 1.0), bits

    @torch.no_grad()
    def decompress(self, hyper: bytes, main: bytes, height: int, width: int) -> torch.Tensor:
        shape = (1, self.latent_channels, height // INTRA_STRIDE, width // INTRA_STRIDE)
        y_hat, _ = self.entropy.decompress(hyper, main, shape)
        return self.synthesis(y_hat).clamp(0.0, 1.0)
