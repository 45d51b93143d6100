import math
from dataclasses import dataclass
from typing import List

import torch
from torch import nn

from backend.constants.presets import ConditionalCodecConfig
from backend.transformer.cstb import ConditionalSwinBlock
from backend.utils.exception import ContractViolation


@dataclass
class ConditionPyramid:
    """Condition features C1, C2, C3 at strides s1 < s2 < s3, derived from x_c only."""
    c1: torch.Tensor
    c2: torch.Tensor
    c3: torch.Tensor

    def levels(self) -> List[torch.Tensor]:
        return [self.c1, self.c2, self.c3]


def _down(in_ch: int, out_ch: int, factor: int) -> nn.Sequential:
    steps = int(math.log2(factor))
    layers: List[nn.Module] = []
    for i in range(steps):
        layers.append(nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, 3, stride=2, padding=1))
        if i < steps - 1:
            layers.append(nn.LeakyReLU(0.1))
    return nn.Sequential(*layers)


def _up(in_ch: int, out_ch: int, factor: int) -> nn.Sequential:
    steps = int(math.log2(factor))
    layers: List[nn.Module] = []
    for i in range(steps):
        layers.append(nn.Conv2d(in_ch if i == 0 else out_ch, out_ch * 4, 3, padding=1))
        layers.append(nn.PixelShuffle(2))
        if i < steps - 1:
            layers.append(nn.LeakyReLU(0.1))
    return nn.Sequential(*layers)


def _ratios(strides) -> List[int]:
    s1, s2, s3 = strides
    return [s1, s2 // s1, s3 // s2]


class ConditionExtractor(nn.Module):
    """Multi-scale feature extractor FE on the conditioning signal."""

    def __init__(self, cfg: ConditionalCodecConfig):
        super().__init__()
        self.total_stride = cfg.total_stride
        ratios = _ratios(cfg.strides)
        widths = cfg.widths
        self.stage1 = nn.Sequential(_down(cfg.in_channels, widths[0], ratios[0]), nn.LeakyReLU(0.1),
                                    nn.Conv2d(widths[0], widths[0], 3, padding=1))
        self.stage2 = nn.Sequential(nn.LeakyReLU(0.1), _down(widths[0], widths[1], ratios[1]),
                                    nn.LeakyReLU(0.1), nn.Conv2d(widths[1], widths[1], 3, padding=1))
        self.stage3 = nn.Sequential(nn.LeakyReLU(0.1), _down(widths[1], widths[2], ratios[2]),
                                    nn.LeakyReLU(0.1), nn.Conv2d(widths[2], widths[2], 3, padding=1))

    def forward(self, x_c: torch.Tensor) -> ConditionPyramid:
        h, w = x_c.shape[-2:]
        if h % self.total_stride or w % self.total_stride:
            raise ContractViolation(
                f"extract_conditions: {h}x{w} is not a multiple of stride {self.total_stride}"
            )
        c1 = self.stage1(x_c)
        c2 = self.stage2(c1)
        c3 = self.stage3(c2)
        return ConditionPyramid(c1, c2, c3)


def _blocks(cfg: ConditionalCodecConfig, reverse: bool = False) -> nn.ModuleList:
    pairs = list(zip(cfg.widths, cfg.cstb.layers_per_block))
    if reverse:
        pairs = pairs[::-1]
    return nn.ModuleList([
        ConditionalSwinBlock(width, depth + cfg.extra_layers, cfg.cstb) for width, depth in pairs
    ])


class AnalysisTransform(nn.Module):
    """G_enc: conv downsampling interleaved with CSTBs, condition injected per stride."""

    def __init__(self, cfg: ConditionalCodecConfig):
        super().__init__()
        ratios = _ratios(cfg.strides)
        widths = cfg.widths
        self.down = nn.ModuleList([
            _down(cfg.in_channels, widths[0], ratios[0]),
            _down(widths[0], widths[1], ratios[1]),
            _down(widths[1], widths[2], ratios[2]),
        ])
        self.blocks = _blocks(cfg)
        self.out = nn.Conv2d(widths[2], cfg.latent_channels, 3, padding=1)

    def forward(self, mixed: torch.Tensor, cond: ConditionPyramid) -> torch.Tensor:
        h = mixed
        for down, block, c in zip(self.down, self.blocks, cond.levels()):
            h = block(down(h), c)
        return self.out(h)


class SynthesisTransform(nn.Module):
    """G_dec: mirror of the analysis transform, PixelShuffle upsampling."""

    def __init__(self, cfg: ConditionalCodecConfig):
        super().__init__()
        ratios = _ratios(cfg.strides)
        widths = cfg.widths
        self.inp = nn.Conv2d(cfg.latent_channels, widths[2], 3, padding=1)
        self.blocks = _blocks(cfg, reverse=True)
        self.up = nn.ModuleList([
            _up(widths[2], widths[1], ratios[2]),
            _up(widths[1], widths[0], ratios[1]),
            _up(widths[0], cfg.in_channels, ratios[0]),
        ])

    def forward(self, y_hat: torch.Tensor, cond: ConditionPyramid) -> torch.Tensor:
        h = self.inp(y_hat)
        for block, up, c in zip(self.blocks, self.up, cond.levels()[::-1]):
            h = up(block(h, c))
        return h


def extract_conditions(net: ConditionExtractor, x_c: torch.Tensor) -> ConditionPyramid:
    return net(x_c)


def analysis_transform(net: AnalysisTransform, mixed: torch.Tensor, cond: ConditionPyramid) -> torch.Tensor:
    return net(mixed, cond)


def synthesis_transform(net: SynthesisTransform, y_hat: torch.Tensor, cond: ConditionPyramid) -> torch.Tensor:
    return net(y_hat, cond)
