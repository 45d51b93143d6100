import torch
from einops import rearrange
from torch import nn

from backend.constants import CstbVariant
from backend.constants.presets import CstbConfig
from backend.transformer.swin import SwinLayer
from backend.utils.exception import ContractViolation, check_spatial_match


class ConditionalSwinBlock(nn.Module):
    """
    Conditional Swin-Transformer block: updates an input feature map using a
    co-located condition map of the same width and stride.

    Variants:
        a  joint window self-attention over both streams, then a residual 1x1 fusion
        b  channel concat, residual 1x1 reduction, then plain Swin layers
        c  cross-attention, queries from the input
        d  cross-attention, queries from the condition
    """

    def __init__(self, dim: int, depth: int, cfg: CstbConfig, drop_path: float = 0.0):
        super().__init__()
        self.dim = dim
        self.variant = CstbVariant(cfg.variant)
        shifts = cfg.shifts(depth)

        if self.variant is CstbVariant.SYMMETRIC_SELF_ATTN:
            mode = "joint"
        elif self.variant is CstbVariant.CONCAT:
            mode = "self"
        else:
            mode = "cross"

        self.layers = nn.ModuleList([
            SwinLayer(
                dim, cfg.heads, cfg.window, shift=shifts[i], mlp_ratio=cfg.mlp_ratio, mode=mode,
                query_from_condition=self.variant is CstbVariant.CROSS_Q_CONDITION,
                drop_path=drop_path,
            )
            for i in range(depth)
        ])

        # Variant b always needs the channel reduction; for a it is the fusion of both streams
        if self.variant is CstbVariant.CONCAT or (self.variant is CstbVariant.SYMMETRIC_SELF_ATTN and cfg.fuse):
            self.fuse = nn.Conv2d(dim * 2, dim, 1)
        else:
            self.fuse = None

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        check_spatial_match(x, c, "cstb_forward")
        if x.shape[1] != self.dim or c.shape[1] != self.dim:
            raise ContractViolation(
                f"cstb_forward: expected {self.dim} channels, got input {x.shape[1]} condition {c.shape[1]}"
            )

        if self.variant is CstbVariant.CONCAT:
            x = x + self.fuse(torch.cat([x, c], dim=1))

        h = rearrange(x, "b c h w -> b h w c")
        hc = rearrange(c, "b c h w -> b h w c")

        if self.variant is CstbVariant.SYMMETRIC_SELF_ATTN:
            for layer in self.layers:
                h, hc = layer(h, hc)
            h = rearrange(h, "b h w c -> b c h w")
            if self.fuse is None:
                return h
            hc = rearrange(hc, "b h w c -> b c h w")
            return h + self.fuse(torch.cat([h, hc], dim=1))

        for layer in self.layers:
            h = layer(h) if self.variant is CstbVariant.CONCAT else layer(h, hc)
        return rearrange(h, "b h w c -> b c h w")


def cstb_forward(block: ConditionalSwinBlock, input_tokens: torch.Tensor,
                 cond_tokens: torch.Tensor) -> torch.Tensor:
    return block(input_tokens, cond_tokens)
