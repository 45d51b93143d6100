import torch
import torch.nn.functional as F
from einops import rearrange
from torch import nn


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel axis of a (B, C, H, W) map, position by position."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        x = rearrange(x, "b c h w -> b (h w) c")
        return rearrange(self.norm(x), "b (h w) c -> b c h w", h=h, w=w)


class ChannelAttention(nn.Module):
    """Multi-head attention across channels; q/k/v are C x (H*W) per head."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.temperature = nn.Parameter(torch.ones(heads, 1, 1))
        self.qkv = nn.Conv2d(dim, dim * 3, kernel_size=1)
        self.project_out = nn.Conv2d(dim, dim, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        q, k, v = self.qkv(x).chunk(3, dim=1)
        q = rearrange(q, "b (head c) h w -> b head c (h w)", head=self.heads)
        k = rearrange(k, "b (head c) h w -> b head c (h w)", head=self.heads)
        v = rearrange(v, "b (head c) h w -> b head c (h w)", head=self.heads)

        q = F.normalize(q, dim=-1)
        k = F.normalize(k, dim=-1)

        attn = (q @ k.transpose(-2, -1)) * self.temperature
        attn = attn.softmax(dim=-1)
        out = attn @ v

        out = rearrange(out, "b head c (h w) -> b (head c) h w", head=self.heads, h=h, w=w)
        return self.project_out(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, expansion_factor: float = 2.0):
        super().__init__()
        hidden = int(dim * expansion_factor)
        self.net = nn.Sequential(
            nn.Conv2d(dim, hidden, 1),
            nn.GELU(),
            nn.Conv2d(hidden, dim, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class ChannelTransformModule(nn.Module):
    """
    CTM: one channel-attention transformer block on the latent.

    Only pointwise projections are used, so the block commutes with any
    permutation of spatial positions. Encoder and decoder sides are two
    separately trained instances; neither inverts the other.
    """

    def __init__(self, dim: int, heads: int = 4, expansion_factor: float = 2.0):
        super().__init__()
        self.norm1 = ChannelLayerNorm(dim)
        self.attn = ChannelAttention(dim, heads)
        self.norm2 = ChannelLayerNorm(dim)
        self.ffn = FeedForward(dim, expansion_factor)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


def ctm_forward(ctm: ChannelTransformModule, y: torch.Tensor) -> torch.Tensor:
    return ctm(y)


def ctm_inverse_side(ctm: ChannelTransformModule, y_hat: torch.Tensor) -> torch.Tensor:
    return ctm(y_hat)


def channel_correlation(y: torch.Tensor) -> float:
    """Mean absolute off-diagonal correlation between latent channels."""
    flat = rearrange(y.detach().double(), "b c h w -> c (b h w)")
    flat = flat - flat.mean(dim=1, keepdim=True)
    std = flat.std(dim=1, keepdim=True).clamp_min(1e-12)
    corr = (flat / std) @ (flat / std).t() / (flat.shape[1] - 1)
    c = corr.shape[0]
    off = corr.abs().sum() - corr.diagonal().abs().sum()
    return float(off / (c * (c - 1)))
