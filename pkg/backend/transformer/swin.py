from typing import Optional, Tuple

import torch
from einops import rearrange
from timm.layers import DropPath, trunc_normal_
from torch import nn

from backend.utils.exception import ContractViolation


def relative_position_index(window: int, table_window: int) -> torch.Tensor:
    """(N, N) indices into a (2*table_window-1)^2 bias table for a window of side ``window``."""
    coords = torch.stack(torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij"))
    coords = coords.flatten(1)
    rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0)
    rel = rel + (table_window - 1)
    return rel[..., 0] * (2 * table_window - 1) + rel[..., 1]


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    return rearrange(x, "b (nh wh) (nw ww) c -> (b nh nw) (wh ww) c", wh=window, ww=window)


def window_reverse(windows: torch.Tensor, window: int, height: int, width: int) -> torch.Tensor:
    return rearrange(
        windows, "(b nh nw) (wh ww) c -> b (nh wh) (nw ww) c",
        nh=height // window, nw=width // window, wh=window, ww=window,
    )


def shifted_window_mask(height: int, width: int, window: int, shift: int,
                        dtype: torch.dtype, device) -> torch.Tensor:
    """Additive (nW, N, N) mask keeping attention inside the regions a cyclic shift brought together."""
    img_mask = torch.zeros(1, height, width, 1, device=device)
    region = 0
    bounds = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    for hs in bounds:
        for ws in bounds:
            img_mask[:, hs, ws, :] = region
            region += 1
    mask_windows = window_partition(img_mask, window).squeeze(-1)
    attn_mask = mask_windows.unsqueeze(1) - mask_windows.unsqueeze(2)
    return torch.zeros_like(attn_mask, dtype=dtype).masked_fill(attn_mask != 0, -100.0)


class WindowAttention(nn.Module):
    """
    Multi-head attention inside non-overlapping windows with a relative position bias.

    ``cross=True`` splits the projection into ``q`` (from one stream) and ``kv``
    (from the other); the parameter count equals the fused ``qkv`` projection.
    With ``streams=2`` a self-attention call attends over the tokens of two
    co-located windows jointly; the bias table is shared and tiled over them.
    """

    def __init__(self, dim: int, heads: int, window: int, cross: bool = False):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.window = window
        self.cross = cross
        self.scale = (dim // heads) ** -0.5

        self.relative_position_bias_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        if cross:
            self.q = nn.Linear(dim, dim)
            self.kv = nn.Linear(dim, dim * 2)
        else:
            self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.softmax = nn.Softmax(dim=-1)

        trunc_normal_(self.relative_position_bias_table, std=0.02)

    def position_bias(self, window: int, streams: int = 1) -> torch.Tensor:
        index = relative_position_index(window, self.window).to(self.relative_position_bias_table.device)
        n = window * window
        bias = self.relative_position_bias_table[index.reshape(-1)].reshape(n, n, -1)
        bias = bias.permute(2, 0, 1)
        return bias.repeat(1, streams, streams)

    def forward(self, x: torch.Tensor, window: int, mask: Optional[torch.Tensor] = None,
                context: Optional[torch.Tensor] = None, streams: int = 1) -> torch.Tensor:
        if self.cross:
            if context is None:
                raise ContractViolation("cross attention needs a context stream")
            q = rearrange(self.q(x), "b n (h d) -> b h n d", h=self.heads)
            k, v = rearrange(self.kv(context), "b n (t h d) -> t b h n d", t=2, h=self.heads)
        else:
            q, k, v = rearrange(self.qkv(x), "b n (t h d) -> t b h n d", t=3, h=self.heads)

        attn = (q * self.scale) @ k.transpose(-2, -1)
        attn = attn + self.position_bias(window, streams).unsqueeze(0)

        if mask is not None:
            nw = mask.shape[0]
            mask = mask.repeat(1, streams, streams)
            attn = attn.view(-1, nw, self.heads, attn.shape[-2], attn.shape[-1])
            attn = attn + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(-1, self.heads, attn.shape[-2], attn.shape[-1])

        out = self.softmax(attn) @ v
        return self.proj(rearrange(out, "b h n d -> b n (h d)"))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class SwinLayer(nn.Module):
    """
    Pre-norm Swin layer on channels-last maps (B, H, W, C).

    mode:
        "self"  - plain windowed self-attention on one stream
        "joint" - both streams share windows, weights and bias; both are updated
        "cross" - one stream queries the other; only the input stream is updated
    """

    def __init__(self, dim: int, heads: int, window: int, shift: bool, mlp_ratio: float = 2.0,
                 mode: str = "self", query_from_condition: bool = False, drop_path: float = 0.0):
        super().__init__()
        if mode not in ("self", "joint", "cross"):
            raise ValueError(f"unknown attention mode {mode!r}")
        self.mode = mode
        self.window = window
        self.shift = shift
        self.query_from_condition = query_from_condition

        self.norm1 = nn.LayerNorm(dim)
        if mode == "cross":
            self.norm_c = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, cross=(mode == "cross"))
        self.drop_path = DropPath(drop_path) if drop_path > 0.0 else nn.Identity()
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def geometry(self, height: int, width: int) -> Tuple[int, int]:
        """Effective (window, shift) at this resolution; the window shrinks on small maps."""
        window = min(self.window, height, width)
        if height % window or width % window:
            raise ContractViolation(
                f"feature map {height}x{width} is not divisible by window {window}"
            )
        shift = window // 2 if self.shift and min(height, width) > window else 0
        return window, shift

    def _attend(self, x: torch.Tensor, c: Optional[torch.Tensor]):
        _, height, width, _ = x.shape
        window, shift = self.geometry(height, width)
        mask = None
        if shift:
            x = torch.roll(x, shifts=(-shift, -shift), dims=(1, 2))
            if c is not None:
                c = torch.roll(c, shifts=(-shift, -shift), dims=(1, 2))
            mask = shifted_window_mask(height, width, window, shift, x.dtype, x.device)

        xw = window_partition(x, window)
        cw = window_partition(c, window) if c is not None else None

        c_out = None
        if self.mode == "self":
            x_out = self.attn(xw, window, mask)
        elif self.mode == "joint":
            n = xw.shape[1]
            joint = self.attn(torch.cat([xw, cw], dim=1), window, mask, streams=2)
            x_out, c_out = joint[:, :n], joint[:, n:]
        elif self.query_from_condition:
            x_out = self.attn(cw, window, mask, context=xw)
        else:
            x_out = self.attn(xw, window, mask, context=cw)

        x_out = window_reverse(x_out, window, height, width)
        if c_out is not None:
            c_out = window_reverse(c_out, window, height, width)
        if shift:
            x_out = torch.roll(x_out, shifts=(shift, shift), dims=(1, 2))
            if c_out is not None:
                c_out = torch.roll(c_out, shifts=(shift, shift), dims=(1, 2))
        return x_out, c_out

    def forward(self, x: torch.Tensor, c: Optional[torch.Tensor] = None):
        if self.mode == "self":
            x = x + self.drop_path(self._attend(self.norm1(x), None)[0])
            return x + self.drop_path(self.mlp(self.norm2(x)))

        if self.mode == "joint":
            x_attn, c_attn = self._attend(self.norm1(x), self.norm1(c))
            x = x + self.drop_path(x_attn)
            c = c + self.drop_path(c_attn)
            x = x + self.drop_path(self.mlp(self.norm2(x)))
            c = c + self.drop_path(self.mlp(self.norm2(c)))
            return x, c

        x_attn, _ = self._attend(self.norm1(x), self.norm_c(c))
        x = x + self.drop_path(x_attn)
        return x + self.drop_path(self.mlp(self.norm2(x)))
