import torch

from backend.utils.exception import check_spatial_match


def warp(reference: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """
    Bilinear backward warping: out(p) = reference(p + flow(p)).

    reference: (B, C, H, W); flow: (B, 2, H, W) holding (dx, dy) in pixels.
    Sample positions are clamped to the frame (edge replication). Integer
    displacements, including zero, reproduce source pixels exactly.
    """
    check_spatial_match(reference, flow, "warp")
    b, c, h, w = reference.shape
    dtype, device = reference.dtype, reference.device
    flow = flow.to(dtype)

    ys = torch.arange(h, dtype=dtype, device=device).view(1, h, 1)
    xs = torch.arange(w, dtype=dtype, device=device).view(1, 1, w)
    x = (xs + flow[:, 0]).clamp(0, w - 1)
    y = (ys + flow[:, 1]).clamp(0, h - 1)

    x0 = torch.floor(x).detach()
    y0 = torch.floor(y).detach()
    wx = (x - x0).unsqueeze(1)
    wy = (y - y0).unsqueeze(1)

    x0i = x0.long()
    y0i = y0.long()
    x1i = (x0i + 1).clamp(max=w - 1)
    y1i = (y0i + 1).clamp(max=h - 1)

    flat = reference.reshape(b, c, h * w)

    def _gather(yi, xi):
        index = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, index).reshape(b, c, h, w)

    v00 = _gather(y0i, x0i)
    v01 = _gather(y0i, x1i)
    v10 = _gather(y1i, x0i)
    v11 = _gather(y1i, x1i)

    return (v00 * ((1 - wx) * (1 - wy)) + v01 * (wx * (1 - wy))
            + v10 * ((1 - wx) * wy) + v11 * (wx * wy))
