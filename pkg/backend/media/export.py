"""PNG dumps of frames and masks, and the .flo debug format."""
import numpy as np
import torch
from PIL import Image

from backend.utils.exception import FormatError

_FLO_TAG = b"PIEH"


def _to_uint8(t: torch.Tensor) -> np.ndarray:
    return (t.detach().float().clamp(0.0, 1.0) * 255.0 + 0.5).to(torch.uint8).cpu().numpy()


def save_frame_png(pixels: torch.Tensor, path: str) -> None:
    """pixels: (3, H, W) or (1, 3, H, W) in [0,1]."""
    if pixels.dim() == 4:
        pixels = pixels[0]
    Image.fromarray(np.transpose(_to_uint8(pixels), (1, 2, 0)), mode="RGB").save(path)


def save_mask_png(mask: torch.Tensor, path: str) -> None:
    """Grayscale dump; darker means the predictor is used less."""
    while mask.dim() > 2:
        mask = mask[0]
    Image.fromarray(_to_uint8(mask), mode="L").save(path)


def save_mask_panel(x_t: torch.Tensor, x_c: torch.Tensor, mask: torch.Tensor,
                    decoded: torch.Tensor, path: str) -> None:
    """Side-by-side x_t | m*x_c | decoded residue (shifted by 0.5) | m."""
    def _rgb(t):
        return t[0] if t.dim() == 4 else t

    m = _rgb(mask)
    if m.shape[0] == 1:
        m = m.expand(3, -1, -1)
    tiles = [_rgb(x_t), m * _rgb(x_c), _rgb(decoded) + 0.5, m]
    panel = torch.cat([t.clamp(0.0, 1.0) for t in tiles], dim=-1)
    save_frame_png(panel, path)


def write_flo(flow: torch.Tensor, path: str) -> None:
    """flow: (2, H, W) or (1, 2, H, W) in pixels."""
    if flow.dim() == 4:
        flow = flow[0]
    _, height, width = flow.shape
    data = flow.detach().cpu().numpy().astype("<f4").transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(_FLO_TAG)
        fh.write(np.array([width, height], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(data).tobytes())


def read_flo(path: str) -> torch.Tensor:
    with open(path, "rb") as fh:
        if fh.read(4) != _FLO_TAG:
            raise FormatError(f"{path}: not a .flo dump")
        width, height = np.frombuffer(fh.read(8), dtype="<i4")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != 2 * width * height:
        raise FormatError(f"{path}: expected {2 * width * height} floats, got {data.size}")
    return torch.from_numpy(data.reshape(height, width, 2).transpose(2, 0, 1).copy())
