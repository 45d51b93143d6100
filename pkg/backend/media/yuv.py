"""Planar YUV420 I/O and limited-range BT.601 colour conversion."""
import os
from typing import List

import numpy as np
import torch
import torch.nn.functional as F

from backend.constants import Frame, RawSequence
from backend.utils.exception import MalformedInputError, UnsupportedGeometryError
from backend.utils.logger import setup_logger

logger = setup_logger(name="media_io")

# Limited-range (studio swing) BT.601, the FFmpeg default
_Y_OFFSET, _Y_RANGE = 16.0, 219.0
_C_OFFSET, _C_RANGE = 128.0, 224.0
_KR, _KB = 0.299, 0.114
_KG = 1.0 - _KR - _KB


def _frame_bytes(width: int, height: int) -> int:
    if width % 2 or height % 2:
        raise UnsupportedGeometryError(f"YUV420 needs even dimensions, got {width}x{height}")
    return width * height * 3 // 2


def load_yuv420(path: str, width: int, height: int) -> RawSequence:
    """Read every frame of an 8-bit planar YUV420 file in decode order."""
    frame_size = _frame_bytes(width, height)
    actual = os.path.getsize(path)
    if actual == 0 or actual % frame_size:
        expected = (actual // frame_size) * frame_size
        raise MalformedInputError(
            f"{path}: size {actual} bytes is not a whole multiple of {frame_size} "
            f"bytes per {width}x{height} frame (nearest valid size {expected or frame_size})"
        )

    data = np.fromfile(path, dtype=np.uint8)
    luma = width * height
    chroma = luma // 4
    frames = []
    for start in range(0, actual, frame_size):
        block = data[start:start + frame_size]
        y = block[:luma].reshape(height, width)
        u = block[luma:luma + chroma].reshape(height // 2, width // 2)
        v = block[luma + chroma:].reshape(height // 2, width // 2)
        frames.append((y.copy(), u.copy(), v.copy()))

    logger.info(f"[load_yuv420] {path} | {len(frames)} frames | {width}x{height}")
    return RawSequence(frames=frames, width=width, height=height)


def write_yuv420(seq: RawSequence, path: str) -> None:
    with open(path, "wb") as fh:
        for y, u, v in seq.frames:
            fh.write(np.ascontiguousarray(y, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(u, dtype=np.uint8).tobytes())
            fh.write(np.ascontiguousarray(v, dtype=np.uint8).tobytes())


def yuv_to_rgb_bt601(raw: RawSequence) -> List[Frame]:
    """Limited-range BT.601 to RGB444 with bilinear chroma upsampling, clipped to [0,1]."""
    frames = []
    for y, u, v in raw.frames:
        luma = torch.from_numpy(y.astype(np.float64))
        chroma = torch.from_numpy(np.stack([u, v]).astype(np.float64)).unsqueeze(0)
        chroma = F.interpolate(chroma, size=luma.shape, mode="bilinear", align_corners=False)[0]

        yp = (luma - _Y_OFFSET) / _Y_RANGE
        cb = (chroma[0] - _C_OFFSET) / _C_RANGE
        cr = (chroma[1] - _C_OFFSET) / _C_RANGE

        r = yp + 2.0 * (1.0 - _KR) * cr
        b = yp + 2.0 * (1.0 - _KB) * cb
        g = yp - (2.0 * _KB * (1.0 - _KB) / _KG) * cb - (2.0 * _KR * (1.0 - _KR) / _KG) * cr

        rgb = torch.stack([r, g, b]).clamp(0.0, 1.0).to(torch.float32)
        frames.append(Frame(pixels=rgb, bit_depth_origin=8))
    return frames


def rgb_to_yuv420_bt601(frames: List[Frame]) -> RawSequence:
    """Forward matrix with 2x2 chroma averaging; used to store decoded clips."""
    planes = []
    for frame in frames:
        rgb = frame.pixels.to(torch.float64).clamp(0.0, 1.0)
        r, g, b = rgb[0], rgb[1], rgb[2]
        yp = _KR * r + _KG * g + _KB * b
        cb = (b - yp) / (2.0 * (1.0 - _KB))
        cr = (r - yp) / (2.0 * (1.0 - _KR))
        cb = F.avg_pool2d(cb[None, None], 2)[0, 0]
        cr = F.avg_pool2d(cr[None, None], 2)[0, 0]

        y = torch.round(_Y_OFFSET + _Y_RANGE * yp).clamp(0, 255)
        u = torch.round(_C_OFFSET + _C_RANGE * cb).clamp(0, 255)
        v = torch.round(_C_OFFSET + _C_RANGE * cr).clamp(0, 255)
        planes.append(tuple(p.to(torch.uint8).numpy() for p in (y, u, v)))

    height, width = frames[0].height, frames[0].width
    return RawSequence(frames=planes, width=width, height=height)


def crop_to_alignment(f: Frame, alignment: int) -> Frame:
    """Centre crop to the largest multiple of ``alignment`` in each dimension."""
    height, width = f.height, f.width
    if height < alignment or width < alignment:
        raise UnsupportedGeometryError(
            f"frame {width}x{height} is smaller than the alignment {alignment}"
        )
    new_h = (height // alignment) * alignment
    new_w = (width // alignment) * alignment
    if (new_h, new_w) == (height, width):
        return f
    top = (height - new_h) // 2
    left = (width - new_w) // 2
    pixels = f.pixels[..., top:top + new_h, left:left + new_w].contiguous()
    return Frame(pixels=pixels, bit_depth_origin=f.bit_depth_origin)


def check_alignment(f: Frame, alignment: int) -> None:
    if f.height % alignment or f.width % alignment:
        raise UnsupportedGeometryError(
            f"frame {f.width}x{f.height} is not a multiple of {alignment}; "
            f"re-run with --crop to centre-crop it"
        )
