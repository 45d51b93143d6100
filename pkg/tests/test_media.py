import numpy as np
import pytest
import torch

from backend.constants import Frame, RawSequence
from backend.media import (
    crop_to_alignment,
    load_yuv420,
    read_flo,
    rgb_to_yuv420_bt601,
    save_mask_panel,
    write_flo,
    write_yuv420,
    yuv_to_rgb_bt601,
)
from backend.media.yuv import check_alignment
from backend.utils.exception import MalformedInputError, UnsupportedGeometryError


def _raw(frames: int = 2, width: int = 16, height: int = 8, seed: int = 0) -> RawSequence:
    rng = np.random.default_rng(seed)
    planes = [
        (rng.integers(16, 236, (height, width), dtype=np.uint8),
         rng.integers(16, 241, (height // 2, width // 2), dtype=np.uint8),
         rng.integers(16, 241, (height // 2, width // 2), dtype=np.uint8))
        for _ in range(frames)
    ]
    return RawSequence(frames=planes, width=width, height=height)


def test_yuv_file_roundtrip_is_byte_exact(tmp_path):
    raw = _raw()
    path = tmp_path / "clip.yuv"
    write_yuv420(raw, str(path))
    assert path.stat().st_size == 2 * 16 * 8 * 3 // 2

    loaded = load_yuv420(str(path), 16, 8)
    assert loaded.frame_count == 2
    for (y0, u0, v0), (y1, u1, v1) in zip(raw.frames, loaded.frames):
        assert np.array_equal(y0, y1) and np.array_equal(u0, u1) and np.array_equal(v0, v1)


def test_truncated_yuv_names_sizes(tmp_path):
    path = tmp_path / "bad.yuv"
    path.write_bytes(b"\x00" * (16 * 8 * 3 // 2 + 5))
    with pytest.raises(MalformedInputError, match="not a whole multiple of 192"):
        load_yuv420(str(path), 16, 8)


def test_odd_dimensions_rejected(tmp_path):
    path = tmp_path / "odd.yuv"
    path.write_bytes(b"\x00" * 100)
    with pytest.raises(UnsupportedGeometryError):
        load_yuv420(str(path), 15, 8)


def test_limited_range_extremes_map_to_black_and_white():
    black = (np.full((4, 4), 16, np.uint8), np.full((2, 2), 128, np.uint8), np.full((2, 2), 128, np.uint8))
    white = (np.full((4, 4), 235, np.uint8), np.full((2, 2), 128, np.uint8), np.full((2, 2), 128, np.uint8))
    frames = yuv_to_rgb_bt601(RawSequence(frames=[black, white], width=4, height=4))
    assert torch.allclose(frames[0].pixels, torch.zeros(3, 4, 4), atol=1e-6)
    assert torch.allclose(frames[1].pixels, torch.ones(3, 4, 4), atol=1e-6)


def test_colour_conversion_roundtrip_within_one_code_value():
    rng = np.random.default_rng(1)
    in_gamut = (rng.integers(60, 200, (16, 16), dtype=np.uint8),
                rng.integers(120, 136, (8, 8), dtype=np.uint8),
                rng.integers(120, 136, (8, 8), dtype=np.uint8))
    raw = RawSequence(frames=[in_gamut], width=16, height=16)
    back = rgb_to_yuv420_bt601(yuv_to_rgb_bt601(raw))
    y0 = raw.frames[0][0].astype(int)
    y1 = back.frames[0][0].astype(int)
    assert np.abs(y0 - y1).max() <= 1


def test_rgb_output_is_clipped():
    extreme = (np.full((4, 4), 255, np.uint8), np.full((2, 2), 0, np.uint8), np.full((2, 2), 255, np.uint8))
    rgb = yuv_to_rgb_bt601(RawSequence(frames=[extreme], width=4, height=4))[0].pixels
    assert float(rgb.min()) >= 0.0 and float(rgb.max()) <= 1.0


def test_centre_crop_to_alignment():
    pixels = torch.arange(3 * 70 * 100, dtype=torch.float32).reshape(3, 70, 100)
    cropped = crop_to_alignment(Frame(pixels), 32)
    assert (cropped.height, cropped.width) == (64, 96)
    assert torch.equal(cropped.pixels, pixels[:, 3:67, 2:98])


def test_crop_of_aligned_frame_is_identity():
    f = Frame(torch.rand(3, 64, 64))
    assert crop_to_alignment(f, 32) is f


def test_crop_smaller_than_alignment_rejected():
    with pytest.raises(UnsupportedGeometryError):
        crop_to_alignment(Frame(torch.rand(3, 16, 64)), 32)


def test_check_alignment_hints_at_crop():
    with pytest.raises(UnsupportedGeometryError, match="--crop"):
        check_alignment(Frame(torch.rand(3, 40, 64)), 32)


def test_flo_roundtrip(tmp_path):
    flow = torch.randn(1, 2, 6, 10)
    path = tmp_path / "f.flo"
    write_flo(flow, str(path))
    assert path.read_bytes()[:4] == b"PIEH"
    assert torch.allclose(read_flo(str(path)).reshape(1, 2, 6, 10), flow)


def test_mask_panel_is_written(tmp_path):
    x = torch.rand(1, 3, 8, 8)
    path = tmp_path / "panel.png"
    save_mask_panel(x, x, torch.rand(1, 1, 8, 8), x - 0.5, str(path))
    assert path.stat().st_size > 0
