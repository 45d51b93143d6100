"""
Training clips: a procedural corpus with controllable motion and
dis-occlusion, and fixed-size crops of user-supplied YUV420 sequences.
"""
from typing import List, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter, rotate, shift
from torch.utils.data import DataLoader, Dataset

from backend.constants import Frame
from backend.media import load_yuv420, yuv_to_rgb_bt601
from backend.utils.exception import UnsupportedGeometryError
from backend.utils.logger import setup_logger

logger = setup_logger("training_data")


class SyntheticClipConfig(BaseModel):
    height: int = Field(64, ge=16)
    width: int = Field(64, ge=16)
    max_speed: float = Field(2.0, ge=0)            # background pixels per frame
    max_rotation: float = Field(1.0, ge=0)         # background degrees per frame
    occluder_fraction: float = Field(0.25, ge=0, lt=1)  # occluder area / frame area
    occluder_speed: float = Field(3.0, ge=0)
    illumination_drift: float = Field(0.01, ge=0)  # relative gain change per frame
    texture_sigma: float = Field(2.0, gt=0)


def _texture(rng: np.random.Generator, height: int, width: int, sigma: float) -> np.ndarray:
    noise = rng.standard_normal((height, width, 3))
    tex = np.stack([gaussian_filter(noise[..., c], sigma) for c in range(3)], axis=-1)
    tex -= tex.min(axis=(0, 1), keepdims=True)
    tex /= tex.max(axis=(0, 1), keepdims=True) + 1e-12
    return 0.1 + 0.8 * tex


def synthetic_clip(num_frames: int, cfg: SyntheticClipConfig, seed: int) -> List[Frame]:
    """
    A textured background under global translation, rotation and gain
    drift, with one independently moving textured occluder whose motion
    uncovers background the previous frame did not show.
    """
    rng = np.random.default_rng(seed)
    h, w = cfg.height, cfg.width
    margin = int(np.ceil(cfg.max_speed * num_frames)) + 4
    canvas = _texture(rng, h + 2 * margin, w + 2 * margin, cfg.texture_sigma)

    velocity = rng.uniform(-cfg.max_speed, cfg.max_speed, size=2)
    omega = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    gain_step = rng.choice([-1.0, 1.0]) * cfg.illumination_drift

    side = int(round(np.sqrt(cfg.occluder_fraction * h * w)))
    occluder = _texture(rng, max(side, 1), max(side, 1), cfg.texture_sigma) if side > 0 else None
    occ_pos = rng.uniform(0, [max(h - side, 1), max(w - side, 1)])
    occ_vel = rng.uniform(-cfg.occluder_speed, cfg.occluder_speed, size=2)

    frames: List[Frame] = []
    for t in range(num_frames):
        moved = shift(canvas, (t * velocity[0], t * velocity[1], 0), order=1, mode="reflect")
        if omega:
            moved = rotate(moved, t * omega, axes=(0, 1), reshape=False, order=1, mode="reflect")
        image = moved[margin:margin + h, margin:margin + w] * (1.0 + gain_step * t)

        if occluder is not None:
            top, left = (occ_pos + t * occ_vel).round().astype(int)
            top = int(np.clip(top, 0, h - side))
            left = int(np.clip(left, 0, w - side))
            image[top:top + side, left:left + side] = occluder

        pixels = torch.from_numpy(np.clip(image, 0.0, 1.0).transpose(2, 0, 1).copy()).float()
        frames.append(Frame(pixels=pixels))
    return frames


def stack_clip(frames: Sequence[Frame]) -> torch.Tensor:
    """(T, 3, H, W)"""
    return torch.stack([f.pixels for f in frames])


class SyntheticClipDataset(Dataset):
    """``size`` procedural clips; clip i depends only on (seed, i)."""

    def __init__(self, size: int, num_frames: int, cfg: SyntheticClipConfig | None = None, seed: int = 0):
        self.size = size
        self.num_frames = num_frames
        self.cfg = cfg or SyntheticClipConfig()
        self.seed = seed

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, index: int) -> torch.Tensor:
        return stack_clip(synthetic_clip(self.num_frames, self.cfg, self.seed * 100_003 + index))


class YuvClipDataset(Dataset):
    """
    Consecutive-frame windows of YUV420 sequences, converted to RGB and
    cropped to ``crop`` x ``crop`` at a position drawn from (seed, index).
    """

    def __init__(self, sources: Sequence[Tuple[str, int, int]], num_frames: int, crop: int = 64, seed: int = 0):
        self.num_frames = num_frames
        self.crop = crop
        self.seed = seed
        self.clips: List[torch.Tensor] = []
        self.windows: List[Tuple[int, int]] = []
        for path, width, height in sources:
            if width < crop or height < crop:
                raise UnsupportedGeometryError(f"{path}: {width}x{height} is smaller than the {crop}x{crop} crop")
            frames = yuv_to_rgb_bt601(load_yuv420(path, width, height))
            clip = stack_clip(frames)
            self.clips.append(clip)
            for start in range(0, len(frames) - num_frames + 1):
                self.windows.append((len(self.clips) - 1, start))
        logger.info(f"[YuvClipDataset] {len(self.clips)} sequences | {len(self.windows)} windows of {num_frames}")

    def __len__(self) -> int:
        return len(self.windows)

    def __getitem__(self, index: int) -> torch.Tensor:
        clip_index, start = self.windows[index]
        clip = self.clips[clip_index][start:start + self.num_frames]
        rng = np.random.default_rng(self.seed * 100_003 + index)
        top = int(rng.integers(0, clip.shape[-2] - self.crop + 1))
        left = int(rng.integers(0, clip.shape[-1] - self.crop + 1))
        return clip[..., top:top + self.crop, left:left + self.crop].contiguous()


def build_loader(dataset: Dataset, batch_size: int, seed: int) -> DataLoader:
    """Shuffled in a seeded order; single-process so runs are reproducible."""
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=True,
        num_workers=0,
        generator=torch.Generator().manual_seed(seed),
    )
