import csv
import json
import os
from dataclasses import asdict, dataclass, is_dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from backend.constants import RdPoint  # noqa: E402
from backend.utils.exception import ConfigurationError  # noqa: E402
from backend.utils.logger import setup_logger  # noqa: E402

logger = setup_logger("reports")


class Pooling(str, Enum):
    DATASET = "dataset"     # frames of all sequences pooled
    SEQUENCE = "sequence"   # one point per sequence


DEFAULT_POOLING = Pooling.DATASET


@dataclass(frozen=True)
class FrameMeasurement:
    bits: float
    pixels: int
    psnr: float
    msssim: float


def _point(frames: Sequence[FrameMeasurement], metric: str) -> RdPoint:
    if not frames:
        raise ConfigurationError("cannot pool an empty list of frame measurements")
    bpp = sum(f.bits for f in frames) / sum(f.pixels for f in frames)
    if metric == "psnr_rgb":
        quality = sum(f.psnr for f in frames) / len(frames)
    elif metric == "msssim_rgb":
        quality = sum(f.msssim for f in frames) / len(frames)
    else:
        raise ConfigurationError(f"unknown quality metric {metric!r}, expected psnr_rgb or msssim_rgb")
    return RdPoint(bpp=bpp, quality=quality, metric=metric)


def pool_rd_points(measurements: Mapping[str, Sequence[FrameMeasurement]], metric: str = "psnr_rgb",
                   mode: Pooling | str = DEFAULT_POOLING) -> Dict[str, RdPoint]:
    """
    One RD point per key: ``{"dataset": point}`` when pooling frames over all
    sequences, otherwise ``{sequence: point}``.
    """
    mode = Pooling(mode)
    if mode is Pooling.DATASET:
        frames = [f for seq in measurements.values() for f in seq]
        return {"dataset": _point(frames, metric)}
    return {name: _point(frames, metric) for name, frames in measurements.items()}


def _jsonable(obj: Any) -> Any:
    if is_dataclass(obj):
        return asdict(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


def write_json(obj: Any, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)
    logger.info(f"[write_json] {path}")
    return path


def write_csv(rows: List[Dict[str, Any]], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"[write_csv] {path} | rows={len(rows)}")
    return path


def plot_rd_curves(curves: Mapping[str, Sequence[RdPoint]], path: str, title: str = "") -> str:
    """Rate (bpp) on x, quality on y; the extension of ``path`` picks PNG or SVG."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4))
    metric = "psnr_rgb"
    for name, points in curves.items():
        ordered = sorted(points, key=lambda p: p.bpp)
        if ordered:
            metric = ordered[0].metric
        ax.plot([p.bpp for p in ordered], [p.quality for p in ordered], marker="o", label=name)
    ax.set_xlabel("bpp")
    ax.set_ylabel("PSNR-RGB (dB)" if metric == "psnr_rgb" else "MS-SSIM-RGB")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"[plot_rd_curves] {path} | curves={len(curves)}")
    return path


def load_curves(path: str) -> Dict[str, List[RdPoint]]:
    """Read ``{name: [{bpp, quality, metric}, ...]}`` as written by ``eval``."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {name: [RdPoint(**p) for p in points] for name, points in raw.items()}
