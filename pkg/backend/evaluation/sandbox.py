"""
Empirical-entropy sandbox for the choice of the mask m.

Order-0 histogram entropy (per-pixel marginal) of x_t, x_t - x_c and
x_t - m*x_c on synthetic 8-bit sources, for three predictor regimes:

    perfect   x_c == x_t
    noise     x_c independent of x_t with the same marginal
    mixed     a vertical band of the noise regime (the dis-occluded area)
              inside the perfect regime

The entropy is of the pooled marginal, so one global m cannot trade the two
regions off: in the mixed regime the zero residuals of the predicted part
dominate and m* is 1. The per-region oracle mask is what beats both
H(x_t) and H(x_t - x_c).
"""
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter

from backend.utils.logger import setup_logger

logger = setup_logger("sandbox")

M_GRID = tuple(round(0.1 * i, 1) for i in range(11))


class SandboxConfig(BaseModel):
    height: int = Field(1024, ge=8)
    width: int = Field(1024, ge=8)
    seed: int = 0
    texture_sigma: float = Field(4.0, gt=0)
    occlusion_fraction: float = Field(0.5, gt=0, lt=1)


@dataclass
class RegimeEntropy:
    regime: str
    samples: int
    h_source: float
    h_residual: float
    m_star: float
    h_masked: float
    h_by_m: Dict[str, float] = field(default_factory=dict)
    h_oracle: Optional[float] = None


def quantize_8bit(v: np.ndarray) -> np.ndarray:
    return np.floor(v + 0.5).astype(np.int64)


def histogram_entropy(values: np.ndarray) -> float:
    """Bits per sample of the empirical marginal."""
    _, counts = np.unique(values, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def texture(cfg: SandboxConfig, rng: np.random.Generator) -> np.ndarray:
    field_ = gaussian_filter(rng.standard_normal((cfg.height, cfg.width)), cfg.texture_sigma)
    field_ = (field_ - field_.min()) / (field_.max() - field_.min())
    return quantize_8bit(255.0 * field_).astype(np.float64)


def masked_residual(x_t: np.ndarray, x_c: np.ndarray, m) -> np.ndarray:
    return quantize_8bit(x_t - m * x_c)


def sweep(x_t: np.ndarray, x_c: np.ndarray) -> Dict[float, float]:
    return {m: histogram_entropy(masked_residual(x_t, x_c, m)) for m in M_GRID}


def _regime(name: str, x_t: np.ndarray, x_c: np.ndarray) -> RegimeEntropy:
    by_m = sweep(x_t, x_c)
    # Ties resolve to the larger m
    m_star = min(M_GRID, key=lambda m: (by_m[m], -m))
    return RegimeEntropy(
        regime=name,
        samples=int(x_t.size),
        h_source=histogram_entropy(quantize_8bit(x_t)),
        h_residual=by_m[1.0],
        m_star=m_star,
        h_masked=by_m[m_star],
        h_by_m={f"{m:.1f}": h for m, h in by_m.items()},
    )


def oracle_mask(x_t: np.ndarray, x_c: np.ndarray, regions: np.ndarray) -> np.ndarray:
    """Per-region constant m from the grid, each region chosen by its own entropy."""
    mask = np.zeros_like(x_t)
    for label in np.unique(regions):
        sel = regions == label
        by_m = {m: histogram_entropy(masked_residual(x_t[sel], x_c[sel], m)) for m in M_GRID}
        mask[sel] = min(M_GRID, key=lambda m: (by_m[m], -m))
    return mask


def empirical_entropy_sandbox(cfg: SandboxConfig | None = None) -> List[RegimeEntropy]:
    cfg = cfg or SandboxConfig()
    rng = np.random.default_rng(cfg.seed)
    x_t = texture(cfg, rng)
    noise = rng.permutation(x_t.ravel()).reshape(x_t.shape)

    band = int(round(cfg.occlusion_fraction * cfg.width))
    regions = np.zeros(x_t.shape, dtype=np.int64)
    regions[:, :band] = 1
    mixed = np.where(regions == 1, noise, x_t)

    rows = [
        _regime("perfect", x_t, x_t.copy()),
        _regime("noise", x_t, noise),
        _regime("mixed", x_t, mixed),
    ]
    mixed_row = rows[-1]
    mask = oracle_mask(x_t, mixed, regions)
    mixed_row.h_oracle = histogram_entropy(masked_residual(x_t, mixed, mask))

    for r in rows:
        logger.info(
            f"[empirical_entropy_sandbox] {r.regime} | H(x_t)={r.h_source:.3f} "
            f"H(x_t-x_c)={r.h_residual:.3f} m*={r.m_star} H(masked)={r.h_masked:.3f}"
            + (f" H(oracle)={r.h_oracle:.3f}" if r.h_oracle is not None else "")
        )
    return rows


def sandbox_table(rows: List[RegimeEntropy]) -> List[dict]:
    return [asdict(r) for r in rows]
