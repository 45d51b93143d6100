"""
Bjontegaard delta rate between two rate-distortion curves.

Both curves are interpolated as log10(rate) over quality with a monotone
piecewise-cubic Hermite interpolant; the interpolants are integrated
exactly over the common quality interval.
"""
from typing import List, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from backend.constants import RdPoint
from backend.utils.exception import UndefinedComparisonError

MIN_POINTS = 4
# toy λ ladders have three operating points
LADDER_MIN_POINTS = 3


def _curve(points: Sequence[RdPoint], label: str, min_points: int) -> Tuple[np.ndarray, np.ndarray]:
    if len(points) < min_points:
        raise UndefinedComparisonError(
            f"{label} curve has {len(points)} points, need at least {min_points}"
        )
    ordered = sorted(points, key=lambda p: p.quality)
    quality = np.array([p.quality for p in ordered], dtype=np.float64)
    rate = np.array([p.bpp for p in ordered], dtype=np.float64)
    if np.any(rate <= 0):
        raise UndefinedComparisonError(f"{label} curve has a non-positive bpp: {rate.tolist()}")
    if np.any(np.diff(quality) <= 0):
        raise UndefinedComparisonError(f"{label} curve quality is not strictly monotone: {quality.tolist()}")
    return quality, np.log10(rate)


def rate_interpolant(points: Sequence[RdPoint], label: str = "curve",
                     min_points: int = MIN_POINTS) -> PchipInterpolator:
    quality, log_rate = _curve(points, label, min_points)
    return PchipInterpolator(quality, log_rate)


def overlap(anchor: Sequence[RdPoint], test: Sequence[RdPoint]) -> Tuple[float, float]:
    lo = max(min(p.quality for p in anchor), min(p.quality for p in test))
    hi = min(max(p.quality for p in anchor), max(p.quality for p in test))
    if hi <= lo:
        raise UndefinedComparisonError(
            f"curves share no quality range: anchor/test overlap is [{lo:.4f}, {hi:.4f}]"
        )
    return lo, hi


def bd_rate(anchor: List[RdPoint], test: List[RdPoint], min_points: int = MIN_POINTS) -> float:
    """
    Average rate difference in percent at equal quality; negative means savings.

    ``min_points`` may drop to ``LADDER_MIN_POINTS`` for curves that come from
    a toy λ ladder.
    """
    if min_points < LADDER_MIN_POINTS:
        raise ValueError(f"min_points must be at least {LADDER_MIN_POINTS}, got {min_points}")
    p_anchor = rate_interpolant(anchor, "anchor", min_points)
    p_test = rate_interpolant(test, "test", min_points)
    lo, hi = overlap(anchor, test)

    int_anchor = p_anchor.integrate(lo, hi)
    int_test = p_test.integrate(lo, hi)
    avg_diff = (int_test - int_anchor) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)
