import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
import torch
from scipy.special import ndtr, ndtri

from backend.constants import SCALE_FLOOR
from backend.utils.exception import EncodeError

PRECISION = 16
SCALES_MIN = SCALE_FLOOR
SCALES_MAX = 256.0
SCALES_LEVELS = 256
GAUSSIAN_TAIL_MASS = 1e-9


@dataclass(frozen=True)
class CdfTable:
    """
    Quantised CDF over ``support`` integer values starting at ``offset``,
    plus one trailing escape symbol. ``cdf`` has support + 2 entries, cdf[0] = 0,
    cdf[-1] = 2**PRECISION, strictly increasing.
    """
    cdf: np.ndarray
    offset: int

    @property
    def support(self) -> int:
        return len(self.cdf) - 2

    @property
    def escape(self) -> int:
        return len(self.cdf) - 2


def quantize_cdf(pmf, precision: int = PRECISION) -> np.ndarray:
    """Integer frequencies summing to 2**precision, every symbol at least 1."""
    total = 1 << precision
    pmf = np.clip(np.asarray(pmf, dtype=np.float64), 0.0, None)
    if pmf.size == 0 or pmf.size > total:
        raise EncodeError(f"cannot quantise a pmf of {pmf.size} symbols to {precision} bits")
    mass = pmf.sum()
    pmf = pmf / mass if mass > 0 else np.full_like(pmf, 1.0 / pmf.size)

    freq = np.maximum(1, np.round(pmf * total)).astype(np.int64)
    diff = total - int(freq.sum())
    if diff > 0:
        freq[int(np.argmax(freq))] += diff
    while diff < 0:
        i = int(np.argmax(freq))
        take = min(-diff, int(freq[i]) - 1)
        freq[i] -= take
        diff += take
    return np.concatenate([[0], np.cumsum(freq)]).astype(np.int64)


def table_from_pmf(pmf, offset: int) -> CdfTable:
    """``pmf`` includes the escape mass as its last entry."""
    return CdfTable(cdf=quantize_cdf(pmf), offset=offset)


def gaussian_scale_table() -> np.ndarray:
    return np.exp(np.linspace(math.log(SCALES_MIN), math.log(SCALES_MAX), SCALES_LEVELS))


@lru_cache(maxsize=1)
def gaussian_tables() -> Tuple[CdfTable, ...]:
    """Zero-mean tables, one per scale bucket; symbols are y - mu after rounding."""
    tables = []
    bound = ndtri(1.0 - GAUSSIAN_TAIL_MASS / 2)
    for scale in gaussian_scale_table():
        k = int(math.ceil(bound * scale))
        values = np.arange(-k, k + 1, dtype=np.float64)
        pmf = ndtr((values + 0.5) / scale) - ndtr((values - 0.5) / scale)
        tail = 2.0 * ndtr(-(k + 0.5) / scale)
        tables.append(table_from_pmf(np.append(pmf, tail), offset=-k))
    return tuple(tables)


def scale_indexes(scales: torch.Tensor) -> torch.Tensor:
    """Nearest tabulated scale in log space; out-of-range scales clamp to the ends."""
    table = gaussian_scale_table()
    boundaries = torch.as_tensor(np.sqrt(table[:-1] * table[1:]), dtype=scales.dtype, device=scales.device)
    return torch.bucketize(scales.contiguous(), boundaries)


def factorized_tables(pmfs: List[Tuple[int, np.ndarray]]) -> List[CdfTable]:
    return [table_from_pmf(pmf, offset) for offset, pmf in pmfs]
