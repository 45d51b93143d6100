"""
Ablation studies: which model/codec variant goes in each cell, and the
BD-rate matrix of every variant against a chosen anchor.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from backend.constants import ContextKind, CstbVariant, MaskMode, RdPoint
from backend.constants.presets import ModelConfig, toy_preset, with_inter
from backend.evaluation.bdrate import MIN_POINTS, bd_rate
from backend.utils.exception import ConfigurationError, UndefinedComparisonError
from backend.utils.logger import setup_logger

logger = setup_logger("ablation")

Curves = Mapping[str, Mapping[str, Sequence[RdPoint]]]   # variant -> sequence -> points


def _inter(**changes) -> Callable[[ModelConfig], ModelConfig]:
    return lambda cfg: with_inter(cfg, **changes)


# study -> label -> (model change, mask mode)
STUDIES: Dict[str, Dict[str, Tuple[Callable[[ModelConfig], ModelConfig], MaskMode]]] = {
    "cstb": {
        "a": (_inter(variant=CstbVariant.SYMMETRIC_SELF_ATTN), MaskMode.LEARNED),
        "a_nofuse": (_inter(variant=CstbVariant.SYMMETRIC_SELF_ATTN, fuse=False), MaskMode.LEARNED),
        "b": (_inter(variant=CstbVariant.CONCAT), MaskMode.LEARNED),
        "c": (_inter(variant=CstbVariant.CROSS_Q_INPUT), MaskMode.LEARNED),
        "d": (_inter(variant=CstbVariant.CROSS_Q_CONDITION), MaskMode.LEARNED),
    },
    "context": {
        "base": (_inter(use_ctm=False, context=ContextKind.HYPERPRIOR_ONLY), MaskMode.LEARNED),
        "base_large": (_inter(use_ctm=False, context=ContextKind.HYPERPRIOR_ONLY, extra_layers=1),
                       MaskMode.LEARNED),
        "base_ctm": (_inter(use_ctm=True, context=ContextKind.HYPERPRIOR_ONLY), MaskMode.LEARNED),
        "base_charm": (_inter(use_ctm=False, context=ContextKind.CHARM), MaskMode.LEARNED),
        "base_checkerboard": (_inter(use_ctm=False, context=ContextKind.CHECKERBOARD), MaskMode.LEARNED),
        "base_spatial_channel": (_inter(use_ctm=False, context=ContextKind.SPATIAL_CHANNEL), MaskMode.LEARNED),
    },
    "mask": {
        "conditional": (lambda cfg: cfg, MaskMode.ZERO),
        "conditional_residual": (lambda cfg: cfg, MaskMode.ONE),
        "masked": (lambda cfg: cfg, MaskMode.LEARNED),
    },
}

DEFAULT_ANCHORS = {"cstb": "a", "context": "base", "mask": "conditional"}


def study_cells(study: str, base: Optional[ModelConfig] = None) -> Dict[str, Tuple[ModelConfig, MaskMode]]:
    """Resolved (model config, mask mode) of every cell of ``study``."""
    if study not in STUDIES:
        raise ConfigurationError(f"unknown ablation study {study!r}, expected one of {sorted(STUDIES)}")
    base = base or toy_preset()
    return {label: (change(base), mode) for label, (change, mode) in STUDIES[study].items()}


@dataclass
class AblationReport:
    anchor: str
    variants: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    undefined: List[str] = field(default_factory=list)

    def column(self, variant: str) -> List[Optional[float]]:
        return [row.get(variant) for row in self.rows]


def ablation_matrix(curves: Curves, anchor: str, variants: Optional[Sequence[str]] = None,
                    min_points: int = MIN_POINTS) -> AblationReport:
    """
    BD-rate of each variant against ``anchor``, one row per sequence.
    ``min_points`` is the length of the λ ladder the curves were trained on.

    Cells without curves are listed in ``missing`` and left empty; pairs
    with no common quality range are listed in ``undefined``.
    """
    variants = list(variants) if variants is not None else list(curves)
    report = AblationReport(anchor=anchor, variants=variants)
    if anchor not in curves:
        report.missing.append(anchor)

    sequences: List[str] = []
    for per_seq in curves.values():
        for s in per_seq:
            if s not in sequences:
                sequences.append(s)

    for variant in variants:
        if variant not in curves and variant not in report.missing:
            report.missing.append(variant)

    for seq in sequences:
        row: Dict[str, Any] = {"sequence": seq}
        ref = curves.get(anchor, {}).get(seq)
        for variant in variants:
            pts = curves.get(variant, {}).get(seq)
            if ref is None or pts is None:
                row[variant] = None
                cell = f"{variant}/{seq}"
                if variant in curves and pts is None and cell not in report.missing:
                    report.missing.append(cell)
                continue
            try:
                row[variant] = bd_rate(list(ref), list(pts), min_points)
            except UndefinedComparisonError as e:
                row[variant] = None
                report.undefined.append(f"{variant}/{seq}")
                logger.warning(f"[ablation_matrix] {variant}/{seq} | {e}")
        report.rows.append(row)

    logger.info(
        f"[ablation_matrix] anchor={anchor} | {len(variants)} variants x {len(sequences)} sequences "
        f"| missing={report.missing}"
    )
    return report
