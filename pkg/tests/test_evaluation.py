import csv
import json
import math
import os

import numpy as np
import pytest
import torch
from scipy.integrate import trapezoid
from torch import nn

from backend.codec import CodecSession, VideoCodec
from backend.constants import ContextKind, MaskMode, RdPoint
from backend.constants.presets import build_lambda_ladder, with_inter
from backend.evaluation import (
    LADDER_MIN_POINTS,
    FrameMeasurement,
    Pooling,
    SandboxConfig,
    ablation_matrix,
    bd_rate,
    buffer_preset_planes,
    channel_bit_profile,
    complexity_report,
    empirical_entropy_sandbox,
    histogram_entropy,
    load_curves,
    module_kmac_per_pixel,
    ms_ssim,
    msssim_rgb,
    plot_rd_curves,
    pool_rd_points,
    psnr_rgb,
    rate_interpolant,
    sandbox_table,
    study_cells,
    top_share,
    write_csv,
    write_json,
)
from backend.evaluation.quality import msssim_levels
from backend.utils.exception import ConfigurationError, UndefinedComparisonError

from conftest import MICRO_SIZE

QUALITIES = [30.0, 32.0, 34.0, 36.0]


def _curve(scale: float = 1.0, qualities=QUALITIES) -> list:
    return [RdPoint(bpp=scale * 0.02 * math.exp(0.25 * (q - 30.0)), quality=q) for q in qualities]


# ──────────────────────────────────────────────
# Quality
# ──────────────────────────────────────────────
def test_psnr_of_constant_offsets():
    a = torch.full((3, 8, 8), 0.25)
    assert psnr_rgb(a, a + 16 / 255) == pytest.approx(24.0484, abs=1e-3)
    assert psnr_rgb(a, a + 1 / 255) == pytest.approx(48.1308, abs=1e-3)


def test_psnr_is_capped_for_identical_frames():
    a = torch.rand(3, 8, 8)
    assert psnr_rgb(a, a) == 100.0


def test_msssim_scales_and_identity():
    assert msssim_levels(64, 64) == 3
    assert msssim_levels(16, 16) == 1
    x = torch.rand(2, 3, 64, 64, dtype=torch.float64)
    assert torch.allclose(ms_ssim(x, x), torch.ones(2, dtype=torch.float64))
    assert msssim_rgb(x[0], (x[0] + 0.2).clamp(0, 1)) < 1.0


# ──────────────────────────────────────────────
# BD-rate
# ──────────────────────────────────────────────
def test_bd_rate_of_identical_curves_is_zero():
    assert bd_rate(_curve(), _curve()) == pytest.approx(0.0, abs=1e-9)


def test_bd_rate_of_doubled_rate_is_one_hundred_percent():
    assert bd_rate(_curve(), _curve(2.0)) == pytest.approx(100.0, abs=0.01)
    assert bd_rate(_curve(2.0), _curve()) == pytest.approx(-50.0, abs=0.01)


def test_bd_rate_matches_dense_numeric_integral():
    anchor = _curve()
    test = [RdPoint(bpp=p.bpp * (1.0 + 0.05 * i), quality=p.quality + 0.3) for i, p in enumerate(_curve())]
    lo, hi = 30.3, 36.0
    grid = np.linspace(lo, hi, 200_001)
    diff = trapezoid(rate_interpolant(test)(grid) - rate_interpolant(anchor)(grid), grid) / (hi - lo)
    expected = (10.0 ** diff - 1.0) * 100.0
    assert bd_rate(anchor, test) == pytest.approx(expected, rel=1e-4)


def test_bd_rate_ignores_point_order():
    assert bd_rate(_curve()[::-1], _curve(1.5)) == pytest.approx(bd_rate(_curve(), _curve(1.5)))


@pytest.mark.parametrize("test_curve", [
    _curve()[:3],
    [RdPoint(bpp=0.1, quality=30.0), RdPoint(bpp=0.2, quality=30.0),
     RdPoint(bpp=0.3, quality=31.0), RdPoint(bpp=0.4, quality=32.0)],
    _curve(qualities=[40.0, 41.0, 42.0, 43.0]),
])
def test_bd_rate_undefined_comparisons(test_curve):
    with pytest.raises(UndefinedComparisonError):
        bd_rate(_curve(), test_curve)


# ──────────────────────────────────────────────
# Complexity
# ──────────────────────────────────────────────
def test_conv_macs_per_pixel():
    conv = nn.Conv2d(64, 64, 3, padding=1)
    assert module_kmac_per_pixel(conv, torch.rand(1, 64, 8, 8)) == pytest.approx(36.864)


def test_buffer_presets():
    planes = buffer_preset_planes()
    assert planes["MaskCRT"] == 13.0
    assert planes["CANF-VC"] == 13.0
    assert planes["DCVC"] == 3.0
    assert planes["DCVC-TCM"] == 67.0
    assert planes["DCVC-HEM"] == pytest.approx(67.75)
    assert planes["DCVC-DC"] == pytest.approx(55.75)
    assert planes["HM/VTM"] == 12.0


def test_complexity_report_splits_encoder_and_decoder(micro_model):
    report = complexity_report(micro_model)
    assert report.enc_kmac_per_pixel > report.dec_kmac_per_pixel > 0
    assert report.buffer_planes == 13.0
    assert "flow_estimator" in report.per_module
    assert report.param_count < sum(p.numel() for p in micro_model.parameters())
    # Pure function of architecture and size
    assert complexity_report(micro_model).enc_kmac_per_pixel == report.enc_kmac_per_pixel


def test_entropy_options_add_complexity(micro_cfg):
    def dec_kmac(**changes):
        torch.manual_seed(0)
        model = VideoCodec(with_inter(micro_cfg, **changes)).eval()
        return complexity_report(model).dec_kmac_per_pixel

    base = dec_kmac(use_ctm=False, context=ContextKind.HYPERPRIOR_ONLY)
    assert dec_kmac(use_ctm=True, context=ContextKind.HYPERPRIOR_ONLY) > base
    assert dec_kmac(use_ctm=False, context=ContextKind.CHARM) > base


def test_ctm_costs_less_encoder_complexity_than_charm(micro_cfg):
    def enc_kmac(**changes):
        torch.manual_seed(0)
        model = VideoCodec(with_inter(micro_cfg, **changes)).eval()
        return complexity_report(model).enc_kmac_per_pixel

    base = enc_kmac(use_ctm=False, context=ContextKind.HYPERPRIOR_ONLY)
    ctm = enc_kmac(use_ctm=True, context=ContextKind.HYPERPRIOR_ONLY)
    charm = enc_kmac(use_ctm=False, context=ContextKind.CHARM)
    assert 0 < ctm - base < charm - base


# ──────────────────────────────────────────────
# Entropy sandbox
# ──────────────────────────────────────────────
def test_histogram_entropy():
    assert histogram_entropy(np.array([0, 1, 0, 1])) == pytest.approx(1.0)
    assert histogram_entropy(np.zeros(10, dtype=np.int64)) == 0.0


def test_sandbox_regimes():
    rows = {r.regime: r for r in empirical_entropy_sandbox(SandboxConfig(height=256, width=256))}
    assert rows["perfect"].m_star == 1.0
    assert rows["perfect"].h_residual == 0.0
    assert rows["noise"].m_star == 0.0
    assert rows["noise"].h_masked == pytest.approx(rows["noise"].h_source)

    mixed = rows["mixed"]
    # One order-0 histogram pools both regions: the zero spike of the predicted half
    # outweighs the widened noise band, so a single global m lands on 1, not in between
    assert mixed.m_star == 1.0
    assert mixed.h_by_m["1.0"] < mixed.h_by_m["0.0"]
    assert mixed.h_oracle <= min(mixed.h_source, mixed.h_residual) + 0.02
    assert len(mixed.h_by_m) == 11

    table = sandbox_table(list(rows.values()))
    assert {row["regime"] for row in table} == {"perfect", "noise", "mixed"}


# ──────────────────────────────────────────────
# Reports
# ──────────────────────────────────────────────
def _measurements():
    return {
        "a": [FrameMeasurement(bits=1000, pixels=100, psnr=30.0, msssim=0.9)],
        "b": [FrameMeasurement(bits=3000, pixels=100, psnr=34.0, msssim=0.95),
              FrameMeasurement(bits=1000, pixels=100, psnr=32.0, msssim=0.93)],
    }


def test_dataset_pooling_weights_frames():
    point = pool_rd_points(_measurements())["dataset"]
    assert point.bpp == pytest.approx(5000 / 300)
    assert point.quality == pytest.approx(32.0)


def test_sequence_pooling_gives_one_point_each():
    points = pool_rd_points(_measurements(), "msssim_rgb", Pooling.SEQUENCE)
    assert set(points) == {"a", "b"}
    assert points["b"].bpp == pytest.approx(20.0)
    assert points["b"].quality == pytest.approx(0.94)
    assert points["b"].metric == "msssim_rgb"


def test_pooling_rejects_unknown_metric():
    with pytest.raises(ConfigurationError):
        pool_rd_points(_measurements(), "vmaf")


def test_report_files(tmp_path):
    curves = {"anchor": _curve(), "test": _curve(1.2)}
    path = write_json(curves, str(tmp_path / "out" / "curves.json"))
    assert load_curves(path) == curves

    csv_path = write_csv([{"a": 1}, {"a": 2, "b": 3}], str(tmp_path / "rows.csv"))
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows == [{"a": "1", "b": ""}, {"a": "2", "b": "3"}]

    for ext in ("png", "svg"):
        plot = plot_rd_curves(curves, str(tmp_path / f"rd.{ext}"), title="toy")
        assert (tmp_path / f"rd.{ext}").stat().st_size > 0
        assert plot.endswith(ext)


# ──────────────────────────────────────────────
# Ablation
# ──────────────────────────────────────────────
def test_ablation_matrix_against_anchor():
    curves = {
        "conditional": {"s1": _curve(), "s2": _curve()},
        "masked": {"s1": _curve(0.5), "s2": _curve(0.8)},
        "conditional_residual": {"s1": _curve(2.0)},
    }
    report = ablation_matrix(curves, "conditional", ["conditional", "masked", "conditional_residual", "extra"])
    assert report.column("conditional") == [pytest.approx(0.0, abs=1e-9)] * 2
    assert report.column("masked") == [pytest.approx(-50.0, abs=0.01), pytest.approx(-20.0, abs=0.01)]
    assert report.column("conditional_residual")[1] is None
    assert "extra" in report.missing
    assert "conditional_residual/s2" in report.missing


def test_ablation_records_undefined_cells():
    curves = {"a": {"s": _curve()}, "b": {"s": _curve(qualities=[40.0, 41.0, 42.0, 43.0])}}
    report = ablation_matrix(curves, "a")
    assert report.rows[0]["b"] is None
    assert report.undefined == ["b/s"]


@pytest.mark.parametrize("metric", ["mse", "msssim"])
def test_toy_ladder_ablation_gives_finite_bd_rates(metric):
    ladder = build_lambda_ladder(metric, "toy")
    qualities = [30.0 + 2.0 * i for i in range(len(ladder))]
    curves = {
        "conditional": {"s": _curve(qualities=qualities)},
        "masked": {"s": _curve(0.9, qualities=qualities)},
    }
    report = ablation_matrix(curves, "conditional", min_points=len(ladder))
    assert report.undefined == []
    assert report.rows[0]["masked"] == pytest.approx(-10.0, abs=0.01)
    assert math.isfinite(report.rows[0]["conditional"])


def test_bd_rate_point_floor():
    three = _curve(qualities=QUALITIES[:3])
    assert bd_rate(three, _curve(2.0, qualities=QUALITIES[:3]), LADDER_MIN_POINTS) == pytest.approx(100.0, abs=0.01)
    with pytest.raises(UndefinedComparisonError):
        bd_rate(three, three)
    with pytest.raises(ValueError):
        bd_rate(three[:2], three[:2], 2)


def test_study_cells(micro_cfg):
    cells = study_cells("mask", micro_cfg)
    assert {label: mode for label, (_, mode) in cells.items()} == {
        "conditional": MaskMode.ZERO, "conditional_residual": MaskMode.ONE, "masked": MaskMode.LEARNED,
    }
    context = study_cells("context", micro_cfg)
    assert context["base_charm"][0].inter.context.kind is ContextKind.CHARM
    assert context["base_large"][0].inter.extra_layers == 1
    with pytest.raises(ConfigurationError):
        study_cells("window")


# ──────────────────────────────────────────────
# Bit profile
# ──────────────────────────────────────────────
def test_channel_bit_profile(micro_model, toy_clip, codec_config):
    session = CodecSession(micro_model, codec_config, MICRO_SIZE, MICRO_SIZE)
    shares = channel_bit_profile(session, toy_clip)
    assert len(shares) == micro_model.cfg.inter.latent_channels
    assert sum(shares) == pytest.approx(1.0)
    assert shares == sorted(shares, reverse=True)
    assert top_share(shares, 4) >= 4 / len(shares) - 1e-9
    assert top_share(shares, len(shares)) == pytest.approx(1.0)


# ──────────────────────────────────────────────
# Trained ladders
# ──────────────────────────────────────────────
# Directional checks on trained toy ladders. MASKCRT_MASK_CELLS and
# MASKCRT_CONTEXT_CELLS name ``ablate --cells`` files, MASKCRT_VALIDATION
# is the validation source (path.yuv:WIDTHxHEIGHT[:name]).
MASK_CELLS = os.getenv("MASKCRT_MASK_CELLS")
CONTEXT_CELLS = os.getenv("MASKCRT_CONTEXT_CELLS")
VALIDATION = os.getenv("MASKCRT_VALIDATION")


def _ablate(tmp_path, study: str, cells: str) -> dict:
    from backend.cli import main

    run_dir = tmp_path / study
    assert main(["ablate", "--study", study, "--cells", cells, "--input", VALIDATION,
                 "--run-dir", str(run_dir)]) == 0
    with open(run_dir / "ablation.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.mark.slow
@pytest.mark.skipif(not (MASK_CELLS and VALIDATION), reason="needs trained mask-study ladders")
def test_learned_mask_beats_both_reference_modes(tmp_path):
    report = _ablate(tmp_path, "mask", MASK_CELLS)
    assert report["missing"] == [] and report["undefined"] == []
    for row in report["rows"]:
        assert row["masked"] <= row["conditional_residual"] - 0.5
        assert row["conditional_residual"] <= -0.5


@pytest.mark.slow
@pytest.mark.skipif(not (CONTEXT_CELLS and VALIDATION), reason="needs trained context-study ladders")
def test_ctm_saves_rate_over_the_base_model(tmp_path):
    report = _ablate(tmp_path, "context", CONTEXT_CELLS)
    assert report["anchor"] == "base"
    assert all(row["base_ctm"] < 0 for row in report["rows"])


@pytest.mark.slow
@pytest.mark.skipif(not (CONTEXT_CELLS and VALIDATION), reason="needs trained context-study ladders")
def test_ctm_concentrates_bits_in_the_leading_channels(tmp_path):
    from backend.cli import main

    with open(CONTEXT_CELLS, encoding="utf-8") as fh:
        cells = json.load(fh)
    top8 = {}
    for variant in ("base", "base_ctm"):
        run_dir = tmp_path / variant
        # index 0 is the top operating point
        assert main(["eval", "--model", cells[variant][0], "--input", VALIDATION,
                     "--run-dir", str(run_dir)]) == 0
        with open(run_dir / "channel_profile.json", encoding="utf-8") as fh:
            top8[variant] = [p["top8_share"] for p in json.load(fh).values()]
    assert top8["base"]
    assert all(ctm > base for ctm, base in zip(top8["base_ctm"], top8["base"]))
