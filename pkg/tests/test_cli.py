import json
import os

import pytest

from backend.cli import build_parser, main, parse_source, to_run_config
from backend.constants import Command, MaskMode, RdPoint
from backend.evaluation import write_json
from backend.media import read_flo, rgb_to_yuv420_bt601, write_yuv420
from backend.training import SyntheticClipConfig, synthetic_clip
from backend.utils.checkpoint import save_checkpoint
from backend.utils.exception import ConfigurationError

from conftest import MICRO_SIZE


@pytest.fixture
def checkpoint(tmp_path, micro_cfg, micro_model) -> str:
    path = str(tmp_path / "micro.pt")
    save_checkpoint(micro_model, micro_cfg, path)
    return path


def _yuv(tmp_path, toy_clip, name: str = "clip") -> str:
    path = tmp_path / f"{name}.yuv"
    write_yuv420(rgb_to_yuv420_bt601(toy_clip), str(path))
    return f"{path}:{MICRO_SIZE}x{MICRO_SIZE}:{name}"


def _read(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def test_parse_source():
    assert parse_source("a/b/foo.yuv:416x240") == ("a/b/foo.yuv", 416, 240, "foo")
    assert parse_source("foo.yuv:64X32:bar") == ("foo.yuv", 64, 32, "bar")
    with pytest.raises(ConfigurationError):
        parse_source("foo.yuv")


def test_arguments_resolve_into_run_config():
    args = build_parser().parse_args([
        "encode", "--model", "m.pt", "--input", "a.yuv:64x64", "--mask-mode", "one",
        "--ctm", "off", "--forced-intra", "3", "7", "--intra-period", "8",
    ])
    cfg = to_run_config(args)
    assert cfg.command is Command.ENCODE
    assert cfg.mask_mode is MaskMode.ONE
    assert cfg.ctm is False
    assert cfg.extra["forced_intra"] == [3, 7]
    assert cfg.codec_config().intra_period == 8


def test_encode_then_decode(tmp_path, checkpoint, toy_clip):
    source = _yuv(tmp_path, toy_clip)
    enc_dir, dec_dir = tmp_path / "enc", tmp_path / "dec"
    recon = tmp_path / "recon.yuv"
    container = tmp_path / "clip.mcrt"

    assert main(["encode", "--model", checkpoint, "--input", source, "--intra-period", "4", "--frames", "6",
                 "--output", str(container), "--recon", str(recon), "--run-dir", str(enc_dir)]) == 0
    stats = _read(enc_dir / "stats.json")
    assert stats["frames"] == 6
    assert stats["bpp"] == pytest.approx(container.stat().st_size * 8 / (6 * MICRO_SIZE * MICRO_SIZE))
    assert stats["payload_bpp"] < stats["bpp"]
    assert [f["type"] for f in stats["per_frame"]] == ["I", "P", "P", "P", "I", "P"]

    manifest = _read(enc_dir / "manifest.json")
    assert manifest["command"] == "encode"
    assert manifest["config"]["intra_period"] == 4
    assert manifest["checkpoint_hash"] == manifest["result"]["model_id"]

    decoded = tmp_path / "decoded.yuv"
    assert main(["decode", "--model", checkpoint, "--input", str(container),
                 "--output", str(decoded), "--run-dir", str(dec_dir)]) == 0
    assert decoded.read_bytes() == recon.read_bytes()
    assert _read(dec_dir / "manifest.json")["result"]["frames"] == 6


def test_encode_dumps_masks_and_flows(tmp_path, checkpoint, toy_clip):
    source = _yuv(tmp_path, toy_clip)
    dumps = tmp_path / "dumps"
    assert main(["encode", "--model", checkpoint, "--input", source, "--intra-period", "4", "--frames", "6",
                 "--dump-masks", str(dumps), "--run-dir", str(tmp_path / "enc")]) == 0

    written = sorted(os.listdir(dumps / "clip"))
    for i in (1, 2, 3, 5):
        assert {f"frame{i:03d}_mask.png", f"frame{i:03d}_panel.png", f"frame{i:03d}.flo"} <= set(written)
    assert not any(name.startswith(("frame000", "frame004")) for name in written)
    assert read_flo(str(dumps / "clip" / "frame001.flo")).shape == (2, MICRO_SIZE, MICRO_SIZE)
    per_frame = _read(tmp_path / "enc" / "stats.json")["per_frame"]
    assert all(f["estimated_bits"] > 0 for f in per_frame)


def test_eval_writes_curves_channel_profile_and_dumps(tmp_path, checkpoint, toy_clip):
    source = _yuv(tmp_path, toy_clip)
    run_dir, dumps = tmp_path / "eval", tmp_path / "dumps"
    assert main(["eval", "--model", checkpoint, "--input", source, "--intra-period", "4", "--frames", "6",
                 "--dump-masks", str(dumps), "--run-dir", str(run_dir)]) == 0

    assert len(_read(run_dir / "curves.json")["model"]) == 1
    profile = _read(run_dir / "channel_profile.json")["clip"]
    assert len(profile["shares"]) == 16
    assert sum(profile["shares"]) == pytest.approx(1.0)
    assert profile["top8_share"] == pytest.approx(sum(profile["shares"][:8]))
    assert (dumps / "model0" / "clip" / "frame001_mask.png").exists()


def test_unaligned_input_needs_crop(tmp_path, checkpoint):
    frames = synthetic_clip(2, SyntheticClipConfig(height=70, width=100), seed=0)
    path = tmp_path / "odd.yuv"
    write_yuv420(rgb_to_yuv420_bt601(frames), str(path))
    source = f"{path}:100x70"

    assert main(["encode", "--model", checkpoint, "--input", source, "--run-dir", str(tmp_path / "a")]) == 2
    assert main(["encode", "--model", checkpoint, "--input", source, "--crop",
                 "--run-dir", str(tmp_path / "b")]) == 0
    assert _read(tmp_path / "b" / "stats.json")["frames"] == 2


def test_decode_rejects_garbage(tmp_path, checkpoint):
    bad = tmp_path / "bad.mcrt"
    bad.write_bytes(b"not a container at all")
    assert main(["decode", "--model", checkpoint, "--input", str(bad), "--run-dir", str(tmp_path / "d")]) == 2


def test_missing_model_is_reported(tmp_path):
    assert main(["encode", "--input", "x.yuv:64x64", "--run-dir", str(tmp_path / "e")]) == 2


def test_sandbox_command(tmp_path):
    run_dir = tmp_path / "sandbox"
    assert main(["sandbox", "--height", "64", "--width", "64", "--run-dir", str(run_dir)]) == 0
    table = _read(run_dir / "sandbox.json")
    assert [row["regime"] for row in table] == ["perfect", "noise", "mixed"]
    assert _read(run_dir / "manifest.json")["config"]["extra"]["height"] == 64


def test_plot_and_ablate_from_curves(tmp_path):
    points = [RdPoint(bpp=0.01 * 2 ** i, quality=30.0 + 2 * i) for i in range(4)]
    half = [RdPoint(bpp=p.bpp / 2, quality=p.quality) for p in points]
    curves = write_json({"anchor": points, "test": half}, str(tmp_path / "curves.json"))

    assert main(["plot", "--input", curves, "--run-dir", str(tmp_path / "plot")]) == 0
    assert (tmp_path / "plot" / "rd.png").exists()

    matrix = write_json({"conditional": {"s": points}, "masked": {"s": half}}, str(tmp_path / "matrix.json"))
    assert main(["ablate", "--study", "mask", "--curves", matrix, "--run-dir", str(tmp_path / "ablate")]) == 0
    report = _read(tmp_path / "ablate" / "ablation.json")
    assert report["anchor"] == "conditional"
    assert report["rows"][0]["masked"] == pytest.approx(-50.0, abs=0.01)
    assert "conditional_residual" in report["missing"]


def test_runs_default_under_runs_dir(tmp_path):
    assert main(["sandbox", "--height", "32", "--width", "32"]) == 0
    runs = os.listdir(tmp_path / "runs")
    assert len(runs) == 1 and runs[0].startswith("sandbox-")


def test_train_command_writes_checkpoint(tmp_path):
    run_dir = tmp_path / "train"
    assert main(["train", "--phases", "intra_coding", "--epoch-scale", "0.01", "--steps-per-epoch", "1",
                 "--batch-size", "1", "--run-dir", str(run_dir)]) == 0
    manifest = _read(run_dir / "manifest.json")
    assert [h["phase"] for h in manifest["history"]] == ["intra_coding"]
    assert (run_dir / "model.pt").exists()
