import pytest
from fastapi.testclient import TestClient

from backend.app import app
from backend.media import rgb_to_yuv420_bt601, write_yuv420
from backend.utils.checkpoint import save_checkpoint

from conftest import MICRO_SIZE

client = TestClient(app)


def _points(scale: float = 1.0):
    return [{"bpp": scale * 0.01 * 2 ** i, "quality": 30.0 + 2 * i} for i in range(4)]


def test_buffer_presets():
    res = client.get("/api/buffer-presets")
    assert res.status_code == 200
    assert res.json()["MaskCRT"] == 13.0
    assert res.json()["DCVC-HEM"] == pytest.approx(67.75)


def test_bd_rate():
    res = client.post("/api/bd-rate", json={"anchor": _points(), "test": _points(2.0)})
    assert res.status_code == 200
    assert res.json()["bd_rate"] == pytest.approx(100.0, abs=0.01)


def test_bd_rate_without_overlap_is_unprocessable():
    far = [{"bpp": p["bpp"], "quality": p["quality"] + 20} for p in _points()]
    res = client.post("/api/bd-rate", json={"anchor": _points(), "test": far})
    assert res.status_code == 422
    assert "quality range" in res.json()["detail"]


def test_bd_rate_rejects_non_positive_rate():
    bad = _points()
    bad[0]["bpp"] = 0.0
    assert client.post("/api/bd-rate", json={"anchor": bad, "test": _points()}).status_code == 422


def test_complexity_unknown_preset():
    assert client.get("/api/complexity", params={"preset": "huge"}).status_code == 404


def test_complexity_of_toy_preset():
    res = client.get("/api/complexity", params={"preset": "toy"})
    assert res.status_code == 200
    body = res.json()
    assert body["enc_kmac_per_pixel"] > body["dec_kmac_per_pixel"] > 0
    assert body["buffer_planes"] == 13.0


def test_encode_and_decode(tmp_path, micro_cfg, micro_model, toy_clip):
    checkpoint = str(tmp_path / "micro.pt")
    mid = save_checkpoint(micro_model, micro_cfg, checkpoint)
    source = tmp_path / "clip.yuv"
    write_yuv420(rgb_to_yuv420_bt601(toy_clip), str(source))

    res = client.post("/api/encode", json={
        "input": str(source), "width": MICRO_SIZE, "height": MICRO_SIZE, "checkpoint": checkpoint,
        "output": str(tmp_path / "clip.mcrt"), "frames": 6, "intra_period": 4, "mask_mode": "zero",
    })
    assert res.status_code == 200
    encoded = res.json()
    assert encoded["model_id"] == mid
    assert encoded["bytes"] == (tmp_path / "clip.mcrt").stat().st_size

    res = client.post("/api/decode", json={
        "container": encoded["container"], "checkpoint": checkpoint, "output": str(tmp_path / "out.yuv"),
    })
    assert res.status_code == 200
    assert res.json()["frames"] == 6
    assert (tmp_path / "out.yuv").stat().st_size == source.stat().st_size


def test_encode_reports_codec_errors(tmp_path, micro_cfg, micro_model):
    checkpoint = str(tmp_path / "micro.pt")
    save_checkpoint(micro_model, micro_cfg, checkpoint)
    source = tmp_path / "short.yuv"
    source.write_bytes(b"\x00" * 100)
    res = client.post("/api/encode", json={
        "input": str(source), "width": MICRO_SIZE, "height": MICRO_SIZE, "checkpoint": checkpoint,
    })
    assert res.status_code == 400
    assert "whole multiple" in res.json()["detail"]
