import os
from dataclasses import asdict
from functools import lru_cache
from typing import Dict, List, Optional

import torch
import uvicorn
from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

load_dotenv()

from backend.cli import cmd_decode, cmd_encode, run_dir_for  # noqa: E402
from backend.codec import VideoCodec  # noqa: E402
from backend.constants import Command, MaskMode, RdPoint  # noqa: E402
from backend.constants.presets import PRESETS, RunConfig, resolve_preset  # noqa: E402
from backend.evaluation import bd_rate, buffer_preset_planes, complexity_report  # noqa: E402
from backend.utils.exception import CodecError, UndefinedComparisonError  # noqa: E402
from backend.utils.logger import setup_logger  # noqa: E402

logger = setup_logger("service")

# ──────────────────────────────────────────────
# App Initialization
# ──────────────────────────────────────────────
app = FastAPI(title="MaskCRT codec lab", version="0.1.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)


# ──────────────────────────────────────────────
# Request / Response Models
# ──────────────────────────────────────────────
class EncodeRequest(BaseModel):
    input: str
    width: int
    height: int
    checkpoint: str
    output: Optional[str] = None
    frames: int = Field(96, ge=1)
    intra_period: int = Field(32, ge=1)
    mask_mode: MaskMode = MaskMode.LEARNED
    crop: bool = False
    forced_intra: List[int] = Field(default_factory=list)


class EncodeResponse(BaseModel):
    container: str
    bytes: int
    bpp: float
    model_id: str


class DecodeRequest(BaseModel):
    container: str
    checkpoint: str
    output: Optional[str] = None


class DecodeResponse(BaseModel):
    output: str
    frames: int
    bpp: float
    model_id: str


class RdPointModel(BaseModel):
    bpp: float = Field(gt=0)
    quality: float
    metric: str = "psnr_rgb"


class BdRateRequest(BaseModel):
    anchor: List[RdPointModel]
    test: List[RdPointModel]


class BdRateResponse(BaseModel):
    bd_rate: float


class ComplexityResponse(BaseModel):
    preset: str
    param_count: int
    enc_kmac_per_pixel: float
    dec_kmac_per_pixel: float
    buffer_planes: float
    per_module: Dict[str, float]


def _run_config(command: Command, **fields) -> RunConfig:
    cfg = RunConfig(command=command, **fields)
    run_dir = run_dir_for(cfg)
    os.makedirs(run_dir, exist_ok=True)
    return cfg.model_copy(update={"run_dir": run_dir})


@lru_cache(maxsize=4)
def _complexity(preset: str) -> ComplexityResponse:
    torch.manual_seed(0)
    report = complexity_report(VideoCodec(resolve_preset(preset)))
    return ComplexityResponse(preset=preset, **asdict(report))


# ──────────────────────────────────────────────
# Routes
# ──────────────────────────────────────────────
@app.post("/api/encode", response_model=EncodeResponse)
def encode(req: EncodeRequest):
    """Encode a YUV420 file with a trained checkpoint into a container."""
    cfg = _run_config(
        Command.ENCODE, model=req.checkpoint, inputs=[f"{req.input}:{req.width}x{req.height}"],
        output=req.output, frames=req.frames, intra_period=req.intra_period, mask_mode=req.mask_mode,
        crop=req.crop, extra={"forced_intra": req.forced_intra},
    )
    try:
        result = cmd_encode(cfg, cfg.run_dir)
    except CodecError as e:
        logger.error(f"[encode] {e}")
        raise HTTPException(status_code=400, detail=str(e))
    return EncodeResponse(container=result["container"], bytes=result["bytes"], bpp=result["bpp"],
                          model_id=result["model_id"])


@app.post("/api/decode", response_model=DecodeResponse)
def decode(req: DecodeRequest):
    cfg = _run_config(Command.DECODE, model=req.checkpoint, inputs=[req.container], output=req.output)
    try:
        result = cmd_decode(cfg, cfg.run_dir)
    except CodecError as e:
        logger.error(f"[decode] {e}")
        raise HTTPException(status_code=400, detail=str(e))
    return DecodeResponse(**result)


@app.post("/api/bd-rate", response_model=BdRateResponse)
def bd_rate_endpoint(req: BdRateRequest):
    """Bjontegaard delta rate of ``test`` against ``anchor`` in percent."""
    try:
        value = bd_rate([RdPoint(**p.model_dump()) for p in req.anchor],
                        [RdPoint(**p.model_dump()) for p in req.test])
    except UndefinedComparisonError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return BdRateResponse(bd_rate=value)


@app.get("/api/complexity", response_model=ComplexityResponse)
def complexity(preset: str = "toy"):
    if preset not in PRESETS:
        raise HTTPException(status_code=404, detail=f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    return _complexity(preset)


@app.get("/api/buffer-presets")
def buffer_presets():
    """Decoded-picture-buffer size of reference codecs in full-resolution planes."""
    return buffer_preset_planes()


if __name__ == "__main__":
    uvicorn.run(app=app, port=int(os.getenv("MASKCRT_PORT", "8000")), host="0.0.0.0")
