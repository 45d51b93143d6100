"""Validated configuration models and the named presets (toy, paper_shape)."""
import os
from typing import List, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, model_validator

from backend.constants.codec_constant import Command, ContextKind, CstbVariant, MaskMode, Metric

load_dotenv()

PSNR_LAMBDAS: List[float] = [1626.0, 845.0, 436.0, 228.0]
MSSSIM_LAMBDAS: List[float] = [5.0, 10.0, 19.0, 36.0]


class CstbConfig(BaseModel):
    variant: CstbVariant = CstbVariant.SYMMETRIC_SELF_ATTN
    layers_per_block: Tuple[int, int, int] = (4, 4, 2)
    window: int = 4
    heads: int = 4
    mlp_ratio: float = 2.0
    shift: Optional[List[bool]] = None
    fuse: bool = True

    def shifts(self, depth: int) -> List[bool]:
        """Per-layer shift flags; alternating (W-MSA, SW-MSA, ...) unless given."""
        if self.shift is None:
            return [i % 2 == 1 for i in range(depth)]
        if len(self.shift) < depth:
            raise ValueError(f"shift list has {len(self.shift)} entries, block needs {depth}")
        return list(self.shift[:depth])


class ContextConfig(BaseModel):
    kind: ContextKind = ContextKind.HYPERPRIOR_ONLY
    slices: int = 4


class ConditionalCodecConfig(BaseModel):
    """One conditional transformer codec (inter-frame or motion)."""
    in_channels: int = 3
    widths: Tuple[int, int, int] = (32, 48, 64)
    strides: Tuple[int, int, int] = (2, 4, 8)
    latent_channels: int = 96
    hyper_channels: int = 64
    cstb: CstbConfig = Field(default_factory=CstbConfig)
    use_ctm: bool = True
    ctm_heads: int = 4
    context: ContextConfig = Field(default_factory=ContextConfig)
    extra_layers: int = 0

    @model_validator(mode="after")
    def _check_strides(self):
        s1, s2, s3 = self.strides
        for s in (s1, s2 // s1, s3 // s2):
            if s < 2 or s & (s - 1):
                raise ValueError(f"stride ratios must be powers of two, got {self.strides}")
        if s2 % s1 or s3 % s2:
            raise ValueError(f"strides must nest, got {self.strides}")
        for w in self.widths:
            if w % self.cstb.heads:
                raise ValueError(f"width {w} not divisible by {self.cstb.heads} heads")
        if self.latent_channels % self.ctm_heads:
            raise ValueError("latent_channels must be divisible by ctm_heads")
        return self

    @property
    def total_stride(self) -> int:
        return self.strides[-1]


class ModelConfig(BaseModel):
    preset: str = "toy"
    alignment: int = 64
    inter: ConditionalCodecConfig = Field(default_factory=ConditionalCodecConfig)
    motion: ConditionalCodecConfig = Field(
        default_factory=lambda: ConditionalCodecConfig(
            in_channels=2,
            widths=(16, 24, 32),
            latent_channels=64,
            hyper_channels=48,
            cstb=CstbConfig(layers_per_block=(2, 2, 2)),
            use_ctm=False,
        )
    )
    intra_width: int = 64
    intra_latent: int = 96
    intra_hyper: int = 64
    flow_levels: int = 3
    flow_width: int = 32
    extrapolation_width: int = 24
    mcnet_width: int = 32
    mask_width: int = 16

    @model_validator(mode="after")
    def _check_alignment(self):
        for codec in (self.inter, self.motion):
            grain = codec.total_stride * codec.cstb.window
            if self.alignment % grain:
                raise ValueError(
                    f"alignment {self.alignment} is not a multiple of stride×window {grain}"
                )
        return self


class CodecConfig(BaseModel):
    intra_period: int = Field(32, ge=1)
    frames_to_code: int = Field(96, ge=1)
    mask_mode: MaskMode = MaskMode.LEARNED


class TrainConfig(BaseModel):
    metric: Metric = Metric.MSE
    lambda_index: int = 0
    seed: int = Field(default_factory=lambda: int(os.getenv("MASKCRT_SEED", "0")))
    batch_size: int = 4
    crop: int = 64
    epoch_scale: float = 0.2
    steps_per_epoch: int = 50
    grad_clip: float = 1.0
    mask_mode: MaskMode = MaskMode.LEARNED
    device: str = Field(default_factory=lambda: os.getenv("MASKCRT_DEVICE", "cpu"))


def toy_preset(**overrides) -> ModelConfig:
    """Desk-scale model: total stride 8, latent 96, conditions (32, 48, 64) at (2, 4, 8)."""
    return ModelConfig(preset="toy", **overrides)


def paper_shape_preset(**overrides) -> ModelConfig:
    """Full-size shapes for complexity accounting; not meant for desk training."""
    inter = ConditionalCodecConfig(
        in_channels=3,
        widths=(96, 128, 192),
        strides=(2, 8, 16),
        latent_channels=192,
        hyper_channels=128,
        cstb=CstbConfig(layers_per_block=(4, 4, 2), window=8, heads=8),
        use_ctm=True,
        ctm_heads=8,
    )
    motion = ConditionalCodecConfig(
        in_channels=2,
        widths=(64, 96, 128),
        strides=(2, 8, 16),
        latent_channels=128,
        hyper_channels=96,
        cstb=CstbConfig(layers_per_block=(2, 2, 2), window=8, heads=8),
        use_ctm=False,
        ctm_heads=8,
    )
    values = dict(
        preset="paper_shape", alignment=128, inter=inter, motion=motion,
        intra_width=128, intra_latent=192, intra_hyper=128,
        flow_width=64, extrapolation_width=48, mcnet_width=64, mask_width=32,
    )
    values.update(overrides)
    return ModelConfig(**values)


PRESETS = {
    "toy": toy_preset,
    "paper_shape": paper_shape_preset,
}


def resolve_preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
    return PRESETS[name](**overrides)


def build_lambda_ladder(metric: Metric | str, preset: str = "paper_shape") -> List[float]:
    """
    Rate-distortion trade-offs, one trained model per entry.

    paper_shape returns the published ladders in published order; toy returns the
    three highest values, strictly decreasing (index 0 is the top operating point).
    """
    if isinstance(metric, str) and metric.lower() in ("psnr", "psnr_rgb"):
        metric = Metric.MSE
    elif isinstance(metric, str) and metric.lower() == "msssim_rgb":
        metric = Metric.MSSSIM
    metric = Metric(metric)
    ladder = PSNR_LAMBDAS if metric is Metric.MSE else MSSSIM_LAMBDAS
    if preset == "toy":
        return sorted(ladder, reverse=True)[:3]
    return list(ladder)


def with_inter(cfg: ModelConfig, variant: Optional[CstbVariant] = None, fuse: Optional[bool] = None,
               context: Optional[ContextKind] = None, use_ctm: Optional[bool] = None,
               extra_layers: Optional[int] = None) -> ModelConfig:
    """Copy of ``cfg`` with the inter-frame codec's options replaced where given."""
    inter = cfg.inter.model_copy(deep=True)
    cstb = {k: v for k, v in (("variant", variant), ("fuse", fuse)) if v is not None}
    if cstb:
        inter.cstb = inter.cstb.model_copy(update=cstb)
    if context is not None:
        inter.context = inter.context.model_copy(update={"kind": ContextKind(context)})
    if use_ctm is not None:
        inter.use_ctm = use_ctm
    if extra_layers is not None:
        inter.extra_layers = extra_layers
    return cfg.model_copy(update={"inter": inter})


class RunConfig(BaseModel):
    """Fully resolved options of one CLI invocation; echoed into its manifest."""
    command: Command
    model: Optional[str] = None
    inputs: List[str] = Field(default_factory=list)
    output: Optional[str] = None
    run_dir: Optional[str] = None
    preset: str = "toy"
    metric: Metric = Metric.MSE
    mask_mode: MaskMode = MaskMode.LEARNED
    context_kind: Optional[ContextKind] = None
    cstb_variant: Optional[CstbVariant] = None
    ctm: Optional[bool] = None
    seed: int = Field(default_factory=lambda: int(os.getenv("MASKCRT_SEED", "0")))
    lambda_index: int = 0
    intra_period: int = Field(32, ge=1)
    frames: int = Field(96, ge=1)
    crop: bool = False
    extra: dict = Field(default_factory=dict)

    def resolve_model(self) -> ModelConfig:
        return with_inter(
            resolve_preset(self.preset), variant=self.cstb_variant, context=self.context_kind, use_ctm=self.ctm,
        )

    def codec_config(self) -> CodecConfig:
        return CodecConfig(intra_period=self.intra_period, frames_to_code=self.frames, mask_mode=self.mask_mode)
