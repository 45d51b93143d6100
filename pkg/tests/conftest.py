import pytest
import torch

from backend.constants.presets import (
    CodecConfig,
    ConditionalCodecConfig,
    CstbConfig,
    ModelConfig,
)
from backend.training import SyntheticClipConfig, synthetic_clip

MICRO_SIZE = 64


def micro_config(**overrides) -> ModelConfig:
    """Smallest model that still exercises every stage (alignment 32)."""
    cstb = CstbConfig(layers_per_block=(1, 1, 1), window=4, heads=2)
    inter = ConditionalCodecConfig(
        widths=(8, 8, 16), latent_channels=16, hyper_channels=8, cstb=cstb, use_ctm=True, ctm_heads=2,
    )
    motion = ConditionalCodecConfig(
        in_channels=2, widths=(8, 8, 8), latent_channels=8, hyper_channels=8,
        cstb=cstb.model_copy(), use_ctm=False, ctm_heads=2,
    )
    values = dict(
        preset="toy", alignment=32, inter=inter, motion=motion,
        intra_width=8, intra_latent=8, intra_hyper=8,
        flow_levels=2, flow_width=8, extrapolation_width=8, mcnet_width=8, mask_width=8,
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def micro_cfg() -> ModelConfig:
    return micro_config()


@pytest.fixture
def micro_model(micro_cfg):
    from backend.codec import VideoCodec

    torch.manual_seed(0)
    return VideoCodec(micro_cfg).eval()


@pytest.fixture
def clip_cfg() -> SyntheticClipConfig:
    return SyntheticClipConfig(height=MICRO_SIZE, width=MICRO_SIZE)


@pytest.fixture
def toy_clip(clip_cfg):
    return synthetic_clip(6, clip_cfg, seed=0)


@pytest.fixture
def codec_config() -> CodecConfig:
    return CodecConfig(intra_period=4, frames_to_code=6)


@pytest.fixture(autouse=True)
def _isolated_runs(tmp_path, monkeypatch):
    monkeypatch.setenv("MASKCRT_RUNS_DIR", str(tmp_path / "runs"))


@pytest.fixture
def gradient_error():
    """
    Compare autograd against central differences at a few random input
    coordinates of ``fn`` (float64); returns the worst relative error.
    """
    def check(fn, x: torch.Tensor, points: int = 5, eps: float = 1e-5, seed: int = 0) -> float:
        g = torch.Generator().manual_seed(seed)
        x = x.detach().double().requires_grad_(True)
        out = fn(x)
        weights = torch.randn(out.shape, generator=g, dtype=torch.float64)
        (grad,) = torch.autograd.grad((out * weights).sum(), x)

        flat = x.detach().reshape(-1)
        worst = 0.0
        for index in torch.randperm(flat.numel(), generator=g)[:points].tolist():
            plus, minus = flat.clone(), flat.clone()
            plus[index] += eps
            minus[index] -= eps
            with torch.no_grad():
                f_plus = (fn(plus.view_as(x)) * weights).sum()
                f_minus = (fn(minus.view_as(x)) * weights).sum()
            numeric = float((f_plus - f_minus) / (2 * eps))
            analytic = float(grad.reshape(-1)[index])
            worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-4))
        return worst

    return check
