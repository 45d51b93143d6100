import pytest
import torch
import torch.nn.functional as F
from scipy.ndimage import gaussian_filter

from backend.constants import MaskMode
from backend.masking import MaskGenerator, flow_gradient_magnitude, generate_mask, mix_input, reconstruct
from backend.motion import warp
from backend.training import SyntheticClipConfig, synthetic_clip


def test_mask_is_in_unit_interval_and_single_channel():
    torch.manual_seed(0)
    net = MaskGenerator(8)
    m = generate_mask(net, torch.rand(2, 3, 8, 8), torch.randn(2, 2, 8, 8) * 4)
    assert m.shape == (2, 1, 8, 8)
    assert float(m.min()) >= 0.0 and float(m.max()) <= 1.0


def test_constant_modes_ignore_the_network():
    x_c = torch.rand(1, 3, 8, 8)
    f = torch.randn(1, 2, 8, 8)
    net = MaskGenerator(8)
    assert torch.equal(generate_mask(net, x_c, f, MaskMode.ZERO), torch.zeros(1, 1, 8, 8))
    assert torch.equal(generate_mask(net, x_c, f, MaskMode.ONE), torch.ones(1, 1, 8, 8))


def test_zero_mask_reduces_to_conditional_coding():
    x_t, x_c = torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8)
    m = torch.zeros(1, 1, 8, 8)
    assert torch.equal(mix_input(x_t, x_c, m), x_t)


def test_one_mask_reduces_to_residual_coding():
    x_t, x_c = torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8)
    m = torch.ones(1, 1, 8, 8)
    assert torch.equal(mix_input(x_t, x_c, m), x_t - x_c)


def test_mix_then_reconstruct_is_lossless_without_coding():
    x_t, x_c = torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8)
    m = torch.rand(1, 1, 8, 8)
    assert torch.allclose(reconstruct(mix_input(x_t, x_c, m), x_c, m), x_t, atol=1e-6)


def test_reconstruction_is_clipped():
    x_c = torch.ones(1, 3, 4, 4)
    out = reconstruct(torch.ones(1, 3, 4, 4), x_c, torch.ones(1, 1, 4, 4))
    assert float(out.max()) == 1.0


def test_flow_gradient_is_zero_on_constant_flow():
    g = flow_gradient_magnitude(torch.full((1, 2, 6, 6), 3.0))
    assert g.shape == (1, 1, 6, 6)
    assert float(g.max()) < 1e-2


def test_mask_generator_gradient(gradient_error):
    torch.manual_seed(0)
    net = MaskGenerator(8).double()
    f_hat = torch.randn(1, 2, 8, 8, dtype=torch.float64)
    x_c = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    assert gradient_error(lambda x: net(x, f_hat), x_c) < 1e-3


# ──────────────────────────────────────────────
# Trained mask
# ──────────────────────────────────────────────
def _occlusion_scene(backgrounds: torch.Tensor, patches: torch.Tensor, g: torch.Generator):
    """
    One static background with a 16x16 occluder that moves 3-6 px between
    the reference and the current frame. Returns (x_t, x_c, flow, usable)
    where ``usable`` marks pixels that x_c predicts within 0.05.
    """
    size = backgrounds.shape[-1]
    bg = backgrounds[int(torch.randint(0, len(backgrounds), (1,), generator=g))]
    patch = patches[int(torch.randint(0, len(patches), (1,), generator=g))]
    top, left = (int(v) for v in torch.randint(8, size - 24, (2,), generator=g))
    step = int(torch.randint(3, 7, (1,), generator=g)) * (1 if torch.rand(1, generator=g) < 0.5 else -1)
    horizontal = bool(torch.rand(1, generator=g) < 0.5)
    dy, dx = (0, step) if horizontal else (step, 0)

    reference, x_t = bg.clone(), bg.clone()
    reference[:, top:top + 16, left:left + 16] = patch
    x_t[:, top + dy:top + dy + 16, left + dx:left + dx + 16] = patch

    flow = torch.zeros(1, 2, size, size)
    flow[:, 0, top + dy:top + dy + 16, left + dx:left + dx + 16] = -dx
    flow[:, 1, top + dy:top + dy + 16, left + dx:left + dx + 16] = -dy
    # decoded flow is smooth across motion boundaries
    flow = torch.from_numpy(gaussian_filter(flow.numpy(), sigma=(0, 0, 2, 2))).float()

    x_c = warp(reference.unsqueeze(0), flow)
    usable = ((x_c - x_t).abs().mean(dim=1, keepdim=True) < 0.05).float()
    return x_t.unsqueeze(0), x_c, flow, usable


@pytest.mark.slow
def test_trained_mask_is_darker_along_motion_boundaries():
    cfg = SyntheticClipConfig(height=64, width=64, max_speed=0.0, max_rotation=0.0,
                              occluder_fraction=0.0, illumination_drift=0.0)
    textures = torch.stack([synthetic_clip(1, cfg, seed=s)[0].pixels for s in range(12)])
    backgrounds, patches = textures[:8], textures[8:, :, :16, :16]

    torch.manual_seed(0)
    g = torch.Generator().manual_seed(0)
    net = MaskGenerator(16)
    optimizer = torch.optim.Adam(net.parameters(), lr=3e-3)
    for _ in range(400):
        scenes = [_occlusion_scene(backgrounds, patches, g) for _ in range(4)]
        _, x_c, flow, usable = (torch.cat(parts) for parts in zip(*scenes))
        optimizer.zero_grad()
        F.binary_cross_entropy(net(x_c, flow), usable).backward()
        optimizer.step()

    scenes = [_occlusion_scene(backgrounds, patches, torch.Generator().manual_seed(100 + i)) for i in range(4)]
    _, x_c, flow, _ = (torch.cat(parts) for parts in zip(*scenes))
    with torch.no_grad():
        mask = generate_mask(net.eval(), x_c, flow).reshape(-1)
    order = flow_gradient_magnitude(flow).reshape(-1).argsort()
    decile = len(order) // 10
    assert float(mask[order[-decile:]].mean()) < float(mask[order[:decile]].mean())
