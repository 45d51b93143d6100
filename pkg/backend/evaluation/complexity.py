"""
Analytic complexity accounting.

MACs are counted per layer from tensor shapes seen by forward hooks, so
the numbers depend on the architecture and the input size only:

    Conv2d             out elements * in/groups * kh * kw
    ConvTranspose2d    in elements * out/groups * kh * kw
    Linear             out elements * in features
    GDN                out elements * channels
    WindowAttention    QK^T and AV products over window tokens
    ChannelAttention   QK^T and AV products over channel tokens
    FactorizeCell      per-channel matrix products
"""
from collections import defaultdict
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import torch
from compressai.layers import GDN
from torch import nn

from backend.constants import ComplexityReport, DPB_FLOWS, DPB_FRAMES, MaskMode, QuantMode
from backend.entropy.ctm import ChannelAttention
from backend.entropy.factorized import FactorizeCell
from backend.transformer.swin import WindowAttention
from backend.utils.logger import setup_logger

logger = setup_logger("complexity")

# (channels, stride) of every map a codec keeps between frames
BufferEntry = Tuple[int, int]

BUFFER_PRESETS: Dict[str, List[BufferEntry]] = {
    "MaskCRT": [(3, 1)] * DPB_FRAMES + [(2, 1)] * DPB_FLOWS,
    "CANF-VC": [(3, 1)] * 3 + [(2, 1)] * 2,
    "DCVC": [(3, 1)],
    "DCVC-TCM": [(64, 1), (3, 1)],
    "DCVC-HEM": [(64, 1), (3, 1), (96, 16), (96, 16)],
    "DCVC-DC": [(48, 1), (3, 1), (4, 1), (192, 16)],
    "HM/VTM": [(3, 1)] * 4,
}

# Components of a qualified module name that only the encoder evaluates
ENCODER_ONLY_PARTS = frozenset({"flow_estimator", "analysis", "hyper_analysis", "ctm_encoder"})


def buffer_planes(entries: Sequence[BufferEntry]) -> float:
    """Full-resolution plane equivalents: a c-channel map at stride s counts c / s^2."""
    return float(sum(c / (s * s) for c, s in entries))


def buffer_preset_planes() -> Dict[str, float]:
    return {name: buffer_planes(entries) for name, entries in BUFFER_PRESETS.items()}


# ──────────────────────────────────────────────
# Per-layer counters
# ──────────────────────────────────────────────
def _conv_macs(m: nn.Conv2d, args, kwargs, out) -> int:
    kh, kw = m.kernel_size
    return out.numel() * (m.in_channels // m.groups) * kh * kw


def _deconv_macs(m: nn.ConvTranspose2d, args, kwargs, out) -> int:
    kh, kw = m.kernel_size
    return args[0].numel() * (m.out_channels // m.groups) * kh * kw


def _linear_macs(m: nn.Linear, args, kwargs, out) -> int:
    return out.numel() * m.in_features


def _gdn_macs(m: GDN, args, kwargs, out) -> int:
    return out.numel() * out.shape[1]


def _window_attention_macs(m: WindowAttention, args, kwargs, out) -> int:
    x = args[0]
    context = kwargs.get("context", args[3] if len(args) > 3 else None)
    n_q = x.shape[1]
    n_k = context.shape[1] if context is not None else n_q
    return 2 * x.shape[0] * n_q * n_k * m.dim


def _channel_attention_macs(m: ChannelAttention, args, kwargs, out) -> int:
    b, c, h, w = args[0].shape
    return 2 * b * c * (c // m.heads) * h * w


def _factorize_cell_macs(m: FactorizeCell, args, kwargs, out) -> int:
    channels, _, n = args[0].shape
    return channels * m.out_channel * m.in_channel * n


COUNTERS: Dict[type, Callable[..., int]] = {
    nn.Conv2d: _conv_macs,
    nn.ConvTranspose2d: _deconv_macs,
    nn.Linear: _linear_macs,
    GDN: _gdn_macs,
    WindowAttention: _window_attention_macs,
    ChannelAttention: _channel_attention_macs,
    FactorizeCell: _factorize_cell_macs,
}


def _counter_for(module: nn.Module) -> Optional[Callable[..., int]]:
    for kind, counter in COUNTERS.items():
        if isinstance(module, kind):
            return counter
    return None


def count_macs(root: nn.Module, run: Callable[[], Any]) -> Dict[str, int]:
    """MACs per qualified module name of ``root`` while ``run()`` executes."""
    macs: Dict[str, int] = defaultdict(int)

    def hook(module, args, kwargs, out, name, counter):
        macs[name] += int(counter(module, args, kwargs, out))

    handles = []
    for name, module in root.named_modules():
        counter = _counter_for(module)
        if counter is not None:
            handles.append(module.register_forward_hook(
                partial(hook, name=name, counter=counter), with_kwargs=True
            ))
    try:
        with torch.no_grad():
            run()
    finally:
        for h in handles:
            h.remove()
    return dict(macs)


def module_kmac_per_pixel(module: nn.Module, *inputs: torch.Tensor) -> float:
    """kMAC per input pixel of a single forward call."""
    macs = count_macs(module, lambda: module(*inputs))
    pixels = inputs[0].shape[-2] * inputs[0].shape[-1]
    return sum(macs.values()) / pixels / 1000.0


def _group(name: str) -> str:
    parts = name.split(".")
    if parts[0] in ("motion_codec", "inter_codec") and len(parts) > 1:
        return ".".join(parts[:2])
    return parts[0]


def is_decoder_side(name: str) -> bool:
    return not (ENCODER_ONLY_PARTS & set(name.split(".")))


def complexity_report(model: nn.Module, height: Optional[int] = None, width: Optional[int] = None,
                      mask_mode: MaskMode = MaskMode.LEARNED) -> ComplexityReport:
    """
    Complexity of one P-frame of a VideoCodec at ``height`` x ``width``
    (default: one alignment block).

    Encoder MACs cover the full encoder pass, which also reconstructs;
    decoder MACs drop the modules only the encoder evaluates.
    """
    cfg = model.cfg
    height = height or cfg.alignment
    width = width or cfg.alignment
    g = torch.Generator().manual_seed(0)
    x_t = torch.rand(1, 3, height, width, generator=g)
    x_ref = torch.rand(1, 3, height, width, generator=g)
    frames = torch.rand(1, 3 * DPB_FRAMES, height, width, generator=g)
    flows = torch.zeros(1, 2 * DPB_FLOWS, height, width)

    was_training = model.training
    model.eval()

    def run():
        f_c = model.extrapolator(frames, flows)
        model.p_frame(x_t, x_ref, f_c, mask_mode, QuantMode.ROUND)

    try:
        macs = count_macs(model, run)
    finally:
        model.train(was_training)

    pixels = height * width
    per_module: Dict[str, float] = defaultdict(float)
    enc = dec = 0
    for name, n in macs.items():
        per_module[_group(name)] += n / pixels / 1000.0
        enc += n
        if is_decoder_side(name):
            dec += n

    p_frame_params = sum(p.numel() for name, p in model.named_parameters() if not name.startswith("intra."))
    report = ComplexityReport(
        param_count=p_frame_params,
        enc_kmac_per_pixel=enc / pixels / 1000.0,
        dec_kmac_per_pixel=dec / pixels / 1000.0,
        buffer_planes=buffer_planes(BUFFER_PRESETS["MaskCRT"]),
        per_module=dict(sorted(per_module.items())),
    )
    logger.info(
        f"[complexity_report] {cfg.preset} {width}x{height} | params={report.param_count} "
        f"enc={report.enc_kmac_per_pixel:.2f} dec={report.dec_kmac_per_pixel:.2f} kMAC/px"
    )
    return report
