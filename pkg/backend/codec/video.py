from dataclasses import dataclass
from typing import Dict, List

import torch
from torch import nn

from backend.constants import MaskMode, QuantMode
from backend.constants.presets import ModelConfig
from backend.codec.conditional_codec import ConditionalCodec
from backend.codec.intra import IntraCodec
from backend.entropy import LatentCoding
from backend.masking import MaskGenerator, generate_mask, mix_input, reconstruct
from backend.motion import FlowEstimator, FlowExtrapolator, MotionCompensation, warp


@dataclass
class PFrameOutput:
    x_hat: torch.Tensor
    f_hat: torch.Tensor
    f_t: torch.Tensor
    x_c: torch.Tensor
    warped: torch.Tensor
    mask: torch.Tensor
    mixed: torch.Tensor
    motion_bits: torch.Tensor
    inter_bits: torch.Tensor
    inter_coding: LatentCoding

    @property
    def bits(self) -> torch.Tensor:
        return self.motion_bits + self.inter_bits


class VideoCodec(nn.Module):
    """All networks of the coder: intra codec, motion path, mask path and inter codec."""

    # Sub-modules only the encoder runs; the decoder never evaluates them
    ENCODER_ONLY = ("flow_estimator",)

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.intra = IntraCodec(cfg.intra_width, cfg.intra_latent, cfg.intra_hyper)
        self.flow_estimator = FlowEstimator(cfg.flow_levels, cfg.flow_width)
        self.motion_codec = ConditionalCodec(cfg.motion)
        self.extrapolator = FlowExtrapolator(cfg.extrapolation_width)
        self.mcnet = MotionCompensation(cfg.mcnet_width)
        self.mask_generator = MaskGenerator(cfg.mask_width)
        self.inter_codec = ConditionalCodec(cfg.inter)

    def module_groups(self) -> Dict[str, nn.Module]:
        return {
            "intra": self.intra,
            "flow_estimator": self.flow_estimator,
            "motion_codec": self.motion_codec,
            "extrapolator": self.extrapolator,
            "mcnet": self.mcnet,
            "mask_generator": self.mask_generator,
            "inter_codec": self.inter_codec,
        }

    def parameters_of(self, names: List[str]) -> List[nn.Parameter]:
        groups = self.module_groups()
        return [p for name in names for p in groups[name].parameters()]

    def predict(self, x_ref: torch.Tensor, f_hat: torch.Tensor):
        """Decoder-side temporal prediction: (warped, x_c)."""
        warped = warp(x_ref, f_hat)
        return warped, self.mcnet(warped, x_ref)

    def p_frame(self, x_t: torch.Tensor, x_ref: torch.Tensor, f_c: torch.Tensor,
                mask_mode: MaskMode = MaskMode.LEARNED, mode: QuantMode | str = QuantMode.NOISE,
                straight_through: bool = False) -> PFrameOutput:
        """Differentiable P-frame pass used by training and rate estimation."""
        f_t = self.flow_estimator(x_t, x_ref)
        motion = self.motion_codec(f_t, f_c, mode, straight_through)
        f_hat = motion.decoded
        warped, x_c = self.predict(x_ref, f_hat)
        mask = generate_mask(self.mask_generator, x_c, f_hat, mask_mode)
        mixed = mix_input(x_t, x_c, mask)
        inter = self.inter_codec(mixed, x_c, mode, straight_through)
        x_hat = reconstruct(inter.decoded, x_c, mask)
        return PFrameOutput(
            x_hat=x_hat, f_hat=f_hat, f_t=f_t, x_c=x_c, warped=warped, mask=mask, mixed=mixed,
            motion_bits=motion.bits, inter_bits=inter.bits, inter_coding=inter.coding,
        )
