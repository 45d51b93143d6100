from dataclasses import dataclass
from typing import Tuple

import torch
from torch import nn

from backend.constants import QuantMode
from backend.constants.presets import ConditionalCodecConfig
from backend.entropy import ChannelTransformModule, LatentCoding, LatentEntropyModel
from backend.transformer import AnalysisTransform, ConditionExtractor, SynthesisTransform
from backend.utils.exception import check_spatial_match


@dataclass
class CodecOutput:
    decoded: torch.Tensor
    coding: LatentCoding

    @property
    def bits(self) -> torch.Tensor:
        return self.coding.bits


class ConditionalCodec(nn.Module):
    """
    Conditional transformer autoencoder {G_enc, G_dec} with hyperprior.

    The condition pyramid is extracted from the condition signal alone, so
    the decoder rebuilds it from what it has already decoded. Used for the
    inter-frame codec (input x_t - m*x_c, condition x_c) and the motion
    codec (input f_t, condition f_c).
    """

    def __init__(self, cfg: ConditionalCodecConfig):
        super().__init__()
        self.cfg = cfg
        self.condition_extractor = ConditionExtractor(cfg)
        self.analysis = AnalysisTransform(cfg)
        self.synthesis = SynthesisTransform(cfg)
        if cfg.use_ctm:
            self.ctm_encoder = ChannelTransformModule(cfg.latent_channels, cfg.ctm_heads)
            self.ctm_decoder = ChannelTransformModule(cfg.latent_channels, cfg.ctm_heads)
        else:
            self.ctm_encoder = nn.Identity()
            self.ctm_decoder = nn.Identity()
        self.entropy = LatentEntropyModel(cfg.latent_channels, cfg.hyper_channels, cfg.context)

    def latent_shape(self, condition: torch.Tensor) -> Tuple[int, int, int, int]:
        s = self.cfg.total_stride
        b, _, h, w = condition.shape
        return b, self.cfg.latent_channels, h // s, w // s

    def encode_latent(self, x_in: torch.Tensor, condition: torch.Tensor):
        check_spatial_match(x_in, condition, "conditional codec")
        cond = self.condition_extractor(condition)
        y = self.ctm_encoder(self.analysis(x_in, cond))
        return y, cond

    def forward(self, x_in: torch.Tensor, condition: torch.Tensor,
                mode: QuantMode | str = QuantMode.NOISE, straight_through: bool = False) -> CodecOutput:
        y, cond = self.encode_latent(x_in, condition)
        coding = self.entropy(y, mode, straight_through=straight_through)
        decoded = self.synthesis(self.ctm_decoder(coding.y_hat), cond)
        return CodecOutput(decoded=decoded, coding=coding)

    @torch.no_grad()
    def compress(self, x_in: torch.Tensor, condition: torch.Tensor) -> Tuple[bytes, bytes, torch.Tensor, float]:
        """
        Returns (hyper payload, main payload, decoded, estimated bits) with
        decoded built from y_hat only.
        """
        y, cond = self.encode_latent(x_in, condition)
        hyper, main, y_hat, _, bits = self.entropy.compress(y)
        return hyper, main, self.synthesis(self.ctm_decoder(y_hat), cond), bits

    @torch.no_grad()
    def decompress(self, hyper: bytes, main: bytes, condition: torch.Tensor) -> torch.Tensor:
        cond = self.condition_extractor(condition)
        y_hat, _ = self.entropy.decompress(hyper, main, self.latent_shape(condition))
        return self.synthesis(self.ctm_decoder(y_hat), cond)
