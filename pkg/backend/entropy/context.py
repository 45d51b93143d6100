from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from backend.bitstream.range_coder import RangeDecoder, RangeEncoder
from backend.bitstream.tables import factorized_tables, gaussian_tables, scale_indexes
from backend.constants import ContextKind, QuantMode
from backend.constants.presets import ContextConfig
from backend.entropy.factorized import FactorizedPrior
from backend.entropy.gaussian import EntropyParams, ScaleBound, element_bits
from backend.entropy.quantize import quantize, quantize_ste, round_half_away
from backend.utils.exception import ConfigurationError, ContractViolation

HYPER_STRIDE = 4

# (slice index, mean, scale, position mask or None) -> decoded values of the slice
GroupCoder = Callable[[int, torch.Tensor, torch.Tensor, Optional[torch.Tensor]], torch.Tensor]


class HyperAnalysis(nn.Sequential):
    def __init__(self, latent_channels: int, hyper_channels: int):
        super().__init__(
            nn.Conv2d(latent_channels, hyper_channels, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(hyper_channels, hyper_channels, 5, stride=2, padding=2), nn.LeakyReLU(0.1),
            nn.Conv2d(hyper_channels, hyper_channels, 5, stride=2, padding=2),
        )


class HyperSynthesis(nn.Sequential):
    def __init__(self, latent_channels: int, hyper_channels: int):
        super().__init__(
            nn.ConvTranspose2d(hyper_channels, hyper_channels, 5, stride=2, padding=2, output_padding=1),
            nn.LeakyReLU(0.1),
            nn.ConvTranspose2d(hyper_channels, hyper_channels * 3 // 2, 5, stride=2, padding=2, output_padding=1),
            nn.LeakyReLU(0.1),
            nn.Conv2d(hyper_channels * 3 // 2, latent_channels * 2, 3, padding=1),
        )


class ParamNet(nn.Sequential):
    """Maps context features to (mean, raw scale) for one coding group."""

    def __init__(self, in_channels: int, out_channels: int):
        hidden = max(out_channels, (in_channels + out_channels) // 2)
        super().__init__(
            nn.Conv2d(in_channels, hidden, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, hidden, 1), nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, out_channels * 2, 1),
        )


def checkerboard_mask(height: int, width: int, device=None) -> torch.Tensor:
    """True on anchor positions ((i + j) even), shape (1, 1, H, W)."""
    ii = torch.arange(height, device=device).view(-1, 1)
    jj = torch.arange(width, device=device).view(1, -1)
    return ((ii + jj) % 2 == 0).view(1, 1, height, width)


@dataclass
class LatentCoding:
    y_hat: torch.Tensor
    z_hat: torch.Tensor
    params: EntropyParams
    y_bits: torch.Tensor
    z_bits: torch.Tensor

    @property
    def bits(self) -> torch.Tensor:
        return self.y_bits.sum() + self.z_bits.sum()


class LatentEntropyModel(nn.Module):
    """
    Hyperprior entropy model of the main latent with optional context:

        hyper            params from z_hat only
        charm            channel slices coded in order, each conditioned on earlier ones
        checkerboard     anchors first, non-anchors conditioned on decoded anchors
        spatial_channel  checkerboard inside every channel slice

    Every configuration is expressed as an ordered list of coding groups; the
    same walk drives training (groups in parallel from the known y_hat), rate
    estimation, range encoding and decoding.
    """

    def __init__(self, latent_channels: int, hyper_channels: int, context: ContextConfig):
        super().__init__()
        kind = ContextKind(context.kind)
        self.kind = kind
        self.latent_channels = latent_channels
        self.slices = context.slices if kind in (ContextKind.CHARM, ContextKind.SPATIAL_CHANNEL) else 1
        self.checkerboard = kind in (ContextKind.CHECKERBOARD, ContextKind.SPATIAL_CHANNEL)
        if self.slices < 1 or latent_channels % self.slices:
            raise ConfigurationError(
                f"{self.slices} slices do not divide {latent_channels} latent channels"
            )
        cs = latent_channels // self.slices
        self.slice_channels = cs

        self.hyper_analysis = HyperAnalysis(latent_channels, hyper_channels)
        self.hyper_synthesis = HyperSynthesis(latent_channels, hyper_channels)
        self.prior = FactorizedPrior(hyper_channels)
        self.scale_bound = ScaleBound()

        base = 2 * latent_channels
        self.anchor_nets = nn.ModuleList([ParamNet(base + i * cs, cs) for i in range(self.slices)])
        if self.checkerboard:
            self.context_convs = nn.ModuleList([
                nn.Conv2d(cs, 2 * cs, 5, padding=2) for _ in range(self.slices)
            ])
            self.non_anchor_nets = nn.ModuleList([
                ParamNet(base + i * cs + 2 * cs, cs) for i in range(self.slices)
            ])

    def _params(self, net: nn.Module, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        mean, raw = net(features).chunk(2, dim=1)
        return mean, self.scale_bound(F.softplus(raw))

    def _check_latent(self, shape) -> None:
        if shape[1] != self.latent_channels:
            raise ConfigurationError(
                f"latent has {shape[1]} channels, entropy model expects {self.latent_channels}"
            )
        if shape[-2] % HYPER_STRIDE or shape[-1] % HYPER_STRIDE:
            raise ContractViolation(
                f"latent {shape[-2]}x{shape[-1]} is not a multiple of hyper stride {HYPER_STRIDE}"
            )

    def walk(self, hyper_feat: torch.Tensor, code_group: GroupCoder) -> Tuple[torch.Tensor, EntropyParams]:
        """Visit the coding groups in decode order; returns y_hat and the params used."""
        _, _, h, w = hyper_feat.shape
        mask = checkerboard_mask(h, w, hyper_feat.device) if self.checkerboard else None
        decoded: List[torch.Tensor] = []
        means: List[torch.Tensor] = []
        scales: List[torch.Tensor] = []

        for i in range(self.slices):
            base = torch.cat([hyper_feat] + decoded, dim=1)
            mean, scale = self._params(self.anchor_nets[i], base)
            if mask is None:
                decoded.append(code_group(i, mean, scale, None))
                means.append(mean)
                scales.append(scale)
                continue

            anchor = code_group(i, mean, scale, mask)
            anchor = torch.where(mask, anchor, torch.zeros_like(anchor))
            ctx = self.context_convs[i](anchor)
            mean2, scale2 = self._params(self.non_anchor_nets[i], torch.cat([base, ctx], dim=1))
            non_anchor = code_group(i, mean2, scale2, ~mask)
            decoded.append(torch.where(mask, anchor, non_anchor))
            means.append(torch.where(mask, mean, mean2))
            scales.append(torch.where(mask, scale, scale2))

        params = EntropyParams(torch.cat(means, dim=1), torch.cat(scales, dim=1))
        params.check()
        return torch.cat(decoded, dim=1), params

    def _slice(self, y: torch.Tensor, i: int) -> torch.Tensor:
        cs = self.slice_channels
        return y[:, i * cs:(i + 1) * cs]

    def forward(self, y: torch.Tensor, mode: QuantMode | str = QuantMode.NOISE,
                straight_through: bool = False) -> LatentCoding:
        """
        Quantise y and estimate its rate. In noise mode the groups are computed
        in parallel from y + u; in round mode the walk is sequential because each
        group is rounded around its own predicted mean.
        """
        self._check_latent(y.shape)
        mode = QuantMode(mode)
        z = self.hyper_analysis(y)
        if mode is QuantMode.NOISE:
            z_hat = self.prior.quantize(z, mode)
        elif straight_through:
            z_hat = quantize_ste(z, self.prior.median_map())
        else:
            z_hat = self.prior.quantize(z, mode)
        hyper_feat = self.hyper_synthesis(z_hat)

        if mode is QuantMode.NOISE:
            y_tilde = quantize(y, mode)

            def code_group(i, mean, scale, mask):
                return self._slice(y_tilde, i)
        else:
            def code_group(i, mean, scale, mask):
                part = self._slice(y, i)
                return quantize_ste(part, mean) if straight_through else quantize(part, mode, mean)

        y_hat, params = self.walk(hyper_feat, code_group)
        return LatentCoding(
            y_hat=y_hat, z_hat=z_hat, params=params,
            y_bits=element_bits(y_hat, params),
            z_bits=self.prior.element_bits(z_hat),
        )

    def model_probabilities(self, y_hat: torch.Tensor, z_hat: torch.Tensor) -> EntropyParams:
        """Params for a fully decoded y_hat, every group at once."""
        self._check_latent(y_hat.shape)
        hyper_feat = self.hyper_synthesis(z_hat)
        _, params = self.walk(hyper_feat, lambda i, mean, scale, mask: self._slice(y_hat, i))
        return params

    def aux_loss(self) -> torch.Tensor:
        return self.prior.aux_loss()

    # ──────────────────────────────────────────────
    # Range coding
    # ──────────────────────────────────────────────
    @torch.no_grad()
    def compress(self, y: torch.Tensor) -> Tuple[bytes, bytes, torch.Tensor, torch.Tensor, float]:
        """
        Returns (hyper payload, main payload, y_hat, z_hat, estimated bits).

        The estimate is the model rate of the coded symbols (Gaussian and
        factorized likelihoods, floored) plus the bypass bits of escaped values.
        """
        self._check_latent(y.shape)
        medians = self.prior.median_map()
        z = self.hyper_analysis(y)
        z_hat = quantize(z, QuantMode.ROUND, medians)
        z_symbols = round_half_away(z - medians).to(torch.int64)

        z_tables = factorized_tables(self.prior.pmf_tables())
        hyper_encoder = RangeEncoder()
        channels = torch.arange(z.shape[1]).view(1, -1, 1, 1).expand_as(z_symbols)
        for value, c in zip(z_symbols.reshape(-1).tolist(), channels.reshape(-1).tolist()):
            hyper_encoder.encode_symbol(value, z_tables[c])

        tables = gaussian_tables()
        main_encoder = RangeEncoder()
        y_bits: List[torch.Tensor] = []

        def code_group(i, mean, scale, mask):
            part = self._slice(y, i)
            s = round_half_away(part - mean)
            if mask is not None:
                s = torch.where(mask, s, torch.zeros_like(s))
                select = mask.expand_as(s)
            else:
                select = torch.ones_like(s, dtype=torch.bool)
            values = s[select].to(torch.int64).tolist()
            indexes = scale_indexes(scale)[select].tolist()
            for value, index in zip(values, indexes):
                main_encoder.encode_symbol(value, tables[index])
            y_bits.append(element_bits(mean + s, EntropyParams(mean, scale))[select].sum())
            return mean + s

        y_hat, _ = self.walk(self.hyper_synthesis(z_hat), code_group)
        estimate = (float(torch.stack(y_bits).sum()) + float(self.prior.bits(z_hat))
                    + hyper_encoder.escape_bits + main_encoder.escape_bits)
        return hyper_encoder.finish(), main_encoder.finish(), y_hat, z_hat, estimate

    @torch.no_grad()
    def decompress(self, hyper_payload: bytes, main_payload: bytes, latent_shape) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (y_hat, z_hat); raises DecodeError on truncated or trailing bytes."""
        self._check_latent(latent_shape)
        b, _, h, w = latent_shape
        device = self.prior.quantiles.device
        z_shape = (b, self.prior.num_features, h // HYPER_STRIDE, w // HYPER_STRIDE)

        z_tables = factorized_tables(self.prior.pmf_tables())
        hyper_decoder = RangeDecoder(hyper_payload)
        channels = torch.arange(z_shape[1]).view(1, -1, 1, 1).expand(z_shape)
        z_values = [hyper_decoder.decode_symbol(z_tables[c]) for c in channels.reshape(-1).tolist()]
        hyper_decoder.finish()
        z_symbols = torch.tensor(z_values, dtype=torch.float32, device=device).view(z_shape)
        z_hat = self.prior.median_map() + z_symbols

        tables = gaussian_tables()
        main_decoder = RangeDecoder(main_payload)

        def code_group(i, mean, scale, mask):
            s = torch.zeros_like(mean)
            select = mask.expand_as(s) if mask is not None else torch.ones_like(s, dtype=torch.bool)
            indexes = scale_indexes(scale)[select].tolist()
            values = [main_decoder.decode_symbol(tables[index]) for index in indexes]
            s[select] = torch.tensor(values, dtype=s.dtype, device=s.device)
            return mean + s

        y_hat, _ = self.walk(self.hyper_synthesis(z_hat), code_group)
        main_decoder.finish()
        return y_hat, z_hat


def model_probabilities(model: LatentEntropyModel, y_hat: torch.Tensor, z_hat: torch.Tensor) -> EntropyParams:
    return model.model_probabilities(y_hat, z_hat)
