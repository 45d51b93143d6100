from typing import List, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from backend.constants import LIKELIHOOD_FLOOR, QuantMode
from backend.entropy.quantize import quantize


class FactorizeCell(nn.Module):
    def __init__(self, num_features, in_channel, out_channel, scale, factor=True):
        super().__init__()
        self.in_channel = in_channel
        self.out_channel = out_channel
        self.scale = scale

        self.weight = nn.Parameter(torch.Tensor(num_features, out_channel, in_channel))
        self.bias = nn.Parameter(torch.Tensor(num_features, out_channel, 1))
        if factor:
            self._factor = nn.Parameter(torch.Tensor(num_features, out_channel, 1))
        else:
            self.register_parameter("_factor", None)
        self.reset_parameters()

    def reset_parameters(self):
        init = np.log(np.expm1(1 / self.scale / self.out_channel))
        nn.init.constant_(self.weight, init)
        nn.init.uniform_(self.bias, -0.5, 0.5)
        if self._factor is not None:
            nn.init.zeros_(self._factor)

    def forward(self, input, detach=False):
        weight = self.weight.detach() if detach else self.weight
        bias = self.bias.detach() if detach else self.bias
        # softplus keeps every weight positive, so the composed map is monotone
        output = F.softplus(weight) @ input + bias
        if self._factor is not None:
            factor = self._factor.detach() if detach else self._factor
            output = output + torch.tanh(factor) * torch.tanh(output)
        return output


class FactorizeModel(nn.Sequential):
    """Per-channel monotone network giving the logits of the cumulative."""

    def __init__(self, num_features, init_scale, filters):
        super().__init__()
        _len = len(filters)
        filters = (1,) + tuple(int(f) for f in filters) + (1,)
        scale = init_scale ** (1 / (len(filters) + 1))

        for i in range(_len + 1):
            self.add_module("l%d" % i, FactorizeCell(
                num_features, filters[i], filters[i + 1], scale, factor=i < _len))

    def forward(self, input, detach=False):
        # (B, C, *) -> (C, 1, B*) so each channel runs through its own cells
        transposed = input.transpose(0, 1)
        tmp = transposed.reshape(input.size(1), 1, -1)
        for module in self:
            tmp = module(tmp, detach)
        return tmp.reshape_as(transposed).transpose(0, 1)


class FactorizedPrior(nn.Module):
    """
    Non-parametric per-channel prior for the hyper-latent z.

    z is quantised around the per-channel medians; tail quantiles are learnt
    through ``aux_loss`` and bound the support of the coding tables.
    """

    def __init__(self, num_features: int, init_scale: float = 10.0, filters=(3, 3, 3),
                 tail_mass: float = 2 ** -8):
        super().__init__()
        self.num_features = num_features
        self.tail_mass = float(tail_mass)
        self.factorizer = FactorizeModel(num_features, init_scale, filters)

        target = np.log(2 / self.tail_mass - 1)
        self.register_buffer("target", target * torch.tensor([[-1.0], [0.0], [1.0]]), persistent=False)
        quantiles = init_scale * torch.tensor([[-1.0], [0.0], [1.0]])
        self.quantiles = nn.Parameter(quantiles.repeat(1, num_features))

    def logits_cumulative(self, input: torch.Tensor, detach: bool = False) -> torch.Tensor:
        return self.factorizer(input, detach=detach)

    def cdf(self, input: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits_cumulative(input))

    def aux_loss(self) -> torch.Tensor:
        logits = self.logits_cumulative(self.quantiles, detach=True)
        return torch.sum(torch.abs(logits - self.target))

    @property
    def medians(self) -> torch.Tensor:
        return self.quantiles[1].detach()

    def median_map(self) -> torch.Tensor:
        return self.medians.view(1, self.num_features, 1, 1)

    def quantize(self, z: torch.Tensor, mode: QuantMode | str) -> torch.Tensor:
        if QuantMode(mode) is QuantMode.NOISE:
            return quantize(z, mode)
        return quantize(z, mode, self.median_map())

    def likelihood(self, z_hat: torch.Tensor) -> torch.Tensor:
        upper = self.logits_cumulative(z_hat + 0.5)
        lower = self.logits_cumulative(z_hat - 0.5)
        # Difference taken on the left tail of the sigmoid
        sign = -torch.sign(upper + lower).detach()
        likelihood = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        return torch.clamp(likelihood, min=LIKELIHOOD_FLOOR)

    def element_bits(self, z_hat: torch.Tensor) -> torch.Tensor:
        return -torch.log2(self.likelihood(z_hat))

    def bits(self, z_hat: torch.Tensor) -> torch.Tensor:
        return self.element_bits(z_hat).sum()

    @torch.no_grad()
    def pmf_tables(self) -> List[Tuple[int, np.ndarray]]:
        """
        Per channel: (offset, pmf) over the integer support around the median,
        offsets relative to the median bin; the last pmf entry is the tail mass.
        """
        medians = self.medians
        minima = torch.ceil(medians - self.quantiles[0].detach()).clamp_min(0)
        maxima = torch.ceil(self.quantiles[2].detach() - medians).clamp_min(0)
        lengths = (minima + maxima + 1).long()

        samples = torch.arange(int(lengths.max()), dtype=medians.dtype, device=medians.device)
        samples = samples.view(-1, 1) + (medians - minima)
        samples = samples.t().unsqueeze(0)  # (1, C, L) as a batch of one
        upper = self.logits_cumulative(samples + 0.5, detach=True)[0]
        lower = self.logits_cumulative(samples - 0.5, detach=True)[0]
        sign = -torch.sign(upper + lower)
        pmf = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        tail = torch.sigmoid(lower[:, :1]) + torch.sigmoid(-upper[:, -1:])

        pmf = pmf.double().cpu().numpy()
        tail = tail.double().cpu().numpy()
        tables = []
        for c in range(self.num_features):
            n = int(lengths[c])
            tables.append((-int(minima[c]), np.concatenate([pmf[c, :n], tail[c]])))
        return tables


def factorized_prior_bits(prior: FactorizedPrior, z_hat: torch.Tensor) -> torch.Tensor:
    return prior.bits(z_hat)
