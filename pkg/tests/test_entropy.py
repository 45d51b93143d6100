import math

import pytest
import torch

from backend.constants import LIKELIHOOD_FLOOR, SCALE_FLOOR, ContextKind, QuantMode
from backend.constants.presets import ContextConfig
from backend.entropy import (
    ChannelTransformModule,
    EntropyParams,
    FactorizedPrior,
    LatentEntropyModel,
    channel_correlation,
    checkerboard_mask,
    ctm_forward,
    ctm_inverse_side,
    element_bits,
    factorized_prior_bits,
    gaussian_likelihood,
    model_probabilities,
    quantize,
    quantize_ste,
    rate_bits,
    round_half_away,
)
from backend.utils.exception import ConfigurationError, ContractViolation, DecodeError

CONTEXTS = list(ContextKind)


def _model(kind: ContextKind, channels: int = 16) -> LatentEntropyModel:
    torch.manual_seed(0)
    return LatentEntropyModel(channels, 8, ContextConfig(kind=kind, slices=4)).eval()


def _latent(channels: int = 16, size: int = 16, seed: int = 1, std: float = 4.0) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return std * torch.randn(1, channels, size, size, generator=g)


def test_round_half_away_from_zero():
    x = torch.tensor([2.5, -2.5, 0.49, -0.5, 1.5])
    assert round_half_away(x).tolist() == [3.0, -3.0, 0.0, -1.0, 2.0]


def test_noise_quantization_stays_within_half():
    torch.manual_seed(0)
    y = torch.randn(1000)
    assert float((quantize(y, QuantMode.NOISE) - y).abs().max()) <= 0.5


def test_round_is_centred_on_means():
    y = torch.tensor([0.3, 1.2])
    means = torch.tensor([0.4, 0.4])
    assert torch.allclose(quantize(y, QuantMode.ROUND, means), torch.tensor([0.4, 1.4]))


def test_straight_through_gradient_is_identity():
    y = torch.randn(10, requires_grad=True)
    quantize_ste(y).sum().backward()
    assert torch.equal(y.grad, torch.ones(10))


def test_unit_gaussian_bits_at_mean():
    params = EntropyParams(torch.zeros(1), torch.ones(1))
    assert float(rate_bits(torch.zeros(1), params)) == pytest.approx(1.3849, abs=1e-3)


def test_likelihood_is_floored_far_in_the_tail():
    params = EntropyParams(torch.zeros(1), torch.full((1,), 0.11))
    assert float(gaussian_likelihood(torch.tensor([1e4]), params)) == pytest.approx(LIKELIHOOD_FLOOR)
    assert float(element_bits(torch.tensor([1e4]), params)) == pytest.approx(16.0)


def test_scale_below_floor_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        EntropyParams(torch.zeros(2), torch.tensor([0.5, 0.01])).check()


def test_checkerboard_anchor_positions():
    mask = checkerboard_mask(2, 3)
    assert mask[0, 0].tolist() == [[True, False, True], [False, True, False]]


@pytest.mark.parametrize("kind", CONTEXTS)
def test_range_coding_matches_rounded_forward(kind):
    model = _model(kind)
    y = _latent()
    with torch.no_grad():
        coding = model(y, QuantMode.ROUND)
    hyper, main, y_hat, z_hat, _ = model.compress(y)
    assert torch.equal(y_hat, coding.y_hat)
    assert torch.equal(z_hat, coding.z_hat)

    y_dec, z_dec = model.decompress(hyper, main, y.shape)
    assert torch.equal(y_dec, y_hat)
    assert torch.equal(z_dec, z_hat)


@pytest.mark.parametrize("kind", CONTEXTS)
def test_latent_payloads_track_the_estimated_rate(kind):
    model = _model(kind)
    y = _latent(size=32, std=0.7)
    with torch.no_grad():
        coding = model(y, QuantMode.ROUND)
    hyper, main, _, _, estimate = model.compress(y)
    # the estimate adds only the escape suffix bits to the model rate
    assert estimate >= float(coding.bits) - 1.0
    assert abs(8 * (len(hyper) + len(main)) - estimate) / estimate < 0.02


@pytest.mark.parametrize("kind", CONTEXTS)
def test_parallel_params_match_the_walk(kind):
    model = _model(kind)
    with torch.no_grad():
        coding = model(_latent(), QuantMode.ROUND)
        params = model_probabilities(model, coding.y_hat, coding.z_hat)
    assert torch.allclose(params.mean, coding.params.mean)
    assert torch.allclose(params.scale, coding.params.scale)


def test_truncated_and_padded_payloads_are_rejected():
    model = _model(ContextKind.HYPERPRIOR_ONLY)
    y = _latent()
    hyper, main, _, _, _ = model.compress(y)
    with pytest.raises(DecodeError):
        model.decompress(hyper, main[:-3], y.shape)
    with pytest.raises(DecodeError):
        model.decompress(hyper, main + b"\x00", y.shape)


def test_latent_geometry_checks():
    model = _model(ContextKind.HYPERPRIOR_ONLY)
    with pytest.raises(ConfigurationError):
        model(torch.zeros(1, 8, 16, 16))
    with pytest.raises(ContractViolation):
        model(torch.zeros(1, 16, 6, 16))


def test_slices_must_divide_channels():
    with pytest.raises(ConfigurationError):
        LatentEntropyModel(10, 8, ContextConfig(kind=ContextKind.CHARM, slices=4))


def test_per_element_bits_are_exposed():
    model = _model(ContextKind.CHARM)
    coding = model(_latent(), QuantMode.NOISE)
    assert coding.y_bits.shape == (1, 16, 16, 16)
    assert coding.z_bits.shape == (1, 8, 4, 4)
    assert float(coding.bits) == pytest.approx(float(coding.y_bits.sum() + coding.z_bits.sum()), rel=1e-6)


def test_factorized_prior_tables_and_aux_loss():
    torch.manual_seed(0)
    prior = FactorizedPrior(4)
    tables = prior.pmf_tables()
    assert len(tables) == 4
    for offset, pmf in tables:
        assert offset <= 0
        assert pmf.sum() == pytest.approx(1.0, abs=1e-3)
    assert float(prior.aux_loss()) > 0
    assert float(factorized_prior_bits(prior, torch.zeros(1, 4, 2, 2))) > 0


def test_ctm_commutes_with_spatial_permutation():
    torch.manual_seed(0)
    ctm = ChannelTransformModule(8, heads=2).eval()
    y = torch.randn(1, 8, 4, 4)
    perm = torch.randperm(16)
    permuted = y.flatten(2)[..., perm].view(1, 8, 4, 4)
    out = ctm_forward(ctm, y).flatten(2)[..., perm].view(1, 8, 4, 4)
    assert torch.allclose(ctm(permuted), out, atol=1e-5)


def test_ctm_gradient(gradient_error):
    torch.manual_seed(0)
    ctm = ChannelTransformModule(8, heads=2).double().eval()
    assert gradient_error(ctm, torch.randn(1, 8, 4, 4, dtype=torch.float64)) < 1e-3


def test_channel_correlation_detects_duplicated_channels():
    torch.manual_seed(0)
    independent = torch.randn(1, 4, 32, 32)
    duplicated = independent[:, :1].repeat(1, 4, 1, 1)
    assert channel_correlation(independent) < 0.1
    assert channel_correlation(duplicated) == pytest.approx(1.0, abs=1e-6)


def test_walk_rejects_scales_below_the_floor(monkeypatch):
    model = _model(ContextKind.HYPERPRIOR_ONLY)
    EntropyParams(torch.zeros(4), model.scale_bound(torch.zeros(4))).check()

    def collapsed(net, features):
        mean, _ = net(features).chunk(2, dim=1)
        return mean, torch.full_like(mean, SCALE_FLOOR / 2)

    monkeypatch.setattr(model, "_params", collapsed)
    with pytest.raises(ContractViolation, match="below floor"):
        model(_latent(), QuantMode.NOISE)
    with pytest.raises(ContractViolation):
        model.compress(_latent())


def test_decoder_side_ctm_is_its_own_mapping():
    torch.manual_seed(0)
    encoder_side = ChannelTransformModule(8, heads=2).eval()
    decoder_side = ChannelTransformModule(8, heads=2).eval()
    y = torch.randn(1, 8, 4, 4)
    with torch.no_grad():
        restored = ctm_inverse_side(decoder_side, ctm_forward(encoder_side, y))
        assert restored.shape == y.shape
        assert not torch.allclose(restored, y, atol=1e-3)
        assert torch.equal(ctm_inverse_side(decoder_side, y), decoder_side(y))


@pytest.mark.slow
def test_factorized_prior_learns_a_uniform_source():
    torch.manual_seed(0)
    prior = FactorizedPrior(2)
    optimizer = torch.optim.Adam(prior.parameters(), lr=1e-2)
    g = torch.Generator().manual_seed(0)
    for _ in range(1500):
        z = torch.randint(-2, 3, (16, 2, 8, 8), generator=g).float()
        optimizer.zero_grad()
        loss = prior.bits(z) / z.numel() + prior.aux_loss()
        loss.backward()
        optimizer.step()
    with torch.no_grad():
        z = torch.randint(-2, 3, (16, 2, 8, 8), generator=g).float()
        per_element = float(prior.bits(z)) / z.numel()
    assert per_element == pytest.approx(math.log2(5), rel=0.05)


@pytest.mark.slow
def test_ctm_can_learn_to_decorrelate_channels():
    torch.manual_seed(0)
    ctm = ChannelTransformModule(8, heads=2)
    optimizer = torch.optim.Adam(ctm.parameters(), lr=3e-3)
    g = torch.Generator().manual_seed(0)
    mixing = torch.eye(8) + 0.8 * torch.randn(8, 8, generator=g) / math.sqrt(8)

    def batch():
        sources = torch.randn(8, 8, 8, 8, generator=g)
        return torch.einsum("oc,bchw->bohw", mixing, sources)

    for _ in range(600):
        y = batch()
        optimizer.zero_grad()
        out = ctm(y)
        flat = out.transpose(0, 1).reshape(8, -1)
        flat = flat - flat.mean(dim=1, keepdim=True)
        cov = flat @ flat.t() / flat.shape[1]
        off_diagonal = cov - torch.diag(torch.diagonal(cov))
        loss = off_diagonal.square().sum() + (torch.diagonal(cov) - 1.0).square().sum()
        loss.backward()
        optimizer.step()

    y = batch()
    with torch.no_grad():
        assert channel_correlation(ctm_forward(ctm, y)) < channel_correlation(y)
