import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqconnect.errors import ConfigError, ContractError, CoverageError, DegeneracyError
from freqconnect.qbll import PosteriorDraw
from freqconnect.spectral import (
    BandPartition,
    FrequencyBand,
    VmaSpectrum,
    band_adjacency,
    band_theta_batch,
    daily_bands,
    frequency_response,
    frequency_response_direct,
    low_high_bands,
    normalize_rows,
    partition_adjacency,
    partition_adjacency_batch,
    vma_batch,
    vma_coefficients,
)

import oracles

draw_seeds = st.integers(0, 2**32 - 1)


def test_vma_scalar_ar1():
    psi = vma_batch(np.array([[[0.7]]]), 6)
    np.testing.assert_allclose(psi[:, 0, 0], 0.7 ** np.arange(6))


@given(draw_seeds, st.integers(2, 5), st.integers(1, 3))
def test_vma_matches_companion_powers(seed, N, p):
    rng = np.random.default_rng(seed)
    Phi, _ = oracles.random_stable_draw(rng, N, p)
    np.testing.assert_allclose(vma_batch(Phi, 30), oracles.vma_by_companion_powers(Phi, 30), atol=1e-12)


def test_fft_matches_direct_sum(rng):
    Phi, _ = oracles.random_stable_draw(rng, 3)
    psi = vma_batch(Phi, 24)
    ref = oracles.dft_direct(psi)
    np.testing.assert_allclose(frequency_response(psi), ref, atol=1e-12)
    np.testing.assert_allclose(frequency_response_direct(psi), ref, atol=1e-12)


def test_full_band_equals_time_domain_gfevd_frozen():
    # frozen output of oracles.gfevd_time_domain for this VAR(1), H = 10
    Phi = np.array([[[0.5, 0.1], [0.2, 0.3]]])
    Sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
    theta = band_theta_batch(vma_batch(Phi, 10), Sigma, daily_bands().masks(10)).sum(axis=0)
    ref = np.array([[0.9730892118740578, 0.10484770558335516], [0.09898384667970378, 0.9667572795958708]])
    np.testing.assert_allclose(theta, ref, rtol=1e-12)


@given(draw_seeds, st.sampled_from([2, 3, 5]), st.sampled_from([50, 100, 200]))
def test_full_band_equals_time_domain_gfevd(seed, N, H):
    rng = np.random.default_rng(seed)
    Phi, Sigma = oracles.random_stable_draw(rng, N)
    theta = band_theta_batch(vma_batch(Phi, H), Sigma, low_high_bands().masks(H))
    np.testing.assert_allclose(theta.sum(axis=0), oracles.gfevd_time_domain(Phi, Sigma, H), atol=1e-8)


@given(draw_seeds, st.integers(2, 5))
def test_row_normalization_and_nonnegativity(seed, N):
    rng = np.random.default_rng(seed)
    Phi, Sigma = oracles.random_stable_draw(rng, N)
    part = BandPartition.from_periods("1:3,3:10,10:inf")
    theta = partition_adjacency_batch(Phi, Sigma, part, 100)
    assert theta.shape == (3, N, N)
    assert np.all(theta >= 0)
    np.testing.assert_allclose(theta.sum(axis=(0, 2)), 1.0, atol=1e-10)


def test_white_noise_spreads_uniformly_over_grid():
    Phi = np.zeros((1, 2, 2))
    Sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    masks = daily_bands().masks(100)
    theta = normalize_rows(band_theta_batch(vma_batch(Phi, 100), Sigma, masks))
    share = masks.sum(axis=1) / 100
    np.testing.assert_allclose(theta[:, 0, 1] / theta.sum(axis=0)[0, 1], share)


def test_daily_band_grid_split():
    part = daily_bands()
    persistent, transitory = part.index_sets(100)
    np.testing.assert_array_equal(persistent, np.r_[0:21, 80:100])
    np.testing.assert_array_equal(transitory, np.arange(21, 80))


def test_period_syntax():
    part = BandPartition.from_periods("1:5,5:inf")
    tr = part.bands[part.index("transitory")]
    pe = part.bands[part.index("persistent")]
    assert tr.omega_low == pytest.approx(2 * math.pi / 5) and tr.omega_high == pytest.approx(math.pi)
    assert pe.omega_low == 0.0 and pe.omega_high == pytest.approx(2 * math.pi / 5)


def test_low_high_bands():
    lo, hi = low_high_bands().bands
    assert (lo.name, hi.name) == ("low", "high")
    assert lo.omega_high == pytest.approx(math.pi / 5)


@pytest.mark.parametrize(
    "bands",
    [
        (FrequencyBand("a", 0.0, 1.0), FrequencyBand("b", 1.2, math.pi)),
        (FrequencyBand("a", 0.0, 1.5), FrequencyBand("b", 1.2, math.pi)),
        (FrequencyBand("a", 0.0, 1.0), FrequencyBand("b", 1.0, 3.0)),
        (FrequencyBand("a", 0.5, math.pi),),
    ],
)
def test_partition_must_cover(bands):
    with pytest.raises(CoverageError):
        BandPartition(bands)


def test_band_validation():
    with pytest.raises(ConfigError):
        FrequencyBand("x", 1.0, 0.5)
    with pytest.raises(ConfigError):
        FrequencyBand.from_periods("x", 5, 1)
    with pytest.raises(ConfigError):
        BandPartition.from_periods("1-5")


def test_partition_dict_roundtrip():
    part = BandPartition.from_periods("1:5,5:22,22:inf")
    assert BandPartition.from_dict(part.to_dict()) == part


def test_transitory_vs_persistent_vma():
    H = 100
    part = low_high_bands()
    Sigma = np.eye(2)
    # one-period cross response
    psi_t = np.zeros((H, 2, 2))
    psi_t[0] = np.eye(2)
    psi_t[1, 0, 1] = 1.0
    # slowly decaying cross response
    psi_p = np.zeros((H, 2, 2))
    psi_p[0] = np.eye(2)
    psi_p[1:, 0, 1] = 0.9 ** np.arange(1, H)
    masks = part.masks(H)
    th_t = band_theta_batch(psi_t, Sigma, masks)
    th_p = band_theta_batch(psi_p, Sigma, masks)
    low, high = part.index("low"), part.index("high")
    assert th_t[high, 0, 1] > th_t[low, 0, 1]
    assert th_p[low, 0, 1] > th_p[high, 0, 1]


def test_object_api_matches_batch(rng):
    Phi, Sigma = oracles.random_stable_draw(rng, 3)
    part = daily_bands()
    spec = vma_coefficients(PosteriorDraw(Phi, np.zeros(3), Sigma, True), 100)
    assert isinstance(spec, VmaSpectrum) and spec.H == 100
    adj = partition_adjacency(spec, Sigma, part)
    batch = partition_adjacency_batch(Phi, Sigma, part, 100)
    for i, name in enumerate(part.names):
        np.testing.assert_allclose(adj[name].theta, batch[i], atol=1e-14)
        one = band_adjacency(spec, Sigma, part.bands[i], part, focal_time=4, draw=2)
        np.testing.assert_allclose(one.theta, batch[i], atol=1e-14)
        assert one.full_sum == pytest.approx(3.0)


def test_unstable_draw_refused():
    draw = PosteriorDraw(np.array([[[1.1, 0.0], [0.0, 0.2]]]), np.zeros(2), np.eye(2), False)
    with pytest.raises(ContractError):
        vma_coefficients(draw, 50)


def test_bad_covariance():
    spec = VmaSpectrum.from_psi(vma_batch(np.zeros((1, 2, 2)), 10))
    part = daily_bands()
    with pytest.raises(DegeneracyError):
        partition_adjacency(spec, np.array([[1.0, 2.0], [2.0, 1.0]]), part)
    with pytest.raises(DegeneracyError):
        band_theta_batch(spec.psi, np.array([[0.0, 0.0], [0.0, 1.0]]), part.masks(10))
