import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqconnect import RunConfig, TimeSeriesPanel
from freqconnect import qbll
from freqconnect.errors import ConditioningError, ConfigError, DomainError

import oracles


@pytest.fixture(scope="module")
def panel():
    rng = np.random.default_rng(7)
    Phi = np.array([[[0.4, 0.1], [0.05, 0.3]], [[0.1, 0.0], [0.0, 0.1]]])
    Sigma = np.array([[1.0, 0.4], [0.4, 0.8]])
    return TimeSeriesPanel.from_array(oracles.simulate_var(Phi, Sigma, 300, rng, intercept=[0.2, -0.1]))


def test_kernel_weights_sum_to_ess():
    kw = qbll.compute_kernel_weights(200, 60, 8.0)
    assert kw.rho.sum() == pytest.approx(kw.ess, rel=1e-12)
    assert np.argmax(kw.rho) == 59
    assert kw.rho[59 - 5] == pytest.approx(kw.rho[59 + 5])


def test_interior_ess_matches_continuous_limit():
    # (int w)^2 / int w^2 = 2 sqrt(pi) W for a Gaussian kernel far from the edges
    kw = qbll.compute_kernel_weights(1001, 501, 8.0)
    assert kw.ess == pytest.approx(2 * math.sqrt(math.pi) * 8.0, rel=1e-9)


def test_flat_kernel_gives_unit_weights():
    kw = qbll.compute_kernel_weights(50, 10, math.inf)
    np.testing.assert_allclose(kw.rho, 1.0)
    assert kw.ess == pytest.approx(50)


def test_bad_bandwidth():
    with pytest.raises(DomainError):
        qbll.compute_kernel_weights(10, 3, 0.0)


def test_minnesota_layout(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    N, p = 2, 2
    assert prior.phi0.shape == (1 + N * p, N)
    np.testing.assert_array_equal(prior.phi0[1:3], 0.1 * np.eye(2))
    assert not prior.phi0[0].any() and not prior.phi0[3:].any()
    assert prior.alpha0 == N + 2
    s2 = qbll.ar_residual_variances(panel.values, p)
    np.testing.assert_allclose(np.diag(prior.Gamma0), s2)
    # implied prior mean of Sigma is Gamma0 / (alpha0 - N - 1) = diag(s2)
    np.testing.assert_allclose(prior.Gamma0 / (prior.alpha0 - N - 1), np.diag(s2))
    # tightness grows with the lag
    d = np.diag(prior.Xi0)
    np.testing.assert_allclose(d[3:5], 4 * d[1:3])


@pytest.mark.parametrize("W", [math.inf, 8.0, 25.0])
def test_posterior_matches_dummy_observation_oracle(panel, W):
    cfg = RunConfig()
    prior = qbll.build_minnesota_prior(panel, cfg)
    s = 120
    kw = qbll.compute_kernel_weights(panel.T - 2, s - 2, W)
    post = qbll.compute_posterior(panel, s, prior, kw, 2)
    ref = oracles.conjugate_posterior_dummy_obs(panel.values, 2, prior.phi0, prior.Xi0, prior.alpha0,
                                               prior.Gamma0, kw.rho)
    np.testing.assert_allclose(post.phi_tilde, ref["phi_tilde"], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(post.Xi_tilde, ref["Xi_tilde"], rtol=1e-10)
    np.testing.assert_allclose(post.Gamma_tilde, ref["Gamma_tilde"], rtol=1e-8)
    assert post.alpha_tilde == pytest.approx(ref["alpha_tilde"])


def test_flat_weights_reproduce_static_posterior_frozen(panel):
    # frozen output of oracles.conjugate_posterior_dummy_obs on the full sample with unit weights
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    kw = qbll.compute_kernel_weights(panel.T - 2, 100, math.inf)
    post = qbll.compute_posterior(panel, 102, prior, kw, 2)
    phi_ref = np.array([
        [0.281862416637046, -0.233076772583247],
        [0.347669925912443, 0.077362835644657],
        [0.20366999898722, 0.33834357247711],
        [0.117849977074295, 0.068982743592569],
        [-0.070554500386746, 0.112514892056017],
    ])
    gamma_ref = np.array([[267.1085692100064, 107.05408555632924], [107.05408555632924, 211.97864409292094]])
    np.testing.assert_allclose(post.phi_tilde, phi_ref, atol=1e-12)
    np.testing.assert_allclose(post.Gamma_tilde, gamma_ref, rtol=1e-10)
    assert post.alpha_tilde == pytest.approx(4 + 298)


def test_tight_prior_limit(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig(shrinkage=1e-12))
    kw = qbll.compute_kernel_weights(panel.T - 2, 50, 8.0)
    post = qbll.compute_posterior(panel, 52, prior, kw, 2)
    np.testing.assert_allclose(post.phi_tilde, prior.phi0, atol=1e-6)


def test_loose_prior_limit(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig(shrinkage=1e6))
    kw = qbll.compute_kernel_weights(panel.T - 2, 150, 8.0)
    post = qbll.compute_posterior(panel, 152, prior, kw, 2)
    Y, A = oracles.lagged_design(panel.values, 2)
    sw = np.sqrt(kw.rho)[:, None]
    wls, *_ = np.linalg.lstsq(sw * A, sw * Y, rcond=None)
    np.testing.assert_allclose(post.phi_tilde, wls, atol=1e-6)
    np.testing.assert_allclose(post.phi_hat, wls, atol=1e-9)


@given(st.integers(3, 300), st.floats(1.0, 60.0))
def test_posterior_precision_dominates_prior(s, W):
    rng = np.random.default_rng(s)
    values = rng.standard_normal((300, 2))
    prior = qbll.build_minnesota_prior(values, RunConfig())
    post = qbll.compute_posterior(values, s, prior, qbll.compute_kernel_weights(298, s - 2, W), 2)
    assert np.linalg.eigvalsh(post.Xi_tilde - prior.Xi0).min() > -1e-9
    assert np.linalg.eigvalsh(post.Gamma_tilde).min() > 0


def test_single_row_weight_still_proper(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    rho = np.zeros(panel.T - 2)
    rho[10] = 1.0
    kw = qbll.KernelWeights(rho=rho, ess=1.0, bandwidth=0.1, focal=11)
    post = qbll.compute_posterior(panel, 13, prior, kw, 2)
    assert np.all(np.isfinite(post.phi_tilde))
    qbll.draw_arrays(post, 5, np.random.default_rng(0))


def test_lag_mismatch(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    with pytest.raises(ConfigError):
        qbll.compute_posterior(panel, 10, prior, qbll.compute_kernel_weights(297, 7, 8.0), 3)


def test_safe_cholesky_reports_smallest_eigenvalue():
    with pytest.raises(ConditioningError, match="smallest eigenvalue -1"):
        qbll.safe_cholesky(np.diag([1.0, -1.0]), "test matrix")


def test_draw_moments_match_posterior(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    post = qbll.compute_posterior(panel, 150, prior, qbll.compute_kernel_weights(298, 148, math.inf), 2)
    R = 10_000
    c, Phi, Sigma, stable = qbll.draw_arrays(post, R, np.random.default_rng(3))
    assert stable.all()
    B = np.concatenate([c[:, None, :], np.swapaxes(Phi, -1, -2).reshape(R, -1, 2)], axis=1)
    se = B.std(axis=0) / math.sqrt(R)
    assert np.all(np.abs(B.mean(axis=0) - post.phi_tilde) < 3 * se + 1e-12)
    N = 2
    expected_sigma = post.Gamma_tilde / (post.alpha_tilde - N - 1)
    np.testing.assert_allclose(Sigma.mean(axis=0), expected_sigma, rtol=0.02)


def test_coefficient_covariance_is_kronecker(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    post = qbll.compute_posterior(panel, 150, prior, qbll.compute_kernel_weights(298, 148, 8.0), 2)
    R = 20_000
    c, Phi, Sigma, _ = qbll.draw_arrays(post, R, np.random.default_rng(11))
    # Cov(B[0, 0], B[0, 1]) = E[Sigma_01] * (Xi^-1)_00
    xi_inv = np.linalg.inv(post.Xi_tilde)
    expected = (post.Gamma_tilde / (post.alpha_tilde - 3))[0, 1] * xi_inv[0, 0]
    got = np.cov(c[:, 0], c[:, 1])[0, 1]
    assert got == pytest.approx(expected, rel=0.1)


def test_sampling_is_deterministic(panel):
    prior = qbll.build_minnesota_prior(panel, RunConfig())
    post = qbll.compute_posterior(panel, 80, prior, qbll.compute_kernel_weights(298, 78, 8.0), 2)
    a = qbll.sample_posterior(post, 20, seed=5)
    b = qbll.sample_posterior(post, 20, seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.Phi, y.Phi)
        np.testing.assert_array_equal(x.Sigma, y.Sigma)


def test_stability_check():
    assert qbll.is_stable(np.array([[[0.5, 0.0], [0.0, 0.5]]]))
    assert not qbll.is_stable(np.array([[[1.0, 0.0], [0.0, 0.2]]]))
    # AR(2) with a1 + a2 = 1 has a unit root
    assert not qbll.is_stable(np.array([[[0.5]], [[0.5]]]))
    Phi = np.array([[[0.2, 0.3], [0.1, 0.4]], [[0.1, 0.0], [0.2, 0.1]]])
    C = oracles.companion(Phi)
    assert qbll.companion_radius(Phi) == pytest.approx(np.abs(np.linalg.eigvals(C)).max())


def test_unstable_draws_are_redrawn_or_flagged():
    # posterior centred on an explosive root: some draws stay unstable and are flagged
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.standard_normal((80, 2)), axis=0) * 1.0
    x[:, 1] = 1.02 ** np.arange(80) + 0.01 * rng.standard_normal(80)
    prior = qbll.build_minnesota_prior(x, RunConfig(lags=1, shrinkage=1e4))
    post = qbll.compute_posterior(x, 79, prior, qbll.compute_kernel_weights(79, 78, math.inf), 1)
    _, Phi, _, stable = qbll.draw_arrays(post, 50, np.random.default_rng(1), max_redraws=2)
    np.testing.assert_array_equal(stable, qbll.is_stable(Phi))
