"""Kernel-weighted (quasi-Bayesian local likelihood) posterior of a TVP-VAR.

At a focal observation ``s`` every regression row ``t`` is weighted by a
normalised Gaussian kernel in ``|s - t| / W``. Combined with a conjugate
Normal-Wishart prior this gives a closed-form Normal-Wishart quasi-posterior
for the local coefficients and innovation covariance, so each focal time is
estimated independently.

Coefficients are kept in regression layout: a ``(K, N)`` matrix ``B`` with
``K = 1 + N*p`` whose first row is the intercept and whose rows
``1 + (l-1)*N : 1 + l*N`` hold ``Phi_l`` transposed, so that
``x_t = B' [1, x_{t-1}, ..., x_{t-p}]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConditioningError, ConfigError, DegeneracyError, DomainError, InsufficientDataError

log = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-8
MAX_REDRAWS = 50
INTERCEPT_SCALE = 100.0


@dataclass
class KernelWeights:
    rho: np.ndarray
    ess: float
    bandwidth: float
    focal: int


@dataclass
class PriorSpec:
    phi0: np.ndarray    # (K, N) prior mean of B
    Xi0: np.ndarray     # (K, K) prior precision scale
    alpha0: float
    Gamma0: np.ndarray  # (N, N)
    lags: int

    @property
    def phi0_vector(self) -> np.ndarray:
        return self.phi0.reshape(-1, order="F")


@dataclass
class PosteriorParams:
    phi_tilde: np.ndarray
    Xi_tilde: np.ndarray
    alpha_tilde: float
    Gamma_tilde: np.ndarray
    focal_time: int
    lags: int
    phi_hat: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.Gamma_tilde.shape[0]


@dataclass
class PosteriorDraw:
    Phi: np.ndarray        # (p, N, N)
    intercept: np.ndarray  # (N,)
    Sigma: np.ndarray      # (N, N)
    stable: bool


def gaussian_kernel(distance, bandwidth: float):
    """Unnormalised Normal kernel ``exp(-(d/W)^2/2)/sqrt(2*pi)``."""
    if not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    z = np.asarray(distance, dtype=float) / bandwidth
    return np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)


def compute_kernel_weights(T: int, s: int, W: float) -> KernelWeights:
    """Weights ``rho_t`` of observations ``t = 1..T`` around focal ``s`` (1-based).

    ``rho`` is scaled to sum to the kernel's effective sample size
    ``(sum w)^2 / sum w^2``; ``W = inf`` gives unit weights.
    """
    if not W > 0:
        raise DomainError(f"bandwidth must be positive, got {W}")
    if not 1 <= s <= T:
        raise ConfigError(f"focal index {s} outside 1..{T}")
    w = gaussian_kernel(s - np.arange(1, T + 1), W)
    total = w.sum()
    ess = total**2 / np.sum(w**2)
    return KernelWeights(rho=ess * w / total, ess=float(ess), bandwidth=float(W), focal=s)


def design_matrices(values: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Y, A)`` for the rows ``t = p+1..T`` of a VAR(p) with intercept."""
    values = np.asarray(values, dtype=float)
    T, N = values.shape
    if T <= p:
        raise InsufficientDataError(f"need more than {p} observations for {p} lags, got {T}")
    n = T - p
    A = np.empty((n, 1 + N * p))
    A[:, 0] = 1.0
    for l in range(1, p + 1):
        A[:, 1 + (l - 1) * N : 1 + l * N] = values[p - l : T - l]
    return values[p:], A


def ar_residual_variances(values: np.ndarray, p: int) -> np.ndarray:
    """OLS residual variance of a univariate AR(p) with intercept, per column."""
    values = np.asarray(values, dtype=float)
    T, N = values.shape
    if T <= p:
        raise InsufficientDataError(f"need more than {p} observations for {p} lags, got {T}")
    out = np.empty(N)
    for j in range(N):
        y, X = design_matrices(values[:, [j]], p)
        coef, *_ = np.linalg.lstsq(X, y[:, 0], rcond=None)
        resid = y[:, 0] - X @ coef
        dof = max(len(y) - X.shape[1], 1)
        out[j] = resid @ resid / dof
    if np.any(out <= 0):
        raise DegeneracyError("a series has zero AR residual variance; cannot scale the prior")
    return out


def build_minnesota_prior(panel, config) -> PriorSpec:
    """Conjugate Minnesota Normal-Wishart prior.

    Own first lags are centred on ``config.first_lag_prior_mean``, everything
    else on zero. With ``sigma_j^2`` the AR(p) residual variance of series
    ``j`` and ``phi`` the shrinkage, the coefficient on lag ``l`` of series
    ``j`` in equation ``i`` has prior variance
    ``phi * sigma_i^2 / (l^2 sigma_j^2)``; intercepts get
    ``phi * INTERCEPT_SCALE^2 * sigma_i^2``. The Wishart part has
    ``alpha0 = N + 2`` and ``Gamma0 = diag(sigma^2)`` so the implied prior
    mean of the covariance is ``diag(sigma^2)``.
    """
    values = panel.values if hasattr(panel, "values") else np.asarray(panel, dtype=float)
    p = config.lags
    T, N = values.shape
    if T <= p:
        raise InsufficientDataError(f"need more than {p} observations for {p} lags, got {T}")
    sig2 = ar_residual_variances(values, p)
    phi = config.shrinkage
    K = 1 + N * p

    phi0 = np.zeros((K, N))
    phi0[1 : 1 + N, :] = np.eye(N) * config.first_lag_prior_mean

    prec = np.empty(K)
    prec[0] = 1.0 / (phi * INTERCEPT_SCALE**2)
    for l in range(1, p + 1):
        prec[1 + (l - 1) * N : 1 + l * N] = l**2 * sig2 / phi
    return PriorSpec(phi0=phi0, Xi0=np.diag(prec), alpha0=float(N + 2), Gamma0=np.diag(sig2), lags=p)


def safe_cholesky(M: np.ndarray, what: str) -> np.ndarray:
    """Cholesky factor; retries once with a small diagonal jitter."""
    M = 0.5 * (M + M.T)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * max(float(np.mean(np.diag(M))), np.finfo(float).tiny)
    try:
        return np.linalg.cholesky(M + jitter * np.eye(len(M)))
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(M).min())
        raise ConditioningError(f"{what} is not positive definite (smallest eigenvalue {smallest:.3e})") from None


def chol_inverse(M: np.ndarray, what: str) -> np.ndarray:
    L = safe_cholesky(M, what)
    Linv = np.linalg.solve(L, np.eye(len(L)))
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def compute_posterior(panel, s: int, prior: PriorSpec, weights: KernelWeights, p: int) -> PosteriorParams:
    """Normal-Wishart quasi-posterior at focal observation ``s`` (1-based).

    ``weights`` are over the ``T - p`` regression rows (observations
    ``p+1..T``), as returned by ``compute_kernel_weights(T - p, s - p, W)``.
    """
    values = panel.values if hasattr(panel, "values") else np.asarray(panel, dtype=float)
    if p != prior.lags:
        raise ConfigError(f"prior built for {prior.lags} lags, posterior asked for {p}")
    if not p < s <= values.shape[0]:
        raise InsufficientDataError(f"focal time {s} needs {p} earlier observations")
    Y, A = design_matrices(values, p)
    rho = np.asarray(weights.rho, dtype=float)
    if rho.shape != (len(Y),):
        raise ConfigError(f"{len(rho)} weights for {len(Y)} regression rows")
    Ar = A * rho[:, None]
    AtDA = A.T @ Ar
    AtDY = Ar.T @ Y
    YtDY = (Y * rho[:, None]).T @ Y

    Xi_tilde = prior.Xi0 + AtDA
    Xi_tilde = 0.5 * (Xi_tilde + Xi_tilde.T)
    L = safe_cholesky(Xi_tilde, "posterior precision Xi_tilde")
    rhs = prior.Xi0 @ prior.phi0 + AtDY
    phi_tilde = np.linalg.solve(L.T, np.linalg.solve(L, rhs))

    Gamma_tilde = (
        prior.Gamma0
        + YtDY
        + prior.phi0.T @ prior.Xi0 @ prior.phi0
        - phi_tilde.T @ Xi_tilde @ phi_tilde
    )
    Gamma_tilde = 0.5 * (Gamma_tilde + Gamma_tilde.T)

    try:
        phi_hat = np.linalg.solve(AtDA, AtDY)
    except np.linalg.LinAlgError:
        phi_hat = None
    return PosteriorParams(
        phi_tilde=phi_tilde,
        Xi_tilde=Xi_tilde,
        alpha_tilde=float(prior.alpha0 + rho.sum()),
        Gamma_tilde=Gamma_tilde,
        focal_time=s,
        lags=p,
        phi_hat=phi_hat,
    )


def split_coefficients(B: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """``(..., K, N)`` regression coefficients to ``(intercepts, Phi)`` with Phi ``(..., p, N, N)``."""
    N = B.shape[-1]
    intercept = B[..., 0, :]
    lags = B[..., 1:, :].reshape(*B.shape[:-2], p, N, N)
    return intercept, np.swapaxes(lags, -1, -2)


def companion_radius(Phi: np.ndarray) -> np.ndarray:
    """Spectral radius of the companion matrix for ``(..., p, N, N)`` lag stacks."""
    Phi = np.asarray(Phi, dtype=float)
    *lead, p, N, _ = Phi.shape
    C = np.zeros((*lead, N * p, N * p))
    C[..., :N, :] = np.concatenate([Phi[..., g, :, :] for g in range(p)], axis=-1)
    if p > 1:
        C[..., N:, : N * (p - 1)] = np.eye(N * (p - 1))
    return np.abs(np.linalg.eigvals(C)).max(axis=-1)


def is_stable(Phi: np.ndarray) -> np.ndarray:
    return companion_radius(Phi) < 1.0 - STABILITY_MARGIN


def check_stability(draw: PosteriorDraw) -> bool:
    return bool(is_stable(draw.Phi))


def draw_arrays(params: PosteriorParams, R: int, rng: np.random.Generator, max_redraws: int = MAX_REDRAWS):
    """Vectorised posterior sampling.

    Returns ``(intercepts (R,N), Phi (R,p,N,N), Sigma (R,N,N), stable (R,))``.
    Unstable draws are replaced by fresh ones up to ``max_redraws`` rounds;
    whatever is still unstable afterwards is returned flagged.
    """
    if R < 1:
        raise ConfigError("need at least one posterior draw")
    N, p = params.N, params.lags
    K = params.phi_tilde.shape[0]
    L_xi = safe_cholesky(chol_inverse(params.Xi_tilde, "posterior precision Xi_tilde"), "Xi_tilde inverse")
    gamma_inv = chol_inverse(params.Gamma_tilde, "posterior scale Gamma_tilde")
    wishart = stats.wishart(df=params.alpha_tilde, scale=gamma_inv)

    def sample(m):
        prec = np.asarray(wishart.rvs(size=m, random_state=rng)).reshape(m, N, N)
        sigma = np.linalg.inv(prec)
        sigma = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
        try:
            L_sigma = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ConditioningError("sampled covariance is not positive definite") from None
        Z = rng.standard_normal((m, K, N))
        B = params.phi_tilde + L_xi @ Z @ np.swapaxes(L_sigma, -1, -2)
        c, Phi = split_coefficients(B, p)
        return c, Phi, sigma

    c, Phi, sigma = sample(R)
    stable = is_stable(Phi)
    for _ in range(max_redraws):
        bad = np.flatnonzero(~stable)
        if bad.size == 0:
            break
        c2, Phi2, sigma2 = sample(bad.size)
        c[bad], Phi[bad], sigma[bad] = c2, Phi2, sigma2
        stable[bad] = is_stable(Phi2)
    return c, Phi, sigma, stable


def sample_posterior(params: PosteriorParams, R: int, seed: int) -> list[PosteriorDraw]:
    """``R`` draws of (Phi, Sigma); identical ``seed`` gives identical draws."""
    rng = np.random.default_rng(seed)
    c, Phi, sigma, stable = draw_arrays(params, R, rng)
    return [PosteriorDraw(Phi[r], c[r], sigma[r], bool(stable[r])) for r in range(R)]
