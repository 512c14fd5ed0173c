"""Posterior tests for differences between band connectedness measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateTestError, InsufficientDrawsError

CRITICAL_5PCT = 3.84
N_BATCHES = 10
NSE_METHOD = "batch-means: 10 non-overlapping batches after a seeded shuffle; sd(batch statistics)/sqrt(10)"


@dataclass
class HeterogeneityTest:
    statistic: float
    w_hat: float
    q: int
    critical_value_5pct: float
    nse: float
    reject: bool
    focal_time: int | None = None
    band_pair: tuple[str, str] | None = None


@dataclass
class BandProbability:
    prob: float
    prob_reverse: float
    tie_fraction: float
    focal_time: int | None = None
    band_pair: tuple[str, str] | None = None


def wald_ratio(diffs, axis: int = 0) -> np.ndarray:
    """Posterior second moment over posterior variance of the differences.

    Entries with zero variance come back as ``nan``.
    """
    d = np.asarray(diffs, dtype=float)
    second = np.mean(d**2, axis=axis)
    var = np.var(d, axis=axis)
    scale = np.maximum(second, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(var > 1e-13 * scale, second / var, np.nan)


def _statistic(d: np.ndarray) -> float:
    return float(wald_ratio(d)) - 1.0


def batch_statistics(diffs, n_batches: int = N_BATCHES, seed: int | None = 0) -> np.ndarray:
    """Test statistic on each of ``n_batches`` equal, non-overlapping batches.

    Draws are shuffled with ``seed`` first (``None`` keeps the given order);
    leftover draws beyond a multiple of ``n_batches`` are dropped.
    """
    d = np.asarray(diffs, dtype=float).ravel()
    if len(d) < 2 * n_batches:
        raise InsufficientDrawsError(f"need at least {2 * n_batches} draws for {n_batches} batches, got {len(d)}")
    if seed is not None:
        d = np.random.default_rng(seed).permutation(d)
    size = len(d) // n_batches
    batches = d[: size * n_batches].reshape(n_batches, size)
    return wald_ratio(batches, axis=1) - 1.0


def numerical_standard_error(batch_values) -> float:
    """Standard deviation across batch statistics divided by ``sqrt(n_batches)``."""
    b = np.asarray(batch_values, dtype=float).ravel()
    if len(b) < 2:
        raise InsufficientDrawsError("need at least two batch values")
    return float(np.std(b, ddof=1) / np.sqrt(len(b)))


def wald_heterogeneity(draws_a, draws_b, seed: int | None = 0, focal_time=None, band_pair=None) -> HeterogeneityTest:
    """Test equality of two band measures from paired posterior draws.

    The reported statistic is ``W - 1`` with ``W = mean(D^2) / var(D)``,
    ``D_r = a_r - b_r``, compared with the 5% chi-square(1) critical value.
    The numerical standard error is ``nan`` when fewer than 20 draws exist.
    """
    a = np.asarray(draws_a, dtype=float).ravel()
    b = np.asarray(draws_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InsufficientDrawsError("band draws must be paired (equal lengths)")
    if len(a) < 2:
        raise InsufficientDrawsError("need at least 2 posterior draws")
    d = a - b
    w_hat = float(wald_ratio(d))
    if np.isnan(w_hat):
        raise DegenerateTestError("posterior draws of the band difference have zero variance")
    statistic = w_hat - 1.0
    if len(d) >= 2 * N_BATCHES:
        nse = numerical_standard_error(batch_statistics(d, N_BATCHES, seed))
    else:
        nse = float("nan")
    return HeterogeneityTest(
        statistic=statistic,
        w_hat=w_hat,
        q=1,
        critical_value_5pct=CRITICAL_5PCT,
        nse=nse,
        reject=statistic > CRITICAL_5PCT,
        focal_time=focal_time,
        band_pair=band_pair,
    )


def stacked_wald(diffs, level: float = 0.05) -> HeterogeneityTest:
    """Joint test over ``k`` band differences, ``diffs`` shaped ``(R, k)``.

    ``mean(D)' V^{-1} mean(D)`` with ``V`` the posterior covariance of the
    differences, against the chi-square(k) critical value. For ``k = 1`` it
    equals the statistic of :func:`wald_heterogeneity`.
    """
    d = np.asarray(diffs, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    R, k = d.shape
    if R <= k:
        raise InsufficientDrawsError(f"need more than {k} draws for {k} restrictions")
    mean = d.mean(axis=0)
    V = np.cov(d, rowvar=False, ddof=0).reshape(k, k)
    try:
        stat = float(mean @ np.linalg.solve(V, mean))
    except np.linalg.LinAlgError:
        raise DegenerateTestError("posterior covariance of the differences is singular") from None
    crit = float(stats.chi2.ppf(1 - level, k))
    return HeterogeneityTest(
        statistic=stat,
        w_hat=stat + k,
        q=k,
        critical_value_5pct=crit,
        nse=float("nan"),
        reject=stat > crit,
    )


def band_probability(draws_a, draws_b, focal_time=None, band_pair=None) -> BandProbability:
    """Share of paired draws with ``a > b`` (strict), plus the reverse and ties."""
    a = np.asarray(draws_a, dtype=float).ravel()
    b = np.asarray(draws_b, dtype=float).ravel()
    if a.shape != b.shape or len(a) == 0:
        raise InsufficientDrawsError("band draws must be paired and non-empty")
    R = len(a)
    gt = int(np.sum(a > b))
    lt = int(np.sum(a < b))
    return BandProbability(
        prob=gt / R,
        prob_reverse=lt / R,
        tie_fraction=(R - gt - lt) / R,
        focal_time=focal_time,
        band_pair=band_pair,
    )
