"""Simulated bivariate TVP-VAR(2) designs with known connectedness paths.

Four designs (``I`` to ``IV``, plus ``I-t`` with Student-t shocks) drive the
intercepts, lag matrices and contemporaneous loading with sine waves plus
normalised random walks ``sum_{i<=t} e_i / sqrt(t)``, and the two log
volatilities with AR(1) processes.  The innovation covariance is
``Sigma_t = A_t^{-1} H_t A_t^{-T}`` with ``A_t`` unit lower triangular.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import qbll
from .connectedness import MEASURES, measures_batch
from .errors import ConfigError, SimulationError
from .inference import wald_ratio
from .pipeline import estimate_panel
from .spectral import BandPartition, low_high_bands, normalize_rows, band_theta_batch, vma_batch
from .timeseries_io import RunConfig, TimeSeriesPanel

log = logging.getLogger(__name__)

DGP_IDS = ("I", "II", "III", "IV", "I-t")
ERROR_FAMILIES = ("gaussian", "student_t_5")
BURN_IN = 50
MAX_REGENERATIONS = 100
LOGVOL_MEAN = 0.01
LOGVOL_PERSISTENCE = 0.95
LOGVOL_SHOCK_SD = 0.1
T_DOF = 5
PROBABILITY_TIMES = (400, 650, 1000)


@dataclass(frozen=True)
class DgpConfig:
    dgp_id: str
    T: int = 1000
    seed: int = 0
    error_family: str | None = None
    # literal nonzero-mean log-volatility shocks; False centres them at zero
    logvol_shock_mean: bool = True
    # False switches off every random-walk and log-volatility shock
    parameter_noise: bool = True
    burn_in: int = BURN_IN

    def __post_init__(self):
        if self.dgp_id not in DGP_IDS:
            raise ConfigError(f"unknown DGP {self.dgp_id!r}; choose from {', '.join(DGP_IDS)}")
        if self.T < 10:
            raise ConfigError(f"DGP length must be at least 10, got {self.T}")
        forced = "student_t_5" if self.dgp_id in ("III", "I-t") else "gaussian"
        family = self.error_family or forced
        if family not in ERROR_FAMILIES:
            raise ConfigError(f"unknown error family {family!r}")
        if self.dgp_id in ("III", "I-t") and family != "student_t_5":
            raise ConfigError(f"DGP {self.dgp_id} uses Student-t(5) errors")
        object.__setattr__(self, "error_family", family)


@dataclass
class DgpPath:
    panel: TimeSeriesPanel
    intercept: np.ndarray  # (T, 2)
    phi: np.ndarray        # (T, 2, 2, 2): lag g at [:, g-1]
    sigma: np.ndarray      # (T, 2, 2)
    a21: np.ndarray        # (T,)
    log_h: np.ndarray      # (T, 2)
    regenerations: int = 0


@dataclass
class _Design:
    icpt_amp: float
    icpt_freq: float
    icpt_sd: float
    phi_freq: float
    phi_sd: float
    a21_freq: float


_DESIGNS = {
    "I": _Design(0.0025, 0.004, 0.001, 0.002, 0.0001, 0.002),
    "II": _Design(0.25, 0.004, 0.1, 0.004, 0.3, 0.008),
    "IV": _Design(0.25, 0.004, 0.1, 0.006, 0.3, 0.008),
}
_DESIGNS["III"] = _DESIGNS["II"]
_DESIGNS["I-t"] = _DESIGNS["I"]

RW_ICPT, RW_PHI, RW_A21 = 0.15, 0.75, 0.7
A21_SD = 0.3


def normalized_random_walk(shocks: np.ndarray) -> np.ndarray:
    """``sum_{i<=t} e_i / sqrt(t)`` along axis 0, ``t = 1..T``."""
    t = np.arange(1, shocks.shape[0] + 1).reshape(-1, *([1] * (shocks.ndim - 1)))
    return np.cumsum(shocks, axis=0) / np.sqrt(t)


def logvol_shocks(rng: np.random.Generator, size, mean: float = LOGVOL_MEAN) -> np.ndarray:
    """Shocks to the log volatilities, ``N(mean, 0.1^2 / (1 - 0.95))``."""
    sd = LOGVOL_SHOCK_SD / math.sqrt(1 - LOGVOL_PERSISTENCE)
    return rng.normal(mean, sd, size=size)


def parameter_paths(config: DgpConfig, rng: np.random.Generator):
    """Deterministic-plus-random parameter paths for ``t = 1..T``."""
    d = _DESIGNS[config.dgp_id]
    T = config.T
    t = np.arange(1, T + 1, dtype=float)
    noise = 1.0 if config.parameter_noise else 0.0

    icpt = d.icpt_amp * np.sin(d.icpt_freq * np.pi * t)[:, None] + RW_ICPT * normalized_random_walk(
        noise * rng.normal(0, d.icpt_sd, size=(T, 2))
    )

    wave = np.sin(d.phi_freq * np.pi * t)
    if config.dgp_id in ("I", "I-t"):
        amp = np.full((T, 2, 2), 0.05)
        late = t > 500
        amp[late, 0, 0] = amp[late, 1, 1] = 0.45
        det = (amp * wave[:, None, None])[:, None, :, :].repeat(2, axis=1)
    else:
        det = (0.25 * wave)[:, None, None, None] * np.ones((1, 2, 2, 2))
    phi = det + RW_PHI * normalized_random_walk(noise * rng.normal(0, d.phi_sd, size=(T, 2, 2, 2)))

    a_wave = np.sin(d.a21_freq * np.pi * t)
    if config.dgp_id in ("I", "I-t"):
        a_amp = np.where(t > 500, 1.5, 0.03)
    else:
        a_amp = np.full(T, 0.3)
    a21 = a_amp * a_wave + RW_A21 * normalized_random_walk(noise * rng.normal(0, A21_SD, size=T))

    mean = LOGVOL_MEAN if config.logvol_shock_mean else 0.0
    n_steps = T + config.burn_in
    xi = logvol_shocks(rng, (n_steps, 2), mean) if config.parameter_noise else np.full((n_steps, 2), mean)
    log_h = np.empty((n_steps, 2))
    prev = np.full(2, LOGVOL_MEAN)
    for i in range(n_steps):
        prev = LOGVOL_MEAN + LOGVOL_PERSISTENCE * (prev - LOGVOL_MEAN) + xi[i]
        log_h[i] = prev
    return icpt, phi, a21, log_h


def covariance_path(a21: np.ndarray, log_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(A^{-1}, Sigma)`` with ``A = [[1, 0], [a21, 1]]`` and ``H = diag(exp(log_h))``."""
    n = len(a21)
    a_inv = np.zeros((n, 2, 2))
    a_inv[:, 0, 0] = a_inv[:, 1, 1] = 1.0
    a_inv[:, 1, 0] = -a21
    h = np.exp(log_h)
    sigma = a_inv @ (h[:, :, None] * np.swapaxes(a_inv, -1, -2))
    return a_inv, 0.5 * (sigma + np.swapaxes(sigma, -1, -2))


def standardized_shocks(rng: np.random.Generator, n: int, family: str) -> np.ndarray:
    """Unit-covariance innovations; Student-t(5) is rescaled by ``sqrt(3/5)``."""
    z = rng.standard_normal((n, 2))
    if family == "gaussian":
        return z
    chi = rng.chisquare(T_DOF, size=n)
    return z * np.sqrt((T_DOF - 2) / chi)[:, None]


def _simulate_once(config: DgpConfig, rng: np.random.Generator) -> DgpPath:
    T, burn = config.T, config.burn_in
    icpt, phi, a21, log_h_all = parameter_paths(config, rng)

    # burn-in runs on the t=1 parameters
    idx = np.concatenate([np.zeros(burn, dtype=int), np.arange(T)])
    a_inv, _ = covariance_path(a21[idx], log_h_all)
    eta = standardized_shocks(rng, T + burn, config.error_family)
    eps = np.einsum("tij,tj->ti", a_inv, np.exp(0.5 * log_h_all) * eta)

    x = np.zeros((T + burn + 2, 2))
    for i in range(T + burn):
        k = idx[i]
        x[i + 2] = icpt[k] + phi[k, 0] @ x[i + 1] + phi[k, 1] @ x[i] + eps[i]
    values = x[2 + burn :]

    log_h = log_h_all[burn:]
    _, sigma = covariance_path(a21, log_h)
    panel = TimeSeriesPanel(values, tuple(str(t) for t in range(1, T + 1)), ("x1", "x2"))
    return DgpPath(panel=panel, intercept=icpt, phi=phi, sigma=sigma, a21=a21, log_h=log_h)


def simulate_dgp(config: DgpConfig) -> DgpPath:
    """Simulate one path; paths with any locally explosive ``t`` are regenerated.

    Attempt ``k`` draws from the substream ``(config.seed, k)``.
    """
    for attempt in range(MAX_REGENERATIONS):
        rng = np.random.default_rng([config.seed, attempt])
        try:
            path = _simulate_once(config, rng)
        except Exception as exc:  # pragma: no cover - only non-finite blowups land here
            log.debug("attempt %d failed: %s", attempt, exc)
            continue
        if qbll.is_stable(path.phi).all():
            if attempt:
                log.info("DGP %s seed %d: %d explosive path(s) regenerated", config.dgp_id, config.seed, attempt)
            path.regenerations = attempt
            return path
    raise SimulationError(
        f"DGP {config.dgp_id} seed {config.seed}: {MAX_REGENERATIONS} consecutive explosive parameter paths"
    )


@dataclass
class TrueConnectedness:
    """Connectedness implied by the true parameters.

    ``measures[m]`` follows :func:`measures_batch` with a leading time axis and
    the aggregate over all frequencies appended to the band axis; masked
    (locally unstable) times hold ``nan``.
    """

    times: np.ndarray
    band_names: list[str]
    measures: dict[str, np.ndarray]
    mask: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.measures["total"]


def true_connectedness(path: DgpPath, bands: BandPartition, H: int, times=None) -> TrueConnectedness:
    """Feed the true ``(Phi_t, Sigma_t)`` straight through the spectral pipeline."""
    T = path.phi.shape[0]
    times = np.arange(1, T + 1) if times is None else np.asarray(times, dtype=int)
    phi = path.phi[times - 1]
    sigma = path.sigma[times - 1]
    stable = qbll.is_stable(phi)
    masked = 1.0 - stable.mean()
    if masked > 0.2:
        log.warning("%.0f%% of time points have unstable true parameters and are masked", 100 * masked)

    B = len(bands)
    N = sigma.shape[-1]
    out = {
        "total": np.full((len(times), B + 1), np.nan),
        "from": np.full((len(times), B + 1, N), np.nan),
        "to": np.full((len(times), B + 1, N), np.nan),
        "net": np.full((len(times), B + 1, N), np.nan),
        "pairwise": np.full((len(times), B + 1, N, N), np.nan),
    }
    if stable.any():
        theta = normalize_rows(band_theta_batch(vma_batch(phi[stable], H), sigma[stable], bands.masks(H)))
        full = theta.sum(axis=-3, keepdims=True)
        m = measures_batch(np.concatenate([theta, full], axis=-3), full_sum=full.sum(axis=(-3, -2, -1)))
        for name in MEASURES:
            out[name][stable] = m[name]
    return TrueConnectedness(times, bands.names + ["all"], out, ~stable)


def _sim_seed(seed: int, sim: int) -> int:
    return int(np.random.SeedSequence([seed, sim]).generate_state(1, np.uint64)[0])


def _run_one_sim(sim: int, config: DgpConfig, run: RunConfig) -> dict:
    sim_seed = _sim_seed(config.seed, sim)
    path = simulate_dgp(replace(config, seed=sim_seed))
    times = run.focal_times(config.T)
    truth = true_connectedness(path, run.bands, run.horizon, times)
    fit = estimate_panel(path.panel, replace(run, seed=_sim_seed(run.seed, sim), time_grid=times))
    band_totals = [r.band_totals for r in fit.results]
    diffs_stat = np.array([wald_ratio(bt[:, 0] - bt[:, 1]) - 1.0 for bt in band_totals])
    prob = np.array([np.mean(bt[:, 0] > bt[:, 1]) for bt in band_totals])
    lo, hi = fit.quantile_totals()
    return {
        "sim": sim,
        "regenerations": path.regenerations,
        "true_total": truth.total,
        "fitted_median": fit.median_totals(),
        "fitted_q025": lo,
        "fitted_q975": hi,
        "prob_low_gt_high": prob,
        "test_statistic": diffs_stat,
        "n_unstable_draws": fit.n_unstable,
    }


def _nan_list(a: np.ndarray):
    return [None if not np.isfinite(x) else float(x) for x in np.asarray(a, dtype=float).ravel()]


def run_mc_study(n_sims: int, config: DgpConfig, run: RunConfig, workers: int = 1) -> dict:
    """Simulate, fit and compare ``n_sims`` paths of one design.

    The first two bands of ``run.bands`` (lowest frequencies first) are
    compared; probabilities are ``Pr(band0 > band1)``. The true path is the
    median over simulations of each simulation's true connectedness.
    """
    if n_sims < 1:
        raise ConfigError("need at least one simulation")
    if len(run.bands) < 2:
        raise ConfigError("the study compares two bands; partition has one")
    times = run.focal_times(config.T)
    if workers <= 1 or n_sims == 1:
        sims = [_run_one_sim(i, config, run) for i in range(n_sims)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sims = list(pool.map(_run_one_sim, range(n_sims), [config] * n_sims, [run] * n_sims))

    true_total = np.stack([s["true_total"] for s in sims])       # (S, n_t, B+1)
    fitted = np.stack([s["fitted_median"] for s in sims])        # (S, n_t, B+1)
    probs = np.stack([s["prob_low_gt_high"] for s in sims])      # (S, n_t)
    stats_ = np.stack([s["test_statistic"] for s in sims])       # (S, n_t)
    with np.errstate(invalid="ignore"):
        true_median = np.nanmedian(true_total, axis=0) if np.isfinite(true_total).any() else true_total[0]
        true_prob = np.nanmean(np.where(np.isnan(true_total[..., 0]), np.nan,
                                        (true_total[..., 0] > true_total[..., 1]).astype(float)), axis=0)
    fit_q = np.percentile(fitted, [50.0, 2.5, 97.5], axis=0)
    band_names = run.bands.names + ["all"]

    series = {}
    for b, name in enumerate(band_names):
        series[name] = {
            "true": _nan_list(true_median[:, b]),
            "fitted_median": _nan_list(fit_q[0][:, b]),
            "fitted_q025": _nan_list(fit_q[1][:, b]),
            "fitted_q975": _nan_list(fit_q[2][:, b]),
        }
    pair = f"Pr({band_names[0]} > {band_names[1]})"
    table = []
    for u in PROBABILITY_TIMES:
        if u in times:
            i = times.index(u)
            table.append({
                "u": u,
                "true_probability": _nan_list([true_prob[i]])[0],
                "fitted_probability": float(np.mean(probs[:, i])),
                "per_sim": _nan_list(probs[:, i]),
            })

    return {
        "schema": "freqconnect.mc_study/1",
        "dgp": asdict(config),
        "run": run.to_dict(),
        "n_sims": n_sims,
        "times": list(times),
        "band_pair": pair,
        "probability_table": table,
        "series": series,
        "probability_low_gt_high": _nan_list(probs.mean(axis=0)),
        "test_statistic_median": _nan_list(np.nanmedian(stats_, axis=0)),
        "test_statistic_per_sim": [_nan_list(s) for s in stats_],
        "regenerations": [s["regenerations"] for s in sims],
        "unstable_posterior_draws": [s["n_unstable_draws"] for s in sims],
    }
