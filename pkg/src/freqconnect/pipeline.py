"""Estimate band connectedness over a grid of focal times.

Each focal time draws from its own random substream seeded by
``(config.seed, s)``, so results do not depend on how focal times are split
across worker processes.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import qbll
from .connectedness import MEASURES, PosteriorSummary, measures_batch, summarize_posterior
from .errors import DegenerateTestError, NumericalError
from .inference import BandProbability, HeterogeneityTest, band_probability, wald_heterogeneity
from .spectral import band_theta_batch, normalize_rows, vma_batch
from .timeseries_io import RunConfig, TimeSeriesPanel

log = logging.getLogger(__name__)

ALL_BAND = "all"


@dataclass
class FocalResult:
    """Posterior output at one focal time.

    ``summaries[m]`` has a leading axis over the partition's bands followed
    by the aggregate over all frequencies. ``band_totals`` keeps the stable
    draws of total connectedness per band, ``(R_stable, B)``.
    """

    focal_time: int
    summaries: dict[str, PosteriorSummary]
    band_totals: np.ndarray
    n_unstable: int


@dataclass
class EstimationResult:
    panel_labels: tuple[str, ...]
    series_names: tuple[str, ...]
    config: RunConfig
    results: list[FocalResult]

    @property
    def band_names(self) -> list[str]:
        return self.config.bands.names

    @property
    def focal_times(self) -> list[int]:
        return [r.focal_time for r in self.results]

    def median_totals(self) -> np.ndarray:
        """Posterior median total connectedness, ``(n_times, B + 1)``."""
        return np.array([r.summaries["total"].median for r in self.results])

    def quantile_totals(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([r.summaries["total"].quantile_2_5 for r in self.results])
        hi = np.array([r.summaries["total"].quantile_97_5 for r in self.results])
        return lo, hi

    def band_pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(len(self.band_names)), 2))

    def tests(self) -> list[HeterogeneityTest | None]:
        """One test per (focal time, band pair); ``None`` marks a degenerate test."""
        out = []
        names = self.band_names
        for r in self.results:
            for a, b in self.band_pairs():
                pair = (names[a], names[b])
                try:
                    out.append(
                        wald_heterogeneity(
                            r.band_totals[:, a],
                            r.band_totals[:, b],
                            seed=_nse_seed(self.config.seed, r.focal_time),
                            focal_time=r.focal_time,
                            band_pair=pair,
                        )
                    )
                except DegenerateTestError:
                    out.append(None)
        return out

    def probabilities(self) -> list[BandProbability]:
        names = self.band_names
        return [
            band_probability(r.band_totals[:, a], r.band_totals[:, b], r.focal_time, (names[a], names[b]))
            for r in self.results
            for a, b in self.band_pairs()
        ]

    def label(self, focal_time: int) -> str:
        return self.panel_labels[focal_time - 1]

    @property
    def n_unstable(self) -> int:
        return sum(r.n_unstable for r in self.results)


def _nse_seed(seed: int, s: int) -> list[int]:
    return [seed, s, 1]


def estimate_focal(values: np.ndarray, s: int, prior: qbll.PriorSpec, config: RunConfig) -> FocalResult:
    p = config.lags
    T = values.shape[0]
    weights = qbll.compute_kernel_weights(T - p, s - p, config.bandwidth)
    params = qbll.compute_posterior(values, s, prior, weights, p)
    rng = np.random.default_rng([config.seed, s])
    _, Phi, Sigma, stable = qbll.draw_arrays(params, config.n_draws, rng)
    n_unstable = int((~stable).sum())
    if n_unstable == len(stable):
        raise NumericalError(f"every posterior draw at t={s} is unstable")
    Phi, Sigma = Phi[stable], Sigma[stable]

    masks = config.bands.masks(config.horizon)
    theta = normalize_rows(band_theta_batch(vma_batch(Phi, config.horizon), Sigma, masks))
    full = theta.sum(axis=-3, keepdims=True)
    m = measures_batch(np.concatenate([theta, full], axis=-3), full_sum=full.sum(axis=(-3, -2, -1)))
    summaries = {name: summarize_posterior(m[name], axis=0) for name in MEASURES}
    return FocalResult(s, summaries, m["total"][:, :-1].copy(), n_unstable)


def _estimate_chunk(values, times, prior, config):
    return [estimate_focal(values, s, prior, config) for s in times]


def estimate_panel(panel: TimeSeriesPanel, config: RunConfig, workers: int = 1) -> EstimationResult:
    """Posterior connectedness at every focal time of ``config``."""
    times = config.focal_times(panel.T)
    prior = qbll.build_minnesota_prior(panel, config)
    values = panel.values
    if workers <= 1 or len(times) < 2:
        results = _estimate_chunk(values, times, prior, config)
    else:
        chunks = [c for c in np.array_split(np.asarray(times), min(workers * 4, len(times))) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_estimate_chunk, values, tuple(int(t) for t in c), prior, config) for c in chunks]
            results = [r for f in futures for r in f.result()]
    res = EstimationResult(panel.time_labels, panel.series_names, config, results)
    if res.n_unstable:
        log.info("%d unstable posterior draws excluded after redraws", res.n_unstable)
    return res
