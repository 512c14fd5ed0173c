"""Network connectedness measures built from band adjacency matrices."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CoverageError, DegeneracyError, InsufficientDrawsError
from .spectral import BandAdjacency, BandPartition, FrequencyBand

MEASURES = ("total", "from", "to", "net", "pairwise")


@dataclass
class ConnectednessSet:
    total: float
    from_degree: np.ndarray
    to_degree: np.ndarray
    net: np.ndarray
    pairwise: np.ndarray
    band: FrequencyBand | None = None
    focal_time: int | None = None
    draw: int | None = None


@dataclass
class PosteriorSummary:
    median: np.ndarray
    quantile_2_5: np.ndarray
    quantile_97_5: np.ndarray


def _check_full_sum(full_sum: float) -> None:
    if not full_sum > 0:
        raise DegeneracyError(f"full-spectrum adjacency sum must be positive, got {full_sum}")


def _offdiag(theta: np.ndarray) -> np.ndarray:
    n = theta.shape[-1]
    return theta * (1.0 - np.eye(n))


def total_connectedness(adj: BandAdjacency, full_sum: float) -> float:
    _check_full_sum(full_sum)
    return float(100.0 * _offdiag(adj.theta).sum() / full_sum)


def directional_connectedness(adj: BandAdjacency, full_sum: float):
    """Return ``(from_degree, to_degree, net)`` in percent of the full-spectrum sum."""
    _check_full_sum(full_sum)
    off = _offdiag(adj.theta)
    from_degree = 100.0 * off.sum(axis=1) / full_sum
    to_degree = 100.0 * off.sum(axis=0) / full_sum
    return from_degree, to_degree, to_degree - from_degree


def connectedness_set(adj: BandAdjacency, full_sum: float) -> ConnectednessSet:
    from_degree, to_degree, net = directional_connectedness(adj, full_sum)
    # pairwise[j, k] > 0: j transmits more to k than it receives from k
    pairwise = 100.0 * (adj.theta.T - adj.theta) / full_sum
    return ConnectednessSet(
        total=total_connectedness(adj, full_sum),
        from_degree=from_degree,
        to_degree=to_degree,
        net=net,
        pairwise=pairwise,
        band=adj.band,
        focal_time=adj.focal_time,
        draw=adj.draw,
    )


def reconstruct_time_domain(per_band: Sequence[ConnectednessSet], partition: BandPartition) -> ConnectednessSet:
    """Sum band measures into the aggregate (all-frequency) measures."""
    names = [s.band.name if s.band is not None else None for s in per_band]
    if sorted(n for n in names if n is not None) != sorted(partition.names) or len(names) != len(partition):
        raise CoverageError(f"band sets {names} do not cover partition {partition.names}")
    keys = {(s.focal_time, s.draw) for s in per_band}
    if len(keys) != 1:
        raise CoverageError("band measures come from different focal times or draws")
    return ConnectednessSet(
        total=float(sum(s.total for s in per_band)),
        from_degree=sum(s.from_degree for s in per_band),
        to_degree=sum(s.to_degree for s in per_band),
        net=sum(s.net for s in per_band),
        pairwise=sum(s.pairwise for s in per_band),
        band=None,
        focal_time=per_band[0].focal_time,
        draw=per_band[0].draw,
    )


def measures_batch(theta: np.ndarray, full_sum=None) -> dict[str, np.ndarray]:
    """All measures for row-normalized adjacency stacks ``(..., B, N, N)``.

    ``full_sum`` is the element sum of the full-spectrum matrix; by default
    the band axis is taken to be a partition and summed. Returns arrays shaped
    ``(..., B)`` for ``total``, ``(..., B, N)`` for the directional measures
    and ``(..., B, N, N)`` for ``pairwise``.
    """
    if full_sum is None:
        full_sum = theta.sum(axis=(-3, -2, -1))
    full_sum = np.asarray(full_sum, dtype=float)
    if np.any(full_sum <= 0):
        raise DegeneracyError("full-spectrum adjacency sum must be positive")
    scale = 100.0 / full_sum[..., None, None, None]
    off = _offdiag(theta) * scale
    from_degree = off.sum(axis=-1)
    to_degree = off.sum(axis=-2)
    return {
        "total": off.sum(axis=(-2, -1)),
        "from": from_degree,
        "to": to_degree,
        "net": to_degree - from_degree,
        "pairwise": (np.swapaxes(theta, -1, -2) - theta) * scale,
    }


def summarize_posterior(draws, axis: int = 0) -> PosteriorSummary:
    """Median and 2.5/97.5 percentiles along ``axis`` (linear interpolation)."""
    draws = np.asarray(draws, dtype=float)
    if draws.shape[axis] == 0:
        raise CoverageError("cannot summarize an empty group of draws")
    if draws.shape[axis] < 2:
        raise InsufficientDrawsError("need at least 2 draws per group")
    q = np.percentile(draws, [50.0, 2.5, 97.5], axis=axis)
    return PosteriorSummary(median=q[0], quantile_2_5=q[1], quantile_97_5=q[2])


LONG_COLUMNS = ("time_label", "band", "measure", "node", "median", "q025", "q975")


def long_rows(
    time_label: str,
    band_names: Sequence[str],
    series_names: Sequence[str],
    summaries: dict[str, PosteriorSummary],
) -> Iterable[tuple]:
    """Flatten per-band summaries into long-format rows.

    ``summaries[measure]`` holds arrays with a leading band axis; ``node`` is
    empty for ``total``, the series name for degrees and ``"j->k"`` for
    pairwise links.
    """
    for b, band in enumerate(band_names):
        for measure in MEASURES:
            if measure not in summaries:
                continue
            s = summaries[measure]
            med, lo, hi = s.median[b], s.quantile_2_5[b], s.quantile_97_5[b]
            if measure == "total":
                yield (time_label, band, measure, "", med, lo, hi)
            elif measure == "pairwise":
                for j, a in enumerate(series_names):
                    for k, c in enumerate(series_names):
                        if j != k:
                            yield (time_label, band, measure, f"{a}->{c}", med[j, k], lo[j, k], hi[j, k])
            else:
                for j, a in enumerate(series_names):
                    yield (time_label, band, measure, a, med[j], lo[j], hi[j])


def write_long_csv(path, rows: Iterable[tuple], header_comment: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x
