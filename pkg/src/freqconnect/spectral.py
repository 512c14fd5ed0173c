"""Frequency-band variance decompositions of a VAR draw.

The forecast error variance share of variable ``j`` due to shocks in ``k`` is
split over the discrete Fourier grid ``omega_j = 2*pi*j/H`` of the truncated
VMA coefficients.  Summing the share over a set of grid frequencies gives the
band-specific adjacency matrix; summing over the whole grid reproduces the
H-step generalized FEVD exactly (discrete Parseval).

Array conventions used by the batched helpers: coefficient stacks are
``(..., p, N, N)``, VMA stacks ``(..., H, N, N)``, covariances ``(..., N, N)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, CoverageError, DegeneracyError

_EPS = 1e-12


@dataclass(frozen=True)
class FrequencyBand:
    """Angular frequency interval ``(omega_low, omega_high]`` inside ``[0, pi]``."""

    name: str
    omega_low: float
    omega_high: float

    def __post_init__(self):
        if not (0.0 <= self.omega_low < self.omega_high <= math.pi + _EPS):
            raise ConfigError(
                f"band {self.name!r}: need 0 <= omega_low < omega_high <= pi, "
                f"got ({self.omega_low}, {self.omega_high}]"
            )

    @classmethod
    def from_periods(cls, name: str, period_low: float, period_high: float) -> "FrequencyBand":
        """Band holding cycles with period (in observations) in ``[period_low, period_high]``.

        Periods map to ``(2*pi/period_high, 2*pi/period_low]`` clipped to ``(0, pi]``.
        """
        if not (0 < period_low < period_high):
            raise ConfigError(f"band {name!r}: need 0 < period_low < period_high")
        low = 0.0 if math.isinf(period_high) else 2 * math.pi / period_high
        high = min(2 * math.pi / period_low, math.pi)
        return cls(name, low, high)

    def fourier_indices(self, H: int, include_zero: bool = False) -> np.ndarray:
        """Grid indices ``j`` in ``0..H-1`` whose folded frequency lies in the band."""
        j = np.arange(H)
        # compare in cycles per observation to keep the 2*pi factor out of the rounding
        folded = np.minimum(j, H - j) / H
        lo = self.omega_low / (2 * math.pi)
        hi = self.omega_high / (2 * math.pi)
        inside = (folded > lo + _EPS) & (folded <= hi + _EPS)
        if include_zero:
            inside |= j == 0
        return j[inside]


@dataclass(frozen=True)
class BandPartition:
    """Disjoint bands covering ``(0, pi]``; the zero frequency goes to the lowest band."""

    bands: tuple[FrequencyBand, ...]

    def __post_init__(self):
        bands = tuple(sorted(self.bands, key=lambda b: b.omega_low))
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise CoverageError("empty band partition")
        names = [b.name for b in bands]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate band names: {names}")
        if bands[0].omega_low > _EPS:
            raise CoverageError(f"partition does not start at 0 (first band {bands[0].name!r})")
        for left, right in zip(bands, bands[1:]):
            if abs(left.omega_high - right.omega_low) > 1e-9:
                raise CoverageError(
                    f"bands {left.name!r} and {right.name!r} overlap or leave a gap"
                )
        if abs(bands[-1].omega_high - math.pi) > 1e-9:
            raise CoverageError("partition does not reach pi")

    def __iter__(self):
        return iter(self.bands)

    def __len__(self):
        return len(self.bands)

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.bands]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown band {name!r}; have {self.names}") from None

    def index_sets(self, H: int) -> list[np.ndarray]:
        sets = [b.fourier_indices(H, include_zero=(i == 0)) for i, b in enumerate(self.bands)]
        covered = np.concatenate(sets)
        if len(covered) != H or len(np.unique(covered)) != H:
            raise CoverageError(f"bands do not partition the {H}-point Fourier grid")
        return sets

    def masks(self, H: int) -> np.ndarray:
        """Boolean ``(n_bands, H)`` membership matrix."""
        out = np.zeros((len(self.bands), H), dtype=bool)
        for i, idx in enumerate(self.index_sets(H)):
            out[i, idx] = True
        return out

    @classmethod
    def from_periods(cls, spec: str, names: Sequence[str] | None = None) -> "BandPartition":
        """Parse period syntax such as ``"1:5,5:inf"``.

        Bands are named ``names`` if given; otherwise two-band partitions get
        ``transitory``/``persistent`` and longer ones ``band0, band1, ...`` in
        the order written.
        """
        parts = [p.strip() for p in spec.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"empty band specification {spec!r}")
        if names is None:
            names = ["transitory", "persistent"] if len(parts) == 2 else [f"band{i}" for i in range(len(parts))]
        if len(names) != len(parts):
            raise ConfigError("number of band names does not match the band specification")
        bands = []
        for name, part in zip(names, parts):
            try:
                lo, hi = (float(x) for x in part.split(":"))
            except ValueError:
                raise ConfigError(f"cannot parse band {part!r}; expected 'low:high' periods") from None
            bands.append(FrequencyBand.from_periods(name, lo, hi))
        return cls(tuple(bands))

    def to_dict(self) -> list[dict]:
        return [
            {"name": b.name, "omega_low": b.omega_low, "omega_high": b.omega_high}
            for b in self.bands
        ]

    @classmethod
    def from_dict(cls, items: Sequence[dict]) -> "BandPartition":
        return cls(tuple(FrequencyBand(d["name"], float(d["omega_low"]), float(d["omega_high"])) for d in items))


def daily_bands() -> BandPartition:
    """Transitory = cycles of 1-5 observations, persistent = longer than 5."""
    return BandPartition.from_periods("1:5,5:inf", names=["transitory", "persistent"])


def low_high_bands() -> BandPartition:
    """``low`` on ``(0, pi/5]`` and ``high`` on ``(pi/5, pi]``."""
    return BandPartition(
        (FrequencyBand("low", 0.0, math.pi / 5), FrequencyBand("high", math.pi / 5, math.pi))
    )


@dataclass
class VmaSpectrum:
    psi: np.ndarray
    freq_response: np.ndarray

    @property
    def H(self) -> int:
        return self.psi.shape[0]

    @classmethod
    def from_psi(cls, psi) -> "VmaSpectrum":
        psi = np.asarray(psi, dtype=float)
        return cls(psi, frequency_response(psi))


@dataclass
class BandAdjacency:
    theta: np.ndarray
    band: FrequencyBand
    focal_time: int | None = None
    draw: int | None = None
    full_sum: float = field(default=float("nan"))


def vma_batch(coefs: np.ndarray, H: int) -> np.ndarray:
    """Truncated VMA coefficients ``Psi(0..H-1)`` for stacked lag matrices.

    ``Psi(h) = sum_{g=1}^{min(h,p)} Phi_g Psi(h-g)`` with ``Psi(0) = I``.
    """
    coefs = np.asarray(coefs, dtype=float)
    *lead, p, N, _ = coefs.shape
    psi = np.zeros((*lead, H, N, N))
    psi[..., 0, :, :] = np.eye(N)
    for h in range(1, H):
        acc = psi[..., h, :, :]
        for g in range(1, min(h, p) + 1):
            acc += coefs[..., g - 1, :, :] @ psi[..., h - g, :, :]
    return psi


def frequency_response(psi: np.ndarray) -> np.ndarray:
    """``sum_h psi[h] exp(-i 2 pi j h / H)`` for every grid index ``j`` (axis -3)."""
    return np.fft.fft(np.asarray(psi), axis=-3)


def frequency_response_direct(psi: np.ndarray) -> np.ndarray:
    """Same as :func:`frequency_response` by explicit summation; O(H^2)."""
    psi = np.asarray(psi)
    H = psi.shape[-3]
    h = np.arange(H)
    kernel = np.exp(-2j * np.pi * np.outer(h, h) / H)
    return np.einsum("jh,...hab->...jab", kernel, psi)


def band_theta_batch(psi: np.ndarray, sigma: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Unnormalized band decompositions ``theta(d)`` for stacked draws.

    Parameters
    ----------
    psi : (..., H, N, N) VMA coefficients
    sigma : (..., N, N) innovation covariances
    masks : (B, H) boolean band membership over the Fourier grid

    Returns
    -------
    (..., B, N, N) array; summing over B gives the H-step generalized FEVD.
    """
    resp = frequency_response(psi)
    return band_theta_from_response(resp, sigma, masks)


def band_theta_from_response(resp: np.ndarray, sigma: np.ndarray, masks: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    diag = np.diagonal(sigma, axis1=-2, axis2=-1)
    if np.any(diag <= 0):
        raise DegeneracyError("covariance has a non-positive diagonal entry")
    # |[Psi(w) Sigma]_{jk}|^2 per frequency, then band sums
    weighted = resp @ sigma[..., None, :, :]
    power = weighted.real**2 + weighted.imag**2
    num = np.einsum("bh,...hjk->...bjk", masks.astype(float), power)
    num = num / diag[..., None, None, :]
    # [Psi Sigma Psi^*]_{jj} summed over the full grid
    denom = np.einsum("...hjk,...hjk->...j", weighted, resp.conj()).real
    if np.any(denom <= 0):
        raise DegeneracyError("forecast error variance is zero for some variable")
    return num / denom[..., None, :, None]


def normalize_rows(theta_bands: np.ndarray) -> np.ndarray:
    """Divide every band matrix by the row sums of the full-spectrum matrix."""
    full = theta_bands.sum(axis=-3)
    rows = full.sum(axis=-1)
    if np.any(rows <= 0):
        raise DegeneracyError("zero row sum in the variance decomposition")
    return theta_bands / rows[..., None, :, None]


def partition_adjacency_batch(coefs, sigma, partition: BandPartition, H: int) -> np.ndarray:
    """Row-normalized ``(..., B, N, N)`` adjacency matrices straight from VAR draws."""
    psi = vma_batch(coefs, H)
    return normalize_rows(band_theta_batch(psi, sigma, partition.masks(H)))


def vma_coefficients(draw, H: int) -> VmaSpectrum:
    """VMA coefficients and their frequency response for one posterior draw.

    Intercepts never enter; the draw must be stable.
    """
    if H < 2:
        raise ConfigError("truncation H must be at least 2")
    if not draw.stable:
        raise ContractError("VMA coefficients requested for an unstable draw")
    return VmaSpectrum.from_psi(vma_batch(np.asarray(draw.Phi), H))


def band_adjacency(
    spectrum: VmaSpectrum,
    Sigma,
    band: FrequencyBand,
    partition: BandPartition,
    focal_time: int | None = None,
    draw: int | None = None,
) -> BandAdjacency:
    """Row-normalized adjacency matrix of one band.

    The row normalization uses the full-spectrum decomposition, so summing
    the result over all bands of ``partition`` gives a row-stochastic matrix.
    """
    b = partition.index(band.name)
    if partition.bands[b] != band:
        raise ConfigError(f"band {band.name!r} differs from the partition's definition")
    sigma = np.asarray(Sigma, dtype=float)
    _check_covariance(sigma)
    raw = band_theta_from_response(spectrum.freq_response, sigma, partition.masks(spectrum.H))
    theta = normalize_rows(raw)
    return BandAdjacency(theta[b], band, focal_time, draw, full_sum=float(theta.sum()))


def partition_adjacency(spectrum: VmaSpectrum, Sigma, partition: BandPartition) -> dict[str, BandAdjacency]:
    sigma = np.asarray(Sigma, dtype=float)
    _check_covariance(sigma)
    raw = band_theta_from_response(spectrum.freq_response, sigma, partition.masks(spectrum.H))
    theta = normalize_rows(raw)
    total = float(theta.sum())
    return {
        band.name: BandAdjacency(theta[i], band, full_sum=total)
        for i, band in enumerate(partition.bands)
    }


def _check_covariance(sigma: np.ndarray) -> None:
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ConfigError("Sigma must be a square matrix")
    if not np.allclose(sigma, sigma.T, atol=1e-10 * max(1.0, np.abs(sigma).max())):
        raise DegeneracyError("Sigma is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise DegeneracyError("Sigma is not positive definite") from None
