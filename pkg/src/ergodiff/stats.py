"""Statistical helpers: batch means, shared-grid histograms, kernel
densities, distribution distances, and PSD repair."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import errors


def batch_means_stderr(series: np.ndarray, n_batches: int = 32):
    """Standard error of the mean of a correlated series via batch means.

    Returns (stderr, reliable); ``reliable`` is False when fewer than 10
    batches are available.
    """
    series = np.asarray(series, dtype=float).ravel()
    n = series.size
    nb = min(n_batches, n)
    if nb < 2:
        return 0.0, False
    size = n // nb
    trimmed = series[: nb * size].reshape(nb, size)
    means = trimmed.mean(axis=1)
    se = float(means.std(ddof=1) / np.sqrt(nb))
    return se, nb >= 10


# ---------------------------------------------------------------------------
# histograms on shared regular grids

@dataclass(frozen=True)
class HistogramSpec:
    """Regular binning: per-dimension (lo, hi, n_bins)."""

    lo: tuple
    hi: tuple
    n_bins: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.n_bins)):
            raise ValueError("lo, hi, n_bins must have equal length")
        for a, b, n in zip(self.lo, self.hi, self.n_bins):
            if not (b > a and n >= 1):
                raise ValueError("need hi > lo and n_bins >= 1 per dimension")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def edges(self):
        return [np.linspace(a, b, n + 1)
                for a, b, n in zip(self.lo, self.hi, self.n_bins)]


def freedman_diaconis_spec(samples: np.ndarray, pad: float = 0.05) -> HistogramSpec:
    """Default binning: width 2*IQR*n^(-1/3) per dimension, padded range."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 1 and samples.shape[1] > 1 and samples.ndim == 2:
        pass
    n, d = samples.shape
    lo, hi, nb = [], [], []
    for c in range(d):
        col = samples[:, c]
        a, b = float(col.min()), float(col.max())
        span = max(b - a, 1e-12)
        a -= pad * span
        b += pad * span
        iqr = float(np.subtract(*np.percentile(col, [75, 25])))
        width = 2.0 * iqr * n ** (-1.0 / 3.0)
        if width <= 0:
            width = span / 10
        nb.append(int(np.clip(np.ceil((b - a) / width), 1, 512)))
        lo.append(a)
        hi.append(b)
    return HistogramSpec(tuple(lo), tuple(hi), tuple(nb))


def histogram(samples: np.ndarray, spec: HistogramSpec,
              weights: np.ndarray | None = None) -> np.ndarray:
    """Normalized bin masses on the given binning grid (out-of-range mass
    dropped, then renormalized so the masses sum to 1)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    counts, _ = np.histogramdd(samples, bins=spec.edges(), weights=weights)
    total = counts.sum()
    if total <= 0:
        raise ValueError("no samples fell inside the histogram range")
    return counts / total


def tv_between_histograms(h1: np.ndarray, h2: np.ndarray,
                          spec1: HistogramSpec, spec2: HistogramSpec) -> float:
    """Total-variation estimate 0.5 * L1 on a shared grid."""
    if spec1 != spec2 or h1.shape != h2.shape:
        raise errors.BinningMismatch("histograms are not on identical grids")
    return float(0.5 * np.abs(h1 - h2).sum())


def tv_noise_band(h: np.ndarray, n_samples: int) -> float:
    """Approximate sampling noise of the 0.5*L1 TV estimate.

    Multinomial model: E|p_hat - p| ~ sqrt(2 p (1-p) / (pi n)) per bin.
    """
    p = np.asarray(h, dtype=float).ravel()
    return float(0.5 * np.sqrt(2.0 * p * (1 - p) / (np.pi * n_samples)).sum())


# ---------------------------------------------------------------------------
# kernel densities (used by the overlap diagnostic)

def silverman_bandwidth(samples: np.ndarray) -> float:
    """Silverman's rule on pooled samples (scalar bandwidth, any dim)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    sigma = float(samples.std(ddof=1, axis=0).mean())
    if sigma <= 0:
        sigma = 1e-3
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def gaussian_kde(samples: np.ndarray, points: np.ndarray, bandwidth: float) -> np.ndarray:
    """Isotropic Gaussian KDE evaluated at ``points``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = samples.shape[1]
    diff = points[:, None, :] - samples[None, :, :]
    q = np.einsum("pnc,pnc->pn", diff, diff) / (2.0 * bandwidth ** 2)
    norm = (2.0 * np.pi) ** (d / 2.0) * bandwidth ** d
    return np.exp(-q).mean(axis=1) / norm


# ---------------------------------------------------------------------------
# distribution distances

def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    return float(sps.ks_2samp(np.asarray(a).ravel(), np.asarray(b).ravel()).statistic)


def ks_against_cdf(a: np.ndarray, cdf) -> float:
    return float(sps.kstest(np.asarray(a).ravel(), cdf).statistic)


def wasserstein1(a: np.ndarray, b: np.ndarray) -> float:
    return float(sps.wasserstein_distance(np.asarray(a).ravel(),
                                          np.asarray(b).ravel()))


def spearman(x, y) -> float:
    rho = sps.spearmanr(x, y).statistic
    return float(rho) if np.isfinite(rho) else 0.0


# ---------------------------------------------------------------------------
# matrix utilities

def psd_repair(A: np.ndarray, warn_fraction: float = 0.05):
    """Symmetrize and clip negative eigenvalues at zero.

    Returns (repaired, sqrt, clipped_mass) where clipped_mass is the total
    negative eigenvalue magnitude removed.  Warns when the clip exceeds
    ``warn_fraction`` of the trace.
    """
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = float(-vals[vals < 0].sum())
    vals_pos = np.clip(vals, 0.0, None)
    repaired = (vecs * vals_pos) @ vecs.T
    repaired = 0.5 * (repaired + repaired.T)
    root = (vecs * np.sqrt(vals_pos)) @ vecs.T
    trace = float(np.trace(repaired))
    if trace > 0 and clipped > warn_fraction * trace:
        warnings.warn(
            f"PSD repair clipped {clipped:.3g} against trace {trace:.3g}",
            errors.PSDRepairWarning)
    return repaired, root, clipped


# ---------------------------------------------------------------------------
# sampling helpers

def quantile_stratified_indices(samples_1d: np.ndarray, n_points: int) -> np.ndarray:
    """Indices of empirical quantile midpoints (sorted order).

    A deterministic, low-variance subsample for measure integrals in one
    dimension; the subsample mean of smooth integrands matches the full
    weighted mean to quadrature accuracy instead of n^(-1/2).
    """
    order = np.argsort(samples_1d, kind="stable")
    n = samples_1d.size
    pos = ((np.arange(n_points) + 0.5) * n / n_points).astype(int)
    return order[np.clip(pos, 0, n - 1)]


def autocorrelation_fft(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Empirical autocovariance C(0..max_lag) of a 1-d series via FFT."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    x = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n - 1)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[: max_lag + 1].real
    return acov / np.arange(n, n - max_lag - 1, -1)
