"""Delay-domain statistics: PDP/APDP, RMS delay spread, Rice K-factor,
large-scale gain extraction, path-loss fitting and PDP-based stationarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .fitting import FitResult

VALIDITY_MARGIN_DB = 6.0


class InfiniteKFactorError(ValueError):
    """Raised when only one valid path exists, so the K-factor is unbounded."""


@dataclass
class Pdp:
    """Power per delay bin at one time instant (or averaged over a window)."""

    power: np.ndarray
    delays: np.ndarray
    time: float = 0.0
    empty: bool = False

    def __post_init__(self) -> None:
        self.power = np.asarray(self.power, dtype=float)
        self.delays = np.asarray(self.delays, dtype=float)
        if self.power.shape != self.delays.shape:
            raise ValueError("power and delay grid must have the same shape")
        if np.any(self.power < 0):
            raise ValueError("PDP powers must be non-negative")


def delay_grid(n_bins: int, bandwidth: float) -> np.ndarray:
    return np.arange(n_bins) / bandwidth


def instantaneous_pdp(taps, delays=None, time: float = 0.0, bandwidth: float | None = None) -> Pdp:
    """Squared magnitude of the complex taps along the last axis.

    Leading axes (antenna elements) are averaged. The delay grid is taken from
    ``delays`` or built from ``bandwidth`` at a ``1/B`` spacing.
    """
    taps = np.asarray(taps)
    if not np.all(np.isfinite(taps)):
        raise ValueError("taps must be finite")
    power = np.abs(taps) ** 2
    if power.ndim > 1:
        power = power.reshape(-1, power.shape[-1]).mean(axis=0)
    if delays is None:
        delays = delay_grid(power.shape[-1], bandwidth) if bandwidth else np.arange(power.shape[-1], dtype=float)
    return Pdp(power, delays, time)


def apdp(pdps, noise_floor_db: float = -np.inf, margin_db: float = VALIDITY_MARGIN_DB) -> Pdp:
    """Bin-wise mean of the PDPs in a window, with bins below
    ``noise_floor_db + margin_db`` set to zero."""
    pdps = list(pdps)
    if not pdps:
        raise ValueError("APDP window is empty")
    mean = np.mean([p.power for p in pdps], axis=0)
    threshold = 10.0 ** ((noise_floor_db + margin_db) / 10.0)
    valid = mean >= threshold
    power = np.where(valid, mean, 0.0)
    times = [p.time for p in pdps]
    return Pdp(power, pdps[0].delays, float(np.mean(times)), empty=not np.any(power > 0))


def estimate_noise_floor_db(power) -> float:
    """Median bin power in dB; sparse channels leave most bins at the noise level."""
    med = float(np.median(np.asarray(power, dtype=float)))
    return 10.0 * np.log10(med) if med > 0 else -np.inf


def _power_and_delays(pdp_or_power, delays):
    if isinstance(pdp_or_power, Pdp):
        return pdp_or_power.power, pdp_or_power.delays
    if delays is None:
        raise ValueError("delays are required when passing raw powers")
    return np.asarray(pdp_or_power, dtype=float), np.asarray(delays, dtype=float)


def rms_delay_spread(pdp, delays=None) -> float:
    """Square root of the second central moment of the power-delay profile (seconds)."""
    p, tau = _power_and_delays(pdp, delays)
    total = p.sum()
    if not total > 0:
        raise ValueError("RMS delay spread undefined for an all-zero profile")
    mean = np.sum(p * tau) / total
    # central form is better conditioned than E[tau^2] - E[tau]^2
    return float(np.sqrt(np.sum(p * (tau - mean) ** 2) / total))


def rice_k_factor(pdp) -> float:
    """Strongest valid path over the sum of the other valid paths, in dB."""
    p = pdp.power if isinstance(pdp, Pdp) else np.asarray(pdp, dtype=float)
    valid = p[p > 0]
    if valid.size == 0:
        raise ValueError("no valid paths")
    if valid.size == 1:
        raise InfiniteKFactorError("only one valid path: K-factor is infinite")
    strongest = valid.max()
    rest = valid.sum() - strongest
    return float(10.0 * np.log10(strongest / rest))


def window_snapshots(speed: float, snapshot_interval: float, wavelength: float, n_lambda: float = 40.0, n_total=None) -> int:
    """Number of snapshots covering ``n_lambda`` wavelengths of travel."""
    if speed <= 0:
        return int(n_total) if n_total else 1
    return max(1, int(round(n_lambda * wavelength / (speed * snapshot_interval))))


def extract_large_scale(data, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Large-scale gain ``L`` in dB over a sliding window.

    ``data`` is ``(T, N, ...)`` with frequency (or delay) on axis 1; the mean
    of ``|h|^2`` is taken over the window, the frequency points and any
    antenna axes. Returns ``(centre_index, L_db)`` for every full window.
    """
    data = np.asarray(data)
    T = data.shape[0]
    if window < 1 or window > T:
        raise ValueError(f"window of {window} snapshots does not fit a trace of {T}")
    per_snapshot = (np.abs(data) ** 2).reshape(T, -1).mean(axis=1)
    csum = np.concatenate([[0.0], np.cumsum(per_snapshot)])
    means = (csum[window:] - csum[:-window]) / window
    with np.errstate(divide="ignore"):
        level = -10.0 * np.log10(means)
    centres = np.arange(T - window + 1) + window // 2
    return centres, level


def fit_path_loss(level_db, distance, reference_distance: float = 1.0, near_field_cutoff: float = 0.0) -> FitResult:
    """Least-squares log-distance fit of large-scale loss samples.

    Returns a ``linear-regression`` FitResult with ``A``, ``n`` and the shadow
    fading standard deviation ``sigma``; residuals are kept for a Gaussian fit.
    """
    level = np.asarray(level_db, dtype=float)
    d = np.asarray(distance, dtype=float)
    keep = d >= max(near_field_cutoff, reference_distance)
    level, d = level[keep], d[keep]
    if np.unique(d).size < 2:
        raise ValueError("path-loss fit needs at least two distinct distances beyond the cutoff")
    x = 10.0 * np.log10(d / reference_distance)
    design = np.column_stack([np.ones_like(x), x])
    (intercept, exponent), *_ = np.linalg.lstsq(design, level, rcond=None)
    residuals = level - (intercept + exponent * x)
    return FitResult(
        "linear-regression",
        {"A": float(intercept), "n": float(exponent), "sigma": float(np.std(residuals))},
        goodness=float(np.sqrt(np.mean(residuals**2))),
        residuals=residuals,
    )


def tpcc(p_i, p_j) -> float:
    """Temporal PDP correlation coefficient in [0, 1]."""
    a = p_i.power if isinstance(p_i, Pdp) else np.asarray(p_i, dtype=float)
    b = p_j.power if isinstance(p_j, Pdp) else np.asarray(p_j, dtype=float)
    if a.shape != b.shape:
        raise ValueError("PDPs must share the delay grid")
    peak = max(float(np.max(a, initial=0.0)), float(np.max(b, initial=0.0)))
    if peak == 0.0:
        raise ValueError("TPCC undefined for two all-zero PDPs")
    # the ratio is invariant to a common scale; normalizing avoids underflow in the squares
    a, b = a / peak, b / peak
    return float(np.dot(a, b) / max(float(np.dot(a, a)), float(np.dot(b, b))))


def tpcc_matrix(pdps) -> np.ndarray:
    """All-pairs TPCC for a ``(T, bins)`` array of PDP powers."""
    P = np.asarray(pdps, dtype=float)
    peak = float(np.max(P, initial=0.0))
    if peak > 0:
        P = P / peak
    gram = P @ P.T
    energy = np.diag(gram)
    denom = np.maximum.outer(energy, energy)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, gram / denom, np.nan)
    return out


@dataclass(frozen=True)
class StationaryRegion:
    start: int
    stop: int  # inclusive
    duration: float
    distance: float
    censored: bool  # window reached the end of the trace

    @property
    def n_snapshots(self) -> int:
        return self.stop - self.start + 1


def smooth_pdps(pdps, window: int) -> np.ndarray:
    """Sliding mean of ``(T, bins)`` PDPs over ``window`` snapshots (edges held)."""
    P = np.asarray(pdps, dtype=float)
    if window <= 1:
        return P
    return uniform_filter1d(P, size=int(window), axis=0, mode="nearest")


def _forward_extent(P: np.ndarray, energy: np.ndarray, anchor: int, threshold: float) -> int:
    corr_num = P[anchor:] @ P[anchor]
    denom = np.maximum(energy[anchor:], energy[anchor])
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, corr_num / denom, 0.0)
    below = np.flatnonzero(c < threshold)
    return anchor + max(below[0] - 1 if below.size else c.size - 1, 0)


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")


def stationarity_per_anchor(pdps, snapshot_interval: float, speed: float, threshold: float = 0.8) -> list[StationaryRegion]:
    """Forward-maximal stationary window for every anchor snapshot."""
    _check_threshold(threshold)
    P = np.asarray(pdps, dtype=float)
    energy = np.einsum("ij,ij->i", P, P)
    T = P.shape[0]
    regions = []
    for i in range(T):
        j = _forward_extent(P, energy, i, threshold)
        duration = (j - i + 1) * snapshot_interval
        regions.append(StationaryRegion(i, j, duration, speed * duration, j == T - 1))
    return regions


def stationarity_regions(pdps, snapshot_interval: float, speed: float, threshold: float = 0.8) -> list[StationaryRegion]:
    """Non-overlapping stationary regions.

    Each region is anchored at the first snapshot after the previous region
    and extends forward while the TPCC to its anchor stays at or above
    ``threshold``. A time-invariant trace gives a single region.
    """
    _check_threshold(threshold)
    P = np.asarray(pdps, dtype=float)
    energy = np.einsum("ij,ij->i", P, P)
    T = P.shape[0]
    regions = []
    i = 0
    while i < T:
        j = _forward_extent(P, energy, i, threshold)
        duration = (j - i + 1) * snapshot_interval
        regions.append(StationaryRegion(i, j, duration, speed * duration, j == T - 1))
        i = j + 1
    return regions
