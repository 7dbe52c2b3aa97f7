"""Angular spread and multipath component distance (MCD)."""

from __future__ import annotations

import numpy as np

from ..geometry import direction_unit_vector, wrap_to_pi


def circular_mean(angles, weights) -> float:
    """Power-weighted circular mean in radians, wrapped to ``(-pi, pi]``."""
    resultant = np.sum(np.asarray(weights) * np.exp(1j * np.asarray(angles)))
    return float(np.angle(resultant))


def rms_spread(angles, weights, circular: bool = False) -> float:
    """Power-weighted RMS deviation about the power-weighted mean, in radians.

    With ``circular=True`` deviations are minimal arcs about the circular mean,
    so sets straddling the 0/2*pi seam are handled correctly.
    """
    angles = np.asarray(angles, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ValueError("angular spread undefined for zero total power")
    if circular:
        dev = wrap_to_pi(angles - circular_mean(angles, w))
    else:
        dev = angles - np.sum(w * angles) / total
    return float(np.sqrt(max(np.sum(w * dev**2) / total, 0.0)))


def angular_spread(powers, angles, dimension: str = "azimuth") -> float:
    """RMS angular spread in degrees.

    ``powers`` are linear MPC powers (``|alpha|^2``); ``angles`` are radians.
    Azimuth is evaluated on the circle, elevation linearly.
    """
    if dimension not in ("azimuth", "elevation"):
        raise ValueError(f"unknown dimension {dimension!r}")
    return float(np.rad2deg(rms_spread(angles, powers, circular=dimension == "azimuth")))


def mcd_angle(aoa_x, eoa_x, aoa_y, eoa_y):
    """Half the norm of the difference of the two arrival unit vectors, in [0, 1]."""
    ux = direction_unit_vector(eoa_x, aoa_x)
    uy = direction_unit_vector(eoa_y, aoa_y)
    return 0.5 * np.linalg.norm(ux - uy, axis=-1)


def mcd_delay(tau_x, tau_y, xi: float, tau_std: float, delta_tau_max: float):
    diff = np.abs(np.asarray(tau_x, dtype=float) - np.asarray(tau_y, dtype=float))
    if delta_tau_max <= 0:
        if np.any(diff > 0):
            raise ValueError("delta_tau_max must be positive when delays differ")
        return np.zeros_like(diff)
    return xi * (tau_std / delta_tau_max) * diff / delta_tau_max


def mcd(x, y, xi: float = 1.0, tau_std: float = 0.0, delta_tau_max: float = 1.0):
    """Combined MCD between two MPCs given as ``(delay, aoa, eoa)`` tuples."""
    tau_x, aoa_x, eoa_x = x
    tau_y, aoa_y, eoa_y = y
    a = mcd_angle(aoa_x, eoa_x, aoa_y, eoa_y)
    d = mcd_delay(tau_x, tau_y, xi, tau_std, delta_tau_max)
    out = np.sqrt(a**2 + d**2)
    return out if np.ndim(out) else float(out)


def delay_normalization(delays) -> tuple[float, float]:
    """``(tau_std, delta_tau_max)`` over a pooled set of delays."""
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        return 0.0, 0.0
    return float(np.std(delays)), float(np.ptp(delays))
