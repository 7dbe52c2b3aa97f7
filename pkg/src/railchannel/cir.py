"""Channel coefficient synthesis and the CirTrace container / binary format."""

from __future__ import annotations

import csv
import io
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .clusters import AOA, AOD, EOA, EOD, ClusterSet, ClusterState, stacked_ray_angles
from .geometry import AntennaPattern, LinkGeometry, direction_unit_vector

MAGIC = b"CIR5GR1\0"
_HEADER = struct.Struct("<8s5I2d")
DOMAIN_DELAY, DOMAIN_FREQUENCY = 0, 1


class CirFormatError(ValueError):
    """Malformed trace file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _array_phase(directions: np.ndarray, elements: np.ndarray, wavelength: float) -> np.ndarray:
    """``exp(j 2 pi r^T d / lambda)`` for directions (..., 3) and elements (E, 3) -> (..., E)."""
    return np.exp(2j * np.pi * (directions @ elements.T) / wavelength)


def nlos_ray_coefficient(
    ray_angles,
    phases,
    xpr,
    power,
    n_rays,
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    geometry: LinkGeometry,
    velocity,
    t: float = 0.0,
    doppler_phase=None,
) -> np.ndarray:
    """NLOS coefficients of rays, shape ``(..., U, S)``.

    ``ray_angles`` is ``(..., 4)`` in AOA, EOA, AOD, EOD order and ``phases``
    ``(..., 4)`` in theta-theta, theta-phi, phi-theta, phi-phi order.
    ``power`` and ``n_rays`` may be per-ray arrays (shape ``(...)``). The
    Doppler term is ``exp(j 2 pi r_rx^T v t / lambda)`` unless an accumulated
    ``doppler_phase`` (radians, shape ``(...)``) is supplied.
    """
    ang = np.asarray(ray_angles, dtype=float)
    ph = np.asarray(phases, dtype=float)
    kappa = np.asarray(xpr, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("XPR must be positive")
    frx_t, frx_p = rx_pattern.field(ang[..., EOA], ang[..., AOA])
    ftx_t, ftx_p = tx_pattern.field(ang[..., EOD], ang[..., AOD])
    cross = np.sqrt(1.0 / kappa)
    e = np.exp(1j * ph)
    pol = frx_t * (e[..., 0] * ftx_t + cross * e[..., 1] * ftx_p) + frx_p * (
        cross * e[..., 2] * ftx_t + e[..., 3] * ftx_p
    )
    r_rx = direction_unit_vector(ang[..., EOA], ang[..., AOA])
    r_tx = direction_unit_vector(ang[..., EOD], ang[..., AOD])
    if doppler_phase is None:
        doppler_phase = 2.0 * np.pi * (r_rx @ np.asarray(velocity, dtype=float)) * t / geometry.wavelength
    scalar = np.sqrt(np.asarray(power, dtype=float) / n_rays) * pol * np.exp(1j * np.asarray(doppler_phase))
    rx = _array_phase(r_rx, geometry.rx_elements, geometry.wavelength)
    tx = _array_phase(r_tx, geometry.tx_elements, geometry.wavelength)
    return scalar[..., None, None] * rx[..., :, None] * tx[..., None, :]


def los_coefficient(
    geometry: LinkGeometry,
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    velocity,
    t: float = 0.0,
    doppler_phase: float | None = None,
    angles=None,
) -> np.ndarray:
    """Deterministic LOS coefficient ``(U, S)``.

    ``angles`` overrides the geometric LOS direction (AOA, EOA, AOD, EOD).
    """
    if angles is None:
        angles = (geometry.los_aoa, geometry.los_eoa, geometry.los_aod, geometry.los_eod)
    aoa, eoa, aod, eod = angles
    frx_t, frx_p = rx_pattern.field(eoa, aoa)
    ftx_t, ftx_p = tx_pattern.field(eod, aod)
    pol = frx_t * ftx_t - frx_p * ftx_p
    r_rx = direction_unit_vector(eoa, aoa)
    r_tx = direction_unit_vector(eod, aod)
    if doppler_phase is None:
        doppler_phase = 2.0 * np.pi * float(r_rx @ np.asarray(velocity, dtype=float)) * t / geometry.wavelength
    static = -2.0 * np.pi * geometry.d_3d / geometry.wavelength
    scalar = pol * np.exp(1j * (doppler_phase + static))
    rx = _array_phase(r_rx, geometry.rx_elements, geometry.wavelength)
    tx = _array_phase(r_tx, geometry.tx_elements, geometry.wavelength)
    return scalar * rx[:, None] * tx[None, :]


def k_weights(k_r: float) -> tuple[float, float]:
    """``(sqrt(1/(K+1)), sqrt(K/(K+1)))``, with the K -> inf limit handled."""
    if k_r < 0:
        raise ValueError("K-factor must be non-negative")
    if np.isinf(k_r):
        return 0.0, 1.0
    return float(np.sqrt(1.0 / (k_r + 1.0))), float(np.sqrt(k_r / (k_r + 1.0)))


def combine_los(nlos_taps, los, k_r: float, tau_1_index: int = 0) -> np.ndarray:
    """Scale the NLOS taps (delay on axis 0) and add the LOS term at bin ``tau_1_index``."""
    w_nlos, w_los = k_weights(k_r)
    out = w_nlos * np.asarray(nlos_taps, dtype=complex)
    out[tau_1_index] = out[tau_1_index] + w_los * np.asarray(los)
    return out


def apply_large_scale(data, pl_db: float):
    """Multiply every coefficient by ``10^(-pl_db/20)``; accepts arrays or a CirTrace."""
    if not np.isfinite(pl_db):
        raise ValueError("path loss must be finite")
    g = 10.0 ** (-pl_db / 20.0)
    if isinstance(data, CirTrace):
        return CirTrace(data.data * g, data.domain, data.interval, data.spacing, dict(data.metadata))
    return np.asarray(data) * g


def ray_doppler_frequencies(cset: ClusterSet, velocity, wavelength: float) -> np.ndarray:
    """Doppler shift ``r_rx^T v / lambda`` (Hz) of every live ray."""
    v = np.asarray(velocity, dtype=float)
    out = [direction_unit_vector(a[:, EOA], a[:, AOA]) @ v for a in (c.ray_angles() for c in cset.alive)]
    return np.concatenate(out) / wavelength if out else np.empty(0)


def _bin_index(delay: float, bandwidth: float, n_bins: int, overflow: str) -> int | None:
    idx = int(np.floor(delay * bandwidth + 0.5))
    if idx < n_bins:
        return idx
    if overflow == "truncate":
        warnings.warn(f"delay {delay:.3e} s beyond the unambiguous span; dropped", RuntimeWarning, stacklevel=3)
        return None
    warnings.warn(f"delay {delay:.3e} s beyond the unambiguous span; wrapped", RuntimeWarning, stacklevel=3)
    return idx % n_bins


def cluster_coefficient(
    c: ClusterState,
    power: float,
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    geometry: LinkGeometry,
    velocity,
    t: float,
) -> np.ndarray:
    """Sum of a cluster's ray coefficients ``(U, S)`` at its accumulated Doppler phase."""
    coef = nlos_ray_coefficient(
        c.ray_angles(), c.ray_phases, c.ray_xpr, power, c.n_rays, rx_pattern, tx_pattern, geometry, velocity, t, c.doppler_phase
    )
    return coef.sum(axis=0)


def render_snapshot(
    cset: ClusterSet,
    geometry: LinkGeometry,
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    velocity,
    bandwidth: float,
    n_bins: int,
    overflow: str = "wrap",
) -> np.ndarray:
    """Delay-domain taps ``(n_bins, U, S)`` of one snapshot.

    Each cluster lands in the nearest ``1/B`` bin. NLOS powers are rescaled to
    unit total before the K-factor combination, and the LOS term sits at the
    LOS cluster's delay.
    """
    U, S = len(geometry.rx_elements), len(geometry.tx_elements)
    nlos_taps = np.zeros((n_bins, U, S), dtype=complex)
    nlos = cset.nlos
    total = sum(c.power for c in nlos)
    placed = [(c, _bin_index(c.delay, bandwidth, n_bins, overflow)) for c in nlos] if total > 0 else []
    placed = [(c, idx) for c, idx in placed if idx is not None]
    if placed:
        # all rays of all clusters in one vectorized evaluation
        clusters = [c for c, _ in placed]
        counts = np.array([c.n_rays for c in clusters])
        coef = nlos_ray_coefficient(
            stacked_ray_angles(clusters),
            np.vstack([c.ray_phases for c in clusters]),
            np.concatenate([c.ray_xpr for c in clusters]),
            np.repeat([c.power / total for c in clusters], counts),
            np.repeat(counts, counts),
            rx_pattern,
            tx_pattern,
            geometry,
            velocity,
            cset.time,
            np.concatenate([c.doppler_phase for c in clusters]),
        )
        np.add.at(nlos_taps, np.repeat([idx for _, idx in placed], counts), coef)
    los = cset.los_cluster
    if los is None:
        return nlos_taps
    los_coef = los_coefficient(
        geometry, rx_pattern, tx_pattern, velocity, cset.time, float(los.doppler_phase[0]), (los.aoa, los.eoa, los.aod, los.eod)
    )
    k_r = cset.lsp.k_linear if nlos else np.inf
    idx = _bin_index(los.delay, bandwidth, n_bins, overflow)
    return combine_los(nlos_taps, los_coef if idx is not None else 0.0, k_r, idx or 0)


def delay_to_frequency(taps, axis: int = 1) -> np.ndarray:
    """Transfer function on centred frequencies ``(k - N//2) B / N``."""
    return np.fft.fftshift(np.fft.fft(taps, axis=axis), axes=axis)


def frequency_to_delay(h, axis: int = 1) -> np.ndarray:
    return np.fft.ifft(np.fft.ifftshift(h, axes=axis), axis=axis)


def frequency_grid(n: int, bandwidth: float) -> np.ndarray:
    """Baseband frequency offsets matching :func:`delay_to_frequency`."""
    return (np.arange(n) - n // 2) * bandwidth / n


@dataclass
class CirTrace:
    """Complex coefficients ``(T, N, U, S)`` in the delay or frequency domain.

    ``spacing`` is the delay-bin width (s) or frequency step (Hz).
    """

    data: np.ndarray
    domain: str
    interval: float
    spacing: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ValueError("trace data must be (T, N, U, S)")
        if self.domain not in ("delay", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("trace contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def bandwidth(self) -> float:
        n = self.data.shape[1]
        return 1.0 / self.spacing if self.domain == "delay" else self.spacing * n

    @property
    def delays(self) -> np.ndarray:
        return np.arange(self.data.shape[1]) / self.bandwidth

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_snapshots) * self.interval

    def to_delay(self) -> "CirTrace":
        if self.domain == "delay":
            return self
        n = self.data.shape[1]
        return CirTrace(frequency_to_delay(self.data), "delay", self.interval, 1.0 / (self.spacing * n), dict(self.metadata))

    def to_frequency(self) -> "CirTrace":
        if self.domain == "frequency":
            return self
        n = self.data.shape[1]
        return CirTrace(delay_to_frequency(self.data), "frequency", self.interval, 1.0 / (self.spacing * n), dict(self.metadata))

    def to_bytes(self) -> bytes:
        T, N, U, S = self.data.shape
        head = _HEADER.pack(MAGIC, T, N, U, S, DOMAIN_FREQUENCY if self.domain == "frequency" else DOMAIN_DELAY, self.interval, self.spacing)
        return head + np.ascontiguousarray(self.data, dtype="<c8").tobytes()

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CirTrace":
        if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
            raise CirFormatError("bad magic, not a CIR trace", 0)
        if len(buf) < _HEADER.size:
            raise CirFormatError("truncated header", len(buf))
        _, T, N, U, S, domain, interval, spacing = _HEADER.unpack_from(buf)
        if domain not in (DOMAIN_DELAY, DOMAIN_FREQUENCY):
            raise CirFormatError(f"unknown domain flag {domain}", 24)
        if T * N * U * S == 0:
            raise CirFormatError("empty trace", 8)
        expected = _HEADER.size + 8 * T * N * U * S
        if len(buf) != expected:
            raise CirFormatError(f"payload size mismatch: expected {expected} bytes, found {len(buf)}", min(len(buf), expected))
        data = np.frombuffer(buf, dtype="<c8", offset=_HEADER.size).reshape(T, N, U, S)
        return cls(data.astype(np.complex128), "frequency" if domain == DOMAIN_FREQUENCY else "delay", interval, spacing)

    @classmethod
    def read(cls, path) -> "CirTrace":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self) -> str:
        """Long-format CSV: snapshot, grid index, rx, tx, real, imag."""
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["snapshot", "grid", "rx", "tx", "real", "imag"])
        for idx in np.ndindex(self.data.shape):
            v = self.data[idx]
            w.writerow([*idx, repr(float(v.real)), repr(float(v.imag))])
        return out.getvalue()


def render_trace(
    stream: Iterable[ClusterSet],
    geometry_at: Callable[[float], LinkGeometry],
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    velocity,
    bandwidth: float,
    n_bins: int,
    interval: float,
    domain: str = "frequency",
    overflow: str = "wrap",
    on_snapshot: Callable[[int, ClusterSet], None] | None = None,
) -> CirTrace:
    """Render every cluster set of ``stream`` into a trace.

    ``on_snapshot`` is called with each snapshot index and set before it is
    rendered (used to record ground-truth MPCs).
    """
    frames = []
    for k, cset in enumerate(stream):
        if on_snapshot is not None:
            on_snapshot(k, cset)
        frames.append(render_snapshot(cset, geometry_at(cset.time), rx_pattern, tx_pattern, velocity, bandwidth, n_bins, overflow))
    if not frames:
        raise ValueError("no snapshots to render")
    taps = np.stack(frames)
    trace = CirTrace(taps, "delay", interval, 1.0 / bandwidth)
    return trace.to_frequency() if domain == "frequency" else trace
