"""Coordinate conventions, spherical unit vectors, rotations and antenna patterns.

All angles are radians. The zenith angle ``theta`` is measured from the +z axis
and lies in ``[0, pi]``; azimuth ``phi`` is measured from +x towards +y and is
stored wrapped to ``[0, 2*pi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * np.pi


def wrap_azimuth(phi):
    """Wrap azimuth angles to ``[0, 2*pi)``."""
    wrapped = np.mod(phi, TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def wrap_to_pi(angle):
    """Wrap angles to ``(-pi, pi]``."""
    out = -np.mod(-np.asarray(angle, dtype=float) + np.pi, TWO_PI) + np.pi
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SphericalAngles:
    """An (azimuth, zenith) direction.

    Azimuth is wrapped on construction; a zenith outside ``[0, pi]`` raises.
    """

    azimuth: float
    zenith: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.azimuth) or not np.isfinite(self.zenith):
            raise ValueError("angles must be finite")
        if not 0.0 <= self.zenith <= np.pi:
            raise ValueError(f"zenith angle {self.zenith} outside [0, pi]")
        object.__setattr__(self, "azimuth", float(wrap_azimuth(self.azimuth)))
        object.__setattr__(self, "zenith", float(self.zenith))


class ElevationConvention(str, Enum):
    """How a published elevation angle is referenced."""

    ZENITH = "zenith"
    HORIZON = "horizon"


def elevation_to_zenith(angle, convention: ElevationConvention | str = ElevationConvention.ZENITH):
    """Convert an elevation angle in the given convention to a zenith angle."""
    convention = ElevationConvention(convention)
    if convention is ElevationConvention.ZENITH:
        return angle
    return np.pi / 2 - np.asarray(angle) if np.ndim(angle) else np.pi / 2 - angle


def spherical_unit_vectors(zenith, azimuth) -> tuple[np.ndarray, np.ndarray]:
    """Return the (theta_hat, phi_hat) basis vectors, last axis of size 3.

    Accepts scalars or broadcastable arrays.
    """
    zenith = np.asarray(zenith, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    ct, st = np.cos(zenith), np.sin(zenith)
    cp, sp = np.cos(azimuth), np.sin(azimuth)
    ct, st, cp, sp = np.broadcast_arrays(ct, st, cp, sp)
    theta_hat = np.stack([ct * cp, ct * sp, -st], axis=-1)
    phi_hat = np.stack([-sp, cp, np.zeros_like(cp)], axis=-1)
    return theta_hat, phi_hat


def direction_unit_vector(zenith, azimuth) -> np.ndarray:
    """Cartesian unit vector pointing along (zenith, azimuth)."""
    zenith = np.asarray(zenith, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    st = np.sin(zenith)
    out = np.empty(np.broadcast_shapes(zenith.shape, azimuth.shape) + (3,))
    out[..., 0] = st * np.cos(azimuth)
    out[..., 1] = st * np.sin(azimuth)
    out[..., 2] = np.cos(zenith)
    return out


def direction_angles(vector) -> SphericalAngles:
    """Inverse of :func:`direction_unit_vector` for a single non-zero vector."""
    v = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("zero vector has no direction")
    zenith = float(np.arccos(np.clip(v[2] / norm, -1.0, 1.0)))
    return SphericalAngles(float(np.arctan2(v[1], v[0])), zenith)


class RotationMatrix:
    """A proper 3x3 rotation. Rejects matrices that are not orthonormal with det +1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix=None, tol: float = 1e-9) -> None:
        m = np.eye(3) if matrix is None else np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if not np.allclose(m.T @ m, np.eye(3), atol=tol, rtol=0.0):
            raise ValueError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(m) - 1.0) > tol:
            raise ValueError("rotation matrix must have determinant +1")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def about_axis(cls, axis, angle: float) -> "RotationMatrix":
        """Rodrigues rotation about ``axis`` by ``angle``."""
        k = np.asarray(axis, dtype=float)
        k = k / np.linalg.norm(k)
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        return cls(np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K))

    def __matmul__(self, other):
        return self.matrix @ np.asarray(other, dtype=float)

    def __repr__(self) -> str:
        return f"RotationMatrix({self.matrix.tolist()})"


def rotate_velocity(rotation: RotationMatrix, velocity) -> np.ndarray:
    """Apply ``rotation`` to a velocity vector."""
    return rotation.matrix @ np.asarray(velocity, dtype=float)


def velocity_vector(speed: float, heading: float, climb: float = 0.0) -> np.ndarray:
    """Velocity in m/s for a heading (azimuth) and optional climb angle above horizon."""
    return speed * np.array([np.cos(climb) * np.cos(heading), np.cos(climb) * np.sin(heading), np.sin(climb)])


class PatternKind(str, Enum):
    ISOTROPIC = "isotropic"
    DIRECTIONAL_PANEL = "directional-panel"
    OMNI_VERTICAL = "omni-vertical"


@dataclass(frozen=True)
class AntennaPattern:
    """Polarimetric field pattern of one antenna element.

    ``directional-panel`` uses a raised-cosine main lobe
    ``((1 + cos a) / 2) ** p`` in power, where ``a`` is the angle off boresight
    and ``p`` places the -3 dB point at half the beamwidth; the back lobe is
    floored at ``-front_to_back_db``. ``slant_deg`` rotates the polarization
    from vertical (45 gives a +45 degree cross-polarized element).
    ``omni-vertical`` is a short vertical dipole, ``F_theta ~ sin(theta)``.
    """

    kind: PatternKind = PatternKind.ISOTROPIC
    gain_dbi: float = 0.0
    boresight_azimuth: float = 0.0
    boresight_zenith: float = np.pi / 2
    beamwidth_deg: float = 65.0
    front_to_back_db: float = 30.0
    slant_deg: float = 0.0
    _exponent: float = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PatternKind(self.kind))
        if not np.isfinite(self.gain_dbi):
            raise ValueError("antenna gain must be finite")
        if self.kind is PatternKind.DIRECTIONAL_PANEL:
            if not 0.0 < self.beamwidth_deg < 360.0:
                raise ValueError("beamwidth must be in (0, 360) degrees")
            half = np.deg2rad(self.beamwidth_deg) / 2
            object.__setattr__(self, "_exponent", np.log(0.5) / np.log((1.0 + np.cos(half)) / 2.0))

    def field(self, zenith, azimuth) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(F_theta, F_phi)`` in the direction (zenith, azimuth)."""
        zenith = np.asarray(zenith, dtype=float)
        azimuth = np.asarray(azimuth, dtype=float)
        shape = np.broadcast_shapes(zenith.shape, azimuth.shape)
        amp = 10.0 ** (self.gain_dbi / 20.0)
        if self.kind is PatternKind.ISOTROPIC:
            f_theta = np.full(shape, amp)
            return f_theta, np.zeros(shape)
        if self.kind is PatternKind.OMNI_VERTICAL:
            f_theta = np.broadcast_to(amp * np.sin(zenith), shape).astype(float)
            return f_theta, np.zeros(shape)
        direction = direction_unit_vector(zenith, azimuth)
        boresight = direction_unit_vector(self.boresight_zenith, self.boresight_azimuth)
        cos_off = np.clip(direction @ boresight, -1.0, 1.0)
        power = ((1.0 + cos_off) / 2.0) ** self._exponent
        power = np.maximum(power, 10.0 ** (-self.front_to_back_db / 10.0))
        g = amp * np.sqrt(power)
        slant = np.deg2rad(self.slant_deg)
        return g * np.cos(slant), g * np.sin(slant)


@dataclass(frozen=True)
class LinkGeometry:
    """Snapshot geometry of one BS-UT link.

    Arrival angles point from the UT towards the BS; departure angles from
    the BS towards the UT. Element offsets are ``(U, 3)`` and ``(S, 3)``.
    """

    bs_position: np.ndarray
    ut_position: np.ndarray
    rx_elements: np.ndarray
    tx_elements: np.ndarray
    wavelength: float
    los_aoa: float
    los_eoa: float
    los_aod: float
    los_eod: float
    d_3d: float

    @property
    def los_arrival(self) -> SphericalAngles:
        return SphericalAngles(self.los_aoa, self.los_eoa)

    @property
    def los_departure(self) -> SphericalAngles:
        return SphericalAngles(self.los_aod, self.los_eod)


def link_geometry(bs_position, ut_position, rx_elements=None, tx_elements=None, wavelength: float = 1.0) -> LinkGeometry:
    bs = np.asarray(bs_position, dtype=float)
    ut = np.asarray(ut_position, dtype=float)
    arrival = direction_angles(bs - ut)
    departure = direction_angles(ut - bs)
    rx = np.zeros((1, 3)) if rx_elements is None else np.asarray(rx_elements, dtype=float)
    tx = np.zeros((1, 3)) if tx_elements is None else np.asarray(tx_elements, dtype=float)
    return LinkGeometry(
        bs_position=bs,
        ut_position=ut,
        rx_elements=rx,
        tx_elements=tx,
        wavelength=float(wavelength),
        los_aoa=arrival.azimuth,
        los_eoa=arrival.zenith,
        los_aod=departure.azimuth,
        los_eod=departure.zenith,
        d_3d=float(np.linalg.norm(bs - ut)),
    )
