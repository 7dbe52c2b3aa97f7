"""Scenario configuration, path loss / shadow fading, and large-scale parameter sampling.

The default parameter sets are the fitted statistics of the 5G-R rural
measurement (two areas sharing one delay/angle spread row). Lognormal
parameters are in natural-log units: DS in ln(ns), angular spreads in
ln(deg), lifetime in ln(s) and stationarity distance in ln(m).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import SPEED_OF_LIGHT, AntennaPattern, LinkGeometry, link_geometry, velocity_vector

NEAR_FIELD_CUTOFF_M = 100.0


class PropagationCondition(str, Enum):
    LOS = "LOS"
    NLOS = "NLOS"


class ScenarioTag(str, Enum):
    RURAL_A = "5G-R-rural-A"
    RURAL_B = "5G-R-rural-B"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def sample(self, rng: np.random.Generator, size=None):
        return self.mu + self.sigma * rng.standard_normal(size)

    @property
    def mean(self) -> float:
        return self.mu


@dataclass(frozen=True)
class Lognormal:
    """Lognormal with natural-log parameters ``ln X ~ N(mu, sigma^2)``."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def sample(self, rng: np.random.Generator, size=None):
        return np.exp(self.mu + self.sigma * rng.standard_normal(size))

    @property
    def mean(self) -> float:
        return float(np.exp(self.mu + self.sigma**2 / 2))

    @property
    def std(self) -> float:
        return float(np.sqrt(np.expm1(self.sigma**2)) * self.mean)

    @property
    def median(self) -> float:
        return float(np.exp(self.mu))


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance model ``A + 10 n log10(d / d0) + X_sigma`` (dB)."""

    intercept_db: float
    exponent: float
    reference_distance: float = 1.0
    sf_std_db: float = 0.0

    def __post_init__(self) -> None:
        if self.reference_distance <= 0:
            raise ValueError("reference distance must be positive")
        if self.sf_std_db < 0:
            raise ValueError("shadow-fading std must be non-negative")


def path_loss_db(model: PathLossModel, distance: float, sf_sample: float = 0.0):
    """Path loss in dB at ``distance`` metres, with an additive shadow-fading draw."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < model.reference_distance):
        raise ValueError(
            f"distance {np.min(d)} m below reference distance {model.reference_distance} m"
        )
    pl = model.intercept_db + 10.0 * model.exponent * np.log10(d / model.reference_distance) + sf_sample
    return pl if np.ndim(pl) else float(pl)


def sample_shadow_fading(sigma_db: float, rng: np.random.Generator, size=None):
    if sigma_db < 0:
        raise ValueError("sigma must be non-negative")
    if sigma_db == 0:
        return np.zeros(size) if size is not None else 0.0
    return sigma_db * rng.standard_normal(size)


@dataclass(frozen=True)
class LspDistributions:
    """Marginal distributions of the large-scale parameters."""

    ds: Lognormal = Lognormal(4.33, 0.39)
    asa: Lognormal = Lognormal(1.78, 1.45)
    esa: Lognormal = Lognormal(0.48, 0.65)
    # departure spreads are not reported; they mirror the arrival side
    asd: Lognormal | None = None
    esd: Lognormal | None = None
    k_factor: Normal = Normal(0.66, 2.78)
    sf_std_db: float = 2.86
    lifetime: Lognormal = Lognormal(0.88, 0.92)
    stationarity_distance: Lognormal = Lognormal(2.16, 0.29)

    def __post_init__(self) -> None:
        if self.sf_std_db < 0:
            raise ValueError("shadow-fading std must be non-negative")
        if self.asd is None:
            object.__setattr__(self, "asd", self.asa)
        if self.esd is None:
            object.__setattr__(self, "esd", self.esa)


@dataclass(frozen=True)
class LspSample:
    ds_ns: float
    asa_deg: float
    esa_deg: float
    asd_deg: float
    esd_deg: float
    k_db: float
    sf_db: float

    @property
    def ds(self) -> float:
        """Delay spread in seconds."""
        return self.ds_ns * 1e-9

    @property
    def k_linear(self) -> float:
        return 10.0 ** (self.k_db / 10.0)


def sample_lsps(dists: LspDistributions, rng: np.random.Generator) -> LspSample:
    """Draw one set of large-scale parameters.

    The draw order is fixed (DS, ASA, ESA, ASD, ESD, K, SF) so a given
    generator state always yields the same sample.
    """
    return LspSample(
        ds_ns=float(dists.ds.sample(rng)),
        asa_deg=float(dists.asa.sample(rng)),
        esa_deg=float(dists.esa.sample(rng)),
        asd_deg=float(dists.asd.sample(rng)),
        esd_deg=float(dists.esd.sample(rng)),
        k_db=float(dists.k_factor.sample(rng)),
        sf_db=float(sample_shadow_fading(dists.sf_std_db, rng)),
    )


AREA_A_PATH_LOSS = PathLossModel(49.47, 2.22, 1.0, 2.86)
AREA_B_PATH_LOSS = PathLossModel(9.47, 4.01, 1.0, 3.40)
AREA_A_LSPS = LspDistributions()
AREA_B_LSPS = LspDistributions(k_factor=Normal(-1.22, 3.22), sf_std_db=3.40)


def area_parameters(tag: ScenarioTag | str) -> tuple[PathLossModel, LspDistributions]:
    """Path-loss model and LSP distributions for a named measurement area."""
    tag = ScenarioTag(tag)
    if tag is ScenarioTag.RURAL_B:
        return AREA_B_PATH_LOSS, AREA_B_LSPS
    return AREA_A_PATH_LOSS, AREA_A_LSPS


@dataclass(frozen=True)
class ScenarioConfig:
    """Link geometry, radio parameters and motion for one simulated BS-UT link.

    Positions are ``(x, y)`` in metres with separate antenna heights; the UT
    moves in a straight line at ``ut_speed`` along ``ut_heading``.
    """

    carrier_frequency: float = 2160e6
    bandwidth: float = 10e6
    n_freq: int = 513
    bs_position: tuple[float, float] = (0.0, 0.0)
    bs_height: float = 26.0
    ut_position: tuple[float, float] = (-600.0, 30.0)
    ut_height: float = 4.2
    ut_speed: float = 80.0 / 3.6
    ut_heading: float = 0.0
    tag: ScenarioTag = ScenarioTag.RURAL_A
    condition: PropagationCondition = PropagationCondition.LOS
    tx_pattern: AntennaPattern = field(default_factory=AntennaPattern)
    rx_pattern: AntennaPattern = field(default_factory=AntennaPattern)
    n_rx: int = 16
    rx_array_radius: float | None = None
    n_tx: int = 1
    duration: float = 2.0
    snapshot_rate: float = 50.0
    path_loss: PathLossModel | None = None
    lsps: LspDistributions | None = None
    near_field_cutoff: float = NEAR_FIELD_CUTOFF_M

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag", ScenarioTag(self.tag))
        object.__setattr__(self, "condition", PropagationCondition(self.condition))
        if self.carrier_frequency <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.n_freq < 2:
            raise ValueError("need at least two frequency points")
        if self.snapshot_rate <= 0:
            raise ValueError("snapshot rate must be positive")
        if self.bs_height <= 0 or self.ut_height <= 0:
            raise ValueError("antenna heights must be positive")
        if self.n_rx < 1 or self.n_tx < 1:
            raise ValueError("need at least one antenna element per side")
        if self.duration < 0 or self.ut_speed < 0:
            raise ValueError("duration and speed must be non-negative")
        pl, lsps = area_parameters(self.tag)
        if self.path_loss is None:
            object.__setattr__(self, "path_loss", pl)
        if self.lsps is None:
            object.__setattr__(self, "lsps", lsps)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def snapshot_interval(self) -> float:
        return 1.0 / self.snapshot_rate

    @property
    def n_snapshots(self) -> int:
        return int(round(self.duration * self.snapshot_rate))

    @property
    def velocity(self) -> np.ndarray:
        return velocity_vector(self.ut_speed, self.ut_heading)

    @property
    def bs_xyz(self) -> np.ndarray:
        return np.array([self.bs_position[0], self.bs_position[1], self.bs_height], dtype=float)

    def ut_xyz(self, t: float = 0.0) -> np.ndarray:
        start = np.array([self.ut_position[0], self.ut_position[1], self.ut_height], dtype=float)
        return start + self.velocity * t

    def rx_element_positions(self) -> np.ndarray:
        """Element offsets (U, 3) of the receive uniform circular array.

        The default radius gives half-wavelength spacing between neighbours.
        """
        if self.n_rx == 1:
            return np.zeros((1, 3))
        radius = self.rx_array_radius
        if radius is None:
            radius = (self.wavelength / 2) / (2 * np.sin(np.pi / self.n_rx))
        ang = 2 * np.pi * np.arange(self.n_rx) / self.n_rx
        return np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros_like(ang)], axis=-1)

    def tx_element_positions(self) -> np.ndarray:
        """Element offsets (S, 3) of the transmit array, a half-wavelength ULA along y."""
        y = (np.arange(self.n_tx) - (self.n_tx - 1) / 2) * self.wavelength / 2
        return np.stack([np.zeros_like(y), y, np.zeros_like(y)], axis=-1)

    def link_geometry(self, t: float = 0.0) -> LinkGeometry:
        return link_geometry(
            self.bs_xyz, self.ut_xyz(t), self.rx_element_positions(), self.tx_element_positions(), self.wavelength
        )

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)
