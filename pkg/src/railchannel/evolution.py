"""Time evolution of a cluster set: birth-death drivers and per-step parameter drift."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterator

import numpy as np

from .analysis.fitting import MEASURED_TRANSITION_MATRIX, check_transition_matrix
from .clusters import AOA, AOD, EOA, EOD, ZENITH_EPS, ClusterSet, ClusterState, cluster_power_profile, geometry_angles
from .geometry import (
    SPEED_OF_LIGHT,
    LinkGeometry,
    RotationMatrix,
    direction_unit_vector,
    spherical_unit_vectors,
    wrap_azimuth,
)
from .scenario import Lognormal


class BdState(IntEnum):
    S0 = 0  # no births or deaths
    S1 = 1  # births only
    S2 = 2  # deaths only
    S3 = 3  # births and deaths

    @property
    def births(self) -> bool:
        return bool(self & 1)

    @property
    def deaths(self) -> bool:
        return bool(self & 2)


@dataclass(frozen=True)
class EvolutionParams:
    """Birth-death and drift settings.

    ``lambda_g`` defaults to ``n_expected * lambda_r`` so the Poisson driver's
    mean cluster count is ``n_expected``. ``dt`` of ``None`` means "use the
    snapshot interval". ``min_nlos`` keeps at least that many NLOS clusters
    alive (Markov and lifetime deaths below it are skipped and recorded).
    """

    dt_bd: float = 0.1
    dt: float | None = None
    lambda_r: float = 0.12
    lambda_g: float | None = None
    n_expected: float = 5.0
    d_c: float = 10.0
    driver: str = "markov"
    transition_matrix: np.ndarray = field(default_factory=lambda: MEASURED_TRANSITION_MATRIX.copy())
    lifetime: Lognormal | None = Lognormal(0.88, 0.92)
    min_nlos: int = 1
    max_clusters: int | None = None
    tau_min_guard: float = 1e-9
    sin_eps: float = 1e-6
    los_persistent: bool = True

    def __post_init__(self) -> None:
        if self.dt_bd <= 0:
            raise ValueError("dt_bd must be positive")
        if self.dt is not None and not 0 < self.dt <= self.dt_bd:
            raise ValueError("need 0 < dt <= dt_bd")
        if self.lambda_r < 0 or (self.lambda_g is not None and self.lambda_g < 0):
            raise ValueError("birth/death rates must be non-negative")
        if self.d_c <= 0:
            raise ValueError("correlation distance D_c must be positive")
        if self.driver not in ("poisson", "markov"):
            raise ValueError(f"unknown driver {self.driver!r}")
        object.__setattr__(self, "transition_matrix", check_transition_matrix(self.transition_matrix))
        if self.lambda_g is None:
            object.__setattr__(self, "lambda_g", self.n_expected * self.lambda_r)


@dataclass
class StepRecord:
    time: float
    state: int
    births: tuple[int, ...]
    deaths: tuple[int, ...]
    n_clusters: int
    skipped_deaths: int = 0
    guard_events: int = 0


@dataclass
class EvolutionLog:
    records: list[StepRecord] = field(default_factory=list)

    def append(self, rec: StepRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_clusters(self) -> np.ndarray:
        return np.array([r.n_clusters for r in self.records])

    @property
    def states(self) -> np.ndarray:
        return np.array([r.state for r in self.records])

    @property
    def birth_counts(self) -> np.ndarray:
        return np.array([len(r.births) for r in self.records])

    @property
    def death_counts(self) -> np.ndarray:
        return np.array([len(r.deaths) for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "state", "n_clusters", "births", "deaths"])
            for r in self.records:
                w.writerow(
                    [repr(r.time), r.state, r.n_clusters, ";".join(map(str, r.births)), ";".join(map(str, r.deaths))]
                )

    @classmethod
    def read_csv(cls, path) -> "EvolutionLog":
        def ids(text):
            return tuple(int(x) for x in text.split(";") if x)

        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(
                    StepRecord(float(row["time"]), int(row["state"]), ids(row["births"]), ids(row["deaths"]), int(row["n_clusters"]))
                )
        return log


def displacement(speed: float, dt_bd: float) -> float:
    if dt_bd <= 0:
        raise ValueError("dt_bd must be positive")
    return speed * dt_bd


def survival_probability(delta_p: float, lambda_r: float, d_c: float) -> float:
    if delta_p < 0 or lambda_r < 0 or d_c <= 0:
        raise ValueError("need delta_p >= 0, lambda_r >= 0, d_c > 0")
    return float(np.exp(-lambda_r * delta_p / d_c))


def expected_new_clusters(lambda_g: float, lambda_r: float, delta_p: float, d_c: float) -> float:
    if lambda_r <= 0:
        raise ValueError("lambda_r must be positive for the birth expectation")
    return float(lambda_g / lambda_r * (1.0 - survival_probability(delta_p, lambda_r, d_c)))


def _add_births(cset: ClusterSet, n: int, rng: np.random.Generator, params: EvolutionParams) -> list[int]:
    born = []
    for _ in range(n):
        if params.max_clusters is not None and len(cset) >= params.max_clusters:
            break
        c = cset.spawn_cluster(rng)
        cset.clusters.append(c)
        born.append(c.id)
    return born


def _kill(cset: ClusterSet, victims: list[ClusterState]) -> list[int]:
    for c in victims:
        c.alive = False
    dead = {c.id for c in victims}
    cset.clusters = [c for c in cset.clusters if c.id not in dead]
    return [c.id for c in victims]


def _finish_step(cset: ClusterSet) -> None:
    normalize_delays(cset)
    cset.renormalize_powers()


def step_birth_death_poisson(cset: ClusterSet, params: EvolutionParams, speed: float, rng: np.random.Generator) -> StepRecord:
    """One ``dt_bd`` step: independent survival of each NLOS cluster, Poisson births."""
    delta = displacement(speed, params.dt_bd)
    p_surv = survival_probability(delta, params.lambda_r, params.d_c)
    nlos = cset.nlos
    die = rng.random(len(nlos)) >= p_surv
    deaths = _kill(cset, [c for c, d in zip(nlos, die) if d])
    mean_new = expected_new_clusters(params.lambda_g, params.lambda_r, delta, params.d_c) if params.lambda_r > 0 else 0.0
    births = _add_births(cset, int(rng.poisson(mean_new)), rng, params)
    _finish_step(cset)
    state = int(BdState(int(bool(births)) + 2 * int(bool(deaths))))
    cset.bd_state = state
    return StepRecord(cset.time, state, tuple(births), tuple(deaths), len(cset))


def step_birth_death_markov(cset: ClusterSet, params: EvolutionParams, rng: np.random.Generator) -> StepRecord:
    """One ``dt_bd`` step of the four-state chain.

    S1 adds one cluster, S2 removes one uniformly chosen NLOS cluster, S3 does
    both. Clusters older than their sampled lifetime die as well. Deaths that
    would leave fewer than ``min_nlos`` NLOS clusters are skipped.
    """
    row = params.transition_matrix[cset.bd_state]
    state = BdState(int(rng.choice(4, p=row)))
    skipped = 0
    victims: list[ClusterState] = []
    nlos = cset.nlos
    if state.deaths:
        if len(nlos) > params.min_nlos:
            victims.append(nlos[int(rng.integers(len(nlos)))])
        else:
            skipped += 1
    if params.lifetime is not None:
        for c in nlos:
            if c in victims or c.age(cset.time) < c.lifetime:
                continue
            if len(nlos) - len(victims) > params.min_nlos:
                victims.append(c)
            else:
                skipped += 1
    deaths = _kill(cset, victims)
    births = _add_births(cset, 1, rng, params) if state.births else []
    _finish_step(cset)
    cset.bd_state = int(state)
    return StepRecord(cset.time, int(state), tuple(births), tuple(deaths), len(cset), skipped)


def update_delay(abs_delay: float, r_rx, velocity, dt: float) -> float:
    """Absolute delay after moving ``velocity * dt`` (``r_rx`` points towards the scatterer)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(abs_delay - np.dot(r_rx, velocity) / SPEED_OF_LIGHT * dt)


def normalize_delays(cset: ClusterSet) -> ClusterSet:
    """Set every normalized delay to its absolute delay minus the smallest one."""
    cset.normalize_delays()
    return cset


def cluster_power(cluster: ClusterState, ds: float, r_tau: float) -> float:
    """Un-normalized power of one cluster at its current delay (stored shadowing reused)."""
    return float(cluster_power_profile(cluster.delay, ds, r_tau, cluster.shadowing_db))


def update_power(cset: ClusterSet) -> ClusterSet:
    """Recompute cluster powers from the current normalized delays and renormalize."""
    cset.renormalize_powers()
    return cset


def angle_increments(angles, abs_delay: float, v_star, dt: float, tau_min: float = 1e-9, sin_eps: float = 1e-6):
    """Increments of (AOA, EOA, AOD, EOD) for one cluster.

    Returns ``(increments, guarded)``; ``guarded`` counts the components
    skipped because the delay or a zenith sine was too small.
    """
    ang = np.asarray(angles, dtype=float)
    v = np.asarray(v_star, dtype=float)
    inc = np.zeros(4)
    if abs_delay <= tau_min:
        return inc, 4
    guarded = 0
    scale = dt / (SPEED_OF_LIGHT * abs_delay)
    for az, ze in ((AOA, EOA), (AOD, EOD)):
        theta_hat, phi_hat = spherical_unit_vectors(ang[ze], ang[az])
        s = np.sin(ang[ze])
        if abs(s) < sin_eps:
            guarded += 1
        else:
            inc[az] = np.dot(v, phi_hat) * scale / s
        inc[ze] = np.dot(v, theta_hat) * scale
    return inc, guarded


def update_angles(cluster: ClusterState, v_star, dt: float, tau_min: float = 1e-9, sin_eps: float = 1e-6) -> int:
    """Apply the drift equations to the cluster's mean angles in place.

    Uses the absolute delay from before the step. Returns the number of
    guarded (skipped) components.
    """
    inc, guarded = angle_increments(cluster.mean_angles, cluster.abs_delay, v_star, dt, tau_min, sin_eps)
    new = cluster.mean_angles + inc
    cluster.aoa = float(wrap_azimuth(new[AOA]))
    cluster.aod = float(wrap_azimuth(new[AOD]))
    cluster.eoa = float(np.clip(new[EOA], ZENITH_EPS, np.pi - ZENITH_EPS))
    cluster.eod = float(np.clip(new[EOD], ZENITH_EPS, np.pi - ZENITH_EPS))
    return guarded


def advance_doppler(cset: ClusterSet, velocity, dt: float, wavelength: float) -> None:
    """Accumulate each ray's Doppler phase ``2 pi r^T v dt / lambda`` over one step."""
    v = np.asarray(velocity, dtype=float)
    for c in cset.alive:
        ang = c.ray_angles()
        r = direction_unit_vector(ang[:, EOA], ang[:, AOA])
        c.doppler_phase = c.doppler_phase + 2.0 * np.pi * (r @ v) * dt / wavelength


def evolve_parameters(
    cset: ClusterSet,
    velocity,
    dt: float,
    params: EvolutionParams | None = None,
    geometry: LinkGeometry | None = None,
) -> int:
    """Drift delays, angles and powers of the live clusters over one ``dt``.

    Angles use the pre-step absolute delay. With ``geometry`` (the link at the
    new time) the LOS cluster and the birth reference follow the true LOS
    path; otherwise the LOS cluster drifts like the others. Returns the number
    of guarded angle components.
    """
    params = params or EvolutionParams()
    v = np.asarray(velocity, dtype=float)
    guarded = 0
    for c in cset.alive:
        if c.los and geometry is not None:
            continue
        r_rx = direction_unit_vector(c.eoa, c.aoa)
        rot = c.rotation or RotationMatrix()
        guarded += update_angles(c, rot @ v, dt, params.tau_min_guard, params.sin_eps)
        c.abs_delay = update_delay(c.abs_delay, r_rx, v, dt)
    if geometry is not None:
        cset.los_angles = geometry_angles(geometry)
        cset.los_abs_delay = geometry.d_3d / SPEED_OF_LIGHT
        los = cset.los_cluster
        if los is not None:
            los.aoa, los.eoa, los.aod, los.eod = (float(x) for x in cset.los_angles)
            los.abs_delay = cset.los_abs_delay
    else:
        # keep the birth reference moving with the line-of-sight path
        cset.los_abs_delay = update_delay(cset.los_abs_delay, direction_unit_vector(cset.los_angles[EOA], cset.los_angles[AOA]), v, dt)
    cset.time += dt
    _finish_step(cset)
    return guarded


def evolve(
    cset: ClusterSet,
    params: EvolutionParams,
    n_steps: int,
    dt: float,
    velocity,
    rng: np.random.Generator,
    geometry_at: Callable[[float], LinkGeometry] | None = None,
    wavelength: float | None = None,
    log: EvolutionLog | None = None,
) -> Iterator[ClusterSet]:
    """Yield the (mutated) cluster set at ``n_steps`` snapshot times.

    The first yield is the initial set. Between yields the parameters drift
    by ``dt``; a birth-death step runs whenever another ``dt_bd`` has
    elapsed. When ``wavelength`` is given the per-ray Doppler phase is
    accumulated as well.
    """
    v = np.asarray(velocity, dtype=float)
    speed = float(np.linalg.norm(v))
    t0 = cset.time
    next_bd = t0 + params.dt_bd
    for k in range(n_steps):
        if k:
            if wavelength is not None:
                advance_doppler(cset, v, dt, wavelength)
            geometry = geometry_at(t0 + k * dt) if geometry_at is not None else None
            guarded = evolve_parameters(cset, v, dt, params, geometry)
            # snap to the sampling grid so long runs do not accumulate rounding
            cset.time = t0 + k * dt
            # tolerance keeps float accumulation from skipping a boundary
            while cset.time >= next_bd - 1e-9 * params.dt_bd:
                if params.driver == "poisson":
                    rec = step_birth_death_poisson(cset, params, speed, rng)
                else:
                    rec = step_birth_death_markov(cset, params, rng)
                rec.guard_events = guarded
                guarded = 0
                if log is not None:
                    log.append(rec)
                next_bd += params.dt_bd
        yield cset


def run_birth_death(cset: ClusterSet, params: EvolutionParams, n_steps: int, speed: float, rng: np.random.Generator) -> EvolutionLog:
    """Run the birth-death driver alone for ``n_steps`` (no parameter drift)."""
    log = EvolutionLog()
    for _ in range(n_steps):
        cset.time += params.dt_bd
        if params.driver == "poisson":
            log.append(step_birth_death_poisson(cset, params, speed, rng))
        else:
            log.append(step_birth_death_markov(cset, params, rng))
    return log
