"""Small-scale parameter generation: cluster delays, powers, angles and rays."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .analysis.angular import rms_spread
from .analysis.delay import rms_delay_spread
from .geometry import SPEED_OF_LIGHT, LinkGeometry, RotationMatrix, wrap_azimuth
from .scenario import Lognormal, LspSample

# column order of every per-ray angle array
AOA, EOA, AOD, EOD = range(4)
ANGLE_NAMES = ("aoa", "eoa", "aod", "eod")
ZENITH_EPS = 1e-6


@dataclass(frozen=True)
class XprModel:
    """Cross-polarization ratio drawn as ``N(mu_db, sigma_db^2)`` in dB."""

    mu_db: float = 8.0
    sigma_db: float = 3.0

    def sample(self, rng: np.random.Generator, size=None):
        return 10.0 ** ((self.mu_db + self.sigma_db * rng.standard_normal(size)) / 10.0)


@dataclass(frozen=True)
class SmallScaleParams:
    """Knobs of the small-scale generator.

    Per-cluster spreads left as ``None`` default to the total spread divided by
    ``sqrt(n_clusters)``. ``calibrate`` rescales delays and angle offsets of a
    freshly generated set so its realized spreads equal the drawn LSPs.
    """

    n_clusters: int = 5
    rays_per_cluster: int = 20
    r_tau: float = 2.3
    zeta_db: float = 3.0
    xpr: XprModel = XprModel()
    c_asa: float | None = None
    c_esa: float | None = None
    c_asd: float | None = None
    c_esd: float | None = None
    offset_table: tuple[float, ...] | None = None
    calibrate: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.n_clusters <= 20:
            raise ValueError("n_clusters must be in 1..20")
        if self.rays_per_cluster < 1:
            raise ValueError("need at least one ray per cluster")
        if self.r_tau <= 1:
            raise ValueError("delay scaling r_tau must exceed 1")
        if self.zeta_db < 0:
            raise ValueError("per-cluster shadowing must be non-negative")

    def intra_spreads(self, lsp: LspSample) -> np.ndarray:
        """Per-cluster spreads (deg) in AOA, EOA, AOD, EOD order."""
        root = np.sqrt(self.n_clusters)
        totals = (lsp.asa_deg, lsp.esa_deg, lsp.asd_deg, lsp.esd_deg)
        given = (self.c_asa, self.c_esa, self.c_asd, self.c_esd)
        return np.array([g if g is not None else t / root for g, t in zip(given, totals)])


@dataclass
class Ray:
    """One ray. Fields may also hold equally shaped arrays (a bundle of rays)."""

    aod: float
    eod: float
    aoa: float
    eoa: float
    phases: np.ndarray  # (..., 4): theta-theta, theta-phi, phi-theta, phi-phi
    xpr: float


@dataclass
class ClusterState:
    """Live parameters of one cluster.

    ``delay`` is the normalized excess delay; ``abs_delay`` is the propagation
    delay used by the evolution equations. Ray angles are the cluster mean plus
    ``ray_offsets`` (radians, columns AOA, EOA, AOD, EOD), so rays follow the
    cluster when it moves.
    """

    id: int
    delay: float
    abs_delay: float
    power: float
    aoa: float
    eoa: float
    aod: float
    eod: float
    ray_offsets: np.ndarray
    ray_phases: np.ndarray
    ray_xpr: np.ndarray
    shadowing_db: float = 0.0
    doppler_phase: np.ndarray | None = None  # accumulated per-ray Doppler phase (rad)
    birth_time: float = 0.0
    lifetime: float = np.inf
    alive: bool = True
    los: bool = False
    rotation: RotationMatrix | None = None

    def __post_init__(self) -> None:
        if self.delay < 0 and not np.isclose(self.delay, 0.0, atol=1e-15):
            raise ValueError("cluster delay must be non-negative")
        if self.power < 0:
            raise ValueError("cluster power must be non-negative")
        if self.ray_offsets.ndim != 2 or self.ray_offsets.shape[1] != 4 or self.ray_offsets.shape[0] < 1:
            raise ValueError("ray_offsets must be (M, 4) with M >= 1")
        if self.doppler_phase is None:
            self.doppler_phase = np.zeros(self.ray_offsets.shape[0])

    @property
    def n_rays(self) -> int:
        return self.ray_offsets.shape[0]

    @property
    def mean_angles(self) -> np.ndarray:
        return np.array([self.aoa, self.eoa, self.aod, self.eod])

    def ray_angles(self) -> np.ndarray:
        """``(M, 4)`` absolute ray angles; azimuths wrapped, zeniths clipped to (0, pi)."""
        return _finish_ray_angles(self.mean_angles + self.ray_offsets)

    def ray_bundle(self) -> Ray:
        ang = self.ray_angles()
        return Ray(ang[:, AOD], ang[:, EOD], ang[:, AOA], ang[:, EOA], self.ray_phases, self.ray_xpr)

    @property
    def rays(self) -> list[Ray]:
        ang = self.ray_angles()
        return [
            Ray(a[AOD], a[EOD], a[AOA], a[EOA], self.ray_phases[m], float(self.ray_xpr[m]))
            for m, a in enumerate(ang)
        ]

    def age(self, now: float) -> float:
        return now - self.birth_time


def _finish_ray_angles(ang: np.ndarray) -> np.ndarray:
    ang[:, [AOA, AOD]] = wrap_azimuth(ang[:, [AOA, AOD]])
    ang[:, [EOA, EOD]] = np.clip(ang[:, [EOA, EOD]], ZENITH_EPS, np.pi - ZENITH_EPS)
    return ang


def stacked_ray_angles(clusters) -> np.ndarray:
    """Ray angles of several clusters stacked into one ``(sum M, 4)`` array."""
    means = np.array([[c.aoa, c.eoa, c.aod, c.eod] for c in clusters])
    counts = [c.n_rays for c in clusters]
    return _finish_ray_angles(np.repeat(means, counts, axis=0) + np.vstack([c.ray_offsets for c in clusters]))


@dataclass
class ClusterSet:
    """The clusters of one link at one time, plus what is needed to grow it.

    With a LOS cluster present its power is ``K/(K+1)`` and the NLOS powers sum
    to ``1/(K+1)``; without one the NLOS powers sum to one.
    """

    clusters: list[ClusterState]
    time: float
    lsp: LspSample
    params: SmallScaleParams = field(default_factory=SmallScaleParams)
    intra_spreads_deg: np.ndarray = field(default_factory=lambda: np.zeros(4))
    lifetime_dist: Lognormal | None = None
    next_id: int = 0
    # reference direction (AOA, EOA, AOD, EOD) and absolute delay for births
    los_angles: np.ndarray = field(default_factory=lambda: np.array([0.0, np.pi / 2, np.pi, np.pi / 2]))
    los_abs_delay: float = 0.0
    bd_state: int = 0

    @property
    def alive(self) -> list[ClusterState]:
        return [c for c in self.clusters if c.alive]

    @property
    def los_cluster(self) -> ClusterState | None:
        return next((c for c in self.clusters if c.los and c.alive), None)

    @property
    def nlos(self) -> list[ClusterState]:
        return [c for c in self.clusters if c.alive and not c.los]

    @property
    def k_factor(self) -> float:
        """Linear Rice factor implied by the LOS share (0 without a LOS cluster)."""
        los = self.los_cluster
        if los is None:
            return 0.0
        rest = sum(c.power for c in self.nlos)
        return np.inf if rest == 0 else los.power / rest

    @property
    def nlos_share(self) -> float:
        """Total NLOS power: ``1/(K+1)`` with a LOS cluster (K from the LSPs), else 1."""
        return 1.0 if self.los_cluster is None else 1.0 / (self.lsp.k_linear + 1.0)

    def __len__(self) -> int:
        return len(self.alive)

    def take_id(self) -> int:
        cid = self.next_id
        self.next_id += 1
        return cid

    def mpc_arrays(self) -> dict[str, np.ndarray]:
        """Per-ray powers, delays and angles (the ground-truth MPC set)."""
        powers, delays, angles, labels = [], [], [], []
        for c in self.alive:
            m = c.n_rays
            powers.append(np.full(m, c.power / m))
            delays.append(np.full(m, c.delay))
            angles.append(c.ray_angles())
            labels.append(np.full(m, c.id))
        if not powers:
            return {"power": np.empty(0), "delay": np.empty(0), "angles": np.empty((0, 4)), "cluster": np.empty(0, int)}
        return {
            "power": np.concatenate(powers),
            "delay": np.concatenate(delays),
            "angles": np.vstack(angles),
            "cluster": np.concatenate(labels),
        }

    def spawn_cluster(self, rng: np.random.Generator, los_angles=None, reference_abs_delay: float | None = None) -> ClusterState:
        """Draw one new NLOS cluster from the link's LSPs.

        The new cluster's delay is an exponential draw added to
        ``reference_abs_delay`` (default: the stored LOS delay). Its mean
        angles scatter around ``los_angles`` (default: the stored LOS
        direction). Its power is set by :meth:`renormalize_powers`.
        """
        p = self.params
        if los_angles is None:
            los_angles = self.los_angles
        if reference_abs_delay is None:
            reference_abs_delay = self.los_abs_delay
        tau = float(-p.r_tau * self.lsp.ds * np.log(1.0 - rng.random()))
        z = float(p.zeta_db * rng.standard_normal()) if p.zeta_db > 0 else 0.0
        spreads = np.array([self.lsp.asa_deg, self.lsp.esa_deg, self.lsp.asd_deg, self.lsp.esd_deg])
        mean = _draw_angle_offsets(1, spreads, rng)[0] + np.asarray(los_angles, dtype=float)
        rays = spawn_rays(p.rays_per_cluster, self.intra_spreads_deg, p.xpr, rng, p.offset_table)
        lifetime = float(self.lifetime_dist.sample(rng)) if self.lifetime_dist is not None else np.inf
        return ClusterState(
            id=self.take_id(),
            delay=0.0,
            abs_delay=reference_abs_delay + tau,
            power=0.0,
            aoa=float(wrap_azimuth(mean[AOA])),
            eoa=float(np.clip(mean[EOA], ZENITH_EPS, np.pi - ZENITH_EPS)),
            aod=float(wrap_azimuth(mean[AOD])),
            eod=float(np.clip(mean[EOD], ZENITH_EPS, np.pi - ZENITH_EPS)),
            ray_offsets=rays["offsets"],
            ray_phases=rays["phases"],
            ray_xpr=rays["xpr"],
            shadowing_db=z,
            birth_time=self.time,
            lifetime=lifetime,
        )

    def normalize_delays(self) -> None:
        """Set every normalized delay to its absolute delay minus the smallest one."""
        alive = self.alive
        if alive:
            ref = min(c.abs_delay for c in alive)
            for c in alive:
                c.delay = c.abs_delay - ref

    def renormalize_powers(self) -> None:
        """Recompute NLOS powers from their delays and stored shadowing, then normalize."""
        nlos = self.nlos
        share = self.nlos_share
        if nlos:
            raw = cluster_power_profile(
                np.array([c.delay for c in nlos]),
                self.lsp.ds,
                self.params.r_tau,
                np.array([c.shadowing_db for c in nlos]),
            )
            raw = raw / raw.sum()
            for c, p in zip(nlos, raw):
                c.power = float(p * share)
        los = self.los_cluster
        if los is not None:
            los.power = 1.0 - share if nlos else 1.0


def generate_delays(n: int, ds: float, r_tau: float, rng: np.random.Generator) -> np.ndarray:
    """Exponential delays ``-r_tau * DS * ln(u)``, sorted and shifted so the first is 0."""
    if n < 1:
        raise ValueError("need at least one cluster")
    if ds <= 0:
        raise ValueError("delay spread must be positive")
    if r_tau <= 1:
        raise ValueError("delay scaling r_tau must exceed 1")
    # 1 - u lies in (0, 1], keeping the log finite
    raw = -r_tau * ds * np.log(1.0 - rng.random(n))
    raw.sort()
    return raw - raw[0]


def cluster_power_profile(delays, ds: float, r_tau: float, shadowing_db) -> np.ndarray:
    """Un-normalized cluster powers ``exp(-tau (r_tau - 1) / (r_tau DS)) 10^(-Z/10)``."""
    delays = np.asarray(delays, dtype=float)
    return np.exp(-delays * (r_tau - 1.0) / (r_tau * ds)) * 10.0 ** (-np.asarray(shadowing_db, dtype=float) / 10.0)


def generate_powers(delays, ds: float, r_tau: float, zeta_db: float, rng: np.random.Generator, *, return_shadowing: bool = False):
    """Normalized cluster powers with per-cluster lognormal shadowing."""
    delays = np.asarray(delays, dtype=float)
    z = zeta_db * rng.standard_normal(delays.shape) if zeta_db > 0 else np.zeros(delays.shape)
    raw = cluster_power_profile(delays, ds, r_tau, z)
    powers = raw / raw.sum()
    return (powers, z) if return_shadowing else powers


def _draw_angle_offsets(n: int, spreads_deg, rng: np.random.Generator) -> np.ndarray:
    """``(n, 4)`` raw offsets: Gaussian in azimuth, Laplacian in zenith, with RMS ``spreads_deg``."""
    s = np.deg2rad(np.asarray(spreads_deg, dtype=float))
    out = np.empty((n, 4))
    out[:, AOA] = s[AOA] * rng.standard_normal(n)
    out[:, EOA] = s[EOA] / np.sqrt(2.0) * rng.laplace(size=n)
    out[:, AOD] = s[AOD] * rng.standard_normal(n)
    out[:, EOD] = s[EOD] / np.sqrt(2.0) * rng.laplace(size=n)
    return out


def _linear_rescale(offsets, weights, target):
    current = rms_spread(offsets, weights)
    return offsets if current == 0 else offsets * (target / current)


def generate_cluster_angles(
    n: int,
    spreads_deg,
    los_angles,
    rng: np.random.Generator,
    powers=None,
    k_db: float | None = None,
) -> np.ndarray:
    """Per-cluster mean angles ``(n, 4)`` around the LOS direction.

    ``spreads_deg`` and ``los_angles`` are in AOA, EOA, AOD, EOD order. When
    ``powers`` is given the offsets are rescaled so the power-weighted RMS
    spread of the set (including a LOS component of share ``K/(K+1)`` when
    ``k_db`` is given) equals the target.
    """
    spreads = np.asarray(spreads_deg, dtype=float)
    if np.any(spreads < 0):
        raise ValueError("angular spreads must be non-negative")
    offsets = _draw_angle_offsets(n, spreads, rng)
    if powers is not None:
        w = np.asarray(powers, dtype=float)
        w = w / w.sum()
        if k_db is not None:
            k = 10.0 ** (k_db / 10.0)
            w = np.concatenate([w / (k + 1.0), [k / (k + 1.0)]])
        for dim in range(4):
            col = offsets[:, dim] if k_db is None else np.concatenate([offsets[:, dim], [0.0]])
            col = _linear_rescale(col, w, np.deg2rad(spreads[dim]))
            offsets[:, dim] = col[:n]
    angles = offsets + np.asarray(los_angles, dtype=float)
    angles[:, AOA] = wrap_azimuth(angles[:, AOA])
    angles[:, AOD] = wrap_azimuth(angles[:, AOD])
    angles[:, EOA] = np.clip(angles[:, EOA], ZENITH_EPS, np.pi - ZENITH_EPS)
    angles[:, EOD] = np.clip(angles[:, EOD], ZENITH_EPS, np.pi - ZENITH_EPS)
    return angles


@lru_cache(maxsize=64)
def _offset_table(m: int) -> np.ndarray:
    q = (np.arange(m) + 0.5) / m
    table = stats.laplace.ppf(q, scale=1.0 / np.sqrt(2.0))
    # enforce exact symmetry so the offsets sum to zero
    table = 0.5 * (table - table[::-1])
    table.flags.writeable = False
    return table


def laplacian_offset_table(m: int) -> np.ndarray:
    """Equal-probability quantile midpoints of a unit-RMS Laplacian."""
    if m < 1:
        raise ValueError("need at least one ray")
    return _offset_table(int(m)).copy()


def spawn_rays(
    m: int,
    intra_spreads_deg,
    xpr: XprModel,
    rng: np.random.Generator,
    offset_table=None,
) -> dict[str, np.ndarray]:
    """Ray offsets ``(m, 4)`` (radians), phases ``(m, 4)`` and XPRs ``(m,)``.

    Each angle dimension gets its own random permutation of the offset table
    (random coupling). Phases are i.i.d. uniform on ``(-pi, pi]``.
    """
    table = laplacian_offset_table(m) if offset_table is None else np.asarray(offset_table, dtype=float)
    if table.shape != (m,):
        raise ValueError("offset table length must equal the number of rays")
    spreads = np.deg2rad(np.asarray(intra_spreads_deg, dtype=float))
    offsets = np.stack([table[rng.permutation(m)] * spreads[d] for d in range(4)], axis=-1)
    phases = np.pi - 2.0 * np.pi * rng.random((m, 4))
    return {"offsets": offsets, "phases": phases, "xpr": np.atleast_1d(xpr.sample(rng, m))}


def _azimuth_scale(centre, offsets, weights, target) -> float:
    """Scale for azimuth offsets giving circular spread ``target`` (radians).

    Circular spread saturates, so an unreachable target returns the scale
    with the closest spread found.
    """
    def spread(scale):
        return rms_spread(centre + scale * offsets, weights, circular=True)

    lin = rms_spread(offsets, weights)
    if lin == 0 or target == 0:
        return 0.0 if target == 0 else 1.0
    s0 = target / lin
    if abs(spread(s0) - target) <= 1e-12 * max(target, 1.0):
        return s0
    hi, best, best_err = s0, s0, abs(spread(s0) - target)
    for _ in range(40):
        val = spread(hi)
        if abs(val - target) < best_err:
            best, best_err = hi, abs(val - target)
        if val >= target:
            return float(optimize.brentq(lambda x: spread(x) - target, 0.0, hi, xtol=1e-14, rtol=1e-12))
        hi *= 1.25
    return best


def _linear_scale(offsets, weights, target) -> float:
    current = rms_spread(offsets, weights)
    return 1.0 if current == 0 else target / current


def calibrate_spreads(cset: ClusterSet) -> None:
    """Rescale delays and angle offsets so the set's ray-level spreads equal its LSPs.

    Delays are scaled about zero; the per-cluster shadowing term absorbs the
    change so the power profile (and every later power update) is unchanged.
    Angle offsets are scaled about the LOS direction (the first cluster's mean
    when there is no LOS cluster), one factor per angle dimension.
    """
    clusters = cset.alive
    mpc = cset.mpc_arrays()
    w = mpc["power"]
    if w.size < 2:
        return
    ds_now = rms_delay_spread(w, mpc["delay"])
    if ds_now > 0:
        scale = cset.lsp.ds / ds_now
        a = (cset.params.r_tau - 1.0) / (cset.params.r_tau * cset.lsp.ds)
        for c in clusters:
            new = c.delay * scale
            if not c.los:
                c.shadowing_db -= (new - c.delay) * a * 10.0 / np.log(10.0)
            c.abs_delay += new - c.delay
            c.delay = new

    los = cset.los_cluster
    ref = (los if los is not None else clusters[0]).mean_angles
    targets = np.deg2rad([cset.lsp.asa_deg, cset.lsp.esa_deg, cset.lsp.asd_deg, cset.lsp.esd_deg])
    mean_off = np.array([_mean_offset(c, ref) for c in clusters])
    offs = np.vstack([mean_off[i] + c.ray_offsets for i, c in enumerate(clusters)])
    scales = np.empty(4)
    for dim in (AOA, AOD):
        scales[dim] = _azimuth_scale(ref[dim], offs[:, dim], w, targets[dim])
    for dim in (EOA, EOD):
        scales[dim] = _linear_scale(offs[:, dim], w, targets[dim])
    for c, off in zip(clusters, mean_off):
        c.ray_offsets = c.ray_offsets * scales
        _set_mean(c, ref + off * scales)


def _mean_offset(c: ClusterState, ref) -> np.ndarray:
    d = c.mean_angles - ref
    d[AOA] = np.angle(np.exp(1j * d[AOA]))
    d[AOD] = np.angle(np.exp(1j * d[AOD]))
    return d


def _set_mean(c: ClusterState, mean) -> None:
    c.aoa = float(wrap_azimuth(mean[AOA]))
    c.aod = float(wrap_azimuth(mean[AOD]))
    c.eoa = float(np.clip(mean[EOA], ZENITH_EPS, np.pi - ZENITH_EPS))
    c.eod = float(np.clip(mean[EOD], ZENITH_EPS, np.pi - ZENITH_EPS))


def los_cluster_state(cid: int, angles, abs_delay: float, power: float, time: float = 0.0) -> ClusterState:
    """Single-ray, persistent LOS cluster at delay 0."""
    a = np.asarray(angles, dtype=float)
    return ClusterState(
        id=cid,
        delay=0.0,
        abs_delay=abs_delay,
        power=power,
        aoa=float(a[AOA]),
        eoa=float(a[EOA]),
        aod=float(a[AOD]),
        eod=float(a[EOD]),
        ray_offsets=np.zeros((1, 4)),
        ray_phases=np.zeros((1, 4)),
        ray_xpr=np.array([np.inf]),
        birth_time=time,
        los=True,
    )


def geometry_angles(geometry: LinkGeometry) -> np.ndarray:
    """LOS angles of a link in AOA, EOA, AOD, EOD order."""
    return np.array([geometry.los_aoa, geometry.los_eoa, geometry.los_aod, geometry.los_eod])


def generate_cluster_set(
    lsp: LspSample,
    rng: np.random.Generator,
    params: SmallScaleParams | None = None,
    geometry: LinkGeometry | None = None,
    los: bool = True,
    time: float = 0.0,
    lifetime_dist: Lognormal | None = None,
) -> ClusterSet:
    """Initial cluster set of one link.

    NLOS clusters get exponential delays, shadowed exponential powers and
    angles scattered around the LOS direction of ``geometry`` (broadside when
    omitted). With ``los`` a single-ray LOS cluster carrying ``K/(K+1)`` of the
    power is added at delay 0.
    """
    p = params or SmallScaleParams()
    if geometry is not None:
        ref_angles = geometry_angles(geometry)
        ref_delay = geometry.d_3d / SPEED_OF_LIGHT
    else:
        ref_angles = np.array([0.0, np.pi / 2, np.pi, np.pi / 2])
        ref_delay = 0.0
    spreads = np.array([lsp.asa_deg, lsp.esa_deg, lsp.asd_deg, lsp.esd_deg])
    cset = ClusterSet(
        clusters=[],
        time=time,
        lsp=lsp,
        params=p,
        intra_spreads_deg=p.intra_spreads(lsp),
        lifetime_dist=lifetime_dist,
        los_angles=ref_angles,
        los_abs_delay=ref_delay,
    )
    delays = generate_delays(p.n_clusters, lsp.ds, p.r_tau, rng)
    powers, z = generate_powers(delays, lsp.ds, p.r_tau, p.zeta_db, rng, return_shadowing=True)
    angles = generate_cluster_angles(p.n_clusters, spreads, ref_angles, rng, powers, lsp.k_db if los else None)
    share = 1.0 / (lsp.k_linear + 1.0) if los else 1.0
    if los:
        cset.clusters.append(los_cluster_state(cset.take_id(), ref_angles, ref_delay, 1.0 - share, time))
    for n in range(p.n_clusters):
        rays = spawn_rays(p.rays_per_cluster, cset.intra_spreads_deg, p.xpr, rng, p.offset_table)
        lifetime = float(lifetime_dist.sample(rng)) if lifetime_dist is not None else np.inf
        cset.clusters.append(
            ClusterState(
                id=cset.take_id(),
                delay=float(delays[n]),
                abs_delay=ref_delay + float(delays[n]),
                power=float(powers[n] * share),
                aoa=float(angles[n, AOA]),
                eoa=float(angles[n, EOA]),
                aod=float(angles[n, AOD]),
                eod=float(angles[n, EOD]),
                ray_offsets=rays["offsets"],
                ray_phases=rays["phases"],
                ray_xpr=rays["xpr"],
                shadowing_db=float(z[n]),
                birth_time=time,
                lifetime=lifetime,
            )
        )
    if p.calibrate:
        calibrate_spreads(cset)
    # delays and powers in the exact form later updates recompute, so a static link stays bit-identical
    cset.normalize_delays()
    cset.renormalize_powers()
    return cset
