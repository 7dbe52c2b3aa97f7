"""KPowerMeans clustering of MPCs, MCD-based cluster tracking and lifetime statistics.

MCD between an MPC and a centroid is evaluated in an embedding where it is a
plain Euclidean distance: ``z = (u / 2, s * tau)`` with ``u`` the arrival unit
vector and ``s = xi * tau_std / delta_tau_max**2``. The centroid is the
power-weighted mean of the embedded members, which makes every assignment and
update step non-increasing in the power-weighted squared-MCD cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import direction_angles, direction_unit_vector
from .angular import delay_normalization, mcd
from .fitting import FitResult, fit_distribution


def _embed(delay, aoa, eoa, scale: float) -> np.ndarray:
    u = direction_unit_vector(np.asarray(eoa, dtype=float), np.asarray(aoa, dtype=float))
    return np.column_stack([0.5 * u.reshape(-1, 3), scale * np.asarray(delay, dtype=float).ravel()])


def delay_scale(delays, xi: float = 1.0) -> float:
    tau_std, tau_max = delay_normalization(delays)
    return 0.0 if tau_max <= 0 else xi * tau_std / tau_max**2


@dataclass
class KPowerMeansResult:
    labels: np.ndarray
    centroids: np.ndarray  # (K, 3): delay, aoa, eoa
    centroid_powers: np.ndarray
    cost_history: list[float]
    n_iter: int

    @property
    def cost(self) -> float:
        return self.cost_history[-1]


def _weighted_sq_dist(z: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((z[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def _seed(z: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Power-weighted k-means++ seeding; returns member indices."""
    n = len(z)
    chosen = [int(rng.choice(n, p=w / w.sum()))]
    d2 = ((z - z[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        score = w * d2
        score[chosen] = 0.0
        if score.sum() > 0:
            nxt = int(rng.choice(n, p=score / score.sum()))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((z - z[nxt]) ** 2).sum(axis=1))
    return np.array(chosen)


def _centroids(zc: np.ndarray, w: np.ndarray, delay: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``(K, 3)`` centroid delay (power-weighted mean) and direction of the mean unit vector."""
    out = np.empty((len(zc), 3))
    for i, row in enumerate(zc):
        u = row[:3]
        if np.linalg.norm(u) > 0:
            ang = direction_angles(u)
            out[i, 1], out[i, 2] = ang.azimuth, ang.zenith
        else:
            out[i, 1], out[i, 2] = 0.0, np.pi / 2
        m = labels == i
        out[i, 0] = np.sum(w[m] * delay[m]) / w[m].sum() if w[m].sum() > 0 else np.nan
    return out


def kpowermeans(
    power,
    delay,
    aoa,
    eoa,
    k: int,
    rng: np.random.Generator,
    xi: float = 1.0,
    max_iter: int = 100,
) -> KPowerMeansResult:
    """Cluster one snapshot's MPCs into ``k`` groups.

    Iterates assignment by MCD and power-weighted centroid update until the
    labels stop changing or ``max_iter`` is reached. ``cost_history`` holds
    the power-weighted squared-MCD cost after the seeding step and after every
    update, and is non-increasing.
    """
    w = np.asarray(power, dtype=float).ravel()
    delay = np.asarray(delay, dtype=float).ravel()
    n = w.size
    if k < 1 or k > n:
        raise ValueError(f"K={k} must lie in 1..{n} (number of MPCs)")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("MPC powers must be non-negative with a positive total")
    scale = delay_scale(delay, xi)
    z = _embed(delay, aoa, eoa, scale)
    centres = z[_seed(z, w, k, rng)]
    d2 = _weighted_sq_dist(z, centres)
    labels = np.argmin(d2, axis=1)
    history = [float(np.sum(w * d2[np.arange(n), labels]))]
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            mask = labels == j
            wm = w[mask]
            if wm.sum() > 0:
                centres[j] = (wm[:, None] * z[mask]).sum(axis=0) / wm.sum()
        d2 = _weighted_sq_dist(z, centres)
        # keep the current label on ties so the loop terminates
        best = np.argmin(d2, axis=1)
        keep = d2[np.arange(n), labels] <= d2[np.arange(n), best]
        new_labels = np.where(keep, labels, best)
        history.append(float(np.sum(w * d2[np.arange(n), new_labels])))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    cpow = np.array([w[labels == j].sum() for j in range(k)])
    return KPowerMeansResult(labels, _centroids(centres, w, delay, labels), cpow, history, it)


def select_k(power, delay, aoa, eoa, k_max: int, rng: np.random.Generator, xi: float = 1.0) -> tuple[int, np.ndarray]:
    """Elbow of the cost curve over K = 1..k_max (largest distance below the chord)."""
    n = np.asarray(power).size
    k_max = max(1, min(k_max, n))
    costs = np.array([kpowermeans(power, delay, aoa, eoa, k, rng, xi).cost for k in range(1, k_max + 1)])
    if k_max <= 2 or costs[0] <= costs[-1]:
        return (k_max if k_max <= 2 and costs[-1] < costs[0] else 1), costs
    ks = np.arange(1, k_max + 1)
    chord = costs[0] + (costs[-1] - costs[0]) * (ks - 1) / (k_max - 1)
    return int(ks[np.argmax(chord - costs)]), costs


@dataclass
class ClusterTrack:
    track_id: int
    birth: int
    death: int
    centroids: list[np.ndarray] = field(default_factory=list)  # per snapshot: delay, aoa, eoa
    members: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.death < self.birth:
            raise ValueError("track death precedes its birth")

    @property
    def n_snapshots(self) -> int:
        return self.death - self.birth + 1

    def lifetime(self, interval: float) -> float:
        return self.n_snapshots * interval


def track_clusters(centroids_per_snapshot, threshold: float = 0.06, xi: float = 1.0, members_per_snapshot=None) -> list[ClusterTrack]:
    """Greedy nearest-MCD tracking across consecutive snapshots.

    ``centroids_per_snapshot`` is a sequence of ``(n_k, 3)`` arrays (delay,
    AOA, EOA). The delay normalization of the MCD is pooled over both
    snapshots of each pair.
    """
    tracks: list[ClusterTrack] = []
    active: list[ClusterTrack] = []
    for k, cents in enumerate(centroids_per_snapshot):
        cents = np.asarray(cents, dtype=float).reshape(-1, 3)
        members = members_per_snapshot[k] if members_per_snapshot is not None else [None] * len(cents)
        prev = np.array([t.centroids[-1] for t in active]).reshape(-1, 3)
        matched_new: dict[int, ClusterTrack] = {}
        if len(prev) and len(cents):
            tau_std, tau_max = delay_normalization(np.concatenate([prev[:, 0], cents[:, 0]]))
            dist = mcd(
                (prev[:, None, 0], prev[:, None, 1], prev[:, None, 2]),
                (cents[None, :, 0], cents[None, :, 1], cents[None, :, 2]),
                xi,
                tau_std,
                tau_max if tau_max > 0 else 1.0,
            )
            dist = np.array(dist, dtype=float).reshape(len(prev), len(cents))
            while True:
                i, j = np.unravel_index(np.argmin(dist), dist.shape)
                if not dist[i, j] <= threshold:
                    break
                matched_new[int(j)] = active[int(i)]
                dist[i, :] = np.inf
                dist[:, j] = np.inf
        survivors = []
        for j, c in enumerate(cents):
            tr = matched_new.get(j)
            if tr is None:
                tr = ClusterTrack(len(tracks), k, k)
                tracks.append(tr)
            tr.death = k
            tr.centroids.append(c)
            tr.members.append(members[j])
            survivors.append(tr)
        active = survivors
    return tracks


def occupancy(tracks: list[ClusterTrack], n_snapshots: int) -> np.ndarray:
    """Number of live tracks at every snapshot."""
    counts = np.zeros(n_snapshots, dtype=int)
    for t in tracks:
        counts[t.birth : t.death + 1] += 1
    return counts


def lifetime_stats(
    tracks: list[ClusterTrack],
    interval: float,
    n_snapshots: int | None = None,
    window: int = 1,
) -> tuple[FitResult, dict[int, float]]:
    """Lognormal fit of track lifetimes and the histogram of cluster counts.

    The histogram maps "number of distinct tracks alive in a window of
    ``window`` snapshots" to its relative frequency over non-overlapping
    windows.
    """
    if len(tracks) < 2:
        raise ValueError("need at least two tracks")
    fit = fit_distribution([t.lifetime(interval) for t in tracks], "lognormal")
    n = n_snapshots if n_snapshots is not None else max(t.death for t in tracks) + 1
    counts = []
    for start in range(0, n, window):
        stop = min(start + window, n) - 1
        counts.append(sum(1 for t in tracks if t.birth <= stop and t.death >= start))
    values, freq = np.unique(counts, return_counts=True)
    return fit, {int(v): float(f) / len(counts) for v, f in zip(values, freq)}


def bd_events_from_tracks(tracks: list[ClusterTrack], n_snapshots: int, snapshots_per_step: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Births and deaths per birth-death step.

    A birth is a track starting after snapshot 0; a death is a track ending
    before the last snapshot (counted at the first snapshot it is missing).
    """
    n_steps = (n_snapshots - 1) // snapshots_per_step
    births = np.zeros(n_steps, dtype=int)
    deaths = np.zeros(n_steps, dtype=int)
    for t in tracks:
        if t.birth > 0:
            s = (t.birth - 1) // snapshots_per_step
            if s < n_steps:
                births[s] += 1
        if t.death < n_snapshots - 1:
            s = t.death // snapshots_per_step
            if s < n_steps:
                deaths[s] += 1
    return births, deaths
