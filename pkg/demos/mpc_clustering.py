"""Cluster the ground-truth MPCs of a simulated link and fit the evolution statistics.

KPowerMeans picks K per snapshot from the cost elbow; clusters are then
chained across snapshots by MCD and the chains give lifetimes and the
birth-death transition matrix. Tracking the true cluster centroids is shown
alongside: when two clusters nearly coincide the elbow alternates between
merging and splitting them, and every flip ends one track and opens another.
"""

import numpy as np

from railchannel.analysis import MEASURED_TRANSITION_MATRIX
from railchannel.analysis.clustering import bd_events_from_tracks, lifetime_stats, track_clusters
from railchannel.analysis.fitting import fit_markov
from railchannel.config import load_config, substream
from railchannel.pipeline import cluster_mpcs, simulate_link

cfg = load_config("configs/rural_link.ini")
res = simulate_link(cfg, seed=11)
mpcs = res.mpcs
print(f"{len(mpcs)} MPCs over {mpcs.snapshots.size} snapshots")

labels, centroids = cluster_mpcs(mpcs, substream(11, "analysis"), cfg.analysis["k_max"], cfg.analysis["xi"])
ks = [len(c) for c in centroids]
print(f"clusters per snapshot: min {min(ks)}, median {int(np.median(ks))}, max {max(ks)}")



def true_centroids(snapshot):
    m = mpcs.select(snapshot)
    rows = []
    for label in np.unique(m.cluster_label):
        k = m.cluster_label == label
        w = m.power[k]
        rows.append([np.sum(w * m.delay[k]) / w.sum(), np.angle(np.sum(w * np.exp(1j * m.aoa[k]))), np.sum(w * m.eoa[k]) / w.sum()])
    return np.array(rows)


truth = [true_centroids(s) for s in mpcs.snapshots]
print(f"true clusters per snapshot: min {min(map(len, truth))}, max {max(map(len, truth))}")

for name, cents in (("ground truth", truth), ("KPowerMeans", centroids)):
    tracks = track_clusters(cents, cfg.analysis["mcd_threshold"], cfg.analysis["xi"])
    fit, hist = lifetime_stats(tracks, res.trace.interval, len(cents))
    print(f"{name:12s}: {len(tracks):3d} tracks, lifetime lognormal mu {fit.mu:5.2f} sigma {fit.sigma:.2f} (mean {fit.linear_mean:.2f} s)")

per_step = round(cfg.evolution.dt_bd / res.trace.interval)
births, deaths = bd_events_from_tracks(track_clusters(truth, cfg.analysis["mcd_threshold"]), len(truth), per_step)
mf = fit_markov(births=births, deaths=deaths)
np.set_printoptions(precision=2, suppress=True)
print(f"transition matrix from the ground-truth tracks ({births.size} steps, so rows are noisy):")
print(mf.matrix)
print("matrix driving the simulation:")
print(MEASURED_TRANSITION_MATRIX)
