"""One 2 s link at 80 km/h with the Markov birth-death driver.

Prints the birth-death activity, the Doppler bound and the stationary
regions found from the smoothed PDPs.
"""

import numpy as np

from railchannel.analysis.delay import smooth_pdps, stationarity_regions
from railchannel.cir import ray_doppler_frequencies
from railchannel.config import load_config
from railchannel.evolution import evolve
from railchannel.pipeline import _delay_pdps, initial_cluster_set, simulate_link, trace_window

cfg = load_config("configs/rural_link.ini")
sc = cfg.scenario
res = simulate_link(cfg, seed=7)
print(f"LSPs: DS {res.lsp.ds_ns:.1f} ns, ASA {res.lsp.asa_deg:.1f} deg, ESA {res.lsp.esa_deg:.2f} deg, K {res.lsp.k_db:.2f} dB")

states = np.array([r.state for r in res.log.records])
births = sum(len(r.births) for r in res.log.records)
deaths = sum(len(r.deaths) for r in res.log.records)
print(f"{len(states)} birth-death steps: {births} births, {deaths} deaths, state counts {np.bincount(states, minlength=4).tolist()}")
print(f"clusters alive per step: {[r.n_clusters for r in res.log.records]}")

f_max = sc.ut_speed / sc.wavelength
cset, _ = initial_cluster_set(cfg, 7)
rng = np.random.default_rng(0)
peak = max(
    np.abs(ray_doppler_frequencies(s, sc.velocity, sc.wavelength)).max()
    for s in evolve(cset, cfg.evolution, sc.n_snapshots, sc.snapshot_interval, sc.velocity, rng, sc.link_geometry, sc.wavelength)
)
print(f"Doppler: v/lambda = {f_max:.2f} Hz, largest ray shift {peak:.2f} Hz")

window = trace_window(res.trace, sc.ut_speed, sc.wavelength, cfg.analysis["stationarity_smoothing_lambda"])
regions = stationarity_regions(smooth_pdps(_delay_pdps(res.trace), window), res.trace.interval, sc.ut_speed, cfg.analysis["tpcc_threshold"])
for r in regions:
    print(f"  stationary snapshots {r.start:3d}-{r.stop:3d}: {r.duration:.2f} s, {r.distance:5.2f} m{' (censored)' if r.censored else ''}")
