"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import STATIC_CDL, make_config, record_acceptance
from railchannel.analysis import (
    MEASURED_TRANSITION_MATRIX,
    fit_distribution,
    fit_markov,
    sample_markov_states,
    stationarity_regions,
)
from railchannel.cdl import get_table
from railchannel.cir import delay_to_frequency, k_weights, los_coefficient, ray_doppler_frequencies, render_snapshot, render_trace
from railchannel.cli import main
from railchannel.clusters import EOA, SmallScaleParams, generate_cluster_set
from railchannel.evolution import EvolutionParams, evolve, run_birth_death
from railchannel.geometry import SPEED_OF_LIGHT, AntennaPattern, link_geometry
from railchannel.analysis import smooth_pdps
from railchannel.pipeline import _delay_pdps, analyze_trace, recover_lsps, simulate_link, trace_window
from railchannel.scenario import LspSample

LSP = LspSample(ds_ns=76.0, asa_deg=6.0, esa_deg=1.6, asd_deg=6.0, esd_deg=1.6, k_db=0.66, sf_db=0.0)
SPEED = 80 / 3.6
CARRIER = 2160e6


def test_criterion_1_cdl_static_rms_ds():
    t0 = time.perf_counter()
    cfg = make_config(STATIC_CDL)
    res = simulate_link(cfg, 1)
    out = analyze_trace(res.trace, {"rmsds"}, 0.0, cfg.scenario.wavelength, dict(cfg.analysis))
    ds = float(out.tables["rmsds_ns_samples"].splitlines()[1])
    expected = get_table("5G-R-Rural").rms_delay_spread() * 1e9
    elapsed = time.perf_counter() - t0
    err = abs(ds / expected - 1)
    ok = err <= 0.02 and elapsed < 5
    record_acceptance(1, "CDL static RMS DS", ok, f"{ds:.2f} ns vs {expected:.2f} ns, err {err:.2%}, {elapsed:.1f} s")
    assert abs(expected - 154.2) < 0.1
    assert err <= 0.02
    assert elapsed < 5


def test_criterion_2_markov_fidelity():
    t0 = time.perf_counter()
    states = sample_markov_states(MEASURED_TRANSITION_MATRIX, 100_000, np.random.default_rng(2))
    fit = fit_markov(states)
    worst = float(np.max(np.abs(fit.matrix - MEASURED_TRANSITION_MATRIX)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.05 and elapsed < 5
    record_acceptance(2, "Markov refit", ok, f"max |p_hat - p| = {worst:.4f}, {elapsed:.1f} s")
    assert worst <= 0.05
    assert elapsed < 5


def test_criterion_3_birth_death_mean():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(n_clusters=20, rays_per_cluster=1), los=False)
    params = EvolutionParams(driver="poisson", lambda_r=0.12, n_expected=20, lifetime=None)
    assert params.lambda_g / params.lambda_r == pytest.approx(20)
    log = run_birth_death(cset, params, 100_000, SPEED, rng)
    mean = float(log.n_clusters.mean())
    elapsed = time.perf_counter() - t0
    ok = abs(mean / 20 - 1) <= 0.05 and elapsed < 30
    record_acceptance(3, "birth-death mean", ok, f"time-averaged N = {mean:.3f} vs 20, {elapsed:.1f} s")
    assert abs(mean / 20 - 1) <= 0.05
    assert elapsed < 30


def test_criterion_4_closed_loop_lsp_recovery():
    t0 = time.perf_counter()
    cfg = make_config()
    samples = recover_lsps(cfg, 2024, 200)
    refs = {"rmsds_ns": (4.33, 0.39), "asa_deg": (1.78, 1.45), "esa_deg": (0.48, 0.65)}
    errors = {}
    for key, (mu, sigma) in refs.items():
        fit = fit_distribution(samples[key], "lognormal")
        errors[key] = (fit.mu / mu - 1, fit.sigma / sigma - 1)
    lin = float(samples["rmsds_ns"].mean())
    lin_err = lin / 81.79 - 1
    elapsed = time.perf_counter() - t0
    worst = max(abs(e) for pair in errors.values() for e in pair)
    ok = worst <= 0.15 and abs(lin_err) <= 0.15 and elapsed < 300
    detail = ", ".join(f"{k} mu {e[0]:+.1%} sigma {e[1]:+.1%}" for k, e in errors.items())
    record_acceptance(4, "closed-loop LSP recovery", ok, f"{detail}, DS mean {lin:.1f} ns ({lin_err:+.1%}), {elapsed:.1f} s")
    for key, (e_mu, e_sigma) in errors.items():
        assert abs(e_mu) <= 0.15, key
        assert abs(e_sigma) <= 0.15, key
    assert abs(lin_err) <= 0.15
    assert elapsed < 300


def test_criterion_5_stationarity_consistency():
    speed = 22.22
    cfg = make_config({"scenario.ut_speed_mps": speed, "scenario.duration_s": 6.0})
    res = simulate_link(cfg, 5)
    window = trace_window(res.trace, speed, cfg.scenario.wavelength, cfg.analysis["stationarity_smoothing_lambda"])
    pdps = smooth_pdps(_delay_pdps(res.trace), window)
    regions = stationarity_regions(pdps, res.trace.interval, speed, 0.8)
    identity = all(r.distance == speed * r.duration for r in regions)
    covers = regions[0].start == 0 and regions[-1].stop == res.trace.n_snapshots - 1

    static = np.repeat(pdps[:1], 100, axis=0)
    flat = stationarity_regions(static, res.trace.interval, speed, 0.8)
    single = len(flat) == 1 and flat[0].start == 0 and flat[0].stop == 99

    durations = np.array([r.duration for r in regions if not r.censored])
    ok = identity and covers and single
    record_acceptance(
        5,
        "stationarity consistency",
        ok,
        f"{len(regions)} regions, mean dW {durations.mean():.2f} s, median {np.median(durations):.2f} s, "
        f"range {durations.min():.2f}-{durations.max():.2f} s (magnitudes reported only)",
    )
    assert identity
    assert covers
    assert single


@pytest.mark.parametrize("k_db", [0.0, 0.66, 10.0])
def test_criterion_6_k_combination_power(k_db):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    lsp = LspSample(ds_ns=76.0, asa_deg=6.0, esa_deg=1.6, asd_deg=6.0, esd_deg=1.6, k_db=k_db, sf_db=0.0)
    geometry = link_geometry((0.0, 0.0, 26.0), (-600.0, 30.0, 4.2), wavelength=SPEED_OF_LIGHT / CARRIER)
    cset = generate_cluster_set(lsp, rng, SmallScaleParams(), geometry)
    pattern = AntennaPattern()
    los = cset.los_cluster
    los_term = k_weights(lsp.k_linear)[1] * los_coefficient(
        geometry, pattern, pattern, np.zeros(3), 0.0, 0.0, (los.aoa, los.eoa, los.aod, los.eod)
    )
    idx = int(np.floor(los.delay * 10e6 + 0.5))
    p_los = p_nlos = 0.0
    for _ in range(10_000):
        for c in cset.nlos:
            c.ray_phases = np.pi - 2 * np.pi * rng.random(c.ray_phases.shape)
        taps = render_snapshot(cset, geometry, pattern, pattern, np.zeros(3), 10e6, 64)
        taps[idx] -= los_term
        p_los += float(np.sum(np.abs(los_term) ** 2))
        p_nlos += float(np.sum(np.abs(taps) ** 2))
    ratio = p_los / p_nlos
    err = abs(ratio / lsp.k_linear - 1)
    elapsed = time.perf_counter() - t0
    ok = err <= 0.02 and elapsed < 10
    record_acceptance(6, f"K combination at {k_db} dB", ok, f"LOS/NLOS {ratio:.4f} vs {lsp.k_linear:.4f}, err {err:.2%}, {elapsed:.1f} s")
    assert err <= 0.02
    assert elapsed < 10


def test_criterion_7_doppler_bound():
    t0 = time.perf_counter()
    wavelength = SPEED_OF_LIGHT / CARRIER
    f_max = SPEED / wavelength
    velocity = np.array([SPEED, 0.0, 0.0])
    geometry = link_geometry((0.0, 0.0, 26.0), (-600.0, 30.0, 4.2), wavelength=wavelength)

    # one ray aligned with the motion: observe the phase rate of the f = 0 bin
    rng = np.random.default_rng(7)
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(n_clusters=1, rays_per_cluster=1), geometry, los=False)
    ray = cset.clusters[0]
    ray.aoa, ray.eoa = 0.0, np.pi / 2
    ray.ray_offsets[:] = 0.0
    frozen = EvolutionParams(driver="poisson", lambda_r=0.0, lambda_g=0.0, lifetime=None)
    rate = 500.0
    pattern = AntennaPattern()
    stream = evolve(cset, frozen, 100, 1 / rate, velocity, rng, None, wavelength)
    trace = render_trace(stream, lambda t: geometry, pattern, pattern, velocity, 10e6, 64, 1 / rate)
    h0 = trace.data[:, 32, 0, 0]
    measured = float(np.mean(np.angle(h0[1:] / h0[:-1]))) * rate / (2 * np.pi)
    aligned_err = abs(measured / f_max - 1)

    # a full simulated link: no ray exceeds v / lambda at any snapshot
    cfg = make_config({"scenario.duration_s": 1.0})
    sc = cfg.scenario
    from railchannel.pipeline import initial_cluster_set

    cs, _ = initial_cluster_set(cfg, 11)
    peak = 0.0
    for snap in evolve(cs, cfg.evolution, sc.n_snapshots, sc.snapshot_interval, sc.velocity, rng, sc.link_geometry, sc.wavelength):
        peak = max(peak, float(np.max(np.abs(ray_doppler_frequencies(snap, sc.velocity, sc.wavelength)))))
    bound_ok = peak <= f_max * (1 + 1e-12)
    elapsed = time.perf_counter() - t0
    ok = aligned_err <= 1e-3 and abs(f_max - 160.1) <= 0.001 * 160.1 and bound_ok and elapsed < 10
    record_acceptance(
        7, "Doppler bound", ok, f"aligned ray {measured:.3f} Hz vs v/lambda {f_max:.3f} Hz, simulated peak {peak:.3f} Hz, {elapsed:.1f} s"
    )
    assert abs(f_max - 160.1) <= 0.001 * 160.1
    assert aligned_err <= 1e-3
    assert bound_ok
    assert elapsed < 10


def test_criterion_8_analysis_identities():
    t0 = time.perf_counter()
    suite = Path(__file__).with_name("test_identities.py")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-m", "identity", str(suite)],
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    ok = proc.returncode == 0 and elapsed < 30
    record_acceptance(8, "analysis identity suite", ok, f"{summary}, {elapsed:.1f} s")
    assert proc.returncode == 0, proc.stdout
    assert elapsed < 30


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg_path = tmp_path / "sim.ini"
    from conftest import config_text

    cfg_path.write_text(config_text({"scenario.duration_s": 0.5}))
    codes = [main(["simulate", "--config", str(cfg_path), "--seed", "42", "--out", str(tmp_path / name)]) for name in ("a", "b")]
    same = (tmp_path / "a" / "trace.cir").read_bytes() == (tmp_path / "b" / "trace.cir").read_bytes()
    elapsed = time.perf_counter() - t0
    ok = codes == [0, 0] and same and elapsed < 10
    record_acceptance(9, "determinism", ok, f"exit codes {codes}, identical trace.cir: {same}, {elapsed:.1f} s")
    assert codes == [0, 0]
    assert same
    assert elapsed < 10
