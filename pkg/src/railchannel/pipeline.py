"""End-to-end orchestration: simulate a link, analyze traces / MPC files, validate against references."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis.angular import angular_spread
from .analysis.clustering import bd_events_from_tracks, kpowermeans, lifetime_stats, select_k, track_clusters
from .analysis.delay import (
    InfiniteKFactorError,
    Pdp,
    apdp,
    estimate_noise_floor_db,
    extract_large_scale,
    fit_path_loss,
    instantaneous_pdp,
    rice_k_factor,
    rms_delay_spread,
    smooth_pdps,
    stationarity_per_anchor,
    stationarity_regions,
    tpcc_matrix,
    window_snapshots,
)
from .analysis.fitting import cdf_table, fit_distribution, fit_markov
from .analysis.records import MpcRecord
from .cdl import instantiate
from .cir import CirTrace, render_trace
from .clusters import generate_cluster_set
from .config import SimConfig, substream
from .evolution import EvolutionLog, evolve
from .geometry import elevation_to_zenith
from .scenario import PropagationCondition, path_loss_db, sample_lsps


@dataclass
class SimulationResult:
    trace: CirTrace
    log: EvolutionLog
    mpcs: MpcRecord
    geometry: list[dict]
    lsp: object


def initial_cluster_set(cfg: SimConfig, seed: int, link: int = 0):
    """LSP draw and initial clusters of link ``link`` (CDL table when configured)."""
    sc = cfg.scenario
    geometry = sc.link_geometry(0.0)
    rng = substream(seed, f"clusters/{link}")
    if cfg.cdl is not None:
        table = cfg.cdl
        if cfg.elevation_convention != "zenith":
            table = replace(table, eoa_deg=tuple(np.rad2deg(elevation_to_zenith(np.deg2rad(table.eoa_deg), cfg.elevation_convention))))
        cset = instantiate(table, geometry, rng, cfg.cdl_rays)
        return cset, cset.lsp
    lsp = sample_lsps(sc.lsps, substream(seed, f"lsp/{link}"))
    cset = generate_cluster_set(
        lsp,
        rng,
        cfg.small_scale,
        geometry,
        los=sc.condition is PropagationCondition.LOS,
        lifetime_dist=cfg.evolution.lifetime,
    )
    return cset, lsp


def simulate_link(cfg: SimConfig, seed: int, link: int = 0) -> SimulationResult:
    """Generate, evolve and render one link; ground-truth MPCs are recorded per snapshot."""
    sc = cfg.scenario
    cset, lsp = initial_cluster_set(cfg, seed, link)
    log = EvolutionLog()
    mpcs: list[MpcRecord] = []
    rows: list[dict] = []

    def record(k, cs):
        mpcs.append(MpcRecord.from_cluster_set(cs, k))
        g = sc.link_geometry(cs.time)
        rows.append(
            {
                "snapshot": k,
                "time_s": cs.time,
                "ut_x_m": g.ut_position[0],
                "ut_y_m": g.ut_position[1],
                "d3d_m": g.d_3d,
                "los_aoa_rad": g.los_aoa,
                "los_eoa_rad": g.los_eoa,
            }
        )

    stream = evolve(
        cset,
        cfg.evolution,
        sc.n_snapshots,
        sc.snapshot_interval,
        sc.velocity,
        substream(seed, f"evolution/{link}"),
        sc.link_geometry,
        sc.wavelength,
        log,
    )
    trace = render_trace(
        stream,
        sc.link_geometry,
        sc.rx_pattern,
        sc.tx_pattern,
        sc.velocity,
        sc.bandwidth,
        sc.n_freq,
        sc.snapshot_interval,
        cfg.render["domain"],
        cfg.render["overflow"],
        on_snapshot=record,
    )
    if cfg.render["apply_large_scale"]:
        d = np.array([max(r["d3d_m"], sc.path_loss.reference_distance) for r in rows])
        gain = 10.0 ** (-path_loss_db(sc.path_loss, d, lsp.sf_db) / 20.0)
        trace = CirTrace(trace.data * gain[:, None, None, None], trace.domain, trace.interval, trace.spacing)
    trace.metadata.update({"seed": seed, "config_hash": cfg.hash, "link": link})
    return SimulationResult(trace, log, MpcRecord.concatenate(mpcs), rows, lsp)


# ---------------------------------------------------------------- analysis


@dataclass
class AnalysisOutput:
    """Named CSV tables (name -> text)."""

    tables: dict[str, str] = field(default_factory=dict)
    summary: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
        self.tables[name] = buf.getvalue()

    def add_fit(self, name: str, fit, samples) -> None:
        self.add(f"{name}_samples", ["value"], [[x] for x in np.asarray(samples, dtype=float)])
        params = sorted(fit.params.items())
        self.add(f"{name}_fit", ["family", *[k for k, _ in params], "ks", "n"], [[fit.family, *[v for _, v in params], fit.goodness, fit.n_samples]])
        prob, val = cdf_table(samples)
        self.add(f"{name}_cdf", ["probability", "value"], zip(prob, val))


def _delay_pdps(trace: CirTrace) -> np.ndarray:
    taps = trace.to_delay().data
    return (np.abs(taps) ** 2).reshape(taps.shape[0], taps.shape[1], -1).mean(axis=2)


def trace_window(trace: CirTrace, speed: float, wavelength: float, n_lambda: float = 40.0) -> int:
    return min(trace.n_snapshots, window_snapshots(speed, trace.interval, wavelength, n_lambda, trace.n_snapshots))


def window_apdps(trace: CirTrace, window: int, margin_db: float = 6.0) -> list[Pdp]:
    """APDPs over non-overlapping windows; the noise floor is the median bin power."""
    pdps = _delay_pdps(trace)
    delays = trace.to_delay().delays
    out = []
    for start in range(0, trace.n_snapshots - window + 1, window):
        block = pdps[start : start + window]
        floor = estimate_noise_floor_db(block.mean(axis=0))
        out.append(apdp([instantaneous_pdp(np.sqrt(p), delays, (start + i) * trace.interval) for i, p in enumerate(block)], floor, margin_db))
    return out


def analyze_trace(trace: CirTrace, metrics: set[str], speed: float, wavelength: float, options: dict, geometry_rows=None) -> AnalysisOutput:
    out = AnalysisOutput()
    window = trace_window(trace, speed, wavelength, options.get("window_lambda", 40.0))
    margin = options.get("noise_margin_db", 6.0)
    apdps = [a for a in window_apdps(trace, window, margin) if not a.empty]
    if "apdp" in metrics:
        out.add("apdp", ["window", "delay_s", "power"], [(i, d, p) for i, a in enumerate(apdps) for d, p in zip(a.delays, a.power)])
    if "rmsds" in metrics and apdps:
        ds = np.array([rms_delay_spread(a) for a in apdps])
        out.summary["rmsds_mean_s"] = float(ds.mean())
        positive = ds[ds > 0] * 1e9
        if positive.size >= 2:
            out.add_fit("rmsds_ns", fit_distribution(positive, "lognormal"), positive)
        else:
            out.add("rmsds_ns_samples", ["value"], [[x * 1e9] for x in ds])
    if "kfactor" in metrics:
        ks = []
        for a in apdps:
            try:
                ks.append(rice_k_factor(a))
            except InfiniteKFactorError:
                continue
        if len(ks) >= 2:
            out.add_fit("kfactor_db", fit_distribution(ks, "normal"), ks)
        else:
            out.add("kfactor_db_samples", ["value"], [[k] for k in ks])
    pdps = _delay_pdps(trace)
    if "tpcc" in metrics:
        m = tpcc_matrix(pdps)
        out.add("tpcc", ["i", "j", "tpcc"], [(i, j, m[i, j]) for i in range(len(m)) for j in range(i, len(m))])
    if "stationarity" in metrics:
        thr = options.get("tpcc_threshold", 0.8)
        smoothed = smooth_pdps(pdps, trace_window(trace, speed, wavelength, options.get("stationarity_smoothing_lambda", 40.0)))
        regions = stationarity_regions(smoothed, trace.interval, speed, thr)
        out.add("stationarity_regions", ["start", "stop", "duration_s", "distance_m", "censored"], [(r.start, r.stop, r.duration, r.distance, int(r.censored)) for r in regions])
        per = stationarity_per_anchor(smoothed, trace.interval, speed, thr)
        out.add("stationarity_per_anchor", ["anchor", "stop", "duration_s", "distance_m", "censored"], [(r.start, r.stop, r.duration, r.distance, int(r.censored)) for r in per])
        out.summary["stationarity_regions"] = len(regions)
    if metrics & {"pl", "sf"}:
        if not geometry_rows:
            raise ValueError("path-loss analysis needs the geometry.csv written by simulate")
        centres, level = extract_large_scale(trace.data, window)
        d = np.array([float(geometry_rows[c]["d3d_m"]) for c in centres])
        cutoff = options.get("near_field_cutoff", 100.0)
        fit = fit_path_loss(level, d, 1.0, cutoff)
        out.add("pl_fit", ["A_db", "n", "sigma_db"], [[fit.params["A"], fit.params["n"], fit.params["sigma"]]])
        out.add("pl_samples", ["distance_m", "loss_db"], zip(d, level))
        if fit.residuals is not None and fit.residuals.size >= 2:
            out.add_fit("sf_db", fit_distribution(fit.residuals, "normal"), fit.residuals)
    return out


def cluster_mpcs(mpcs: MpcRecord, rng: np.random.Generator, k_max: int = 8, xi: float = 1.0):
    """KPowerMeans on every snapshot; returns ``(labels, centroids per snapshot)``."""
    labels = np.full(len(mpcs), -1)
    centroids = []
    for s in mpcs.snapshots:
        idx = np.flatnonzero(mpcs.snapshot == s)
        m = mpcs.select(s)
        if len(m) == 0 or not m.power.sum() > 0:
            centroids.append(np.empty((0, 3)))
            continue
        k, _ = select_k(m.power, m.delay, m.aoa, m.eoa, k_max, rng, xi)
        res = kpowermeans(m.power, m.delay, m.aoa, m.eoa, k, rng, xi)
        labels[idx] = res.labels
        centroids.append(res.centroids)
    return labels, centroids


def analyze_mpcs(mpcs: MpcRecord, metrics: set[str], interval: float, options: dict, rng: np.random.Generator, snapshots_per_step: int = 1) -> AnalysisOutput:
    out = AnalysisOutput()
    if not len(mpcs):
        raise ValueError("MPC record is empty")
    snaps = mpcs.snapshots
    if "as" in metrics:
        rows = []
        for s in snaps:
            m = mpcs.select(s)
            if m.power.sum() > 0:
                rows.append((s, angular_spread(m.power, m.aoa, "azimuth"), angular_spread(m.power, m.eoa, "elevation")))
        out.add("angular_spread", ["snapshot", "asa_deg", "esa_deg"], rows)
        asa = np.array([r[1] for r in rows])
        esa = np.array([r[2] for r in rows])
        if np.all(asa > 0) and asa.size >= 2:
            out.add_fit("asa_deg", fit_distribution(asa, "lognormal"), asa)
        if np.all(esa > 0) and esa.size >= 2:
            out.add_fit("esa_deg", fit_distribution(esa, "lognormal"), esa)
    if metrics & {"cluster", "markov"}:
        labels, centroids = cluster_mpcs(mpcs, rng, options.get("k_max", 8), options.get("xi", 1.0))
        tracks = track_clusters(centroids, options.get("mcd_threshold", 0.06), options.get("xi", 1.0))
        n = len(centroids)
        if "cluster" in metrics:
            out.add(
                "cluster_tracks",
                ["track_id", "birth", "death", "lifetime_s"],
                [(t.track_id, t.birth, t.death, t.lifetime(interval)) for t in tracks],
            )
            if len(tracks) >= 2:
                fit, hist = lifetime_stats(tracks, interval, n)
                life = [t.lifetime(interval) for t in tracks]
                out.add_fit("lifetime_s", fit, life)
                out.add("cluster_count_hist", ["count", "frequency"], sorted(hist.items()))
        if "markov" in metrics and n >= 3:
            births, deaths = bd_events_from_tracks(tracks, n, snapshots_per_step)
            if births.size >= 2:
                mf = fit_markov(births=births, deaths=deaths)
                out.add("markov", ["from", "p0", "p1", "p2", "p3", "unobserved"], [(i, *mf.matrix[i], int(i in mf.unobserved_rows)) for i in range(4)])
    return out


# ---------------------------------------------------------------- validation

DEFAULT_REFERENCE = (
    # metric, family, mu, sigma, tolerance (relative), enforce
    ("rmsds_ns", "lognormal", 4.33, 0.39, 0.15, True),
    ("asa_deg", "lognormal", 1.78, 1.45, 0.15, True),
    ("esa_deg", "lognormal", 0.48, 0.65, 0.15, True),
    ("stationarity_m", "lognormal", 2.16, 0.29, 0.15, False),
)
DS_LINEAR_MEAN_NS = 81.79


@dataclass
class ValidationRow:
    metric: str
    family: str
    ref_mu: float
    ref_sigma: float
    fit_mu: float
    fit_sigma: float
    tolerance: float
    enforced: bool
    passed: bool


def load_reference(path) -> list[tuple]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"metric", "family", "mu", "sigma", "tol"}
        if not need <= set(reader.fieldnames or ()):
            raise ValueError(f"reference CSV needs columns {sorted(need)}")
        for r in reader:
            enforce = r.get("enforce", "1").strip().lower() not in ("0", "false", "no")
            rows.append((r["metric"], r["family"], float(r["mu"]), float(r["sigma"]), float(r["tol"]), enforce))
    return rows


def _within(value: float, ref: float, tol: float) -> bool:
    return abs(value - ref) <= tol * abs(ref) if ref != 0 else abs(value) <= tol


def recover_lsps(cfg: SimConfig, seed: int, n_links: int) -> dict[str, np.ndarray]:
    """DS (ns), ASA and ESA (deg) measured on the initial ground-truth MPCs of ``n_links`` links."""
    ds, asa, esa = [], [], []
    for link in range(n_links):
        cset, _ = initial_cluster_set(cfg, seed, link)
        m = cset.mpc_arrays()
        ds.append(rms_delay_spread(m["power"], m["delay"]) * 1e9)
        asa.append(angular_spread(m["power"], m["angles"][:, 0], "azimuth"))
        esa.append(angular_spread(m["power"], m["angles"][:, 1], "elevation"))
    return {"rmsds_ns": np.array(ds), "asa_deg": np.array(asa), "esa_deg": np.array(esa)}


def stationarity_distances(cfg: SimConfig, seed: int, n_links: int) -> np.ndarray:
    sc = cfg.scenario
    out = []
    for link in range(n_links):
        res = simulate_link(cfg, seed, link)
        window = trace_window(res.trace, sc.ut_speed, sc.wavelength, cfg.analysis["stationarity_smoothing_lambda"])
        pdps = smooth_pdps(_delay_pdps(res.trace), window)
        out.extend(r.distance for r in stationarity_per_anchor(pdps, res.trace.interval, sc.ut_speed, cfg.analysis["tpcc_threshold"]))
    return np.array(out)


def validate(cfg: SimConfig, seed: int, reference=None) -> tuple[list[ValidationRow], dict[str, np.ndarray]]:
    """Simulate, recover, fit and compare against ``reference`` rows."""
    reference = list(reference or DEFAULT_REFERENCE)
    samples = recover_lsps(cfg, seed, cfg.validate["n_links"])
    metrics = {r[0] for r in reference}
    if "stationarity_m" in metrics and cfg.validate["stationarity_links"] > 0 and cfg.scenario.ut_speed > 0:
        dist = stationarity_distances(cfg, seed, cfg.validate["stationarity_links"])
        samples["stationarity_m"] = dist[dist > 0]
    rows = []
    for metric, family, mu, sigma, tol, enforce in reference:
        x = samples.get(metric)
        if x is None or x.size < 2:
            rows.append(ValidationRow(metric, family, mu, sigma, np.nan, np.nan, tol, enforce, False))
            continue
        fit = fit_distribution(x, family)
        ok = _within(fit.mu, mu, tol) and _within(fit.sigma, sigma, tol)
        rows.append(ValidationRow(metric, family, mu, sigma, fit.mu, fit.sigma, tol, enforce, ok))
        if metric == "rmsds_ns" and family == "lognormal":
            lin = float(np.mean(x))
            rows.append(
                ValidationRow("rmsds_ns_linear_mean", "mean", DS_LINEAR_MEAN_NS, 0.0, lin, 0.0, tol, enforce, _within(lin, DS_LINEAR_MEAN_NS, tol))
            )
    return rows, samples


def report_csv(rows: list[ValidationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["metric", "family", "ref_mu", "ref_sigma", "fit_mu", "fit_sigma", "tolerance", "enforced", "passed"])
    for r in rows:
        w.writerow([r.metric, r.family, r.ref_mu, r.ref_sigma, repr(float(r.fit_mu)), repr(float(r.fit_sigma)), r.tolerance, int(r.enforced), int(r.passed)])
    return buf.getvalue()


def report_passed(rows: list[ValidationRow]) -> bool:
    return all(r.passed for r in rows if r.enforced)

