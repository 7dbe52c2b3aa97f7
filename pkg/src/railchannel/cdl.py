"""Clustered-delay-line tables and their instantiation as cluster sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .analysis.angular import angular_spread
from .analysis.delay import rms_delay_spread
from .clusters import (
    AOA,
    EOA,
    ClusterSet,
    ClusterState,
    SmallScaleParams,
    XprModel,
    geometry_angles,
    los_cluster_state,
    spawn_rays,
)
from .geometry import SPEED_OF_LIGHT, LinkGeometry, wrap_azimuth
from .scenario import LspSample

CSV_COLUMNS = ("no.", "delay_ns", "power_db", "aoa_deg", "eoa_deg", "los_flag")


@dataclass(frozen=True)
class CdlTable:
    """Rows in published order; powers in dB relative, angles in degrees."""

    name: str
    delay_ns: tuple[float, ...]
    power_db: tuple[float, ...]
    aoa_deg: tuple[float, ...]
    eoa_deg: tuple[float, ...]
    los: tuple[bool, ...]
    c_asa_deg: float = 2.0
    c_esa_deg: float = 2.0

    def __post_init__(self) -> None:
        n = len(self.delay_ns)
        if n == 0:
            raise ValueError("CDL table needs at least one row")
        if any(len(col) != n for col in (self.power_db, self.aoa_deg, self.eoa_deg, self.los)):
            raise ValueError("CDL columns must have equal length")
        if self.delay_ns[0] != 0:
            raise ValueError("first row must have zero delay")
        if any(d < 0 for d in self.delay_ns):
            raise ValueError("delays must be non-negative")
        if any(p > 0 for p in self.power_db):
            raise ValueError("relative powers must be <= 0 dB")
        if any(self.los[1:]):
            raise ValueError("only the first row may be LOS")

    @property
    def n_rows(self) -> int:
        return len(self.delay_ns)

    def linear_powers(self) -> np.ndarray:
        p = 10.0 ** (np.asarray(self.power_db) / 10.0)
        return p / p.sum()

    @property
    def k_factor(self) -> float:
        """Linear LOS power over the summed NLOS rows (0 without a LOS row)."""
        if not self.los[0]:
            return 0.0
        p = 10.0 ** (np.asarray(self.power_db) / 10.0)
        return float(p[0] / p[1:].sum()) if self.n_rows > 1 else np.inf

    def rms_delay_spread(self) -> float:
        """Static RMS delay spread of the rows, in seconds."""
        return rms_delay_spread(self.linear_powers(), np.asarray(self.delay_ns) * 1e-9)


FIVE_G_R_RURAL = CdlTable(
    "5G-R-Rural",
    (0.0, 70.787, 180.345, 282.813, 806.152),
    (-0.5, -23.7, -20.9, -11.4, -15.1),
    (219.6, 153.5, 166.6, 153.5, 66.2),
    (65.5, 70.9, 66.8, 65.2, 64.5),
    (True, False, False, False, False),
)

RMA_CDL_D = CdlTable(
    "RMa-CDL-D",
    (0.0, 5.497, 96.123, 214.08, 220.674),
    (-0.2, -18.8, -21.0, -22.8, -17.9),
    (-180.0, 89.2, 89.2, 89.2, 163.0),
    (81.5, 86.9, 86.9, 86.9, 79.4),
    (True, False, False, False, False),
)


def builtin_tables() -> list[CdlTable]:
    return [FIVE_G_R_RURAL, RMA_CDL_D]


def get_table(name: str) -> CdlTable:
    for t in builtin_tables():
        if t.name.lower() == name.lower():
            return t
    raise KeyError(f"no built-in CDL table named {name!r}")


def scale_normalized_delays(table: CdlTable, factor: float) -> CdlTable:
    if factor <= 0:
        raise ValueError("delay scaling factor must be positive")
    return replace(table, delay_ns=tuple(d * factor for d in table.delay_ns))


def instantiate(
    table: CdlTable,
    geometry: LinkGeometry,
    rng: np.random.Generator,
    n_rays: int = 20,
    departure=None,
    xpr: XprModel = XprModel(),
    r_tau: float = 2.3,
    time: float = 0.0,
) -> ClusterSet:
    """One cluster per row with unit total power.

    Arrival angles come from the table; departure angles (``(AOD, EOD)`` in
    radians) default to the geometric LOS departure direction. Per-cluster
    shadowing is set so that later power updates reproduce the table powers
    at the table delays.
    """
    p = table.linear_powers()
    tau = np.asarray(table.delay_ns) * 1e-9
    ds = table.rms_delay_spread()
    ref = geometry_angles(geometry)
    aod, eod = (ref[2], ref[3]) if departure is None else departure
    aoa = wrap_azimuth(np.deg2rad(table.aoa_deg))
    eoa = np.deg2rad(table.eoa_deg)
    has_los = table.los[0]
    k = table.k_factor
    mpc_angles = np.column_stack([aoa, eoa])
    lsp = LspSample(
        ds_ns=ds * 1e9,
        asa_deg=angular_spread(p, mpc_angles[:, 0], "azimuth"),
        esa_deg=angular_spread(p, mpc_angles[:, 1], "elevation"),
        asd_deg=0.0,
        esd_deg=0.0,
        k_db=10.0 * np.log10(k) if has_los and np.isfinite(k) and k > 0 else -np.inf,
        sf_db=0.0,
    )
    intra = np.array([table.c_asa_deg, table.c_esa_deg, table.c_asa_deg, table.c_esa_deg])
    params = SmallScaleParams(n_clusters=max(1, min(20, table.n_rows)), rays_per_cluster=n_rays, r_tau=r_tau, xpr=xpr, calibrate=False)
    abs0 = geometry.d_3d / SPEED_OF_LIGHT
    cset = ClusterSet(
        clusters=[],
        time=time,
        lsp=lsp,
        params=params,
        intra_spreads_deg=intra,
        los_angles=ref,
        los_abs_delay=abs0,
    )
    a = (r_tau - 1.0) / (r_tau * ds) if ds > 0 else 0.0
    for i in range(table.n_rows):
        angles = np.array([aoa[i], eoa[i], aod, eod])
        if i == 0 and has_los:
            cset.clusters.append(los_cluster_state(cset.take_id(), angles, abs0, float(p[0]), time))
            continue
        rays = spawn_rays(n_rays, intra, xpr, rng)
        # shadowing that makes exp(-a tau) 10^(-Z/10) proportional to the row power
        z = -10.0 * np.log10(p[i]) - 10.0 * a * tau[i] / np.log(10.0)
        cset.clusters.append(
            ClusterState(
                id=cset.take_id(),
                delay=float(tau[i]),
                abs_delay=abs0 + float(tau[i]),
                power=float(p[i]),
                aoa=float(angles[AOA]),
                eoa=float(angles[EOA]),
                aod=float(aod),
                eod=float(eod),
                ray_offsets=rays["offsets"],
                ray_phases=rays["phases"],
                ray_xpr=rays["xpr"],
                shadowing_db=float(z),
                birth_time=time,
            )
        )
    cset.normalize_delays()
    cset.renormalize_powers()
    return cset


def save_csv(table: CdlTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i in range(table.n_rows):
            w.writerow(
                [i + 1, repr(table.delay_ns[i]), repr(table.power_db[i]), repr(table.aoa_deg[i]), repr(table.eoa_deg[i]), int(table.los[i])]
            )


def load_csv(path, name: str | None = None) -> CdlTable:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"CDL CSV missing columns: {sorted(missing)}")
        rows = sorted(reader, key=lambda r: int(r["no."]))
    if not rows:
        raise ValueError("CDL CSV has no rows")
    return CdlTable(
        name or str(path),
        tuple(float(r["delay_ns"]) for r in rows),
        tuple(float(r["power_db"]) for r in rows),
        tuple(float(r["aoa_deg"]) for r in rows),
        tuple(float(r["eoa_deg"]) for r in rows),
        tuple(r["los_flag"].strip().lower() in ("1", "true", "yes") for r in rows),
    )
