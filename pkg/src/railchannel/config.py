"""INI configuration loading and seeded random substreams.

Every key, its type and default live in :data:`SCHEMA`; unknown sections or
keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import configparser
import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np

from .cdl import CdlTable, get_table, load_csv
from .clusters import SmallScaleParams, XprModel
from .evolution import EvolutionParams
from .geometry import AntennaPattern, ElevationConvention
from .scenario import (
    LspDistributions,
    Lognormal,
    Normal,
    PathLossModel,
    ScenarioConfig,
    area_parameters,
)

REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, section: str, key: str | None, message: str) -> None:
        where = f"[{section}]" + (f" {key}" if key else "")
        super().__init__(f"{where}: {message}")
        self.section = section
        self.key = key


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


# section -> key -> (parser, default); REQUIRED marks mandatory keys
SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {
        "carrier_frequency_hz": (float, REQUIRED),
        "bandwidth_hz": (float, REQUIRED),
        "n_freq": (int, REQUIRED),
        "ut_speed_mps": (float, REQUIRED),
        "duration_s": (float, REQUIRED),
        "snapshot_rate_hz": (float, REQUIRED),
        "bs_x_m": (float, 0.0),
        "bs_y_m": (float, 0.0),
        "bs_height_m": (float, 26.0),
        "ut_x_m": (float, -600.0),
        "ut_y_m": (float, 30.0),
        "ut_height_m": (float, 4.2),
        "ut_heading_rad": (float, 0.0),
        "tag": (str, "5G-R-rural-A"),
        "condition": (str, "LOS"),
        "n_rx": (int, 16),
        "rx_array_radius_m": (_opt_float, None),
        "n_tx": (int, 1),
        "rx_pattern": (str, "isotropic"),
        "tx_pattern": (str, "isotropic"),
        "tx_gain_dbi": (float, 0.0),
        "tx_beamwidth_deg": (float, 65.0),
        "elevation_convention": (str, "zenith"),
        "near_field_cutoff_m": (float, 100.0),
    },
    "lsp": {
        "ds_mu": (_opt_float, None),
        "ds_sigma": (_opt_float, None),
        "asa_mu": (_opt_float, None),
        "asa_sigma": (_opt_float, None),
        "esa_mu": (_opt_float, None),
        "esa_sigma": (_opt_float, None),
        "k_mu": (_opt_float, None),
        "k_sigma": (_opt_float, None),
        "sf_sigma_db": (_opt_float, None),
        "lifetime_mu": (_opt_float, None),
        "lifetime_sigma": (_opt_float, None),
        "stationarity_mu": (_opt_float, None),
        "stationarity_sigma": (_opt_float, None),
        "pl_intercept_db": (_opt_float, None),
        "pl_exponent": (_opt_float, None),
    },
    "clusters": {
        "n_clusters": (int, 5),
        "rays_per_cluster": (int, 20),
        "r_tau": (float, 2.3),
        "zeta_db": (float, 3.0),
        "xpr_mu_db": (float, 8.0),
        "xpr_sigma_db": (float, 3.0),
        "calibrate": (_bool, True),
    },
    "evolution": {
        "driver": (str, "markov"),
        "dt_bd_s": (float, 0.1),
        "lambda_r": (float, 0.12),
        "lambda_g": (_opt_float, None),
        "n_expected": (float, 5.0),
        "d_c_m": (float, 10.0),
        "transition_matrix": (_floats, None),
        "lifetime_deaths": (_bool, True),
        "min_nlos": (int, 1),
        "max_clusters": (lambda t: None if t.strip().lower() in ("", "none") else int(t), None),
    },
    "cdl": {
        "table": (str, ""),
        "csv": (str, ""),
        "rays_per_cluster": (int, 20),
    },
    "render": {
        "domain": (str, "frequency"),
        "overflow": (str, "wrap"),
        "apply_large_scale": (_bool, False),
    },
    "analysis": {
        "tpcc_threshold": (float, 0.8),
        "window_lambda": (float, 40.0),
        "stationarity_smoothing_lambda": (float, 40.0),
        "noise_margin_db": (float, 6.0),
        "xi": (float, 1.0),
        "mcd_threshold": (float, 0.06),
        "k_max": (int, 8),
    },
    "validate": {
        "n_links": (int, 200),
        "stationarity_links": (int, 3),
    },
}


@dataclass
class SimConfig:
    scenario: ScenarioConfig
    small_scale: SmallScaleParams
    evolution: EvolutionParams
    cdl: CdlTable | None
    cdl_rays: int
    render: dict
    analysis: dict
    validate: dict
    elevation_convention: ElevationConvention = ElevationConvention.ZENITH
    values: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.values)


def config_hash(values: dict) -> str:
    lines = [f"{s}.{k}={values[s][k]!r}" for s in sorted(values) for k in sorted(values[s])]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def _parse_values(parser: configparser.ConfigParser) -> dict:
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, None, "unknown section")
    values: dict[str, dict] = {}
    for section, keys in SCHEMA.items():
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(section, key, "unknown key")
        values[section] = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    values[section][key] = conv(given[key])
                except ValueError as exc:
                    raise ConfigError(section, key, f"invalid value: {exc}") from None
            elif default is REQUIRED:
                raise ConfigError(section, key, "missing required key")
            else:
                values[section][key] = default
    return values


def _pattern(kind: str, gain: float = 0.0, beamwidth: float = 65.0, boresight_azimuth: float = 0.0) -> AntennaPattern:
    return AntennaPattern(kind=kind, gain_dbi=gain, beamwidth_deg=beamwidth, boresight_azimuth=boresight_azimuth)


def _lsps(tag: str, v: dict) -> tuple[PathLossModel, LspDistributions]:
    pl, d = area_parameters(tag)

    def ln(mu_key, sigma_key, base: Lognormal) -> Lognormal:
        mu, sigma = v[mu_key], v[sigma_key]
        return Lognormal(base.mu if mu is None else mu, base.sigma if sigma is None else sigma)

    k = Normal(d.k_factor.mu if v["k_mu"] is None else v["k_mu"], d.k_factor.sigma if v["k_sigma"] is None else v["k_sigma"])
    sf = d.sf_std_db if v["sf_sigma_db"] is None else v["sf_sigma_db"]
    dists = LspDistributions(
        ds=ln("ds_mu", "ds_sigma", d.ds),
        asa=ln("asa_mu", "asa_sigma", d.asa),
        esa=ln("esa_mu", "esa_sigma", d.esa),
        k_factor=k,
        sf_std_db=sf,
        lifetime=ln("lifetime_mu", "lifetime_sigma", d.lifetime),
        stationarity_distance=ln("stationarity_mu", "stationarity_sigma", d.stationarity_distance),
    )
    model = PathLossModel(
        pl.intercept_db if v["pl_intercept_db"] is None else v["pl_intercept_db"],
        pl.exponent if v["pl_exponent"] is None else v["pl_exponent"],
        pl.reference_distance,
        sf,
    )
    return model, dists


def build_config(values: dict) -> SimConfig:
    """Turn parsed values into model objects, re-raising errors with their section."""
    sc, ev, cl, cd = values["scenario"], values["evolution"], values["clusters"], values["cdl"]
    try:
        path_loss, lsps = _lsps(sc["tag"], values["lsp"])
    except ValueError as exc:
        raise ConfigError("lsp", None, str(exc)) from None
    try:
        scenario = ScenarioConfig(
            carrier_frequency=sc["carrier_frequency_hz"],
            bandwidth=sc["bandwidth_hz"],
            n_freq=sc["n_freq"],
            bs_position=(sc["bs_x_m"], sc["bs_y_m"]),
            bs_height=sc["bs_height_m"],
            ut_position=(sc["ut_x_m"], sc["ut_y_m"]),
            ut_height=sc["ut_height_m"],
            ut_speed=sc["ut_speed_mps"],
            ut_heading=sc["ut_heading_rad"],
            tag=sc["tag"],
            condition=sc["condition"],
            rx_pattern=_pattern(sc["rx_pattern"]),
            tx_pattern=_pattern(sc["tx_pattern"], sc["tx_gain_dbi"], sc["tx_beamwidth_deg"], np.pi),
            n_rx=sc["n_rx"],
            rx_array_radius=sc["rx_array_radius_m"],
            n_tx=sc["n_tx"],
            duration=sc["duration_s"],
            snapshot_rate=sc["snapshot_rate_hz"],
            path_loss=path_loss,
            lsps=lsps,
            near_field_cutoff=sc["near_field_cutoff_m"],
        )
        convention = ElevationConvention(sc["elevation_convention"])
    except ValueError as exc:
        raise ConfigError("scenario", None, str(exc)) from None
    try:
        small = SmallScaleParams(
            n_clusters=cl["n_clusters"],
            rays_per_cluster=cl["rays_per_cluster"],
            r_tau=cl["r_tau"],
            zeta_db=cl["zeta_db"],
            xpr=XprModel(cl["xpr_mu_db"], cl["xpr_sigma_db"]),
            calibrate=cl["calibrate"],
        )
    except ValueError as exc:
        raise ConfigError("clusters", None, str(exc)) from None
    try:
        kwargs = dict(
            dt_bd=ev["dt_bd_s"],
            lambda_r=ev["lambda_r"],
            lambda_g=ev["lambda_g"],
            n_expected=ev["n_expected"],
            d_c=ev["d_c_m"],
            driver=ev["driver"],
            lifetime=lsps.lifetime if ev["lifetime_deaths"] else None,
            min_nlos=ev["min_nlos"],
            max_clusters=ev["max_clusters"],
        )
        if ev["transition_matrix"]:
            if len(ev["transition_matrix"]) != 16:
                raise ValueError("transition_matrix needs 16 comma-separated entries")
            kwargs["transition_matrix"] = np.array(ev["transition_matrix"]).reshape(4, 4)
        evolution = EvolutionParams(**kwargs)
    except ValueError as exc:
        raise ConfigError("evolution", None, str(exc)) from None
    table = None
    try:
        if cd["csv"]:
            table = load_csv(cd["csv"])
        elif cd["table"]:
            table = get_table(cd["table"])
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError("cdl", "csv" if cd["csv"] else "table", str(exc)) from None
    render = values["render"]
    if render["domain"] not in ("frequency", "delay"):
        raise ConfigError("render", "domain", "must be frequency or delay")
    if render["overflow"] not in ("wrap", "truncate"):
        raise ConfigError("render", "overflow", "must be wrap or truncate")
    if not 0 < values["analysis"]["tpcc_threshold"] <= 1:
        raise ConfigError("analysis", "tpcc_threshold", "must lie in (0, 1]")
    return SimConfig(scenario, small, evolution, table, cd["rays_per_cluster"], render, values["analysis"], values["validate"], convention, values)


def load_config(path) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("file", None, str(exc)) from None
    return build_config(_parse_values(parser))


def parse_config_text(text: str) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    return build_config(_parse_values(parser))


def default_config_text() -> str:
    """A complete INI file with every key at its default (required keys at the measurement values)."""
    required = {
        "carrier_frequency_hz": "2160e6",
        "bandwidth_hz": "10e6",
        "n_freq": "513",
        "ut_speed_mps": repr(80 / 3.6),
        "duration_s": "2.0",
        "snapshot_rate_hz": "50",
    }
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (_, default) in keys.items():
            if default is REQUIRED:
                out.append(f"{key} = {required[key]}")
            elif default is None:
                out.append(f"{key} =")
            else:
                out.append(f"{key} = {default}")
        out.append("")
    return "\n".join(out)


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label``; new labels never perturb existing streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),)))
