import csv
import json

import numpy as np
import pytest

from railchannel.cdl import FIVE_G_R_RURAL, load_csv
from railchannel.cir import CirTrace
from railchannel.cli import EXIT_FORMAT, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from railchannel.evolution import EvolutionLog

from conftest import STATIC_CDL, config_text

SMALL = {"scenario.n_rx": 1, "scenario.duration_s": 0.6}


def _write(tmp_path, name, overrides):
    p = tmp_path / name
    p.write_text(config_text(overrides))
    return str(p)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    cfg = _write(d, "c.ini", {**SMALL, "evolution.driver": "poisson"})
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(d / "out")]) == EXIT_OK
    return cfg, d / "out"


def test_simulate_outputs_and_manifest(simulated):
    cfg, out = simulated
    assert sorted(p.name for p in out.iterdir()) == ["evolution.csv", "geometry.csv", "manifest.json", "mpc.csv", "trace.cir"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 3
    assert len(man["config_hash"]) == 64 and man["inputs"]["config"] == cfg
    assert man["wall_clock_s"] >= 0 and "tool_version" in man
    trace = CirTrace.read(out / "trace.cir")
    assert trace.shape == (30, 513, 1, 1) and trace.domain == "frequency"


def test_zero_speed_poisson_has_no_events(tmp_path):
    cfg = _write(tmp_path, "c.ini", {**SMALL, "scenario.ut_speed_mps": 0.0, "evolution.driver": "poisson"})
    assert main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == EXIT_OK
    log = EvolutionLog.read_csv(tmp_path / "o" / "evolution.csv")
    assert len(log.records) == 5
    assert all(not r.births and not r.deaths for r in log.records)
    assert [r.time for r in log.records] == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])


def test_analyze_all_metrics(simulated, tmp_path):
    cfg, out = simulated
    assert main(["analyze", "--in", str(out), "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    names = {p.name for p in (tmp_path / "a").iterdir()}
    for expected in ("pl_fit.csv", "sf_db_fit.csv", "apdp.csv", "rmsds_ns_cdf.csv", "kfactor_db_fit.csv", "tpcc.csv",
                     "stationarity_regions.csv", "angular_spread.csv", "cluster_tracks.csv", "markov.csv", "manifest.json"):
        assert expected in names
    cdf = (tmp_path / "a" / "rmsds_ns_cdf.csv").read_text().splitlines()
    assert len(cdf) == 1001


def test_analyze_static_cdl_trace(tmp_path):
    cfg = _write(tmp_path, "c.ini", STATIC_CDL)
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o")]) == EXIT_OK
    args = ["analyze", "--in", str(tmp_path / "o" / "trace.cir"), "--metric", "rmsds", "stationarity", "--config", cfg]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    with open(tmp_path / "a" / "rmsds_ns_samples.csv", newline="") as fh:
        ds = [float(r["value"]) for r in csv.DictReader(fh)]
    assert np.mean(ds) == pytest.approx(FIVE_G_R_RURAL.rms_delay_spread() * 1e9, rel=0.02)
    with open(tmp_path / "a" / "stationarity_regions.csv", newline="") as fh:
        regions = list(csv.DictReader(fh))
    assert len(regions) == 1 and int(regions[0]["start"]) == 0 and int(regions[0]["stop"]) == 9


def test_analyze_format_errors_leave_no_output(tmp_path):
    (tmp_path / "bad.cir").write_bytes(b"NOTATRACE" + bytes(64))
    rc = main(["analyze", "--in", str(tmp_path / "bad.cir"), "--out", str(tmp_path / "a")])
    assert rc == EXIT_FORMAT and not (tmp_path / "a").exists()
    empty = CirTrace(np.zeros((1, 4, 1, 1)), "delay", 0.1, 1e-7).to_bytes()
    (tmp_path / "empty.cir").write_bytes(empty[:8] + (0).to_bytes(4, "little") + empty[12:44])
    assert main(["analyze", "--in", str(tmp_path / "empty.cir"), "--out", str(tmp_path / "a")]) == EXIT_FORMAT
    assert not (tmp_path / "a").exists()


def test_analyze_error_message_names_offset(tmp_path, capsys):
    (tmp_path / "bad.cir").write_bytes(b"XXXXXXXX" + bytes(64))
    main(["analyze", "--in", str(tmp_path / "bad.cir"), "--out", str(tmp_path / "a")])
    assert "offset 0" in capsys.readouterr().err


def test_analyze_missing_input(tmp_path):
    assert main(["analyze", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "a")]) == EXIT_IO


def test_simulate_missing_key(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text(config_text(SMALL).replace("snapshot_rate_hz = 50\n", ""))
    assert main(["simulate", "--config", str(p), "--seed", "1", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "snapshot_rate_hz" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_simulate_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.ini"), "--seed", "1", "--out", str(tmp_path / "o")]) == EXIT_IO


def test_simulate_unwritable_output(tmp_path):
    cfg = _write(tmp_path, "c.ini", SMALL)
    (tmp_path / "file").write_text("x")
    assert main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "file" / "o")]) == EXIT_IO


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["analyze", "--metric", "bogus"]) == EXIT_USAGE
    assert main(["cdl", "--export", "nope"]) == EXIT_USAGE


def test_cdl_list_and_export(tmp_path, capsys):
    assert main(["cdl", "--list"]) == EXIT_OK
    listing = capsys.readouterr().out
    assert "5G-R-Rural" in listing and "RMa-CDL-D" in listing and "K=7.700" in listing
    assert main(["cdl", "--export", "5g-r-rural", "--out", str(tmp_path / "t.csv")]) == EXIT_OK
    assert load_csv(tmp_path / "t.csv", name="5G-R-Rural") == FIVE_G_R_RURAL
    assert main(["cdl", "--export", "RMa-CDL-D"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("no.,delay_ns,power_db,aoa_deg,eoa_deg,los_flag")


def _reference(path, ds_mu):
    path.write_text(
        "metric,family,mu,sigma,tol,enforce\n"
        f"rmsds_ns,lognormal,{ds_mu},0.39,0.15,1\n"
        "asa_deg,lognormal,1.78,1.45,0.15,0\n"
        "esa_deg,lognormal,0.48,0.65,0.15,0\n"
    )
    return str(path)


def test_validate_closed_loop_passes(tmp_path):
    cfg = _write(tmp_path, "c.ini", {"validate.n_links": 100, "validate.stationarity_links": 0})
    ref = _reference(tmp_path / "ref.csv", 4.33)
    assert main(["validate", "--config", cfg, "--seed", "5", "--reference", ref, "--out", str(tmp_path / "v")]) == EXIT_OK
    with open(tmp_path / "v" / "validation.csv", newline="") as fh:
        rows = {r["metric"]: r for r in csv.DictReader(fh)}
    assert rows["rmsds_ns"]["passed"] == "1"


def test_validate_detects_halved_ds(tmp_path):
    cfg = _write(tmp_path, "c.ini", {"lsp.ds_mu": 4.33 - np.log(2), "validate.n_links": 100, "validate.stationarity_links": 0})
    ref = _reference(tmp_path / "ref.csv", 4.33)
    assert main(["validate", "--config", cfg, "--seed", "5", "--reference", ref, "--out", str(tmp_path / "v")]) == EXIT_VALIDATION
    assert (tmp_path / "v" / "validation.csv").exists()


def test_validate_default_reference_lists_all_metrics(tmp_path):
    cfg = _write(tmp_path, "c.ini", {**SMALL, "validate.n_links": 20, "validate.stationarity_links": 1})
    main(["validate", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "v")])
    with open(tmp_path / "v" / "validation.csv", newline="") as fh:
        metrics = {r["metric"] for r in csv.DictReader(fh)}
    assert {"rmsds_ns", "asa_deg", "esa_deg", "stationarity_m"} <= metrics


def test_validate_malformed_reference(tmp_path):
    cfg = _write(tmp_path, "c.ini", SMALL)
    (tmp_path / "ref.csv").write_text("metric,mu\nrmsds_ns,4\n")
    rc = main(["validate", "--config", cfg, "--seed", "1", "--reference", str(tmp_path / "ref.csv"), "--out", str(tmp_path / "v")])
    assert rc == EXIT_FORMAT
