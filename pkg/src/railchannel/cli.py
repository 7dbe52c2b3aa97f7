"""Command-line entry point: simulate, analyze, validate and cdl subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from importlib import metadata
from pathlib import Path

from .analysis.records import MpcRecord, RecordFormatError
from .cdl import builtin_tables, get_table, save_csv
from .cir import MAGIC, CirFormatError, CirTrace
from .config import ConfigError, load_config, substream
from .pipeline import analyze_mpcs, analyze_trace, load_reference, report_csv, report_passed, simulate_link, validate

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_IO, EXIT_FORMAT = 0, 1, 2, 3, 4
METRICS = ("pl", "sf", "apdp", "rmsds", "kfactor", "tpcc", "stationarity", "as", "cluster", "markov")
TRACE_METRICS = {"pl", "sf", "apdp", "rmsds", "kfactor", "tpcc", "stationarity"}
MPC_METRICS = {"as", "cluster", "markov"}


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@contextmanager
def atomic_output(out: Path):
    """Collect files in a temporary sibling directory and move them into ``out`` only on success."""
    out = Path(out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_IO) from None
    try:
        yield tmp
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(tmp.iterdir()):
            os.replace(f, out / f.name)
    except OSError as exc:
        raise CliError(f"cannot write output {out}: {exc}", EXIT_IO) from None
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _manifest(tmp: Path, command: str, args: dict, outputs: list[str], started: float, config_hash: str | None = None, seed=None) -> None:
    data = {
        "command": command,
        "tool_version": _version(),
        "config_hash": config_hash,
        "seed": seed,
        "inputs": {k: str(v) for k, v in args.items() if v is not None},
        "outputs": outputs,
        "wall_clock_s": time.perf_counter() - started,
    }
    (tmp / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_config(path):
    try:
        return load_config(path)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}", EXIT_IO) from None
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    except ConfigError as exc:
        raise CliError(f"invalid config: {exc}", EXIT_USAGE) from None


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg = _load_config(args.config)
    res = simulate_link(cfg, args.seed)
    with atomic_output(Path(args.out)) as tmp:
        res.trace.write(tmp / "trace.cir")
        res.log.write_csv(tmp / "evolution.csv")
        res.mpcs.write_csv(tmp / "mpc.csv")
        header = list(res.geometry[0]) if res.geometry else []
        _write_rows(tmp / "geometry.csv", header, ([repr(float(r[h])) if h != "snapshot" else r[h] for h in header] for r in res.geometry))
        outputs = ["trace.cir", "evolution.csv", "mpc.csv", "geometry.csv"]
        _manifest(tmp, "simulate", {"config": args.config}, outputs, started, cfg.hash, args.seed)
    return EXIT_OK


def _read_input(path: Path):
    """Return (trace, mpcs, geometry rows, manifest) from a file or a simulate output directory."""
    trace = mpcs = geometry = manifest = None
    files = [path] if path.is_file() else []
    if path.is_dir():
        files = [p for p in (path / "trace.cir", path / "mpc.csv") if p.exists()]
        if (path / "geometry.csv").exists():
            with open(path / "geometry.csv", newline="") as fh:
                geometry = list(csv.DictReader(fh))
        if (path / "manifest.json").exists():
            manifest = json.loads((path / "manifest.json").read_text())
    elif not path.exists():
        raise CliError(f"input not found: {path}", EXIT_IO)
    if not files:
        raise CliError(f"no trace.cir or mpc.csv in {path}", EXIT_IO)
    for f in files:
        try:
            head = f.read_bytes()[: len(MAGIC)]
            if head == MAGIC:
                trace = CirTrace.read(f)
            elif f.suffix == ".cir":
                raise CirFormatError("bad magic, not a CIR trace", 0)
            else:
                mpcs = MpcRecord.read_csv(f)
        except (CirFormatError, RecordFormatError) as exc:
            raise CliError(f"{f}: {exc}", EXIT_FORMAT) from None
        except OSError as exc:
            raise CliError(f"cannot read {f}: {exc}", EXIT_IO) from None
    return trace, mpcs, geometry, manifest


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    cfg = _load_config(args.config) if args.config else None
    sc = cfg.scenario if cfg else None
    trace, mpcs, geometry, _ = _read_input(Path(args.input))
    metrics = set(METRICS) if "all" in args.metric else set(args.metric)
    speed = args.speed if args.speed is not None else (sc.ut_speed if sc else 80 / 3.6)
    wavelength = sc.wavelength if sc else 299_792_458.0 / args.carrier
    options = dict(cfg.analysis) if cfg else {}
    if sc:
        options["near_field_cutoff"] = sc.near_field_cutoff
    tables: dict[str, str] = {}
    try:
        if trace is not None and metrics & TRACE_METRICS:
            wanted = metrics & TRACE_METRICS
            if geometry is None:
                wanted -= {"pl", "sf"}
            tables.update(analyze_trace(trace, wanted, speed, wavelength, options, geometry).tables)
        if mpcs is not None and metrics & MPC_METRICS:
            if len(mpcs) == 0:
                raise CliError("MPC record is empty", EXIT_FORMAT)
            interval = trace.interval if trace is not None else args.interval
            per_step = max(1, round((cfg.evolution.dt_bd if cfg else 0.1) / interval))
            tables.update(analyze_mpcs(mpcs, metrics & MPC_METRICS, interval, options, substream(args.seed, "analysis"), per_step).tables)
    except ValueError as exc:
        raise CliError(f"analysis failed: {exc}", EXIT_FORMAT) from None
    if not tables:
        raise CliError("no requested metric applies to the given input", EXIT_USAGE)
    with atomic_output(Path(args.out)) as tmp:
        for name, text in sorted(tables.items()):
            (tmp / f"{name}.csv").write_text(text)
        _manifest(tmp, "analyze", {"in": args.input, "metric": ",".join(sorted(metrics))}, sorted(f"{n}.csv" for n in tables), started, cfg.hash if cfg else None, args.seed)
    return EXIT_OK


def cmd_validate(args) -> int:
    started = time.perf_counter()
    cfg = _load_config(args.config)
    reference = None
    if args.reference:
        try:
            reference = load_reference(args.reference)
        except OSError as exc:
            raise CliError(f"cannot read reference {args.reference}: {exc}", EXIT_IO) from None
        except (ValueError, KeyError) as exc:
            raise CliError(f"malformed reference {args.reference}: {exc}", EXIT_FORMAT) from None
    rows, _ = validate(cfg, args.seed, reference)
    with atomic_output(Path(args.out)) as tmp:
        (tmp / "validation.csv").write_text(report_csv(rows))
        _manifest(tmp, "validate", {"config": args.config, "reference": args.reference}, ["validation.csv"], started, cfg.hash, args.seed)
    for r in rows:
        status = "PASS" if r.passed else ("FAIL" if r.enforced else "info")
        print(f"{status:4s} {r.metric}: fit ({r.fit_mu:.4g}, {r.fit_sigma:.4g}) vs reference ({r.ref_mu:.4g}, {r.ref_sigma:.4g})")
    return EXIT_OK if report_passed(rows) else EXIT_VALIDATION


def cmd_cdl(args) -> int:
    if args.list:
        for t in builtin_tables():
            print(f"{t.name}\t{t.n_rows} rows\tK={t.k_factor:.3f}\tDS={t.rms_delay_spread() * 1e9:.1f} ns")
        return EXIT_OK
    try:
        table = get_table(args.export)
    except KeyError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    if args.out:
        try:
            tmp = Path(args.out).with_name(f".{Path(args.out).name}.tmp")
            save_csv(table, tmp)
            os.replace(tmp, args.out)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    else:
        tmp_dir = Path(tempfile.mkdtemp())
        try:
            save_csv(table, tmp_dir / "t.csv")
            sys.stdout.write((tmp_dir / "t.csv").read_text())
        finally:
            shutil.rmtree(tmp_dir, ignore_errors=True)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="railchannel", description="Time-variant railway channel simulator and analysis toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one link and write trace, evolution log and MPCs")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="extract channel statistics from a trace, MPC file or simulate output directory")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--metric", nargs="+", choices=(*METRICS, "all"), default=["all"])
    a.add_argument("--out", required=True)
    a.add_argument("--config", help="config used for speed, wavelength and analysis options")
    a.add_argument("--speed", type=float, help="UT speed in m/s (overrides the config)")
    a.add_argument("--carrier", type=float, default=2160e6, help="carrier frequency in Hz when no config is given")
    a.add_argument("--interval", type=float, default=0.02, help="snapshot interval for MPC-only input")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("validate", help="simulate many links and compare fitted statistics to a reference")
    v.add_argument("--config", required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--reference", help="CSV with metric,family,mu,sigma,tol[,enforce]; built-in table if omitted")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("cdl", help="list or export the built-in CDL tables")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--list", action="store_true")
    g.add_argument("--export", metavar="NAME")
    c.add_argument("--out", help="write the exported table here instead of stdout")
    c.set_defaults(func=cmd_cdl)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
