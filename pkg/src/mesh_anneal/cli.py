"""Command-line entry point: ``mesh-anneal <command> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 threshold failure under
``--strict``, 3 calibration degeneracy.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import kernels
from .annealer import AnnealConfig
from .experiments import (DEFAULT_RESTARTS, DEFAULT_THRESHOLD, HARDWARE, IDEAL,
                          WavelengthTable, build_mesh, run_broadband_suite,
                          run_target_distribution, sweep_capability,
                          switch_campaign_telemetry)
from .geometry import GeometrySpec, length_table
from .hardware import (CALIBRATED_MA_PER_UNIT, HEATER_RESISTANCE, HeaterModel,
                       SweepFormatError, UnidentifiableError, default_heater_model,
                       fit_heater_model, read_sweep_csv)
from .mesh import Architecture

log = logging.getLogger("mesh_anneal")

EXIT_OK, EXIT_USAGE, EXIT_STRICT, EXIT_DEGENERATE = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_table(path: Path, header, rows, cfg: dict, seed) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash(cfg)} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError("config", f"file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config", "top level must be an object")
    # flags win over the document
    for key in ("seed", "out", "restarts", "mode", "threshold", "iterations"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "arch", None):
        cfg["architecture"] = args.arch
    if getattr(args, "strict", False):
        cfg["strict"] = True
    return cfg


def _get(cfg, key, kind, default):
    val = cfg.get(key, default)
    try:
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {val!r}") from None


def anneal_config(cfg: dict) -> AnnealConfig:
    doc = dict(cfg.get("anneal", {}))
    if not isinstance(doc, dict):
        raise ConfigError("anneal", "must be an object")
    known = {f.name for f in fields(AnnealConfig)}
    for k in doc:
        if k not in known:
            raise ConfigError(f"anneal.{k}", "unknown parameter")
    if "iterations" in cfg:
        doc["iterations"] = cfg["iterations"]
    doc["seed"] = _get(cfg, "seed", int, doc.get("seed", 0))
    try:
        return AnnealConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError("anneal", str(exc)) from None


def architecture(cfg, key="architecture", default="et") -> Architecture:
    try:
        return Architecture.parse(cfg.get(key, default))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def port_list(cfg, key, default, n_modes) -> list:
    val = cfg.get(key, default)
    if not isinstance(val, list) or not all(isinstance(v, int) for v in val):
        raise ConfigError(key, "must be a list of integers")
    for v in val:
        if not 0 <= v < n_modes:
            raise ConfigError(key, f"port {v} out of range")
    return val


def mode_and_model(cfg, mesh):
    mode = cfg.get("mode", IDEAL)
    if mode not in (IDEAL, HARDWARE):
        raise ConfigError("mode", f"expected 'ideal' or 'hardware', got {mode!r}")
    model = None
    if mode == HARDWARE:
        path = cfg.get("heater_model")
        if path:
            try:
                model = HeaterModel.load(path)
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError("heater_model", str(exc)) from None
            if model.n_heaters != mesh.n_phases:
                raise ConfigError("heater_model",
                                  f"{model.n_heaters} heaters for {mesh.n_phases} phases")
        else:
            model = default_heater_model(mesh)
    return mode, model


def wavelength_table(cfg) -> WavelengthTable:
    if "wavelengths" in cfg:
        wl = cfg["wavelengths"]
        if not isinstance(wl, dict) or not wl:
            raise ConfigError("wavelengths", "must be a non-empty {nm: T} object")
        try:
            return WavelengthTable.from_mapping(wl)
        except ValueError as exc:
            raise ConfigError("wavelengths", str(exc)) from None
    if "transmission" in cfg:
        T = _get(cfg, "transmission", float, None)
        if not 0 <= T <= 1:
            raise ConfigError("transmission", "must lie in [0, 1]")
        return WavelengthTable(((0.0, T),))
    return WavelengthTable.default()


def effective(cfg: dict, **resolved) -> dict:
    out = {k: v for k, v in cfg.items() if k != "out"}
    out.update({k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v)
                for k, v in resolved.items()})
    return out


def cmd_switch(args) -> int:
    cfg = load_config(args)
    arch = architecture(cfg)
    n_modes = _get(cfg, "n_modes", int, 8)
    table = wavelength_table(cfg)
    inputs = port_list(cfg, "inputs", [0, 1, 2, 3], n_modes)
    acfg = anneal_config(cfg)
    restarts = _get(cfg, "restarts", int, 1)
    threshold = _get(cfg, "threshold", float, DEFAULT_THRESHOLD)
    mesh = build_mesh(arch, n_modes, table.entries[0][1])
    mode, model = mode_and_model(cfg, mesh)
    out = Path(cfg.get("out", "results"))

    res = run_broadband_suite(table, inputs, acfg, arch, n_modes, mode, model,
                              restarts=restarts)
    eff = effective(cfg, architecture=arch.value, anneal=acfg, restarts=restarts)
    rows = [(r["wavelength"], r["input"], r["output"], r["fidelity"], r["iterations"])
            for r in res.records]
    write_table(out / "switch_results.csv",
                ["wavelength", "input", "output", "fidelity", "iterations"],
                rows, eff, acfg.seed)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    for r in res.records:
        stem = f"w{fmt(r['wavelength'])}_in{r['input']}_out{r['output']}"
        r["run"].save(traces / f"{stem}.csv", traces / f"{stem}.json")
    failed = [r for r in res.records if 1.0 - r["fidelity"] >= threshold]
    print(f"{len(rows)} runs, {len(failed)} above infidelity {threshold:g}")
    if cfg.get("strict") and failed:
        return EXIT_STRICT
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    n_modes = _get(cfg, "n_modes", int, 8)
    if "architectures" in cfg:
        archs = [architecture({"a": a}, "a") for a in cfg["architectures"]]
    elif "architecture" in cfg:
        archs = [architecture(cfg)]
    else:
        archs = [Architecture.ERROR_TOLERANT, Architecture.CLEMENTS]
    grid = cfg.get("T_grid", [round(0.45 + 0.05 * k, 2) for k in range(9)])
    if not isinstance(grid, list) or not grid:
        raise ConfigError("T_grid", "must be a non-empty list")
    try:
        grid = [float(T) for T in grid]
    except (TypeError, ValueError):
        raise ConfigError("T_grid", "entries must be numbers") from None
    if any(not 0 <= T <= 1 for T in grid):
        raise ConfigError("T_grid", "entries must lie in [0, 1]")
    inputs = port_list(cfg, "inputs", [0], n_modes)
    acfg = anneal_config(cfg)
    restarts = _get(cfg, "restarts", int, DEFAULT_RESTARTS)
    threshold = _get(cfg, "threshold", float, DEFAULT_THRESHOLD)
    if threshold <= 0:
        raise ConfigError("threshold", "must be > 0")
    jitter = cfg.get("jitter_scale")
    out = Path(cfg.get("out", "results"))

    rows, long_rows = [], []
    for arch in archs:
        cmap = sweep_capability(arch, grid, inputs, threshold, acfg, restarts,
                                n_modes, jitter)
        for r in cmap.records:
            rows.append((arch.value, r.input_port, r.transmission, r.capable,
                         r.worst_infidelity))
            for o, v in enumerate(r.per_output):
                long_rows.append((arch.value, r.input_port, r.transmission, o, v))
    eff = effective(cfg, architectures=[a.value for a in archs], T_grid=grid,
                    anneal=acfg, restarts=restarts, threshold=threshold)
    write_table(out / "capability_map.csv",
                ["architecture", "input", "T", "capable", "worst_infidelity"],
                rows, eff, acfg.seed)
    write_table(out / "capability_long.csv",
                ["architecture", "input", "T", "output", "infidelity"],
                long_rows, eff, acfg.seed)
    print(f"{len(rows)} capability records")
    if cfg.get("strict") and not all(r[3] for r in rows):
        return EXIT_STRICT
    return EXIT_OK


def cmd_target(args) -> int:
    cfg = load_config(args)
    arch = architecture(cfg)
    n_modes = _get(cfg, "n_modes", int, 8)
    T = _get(cfg, "transmission", float, 0.65)
    target = cfg.get("target", "uniform")
    if target == "uniform":
        target = [1.0 / n_modes] * n_modes
    try:
        target = np.asarray(target, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("target", "must be a list of numbers or 'uniform'") from None
    if target.shape != (n_modes,) or np.any(target < 0) or target.sum() <= 0:
        raise ConfigError("target", f"must be {n_modes} non-negative numbers")
    target = target / target.sum()
    port = _get(cfg, "input", int, 0)
    if not 0 <= port < n_modes:
        raise ConfigError("input", "port out of range")
    acfg = anneal_config(cfg)
    threshold = _get(cfg, "threshold", float, DEFAULT_THRESHOLD)
    mesh = build_mesh(arch, n_modes, T)
    mode, model = mode_and_model(cfg, mesh)
    out = Path(cfg.get("out", "results"))

    run = run_target_distribution(mesh, target, port, acfg, mode, model)
    out.mkdir(parents=True, exist_ok=True)
    run.save(out / "target_trace.csv", out / "target_run.json")
    eff = effective(cfg, architecture=arch.value, anneal=acfg,
                    target=[float(v) for v in target])
    write_table(out / "target_summary.csv", ["input", "best_infidelity", "evaluations"],
                [(port, run.best_infidelity, run.evaluations)], eff, acfg.seed)
    print(f"best infidelity {run.best_infidelity:.3e} after {run.evaluations} evaluations")
    if cfg.get("strict") and run.best_infidelity >= threshold:
        return EXIT_STRICT
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        sweeps = read_sweep_csv(args.sweep)
    except FileNotFoundError:
        print(f"error: sweep file not found: {args.sweep}", file=sys.stderr)
        return EXIT_USAGE
    except (SweepFormatError, ValueError) as exc:
        print(f"error: malformed sweep: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ma_per_unit = args.ma_per_unit
    fits, bad = [], []
    for h, sw in sweeps.items():
        port = args.port if args.port is not None else int(np.argmax(np.ptp(sw.powers, axis=0)))
        try:
            f = fit_heater_model(sw, port, ma_per_unit=ma_per_unit)
        except UnidentifiableError as exc:
            log.warning("heater %d: %s", h, exc)
            bad.append(h)
            continue
        except ValueError as exc:
            print(f"error: heater {h}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        fits.append((h, port, f))
    if bad:
        print("unidentifiable heaters: " + " ".join(str(h) for h in bad), file=sys.stderr)
        return EXIT_DEGENERATE
    model = HeaterModel(np.diag([f.alpha for _, _, f in fits]),
                        [f.phi0 for _, _, f in fits],
                        np.full(len(fits), args.resistance), ma_per_unit=ma_per_unit)
    report = [{"heater": h, "port": p, "A": f.A, "B": f.B, "alpha": f.alpha,
               "phi0": f.phi0, "rms_residual": f.rms} for h, p, f in fits]
    out = Path(args.model_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out, fits=report)
    for r in report:
        print(f"heater {r['heater']}: alpha={r['alpha']:.6g} phi0={r['phi0']:.6g} "
              f"rms={r['rms_residual']:.3g}")
    return EXIT_OK


def cmd_geometry(args) -> int:
    try:
        geo = GeometrySpec(args.radius, args.pitch, args.heater_length, args.gap,
                           args.interaction_length)
        table = length_table(geo, args.n_modes)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{'layout':<26}{'length_mm':>10}")
    for key in ("ErrorTolerant-Diagonal", "ClementsMZI-Diagonal", "ClementsMZI-Straight"):
        print(f"{key:<26}{table[key]:>10.2f}")
    print(f"{'reduction vs Straight':<26}{100 * table['reduction_vs_straight']:>9.1f}%")
    print(f"{'reduction vs Diagonal':<26}{100 * table['reduction_vs_diagonal']:>9.1f}%")
    return EXIT_OK


def cmd_telemetry(args) -> int:
    tel = switch_campaign_telemetry(args.heaters, args.inputs, args.outputs,
                                    args.wavelengths, args.iterations)
    counts = tel.per_heater_switches
    print(f"switches per heater: min={counts.min()} max={counts.max()}")
    print(f"total switches: {tel.total_switches}")
    if args.out:
        cfg = {k: getattr(args, k) for k in
               ("heaters", "inputs", "outputs", "wavelengths", "iterations")}
        write_table(Path(args.out) / "telemetry.csv", ["heater", "switches"],
                    enumerate(counts.tolist()), cfg, 0)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # exit 2 is reserved for --strict threshold failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mesh-anneal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON campaign document")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--strict", action="store_true",
                        help="exit 2 when any run misses the threshold")
    common.add_argument("--restarts", type=int)
    common.add_argument("--mode", choices=[IDEAL, HARDWARE])
    common.add_argument("--arch", choices=["et", "clements"])
    common.add_argument("--threshold", type=float)
    common.add_argument("--iterations", type=int, help="annealing budget per run")

    for name, fn, text in (("switch", cmd_switch, "port-to-port switching campaign"),
                           ("sweep", cmd_sweep, "switching capability over a T grid"),
                           ("target", cmd_target, "anneal to an arbitrary distribution")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=fn)

    p = sub.add_parser("calibrate", help="fit heater law to sweep CSV")
    p.add_argument("sweep", help="CSV with [heater,] current_mA, p_out_0..")
    p.add_argument("model_out", help="path of the fitted heater model JSON")
    p.add_argument("--port", type=int, help="output port to fit (default: most varying)")
    p.add_argument("--ma-per-unit", type=float, default=CALIBRATED_MA_PER_UNIT)
    p.add_argument("--resistance", type=float, default=HEATER_RESISTANCE)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("geometry", help="chip length of 8-mode layouts")
    p.add_argument("--radius", type=float, default=60.0, help="bend radius, mm")
    p.add_argument("--pitch", type=float, default=127.0, help="port pitch, um")
    p.add_argument("--gap", type=float, default=7.8, help="coupler gap, um")
    p.add_argument("--heater-length", type=float, default=2.7, help="mm")
    p.add_argument("--interaction-length", type=float, default=0.0, help="mm")
    p.add_argument("--n-modes", type=int, default=8)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("telemetry", help="heater switch bookkeeping of a campaign")
    p.add_argument("--heaters", type=int, default=56)
    p.add_argument("--inputs", type=int, default=4)
    p.add_argument("--outputs", type=int, default=8)
    p.add_argument("--wavelengths", type=int, default=3)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--out")
    p.set_defaults(func=cmd_telemetry)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    log.info("kernel backend: %s", kernels.BACKEND)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
