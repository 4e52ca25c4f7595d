"""Scenario runner: YAML scenarios in, traces and summaries out.

Usage::

    afcmem run fig3 --out results/ --resolution fast
    afcmem sweep fig4_sweep --param sequence.t_s_s --values 5.6e-6,7.6e-6
    afcmem optimize opt_control
    afcmem validate my_scenario.yaml

Scenario arguments are file paths or names of bundled scenarios. Exit
status is 0 on success, 1 for invalid scenarios and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from afcmem.optimize import SearchSpace, optimize_comb, optimize_control
from afcmem.protocol import (
    RESOLUTIONS,
    ControlSpec,
    EfficiencyReport,
    SequenceError,
    StorageSequence,
    check_capacity,
    run_afc_echo,
    run_spinwave_storage,
)
from afcmem.pulses import PulseError, gaussian_pulse
from afcmem.spectral import CombError, CombSpec

log = logging.getLogger("afcmem")

OUT_ENV = "AFCMEM_OUT"
MODES = ("afc_echo", "spinwave", "multimode", "sweep", "optimize")

# Field types: float, int, str, bool, "floats" (list of numbers), "space" (name -> [lo, hi, init]).
SCHEMA = {
    "material": {
        "homogeneous_linewidth_hz": float,
        "spin_fwhm_hz": float,
        "preparation_window_hz": float,
    },
    "comb": {
        "delta_hz": float,
        "gamma_hz": float,
        "d_peak": float,
        "d_background": float,
        "n_peaks": int,
        "peak_shape": str,
        "center_offset_hz": float,
    },
    "pulses": {
        "input": {"fwhm_s": float, "amplitude_hz": float},
        "control": {
            "kind": str,
            "duration_s": float,
            "peak_rabi_hz": float,
            "chirp_width_hz": float,
            "convention": str,
            "area_rad": float,
            "direction": str,
        },
    },
    "sequence": {
        "t_prime_s": float,
        "t_s_s": float,
        "mode_times_s": "floats",
        "readout_window_s": "floats",
        "control_profile": "floats",
    },
    "run": {
        "mode": str,
        "resolution": str,
        "seed": int,
        "output_dir": str,
        "convergence_check": bool,
        "sweep": {"param": str, "values": "floats", "mode": str},
    },
    "optimize": {
        "target": str,
        "budget": int,
        "band_hz": float,
        "delta_hz": float,
        "n_peaks": int,
        "convention": str,
        "parameters": "space",
    },
}

DEFAULTS = {
    "material": {
        "homogeneous_linewidth_hz": 1e3,
        "spin_fwhm_hz": 0.0,
        "preparation_window_hz": 18e6,
    },
    "comb": {
        "d_background": 0.0,
        "n_peaks": 9,
        "peak_shape": "gaussian",
        "center_offset_hz": 0.0,
    },
    "pulses": {
        "input": {"fwhm_s": 450e-9, "amplitude_hz": 1e3},
        "control": {
            "kind": "sech",
            "duration_s": 600e-9,
            "peak_rabi_hz": 1.2e6,
            "chirp_width_hz": 2e6,
            "convention": "fwhm",
            "area_rad": math.pi,
            "direction": "backward",
        },
    },
    "sequence": {
        "t_prime_s": 0.0,
        "t_s_s": 0.0,
        "mode_times_s": [0.0],
        "readout_window_s": None,
        "control_profile": None,
    },
    "run": {
        "resolution": "reference",
        "seed": 0,
        "output_dir": None,
        "convergence_check": False,
        "sweep": None,
    },
    "optimize": {
        "budget": 60,
        "band_hz": 2e6,
        "delta_hz": 1e6,
        "n_peaks": 9,
        "convention": "fwhm",
    },
}

REQUIRED = {
    "comb": ("delta_hz", "gamma_hz", "d_peak"),
    "run": ("mode",),
}


class ScenarioError(ValueError):
    """Invalid scenario document (exit status 1)."""


def _number(value, path, kind):
    if isinstance(value, bool):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    try:
        out = kind(float(value)) if kind is int else float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a number, got {value!r}") from None
    if kind is int and float(value) != out:
        raise ScenarioError(f"{path}: expected an integer, got {value!r}")
    if not math.isfinite(out):
        raise ScenarioError(f"{path}: value must be finite")
    return out


def _check(value, kind, path):
    if isinstance(kind, dict):
        if not isinstance(value, dict):
            raise ScenarioError(f"{path}: expected a mapping")
        unknown = sorted(set(value) - set(kind))
        if unknown:
            raise ScenarioError(f"{path}: unknown key(s) {', '.join(unknown)}")
        return {k: _check(v, kind[k], f"{path}.{k}") for k, v in value.items()}
    if value is None:
        return None
    if kind in (float, int):
        return _number(value, path, kind)
    if kind is str:
        if not isinstance(value, str):
            raise ScenarioError(f"{path}: expected a string")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"{path}: expected true or false")
        return value
    if kind == "floats":
        if not isinstance(value, list):
            raise ScenarioError(f"{path}: expected a list of numbers")
        return [_number(v, f"{path}[{i}]", float) for i, v in enumerate(value)]
    if kind == "space":
        if not isinstance(value, dict):
            raise ScenarioError(f"{path}: expected a mapping of name -> [lower, upper, initial]")
        out = {}
        for name, triple in value.items():
            if not isinstance(triple, list) or len(triple) != 3:
                raise ScenarioError(f"{path}.{name}: expected [lower, upper, initial]")
            out[name] = [_number(v, f"{path}.{name}[{i}]", float) for i, v in enumerate(triple)]
        return out
    raise AssertionError(kind)


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def canonical_hash(params: dict) -> str:
    text = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class Scenario:
    params: dict
    source: str = "<string>"

    @property
    def mode(self) -> str:
        return self.params["run"]["mode"]

    @property
    def hash(self) -> str:
        return canonical_hash(self.params)

    def comb(self) -> CombSpec:
        c = self.params["comb"]
        return CombSpec(
            delta=c["delta_hz"], gamma=c["gamma_hz"], d_peak=c["d_peak"],
            d_background=c["d_background"], n_peaks=c["n_peaks"], peak_shape=c["peak_shape"],
            center_offset=c["center_offset_hz"],
            window=self.params["material"]["preparation_window_hz"],
        )

    def control(self) -> ControlSpec:
        c = self.params["pulses"]["control"]
        return ControlSpec(kind=c["kind"], duration=c["duration_s"], peak_rabi=c["peak_rabi_hz"],
                           chirp_width=c["chirp_width_hz"], convention=c["convention"],
                           area=c["area_rad"], direction=c["direction"])

    def sequence(self, mode: str | None = None) -> StorageSequence:
        mode = mode or self.mode
        p = self.params
        s = p["sequence"]
        with_controls = mode in ("spinwave", "multimode")
        window = s["readout_window_s"]
        return StorageSequence(
            comb=self.comb(),
            input_fwhm=p["pulses"]["input"]["fwhm_s"],
            input_amplitude=p["pulses"]["input"]["amplitude_hz"],
            mode_times=tuple(s["mode_times_s"]),
            control=self.control() if with_controls else None,
            t_prime=s["t_prime_s"] if with_controls else 0.0,
            t_s=s["t_s_s"] if with_controls else 0.0,
            spin_fwhm=p["material"]["spin_fwhm_hz"],
            homogeneous_linewidth=p["material"]["homogeneous_linewidth_hz"],
            control_profile=None if s["control_profile"] is None else tuple(s["control_profile"]),
            resolution=p["run"]["resolution"],
            readout_window=None if window is None else tuple(window),
        )

    def with_value(self, path: str, value) -> "Scenario":
        params = copy.deepcopy(self.params)
        node = params
        keys = path.split(".")
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ScenarioError(f"sweep parameter {path!r} does not name a scenario field")
            node = node[k]
        if keys[-1] not in node:
            raise ScenarioError(f"sweep parameter {path!r} does not name a scenario field")
        node[keys[-1]] = value
        return _validated(params, self.source)


def _validated(params: dict, source: str) -> Scenario:
    scen = Scenario(params, source)
    mode = params["run"]["mode"]
    if mode not in MODES:
        raise ScenarioError(f"run.mode: must be one of {', '.join(MODES)}, got {mode!r}")
    if params["run"]["resolution"] not in RESOLUTIONS:
        raise ScenarioError(f"run.resolution: must be one of {', '.join(RESOLUTIONS)}")
    try:
        scen.comb()
    except (CombError, ValueError) as exc:
        raise ScenarioError(f"comb: {exc}") from None
    sweep = params["run"]["sweep"]
    if mode == "sweep" and (sweep is None or not sweep.get("param") or not sweep.get("values")):
        raise ScenarioError("run.sweep: sweep mode needs 'param' and 'values'")
    if mode == "optimize":
        opt = params.get("optimize")
        if opt is None or opt.get("target") not in ("control", "comb"):
            raise ScenarioError("optimize.target: must be 'control' or 'comb'")
        if opt.get("parameters"):
            try:
                SearchSpace.from_dict(opt["parameters"])
            except ValueError as exc:
                raise ScenarioError(f"optimize.parameters: {exc}") from None
        return scen
    run_mode = sweep.get("mode", "spinwave") if mode == "sweep" else mode
    try:
        scen.sequence(run_mode)
    except (SequenceError, PulseError, ValueError) as exc:
        raise ScenarioError(f"sequence: {exc}") from None
    return scen


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate a YAML scenario; all invariants are checked here."""
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError(f"{source}: syntax error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: syntax error: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping of blocks")
    doc = _check(doc, SCHEMA, "scenario")
    missing = [b for b in REQUIRED if b not in doc]
    if missing:
        raise ScenarioError(f"{source}: missing required block(s): {', '.join(missing)}")
    for block, keys in REQUIRED.items():
        absent = [k for k in keys if doc[block].get(k) is None]
        if absent:
            raise ScenarioError(f"{block}: missing required field(s): {', '.join(absent)}")
    params = _merge(DEFAULTS, doc)
    if params["run"]["sweep"] is not None:
        params["run"]["sweep"].setdefault("mode", "spinwave")
    if "optimize" not in doc:
        del params["optimize"]
    return _validated(params, source)


def bundled_scenarios() -> list[str]:
    root = resources.files("afcmem") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    if ref in bundled_scenarios():
        res = resources.files("afcmem") / "scenarios" / f"{ref}.yaml"
        return parse_scenario(res.read_text(), ref)
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")


def _clean(obj):
    """JSON-ready copy: numpy scalars to floats, tuples to lists, nan to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _report_dict(rep: EfficiencyReport) -> dict:
    return _clean(rep.to_dict())


def _single(scen: Scenario, mode: str, echo=None):
    seq = scen.sequence(mode)
    if mode == "afc_echo":
        return run_afc_echo(seq)
    if mode == "multimode":
        check_capacity(seq)
    return run_spinwave_storage(seq, echo)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) for v in row])


def execute(scen: Scenario, out: Path, command: str | None = None) -> dict:
    """Run a scenario and write its artifacts to ``out``; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    mode = "optimize" if command == "optimize" else ("sweep" if command == "sweep" else scen.mode)
    summary: dict = {"scenario_hash": scen.hash, "source": scen.source, "mode": mode,
                     "resolved": _clean(scen.params)}
    files: list[Path] = []
    res = RESOLUTIONS[scen.params["run"]["resolution"]]
    summary["grid"] = {"preset": scen.params["run"]["resolution"], "dt_s": res.dt,
                       "n_slices": res.n_slices, "classes_per_tooth": res.classes_per_tooth,
                       "n_spin": res.n_spin}

    if mode in ("afc_echo", "spinwave", "multimode"):
        record, rep = _single(scen, mode)
        summary["report"] = _report_dict(rep)
        files.append(record.to_csv(out / "trace.csv"))
        if scen.params["run"]["convergence_check"]:
            res_name = scen.params["run"]["resolution"]
            finer = {"fast": "reference", "reference": "converged"}.get(res_name)
            if finer is None:
                summary["grid_converged"] = None
            else:
                params = copy.deepcopy(scen.params)
                params["run"]["resolution"] = finer
                _, rep2 = _single(Scenario(params, scen.source), mode)
                change = abs(rep2.eta_total - rep.eta_total) / max(rep.eta_total, 1e-300)
                summary["grid_converged"] = bool(change < 0.01)
                summary["grid_change"] = change
                log.info("grid check %s -> %s: relative change %.3g", res_name, finer, change)
        else:
            summary["grid_converged"] = None
    elif mode == "sweep":
        sweep = scen.params["run"]["sweep"]
        sub_mode = sweep["mode"]
        echo = None
        if sub_mode != "afc_echo" and sweep["param"].startswith(("sequence.", "pulses.control.")):
            echo = run_afc_echo(scen.sequence(sub_mode).without_controls())[1]
        reports = []
        for v in sweep["values"]:
            s = scen.with_value(sweep["param"], v)
            record, rep = _single(s, sub_mode, echo)
            reports.append(rep)
            files.append(record.to_csv(out / f"trace_{len(reports):03d}.csv"))
        summary["sweep"] = {"param": sweep["param"], "values": sweep["values"],
                            "reports": [_report_dict(r) for r in reports]}
        rows = [(v, r.eta_total, r.eta_e, r.echo_time) for v, r in zip(sweep["values"], reports)]
        p = out / "sweep.csv"
        _write_csv(p, ["value", "eta_total", "eta_e", "echo_time_s"], rows)
        files.append(p)
        if sweep["param"] == "sequence.t_s_s":
            p = out / "decay.csv"
            _write_csv(p, ["t_s_s", "eta_total"], [(v, r.eta_total) for v, r in
                                                   zip(sweep["values"], reports)])
            files.append(p)
        summary["grid_converged"] = None
    else:
        opt = scen.params.get("optimize")
        if opt is None:
            raise ScenarioError("optimize: block missing")
        space = SearchSpace.from_dict(opt["parameters"]) if opt.get("parameters") else None
        seed = scen.params["run"]["seed"]
        if opt["target"] == "control":
            result = optimize_control(space, band=opt["band_hz"], budget=opt["budget"], seed=seed,
                                      convention=opt["convention"])
        else:
            inp = scen.params["pulses"]["input"]
            pulse = gaussian_pulse(inp["fwhm_s"], inp["amplitude_hz"], dt=RESOLUTIONS["fast"].dt)
            result = optimize_comb(space, opt["delta_hz"], pulse, budget=opt["budget"], seed=seed,
                                   n_peaks=opt["n_peaks"],
                                   final_resolution=scen.params["run"]["resolution"])
            p = out / "tradeoff.csv"
            _write_csv(p, ["finesse", "eta_e"], result.tradeoff)
            files.append(p)
        files.append(result.trace_to_csv(out / "optimization_trace.csv"))
        summary["optimization"] = _clean({
            "target": opt["target"], "best": result.best, "best_value": result.best_value,
            "final_value": result.final_value, "initial_value": result.initial_value,
            "evaluations": result.evaluations,
        })
        summary["grid_converged"] = None

    summary["timings"] = {"wall_s": time.perf_counter() - started}
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(summary_path)
    manifest = {
        "scenario_hash": scen.hash,
        "files": [{"name": f.name, "bytes": f.stat().st_size,
                   "sha256": hashlib.sha256(f.read_bytes()).hexdigest()} for f in files],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return summary


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ScenarioError(f"--values: cannot parse {text!r} as comma-separated numbers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afcmem", description="AFC memory scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("run", "run a scenario"), ("sweep", "sweep one scenario field"),
                       ("optimize", "run the scenario's optimize block"),
                       ("validate", "parse and validate only")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario", help="scenario file or bundled scenario name")
        if name != "validate":
            p.add_argument("--out", type=Path, default=None,
                           help=f"output directory (default: ${OUT_ENV} or ./afcmem_out)")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--resolution", choices=sorted(RESOLUTIONS), default=None)
        if name == "sweep":
            p.add_argument("--param", default=None,
                           help="dotted field path, e.g. sequence.t_s_s (default: scenario's run.sweep)")
            p.add_argument("--values", default=None, help="comma-separated values")
            p.add_argument("--mode", default=None, choices=["afc_echo", "spinwave", "multimode"])
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_overrides(scen: Scenario, args) -> Scenario:
    params = copy.deepcopy(scen.params)
    if getattr(args, "seed", None) is not None:
        params["run"]["seed"] = args.seed
    if getattr(args, "resolution", None) is not None:
        params["run"]["resolution"] = args.resolution
    if args.command == "sweep":
        sweep = dict(params["run"]["sweep"] or {})
        if args.param is not None:
            sweep["param"] = args.param
        if args.values is not None:
            sweep["values"] = _parse_values(args.values)
        if not sweep.get("param") or not sweep.get("values"):
            raise ScenarioError("sweep needs --param and --values (or a run.sweep block)")
        sweep["mode"] = args.mode or sweep.get("mode") or (
            scen.mode if scen.mode in ("afc_echo", "spinwave", "multimode") else "spinwave")
        params["run"]["sweep"] = sweep
        params["run"]["mode"] = "sweep"
        scen.with_value(sweep["param"], sweep["values"][0])
    if args.command == "optimize":
        params["run"]["mode"] = "optimize"
    return _validated(params, scen.source)


def _out_dir(args, scen: Scenario) -> Path:
    if args.out is not None:
        return args.out
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(scen.params["run"]["output_dir"] or "afcmem_out")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        scen = _apply_overrides(load_scenario(args.scenario), args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    if args.command == "validate":
        print(f"{scen.source}: ok (mode {scen.mode}, hash {scen.hash[:12]})")
        return 0
    try:
        summary = execute(scen, _out_dir(args, scen), args.command)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    rep = summary.get("report")
    if rep is not None:
        print(f"eta_total={rep['eta_total']:.4g} eta_e={rep['eta_e']:.4g} "
              f"output_time={rep['echo_time']}")
    elif "optimization" in summary:
        print(f"best={summary['optimization']['best']} value={summary['optimization']['best_value']:.4g}")
    else:
        print(f"sweep of {summary['sweep']['param']} over {len(summary['sweep']['values'])} values")
    return 0


if __name__ == "__main__":
    sys.exit(main())
