"""Command-line front end: config ingestion, the build pipeline and reports.

Pipeline: optional deadbeat pre-feedback, the one-step-delay lift for
non-measurable disturbances, the Mealy machine, then the implicit set.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import errors
from .linsys import (MEASURABLE, NON_MEASURABLE, FeedbackTransform, LinearSystem, apply_prefeedback,
                     chain_of_integrators, deadbeat_gain, lane_keeping_standin, lift_nonmeasurable,
                     system_from_config)
from .lp import chebyshev_center
from .mealy import dominance_report, machine_from_config
from .oracle import invariance_audit, maximal_rcis, mc_volume_ratio, polytope_predicate, sample_members
from .polytope import bounding_box, is_empty, project
from .rcis import ImplicitRcis, batch_membership, compute_implicit_rcis, explicit_projection, fiber_check
from .supervisor import QpStatus, plot_trajectories, simulate, vertex_switching_trace

log = logging.getLogger("implicit_rcis")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_ASSUMPTION = 4
EXIT_NUMERICAL = 5
EXIT_CAP = 6
EXIT_UNBOUNDED = 7
EXIT_BREACH = 8
EXIT_IO = 9

EXIT_CODES = {
    EXIT_OK: "success (an empty invariant set is a success and is reported as such)",
    EXIT_INTERNAL: "unexpected internal error",
    EXIT_USAGE: "command-line usage error",
    EXIT_CONFIG: "invalid config or scenario (JSON syntax, schema, dimensions)",
    EXIT_ASSUMPTION: "plant assumption violated (A not nilpotent, (A, B) not controllable)",
    EXIT_NUMERICAL: "numerical failure (LP/QP breakdown, non-monotone oracle)",
    EXIT_CAP: "size cap exceeded (Fourier-Motzkin rows, machine states, reachable set)",
    EXIT_UNBOUNDED: "unbounded set where a bounded one is required",
    EXIT_BREACH: "supervision contract breach (infeasible step from a member state)",
    EXIT_IO: "file not found or unreadable",
}

# errors checked in order; subclasses of ValueError must precede the config entry
_ERROR_EXITS = (
    (errors.ConfigError, EXIT_CONFIG),
    (errors.DimensionMismatch, EXIT_CONFIG),
    (errors.NotNilpotent, EXIT_ASSUMPTION),
    (errors.NotControllable, EXIT_ASSUMPTION),
    (errors.NumericalFailure, EXIT_NUMERICAL),
    (errors.ExplosionLimit, EXIT_CAP),
    (errors.StateCountExceedsCap, EXIT_CAP),
    (errors.ReachSetExceedsCap, EXIT_CAP),
    (errors.DimensionTooHigh, EXIT_CAP),
    (errors.UnboundedCsub, EXIT_UNBOUNDED),
    (errors.UnboundedDirection, EXIT_UNBOUNDED),
    (errors.UnboundedPolytope, EXIT_UNBOUNDED),
    (errors.ContractBreach, EXIT_BREACH),
    (FileNotFoundError, EXIT_IO),
    (IsADirectoryError, EXIT_IO),
)

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_HREP = {"type": "object", "required": ["G", "h"], "additionalProperties": False,
         "properties": {"G": _MATRIX, "h": _VECTOR, "dim": {"type": "integer", "minimum": 0}}}
_MODE = {"enum": [MEASURABLE, NON_MEASURABLE]}
_PREFEEDBACK = {"oneOf": [
    {"enum": ["auto", "none"]},
    {"type": "object", "required": ["K"], "additionalProperties": False, "properties": {"K": _MATRIX}},
]}

_MACHINE_SCHEMA = {"oneOf": [
    {"type": "object", "required": ["kind", "L"], "additionalProperties": False,
     "properties": {"kind": {"enum": ["simple_loop", "tree"]}, "L": {"type": "integer", "minimum": 1}}},
    {"type": "object", "required": ["kind", "transition", "output"], "additionalProperties": False,
     "properties": {"kind": {"const": "custom"},
                    "states": {"type": "array", "items": {"type": "string"}},
                    "transition": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
                    "output": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
                    "n_symbols": {"type": "integer", "minimum": 1}}},
]}

_PLANT_SCHEMA = {"oneOf": [
    {"type": "object", "required": ["preset", "n"], "additionalProperties": False,
     "properties": {"preset": {"const": "integrator"}, "n": {"type": "integer", "minimum": 1},
                    "d_max": {"type": "number", "minimum": 0}, "x_max": {"type": "number", "exclusiveMinimum": 0},
                    "u_max": {"type": "number", "exclusiveMinimum": 0}, "disturbance": _MODE}},
    {"type": "object", "required": ["preset"], "additionalProperties": False,
     "properties": {"preset": {"const": "lane_keeping"}, "rd_max": {"type": "number", "minimum": 0},
                    "speed": {"type": "number", "exclusiveMinimum": 0},
                    "dt": {"type": "number", "exclusiveMinimum": 0}, "disturbance": _MODE}},
    {"type": "object", "required": ["A", "B", "D", "S"], "additionalProperties": False,
     "properties": {"A": _MATRIX, "B": _MATRIX, "S": _HREP, "disturbance": _MODE,
                    "name": {"type": "string"},
                    "D": {"oneOf": [
                        {"type": "object", "required": ["vertices"], "additionalProperties": False,
                         "properties": {"vertices": _MATRIX}},
                        {"type": "object", "required": ["polytope"], "additionalProperties": False,
                         "properties": {"polytope": _HREP}}]}}},
]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["plant", "machine"],
    "additionalProperties": False,
    "properties": {
        "plant": _PLANT_SCHEMA,
        "machine": _MACHINE_SCHEMA,
        "pipeline": {"type": "object", "additionalProperties": False, "properties": {
            "prefeedback": _PREFEEDBACK,
            "lift": {"enum": ["auto", "none"]},
            "prune": {"type": "boolean"},
            "explicit": {"type": "boolean"},
            "projection": {"enum": ["auto", "fm", "support"]}}},
        "oracle": {"type": "object", "additionalProperties": False, "properties": {
            "max_iter": {"type": "integer", "minimum": 1},
            "N_mc": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
            "audit_samples": {"type": "integer", "minimum": 0},
            "arms": {"type": "array", "items": _MACHINE_SCHEMA}}},
        "output": {"type": "object", "additionalProperties": False, "properties": {
            "dir": {"type": "string"}}},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["T"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "T": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "x0": {"oneOf": [_VECTOR, {"enum": ["center", "sample"]}]},
        "policy": {"oneOf": [
            {"type": "object", "required": ["K"], "additionalProperties": False, "properties": {"K": _MATRIX}},
            {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"const": "zero"}}}]},
        "disturbance": {"oneOf": [
            {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"const": "vertex_switching"}, "seed": {"type": "integer", "minimum": 0},
                            "hold": {"type": "integer", "minimum": 1}}},
            {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"const": "zero"}}},
            {"type": "object", "required": ["kind", "t_on", "t_off", "value"], "additionalProperties": False,
             "properties": {"kind": {"const": "step"}, "t_on": {"type": "integer", "minimum": 0},
                            "t_off": {"type": "integer", "minimum": 0}, "value": _VECTOR}},
            {"type": "object", "required": ["kind", "values"], "additionalProperties": False,
             "properties": {"kind": {"const": "trace"}, "values": _MATRIX}}]},
        "explicit_arm": {"type": "boolean"},
        "state_names": {"type": "array", "items": {"type": "string"}},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_PIPELINE_DEFAULTS = {"prefeedback": "auto", "lift": "auto", "prune": True, "explicit": False,
                      "projection": "auto"}
_ORACLE_DEFAULTS = {"max_iter": 200, "N_mc": 10_000, "seed": 0, "audit_samples": 1000, "arms": []}


def _locate(text: str, path) -> tuple[int, int]:
    """Line and column of the key path in the JSON text (best effort)."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if m is None:
                break
            pos = m.start()
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _load_json(path, schema: dict) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validate(data, schema, text, str(path))
    return data


def validate(data: dict, schema: dict = CONFIG_SCHEMA, text: str | None = None, source: str = "<config>"):
    """Schema check; the error names the file position of the offending key."""
    validator = jsonschema.Draft202012Validator(schema)
    found = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if not found:
        return
    err = jsonschema.exceptions.best_match(found)
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "oneOf" and err.context:
        # report the branch that got furthest
        err = max(err.context, key=lambda e: len(e.absolute_path))
        where = "/".join(str(p) for p in err.absolute_path) or where
    path = list(err.absolute_path)
    if err.validator == "additionalProperties":
        extra = re.findall(r"'([^']+)' (?:was|were) unexpected|'([^']+)'", err.message)
        if extra:
            path.append(next(a or b for a, b in extra))
    line, col = _locate(text, path) if text is not None else (0, 0)
    raise errors.ConfigError(f"{source}:{line}:{col}: {where}: {err.message}")


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""
    plant: dict
    machine: dict
    pipeline: dict = field(default_factory=lambda: dict(_PIPELINE_DEFAULTS))
    oracle: dict = field(default_factory=lambda: dict(_ORACLE_DEFAULTS))
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data: dict, text: str | None = None, source: str = "<config>") -> "RunConfig":
        validate(data, CONFIG_SCHEMA, text, source)
        return cls(plant=dict(data["plant"]), machine=dict(data["machine"]),
                   pipeline={**_PIPELINE_DEFAULTS, **data.get("pipeline", {})},
                   oracle={**_ORACLE_DEFAULTS, **data.get("oracle", {})},
                   output_dir=data.get("output", {}).get("dir", "out"))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        data = _load_json(path, CONFIG_SCHEMA)
        return cls.from_dict(data, source=str(path))

    def to_dict(self) -> dict:
        return {"plant": self.plant, "machine": self.machine, "pipeline": self.pipeline,
                "oracle": self.oracle, "output": {"dir": self.output_dir}}


def preset_config(name: str) -> RunConfig:
    """``integrator:<n>[:<L>]`` or ``lane_keeping[:<L>]``; tree machine, default ``L = 4``."""
    parts = name.split(":")
    try:
        if parts[0] == "integrator":
            n = int(parts[1])
            L = int(parts[2]) if len(parts) > 2 else 4
            plant = {"preset": "integrator", "n": n}
        elif parts[0] == "lane_keeping":
            L = int(parts[1]) if len(parts) > 1 else 4
            plant = {"preset": "lane_keeping"}
        else:
            raise errors.ConfigError(f"unknown preset {name!r}")
    except (IndexError, ValueError) as exc:
        raise errors.ConfigError(f"malformed preset {name!r}; use integrator:<n>[:<L>] "
                                 f"or lane_keeping[:<L>]") from exc
    return RunConfig.from_dict({"plant": plant, "machine": {"kind": "tree", "L": L}})


def parse_machine_override(spec: str) -> dict:
    m = re.fullmatch(r"(simple_loop|tree):(\d+)", spec)
    if m is None:
        raise errors.ConfigError(f"--machine expects simple_loop:<L> or tree:<L>, got {spec!r}")
    return {"kind": m.group(1), "L": int(m.group(2))}


def plant_from_config(cfg: dict) -> LinearSystem:
    preset = cfg.get("preset")
    if preset == "integrator":
        sys_ = chain_of_integrators(cfg["n"], cfg.get("d_max", 0.1), cfg.get("x_max", 1.0),
                                    cfg.get("u_max", 1.0))
        if cfg.get("disturbance", MEASURABLE) != MEASURABLE:
            sys_ = replace(sys_, disturbance_mode=cfg["disturbance"])
        return sys_
    if preset == "lane_keeping":
        return lane_keeping_standin(cfg.get("rd_max", 0.015), cfg.get("speed", 30.0),
                                    cfg.get("dt", 0.1), cfg.get("disturbance", MEASURABLE))
    plant, _ = system_from_config({**cfg, "prefeedback": "none"})
    return plant


@dataclass
class BuildResult:
    plant: LinearSystem
    design_plant: LinearSystem
    gain: np.ndarray
    machine: object
    rcis: ImplicitRcis
    report: dict


def design_plant(plant: LinearSystem, pipeline: dict) -> tuple[LinearSystem, np.ndarray]:
    """Apply pre-feedback and the delay lift; returns the plant the set is built for."""
    pf = pipeline.get("prefeedback", "auto")
    if pf == "auto":
        fb = deadbeat_gain(plant.A, plant.B)
    elif pf == "none":
        fb = FeedbackTransform(np.zeros((plant.m, plant.n)))
    else:
        fb = FeedbackTransform(np.atleast_2d(np.asarray(pf["K"], float)))
    design = apply_prefeedback(plant, fb) if np.any(fb.K) else plant
    if design.h_nilp is None:
        raise errors.NotNilpotent(
            "the nilpotency assumption fails: A" + (" + B K" if np.any(fb.K) else "")
            + " is not nilpotent; set pipeline.prefeedback to 'auto' or supply a deadbeat K")
    if not design.measurable:
        if pipeline.get("lift", "auto") != "auto":
            raise errors.ConfigError("non-measurable disturbances need pipeline.lift = 'auto'")
        design = lift_nonmeasurable(design)
    return design, np.asarray(fb.K, float)


def build(cfg: RunConfig) -> BuildResult:
    t0 = time.perf_counter()
    plant = plant_from_config(cfg.plant)
    design, K = design_plant(plant, cfg.pipeline)
    machine = machine_from_config(cfg.machine, design.D_v.shape[0], design.m)
    rcis = compute_implicit_rcis(design, machine, prune=cfg.pipeline["prune"])
    prov = dict(rcis.provenance)
    prov.update({"plant": plant.fingerprint(), "prefeedback_K": K.tolist(),
                 "lifted": not plant.measurable, "disturbance": plant.disturbance_mode})
    rcis = replace(rcis, provenance=prov)
    report = {"kind": rcis.kind, "empty": rcis.is_empty, "n_state": rcis.n_state,
              "dim": rcis.polytope.dim, "rows": rcis.polytope.n_rows,
              "machine_states": machine.n_states, "s_dom": rcis.s_dom, "q0": list(rcis.q0),
              "nilpotency_index": design.h_nilp, "build": rcis.report,
              "seconds": time.perf_counter() - t0}
    return BuildResult(plant, design, K, machine, rcis, report)


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()], float)
    except ValueError as exc:
        raise errors.ConfigError(f"cannot parse point {text!r}") from exc


def _config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    elif getattr(args, "preset", None):
        cfg = preset_config(args.preset)
    else:
        raise errors.ConfigError("give --config or --preset")
    if getattr(args, "machine", None):
        cfg.machine = parse_machine_override(args.machine)
    if getattr(args, "seed", None) is not None:
        cfg.oracle["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        cfg.oracle["N_mc"] = args.samples
        cfg.oracle["audit_samples"] = args.samples
    if getattr(args, "max_iter", None) is not None:
        cfg.oracle["max_iter"] = args.max_iter
    if getattr(args, "explicit", False):
        cfg.pipeline["explicit"] = True
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    res = build(cfg)
    _dump_json(res.rcis.to_dict(), out / "rcis.json")
    report = dict(res.report)
    if cfg.pipeline["explicit"] and not res.rcis.is_empty:
        t0 = time.perf_counter()
        C = explicit_projection(res.rcis, method=cfg.pipeline["projection"])
        report["explicit"] = {"rows": C.n_rows, "seconds": time.perf_counter() - t0}
        _dump_json(C.to_dict(), out / "explicit.json")
    _dump_json(report, out / "report.json")
    _emit({"status": "empty" if res.rcis.is_empty else "nonempty", "kind": res.rcis.kind,
           "rows": res.rcis.polytope.n_rows, "dim": res.rcis.polytope.dim,
           "out": str(out / "rcis.json")})
    return EXIT_OK


def _load_rcis(path) -> ImplicitRcis:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return ImplicitRcis.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise errors.ConfigError(f"{path}: not an rcis artifact ({exc})") from exc


def cmd_check(args) -> int:
    rcis = _load_rcis(args.rcis)
    x = _parse_point(args.x)
    if x.size != rcis.n_state:
        raise errors.DimensionMismatch(f"point has length {x.size}, the set lives in R^{rcis.n_state}")
    if args.explicit:
        C = explicit_projection(rcis)
        scale = np.maximum(np.linalg.norm(C.G, axis=1), 1e-12)
        slack = float(np.min((C.h - C.G @ x) / scale)) if C.n_rows else np.inf
        _emit({"member": bool(slack >= -1e-7), "slack": slack, "method": "explicit"})
        return EXIT_OK
    res = fiber_check(rcis, x)
    slack = float(res.slack) if np.isfinite(res.slack) else None
    out = {"member": bool(res.member), "slack": slack, "method": "implicit"}
    if res.certificate is not None:
        w = np.asarray(res.certificate)
        n_lift = rcis.n_plant - rcis.n_state
        n_theta = rcis.m * rcis.L
        out["lift"] = w[:n_lift].tolist()
        out["theta"] = w[n_lift:n_lift + n_theta].tolist()
        if w.size > n_lift + n_theta:
            out["lambda_vars"] = w[n_lift + n_theta:].tolist()
    _emit(out)
    return EXIT_OK


def _arm_name(mcfg: dict) -> str:
    return f"{mcfg['kind']} L={mcfg['L']}" if "L" in mcfg else mcfg["kind"]


def compare(cfg: RunConfig, timing: bool = True) -> tuple[list[dict], dict]:
    """Oracle versus the configured machine and every extra arm.

    Volume percentages are Monte-Carlo ratios over the oracle's bounding box.
    """
    plant = plant_from_config(cfg.plant)
    orc = maximal_rcis(plant, max_iter=cfg.oracle["max_iter"])
    N, seed = cfg.oracle["N_mc"], cfg.oracle["seed"]
    rows = [{"method": "maximal RCIS (oracle)", "time_s": orc.wall_time, "vol_pct": 100.0,
             "ci_pct": 0.0, "empty": is_empty(orc.set)}]
    detail = {"oracle": {"iterations": orc.iterations, "converged": orc.converged,
                         "rows": orc.set.n_rows, "seconds": orc.wall_time},
              "samples": N, "seed": seed, "arms": []}
    if is_empty(orc.set):
        box = None
    else:
        box = bounding_box(orc.set)
    ref = polytope_predicate(orc.set)
    for mcfg in [cfg.machine] + list(cfg.oracle["arms"]):
        sub = replace(cfg, machine=mcfg)
        res = build(sub)
        if res.rcis.is_empty or box is None:
            est = None
            pct, ci = 0.0, 0.0
        else:
            est = mc_volume_ratio(lambda X, r=res.rcis: batch_membership(r, X), ref, box, N, seed)
            pct, ci = 100.0 * est.ratio, 100.0 * est.half_width
        rows.append({"method": f"implicit {_arm_name(mcfg)}", "time_s": res.report["seconds"],
                     "vol_pct": pct, "ci_pct": ci, "empty": res.rcis.is_empty})
        detail["arms"].append({"machine": mcfg, "kind": res.rcis.kind, "empty": res.rcis.is_empty,
                               "vol_pct": pct, "ci_pct": ci,
                               "hits": None if est is None else [est.hits_a, est.hits_b],
                               "seconds": res.report["seconds"]})
    if not orc.converged:
        detail["warning"] = "oracle did not converge; percentages are relative to an outer bound"
    if not timing:
        for r in rows:
            r["time_s"] = None
    return rows, detail


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "time_s", "vol_pct"])
    for r in rows:
        t = "" if r["time_s"] is None else f"{r['time_s']:.3f}"
        w.writerow([r["method"], t, f"{r['vol_pct']:.2f}"])
    return buf.getvalue()


def cmd_compare(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg)
    rows, detail = compare(cfg, timing=not args.no_timing)
    (out / "compare.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    _dump_json(detail, out / "compare.json")
    res = build(cfg)
    if not res.rcis.is_empty and cfg.oracle["audit_samples"] > 0:
        audit = invariance_audit(res.rcis, res.plant, cfg.oracle["audit_samples"], cfg.oracle["seed"])
        _dump_json(audit.to_dict(), out / "audit.json")
    sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK


def disturbance_trace(plant: LinearSystem, spec: dict, T: int) -> np.ndarray:
    kind = spec.get("kind", "vertex_switching")
    if kind == "vertex_switching":
        rng = np.random.default_rng(spec.get("seed", 0))
        return vertex_switching_trace(plant, T, rng, spec.get("hold", 1))
    if kind == "zero":
        return np.zeros((T, plant.n))
    if kind == "step":
        v = np.asarray(spec["value"], float)
        if v.size != plant.n:
            raise errors.DimensionMismatch(f"step value has length {v.size}, expected {plant.n}")
        D = np.zeros((T, plant.n))
        D[spec["t_on"]:spec["t_off"]] = v
        return D
    vals = np.atleast_2d(np.asarray(spec["values"], float))
    if vals.shape[1] != plant.n or vals.shape[0] < T:
        raise errors.DimensionMismatch(f"trace must be at least {T} x {plant.n}")
    return vals[:T]


def _initial_state(res: BuildResult, spec, seed: int) -> np.ndarray:
    n = res.plant.n
    if spec is None or spec == "center":
        z, _ = chebyshev_center(res.rcis.polytope.G, res.rcis.polytope.h)
        return np.asarray(z[:n], float)
    if spec == "sample":
        return sample_members(res.rcis, n, 1, seed)[0]
    x0 = np.asarray(spec, float)
    if x0.size != n:
        raise errors.DimensionMismatch(f"x0 has length {x0.size}, expected {n}")
    return x0


def run_scenario(res: BuildResult, scenario: dict, explicit_arm: bool | None = None):
    """Supervised rollout(s) of a scenario; returns ``(trajectories, labels, summary)``."""
    plant = res.plant
    T = scenario["T"]
    if res.rcis.is_empty:
        raise errors.ContractBreach("cannot supervise against an empty invariant set")
    x0 = _initial_state(res, scenario.get("x0"), scenario.get("seed", 0))
    if not fiber_check(res.rcis, x0).member:
        raise errors.ContractBreach(f"initial state {x0.tolist()} is not a member of the set")
    pol = scenario.get("policy", {"kind": "zero"})
    K = np.asarray(pol["K"], float) if "K" in pol else np.zeros((plant.m, plant.n))
    D = disturbance_trace(plant, scenario.get("disturbance", {"kind": "zero"}), T)
    name = scenario.get("name", "scenario")
    trajs = [simulate(plant, K, res.rcis, D, T, x0, scenario=name)]
    labels = ["implicit set"]
    use_explicit = scenario.get("explicit_arm", False) if explicit_arm is None else explicit_arm
    if use_explicit:
        C = explicit_projection(res.rcis)
        trajs.append(simulate(plant, K, res.rcis, D, T, x0, scenario=name, explicit=C))
        labels.append("explicit set")
    summary = {"scenario": name, "T": T, "x0": x0.tolist(), "arms": []}
    for tr, lab in zip(trajs, labels):
        X, U = tr.states(), tr.inputs()
        safe = plant.S.contains_points(np.hstack([X, U]))
        corr = tr.corrections()
        summary["arms"].append({
            "label": lab, "safety_violations": int((~safe).sum()),
            "infeasible_steps": sum(s.qp_status is QpStatus.INFEASIBLE for s in tr.steps),
            "max_correction": float(corr.max()), "argmax_t": int(corr.argmax()),
            "corrected_steps": int((corr > 1e-9).sum())})
    return trajs, labels, summary


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    scenario = _load_json(args.scenario, SCENARIO_SCHEMA)
    out = _out_dir(cfg)
    res = build(cfg)
    trajs, labels, summary = run_scenario(res, scenario, True if args.explicit else None)
    trajs[0].to_csv(out / "trajectory.csv")
    if len(trajs) > 1:
        trajs[1].to_csv(out / "trajectory_explicit.csv")
    S_x = project(res.plant.S, range(res.plant.n))
    try:
        bb = bounding_box(S_x, margin=1.0)
        bounds = (bb.lower, bb.upper)
    except errors.UnboundedDirection:
        bounds = None
    plot_trajectories(trajs, out / "trajectory.svg", labels=labels, bounds=bounds,
                      dt=scenario.get("dt", 1.0), state_names=scenario.get("state_names"))
    _dump_json(summary, out / "simulate.json")
    _emit(summary)
    return EXIT_OK


def machine_summary(report: dict) -> str:
    if report["dominant"] is not None:
        line = f"dominant: {report['dominant']}; |Q| = {report['n_states']}"
        if report.get("all_mutually_dominant"):
            line += " (all mutually dominant)"
        return line
    return "no dominant state; Q0 = {" + ", ".join(report["Q0"]) + "}, Lambda path will be used"


def cmd_inspect_machine(args) -> int:
    if args.config or args.preset:
        cfg = _config_from_args(args)
        plant = plant_from_config(cfg.plant)
        actions, m = plant.D_v.shape[0], plant.m
        mcfg = cfg.machine
    else:
        if not args.machine or args.actions is None:
            raise errors.ConfigError("inspect-machine needs --config/--preset, or --machine with --actions")
        mcfg, actions, m = parse_machine_override(args.machine), args.actions, 1
    if args.actions is not None:
        actions = args.actions
    machine = machine_from_config(mcfg, actions, m)
    report = dominance_report(machine)
    print(machine_summary(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(report, out / "machine.json")
    return EXIT_OK


def _epilog() -> str:
    lines = ["exit codes:"] + [f"  {code}  {text}" for code, text in EXIT_CODES.items()]
    lines.append("environment:\n  RCIS_ROW_CAP  cap on intermediate Fourier-Motzkin rows (default 100000)")
    return "\n".join(lines)


def make_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="implicit-rcis", formatter_class=fmt, epilog=_epilog(),
                                description="Implicit robust controlled invariant sets from "
                                            "Mealy-machine disturbance feedback.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_config=True):
        if with_config:
            sp.add_argument("--config", help="run config JSON")
            sp.add_argument("--preset", help="integrator:<n>[:<L>] or lane_keeping[:<L>]")
        sp.add_argument("--out", help="output directory (default: config output.dir or ./out)")
        sp.add_argument("--machine", help="machine override, simple_loop:<L> or tree:<L>")
        sp.add_argument("--seed", type=int, help="random seed for sampling")
        sp.add_argument("--samples", type=int, help="Monte-Carlo and audit sample count")
        sp.add_argument("--max-iter", type=int, dest="max_iter", help="oracle iteration cap")
        sp.add_argument("--explicit", action="store_true",
                        help="also compute the explicit state-space projection")

    sp = sub.add_parser("build", help="compute the implicit set; writes rcis.json and report.json",
                        formatter_class=fmt, epilog=_epilog())
    common(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("check", help="membership of a point, with its certificate",
                        formatter_class=fmt, epilog=_epilog())
    sp.add_argument("rcis", help="rcis.json written by build")
    sp.add_argument("x", help="point, comma or space separated; put -- before a point that "
                                   "starts with a minus sign")
    sp.add_argument("--explicit", action="store_true", help="check against the explicit projection")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("compare", help="volume table against the iterative maximal set",
                        formatter_class=fmt, epilog=_epilog())
    common(sp)
    sp.add_argument("--no-timing", action="store_true", dest="no_timing",
                    help="leave time_s blank so the CSV is byte-reproducible")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("simulate", help="supervised rollout; writes trajectory CSV and SVG",
                        formatter_class=fmt, epilog=_epilog())
    common(sp)
    sp.add_argument("--scenario", required=True, help="scenario JSON")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("inspect-machine", help="dominance report of a machine",
                        formatter_class=fmt, epilog=_epilog())
    common(sp)
    sp.add_argument("--actions", type=int, help="number of disturbance actions")
    sp.set_defaults(func=cmd_inspect_machine)
    return p


def exit_code_for(exc: BaseException) -> int:
    for cls, code in _ERROR_EXITS:
        if isinstance(exc, cls):
            return code
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # every failure becomes a documented exit code
        code = exit_code_for(exc)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
