"""Batch experiment runner: configuration, orchestration, report emission and verdicts.

A run resolves a JSON configuration against per-kind defaults, executes the
estimator sweep, writes ``<kind>.csv`` and ``<kind>.json`` atomically into the
output directory and returns an exit status that is 0 exactly when every
verdict passes.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .exponents import (EstimatorReport, ExponentFit, decomposition_ratio, estimate_es,
                        estimate_es_annulus_sweep, estimate_growth, fit_exponent,
                        reverse_separation_statistics, separation_statistics)
from .lattice import LatticeSpec, lazy_random_walk, simple_random_walk, spec_from_json, triangular_walk
from .sle import bm_sle_avoidance
from .verification import run_all

KINDS = ("growth", "escape", "annulus", "decomposition", "separation", "sle-nu", "verify", "compare")
CSV_COLUMNS = ("quantity", "n", "m", "estimate", "stderr", "trials", "truncations", "seed", "duration_ms")
PRESETS = {"srw": simple_random_walk, "lazy": lazy_random_walk, "triangular": triangular_walk}


class ConfigError(ValueError):
    pass


class FingerprintMismatch(ValueError):
    pass


_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "lerwkit experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "lattice": {
            "oneOf": [
                {"enum": list(PRESETS)},
                {"type": "object", "additionalProperties": False, "required": ["generators", "weights"],
                 "properties": {"generators": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                                           "minItems": 2, "maxItems": 2}},
                                "weights": {"type": "array", "items": {"oneOf": [
                                    {"type": ["number", "string"]},
                                    {"type": "object", "additionalProperties": False, "required": ["num", "den"],
                                     "properties": {"num": {"type": "integer"}, "den": {"type": "integer"}}}]}}}},
                {"type": "object", "additionalProperties": False, "required": ["file"],
                 "properties": {"file": {"type": "string"}}},
            ]
        },
        "grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "trials": {"oneOf": [
            {"type": "integer", "minimum": 1},
            {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}},
        ]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "timing": {"type": "boolean"},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": _NUM,
                "walks": {"type": "integer", "minimum": 1},
                "exact_max_n": _NUM,
                "ratio": _NUM,
                "c": {"type": "array", "items": _NUM, "minItems": 1},
                "rho": _NUM,
                "reverse": {"type": "boolean"},
                "kappa": _NUM,
                "check_kappa": _NUM_OR_NULL,
                "method": {"enum": ["harmonic", "bm"]},
                "dt": _NUM,
                "stride": {"type": "integer", "minimum": 1},
                "instances": {"type": "integer", "minimum": 1},
                "fit_min": _NUM,
                "inputs": {"type": "array", "items": {"type": "string"}},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "slope": _NUM,
                "slope_tol": _NUM,
                "check_slope": _NUM,
                "check_slope_tol": _NUM,
                "ratio_low": _NUM,
                "ratio_high": _NUM,
                "stability": _NUM,
                "min_conditioned": {"type": "integer", "minimum": 1},
                "residual": _NUM,
                "loop_gap": _NUM,
                "derivative": _NUM,
                "z": _NUM,
            },
        },
        "out": {"type": "string"},
    },
}

_COMMON = {"lattice": "srw", "seed": 0, "workers": 1, "timing": False, "out": "results"}

DEFAULTS: dict[str, dict] = {
    "growth": {"grid": [16, 32, 64, 128, 256, 512], "trials": 20000,
               "params": {"fit_min": 16},
               "tolerances": {"slope": 1.25, "slope_tol": 0.08}},
    "escape": {"grid": [64, 128, 256, 512, 1024],
               "trials": {"64": 500, "128": 2000, "256": 2000, "512": 2000, "1024": 2500},
               "params": {"walks": 128, "exact_max_n": 64, "fit_min": 16},
               "tolerances": {"slope": -0.75, "slope_tol": 0.08}},
    "annulus": {"grid": [0.5, 0.25, 0.125, 0.0625], "trials": 2000,
                "params": {"n": 512, "walks": 32, "exact_max_n": 64},
                "tolerances": {"slope": 0.75, "slope_tol": 0.10}},
    "decomposition": {"grid": [16, 32, 64], "trials": 2000,
                      "params": {"ratio": 4, "walks": 64, "exact_max_n": 64},
                      "tolerances": {"ratio_low": 0.1, "ratio_high": 10.0, "stability": 3.0}},
    "separation": {"grid": [32, 64, 128, 256], "trials": 768,
                   "params": {"c": [0.1], "rho": 4, "walks": 64, "reverse": False},
                   "tolerances": {"stability": 2.0, "min_conditioned": 500}},
    "sle-nu": {"grid": [0.5, 0.35, 0.25, 0.18], "trials": 2000,
               "params": {"kappa": 2.0, "check_kappa": 6.0, "method": "harmonic", "dt": 1e-3, "stride": 2},
               "tolerances": {"slope": 0.75, "slope_tol": 0.12, "check_slope": 1.25, "check_slope_tol": 0.15}},
    "verify": {"grid": [1], "trials": 1,
               "params": {"instances": 50},
               "tolerances": {"residual": 1e-8, "loop_gap": 0.02, "derivative": 1e-6}},
    "compare": {"grid": [1], "trials": 1,
                "params": {"inputs": []},
                "tolerances": {"z": 3.0}},
}


def resolve_config(raw: dict | None = None, **overrides) -> dict:
    """Validate ``raw`` (unknown keys rejected) and fill every field from the defaults for its kind."""
    raw = copy.deepcopy(raw or {})
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    kind = raw["kind"]
    out = copy.deepcopy(_COMMON)
    out.update(copy.deepcopy(DEFAULTS[kind]))
    out["kind"] = kind
    for key, val in raw.items():
        if key in ("params", "tolerances"):
            out[key] = {**out[key], **val}
        else:
            out[key] = val
    return out


def load_config(path: str | Path, **overrides) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return resolve_config(raw, **overrides)


def lattice_of(cfg: dict) -> LatticeSpec:
    lat = cfg["lattice"]
    if isinstance(lat, str):
        return PRESETS[lat]()
    if "file" in lat:
        return spec_from_json(Path(lat["file"]).read_text())
    return spec_from_json(lat)


def trials_at(cfg: dict, scale: float) -> int:
    t = cfg["trials"]
    if isinstance(t, int):
        return t
    for key, val in t.items():
        if float(key) == float(scale):
            return val
    raise ConfigError(f"no trial count for scale {scale:g}")


# -------------------------------------------------------------- artifacts


@dataclass(frozen=True)
class Verdict:
    name: str
    value: float
    target: str
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "value": _finite(self.value), "target": self.target, "passed": self.passed}


@dataclass
class RunResult:
    config: dict
    reports: list[EstimatorReport]
    fit: ExponentFit | None
    verdicts: list[Verdict]
    spec_fingerprint: str
    extra: dict = field(default_factory=dict)
    paths: tuple[Path, Path] | None = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1


def _finite(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return _finite(obj)


def _columns(r: EstimatorReport) -> tuple:
    p = r.params
    if "n" in p:
        n = p["n"]
    elif "k" in p:
        n = p["k"]
    else:
        n = p.get("r", "")
    if "m" in p:
        m = p["m"]
    elif "c" in p:
        m = p["c"]
    else:
        m = p.get("kappa", "")
    return n, m


def _fmt(x) -> str:
    if x == "" or x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def csv_text(reports: Sequence[EstimatorReport], seed: int, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        n, m = _columns(r)
        w.writerow([r.quantity, _fmt(n), _fmt(m), repr(float(r.estimate)), repr(float(r.stderr)),
                    r.trials, r.truncations, seed,
                    _fmt(round(r.duration_s * 1000, 3)) if timing else ""])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def artifact_json(result: RunResult) -> dict:
    cfg = result.config
    timing = cfg.get("timing", False)
    reports = []
    for r in result.reports:
        d = r.to_json()
        if not timing:
            d.pop("duration_s")
        reports.append(d)
    return _clean({
        "tool": "lerwkit",
        "version": __version__,
        "kind": cfg["kind"],
        "config": cfg,
        "spec_fingerprint": result.spec_fingerprint,
        "seed": cfg["seed"],
        "reports": reports,
        "fit": result.fit.to_json() if result.fit is not None else None,
        "verdicts": [v.to_json() for v in result.verdicts],
        "passed": result.passed,
        "extra": result.extra,
    })


def emit_report(result: RunResult, out_dir: str | Path | None = None) -> tuple[Path, Path]:
    """Write ``<kind>.csv`` and ``<kind>.json`` (temp file + rename)."""
    if not result.reports:
        raise ValueError("nothing to emit")
    out = Path(out_dir if out_dir is not None else result.config["out"])
    stem = result.config["kind"]
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    _atomic_write(csv_path, csv_text(result.reports, result.config["seed"], result.config.get("timing", False)))
    _atomic_write(json_path, json.dumps(artifact_json(result), indent=2, sort_keys=True) + "\n")
    result.paths = (csv_path, json_path)
    return result.paths


# ---------------------------------------------------------------- runners


def _slope_verdict(name: str, fit: ExponentFit, target: float, tol: float) -> Verdict:
    return Verdict(name, fit.slope, f"{target:g} +/- {tol:g}", abs(fit.slope - target) <= tol)


def _fit_reports(reports, scale_of, fit_min: float = 0.0) -> ExponentFit:
    pts = [(scale_of(r), r.estimate, r.stderr) for r in reports if scale_of(r) >= fit_min]
    if len(pts) < 2:
        raise ConfigError(f"fewer than two grid points at or above fit_min = {fit_min:g}")
    return fit_exponent(pts)


def _run_growth(cfg, spec):
    reports = [estimate_growth(n, trials_at(cfg, n), spec, cfg["seed"], workers=cfg["workers"])
               for n in cfg["grid"]]
    tol = cfg["tolerances"]
    fit = _fit_reports(reports, lambda r: r.params["n"], cfg["params"]["fit_min"])
    return reports, fit, [_slope_verdict("growth_slope", fit, tol["slope"], tol["slope_tol"])], {}


def _run_escape(cfg, spec):
    p = cfg["params"]
    reports = [estimate_es(n, trials_at(cfg, n), spec, cfg["seed"], walks=p["walks"],
                           exact_max_n=p["exact_max_n"], workers=cfg["workers"]) for n in cfg["grid"]]
    tol = cfg["tolerances"]
    fit = _fit_reports(reports, lambda r: r.params["n"], p["fit_min"])
    return reports, fit, [_slope_verdict("escape_slope", fit, tol["slope"], tol["slope_tol"])], {}


def _run_annulus(cfg, spec):
    p = cfg["params"]
    n = p["n"]
    ms = [r * n for r in cfg["grid"]]
    trials = trials_at(cfg, cfg["grid"][0])
    reports = estimate_es_annulus_sweep(ms, n, trials, spec, cfg["seed"], walks=p["walks"],
                                        exact_max_n=p["exact_max_n"], workers=cfg["workers"])
    tol = cfg["tolerances"]
    fit = _fit_reports(reports, lambda r: r.params["m"] / r.params["n"])
    return reports, fit, [_slope_verdict("annulus_slope", fit, tol["slope"], tol["slope_tol"])], {}


def _run_decomposition(cfg, spec):
    p = cfg["params"]
    tol = cfg["tolerances"]
    reports, ratios, rows = [], [], []
    for m in cfg["grid"]:
        n = m * p["ratio"]
        d = decomposition_ratio(m, n, trials_at(cfg, m), spec, cfg["seed"], walks=p["walks"],
                                exact_max_n=p["exact_max_n"], workers=cfg["workers"])
        reports += [d.es_n, d.es_m, d.es_mn,
                    EstimatorReport("decomposition_ratio", {"n": n, "m": m}, d.ratio, d.stderr,
                                    d.es_n.trials, d.es_n.truncations + d.es_m.truncations + d.es_mn.truncations,
                                    d.es_n.seed, d.es_n.spec_fingerprint,
                                    d.es_n.duration_s + d.es_m.duration_s + d.es_mn.duration_s)]
        ratios.append(d.ratio)
        rows.append({"m": m, "n": n, "ratio": d.ratio, "stderr": d.stderr})
    lo, hi = tol["ratio_low"], tol["ratio_high"]
    verdicts = [Verdict(f"ratio_bounds_m{m:g}", r, f"[{lo:g}, {hi:g}]", lo <= r <= hi)
                for m, r in zip(cfg["grid"], ratios)]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    verdicts.append(Verdict("ratio_stability", spread, f"<= {tol['stability']:g}", spread <= tol["stability"]))
    return reports, None, verdicts, {"ratios": rows}


def _run_separation(cfg, spec):
    p = cfg["params"]
    tol = cfg["tolerances"]
    reports, tables = [], []
    for k in cfg["grid"]:
        kw = dict(walks=p["walks"], min_conditioned=1, workers=cfg["workers"])
        if p["reverse"]:
            t = reverse_separation_statistics(k, p["c"], trials_at(cfg, k), spec, cfg["seed"], **kw)
        else:
            t = separation_statistics(k, p["c"], trials_at(cfg, k), spec, cfg["seed"], rho=p["rho"], **kw)
        tables.append(t)
        reports += t.reports()
    verdicts = []
    for t in tables:
        verdicts.append(Verdict(f"conditioned_k{t.k:g}", t.conditioned, f">= {tol['min_conditioned']}",
                                t.conditioned >= tol["min_conditioned"]))
    for c in p["c"]:
        probs = [t.at(c)[0] for t in tables]
        spread = max(probs) / min(probs) if min(probs) > 0 else math.inf
        verdicts.append(Verdict(f"stability_c{c:g}", spread, f"<= {tol['stability']:g}", spread <= tol["stability"]))
    extra = {"conditioned": {f"{t.k:g}": t.conditioned for t in tables}}
    return reports, None, verdicts, extra


def _run_sle(cfg, spec):
    p = cfg["params"]
    tol = cfg["tolerances"]
    trials = trials_at(cfg, cfg["grid"][0])
    kw = dict(dt=p["dt"], stride=p["stride"], method=p["method"], workers=cfg["workers"])
    reports = bm_sle_avoidance(p["kappa"], list(cfg["grid"]), trials, cfg["seed"], **kw)
    fit = _fit_reports(reports, lambda r: r.params["r"])
    verdicts = [_slope_verdict(f"nu_kappa{p['kappa']:g}", fit, tol["slope"], tol["slope_tol"])]
    extra = {}
    if p.get("check_kappa") is not None:
        chk = bm_sle_avoidance(p["check_kappa"], list(cfg["grid"]), trials, cfg["seed"] + 1, **kw)
        cfit = _fit_reports(chk, lambda r: r.params["r"])
        reports = list(reports) + list(chk)
        verdicts.append(_slope_verdict(f"nu_kappa{p['check_kappa']:g}", cfit, tol["check_slope"],
                                       tol["check_slope_tol"]))
        extra["check_fit"] = cfit.to_json()
    return list(reports), fit, verdicts, extra


def _run_verify(cfg, spec):
    p = cfg["params"]
    tol = cfg["tolerances"]
    suites = run_all(spec, p["instances"], cfg["seed"], tol["residual"])
    reports, verdicts = [], []
    for s in suites:
        if s.name == "loop_measure":
            gaps = s.details["gaps"]
            ok = s.details["decreasing"] and gaps[-1] < tol["loop_gap"]
            verdicts.append(Verdict(s.name, gaps[-1], f"decreasing, final < {tol['loop_gap']:g}", ok))
        elif s.name == "dirichlet":
            d = s.details
            dev = max(abs(d["dh_dx"] - math.sqrt(2) / math.pi), abs(d["dh_dy"]))
            ok = abs(d["h0"] - 0.25) < tol["residual"] and dev < tol["derivative"] and d["decreasing"]
            verdicts.append(Verdict(s.name, dev, f"h(0)=1/4, derivative error < {tol['derivative']:g}, "
                                                 "discrete error decreasing", ok))
        else:
            ok = s.value < tol["residual"] and s.instances >= p["instances"]
            verdicts.append(Verdict(s.name, s.value, f"< {tol['residual']:g} on {p['instances']} instances", ok))
        reports.append(EstimatorReport(f"verify_{s.name}", {}, float(s.value), 0.0, s.instances, 0,
                                       cfg["seed"], spec.fingerprint))
    return reports, None, verdicts, {"suites": [s.to_json() for s in suites]}


def _load_artifact(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read artifact {path}: {exc}") from exc


def _report_key(d: dict) -> tuple:
    return d["quantity"], json.dumps(d["params"], sort_keys=True)


def compare_artifacts(paths: Sequence[str | Path], z: float = 3.0) -> tuple[list[EstimatorReport], list[Verdict]]:
    """Match reports across artifacts and test agreement within ``z`` joint standard errors.

    Artifacts built on different lattice specs are refused.
    """
    if len(paths) < 2:
        raise ConfigError("compare needs at least two artifacts")
    arts = [_load_artifact(p) for p in paths]
    fps = {a.get("spec_fingerprint") for a in arts}
    if len(fps) != 1:
        raise FingerprintMismatch(f"artifacts have different spec fingerprints: {sorted(map(str, fps))}")
    base = {_report_key(d): d for d in arts[0]["reports"]}
    reports, verdicts = [], []
    for other in arts[1:]:
        for d in other["reports"]:
            ref = base.get(_report_key(d))
            if ref is None:
                continue
            diff = d["estimate"] - ref["estimate"]
            se = math.hypot(d["stderr"], ref["stderr"])
            score = abs(diff) / se if se > 0 else (0.0 if diff == 0 else math.inf)
            name = f"{d['quantity']} {d['params']}"
            verdicts.append(Verdict(name, score, f"|diff| <= {z:g} joint stderr", score <= z))
            reports.append(EstimatorReport(f"diff_{d['quantity']}", d["params"], diff, se,
                                           min(d["trials"], ref["trials"]), 0, d["seed"], d["spec_fingerprint"]))
    if not verdicts:
        raise ConfigError("no matching reports between artifacts")
    return reports, verdicts


def _run_compare(cfg, spec):
    inputs = cfg["params"]["inputs"]
    reports, verdicts = compare_artifacts(inputs, cfg["tolerances"]["z"])
    fp = _load_artifact(inputs[0])["spec_fingerprint"]
    return reports, None, verdicts, {"inputs": list(inputs), "fingerprint": fp}


_RUNNERS = {
    "growth": _run_growth,
    "escape": _run_escape,
    "annulus": _run_annulus,
    "decomposition": _run_decomposition,
    "separation": _run_separation,
    "sle-nu": _run_sle,
    "verify": _run_verify,
    "compare": _run_compare,
}


def execute(cfg: dict) -> RunResult:
    """Run a resolved configuration without writing files."""
    spec = lattice_of(cfg)
    reports, fit, verdicts, extra = _RUNNERS[cfg["kind"]](cfg, spec)
    fp = extra.get("fingerprint", spec.fingerprint)
    return RunResult(cfg, list(reports), fit, verdicts, fp, extra)


def run(config: dict, out_dir: str | Path | None = None) -> RunResult:
    """Resolve, execute and emit; the returned result carries the exit status."""
    cfg = resolve_config(config)
    result = execute(cfg)
    emit_report(result, out_dir)
    return result
