"""Batch command-line front end: ``sepsplit <command> --config run.yaml --out DIR``.

Exit codes: 0 success, 1 internal error, 2 configuration/usage error,
3 precondition failure (invalid model input, divergent integral, resonance, ...),
4 numerical failure (integrator, Riccati, certification).
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import math
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .dynamics import IntegratorConfig, IntegratorError, measure_splitting, write_splitting_csv
from .homological import (CylinderFunction, HomologicalError, OperatorSpec, StageError, Truncation,
                          homological_step)
from .melnikov import (MelnikovError, QuadOptions, closed_form_amplitude, critical_points,
                       melnikov_fourier_decay, melnikov_function, write_decay_csv, write_decay_plot)
from .model import (ModelError, ModelParams, PerturbationSpec, characteristic_exponents,
                    check_diophantine, check_nonresonance, linearization_matrix)
from .separatrix import (AnalyticityParams, ChartError, chart_table, chi, domain_membership, s_of_x,
                         separatrix_orbit)
from .variational import (TransverseDirection, VariationalError, default_grid, riccati_direction,
                          riccati_limit_check, tilde_lambda, tilde_lambda_residual, transversality_angle)

COMMANDS = ("exponents", "nonres", "dioph", "chart", "riccati", "transversality", "melnikov",
            "decay", "homological", "split")
SCHEMA_VERSION = 1
ENV_OUT = "SEPSPLIT_OUT"

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    """Unreadable or invalid configuration; the message names the offending field."""


# --------------------------------------------------------------------------- schema

DEFAULTS: dict[str, Any] = {
    "command": None,
    "seed": 0,
    "threads": 1,
    "params": {
        "arms": [1.0, 2.0],
        "omega": [2.0],
        "mu": 1e-3,
        "perturbation": {"preset": "pendulum_coupling", "harmonics": [1], "x_harmonic": 1,
                         "terms": None},
    },
    "analyticity": {"sigma": 0.5, "T": 10.0, "rho": 1.0, "r": 0.1, "T0": 12.0, "delta": 0.05,
                    "kappa": 0.5, "delta_log_constant": None},
    "numeric": {
        "K": 32, "D": 4, "T_num": None, "N_s": 128,
        "T_quad": None, "quad_tol": 1e-13, "alpha_points": 256,
        "tau": 1.0, "dioph_K": 100, "nonres_threshold": None,
        "chart_t_max": 10.0, "chart_points": 201,
        "riccati_points": 2000, "riccati_rtol": 1e-12,
        "homological_tol": 1e-10,
        "homological_f": [{"c": 1.0, "s": 0.0, "k": None, "alpha": None, "profile": "const"}],
        "sections": [math.pi / 2, math.pi, 3 * math.pi / 2],
        "n_phi": 33, "eps0": 1e-7, "scheme": "yoshida4", "step": 1e-3, "max_time": 200.0,
        "mu_halving": False,
    },
    "output": {"dir": None, "plot": True},
}

_TERM_KEYS = {"c", "s", "k", "alpha", "profile"}
_PROFILES: dict[str, Callable] = {
    "chi": chi,
    "exp": np.exp,
}


@dataclass
class ExperimentConfig:
    command: str
    params: ModelParams
    analyticity: AnalyticityParams
    numeric: dict
    output: dict
    seed: int = 0
    threads: int = 1
    raw: dict = field(default_factory=dict)


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(defaults[key], val, where)
        else:
            out[key] = val
    return out


def _number(raw: dict, key: str, path: str, positive: bool = False, integer: bool = False,
            allow_none: bool = False):
    v = raw[key]
    where = f"{path}.{key}"
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}: must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _vector(raw: dict, key: str, path: str) -> list[float]:
    v = raw[key]
    if not isinstance(v, (list, tuple)) or not v or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{path}.{key}: expected a non-empty list of numbers, got {v!r}")
    return [float(x) for x in v]


def _perturbation(raw: dict, n: int, m: int) -> PerturbationSpec:
    path = "params.perturbation"
    if raw["terms"] is not None:
        terms = []
        for i, t in enumerate(raw["terms"]):
            if not isinstance(t, dict) or set(t) - {"c", "s", "k", "j"}:
                raise ConfigError(f"{path}.terms[{i}]: expected a mapping with keys c, s, k, j")
            try:
                terms.append((float(t.get("c", 0.0)), float(t.get("s", 0.0)),
                              [int(v) for v in t["k"]], [int(v) for v in t["j"]]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}.terms[{i}]: {exc}") from exc
        try:
            return PerturbationSpec.from_real_terms(terms, n, m)
        except ModelError as exc:
            raise ConfigError(f"{path}.terms: {exc}") from exc
    if raw["preset"] == "none":
        return PerturbationSpec.zero(n, m)
    if raw["preset"] != "pendulum_coupling":
        raise ConfigError(f"{path}.preset: expected 'pendulum_coupling' or 'none', got {raw['preset']!r}")
    h = raw["harmonics"]
    if not isinstance(h, list) or not h or not all(isinstance(v, int) and v > 0 for v in h):
        raise ConfigError(f"{path}.harmonics: expected a list of positive integers, got {h!r}")
    q = raw["x_harmonic"]
    if not isinstance(q, int) or q <= 0:
        raise ConfigError(f"{path}.x_harmonic: expected a positive integer, got {q!r}")
    return PerturbationSpec.pendulum_coupling(n, m, h, q)


def validate_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    cfg = _merge(DEFAULTS, raw, "")
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {cfg['command']!r}")
    seed = _number(cfg, "seed", "", integer=True)
    threads = _number(cfg, "threads", "", positive=True, integer=True)
    p = cfg["params"]
    arms = _vector(p, "arms", "params")
    omega = _vector(p, "omega", "params")
    mu = _number(p, "mu", "params")
    if any(a <= 0 for a in arms):
        raise ConfigError(f"params.arms: must be positive, got {arms}")
    if any(b <= a for a, b in zip(arms, arms[1:])):
        raise ConfigError(f"params.arms: must be strictly increasing, got {arms}")
    if mu < 0:
        raise ConfigError(f"params.mu: must be non-negative, got {mu}")
    pert = _perturbation(p["perturbation"], len(omega), len(arms) - 1)
    try:
        params = ModelParams(tuple(arms), tuple(omega), mu, pert)
    except ModelError as exc:
        raise ConfigError(f"params: {exc}") from exc
    a = cfg["analyticity"]
    vals = {k: _number(a, k, "analyticity", allow_none=(k == "delta_log_constant")) for k in a}
    if not 0 < vals["rho"] < math.pi / 2:
        raise ConfigError(f"analyticity.rho: must lie in (0, pi/2), got {vals['rho']}")
    try:
        analyticity = AnalyticityParams(**vals)
    except ChartError as exc:
        raise ConfigError(f"analyticity: {exc}") from exc
    num = cfg["numeric"]
    path = "numeric"
    for k in ("K", "D", "N_s", "alpha_points", "dioph_K", "chart_points", "riccati_points", "n_phi"):
        _number(num, k, path, positive=k not in ("D",), integer=True)
    if num["D"] < 0:
        raise ConfigError(f"numeric.D: must be >= 0, got {num['D']}")
    for k in ("quad_tol", "chart_t_max", "riccati_rtol", "homological_tol", "eps0", "step", "max_time"):
        _number(num, k, path, positive=True)
    for k in ("T_num", "T_quad", "nonres_threshold"):
        _number(num, k, path, positive=True, allow_none=True)
    _number(num, "tau", path)
    if num["tau"] < len(omega) - 1:
        raise ConfigError(f"numeric.tau: must be >= n - 1 = {len(omega) - 1}")
    if num["n_phi"] % 2 == 0:
        raise ConfigError(f"numeric.n_phi: must be odd, got {num['n_phi']}")
    if num["riccati_points"] < 40:
        raise ConfigError("numeric.riccati_points: need at least 40 points")
    if num["scheme"] not in ("leapfrog", "yoshida4", "implicit-midpoint"):
        raise ConfigError(f"numeric.scheme: unknown scheme {num['scheme']!r}")
    secs = _vector(num, "sections", path)
    if any(not 0 < s < 2 * math.pi for s in secs):
        raise ConfigError(f"numeric.sections: must lie in (0, 2 pi), got {secs}")
    if not isinstance(num["mu_halving"], bool):
        raise ConfigError("numeric.mu_halving: expected true or false")
    if not isinstance(num["homological_f"], list) or not num["homological_f"]:
        raise ConfigError("numeric.homological_f: expected a non-empty list of terms")
    for i, t in enumerate(num["homological_f"]):
        if not isinstance(t, dict) or set(t) - _TERM_KEYS:
            raise ConfigError(f"numeric.homological_f[{i}]: expected keys among {sorted(_TERM_KEYS)}")
        prof = t.get("profile", "const")
        if prof not in ("const", "chi", "exp"):
            raise ConfigError(f"numeric.homological_f[{i}].profile: expected const, chi or exp")
    out = cfg["output"]
    if out["dir"] is not None and not isinstance(out["dir"], str):
        raise ConfigError("output.dir: expected a path string")
    if not isinstance(out["plot"], bool):
        raise ConfigError("output.plot: expected true or false")
    return ExperimentConfig(cfg["command"], params, analyticity, num, out, seed, threads, cfg)


def load_config(path: str | os.PathLike | None = None, command: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"cannot parse {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    if command is not None:
        if raw.get("command") not in (None, command):
            raise ConfigError(f"command: config says {raw['command']!r} but {command!r} was requested")
        raw["command"] = command
    for k, v in (overrides or {}).items():
        raw[k] = v
    return validate_config(raw)


# --------------------------------------------------------------------------- output

def _fmt(v: float) -> str:
    return "null" if not math.isfinite(v) else format(v, ".17g")


def dumps(obj: Any, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    pad, pad1 = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad1}"{k}": {dumps(obj[k], indent + 1)}' for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad1 + dumps(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([float(obj.real), float(obj.imag)])
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class Outputs:
    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def json(self, name: str, obj: Any) -> None:
        self.path(name).write_text(dumps(obj) + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(self.path(name), "w") as fh:
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(float(v)) for v in r) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------- commands

def cmd_exponents(cfg: ExperimentConfig, out: Outputs) -> dict:
    lam = characteristic_exponents(cfg.params.arms)
    ev = np.linalg.eigvals(linearization_matrix(cfg.params.arms))
    pos = np.sort(ev.real[ev.real > 0])[::-1]
    rep = {"schema_version": SCHEMA_VERSION, "arms": list(cfg.params.arms), "lambdas": lam,
           "linearization_exponents": pos,
           "max_abs_difference": float(np.max(np.abs(np.sort(lam)[::-1] - pos))),
           "dominance_ok": bool(lam.size == 1 or lam[0] > lam[1:].max())}
    out.json("exponents.json", rep)
    return rep


def cmd_nonres(cfg: ExperimentConfig, out: Outputs) -> dict:
    rep = check_nonresonance(cfg.params.lambdas, cfg.numeric["nonres_threshold"]).to_dict()
    rep["schema_version"] = SCHEMA_VERSION
    out.json("nonres.json", rep)
    return rep


def cmd_dioph(cfg: ExperimentConfig, out: Outputs) -> dict:
    est = check_diophantine(cfg.params.omega, cfg.numeric["tau"], cfg.numeric["dioph_K"])
    rep = {"schema_version": SCHEMA_VERSION, "omega": list(cfg.params.omega), **est.to_dict()}
    out.json("dioph.json", rep)
    return rep


def cmd_chart(cfg: ExperimentConfig, out: Outputs) -> dict:
    num = cfg.numeric
    lam0 = float(cfg.params.lambdas[0])
    t = np.linspace(-num["chart_t_max"], num["chart_t_max"], num["chart_points"])
    table = chart_table(t, lam0)
    out.csv("chart.csv", ["t", "x", "y", "s", "chi"], table)
    x, _ = separatrix_orbit(t, 1.0)
    s = table[:, 3]
    bounds = bool(np.all((2 * np.exp(-np.abs(s)) <= table[:, 4] * (1 + 1e-15))
                         & (table[:, 4] <= 4 * np.exp(-np.abs(s)))))
    inside = domain_membership(s.astype(complex), cfg.analyticity, "bi")
    rep = {"schema_version": SCHEMA_VERSION, "s_at_pi": float(s_of_x(np.pi)),
           "roundtrip_error": float(np.max(np.abs(s_of_x(x) - t))),
           "chi_bounds_ok": bounds, "points_in_bistrip": int(np.sum(inside)),
           "analyticity": cfg.analyticity.to_dict()}
    out.json("chart.json", rep)
    return rep


def _fields(cfg: ExperimentConfig):
    arms = cfg.params.arms
    if len(arms) < 2:
        raise ModelError("riccati/transversality need at least one transverse direction (m >= 1)")
    grid = default_grid(cfg.analyticity.delta, cfg.numeric["riccati_points"])
    for i in range(1, len(arms)):
        d = TransverseDirection.from_arms(arms, i)
        yield i, d, riccati_direction(d.l, grid=grid, direction=d, rtol=cfg.numeric["riccati_rtol"])


def cmd_riccati(cfg: ExperimentConfig, out: Outputs) -> dict:
    dirs = []
    for i, d, fld in _fields(cfg):
        res = tilde_lambda(fld)
        out.csv(f"riccati_{i}.csv", ["x", "lambda_u", "lambda_s", "tilde_lambda"],
                zip(fld.grid, fld.lambda_u, fld.lambda_s, res))
        lo, hi = d.slope_interval
        dirs.append({"index": i, "l": d.l, "offset": d.offset,
                     "tilde_lambda_sup": tilde_lambda_residual(fld),
                     "limit_slope": d.limit_slope, "limit_check": riccati_limit_check(d),
                     "slope_interval": [lo, hi],
                     "lambda_u_range": [float(fld.lambda_u.min()), float(fld.lambda_u.max())]})
    rep = {"schema_version": SCHEMA_VERSION, "delta": cfg.analyticity.delta, "directions": dirs}
    out.json("riccati.json", rep)
    return rep


def cmd_transversality(cfg: ExperimentConfig, out: Outputs) -> dict:
    dirs = []
    for i, d, fld in _fields(cfg):
        ang, xm = transversality_angle(fld)
        dirs.append({"index": i, "l": d.l, "min_angle": ang, "x_at_min": xm})
    rep = {"schema_version": SCHEMA_VERSION, "directions": dirs,
           "min_angle": min(v["min_angle"] for v in dirs)}
    out.json("transversality.json", rep)
    return rep


def _melnikov(cfg: ExperimentConfig):
    num = cfg.numeric
    opts = QuadOptions(T_quad=num["T_quad"], tol=num["quad_tol"])
    return melnikov_function(cfg.params.perturbation, cfg.params.omega, quad_opts=opts,
                             lambda0=float(cfg.params.lambdas[0]))[1]


def cmd_melnikov(cfg: ExperimentConfig, out: Outputs) -> dict:
    series = _melnikov(cfg)
    n = series.n
    rep = {"schema_version": SCHEMA_VERSION, "n": n,
           "coefficients": [{"k": list(k), "c": series.coeffs[k], "error": series.errors.get(k, 0.0)}
                            for k in sorted(series.coeffs)]}
    if n == 1:
        a = 2 * np.pi * np.arange(cfg.numeric["alpha_points"]) / cfg.numeric["alpha_points"]
        vals = series.evaluate(a[:, None])
        der = series.derivative(a)
        out.csv("melnikov.csv", ["alpha", "M", "dM"], zip(a, vals, der))
        crit = critical_points(series)
        rep["critical_points"] = crit.ravel()
        rep["n_critical_points"] = int(crit.shape[0])
        rep["closed_form_amplitude"] = closed_form_amplitude(cfg.params.omega[0])
    else:
        crit = critical_points(series)
        rep["critical_points"] = crit
        rep["n_critical_points"] = int(crit.shape[0])
    out.json("melnikov.json", rep)
    return rep


def cmd_decay(cfg: ExperimentConfig, out: Outputs) -> dict:
    series = _melnikov(cfg)
    fit = melnikov_fourier_decay(series, cfg.params.omega)
    path = out.path("decay.csv")
    write_decay_csv(path, series, cfg.params.omega)
    if cfg.output["plot"]:
        write_decay_plot(out.path("decay_plot.dat"), series, cfg.params.omega, fit)
    rep = {"schema_version": SCHEMA_VERSION, **fit.to_dict()}
    out.json("decay.json", rep)
    return rep


def _homological_input(cfg: ExperimentConfig, tr: Truncation) -> CylinderFunction:
    f = CylinderFunction.zeros(tr)
    for t in cfg.numeric["homological_f"]:
        k = t.get("k") or [1] + [0] * (tr.n - 1)
        alpha = t.get("alpha") or [0] * tr.m
        prof = t.get("profile", "const")
        kind = "const" if prof == "const" else "tail"
        f.add_real(float(t.get("c", 0.0)), float(t.get("s", 0.0)), k, alpha,
                   kind=kind, profile=_PROFILES.get(prof))
    return f


def cmd_homological(cfg: ExperimentConfig, out: Outputs) -> dict:
    num, p = cfg.numeric, cfg.params
    lam = p.lambdas
    tr = Truncation(p.n, p.m, num["K"], num["D"], num["T_num"] or 15.0 / float(lam[0]), num["N_s"])
    spec = OperatorSpec(float(lam[0]), np.asarray(p.omega), np.diag(lam[1:]))
    sol = homological_step(spec, _homological_input(cfg, tr), tol=num["homological_tol"])
    a0 = tr.taylor_index[(0,) * tr.m]
    rows = []
    for q, k in enumerate(tr.modes):
        c = sol.S0hat.const[0, a0, q]
        if c != 0:
            rows.append(list(k) + [c.real, c.imag])
    out.csv("S0hat_modes.csv", [f"k_{i}" for i in range(p.n)] + ["re", "im"], rows)
    rep = {"schema_version": SCHEMA_VERSION, "truncation": {"K": tr.K, "D": tr.D, "T_num": tr.T_num,
                                                            "N_s": tr.N_s, "map_beta": tr.map_beta},
           **sol.to_dict()}
    out.json("homological.json", rep)
    return rep


def cmd_split(cfg: ExperimentConfig, out: Outputs) -> dict:
    num, p = cfg.numeric, cfg.params
    ic = IntegratorConfig(num["scheme"], num["step"], max_time=num["max_time"])
    kw = dict(section_list=num["sections"], n_phi=num["n_phi"], eps0=num["eps0"], config=ic,
              threads=cfg.threads)
    meas = measure_splitting(p, **kw)
    write_splitting_csv(out.path("split.csv"), meas)
    rep = {"schema_version": SCHEMA_VERSION, **meas.report()}
    if num["mu_halving"]:
        half = measure_splitting(p.with_mu(p.mu / 2), **kw)
        write_splitting_csv(out.path("split_half_mu.csv"), half)
        rep["half_mu"] = half.report()
        rep["error_ratio"] = meas.melnikov_error / half.melnikov_error if half.melnikov_error else None
    out.json("split.json", rep)
    return rep


DISPATCH: dict[str, Callable[[ExperimentConfig, Outputs], dict]] = {
    "exponents": cmd_exponents, "nonres": cmd_nonres, "dioph": cmd_dioph, "chart": cmd_chart,
    "riccati": cmd_riccati, "transversality": cmd_transversality, "melnikov": cmd_melnikov,
    "decay": cmd_decay, "homological": cmd_homological, "split": cmd_split,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (IntegratorError, VariationalError, StageError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ModelError, ChartError, MelnikovError, HomologicalError)):
        return EXIT_PRECONDITION
    return EXIT_INTERNAL


def _versions() -> dict:
    import scipy

    return {"sepsplit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> int:
    """Execute one experiment and write its artifacts plus ``run_manifest.json``."""
    directory = Path(out_dir or cfg.output["dir"] or os.environ.get(ENV_OUT) or "sepsplit_out")
    out = Outputs(directory)
    np.random.seed(cfg.seed)
    t0 = time.perf_counter()
    status, error = EXIT_OK, None
    try:
        DISPATCH[cfg.command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code and reported
        status = exit_code_for(exc)
        error = {"type": type(exc).__name__, "message": str(exc), "exit_code": status,
                 "command": cfg.command}
        if status == EXIT_INTERNAL:
            error["traceback"] = traceback.format_exc()
        out.json("error.json", error)
    elapsed = time.perf_counter() - t0
    manifest = {
        "schema_version": SCHEMA_VERSION, "command": cfg.command, "exit_code": status,
        "config": cfg.raw, "seed": cfg.seed, "threads": cfg.threads, "versions": _versions(),
        "timings": {"total_seconds": elapsed},
        "files": [{"name": f, "sha256": _sha256(directory / f)} for f in out.files],
    }
    (directory / "run_manifest.json").write_text(dumps(manifest) + "\n")
    if error is not None:
        print(f"sepsplit {cfg.command}: {error['type']}: {error['message']}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sepsplit", description="Separatrix-splitting experiments.")
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="experiment to run (may also be given in the config)")
    ap.add_argument("--config", help="YAML configuration file")
    ap.add_argument("--out", help=f"output directory (default: ${ENV_OUT} or ./sepsplit_out)")
    ap.add_argument("--threads", type=int, help="worker threads for independent shots")
    ap.add_argument("--seed", type=int, help="random seed recorded in the manifest")
    ap.add_argument("--version", action="version", version=f"sepsplit {__version__}")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("threads", "seed") if getattr(args, k) is not None}
    try:
        cfg = load_config(args.config, args.command, overrides)
    except ConfigError as exc:
        print(f"sepsplit: configuration error: {exc}", file=sys.stderr)
        directory = Path(args.out or os.environ.get(ENV_OUT) or "sepsplit_out")
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "error.json").write_text(dumps(
            {"type": "ConfigError", "message": str(exc), "exit_code": EXIT_CONFIG}) + "\n")
        return EXIT_CONFIG
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
