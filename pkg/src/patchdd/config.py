"""Run configuration: JSON schema, validation with field paths, and object construction.

Lengths are dimensionless. Keys carrying a length end in ``_length``;
tolerances are relative quantities.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

from .global_local import Relaxation
from .mesh import PatchLayout, Rect, benchmark_layout
from .problem import ConfigurationError, ProblemSpec
from .sparse_poly import AdaptiveParams

DEFAULTS = {
    "problem": {
        "layout": "benchmark",
        "Q": 8,
        "weights": "isotropic",
        "domain_box": None,
        "patch_boxes": None,
        "inclusion_boxes": None,
        "coarse_mesh_length": 0.1,
        "fine_mesh_length": 0.05,
        "source": 1.0,
        "fictitious_diffusion": "mean",
        "reaction_scale": 1.0,
        "xi_fixed": None,
    },
    "relaxation": {"kind": "aitken", "rho": 1.0, "rho_min": 1e-8, "rho_max": 1.5},
    "adaptive": {
        "eps_cv": 1e-3,
        "eps_stagn": 0.1,
        "eps_overfit": 0.1,
        "theta": 0.5,
        "p_add": 0.1,
        "n_initial": 1,
        "max_samples": 5000,
        "max_rounds": 200,
        "error_measure": "rms",
    },
    "iteration": {"k_max": 20, "newton_tol": 1e-12, "stop_tol": None},
    "reference": {"eps_cv": 1e-6, "path": None},
    "seed": 0,
    "output_dir": "out",
}


class ConfigError(ConfigurationError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(p, "unknown field")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(p, "expected an object")
            out[k] = _merge(base[k], v, p)
        else:
            out[k] = v
    return out


def _num(cfg, path, lo=None, hi=None, strict_lo=False, integer=False, optional=False):
    sec, key = path.split(".") if "." in path else (None, path)
    v = cfg[sec][key] if sec else cfg[key]
    if v is None and optional:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(path, f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(path, "expected an integer")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(path, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be <= {hi}, got {v}")


def validate(cfg: dict) -> dict:
    """Check ranges and consistency; returns ``cfg`` unchanged."""
    for p in ("adaptive.eps_cv", "adaptive.eps_stagn", "adaptive.eps_overfit", "adaptive.p_add",
              "iteration.newton_tol", "reference.eps_cv", "problem.coarse_mesh_length",
              "problem.fine_mesh_length"):
        _num(cfg, p, 0.0, strict_lo=True)
    _num(cfg, "adaptive.theta", 0.0, 1.0)
    _num(cfg, "adaptive.n_initial", 1, integer=True)
    _num(cfg, "adaptive.max_samples", 1, integer=True)
    _num(cfg, "adaptive.max_rounds", 1, integer=True)
    _num(cfg, "iteration.k_max", 1, integer=True)
    _num(cfg, "iteration.stop_tol", 0.0, strict_lo=True, optional=True)
    _num(cfg, "seed", 0, integer=True)
    _num(cfg, "problem.source")
    _num(cfg, "problem.reaction_scale", 0.0)
    _num(cfg, "problem.xi_fixed", 0.0, 1.0, optional=True)
    if cfg["adaptive"]["error_measure"] not in ("rms", "ms"):
        raise ConfigError("adaptive.error_measure", "expected 'rms' or 'ms'")
    r = cfg["relaxation"]
    if r["kind"] not in ("aitken", "fixed"):
        raise ConfigError("relaxation.kind", "expected 'aitken' or 'fixed'")
    _num(cfg, "relaxation.rho", 0.0, strict_lo=True)
    _num(cfg, "relaxation.rho_min", 0.0, strict_lo=True)
    _num(cfg, "relaxation.rho_max", 0.0, strict_lo=True)
    if r["rho_min"] > r["rho_max"]:
        raise ConfigError("relaxation.rho_min", "must not exceed rho_max")
    p = cfg["problem"]
    H, h = p["coarse_mesh_length"], p["fine_mesh_length"]
    ratio = H / h
    if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
        raise ConfigError("problem.fine_mesh_length", "must divide coarse_mesh_length")
    fd = p["fictitious_diffusion"]
    if isinstance(fd, str):
        if fd not in ("mean", "unit", "fixed"):
            raise ConfigError("problem.fictitious_diffusion", "expected 'mean', 'unit', 'fixed' or a number")
        if fd == "fixed" and p["xi_fixed"] is None:
            raise ConfigError("problem.fictitious_diffusion", "'fixed' requires problem.xi_fixed")
    else:
        _num(cfg, "problem.fictitious_diffusion", 0.0, strict_lo=True)
    if p["layout"] not in ("benchmark", "explicit"):
        raise ConfigError("problem.layout", "expected 'benchmark' or 'explicit'")
    w = p["weights"]
    if isinstance(w, str):
        if w not in ("isotropic", "anisotropic"):
            raise ConfigError("problem.weights", "expected 'isotropic', 'anisotropic' or a list")
    elif not isinstance(w, list) or not all(isinstance(g, (int, float)) and 0 <= g <= 1 for g in w):
        raise ConfigError("problem.weights", "expected a list of numbers in [0, 1]")
    if p["layout"] == "benchmark":
        _num(cfg, "problem.Q", 1, integer=True)
    else:
        for key in ("domain_box", "patch_boxes", "inclusion_boxes"):
            if p[key] is None:
                raise ConfigError(f"problem.{key}", "required for an explicit layout")
        if isinstance(w, str) and w == "anisotropic":
            raise ConfigError("problem.weights", "explicit layouts need 'isotropic' or a list")
    try:
        build_layout(cfg)
    except ValueError as e:
        raise ConfigError("problem", str(e)) from None
    return cfg


def load_config(source) -> dict:
    """Parse a JSON file path or a dict into a validated full config."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), f"invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected an object")
    return validate(_merge(DEFAULTS, raw))


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_layout(cfg) -> PatchLayout:
    p = cfg["problem"]
    if p["layout"] == "benchmark":
        return benchmark_layout(p["weights"], int(p["Q"]))
    boxes = [Rect(*b) for b in p["patch_boxes"]]
    incs = [Rect(*b) for b in p["inclusion_boxes"]]
    w = p["weights"]
    gammas = tuple(1.0 for _ in boxes) if w == "isotropic" else tuple(float(g) for g in w)
    return PatchLayout(Rect(*p["domain_box"]), tuple(boxes), tuple(incs), gammas)


def build_spec(cfg) -> ProblemSpec:
    p = cfg["problem"]
    return ProblemSpec(build_layout(cfg), H=p["coarse_mesh_length"], h=p["fine_mesh_length"],
                       f=p["source"], fictitious=p["fictitious_diffusion"],
                       reaction_scale=p["reaction_scale"], xi_fixed=p["xi_fixed"])


def build_params(cfg, eps_cv=None) -> AdaptiveParams:
    a = dict(cfg["adaptive"])
    if eps_cv is not None:
        a["eps_cv"] = eps_cv
    a["n_initial"] = int(a["n_initial"])
    a["max_samples"] = int(a["max_samples"])
    a["max_rounds"] = int(a["max_rounds"])
    return AdaptiveParams(**a)


def build_relaxation(cfg) -> Relaxation:
    r = cfg["relaxation"]
    return Relaxation(r["kind"], r["rho"], r["rho_min"], r["rho_max"])
