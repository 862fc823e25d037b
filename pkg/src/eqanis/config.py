"""JSON run configuration: defaults, dotted overrides, validation and object builders."""
from __future__ import annotations

import copy
import hashlib
import json
import math

from .physics import (
    AlignedAnisotropy,
    FieldSequence,
    FluidB3Anisotropy,
    ParticleParams,
    ScanGrid,
    easy_axis_xy,
    tesla_to_field,
)


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "particle": {"diameter_nm": 19.0, "Ms_Am": 474000.0, "temperature_K": 293.0},
    "anisotropy": {"type": "fluid-b3", "K_max": 3500.0, "q": 2.0, "boundary_field_mT": None},
    "sequence": {
        "gradient_Tm": [-1.0, -1.0, 2.0],
        "amplitudes_mT": [12.0, 12.0],
        "phases": [0.0, 0.0],
        "f_base_Hz": 2.5e6,
        "dividers": [102, 96],
        "sample_rate_Hz": 2.5e6,
    },
    "grid": {"nx": 17, "ny": 15, "fov_mm": [34.0, 30.0], "center_mm": [0.0, 0.0, 0.0]},
    "series": {"tol": 1e-12},
    "reduced": {"n_torus": 128, "lambda_rule": "nearest"},
    "fp": {"L_sph": 40, "rel_tol": 2e-4, "abs_tol": 1e-6, "warmup": 1.0, "gamma": 1.75e11, "damping": 0.1},
    "recon": {"iterations": 100, "lambda_r": 0.1, "nonneg": True, "shuffle": False},
    "n_jobs": 1,
    "seed": 0,
}

ANISOTROPY_TYPES = ("aligned", "fluid-b3", "isotropic")


def _merge(base, upd, path=""):
    for key, val in upd.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            _merge(base[key], val, path + key + ".")
        elif key == "anisotropy" and isinstance(val, dict):
            base[key] = dict(val)
        else:
            base[key] = val
    return base


def parse_override(text):
    """``"a.b=value"`` with ``value`` parsed as JSON (bare strings allowed)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    out = cur = {}
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = val
    return out


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
        if "anisotropy" in user:  # replaces the default block wholesale
            cfg["anisotropy"] = {}
            cfg["anisotropy"].update(user.pop("anisotropy"))
        _merge(cfg, user)
    for ov in overrides:
        upd = parse_override(ov)
        if "anisotropy" in upd:
            cfg["anisotropy"].update(upd.pop("anisotropy"))
        _merge(cfg, upd)
    validate(cfg)
    return cfg


def validate(cfg):
    p = cfg["particle"]
    for k in ("diameter_nm", "Ms_Am", "temperature_K"):
        if not _pos(p.get(k)):
            raise ConfigError(f"particle.{k} must be a positive number")
    a = cfg["anisotropy"]
    if a.get("type") not in ANISOTROPY_TYPES:
        raise ConfigError(f"anisotropy.type must be one of {ANISOTROPY_TYPES}")
    try:
        build_anisotropy(cfg)
        build_sequence(cfg)
        build_grid(cfg)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if int(cfg["n_jobs"]) < 1:
        raise ConfigError("n_jobs must be >= 1")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    r = cfg["recon"]
    if int(r["iterations"]) < 1 or float(r["lambda_r"]) < 0:
        raise ConfigError("recon needs iterations >= 1 and lambda_r >= 0")
    f = cfg["fp"]
    if int(f["L_sph"]) < 10 or not (_pos(f["rel_tol"]) and _pos(f["abs_tol"]) and _pos(f["gamma"])):
        raise ConfigError("fp needs L_sph >= 10 and positive tolerances and gamma")
    if not (isinstance(f["warmup"], (int, float)) and f["warmup"] >= 0 and f["damping"] >= 0):
        raise ConfigError("fp.warmup and fp.damping must be >= 0")
    if cfg["reduced"]["lambda_rule"] not in ("ratio", "nearest"):
        raise ConfigError("reduced.lambda_rule must be 'ratio' or 'nearest'")


def _pos(v):
    return isinstance(v, (int, float)) and math.isfinite(v) and v > 0


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_params(cfg) -> ParticleParams:
    p = cfg["particle"]
    return ParticleParams(p["diameter_nm"] * 1e-9, p["Ms_Am"], p["temperature_K"])


def build_sequence(cfg) -> FieldSequence:
    s = cfg["sequence"]
    g = tesla_to_field(s["gradient_Tm"])
    amp = tesla_to_field([v * 1e-3 for v in s["amplitudes_mT"]])
    return FieldSequence.from_dividers(s["f_base_Hz"], s["dividers"], g, amp, tuple(s.get("phases", (0, 0))),
                                       s["sample_rate_Hz"])


def build_grid(cfg) -> ScanGrid:
    g = cfg["grid"]
    center = tuple(v * 1e-3 for v in g.get("center_mm", (0.0, 0.0, 0.0)))
    return ScanGrid(int(g["nx"]), int(g["ny"]), tuple(v * 1e-3 for v in g["fov_mm"]), center)


def default_boundary_field(seq: FieldSequence):
    """Selection-field magnitude at the scan-field corner, ``sqrt(A_x^2 + A_y^2)``."""
    return math.hypot(*seq.amplitudes)


def build_anisotropy(cfg):
    a = cfg["anisotropy"]
    kind = a["type"]
    if kind == "isotropic":
        return AlignedAnisotropy((0.0, 0.0, 1.0), 0.0)
    if kind == "aligned":
        if "easy_axis" in a:
            import numpy as np

            n = np.asarray(a["easy_axis"], dtype=float)
            axis = tuple(n / np.linalg.norm(n))
        else:
            axis = easy_axis_xy(float(a.get("angle_deg", 0.0)))
        return AlignedAnisotropy(axis, float(a["K_anis"]))
    h = a.get("boundary_field_mT")
    h = default_boundary_field(build_sequence(cfg)) if h is None else float(tesla_to_field(h * 1e-3))
    return FluidB3Anisotropy(float(a["K_max"]), float(a["q"]), h)


def fp_options(cfg):
    return dict(cfg["fp"])
