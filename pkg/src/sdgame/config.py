"""JSON configuration documents.

A configuration has the sections ``problem``, ``grid``, ``solver``, ``mc``
and ``transform``.  The problem section either names a corpus example
(``{"example": "ex53", "params": {...}}``) or spells out every coefficient.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .coefficients import parse_expr
from .errors import ConfigError
from .problem import ControlSet, GridSpec, Interval, ProblemSpec

SECTIONS = ("problem", "grid", "solver", "mc", "transform")

PROBLEM_REQUIRED = {"drift", "diffusion", "generator", "terminal", "T", "U", "V"}
PROBLEM_OPTIONAL = {"theta", "eta", "p", "lip_C", "side", "name", "sample_box"}
GRID_KEYS = {"x_lo", "x_hi", "N_x", "N_t", "dx", "cfl_safety"}
SOLVER_KEYS = {"side", "fp_tol", "fp_maxit", "margin", "threads", "backend", "save_every"}
MC_KEYS = {"paths", "steps", "seed", "basis_degree", "t0", "x0", "bootstrap"}
TRANSFORM_KEYS = {"m", "k", "quadrature"}


def check_keys(section: str, doc: dict, allowed: set[str], required: set[str] = frozenset()):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(doc) - allowed - required)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {', '.join(unknown)}")
    missing = sorted(required - set(doc))
    if missing:
        raise ConfigError(f"missing required keys in {section}: {', '.join(missing)}")


def control_set_from_config(doc: Any, name: str) -> ControlSet:
    if not isinstance(doc, list) or not doc:
        raise ConfigError(f"{name} must be a non-empty list of {{lo, hi, points}}")
    dims = []
    for d in doc:
        check_keys(name, d, set(), {"lo", "hi", "points"})
        dims.append(Interval(float(d["lo"]), float(d["hi"]), int(d["points"])))
    return ControlSet(tuple(dims))


def problem_to_config(spec: ProblemSpec) -> dict:
    return {
        "drift": spec.drift.to_config(),
        "diffusion": spec.diffusion.to_config(),
        "generator": spec.generator.to_config(),
        "terminal": spec.terminal.to_config(),
        "T": float(spec.T),
        "U": spec.U.to_config(),
        "V": spec.V.to_config(),
        "theta": float(spec.theta),
        "eta": float(spec.eta),
        "p": float(spec.p),
        "lip_C": float(spec.lip_C),
        "side": spec.side,
        "name": spec.name,
        "sample_box": [float(spec.sample_box[0]), float(spec.sample_box[1])],
    }


def problem_from_config(doc: dict) -> ProblemSpec:
    if isinstance(doc, dict) and "example" in doc:
        from .corpus import build_example

        check_keys("problem", doc, {"example", "params"})
        return build_example(doc["example"], **(doc.get("params") or {}))
    check_keys("problem", doc, PROBLEM_OPTIONAL, PROBLEM_REQUIRED)
    kwargs: dict[str, Any] = {
        "drift": parse_expr(doc["drift"]),
        "diffusion": parse_expr(doc["diffusion"]),
        "generator": parse_expr(doc["generator"]),
        "terminal": parse_expr(doc["terminal"]),
        "T": float(doc["T"]),
        "U": control_set_from_config(doc["U"], "U"),
        "V": control_set_from_config(doc["V"], "V"),
    }
    for key in ("theta", "eta", "p", "lip_C"):
        if key in doc:
            kwargs[key] = float(doc[key])
    if "side" in doc:
        kwargs["side"] = doc["side"]
    if "name" in doc:
        kwargs["name"] = str(doc["name"])
    if "sample_box" in doc:
        lo, hi = doc["sample_box"]
        kwargs["sample_box"] = (float(lo), float(hi))
    return ProblemSpec(**kwargs)


def grid_from_config(doc: dict, spec: ProblemSpec) -> tuple[GridSpec | None, dict]:
    """Return the grid (``None`` when ``N_t`` is left to the CFL rule) and extras."""
    check_keys("grid", doc, GRID_KEYS - {"x_lo", "x_hi"}, {"x_lo", "x_hi"})
    if "N_x" in doc and "dx" in doc:
        raise ConfigError("grid: give either N_x or dx, not both")
    if "N_x" not in doc and "dx" not in doc:
        raise ConfigError("missing required keys in grid: N_x (or dx)")
    x_lo, x_hi = float(doc["x_lo"]), float(doc["x_hi"])
    n_x = int(doc["N_x"]) if "N_x" in doc else int(round((x_hi - x_lo) / float(doc["dx"]))) + 1
    extras = {"cfl_safety": float(doc.get("cfl_safety", 0.9)), "x_lo": x_lo, "x_hi": x_hi,
              "N_x": n_x}
    if doc.get("N_t") is None:
        return None, extras
    return GridSpec(x_lo, x_hi, n_x, int(doc["N_t"]), spec.T), extras


def load_config(source: str | Path | dict) -> dict:
    """Read and key-check a configuration; returns the parsed sections."""
    if isinstance(source, dict):
        doc = source
    else:
        doc = json.loads(Path(source).read_text())
    check_keys("config", doc, set(SECTIONS) - {"problem"}, {"problem"})
    out = {"problem": problem_from_config(doc["problem"])}
    for name, allowed in (("solver", SOLVER_KEYS), ("mc", MC_KEYS),
                          ("transform", TRANSFORM_KEYS)):
        sec = doc.get(name) or {}
        check_keys(name, sec, allowed)
        out[name] = dict(sec)
    if "grid" in doc:
        out["grid"] = dict(doc["grid"])
        check_keys("grid", out["grid"], GRID_KEYS - {"x_lo", "x_hi"}, {"x_lo", "x_hi"})
    out["raw"] = doc
    return out


def dump_config(spec: ProblemSpec, path: str | Path | None = None, **sections) -> dict:
    doc = {"problem": problem_to_config(spec)}
    for name in SECTIONS[1:]:
        if sections.get(name):
            doc[name] = sections[name]
    if path is not None:
        Path(path).write_text(json.dumps(doc, indent=2))
    return doc
