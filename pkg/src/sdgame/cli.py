"""Command-line entry point.

Exit codes: 0 on success, 1 when validation or configuration fails, 2 on a
numerical abort (CFL violation, non-finite values, domain excursions).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bsde import cost_J
from .config import GRID_KEYS, dump_config, load_config
from .corpus import DEFAULT_GRIDS, analytic_for, build_example
from .errors import ConfigError, DomainError, NumericalAbort, ValidationError
from .problem import GridSpec, ProblemSpec, constant_policy, validate_problem
from .solver import cfl_grid, interior_error, solve

log = logging.getLogger("sdgame")

MAX_SLICES = 201


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if np.isnan(f):
            return None
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# argument parsing


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("problem")
    src.add_argument("--example", choices=sorted(DEFAULT_GRIDS), help="corpus example id")
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                     help="override an example parameter (repeatable)")
    for name in ("rho", "vartheta", "varsigma"):
        src.add_argument(f"--{name}", type=float, help=f"Epstein-Zin {name} (ex53)")
    common.add_argument("--grid", default="default",
                        help="'default' or 'x_lo,x_hi,N_x[,N_t]'; N_t defaults to the CFL rule")
    common.add_argument("--side", choices=("lower", "upper"))
    common.add_argument("--seed", type=int)
    common.add_argument("--paths", type=int)
    common.add_argument("--steps", type=int)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--backend", choices=("auto", "compiled", "numpy"), default="auto")
    common.add_argument("--out", default="sdgame-out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sdgame", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sdgame {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the HJBI equation")
    b = sub.add_parser("bsde", parents=[common], help="Monte-Carlo cost of a feedback pair")
    b.add_argument("--t0", type=float)
    b.add_argument("--x0", type=float)
    b.add_argument("--u", type=float, nargs="+", help="constant u instead of feedback")
    b.add_argument("--v", type=float, nargs="+", help="constant v instead of feedback")
    s = sub.add_parser("saddle", parents=[common], help="saddle-point deviation check")
    s.add_argument("--t0", type=float)
    s.add_argument("--x0", type=float)
    s.add_argument("--deviations", type=int, default=5,
                   help="evenly spaced mesh points per player")
    s.add_argument("--tolerance", type=float, default=2e-2)
    sub.add_parser("dpp-residual", parents=[common], help="one-step DPP residual")
    d = sub.add_parser("diagnose", parents=[common], help="regularity and Gamma-class checks")
    d.add_argument("--delta", type=float, default=0.2)
    d.add_argument("--upsilon", type=float, default=1.0)
    d.add_argument("--lambda-domain", default="-4,4")
    t = sub.add_parser("transform-study", parents=[common],
                       help="mollification and truncation distances")
    t.add_argument("--m", default="2,4,8,16,32")
    t.add_argument("--k", default="1,2,4")
    t.add_argument("--samples", type=int, default=4096)
    t.add_argument("--no-fields", action="store_true", help="skip field distances")
    h = sub.add_parser("hamiltonian", parents=[common], help="probe H at one query")
    h.add_argument("probe", nargs="?", default="probe")
    for name in ("t", "x", "y", "p", "A"):
        h.add_argument(f"--{name}", type=float, default=0.0)
    sub.add_parser("validate", parents=[common], help="check the declared hypotheses")
    return p


# --------------------------------------------------------------------------
# resolution helpers


class Run:
    """Resolved problem, grid and sections for one invocation."""

    def __init__(self, args):
        self.args = args
        self.cfg = {"solver": {}, "mc": {}, "transform": {}}
        grid_doc = None
        if args.config:
            cfg = load_config(args.config)
            self.spec: ProblemSpec = cfg["problem"]
            self.cfg.update({k: cfg[k] for k in ("solver", "mc", "transform")})
            grid_doc = cfg.get("grid")
            self.example = self.spec.name or None
        elif args.example:
            params = {}
            for item in args.param:
                if "=" not in item:
                    raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
                key, val = item.split("=", 1)
                params[key] = _parse_value(val)
            for name in ("rho", "vartheta", "varsigma"):
                if getattr(args, name) is not None:
                    params[name] = getattr(args, name)
            self.spec = build_example(args.example, **params)
            self.example = args.example
        else:
            raise ConfigError("give --example or --config")
        self.grid_doc = grid_doc
        solver = self.cfg["solver"]
        self.side = args.side or solver.get("side") or self.spec.side
        mc = self.cfg["mc"]
        self.seed = args.seed if args.seed is not None else int(mc.get("seed", 0))
        self.paths = args.paths or int(mc.get("paths", 10_000))
        self.steps = args.steps or int(mc.get("steps", 100))
        self.basis_degree = int(mc.get("basis_degree", 4))
        self.bootstrap = int(mc.get("bootstrap", 200))
        self.solver_kw = {"backend": solver.get("backend", args.backend),
                          "threads": int(solver.get("threads", args.threads)),
                          "fp_tol": float(solver.get("fp_tol", 1e-12)),
                          "fp_maxit": int(solver.get("fp_maxit", 50))}
        self.margin = float(solver.get("margin", 0.3))
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)

    def grid(self) -> GridSpec:
        text = self.args.grid
        safety = 0.9
        if self.grid_doc is not None and text == "default":
            doc = self.grid_doc
            unknown = set(doc) - GRID_KEYS
            if unknown:
                raise ConfigError(f"unknown keys in grid: {', '.join(sorted(unknown))}")
            x_lo, x_hi = float(doc["x_lo"]), float(doc["x_hi"])
            n_x = int(doc["N_x"]) if "N_x" in doc else int(round((x_hi - x_lo) / doc["dx"])) + 1
            n_t = doc.get("N_t")
            safety = float(doc.get("cfl_safety", 0.9))
        elif text == "default":
            if self.example in DEFAULT_GRIDS:
                x_lo, x_hi, n_x = DEFAULT_GRIDS[self.example]
            else:
                x_lo, x_hi = self.spec.sample_box
                n_x = 201
            n_t = None
        else:
            parts = text.split(",")
            if len(parts) not in (3, 4):
                raise ConfigError("--grid expects 'default' or 'x_lo,x_hi,N_x[,N_t]'")
            x_lo, x_hi, n_x = float(parts[0]), float(parts[1]), int(parts[2])
            n_t = int(parts[3]) if len(parts) == 4 else None
        if n_t is None:
            return cfl_grid(self.spec, x_lo, x_hi, n_x, safety)
        return GridSpec(x_lo, x_hi, n_x, int(n_t), self.spec.T)

    def solve(self, grid: GridSpec, **kw):
        save_every = kw.pop("save_every", max(1, grid.N_t // (MAX_SLICES - 1)))
        return solve(self.spec, grid, self.side, save_every=save_every, **self.solver_kw, **kw)

    def start(self):
        mc = self.cfg["mc"]
        t0 = getattr(self.args, "t0", None)
        x0 = getattr(self.args, "x0", None)
        t0 = float(mc.get("t0", 0.0)) if t0 is None else t0
        if x0 is None:
            x0 = float(mc.get("x0", 1.0 if self.example != "ex53" else 2.0))
        return t0, x0

    def manifest(self, command: str, argv: list[str]) -> dict:
        return {
            "command": command,
            "argv": argv,
            "code_version": __version__,
            "seed": self.seed,
            "side": self.side,
            "config": dump_config(self.spec, solver=self.cfg["solver"] or None,
                                  mc=self.cfg["mc"] or None,
                                  transform=self.cfg["transform"] or None),
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }


def _write_field(path: Path, vf) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "W"])
        for tj, row in zip(vf.times, vf.values):
            for xi, wi in zip(vf.grid.x, row):
                w.writerow([repr(float(tj)), repr(float(xi)), repr(float(wi))])


def _pick(points: np.ndarray, n: int) -> np.ndarray:
    if len(points) <= n:
        return points
    idx = np.unique(np.round(np.linspace(0, len(points) - 1, n)).astype(int))
    return points[idx]


# --------------------------------------------------------------------------
# commands


def cmd_solve(run: Run) -> dict:
    grid = run.grid()
    vf = run.solve(grid)
    _write_field(run.out / "field.csv", vf)
    summary = {"grid": {**grid.to_config(), "dx": grid.dx, "dt": grid.dt},
               "side": vf.side, "cfl": vf.info["cfl"], "growth_constant": vf.growth_constant,
               "backend": vf.info["backend"], "z_dependent": vf.info["z_dependent"]}
    if "regime" in vf.info:
        summary["regime"] = vf.info["regime"]
    analytic = analytic_for(run.spec) if vf.side == run.spec.side else None
    if analytic is not None:
        summary["max_error"] = interior_error(vf, analytic, run.margin)
        summary["error_margin"] = run.margin
    return summary


def _policy(run: Run, grid=None):
    from .game import extract_feedback

    vf = run.solve(grid or run.grid())
    return extract_feedback(run.spec, vf)


def cmd_bsde(run: Run) -> dict:
    a = run.args
    t0, x0 = run.start()
    if a.u is not None or a.v is not None:
        if a.u is None or a.v is None:
            raise ConfigError("give both --u and --v for a constant pair")
        policy, label = constant_policy(a.u, a.v), {"u": a.u, "v": a.v}
    else:
        policy, label = _policy(run).policy(), "feedback"
    est = cost_J(run.spec, policy, t0, x0, run.paths, run.steps, run.seed, run.basis_degree,
                 run.bootstrap)
    return {**est.to_dict(), "t0": t0, "x0": x0, "policy": label}


def cmd_saddle(run: Run) -> dict:
    from .game import saddle_check

    t0, x0 = run.start()
    pair = _policy(run)
    n = run.args.deviations
    rep = saddle_check(run.spec, pair, t0, x0, _pick(run.spec.U.points, n),
                       _pick(run.spec.V.points, n), M=run.paths, N=run.steps, seed=run.seed,
                       scheme_tol=run.args.tolerance, basis_degree=run.basis_degree,
                       bootstrap=run.bootstrap)
    out = rep.to_dict()
    out.update(t0=t0, x0=x0)
    if not rep.holds:
        out["exit_code"] = 1
    return out


def cmd_dpp(run: Run) -> dict:
    from .game import dpp_residual

    grid = run.grid()
    vf = run.solve(grid, pairs=True)
    return {"grid": grid.to_config(), **dpp_residual(run.spec, vf, run.margin)}


def cmd_diagnose(run: Run) -> dict:
    from . import diagnostics as dg

    grid = run.grid()
    vf = run.solve(grid)
    mask = grid.interior_mask(run.margin)
    window = (float(grid.x[mask][0]), float(grid.x[mask][-1]))
    lo, hi = (float(s) for s in run.args.lambda_domain.split(","))
    lam = dg.find_lambda(run.spec, run.args.upsilon, GridSpec(lo, hi, 161, 100, run.spec.T))
    hold = dg.holder_t(vf, window)
    out = {
        "probe_window": window,
        "lipschitz_x": dg.lipschitz_x(vf)["K"],
        "holder_t": {"c": hold["c"], "exponent": hold["exponent"], "exact": hold["exact"]},
        "growth_constant": vf.growth_constant,
        "gamma_membership": dg.gamma_membership(vf, run.args.upsilon),
        "find_lambda": lam.to_dict(),
    }
    if run.args.delta < run.spec.T:
        out["lipschitz_t_interior"] = dg.lipschitz_t_interior(vf, run.args.delta, window)
    return out


def _default_compact(spec: ProblemSpec, m_min: int):
    from .generators import Compact

    lo, hi = spec.generator.y_domain()
    pad = 1.0 / m_min + 0.1
    ylo = max(lo + pad, -5.0) if np.isfinite(lo) else -5.0
    yhi = min(hi - pad, 5.0) if np.isfinite(hi) else 5.0
    return Compact.for_spec(spec, (ylo, yhi))


def cmd_transform(run: Run) -> dict:
    from .generators import transform_study

    ms = [int(s) for s in run.args.m.split(",") if s]
    ks = [float(s) for s in run.args.k.split(",") if s]
    compact = _default_compact(run.spec, min(ms) if ms else 1)
    grid = None if run.args.no_fields else run.grid()
    kw = dict(run.solver_kw)
    if grid is not None:
        kw["save_every"] = max(1, grid.N_t // (MAX_SLICES - 1))
    rows = transform_study(run.spec, compact, ms, ks, run.args.samples, grid,
                           int(run.cfg["transform"].get("quadrature", 64)), **kw)
    with (run.out / "transform.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["kind", "level", "sup_distance",
                                           "hamiltonian_distance", "field_distance"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return {"rows": rows, "compact": {"t": compact.t, "x": compact.x, "y": compact.y}}


def cmd_hamiltonian(run: Run) -> dict:
    from .hamiltonian import HamiltonianQuery, hamiltonian

    a = run.args
    q = HamiltonianQuery(a.t, a.x, a.y, a.p, a.A)
    res = hamiltonian(q, run.spec, run.side)
    out = {"side": run.side, "value": res.value, "star": res.star,
           "response": res.response}
    print(json.dumps(_jsonable(out)))
    return out


def cmd_validate(run: Run) -> dict:
    rep = validate_problem(run.spec)
    out = rep.summary()
    if not rep.passed:
        out["exit_code"] = 1
    return out


COMMANDS = {
    "solve": cmd_solve, "bsde": cmd_bsde, "saddle": cmd_saddle, "dpp-residual": cmd_dpp,
    "diagnose": cmd_diagnose, "transform-study": cmd_transform,
    "hamiltonian": cmd_hamiltonian, "validate": cmd_validate,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        r = Run(args)
        _dump(r.out / "manifest.json", r.manifest(args.command, argv))
        summary = COMMANDS[args.command](r)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalAbort, DomainError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    code = int(summary.pop("exit_code", 0))
    summary = {"command": args.command, "example": r.example, "seed": r.seed, **summary}
    _dump(r.out / "summary.json", summary)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
