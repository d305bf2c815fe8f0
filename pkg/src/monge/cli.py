"""
Command line front end.

    monge solve     --config run.toml [--out field.csv] [--svg field.svg]
    monge verify    --config run.toml [--out residuals.csv] [--convention paper]
    monge breaking  --config run.toml
    monge xcheck    --config run.toml
    monge multi-solve --config run.toml

Exit codes: 0 success, 1 numerical failure or check exceeded, 2 bad config.
MONGE_THREADS caps the number of worker threads used for grid evaluation.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from monge import charflow
from monge.errors import MongeError
from monge.expr import ExpressionError, parse
from monge.implicit import (
    CONVENTIONS, ImplicitSolution, ProfileSpec, RootError, SingularStencilError,
    advective_invariance, pde_residual, velocity_field)
from monge.multidim import (
    MultiProblem, SolveRhoError, label_invariance_nd, residual_nd, solve_rho,
    velocity_field_nd)
from monge.ode import OdeProblem, catalog

DEFAULT_TOL_REPORT = 1e-4
DEFAULT_XCHECK_TOL = 1e-5


class ConfigError(MongeError):
    def __init__(self, section, message):
        super().__init__(f"[{section}] {message}")
        self.section = section


# {{{ config

@dataclass
class RunConfig:
    problem: dict
    profile: dict
    grid: dict
    solver: dict
    output: dict
    characteristics: dict = field(default_factory=dict)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("file", f"invalid TOML in {path}: {exc}") from None
    known = {"problem", "profile", "grid", "solver", "output", "characteristics"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    return RunConfig(
        problem=data.get("problem", {}), profile=data.get("profile", {}),
        grid=data.get("grid", {}), solver=data.get("solver", {}),
        output=data.get("output", {}), characteristics=data.get("characteristics", {}),
        )


def _require(cfg: RunConfig, *sections):
    for name in sections:
        if not getattr(cfg, name):
            raise ConfigError(name, "missing section")


def _get(section_name, section, key, kind=float, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(section_name, f"missing key {key!r}")
        return default
    value = section[key]
    try:
        if isinstance(value, list):
            return [kind(v) for v in value]
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(section_name, f"bad value for {key!r}: {value!r}") from None


def _ode(cfg: RunConfig, need_solution=False):
    prob = cfg.problem
    try:
        if "catalog" in prob:
            return catalog(prob["catalog"], prob.get("params", {}))
        if "force" in prob:
            if need_solution:
                raise ConfigError("problem", "this command needs 'catalog' (an analytic general solution)")
            return OdeProblem(prob["force"], name="custom"), None
    except ConfigError:
        raise
    except MongeError as exc:
        raise ConfigError("problem", str(exc)) from None
    raise ConfigError("problem", "needs 'catalog' or 'force'")


def _solver(cfg: RunConfig):
    s = cfg.solver
    tol = _get("solver", s, "tol", default=1e-10)
    h = _get("solver", s, "fd_step", default=1e-4)
    if not tol > 0:
        raise ConfigError("solver", "tol must be > 0")
    if not h > 0:
        raise ConfigError("solver", "fd_step must be > 0")
    return tol, h


def _bracket_1d(cfg):
    b = _get("solver", cfg.solver, "bracket", default=[-10.0, 10.0])
    if len(b) != 2 or not b[0] < b[1]:
        raise ConfigError("solver", f"bracket must be [lo, hi] with lo < hi, got {b}")
    return tuple(b)


def _implicit(cfg: RunConfig) -> tuple[OdeProblem, ImplicitSolution]:
    _require(cfg, "problem", "profile")
    problem, gs = _ode(cfg, need_solution=True)
    tol, _ = _solver(cfg)
    for key in ("c1", "c2"):
        if key not in cfg.profile:
            raise ConfigError("profile", f"missing key {key!r}")
    try:
        profile = ProfileSpec(cfg.profile["c1"], cfg.profile["c2"])
        return problem, ImplicitSolution(gs, profile, _bracket_1d(cfg), tol)
    except (MongeError, ValueError) as exc:
        raise ConfigError("profile", str(exc)) from None


def _multi(cfg: RunConfig) -> MultiProblem:
    if cfg.problem.get("catalog", "free") != "free" or "force" in cfg.problem:
        raise ConfigError("problem", "n-dimensional profiles support only the free system")
    f, g = cfg.profile.get("f"), cfg.profile.get("g")
    if not isinstance(f, list) or not isinstance(g, list):
        raise ConfigError("profile", "'f' and 'g' must both be lists of expressions")
    b = cfg.solver.get("bracket", [-10.0, 10.0])
    bracket = [b] if b and not isinstance(b[0], list) else b
    try:
        return MultiProblem(tuple(f), tuple(g), tuple(tuple(p) for p in bracket))
    except (MongeError, ValueError, TypeError) as exc:
        raise ConfigError("profile", str(exc)) from None


def _axis(section, lo_key, hi_key, n_key, count=None):
    lo = _get("grid", section, lo_key)
    hi = _get("grid", section, hi_key)
    n = _get("grid", section, n_key, kind=int)
    if count is not None:
        lo, hi, n = (v if isinstance(v, list) else [v] * count for v in (lo, hi, n))
        if not len(lo) == len(hi) == len(n) == count:
            raise ConfigError("grid", f"expected {count} values per x bound")
    else:
        lo, hi, n = [lo], [hi], [n]
    for a, b, k in zip(lo, hi, n):
        if k < 2:
            raise ConfigError("grid", f"{n_key} must be >= 2")
        if not a < b:
            raise ConfigError("grid", f"{lo_key} must be < {hi_key}")
    return [np.linspace(a, b, k) for a, b, k in zip(lo, hi, n)]


def _grid(cfg: RunConfig, ndim: int = 1, vector: bool = False):
    _require(cfg, "grid")
    g = cfg.grid
    xs = _axis(g, "x_lo", "x_hi", "nx", count=ndim if vector else None)
    (ts,) = _axis(g, "t_lo", "t_hi", "nt")
    points = []
    for t in ts:
        for x in itertools.product(*xs):
            points.append((np.array(x) if vector else x[0], float(t)))
    return xs, ts, points

# }}}


# {{{ output helpers

def fmt(value) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.16e}"


def thread_count() -> int:
    raw = os.environ.get("MONGE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def grid_map(func, points):
    """Evaluate func over points; order of results follows points."""
    workers = thread_count()
    if workers == 1 or len(points) < 2:
        return [func(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, points))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def svg_polylines(curves, width=800, height=600, margin=40) -> str:
    """
    Plot curves [(label, xs, ys)] as polylines in a fixed 800x600 viewBox.

    NaN values break a curve into separate polylines.
    """
    finite = [(x, y) for _, xs, ys in curves for x, y in zip(xs, ys)
              if math.isfinite(x) and math.isfinite(y)]
    if finite:
        x_min = min(p[0] for p in finite)
        x_max = max(p[0] for p in finite)
        y_min = min(p[1] for p in finite)
        y_max = max(p[1] for p in finite)
    else:
        x_min, x_max, y_min, y_max = 0.0, 1.0, 0.0, 1.0
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_min, y_max = y_min - 1.0, y_max + 1.0

    def px(x):
        return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y_min) / (y_max - y_min) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="black"/>',
    ]
    for i, (label, xs, ys) in enumerate(curves):
        color = colors[i % len(colors)]
        segment = []
        segments = []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                segment.append(f"{px(x):.2f},{py(y):.2f}")
            elif segment:
                segments.append(segment)
                segment = []
        if segment:
            segments.append(segment)
        for seg in segments:
            lines.append(f'<polyline fill="none" stroke="{color}" points="{" ".join(seg)}"/>')
        lines.append(f'<text x="{margin + 8}" y="{margin + 18 * (i + 1)}" fill="{color}" '
                     f'font-size="14">{label}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

# }}}


def _solve_point_1d(s: ImplicitSolution):
    def run(point):
        x, t = point
        try:
            lam = s.lam(x, t)
            v = float(s.velocity_of(lam, t))
            return lam, v, "ok" if math.isfinite(v) else "singular"
        except RootError as exc:
            return math.nan, math.nan, exc.status
    return run


def _solve_point_nd(mp: MultiProblem, tol):
    def run(point):
        x, t = point
        try:
            state = solve_rho(mp, x, t, tol=tol)
            return state.rho, state.v, "ok"
        except SolveRhoError as exc:
            return np.full(mp.n, math.nan), np.full(mp.n, math.nan), exc.status
    return run


def cmd_solve(cfg: RunConfig, out=None, svg=None, **_):
    if "f" in cfg.profile or "g" in cfg.profile:
        return cmd_multi_solve(cfg, out=out)
    _, s = _implicit(cfg)
    xs, ts, points = _grid(cfg, 1)
    results = grid_map(_solve_point_1d(s), points)
    rows = [[fmt(x), fmt(t), fmt(lam), fmt(v), status]
            for (x, t), (lam, v, status) in zip(points, results)]
    _emit(_csv_text(["x", "t", "lambda", "v", "status"], rows), out or cfg.output.get("csv"))

    svg = svg or cfg.output.get("svg")
    if svg:
        times = cfg.output.get("svg_times", [float(ts[0]), float(ts[-1])])
        run = _solve_point_1d(s)
        curves = []
        for t in times:
            vs = [run((float(x), float(t)))[1] for x in xs[0]]
            curves.append((f"t={float(t):g}", list(map(float, xs[0])), vs))
        with open(svg, "w") as fh:
            fh.write(svg_polylines(curves))

    flagged = sum(1 for r in results if r[2] != "ok")
    if flagged:
        print(f"monge: {flagged} of {len(points)} grid points flagged singular", file=sys.stderr)
    if flagged == len(points):
        print("monge: solver failed at every grid point", file=sys.stderr)
        return 1
    return 0


def cmd_multi_solve(cfg: RunConfig, out=None, **_):
    mp = _multi(cfg)
    tol, _ = _solver(cfg)
    _, _, points = _grid(cfg, mp.n, vector=True)
    results = grid_map(_solve_point_nd(mp, tol), points)
    n = mp.n
    header = ([f"x{i + 1}" for i in range(n)] + ["t"] + [f"rho{i + 1}" for i in range(n)]
              + [f"v{i + 1}" for i in range(n)] + ["status"])
    rows = []
    for (x, t), (rho, v, status) in zip(points, results):
        rows.append([fmt(c) for c in x] + [fmt(t)] + [fmt(c) for c in rho]
                    + [fmt(c) for c in v] + [status])
    _emit(_csv_text(header, rows), out or cfg.output.get("csv"))
    flagged = sum(1 for r in results if r[2] != "ok")
    if flagged:
        print(f"monge: {flagged} of {len(points)} grid points flagged singular", file=sys.stderr)
    return 1 if flagged == len(points) else 0


def cmd_verify(cfg: RunConfig, out=None, convention=None, **_):
    convention = convention or cfg.solver.get("convention", "canonical")
    if convention not in CONVENTIONS:
        raise ConfigError("solver", f"convention must be one of {CONVENTIONS}")
    tol, h = _solver(cfg)
    tol_report = _get("solver", cfg.solver, "tol_report", default=DEFAULT_TOL_REPORT)

    if "f" in cfg.profile or "g" in cfg.profile:
        mp = _multi(cfg)
        field_ = velocity_field_nd(mp, tol)
        _, _, points = _grid(cfg, mp.n, vector=True)

        def run(point):
            x, t = point
            try:
                r = residual_nd(field_, x, t, h, convention)
                inv = label_invariance_nd(mp, x, t, h, tol)
                return list(r), float(np.max(np.abs(r))), float(np.max(np.abs(inv))), "ok"
            except (SingularStencilError, SolveRhoError) as exc:
                return [math.nan] * mp.n, math.nan, math.nan, getattr(exc, "status", "singular")

        results = grid_map(run, points)
        header = [f"x{i + 1}" for i in range(mp.n)] + ["t"] + [f"r{i + 1}" for i in range(mp.n)] \
            + ["invariance", "status"]
        rows = [[fmt(c) for c in x] + [fmt(t)] + [fmt(c) for c in r] + [fmt(inv), status]
                for (x, t), (r, _, inv, status) in zip(points, results)]
        norms = [(res[1], res[2]) for res in results if res[3] == "ok"]
    else:
        problem, s = _implicit(cfg)
        field_ = velocity_field(s)
        _, _, points = _grid(cfg, 1)

        def run(point):
            x, t = point
            try:
                r = pde_residual(field_, problem.force, x, t, h, convention)
                inv = advective_invariance(s, x, t, h)
                return r, inv, "ok"
            except SingularStencilError as exc:
                cause = exc.__cause__
                return math.nan, math.nan, getattr(cause, "status", "singular")

        results = grid_map(run, points)
        header = ["x", "t", "residual", "invariance", "status"]
        rows = [[fmt(x), fmt(t), fmt(r), fmt(inv), status]
                for (x, t), (r, inv, status) in zip(points, results)]
        norms = [(abs(r), abs(inv)) for r, inv, status in results if status == "ok"]

    path = out or cfg.output.get("csv")
    if path:
        _emit(_csv_text(header, rows), path)
    if not norms:
        print("monge: no grid point could be verified", file=sys.stderr)
        return 1
    max_res = max(n[0] for n in norms)
    max_inv = max(n[1] for n in norms)
    flagged = len(points) - len(norms)
    print(f"max_residual={fmt(max_res)} max_invariance={fmt(max_inv)} "
          f"points={len(points)} flagged={flagged} convention={convention}")
    if max_res > tol_report or max_inv > tol_report:
        if convention == "paper":
            print("note: the lambda-form residual lam_t - lam*lam_x - F(-lam,x;t) with lam = -v "
                  "equals -2F(v,x;t) on solutions of v_t + v*v_x = F(v,x;t); a nonzero value "
                  "reflects the sign of F in that form, not a solver failure", file=sys.stderr)
        else:
            print(f"monge: residual exceeds tol_report={tol_report:g}", file=sys.stderr)
        return 1
    return 0


def cmd_breaking(cfg: RunConfig, **_):
    _require(cfg, "problem", "characteristics")
    problem, _ = _ode(cfg)
    ch = cfg.characteristics
    u0 = ch.get("u0")
    if u0 is None:
        raise ConfigError("characteristics", "missing key 'u0'")
    x_lo = _get("characteristics", ch, "x_lo")
    x_hi = _get("characteristics", ch, "x_hi")
    n = _get("characteristics", ch, "n", kind=int, default=201)
    t_max = _get("characteristics", ch, "t_max")
    dt = _get("characteristics", ch, "dt", default=0.01)
    if not x_lo < x_hi or n < 2 or not dt > 0:
        raise ConfigError("characteristics", "need x_lo < x_hi, n >= 2, dt > 0")
    try:
        u0 = parse(u0, charflow.INITIAL_VARS)
    except ExpressionError as exc:
        raise ConfigError("characteristics", f"u0: {exc}") from None
    t_star = charflow.breaking_time(u0, problem, x_lo, x_hi, n, t_max, dt)
    print("none" if t_star is None else f"t_break={t_star:.9f}")
    return 0


def cmd_xcheck(cfg: RunConfig, **_):
    _require(cfg, "problem", "profile", "grid")
    problem, s = _implicit(cfg)
    ch = cfg.characteristics
    xs = _axis(cfg.grid, "x_lo", "x_hi", "nx")[0]
    width = xs[-1] - xs[0]
    x_lo = _get("characteristics", ch, "x_lo", default=float(xs[0] - width))
    x_hi = _get("characteristics", ch, "x_hi", default=float(xs[-1] + width))
    n = _get("characteristics", ch, "n", kind=int, default=401)
    times = _get("characteristics", ch, "times", default=[0.5])
    if not isinstance(times, list):
        times = [times]
    tol = _get("characteristics", ch, "xcheck_tol", default=DEFAULT_XCHECK_TOL)
    steps_per_unit = _get("characteristics", ch, "steps_per_unit", kind=int, default=1000)

    if "u0" in ch:
        try:
            ensemble = charflow.seed(ch["u0"], x_lo, x_hi, n)
        except MongeError as exc:
            raise ConfigError("characteristics", str(exc)) from None
    else:
        ensemble = charflow.seed_from_implicit(s, x_lo, x_hi, n)

    worst = 0.0
    for t in sorted(times):
        steps = max(1, math.ceil(steps_per_unit * (t - ensemble.t)))
        ensemble = charflow.evolve(ensemble, problem, t, steps)
        diff = charflow.compare_with_implicit(ensemble, s, xs)
        print(f"t={fmt(t)} max_diff={fmt(diff)}")
        worst = max(worst, diff)
    print(f"max_diff={fmt(worst)}")
    return 1 if worst > tol else 0


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "breaking": cmd_breaking,
    "xcheck": cmd_xcheck,
    "multi-solve": cmd_multi_solve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config_path", nargs="?", help="config file (same as --config)")
    common.add_argument("--config", dest="config", help="TOML run configuration")
    common.add_argument("--out", help="CSV output path (default: [output] csv, else stdout)")
    common.add_argument("--svg", help="SVG plot of v(x, t) for solve")
    common.add_argument("--convention", choices=CONVENTIONS, help="residual form for verify")

    parser = argparse.ArgumentParser(prog="monge", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = args.config or args.config_path
    if not path:
        print("monge: error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(path)
        return COMMANDS[args.command](cfg, out=args.out, svg=args.svg, convention=args.convention)
    except ConfigError as exc:
        print(f"monge: config error: {exc}", file=sys.stderr)
        return 2
    except MongeError as exc:
        print(f"monge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
