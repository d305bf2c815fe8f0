"""
Second-order ODEs  x'' = F(x', x; t).

`integrate` marches the first-order system (x' = v, v' = F) with classic
fixed-step RK4.  `catalog` pairs a force with one chart of its analytic
general solution X(t; c1, c2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from monge.errors import MongeError, NumericalError
from monge.expr import Expression, as_expression, evaluate

FORCE_VARS = ("v", "x", "t")

STEPS_PER_UNIT_TIME = 1000


class IntegrationError(NumericalError):
    """Non-finite state during RK4; carries the partial trajectory."""

    def __init__(self, message, step, partial=None, particle=None):
        super().__init__(message)
        self.step = step
        self.partial = partial
        self.particle = particle


class CatalogError(MongeError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    """The equation x'' = force(v, x, t)."""
    force: Expression
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "force", as_expression(self.force, FORCE_VARS))

    def accel(self, v, x, t):
        return evaluate(self.force, {"v": v, "x": x, "t": t})


@dataclass(frozen=True)
class GeneralSolution:
    """
    Two-parameter family X(t; c1, c2) and its time derivative.

    Both callables accept numpy arrays and broadcast.
    """
    position: Callable
    velocity: Callable
    label: str
    params: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Trajectory:
    ts: np.ndarray
    xs: np.ndarray
    vs: np.ndarray


def default_steps(t0: float, t1: float) -> int:
    return max(1, math.ceil(STEPS_PER_UNIT_TIME * abs(t1 - t0)))


def rk4_step(accel, t, x, v, dt):
    """One classic RK4 step of (x, v)' = (v, accel(v, x, t))."""
    half = dt / 2
    k1x, k1v = v, accel(v, x, t)
    k2x, k2v = v + half * k1v, accel(v + half * k1v, x + half * k1x, t + half)
    k3x, k3v = v + half * k2v, accel(v + half * k2v, x + half * k2x, t + half)
    k4x, k4v = v + dt * k3v, accel(v + dt * k3v, x + dt * k3x, t + dt)
    # dt * (...) / 6 keeps dyadic steps exact for linear motion
    x_new = x + dt * (k1x + 2 * k2x + 2 * k3x + k4x) / 6
    v_new = v + dt * (k1v + 2 * k2v + 2 * k3v + k4v) / 6
    return x_new, v_new


def march(accel, x, v, t0, t1, steps, record=False):
    """
    Fixed-step RK4 from t0 to t1; `x`, `v` may be arrays (one entry per
    particle).  Returns final (x, v) or, with `record`, the full history.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = (t1 - t0) / steps
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    history = [(t0, x, v)] if record else None
    for k in range(steps):
        t = t0 + k * dt
        x_new, v_new = rk4_step(accel, t, x, v, dt)
        bad = ~(np.isfinite(x_new) & np.isfinite(v_new))
        if np.any(bad):
            particle = int(np.flatnonzero(bad)[0]) if np.ndim(bad) else None
            partial = _to_trajectory(history) if record else None
            raise IntegrationError(
                f"non-finite state at step {k + 1}", step=k + 1,
                partial=partial, particle=particle)
        x, v = x_new, v_new
        if record:
            t_next = t1 if k == steps - 1 else t0 + (k + 1) * dt
            history.append((t_next, x, v))
    if record:
        return _to_trajectory(history)
    return x, v


def _to_trajectory(history):
    ts = np.array([h[0] for h in history], dtype=np.float64)
    xs = np.array([h[1] for h in history], dtype=np.float64)
    vs = np.array([h[2] for h in history], dtype=np.float64)
    return Trajectory(ts, xs, vs)


def integrate(p: OdeProblem, x0: float, v0: float, t0: float, t1: float,
              steps: int | None = None) -> Trajectory:
    """
    Integrate x'' = F(x', x; t) from (x0, v0) at t0 to t1 with fixed-step RK4.

    Parameters
    ----------
    p : OdeProblem
    x0, v0 : float
        Initial position and velocity.
    t0, t1 : float
        Start and end time; t1 < t0 integrates backwards.
    steps : int, optional
        Number of RK4 steps, default 1000 per unit time.

    Returns
    -------
    Trajectory
        Samples at the steps + 1 nodes, ts monotone from t0 to t1.

    Raises
    ------
    IntegrationError
        On a non-finite state; ``err.step`` and ``err.partial`` locate it.
    """
    if steps is None:
        steps = default_steps(t0, t1)
    return march(p.accel, x0, v0, t0, t1, steps, record=True)


# {{{ catalog

def _param(params, name, aliases=()):
    for key in (name, *aliases):
        if key in params:
            return float(params[key])
    raise CatalogError(f"missing parameter {name!r}")


def _free(params):
    force = "0"
    return force, (lambda t, c1, c2: c1 + c2 * t), (lambda t, c1, c2: c2 + 0 * t), {}


def _const_force(params):
    g = _param(params, "g")
    return (
        repr(g),
        lambda t, c1, c2: c1 + c2 * t + g * t * t / 2,
        lambda t, c1, c2: c2 + g * t,
        {"g": g},
    )


def _harmonic(params):
    w = _param(params, "omega", ("ω", "w"))
    if w == 0:
        raise CatalogError("harmonic needs omega != 0; use 'free'")
    return (
        f"-{w * w!r}*x",
        lambda t, c1, c2: c1 * np.cos(w * t) + c2 * np.sin(w * t),
        lambda t, c1, c2: w * (c2 * np.cos(w * t) - c1 * np.sin(w * t)),
        {"omega": w},
    )


def _linear_drag(params):
    k = _param(params, "k")
    if k == 0:
        raise CatalogError("linear_drag needs k != 0; use 'free'")
    return (
        f"-{k!r}*v",
        lambda t, c1, c2: c1 + c2 * np.exp(-k * t),
        lambda t, c1, c2: -k * c2 * np.exp(-k * t),
        {"k": k},
    )


CATALOG = {
    "free": _free,
    "const_force": _const_force,
    "harmonic": _harmonic,
    "linear_drag": _linear_drag,
}


def catalog(name: str, params: Mapping[str, float] | None = None):
    """
    Look up a force and its general solution.

    ===========  ===========  ==============================
    name         force F      X(t; c1, c2)
    ===========  ===========  ==============================
    free         0            c1 + c2 t
    const_force  g            c1 + c2 t + g t^2 / 2
    harmonic     -omega^2 x   c1 cos(omega t) + c2 sin(omega t)
    linear_drag  -k v         c1 + c2 exp(-k t)
    ===========  ===========  ==============================

    Returns
    -------
    (OdeProblem, GeneralSolution)
    """
    if name not in CATALOG:
        raise CatalogError(f"unknown catalog entry {name!r}; choose from {sorted(CATALOG)}")
    force, position, velocity, used = CATALOG[name](dict(params or {}))
    problem = OdeProblem(force, name=name)
    return problem, GeneralSolution(position, velocity, name, used)

# }}}


def verify_general_solution(gs: GeneralSolution, p: OdeProblem, samples, h: float = 1e-4) -> float:
    """
    Max over `samples` of |(X(t+h) - 2X(t) + X(t-h)) / h^2 - F(X_t, X, t)|.

    `samples` is an iterable of (t, c1, c2).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for t, c1, c2 in samples:
        x_minus = gs.position(t - h, c1, c2)
        x_mid = gs.position(t, c1, c2)
        x_plus = gs.position(t + h, c1, c2)
        acc = (x_plus - 2 * x_mid + x_minus) / (h * h)
        r = abs(acc - p.accel(gs.velocity(t, c1, c2), x_mid, t))
        if not math.isfinite(r):
            raise NumericalError(f"non-finite residual at t={t}, c1={c1}, c2={c2}")
        worst = max(worst, float(r))
    return worst
