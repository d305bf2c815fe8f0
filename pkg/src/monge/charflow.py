"""
Method of characteristics for  v_t + v v_x = F(v, x; t).

Every characteristic is a trajectory of x'' = F(x', x; t).  An ensemble of
particles labelled by their initial positions carries the field; the field
stays single-valued while the particles keep their order, and the first
crossing of neighbours is the breaking (gradient catastrophe) time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from monge.errors import MongeError, NumericalError
from monge.expr import as_expression, evaluate
from monge.implicit import ImplicitSolution
from monge.ode import IntegrationError, OdeProblem, default_steps, march

INITIAL_VARS = ("x",)


class CrossedCharacteristicsError(NumericalError):
    pass


class OutOfHullError(MongeError):
    pass


@dataclass(frozen=True)
class CharEnsemble:
    """
    Particle image of the characteristic family at time `t`.

    labels : initial positions, strictly increasing and never modified
    positions, velocities : particle state at `t`
    """
    labels: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        if labels.ndim != 1 or len(labels) < 2:
            raise ValueError("an ensemble needs at least two labels")
        if not np.all(np.diff(labels) > 0):
            raise ValueError("labels must be strictly increasing")
        if len(self.positions) != len(labels) or len(self.velocities) != len(labels):
            raise ValueError("labels, positions and velocities must have equal length")

    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    def is_monotone(self) -> bool:
        return bool(np.all(self.gaps() > 0))


def seed(u0, x_lo: float, x_hi: float, n: int) -> CharEnsemble:
    """n equispaced particles on [x_lo, x_hi] with velocities u0(x)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    u0 = as_expression(u0, INITIAL_VARS)
    labels = np.linspace(x_lo, x_hi, n)
    velocities = np.broadcast_to(evaluate(u0, {"x": labels}), labels.shape).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(velocities))
    if len(bad):
        raise NumericalError(f"initial data not finite at x={labels[bad[0]]!r}")
    return CharEnsemble(labels, labels.copy(), velocities, 0.0)


def seed_from_implicit(s: ImplicitSolution, x_lo: float, x_hi: float, n: int,
                       t: float = 0.0) -> CharEnsemble:
    """Particles matching the implicit field at time `t` (the initial data it implies)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    labels = np.linspace(x_lo, x_hi, n)
    velocities = np.array([s.velocity(x, t) for x in labels])
    return CharEnsemble(labels, labels.copy(), velocities, float(t))


def evolve(e: CharEnsemble, p: OdeProblem, t1: float, steps: int | None = None) -> CharEnsemble:
    """
    Advance every particle along x'' = F(x', x; t) to time `t1`.

    Raises `IntegrationError` naming the first failing particle.
    """
    if t1 < e.t:
        raise ValueError(f"t1={t1} is before the ensemble time {e.t}")
    if t1 == e.t:
        return CharEnsemble(e.labels, e.positions.copy(), e.velocities.copy(), e.t)
    if steps is None:
        steps = default_steps(e.t, t1)
    try:
        x, v = march(p.accel, e.positions, e.velocities, e.t, t1, steps)
    except IntegrationError as exc:
        raise IntegrationError(
            f"particle {exc.particle} (label {e.labels[exc.particle]!r}): {exc}",
            step=exc.step, particle=exc.particle) from exc
    return CharEnsemble(e.labels, x, v, float(t1))


def sample_field(e: CharEnsemble, x: float) -> float:
    """Piecewise-linear reconstruction of v(x, e.t) from the particles."""
    if not e.is_monotone():
        i = int(np.flatnonzero(e.gaps() <= 0)[0])
        raise CrossedCharacteristicsError(
            f"characteristics {i} and {i + 1} have crossed at t={e.t}")
    if not e.positions[0] <= x <= e.positions[-1]:
        raise OutOfHullError(
            f"x={x} outside particle hull [{e.positions[0]}, {e.positions[-1]}]")
    return float(np.interp(x, e.positions, e.velocities))


def breaking_time(u0, p: OdeProblem, x_lo: float, x_hi: float, n: int = 201,
                  t_max: float = 10.0, dt: float = 0.01, substeps: int = 4):
    """
    First time at which neighbouring characteristics meet.

    The ensemble is advanced in increments of `dt` (each with `substeps`
    RK4 steps) until some gap x[i+1] - x[i] is <= 0; the crossing time is
    then bisected to a width of dt / 1024.  Returns None if the particles
    stay ordered through `t_max`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = seed(u0, x_lo, x_hi, n)
    while e.t < t_max:
        t_next = min(e.t + dt, t_max)
        nxt = evolve(e, p, t_next, substeps)
        if np.min(nxt.gaps()) <= 0:
            return _bisect_crossing(e, t_next, p, dt / 1024, substeps)
        e = nxt
    return None


def _bisect_crossing(good: CharEnsemble, t_bad: float, p, width, substeps):
    while t_bad - good.t > width:
        mid = 0.5 * (good.t + t_bad)
        trial = evolve(good, p, mid, substeps)
        if np.min(trial.gaps()) <= 0:
            t_bad = mid
        else:
            good = trial
    return t_bad


def compare_with_implicit(e: CharEnsemble, s: ImplicitSolution, xs) -> float:
    """max over xs of |characteristic field - implicit field| at time e.t."""
    worst = 0.0
    for x in xs:
        diff = abs(sample_field(e, x) - s.velocity(x, e.t))
        if not math.isfinite(diff):
            raise NumericalError(f"non-finite comparison at x={x}")
        worst = max(worst, diff)
    return worst
