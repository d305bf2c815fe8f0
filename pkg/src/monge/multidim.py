"""
Free n-dimensional hydrodynamic system.

Treating the constants of n free particles  x^s = a^s t + b^s  as functions
of n labels rho gives the implicit solution

    x^s = f^s(rho) t + g^s(rho),       s = 1..n

whose velocity v^s = f^s(rho(x, t)) satisfies  v^s_t + sum_r v^r v^s_{x_r} = 0.
With f^s = rho^s this is the classic hydrodynamic form v = rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from monge.errors import MongeError, NumericalError
from monge.expr import Expression, as_expression, evaluate
from monge.implicit import (
    ImplicitSolution, ProfileSpec, SampledField, SingularPointError,
    SingularStencilError, StencilOutOfDomainError)
from monge.ode import catalog

MAX_NEWTON = 100
MAX_HALVINGS = 30
SINGULAR_DET = 1e-14


class SolveRhoError(NumericalError):
    status = "solver_error"


class SingularJacobianError(SolveRhoError):
    status = "singular_jacobian"


class NonConvergenceError(SolveRhoError):
    status = "no_convergence"


class EscapedBoxError(SolveRhoError):
    status = "escaped_box"


class DimensionError(MongeError):
    pass


def rho_vars(n: int) -> tuple[str, ...]:
    return tuple(f"rho{i + 1}" for i in range(n))


@dataclass(frozen=True)
class MultiState:
    rho: np.ndarray
    v: np.ndarray
    residual_norm: float
    iterations: int = 0


@dataclass(frozen=True)
class MultiProblem:
    """
    Profiles f^s, g^s over labels rho1..rhoN and a label box.

    `bracket` is one (lo, hi) pair per component, or a single pair used
    for all of them.
    """
    f: tuple
    g: tuple
    bracket: tuple = ((-10.0, 10.0),)
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        n = len(self.f)
        if n < 1 or len(self.g) != n:
            raise DimensionError(f"need n >= 1 f and g expressions, got {len(self.f)} and {len(self.g)}")
        names = rho_vars(n)
        object.__setattr__(self, "f", tuple(as_expression(e, names) for e in self.f))
        object.__setattr__(self, "g", tuple(as_expression(e, names) for e in self.g))
        box = [tuple(float(b) for b in pair) for pair in self.bracket]
        if len(box) == 1:
            box = box * n
        if len(box) != n:
            raise DimensionError(f"bracket has {len(box)} pairs for n={n}")
        for lo, hi in box:
            if not lo < hi:
                raise ValueError(f"bracket must be well ordered, got {(lo, hi)}")
        object.__setattr__(self, "bracket", tuple(box))
        if self.check:
            self._check()

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def lo(self):
        return np.array([b[0] for b in self.bracket])

    @property
    def hi(self):
        return np.array([b[1] for b in self.bracket])

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def _env(self, rho):
        return dict(zip(rho_vars(self.n), np.asarray(rho, dtype=np.float64)))

    def eval_f(self, rho):
        env = self._env(rho)
        return np.array([evaluate(e, env) for e in self.f], dtype=np.float64)

    def eval_g(self, rho):
        env = self._env(rho)
        return np.array([evaluate(e, env) for e in self.g], dtype=np.float64)

    def forward(self, rho, t):
        """x = f(rho) t + g(rho)."""
        return self.eval_f(rho) * t + self.eval_g(rho)

    def jacobian(self, rho, t):
        """M[s, r] = d(f^s t + g^s)/d rho^r by central differences."""
        rho = np.asarray(rho, dtype=np.float64)
        M = np.empty((self.n, self.n))
        for r in range(self.n):
            d = 1e-6 * max(1.0, abs(rho[r]))
            step = np.zeros(self.n)
            step[r] = d
            M[:, r] = (self.forward(rho + step, t) - self.forward(rho - step, t)) / (2 * d)
        return M

    def _check(self):
        c = self.center
        if not (np.all(np.isfinite(self.eval_f(c))) and np.all(np.isfinite(self.eval_g(c)))):
            raise MongeError("profiles are not finite at the bracket center")
        # t=1 as well: f = rho, g = 0 is singular at t=0 yet a valid labeling
        dets = [np.linalg.det(self.jacobian(c, t)) for t in (0.0, 1.0)]
        if not max(abs(d) for d in dets) > 1e-12:
            raise MongeError(
                f"label map is singular at the bracket center (det={dets[0]:.3e} at t=0, {dets[1]:.3e} at t=1)")


def solve_rho(mp: MultiProblem, x, t: float, guess=None, tol: float = 1e-10) -> MultiState:
    """
    Solve x = f(rho) t + g(rho) for rho by damped Newton.

    Steps are halved (at most 30 times) until the max-norm residual
    decreases, and every trial point is projected back into the label box.

    Raises
    ------
    SingularJacobianError
        |det M| < 1e-14 at an iterate.
    EscapedBoxError
        The Newton step left the box and no projected, damped step
        reduced the residual.
    NonConvergenceError
        Tolerance not reached in 100 iterations, or damping failed.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mp.n,):
        raise DimensionError(f"x must have length {mp.n}")
    lo, hi = mp.lo, mp.hi
    rho = mp.center if guess is None else np.asarray(guess, dtype=np.float64).copy()
    if np.any(rho < lo) or np.any(rho > hi):
        raise ValueError("guess must lie inside the bracket box")
    target = tol * max(1.0, float(np.max(np.abs(x))))

    def residual(r):
        return x - mp.forward(r, t)

    R = residual(rho)
    norm = float(np.max(np.abs(R)))
    for it in range(MAX_NEWTON + 1):
        if norm <= target:
            return MultiState(rho, mp.eval_f(rho), norm, it)
        if it == MAX_NEWTON or not math.isfinite(norm):
            break
        M = mp.jacobian(rho, t)
        det = np.linalg.det(M)
        if not abs(det) >= SINGULAR_DET:
            raise SingularJacobianError(f"singular Jacobian at rho={rho} (det={det:.3e})")
        delta = np.linalg.solve(M, R)
        escaped = np.any(rho + delta < lo) or np.any(rho + delta > hi)
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = np.clip(rho + alpha * delta, lo, hi)
            R_trial = residual(trial)
            norm_trial = float(np.max(np.abs(R_trial)))
            if norm_trial < norm:
                break
            alpha /= 2
        else:
            if escaped:
                raise EscapedBoxError(f"Newton iterate left the box at rho={rho}")
            raise NonConvergenceError(f"damping failed to reduce the residual ({norm:.3e})")
        rho, R, norm = trial, R_trial, norm_trial
    raise NonConvergenceError(f"no convergence after {MAX_NEWTON} iterations (|R|={norm:.3e})")


def velocity_field_nd(mp: MultiProblem, tol: float = 1e-10, xbox=None,
                      tspan=(-math.inf, math.inf)) -> SampledField:
    """Vector field v(x, t) = f(rho(x, t))."""
    if xbox is None:
        xbox = ((-math.inf, math.inf),) * mp.n

    def func(x, t):
        return solve_rho(mp, x, t, tol=tol).v

    return SampledField(func, tuple(xbox), tuple(tspan))


def rho_field_nd(mp: MultiProblem, tol: float = 1e-10, xbox=None,
                 tspan=(-math.inf, math.inf)) -> SampledField:
    if xbox is None:
        xbox = ((-math.inf, math.inf),) * mp.n

    def func(x, t):
        return solve_rho(mp, x, t, tol=tol).rho

    return SampledField(func, tuple(xbox), tuple(tspan))


def _nd_stencil(field: SampledField, x, t, h):
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    points = [(x, t), (x, t + h), (x, t - h)]
    for r in range(n):
        e = np.zeros(n)
        e[r] = h
        points += [(x + e, t), (x - e, t)]
    for px, pt in points[1:]:
        if not field.contains(px, pt):
            raise StencilOutOfDomainError(f"stencil point ({px}, {pt}) outside the domain")
    try:
        vals = [np.asarray(field(px, pt), dtype=np.float64) for px, pt in points]
    except SingularPointError as exc:
        raise SingularStencilError(f"singular point in stencil: {exc}") from exc
    center = vals[0]
    d_t = (vals[1] - vals[2]) / (2 * h)
    grad = np.column_stack([(vals[3 + 2 * r] - vals[4 + 2 * r]) / (2 * h) for r in range(n)])
    return center, d_t, grad


def residual_nd(field: SampledField, x, t: float, h: float = 1e-4,
                convention: str = "canonical") -> np.ndarray:
    """
    r^s = v^s_t + sum_r v^r dv^s/dx_r by central differences.

    With ``convention="paper"`` the same quantity is reported for
    tau = -v, i.e.  tau_t - sum_r tau^r dtau^s/dx_r,  which is -r.
    """
    v, v_t, grad = _nd_stencil(field, x, t, h)
    r = v_t + grad @ v
    if convention == "paper":
        return -r
    if convention != "canonical":
        raise ValueError(f"unknown convention {convention!r}")
    return r


def label_invariance_nd(mp: MultiProblem, x, t: float, h: float = 1e-4, tol: float = 1e-10) -> np.ndarray:
    """rho_t + (v . grad) rho; zero because labels ride with the particles."""
    rho, rho_t, grad = _nd_stencil(rho_field_nd(mp, tol), x, t, h)
    v = mp.eval_f(rho)
    return rho_t + grad @ v


def reduce_to_1d(mp: MultiProblem, tol: float = 1e-10) -> ImplicitSolution:
    """
    The n = 1 problem x = f(rho) t + g(rho) as a free-motion implicit
    solution with c1 = g, c2 = f.
    """
    if mp.n != 1:
        raise DimensionError(f"reduce_to_1d needs n=1, got n={mp.n}")
    _, gs = catalog("free")
    rename = {"rho1": "lam"}
    profile = ProfileSpec(mp.g[0].rename(rename), mp.f[0].rename(rename))
    return ImplicitSolution(gs, profile, mp.bracket[0], tol, check=False)
