"""
Implicit solutions  x = X(t; c1(lam), c2(lam)).

For any general solution X of x'' = F(x', x; t) and any profiles c1, c2,
the label lam(x, t) defined implicitly above is a material invariant of the
velocity field v = X_t(t; c1(lam), c2(lam)), and v solves

    v_t + v v_x = F(v, x; t).

The printed lambda-form  lam_t - lam lam_x = F(-lam, x; t)  with lam = -v is
available through ``convention="paper"``; for a solution of the velocity
form its residual equals -2 F.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from monge.errors import MongeError, NumericalError
from monge.expr import Expression, as_expression, evaluate
from monge.ode import GeneralSolution, FORCE_VARS

PROFILE_VARS = ("lam",)

SCAN_POINTS = 64
BISECT_WIDTH = 1e-3
MAX_ITER = 200

CONVENTIONS = ("canonical", "paper")


class RootError(NumericalError):
    """Base for solve_lambda failures; these become singular-point flags."""
    status = "solver_error"


class NoRootError(RootError):
    status = "no_root"


class MultipleRootsError(RootError):
    """Several sign changes in the bracket: the field is multivalued here."""
    status = "multiple_roots"

    def __init__(self, message, roots):
        super().__init__(message)
        self.roots = list(roots)


class ConvergenceError(RootError):
    status = "no_convergence"


class DegenerateProfileError(MongeError):
    pass


class SingularPointError(NumericalError):
    """A field could not be evaluated at (x, t)."""

    def __init__(self, x, t, cause=None):
        status = getattr(cause, "status", "singular")
        super().__init__(f"singular point at x={x!r}, t={t!r}: {cause}")
        self.x, self.t, self.cause, self.status = x, t, cause, status


class StencilOutOfDomainError(MongeError):
    pass


class SingularStencilError(NumericalError):
    pass


@dataclass(frozen=True)
class ProfileSpec:
    """Profiles c1(lam), c2(lam) turning the constants of motion into fields."""
    c1: Expression
    c2: Expression

    def __post_init__(self):
        object.__setattr__(self, "c1", as_expression(self.c1, PROFILE_VARS))
        object.__setattr__(self, "c2", as_expression(self.c2, PROFILE_VARS))

    def __call__(self, lam):
        env = {"lam": lam}
        c1, c2 = evaluate(self.c1, env), evaluate(self.c2, env)
        if np.ndim(lam):
            c1 = np.broadcast_to(c1, np.shape(lam))
            c2 = np.broadcast_to(c2, np.shape(lam))
        return c1, c2


@dataclass(frozen=True)
class ImplicitSolution:
    """
    The label field lam(x, t) defined by x = X(t; c1(lam), c2(lam)).

    Parameters
    ----------
    gs : GeneralSolution
    profile : ProfileSpec
    bracket : (float, float)
        Search interval for lam.  Never grown automatically.
    tol : float
        Root tolerance, relative to max(1, |x|).
    check : bool
        Verify non-degeneracy of the labeling at t = 0 on construction.
    """
    gs: GeneralSolution
    profile: ProfileSpec
    bracket: tuple[float, float] = (-10.0, 10.0)
    tol: float = 1e-10
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        lo, hi = (float(b) for b in self.bracket)
        if not lo < hi:
            raise ValueError(f"bracket must be well ordered, got {self.bracket}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        object.__setattr__(self, "bracket", (lo, hi))
        if self.check:
            self._check_profile()

    def position(self, lam, t):
        c1, c2 = self.profile(lam)
        return self.gs.position(t, c1, c2)

    def velocity_of(self, lam, t):
        c1, c2 = self.profile(lam)
        return self.gs.velocity(t, c1, c2)

    def residual(self, lam, x, t):
        return x - self.position(lam, t)

    def lam(self, x, t):
        return solve_lambda(self, x, t)

    def velocity(self, x, t):
        return float(self.velocity_of(solve_lambda(self, x, t), t))

    def _check_profile(self):
        lo, hi = self.bracket
        lam = np.linspace(lo, hi, SCAN_POINTS)[1:-1]
        x = self.position(lam, 0.0)
        if not np.all(np.isfinite(x)):
            raise DegenerateProfileError("profile is not finite on the bracket")
        d = np.maximum(1.0, np.abs(lam)) * 1e-6
        slope = (self.position(lam + d, 0.0) - self.position(lam - d, 0.0)) / (2 * d)
        monotone = np.all(slope > 0) or np.all(slope < 0)
        if not monotone:
            raise DegenerateProfileError(
                "dX/dlam vanishes at t=0 inside the bracket; labeling is not invertible")


def _fd_derivative(func, z):
    d = 1e-6 * max(1.0, abs(z))
    return (func(z + d) - func(z - d)) / (2 * d)


def solve_lambda(s: ImplicitSolution, x: float, t: float) -> float:
    """
    Root of R(lam) = x - X(t; c1(lam), c2(lam)) inside ``s.bracket``.

    The bracket is scanned at 64 points for sign changes.  A single change
    is narrowed by bisection to width 1e-3, then polished by Newton with a
    central-difference slope; Newton steps that leave the bracket or fail
    to reduce |R| fall back to bisection.

    Raises
    ------
    NoRootError
        No sign change and no Newton start converges inside the bracket.
    MultipleRootsError
        Two or more sign changes; ``err.roots`` holds every refined root.
    ConvergenceError
        |R| <= tol * max(1, |x|) not reached within 200 iterations.
    """
    x, t = float(x), float(t)
    target = s.tol * max(1.0, abs(x))
    lo, hi = s.bracket

    def R(lam):
        return float(s.residual(lam, x, t))

    grid = np.linspace(lo, hi, SCAN_POINTS)
    with np.errstate(all="ignore"):
        vals = np.asarray(s.residual(grid, x, t), dtype=np.float64)

    exact = [float(g) for g in grid[vals == 0]]
    left, right = vals[:-1], vals[1:]
    change = np.isfinite(left) & np.isfinite(right) & (left * right < 0)
    brackets = [(float(grid[i]), float(grid[i + 1]), float(vals[i])) for i in np.flatnonzero(change)]

    count = len(exact) + len(brackets)
    if count == 0:
        return _newton_unbracketed(R, grid, vals, target, (lo, hi))
    if count == 1:
        if exact:
            return float(exact[0])
        return _refine(R, *brackets[0], target)
    roots = sorted([float(r) for r in exact] + [_refine(R, a, b, ra, target) for a, b, ra in brackets])
    raise MultipleRootsError(
        f"{len(roots)} roots for x={x}, t={t} (characteristics have crossed)", roots)


def _refine(R, a, b, ra, target):
    """Bisection to BISECT_WIDTH, then safeguarded Newton on [a, b]."""
    sa = math.copysign(1.0, ra)
    it = 0
    while b - a > BISECT_WIDTH:
        m = 0.5 * (a + b)
        rm = R(m)
        it += 1
        if rm == 0:
            return m
        if math.copysign(1.0, rm) == sa:
            a = m
        else:
            b = m
    lam = 0.5 * (a + b)
    r = R(lam)
    newton = True
    while it < MAX_ITER:
        if abs(r) <= target:
            return lam
        it += 1
        if math.copysign(1.0, r) == sa:
            a = lam
        else:
            b = lam
        if newton:
            slope = _fd_derivative(R, lam)
            step = lam - r / slope if slope != 0 and math.isfinite(slope) else math.nan
            if a <= step <= b:
                r_step = R(step)
                if abs(r_step) < abs(r):
                    lam, r = step, r_step
                    continue
            newton = False
        lam = 0.5 * (a + b)
        r = R(lam)
        if b - a <= 4 * np.spacing(max(abs(a), abs(b))):
            break
    if abs(r) <= target:
        return lam
    raise ConvergenceError(f"root not converged: |R|={abs(r):.3e} > {target:.3e}")


def _newton_unbracketed(R, grid, vals, target, bracket):
    lo, hi = bracket
    finite = np.isfinite(vals)
    if not np.any(finite):
        raise NoRootError("residual is not finite anywhere on the bracket")
    i = int(np.argmin(np.where(finite, np.abs(vals), np.inf)))
    lam, r = float(grid[i]), float(vals[i])
    for _ in range(MAX_ITER):
        if abs(r) <= target:
            return lam
        slope = _fd_derivative(R, lam)
        if slope == 0 or not math.isfinite(slope):
            break
        lam_new = lam - r / slope
        if not lo <= lam_new <= hi:
            break
        r_new = R(lam_new)
        if not abs(r_new) < abs(r):
            break
        lam, r = lam_new, r_new
    raise NoRootError(f"no root in bracket [{lo}, {hi}]")


@dataclass(frozen=True)
class SampledField:
    """
    A field (x, t) -> value with a domain box.

    `func` takes x (float, or n-vector for vector fields) and t.  Points
    where it fails are reported as `SingularPointError`.

    Parameters
    ----------
    func : callable
    xbox : sequence of (lo, hi)
        Bounds per spatial component; infinite by default.
    tspan : (lo, hi)
    """
    func: Callable
    xbox: tuple = ((-math.inf, math.inf),)
    tspan: tuple = (-math.inf, math.inf)

    def __call__(self, x, t):
        try:
            value = self.func(x, t)
        except (RootError, NumericalError) as exc:
            raise SingularPointError(x, t, exc) from exc
        if not np.all(np.isfinite(value)):
            raise SingularPointError(x, t, NumericalError("non-finite field value"))
        return value

    def contains(self, x, t) -> bool:
        xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if len(self.xbox) == 1 and len(xs) > 1:
            box = self.xbox * len(xs)
        else:
            box = self.xbox
        if len(box) != len(xs):
            return False
        inside_x = all(lo <= xi <= hi for xi, (lo, hi) in zip(xs, box))
        return inside_x and self.tspan[0] <= t <= self.tspan[1]


def velocity_field(s: ImplicitSolution, xbox=((-math.inf, math.inf),),
                   tspan=(-math.inf, math.inf)) -> SampledField:
    """v(x, t) = X_t(t; c(lam(x, t))) as a `SampledField`."""
    return SampledField(s.velocity, tuple(xbox), tuple(tspan))


def lambda_field(s: ImplicitSolution, xbox=((-math.inf, math.inf),),
                 tspan=(-math.inf, math.inf)) -> SampledField:
    return SampledField(s.lam, tuple(xbox), tuple(tspan))


def _stencil(f: SampledField, x, t, h):
    points = [(x, t), (x + h, t), (x - h, t), (x, t + h), (x, t - h)]
    for px, pt in points[1:]:
        if not f.contains(px, pt):
            raise StencilOutOfDomainError(f"stencil point ({px}, {pt}) outside the domain")
    try:
        return [float(f(px, pt)) for px, pt in points]
    except SingularPointError as exc:
        raise SingularStencilError(f"singular point in stencil: {exc}") from exc


def pde_residual(f: SampledField, F, x: float, t: float, h: float = 1e-4,
                 convention: str = "canonical") -> float:
    """
    Central-difference residual of the transport equation at (x, t).

    canonical:  v_t + v v_x - F(v, x; t)
    paper:      lam_t - lam lam_x - F(-lam, x; t)  with lam = -v
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    F = as_expression(F, FORCE_VARS)
    v, vxp, vxm, vtp, vtm = _stencil(f, x, t, h)
    v_x = (vxp - vxm) / (2 * h)
    v_t = (vtp - vtm) / (2 * h)
    force = evaluate(F, {"v": v, "x": x, "t": t})
    if convention == "canonical":
        return v_t + v * v_x - force
    lam, lam_x, lam_t = -v, -v_x, -v_t
    return lam_t - lam * lam_x - force


def material_derivative(lam: Callable, v: Callable, x: float, t: float, h: float = 1e-4) -> float:
    """lam_t + v lam_x by central differences; zero for a material invariant."""
    lam_x = (lam(x + h, t) - lam(x - h, t)) / (2 * h)
    lam_t = (lam(x, t + h) - lam(x, t - h)) / (2 * h)
    return lam_t + v(x, t) * lam_x


def advective_invariance(s: ImplicitSolution, x: float, t: float, h: float = 1e-4,
                         xbox=((-math.inf, math.inf),), tspan=(-math.inf, math.inf)) -> float:
    """
    lam_t + v lam_x for the label field of `s`.

    Vanishes (to O(h^2)) because each label rides along one trajectory of
    the ODE.
    """
    lf = lambda_field(s, xbox, tspan)
    vf = velocity_field(s, xbox, tspan)
    for px, pt in [(x + h, t), (x - h, t), (x, t + h), (x, t - h)]:
        if not lf.contains(px, pt):
            raise StencilOutOfDomainError(f"stencil point ({px}, {pt}) outside the domain")
    try:
        return material_derivative(lf, vf, x, t, h)
    except SingularPointError as exc:
        raise SingularStencilError(f"singular point in stencil: {exc}") from exc
