import itertools
import math

import numpy as np
import pytest

from monge.ode import (
    CatalogError, IntegrationError, OdeProblem, catalog, integrate,
    verify_general_solution)

ENTRIES = [
    ("free", {}),
    ("const_force", {"g": 2.0}),
    ("harmonic", {"omega": 1.0}),
    ("harmonic", {"omega": 2.5}),
    ("linear_drag", {"k": 2.0}),
    ("linear_drag", {"k": 1.0}),
]


def test_free_motion():
    tr = integrate(OdeProblem("0"), 0.0, 1.0, 0.0, 1.0, 100)
    # 100 additions of 0.01 carry ~1e-15 of rounding
    assert tr.xs[-1] == pytest.approx(1.0, abs=1e-13)
    assert tr.vs[-1] == 1.0


def test_free_motion_dyadic_is_exact():
    tr = integrate(OdeProblem("0"), 0.0, 1.0, 0.0, 1.0, 64)
    assert tr.xs[-1] == 1.0


def test_constant_force():
    tr = integrate(OdeProblem("2"), 0.0, 0.0, 0.0, 1.0, 10)
    assert tr.xs[-1] == pytest.approx(1.0, abs=1e-13)
    assert tr.vs[-1] == pytest.approx(2.0, abs=1e-13)


def test_harmonic_half_period():
    # oracle: x = cos t
    tr = integrate(OdeProblem("-x"), 1.0, 0.0, 0.0, math.pi, 1000)
    assert abs(tr.xs[-1] - math.cos(math.pi)) <= 1e-8
    assert abs(tr.vs[-1] + math.sin(math.pi)) <= 1e-8


def test_trajectory_shape():
    tr = integrate(OdeProblem("-x"), 1.0, 0.0, 0.0, 1.0, 7)
    assert len(tr.ts) == len(tr.xs) == len(tr.vs) == 8
    assert np.all(np.diff(tr.ts) > 0)
    assert tr.ts[0] == 0.0 and tr.ts[-1] == 1.0


def test_default_steps_per_unit_time():
    tr = integrate(OdeProblem("-x"), 1.0, 0.0, 0.0, 2.0)
    assert len(tr.ts) == 2001


def test_rk4_order():
    # oracle: cos t; halving the step divides the error by ~16
    errs = []
    for steps in (10, 20, 40):
        tr = integrate(OdeProblem("-x"), 1.0, 0.0, 0.0, 1.0, steps)
        errs.append(abs(tr.xs[-1] - math.cos(1.0)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 14 <= coarse / fine <= 18


def test_time_reversal_free_motion_exact():
    p = OdeProblem("0")
    fwd = integrate(p, 0.5, 0.25, 0.0, 1.0, 8)
    back = integrate(p, fwd.xs[-1], fwd.vs[-1], 1.0, 0.0, 8)
    assert (back.xs[-1], back.vs[-1]) == (0.5, 0.25)


def test_time_reversal_free_motion_general_values():
    p = OdeProblem("0")
    fwd = integrate(p, 0.3, -1.7, 0.1, 2.3, 100)
    back = integrate(p, fwd.xs[-1], fwd.vs[-1], 2.3, 0.1, 100)
    assert back.vs[-1] == -1.7
    assert back.xs[-1] == pytest.approx(0.3, abs=1e-13)


def test_non_finite_state_reports_step_and_partial():
    with pytest.raises(IntegrationError) as info:
        integrate(OdeProblem("x^3"), 10.0, 10.0, 0.0, 10.0, 100)
    err = info.value
    assert 1 <= err.step <= 100
    assert len(err.partial.ts) == err.step
    assert np.all(np.isfinite(err.partial.xs))


def test_catalog_examples():
    _, gs = catalog("free")
    assert gs.position(3.0, 1.0, 2.0) == 7.0
    _, gs = catalog("harmonic", {"omega": 1.0})
    assert gs.position(0.0, 5.0, -1.0) == 5.0
    _, gs = catalog("linear_drag", {"k": 2.0})
    assert gs.velocity(0.0, 0.0, 3.0) == -6.0


def test_catalog_forces():
    p, _ = catalog("harmonic", {"omega": 2.0})
    assert p.accel(0.0, 1.5, 0.0) == -6.0
    p, _ = catalog("linear_drag", {"k": 0.5})
    assert p.accel(4.0, 0.0, 0.0) == -2.0
    p, _ = catalog("const_force", {"g": -9.81})
    assert p.accel(0.0, 0.0, 0.0) == -9.81


def test_catalog_errors():
    with pytest.raises(CatalogError):
        catalog("kepler")
    with pytest.raises(CatalogError):
        catalog("harmonic")
    with pytest.raises(CatalogError):
        catalog("const_force", {"k": 1})


@pytest.mark.parametrize("name, params", ENTRIES)
def test_velocity_matches_time_derivative(name, params):
    _, gs = catalog(name, params)
    h = 1e-5
    for t, c1, c2 in itertools.product([-0.7, 0.0, 0.4, 1.3], [-1.0, 0.5], [-0.3, 2.0]):
        fd = (gs.position(t + h, c1, c2) - gs.position(t - h, c1, c2)) / (2 * h)
        assert abs(fd - gs.velocity(t, c1, c2)) <= 1e-7


@pytest.mark.parametrize("name, params", ENTRIES)
def test_genuine_two_parameter_family(name, params):
    _, gs = catalog(name, params)
    d = 1e-6
    c1, c2 = 0.37, -0.81
    cols = []
    for dc1, dc2 in [(d, 0), (0, d)]:
        dx = (gs.position(0.0, c1 + dc1, c2 + dc2) - gs.position(0.0, c1 - dc1, c2 - dc2)) / (2 * d)
        dv = (gs.velocity(0.0, c1 + dc1, c2 + dc2) - gs.velocity(0.0, c1 - dc1, c2 - dc2)) / (2 * d)
        cols.append((dx, dv))
    det = cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1]
    assert abs(det) > 1e-12


@pytest.mark.parametrize("name, params", ENTRIES)
def test_catalog_self_consistency(name, params):
    p, gs = catalog(name, params)
    axis = np.linspace(-1, 1, 5)
    samples = list(itertools.product(axis, axis, axis))
    assert verify_general_solution(gs, p, samples, h=1e-4) <= 1e-6


def test_verify_examples():
    p, gs = catalog("free")
    samples = [(0.3, 1.0, -2.0), (-1.0, 0.0, 5.0)]
    assert verify_general_solution(gs, p, samples, 1e-4) <= 1e-10
    _, hgs = catalog("harmonic", {"omega": 1.0})
    ts = np.linspace(0, 1, 11)
    assert verify_general_solution(hgs, OdeProblem("-x"), [(t, 1.0, 0.5) for t in ts], 1e-4) <= 1e-6
    assert verify_general_solution(gs, OdeProblem("2"), samples, 1e-4) == pytest.approx(2.0, abs=1e-6)


def test_catalog_matches_integration():
    p, gs = catalog("linear_drag", {"k": 1.5})
    c1, c2 = 0.4, -1.2
    tr = integrate(p, gs.position(0.0, c1, c2), gs.velocity(0.0, c1, c2), 0.0, 2.0, 400)
    assert abs(tr.xs[-1] - gs.position(2.0, c1, c2)) <= 1e-9
    assert abs(tr.vs[-1] - gs.velocity(2.0, c1, c2)) <= 1e-9
