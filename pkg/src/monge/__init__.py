"""
Implicit solutions of forced inviscid Burgers equations built from second-order ODEs.

A second-order ODE  x'' = F(x', x; t)  with general solution X(t; c1, c2)
yields, through profiles c1(lam), c2(lam), an implicit solution

    x = X(t; c1(lam), c2(lam))

of the forced inviscid Burgers equation  v_t + v v_x = F(v, x; t)  for the
field v = X_t.  Submodules:

- `expr`      -- expression language used for F, profiles and initial data
- `ode`       -- RK4 integration and the catalog of analytic general solutions
- `implicit`  -- root-finding evaluation of lam(x, t), v(x, t), PDE residuals
- `charflow`  -- method of characteristics and breaking-time detection
- `multidim`  -- n-dimensional free hydrodynamic system x = f(rho) t + g(rho)
- `cli`       -- config-driven command line front end
"""

from monge.errors import MongeError, NumericalError
from monge.expr import Expression, parse, evaluate
from monge.ode import OdeProblem, GeneralSolution, Trajectory, integrate, catalog
from monge.implicit import ProfileSpec, ImplicitSolution, SampledField

__all__ = [
    "MongeError", "NumericalError",
    "Expression", "parse", "evaluate",
    "OdeProblem", "GeneralSolution", "Trajectory", "integrate", "catalog",
    "ProfileSpec", "ImplicitSolution", "SampledField",
]

__version__ = "0.1.0"
