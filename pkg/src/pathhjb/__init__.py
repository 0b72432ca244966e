"""Path-dependent optimal control on sampled paths.

Submodules
----------
paths        path space, d_infinity, compact classes C^mu_{t,M0}
calculus     horizontal/vertical derivatives, functional Ito residuals
functionals  g, S and Upsilon^M with closed-form derivatives
control      state equation, cost, a-priori bounds
problems     built-in coefficient families
value        value functional, DPP residual, regularity checks
hjb          Hamiltonian, PHJB residuals, viscosity tests, Markovian baseline
experiments  config-driven experiment runner behind the ``pathhjb`` command
"""
from .paths import (CompactClass, Path, class_contains, d_infinity, flat_extend, h_norm_sq,
                    lattice_sample, restrict, sup_norm, vertical_bump)
from .calculus import (SmoothFunctional, Trajectory, horizontal_derivative_numeric, ito_residual,
                       vertical_gradient_numeric)
from .control import ControlProblem, ControlSignal, cost, solve_state
from .value import ValueQuery, dpp_residual, value

__all__ = [
    "CompactClass", "Path", "class_contains", "d_infinity", "flat_extend", "h_norm_sq",
    "lattice_sample", "restrict", "sup_norm", "vertical_bump", "SmoothFunctional", "Trajectory",
    "horizontal_derivative_numeric", "ito_residual", "vertical_gradient_numeric",
    "ControlProblem", "ControlSignal", "cost", "solve_state", "ValueQuery", "dpp_residual",
    "value",
]

__version__ = "0.1.0"
