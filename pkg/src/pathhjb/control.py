"""Controlled path-dependent ODEs: solver, cost functional and a-priori bounds.

The state equation is

    X'(s) = F(X_s, u(s)),  s in [t, T],    X_t = gamma_t,

with F Lipschitz in the path under the sup norm (constant L).  Controls are
piecewise constant and left-continuous on a uniform control grid.

Bound constants (Gronwall on the integral form, see docs/constants.md):

    C1 = (1 + L T) e^{L T}
    C2 = (1 + L (1 + C1)) e^{L T}
    C3 = L (1 + C1)
    C4 = 2 L (T + 1) C2 + L (1 + C1)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .calculus import Trajectory
from .errors import GridAlignmentError, ParameterError, SolverError
from .paths import GRID_RTOL, Path, flat_extend, prefix, same_step, sup_norm


@dataclass(frozen=True)
class ReducedCoefficients:
    """State-only coefficients Fbar(t, x, u), qbar(t, x, u), phibar(x)."""

    F: Callable[[float, np.ndarray, Any], np.ndarray]
    q: Callable[[float, np.ndarray, Any], float]
    phi: Callable[[np.ndarray], float]


@dataclass(frozen=True)
class ControlProblem:
    """Coefficients F, q, phi with Lipschitz constant L and a finite control set U."""

    F: Callable[[Path, Any], np.ndarray]
    q: Callable[[Path, Any], float]
    phi: Callable[[Path], float]
    L: float
    U: Tuple[Any, ...]
    horizon: float
    dim: int = 1
    name: str = "problem"
    reduced: Optional[ReducedCoefficients] = None

    def __post_init__(self):
        if not self.L > 0:
            raise ParameterError("Lipschitz constant must be positive")
        if len(self.U) == 0:
            raise ParameterError("control set must be non-empty")
        object.__setattr__(self, "U", tuple(self.U))

    def with_costs(self, q=None, phi=None, name=None) -> "ControlProblem":
        return ControlProblem(self.F, q or self.q, phi or self.phi, self.L, self.U,
                              self.horizon, self.dim, name or self.name, None)


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant, left-continuous control on [start, start + len(values) step].

    ``values[k]`` is used on (start + k step, start + (k+1) step], and
    ``values[0]`` also at ``start``.
    """

    start: float
    step: float
    values: Tuple[Any, ...]
    indices: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("control step must be positive")
        object.__setattr__(self, "values", tuple(self.values))
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @classmethod
    def from_indices(cls, U: Sequence[Any], indices: Sequence[int], start: float,
                     step: float) -> "ControlSignal":
        return cls(start, step, tuple(U[i] for i in indices), tuple(indices))

    @classmethod
    def constant(cls, u, start: float, end: float, step: float) -> "ControlSignal":
        k = _n_intervals(start, end, step)
        return cls(start, step, (u,) * k)

    @property
    def end(self) -> float:
        return self.start + len(self.values) * self.step

    def value_at(self, s: float):
        if s <= self.start:
            return self.values[0]
        k = math.ceil((s - self.start) / self.step - GRID_RTOL) - 1
        return self.values[min(max(k, 0), len(self.values) - 1)]

    def interval_value(self, s_left: float):
        """Control on the state-grid interval that starts at ``s_left``."""
        k = int(math.floor((s_left - self.start) / self.step + GRID_RTOL))
        return self.values[min(max(k, 0), len(self.values) - 1)]

    def truncate(self, s: float) -> "ControlSignal":
        """The same control restricted to [s, end]; ``s`` must be a control-grid node."""
        j = (s - self.start) / self.step
        k = round(j)
        if abs(j - k) > GRID_RTOL * max(1, abs(k)) or k < 0 or k > len(self.values):
            raise GridAlignmentError(f"{s} is not a node of the control grid")
        idx = None if self.indices is None else self.indices[k:]
        return ControlSignal(s, self.step, self.values[k:], idx)

    def restrict_to(self, s: float) -> "ControlSignal":
        """The control on [start, s]; ``s`` must be a control-grid node."""
        j = round((s - self.start) / self.step)
        idx = None if self.indices is None else self.indices[:j]
        return ControlSignal(self.start, self.step, self.values[:j], idx)

    def to_json_obj(self) -> dict:
        def enc(v):
            a = np.asarray(v, dtype=float)
            return a.tolist() if a.ndim else float(a)
        return {"start": self.start, "step": self.step, "values": [enc(v) for v in self.values],
                "indices": list(self.indices) if self.indices is not None else None}


def _n_intervals(start: float, end: float, step: float) -> int:
    x = (end - start) / step
    k = round(x)
    if abs(x - k) > GRID_RTOL * max(1, abs(k)):
        raise GridAlignmentError(f"[{start}, {end}] is not a whole number of steps {step}")
    return int(k)


@dataclass
class SolveInfo:
    method: str
    iterations: int = 0
    ratios: List[float] = field(default_factory=list)
    diffs: List[float] = field(default_factory=list)


def _field(prob: ControlProblem, buf: np.ndarray, i: int, h: float, u) -> np.ndarray:
    hist = Path._trusted(buf[:i + 1], h, i * h, "continuous", prob.horizon)
    return np.asarray(prob.F(hist, u), dtype=float).reshape(-1)


def _check_inputs(prob: ControlProblem, gamma: Path, u: ControlSignal) -> Tuple[int, int]:
    h = gamma.grid_step
    if abs(u.start - gamma.final_time) > GRID_RTOL * max(1.0, gamma.final_time) + 1e-12:
        raise ParameterError("control must start at the initial path's final time")
    if u.end < prob.horizon * (1 - GRID_RTOL) - 1e-12:
        raise ParameterError("control does not cover [t, T]")
    if gamma.dim != prob.dim:
        raise ValueError("initial path dimension differs from the problem dimension")
    n_total = _n_intervals(0.0, prob.horizon, h) + 1
    return gamma.n - 1, n_total


def solve_state(prob: ControlProblem, gamma: Path, u: ControlSignal, method: str = "picard",
                tol: float = 1e-12, max_iter: int = 1000, return_info: bool = False):
    """Solve the state equation from ``gamma`` under control ``u``.

    ``method="euler"`` steps the left-point scheme forward.  ``"picard"``
    iterates the integral map X -> gamma(t) + int_t^s F(X_r, u(r)) dr
    (left-point quadrature) from the frozen path, measuring successive
    differences in the weighted norm sup_s e^{-2 L s} |X(s)|, under which the
    map contracts by a factor 1/2; it stops once a difference falls below
    ``tol``.  Both discretizations share a fixed point, so they agree to
    within ``tol``.
    """
    i0, n = _check_inputs(prob, gamma, u)
    h = gamma.grid_step
    buf = np.empty((n, gamma.dim))
    buf[:i0 + 1] = gamma.samples
    controls = [u.interval_value(i * h) for i in range(i0, n - 1)]
    info = SolveInfo(method)
    if method == "euler":
        for i in range(i0, n - 1):
            buf[i + 1] = buf[i] + h * _field(prob, buf, i, h, controls[i - i0])
    elif method == "picard":
        beta = 2 * prob.L
        weights = np.exp(-beta * np.arange(n) * h)
        buf[i0 + 1:] = buf[i0]
        prev = None
        for k in range(max_iter):
            incr = np.array([_field(prob, buf, i, h, controls[i - i0]) for i in range(i0, n - 1)])
            new = buf.copy()
            if len(incr):
                new[i0 + 1:] = buf[i0] + h * np.cumsum(incr, axis=0)
            diff = float(np.max(weights * np.linalg.norm(new - buf, axis=1)))
            info.diffs.append(diff)
            if prev is not None and prev > 0:
                info.ratios.append(diff / prev)
            info.iterations = k + 1
            buf = new
            if diff < tol:
                break
            prev = diff
        else:
            last = info.ratios[-1] if info.ratios else None
            raise SolverError(f"Picard iteration did not reach tol={tol} in {max_iter} steps",
                              last_ratio=last)
    else:
        raise ParameterError(f"unknown method {method!r}")
    traj = Trajectory(gamma.with_horizon(prob.horizon), buf[i0:])
    return (traj, info) if return_info else traj


def running_cost(prob: ControlProblem, X: Trajectory, u: ControlSignal,
                 upto_index: Optional[int] = None) -> float:
    """Trapezoid quadrature of q(X_s, u(s)) from the start of X to node ``upto_index``."""
    full = X.path
    h = full.grid_step
    i0 = X.start_index
    end = full.n - 1 if upto_index is None else upto_index
    total = 0.0
    for i in range(i0, end):
        ui = u.interval_value(i * h)
        total += 0.5 * h * (prob.q(prefix(full, i), ui) + prob.q(prefix(full, i + 1), ui))
    return float(total)


def cost(prob: ControlProblem, gamma: Path, u: ControlSignal, method: str = "euler") -> float:
    """J(gamma_t, u) = int_t^T q(X_s, u(s)) ds + phi(X_T)."""
    X = solve_state(prob, gamma, u, method=method)
    return running_cost(prob, X, u) + float(prob.phi(X.path))


# -- a-priori bounds --------------------------------------------------------

def constant_C1(L: float, T: float) -> float:
    return (1 + L * T) * math.exp(L * T)


def constant_C2(L: float, T: float) -> float:
    return (1 + L * (1 + constant_C1(L, T))) * math.exp(L * T)


def constant_C3(L: float, T: float) -> float:
    return L * (1 + constant_C1(L, T))


def constant_C4(L: float, T: float) -> float:
    return 2 * L * (T + 1) * constant_C2(L, T) + L * (1 + constant_C1(L, T))


def growth_bound(prob: ControlProblem, gamma: Path, u: ControlSignal,
                 method: str = "euler") -> Tuple[float, float]:
    """(sup_s |X(s)|, C1 (1 + ||gamma||_0))."""
    X = solve_state(prob, gamma, u, method=method)
    return sup_norm(X.path), constant_C1(prob.L, prob.horizon) * (1 + sup_norm(gamma))


def continuous_dependence_gap(prob: ControlProblem, gamma1: Path, gamma2: Path,
                              u: ControlSignal, method: str = "euler") -> Tuple[float, float]:
    """(||X^1_T - X^2_T||_0, C2 [||gamma1_{t1,t2} - gamma2||_0 + (1 + ||gamma1||_0)(t2 - t1)]).

    ``u`` starts at t1; the second solve uses its truncation to [t2, T].
    """
    if gamma1.final_time > gamma2.final_time:
        raise ParameterError("need t1 <= t2")
    if not same_step(gamma1.grid_step, gamma2.grid_step):
        raise GridAlignmentError("initial paths use different grids")
    t1, t2 = gamma1.final_time, gamma2.final_time
    X1 = solve_state(prob, gamma1, u, method=method)
    X2 = solve_state(prob, gamma2, u.truncate(t2), method=method)
    lhs = sup_norm(X1.path - X2.path)
    ext = flat_extend(gamma1, t2)
    rhs = constant_C2(prob.L, prob.horizon) * (
        sup_norm(ext - gamma2.with_horizon(ext.horizon)) + (1 + sup_norm(gamma1)) * (t2 - t1))
    return lhs, rhs


def time_lipschitz_gap(prob: ControlProblem, gamma: Path, u: ControlSignal,
                       method: str = "euler") -> Tuple[float, float]:
    """(max |X(s2) - X(s1)| / |s2 - s1| over [t, T], C3 (1 + ||gamma||_0)).

    Consecutive nodes suffice: the interpolant is piecewise linear.
    """
    X = solve_state(prob, gamma, u, method=method)
    ext = X.extension
    worst = 0.0
    if len(ext) > 1:
        worst = float(np.max(np.linalg.norm(np.diff(ext, axis=0), axis=1)) / X.grid_step)
    return worst, constant_C3(prob.L, prob.horizon) * (1 + sup_norm(gamma))


def hypothesis_violation(prob: ControlProblem, paths: Sequence[Path],
                         terminal_paths: Sequence[Path] = ()) -> float:
    """Largest violation of the Lipschitz and linear-growth bounds on the given paths.

    Pairs are formed from consecutive entries with equal final time.
    Returns 0 when every tested inequality holds.
    """
    L = prob.L
    worst = 0.0
    for p in paths:
        for u in prob.U:
            worst = max(worst, float(np.linalg.norm(prob.F(p, u))) - L * (1 + sup_norm(p)),
                        abs(prob.q(p, u)) - L * (1 + sup_norm(p)))
    for a, b in zip(paths, paths[1:]):
        if a.n != b.n:
            continue
        dist = sup_norm(a - b)
        for u in prob.U:
            worst = max(worst, float(np.linalg.norm(np.asarray(prob.F(a, u)) - prob.F(b, u))) - L * dist,
                        abs(prob.q(a, u) - prob.q(b, u)) - L * dist)
    for a, b in zip(terminal_paths, terminal_paths[1:]):
        worst = max(worst, abs(prob.phi(a) - prob.phi(b)) - L * sup_norm(a - b),
                    abs(prob.phi(a)) - L * (1 + sup_norm(a)))
    return max(worst, 0.0)
