"""Pathwise (Dupire) derivatives and the functional Ito formula."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError, InconsistentExtensionError, ParameterError
from .paths import CONTINUOUS, Path, flat_extend, prefix, sup_norm, vertical_bump


@dataclass(frozen=True)
class SmoothFunctional:
    """A functional on path space, optionally with its pathwise derivatives.

    ``dt`` is the horizontal derivative and ``dx`` the vertical gradient
    (returned as a length-d array, the row-vector convention).
    """

    eval: Callable[[Path], float]
    dt: Optional[Callable[[Path], float]] = None
    dx: Optional[Callable[[Path], np.ndarray]] = None
    name: str = "f"

    def __call__(self, p: Path) -> float:
        return self.eval(p)

    @property
    def is_c1(self) -> bool:
        return self.dt is not None and self.dx is not None

    def shifted(self, c: float) -> "SmoothFunctional":
        """f + c; derivatives are unchanged."""
        return SmoothFunctional(lambda p: self.eval(p) + c, self.dt, self.dx, f"{self.name}+{c:g}")

    def scaled(self, a: float) -> "SmoothFunctional":
        dt = (lambda p: a * self.dt(p)) if self.dt else None
        dx = (lambda p: a * np.asarray(self.dx(p))) if self.dx else None
        return SmoothFunctional(lambda p: a * self.eval(p), dt, dx, f"{a:g}*{self.name}")

    def __add__(self, other: "SmoothFunctional") -> "SmoothFunctional":
        dt = dx = None
        if self.dt and other.dt:
            dt = lambda p: self.dt(p) + other.dt(p)  # noqa: E731
        if self.dx and other.dx:
            dx = lambda p: np.asarray(self.dx(p)) + np.asarray(other.dx(p))  # noqa: E731
        return SmoothFunctional(lambda p: self.eval(p) + other.eval(p), dt, dx,
                                f"{self.name}+{other.name}")


@dataclass(frozen=True)
class Trajectory:
    """A path X on [0, T] that is a given path on [0, that] and absolutely
    continuous on [that, T].

    ``extension`` holds the samples on [that, T] including the one at that.
    """

    base: Path
    extension: np.ndarray
    derivative_samples: Optional[np.ndarray] = None

    def __post_init__(self):
        ext = np.array(self.extension, dtype=float)
        if ext.ndim == 1:
            ext = ext.reshape(-1, 1)
        if ext.shape[1] != self.base.dim:
            raise ValueError("extension dimension differs from base path")
        if not np.allclose(ext[0], self.base.end, rtol=0, atol=1e-12):
            raise ValueError("base and extension must agree at the junction time")
        ext.setflags(write=False)
        object.__setattr__(self, "extension", ext)
        full = np.vstack([self.base.samples, ext[1:]])
        n_total = full.shape[0]
        horizon = max(self.base.horizon, (n_total - 1) * self.base.grid_step)
        object.__setattr__(self, "_path", Path(full, self.base.grid_step,
                                               (n_total - 1) * self.base.grid_step,
                                               CONTINUOUS, horizon))

    @classmethod
    def from_function(cls, base: Path, fn: Callable[[float], object], final_time: float,
                      derivative: Optional[Callable[[float], object]] = None) -> "Trajectory":
        """Extend ``base`` by ``X(s) = fn(s)`` for s in [that, final_time]."""
        h = base.grid_step
        i0 = base.n - 1
        n = round(final_time / h) + 1
        times = np.arange(i0, n) * h
        ext = np.array([np.atleast_1d(fn(s)) for s in times], dtype=float)
        der = None
        if derivative is not None:
            der = np.array([np.atleast_1d(derivative(s)) for s in times], dtype=float)
        return cls(base, ext, der)

    @property
    def path(self) -> Path:
        """X_T, the whole path on [0, T]."""
        return self._path

    @property
    def grid_step(self) -> float:
        return self.base.grid_step

    @property
    def start_index(self) -> int:
        return self.base.n - 1

    @property
    def start_time(self) -> float:
        return self.base.final_time

    @property
    def final_time(self) -> float:
        return self._path.final_time

    def history(self, i: int) -> Path:
        """X_{s_i}: the path up to grid node ``i``."""
        return prefix(self._path, i)


def horizontal_derivative_numeric(f: Callable[[Path], float], p: Path,
                                  step: Optional[float] = None) -> float:
    """Forward difference (f(gamma_{s,s+step}) - f(gamma_s)) / step.

    ``step`` defaults to the path grid step and is rounded to a positive
    multiple of it.  When ``s + step`` passes the horizon the value is the
    left-limit approximation used at the terminal time: the derivative at
    ``s - step``, linearly extrapolated from ``s - 2 step`` where possible.
    """
    h = p.grid_step
    if step is None:
        step = h
    if not step > 0:
        raise ParameterError("step must be positive")
    m = max(1, round(step / h))
    step = m * h
    if p.final_time + step <= p.horizon * (1 + 1e-9):
        return (f(flat_extend(p, p.final_time + step)) - f(p)) / step
    k = p.n - 1 - m
    if k < 0:
        raise ParameterError("path too short for the terminal left-limit estimate")
    d1 = _forward(f, prefix(p, k), m)
    if k - m >= 0:
        d2 = _forward(f, prefix(p, k - m), m)
        return 2 * d1 - d2
    return d1


def _forward(f, p: Path, m: int) -> float:
    step = m * p.grid_step
    q = flat_extend(p, (p.n - 1 + m) * p.grid_step)
    return (f(q) - f(p)) / step


def default_vertical_step(p: Path) -> float:
    return 1e-4 * (1 + sup_norm(p))


def vertical_gradient_numeric(f: Callable[[Path], float], p: Path,
                              step: Optional[float] = None, scheme: str = "central",
                              return_scheme: bool = False):
    """Finite-difference vertical gradient using ``vertical_bump``.

    ``scheme`` is ``"central"``, ``"forward"`` or ``"backward"``.  If a
    central bump raises :class:`DomainError` the forward quotient
    (f(gamma^{+step e_i}) - f(gamma)) / step is used instead; pass
    ``return_scheme=True`` to learn which one was used.
    """
    if step is None:
        step = default_vertical_step(p)
    if not step > 0:
        raise ParameterError("step must be positive")
    if scheme not in ("central", "forward", "backward"):
        raise ParameterError(f"unknown scheme {scheme!r}")
    d = p.dim
    grad = np.empty(d)
    used = scheme
    base = None
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        if used == "central":
            try:
                grad[i] = (f(vertical_bump(p, e)) - f(vertical_bump(p, -e))) / (2 * step)
                continue
            except DomainError:
                used = "forward"
        if base is None:
            base = f(p)
        if used == "forward":
            grad[i] = (f(vertical_bump(p, e)) - base) / step
        else:
            grad[i] = (base - f(vertical_bump(p, -e))) / step
    return (grad, used) if return_scheme else grad


def ito_residual(f: SmoothFunctional, X: Trajectory) -> float:
    """f(X_T) - f(X_that) - sum dt f(X_s) ds - sum dx f(X_s) . dX(s).

    Both sums are left-point Riemann sums over the trajectory grid.
    """
    if not f.is_c1:
        raise ContractError(f"functional {f.name!r} needs dt and dx callbacks")
    h = X.grid_step
    i0 = X.start_index
    full = X.path
    n = full.n
    acc = 0.0
    for i in range(i0, n - 1):
        hist = prefix(full, i)
        dX = full.samples[i + 1] - full.samples[i]
        acc += f.dt(hist) * h + float(np.dot(np.asarray(f.dx(hist), dtype=float), dX))
    return float(f(full) - f(prefix(full, i0)) - acc)


def ito_report(f, trajectories: Dict[str, Callable[[float], Trajectory]],
               steps: Sequence[float]) -> List[dict]:
    """Residual records over a sequence of grid steps.

    ``f`` is a :class:`SmoothFunctional` or a builder ``h -> SmoothFunctional``
    (anchored functionals need an anchor on each grid).  ``trajectories``
    maps an id to a builder ``h -> Trajectory``.  The order estimate of each
    record compares it with the previous step: log(r_prev / r) / log(h_prev / h).
    """
    make = (lambda h: f) if isinstance(f, SmoothFunctional) else f
    records = []
    for tid, build in trajectories.items():
        prev = None
        for h in steps:
            fh = make(h)
            r = ito_residual(fh, build(h))
            order = None
            if prev is not None and prev[1] != 0 and r != 0:
                order = math.log(abs(prev[1]) / abs(r)) / math.log(prev[0] / h)
            records.append({"functional": fh.name, "trajectory_id": tid, "grid_step": h,
                            "residual": r, "order_estimate": order})
            prev = (h, r)
    return records


@dataclass(frozen=True)
class ConsistencyReport:
    max_eval_gap: float
    max_dt_gap: float
    max_dx_gap: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_dt_gap <= self.tolerance and self.max_dx_gap <= self.tolerance


def _dt(f: SmoothFunctional, p: Path) -> float:
    return f.dt(p) if f.dt else horizontal_derivative_numeric(f.eval, p)


def _dx(f: SmoothFunctional, p: Path) -> np.ndarray:
    return np.asarray(f.dx(p), dtype=float) if f.dx else vertical_gradient_numeric(f.eval, p)


def extension_consistency_check(f1: SmoothFunctional, f2: SmoothFunctional,
                                samples: Sequence[Path], tol: float = 1e-8) -> ConsistencyReport:
    """Compare the pathwise derivatives of two extensions of one functional.

    Both must agree (within ``tol``) on the continuous sample paths; if they
    do not, :class:`InconsistentExtensionError` is raised.  Missing
    derivative callbacks are replaced by numerical estimates.
    """
    ev = dt = dx = 0.0
    for p in samples:
        if p.is_cadlag:
            continue
        gap = abs(f1(p) - f2(p))
        if gap > tol:
            raise InconsistentExtensionError(
                f"{f1.name} and {f2.name} differ by {gap:.3e} on a continuous path")
        ev = max(ev, gap)
        dt = max(dt, abs(_dt(f1, p) - _dt(f2, p)))
        dx = max(dx, float(np.max(np.abs(_dx(f1, p) - _dx(f2, p)))))
    return ConsistencyReport(ev, dt, dx, tol)


# -- a small battery of C^1 functionals -------------------------------------

def cylinder_functional(psi: Callable[[float, np.ndarray], float],
                        psi_t: Callable[[float, np.ndarray], float],
                        psi_x: Callable[[float, np.ndarray], np.ndarray],
                        name: str = "cylinder") -> SmoothFunctional:
    """f(gamma_s) = psi(s, gamma_s(s)).

    The horizontal derivative is psi_t (a flat extension leaves the current
    value fixed) and the vertical one is the spatial gradient psi_x.
    """
    return SmoothFunctional(
        eval=lambda p: float(psi(p.final_time, p.end)),
        dt=lambda p: float(psi_t(p.final_time, p.end)),
        dx=lambda p: np.atleast_1d(np.asarray(psi_x(p.final_time, p.end), dtype=float)),
        name=name,
    )


def square_cylinder() -> SmoothFunctional:
    """f(gamma_s) = |gamma_s(s)|^2."""
    return cylinder_functional(lambda s, x: float(np.dot(x, x)), lambda s, x: 0.0,
                               lambda s, x: 2 * x, name="square_cylinder")


def time_functional() -> SmoothFunctional:
    """f(gamma_s) = s."""
    return cylinder_functional(lambda s, x: s, lambda s, x: 1.0, lambda s, x: np.zeros_like(x),
                               name="time")


def running_integral_functional(psi: Optional[Callable[[np.ndarray], float]] = None,
                                name: str = "running_integral") -> SmoothFunctional:
    """f(gamma_s) = int_0^s psi(gamma(r)) dr, psi defaulting to the first coordinate.

    Quadrature follows the path's interpolation (trapezoid for continuous,
    left point for cadlag).  dt f = psi(gamma_s(s)) and dx f = 0.
    """
    if psi is None:
        psi = lambda x: float(x[0])  # noqa: E731

    def ev(p: Path) -> float:
        vals = np.array([psi(x) for x in p.samples])
        if p.n == 1:
            return 0.0
        h = p.grid_step
        if p.is_cadlag:
            return float(h * vals[:-1].sum())
        return float(h * (vals.sum() - 0.5 * (vals[0] + vals[-1])))

    return SmoothFunctional(eval=ev, dt=lambda p: float(psi(p.end)),
                            dx=lambda p: np.zeros(p.dim), name=name)
