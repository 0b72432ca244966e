"""Hamiltonian, PHJB residuals, viscosity tests and the Markovian baseline.

Sign conventions follow the existence theory used here: for a test
functional phi touching w from above on C^mu_{t,M0} (sup of w - phi is 0),
a subsolution satisfies

    dt phi + H(gamma, dx phi) >= 0,

and for phi with inf of w + phi equal to 0, a supersolution satisfies

    -dt phi + H(gamma, -dx phi) <= 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .calculus import SmoothFunctional, horizontal_derivative_numeric, vertical_gradient_numeric
from .control import ControlProblem, ReducedCoefficients, constant_C3
from .errors import BudgetError, ContractError, InputError, ParameterError, RefinementError
from .paths import (GRID_RTOL, CompactClass, Path, class_contains, enumerate_class,
                    lattice_sample)
from .value import ValueQuery, value


def hamiltonian(problem: ControlProblem, path: Path, p) -> Tuple[float, int]:
    """H(gamma, p) = min_u [p . F(gamma, u) + q(gamma, u)] and the first minimizing index."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    best, arg = math.inf, -1
    for i, u in enumerate(problem.U):
        val = float(np.dot(p, np.asarray(problem.F(path, u), dtype=float).reshape(-1))) \
            + float(problem.q(path, u))
        if val < best:
            best, arg = val, i
    return best, arg


def phjb_residual(problem: ControlProblem, v: SmoothFunctional, gamma: Path) -> float:
    """dt v(gamma) + H(gamma, dx v(gamma)); zero for a classical solution."""
    if not v.is_c1:
        raise ContractError(f"functional {v.name!r} needs dt and dx callbacks")
    if gamma.final_time >= problem.horizon * (1 - GRID_RTOL):
        raise ParameterError("the residual is defined for t < T")
    return float(v.dt(gamma)) + hamiltonian(problem, gamma, v.dx(gamma))[0]


def bang_bang_classical_solution(horizon: float) -> SmoothFunctional:
    """v(gamma_t) = gamma(t) - (T - t), the value of the bang-bang instance."""
    return SmoothFunctional(eval=lambda p: float(p.end[0]) - (horizon - p.final_time),
                            dt=lambda p: 1.0, dx=lambda p: np.eye(p.dim)[0],
                            name="bang_bang_classical")


@dataclass
class TerminalReport:
    max_gap: float
    tolerance: float
    n_paths: int

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tolerance


def terminal_check(problem: ControlProblem, v: Callable[[Path], float], c: CompactClass,
                   seed: int = 0, count: int = 100, tol: float = 1e-9) -> TerminalReport:
    """max |v(gamma_T) - phi(gamma_T)| over lattice samples of C^mu with final time T."""
    paths = lattice_sample(c, seed, count, final_time=problem.horizon)
    gap = max((abs(v(p) - problem.phi(p)) for p in paths), default=0.0)
    return TerminalReport(float(gap), tol, len(paths))


# -- viscosity testing --------------------------------------------------------

@dataclass
class TouchingPoint:
    path: Path
    gap: float
    sampled_only: bool
    n_evaluated: int


def _class_paths(c: CompactClass, max_nodes: int, seed: int, count: int):
    try:
        return list(enumerate_class(c, max_nodes)), False
    except BudgetError:
        return lattice_sample(c, seed, count), True


def _hill_climb(obj, start: Path, c: CompactClass, max_steps: int = 200) -> Tuple[Path, float]:
    cur, val = start, obj(start)
    moves = [(i, j, s) for i in range(start.n) for j in range(start.dim) for s in (1, -1)]
    for _ in range(max_steps):
        improved = False
        for i, j, s in moves:
            smp = cur.samples.copy()
            smp[i, j] += s * c.value_grid
            cand = cur.with_samples(smp)
            if not class_contains(c, cand):
                continue
            cv = obj(cand)
            if cv > val:
                cur, val, improved = cand, cv, True
        if not improved:
            break
    return cur, val


def find_touching_max(w: Callable[[Path], float], phi: Callable[[Path], float],
                      c: CompactClass, mode: str = "sub", *, max_nodes: int = 6,
                      seed: int = 0, count: int = 500, tie_tol: float = 1e-12) -> TouchingPoint:
    """Extremal path of w - phi (``sub``: maximize) or w + phi (``super``: minimize) over ``c``.

    Classes with at most ``max_nodes`` time nodes are enumerated; otherwise
    ``count`` seeded lattice samples are improved by hill climbing over
    single value-grid moves and the result is flagged ``sampled_only``.
    Values within ``tie_tol`` of the extremum count as ties, resolved by the
    first path in the deterministic order; paths where the objective is not
    finite are skipped.  ``gap`` is the extremal value,
    i.e. the constant by which phi must be shifted to touch.
    """
    if mode not in ("sub", "super"):
        raise ParameterError("mode must be 'sub' or 'super'")
    sign = 1.0 if mode == "sub" else -1.0

    def obj(p: Path) -> float:
        val = w(p) - phi(p) if mode == "sub" else -(w(p) + phi(p))
        # paths where phi is undefined (inf) never touch
        return val if math.isfinite(val) else -math.inf

    paths, sampled = _class_paths(c, max_nodes, seed, count)
    vals = [obj(p) for p in paths]
    if sampled:
        climbed = [_hill_climb(obj, p, c) for p in paths]
        paths = [cp for cp, _ in climbed]
        vals = [cv for _, cv in climbed]
    top = max(vals)
    if not math.isfinite(top):
        raise ParameterError("no path of the class has a finite w -/+ phi")
    thresh = top - tie_tol * (1 + abs(top))
    k = next(i for i, v in enumerate(vals) if v >= thresh)
    return TouchingPoint(paths[k], sign * vals[k], sampled, len(paths))


@dataclass
class ViscosityReport:
    mode: str
    touching_path: Path
    touching_gap: float
    inequality_value: Optional[float]
    passed: Optional[bool]
    applicable: bool = True
    mu: Optional[float] = None
    M0: Optional[float] = None
    sampled_only: bool = False
    reason: str = ""

    def to_record(self) -> dict:
        return {"mode": self.mode, "mu": self.mu, "M0": self.M0,
                "touching_time": self.touching_path.final_time,
                "touching_value": self.touching_path.end.tolist(),
                "touching_gap": self.touching_gap, "inequality_value": self.inequality_value,
                "applicable": self.applicable, "passed": self.passed,
                "sampled_only": self.sampled_only, "reason": self.reason}


def _derivs(phi: SmoothFunctional, p: Path):
    dt = phi.dt(p) if phi.dt else horizontal_derivative_numeric(phi.eval, p)
    dx = np.asarray(phi.dx(p), dtype=float) if phi.dx else vertical_gradient_numeric(phi.eval, p)
    return float(dt), dx


def viscosity_test(problem: ControlProblem, w: Callable[[Path], float], phi: SmoothFunctional,
                   c: CompactClass, mode: str = "sub", tol: float = 1e-9, **search) -> ViscosityReport:
    """Evaluate the sub- or supersolution inequality at the touching path of ``phi``.

    Touching at the horizon or on the boundary |gamma(s)| = M0 is reported as
    not applicable rather than as a failure.
    """
    tp = find_touching_max(w, phi, c, mode, **search)
    g = tp.path
    rep = ViscosityReport(mode, g, tp.gap, None, None, True, c.mu, c.M0, tp.sampled_only)
    if g.final_time >= problem.horizon * (1 - GRID_RTOL):
        rep.applicable, rep.reason = False, "touching at the horizon"
        return rep
    if float(np.linalg.norm(g.end)) >= c.M0 * (1 - 1e-12):
        rep.applicable, rep.reason = False, "touching value on the M0 boundary"
        return rep
    dt, dx = _derivs(phi, g)
    if mode == "sub":
        val = dt + hamiltonian(problem, g, dx)[0]
        rep.passed = val >= -tol
    else:
        val = -dt + hamiltonian(problem, g, -dx)[0]
        rep.passed = val <= tol
    rep.inequality_value = float(val)
    return rep


def mu_ladder(problem: ControlProblem) -> List[float]:
    """{mu0, 2 mu0, 4 mu0} with mu0 = C3(L, T)."""
    mu0 = constant_C3(problem.L, problem.horizon)
    return [mu0, 2 * mu0, 4 * mu0]


def penalized_test_functional(base: SmoothFunctional, anchor: Path, sign: float = 1.0,
                              name: Optional[str] = None, M: float = 2.0) -> SmoothFunctional:
    """sign * base + |s - that|^2 + Upsilon^M(gamma_s - anchor_{that,s}).

    The penalty is C^1 (dt = 2 (s - that), dx = grad Upsilon), vanishes with
    its derivatives at ``anchor`` and is at least a multiple of the squared
    sup distance elsewhere on paths ending no earlier than ``anchor``, which
    makes the touching point strict.
    """
    from .functionals import grad_upsilon, eval_upsilon

    that = anchor.final_time

    def ev(p: Path) -> float:
        if p.final_time < that * (1 - GRID_RTOL):
            return math.inf
        return sign * base(p) + (p.final_time - that) ** 2 + eval_upsilon(M, p, anchor)

    return SmoothFunctional(
        eval=ev,
        dt=lambda p: sign * base.dt(p) + 2 * (p.final_time - that),
        dx=lambda p: sign * np.asarray(base.dx(p), dtype=float) + grad_upsilon(M, p, anchor),
        name=name or f"penalized({base.name})",
    )


# -- Markovian reduction ------------------------------------------------------

@dataclass
class ValueTable:
    """V bar on a tensor grid: ``values[n, ...]`` at time ``t_grid[n]``."""

    t_grid: np.ndarray
    x_axes: Tuple[np.ndarray, ...]
    values: np.ndarray

    def lookup(self, t: float, x) -> float:
        n = int(round((t - self.t_grid[0]) / (self.t_grid[1] - self.t_grid[0])))
        if n < 0 or n >= len(self.t_grid) or abs(self.t_grid[n] - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"t = {t} is not on the table's time grid")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        interp = RegularGridInterpolator(self.x_axes, self.values[n], bounds_error=False,
                                         fill_value=None)
        return float(interp(x[None, :])[0])

    def to_csv_rows(self) -> List[Tuple]:
        rows = []
        mesh = np.meshgrid(*self.x_axes, indexing="ij")
        flat = [m.ravel() for m in mesh]
        for n, t in enumerate(self.t_grid):
            vals = self.values[n].ravel()
            for j in range(vals.size):
                rows.append((float(t), *(float(f[j]) for f in flat), float(vals[j])))
        return rows


def markovian_hjb_solve(reduced: ReducedCoefficients, U: Sequence, x_axes: Sequence[np.ndarray],
                        t_grid: np.ndarray) -> ValueTable:
    """Backward semi-Lagrangian sweep for the state-only HJB equation.

    V(T, x) = phibar(x) and
    V(t_n, x) = min_u [qbar(t_n, x, u) dt + V(t_{n+1}, x + Fbar(t_n, x, u) dt)]
    with (multi)linear interpolation, extrapolated linearly by at most one
    cell beyond the grid.  A departure point further out raises
    :class:`RefinementError`.
    """
    axes = tuple(np.asarray(a, dtype=float) for a in x_axes)
    d = len(axes)
    if d not in (1, 2):
        raise ParameterError("the Markovian solver supports d = 1 or 2")
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ParameterError("t_grid must be increasing with at least two nodes")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    shape = tuple(len(a) for a in axes)
    lo = np.array([a[0] - (a[1] - a[0]) for a in axes]) - 1e-12
    hi = np.array([a[-1] + (a[-1] - a[-2]) for a in axes]) + 1e-12
    vals = np.empty((len(t_grid),) + shape)
    vals[-1] = np.array([reduced.phi(x) for x in pts]).reshape(shape)
    for n in range(len(t_grid) - 2, -1, -1):
        dt = t_grid[n + 1] - t_grid[n]
        t = t_grid[n]
        interp = RegularGridInterpolator(axes, vals[n + 1], bounds_error=False, fill_value=None)
        best = np.full(len(pts), np.inf)
        for u in U:
            drift = np.array([np.asarray(reduced.F(t, x, u), dtype=float).reshape(-1) for x in pts])
            dep = pts + dt * drift
            if np.any(dep < lo) or np.any(dep > hi):
                raise RefinementError("departure point leaves the grid by more than one cell; "
                                      "reduce dt or widen the x grid")
            run = np.array([reduced.q(t, x, u) for x in pts]) * dt
            best = np.minimum(best, run + interp(dep))
        vals[n] = best.reshape(shape)
    return ValueTable(t_grid, axes, vals)


def state_only_violation(problem: ControlProblem, paths: Sequence[Path], seed: int = 0) -> float:
    """Largest change in F, q or phi when the history is altered but (t, gamma(t)) kept.

    Each path is compared with the constant path at its current value and with
    a wiggled copy; zero means no path dependence was detected.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in paths:
        const = Path.constant(p.end, p.final_time, p.grid_step, p.horizon)
        smp = p.samples.copy()
        if p.n > 1:
            smp[:-1] += rng.normal(scale=0.5, size=smp[:-1].shape)
        wiggly = p.with_samples(smp)
        for other in (const, wiggly):
            for u in problem.U:
                worst = max(worst,
                            float(np.max(np.abs(np.asarray(problem.F(p, u)) - problem.F(other, u)))),
                            abs(problem.q(p, u) - problem.q(other, u)))
            if abs(p.final_time - problem.horizon) <= 1e-9 * max(1.0, problem.horizon):
                worst = max(worst, abs(problem.phi(p) - problem.phi(other)))
    return worst


@dataclass
class ReductionReport:
    max_gap: float
    max_insensitivity_gap: float
    tolerance: float
    insensitivity_tolerance: float
    records: List[dict]

    @property
    def passed(self) -> bool:
        return (self.max_gap <= self.tolerance
                and self.max_insensitivity_gap <= self.insensitivity_tolerance)


def reduction_crosscheck(problem: ControlProblem, queries: Sequence[Path], control_grid: float,
                         x_axes: Sequence[np.ndarray], t_grid: np.ndarray, *, tol: float = 1e-2,
                         insensitivity_tol: float = 1e-6, search: str = "auto",
                         seed: int = 0) -> ReductionReport:
    """Compare path-space V with the semi-Lagrangian table V bar(t, gamma(t)).

    Also evaluates V on a second path with the same (t, gamma(t)) but a
    different history; for state-only coefficients both values coincide.
    Raises :class:`InputError` when the coefficients are path dependent.
    """
    if problem.reduced is None:
        raise InputError(f"{problem.name} has no state-only reduction")
    probe = list(queries)
    T = problem.horizon
    h = probe[0].grid_step if probe else 0.1
    probe += [Path.constant(np.ones(problem.dim) * 0.3, T, h, T)]
    if state_only_violation(problem, probe, seed) > 1e-12:
        raise InputError("coefficients depend on the path history, not only on (t, gamma(t))")
    table = markovian_hjb_solve(problem.reduced, problem.U, x_axes, t_grid)
    rng = np.random.default_rng(seed)
    records = []
    gap = insens = 0.0
    for k, g in enumerate(queries):
        v = value(ValueQuery(problem, g, control_grid, search, seed=seed))[0]
        vbar = table.lookup(g.final_time, g.end)
        smp = g.samples.copy()
        if g.n > 1:
            smp[:-1] = g.end + rng.uniform(-1, 1, size=smp[:-1].shape)
        alt = g.with_samples(smp)
        v_alt = value(ValueQuery(problem, alt, control_grid, search, seed=seed))[0]
        gap = max(gap, abs(v - vbar))
        insens = max(insens, abs(v - v_alt))
        records.append({"query": k, "t": g.final_time, "x": g.end.tolist(), "V": v,
                        "Vbar": vbar, "V_alt_history": v_alt})
    return ReductionReport(gap, insens, tol, insensitivity_tol, records)
