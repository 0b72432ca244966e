"""The value functional V by search over piecewise-constant controls, and the DPP."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .control import ControlProblem, ControlSignal, _n_intervals, constant_C4
from .errors import BudgetError, GridAlignmentError, ParameterError
from .paths import Path, d_infinity, sup_norm

DEFAULT_CAP = 2 ** 16
DEFAULT_RESTARTS = 8


@dataclass(frozen=True)
class ValueQuery:
    """V(initial) over controls that are constant on each ``control_grid`` interval.

    ``search`` is ``"exhaustive"``, ``"greedy-refine"`` or ``"auto"`` (exhaustive
    while |U|^k <= cap, else greedy-refine).
    """

    problem: ControlProblem
    initial: Path
    control_grid: float
    search: str = "exhaustive"
    cap: int = DEFAULT_CAP
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0

    def at(self, initial: Path) -> "ValueQuery":
        return ValueQuery(self.problem, initial, self.control_grid, self.search, self.cap,
                          self.restarts, self.seed)


class _Rollout:
    """Left-point Euler + trapezoid running cost on a shared buffer.

    Same scheme as ``control.solve_state(method="euler")`` and
    ``control.running_cost``; sums may associate differently, so the two
    agree to rounding.
    """

    def __init__(self, prob: ControlProblem, gamma: Path, control_grid: float):
        h = gamma.grid_step
        self.prob, self.h = prob, h
        self.i0 = gamma.n - 1
        self.n = _n_intervals(0.0, prob.horizon, h) + 1
        self.k = _n_intervals(gamma.final_time, prob.horizon, control_grid) if self.n - 1 > self.i0 else 0
        if self.k:
            self.m = _n_intervals(0.0, control_grid, h)
            if self.i0 + self.k * self.m != self.n - 1:
                raise GridAlignmentError("control grid does not tile [t, T]")
        else:
            self.m = 0
        self.buf = np.empty((self.n, gamma.dim))
        self.buf[:self.i0 + 1] = gamma.samples

    def hist(self, i: int) -> Path:
        return Path._trusted(self.buf[:i + 1], self.h, i * self.h, "continuous", self.prob.horizon)

    def advance(self, i: int, u) -> float:
        """Run one control interval from node ``i``; return its running cost."""
        prob, h, buf = self.prob, self.h, self.buf
        acc = 0.0
        p = self.hist(i)
        q_left = prob.q(p, u)
        for s in range(i, i + self.m):
            buf[s + 1] = buf[s] + h * np.asarray(prob.F(p, u), dtype=float).reshape(-1)
            p = self.hist(s + 1)
            q_right = prob.q(p, u)
            acc += 0.5 * h * (q_left + q_right)
            q_left = q_right
        return acc

    def terminal(self) -> float:
        return float(self.prob.phi(self.hist(self.n - 1)))

    def cost(self, indices: Sequence[int]) -> float:
        U = self.prob.U
        acc = 0.0
        i = self.i0
        for a in indices:
            acc += self.advance(i, U[a])
            i += self.m
        return acc + self.terminal()


def _exhaustive(ro: _Rollout) -> Tuple[float, Tuple[int, ...]]:
    U = ro.prob.U
    best = [math.inf, ()]
    idx = [0] * ro.k

    def rec(j: int, i: int, acc: float):
        if j == ro.k:
            val = acc + ro.terminal()
            if val < best[0]:
                best[0], best[1] = val, tuple(idx)
            return
        for a, u in enumerate(U):
            idx[j] = a
            # each interval adds its own running cost to the prefix sum
            rec(j + 1, i + ro.m, acc + ro.advance(i, u))

    rec(0, ro.i0, 0.0)
    return best[0], best[1]


def _greedy(ro: _Rollout, restarts: int, seed: int) -> Tuple[float, Tuple[int, ...]]:
    rng = np.random.default_rng(seed)
    nU = len(ro.prob.U)
    best = (math.inf, ())
    for _ in range(max(1, restarts)):
        idx = [int(a) for a in rng.integers(nU, size=ro.k)]
        val = ro.cost(idx)
        improved = True
        while improved:
            improved = False
            for j in range(ro.k):
                for a in range(nU):
                    if a == idx[j]:
                        continue
                    trial = idx[:j] + [a] + idx[j + 1:]
                    c = ro.cost(trial)
                    if c < val:
                        idx, val, improved = trial, c, True
        cand = (val, tuple(idx))
        if cand[0] < best[0] or (cand[0] == best[0] and cand[1] < best[1]):
            best = cand
    return best


def value(q: ValueQuery) -> Tuple[float, ControlSignal]:
    """V(gamma_t) = min over piecewise-constant controls of J(gamma_t, u).

    Exhaustive search enumerates the |U|^k signals depth first, sharing
    prefixes, and keeps the lexicographically first minimizer.
    """
    prob = q.problem
    ro = _Rollout(prob, q.initial, q.control_grid)
    t = q.initial.final_time
    if ro.k == 0:
        return ro.terminal(), ControlSignal(t, q.control_grid, ())
    total = len(prob.U) ** ro.k
    mode = q.search
    if mode == "auto":
        mode = "exhaustive" if total <= q.cap else "greedy-refine"
    if mode == "exhaustive":
        if total > q.cap:
            raise BudgetError(f"|U|^k = {total} exceeds the exhaustive cap {q.cap}")
        v, idx = _exhaustive(ro)
    elif mode == "greedy-refine":
        v, idx = _greedy(ro, q.restarts, q.seed)
    else:
        raise ParameterError(f"unknown search mode {q.search!r}")
    return float(v), ControlSignal.from_indices(prob.U, idx, t, q.control_grid)


def dpp_residual(q: ValueQuery, s: float) -> float:
    """|V(gamma_t) - min_u [int_t^s q dr + V(X_s)]|.

    The outer minimum enumerates every control prefix on [t, s]; the inner V
    is a fresh query from X_s on the same control grid.
    """
    prob = q.problem
    t = q.initial.final_time
    if s < t - 1e-12 or s > prob.horizon + 1e-12:
        raise ParameterError("need t <= s <= T")
    v, _ = value(q)
    ro = _Rollout(prob, q.initial, q.control_grid)
    j_s = _n_intervals(t, s, q.control_grid) if ro.k else 0
    if len(prob.U) ** j_s > q.cap:
        raise BudgetError("prefix enumeration exceeds the cap")
    U = prob.U
    best = [math.inf]

    def rec(j: int, i: int, acc: float):
        if j == j_s:
            xs = Path(ro.buf[:i + 1].copy(), ro.h, s, horizon=prob.horizon)
            val = acc + value(q.at(xs))[0]
            best[0] = min(best[0], val)
            return
        for u in U:
            rec(j + 1, i + ro.m, acc + ro.advance(i, u))

    rec(0, ro.i0, 0.0)
    return abs(v - best[0])


@dataclass
class RegularityReport:
    C4: float
    worst_bound_slack: float = math.inf
    worst_lipschitz_slack: float = math.inf
    worst_cross_slack: float = math.inf
    records: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return min(self.worst_bound_slack, self.worst_lipschitz_slack, self.worst_cross_slack) >= 0


def value_regularity_check(problem: ControlProblem, pairs: Sequence[Tuple[Path, Path]],
                           control_grid: float, search: str = "exhaustive",
                           cap: int = DEFAULT_CAP) -> RegularityReport:
    """Check |V| <= C4 (1 + ||g||), same-time Lipschitz and cross-time d_inf bounds.

    Each slack is bound minus observed; all must be non-negative.  Cross-time
    pairs need final times that differ by whole control intervals.
    """
    C4 = constant_C4(problem.L, problem.horizon)
    rep = RegularityReport(C4)
    for k, (g, e) in enumerate(pairs):
        vg = value(ValueQuery(problem, g, control_grid, search, cap))[0]
        ve = value(ValueQuery(problem, e, control_grid, search, cap))[0]
        ng, ne = sup_norm(g), sup_norm(e)
        b = min(C4 * (1 + ng) - abs(vg), C4 * (1 + ne) - abs(ve))
        rep.worst_bound_slack = min(rep.worst_bound_slack, b)
        lip = math.inf
        if g.n == e.n:
            lip = C4 * sup_norm(g - e) - abs(vg - ve)
            rep.worst_lipschitz_slack = min(rep.worst_lipschitz_slack, lip)
        cross = C4 * (1 + max(ng, ne)) * d_infinity(g, e) - abs(vg - ve)
        rep.worst_cross_slack = min(rep.worst_cross_slack, cross)
        rep.records.append({"pair": k, "t1": g.final_time, "t2": e.final_time, "V1": vg,
                            "V2": ve, "bound_slack": b,
                            "lipschitz_slack": None if math.isinf(lip) else lip,
                            "cross_slack": cross})
    return rep
