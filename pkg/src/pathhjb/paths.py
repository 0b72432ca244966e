"""Grid-sampled paths, the d-infinity metric and the compact classes C^mu_{t,M0}.

A path gamma_t is stored as its samples at times 0, h, 2h, ..., t.  Continuous
paths interpolate linearly between nodes; cadlag paths are constant on each
[s_i, s_{i+1}).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .errors import BudgetError, GridAlignmentError, GridSnapWarning, HorizonError, ParameterError

CONTINUOUS = "continuous"
CADLAG = "cadlag"

# relative tolerance for "t lies on the grid" and for comparing grid steps
GRID_RTOL = 1e-9


def _grid_index(t: float, h: float) -> int:
    k = round(t / h)
    if abs(t / h - k) > GRID_RTOL * max(1.0, abs(k)):
        raise GridAlignmentError(f"time {t!r} is not on the grid of step {h!r}")
    return int(k)


def same_step(h1: float, h2: float) -> bool:
    return abs(h1 - h2) <= 1e-12 * max(abs(h1), abs(h2))


@dataclass(frozen=True, eq=False)
class Path:
    """A sampled element gamma_t of Lambda_t (or of the cadlag space).

    Parameters
    ----------
    samples : array_like, shape (n,) or (n, d)
        Values at times ``0, h, ..., final_time``.
    grid_step : float
        The uniform step ``h``.
    final_time : float, optional
        Defaults to ``(n - 1) * h``.
    continuity : {"continuous", "cadlag"}
    horizon : float
        The horizon ``T``; ``final_time`` may not exceed it.
    """

    samples: np.ndarray
    grid_step: float
    final_time: Optional[float] = None
    continuity: str = CONTINUOUS
    horizon: float = math.inf

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("samples must be a non-empty (n,) or (n, d) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        h = float(self.grid_step)
        if not h > 0:
            raise ParameterError("grid_step must be positive")
        t = (arr.shape[0] - 1) * h if self.final_time is None else float(self.final_time)
        if t < 0:
            raise ValueError("final_time must be non-negative")
        if round(t / h) + 1 != arr.shape[0]:
            raise GridAlignmentError(
                f"{arr.shape[0]} samples do not match final_time {t} on step {h}")
        if self.continuity not in (CONTINUOUS, CADLAG):
            raise ValueError(f"unknown continuity flag {self.continuity!r}")
        if t > self.horizon * (1 + GRID_RTOL):
            raise HorizonError(f"final_time {t} exceeds horizon {self.horizon}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "grid_step", h)
        object.__setattr__(self, "final_time", t)
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def _trusted(cls, samples, grid_step, final_time, continuity=CONTINUOUS, horizon=math.inf):
        # Skips validation; callers guarantee a 2-D finite array of the right length.
        obj = object.__new__(cls)
        object.__setattr__(obj, "samples", samples)
        object.__setattr__(obj, "grid_step", grid_step)
        object.__setattr__(obj, "final_time", final_time)
        object.__setattr__(obj, "continuity", continuity)
        object.__setattr__(obj, "horizon", horizon)
        return obj

    @classmethod
    def from_function(cls, fn, final_time, grid_step, horizon=math.inf):
        """Sample ``fn(s)`` on the grid of ``[0, final_time]``."""
        n = round(final_time / grid_step) + 1
        times = np.arange(n) * grid_step
        vals = np.array([np.atleast_1d(fn(s)) for s in times], dtype=float)
        return cls(vals, grid_step, final_time, horizon=horizon)

    @classmethod
    def constant(cls, value, final_time, grid_step, horizon=math.inf):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        n = round(final_time / grid_step) + 1
        return cls(np.tile(value, (n, 1)), grid_step, final_time, horizon=horizon)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        ts = np.arange(self.n) * self.grid_step
        ts[-1] = self.final_time
        return ts

    @property
    def end(self) -> np.ndarray:
        """The current value gamma_t(t)."""
        return self.samples[-1]

    @property
    def is_cadlag(self) -> bool:
        return self.continuity == CADLAG

    def value_at(self, s: float) -> np.ndarray:
        """gamma_t(s), interpolated according to the continuity flag."""
        if s < 0 or s > self.final_time * (1 + GRID_RTOL) + 1e-300:
            raise ValueError(f"time {s} outside [0, {self.final_time}]")
        x = min(s / self.grid_step, self.n - 1)
        i = int(math.floor(x + GRID_RTOL))
        if i >= self.n - 1:
            return self.samples[-1].copy()
        if self.is_cadlag:
            return self.samples[i].copy()
        w = x - i
        return (1 - w) * self.samples[i] + w * self.samples[i + 1]

    def with_samples(self, samples, continuity=None) -> "Path":
        return Path(samples, self.grid_step, self.final_time,
                    continuity or self.continuity, self.horizon)

    def with_horizon(self, horizon: float) -> "Path":
        return Path(self.samples, self.grid_step, self.final_time, self.continuity, horizon)

    def __add__(self, other: "Path") -> "Path":
        _check_same_domain(self, other)
        flag = CADLAG if (self.is_cadlag or other.is_cadlag) else CONTINUOUS
        return self.with_samples(self.samples + other.samples, flag)

    def __sub__(self, other: "Path") -> "Path":
        _check_same_domain(self, other)
        flag = CADLAG if (self.is_cadlag or other.is_cadlag) else CONTINUOUS
        return self.with_samples(self.samples - other.samples, flag)

    def __neg__(self) -> "Path":
        return self.with_samples(-self.samples)

    def __repr__(self):
        return (f"Path(n={self.n}, d={self.dim}, final_time={self.final_time!r}, "
                f"grid_step={self.grid_step!r}, continuity={self.continuity!r})")

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "final_time": self.final_time,
            "grid_step": self.grid_step,
            "continuity": self.continuity,
            "samples": self.samples.tolist(),
        })

    @classmethod
    def from_json(cls, text: str, horizon: float = math.inf) -> "Path":
        obj = json.loads(text)
        return cls(obj["samples"], obj["grid_step"], obj["final_time"],
                   obj.get("continuity", CONTINUOUS), horizon)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time"] + [f"x{i + 1}" for i in range(self.dim)])
        for t, row in zip(self.times, self.samples):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid_step: Optional[float] = None,
                 continuity: str = CONTINUOUS, horizon: float = math.inf) -> "Path":
        """Inverse of :meth:`to_csv`.

        The grid step is recovered from the second time stamp (written as
        exactly ``1 * h``); single-sample paths need ``grid_step``.
        """
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[0] != "time":
            raise ValueError("CSV header must start with 'time'")
        times = [float(r[0]) for r in body]
        samples = [[float(v) for v in r[1:]] for r in body]
        if grid_step is None:
            if len(times) < 2:
                raise ValueError("grid_step is required for single-sample paths")
            grid_step = times[1]
        return cls(samples, grid_step, times[-1], continuity, horizon)


def _check_same_domain(p: Path, q: Path):
    if not same_step(p.grid_step, q.grid_step) or p.n != q.n:
        raise GridAlignmentError("paths must share grid step and final time")
    if p.dim != q.dim:
        raise ValueError("paths must have the same dimension")


def sup_norm(p: Path) -> float:
    """||gamma_t||_0: the largest Euclidean norm over the samples."""
    return float(np.max(np.linalg.norm(p.samples, axis=1)))


def past_sup_norm(p: Path) -> float:
    """Sup over the strict past [0, t); zero for single-sample paths."""
    if p.n == 1:
        return 0.0
    return float(np.max(np.linalg.norm(p.samples[:-1], axis=1)))


def flat_extend(p: Path, new_final: float) -> Path:
    """gamma_{t, new_final}: the path frozen at gamma_t(t) after t."""
    if new_final > p.horizon * (1 + GRID_RTOL):
        raise HorizonError(f"cannot extend to {new_final} beyond horizon {p.horizon}")
    if new_final < p.final_time * (1 - GRID_RTOL) - 1e-300:
        raise ValueError("new_final must not precede the path's final time")
    k = _grid_index(new_final, p.grid_step)
    extra = k + 1 - p.n
    if extra <= 0:
        return p
    tail = np.repeat(p.samples[-1:], extra, axis=0)
    samples = np.vstack([p.samples, tail])
    samples.setflags(write=False)
    return Path._trusted(samples, p.grid_step, float(new_final), p.continuity, p.horizon)


def vertical_bump(p: Path, x) -> Path:
    """gamma_t^x: only the final value moves, by ``x``."""
    x = np.broadcast_to(np.asarray(x, dtype=float), (p.dim,))
    if not np.any(x):
        return p
    samples = p.samples.copy()
    samples[-1] += x
    samples.setflags(write=False)
    return Path._trusted(samples, p.grid_step, p.final_time, CADLAG, p.horizon)


def restrict(p: Path, s: float) -> Path:
    """gamma_t|_[0,s].  Off-grid ``s`` is snapped to the nearest node with a warning."""
    if s < -GRID_RTOL or s > p.final_time * (1 + GRID_RTOL) + GRID_RTOL:
        raise ValueError(f"cannot restrict to {s} outside [0, {p.final_time}]")
    k = round(s / p.grid_step)
    snapped = k * p.grid_step
    if abs(s / p.grid_step - k) > GRID_RTOL * max(1.0, abs(k)):
        warnings.warn(f"restrict: time {s!r} snapped to grid node {snapped!r} "
                      f"(rounding {snapped - s:+.3e})", GridSnapWarning, stacklevel=2)
        s = snapped
    k = min(max(int(k), 0), p.n - 1)
    if k == p.n - 1:
        return p
    samples = p.samples[:k + 1]
    return Path._trusted(samples, p.grid_step, float(s), p.continuity, p.horizon)


def prefix(p: Path, k: int) -> Path:
    """Restriction to the first ``k + 1`` nodes, by index (no rounding)."""
    if k == p.n - 1:
        return p
    return Path._trusted(p.samples[:k + 1], p.grid_step, k * p.grid_step, p.continuity, p.horizon)


def d_infinity(p: Path, q: Path) -> float:
    """|t - tbar| + sup_s |gamma_{t,tbar}(s) - gammabar_tbar(s)|."""
    if not same_step(p.grid_step, q.grid_step):
        raise GridAlignmentError(
            f"grid steps {p.grid_step!r} and {q.grid_step!r} differ")
    if p.final_time > q.final_time:
        p, q = q, p
    ext = p if p.n == q.n else _extend_unchecked(p, q.n)
    diff = np.linalg.norm(ext.samples - q.samples, axis=1)
    return abs(q.final_time - p.final_time) + float(np.max(diff))


def _extend_unchecked(p: Path, n: int) -> Path:
    tail = np.repeat(p.samples[-1:], n - p.n, axis=0)
    return Path._trusted(np.vstack([p.samples, tail]), p.grid_step,
                         (n - 1) * p.grid_step, p.continuity, p.horizon)


def h_norm_sq(p: Path, anchor: Optional[Path] = None) -> float:
    """Quadrature of int_0^t |gamma(s) - a_{that,t}(s)|^2 ds.

    Continuous paths use the trapezoid rule; cadlag paths the left-point rule,
    matching their piecewise-constant interpolation (so the final value has
    zero weight, as a single point has zero measure).
    """
    if anchor is None:
        delta = p.samples
    else:
        if anchor.final_time > p.final_time * (1 + GRID_RTOL):
            raise ValueError("anchor must end no later than the path")
        if not same_step(anchor.grid_step, p.grid_step):
            raise GridAlignmentError("anchor and path grid steps differ")
        delta = p.samples - _anchor_samples(anchor, p.n)
    sq = np.einsum("ij,ij->i", delta, delta)
    if p.n == 1:
        return 0.0
    h = p.grid_step
    if p.is_cadlag:
        return float(h * np.sum(sq[:-1]))
    return float(h * (np.sum(sq) - 0.5 * (sq[0] + sq[-1])))


def _anchor_samples(anchor: Path, n: int) -> np.ndarray:
    if anchor.n == n:
        return anchor.samples
    return np.vstack([anchor.samples, np.repeat(anchor.samples[-1:], n - anchor.n, axis=0)])


# -- compact classes ---------------------------------------------------------

@dataclass(frozen=True)
class CompactClass:
    """Parameters of C^mu_{t,M0}: paths gamma_s, s in [t, T], with
    ||gamma_s||_0 <= M0 and Lipschitz constant mu * (1 + M0).

    ``time_grid`` is the path grid step; ``value_grid`` quantizes values for
    sampling and enumeration.
    """

    start_time: float
    M0: float
    mu: float
    time_grid: float
    value_grid: float
    horizon: float
    dim: int = 1

    def __post_init__(self):
        if not self.M0 > 0 or not self.mu > 0:
            raise ParameterError("M0 and mu must be positive")
        if not self.time_grid > 0 or not self.value_grid > 0:
            raise ParameterError("grids must be positive")
        if self.start_time < 0 or self.start_time > self.horizon * (1 + GRID_RTOL):
            raise HorizonError("start_time must lie in [0, horizon]")

    @property
    def slope_bound(self) -> float:
        return self.mu * (1 + self.M0)

    def final_time_indices(self) -> List[int]:
        """Grid indices of admissible final times s in [t, T]."""
        h = self.time_grid
        lo = math.ceil(self.start_time / h - GRID_RTOL)
        hi = math.floor(self.horizon / h + GRID_RTOL)
        return list(range(lo, hi + 1))

    def with_mu(self, mu: float) -> "CompactClass":
        return CompactClass(self.start_time, self.M0, mu, self.time_grid,
                            self.value_grid, self.horizon, self.dim)


def class_contains(c: CompactClass, p: Path) -> bool:
    """Membership in C^mu_{t,M0}.

    Checks consecutive nodes only; for piecewise-linear paths this equals the
    supremum of difference quotients over all pairs l < r.
    """
    if p.final_time < c.start_time * (1 - GRID_RTOL) - 1e-12:
        return False
    if sup_norm(p) > c.M0 * (1 + 1e-12):
        return False
    if p.n > 1:
        slopes = np.linalg.norm(np.diff(p.samples, axis=0), axis=1) / p.grid_step
        if float(np.max(slopes)) > c.slope_bound * (1 + 1e-12):
            return False
    return True


def _ball_points(c: CompactClass) -> np.ndarray:
    r = int(math.floor(c.M0 / c.value_grid + 1e-9))
    axis = np.arange(-r, r + 1)
    pts = np.array(list(itertools.product(axis, repeat=c.dim)), dtype=float) * c.value_grid
    keep = np.linalg.norm(pts, axis=1) <= c.M0 * (1 + 1e-12)
    return pts[keep]


def _max_increment_units(c: CompactClass) -> int:
    step = c.slope_bound * c.time_grid
    return int(math.floor(step / (c.value_grid * math.sqrt(c.dim)) + 1e-9))


def lattice_sample(c: CompactClass, seed: int, count: int,
                   final_time: Optional[float] = None) -> List[Path]:
    """Seeded clipped random walks on the value grid, all inside ``c``.

    Each walk starts at a random lattice point of the M0-ball and moves by
    integer multiples of ``value_grid`` per coordinate, bounded so that the
    Euclidean increment never exceeds ``mu (1 + M0) time_grid``.  A move that
    would leave the ball is replaced by a zero increment.  Final times are
    drawn uniformly from the grid nodes of [t, T] unless ``final_time`` is
    given.
    """
    if count < 0:
        raise ParameterError("count must be non-negative")
    rng = np.random.default_rng(seed)
    idx = c.final_time_indices()
    if final_time is not None:
        idx = [_grid_index(final_time, c.time_grid)]
    if not idx:
        raise ParameterError("class has no grid node in [start_time, horizon]")
    starts = _ball_points(c)
    k = _max_increment_units(c)
    out = []
    for _ in range(count):
        n_nodes = int(idx[rng.integers(len(idx))]) + 1
        vals = np.empty((n_nodes, c.dim))
        cur = starts[rng.integers(len(starts))].copy()
        vals[0] = cur
        incs = rng.integers(-k, k + 1, size=(n_nodes - 1, c.dim)) * c.value_grid
        for i in range(1, n_nodes):
            cand = cur + incs[i - 1]
            if np.linalg.norm(cand) <= c.M0 * (1 + 1e-12):
                cur = cand
            vals[i] = cur
        out.append(Path(vals, c.time_grid, (n_nodes - 1) * c.time_grid, horizon=c.horizon))
    return out


def enumerate_class(c: CompactClass, max_nodes: int = 6) -> Iterator[Path]:
    """Every lattice path of ``c`` in a deterministic order.

    Ordered by final time, then lexicographically by node values.  Raises
    :class:`BudgetError` when the longest path has more than ``max_nodes``
    nodes.
    """
    idx = c.final_time_indices()
    if idx and idx[-1] + 1 > max_nodes:
        raise BudgetError(f"full enumeration needs {idx[-1] + 1} > {max_nodes} time nodes")
    pts = _ball_points(c)
    step = c.slope_bound * c.time_grid * (1 + 1e-12)
    nbrs = [np.flatnonzero(np.linalg.norm(pts - p, axis=1) <= step) for p in pts]
    for k in idx:
        n_nodes = k + 1
        for seq in _walks(nbrs, len(pts), n_nodes):
            yield Path(pts[list(seq)], c.time_grid, k * c.time_grid, horizon=c.horizon)


def _walks(nbrs, n_pts, length) -> Iterator[Sequence[int]]:
    stack = [(j,) for j in reversed(range(n_pts))]
    while stack:
        seq = stack.pop()
        if len(seq) == length:
            yield seq
            continue
        for j in reversed(nbrs[seq[-1]]):
            stack.append(seq + (int(j),))
