"""The anchored functionals g^a, S^a and Upsilon^M with closed-form derivatives.

All of them act on the difference path delta = gamma_t - a_{that,t}, where the
anchor ``a`` is flat-extended to the evaluation time.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .calculus import SmoothFunctional
from .errors import GridAlignmentError, ParameterError
from .paths import GRID_RTOL, Path, _anchor_samples, h_norm_sq, same_step

# (3 - sqrt 5) / 2: lower constant of S + |gamma(t)|^2 against ||gamma||_0^2
EQUIV_LOWER = (3 - math.sqrt(5)) / 2
EQUIV_UPPER = 2.0


def _delta(a: Optional[Path], p: Path) -> np.ndarray:
    if a is None:
        return p.samples
    if not same_step(a.grid_step, p.grid_step):
        raise GridAlignmentError("anchor and path grid steps differ")
    if a.final_time > p.final_time * (1 + GRID_RTOL) + 1e-300:
        raise ValueError("anchor must end no later than the evaluation path")
    if a.dim != p.dim:
        raise ValueError("anchor and path dimensions differ")
    return p.samples - _anchor_samples(a, p.n)


def _sup_and_end_sq(delta: np.ndarray) -> Tuple[float, float]:
    sq = np.einsum("ij,ij->i", delta, delta)
    return float(sq.max()), float(sq[-1])


def eval_g(a: Optional[Path], p: Path) -> float:
    """g^a(gamma_t) = ||gamma_t - a_{that,t}||_H^2."""
    if a is None:
        return h_norm_sq(p)
    return h_norm_sq(p, a)


def eval_S(a: Optional[Path], p: Path) -> float:
    """S(gamma_t, a_{that,t}) = (||delta||_0^2 - |delta(t)|^2)^2 / ||delta||_0^2, or 0 if delta == 0."""
    m2, e2 = _sup_and_end_sq(_delta(a, p))
    if m2 == 0.0:
        return 0.0
    return (m2 - e2) ** 2 / m2


def grad_S(a: Optional[Path], p: Path) -> np.ndarray:
    """Vertical gradient of S^a.

    -4 (||delta||_0^2 - |delta(t)|^2) delta(t) / ||delta||_0^2, and the zero
    vector when ||delta||_0 = 0.  When the final value attains the running
    sup the first factor vanishes, which covers the kink case as well.
    """
    delta = _delta(a, p)
    m2, e2 = _sup_and_end_sq(delta)
    if m2 == 0.0:
        return np.zeros(p.dim)
    return -4.0 * (m2 - e2) * delta[-1] / m2


def eval_upsilon(M: float, p: Path, anchor: Optional[Path] = None) -> float:
    """Upsilon^M(delta) = S(delta) + M |delta(t)|^2."""
    if not M > 0:
        raise ParameterError("M must be positive")
    delta = _delta(anchor, p)
    m2, e2 = _sup_and_end_sq(delta)
    s = 0.0 if m2 == 0.0 else (m2 - e2) ** 2 / m2
    return s + M * e2


def grad_upsilon(M: float, p: Path, anchor: Optional[Path] = None) -> np.ndarray:
    delta = _delta(anchor, p)
    return grad_S(anchor, p) + 2 * M * delta[-1]


def upsilon_pair(M: float, gamma: Path, eta: Path) -> float:
    """Upsilon^M(gamma_t, eta_s) = Upsilon^M(eta_s - gamma_{t,s}); symmetric in its arguments."""
    if gamma.final_time > eta.final_time:
        gamma, eta = eta, gamma
    return eval_upsilon(M, eta, gamma)


def equivalence_bound_check(p: Path) -> Tuple[float, float]:
    """Slacks of (3 - sqrt 5)/2 ||g||_0^2 <= S(g) + |g(t)|^2 <= 2 ||g||_0^2.

    Returns ``(lower_slack, upper_slack)``; both are non-negative when the
    inequality holds.
    """
    m2, e2 = _sup_and_end_sq(p.samples)
    s = 0.0 if m2 == 0.0 else (m2 - e2) ** 2 / m2
    mid = s + e2
    return mid - EQUIV_LOWER * m2, EQUIV_UPPER * m2 - mid


def quasi_subadditivity_gap(M: float, p: Path, q: Path) -> float:
    """2 Upsilon^M(p) + 2 Upsilon^M(q) - Upsilon^M(p + q), for M >= 2."""
    if M < 2:
        raise ParameterError("quasi-subadditivity is only established for M >= 2")
    return 2 * eval_upsilon(M, p) + 2 * eval_upsilon(M, q) - eval_upsilon(M, p + q)


# -- SmoothFunctional wrappers -----------------------------------------------

def g_functional(anchor: Optional[Path] = None, name: str = "g") -> SmoothFunctional:
    """g^a as a C^1 functional: dt = |gamma(s) - a(that)|^2, dx = 0."""
    a_end = None if anchor is None else anchor.end

    def dt(p: Path) -> float:
        diff = p.end if a_end is None else p.end - a_end
        return float(np.dot(diff, diff))

    return SmoothFunctional(eval=lambda p: eval_g(anchor, p), dt=dt,
                            dx=lambda p: np.zeros(p.dim), name=name)


def S_functional(anchor: Optional[Path] = None, name: str = "S") -> SmoothFunctional:
    """S^a as a C^1 functional: dt = 0, dx = grad_S."""
    return SmoothFunctional(eval=lambda p: eval_S(anchor, p), dt=lambda p: 0.0,
                            dx=lambda p: grad_S(anchor, p), name=name)


def upsilon_functional(M: float, anchor: Optional[Path] = None,
                       name: Optional[str] = None) -> SmoothFunctional:
    return SmoothFunctional(eval=lambda p: eval_upsilon(M, p, anchor), dt=lambda p: 0.0,
                            dx=lambda p: grad_upsilon(M, p, anchor),
                            name=name or f"upsilon{M:g}")
