"""Built-in coefficient families, buildable from a JSON-style parameter dict.

=================  ==============================================
family             drift F(gamma_s, u)
=================  ==============================================
constant-field     u
state-feedback     -a gamma(s) + u
delay-feedback     -a gamma((s - tau) v 0) + u
running-integral   -a int_0^s gamma(r) dr + u
=================  ==============================================

Running costs: ``zero``, ``one``, ``control_sq`` (|u|^2), ``state_abs``
(|gamma(s)|), ``sup`` (||gamma_s||_0).  Terminal costs: ``zero``, ``linear``
(first coordinate of eta(T)), ``abs`` (|eta(T)|), ``sup`` (||eta||_0).
"""
from __future__ import annotations

import copy
from typing import Any, Dict, List

import numpy as np

from .control import ControlProblem, ReducedCoefficients
from .errors import ParameterError
from .paths import Path, sup_norm

RUNNING = ("zero", "one", "control_sq", "state_abs", "sup")
TERMINAL = ("zero", "linear", "abs", "sup")

_COMMON_SCHEMA = {
    "dim": {"type": "integer", "minimum": 1, "default": 1},
    "horizon": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
    "controls": {"type": "array", "description": "finite control set U; scalars or d-vectors",
                 "default": [-1.0, 1.0]},
    "running": {"enum": list(RUNNING), "default": "zero"},
    "terminal": {"enum": list(TERMINAL), "default": "linear"},
}

FAMILIES: Dict[str, dict] = {
    "constant-field": {
        "description": "F = u; with running=zero, terminal=linear, U={-1,1} this is the "
                       "bang-bang instance, with terminal=abs, U={-1,0,1} the eikonal one",
        "params": dict(_COMMON_SCHEMA),
        "criteria": [5, 6, 7, 8, 9, 10],
    },
    "state-feedback": {
        "description": "F = -a gamma(s) + u",
        "params": dict(_COMMON_SCHEMA, gain={"type": "number", "default": 1.0}),
        "criteria": [5, 7, 10],
    },
    "delay-feedback": {
        "description": "F = -a gamma((s - tau) v 0) + u",
        "params": dict(_COMMON_SCHEMA, gain={"type": "number", "default": 1.0},
                       delay={"type": "number", "minimum": 0, "default": 0.25}),
        "criteria": [5, 7, 10],
    },
    "running-integral": {
        "description": "F = -a int_0^s gamma(r) dr + u",
        "params": dict(_COMMON_SCHEMA, gain={"type": "number", "default": 1.0}),
        "criteria": [5, 10],
    },
}


def catalog() -> List[dict]:
    """Machine-readable description of the built-in families."""
    return [{"family": name, **copy.deepcopy(info)} for name, info in FAMILIES.items()]


def _controls(raw, dim: int):
    out = []
    for v in raw:
        a = np.asarray(v, dtype=float)
        if a.ndim == 0:
            a = np.full(dim, float(a))
        if a.shape != (dim,):
            raise ParameterError(f"control {v!r} does not have dimension {dim}")
        a.setflags(write=False)
        out.append(a)
    return tuple(out)


def _trap(p: Path) -> np.ndarray:
    if p.n == 1:
        return np.zeros(p.dim)
    s = p.samples
    return p.grid_step * (s.sum(axis=0) - 0.5 * (s[0] + s[-1]))


def build_problem(family: str, params: Dict[str, Any] = None) -> ControlProblem:
    """Instantiate a built-in family; unknown families or keys raise ParameterError."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown problem family {family!r}; see --list")
    params = dict(params or {})
    allowed = FAMILIES[family]["params"]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ParameterError(f"unknown parameters for {family}: {sorted(unknown)}")
    get = lambda k: params.get(k, allowed[k]["default"])  # noqa: E731
    dim = int(get("dim"))
    T = float(get("horizon"))
    if dim < 1 or not T > 0:
        raise ParameterError("dim must be >= 1 and horizon > 0")
    U = _controls(get("controls"), dim)
    running, terminal = get("running"), get("terminal")
    if running not in RUNNING or terminal not in TERMINAL:
        raise ParameterError(f"running must be one of {RUNNING}, terminal one of {TERMINAL}")
    umax = max(float(np.linalg.norm(u)) for u in U)
    gain = float(params.get("gain", 0.0 if family == "constant-field" else 1.0))

    if family == "constant-field":
        F = lambda p, u: u  # noqa: E731
        Fbar = lambda t, x, u: u  # noqa: E731
        lip_F = 0.0
    elif family == "state-feedback":
        F = lambda p, u: -gain * p.end + u  # noqa: E731
        Fbar = lambda t, x, u: -gain * x + u  # noqa: E731
        lip_F = abs(gain)
    elif family == "delay-feedback":
        tau = float(get("delay"))
        F = lambda p, u: -gain * p.value_at(max(p.final_time - tau, 0.0)) + u  # noqa: E731
        Fbar = None
        lip_F = abs(gain)
    else:
        F = lambda p, u: -gain * _trap(p) + u  # noqa: E731
        Fbar = None
        lip_F = abs(gain) * T

    if running == "zero":
        q = lambda p, u: 0.0  # noqa: E731
        qbar = lambda t, x, u: 0.0  # noqa: E731
        lip_q = 0.0
    elif running == "one":
        q = lambda p, u: 1.0  # noqa: E731
        qbar = lambda t, x, u: 1.0  # noqa: E731
        lip_q = 1.0
    elif running == "control_sq":
        q = lambda p, u: float(np.dot(u, u))  # noqa: E731
        qbar = lambda t, x, u: float(np.dot(u, u))  # noqa: E731
        lip_q = umax ** 2
    elif running == "state_abs":
        q = lambda p, u: float(np.linalg.norm(p.end))  # noqa: E731
        qbar = lambda t, x, u: float(np.linalg.norm(x))  # noqa: E731
        lip_q = 1.0
    else:
        q = lambda p, u: sup_norm(p)  # noqa: E731
        qbar = None
        lip_q = 1.0

    if terminal == "zero":
        phi = lambda p: 0.0  # noqa: E731
        phibar = lambda x: 0.0  # noqa: E731
    elif terminal == "linear":
        phi = lambda p: float(p.end[0])  # noqa: E731
        phibar = lambda x: float(x[0])  # noqa: E731
    elif terminal == "abs":
        phi = lambda p: float(np.linalg.norm(p.end))  # noqa: E731
        phibar = lambda x: float(np.linalg.norm(x))  # noqa: E731
    else:
        phi = sup_norm
        phibar = None
    lip_phi = 0.0 if terminal == "zero" else 1.0

    L = max(lip_F, umax, lip_q, lip_phi)
    if L == 0:
        L = 1.0
    reduced = None
    if Fbar is not None and qbar is not None and phibar is not None:
        reduced = ReducedCoefficients(Fbar, qbar, phibar)
    name = f"{family}[{running},{terminal}]"
    return ControlProblem(F, q, phi, L, U, T, dim, name, reduced)


def bang_bang(horizon: float = 1.0) -> ControlProblem:
    """F = u, q = 0, phi = eta(T), U = {-1, 1}; V(gamma_t) = gamma(t) - (T - t)."""
    return build_problem("constant-field", {"horizon": horizon, "controls": [-1.0, 1.0],
                                            "running": "zero", "terminal": "linear"})


def eikonal(horizon: float = 1.0) -> ControlProblem:
    """F = u, q = 0, phi = |eta(T)|, U = {-1, 0, 1}; V(gamma_t) = max(|gamma(t)| - (T - t), 0)."""
    return build_problem("constant-field", {"horizon": horizon, "controls": [-1.0, 0.0, 1.0],
                                            "running": "zero", "terminal": "abs"})
