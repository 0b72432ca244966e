"""Config-driven experiments: one JSON file describes one run.

A config has the keys ``kind``, ``seed``, ``grids``, ``tolerances`` and
``params`` (all required) and ``problem`` or ``problems`` depending on the
kind.  Tolerances never have defaults; whatever a run checks against is in
the file and is echoed into the manifest.

Each run writes into its output directory

- ``manifest.json``  config echo, library version, wall time
- ``results.json``   every check with its value, bound and verdict
- ``*.csv``          per-kind tables
- ``summary.txt``    one line per check
- ``*.gp``           a gnuplot script for the main table, when there is one

Everything except the manifest is a pure function of the config and seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from . import __version__
from .calculus import (Trajectory, horizontal_derivative_numeric, ito_report,
                       running_integral_functional, square_cylinder, vertical_gradient_numeric,
                       default_vertical_step)
from .control import (ControlProblem, ControlSignal, constant_C1, constant_C2, constant_C3,
                      continuous_dependence_gap, growth_bound, solve_state, time_lipschitz_gap)
from .errors import BudgetError, ParameterError, PathHJBError
from .functionals import (S_functional, equivalence_bound_check, g_functional, grad_S,
                          quasi_subadditivity_gap)
from .hjb import (bang_bang_classical_solution, markovian_hjb_solve, mu_ladder,
                  penalized_test_functional, phjb_residual, reduction_crosscheck, terminal_check,
                  viscosity_test)
from .paths import CompactClass, Path, flat_extend, lattice_sample, sup_norm
from .problems import build_problem
from .value import ValueQuery, dpp_residual, value, value_regularity_check

EXIT_PASS, EXIT_CONFIG, EXIT_FAIL, EXIT_BUDGET = 0, 2, 3, 4


class ConfigError(PathHJBError, ValueError):
    """Invalid experiment config; ``problems`` lists field-level messages."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# -- config schema -------------------------------------------------------------

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT = {"type": "integer", "minimum": 1}
_PROBLEM = {
    "type": "object",
    "required": ["family"],
    "properties": {"family": {"type": "string"}, "params": {"type": "object"}},
    "additionalProperties": False,
}


def _obj(props: Dict[str, dict]) -> dict:
    return {"type": "object", "required": sorted(props), "properties": props,
            "additionalProperties": False}


KINDS: Dict[str, dict] = {
    "functional-props": {
        "grids": _obj({"h": _POS, "value_grid": _POS}),
        "tolerances": _obj({"slack": _NONNEG, "derivative_factor": _POS, "horizontal": _NONNEG}),
        "params": _obj({
            "checks": {"type": "array", "minItems": 1, "items": {
                "enum": ["equivalence", "subadditivity", "derivatives"]}},
            "n_paths": _INT, "dims": {"type": "array", "minItems": 1, "items": _INT},
            "max_nodes": {"type": "integer", "minimum": 2}, "M_values": {"type": "array",
                                                                        "items": _POS},
            "n_derivative_paths": _INT, "M0": _POS, "mu": _POS, "kink_margin": _POS}),
        "problem": None,
    },
    "ito-check": {
        "grids": _obj({"steps": {"type": "array", "minItems": 2, "items": _POS}}),
        "tolerances": _obj({"order_min": {"type": "number"}, "order_max": {"type": "number"},
                            "constant": _POS}),
        "params": _obj({"functionals": {"type": "array", "minItems": 1, "items": {
            "enum": ["cylinder", "g", "S", "S-anchored", "running-integral"]}},
            "trajectories": {"type": "array", "minItems": 1, "items": {"enum": ["A", "B"]}}}),
        "problem": None,
    },
    "ode-solve": {
        "grids": _obj({"h": _POS, "control_grid": _POS}),
        "tolerances": _obj({"agreement_factor": _POS, "picard_tol": _POS}),
        "params": _obj({"start_time": _NONNEG, "initial_value": {"type": "array"},
                        "control_indices": {"type": "array", "items": {"type": "integer",
                                                                       "minimum": 0}}}),
        "problem": "single",
    },
    "estimates": {
        "grids": _obj({"h": _POS, "control_grid": _POS, "oracle_steps": {
            "type": "array", "minItems": 1, "items": _POS}}),
        "tolerances": _obj({"picard_ratio": _POS, "agreement_factor": _POS,
                            "oracle_factor": _POS, "bound_slack": _NONNEG,
                            "picard_tol": _POS}),
        "params": _obj({"families": {"type": "array", "minItems": 1,
                                     "items": {"type": "string"}},
                        "n_cases": _INT, "horizon": _POS, "gain": _POS}),
        "problem": None,
    },
    "value": {
        "grids": _obj({"h": _POS, "control_grid": _POS}),
        "tolerances": _obj({"bound_slack": _NONNEG}),
        "params": _obj({"n_pairs": _INT, "search": {"enum": ["exhaustive", "greedy-refine",
                                                             "auto"]},
                        "cap": _INT, "noise": _POS,
                        "refinement_grids": {"type": "array", "items": _POS}}),
        "problem": "list",
    },
    "dpp-check": {
        "grids": _obj({"h": _POS, "control_grid": _POS}),
        "tolerances": _obj({"dpp": _NONNEG}),
        "params": _obj({"start_times": {"type": "array", "minItems": 1, "items": _NONNEG},
                        "n_paths_per_time": _INT, "s_points": {"type": "array", "minItems": 1,
                                                               "items": {"enum": ["t", "mid",
                                                                                  "T"]}},
                        "cap": _INT}),
        "problem": "single",
    },
    "hjb-compare": {
        "grids": _obj({"h": _POS, "control_grid": _POS, "dx": _POS, "dt": _POS,
                       "x_min": {"type": "number"}, "x_max": {"type": "number"}}),
        "tolerances": _obj({"reduction": _NONNEG, "insensitivity": _NONNEG}),
        "params": _obj({"query_times": {"type": "array", "minItems": 1, "items": _NONNEG},
                        "query_values": {"type": "array", "minItems": 1,
                                         "items": {"type": "number"}},
                        "search": {"enum": ["exhaustive", "greedy-refine", "auto"]}}),
        "problem": "list",
    },
    "viscosity-check": {
        "grids": _obj({"time_grid": _POS, "value_grid": _POS}),
        "tolerances": _obj({"residual": _NONNEG, "viscosity": _NONNEG, "terminal": _NONNEG}),
        "params": _obj({"M0": _POS, "n_residual_paths": _INT, "n_anchors": _INT,
                        "n_terminal_paths": _INT, "max_nodes": {"type": "integer",
                                                                "minimum": 1}}),
        "problem": "single",
    },
    "phjb-residual": {
        "grids": _obj({"time_grid": _POS, "value_grid": _POS}),
        "tolerances": _obj({"residual": _NONNEG}),
        "params": _obj({"M0": _POS, "mu": _POS, "n_paths": _INT}),
        "problem": "single",
    },
}


def config_schema(kind: str) -> dict:
    entry = KINDS[kind]
    props = {"kind": {"const": kind}, "seed": {"type": "integer", "minimum": 0},
             "description": {"type": "string"}, "grids": entry["grids"],
             "tolerances": entry["tolerances"], "params": entry["params"]}
    required = ["kind", "seed", "grids", "tolerances", "params"]
    if entry["problem"] == "single":
        props["problem"] = _PROBLEM
        required.append("problem")
    elif entry["problem"] == "list":
        props["problems"] = {"type": "array", "minItems": 1, "items": _PROBLEM}
        required.append("problems")
    return {"type": "object", "required": required, "properties": props,
            "additionalProperties": False}


def _tiles(length: float, step: float) -> bool:
    r = length / step
    return abs(r - round(r)) <= 1e-9 * max(1.0, r)


def validate_config(cfg: Any) -> dict:
    """Return ``cfg`` if valid, else raise :class:`ConfigError` listing each bad field."""
    if not isinstance(cfg, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError([f"kind: expected one of {sorted(KINDS)}, got {kind!r}"])
    validator = jsonschema.Draft202012Validator(config_schema(kind))
    errs = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    msgs = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errs]
    if msgs:
        raise ConfigError(msgs)
    steps = [(f"params.refinement_grids.{i}", v)
             for i, v in enumerate(cfg["params"].get("refinement_grids", []))]
    if "control_grid" in cfg["grids"]:
        steps.insert(0, ("grids.control_grid", cfg["grids"]["control_grid"]))
    h = cfg["grids"].get("h")
    for where, step in steps:
        if h is not None and not _tiles(step, h):
            msgs.append(f"{where}: {step} is not a multiple of grids.h = {h}")
    probs = cfg.get("problems") or ([cfg["problem"]] if "problem" in cfg else [])
    for i, p in enumerate(probs):
        where = "problem" if "problem" in cfg else f"problems.{i}"
        try:
            prob = build_problem(p["family"], p.get("params", {}))
        except ParameterError as exc:
            msgs.append(f"{where}: {exc}")
            continue
        for name, step in steps:
            if not _tiles(prob.horizon, step):
                msgs.append(f"{name}: {step} does not divide the horizon {prob.horizon} "
                            f"of {where}")
    tol = cfg["tolerances"]
    if "order_min" in tol and tol["order_min"] > tol["order_max"]:
        msgs.append("tolerances.order_min: must not exceed order_max")
    if msgs:
        raise ConfigError(msgs)
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON at line {exc.lineno}: {exc.msg}"])
    return validate_config(cfg)


# -- results --------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.bound
        return self.value >= self.bound

    def to_json(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound,
                "relation": self.relation, "passed": self.passed}


@dataclass
class Table:
    name: str
    header: List[str]
    rows: List[Sequence[Any]]
    plot: Optional[Tuple[str, str]] = None  # (x column, y column)


@dataclass
class Outcome:
    checks: List[Check] = field(default_factory=list)
    tables: List[Table] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    def extend(self, other: "Outcome", prefix: str = ""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.bound, c.relation))
        for t in other.tables:
            self.tables.append(Table(prefix.replace("/", "_") + t.name, t.header, t.rows, t.plot))
        for k, v in other.details.items():
            self.details[prefix + k] = v

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _neg(x: float) -> float:
    return -x if x else 0.0


def _problem(p: dict) -> ControlProblem:
    return build_problem(p["family"], p.get("params", {}))


def _random_path(rng: np.random.Generator, dim: int, n: int, h: float) -> Path:
    scale = float(np.exp(rng.uniform(-3, 3)))
    if rng.random() < 0.5:
        smp = np.cumsum(rng.normal(size=(n, dim)), axis=0) * scale
    else:
        smp = rng.normal(size=(n, dim)) * scale
    if rng.random() < 0.2:
        smp[-1] = smp[int(rng.integers(n))]
    return Path(smp, h, (n - 1) * h)


# -- functional-props -------------------------------------------------------

def run_functional_props(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    rng = np.random.default_rng(seed)
    out = Outcome()
    h = G["h"]
    dims = P["dims"]
    rows = []
    if "equivalence" in P["checks"]:
        lo = up = math.inf
        for i in range(P["n_paths"]):
            d = dims[i % len(dims)]
            p = _random_path(rng, d, int(rng.integers(1, P["max_nodes"] + 1)), h)
            a, b = equivalence_bound_check(p)
            lo, up = min(lo, a), min(up, b)
        out.checks += [Check("equivalence_lower_slack", lo, _neg(tol["slack"]), ">="),
                       Check("equivalence_upper_slack", up, _neg(tol["slack"]), ">=")]
        rows += [("equivalence_lower", lo), ("equivalence_upper", up)]
    if "subadditivity" in P["checks"]:
        for M in P["M_values"]:
            worst = math.inf
            for i in range(P["n_paths"]):
                d = dims[i % len(dims)]
                n = int(rng.integers(1, P["max_nodes"] + 1))
                p, q = _random_path(rng, d, n, h), _random_path(rng, d, n, h)
                worst = min(worst, quasi_subadditivity_gap(M, p, q))
            out.checks.append(Check(f"subadditivity_gap_M{M:g}", worst, _neg(tol["slack"]), ">="))
            rows.append((f"subadditivity_M{M:g}", worst))
    if "derivatives" in P["checks"]:
        out.extend(_derivative_checks(cfg, rng))
        rows += [(c.name, c.value) for c in out.checks if c.name.startswith("deriv")]
    out.tables.append(Table("slacks", ["quantity", "worst"], rows))
    return out


def _derivative_checks(cfg: dict, rng: np.random.Generator) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    h, fac = G["h"], tol["derivative_factor"]
    worst = {"S_dx": 0.0, "g_dx": 0.0, "g_dt": 0.0, "S_dt": 0.0}
    used = skipped = 0
    horizon = h * (P["max_nodes"] - 1)
    pools = []
    for d in P["dims"]:
        c = CompactClass(0.0, P["M0"], P["mu"], h, G["value_grid"], horizon, d)
        pools.append(lattice_sample(c, int(rng.integers(2 ** 31)), 4 * P["n_derivative_paths"]))
    cursor = [0] * len(pools)
    while used < P["n_derivative_paths"]:
        j = int(rng.integers(len(pools)))
        if cursor[j] + 2 > len(pools[j]):
            raise BudgetError("too few paths away from the sup kink; lower kink_margin")
        p, b = pools[j][cursor[j]], pools[j][cursor[j] + 1]
        cursor[j] += 2
        if p.final_time >= horizon and p.n > 1:
            p = Path(p.samples[:-1], h, p.final_time - h, horizon=horizon)
        k = int(rng.integers(1, p.n + 1))
        if b.n < k:
            skipped += 1
            continue
        anchor = Path(b.samples[:k], h, (k - 1) * h, horizon=horizon)
        delta = p.samples - np.vstack([anchor.samples,
                                       np.repeat(anchor.samples[-1:], p.n - k, axis=0)])
        norms = np.linalg.norm(delta, axis=1)
        if norms.max() - norms[-1] < P["kink_margin"]:
            skipped += 1
            continue
        used += 1
        step = default_vertical_step(p)
        S = S_functional(anchor)
        g = g_functional(anchor)
        num = vertical_gradient_numeric(S.eval, p, step)
        worst["S_dx"] = max(worst["S_dx"], float(np.max(np.abs(num - grad_S(anchor, p)))) / step)
        num = vertical_gradient_numeric(g.eval, p, step)
        worst["g_dx"] = max(worst["g_dx"], float(np.max(np.abs(num))) / step)
        worst["g_dt"] = max(worst["g_dt"],
                            abs(horizontal_derivative_numeric(g.eval, p) - g.dt(p)) / h)
        worst["S_dt"] = max(worst["S_dt"], abs(horizontal_derivative_numeric(S.eval, p)))
    out = Outcome()
    out.checks += [Check("deriv_S_dx_error_over_step", worst["S_dx"], fac),
                   Check("deriv_g_dx_error_over_step", worst["g_dx"], fac),
                   Check("deriv_g_dt_error_over_step", worst["g_dt"], fac),
                   Check("deriv_S_dt_abs", worst["S_dt"], tol["horizontal"])]
    out.details["derivative_paths_used"] = used
    out.details["derivative_paths_skipped_near_kink"] = skipped
    return out


# -- ito-check --------------------------------------------------------------

_JUNCTION, _T_END = 0.5, 1.0


def _traj_A(h: float) -> Trajectory:
    base = Path.from_function(lambda s: 2 * math.sin(2 * math.pi * s), _JUNCTION, h)
    return Trajectory.from_function(
        base, lambda s: 0.5 * math.sin(2 * math.pi * s) + 1.2 * math.cos(3 * s)
        - 1.2 * math.cos(1.5), _T_END)


def _traj_B(h: float) -> Trajectory:
    fn = lambda s: (math.cos(4 * s), s * s * math.sin(5 * s))  # noqa: E731
    return Trajectory.from_function(Path.from_function(fn, _JUNCTION, h), fn, _T_END)


def _ito_functional(name: str, dim: int):
    if name == "cylinder":
        return square_cylinder()
    if name == "running-integral":
        return running_integral_functional()
    if name == "S":
        return S_functional()
    anchor = lambda h: Path.from_function(  # noqa: E731
        lambda s: np.full(dim, math.cos(5 * s)), 0.3, h)
    if name == "g":
        return lambda h: g_functional(anchor(h))
    return lambda h: S_functional(anchor(h), name="S-anchored")


def run_ito_check(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    builders = {"A": (_traj_A, 1), "B": (_traj_B, 2)}
    out = Outcome()
    rows = []
    for fname in P["functionals"]:
        for tid in P["trajectories"]:
            build, dim = builders[tid]
            recs = ito_report(_ito_functional(fname, dim), {tid: build}, G["steps"])
            orders = [r["order_estimate"] for r in recs if r["order_estimate"] is not None]
            const = max(abs(r["residual"]) / r["grid_step"] for r in recs)
            for r in recs:
                rows.append((fname, tid, r["grid_step"], r["residual"], r["order_estimate"]))
            tag = f"{fname}/{tid}"
            if len(orders) < len(recs) - 1:
                out.checks.append(Check(f"{tag}/order_defined", 0.0, 1.0, ">="))
            else:
                out.checks += [Check(f"{tag}/order_min", min(orders), tol["order_min"], ">="),
                               Check(f"{tag}/order_max", max(orders), tol["order_max"], "<=")]
            out.checks.append(Check(f"{tag}/residual_over_h", const, tol["constant"]))
    out.tables.append(Table("ito_residuals", ["functional", "trajectory", "h", "residual",
                                              "order_estimate"], rows, ("h", "residual")))
    return out


# -- ode-solve and estimates ------------------------------------------------

def run_ode_solve(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob = _problem(cfg["problem"])
    h, cg = G["h"], G["control_grid"]
    gamma = Path.constant(P["initial_value"], P["start_time"], h, prob.horizon)
    idx = P["control_indices"]
    k = round((prob.horizon - P["start_time"]) / cg)
    if len(idx) != k or max(idx, default=0) >= len(prob.U):
        raise ConfigError([f"params.control_indices: need {k} indices below {len(prob.U)}"])
    u = ControlSignal.from_indices(prob.U, idx, P["start_time"], cg)
    X, info = solve_state(prob, gamma, u, "picard", tol=tol["picard_tol"], return_info=True)
    Xe = solve_state(prob, gamma, u, "euler")
    gap = float(np.max(np.abs(X.path.samples - Xe.path.samples)))
    out = Outcome()
    out.checks.append(Check("picard_euler_gap", gap, tol["agreement_factor"] * h))
    dims = [f"x{j + 1}" for j in range(prob.dim)]
    rows = [(float(t), *map(float, xp)) for t, xp in zip(X.path.times, X.path.samples)]
    out.tables.append(Table("trajectory", ["time", *dims], rows, ("time", "x1")))
    out.details["picard_iterations"] = info.iterations
    out.details["picard_ratios"] = info.ratios
    return out


def _asymptotic_ratios(info, floor: float = 1e-10) -> List[float]:
    return [r for r, d in zip(info.ratios, info.diffs) if d > floor]


def run_estimates(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    rng = np.random.default_rng(seed)
    T, h, cg = P["horizon"], G["h"], G["control_grid"]
    probs = {f: build_problem(f, {"horizon": T, "gain": P["gain"], "running": "state_abs",
                                  "terminal": "abs"} if f != "constant-field" else
                                 {"horizon": T, "running": "state_abs", "terminal": "abs"})
             for f in P["families"]}
    out = Outcome()
    worst_ratio, worst_agree = 0.0, 0.0
    slack = {"growth": math.inf, "dependence": math.inf, "time_lipschitz": math.inf}
    nodes = round(T / cg)
    for case in range(P["n_cases"]):
        fam = P["families"][case % len(P["families"])]
        prob = probs[fam]
        j1 = int(rng.integers(nodes))
        t1 = j1 * cg
        n1 = round(t1 / h) + 1
        g1 = Path(np.cumsum(rng.normal(scale=0.3, size=(n1, prob.dim)), axis=0), h, t1,
                  horizon=T)
        u = ControlSignal.from_indices(prob.U, rng.integers(len(prob.U), size=nodes - j1), t1, cg)
        X, info = solve_state(prob, g1, u, "picard", tol=tol["picard_tol"], return_info=True)
        Xe = solve_state(prob, g1, u, "euler")
        worst_ratio = max([worst_ratio] + _asymptotic_ratios(info))
        worst_agree = max(worst_agree, float(np.max(np.abs(X.extension - Xe.extension))))
        lhs, rhs = growth_bound(prob, g1, u)
        slack["growth"] = min(slack["growth"], rhs - lhs)
        lhs, rhs = time_lipschitz_gap(prob, g1, u)
        slack["time_lipschitz"] = min(slack["time_lipschitz"], rhs - lhs)
        j2 = int(rng.integers(j1, nodes + 1))
        t2 = j2 * cg
        ext = flat_extend(g1, t2)
        g2 = ext.with_samples(ext.samples + rng.normal(scale=0.05, size=ext.samples.shape))
        lhs, rhs = continuous_dependence_gap(prob, g1, g2.with_horizon(T), u)
        slack["dependence"] = min(slack["dependence"], rhs - lhs)
    out.checks += [Check("picard_ratio_max", worst_ratio, tol["picard_ratio"]),
                   Check("picard_euler_gap", worst_agree, tol["agreement_factor"] * h)]
    for k, v in slack.items():
        out.checks.append(Check(f"{k}_slack", v, _neg(tol["bound_slack"]), ">="))
    rows = []
    for hk in G["oracle_steps"]:
        rows += _oracle_rows(T, hk, P["gain"])
    for name, hk, err in rows:
        out.checks.append(Check(f"oracle_{name}_h{hk:g}", err, tol["oracle_factor"] * hk))
    out.tables.append(Table("oracles", ["oracle", "h", "max_error"], rows, ("h", "max_error")))
    out.details["constants"] = {"C1": constant_C1(1.0, T), "C2": constant_C2(1.0, T),
                                "C3": constant_C3(1.0, T)}
    out.details["constants_by_family"] = {
        f: {"L": p.L, "C1": constant_C1(p.L, T), "C2": constant_C2(p.L, T),
            "C3": constant_C3(p.L, T)} for f, p in probs.items()}
    return out


def _oracle_rows(T: float, h: float, a: float) -> List[tuple]:
    rows = []
    x0, t0, u0 = 0.7, 0.2, 1.0
    gamma = Path.constant([x0], t0, h, T)
    u = ControlSignal.constant(np.array([u0]), t0, T, T - t0)
    s = np.arange(round(t0 / h), round(T / h) + 1) * h
    const = build_problem("constant-field", {"horizon": T, "controls": [u0]})
    X = solve_state(const, gamma, u, "euler").extension[:, 0]
    rows.append(("constant_field", h, float(np.max(np.abs(X - (x0 + u0 * (s - t0)))))))
    fb = build_problem("state-feedback", {"horizon": T, "controls": [u0], "gain": a})
    X = solve_state(fb, gamma, u, "euler").extension[:, 0]
    exact = u0 / a + (x0 - u0 / a) * np.exp(-a * (s - t0))
    rows.append(("exponential_feedback", h, float(np.max(np.abs(X - exact)))))
    return rows


# -- value and DPP ----------------------------------------------------------

def _history(rng: np.random.Generator, t: float, h: float, end, horizon: float,
             scale: float = 0.3) -> Path:
    n = round(t / h) + 1
    end = np.atleast_1d(np.asarray(end, dtype=float))
    smp = end + np.cumsum(rng.normal(scale=scale, size=(n, end.size)), axis=0)[::-1]
    smp = smp - smp[-1] + end
    return Path(smp, h, t, horizon=horizon)


def _value_cell(cfg: dict, problem: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob = _problem(problem)
    rng = np.random.default_rng(seed)
    T, h, cg = prob.horizon, G["h"], G["control_grid"]
    nodes = round(T / cg)
    pairs = []
    for i in range(P["n_pairs"]):
        j1 = int(rng.integers(nodes + 1))
        g = _history(rng, j1 * cg, h, rng.normal(size=prob.dim), T)
        if i % 2 == 0:
            e = g.with_samples(g.samples + rng.normal(scale=P["noise"], size=g.samples.shape))
        else:
            t2 = int(rng.integers(j1, nodes + 1)) * cg
            ext = flat_extend(g, t2)
            e = ext.with_samples(ext.samples + rng.normal(scale=P["noise"],
                                                          size=ext.samples.shape))
        pairs.append((g, e.with_horizon(T)))
    rep = value_regularity_check(prob, pairs, cg, P["search"], P["cap"])
    out = Outcome()
    out.checks += [Check("bound_slack", rep.worst_bound_slack, _neg(tol["bound_slack"]), ">="),
                   Check("lipschitz_slack", rep.worst_lipschitz_slack, _neg(tol["bound_slack"]), ">="),
                   Check("cross_time_slack", rep.worst_cross_slack, _neg(tol["bound_slack"]), ">=")]
    cols = ["pair", "t1", "t2", "V1", "V2", "bound_slack", "lipschitz_slack", "cross_slack"]
    out.tables.append(Table("values", cols, [[r[c] for c in cols] for r in rep.records]))
    out.details["C4"] = rep.C4
    out.details["problem"] = prob.name
    if P["refinement_grids"]:
        out.tables.append(_refinement_table(prob, h, P))
    return out


def _refinement_table(prob: ControlProblem, h: float, P: dict) -> Table:
    # V at one fixed history as the control grid shrinks; reported, no rate asserted
    g = Path.constant(np.full(prob.dim, 0.5), 0.0, h, prob.horizon)
    rows = []
    for step in sorted(P["refinement_grids"], reverse=True):
        k = round(prob.horizon / step)
        search = "exhaustive" if len(prob.U) ** k <= P["cap"] else "greedy-refine"
        v = value(ValueQuery(prob, g, step, search, P["cap"]))[0]
        rows.append([step, k, search, v])
    return Table("control_refinement", ["control_grid", "intervals", "search", "V"], rows,
                 plot=("control_grid", "V"))


def _dpp_cell(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob = _problem(cfg["problem"])
    rng = np.random.default_rng(seed)
    T, h, cg = prob.horizon, G["h"], G["control_grid"]
    out = Outcome()
    rows = []
    worst = 0.0
    for t in P["start_times"]:
        for _ in range(P["n_paths_per_time"]):
            g = _history(rng, t, h, rng.normal(size=prob.dim), T)
            q = ValueQuery(prob, g, cg, "exhaustive", P["cap"])
            k = round((T - t) / cg)
            for tag in P["s_points"]:
                s = {"t": t, "mid": t + (k // 2) * cg, "T": T}[tag]
                r = dpp_residual(q, s)
                worst = max(worst, r)
                rows.append((t, tag, s, r))
    out.checks.append(Check("dpp_residual_max", worst, tol["dpp"]))
    out.tables.append(Table("dpp", ["t", "s_point", "s", "residual"], rows))
    return out


def run_value(cfg: dict, seed: int, jobs: int = 1) -> Outcome:
    return _run_cells(cfg, seed, jobs, "value")


def run_dpp(cfg: dict, seed: int) -> Outcome:
    return _dpp_cell(cfg, seed)


# -- HJB: Markovian comparison, residuals, viscosity ----------------------------

def _compare_cell(cfg: dict, problem: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob = _problem(problem)
    rng = np.random.default_rng(seed)
    T, h, cg = prob.horizon, G["h"], G["control_grid"]
    queries = [_history(rng, t, h, np.full(prob.dim, x), T)
               for t in P["query_times"] for x in P["query_values"]]
    n_x = round((G["x_max"] - G["x_min"]) / G["dx"]) + 1
    axes = [np.linspace(G["x_min"], G["x_max"], n_x)] * prob.dim
    t_grid = np.linspace(0.0, T, round(T / G["dt"]) + 1)
    rep = reduction_crosscheck(prob, queries, cg, axes, t_grid, tol=tol["reduction"],
                               insensitivity_tol=tol["insensitivity"], search=P["search"],
                               seed=seed)
    out = Outcome()
    out.checks += [Check("reduction_gap", rep.max_gap, tol["reduction"]),
                   Check("history_insensitivity", rep.max_insensitivity_gap,
                         tol["insensitivity"])]
    rows = [(r["t"], r["x"][0], r["V"], r["Vbar"], r["V_alt_history"]) for r in rep.records]
    out.tables.append(Table("queries", ["t", "x", "V", "Vbar", "V_alt_history"], rows))
    if prob.dim == 1:
        table = markovian_hjb_solve(prob.reduced, prob.U, axes, t_grid)
        out.tables.append(Table("value_table", ["t", "x", "V"], table.to_csv_rows(),
                                ("x", "V")))
    out.details["problem"] = prob.name
    return out


def _is_bang_bang(prob_cfg: dict) -> bool:
    prob = _problem(prob_cfg)
    p = prob_cfg.get("params", {})
    return (prob_cfg["family"] == "constant-field" and prob.dim == 1
            and p.get("running", "zero") == "zero" and p.get("terminal", "linear") == "linear"
            and sorted(float(u[0]) for u in prob.U) == [-1.0, 1.0])


def _classical(cfg: dict):
    if not _is_bang_bang(cfg["problem"]):
        raise ConfigError(["problem: a classical solution is only known for the bang-bang "
                           "instance (constant-field, running=zero, terminal=linear, "
                           "controls=[-1, 1], dim=1)"])
    prob = _problem(cfg["problem"])
    return prob, bang_bang_classical_solution(prob.horizon)


def run_phjb_residual(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob, v = _classical(cfg)
    c = CompactClass(0.0, P["M0"], P["mu"], G["time_grid"], G["value_grid"], prob.horizon)
    out = Outcome()
    rows, worst = _residual_rows(prob, v, c, seed, P["n_paths"])
    out.checks.append(Check("phjb_residual_max", worst, tol["residual"]))
    out.tables.append(Table("residuals", ["path", "t", "x", "residual"], rows, ("t", "residual")))
    return out


def _residual_rows(prob, v, c: CompactClass, seed: int, count: int):
    rows, worst = [], 0.0
    rng = np.random.default_rng(seed)
    idx = [i for i in c.final_time_indices() if i * c.time_grid < prob.horizon * (1 - 1e-9)]
    k = 0
    while len(rows) < count:
        t = idx[int(rng.integers(len(idx)))] * c.time_grid
        p = lattice_sample(c, seed + k, 1, final_time=t)[0]
        k += 1
        r = phjb_residual(prob, v, p)
        worst = max(worst, abs(r))
        rows.append((len(rows), p.final_time, float(p.end[0]), r))
    return rows, worst


def run_viscosity_check(cfg: dict, seed: int) -> Outcome:
    P, G, tol = cfg["params"], cfg["grids"], cfg["tolerances"]
    prob, v = _classical(cfg)
    T = prob.horizon
    cache: Dict[Tuple[bytes, int], float] = {}

    def w(p: Path) -> float:
        key = (p.samples.tobytes(), p.n)
        if key not in cache:
            cache[key] = value(ValueQuery(prob, p.with_horizon(T), G["time_grid"]))[0]
        return cache[key]

    out = Outcome()
    ladder = mu_ladder(prob)
    classes = [CompactClass(0.0, P["M0"], mu, G["time_grid"], G["value_grid"], T)
               for mu in ladder]
    rows, worst = _residual_rows(prob, v, classes[0], seed, P["n_residual_paths"])
    out.checks.append(Check("phjb_residual_max", worst, tol["residual"]))
    out.tables.append(Table("residuals", ["path", "t", "x", "residual"], rows))
    vrows = []
    n_applicable = 0
    worst_sub, worst_super = math.inf, -math.inf
    for c in classes:
        anchors = [p for p in lattice_sample(c, seed, 20 * P["n_anchors"])
                   if p.final_time < T * (1 - 1e-9) and sup_norm(p) < P["M0"]][:P["n_anchors"]]
        for a in anchors:
            for mode, sign in (("sub", 1.0), ("super", -1.0)):
                phi = penalized_test_functional(v, a, sign)
                rep = viscosity_test(prob, w, phi, c, mode, tol["viscosity"],
                                     max_nodes=P["max_nodes"], seed=seed)
                rec = rep.to_record()
                vrows.append((c.mu, mode, a.final_time, float(a.end[0]), rec["touching_time"],
                              rec["touching_gap"], rec["inequality_value"], rec["applicable"],
                              rec["passed"]))
                if rep.applicable:
                    n_applicable += 1
                    if mode == "sub":
                        worst_sub = min(worst_sub, rep.inequality_value)
                    else:
                        worst_super = max(worst_super, rep.inequality_value)
    out.checks += [Check("viscosity_sub_min", worst_sub, _neg(tol["viscosity"]), ">="),
                   Check("viscosity_super_max", worst_super, tol["viscosity"]),
                   Check("viscosity_applicable_cases", float(n_applicable),
                         float(len(classes) * 2), ">=")]
    out.tables.append(Table("viscosity", ["mu", "mode", "anchor_t", "anchor_x", "touching_t",
                                          "touching_gap", "inequality", "applicable", "passed"],
                            vrows))
    term = terminal_check(prob, w, classes[0], seed, P["n_terminal_paths"], tol["terminal"])
    out.checks.append(Check("terminal_gap", term.max_gap, tol["terminal"]))
    out.details["mu_ladder"] = ladder
    out.details["M0"] = P["M0"]
    out.details["lattice"] = {"time_grid": G["time_grid"], "value_grid": G["value_grid"]}
    return out


# -- dispatch ----------------------------------------------------------------

def _cell(kind: str, cfg: dict, problem: dict, seed: int) -> Outcome:
    if kind == "value":
        return _value_cell(cfg, problem, seed)
    return _compare_cell(cfg, problem, seed)


def _cell_job(args) -> Outcome:
    return _cell(*args)


def _run_cells(cfg: dict, seed: int, jobs: int, kind: str) -> Outcome:
    probs = cfg["problems"]
    args = [(kind, cfg, p, seed + i) for i, p in enumerate(probs)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as ex:
            results = list(ex.map(_cell_job, args))
    else:
        results = [_cell_job(a) for a in args]
    out = Outcome()
    for i, (p, r) in enumerate(zip(probs, results)):
        out.extend(r, prefix=f"{i}:{p['family']}/")
    return out


RUNNERS: Dict[str, Callable[..., Outcome]] = {
    "functional-props": run_functional_props,
    "ito-check": run_ito_check,
    "ode-solve": run_ode_solve,
    "estimates": run_estimates,
    "value": run_value,
    "dpp-check": run_dpp,
    "hjb-compare": lambda cfg, seed, jobs=1: _run_cells(cfg, seed, jobs, "hjb-compare"),
    "viscosity-check": run_viscosity_check,
    "phjb-residual": run_phjb_residual,
}


def run(cfg: dict, seed: Optional[int] = None, jobs: int = 1) -> Outcome:
    """Validate ``cfg`` and run it; ``seed`` overrides the config seed."""
    cfg = validate_config(cfg)
    s = cfg["seed"] if seed is None else seed
    fn = RUNNERS[cfg["kind"]]
    if cfg["kind"] in ("value", "hjb-compare"):
        return fn(cfg, s, jobs)
    return fn(cfg, s)


# -- artifacts ----------------------------------------------------------------

def _fmt(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _write_atomic(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(t: Table) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(t.header)
    for r in t.rows:
        wr.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _gnuplot(t: Table) -> str:
    x, y = t.plot
    xi, yi = t.header.index(x) + 1, t.header.index(y) + 1
    return (f"set datafile separator ','\nset key autotitle columnhead\n"
            f"set xlabel '{x}'\nset ylabel '{y}'\n"
            f"plot '{t.name}.csv' using {xi}:{yi} with points\n")


def summary_text(kind: str, outcome: Outcome) -> str:
    lines = [f"{kind}: {'PASS' if outcome.passed else 'FAIL'}"]
    for c in outcome.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value!r} {c.relation} "
                     f"{c.bound!r}")
    return "\n".join(lines) + "\n"


def write_artifacts(out_dir: str, cfg: dict, seed: int, outcome: Outcome,
                    wall_time: float) -> List[str]:
    """Write results, tables, summary and manifest; return the written file names."""
    os.makedirs(out_dir, exist_ok=True)
    files = []
    results = {"kind": cfg["kind"], "seed": seed, "passed": outcome.passed,
               "checks": [c.to_json() for c in outcome.checks],
               "details": outcome.details, "tolerances": cfg["tolerances"],
               "grids": cfg["grids"]}
    _write_atomic(os.path.join(out_dir, "results.json"),
                  json.dumps(_jsonable(results), indent=2, sort_keys=True) + "\n")
    files.append("results.json")
    for t in outcome.tables:
        _write_atomic(os.path.join(out_dir, f"{t.name}.csv"), _csv_text(t))
        files.append(f"{t.name}.csv")
        if t.plot:
            _write_atomic(os.path.join(out_dir, f"{t.name}.gp"), _gnuplot(t))
            files.append(f"{t.name}.gp")
    _write_atomic(os.path.join(out_dir, "summary.txt"), summary_text(cfg["kind"], outcome))
    files.append("summary.txt")
    manifest = {"config": cfg, "seed": seed, "version": __version__,
                "wall_time_s": wall_time, "files": sorted(files)}
    _write_atomic(os.path.join(out_dir, "manifest.json"),
                  json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return files + ["manifest.json"]


def run_to_dir(cfg: dict, out_dir: str, seed: Optional[int] = None,
               jobs: int = 1) -> Tuple[int, Outcome]:
    """Run ``cfg``, write artifacts, return (exit code, outcome)."""
    t0 = time.perf_counter()
    outcome = run(cfg, seed, jobs)
    s = cfg["seed"] if seed is None else seed
    write_artifacts(out_dir, cfg, s, outcome, time.perf_counter() - t0)
    return (EXIT_PASS if outcome.passed else EXIT_FAIL), outcome
