import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathhjb.control import (ControlProblem, ControlSignal, constant_C1, constant_C2,
                             constant_C3, constant_C4, continuous_dependence_gap, cost,
                             growth_bound, hypothesis_violation, solve_state, time_lipschitz_gap)
from pathhjb.errors import GridAlignmentError, ParameterError, SolverError
from pathhjb.paths import Path, sup_norm
from pathhjb.problems import FAMILIES, bang_bang, build_problem, catalog

T = 1.0


def const_problem(u_set=(1.0,), q=lambda p, u: 0.0, phi=lambda p: 0.0):
    U = tuple(np.array([u]) for u in u_set)
    return ControlProblem(lambda p, u: u, q, phi, 1.0, U, T)


def test_constants():
    assert constant_C1(1.0, 1.0) == pytest.approx(2 * math.e)
    assert constant_C2(1.0, 1.0) == pytest.approx((2 + 2 * math.e) * math.e)
    assert constant_C3(1.0, 1.0) == pytest.approx(1 + 2 * math.e)
    assert constant_C4(1.0, 1.0) == pytest.approx(4 * constant_C2(1, 1) + 1 + 2 * math.e)


@pytest.mark.parametrize("method", ["euler", "picard"])
def test_constant_field_is_exact(method):
    prob = const_problem((0.5,))
    g = Path.constant(0.2, 0.3, 0.05, T)
    u = ControlSignal.constant(prob.U[0], 0.3, T, 0.1)
    X = solve_state(prob, g, u, method)
    s = X.path.times[X.start_index:]
    assert np.allclose(X.extension[:, 0], 0.2 + 0.5 * (s - 0.3), atol=1e-14)


def test_exponential_feedback_first_order():
    prob = build_problem("state-feedback", {"horizon": T, "controls": [0.0]})
    errs = []
    for h in (0.01, 0.005):
        g = Path.constant(1.0, 0.0, h, T)
        u = ControlSignal.constant(prob.U[0], 0.0, T, 0.5)
        X = solve_state(prob, g, u, "euler")
        errs.append(float(np.max(np.abs(X.extension[:, 0] - np.exp(-X.path.times)))))
    assert errs[0] <= 5 * 0.01 and errs[1] <= 5 * 0.005
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_running_integral_picard_matches_euler():
    prob = build_problem("running-integral", {"horizon": T})
    h, tol = 0.01, 1e-12
    g = Path.from_function(lambda s: math.cos(3 * s), 0.25, h, T)
    u = ControlSignal.from_indices(prob.U, [0, 1, 1], 0.25, 0.25)
    Xp, info = solve_state(prob, g, u, "picard", tol=tol, return_info=True)
    Xe = solve_state(prob, g, u, "euler")
    assert np.max(np.abs(Xp.extension - Xe.extension)) <= 10 * tol
    assert max(r for r, d in zip(info.ratios, info.diffs) if d > 1e-10) <= 0.55


def test_picard_failure_reports_ratio():
    prob = build_problem("state-feedback", {"horizon": T})
    g = Path.constant(1.0, 0.0, 0.05, T)
    u = ControlSignal.constant(prob.U[0], 0.0, T, 0.25)
    with pytest.raises(SolverError) as exc:
        solve_state(prob, g, u, "picard", max_iter=3)
    assert exc.value.last_ratio is not None


def test_control_must_cover_and_align():
    prob = const_problem()
    g = Path.constant(0.0, 0.2, 0.1, T)
    with pytest.raises(ParameterError):
        solve_state(prob, g, ControlSignal.constant(prob.U[0], 0.2, 0.6, 0.1))
    with pytest.raises(GridAlignmentError):
        ControlSignal.constant(prob.U[0], 0.0, 1.0, 0.3)


def test_causality():
    prob = build_problem("delay-feedback", {"horizon": T})
    g = Path.from_function(lambda s: math.sin(5 * s), 0.2, 0.05, T)
    a = ControlSignal.from_indices(prob.U, [0, 1, 0, 1], 0.2, 0.2)
    b = ControlSignal.from_indices(prob.U, [0, 1, 1, 0], 0.2, 0.2)
    Xa, Xb = solve_state(prob, g, a, "euler"), solve_state(prob, g, b, "euler")
    k = round(0.6 / 0.05)
    assert np.array_equal(Xa.path.samples[:k + 1], Xb.path.samples[:k + 1])
    assert not np.array_equal(Xa.path.samples, Xb.path.samples)


def test_growth_examples():
    zero = ControlProblem(lambda p, u: np.zeros(1), lambda p, u: 0.0, lambda p: 0.0, 1.0,
                          (0.0,), T)
    g0 = Path.constant(0.0, 0.0, 0.1, T)
    u = ControlSignal.constant(0.0, 0.0, T, 0.5)
    obs, bound = growth_bound(zero, g0, u)
    assert obs == 0.0 and bound > 0
    prob = const_problem((1.0,))
    g = Path([0.5, -0.3], 0.1, horizon=T)
    obs, bound = growth_bound(prob, g, ControlSignal.constant(prob.U[0], 0.1, T, 0.1))
    assert obs <= sup_norm(g) + prob.L * T <= bound
    fb = build_problem("state-feedback", {"horizon": T, "controls": [0.0]})
    g = Path.constant(0.8, 0.0, 0.05, T)
    obs, bound = growth_bound(fb, g, ControlSignal.constant(fb.U[0], 0.0, T, 0.5))
    assert obs <= 0.8 <= bound


def test_continuous_dependence_examples():
    prob = const_problem((1.0, -1.0))
    g = Path.from_function(lambda s: s * s, 0.4, 0.1, T)
    u = ControlSignal.from_indices(prob.U, [0, 1, 0], 0.4, 0.2)
    assert continuous_dependence_gap(prob, g, g, u)[0] == 0.0
    shifted = g.with_samples(g.samples + 0.3)
    lhs, rhs = continuous_dependence_gap(prob, g, shifted, u)
    assert lhs == pytest.approx(0.3) and lhs <= rhs


@given(st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_continuous_dependence_random(seed):
    rng = np.random.default_rng(seed)
    prob = build_problem("delay-feedback", {"horizon": T, "gain": 1.0})
    g1 = Path(rng.normal(size=(5, 1)), 0.1, 0.4, horizon=T)
    g2 = Path(rng.normal(size=(7, 1)), 0.1, 0.6, horizon=T)
    u = ControlSignal.from_indices(prob.U, rng.integers(2, size=3), 0.4, 0.2)
    lhs, rhs = continuous_dependence_gap(prob, g1, g2, u)
    assert lhs <= rhs


def test_time_lipschitz_examples():
    zero = ControlProblem(lambda p, u: np.zeros(1), lambda p, u: 0.0, lambda p: 0.0, 1.0,
                          (0.0,), T)
    g = Path.constant(0.4, 0.2, 0.1, T)
    assert time_lipschitz_gap(zero, g, ControlSignal.constant(0.0, 0.2, T, 0.2))[0] == 0.0
    prob = const_problem((0.7,))
    r, b = time_lipschitz_gap(prob, g, ControlSignal.constant(prob.U[0], 0.2, T, 0.2))
    assert r == pytest.approx(0.7) and r <= b
    fb = build_problem("state-feedback", {"horizon": T, "controls": [0.0]})
    r, b = time_lipschitz_gap(fb, g, ControlSignal.constant(fb.U[0], 0.2, T, 0.2))
    assert r <= 0.4 + 1e-12 and 0.4 <= b


def test_cost_examples():
    prob = const_problem((1.0,), q=lambda p, u: 1.0)
    g = Path.constant(0.0, 0.3, 0.1, T)
    assert cost(prob, g, ControlSignal.constant(prob.U[0], 0.3, T, 0.1)) == pytest.approx(0.7)
    bb = bang_bang(T)
    g = Path.constant(0.25, 0.3, 0.1, T)
    assert cost(bb, g, ControlSignal.constant(bb.U[1], 0.3, T, 0.1)) == pytest.approx(0.95)
    sq = build_problem("constant-field", {"horizon": T, "running": "control_sq",
                                          "terminal": "zero"})
    u = ControlSignal.from_indices(sq.U, [0, 1] * 5, 0.0, 0.1)
    g0 = Path.constant(0.0, 0.0, 0.05, T)
    assert cost(sq, g0, u) == pytest.approx(1.0)


def test_hypothesis_violation_flags_bad_coefficients():
    ok = build_problem("state-feedback", {"horizon": T})
    paths = [Path([0.0, 1.0], 0.1), Path([0.5, 1.5], 0.1), Path([2.0, -1.0], 0.1)]
    assert hypothesis_violation(ok, paths, paths) == 0.0
    bad = ControlProblem(lambda p, u: 5 * p.end + u, lambda p, u: 0.0, lambda p: 0.0, 1.0,
                         ok.U, T)
    assert hypothesis_violation(bad, paths) > 0


def test_catalog_and_builder():
    names = {f["family"] for f in catalog()}
    assert {"constant-field", "state-feedback", "delay-feedback", "running-integral"} <= names
    assert all("params" in f and "criteria" in f for f in catalog())
    with pytest.raises(ParameterError):
        build_problem("nope")
    with pytest.raises(ParameterError):
        build_problem("constant-field", {"bogus": 1})
    assert set(FAMILIES) == names
