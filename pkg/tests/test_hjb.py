import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathhjb.calculus import SmoothFunctional
from pathhjb.control import ControlProblem
from pathhjb.errors import ContractError, InputError, RefinementError
from pathhjb.hjb import (bang_bang_classical_solution, find_touching_max, hamiltonian,
                         markovian_hjb_solve, mu_ladder, penalized_test_functional,
                         phjb_residual, reduction_crosscheck, terminal_check, viscosity_test)
from pathhjb.paths import CompactClass, Path, d_infinity, lattice_sample, sup_norm
from pathhjb.problems import bang_bang, build_problem, eikonal
from pathhjb.value import ValueQuery, value

from conftest import paths

T = 1.0


def test_hamiltonian_examples():
    bb = bang_bang(T)
    g = Path([0.3], 0.1)
    assert hamiltonian(bb, g, 2.0) == (-2.0, 0)
    assert hamiltonian(bb, g, -0.5) == (-0.5, 1)
    assert hamiltonian(bb, g, 0.0) == (0.0, 0)
    single = build_problem("state-feedback", {"controls": [0.5], "running": "state_abs"})
    assert hamiltonian(single, g, 2.0)[0] == pytest.approx(2.0 * (-0.3 + 0.5) + 0.3)
    sq = build_problem("constant-field", {"controls": [-1, 0, 1], "running": "control_sq"})
    assert hamiltonian(sq, g, 0.5) == (0.0, 1)


PROB = build_problem("delay-feedback", {"controls": [-1, 0, 1], "running": "state_abs",
                                        "dim": 2, "gain": 1.0})
VEC = st.lists(st.floats(-10, 10), min_size=2, max_size=2)


@given(paths(dim=2), VEC, VEC)
@settings(max_examples=100)
def test_hamiltonian_concave_and_lipschitz(g, p, q):
    p, q = np.array(p), np.array(q)
    hp, hq = hamiltonian(PROB, g, p)[0], hamiltonian(PROB, g, q)[0]
    mid = hamiltonian(PROB, g, (p + q) / 2)[0]
    assert mid >= (hp + hq) / 2 - 1e-12 * (1 + abs(hp) + abs(hq))
    bound = PROB.L * (1 + sup_norm(g)) * np.linalg.norm(p - q)
    assert abs(hp - hq) <= bound + 1e-9


def test_phjb_residual_examples():
    bb = bang_bang(T)
    v = bang_bang_classical_solution(T)
    g = Path([0.0, 0.4, -0.2], 0.1, horizon=T)
    assert phjb_residual(bb, v, g) == 0.0
    const = SmoothFunctional(lambda p: 3.0, lambda p: 0.0, lambda p: np.zeros(p.dim))
    assert phjb_residual(bb, const, g) == 0.0
    one = build_problem("constant-field", {"running": "one"})
    assert phjb_residual(one, const, g) == 1.0
    with pytest.raises(ContractError):
        phjb_residual(bb, SmoothFunctional(lambda p: 0.0), g)


def test_phjb_residual_on_class_paths():
    bb = bang_bang(T)
    v = bang_bang_classical_solution(T)
    c = CompactClass(0.0, 2.0, 1.0, 0.05, 0.05, T)
    ps = [p for p in lattice_sample(c, 0, 150) if p.final_time < T][:100]
    assert len(ps) == 100
    assert max(abs(phjb_residual(bb, v, p)) for p in ps) <= 1e-12


def test_terminal_check_examples():
    bb = bang_bang(T)
    c = CompactClass(0.0, 1.0, 4.0, 0.25, 0.25, T)
    assert terminal_check(bb, bb.phi, c).max_gap == 0.0
    rep = terminal_check(bb, lambda p: bb.phi(p) + 1, c)
    assert rep.max_gap == pytest.approx(1.0) and not rep.passed
    w = lambda p: value(ValueQuery(bb, p.with_horizon(T), 0.25))[0]  # noqa: E731
    assert terminal_check(bb, w, c, count=20).passed


CLS = CompactClass(0.0, 1.0, 2.0, 0.25, 0.5, T)


def test_touching_examples():
    phi = bang_bang_classical_solution(T)
    tp = find_touching_max(phi, phi, CLS)
    assert tp.gap == 0.0 and tp.path.n == 1 and tp.path.end[0] == -1.0
    fixed = Path([0.0, 0.5, 0.5], 0.25, horizon=T)
    w = lambda p: phi(p) - d_infinity(p, fixed) ** 2  # noqa: E731
    tp = find_touching_max(w, phi, CLS)
    assert np.array_equal(tp.path.samples, fixed.samples)
    tp = find_touching_max(lambda p: -1.0 if p.n != 2 or p.end[0] != 0.5 else 0.0,
                           SmoothFunctional(lambda p: 0.0), CLS)
    assert tp.path.n == 2 and tp.path.end[0] == 0.5


def test_touching_falls_back_to_sampling():
    c = CompactClass(0.0, 1.0, 2.0, 0.1, 0.5, T)
    tp = find_touching_max(lambda p: -abs(float(p.end[0])), SmoothFunctional(lambda p: 0.0),
                           c, max_nodes=6, count=20)
    assert tp.sampled_only and abs(tp.gap) <= 1e-12


def _bb_value():
    bb = bang_bang(T)
    cache = {}

    def w(p):
        key = (p.samples.tobytes(), p.n)
        if key not in cache:
            cache[key] = value(ValueQuery(bb, p.with_horizon(T), 0.25))[0]
        return cache[key]
    return bb, w


@pytest.mark.parametrize("mode,sign", [("sub", 1.0), ("super", -1.0)])
def test_viscosity_classical_case(mode, sign):
    bb, w = _bb_value()
    v = bang_bang_classical_solution(T)
    anchor = Path([0.0, 0.5, 0.0], 0.25, horizon=T)
    for mu in mu_ladder(bb):
        c = CLS.with_mu(mu)
        rep = viscosity_test(bb, w, penalized_test_functional(v, anchor, sign), c, mode)
        assert rep.applicable and rep.passed
        assert np.array_equal(rep.touching_path.samples, anchor.samples)
        assert rep.inequality_value == pytest.approx(0.0, abs=1e-12)


def test_viscosity_self_touching_equals_residual():
    bb, _ = _bb_value()
    v = bang_bang_classical_solution(T)
    # M0 off the value lattice, so the first (tied) touching path is interior
    c = CompactClass(0.0, 1.2, 2.0, 0.25, 0.5, T)
    rep = viscosity_test(bb, v, v, c, "sub")
    assert rep.applicable and rep.touching_gap == 0.0
    assert rep.inequality_value == pytest.approx(phjb_residual(bb, v, rep.touching_path))


def test_viscosity_time_perturbation_margin():
    bb, w = _bb_value()
    v = bang_bang_classical_solution(T)
    eps = 0.1
    tilt = SmoothFunctional(lambda p: eps * p.final_time, lambda p: eps,
                            lambda p: np.zeros(p.dim))
    anchor = Path([0.0, 0.5], 0.25, horizon=T)
    up = lambda p: w(p) + eps * p.final_time  # noqa: E731
    rep = viscosity_test(bb, up, penalized_test_functional(v + tilt, anchor), CLS, "sub")
    assert rep.inequality_value == pytest.approx(eps)
    down = lambda p: w(p) - eps * p.final_time  # noqa: E731
    rep = viscosity_test(bb, down, penalized_test_functional(v + tilt.scaled(-1), anchor),
                         CLS, "sub")
    assert rep.inequality_value == pytest.approx(-eps) and not rep.passed


def test_viscosity_shift_invariance():
    bb, w = _bb_value()
    v = bang_bang_classical_solution(T)
    anchor = Path([0.0, 0.5], 0.25, horizon=T)
    phi = penalized_test_functional(v, anchor)
    a = viscosity_test(bb, w, phi, CLS, "sub")
    b = viscosity_test(bb, w, phi.shifted(2.5), CLS, "sub")
    assert np.array_equal(a.touching_path.samples, b.touching_path.samples)
    assert a.inequality_value == b.inequality_value
    assert b.touching_gap == pytest.approx(a.touching_gap - 2.5)


def test_viscosity_not_applicable():
    bb, w = _bb_value()
    v = bang_bang_classical_solution(T)
    at_T = Path([0.0, 0.5, 0.5, 0.5, 0.0], 0.25, horizon=T)
    rep = viscosity_test(bb, w, penalized_test_functional(v, at_T), CLS, "sub")
    assert not rep.applicable and rep.passed is None
    edge = Path([0.5, 1.0], 0.25, horizon=T)
    rep = viscosity_test(bb, w, penalized_test_functional(v, edge, -1.0), CLS, "super")
    assert not rep.applicable and "M0" in rep.reason


def test_markovian_closed_forms():
    x = np.linspace(-2.5, 2.5, 501)
    t = np.linspace(0, T, 101)
    bb = bang_bang(T)
    tab = markovian_hjb_solve(bb.reduced, bb.U, [x], t)
    for tq, xq in ((0.0, 0.3), (0.5, -1.2), (0.9, 0.05)):
        assert tab.lookup(tq, xq) == pytest.approx(xq - (T - tq), abs=1e-9)
    ek = eikonal(T)
    tab = markovian_hjb_solve(ek.reduced, ek.U, [x], t)
    for tq, xq in ((0.0, 0.3), (0.5, -1.2), (0.2, 0.9)):
        assert tab.lookup(tq, xq) == pytest.approx(max(abs(xq) - (T - tq), 0), abs=2e-2)
    tr = build_problem("constant-field", {"controls": [0.5], "terminal": "abs"})
    tab = markovian_hjb_solve(tr.reduced, tr.U, [x], t)
    assert tab.lookup(0.2, -0.7) == pytest.approx(abs(-0.7 + 0.5 * 0.8), abs=1e-2)
    rows = tab.to_csv_rows()
    assert len(rows) == 101 * 501 and len(rows[0]) == 3


def test_markovian_refinement_error():
    bb = bang_bang(T)
    with pytest.raises(RefinementError):
        markovian_hjb_solve(bb.reduced, bb.U, [np.linspace(-1, 1, 201)], np.linspace(0, T, 3))


def test_reduction_crosscheck():
    bb = bang_bang(T)
    rng = np.random.default_rng(0)
    queries = [Path(np.r_[rng.normal(size=3), 0.3], 0.1, horizon=T),
               Path.constant(-0.5, 0.5, 0.1, T)]
    rep = reduction_crosscheck(bb, queries, 0.1, [np.linspace(-2.5, 2.5, 501)],
                               np.linspace(0, T, 101))
    assert rep.passed and rep.max_gap <= 1e-2 and rep.max_insensitivity_gap <= 1e-6


def test_reduction_rejects_path_dependence():
    pd = build_problem("delay-feedback", {"running": "sup"})
    with pytest.raises(InputError):
        reduction_crosscheck(pd, [Path([0.0, 1.0], 0.1, horizon=1.0)], 0.1,
                             [np.linspace(-2, 2, 41)], np.linspace(0, 1, 11))
    bb = bang_bang(T)
    fake = ControlProblem(bb.F, lambda p, u: sup_norm(p), bb.phi, bb.L, bb.U, T,
                          reduced=bb.reduced)
    with pytest.raises(InputError):
        reduction_crosscheck(fake, [Path([0.0, 2.0, 0.0], 0.1, horizon=T)], 0.1,
                             [np.linspace(-2, 2, 41)], np.linspace(0, 1, 11))
