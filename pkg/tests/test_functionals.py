import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathhjb.calculus import horizontal_derivative_numeric, vertical_gradient_numeric
from pathhjb.errors import ParameterError
from pathhjb.functionals import (EQUIV_LOWER, EQUIV_UPPER, S_functional, equivalence_bound_check,
                                 eval_g, eval_S, eval_upsilon, g_functional, grad_S,
                                 grad_upsilon, quasi_subadditivity_gap, upsilon_pair)
from pathhjb.paths import Path, flat_extend, sup_norm

from conftest import H, paths


def test_eval_g_examples():
    a = Path([0.0, 1.0, 0.5], H)
    assert eval_g(a, a) == 0.0
    ext = flat_extend(a, 0.5)
    assert eval_g(a, ext) == 0.0
    c = Path.constant(0.7, 0.3, H)
    assert eval_g(c, c) == 0.0
    one, zero = Path.constant(1.0, 2.0, H), Path.constant(0.0, 2.0, H)
    assert eval_g(zero, one) == pytest.approx(2.0, rel=1e-12)


def test_eval_S_examples():
    a = Path([0.5, -1.0, 2.0], H)
    assert eval_S(a, a) == 0.0
    assert eval_S(None, Path.constant(-3.0, 0.4, H)) == 0.0
    assert eval_S(None, Path([2.0, 1.0], H)) == pytest.approx(2.25)


def test_grad_S_examples():
    assert np.all(grad_S(None, Path.constant(0.0, 0.3, H)) == 0.0)
    assert grad_S(None, Path([2.0, 1.0], H))[0] == pytest.approx(-3.0)
    assert np.all(grad_S(None, Path([1.0, -2.0], H)) == 0.0)


def test_upsilon_examples():
    assert eval_upsilon(2, Path.constant(1.5, 0.3, H)) == pytest.approx(2 * 1.5 ** 2)
    assert eval_upsilon(3, Path.constant(0.0, 0.3, H)) == 0.0
    with pytest.raises(ParameterError):
        eval_upsilon(0, Path([1.0], H))


@given(paths())
def test_upsilon_one_is_equivalent_to_sup(p):
    m2 = sup_norm(p) ** 2
    v = eval_upsilon(1, p)
    assert EQUIV_LOWER * m2 - 1e-12 <= v <= EQUIV_UPPER * m2 + 1e-12


def test_equivalence_examples():
    lo, up = equivalence_bound_check(Path.constant(2.0, 0.3, H))
    assert lo == pytest.approx(4 * (1 - EQUIV_LOWER))
    assert up == pytest.approx(4.0)
    assert equivalence_bound_check(Path.constant(0.0, 0.3, H)) == (0.0, 0.0)


def test_equivalence_lower_bound_has_room():
    # with r = e^2 / m^2 the middle term is m^2 ((1 - r)^2 + r) >= 3/4 m^2,
    # attained at r = 1/2; the stated constant (3 - sqrt 5)/2 is below that
    p = Path([1.0, math.sqrt(0.5)], H)
    lo, _ = equivalence_bound_check(p)
    assert lo == pytest.approx(0.75 - EQUIV_LOWER, abs=1e-12)


def test_subadditivity_examples():
    c = Path.constant(1.25, 0.3, H)
    assert quasi_subadditivity_gap(2, c, c) == pytest.approx(0.0, abs=1e-12)
    p = Path([0.0, 1.0, -0.5], H)
    assert quasi_subadditivity_gap(3, p, -p) == pytest.approx(4 * eval_upsilon(3, p))
    with pytest.raises(ParameterError):
        quasi_subadditivity_gap(1.5, p, p)


@given(st.integers(1, 10), st.sampled_from([2.0, 3.0, 10.0]), st.data())
@settings(max_examples=200)
def test_subadditivity_property(n, M, data):
    p = data.draw(paths(n=n, dim=2))
    q = data.draw(paths(n=n, dim=2))
    assert quasi_subadditivity_gap(M, p, q) >= -1e-12


def test_upsilon_pair_symmetric():
    g = Path([0.0, 1.0], H)
    e = Path([0.5, -1.0, 2.0, 0.0], H)
    assert upsilon_pair(2, g, e) == upsilon_pair(2, e, g)


def test_S_horizontal_derivative_vanishes():
    a = Path([0.0, 0.4], H)
    p = Path([0.0, 2.0, -1.0, 0.3], H)
    assert horizontal_derivative_numeric(S_functional(a).eval, p) == 0.0


@given(paths(dim=2, n=6))
@settings(max_examples=100)
def test_grad_S_matches_numeric_off_kink(p):
    norms = np.linalg.norm(p.samples, axis=1)
    gap = norms.max() - norms[-1]
    if 0 < gap < 0.05:
        return
    step = 1e-5 * (1 + sup_norm(p))
    num = vertical_gradient_numeric(lambda q: eval_S(None, q), p, step)
    assert np.allclose(num, grad_S(None, p), atol=10 * step + 1e-7)


@pytest.mark.parametrize("vals", [[0.0, 2.0, 1.0, 2.0], [0.5, -1.5, 1.5], [0.0, 0.0]])
def test_grad_S_at_the_sup_kink_from_each_side(vals):
    # end value attains the sup: S has zero derivative, and each one-sided quotient is O(eps)
    p = Path(vals, H)
    assert np.all(grad_S(None, p) == 0.0)
    s0 = eval_S(None, p)
    for eps in (1e-3, 1e-4):
        for sign in (1.0, -1.0):
            q = p.with_samples(np.vstack([p.samples[:-1], p.samples[-1:] + sign * eps]))
            assert abs(eval_S(None, q) - s0) / eps <= 10 * eps


def test_grad_upsilon_and_g_functional():
    p = Path([0.0, 2.0, 1.0], H)
    assert grad_upsilon(2, p)[0] == pytest.approx(-3.0 + 4.0)
    g = g_functional()
    assert g.dt(p) == 1.0 and np.all(g.dx(p) == 0.0)
