"""Path-dependent HJB: classical residual, Markovian baseline and viscosity touching tests.

    python3 demos/hjb_checks.py
"""
import numpy as np

from pathhjb.hjb import (bang_bang_classical_solution, markovian_hjb_solve, mu_ladder,
                         penalized_test_functional, phjb_residual, reduction_crosscheck,
                         viscosity_test)
from pathhjb.paths import CompactClass, Path
from pathhjb.problems import bang_bang, eikonal
from pathhjb.value import ValueQuery, value

T = 1.0
bb = bang_bang(T)
v = bang_bang_classical_solution(T)   # V(g) = g(t) - (T - t)

g = Path([0.0, 0.4, 0.2], 0.25, horizon=T)
print("PHJB residual of the closed form:", phjb_residual(bb, v, g))

# semi-Lagrangian table for the state-only eikonal problem
x = np.linspace(-2.5, 2.5, 501)
t = np.linspace(0, T, 101)
ek = eikonal(T)
tab = markovian_hjb_solve(ek.reduced, ek.U, [x], t)
for tq, xq in ((0.2, 0.9), (0.5, -0.6), (0.8, 0.0)):
    print(f"Vbar({tq}, {xq}) = {tab.lookup(tq, xq):.4f}  exact {max(abs(xq) - (T - tq), 0):.4f}")

# path-space V against the table; history must not matter
queries = [Path([0.3, -0.2, 0.9], 0.1, horizon=T), Path.constant(-0.6, 0.5, 0.1, T)]
rep = reduction_crosscheck(ek, queries, 0.1, [x], t)
print(f"reduction gap {rep.max_gap:.2e}, history gap {rep.max_insensitivity_gap:.2e}")

# viscosity tests: touch computed V from above and below with penalized test functionals
cache = {}


def w(p):
    key = (p.samples.tobytes(), p.n)
    if key not in cache:
        cache[key] = value(ValueQuery(bb, p.with_horizon(T), 0.25))[0]
    return cache[key]


cls = CompactClass(0.0, 1.0, 2.0, 0.25, 0.5, T)
anchor = Path([0.0, 0.5, 0.0], 0.25, horizon=T)
for mu in mu_ladder(bb):
    for mode, sign in (("sub", 1.0), ("super", -1.0)):
        r = viscosity_test(bb, w, penalized_test_functional(v, anchor, sign), cls.with_mu(mu), mode)
        print(f"mu={mu:6.2f} {mode:5s} applicable={r.applicable} value={r.inequality_value:+.1e} "
              f"passed={r.passed}")
