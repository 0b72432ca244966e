"""Sampled paths, the d_inf metric and the S / Upsilon functionals.

    python3 demos/paths_and_functionals.py
"""
import math

from pathhjb.functionals import (equivalence_bound_check, eval_S, eval_upsilon, grad_S,
                                 quasi_subadditivity_gap)
from pathhjb.paths import (CompactClass, Path, d_infinity, flat_extend, lattice_sample, sup_norm,
                           vertical_bump)

h = 0.05

# two paths of different lengths
g = Path.from_function(lambda s: math.sin(4 * s), 0.5, h, horizon=1.0)
e = Path.from_function(lambda s: 0.5 * s, 0.8, h, horizon=1.0)
print("||g|| =", sup_norm(g))
print("d_inf(g, e) =", d_infinity(g, e))

# the flat extension of g up to 0.8 is what d_inf compares with e
gx = flat_extend(g, 0.8)
print("flat extension keeps the end value:", gx.samples[-1, 0], "==", g.samples[-1, 0])

# a vertical bump makes a cadlag path
b = vertical_bump(g, 0.3)
print("bumped end:", b.samples[-1, 0], "continuity:", b.continuity)

# S and its vertical gradient
print("S(g) =", eval_S(None, g), " dS/dx =", grad_S(None, g))

# S + |g(t)|^2 is squeezed between multiples of ||g||^2; both slacks are >= 0
lo_slack, hi_slack = equivalence_bound_check(g)
print("equivalence slacks:", lo_slack, hi_slack)

# Upsilon^M is quasi-subadditive; the gap should be non-negative
gap = quasi_subadditivity_gap(3.0, gx, e)
print("Upsilon^3 subadditivity slack:", gap)
print("Upsilon^3(g) =", eval_upsilon(3.0, g))

# random members of a compact class (start 0, M0 = 0.5, mu = 5) on a value lattice
c = CompactClass(0.0, 0.5, 5.0, h, 0.1, 1.0)
for p in lattice_sample(c, seed=7, count=3):
    print(f"class path ending at {p.final_time:.2f}, ||p|| = {sup_norm(p):.2f}")
