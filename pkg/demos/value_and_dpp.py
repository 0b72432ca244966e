"""Value functional by exhaustive search over piecewise-constant controls, and the DPP.

    python3 demos/value_and_dpp.py
"""
from pathhjb.paths import Path
from pathhjb.problems import bang_bang, build_problem
from pathhjb.value import ValueQuery, dpp_residual, value

T = 1.2
bb = bang_bang(T)

# dx = u dt with u in {-1, 1}, terminal cost x(T): push down all the way
g = Path([0.0, 0.1, 0.3, 0.25], 0.1, horizon=T)
q = ValueQuery(bb, g, control_grid=0.1)
v, u = value(q)
print(f"V = {v:.6f}, closed form {0.25 - (T - 0.3):.6f}, controls {u.indices}")

for s in (0.3, 0.7, T):
    print(f"DPP residual at s={s}: {dpp_residual(q, s):.2e}")

# a path-dependent running cost; greedy-refine gives an upper bound on V
pd = build_problem("delay-feedback", {"horizon": 1.0, "controls": [-1, 0, 1],
                                      "running": "state_abs", "gain": 1.0})
g = Path.constant(0.5, 0.0, 0.125, 1.0)
ve = value(ValueQuery(pd, g, 0.125, search="exhaustive"))[0]
vg = value(ValueQuery(pd, g, 0.125, search="greedy-refine"))[0]
print(f"exhaustive {ve:.4f}  greedy-refine {vg:.4f}")
