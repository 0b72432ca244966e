"""Path-dependent state equation: Euler vs Picard, and the a-priori bounds.

    python3 demos/state_equation.py
"""
import math

from pathhjb.control import (ControlSignal, constant_C1, constant_C2, constant_C3, constant_C4,
                             continuous_dependence_gap, growth_bound, solve_state,
                             time_lipschitz_gap)
from pathhjb.paths import Path
from pathhjb.problems import build_problem

T = 1.0
h = 0.01
prob = build_problem("delay-feedback", {"horizon": T, "controls": [-1, 0, 1], "gain": 1.0})
g = Path.from_function(lambda s: math.cos(3 * s), 0.3, h, horizon=T)
u = ControlSignal.constant(prob.U[2], 0.3, T, 0.1)

X_euler = solve_state(prob, g, u, method="euler")
X_picard, info = solve_state(prob, g, u, method="picard", return_info=True)
print("Picard iterations:", info.iterations, " last ratios:", [round(r, 3) for r in info.ratios[-3:]])
print("max |Euler - Picard|:", abs(X_euler.path.samples - X_picard.path.samples).max())

L = prob.L
print(f"C1={constant_C1(L, T):.3f} C2={constant_C2(L, T):.3f} "
      f"C3={constant_C3(L, T):.3f} C4={constant_C4(L, T):.3f}")

obs, bound = growth_bound(prob, g, u)
print(f"growth: {obs:.4f} <= {bound:.4f}")
obs, bound = time_lipschitz_gap(prob, g, u)
print(f"time Lipschitz: {obs:.4f} <= {bound:.4f}")

# a second history starting later, with the same control
g2 = Path.from_function(lambda s: math.cos(3 * s) + 0.1, 0.5, h, horizon=T)
obs, bound = continuous_dependence_gap(prob, g, g2, u)
print(f"continuous dependence: {obs:.4f} <= {bound:.4f}")
