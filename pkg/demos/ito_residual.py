"""Functional Ito formula on a smooth trajectory: the residual shrinks like h.

    python3 demos/ito_residual.py
"""
import math

from pathhjb.calculus import Trajectory, ito_report, running_integral_functional, square_cylinder
from pathhjb.functionals import S_functional
from pathhjb.paths import Path


def smooth(h):
    # history sin(3s) on [0, 0.4], continued by the same curve up to 1
    base = Path.from_function(lambda s: math.sin(3 * s), 0.4, h)
    return Trajectory.from_function(base, lambda s: math.sin(3 * s), 1.0)


steps = [0.01, 0.005, 0.0025]
funcs = {
    "x^2": square_cylinder(),
    "S": lambda h: S_functional(Path.constant(0.0, 0.4, h)),
    "int x ds": running_integral_functional(),
}
for label, f in funcs.items():
    for r in ito_report(f, {"smooth": smooth}, steps):
        order = "" if r["order_estimate"] is None else f"  order {r['order_estimate']:.2f}"
        print(f"{label:9s} h={r['grid_step']:<7} residual {r['residual']:+.3e}{order}")
