"""A design that passes the contraction tests yet misses the origin, and its fix.

The uncorrected controller leaves the constant term ``theta`` in the plant,
so the closed loop settles at ``(theta, 0)``.  Only the equilibrium,
manifold-restriction and closed-loop checks notice.

    python3 demos/counterexample.py [theta]
"""

import sys

from horizon_ii import scenarios
from horizon_ii.dynamics import integrate
from horizon_ii.runner import build_problem, run


def main(theta=1.0):
    for corrected in (False, True):
        sc = scenarios.scenario_counterexample(theta, corrected)
        report = run(sc.config).report
        prob = build_problem(sc.config)
        x10 = integrate(prob.field, [0.0, 1.0], (0, 10), t_eval=[10.0]).final
        print(f"== {sc.name}: beta = (-{sc.params['corrected']:g}*theta, -x2), theta = {theta:g}")
        for name, outcome in report.outcomes().items():
            print(f"   {outcome:5s} {name}")
        print(f"   x(10) from (0, 1): ({x10[0]:.6f}, {x10[1]:.6f})\n")


if __name__ == "__main__":
    main(*map(float, sys.argv[1:2]))
