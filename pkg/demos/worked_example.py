"""Feedback-form worked example: decay identity, closed-loop run and curve-length decay.

    python3 demos/worked_example.py [lambda] [k]
"""

import sys

import numpy as np

from horizon_ii import scenarios
from horizon_ii.contraction import decay_matrix_lhs
from horizon_ii.dynamics import integrate
from horizon_ii.runner import build_problem, run


def main(lam=1.0, k=2.0):
    sc = scenarios.scenario_worked_example(lam, k)
    prob = build_problem(sc.config)
    print(f"beta(x) = {sc.config['expressions']['beta'][0]}   (lambda={lam}, k={k})")

    grid = np.linspace(-2, 2, 21)
    worst = max(np.max(np.abs(decay_matrix_lhs(prob.M, prob.Q, prob.k, prob.field, [a, b]))) for a in grid for b in grid)
    print(f"max |decay matrix entry| on 21x21 grid: {worst:.2e}")

    tr = integrate(prob.field, [1.5, 1.5], (0, 20), t_eval=[0, 1, 2, 5, 10, 20])
    print("\n   t        x1            x2")
    for t, x in zip(tr.times, tr.states):
        print(f"{t:5.1f}  {x[0]: .6e}  {x[1]: .6e}")

    out = run(sc.config, ["length_decay"])
    dc = out.decay["transverse"]
    print(f"\ntransverse segment: fitted log-length slope {dc.rate:.4f} (bound -k/2 = {-k / 2:.4f})")
    print("   t      ell          bound")
    for t, e, b in zip(dc.times, dc.ell, dc.bound):
        print(f"{t:4.1f}  {e:.6e}  {b:.6e}")
    print(f"in-manifold curve: max length {np.max(out.decay['in_manifold'].ell):.1e}")


if __name__ == "__main__":
    main(*map(float, sys.argv[1:3]))
