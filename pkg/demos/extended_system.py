"""Plant plus off-manifold coordinate z, started on and off the constraint z = phi(x).

    python3 demos/extended_system.py
"""

import math

from horizon_ii import scenarios
from horizon_ii.runner import run


def main():
    for offset in (0.0, 1.0):
        out = run(scenarios.scenario_extended_system(theta=1.0, z0_offset=offset).config)
        print(f"== z(0) - phi(x(0)) = {offset}")
        for r in out.report.results:
            print(f"   {r}")
        first = out.cache["augmented"][0]
        x20, z0 = first["x0"][1], first["z0"][0]
        print("    t      x2          closed form    z - phi(x)")
        for t, y in zip(first["traj"].times, first["traj"].states):
            print(f"   {t:4.1f}  {y[1]: .8f}  {x20 - z0 * (1 - math.exp(-t)): .8f}  {y[2] - y[1]: .3e}")
        print()


if __name__ == "__main__":
    main()
