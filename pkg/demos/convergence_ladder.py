"""Finite-N curves of the Gaussian model approaching the limiting curve.

For the Gaussian potential the finite-N curve at |n| = N already equals the
limiting curve, so coefficient distances sit at the rounding floor; the
zero-counting measures still converge and the Kolmogorov distance shrinks
roughly like 1/N.
"""

from __future__ import annotations

import sys

from extsource.curve import pastur_curve
from extsource.mop import UpRightPath, convergence_study
from extsource.numerics import Potential, PrecisionConfig


def main(N_list=(8, 16, 32), digits: int = 120):
    a = 0.5
    res = convergence_study(Potential.gaussian(), a, UpRightPath.from_alpha(0.5, max(N_list) + 1), list(N_list),
                            PrecisionConfig.extended(digits), reference=pastur_curve(a, 0.5))
    print(f"{'N':>4} {'coef. distance':>15} {'Kolmogorov':>11} {'max|zero|':>10}")
    for r in res["rows"]:
        print(f"{r['N']:>4} {r['coefficient_distance']:>15.2e} {r['kolmogorov']:>11.4f} {r['max_abs_zero']:>10.4f}")
    print(f"monotone (up to the floor {res['floor']:.0e}): {res['monotone']}")


if __name__ == "__main__":
    main(digits=int(sys.argv[1]) if len(sys.argv) > 1 else 120)
