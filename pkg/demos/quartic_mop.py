"""Multiple orthogonal polynomials for a quartic potential.

Builds a small lattice, checks zero interlacing and the nearest-neighbour
recurrences, then forms the finite-N spectral curve at the end of the
alpha = 1/2 path.
"""

from __future__ import annotations

from extsource.mop import (
    MopLattice,
    UpRightPath,
    finite_n_curve,
    interlacing_report,
    recurrence_coefficients,
    step_recurrence,
)
from extsource.numerics import Potential, PrecisionConfig


def main():
    V = Potential((0.0, 0.5, 0.0, 1.0))  # V = x^2/4 + x^4/4
    a, N = 0.7, 8
    cfg = PrecisionConfig(working_digits=60, quad_rel_tol=1e-50)
    lat = MopLattice(V, a, N, cfg)
    idxs = [(i, t - i) for t in range(11) for i in range(t + 1)]
    rep = interlacing_report(lat, idxs)
    print(f"interlacing on {rep['edges']} edges: {rep['passed']}")
    rd = recurrence_coefficients(V, a, N, (4, 4), lattice=lat)
    print(f"b1, b2 = {float(rd.b1):.10f}, {float(rd.b2):.10f}; a1, a2 = {float(rd.a1):.10f}, {float(rd.a2):.10f}")
    print(f"four-term residual {rd.report['four_term_residual']:.1e}")
    path = UpRightPath.from_alpha(0.5, N + 2)
    for k in range(1, 6):
        theta, res = step_recurrence(path, k, lat)
        print(f"  step {k} at {path.index(k)}: theta = {[round(float(t), 8) for t in theta]}, residual {res:.1e}")
    fc = finite_n_curve(V, a, N, path.index(N), lattice=lat)
    print("finite-N curve at", fc.index.as_tuple())
    print("  q0 =", [round(float(c), 10) for c in fc.q0.coeffs])
    print("  q1 =", [round(float(c), 10) for c in fc.q1.coeffs])
    print("  checks", {k: f"{v:.0e}" for k, v in fc.report.items()})


if __name__ == "__main__":
    main()
