"""Walk through the three regimes of the Gaussian model with source +-a.

For a = 1/2 the quadratic differential has a zero y* off the real line and a
third measure lives on an arc through it; for a = 2 the eigenvalues split
into two intervals; a = 1 is the transition, with a cube-root cusp at 0.
"""

from __future__ import annotations

from extsource.curve import classify_local_behaviors, pastur_curve
from extsource.measures import cauchy_residuals, extract_measures
from extsource.quad_diff import build_gamma_star, classify_regime


def main():
    for a in (0.5, 1.0, 2.0):
        curve = pastur_curve(a, 0.5)
        regime = classify_regime(curve)
        print(f"a = {a}: {regime.regime.value}")
        print(f"  support {[tuple(round(x, 4) for x in iv) for iv in regime.support.intervals]}")
        if regime.saturated:
            print(f"  y* = {complex(regime.y_star).imag:.6f} i")
        for lb in classify_local_behaviors(curve):
            print(f"  x = {lb.point:+.4f}: {lb.kind.value}, exponent {lb.fitted_exponent:.4f}")
        gamma = build_gamma_star(curve, regime)
        vcm = extract_measures(curve, regime, gamma)
        masses = [round(m.mass, 8) for m in vcm.measures]
        print(f"  masses mu1, mu2, mu3 = {masses}")
        print(f"  Cauchy residual {cauchy_residuals(curve, vcm)['max']:.1e}")


if __name__ == "__main__":
    main()
