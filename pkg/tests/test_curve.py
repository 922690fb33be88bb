from __future__ import annotations

import json

import numpy as np
import pytest

from extsource.curve import (
    BehaviorKind,
    SpectralCurve,
    admissibility_check,
    classify_local_behaviors,
    density,
    pastur_curve,
    save_density_csv,
    support,
    total_mass,
)
from extsource.numerics import Potential, RealPoly


def resolvent_density(a: float, alpha: float, x: np.ndarray) -> np.ndarray:
    """Density of GUE plus a source with eigenvalues +a (fraction alpha) and -a.

    The resolvent G solves G = alpha/(z - a - G) + (1 - alpha)/(z + a - G);
    clearing denominators gives a cubic in G, and the physical root has
    Im G < 0 just above the real axis.
    """
    out = []
    for t in x:
        z = t + 1e-12j
        # G (z-a-G)(z+a-G) - alpha (z+a-G) - (1-alpha)(z-a-G) = 0, expanded in G
        u, v = z - a, z + a
        c3 = 1.0
        c2 = -(u + v)
        c1 = u * v + 1.0
        c0 = -(alpha * v + (1 - alpha) * u)
        r = np.roots([c3, c2, c1, c0])
        im = min(r.imag)
        out.append(max(-im / np.pi, 0.0))
    return np.array(out)


def test_pastur_coefficients_at_half():
    a = 0.7
    c = pastur_curve(a, 0.5)
    assert c.p2.coeffs == pytest.approx((0.0, -1.0))
    assert c.p1.coeffs == pytest.approx((1 - a * a,))
    assert c.p0.coeffs == pytest.approx((0.0, a * a))


@pytest.mark.parametrize("a,alpha", [(0.5, 0.5), (2.0, 0.5), (1.2, 0.3)])
def test_density_matches_resolvent_oracle(a, alpha):
    c = pastur_curve(a, alpha)
    lo, hi = support(c).hull
    xs = np.linspace(lo - 0.2, hi + 0.2, 41)
    assert np.allclose(density(c, xs), resolvent_density(a, alpha, xs), atol=1e-7)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_unit_mass_and_symmetric_support(a):
    c = pastur_curve(a)
    sup = support(c)
    assert total_mass(c) == pytest.approx(1.0, abs=1e-9)
    ends = np.array([x for iv in sup.intervals for x in iv])
    assert np.allclose(np.sort(ends), np.sort(-ends), atol=1e-10)
    assert sup.l == (2 if a == 2.0 else 1)


def test_admissibility_accepts_pastur_and_rejects_perturbation():
    good = pastur_curve(0.5)
    assert admissibility_check(good).is_admissible
    bad = SpectralCurve(Potential.gaussian(), 0.5, 0.5, RealPoly((0.75,)), RealPoly((0.0, 0.6)))
    rep = admissibility_check(bad)
    assert not rep.is_admissible
    assert rep.notes
    json.dumps(rep.to_dict())


def test_local_behaviors_edges_and_interior_cusp():
    for lb in classify_local_behaviors(pastur_curve(2.0)):
        assert lb.kind is BehaviorKind.EDGE
        assert lb.fitted_exponent == pytest.approx(0.5, abs=0.05)
    mid = [lb for lb in classify_local_behaviors(pastur_curve(1.0)) if abs(lb.point) < 1e-6]
    assert mid and mid[0].kind is BehaviorKind.PEARCEY
    assert mid[0].exponent == pytest.approx(1 / 3)


def test_roundtrip_and_density_csv(tmp_path):
    c = pastur_curve(1.3, 0.4)
    back = SpectralCurve.from_dict(json.loads(c.dumps()))
    assert back.p0.coeffs == c.p0.coeffs and back.p1.coeffs == c.p1.coeffs
    path = save_density_csv(c, tmp_path / "d.csv", n=50)
    rows = path.read_text().splitlines()
    assert len(rows) == 51
