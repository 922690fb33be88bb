from __future__ import annotations

import numpy as np
import pytest

from extsource.curve import pastur_curve
from extsource.numerics import PrecisionConfig
from extsource.quad_diff import (
    Regime,
    SheetQD,
    build_gamma_star,
    classify_regime,
    export_svg,
    invariant_drift,
)


def discriminant_roots(a: float) -> np.ndarray:
    """Zeros in z of the xi-discriminant of xi^3 - z xi^2 + (1 - a^2) xi + a^2 z.

    With b = -z, c = 1 - a^2, d = a^2 z the cubic discriminant
    18bcd - 4b^3 d + b^2 c^2 - 4c^3 - 27d^2 is a quadratic in w = z^2.
    """
    c = 1 - a * a
    A = 4 * a * a
    B = c * c - 18 * a * a * c - 27 * a**4
    C = -4 * c**3
    ws = np.roots([A, B, C]).astype(complex)
    return np.concatenate([np.sqrt(ws), -np.sqrt(ws)])


def test_saturated_zero_matches_discriminant():
    rep = classify_regime(pastur_curve(0.5))
    assert rep.regime is Regime.SATURATED
    upper = [z for z in discriminant_roots(0.5) if z.imag > 1e-9]
    assert len(upper) == 1
    assert complex(rep.y_star) == pytest.approx(upper[0], abs=1e-9)


def test_two_cut_support_endpoints_match_discriminant():
    rep = classify_regime(pastur_curve(2.0))
    assert rep.regime is Regime.UNSATURATED_REGULAR
    ends = np.sort([x for iv in rep.support.intervals for x in iv])
    oracle = np.sort(discriminant_roots(2.0).real)
    assert np.allclose(ends, oracle, atol=1e-9)


def test_singular_case_has_triple_point_at_origin():
    rep = classify_regime(pastur_curve(1.0))
    assert rep.regime is Regime.UNSATURATED_SINGULAR
    assert rep.x_star == pytest.approx(0.0, abs=1e-8)
    assert rep.genus == 0


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_gamma_star_is_symmetric_with_one_crossing(a):
    c = pastur_curve(a)
    rep = classify_regime(c)
    g = build_gamma_star(c, rep)
    assert g.real_crossings() == 1
    pts = g.points
    # conjugation symmetry: every point has its mirror image on the contour
    d = np.min(np.abs(pts[:, None] - np.conj(pts)[None, :]), axis=1)
    assert np.max(d) < 1e-6 * (1 + np.max(np.abs(pts)))
    assert np.all(pts[[0, -1]].real > rep.support.hull[1])


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_traced_arc_conserves_invariant(a):
    c = pastur_curve(a)
    rep = classify_regime(c)
    cfg = PrecisionConfig()
    g = build_gamma_star(c, rep, cfg)
    qd = SheetQD.build(c, 1, cfg, branch=rep.branch)
    tau = g.tau
    assert invariant_drift(qd, tau) < cfg.ode_tol * tau.length


def test_export_svg(tmp_path):
    t = np.linspace(0, 2 * np.pi, 50)
    path = export_svg(tmp_path / "c.svg", {"circle": [np.exp(1j * t)]}, [(-1.0, 1.0)])
    text = path.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert "polyline" in text or "path" in text
