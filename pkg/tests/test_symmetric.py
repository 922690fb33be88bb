from __future__ import annotations

import numpy as np
import pytest

from extsource.curve import pastur_curve
from extsource.symmetric import NotSymmetricError, build_constrained_pair, check_symmetry, verify_potential_identities


def test_parity_certificate():
    assert check_symmetry(pastur_curve(0.8, 0.5)).is_symmetric
    cert = check_symmetry(pastur_curve(0.8, 0.3))
    assert not cert.is_symmetric
    assert max(cert.residuals.values()) > 0


def test_asymmetric_curve_is_rejected(pastur):
    p = pastur(0.5)
    with pytest.raises(NotSymmetricError):
        build_constrained_pair(pastur_curve(0.5, 0.3), p.regime, p.vcm)


def test_unsaturated_pair_has_no_saturated_segment(pastur):
    p = pastur(2.0)
    pair = build_constrained_pair(p.curve, p.regime, p.vcm)
    assert pair.y_star == 0.0
    assert pair.nu2_mass == pytest.approx(0.5, abs=1e-6)
    ys = np.geomspace(1e-3, 50, 30)
    assert np.all(pair.nu2_density(ys) < pair.sigma_level)


def test_saturated_pair_identities(pastur):
    p = pastur(0.5)
    pair = build_constrained_pair(p.curve, p.regime, p.vcm)
    assert pair.y_star == pytest.approx(complex(p.regime.y_star).imag)
    assert pair.sigma_level == pytest.approx(0.5 / np.pi)
    assert pair.nu1_mass == pytest.approx(1.0, abs=1e-8)
    rep = verify_potential_identities(p.curve, pair, p.vcm)
    assert rep["passed"]
    assert rep["inequality_max"] < 0
    assert rep["h_continuity_max"] < 1e-5


def test_nu2_density_is_even_and_decays(pastur):
    p = pastur(1.0)
    pair = build_constrained_pair(p.curve, p.regime, p.vcm)
    ys = np.array([0.5, 2.0, 10.0])
    assert np.allclose(pair.nu2_density(ys), pair.nu2_density(-ys))
    assert pair.nu2_density([1e3])[0] < 1e-4
