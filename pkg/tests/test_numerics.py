from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from extsource.numerics import (
    Circle,
    ContractViolation,
    DomainError,
    Potential,
    PrecisionConfig,
    RealPoly,
    contour_integral,
    expand_roots,
    gauss_legendre,
    graded_breakpoints,
    panel_rule,
    roots,
)

coeff = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
polys = st.lists(coeff, min_size=1, max_size=6).map(RealPoly.of)


def test_realpoly_trims_and_evaluates():
    p = RealPoly((1.0, -2.0, 3.0, 0.0, 0.0))
    assert p.degree == 2
    assert p.leading == 3.0
    assert p(2.0) == pytest.approx(1 - 4 + 12)
    assert p.deriv().coeffs == (-2.0, 6.0)


@given(polys, polys, st.floats(-2, 2))
def test_realpoly_ring_operations_match_evaluation(p, q, x):
    assert (p + q)(x) == pytest.approx(p(x) + q(x), abs=1e-9)
    assert (p - q)(x) == pytest.approx(p(x) - q(x), abs=1e-9)
    assert (p * q)(x) == pytest.approx(p(x) * q(x), rel=1e-9, abs=1e-8)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5, unique=True))
@settings(max_examples=40, deadline=None)
def test_roots_recover_separated_real_roots(rs):
    rs = sorted(rs)
    if len(rs) > 1 and min(np.diff(rs)) < 1e-2:
        return
    p = RealPoly((1.0,))
    for r in rs:
        p = p * RealPoly((-r, 1.0))
    found = sorted(z.real for z in expand_roots(roots(p)))
    assert len(found) == len(rs)
    assert np.allclose(found, rs, atol=1e-8)


def test_roots_multiplicity_and_conjugate_pairs():
    # (z - 1)^2 (z^2 + 1)
    p = RealPoly((1.0, -2.0, 1.0)) * RealPoly((1.0, 0.0, 1.0))
    rm = roots(p)
    mult = {round(z.real, 6) + 1j * round(z.imag, 6): m for z, m in rm}
    assert mult[1.0] == 2
    assert mult[1j] == 1 and mult[-1j] == 1


def test_precision_config_contract():
    with pytest.raises(ContractViolation):
        PrecisionConfig(working_digits=8)
    with pytest.raises(ContractViolation):
        PrecisionConfig(root_tol=0.0)
    assert PrecisionConfig.extended().working_digits == 120


def test_potential_domain_and_derivative():
    V = Potential((0.0, 0.5, 0.0, 1.0))
    assert V.m == 4
    assert V(2.0) == pytest.approx(0.5 * 4 / 2 + 16 / 4)
    assert V.dV(2.0) == pytest.approx(0.5 * 2 + 8)
    with pytest.raises(DomainError):
        Potential((0.0, 1.0, 1.0))
    with pytest.raises(DomainError):
        Potential((0.0, -1.0))


def test_gauss_legendre_exact_for_degree_2n_minus_1():
    x, w = gauss_legendre(8)
    for k in range(16):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.sum(w * x**k) == pytest.approx(exact, abs=1e-14)


def test_graded_panels_integrate_square_root_edges():
    br = graded_breakpoints(-1.0, 1.0)
    x, w = panel_rule(br, 16)
    assert np.sum(w * np.sqrt(1 - x * x)) == pytest.approx(math.pi / 2, abs=1e-12)


def test_contour_integral_residues():
    val = contour_integral(lambda z: 1 / z, Circle(0.0, 1.0))
    assert val == pytest.approx(2j * math.pi, abs=1e-12)
    square = [1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j, 1 + 1j]
    val = contour_integral(lambda z: 1 / (z - 0.2), square)
    assert val == pytest.approx(2j * math.pi, abs=1e-10)
    with pytest.raises(ContractViolation):
        contour_integral(lambda z: z, [0, 1, 1j])
