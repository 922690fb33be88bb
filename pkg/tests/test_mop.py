from __future__ import annotations

import math

import mpmath
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from extsource.mop import (
    CACHE_ENV,
    LatticeExtensionRequest,
    MopLattice,
    MopRecord,
    MultiIndex,
    PartialWindowError,
    PrecisionBudgetExceeded,
    UpRightPath,
    biorthogonality_report,
    compute_mop,
    finite_n_curve,
    interlacing_report,
    offpath_coefficients,
    recurrence_coefficients,
    step_recurrence,
)
from extsource.numerics import ContractViolation, Potential, PrecisionConfig

DIGITS = 40
CFG = PrecisionConfig(working_digits=DIGITS, quad_rel_tol=10.0 ** (-(DIGITS - 10)))
TOL = 10.0 ** (-(DIGITS - 12))
GAUSS = Potential.gaussian()


def exact_gaussian_moment(k: int, mean: float, N: float):
    """``int x^k exp(-N (x^2/2 - mean x)) dx`` from the normal moments."""
    mean, N = mpmath.mpf(mean), mpmath.mpf(N)
    Z = mpmath.sqrt(2 * mpmath.pi / N) * mpmath.exp(N * mean**2 / 2)
    s = mpmath.mpf(0)
    for j in range(0, k + 1, 2):
        s += mpmath.binomial(k, j) * mean ** (k - j) * mpmath.fac2(j - 1) * N ** (-mpmath.mpf(j) / 2)
    return Z * s


def test_moment_recurrence_matches_exact_gaussian_moments():
    N, a = 6, 0.4
    lat = MopLattice(GAUSS, a, N, CFG)
    mom = lat.moments(40)
    with mpmath.workdps(lat.dps):
        for j, mean in ((1, a), (2, -a)):
            for k in range(41):
                exact = exact_gaussian_moment(k, mean, N)
                assert abs(mom[j][k] - exact) <= mpmath.mpf(10) ** (-DIGITS) * abs(exact) + 1e-300


def test_quartic_recurrence_moments_match_direct_quadrature():
    V = Potential((0.0, 0.3, 0.4, 1.0))
    N, a = 3, 0.6
    lat = MopLattice(V, a, N, CFG)
    mom = lat.moments(12)
    with mpmath.workdps(lat.dps):
        for j in (1, 2):
            W = lat.exponent(j).to_mp()
            for k in (3, 7, 12):
                direct = mpmath.quad(lambda x: x**k * mpmath.exp(-N * W(x)), [-mpmath.inf, 0, mpmath.inf])
                assert abs(mom[j][k] - direct) < mpmath.mpf(10) ** (-(DIGITS - 5)) * (1 + abs(direct))


def test_multiple_hermite_closed_forms():
    rec = compute_mop(GAUSS, 1.0, 1, (1, 1), CFG)
    assert [float(c) for c in rec.P.coeffs] == pytest.approx([-2.0, 0.0, 1.0], abs=TOL)
    assert rec.zeros == pytest.approx([-math.sqrt(2), math.sqrt(2)], abs=1e-12)
    # a single weight gives shifted Hermite polynomials: (x - a)^2 - 1/N
    N, a = 4, 0.3
    P = compute_mop(GAUSS, a, N, (2, 0), CFG).P
    assert [float(c) for c in P.coeffs] == pytest.approx([a * a - 1 / N, -2 * a, 1.0], abs=TOL)
    lat = MopLattice(GAUSS, a, N, CFG)
    for idx in [(1, 2), (3, 0), (2, 2)]:
        rd = recurrence_coefficients(GAUSS, a, N, idx, lattice=lat)
        k = MultiIndex.of(idx)
        assert float(rd.b1) == pytest.approx(a, abs=TOL)
        assert float(rd.b2) == pytest.approx(-a, abs=TOL)
        assert float(rd.a1) == pytest.approx(k.k1 / N, abs=TOL)
        assert float(rd.a2) == pytest.approx(k.k2 / N, abs=TOL)


def test_b_routes_agree_for_quartic():
    V = Potential((0.1, 0.5, 0.0, 1.0))
    lat = MopLattice(V, 0.8, 5, CFG)
    for idx in [(2, 1), (3, 3)]:
        for j in (1, 2):
            u = lat.rec_b(idx, j, "coefficients")
            v = lat.rec_b(idx, j, "contour")
            assert float(abs(u - v)) < 1e-20
    rd = recurrence_coefficients(V, 0.8, 5, (3, 2), lattice=lat)
    assert rd.report["four_term_residual"] < TOL
    assert rd.report["a_route_difference"] < TOL
    with pytest.raises(ContractViolation):
        lat.rec_b((1, 1), 1, "bogus")


@st.composite
def quartic_models(draw):
    c2 = draw(st.floats(0.0, 1.0))
    c3 = draw(st.floats(-0.3, 0.3))
    c4 = draw(st.floats(0.5, 1.5))
    a = draw(st.floats(0.2, 1.2))
    N = draw(st.integers(2, 6))
    return Potential((0.0, c2, c3, c4)), a, N


@given(quartic_models())
@settings(max_examples=6, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_zeros_interlace_and_biorthogonality_on_random_quartics(model):
    V, a, N = model
    lat = MopLattice(V, a, N, CFG)
    idxs = [(i, t - i) for t in range(7) for i in range(t + 1)]
    for i in idxs:
        assert len(compute_mop(V, a, N, i, lattice=lat).zeros) == sum(i)
    assert interlacing_report(lat, idxs)["passed"]
    bio = biorthogonality_report(lat, idxs)
    assert bio["passed"] and bio["max_residual"] < lat.residual_tol


@given(quartic_models(), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=5, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_finite_curve_trace_is_minus_dV(model, k1, k2):
    V, a, N = model
    fc = finite_n_curve(V, a, N, (k1, k2), CFG)
    for k in range(V.m):
        assert float(abs(fc.q2.coeff(k) + V.vcoeffs[k])) < 10.0 ** (-(DIGITS - 10))
    assert len(fc.q1.coeffs) <= V.m - 1


def test_gaussian_finite_curve_is_pastur():
    a = 0.5
    fc = finite_n_curve(GAUSS, a, 8, (4, 4), CFG)
    assert [float(c) for c in fc.q0.coeffs] == pytest.approx([0.0, a * a], abs=TOL)
    assert [float(c) for c in fc.q1.coeffs] == pytest.approx([1 - a * a], abs=TOL)
    assert fc.alpha == 0.5
    with pytest.raises(ContractViolation):
        finite_n_curve(GAUSS, a, 8, (3, 0), CFG)


def test_step_and_offpath_recurrences_along_path():
    V = Potential((0.0, 0.4, 0.0, 1.0))
    lat = MopLattice(V, 0.7, 6, CFG)
    path = UpRightPath.from_alpha(0.5, 9)
    for k in range(1, 6):
        theta, res = step_recurrence(path, k, lat)
        assert len(theta) <= path.d + 1
        assert res < TOL
        assert float(abs(theta[0] - lat.rec_b(path.index(k), path.direction(k + 1)))) < TOL
        op = offpath_coefficients(path, k, lat)
        assert op["p_residual"] is None or op["p_residual"] < TOL
        assert op["q_residual"] < TOL
    with pytest.raises(PartialWindowError):
        offpath_coefficients(path, 8, lat)


@given(st.integers(0, 20), st.integers(0, 20), st.sampled_from([1, 2]))
def test_multi_index_shift_invariants(k1, k2, j):
    n = MultiIndex(k1, k2)
    up = n.shift(j)
    assert up.total == n.total + 1
    assert up.shift(j, -1) == n
    assert up.has_below(j)
    assert MultiIndex.of(n.as_tuple()) == n


@given(st.floats(0.05, 0.95), st.integers(1, 60))
def test_paths_from_alpha_stay_near_the_ray(alpha, length):
    path = UpRightPath.from_alpha(alpha, length)
    assert len(path) == length + 1
    for k in range(len(path)):
        assert abs(path.index(k).k1 - alpha * k) <= 0.5 + 1e-9
    for k in range(1, len(path)):
        assert path.direction(k) in (1, 2)


def test_path_contract_violations():
    with pytest.raises(ContractViolation):
        UpRightPath(((0, 0), (1, 1)), 0.5, 2)
    with pytest.raises(ContractViolation):
        UpRightPath(((0, 0), (1, 0), (2, 0), (3, 0)), 0.5, 2)
    with pytest.raises(LatticeExtensionRequest):
        MultiIndex(-1, 0)


def test_precision_budget_is_reported():
    cfg = PrecisionConfig(working_digits=16)
    lat = MopLattice(Potential((0.0, 0.0, 0.0, 1.0)), 1.0, 1, cfg)
    with pytest.raises(PrecisionBudgetExceeded) as err:
        lat.record((14, 14))
    assert err.value.log10_condition > 0


def test_record_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    lat = MopLattice(GAUSS, 0.5, 4, CFG)
    rec = lat.record((2, 1))
    files = list(tmp_path.rglob("*.json"))
    assert files
    again = MopLattice(GAUSS, 0.5, 4, CFG).record((2, 1))
    assert [mpmath.nstr(c, 30) for c in again.P.coeffs] == [mpmath.nstr(c, 30) for c in rec.P.coeffs]
    back = MopRecord.from_dict(rec.to_dict())
    assert back.index == rec.index and back.zeros == pytest.approx(rec.zeros)


def test_lattice_model_mismatch_is_rejected():
    lat = MopLattice(GAUSS, 0.5, 4, CFG)
    with pytest.raises(ContractViolation):
        compute_mop(GAUSS, 0.6, 4, (1, 1), lattice=lat)
