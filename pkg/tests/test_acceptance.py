"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary). Oracles are the closed-form Gaussian-potential curve
and the multiple Hermite polynomials.
"""

from __future__ import annotations

import time

import mpmath
import numpy as np
import pytest

from conftest import run_pipeline
from extsource.curve import BehaviorKind, classify_local_behaviors, pastur_curve
from extsource.measures import (
    cauchy_residuals,
    component_periods,
    default_zgrid,
    variational_residuals,
)
from extsource.mop import (
    MopLattice,
    MultiIndex,
    UpRightPath,
    biorthogonality_report,
    compute_mop,
    convergence_study,
    finite_n_curve,
    interlacing_report,
    recurrence_coefficients,
)
from extsource.numerics import Potential, PrecisionConfig
from extsource.quad_diff import Regime, boutroux_periods
from extsource.symmetric import build_constrained_pair, verify_potential_identities

CASES = (0.5, 1.0, 2.0)


@pytest.fixture(scope="module")
def asymmetric():
    """Finite-N Gaussian curve at N = 32, index (11, 21), a = 1/2, as a float curve."""
    fc = finite_n_curve(Potential.gaussian(), 0.5, 32, (11, 21))
    return run_pipeline(fc.to_spectral_curve())


def test_criterion_1_pastur_regimes(pastur, criterion):
    sat, sing, reg = pastur(0.5), pastur(1.0), pastur(2.0)
    y = complex(sat.regime.y_star)
    checks = {
        "a=1/2 saturated": sat.regime.regime is Regime.SATURATED and abs(y.real) < 1e-10 and y.imag > 0,
        "a=1 singular, x*=0": sing.regime.regime is Regime.UNSATURATED_SINGULAR and abs(sing.regime.x_star) < 1e-8,
        "a=2 regular, two components": reg.regime.regime is Regime.UNSATURATED_REGULAR
        and reg.regime.support.l == 2,
    }
    times = {a: pastur(a).classify_seconds for a in CASES}
    checks["each < 60 s"] = max(times.values()) < 60
    detail = f"y*={y.imag:.6f}i; times " + ", ".join(f"a={a}: {t:.1f}s" for a, t in times.items())
    criterion(1, all(checks.values()), f"{detail}; failed: {[k for k, v in checks.items() if not v]}")


def test_criterion_2_mass_relations(pastur, asymmetric, criterion):
    worst = {}
    for a in CASES:
        rel = pastur(a).vcm.mass_relations()
        worst[f"a={a}"] = max(abs(rel["|mu1|+|mu2|-1"]), abs(rel["|mu1|-|mu3|-alpha"]))
    rel = asymmetric.vcm.mass_relations()
    worst["asym alpha=11/32"] = max(abs(rel["|mu1|+|mu2|-1"]), abs(rel["|mu1|-|mu3|-alpha"]))
    ok = max(worst.values()) < 1e-6 and asymmetric.regime.regime is Regime.SATURATED
    criterion(2, ok, ", ".join(f"{k}: {v:.2e}" for k, v in worst.items()))


def test_criterion_3_local_behaviors(pastur, criterion):
    edge_dev = 0.0
    n_edges = 0
    for a in (0.5, 2.0):
        sup = pastur(a).regime.support
        ends = sorted(x for iv in sup.intervals for x in iv)
        lbs = classify_local_behaviors(pastur(a).curve)
        found = {round(lb.point, 6): lb for lb in lbs if lb.kind is BehaviorKind.EDGE}
        for e in ends:
            lb = found.get(round(e, 6))
            dev = abs(lb.fitted_exponent - 0.5) if lb is not None else np.inf
            edge_dev = max(edge_dev, dev)
            n_edges += 1
    lbs = classify_local_behaviors(pastur(1.0).curve)
    mid = [lb for lb in lbs if abs(lb.point) < 1e-6]
    p_dev = abs(mid[0].fitted_exponent - 1 / 3) if mid else np.inf
    ok = edge_dev < 0.05 and p_dev < 0.02 and mid and mid[0].kind is BehaviorKind.PEARCEY
    criterion(3, bool(ok), f"{n_edges} edges, max |e-1/2| = {edge_dev:.2e}; interior |e-1/3| = {p_dev:.2e}")


def test_criterion_4_cauchy_identities(pastur, criterion):
    floor = 1e-11
    parts = []
    ok = True
    for a in CASES:
        p = pastur(a)
        grid = default_zgrid(p.regime, n=50)
        r1 = cauchy_residuals(p.curve, p.vcm, grid)["max"]
        fine = run_pipeline(p.curve, panels_per=24)
        r2 = cauchy_residuals(p.curve, fine.vcm, grid)["max"]
        ok &= r1 < 1e-4 and (r2 <= r1 / 2 or r2 < floor)
        parts.append(f"a={a}: {r1:.1e} -> {r2:.1e}")
    criterion(4, ok, "; ".join(parts) + f" (floor {floor:g})")


def test_criterion_5_variational(pastur, criterion):
    const = {}
    for a in (1.0, 2.0):
        const[a] = variational_residuals(pastur(a).curve, pastur(a).vcm, energy=False)["constancy_max"]
    sat = pastur(0.5)
    vr = variational_residuals(sat.curve, sat.vcm, energy=False)
    const[0.5] = vr["constancy_max"]
    s = vr["s_property"]
    res = s["residuals"]
    decreasing = all(r2 < r1 for r1, r2 in zip(res, res[1:]))
    ell3 = [c["ell"] for c in vr["per_component_constants"] if c["measure"] == 3]
    ok = (max(const.values()) < 1e-5 and decreasing and 0.9 <= s["slope"] <= 1.1
          and len(ell3) == 1 and abs(ell3[0]) < 1e-5)
    criterion(5, ok, f"constancy {max(const.values()):.1e}; S slope {s['slope']:.4f}; ell3 {ell3[0] if ell3 else None:.1e}")


def test_criterion_6_constrained_equilibrium(pastur, criterion):
    p = pastur(0.5)
    a = p.curve.a
    pair = build_constrained_pair(p.curve, p.regime, p.vcm)
    rep = verify_potential_identities(p.curve, pair, p.vcm, n_axis=20)
    inside = pair.nu2_density(np.linspace(0, pair.y_star, 11))
    exterior = pair.nu2_density(np.asarray(rep["equality_heights"]))
    ok = (pair.sigma_level == a / np.pi and np.all(inside == a / np.pi) and len(exterior) == 20
          and np.all(exterior < a / np.pi) and abs(pair.nu2_mass - 0.5) < 1e-6
          and rep["equality_residual"] < 1e-5)
    criterion(6, bool(ok), f"|nu2|-1/2 = {pair.nu2_mass - 0.5:.1e}; 2U2-U1 = {rep['equality_residual']:.1e}; "
                           f"max exterior nu2 - a/pi = {np.max(exterior) - a / np.pi:.2e}")


def _hermite_forms(digits: int) -> dict:
    cfg = PrecisionConfig(working_digits=digits, quad_rel_tol=10.0 ** (-(digits - 10)))
    V = Potential.gaussian()
    lat1 = MopLattice(V, 1.0, 1, cfg)
    P = lat1.record((1, 1)).P
    p11 = max(float(abs(P.coeff(k) - c)) for k, c in enumerate((-2, 0, 1)))
    N, a = 8, 0.5
    lat = MopLattice(V, a, N, cfg)
    worst = 0.0
    for idx in [(2, 3), (4, 1), (3, 3)]:
        rd = recurrence_coefficients(V, a, N, idx, lattice=lat)
        k = MultiIndex.of(idx)
        worst = max(worst, float(abs(rd.b1 - a)), float(abs(rd.b2 + a)),
                    float(abs(rd.a1 - mpmath.mpf(k.k1) / N)), float(abs(rd.a2 - mpmath.mpf(k.k2) / N)))
    return {"P11": p11, "ab": worst, "tol": 10.0 ** (-(digits - 12))}


def test_criterion_7_mop_suite(criterion):
    digits = 60
    cfg = PrecisionConfig(working_digits=digits, quad_rel_tol=10.0 ** (-(digits - 10)))
    rng = np.random.default_rng(20261014)
    c2, c4, a = rng.uniform(0, 1), rng.uniform(0.5, 1.5), rng.uniform(0.3, 1.0)
    V = Potential((0.0, c2, 0.0, c4))
    N = 8
    lat = MopLattice(V, a, N, cfg)
    idxs = [(i, t - i) for t in range(17) for i in range(t + 1)]
    simple_real = all(len(compute_mop(V, a, N, i, lattice=lat).zeros) == sum(i) for i in idxs)
    inter = interlacing_report(lat, idxs)
    bio = biorthogonality_report(lat, idxs)
    herm = _hermite_forms(digits)
    ok = (simple_real and inter["passed"] and bio["passed"] and bio["max_residual"] < 10.0 ** (-(digits - 8))
          and herm["P11"] < herm["tol"] and herm["ab"] < herm["tol"])
    criterion(7, ok, f"V=({c2:.3f}x^2/2+{c4:.3f}x^4/4), a={a:.3f}: {inter['edges']} edges interlace={inter['passed']}, "
                     f"bio {bio['max_residual']:.1e} over {bio['pairs']} pairs; Hermite P11 {herm['P11']:.0e}, "
                     f"a/b {herm['ab']:.0e}")


def test_criterion_8_finite_n_curve(criterion):
    digits = 60
    cfg = PrecisionConfig(working_digits=digits, quad_rel_tol=10.0 ** (-(digits - 10)))
    V = Potential((0.0, 0.5, 0.2, 1.0))
    a, N, idx = 0.7, 8, MultiIndex(3, 5)
    fc = finite_n_curve(V, a, N, idx, cfg)
    m = V.m
    tol = 10.0 ** (-(digits - 10))
    q2_err = max(float(abs(fc.q2.coeff(k) + V.vcoeffs[k])) for k in range(m))
    with mpmath.workdps(digits + 20):
        vm, vm1, am = mpmath.mpf(V.v(m)), mpmath.mpf(V.v(m - 1)), mpmath.mpf(a)
        lead = float(abs(fc.q0.coeff(m - 1) - vm * am**2))
        sub = float(abs(fc.q0.coeff(m - 2) - (vm1 * am + vm * mpmath.mpf(idx.k1 - idx.k2) / N) * am))
    t0 = time.perf_counter()
    ladder = convergence_study(Potential.gaussian(), 0.5, UpRightPath.from_alpha(0.5, 33), [8, 16, 32],
                               PrecisionConfig.extended(), reference=pastur_curve(0.5, 0.5))
    dt = time.perf_counter() - t0
    rows = ladder["rows"]
    ks = rows[-1]["kolmogorov"]
    ok = (q2_err < tol and lead < tol and sub < tol and ladder["monotone"] and ks < 0.1 and dt < 600)
    dists = ", ".join(f"{r['coefficient_distance']:.1e}" for r in rows)
    criterion(8, ok, f"q2 {q2_err:.0e}, q0 lead {lead:.0e}, sub {sub:.0e}; distances [{dists}] "
                     f"(floor {ladder['floor']:.0e}), KS(32) {ks:.3f}, ladder {dt:.0f}s")


def test_criterion_9_periods(pastur, asymmetric, criterion):
    worst_period, worst_boutroux = 0.0, 0.0
    for p, symmetric in [(pastur(a), True) for a in CASES] + [(asymmetric, False)]:
        comps = component_periods(p.vcm)
        per = {d["cycle_id"]: d for d in boutroux_periods(p.curve, p.regime, comps, p.vcm.labeler)}
        for c in comps:
            v = complex(per[f"{c['id']}:loop(2,3)"]["period"])
            worst_period = max(worst_period, abs(v - c["mass_combination"]))
        if symmetric:
            worst_boutroux = max([worst_boutroux] + [abs(d["boutroux"]) for d in per.values() if "boutroux" in d])
    ok = worst_period < 1e-5 and worst_boutroux < 1e-5
    criterion(9, ok, f"period vs mass combination {worst_period:.1e}; Boutroux real parts {worst_boutroux:.1e}")
