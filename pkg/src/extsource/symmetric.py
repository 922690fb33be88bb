"""Symmetric curves: the constrained pair on the imaginary axis and its potential identities.

A curve is symmetric when ``F(-xi, -z) = -F(xi, z)``. For such curves the
vector critical measure yields a pair ``(nu1, nu2)``:

* ``nu1 = mu1 + mu2`` is the eigenvalue density on the real line;
* ``nu2`` lives on the imaginary axis, equals the constraint density
  ``a / pi`` on ``[-y*, y*]`` and ``a / pi - (xi2 - xi3)(iy) / 2 pi`` outside.

``U^nu2`` is checked against the piecewise potential combination ``H`` and
``2 U^nu2 = U^nu1`` is checked on the free part of the axis.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curve import BranchPointProximity, SpectralCurve, density
from .measures import DensityProfile, MeasureRule, VectorCriticalMeasure, _real_rule
from .numerics import gauss_legendre, graded_breakpoints
from .quad_diff import RegimeReport, match_many

log = logging.getLogger(__name__)

__all__ = [
    "SymmetricCertificate",
    "ConstrainedPair",
    "HFunction",
    "NotSymmetricError",
    "ConstraintViolation",
    "check_symmetry",
    "build_constrained_pair",
    "verify_potential_identities",
]


class NotSymmetricError(ValueError):
    """The curve coefficients break the odd/even parity pattern."""


class ConstraintViolation(RuntimeError):
    """The constructed axis density exceeds the constraint level."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class SymmetricCertificate:
    is_symmetric: bool
    residuals: dict

    def to_dict(self):
        return {"is_symmetric": self.is_symmetric, "residuals": self.residuals}


def check_symmetry(curve: SpectralCurve) -> SymmetricCertificate:
    """Exact parity test ``p_k(-z) = (-1)^(k+1) p_k(z)`` on the coefficients.

    ``p0`` and ``p2`` must be odd and ``p1`` even. The residual of each
    coefficient polynomial is the largest coefficient of the wrong parity.
    """
    res = {}
    for k, poly in enumerate((curve.p0, curve.p1, curve.p2)):
        wrong_parity = 1 if k % 2 else 0  # p1 even, p0 and p2 odd
        bad = [abs(float(c)) for d, c in enumerate(poly.coeffs) if d % 2 == wrong_parity]
        res[f"p{k}"] = max(bad, default=0.0)
    return SymmetricCertificate(all(v == 0.0 for v in res.values()), res)


# --------------------------------------------------------------------------
# density on the imaginary axis


class _AxisField:
    """Labeled ``xi2 - xi3`` along ``i [y_lo, y_hi]``.

    A table of labeled triples is built by continuation from ``i y_hi``
    downwards. Other heights are labeled by matching against the nearest
    table entry; below the last height the continuation reached, the sign
    of the colliding pair is carried over from the last labeled node.
    """

    def __init__(self, vcm: VectorCriticalMeasure, heights: np.ndarray):
        self.curve = vcm.curve
        lab = vcm.labeler
        hs = np.sort(np.asarray(heights, dtype=float))[::-1]
        tri = np.empty((len(hs), 3), dtype=complex)
        tri[0] = lab.solve(complex(0.0, hs[0]))
        stop = len(hs)
        for k in range(1, len(hs)):
            try:
                tri[k] = lab.step_to(complex(0.0, hs[k - 1]), tri[k - 1], complex(0.0, hs[k]))
            except BranchPointProximity:
                stop = k
                break
        for k in range(stop, len(hs)):
            tri[k] = match_many(tri[k - 1][None, :], self.curve.cubic_roots(np.array([1j * hs[k]])))[0]
        self.h = hs[::-1].copy()
        self.tri = tri[::-1].copy()
        self.h_reliable = hs[stop - 1]
        s_ref = tri[stop - 1, 1] - tri[stop - 1, 2]
        self.sign_ref = 1.0 if s_ref.real >= 0 else -1.0

    def s(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        idx = np.clip(np.searchsorted(self.h, y), 0, len(self.h) - 1)
        left = np.clip(idx - 1, 0, len(self.h) - 1)
        near = np.where(np.abs(self.h[left] - y) < np.abs(self.h[idx] - y), left, idx)
        r = match_many(self.tri[near], self.curve.cubic_roots(1j * y))
        s = r[:, 1] - r[:, 2]
        low = y < self.h_reliable
        s = np.where(low, self.sign_ref * np.abs(s.real) + 1j * s.imag, s)
        return s


@dataclass
class ConstrainedPair:
    """``nu1`` on the real line and ``nu2`` on the imaginary axis.

    ``nu2`` is stored for ``y >= 0`` (it is even) as a quadrature rule on the
    free part ``[y*, Y]`` plus the saturated segment and an algebraic tail
    beyond the truncation height ``Y``.
    """

    nu1: DensityProfile
    nu2_rule: MeasureRule
    y_star: float
    sigma_level: float
    field: _AxisField
    truncation: float
    tail_coefficient: float
    notes: list = field(default_factory=list)

    def nu2_density(self, y) -> np.ndarray:
        """Density of ``nu2`` per unit arc length at height ``y``."""
        y = np.abs(np.atleast_1d(np.asarray(y, dtype=float)))
        out = np.full(y.shape, self.sigma_level)
        free = y > self.y_star if self.y_star > 0 else np.ones(y.shape, dtype=bool)
        if np.any(free):
            s = self.field.s(y[free])
            out[free] = self.sigma_level - s.real / (2 * np.pi)
        return out

    @property
    def tail_mass(self) -> float:
        return 2 * self.tail_coefficient / (2 * np.pi * self.truncation)

    @property
    def nu2_mass(self) -> float:
        return 2 * self.y_star * self.sigma_level + self.nu2_rule.mass + self.tail_mass

    @property
    def nu1_mass(self) -> float:
        return self.nu1.mass

    def nu2_potential(self, z, heights=None) -> np.ndarray:
        """``U^nu2(z)``; ``heights`` marks targets lying on the upper axis."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        params = None
        if heights is not None:
            params = [h if (h is not None and h > self.y_star) else None for h in heights]
        free = self.nu2_rule.potential(z, params)
        return free + self._segment_potential(z) + self._tail_potential(z)

    def _segment_potential(self, z):
        if self.y_star == 0.0:
            return np.zeros(z.shape)
        x, y = np.abs(z.real), z.imag

        def G(s):
            # antiderivative of log|x + i s| in s
            with np.errstate(divide="ignore", invalid="ignore"):
                r2 = x * x + s * s
                lg = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
                at = np.where(x > 0, x * np.arctan2(s, np.where(x > 0, x, 1.0)), 0.0)
            return 0.5 * s * lg - s + at

        integral = G(self.y_star - y) - G(-self.y_star - y)
        return -self.sigma_level * integral

    def _tail_potential(self, z):
        Y = self.truncation
        return np.full(z.shape, -2 * self.tail_coefficient / (2 * np.pi) * (1 + math.log(Y)) / Y)

    def to_csv(self, path: Path, heights=None) -> Path:
        path = Path(path)
        ys = self.nu2_rule.t if heights is None else np.asarray(heights, dtype=float)
        ys = np.concatenate([np.linspace(0, self.y_star, 9)[:-1], ys]) if heights is None else ys
        dens = self.nu2_density(ys)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["y", "density", "sigma_level"])
            for y, d in zip(ys, dens):
                wr.writerow([f"{float(y):.15e}", f"{float(d):.15e}", f"{self.sigma_level:.15e}"])
        return path

    def to_dict(self) -> dict:
        return {"y_star": self.y_star, "sigma_level": self.sigma_level, "nu1_mass": self.nu1_mass,
                "nu2_mass": self.nu2_mass, "truncation": self.truncation,
                "tail_mass": self.tail_mass, "notes": list(self.notes)}


def _nu1_profile(vcm: VectorCriticalMeasure, panels_per=12, order=16) -> DensityProfile:
    sup = vcm.regime.support
    rule = _real_rule(sup.intervals, lambda t: density(vcm.curve, t), list(sup.interior_zeros), panels_per, order)
    samples = np.column_stack([rule.t, (rule.w / rule.qw)])
    return DensityProfile("nu1", list(sup.intervals), samples, rule.mass, rule)


def build_constrained_pair(curve: SpectralCurve, regime: RegimeReport, vcm: VectorCriticalMeasure,
                           panels_per: int = 12, order: int = 16, density_floor: float = 1e-10,
                           max_height: float = 1e5) -> ConstrainedPair:
    """Assemble ``(nu1, nu2)`` from the critical measure of a symmetric curve.

    The axis integral is truncated at the height ``Y`` where the density
    drops below ``density_floor``; beyond it the density is ``c / (2 pi y^2)``
    with ``c`` estimated by Richardson extrapolation, and the tail mass and
    potential are added in closed form.
    """
    cert = check_symmetry(curve)
    if not cert.is_symmetric:
        raise NotSymmetricError(f"parity residuals {cert.residuals}")
    y_star = float(regime.y_star.imag) if regime.saturated else 0.0
    sigma = curve.a / np.pi
    scale = 1.0 + max(abs(v) for v in regime.support.hull)

    # tail coefficient from two far heights
    probe_h = np.array([8 * scale, 16 * scale, 32 * scale])
    probe = _AxisField(vcm, np.concatenate([probe_h, [2 * scale]]))
    c_of = 2 * np.pi * probe_h ** 2 * (sigma - probe.s(probe_h).real / (2 * np.pi))
    c_tail = float((4 * c_of[2] - c_of[1]) / 3)
    Y = min(max_height, max(32 * scale, math.sqrt(abs(c_tail) / (2 * np.pi * density_floor))))

    near = y_star + 2 * scale
    pans = []
    br = graded_breakpoints(y_star, near, grade_left=True, grade_right=False, n_uniform=panels_per, floor=1e-12)
    pans.extend(zip(br[:-1], br[1:]))
    edges = np.geomspace(near, Y, max(4, int(math.ceil(math.log2(Y / near))) + 1))
    for a, b in zip(edges[:-1], edges[1:]):
        sub = np.linspace(a, b, 3)
        pans.extend(zip(sub[:-1], sub[1:]))

    lo = np.array([p[0] for p in pans])
    hi = np.array([p[1] for p in pans])
    x, _ = gauss_legendre(order)
    nodes = (0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]).ravel()
    fld = _AxisField(vcm, np.concatenate([nodes, lo, [Y]]))

    def ev(t):
        t = np.asarray(t, dtype=float)
        return 1j * t, sigma - fld.s(t).real / (2 * np.pi)

    rule = MeasureRule(pans, ev, order, conjugate=True)
    notes = []
    s_im = np.max(np.abs(fld.s(nodes).imag))
    if s_im > 1e-8:
        notes.append(f"xi2 - xi3 not real on the axis (max imaginary part {s_im:.2e})")
    pair = ConstrainedPair(_nu1_profile(vcm, panels_per, order), rule, y_star, sigma, fld, float(Y), c_tail, notes)
    dens = pair.nu2_density(nodes)
    excess = float(np.max(dens - sigma))
    if excess > 1e-12 * sigma:
        raise ConstraintViolation(f"nu2 exceeds a/pi by {excess:.3e}",
                                  {"excess": excess, "at": float(nodes[np.argmax(dens)])})
    return pair


# --------------------------------------------------------------------------
# the piecewise potential H


def _inside(poly: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Even-odd rule for points ``z`` against the closed polygon ``poly``."""
    px, py = poly.real, poly.imag
    qx, qy = px[np.r_[1:len(px), 0]], py[np.r_[1:len(py), 0]]
    zx, zy = z.real[:, None], z.imag[:, None]
    cond = (py[None, :] > zy) != (qy[None, :] > zy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = px[None, :] + (zy - py[None, :]) * (qx - px)[None, :] / (qy - py)[None, :]
    return np.sum(cond & (zx < xint), axis=1) % 2 == 1


@dataclass
class HFunction:
    """``H1 = U1 - U3`` left of the axis, ``H2 = U2 + U3`` right of it,
    ``H3 = U2 + U3 + 2a Re z`` inside the region cut off by Delta_3."""

    vcm: VectorCriticalMeasure
    y_star: float

    @property
    def region3(self) -> np.ndarray | None:
        if not self.vcm.regime.saturated:
            return None
        up = np.asarray(self.vcm.mu3.support, dtype=complex)
        return np.concatenate([up, np.conj(up[::-1])[1:]])

    def domain(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.where(z.real > 0, 2, 1)
        poly = self.region3
        if poly is not None:
            out = np.where((z.real <= 0) & _inside(poly, z), 3, out)
        return out

    def pieces(self, z, params=None) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        U1, U2, U3 = self.vcm.potentials(z, params)
        a = self.vcm.curve.a
        return np.array([U1 - U3, U2 + U3, U2 + U3 + 2 * a * z.real])

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        P = self.pieces(z)
        d = self.domain(z)
        return P[d - 1, np.arange(len(z))]


def _grid_by_domain(H: HFunction, hull: float, n: int, clearance: float):
    xs = np.linspace(-1.5 * hull, 1.5 * hull, n)
    ys = np.linspace(-1.2 * hull, 1.2 * hull, n)
    Z = (xs[None, :] + 1j * ys[:, None]).ravel()
    keep = np.abs(Z.real) > clearance
    keep &= np.abs(Z.imag) > clearance
    if H.region3 is not None:
        poly = H.region3
        d = np.min(np.abs(Z[:, None] - poly[None, :]), axis=1)
        keep &= d > clearance
    Z = Z[keep]
    dom = H.domain(Z)
    return {j: Z[dom == j] for j in (1, 2, 3)}


def _region3_samples(H: HFunction, n: int):
    """Points strictly inside the region enclosed by Delta_3 and the saturated segment."""
    up = np.asarray(H.vcm.mu3.support, dtype=complex)
    k = np.linspace(0.15, 0.85, n) * (len(up) - 1)
    arc = up[k.astype(int)]
    pts = []
    for p in arc:
        for f in (0.3, 0.6):
            q = f * p + (1 - f) * 1j * p.imag
            pts.extend([q, np.conj(q)])
    pts = np.array(pts)
    return pts[H.domain(pts) == 3]


def verify_potential_identities(curve: SpectralCurve, pair: ConstrainedPair, vcm: VectorCriticalMeasure,
                     n_axis: int = 20, n_grid: int = 9, tol: float = 1e-5) -> dict:
    """Residuals of the potential identities behind the balayage statement.

    * ``2 U^nu2 - U^nu1`` vanishes on the free axis and is ``<= 0`` on the
      saturated segment;
    * ``U^nu2 = H`` on sample grids in each domain;
    * the pieces of ``H`` agree on each interface.
    """
    y_star = pair.y_star
    hull = max(abs(v) for v in vcm.regime.support.hull)
    lo = y_star * 1.02 if y_star > 0 else 1e-3 * (1 + hull)
    y_eq = np.geomspace(lo, 6 * (1 + hull), n_axis)
    z_eq = 1j * y_eq
    U1 = pair.nu1.potential(z_eq)
    eq = 2 * pair.nu2_potential(z_eq, list(y_eq)) - U1
    report = {"equality_heights": y_eq.tolist(), "equality_residual": float(np.max(np.abs(eq)))}

    if y_star > 0:
        y_in = y_star * np.array([0.125, 0.25, 0.5, 0.75, 0.9])
        z_in = 1j * y_in
        ineq = 2 * pair.nu2_potential(z_in) - pair.nu1.potential(z_in)
        report["inequality_heights"] = y_in.tolist()
        report["inequality_values"] = ineq.tolist()
        report["inequality_max"] = float(np.max(ineq))
        report["inequality_at_half"] = float(ineq[2])
    else:
        report["inequality_max"] = None

    H = HFunction(vcm, y_star)
    grids = _grid_by_domain(H, 1 + hull, n_grid, clearance=0.05 * (1 + hull))
    if H.region3 is not None:
        grids[3] = np.concatenate([grids[3], _region3_samples(H, 6)])
    h_res = {}
    for j, Z in grids.items():
        if len(Z) == 0:
            h_res[f"H{j}"] = None
            continue
        Zu = Z[Z.imag > 0]  # even symmetry under conjugation
        diff = pair.nu2_potential(Zu) - H.pieces(Zu)[j - 1]
        h_res[f"H{j}"] = float(np.max(np.abs(diff)))
    report["h_identity"] = h_res
    report["h_identity_max"] = max(v for v in h_res.values() if v is not None)

    cont = {}
    y_free = y_eq[::4]
    P = H.pieces(1j * y_free)
    cont["free_axis"] = float(np.max(np.abs(P[1] - P[0])))
    if vcm.arc is not None:
        vs = vcm.arc.V * np.linspace(0.1, 0.9, 7)
        zs = vcm.arc.points(vs)
        P3 = H.pieces(zs, [None, None, list(vs)])
        cont["delta3"] = float(np.max(np.abs(P3[2] - P3[0])))
        ys = y_star * np.linspace(0.1, 0.9, 5)
        Ps = H.pieces(1j * ys)
        cont["saturated_segment"] = float(np.max(np.abs(Ps[2] - Ps[1])))
    report["h_continuity"] = cont
    report["h_continuity_max"] = max(cont.values())

    xs = np.linspace(0.05, 0.95, 11) * hull
    d_pos, d_neg = density(curve, xs), density(curve, -xs)
    report["nu1_parity"] = float(np.max(np.abs(d_pos - d_neg)))
    report["nu2_below_sigma"] = bool(np.all(pair.nu2_density(y_eq) < pair.sigma_level))
    report["nu1_mass_error"] = pair.nu1_mass - 1.0
    report["nu2_mass_error"] = pair.nu2_mass - 0.5
    report["passed"] = bool(report["equality_residual"] < tol and report["h_identity_max"] < tol
                            and abs(report["nu2_mass_error"]) < 1e-6 and report["nu2_below_sigma"]
                            and (report["inequality_max"] is None or report["inequality_max"] < 0))
    return report
