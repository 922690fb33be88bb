"""The vector critical measure: Delta-splitting, densities, and residuals of its identities.

With ``s = xi2 - xi3`` the three measures are

* ``mu1 = (1/2 pi i)(xi1 - xi2)_+ dx`` on ``Delta_1`` (right of x*),
* ``mu2 = (1/2 pi i)(xi1 - xi3)_+ dx`` on ``Delta_2`` (left of x*),
* ``mu3 = (1/2 pi i) s_+ dz`` on ``Delta_3``.

On a vertical trajectory ``s dz`` is purely imaginary, so ``mu3`` is the
uniform measure ``dv / 2 pi`` in the parameter ``v = |Im int s dz|``. Points
of ``Delta_3`` at given ``v`` are found by Newton's method on that
invariant, which keeps them on the exact trajectory.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .curve import Labeler, SpectralCurve, density
from .numerics import PrecisionConfig, gauss_legendre, graded_breakpoints
from .quad_diff import (
    GammaStar,
    InconsistencyError,
    RegimeReport,
    SheetQD,
    _chord_integrals,
    _radial_values,
    genus_of,
    match_many,
)

log = logging.getLogger(__name__)

__all__ = [
    "InteractionMatrix",
    "ExternalFields",
    "DeltaSplit",
    "split_delta",
    "MeasureRule",
    "ArcParametrization",
    "DensityProfile",
    "VectorCriticalMeasure",
    "extract_measures",
    "cauchy_residuals",
    "variational_residuals",
    "s_property_study",
    "genus",
    "ExtractionFailure",
    "default_zgrid",
    "component_periods",
]


class ExtractionFailure(RuntimeError):
    """A measure density came out negative beyond tolerance."""


@dataclass(frozen=True)
class InteractionMatrix:
    """The fixed interaction matrix of the three-measure energy."""

    matrix: tuple = ((1.0, 0.5, -0.5), (0.5, 1.0, 0.5), (-0.5, 0.5, 1.0))

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix)

    def __getitem__(self, ij):
        i, j = ij
        return self.matrix[i][j]


B = InteractionMatrix()


@dataclass(frozen=True)
class ExternalFields:
    """``phi1 = Re(V - a z)``, ``phi2 = Re(V + a z)``, ``phi3 = 2 a Re z``."""

    curve: SpectralCurve

    def phi(self, j: int, z):
        z = np.asarray(z, dtype=complex)
        a = self.curve.a
        Vz = np.asarray(self.curve.V(z), dtype=complex)
        if j == 1:
            return (Vz - a * z).real
        if j == 2:
            return (Vz + a * z).real
        if j == 3:
            return 2 * a * z.real
        raise ValueError("j must be 1, 2 or 3")


# --------------------------------------------------------------------------
# Delta splitting


@dataclass
class DeltaSplit:
    delta1: list
    delta2: list
    x_star: float
    path_note: str
    sign_samples: list = field(default_factory=list)

    def to_dict(self):
        return {"delta1": [list(i) for i in self.delta1], "delta2": [list(i) for i in self.delta2],
                "x_star": self.x_star, "path": self.path_note}


def labeler_for(curve: SpectralCurve, regime: RegimeReport, gamma: GammaStar | None,
                cfg: PrecisionConfig | None = None) -> Labeler:
    """Global labeler with Delta_3 as the (2,3)-cut in the saturated case."""
    cuts = [gamma.delta3_upper] if (regime.saturated and gamma is not None) else []
    return Labeler(curve, cuts=cuts, cfg=cfg, branch=regime.branch)


def split_delta(curve: SpectralCurve, regime: RegimeReport, gamma: GammaStar | None = None,
                lab: Labeler | None = None, samples: int = 200) -> DeltaSplit:
    """Assign support pieces to Delta_1 (``Im s_+ < 0``) and Delta_2 (``Im s_+ > 0``).

    Labels come from a vertical descent from the anchor circle followed by a
    horizontal sweep just above the axis, with Delta_3 as the only cut.
    """
    if regime.saturated and gamma is None:
        raise ValueError("saturated regime needs Gamma* for the splitting")
    lab = lab or labeler_for(curve, regime, gamma)
    x_star = regime.x_star
    d1, d2, recs = [], [], []

    def sign_at(xs):
        tv = lab.sweep_real(np.asarray(xs, dtype=float))
        return np.sign((tv[:, 1] - tv[:, 2]).imag)

    for a, b in regime.support.intervals:
        u = 0.5 * (1 - np.cos(np.pi * (np.arange(samples) + 0.5) / samples))
        xs = a + (b - a) * u
        sg = sign_at(xs)
        recs.append((a, b, xs, sg))
        changes = np.nonzero(sg[1:] != sg[:-1])[0]
        if len(changes) == 0:
            (d1 if sg[0] < 0 else d2).append((a, b))
            continue
        if len(changes) > 1:
            raise InconsistencyError(f"several sign changes of Im(xi2-xi3)+ on [{a}, {b}]")
        k = changes[0]
        lo, hi = xs[k], xs[k + 1]
        if x_star is None or not (lo - 1e-9 <= x_star <= hi + 1e-9):
            raise InconsistencyError(f"sign change in [{lo}, {hi}] without a Delta_3 crossing or triple point")
        if sg[k] > 0 and sg[k + 1] < 0:
            d2.append((a, x_star))
            d1.append((x_star, b))
        else:
            raise InconsistencyError("Delta_1 found to the left of Delta_2")
    if x_star is None:
        left = max((iv[1] for iv in d2), default=None)
        right = min((iv[0] for iv in d1), default=None)
        x_star = right if right is not None else left
    note = ("vertical descent from the anchor circle to height 1e-7, horizontal sweep right to left, "
            "vertical drop to the axis; xi2/xi3 swapped on crossing Delta_3")
    return DeltaSplit(sorted(d1), sorted(d2), float(x_star), note, recs)


# --------------------------------------------------------------------------
# quadrature for measures


class MeasureRule:
    """Panel Gauss rule for a measure given by a parametrization.

    ``evaluate(params)`` returns ``(points, weight_density)`` such that
    ``int f dmu = int f(points(t)) weight_density(t) dt`` over the panels.
    """

    def __init__(self, panels: Sequence[tuple[float, float]], evaluate: Callable, order: int = 16,
                 conjugate: bool = False):
        self.panels = [(float(a), float(b)) for a, b in panels]
        self.evaluate = evaluate
        self.order = order
        self.conjugate = conjugate
        x, w = gauss_legendre(order)
        lo = np.array([p[0] for p in self.panels])
        hi = np.array([p[1] for p in self.panels])
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        z, dens = evaluate(t)
        self.t = t
        self.z = np.asarray(z, dtype=complex)
        self.qw = (half[:, None] * w[None, :]).ravel()
        self.w = (np.asarray(dens) * self.qw).real
        n = len(self.panels)
        self.z_pan = self.z.reshape(n, order)
        self.w_pan = self.w.reshape(n, order)
        ends, _ = evaluate(np.concatenate([lo, hi]))
        ends = np.asarray(ends, dtype=complex)
        self.z_lo, self.z_hi = ends[:n], ends[n:]
        self.size = np.maximum(np.abs(self.z_hi - self.z_lo), np.max(np.abs(self.z_pan - self.z_lo[:, None]), axis=1))

    @property
    def mass(self) -> float:
        total = float(np.sum(self.w))
        return 2 * total if self.conjugate else total

    def all_points(self):
        if self.conjugate:
            return np.concatenate([self.z, np.conj(self.z)]), np.concatenate([self.w, self.w])
        return self.z, self.w

    def _refined(self, lo, hi, target, t_on, kernel, max_depth=60):
        """Adaptive sum of ``kernel(points, target) * weights`` on one panel.

        Panels are halved until their distance to the target is at least
        their size; a target on the support becomes a breakpoint.
        """
        x, w = gauss_legendre(self.order)
        gap = 1e-9 * (hi - lo)
        inside = t_on is not None and lo + gap < t_on < hi - gap
        level = [(lo, t_on), (t_on, hi)] if inside else [(lo, hi)]
        total = 0.0
        floor = 1e-12 * (1 + abs(target))
        for depth in range(max_depth + 1):
            if not level:
                break
            ab = np.array(level)
            mid, half = 0.5 * (ab[:, 0] + ab[:, 1]), 0.5 * (ab[:, 1] - ab[:, 0])
            tt = (mid[:, None] + half[:, None] * x[None, :]).ravel()
            zz, dens = self.evaluate(np.concatenate([tt, ab[:, 0], ab[:, 1]]))
            zz = np.asarray(zz, dtype=complex)
            n, m = len(level), len(tt)
            dens = np.asarray(dens)[:m].reshape(n, -1)
            znodes = zz[:m].reshape(n, -1)
            za, zb = zz[m:m + n], zz[m + n:]
            size = np.maximum(np.abs(zb - za), np.max(np.abs(znodes - za[:, None]), axis=1))
            dist = np.minimum(np.min(np.abs(znodes - target), axis=1), np.minimum(np.abs(za - target), np.abs(zb - target)))
            split = (dist < size) & (size > floor) & (depth < max_depth)
            keep = ~split
            if np.any(keep):
                total = total + np.sum(kernel(znodes[keep], target) * (dens[keep] * half[keep, None] * w[None, :]).real)
            level = [(a, 0.5 * (a + b)) for (a, b) in ab[split]] + [(0.5 * (a + b), b) for (a, b) in ab[split]]
        return total

    def apply(self, kernel: Callable, targets: np.ndarray, target_params: Sequence | None = None):
        """``sum_nodes kernel(node, target) weight`` with refinement near each target."""
        targets = np.atleast_1d(np.asarray(targets, dtype=complex))
        res = []
        for q, p in enumerate(targets):
            tp = None if target_params is None else target_params[q]
            val = 0.0
            for half_sign in ((1, -1) if self.conjugate else (1,)):
                pp = p if half_sign == 1 else np.conj(p)
                tpp = tp if half_sign == 1 else (tp if np.isreal(p) else None)
                k = lambda zz, t, _s=half_sign: kernel(zz if _s == 1 else np.conj(zz),
                                                      t if _s == 1 else np.conj(t))
                dist = np.min(np.abs(self.z_pan - pp), axis=1)
                dist = np.minimum(dist, np.minimum(np.abs(self.z_lo - pp), np.abs(self.z_hi - pp)))
                near = dist < self.size
                if tpp is not None:
                    near |= np.array([a <= tpp <= b for a, b in self.panels])
                far_z, far_w = self.z_pan[~near].ravel(), self.w_pan[~near].ravel()
                val = val + np.sum(k(far_z, pp) * far_w)
                for idx in np.nonzero(near)[0]:
                    a, b = self.panels[idx]
                    tq = tpp if (tpp is not None and a <= tpp <= b) else None
                    val = val + self._refined(a, b, pp, tq, k)
            res.append(val)
        return np.array(res)

    def potential(self, targets, target_params=None) -> np.ndarray:
        """``U(p) = int log(1/|p - t|) dmu(t)``."""
        ker = lambda zz, p: -np.log(np.abs(p - zz))
        return np.real(self.apply(ker, targets, target_params))

    def cauchy(self, targets) -> np.ndarray:
        """``C(z) = int dmu(t) / (t - z)`` for ``z`` off the support."""
        ker = lambda zz, p: 1.0 / (zz - p)
        return self.apply(ker, targets).astype(complex)


def _real_rule(intervals, dens_fn, breaks=(), panels_per=12, order=16):
    pans = []
    for a, b in intervals:
        cuts = sorted({a, b, *[x for x in breaks if a < x < b]})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            br = graded_breakpoints(lo, hi, n_uniform=panels_per)
            pans.extend(zip(br[:-1], br[1:]))
    if not pans:
        return None

    def ev(t):
        t = np.asarray(t, dtype=float)
        return t.astype(complex), dens_fn(t)

    return MeasureRule(pans, ev, order)


class ArcParametrization:
    """Points of the upper half of Delta_3 as a function of ``v = |Im int_{y*} s dz|``."""

    def __init__(self, qd: SheetQD, gamma1):
        self.qd = qd
        self.curve = qd.curve
        self.pair = qd.pair_index
        self.pts = np.asarray(gamma1.points)
        self.tri = np.asarray(gamma1.triples)
        inv = np.asarray(gamma1.invariant)
        self.sign = 1.0 if inv[-1].imag >= 0 else -1.0
        self.v_nodes = self.sign * inv.imag
        self.inv = inv
        if np.any(np.diff(self.v_nodes) <= 0):
            keep = np.concatenate([[True], np.diff(self.v_nodes) > 0])
            self.pts, self.tri, self.inv, self.v_nodes = self.pts[keep], self.tri[keep], inv[keep], self.v_nodes[keep]
        self.y_star = complex(self.pts[0])
        self.V = float(self.v_nodes[-1])

    @property
    def mass_upper(self) -> float:
        return self.V / (2 * np.pi)

    def _I_from(self, k, z):
        """``int_{y*}^{z} s dz`` using node ``k`` as base (radial rule from y* for k <= 1)."""
        z = np.asarray(z, dtype=complex)
        k = np.asarray(k)
        out = np.zeros(z.shape, dtype=complex)
        rad = k <= 1
        if np.any(rad):
            d = z[rad] - self.y_star
            tri = match_many(np.repeat(self.tri[1][None, :], int(rad.sum()), 0), self.curve.cubic_roots(z[rad]))
            out[rad] = _radial_values(self.curve, self.y_star, np.angle(d), tri, np.abs(d), self.pair)
        if np.any(~rad):
            kk = k[~rad]
            out[~rad] = self.inv[kk] + _chord_integrals(self.curve, self.pts[kk], z[~rad], self.tri[kk], self.pair)
        return out

    def s_at(self, k, z):
        z = np.asarray(z, dtype=complex)
        r = self.curve.cubic_roots(z)
        ref = self.tri[np.maximum(k, 1)]
        tri = match_many(ref, r)
        return tri[:, self.pair[0]] - tri[:, self.pair[1]]

    def points(self, v) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        vL = self.v_nodes[1]
        k = np.clip(np.searchsorted(self.v_nodes, v, side="right") - 1, 0, len(self.v_nodes) - 2)
        z = np.empty(v.shape, dtype=complex)
        small = v <= vL
        z[small] = self.y_star + (self.pts[1] - self.y_star) * np.cbrt(np.maximum(v[small], 0) / vL) ** 2
        kk = k[~small]
        frac = (v[~small] - self.v_nodes[kk]) / (self.v_nodes[kk + 1] - self.v_nodes[kk])
        z[~small] = self.pts[kk] + frac * (self.pts[kk + 1] - self.pts[kk])
        base = np.where(small, 0, k)
        for _ in range(8):
            I = self._I_from(base, z)
            s = self.s_at(base, z)
            dz = (I - 1j * self.sign * v) / np.where(np.abs(s) > 0, s, 1)
            z = z - dz
            if np.max(np.abs(dz)) < 1e-15 * (1 + np.max(np.abs(z))):
                break
        z[v <= 0] = self.y_star
        return z

    def tangent(self, v) -> np.ndarray:
        """Unit tangent ``dz/dv`` direction (from y* toward the real axis)."""
        z = self.points(v)
        v = np.atleast_1d(v)
        k = np.clip(np.searchsorted(self.v_nodes, v, side="right") - 1, 0, len(self.v_nodes) - 2)
        s = self.s_at(k, z)
        d = 1j * self.sign / s
        return d / np.abs(d)

    def rule(self, panels_per: int = 24, order: int = 16) -> MeasureRule:
        br = graded_breakpoints(0.0, self.V, grade_left=True, grade_right=False, n_uniform=panels_per)
        return MeasureRule(list(zip(br[:-1], br[1:])),
                           lambda t: (self.points(t), np.full(np.shape(t), 1 / (2 * np.pi))), order, conjugate=True)


@dataclass
class DensityProfile:
    """Samples and quadrature of one measure.

    ``support`` is a list of real intervals, or the upper polyline of
    Delta_3 (the conjugate half is implied).
    """

    name: str
    support: list | np.ndarray
    samples: np.ndarray
    mass: float
    rule: MeasureRule | None

    @property
    def is_zero(self) -> bool:
        return self.rule is None

    def potential(self, z, params=None):
        if self.rule is None:
            return np.zeros(np.shape(np.atleast_1d(z)))
        return self.rule.potential(z, params)

    def cauchy(self, z):
        if self.rule is None:
            return np.zeros(np.shape(np.atleast_1d(z)), dtype=complex)
        return self.rule.cauchy(z)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["re", "im", "density"])
            for loc, d in self.samples:
                loc = complex(loc)
                wr.writerow([f"{loc.real:.15e}", f"{loc.imag:.15e}", f"{float(np.real(d)):.15e}"])
        return path


@dataclass
class VectorCriticalMeasure:
    mu1: DensityProfile
    mu2: DensityProfile
    mu3: DensityProfile
    x_star: float | None
    split: DeltaSplit
    arc: ArcParametrization | None
    curve: SpectralCurve
    labeler: Labeler
    regime: RegimeReport
    residual_report: dict = field(default_factory=dict)

    @property
    def measures(self):
        return (self.mu1, self.mu2, self.mu3)

    def mass_relations(self) -> dict:
        m1, m2, m3 = self.mu1.mass, self.mu2.mass, self.mu3.mass
        al = self.curve.alpha
        return {"|mu1|+|mu2|-1": m1 + m2 - 1, "|mu1|-|mu3|-alpha": m1 - m3 - al, "|mu2|+|mu3|-(1-alpha)": m2 + m3 - (1 - al)}

    def potentials(self, z, params=None) -> np.ndarray:
        """``(U^mu1, U^mu2, U^mu3)`` at ``z``; ``params`` = per-measure parameter hints."""
        params = params or (None, None, None)
        return np.array([m.potential(z, p) for m, p in zip(self.measures, params)])

    def to_dict(self) -> dict:
        return {"masses": [self.mu1.mass, self.mu2.mass, self.mu3.mass], "x_star": self.x_star,
                "split": self.split.to_dict(), "mass_relations": self.mass_relations(),
                "residuals": self.residual_report}


def extract_measures(curve: SpectralCurve, regime: RegimeReport, gamma: GammaStar | None,
                     cfg: PrecisionConfig | None = None, panels_per: int = 12, order: int = 16,
                     tol: float = 1e-10, split: DeltaSplit | None = None, lab: Labeler | None = None) -> VectorCriticalMeasure:
    """Densities and quadrature rules of mu1, mu2, mu3.

    Sampled densities come from labeled boundary values; the refinement
    callables use the label-free form ``Im xi1+ / pi`` restricted to each
    Delta set, which agrees with the labeled form there.
    """
    cfg = cfg or PrecisionConfig()
    lab = lab or labeler_for(curve, regime, gamma, cfg)
    split = split or split_delta(curve, regime, gamma, lab)
    sup = regime.support
    breaks = list(sup.interior_zeros) + [split.x_star]

    profiles = []
    for name, ivs, pair in (("mu1", split.delta1, (0, 1)), ("mu2", split.delta2, (0, 2))):
        ivs = [tuple(iv) for iv in ivs if iv[1] > iv[0]]

        def fn(t, _ivs=ivs):
            t = np.asarray(t, dtype=float)
            inside = np.zeros(t.shape, dtype=bool)
            for a, b in _ivs:
                inside |= (t >= a) & (t <= b)
            return np.where(inside, density(curve, t), 0.0)

        rule = _real_rule(ivs, fn, breaks, panels_per, order) if ivs else None
        if rule is None:
            profiles.append(DensityProfile(name, [], np.zeros((0, 2)), 0.0, None))
            continue
        xs = rule.t
        tv = lab.sweep_real(xs)
        labeled = ((tv[:, pair[0]] - tv[:, pair[1]]) / (2j * np.pi))
        if np.max(np.abs(labeled.imag)) > 1e-6 * (1 + np.max(np.abs(labeled.real))):
            log.warning("%s: labeled density has an imaginary part %.2e", name, np.max(np.abs(labeled.imag)))
        vals = labeled.real
        neg = vals < -tol
        if np.any(neg):
            raise ExtractionFailure(f"{name} negative near x = {xs[np.argmax(neg)]:.6g}")
        profiles.append(DensityProfile(name, ivs, np.column_stack([xs, vals]), float(np.sum(vals * rule.qw)), rule))
    mu1, mu2 = profiles
    arc = None
    if regime.saturated:
        qd = SheetQD(curve, 1, lab, regime.branch, cfg)
        arc = ArcParametrization(qd, gamma.gamma1)
        rule3 = arc.rule(panels_per=2 * panels_per, order=order)
        vs = np.linspace(0, arc.V, 41)[1:-1]
        zs = arc.points(vs)
        mu3 = DensityProfile("mu3", gamma.delta3_upper, np.column_stack([zs, np.full(len(zs), 1 / (2 * np.pi))]),
                             rule3.mass, rule3)
    else:
        mu3 = DensityProfile("mu3", [], np.zeros((0, 2)), 0.0, None)
    return VectorCriticalMeasure(mu1, mu2, mu3, split.x_star, split, arc, curve, lab, regime)


# --------------------------------------------------------------------------
# residuals


def default_zgrid(regime: RegimeReport, n: int = 50, margin: float = 0.5) -> np.ndarray:
    """``n`` points on an ellipse enclosing the support (and Delta_3) at a fixed margin."""
    lo, hi = regime.support.hull
    cx, rx = 0.5 * (lo + hi), 0.5 * (hi - lo) + margin
    ry = (abs(regime.y_star.imag) if regime.y_star is not None else 0.0) + margin
    th = 2 * np.pi * (np.arange(n) + 0.5) / n
    return cx + rx * np.cos(th) + 1j * ry * np.sin(th)


def cauchy_residuals(curve: SpectralCurve, vcm: VectorCriticalMeasure, zgrid: Sequence[complex] | None = None) -> dict:
    """Max residuals of the three Cauchy-transform representations of xi1, xi2, xi3."""
    zgrid = default_zgrid(vcm.regime) if zgrid is None else np.asarray(zgrid, dtype=complex)
    keep = np.abs(zgrid.imag) > 1e-8
    notes = []
    if not np.all(keep):
        notes.append(f"{int(np.sum(~keep))} grid points on the real axis skipped")
    z = zgrid[keep]
    C1, C2, C3 = (m.cauchy(z) for m in vcm.measures)
    tri = np.array([vcm.labeler.solve(p) for p in z])
    dv = np.asarray(curve.V.dV(z), dtype=complex)
    a = curve.a
    r1 = np.max(np.abs(tri[:, 0] - (C1 + C2 + dv)))
    r2 = np.max(np.abs(tri[:, 1] - (C3 - C1 + a)))
    r3 = np.max(np.abs(tri[:, 2] - (-C2 - C3 - a)))
    return {"xi1": float(r1), "xi2": float(r2), "xi3": float(r3), "max": float(max(r1, r2, r3)), "notes": notes}


def _total_field(vcm: VectorCriticalMeasure, i: int, z, params=None):
    """``sum_k b_ik U^mu_k + phi_i / 2``."""
    U = vcm.potentials(z, params)
    Bm = B.as_array()
    phi = ExternalFields(vcm.curve).phi(i, z)
    return Bm[i - 1] @ U + 0.5 * phi


def _component_samples(iv, n):
    a, b = iv
    u = 0.5 * (1 - np.cos(np.pi * (np.arange(n) + 0.5) / n))
    return a + (b - a) * (0.02 + 0.96 * u)


def variational_residuals(curve: SpectralCurve, vcm: VectorCriticalMeasure, cfg: PrecisionConfig | None = None,
                          n_samples: int = 24, h_values: Sequence[float] = (1e-2, 1e-3, 1e-4),
                          energy: bool = True) -> dict:
    """Per-component constants, S-property residuals and the vector energy."""
    comps = []
    for i, prof in ((1, vcm.mu1), (2, vcm.mu2)):
        for iv in prof.support:
            xs = _component_samples(iv, n_samples)
            params = [xs if k == i - 1 else None for k in range(3)]
            vals = _total_field(vcm, i, xs.astype(complex), [p if p is None else list(p) for p in params])
            comps.append({"measure": i, "component": list(iv), "mean": float(np.mean(vals)),
                          "max_deviation": float(np.max(np.abs(vals - np.mean(vals)))), "ell": float(2 * np.mean(vals))})
    s_prop = None
    if vcm.arc is not None:
        arc = vcm.arc
        vs = arc.V * (0.1 + 0.8 * (np.arange(n_samples) + 0.5) / n_samples)
        zs = arc.points(vs)
        params = [None, None, list(vs)]
        vals = _total_field(vcm, 3, zs, params)
        comps.append({"measure": 3, "component": "Delta_3", "mean": float(np.mean(vals)),
                      "max_deviation": float(np.max(np.abs(vals - np.mean(vals)))), "ell": float(2 * np.mean(vals))})
        s_prop = s_property_study(vcm, h_values)
    out = {"per_component_constants": comps,
           "constancy_max": float(max(c["max_deviation"] for c in comps)) if comps else 0.0}
    if s_prop is not None:
        out["s_property"] = s_prop
        out["s_property_max"] = float(max(s_prop["residuals"]))
    else:
        out["s_property_max"] = 0.0
    if energy:
        out["energy"] = vector_energy(vcm)
    return out


def s_property_study(vcm: VectorCriticalMeasure, h_values: Sequence[float] = (1e-2, 1e-3, 1e-4),
                     fractions: Sequence[float] = (0.3, 0.5, 0.7)) -> dict:
    """``max_p |W(p + h n) - W(p - h n)| / h`` across Delta_3 for each ``h``.

    ``W = 2 U^mu3 - U^mu1 + U^mu2 + phi3``. Equal normal derivatives make
    the residual ``O(h)``; the fitted log-log slope is returned.
    """
    arc = vcm.arc
    vs = arc.V * np.asarray(fractions)
    ps = arc.points(vs)
    ns = 1j * arc.tangent(vs)
    res = []
    for h in h_values:
        plus, minus = ps + h * ns, ps - h * ns
        Wp = 2 * _total_field(vcm, 3, plus)
        Wm = 2 * _total_field(vcm, 3, minus)
        res.append(float(np.max(np.abs(Wp - Wm)) / h))
    hs = np.log(np.asarray(h_values))
    slope = float(np.polyfit(hs, np.log(np.maximum(res, 1e-300)), 1)[0])
    return {"h": list(h_values), "residuals": res, "slope": slope}


def vector_energy(vcm: VectorCriticalMeasure) -> float:
    """``sum_jk b_jk I(mu_j, mu_k) + sum_j int phi_j dmu_j``.

    Each mutual energy is ``int U^{mu_k} dmu_j`` with the potential evaluated
    at the nodes of ``mu_j``; self terms refine around each node.
    """
    fields = ExternalFields(vcm.curve)
    Bm = B.as_array()
    total = 0.0
    rules = [m.rule for m in vcm.measures]
    for j, rj in enumerate(rules):
        if rj is None:
            continue
        zj, wj = rj.all_points()
        params_j = np.concatenate([rj.t, rj.t]) if rj.conjugate else rj.t
        total += float(np.sum(fields.phi(j + 1, zj) * wj))
        for k, rk in enumerate(rules):
            if rk is None or Bm[j, k] == 0:
                continue
            if k == j:
                Uk = rk.potential(zj, list(params_j))
            else:
                Uk = rk.potential(zj)
            total += Bm[j, k] * float(np.sum(Uk * wj))
    return total


def component_periods(vcm: VectorCriticalMeasure) -> list[dict]:
    """Connected components of Delta_1 u Delta_2 u Delta_3 with their mass combination.

    Returns dicts with ``id``, bounding ``box`` (xmin, xmax, ymax), the
    ``sheets`` present and ``mass_combination = (-mu1 + mu2 + 2 mu3)(Delta)``.
    """
    pieces = [(iv, 1) for iv in vcm.mu1.support] + [(iv, 2) for iv in vcm.mu2.support]
    pieces.sort(key=lambda p: p[0][0])

    def mass_on(prof, iv):
        if prof.rule is None:
            return 0.0
        zs, ws = prof.rule.z.real, prof.rule.w
        m = (zs >= iv[0] - 1e-14) & (zs <= iv[1] + 1e-14)
        return float(np.sum(ws[m]))

    comps = []
    for iv, j in pieces:
        m = mass_on(vcm.mu1 if j == 1 else vcm.mu2, iv)
        if comps and abs(comps[-1]["box"][1] - iv[0]) < 1e-12:
            c = comps[-1]
            c["box"] = (c["box"][0], iv[1], 0.0)
            c["sheets"].add(j)
            c["mass_combination"] += (-m if j == 1 else m)
        else:
            comps.append({"box": (iv[0], iv[1], 0.0), "sheets": {j}, "mass_combination": (-m if j == 1 else m)})
    if vcm.arc is not None:
        d3 = vcm.mu3.support
        box3 = (float(np.min(d3.real)), float(np.max(d3.real)), float(np.max(np.abs(d3.imag))))
        x_star = vcm.x_star
        host = [c for c in comps if c["box"][0] - 1e-12 <= x_star <= c["box"][1] + 1e-12]
        if host:
            c = host[0]
            c["box"] = (min(c["box"][0], box3[0]), max(c["box"][1], box3[1]), box3[2])
            c["sheets"].add(3)
            c["mass_combination"] += 2 * vcm.mu3.mass
        else:
            comps.append({"box": box3, "sheets": {3}, "mass_combination": 2 * vcm.mu3.mass})
    for k, c in enumerate(sorted(comps, key=lambda c: c["box"][0])):
        c["id"] = f"D{k}"
    return comps


def genus(regime: RegimeReport, support=None) -> int:
    """``l - 2`` (unsaturated) or ``l - 1`` (saturated); singular transitions keep the regular value."""
    sup = support or regime.support
    return genus_of(regime.regime, sup.l)[0]


def export_report(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, default=float))
    return path
