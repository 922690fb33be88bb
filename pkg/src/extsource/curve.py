"""The cubic spectral curve and its globally labeled solution branches.

A curve is ``F(xi, z) = xi**3 + p2(z) xi**2 + p1(z) xi + p0(z)`` with
``p2 = -V'``. Its three branches are labeled at infinity by

    xi1 ~ V'(z) - 1/z,   xi2 ~ a + alpha/z,   xi3 ~ -a + (1 - alpha)/z,

and continued inward. Labels of ``xi2``/``xi3`` are swapped whenever a
continuation path crosses one of the registered (2,3)-cuts; ``xi1`` is
analytic off the real axis, so it never needs a cut in the open half planes.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import (
    ContractViolation,
    DomainError,
    Potential,
    PrecisionConfig,
    RealPoly,
    graded_breakpoints,
    panel_rule,
    roots,
)

__all__ = [
    "SpectralCurve",
    "pastur_curve",
    "RootTriple",
    "LabelCertificate",
    "BranchPointProximity",
    "ReducibleCurveError",
    "Labeler",
    "BranchPoint",
    "BranchPointSet",
    "branch_points",
    "SupportSet",
    "support",
    "density",
    "AdmissibilityReport",
    "admissibility_check",
    "LocalBehavior",
    "classify_local_behaviors",
    "save_density_csv",
]

_PERMS = list(itertools.permutations(range(3)))


class BranchPointProximity(ValueError):
    """Evaluation requested too close to a branch point."""


class ReducibleCurveError(ValueError):
    """The discriminant vanishes identically."""


@dataclass(frozen=True)
class SpectralCurve:
    """Admissible-curve candidate ``(V, a, alpha, p1, p0)``; ``p2 = -V'`` is derived."""

    V: Potential
    a: float
    alpha: float
    p1: RealPoly
    p0: RealPoly

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError("a must be positive")
        if self.p1.degree > self.V.m - 2 and not self.p1.is_zero():
            raise DomainError("deg p1 must not exceed m - 2")

    @property
    def m(self) -> int:
        return self.V.m

    @property
    def p2(self) -> RealPoly:
        return -self.V.dV

    @functools.cached_property
    def discriminant(self) -> RealPoly:
        """``disc_xi F`` as a polynomial in ``z``."""
        b, c, d = self.p2, self.p1, self.p0
        disc = 18 * (b * c * d) - 4 * (b * b * b * d) + b * b * c * c - 4 * (c * c * c) - 27 * (d * d)
        if disc.is_zero():
            raise ReducibleCurveError("discriminant vanishes identically")
        return disc

    def coefficients(self, z):
        """``(p2(z), p1(z), p0(z))``."""
        return self.p2(z), self.p1(z), self.p0(z)

    def F(self, xi, z):
        b, c, d = self.coefficients(z)
        return ((xi + b) * xi + c) * xi + d

    def F_xi(self, xi, z):
        b, c, _ = self.coefficients(z)
        return (3 * xi + 2 * b) * xi + c

    def cubic_roots(self, z) -> np.ndarray:
        """Unlabeled roots at ``z`` (any shape), with two Newton polishing steps.

        Returns an array of shape ``z.shape + (3,)``.
        """
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        zf = z.ravel()
        b, c, d = (np.asarray(p(zf), dtype=complex) * np.ones_like(zf) for p in (self.p2, self.p1, self.p0))
        comp = np.zeros((zf.size, 3, 3), dtype=complex)
        comp[:, 0, 0] = -b
        comp[:, 0, 1] = -c
        comp[:, 0, 2] = -d
        comp[:, 1, 0] = 1
        comp[:, 2, 1] = 1
        r = np.linalg.eigvals(comp)
        for _ in range(2):
            f = ((r + b[:, None]) * r + c[:, None]) * r + d[:, None]
            fp = (3 * r + 2 * b[:, None]) * r + c[:, None]
            scale = np.abs(r) ** 2 + np.abs(b[:, None] * r) + np.abs(c[:, None]) + 1e-300
            ok = np.abs(fp) > 1e-6 * scale
            step = np.where(ok, f / np.where(ok, fp, 1), 0)
            # reject polishing steps that jump toward another root
            small = np.abs(step) < 0.1 * (1 + np.abs(r))
            r = np.where(small, r - step, r)
        return r.reshape(shape + (3,))

    def asymptotic_triple(self, z: complex) -> np.ndarray:
        """Leading terms of the three labeled expansions at ``z``."""
        dv = complex(self.V.dV(z))
        return np.array([dv - 1 / z, self.a + self.alpha / z, -self.a + (1 - self.alpha) / z])

    # ----------------------------------------------------------------- io
    def to_dict(self) -> dict:
        return {
            "v": [float(x) for x in self.V.vcoeffs],
            "a": float(self.a),
            "alpha": float(self.alpha),
            "p1": self.p1.as_list(),
            "p0": self.p0.as_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralCurve":
        missing = [k for k in ("v", "a", "alpha", "p1", "p0") if k not in d]
        if missing:
            raise KeyError(f"curve document missing fields: {missing}")
        return cls(Potential(tuple(float(x) for x in d["v"])), float(d["a"]), float(d["alpha"]),
                   RealPoly(tuple(float(x) for x in d["p1"])), RealPoly(tuple(float(x) for x in d["p0"])))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def pastur_curve(a: float, alpha: float = 0.5) -> SpectralCurve:
    """Gaussian-potential curve ``xi^3 - z xi^2 + (1-a^2) xi + a^2 z + a(2 alpha - 1)``.

    The lower coefficients follow from Vieta's relations and the three
    expansions at infinity for ``V = z**2/2``.
    """
    V = Potential.gaussian()
    p1 = RealPoly((1.0 - a * a,))
    p0 = RealPoly((a * (2 * alpha - 1), a * a))
    return SpectralCurve(V, float(a), float(alpha), p1, p0)


class LabelCertificate(str, Enum):
    ASYMPTOTIC_ANCHOR = "AsymptoticAnchor"
    CONTINUATION_STEP = "ContinuationStep"


@dataclass(frozen=True)
class RootTriple:
    z: complex
    xi: tuple
    label_certificate: LabelCertificate

    @property
    def xi1(self) -> complex:
        return self.xi[0]

    @property
    def xi2(self) -> complex:
        return self.xi[1]

    @property
    def xi3(self) -> complex:
        return self.xi[2]


def match_permutation(prev: np.ndarray, new: np.ndarray) -> tuple[np.ndarray, float]:
    """Reorder ``new`` to best match ``prev``; return the ordered roots and the max displacement."""
    best, bestc = None, np.inf
    for p in _PERMS:
        c = np.max(np.abs(new[list(p)] - prev))
        if c < bestc:
            best, bestc = p, c
    return new[list(best)], float(bestc)


def _min_sep(r: np.ndarray) -> float:
    return float(min(abs(r[0] - r[1]), abs(r[0] - r[2]), abs(r[1] - r[2])))


def _root_seps(r: np.ndarray) -> np.ndarray:
    """Distance from each root to its nearest neighbour."""
    d01, d02, d12 = abs(r[0] - r[1]), abs(r[0] - r[2]), abs(r[1] - r[2])
    return np.array([min(d01, d02), min(d01, d12), min(d02, d12)])


def _unambiguous(prev: np.ndarray, new: np.ndarray) -> bool:
    return bool(np.all(np.abs(new - prev) < 0.45 * _root_seps(new)))


def _segments_cross(a: complex, b: complex, edges: np.ndarray) -> int:
    """Number of proper crossings of segment ``ab`` with edges ``(k, 2)`` complex."""
    if edges.size == 0:
        return 0
    p, q = edges[:, 0], edges[:, 1]

    def orient(u, v, w):
        return np.sign(((v - u) * np.conj(w - u)).imag)

    d1 = orient(a, b, p)
    d2 = orient(a, b, q)
    d3 = orient(p, q, a)
    d4 = orient(p, q, b)
    # half-open rule on the edge endpoints avoids double counting at vertices
    hit = (d1 * d2 < 0) | ((d1 == 0) & (d2 != 0))
    hit &= d3 * d4 < 0
    return int(np.count_nonzero(hit))


class Labeler:
    """Globally consistent labels by analytic continuation from the anchor circle.

    Parameters
    ----------
    curve : SpectralCurve
    cuts : sequence of polylines in the closed upper half plane across which
        ``xi2`` and ``xi3`` are exchanged. Their conjugates are implied.
    cfg : PrecisionConfig
    anchor_radius : float, optional
        Defaults to ``4 * (1 + max |branch point|)``.
    margin : float
        Steps never exceed ``margin`` times the distance to the nearest
        branch point.
    """

    def __init__(self, curve: SpectralCurve, cuts: Sequence[np.ndarray] | None = None,
                 cfg: PrecisionConfig | None = None, anchor_radius: float | None = None, margin: float = 0.5,
                 branch: "BranchPointSet | None" = None):
        self.curve = curve
        self.cfg = cfg or PrecisionConfig()
        bps = _disc_zeros(curve, self.cfg) if branch is None else branch.all_points
        self.bps = np.array(bps, dtype=complex)
        rmax = float(np.max(np.abs(self.bps))) if self.bps.size else 0.0
        default = 4 * (1 + rmax)
        self.anchor_radius = default if anchor_radius is None else float(anchor_radius)
        if self.anchor_radius < 2 * rmax:
            raise ContractViolation("anchor radius smaller than twice the largest branch-point modulus")
        self.margin = margin
        if cuts is None:
            cuts = [np.array([complex(b.real, 0.0), b]) for b in self.bps if b.imag > 1e-12]
        self.set_cuts(cuts)

    def set_cuts(self, cuts: Sequence[np.ndarray]):
        edges = []
        for c in cuts:
            c = np.asarray(c, dtype=complex)
            edges.extend(zip(c[:-1], c[1:]))
        self.cuts = [np.asarray(c, dtype=complex) for c in cuts]
        self.edges = np.array(edges, dtype=complex).reshape(-1, 2)

    # ----------------------------------------------------------- anchor
    def anchor(self, z: complex) -> np.ndarray:
        r = self.curve.cubic_roots(np.array([z]))[0]
        target = self.curve.asymptotic_triple(z)
        ordered, _ = match_permutation(target, r)
        return ordered

    def dist_to_branch(self, z: complex) -> float:
        if self.bps.size == 0:
            return np.inf
        return float(np.min(np.abs(self.bps - z)))

    # ----------------------------------------------------- continuation
    def step_to(self, z0: complex, t0: np.ndarray, z1: complex, use_cuts: bool = True,
                min_step: float = 1e-13) -> np.ndarray:
        """Continue the labeled triple ``t0`` at ``z0`` to ``z1``."""
        z, t = complex(z0), np.array(t0, dtype=complex)
        target = complex(z1)
        while z != target:
            d = target - z
            h = abs(d)
            lim = self.margin * self.dist_to_branch(z)
            if lim < min_step * (1 + abs(z)):
                raise BranchPointProximity(f"continuation reached a branch point near {z}")
            if h > lim:
                zn = z + d * (lim / h)
            else:
                zn = target
            while True:
                r = self.curve.cubic_roots(np.array([zn]))[0]
                ordered, _ = match_permutation(t, r)
                ok = _unambiguous(t, ordered)
                if ok or abs(zn - z) < min_step * (1 + abs(z)):
                    break
                zn = z + 0.5 * (zn - z)
            if not ok and zn != target:
                raise BranchPointProximity(f"continuation stalled near {zn}")
            if use_cuts and self.edges.size:
                ncross = _segments_cross(z, zn, self.edges) + _segments_cross(z, zn, np.conj(self.edges))
                if ncross % 2 == 1:
                    ordered = ordered[[0, 2, 1]]
            z, t = zn, ordered
        return t

    def continue_along(self, path: Sequence[complex], t0: np.ndarray, use_cuts: bool = True) -> np.ndarray:
        """Labeled triples at every vertex of ``path`` (first vertex carries ``t0``)."""
        out = [np.array(t0, dtype=complex)]
        for z0, z1 in zip(path[:-1], path[1:]):
            out.append(self.step_to(z0, out[-1], z1, use_cuts=use_cuts))
        return np.array(out)

    def _descent_start(self, z: complex) -> complex:
        R = self.anchor_radius
        x = float(np.clip(z.real, -0.999 * R, 0.999 * R))
        return complex(x, math.sqrt(R * R - x * x))

    def solve(self, z: complex, tol_branch: float | None = None) -> np.ndarray:
        """Labeled triple at ``z``; real ``z`` gives boundary values from above."""
        z = complex(z)
        tol_branch = self.cfg.root_tol if tol_branch is None else tol_branch
        if self.dist_to_branch(z) <= tol_branch * (1 + abs(z)):
            raise BranchPointProximity(f"{z} is within root_tol of a branch point")
        if z.imag < 0:
            return np.conj(self.solve(z.conjugate(), tol_branch))
        if abs(z) >= self.anchor_radius and abs(z.real) < self.anchor_radius * 10:
            return self.anchor(z)
        start = self._descent_start(z)
        t0 = self.anchor(start)
        path = [start, complex(z.real, max(z.imag, 0.0))] if start.real == z.real else [start, complex(z.real, start.imag), z]
        if z.imag == 0:
            eta = min(1e-3, 0.25 * self.dist_to_branch(z))
            path = path[:-1] + [complex(z.real, eta), z]
        return self.continue_along(path, t0)[-1]

    def solve_labeled(self, z: complex) -> RootTriple:
        t = self.solve(z)
        cert = LabelCertificate.ASYMPTOTIC_ANCHOR if abs(z) >= self.anchor_radius else LabelCertificate.CONTINUATION_STEP
        return RootTriple(complex(z), tuple(complex(v) for v in t), cert)

    def sweep_real(self, xs: Sequence[float], eta: float = 1e-7) -> np.ndarray:
        """Boundary values from above at real points ``xs`` via one horizontal sweep.

        The sweep runs right to left at height ``eta`` and drops vertically to
        each point; crossing parity with the registered cuts is applied.
        """
        xs = np.asarray(xs, dtype=float)
        order = np.argsort(-xs)
        out = np.zeros((xs.size, 3), dtype=complex)
        x0 = float(xs[order[0]])
        z = complex(x0, eta)
        t = self.solve(z)
        for idx in order:
            x = float(xs[idx])
            zn = complex(x, eta)
            t = self.step_to(z, t, zn)
            z = zn
            try:
                out[idx] = self.step_to(z, t, complex(x, 0.0))
            except BranchPointProximity:
                out[idx] = self._pair_by_imag(t, self.curve.cubic_roots(np.array([complex(x, 0.0)]))[0])
        return out

    @staticmethod
    def _pair_by_imag(prev: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Match next to a branch point: the colliding pair is ordered by imaginary part."""
        ordered, _ = match_permutation(prev, r)
        pairs = [(abs(ordered[i] - ordered[j]), i, j) for i, j in ((0, 1), (0, 2), (1, 2))]
        _, i, j = min(pairs)
        hi, lo = (i, j) if prev[i].imag >= prev[j].imag else (j, i)
        u, v = ordered[i], ordered[j]
        ordered[hi], ordered[lo] = (u, v) if u.imag >= v.imag else (v, u)
        return ordered

    def solve_many(self, zs: Iterable[complex]) -> np.ndarray:
        return np.array([self.solve(z) for z in zs])


# --------------------------------------------------------------------------
# branch points


def _disc_zeros(curve: SpectralCurve, cfg: PrecisionConfig) -> list[complex]:
    return [z for z, _ in roots(curve.discriminant, cfg)]


@dataclass(frozen=True)
class BranchPoint:
    """A discriminant zero with its monodromy.

    ``pair`` is the pair of labels (1-based) whose values coincide at the
    point when approached from the upper half plane; ``monodromy`` is the
    label permutation produced by a counterclockwise loop; ``kind`` is one of
    ``"simple"``, ``"triple"`` or ``"double-point"`` (no branching).
    """

    z: complex
    multiplicity: int
    pair: tuple
    monodromy: tuple
    kind: str


@dataclass(frozen=True)
class BranchPointSet:
    real_points: tuple
    nonreal_pairs: tuple

    @property
    def all_points(self) -> list[complex]:
        pts = [b.z for b in self.real_points]
        for up, lo in self.nonreal_pairs:
            pts.extend([up.z, lo.z])
        return pts

    def sheets_connected(self) -> bool:
        """Whether branching connects all three sheets (irreducibility certificate)."""
        parent = list(range(3))

        def find(i):
            while parent[i] != i:
                i = parent[i]
            return i

        for b in list(self.real_points) + [u for u, _ in self.nonreal_pairs]:
            perm = b.monodromy
            for i in range(3):
                if perm[i] != i:
                    parent[find(i)] = find(perm[i])
        return len({find(i) for i in range(3)}) == 1


def _monodromy(lab: Labeler, b: complex, rho: float) -> tuple[tuple, tuple, np.ndarray]:
    start = b + 1j * rho
    t0 = lab.solve(start)
    n = 64
    path = [b + 1j * rho * np.exp(2j * np.pi * k / n) for k in range(n + 1)]
    t1 = lab.continue_along(path, t0, use_cuts=False)[-1]
    perm = tuple(int(np.argmin(np.abs(t0 - v))) for v in t1)
    # perm[i] = label at the start whose value the continued label i reached
    seps = [(abs(t0[i] - t0[j]), (i + 1, j + 1)) for i, j in ((0, 1), (0, 2), (1, 2))]
    pair = min(seps)[1]
    return perm, pair, t0


def branch_points(curve: SpectralCurve, cfg: PrecisionConfig | None = None) -> BranchPointSet:
    """Discriminant zeros split into real points and conjugate pairs, with monodromy."""
    cfg = cfg or PrecisionConfig()
    rm = roots(curve.discriminant, cfg)
    pts = [z for z, _ in rm]
    lab = Labeler(curve, cuts=[], cfg=cfg)
    real, upper = [], []
    for z, mult in rm:
        if z.imag < 0:
            continue
        others = [abs(z - w) for w in pts if w != z]
        rho = 0.25 * min(others + [1.0])
        perm, pair, _ = _monodromy(lab, z, rho)
        moved = sum(1 for i in range(3) if perm[i] != i)
        kind = {0: "double-point", 2: "simple", 3: "triple"}.get(moved, "simple")
        if kind == "triple":
            pair = (1, 2, 3)
        bp = BranchPoint(complex(z), mult, pair, perm, kind)
        if z.imag == 0:
            real.append(bp)
        else:
            lo = BranchPoint(complex(z).conjugate(), mult, pair, tuple(int(i) for i in np.argsort(perm)), kind)
            upper.append((bp, lo))
    real.sort(key=lambda b: b.z.real)
    return BranchPointSet(tuple(real), tuple(upper))


# --------------------------------------------------------------------------
# support and density


@dataclass(frozen=True)
class SupportSet:
    """Ordered disjoint intervals where the discriminant is negative.

    ``interior_zeros`` lists discriminant zeros strictly inside an interval.
    """

    intervals: tuple
    interior_zeros: tuple = ()

    @property
    def l(self) -> int:
        return len(self.intervals)

    def contains(self, x: float) -> bool:
        return any(a < x < b for a, b in self.intervals)

    @property
    def hull(self) -> tuple[float, float]:
        return self.intervals[0][0], self.intervals[-1][1]


def support(curve: SpectralCurve, cfg: PrecisionConfig | None = None) -> SupportSet:
    """``{x real : disc(x) < 0}`` as ordered intervals with refined endpoints."""
    cfg = cfg or PrecisionConfig()
    disc = curve.discriminant
    rr = sorted(z.real for z, _ in roots(disc, cfg) if z.imag == 0)
    if not rr:
        raise DomainError("empty support: the discriminant has no real zero")
    # sign on each open cell between consecutive real zeros
    cells = list(zip([-np.inf] + rr, rr + [np.inf]))
    neg = []
    for lo, hi in cells:
        if np.isinf(lo):
            x = hi - 1.0
        elif np.isinf(hi):
            x = lo + 1.0
        else:
            x = 0.5 * (lo + hi)
        neg.append(float(disc(x)) < 0)
    intervals, interior = [], []
    cur = None
    for (lo, hi), isneg in zip(cells, neg):
        if isneg:
            if np.isinf(lo) or np.isinf(hi):
                raise DomainError("disc negative on an unbounded set: not an admissible curve")
            if cur is not None and cur[1] == lo:
                interior.append(lo)
                cur = (cur[0], hi)
            else:
                if cur is not None:
                    intervals.append(cur)
                cur = (lo, hi)
    if cur is not None:
        intervals.append(cur)
    if not intervals:
        raise DomainError("empty support")
    return SupportSet(tuple((float(a), float(b)) for a, b in intervals), tuple(float(x) for x in interior))


def density(curve: SpectralCurve, x) -> np.ndarray:
    """Density of the eigenvalue measure at real ``x`` (vectorized).

    On the support the cubic has one real root and a conjugate pair, and the
    boundary value of ``xi1`` from above is the member with positive
    imaginary part; the density is that imaginary part over ``pi``. Outside
    the support the density is zero.
    """
    x = np.asarray(x, dtype=float)
    r = curve.cubic_roots(x.astype(complex))
    im = np.max(np.abs(r.imag), axis=-1) / np.pi
    disc = np.asarray(curve.discriminant(x), dtype=float)
    return np.where(disc < 0, im, 0.0)


def support_rule(sup: SupportSet, order: int = 16, extra_breaks: Sequence[float] = ()) -> list[tuple[np.ndarray, np.ndarray]]:
    """Graded Gauss rules per support interval, split at interior zeros and extra breaks."""
    rules = []
    for a, b in sup.intervals:
        cuts = sorted({a, b, *[x for x in list(sup.interior_zeros) + list(extra_breaks) if a < x < b]})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            br = graded_breakpoints(lo, hi)
            rules.append(panel_rule(br, order))
    return rules


def total_mass(curve: SpectralCurve, sup: SupportSet | None = None) -> float:
    sup = sup or support(curve)
    return float(sum(np.sum(w * density(curve, x)) for x, w in support_rule(sup)))


# --------------------------------------------------------------------------
# admissibility


@dataclass
class AdmissibilityReport:
    is_admissible: bool
    total_mass: float
    min_density: float
    normalization_residuals: list
    irreducible: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "is_admissible": bool(self.is_admissible),
            "total_mass": float(self.total_mass),
            "min_density": float(self.min_density),
            "normalization_residuals": [float(r) for r in self.normalization_residuals],
            "irreducible": bool(self.irreducible),
            "notes": list(self.notes),
        }


def admissibility_check(curve: SpectralCurve, cfg: PrecisionConfig | None = None, grid: int = 48,
                        mass_tol: float = 1e-8, density_tol: float = 1e-10) -> AdmissibilityReport:
    """Normalization, positivity, unit mass and irreducibility of a candidate curve.

    Positivity uses labeled boundary values of ``xi1`` obtained by
    continuation, so a curve whose ``xi1`` picks the lower member of the
    conjugate pair shows up as a negative density.
    """
    cfg = cfg or PrecisionConfig()
    m, a, alpha = curve.m, curve.a, curve.alpha
    vm, vm1 = curve.V.v(m), curve.V.v(m - 1)
    res = [
        float(curve.p0.coeff(m - 1) - vm * a * a),
        float(curve.p0.coeff(m - 2) - (vm1 * a * a + vm * a * (2 * alpha - 1))),
        float(max([abs(curve.p0.coeff(k)) for k in range(m, curve.p0.degree + 1)] + [0.0])),
        float(max([abs(curve.p1.coeff(k)) for k in range(m - 1, curve.p1.degree + 1)] + [0.0])),
    ]
    notes = []
    norm_ok = all(abs(r) <= 1e-12 * (1 + vm * a * a) for r in res)
    if not norm_ok:
        notes.append("normalization of p0/p1 leading coefficients violated")
    try:
        bps = branch_points(curve, cfg)
        irreducible = bps.sheets_connected()
    except ReducibleCurveError:
        irreducible = False
        bps = None
    if not irreducible:
        notes.append("some solution branch is unbranched: reducible curve")
    try:
        sup = support(curve, cfg)
        mass = total_mass(curve, sup)
        lab = Labeler(curve, cfg=cfg, branch=bps)
        mins = []
        for lo, hi in sup.intervals:
            xs = lo + (hi - lo) * (np.arange(grid) + 0.5) / grid
            tv = lab.sweep_real(xs)
            mins.append(float(np.min(tv[:, 0].imag)) / np.pi)
        min_density = min(mins)
    except (DomainError, BranchPointProximity) as exc:
        notes.append(f"support/density failure: {exc}")
        mass, min_density = float("nan"), float("nan")
    mass_ok = abs(mass - 1) <= mass_tol if np.isfinite(mass) else False
    if np.isfinite(mass) and not mass_ok:
        notes.append(f"total mass {mass:.12g} differs from 1")
    pos_ok = np.isfinite(min_density) and min_density >= -density_tol
    if np.isfinite(min_density) and not pos_ok:
        notes.append("negative density: xi1 boundary value has negative imaginary part")
    ok = bool(norm_ok and irreducible and mass_ok and pos_ok)
    return AdmissibilityReport(ok, mass, min_density, res, irreducible, notes)


# --------------------------------------------------------------------------
# local behaviors


class BehaviorKind(str, Enum):
    EDGE = "Edge"
    INTERIOR_INTEGER = "InteriorInteger"
    PEARCEY = "Pearcey"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class LocalBehavior:
    """Fitted local exponent of the density at a distinguished point.

    ``k`` is the edge index for ``Edge`` (exponent (2k+1)/2), the integer for
    ``InteriorInteger`` and ``nu`` for ``Pearcey`` (exponent nu/3).
    """

    point: float
    kind: BehaviorKind
    k: int | None
    exponent: float
    fitted_exponent: float
    fitted_constant: float
    candidates: tuple = ()

    def to_dict(self) -> dict:
        return {"point": self.point, "kind": self.kind.value, "k": self.k, "exponent": self.exponent,
                "fitted_exponent": self.fitted_exponent, "fitted_constant": self.fitted_constant,
                "candidates": list(self.candidates)}


def _fit(curve, x0, sign, offsets):
    xs = x0 + sign * offsets
    rho = density(curve, xs)
    good = rho > 0
    if good.sum() < 3:
        return np.nan, np.nan
    A = np.vstack([np.log(offsets[good]), np.ones(good.sum())]).T
    slope, icpt = np.linalg.lstsq(A, np.log(rho[good]), rcond=None)[0]
    return float(slope), float(math.exp(icpt))


def _snap(value: float, candidates: Sequence[tuple], tol: float):
    close = [c for c in candidates if abs(c[0] - value) <= tol]
    return close


def classify_local_behaviors(curve: SpectralCurve, cfg: PrecisionConfig | None = None, grid: int = 2048,
                             snap_tol: float = 0.05, offsets: np.ndarray | None = None) -> list[LocalBehavior]:
    """Exponent fits at support endpoints and interior density zeros, snapped to the allowed set."""
    cfg = cfg or PrecisionConfig()
    sup = support(curve, cfg)
    bps = branch_points(curve, cfg)
    triple_pts = [b.z.real for b in bps.real_points if b.kind == "triple"]
    out = []
    edge_cands = [((2 * k + 1) / 2, k) for k in range(6)]
    for a, b in sup.intervals:
        w = b - a
        offs = (np.geomspace(1e-6, 1e-3, 12) * w) if offsets is None else offsets
        for x0, sgn in ((a, 1.0), (b, -1.0)):
            slope, const = _fit(curve, x0, sgn, offs)
            close = _snap(slope, edge_cands, snap_tol)
            if len(close) == 1:
                e, k = close[0]
                out.append(LocalBehavior(x0, BehaviorKind.EDGE, k, e, slope, const))
            else:
                out.append(LocalBehavior(x0, BehaviorKind.UNRESOLVED, None, float("nan"), slope, const,
                                         tuple(c[0] for c in close)))
        # interior zeros: grid scan for local minima, snapped to discriminant zeros
        xs = a + w * (np.arange(grid) + 0.5) / grid
        rho = density(curve, xs)
        peak = float(np.max(rho))
        mins = [i for i in range(1, grid - 1) if rho[i] <= rho[i - 1] and rho[i] <= rho[i + 1] and rho[i] < 0.05 * peak]
        found = set()
        for i in mins:
            h = w / grid
            near = [z for z in sup.interior_zeros if abs(z - xs[i]) <= 2 * h]
            if near:
                x0 = near[0]
            else:
                from scipy.optimize import minimize_scalar

                x0 = float(minimize_scalar(lambda t: float(density(curve, np.array([t]))[0]),
                                           bounds=(xs[i] - h, xs[i] + h), method="bounded",
                                           options={"xatol": 1e-14}).x)
            found.add(round(x0, 12))
        for z in sup.interior_zeros:
            if a < z < b:
                found.add(round(z, 12))
        for x0 in sorted(found):
            offs = (np.geomspace(1e-6, 1e-3, 12) * max(1.0, w / 4)) if offsets is None else offsets
            sl, cl = _fit(curve, x0, 1.0, offs)
            sr, cr = _fit(curve, x0, -1.0, offs)
            slope, const = 0.5 * (sl + sr), 0.5 * (cl + cr)
            cands = [(float(k), ("int", k)) for k in range(1, 6)] + [(1 / 3, ("pearcey", 1)), (5 / 3, ("pearcey", 5))]
            close = _snap(slope, cands, snap_tol)
            has_witness = any(abs(t - x0) < 1e-6 for t in triple_pts)
            if len(close) == 1 and close[0][1][0] == "pearcey" and has_witness:
                nu = close[0][1][1]
                out.append(LocalBehavior(x0, BehaviorKind.PEARCEY, nu, nu / 3, slope, const))
            elif len(close) == 1 and close[0][1][0] == "int":
                k = close[0][1][1]
                out.append(LocalBehavior(x0, BehaviorKind.INTERIOR_INTEGER, k, float(k), slope, const))
            else:
                out.append(LocalBehavior(x0, BehaviorKind.UNRESOLVED, None, float("nan"), slope, const,
                                         tuple(c[0] for c in close)))
    return out


def save_density_csv(curve: SpectralCurve, path: Path, n: int = 400, cfg: PrecisionConfig | None = None) -> Path:
    """Write ``x,rho`` columns over the support hull (with a small margin)."""
    sup = support(curve, cfg)
    lo, hi = sup.hull
    pad = 0.05 * (hi - lo)
    xs = np.linspace(lo - pad, hi + pad, n)
    rho = density(curve, xs)
    path = Path(path)
    with path.open("w") as fh:
        fh.write("x,rho\n")
        for x, r in zip(xs, rho):
            fh.write(f"{x:.12e},{r:.12e}\n")
    return path
