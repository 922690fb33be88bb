"""Trajectories of the quadratic differentials ``-(xi_i - xi_j)^2 dz^2`` and the contour Gamma*.

For sheet ``k`` the pair ``(i, j)`` is the complementary one: sheet 1 uses
``(2, 3)``, sheet 2 uses ``(3, 1)``, sheet 3 uses ``(1, 2)``. A vertical
trajectory keeps ``Re int s dz`` constant and an orthogonal one keeps
``Im int s dz`` constant, where ``s = xi_i - xi_j`` is continued along the
arc.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .curve import (
    BranchPointSet,
    Labeler,
    SpectralCurve,
    SupportSet,
    _min_sep,
    branch_points,
    match_permutation,
    support,
)
from .numerics import ContractViolation, PrecisionConfig, gauss_legendre, graded_breakpoints, panel_rule

log = logging.getLogger(__name__)

__all__ = [
    "TrajectoryKind",
    "Termination",
    "Trajectory",
    "SheetQD",
    "trace",
    "launch_from_zero",
    "Regime",
    "RegimeReport",
    "InconsistencyError",
    "ConstructionFailure",
    "CertificateError",
    "classify_regime",
    "GammaStar",
    "build_gamma_star",
    "boutroux_periods",
    "locate_boundary_critical_point",
    "match_many",
]

_PAIRS = {1: (1, 2), 2: (2, 0), 3: (0, 1)}


class InconsistencyError(RuntimeError):
    """More than one sheet-1 zero in the open upper half plane."""


class ConstructionFailure(RuntimeError):
    """A trajectory needed for Gamma* did not terminate as required."""


class CertificateError(ValueError):
    """Local fan count at a zero disagrees with the stated multiplicity."""


class TrajectoryKind(str, Enum):
    VERTICAL = "Vertical"
    ORTHOGONAL = "Orthogonal"


@dataclass(frozen=True)
class Termination:
    """``kind`` is ``ReachedReal``, ``ReachedZero``, ``Diverged`` or ``StepLimit``."""

    kind: str
    value: complex | float | None = None

    def to_dict(self):
        v = self.value
        if isinstance(v, complex):
            v = [v.real, v.imag]
        return {"kind": self.kind, "value": v}


def match_many(ref: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Row-wise label matching of ``new`` (n, 3) to ``ref`` (n, 3)."""
    import itertools

    perms = np.array(list(itertools.permutations(range(3))))
    cand = new[:, perms]  # (n, 6, 3)
    cost = np.max(np.abs(cand - ref[:, None, :]), axis=-1)
    best = np.argmin(cost, axis=1)
    return cand[np.arange(new.shape[0]), best]


@dataclass
class Trajectory:
    """A traced arc with labeled triples at every node.

    ``invariant`` holds ``int s dz`` from the trajectory origin to each node;
    for a launch from a zero the origin is the zero itself.
    """

    sheet: int
    kind: TrajectoryKind
    points: np.ndarray
    triples: np.ndarray
    invariant: np.ndarray
    origin: complex
    launch_angle: float
    termination: Termination
    drift: float = 0.0

    @property
    def length(self) -> float:
        return float(np.sum(np.abs(np.diff(self.points))))

    @property
    def end(self) -> complex:
        return complex(self.points[-1])

    def s_values(self) -> np.ndarray:
        i, j = _PAIRS[self.sheet]
        return self.triples[:, i] - self.triples[:, j]

    def conjugate(self) -> "Trajectory":
        term = self.termination
        if term.kind == "Diverged" and term.value is not None:
            term = Termination(term.kind, -float(term.value))
        elif term.kind == "ReachedZero" and term.value is not None:
            term = Termination(term.kind, complex(term.value).conjugate())
        return Trajectory(self.sheet, self.kind, np.conj(self.points), np.conj(self.triples), np.conj(self.invariant),
                          complex(self.origin).conjugate(), -self.launch_angle, term, self.drift)

    def to_rows(self) -> list[tuple]:
        t = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(self.points)))])
        comp = self.invariant.real if self.kind is TrajectoryKind.VERTICAL else self.invariant.imag
        ref = comp[0]
        return [(float(tt), float(z.real), float(z.imag), float(c - ref)) for tt, z, c in zip(t, self.points, comp)]

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("t,re_z,im_z,invariant_drift\n")
            for row in self.to_rows():
                fh.write(",".join(f"{v:.15e}" for v in row) + "\n")
        return path

    def to_json(self) -> dict:
        return {
            "sheet": self.sheet,
            "kind": self.kind.value,
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "origin": [float(self.origin.real), float(self.origin.imag)],
            "launch_angle": float(self.launch_angle),
            "termination": self.termination.to_dict(),
            "drift": float(self.drift),
        }


@dataclass
class SheetQD:
    """The quadratic differential on one sheet together with its labeler."""

    curve: SpectralCurve
    sheet: int
    labeler: Labeler
    branch: BranchPointSet
    cfg: PrecisionConfig = field(default_factory=PrecisionConfig)

    def __post_init__(self):
        if self.sheet not in _PAIRS:
            raise ValueError("sheet must be 1, 2 or 3")

    @classmethod
    def build(cls, curve: SpectralCurve, sheet: int = 1, cfg: PrecisionConfig | None = None,
              labeler: Labeler | None = None, branch: BranchPointSet | None = None) -> "SheetQD":
        cfg = cfg or PrecisionConfig()
        branch = branch or branch_points(curve, cfg)
        labeler = labeler or Labeler(curve, cfg=cfg, branch=branch)
        return cls(curve, sheet, labeler, branch, cfg)

    @property
    def pair(self) -> tuple[int, int]:
        i, j = _PAIRS[self.sheet]
        return i + 1, j + 1

    @property
    def pair_index(self) -> tuple[int, int]:
        return _PAIRS[self.sheet]

    def s(self, triple: np.ndarray):
        i, j = _PAIRS[self.sheet]
        return triple[..., i] - triple[..., j]

    def zeros(self) -> np.ndarray:
        """Points where the two labels of this sheet collide (including triple points)."""
        want = set(self.pair)
        out = []
        for b in self.branch.real_points:
            if b.kind == "triple" or set(b.pair) == want:
                out.append(b.z)
        for up, lo in self.branch.nonreal_pairs:
            if up.kind == "triple" or set(up.pair) == want:
                out.extend([up.z, lo.z])
        return np.array(out, dtype=complex)

    @property
    def capture_radius(self) -> float:
        return 10 * math.sqrt(self.cfg.root_tol)

    @property
    def escape_radius(self) -> float:
        return 8 * self.labeler.anchor_radius


def _chord_integral(curve, z0, z1, t0, pair, order=8):
    """``int s dz`` over the segment ``[z0, z1]`` with labels continued from ``t0``."""
    x, w = gauss_legendre(order)
    mid, half = 0.5 * (z0 + z1), 0.5 * (z1 - z0)
    nodes = mid + half * x
    r = curve.cubic_roots(nodes)
    ordered = match_many(np.repeat(t0[None, :], order, 0), r)
    s = ordered[:, pair[0]] - ordered[:, pair[1]]
    return complex(np.sum(w * s) * half)


def trace(qd: SheetQD, start: complex, kind: TrajectoryKind | str, direction_sign: int = 1,
          cfg: PrecisionConfig | None = None, triple: np.ndarray | None = None, *,
          origin: complex | None = None, invariant0: complex = 0.0, level: float | None = None,
          max_steps: int = 20000, stop_on_real: bool = True, real_grace: float = 0.0,
          capture_radius: float | None = None, escape_radius: float | None = None) -> Trajectory:
    """Trace a trajectory from ``start`` on the sheet of ``qd``.

    The direction field ``i/s`` (vertical) or ``1/s`` (orthogonal) is
    integrated in arc length with an embedded 8(5,3) Runge-Kutta pair. After
    each accepted step the invariant is advanced by a Gauss rule on the
    chord and the node is nudged back to the level set along the normal.

    Parameters
    ----------
    origin : complex, optional
        A zero the arc is launched from; excluded from capture while the
        arc is still near it.
    invariant0 : complex
        Value of ``int s dz`` from ``origin`` to ``start``.
    level : float, optional
        Target value of the conserved component; defaults to that of
        ``invariant0``.
    real_grace : float
        Initial arc length over which crossings of the real axis are ignored.
    """
    cfg = cfg or qd.cfg
    kind = TrajectoryKind(kind)
    vertical = kind is TrajectoryKind.VERTICAL
    curve, lab = qd.curve, qd.labeler
    pi_, pj_ = qd.pair_index
    capture = qd.capture_radius if capture_radius is None else capture_radius
    escape = qd.escape_radius if escape_radius is None else escape_radius
    start = complex(start)
    origin = start if origin is None else complex(origin)
    zeros = qd.zeros()
    far_zeros = zeros[np.abs(zeros - origin) > 1e-12 * (1 + abs(origin))] if zeros.size else zeros
    if far_zeros.size and np.min(np.abs(far_zeros - start)) < capture:
        raise ContractViolation("start lies within the capture radius of a zero; use launch_from_zero")
    if triple is None:
        triple = lab.solve(start)
    triple = np.asarray(triple, dtype=complex)
    target = (invariant0.real if vertical else invariant0.imag) if level is None else float(level)
    sgn = 1.0 if direction_sign >= 0 else -1.0
    ref = {"t": triple}

    def unit_dir(tri):
        s = tri[pi_] - tri[pj_]
        d = (1j / s) if vertical else (1 / s)
        return sgn * d / abs(d)

    def rhs(_t, Y):
        z = complex(Y[0], Y[1])
        r = curve.cubic_roots(np.array([z]))[0]
        tri, _ = match_permutation(ref["t"], r)
        d = unit_dir(tri)
        return np.array([d.real, d.imag])

    def step_limit(z, tri):
        return max(min(0.5 * lab.dist_to_branch(z), 0.25 * _min_sep(tri), 0.1 * (1 + abs(z))), 1e-14)

    pts, tris, inv = [start], [triple], [complex(invariant0)]
    solver = DOP853(rhs, 0.0, np.array([start.real, start.imag]), t_bound=np.inf, rtol=cfg.ode_tol,
                    atol=cfg.ode_tol * (1 + abs(start)), max_step=step_limit(start, triple),
                    first_step=min(step_limit(start, triple), 1e-3 * (1 + abs(start))))
    termination = Termination("StepLimit")
    z, tri, I = start, triple, complex(invariant0)
    d_prev = unit_dir(triple)
    arclen = 0.0
    for _ in range(max_steps):
        solver.max_step = step_limit(z, tri)
        t_prev = solver.t
        msg = solver.step()
        if solver.status == "failed":
            log.warning("integrator failure: %s", msg)
            termination = Termination("StepLimit")
            break
        zn = complex(solver.y[0], solver.y[1])
        r = curve.cubic_roots(np.array([zn]))[0]
        trin, disp = match_permutation(tri, r)
        dn = unit_dir(trin)
        if (dn * d_prev.conjugate()).real < 0:
            raise ContractViolation("direction reversal mid-arc: square-root branch flipped")
        arclen += abs(zn - z)
        crossed = stop_on_real and arclen > real_grace and z.imag != 0 and (zn.imag == 0 or (z.imag > 0) != (zn.imag > 0))
        if crossed:
            dense = solver.dense_output()
            yim = lambda t: float(dense(t)[1])
            a_, b_ = t_prev, solver.t
            tc = brentq(yim, a_, b_, xtol=1e-15, rtol=1e-15) if yim(a_) * yim(b_) < 0 else b_
            xc = float(dense(tc)[0])
            zc = complex(xc, 0.0)
            I = I + _chord_integral(curve, z, zc, tri, (pi_, pj_))
            rc = curve.cubic_roots(np.array([zc]))[0]
            tric, _ = match_permutation(tri, rc)
            pts.append(zc)
            tris.append(tric)
            inv.append(I)
            termination = Termination("ReachedReal", xc)
            break
        I = I + _chord_integral(curve, z, zn, tri, (pi_, pj_))
        # project back to the level set along the normal
        sn = trin[pi_] - trin[pj_]
        err = (I.real if vertical else I.imag) - target
        delta = (-err / sn) if vertical else (-1j * err / sn)
        if abs(delta) < 1e-6 * (abs(zn - z) + 1e-300):
            zn = zn + delta
            I = I + sn * delta
            solver.y = np.array([zn.real, zn.imag])
        pts.append(zn)
        tris.append(trin)
        inv.append(I)
        z, tri, d_prev = zn, trin, dn
        ref["t"] = trin
        if zeros.size:
            dz = np.abs(zeros - z)
            near_origin = np.abs(zeros - origin) < 1e-12 * (1 + abs(origin))
            recent = abs(z - origin) < 3 * max(capture, abs(start - origin))
            mask = dz < capture
            if recent:
                mask &= ~near_origin
            if np.any(mask):
                p = complex(zeros[np.argmin(np.where(mask, dz, np.inf))])
                termination = Termination("ReachedZero", p)
                break
        if abs(z) > escape:
            termination = Termination("Diverged", float(np.angle(dn)))
            break
    pts_a = np.array(pts)
    traj = Trajectory(qd.sheet, kind, pts_a, np.array(tris), np.array(inv), origin,
                      float(np.angle(pts_a[min(1, len(pts_a) - 1)] - origin)) if len(pts_a) > 1 else 0.0,
                      termination)
    traj.drift = invariant_drift(qd, traj, target)
    return traj


def invariant_drift(qd: SheetQD, traj: Trajectory, target: float | None = None, order: int = 16) -> float:
    """Max deviation of the conserved component, recomputed with a 16-point chord rule."""
    if len(traj.points) < 2:
        return 0.0
    vertical = traj.kind is TrajectoryKind.VERTICAL
    I = complex(traj.invariant[0])
    base = (I.real if vertical else I.imag) if target is None else target
    worst = abs((I.real if vertical else I.imag) - base)
    pair = qd.pair_index
    for k in range(len(traj.points) - 1):
        z0, z1 = traj.points[k], traj.points[k + 1]
        if k == 0 and abs(z0 - traj.origin) < 1e-9 * (1 + abs(z0)):
            I += _graded_chord(qd.curve, z0, z1, traj.triples[1], pair, order)
        else:
            I += _chord_integral(qd.curve, z0, z1, traj.triples[k], pair, order)
        worst = max(worst, abs((I.real if vertical else I.imag) - base))
    return float(worst)


def _graded_chord(curve, z0, z1, t1, pair, order=16):
    """``int s dz`` on ``[z0, z1]`` when ``z0`` is a zero of ``s``.

    The square-root endpoint spoils plain Gauss rules, so the chord is cut
    geometrically toward ``z0`` and walked backwards from ``z1``, carrying
    the labels from one piece to the next.
    """
    br = graded_breakpoints(0.0, 1.0, grade_left=True, grade_right=False, n_uniform=1, floor=1e-13)
    total = 0j
    ref = np.asarray(t1)
    for lo, hi in zip(br[::-1][1:], br[::-1][:-1]):
        za, zb = z0 + lo * (z1 - z0), z0 + hi * (z1 - z0)
        total += _chord_integral(curve, za, zb, ref, pair, order)
        ref = match_many(ref[None, :], curve.cubic_roots(np.array([za])))[0]
    return complex(total)


# --------------------------------------------------------------------------
# launching from zeros


def _radial_values(curve, z0, thetas, circle_triples, rho, pair, nq=24, power=6):
    """``int_{z0}^{z0 + rho e^{i theta}} s dz`` by a power substitution that tames the endpoint.

    ``rho`` may be a scalar or one radius per angle.
    """
    u, w = gauss_legendre(nq)
    u = 0.5 * (u + 1)
    w = 0.5 * w
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), thetas.shape)
    t = rho[:, None] * u[None, :] ** power
    jac = rho[:, None] * power * u[None, :] ** (power - 1)
    e = np.exp(1j * thetas)
    nodes = z0 + t * e[:, None]  # (n, nq)
    roots_all = curve.cubic_roots(nodes)
    cur = np.asarray(circle_triples)
    vals = np.zeros(nodes.shape, dtype=complex)
    for k in range(nq - 1, -1, -1):
        cur = match_many(cur, roots_all[:, k, :])
        vals[:, k] = cur[:, pair[0]] - cur[:, pair[1]]
    return np.sum(vals * jac * w[None, :], axis=1) * e


def _chord_integrals(curve, z0s, z1s, t0s, pair, order=8):
    """Vectorized ``int s dz`` over segments ``[z0s[k], z1s[k]]``."""
    x, w = gauss_legendre(order)
    z0s, z1s = np.asarray(z0s, dtype=complex), np.asarray(z1s, dtype=complex)
    mid, half = 0.5 * (z0s + z1s), 0.5 * (z1s - z0s)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    r = curve.cubic_roots(nodes).reshape(-1, 3)
    ref = np.repeat(np.asarray(t0s), order, axis=0)
    ordered = match_many(ref, r).reshape(len(z0s), order, 3)
    s = ordered[..., pair[0]] - ordered[..., pair[1]]
    return np.sum(s * w[None, :], axis=1) * half


def _track_circle(curve, z0, rho, thetas, t_start):
    pts = z0 + rho * np.exp(1j * np.asarray(thetas))
    r = curve.cubic_roots(pts)
    out = np.zeros_like(r)
    cur = t_start
    for k in range(len(pts)):
        cur, _ = match_permutation(cur, r[k])
        out[k] = cur
    return out


def _angle_grid(real_zero: bool, n: int = 720):
    if not real_zero:
        return np.pi / 2 + 2 * np.pi * np.arange(n + 1) / n
    g = np.geomspace(1e-7, 0.25, 60)
    mid = np.linspace(0.25, np.pi - 0.25, 200)[1:-1]
    return np.unique(np.concatenate([[0.0], g, mid, np.pi - g[::-1], [np.pi]]))


def launch_from_zero(qd: SheetQD, zero: complex, multiplicity: int | None, kind: TrajectoryKind | str, *,
                     radius: float | None = None, level: float = 0.0, strict: bool = True,
                     include_conjugates: bool = True, **trace_kw) -> list[Trajectory]:
    """Trajectories of ``kind`` emanating from ``zero``.

    The launch points are the solutions, on a small circle, of
    ``Re I = 0`` (vertical) or ``Im I = level`` (orthogonal) where ``I`` is
    ``int s dz`` from the zero, evaluated by radial quadrature. For a zero of
    multiplicity ``mu`` there are ``mu + 2`` of them, equally spaced to
    leading order. For a real zero only the closed upper half circle is
    scanned and the strictly nonreal arcs are mirrored.
    """
    kind = TrajectoryKind(kind)
    vertical = kind is TrajectoryKind.VERTICAL
    curve, lab = qd.curve, qd.labeler
    z0 = complex(zero)
    real_zero = abs(z0.imag) <= 1e-12 * (1 + abs(z0))
    if real_zero:
        z0 = complex(z0.real, 0.0)
    others = [b for b in lab.bps if abs(b - z0) > 1e-9 * (1 + abs(z0))]
    dmin = min([abs(b - z0) for b in others] + [abs(z0.imag) if not real_zero else np.inf, 1.0])
    rho = min(1e-3 * (1 + abs(z0)), 0.2 * dmin) if radius is None else float(radius)
    pair = qd.pair_index
    thetas = _angle_grid(real_zero)
    top = z0 + 1j * rho
    t_top = lab.solve(top)
    itop = int(np.argmin(np.abs(thetas - np.pi / 2)))
    if real_zero:
        # track outward from the top in both directions
        right = _track_circle(curve, z0, rho, thetas[: itop + 1][::-1], t_top)[::-1]
        left = _track_circle(curve, z0, rho, thetas[itop:], t_top)
        tri_grid = np.concatenate([right, left[1:]])
    else:
        tri_grid = _track_circle(curve, z0, rho, thetas, t_top)
    vals = _radial_values(curve, z0, thetas, tri_grid, rho, pair)
    g = vals.real if vertical else vals.imag - level

    def g_at(theta, k):
        tri = _track_circle(curve, z0, rho, [theta], tri_grid[k])
        v = _radial_values(curve, z0, [theta], tri, rho, pair)[0]
        return (v.real if vertical else v.imag - level), v, tri[0]

    scale = max(np.max(np.abs(vals)), 1e-300)
    roots_found = []
    for k in range(len(thetas) - 1):
        if g[k] == 0:
            roots_found.append((thetas[k], vals[k], tri_grid[k]))
        elif g[k] * g[k + 1] < 0:
            th = brentq(lambda t: g_at(t, k)[0], thetas[k], thetas[k + 1], xtol=1e-15, rtol=1e-15)
            _, v, tri = g_at(th, k)
            roots_found.append((th, v, tri))
    if real_zero:
        for k in (0, len(thetas) - 1):
            if abs(g[k]) <= 1e-9 * scale and not any(abs(t - thetas[k]) < 1e-9 for t, _, _ in roots_found):
                roots_found.append((thetas[k], vals[k], tri_grid[k]))
    if not real_zero and len(roots_found) and abs(thetas[-1] - thetas[0] - 2 * np.pi) < 1e-12:
        # the closing grid point repeats the first angle
        roots_found = [r for r in roots_found if r[0] < thetas[-1] - 1e-12]
    roots_found.sort(key=lambda r: r[0])
    count = len(roots_found)
    if real_zero:
        count = sum(2 if 1e-9 < th < np.pi - 1e-9 else 1 for th, _, _ in roots_found)
        if count and any(th <= 1e-9 for th, *_ in roots_found) != any(th >= np.pi - 1e-9 for th, *_ in roots_found):
            count += 1
    if strict and multiplicity is not None and count != multiplicity + 2:
        raise CertificateError(f"found {count} {kind.value.lower()} directions at {z0}, expected {multiplicity + 2}")
    out = []
    for th, v, tri in roots_found:
        L = z0 + rho * np.exp(1j * th)
        s = tri[pair[0]] - tri[pair[1]]
        d = (1j / s) if vertical else (1 / s)
        sign = 1 if (d * np.exp(-1j * th)).real > 0 else -1
        on_axis = real_zero and (th <= 1e-9 or th >= np.pi - 1e-9)
        kw = dict(trace_kw)
        if on_axis:
            kw["stop_on_real"] = False
        kw.setdefault("real_grace", 0.5 * rho)
        traj = trace(qd, L, kind, sign, triple=tri, origin=z0, invariant0=v,
                     level=(0.0 if vertical else level), **kw)
        r0 = curve.cubic_roots(np.array([z0]))[0]
        t0, _ = match_permutation(tri, r0)
        traj.points = np.concatenate([[z0], traj.points])
        traj.triples = np.concatenate([t0[None, :], traj.triples])
        traj.invariant = np.concatenate([[0j], traj.invariant])
        traj.launch_angle = float(th)
        out.append(traj)
        if real_zero and include_conjugates and not on_axis:
            out.append(traj.conjugate())
    return out


# --------------------------------------------------------------------------
# regimes and Gamma*


class Regime(str, Enum):
    SATURATED = "Saturated"
    UNSATURATED_REGULAR = "UnsaturatedRegular"
    UNSATURATED_SINGULAR = "UnsaturatedSingular"


@dataclass
class RegimeReport:
    regime: Regime
    y_star: complex | None
    x_star: float | None
    c_star: float | None
    genus: int
    support: SupportSet
    branch: BranchPointSet
    notes: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)
    boundary_case: str | None = None

    @property
    def saturated(self) -> bool:
        return self.regime is Regime.SATURATED

    def to_dict(self) -> dict:
        enc = lambda z: None if z is None else [float(complex(z).real), float(complex(z).imag)]
        return {
            "regime": self.regime.value,
            "y_star": enc(self.y_star),
            "x_star": self.x_star,
            "c_star": self.c_star,
            "genus": self.genus,
            "support": [list(iv) for iv in self.support.intervals],
            "boundary_case": self.boundary_case,
            "notes": list(self.notes),
        }


def genus_of(regime: Regime, l: int) -> tuple[int, list[str]]:
    """Genus from the number ``l`` of support components.

    The singular transition keeps the genus of the regular side; when the
    formula would produce a negative value it is reported as 0.
    """
    notes = []
    g = l - 1 if regime is Regime.SATURATED else l - 2
    if regime is Regime.UNSATURATED_SINGULAR:
        notes.append("singular transition: genus of the neighbouring regular regime")
        g = l - 1 if l >= 1 else 0
    if g < 0:
        notes.append(f"formula gives {g}; reported as 0")
        g = 0
    return g, notes


def _phi_profile(curve: SpectralCurve, sup: SupportSet, lab: Labeler, order: int = 16, per_interval: int = 64):
    """Samples of ``Phi(x) = -int_x^inf Im(xi2+ - xi3+) dt`` at the panel breaks of each support interval.

    ``Phi`` vanishes right of the support and is constant on every gap.
    Returns ``[(breaks, Phi at breaks)]`` per interval and the plateau value
    on the gap left of each interval.
    """
    panels = []
    for a, b in sup.intervals:
        br = graded_breakpoints(a, b, n_uniform=per_interval)
        panels.append(br)
    nodes, weights, owner = [], [], []
    for k, br in enumerate(panels):
        for p, (lo, hi) in enumerate(zip(br[:-1], br[1:])):
            x, w = panel_rule(np.array([lo, hi]), order)
            nodes.append(x)
            weights.append(w)
            owner.extend([(k, p)] * len(x))
    x = np.concatenate(nodes)
    tv = lab.sweep_real(x)
    im = (tv[:, 1] - tv[:, 2]).imag
    w = np.concatenate(weights)
    per_panel = {}
    for (k, p), v in zip(owner, w * im):
        per_panel[(k, p)] = per_panel.get((k, p), 0.0) + v
    prof, plateaus = [None] * len(panels), [0.0] * len(panels)
    acc = 0.0
    for k in range(len(panels) - 1, -1, -1):
        br = panels[k]
        vals = np.zeros(len(br))
        vals[-1] = acc
        for p in range(len(br) - 2, -1, -1):
            acc -= per_panel[(k, p)]
            vals[p] = acc
        prof[k] = (np.asarray(br), vals)
        plateaus[k] = acc
    return prof, plateaus


def locate_boundary_critical_point(curve: SpectralCurve, sup: SupportSet, lab: Labeler) -> tuple[float, str]:
    """The critical point on the boundary of the orthogonal half plane (unsaturated)."""
    prof, plateaus = _phi_profile(curve, sup, lab)
    best_val, best_x, case = 0.0, sup.intervals[-1][1], "III"
    # plateau to the left of interval k is the gap (b_{k-1}, a_k); its rightmost point is a_k
    cands = []
    for k, (xs, ph) in enumerate(prof):
        if k > 0:
            cands.append((plateaus[k], sup.intervals[k][0], "II"))
        i = int(np.argmax(ph))
        cands.append((ph[i], xs[i], "I"))
    cands.append((plateaus[0], sup.intervals[0][0], "III"))
    tol = 1e-10
    best_val = max(c[0] for c in cands)
    top = [c for c in cands if c[0] >= best_val - tol * (1 + abs(best_val))]
    best_val, best_x, case = max(top, key=lambda c: c[1])
    if case == "III" or best_x >= sup.intervals[-1][1]:
        raise InconsistencyError("boundary critical point on an unbounded real interval")
    if case == "I":
        # refine: the sign change of Im(xi2+ - xi3+) inside the interval
        def f(x):
            tv = lab.sweep_real(np.array([x]))
            return float((tv[0, 1] - tv[0, 2]).imag)

        for xs, _ in prof:
            if xs[0] - 1e-12 <= best_x <= xs[-1] + 1e-12:
                k = int(np.argmin(np.abs(xs - best_x)))
                lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
                if f(lo) * f(hi) < 0:
                    best_x = brentq(f, lo, hi, xtol=1e-14)
                break
    return float(best_x), case


def classify_regime(curve: SpectralCurve, cfg: PrecisionConfig | None = None,
                    branch: BranchPointSet | None = None, labeler: Labeler | None = None) -> RegimeReport:
    """Saturated / unsaturated regular / unsaturated singular, with y*, x*, c* and the genus."""
    cfg = cfg or PrecisionConfig()
    branch = branch or branch_points(curve, cfg)
    sup = support(curve, cfg)
    upper = [u for u, _ in branch.nonreal_pairs if set(u.pair) == {2, 3} or u.kind == "triple"]
    if len(upper) > 1:
        raise InconsistencyError(f"{len(upper)} sheet-1 zeros in the upper half plane")
    notes = []
    if upper:
        regime = Regime.SATURATED
        y_star = complex(upper[0].z)
        if abs(y_star.real) < 1e-12 * (1 + abs(y_star)):
            y_star = complex(0.0, y_star.imag)
        g, gn = genus_of(regime, sup.l)
        return RegimeReport(regime, y_star, None, None, g, sup, branch, notes + gn)
    triple = [b for b in branch.real_points if b.kind == "triple" and sup.contains(b.z.real)]
    if triple:
        x0 = float(triple[0].z.real)
        g, gn = genus_of(Regime.UNSATURATED_SINGULAR, sup.l)
        return RegimeReport(Regime.UNSATURATED_SINGULAR, None, x0, x0, g, sup, branch, gn, boundary_case="I")
    lab = labeler or Labeler(curve, cfg=cfg, branch=branch)
    c_star, case = locate_boundary_critical_point(curve, sup, lab)
    g, gn = genus_of(Regime.UNSATURATED_REGULAR, sup.l)
    return RegimeReport(Regime.UNSATURATED_REGULAR, None, c_star, c_star, g, sup, branch, gn, boundary_case=case)


@dataclass
class GammaStar:
    """The contour Gamma*: conjugation-symmetric, one real crossing, both ends to the right."""

    points: np.ndarray
    crossing: float
    delta3: np.ndarray
    tau: Trajectory
    gamma1: Trajectory | None = None
    others: dict = field(default_factory=dict)

    @property
    def delta3_upper(self) -> np.ndarray:
        """The part of Delta_3 in the closed upper half plane, from y* to the crossing."""
        return self.gamma1.points if self.gamma1 is not None else np.zeros(0, dtype=complex)

    def real_crossings(self) -> int:
        """Number of passages between the half planes (points on the axis are skipped)."""
        sg = np.sign(self.points.imag)
        sg = sg[sg != 0]
        return int(np.count_nonzero(sg[1:] != sg[:-1]))

    def to_json(self) -> dict:
        return {
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "crossing": self.crossing,
            "delta3": [[float(z.real), float(z.imag)] for z in self.delta3],
        }


def build_gamma_star(curve: SpectralCurve, regime: RegimeReport, cfg: PrecisionConfig | None = None,
                     qd: SheetQD | None = None) -> GammaStar:
    """Construct Gamma*, Delta_3 and fill in x* / c* on ``regime`` for the saturated case."""
    cfg = cfg or PrecisionConfig()
    qd = qd or SheetQD.build(curve, 1, cfg, branch=regime.branch)
    if regime.saturated:
        y = regime.y_star
        vert = launch_from_zero(qd, y, 1, TrajectoryKind.VERTICAL)
        landed = [t for t in vert if t.termination.kind == "ReachedReal"]
        up = [t for t in vert if t.termination.kind == "Diverged"]
        if len(landed) != 2 or len(up) != 1:
            raise ConstructionFailure("vertical trajectories from y*: expected two landings and one divergent arc, got "
                                      + ", ".join(t.termination.kind for t in vert))
        gamma1 = min(landed, key=lambda t: t.termination.value)
        x_star = float(gamma1.termination.value)
        orth = launch_from_zero(qd, y, 1, TrajectoryKind.ORTHOGONAL)
        div = [t for t in orth if t.termination.kind == "Diverged"]
        land = [t for t in orth if t.termination.kind == "ReachedReal"]
        if not div:
            raise ConstructionFailure("no orthogonal trajectory from y* diverges")
        tau1 = min(div, key=lambda t: abs(t.termination.value))
        if abs(tau1.termination.value) > 0.2:
            raise ConstructionFailure(f"orthogonal arcs from y* do not reach +infinity (angles "
                                      f"{[t.termination.value for t in div]})")
        c_star = float(land[0].termination.value) if land else None
        regime.x_star, regime.c_star = x_star, c_star
        regime.witnesses.update({"vertical": vert, "orthogonal": orth})
        up_d3 = gamma1.points[::-1]  # crossing -> y*
        upper = np.concatenate([up_d3, tau1.points[1:]])
        pts = np.concatenate([np.conj(upper[::-1]), upper[1:]])
        delta3 = np.concatenate([np.conj(gamma1.points[::-1]), gamma1.points[1:]])
        return GammaStar(pts, x_star, delta3, tau1, gamma1, {"a_R": max(t.termination.value for t in landed),
                                                             "tau0": land[0] if land else None})
    c = regime.c_star
    mult = None
    orth = launch_from_zero(qd, complex(c, 0.0), mult, TrajectoryKind.ORTHOGONAL, strict=False,
                            include_conjugates=False)
    div = [t for t in orth if t.termination.kind == "Diverged" and abs(t.termination.value) < 0.2
           and t.points[-1].real > 0 and np.all(t.points[1:].imag > -1e-12)]
    if not div:
        raise ConstructionFailure(f"no orthogonal trajectory from c* = {c} diverges to +infinity: "
                                  + ", ".join(f"{t.termination.kind}@{t.launch_angle:.3g}" for t in orth))
    tau1 = max(div, key=lambda t: float(np.min(t.points[1:].imag)) if len(t.points) > 1 else 0.0)
    regime.witnesses.update({"orthogonal": orth})
    pts = np.concatenate([np.conj(tau1.points[::-1]), tau1.points[1:]])
    return GammaStar(pts, float(c), np.zeros(0, dtype=complex), tau1, None)


# --------------------------------------------------------------------------
# periods


def _rectangle(lo: float, hi: float, ytop: float, eps: float) -> np.ndarray:
    """Clockwise rectangle around ``[lo, hi] x [-ytop, ytop]``."""
    x0, x1, y0, y1 = lo - eps, hi + eps, -ytop - eps, ytop + eps
    return np.array([complex(x0, y0), complex(x0, y1), complex(x1, y1), complex(x1, y0), complex(x0, y0)])


def _loop_integral(lab: Labeler, loop: np.ndarray, pairs: Sequence[tuple[int, int]], per_edge: int = 6,
                   order: int = 24) -> list[complex]:
    """``oint (xi_i - xi_j) dz`` for several pairs along a closed polyline with global labels.

    Each edge is split into graded panels toward its endpoints; labels are
    propagated by continuation along the loop starting from a labeled
    vertex, with cut crossings applied.
    """
    x, w = gauss_legendre(order)
    total = [0j for _ in pairs]
    t = lab.solve(loop[0])
    z = loop[0]
    for a, b in zip(loop[:-1], loop[1:]):
        br = np.linspace(0.0, 1.0, per_edge + 1)
        for u0, u1 in zip(br[:-1], br[1:]):
            za, zb = a + (b - a) * u0, a + (b - a) * u1
            mid, half = 0.5 * (za + zb), 0.5 * (zb - za)
            for xx, ww in zip(x, w):
                zn = mid + half * xx
                t = lab.step_to(z, t, zn)
                z = zn
                for k, (i, j) in enumerate(pairs):
                    total[k] += ww * half * (t[i] - t[j])
        t = lab.step_to(z, t, b)
        z = b
    return total


def boutroux_periods(curve: SpectralCurve, regime: RegimeReport, components: Sequence[dict],
                     lab: Labeler, eps: float | None = None, min_eps: float = 1e-4) -> list[dict]:
    """Loop periods around each Delta-component and Boutroux real parts.

    ``components`` is a list of dicts with keys ``id``, ``box`` =
    ``(xmin, xmax, ymax)`` giving the component's bounding box, and
    ``sheets`` naming the Delta sets it carries.

    For each component the clockwise rectangular loop gives
    ``(1/2 pi i) oint (xi2 - xi3) dz``; the real parts of the loop integrals
    of ``xi1 - xi2`` and ``xi1 - xi3`` are the Boutroux quantities for
    cycles through sheets (1,2) and (1,3).
    """
    out = []
    boxes = [c["box"] for c in components]
    for comp in components:
        xmin, xmax, ymax = comp["box"]
        e = eps if eps is not None else 0.05 * max(xmax - xmin, 2 * ymax, 1e-2)
        while True:
            loop = _rectangle(xmin, xmax, ymax, e)
            clash = False
            for other in boxes:
                if other is comp["box"]:
                    continue
                ox0, ox1, oy = other
                if not (ox1 < xmin - e or ox0 > xmax + e):
                    clash = True
            if not clash:
                break
            e *= 0.5
            if e < min_eps:
                raise ContractViolation(f"loop offset below {min_eps} around component {comp['id']}")
        v23, v12, v13 = _loop_integral(lab, loop, [(1, 2), (0, 1), (0, 2)])
        out.append({"cycle_id": f"{comp['id']}:loop(2,3)", "period": v23 / (2j * np.pi), "offset": e})
        out.append({"cycle_id": f"{comp['id']}:loop(1,2)", "period": v12, "boutroux": float(v12.real)})
        out.append({"cycle_id": f"{comp['id']}:loop(1,3)", "period": v13, "boutroux": float(v13.real)})
    # B-cycles between consecutive real components of the same Delta_j: twice the gap integral
    for j, pair in ((1, (0, 1)), (2, (0, 2))):
        comps = sorted([c for c in components if j in c.get("sheets", ()) and c["box"][2] == 0.0],
                       key=lambda c: c["box"][0])
        for c0, c1 in zip(comps[:-1], comps[1:]):
            lo, hi = c0["box"][1], c1["box"][0]
            br = np.linspace(lo, hi, 9)
            x, w = panel_rule(br, 16)
            tv = lab.sweep_real(x)
            val = 2 * complex(np.sum(w * (tv[:, pair[0]] - tv[:, pair[1]])))
            out.append({"cycle_id": f"B{j}:{c0['id']}->{c1['id']}", "period": val, "boutroux": float(val.real)})
    return out


def export_svg(path: Path, curves: dict[str, Sequence[np.ndarray]], support_intervals=(), size: int = 640) -> Path:
    """Write polylines to an SVG file, one colour per group."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    allpts = np.concatenate([np.asarray(p) for ps in curves.values() for p in ps] +
                            [np.array([complex(a, 0), complex(b, 0)]) for a, b in support_intervals] or [np.zeros(1)])
    lo_x, hi_x = np.min(allpts.real), np.max(allpts.real)
    lo_y, hi_y = np.min(allpts.imag), np.max(allpts.imag)
    span = max(hi_x - lo_x, hi_y - lo_y, 1e-9) * 1.1
    cx, cy = 0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y)

    def tr(z):
        return (size * (0.5 + (z.real - cx) / span), size * (0.5 - (z.imag - cy) / span))

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    for a, b in support_intervals:
        (x0, y0), (x1, y1) = tr(complex(a, 0)), tr(complex(b, 0))
        lines.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" stroke="black" stroke-width="3"/>')
    for k, (name, polys) in enumerate(curves.items()):
        col = colours[k % len(colours)]
        for p in polys:
            d = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(tr, np.asarray(p)))
            lines.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{d}"><title>{name}</title></polyline>')
    lines.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(lines))
    return path


def dump_polylines(path: Path, trajs: dict[str, Trajectory]) -> Path:
    path = Path(path)
    path.write_text(json.dumps({k: t.to_json() for k, t in trajs.items()}, indent=1))
    return path
