"""Multiple orthogonal polynomials for the weights ``exp(-N V_j)``.

Type II polynomials ``P_k`` and type I functions ``Q_k = A_1 w_1 + A_2 w_2``
(``w_j = exp(-N V_j)``, ``V_j = V - a_j x``, ``a_1 = -a_2 = a``) are obtained
from moment systems solved in extended precision. On top of a lattice of such
records the module provides the nearest-neighbour recurrence, the step
recurrence along an up-right path, the off-path expansions and the finite-N
spectral curve, i.e. the characteristic polynomial of the coefficient matrix
of the first-order ODE satisfied by ``(P_n, P_{n-e1}, P_{n-e2}) exp(-N V)``.

All heavy arithmetic runs in mpmath at a working precision that is raised
automatically when the moment systems are ill conditioned.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

from .curve import SpectralCurve, density, support
from .numerics import (
    Circle,
    ContractViolation,
    Potential,
    PrecisionConfig,
    RealPoly,
    contour_integral,
    roots,
)

log = logging.getLogger(__name__)

CACHE_ENV = "EXTSOURCE_CACHE"

__all__ = [
    "CACHE_ENV",
    "MultiIndex",
    "UpRightPath",
    "MopRecord",
    "RecurrenceData",
    "FiniteNCurve",
    "MopLattice",
    "PrecisionBudgetExceeded",
    "MopInconsistency",
    "PartialWindowError",
    "LatticeExtensionRequest",
    "AssemblyError",
    "compute_mop",
    "recurrence_coefficients",
    "step_recurrence",
    "offpath_coefficients",
    "finite_n_curve",
    "convergence_study",
    "interlacing_report",
    "biorthogonality_report",
]


class PrecisionBudgetExceeded(RuntimeError):
    """The moment system needs more digits than the budget allows."""

    def __init__(self, message: str, log10_condition: float, digits: int):
        super().__init__(f"{message} (log10 condition {log10_condition:.1f}, budget {digits} digits)")
        self.log10_condition = log10_condition
        self.digits = digits


class MopInconsistency(RuntimeError):
    """A recurrence or orthogonality identity failed beyond tolerance."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class PartialWindowError(ValueError):
    """A recurrence window reaches below the start of the path."""


class LatticeExtensionRequest(LookupError):
    """A required neighbour lies off the lattice (negative component)."""


class AssemblyError(RuntimeError):
    """The finite-N coefficient matrix violates a structural identity."""

    def __init__(self, message: str, entry: str | None = None, value: float | None = None):
        super().__init__(message)
        self.entry = entry
        self.value = value


# --------------------------------------------------------------------------
# indices and paths


@dataclass(frozen=True, order=True)
class MultiIndex:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise LatticeExtensionRequest(f"negative multi-index ({self.k1}, {self.k2})")

    @classmethod
    def of(cls, x) -> "MultiIndex":
        if isinstance(x, MultiIndex):
            return x
        k1, k2 = x
        return cls(int(k1), int(k2))

    @property
    def total(self) -> int:
        return self.k1 + self.k2

    def comp(self, j: int) -> int:
        return self.k1 if j == 1 else self.k2

    def shift(self, j: int, s: int = 1) -> "MultiIndex":
        return MultiIndex(self.k1 + s, self.k2) if j == 1 else MultiIndex(self.k1, self.k2 + s)

    def has_below(self, j: int) -> bool:
        return self.comp(j) > 0

    def as_tuple(self) -> tuple[int, int]:
        return (self.k1, self.k2)

    def __str__(self):
        return f"({self.k1},{self.k2})"


def _other(j: int) -> int:
    return 2 if j == 1 else 1


def _min_deviation(steps: Sequence[MultiIndex]) -> int | None:
    """Smallest ``d`` with ``n_{k+d,j} >= n_{k,j} + 1`` wherever both indices exist."""
    n = len(steps)
    for d in range(1, n):
        if all(steps[k + d].k1 >= steps[k].k1 + 1 and steps[k + d].k2 >= steps[k].k2 + 1
               for k in range(n - d)):
            return d
    return None


@dataclass(frozen=True)
class UpRightPath:
    """Multi-indices ``n_0 = (0,0), n_1, ...`` increasing by one unit step at a time.

    ``steps[k]`` has total degree ``k``; ``d`` bounds how long the path may
    run in one direction.
    """

    steps: tuple
    alpha_target: float
    d: int

    def __post_init__(self):
        st = tuple(MultiIndex.of(s) for s in self.steps)
        object.__setattr__(self, "steps", st)
        if not 0 < self.alpha_target < 1:
            raise ContractViolation("alpha_target must lie in (0, 1)")
        if self.d < 2:
            raise ContractViolation("path deviation d must be >= 2")
        for k, s in enumerate(st):
            if s.total != k:
                raise ContractViolation(f"step {k} has total degree {s.total}")
        for k in range(1, len(st)):
            dk = (st[k].k1 - st[k - 1].k1, st[k].k2 - st[k - 1].k2)
            if dk not in ((1, 0), (0, 1)):
                raise ContractViolation(f"steps {k - 1} -> {k} do not differ by a unit vector")
        for k in range(len(st) - self.d):
            if not (st[k + self.d].k1 >= st[k].k1 + 1 and st[k + self.d].k2 >= st[k].k2 + 1):
                raise ContractViolation(f"path leaves the d = {self.d} corridor at step {k}")

    @classmethod
    def from_alpha(cls, alpha: float, length: int, d: int | None = None) -> "UpRightPath":
        """Path with ``n_{k,1} = floor(alpha k + 1/2)``, ``k = 0..length``."""
        steps = []
        for k in range(length + 1):
            k1 = int(math.floor(alpha * k + 0.5 + 1e-12))
            steps.append(MultiIndex(k1, k - k1))
        if d is None:
            dev = _min_deviation(steps)
            # a path too short to contain a step in both directions constrains nothing
            d = max(2, dev if dev is not None else len(steps))
        return cls(tuple(steps), float(alpha), int(d))

    def __len__(self):
        return len(self.steps)

    def index(self, k: int) -> MultiIndex:
        if k < 0:
            raise PartialWindowError(f"path window reaches step {k} < 0")
        if k >= len(self.steps):
            raise PartialWindowError(f"path has no step {k} (length {len(self.steps) - 1})")
        return self.steps[k]

    def direction(self, k: int) -> int:
        """``j`` with ``n_k - n_{k-1} = e_j``."""
        a, b = self.index(k - 1), self.index(k)
        return 1 if b.k1 == a.k1 + 1 else 2


# --------------------------------------------------------------------------
# records


def _mpstr(x) -> str:
    return mpmath.nstr(x, mpmath.mp.dps, strip_zeros=False) if isinstance(x, mpmath.mpf) else repr(float(x))


@dataclass
class MopRecord:
    """Type II polynomial and type I pair at one multi-index.

    ``A1``/``A2`` have degrees ``k_j - 1`` with leading coefficients
    ``gamma1``/``gamma2`` (``None`` when ``k_j = 0``). ``zeros`` are the
    real zeros of ``P`` in increasing order.
    """

    index: MultiIndex
    N: float
    P: RealPoly
    A1: RealPoly | None
    A2: RealPoly | None
    gamma1: object
    gamma2: object
    zeros: list
    digits: int
    log10_condition: float = 0.0
    residuals: dict = field(default_factory=dict)

    def gamma(self, j: int):
        return self.gamma1 if j == 1 else self.gamma2

    def A(self, j: int) -> RealPoly | None:
        return self.A1 if j == 1 else self.A2

    def to_dict(self) -> dict:
        with mpmath.workdps(self.digits):
            enc = lambda p: None if p is None else [_mpstr(c) for c in p.coeffs]
            return {
                "index": list(self.index.as_tuple()),
                "N": self.N,
                "digits": self.digits,
                "P": enc(self.P),
                "A1": enc(self.A1),
                "A2": enc(self.A2),
                "gamma1": None if self.gamma1 is None else _mpstr(self.gamma1),
                "gamma2": None if self.gamma2 is None else _mpstr(self.gamma2),
                "zeros": [repr(float(z)) for z in self.zeros],
                "log10_condition": self.log10_condition,
                "residuals": {k: float(v) for k, v in self.residuals.items()},
            }

    @classmethod
    def from_dict(cls, d: dict) -> "MopRecord":
        digits = int(d["digits"])
        with mpmath.workdps(digits):
            dec = lambda c: None if c is None else RealPoly(tuple(mpmath.mpf(x) for x in c))
            g = lambda x: None if x is None else mpmath.mpf(x)
            return cls(MultiIndex.of(d["index"]), d["N"], dec(d["P"]), dec(d["A1"]), dec(d["A2"]),
                       g(d["gamma1"]), g(d["gamma2"]), [float(z) for z in d["zeros"]], digits,
                       float(d.get("log10_condition", 0.0)), dict(d.get("residuals", {})))


@dataclass
class RecurrenceData:
    """Recurrence coefficients at one index plus their consistency report."""

    index: MultiIndex
    a1: object
    a2: object
    b1: object
    b2: object
    theta: list = field(default_factory=list)
    offpath_p: list = field(default_factory=list)
    offpath_q: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    def a(self, j: int):
        return self.a1 if j == 1 else self.a2

    def b(self, j: int):
        return self.b1 if j == 1 else self.b2

    def to_dict(self) -> dict:
        f = lambda x: None if x is None else float(x)
        return {
            "index": list(self.index.as_tuple()),
            "a1": f(self.a1), "a2": f(self.a2), "b1": f(self.b1), "b2": f(self.b2),
            "theta": [float(t) for t in self.theta],
            "offpath_p": [float(t) for t in self.offpath_p],
            "offpath_q": [float(t) for t in self.offpath_q],
            "report": {k: (float(v) if isinstance(v, (int, float, mpmath.mpf)) else v) for k, v in self.report.items()},
        }


@dataclass
class FiniteNCurve:
    """``det(xi I + W) = xi^3 + q2 xi^2 + q1 xi + q0`` at one index."""

    q0: RealPoly
    q1: RealPoly
    q2: RealPoly
    index: MultiIndex
    N: float
    a: float
    V: Potential
    W: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @property
    def alpha(self) -> float:
        return self.index.k1 / self.N

    def to_spectral_curve(self) -> SpectralCurve:
        """Double-precision :class:`SpectralCurve` with ``alpha = k1 / N``."""
        return SpectralCurve(self.V, float(self.a), float(self.alpha), self.q1.to_float(), self.q0.to_float())

    def to_dict(self) -> dict:
        return {
            "index": list(self.index.as_tuple()),
            "N": self.N,
            "a": self.a,
            "v": list(self.V.vcoeffs),
            "q0": self.q0.as_list(),
            "q1": self.q1.as_list(),
            "q2": self.q2.as_list(),
            "report": {k: float(v) for k, v in self.report.items()},
        }


# --------------------------------------------------------------------------
# lattice


def _cache_dir(explicit) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def _padd(p: RealPoly, q: RealPoly, s=1):
    n = max(len(p.coeffs), len(q.coeffs))
    return RealPoly(tuple(p.coeff(k) + s * q.coeff(k) for k in range(n)))


class MopLattice:
    """MOP records for fixed ``(V, a, N)`` over arbitrary multi-indices.

    The moment tables ``int x^k w_j`` are shared by every record. If a
    moment system's condition number needs more digits than currently in
    use, the working precision is raised (up to ``max_digits``), the tables
    are rebuilt and all records recomputed.

    Parameters
    ----------
    V : Potential
    a : float
        External-source parameter; ``a_1 = a``, ``a_2 = -a``.
    N : float
        Weight scaling in ``exp(-N V_j)``.
    cfg : PrecisionConfig
        ``working_digits`` is the accuracy target of the coefficients.
    max_digits : int, optional
        Precision budget; defaults to ``3 * working_digits``.
    cache_dir : path, optional
        Directory of the on-disk record cache; the ``EXTSOURCE_CACHE``
        environment variable is used when omitted.
    """

    def __init__(self, V: Potential, a: float, N: float, cfg: PrecisionConfig | None = None,
                 max_digits: int | None = None, cache_dir=None):
        self.V = V
        self.a = float(a)
        self.N = N
        self.cfg = cfg or PrecisionConfig.extended()
        self.digits = int(self.cfg.working_digits)
        self.dps = self.digits + 20
        self.max_dps = int(max_digits or 3 * self.digits)
        self.cache_dir = _cache_dir(cache_dir)
        self._mom: dict[int, list] = {}
        self._kmax = -1
        self._records: dict[MultiIndex, MopRecord] = {}
        self._b: dict = {}

    # ---- precision bookkeeping

    @property
    def residual_tol(self) -> float:
        return 10.0 ** (-(self.digits - 8))

    def aj(self, j: int) -> float:
        return self.a if j == 1 else -self.a

    def exponent(self, j: int) -> RealPoly:
        """``V_j(x) = V(x) - a_j x`` with coefficients ``v_k / k`` formed in extended precision.

        Building the coefficients from ``v_k`` (rather than from float
        ``v_k / k``) keeps the quadrature and the moment recurrence, which
        uses ``V_j'``, consistent with the same weight.
        """
        with mpmath.workdps(self.dps + 40):
            c = [mpmath.mpf(0)] + [mpmath.mpf(v) / (k + 1) for k, v in enumerate(self.V.vcoeffs)]
            c[1] -= mpmath.mpf(self.aj(j))
        return RealPoly(tuple(c))

    def _escalate(self, need: int):
        if need > self.max_dps:
            raise PrecisionBudgetExceeded("moment system exceeds the precision budget",
                                          need - self.digits - 10, self.max_dps)
        log.info("raising working precision from %d to %d digits", self.dps, need)
        self.dps = need
        self._mom.clear()
        self._kmax = -1
        self._records.clear()
        self._b.clear()

    # ---- moments

    def moments(self, kmax: int) -> dict[int, list]:
        """Moment tables ``{j: [int x^k w_j dx for k <= kmax]}`` (extended if needed)."""
        if kmax <= self._kmax:
            return self._mom
        kmax = max(kmax, 2 * self._kmax, 16)
        with mpmath.workdps(self.dps):
            for j in (1, 2):
                self._mom[j] = self._moment_table(j, kmax)
        self._kmax = kmax
        return self._mom

    def _moment_table(self, j: int, kmax: int) -> list:
        """Moments of ``w_j`` up to ``kmax``.

        The first ``m - 1`` moments come from tanh-sinh quadrature; the rest
        from integration by parts,
        ``k mu_{k-1} = N sum_i c_i mu_{k+i}`` with ``V_j' = sum_i c_i x^i``,
        run forward with guard digits.
        """
        W = self.exponent(j)
        base = self._base_moments(W, W.degree - 2)
        with mpmath.workdps(self.dps + 20):
            c = [mpmath.mpf(x) for x in W.deriv().coeffs]
            top = len(c) - 1
            Nm = mpmath.mpf(self.N)
            mu = list(base)
            for k in range(0, kmax - top + 1):
                s = (k * mu[k - 1] / Nm if k > 0 else 0) - mpmath.fsum(c[i] * mu[k + i] for i in range(top))
                mu.append(s / c[top])
        with mpmath.workdps(self.dps):
            return [+x for x in mu[:kmax + 1]]

    def _base_moments(self, W: RealPoly, kmax: int) -> list:
        """Tanh-sinh quadrature split at the real critical points of ``W``."""
        crit = sorted(float(z.real) for z, _ in roots(W.to_float().deriv()) if abs(z.imag) < 1e-9)
        with mpmath.workdps(self.dps + 20):
            Wm = W.to_mp()
            Nm = mpmath.mpf(self.N)
            pts = [-mpmath.inf] + [mpmath.mpf(c) for c in crit] + [mpmath.inf]
            out = []
            for k in range(kmax + 1):
                val, err = mpmath.quad(lambda x: x**k * mpmath.exp(-Nm * Wm(x)), pts, error=True)
                if not err <= mpmath.mpf(10) ** (-(self.dps + 5)) * (abs(val) + out[0] if out else abs(val)):
                    raise PrecisionBudgetExceeded("weighted base moments did not converge", float("nan"), self.dps)
                out.append(val)
            return out

    def integral(self, p: RealPoly, j: int):
        """``int p(x) w_j(x) dx`` through the moment table."""
        mom = self.moments(len(p.coeffs) - 1)[j]
        with mpmath.workdps(self.dps):
            return mpmath.fsum(c * mom[k] for k, c in enumerate(p.coeffs))

    def _integral_scale(self, p: RealPoly, j: int):
        mom = self.moments(len(p.coeffs))[j]
        with mpmath.workdps(self.dps):
            # |mu_k| bounds the even moments; odd ones use the neighbouring even moment
            s = [abs(mom[k]) if k % 2 == 0 else mpmath.sqrt(abs(mom[k - 1] * mom[k + 1])) for k in range(len(p.coeffs))]
            return mpmath.fsum(abs(c) * s[k] for k, c in enumerate(p.coeffs))

    def pq_integral(self, P: RealPoly, rec: MopRecord, s: int = 0):
        """``int x^s P(x) Q(x) dx`` with ``Q`` the type I function of ``rec``."""
        xs = RealPoly.monomial(s, mpmath.mpf(1))
        out = mpmath.mpf(0)
        with mpmath.workdps(self.dps):
            for j in (1, 2):
                A = rec.A(j)
                if A is not None:
                    out += self.integral(xs * P * A, j)
        return out

    # ---- cache

    def _cache_key(self) -> str:
        payload = json.dumps({"v": list(self.V.vcoeffs), "a": self.a, "N": self.N, "digits": self.digits,
                              "scheme": 2},
                             sort_keys=True)
        return hashlib.sha1(payload.encode()).hexdigest()[:16]

    def _cache_path(self, idx: MultiIndex) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / self._cache_key() / f"{idx.k1}_{idx.k2}.json"

    def _load(self, idx: MultiIndex) -> MopRecord | None:
        path = self._cache_path(idx)
        if path is None or not path.exists():
            return None
        rec = MopRecord.from_dict(json.loads(path.read_text()))
        if rec.digits < self.dps:
            return None
        return rec

    def _store(self, rec: MopRecord):
        path = self._cache_path(rec.index)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        with mpmath.workdps(rec.digits):
            path.write_text(json.dumps(rec.to_dict(), indent=1, sort_keys=True))

    # ---- records

    def record(self, index) -> MopRecord:
        idx = MultiIndex.of(index)
        rec = self._records.get(idx)
        if rec is not None:
            return rec
        rec = self._load(idx)
        if rec is None:
            while True:
                try:
                    rec = self._compute(idx)
                    break
                except _NeedDigits as e:
                    self._escalate(e.dps)
            self._store(rec)
        self._records[idx] = rec
        return rec

    def _compute(self, idx: MultiIndex) -> MopRecord:
        K = idx.total
        self.moments(2 * K + max(self.V.m, 2) + 2)
        mom = self._mom
        with mpmath.workdps(self.dps):
            one = mpmath.mpf(1)
            if K == 0:
                return MopRecord(idx, self.N, RealPoly((one,)), None, None, None, None, [], self.dps)
            rows = [(j, l) for j in (1, 2) for l in range(idx.comp(j))]
            M = mpmath.matrix(K, K)
            rhs = mpmath.matrix(K, 1)
            for r, (j, l) in enumerate(rows):
                for i in range(K):
                    M[r, i] = mom[j][l + i]
                rhs[r] = -mom[j][l + K]
            lc = self._log10_cond(M)
            need = int(math.ceil(self.digits + lc + 12))
            if need > self.dps:
                raise _NeedDigits(need)
            c = mpmath.lu_solve(M, rhs)
            P = RealPoly(tuple(c[i] for i in range(K)) + (one,))
            # type I: columns (A1 coefficients | A2 coefficients), rows l = 0..K-1
            T = M.T
            e = mpmath.matrix(K, 1)
            e[K - 1] = one
            sol = mpmath.lu_solve(T, e)
            A1 = RealPoly(tuple(sol[i] for i in range(idx.k1))) if idx.k1 else None
            A2 = RealPoly(tuple(sol[idx.k1 + i] for i in range(idx.k2))) if idx.k2 else None
            g1 = sol[idx.k1 - 1] if idx.k1 else None
            g2 = sol[K - 1] if idx.k2 else None
            rec = MopRecord(idx, self.N, P, A1, A2, g1, g2, [], self.dps, lc)
            rec.residuals = self._record_residuals(rec)
            rec.zeros = self._zeros(P)
        return rec

    @staticmethod
    def _log10_cond(M) -> float:
        try:
            inv = M ** -1
        except ZeroDivisionError:
            return float("inf")
        return float(mpmath.log10(mpmath.mnorm(M, 1) * mpmath.mnorm(inv, 1)))

    def _record_residuals(self, rec: MopRecord) -> dict:
        idx, K = rec.index, rec.index.total
        ortho = mpmath.mpf(0)
        for j in (1, 2):
            for l in range(idx.comp(j)):
                q = RealPoly.monomial(l, mpmath.mpf(1)) * rec.P
                ortho = max(ortho, abs(self.integral(q, j)) / self._integral_scale(q, j))
        typeI = mpmath.mpf(0)
        for l in range(K):
            xs = RealPoly.monomial(l, mpmath.mpf(1))
            val = self.pq_integral(xs, rec)
            scale = sum(self._integral_scale(xs * rec.A(j), j) for j in (1, 2) if rec.A(j) is not None)
            target = 1 if l == K - 1 else 0
            typeI = max(typeI, abs(val - target) / max(scale, 1))
        return {"orthogonality": ortho, "type_I_normalization": typeI}

    def _zeros(self, P: RealPoly) -> list[float]:
        rs = roots(P, PrecisionConfig(working_digits=max(self.digits, 30), root_tol=1e-12))
        return sorted(float(z.real) for z, m in rs for _ in range(m))

    # ---- recurrence coefficients

    def rec_a(self, idx, j: int):
        """``a^{(j)}_k = gamma^{(j)}_k / gamma^{(j)}_{k+e_j}`` (zero when ``k_j = 0``)."""
        idx = MultiIndex.of(idx)
        if idx.comp(j) == 0:
            return mpmath.mpf(0)
        with mpmath.workdps(self.dps):
            return self.record(idx).gamma(j) / self.record(idx.shift(j)).gamma(j)

    def rec_b(self, idx, j: int, route: str = "coefficients"):
        """``b^{(j)}_k`` by subleading coefficients or by a contour integral."""
        idx = MultiIndex.of(idx)
        key = (idx, j, route)
        if key in self._b:
            return self._b[key]
        P = self.record(idx).P
        Pe = self.record(idx.shift(j)).P
        with mpmath.workdps(self.dps):
            if route == "coefficients":
                val = P.coeff(idx.total - 1) - Pe.coeff(idx.total) if idx.total else -Pe.coeff(0)
            elif route == "contour":
                val = self._contour_b(P, Pe, idx)
            else:
                raise ContractViolation(f"unknown route {route!r}")
        self._b[key] = val
        return val

    def _contour_b(self, P: RealPoly, Pe: RealPoly, idx: MultiIndex):
        zs = self.record(idx).zeros
        r = 1.5 * max([abs(z) for z in zs], default=0.0) + 1.0
        cfg = PrecisionConfig(working_digits=self.dps, quad_rel_tol=10.0 ** (-(self.digits - 5)))
        for _ in range(4):
            # enclosure check: P must not vanish on or near the circle
            if all(abs(z) < r / 1.2 for z in zs):
                break
            r *= 1.5
        g = lambda z: Pe(z) / (P(z) * z)
        val = contour_integral(g, Circle(0j, r), cfg, abs_floor=10.0 ** (-(self.digits - 2)))
        return mpmath.re(-val / (2j * mpmath.pi))


class _NeedDigits(Exception):
    def __init__(self, dps: int):
        self.dps = dps


def _lattice(V, a, N, cfg, lattice) -> MopLattice:
    if lattice is not None:
        if lattice.V != V or lattice.a != float(a) or lattice.N != N:
            raise ContractViolation("lattice model does not match (V, a, N)")
        return lattice
    return MopLattice(V, a, N, cfg)


def compute_mop(V: Potential, a: float, N: float, index, cfg: PrecisionConfig | None = None,
                lattice: MopLattice | None = None) -> MopRecord:
    """Type II and type I multiple orthogonal polynomials at ``index``.

    Raises :class:`MopInconsistency` when an orthogonality residual or the
    real-simple-zero property fails, and :class:`PrecisionBudgetExceeded`
    when the moment system is too ill conditioned for the budget.

    Examples
    --------
    >>> rec = compute_mop(Potential.gaussian(), 1.0, 1, (1, 1))
    >>> [round(float(c), 12) for c in rec.P.coeffs]
    [-2.0, 0.0, 1.0]
    """
    lat = _lattice(V, a, N, cfg, lattice)
    rec = lat.record(index)
    tol = lat.residual_tol
    bad = {k: float(v) for k, v in rec.residuals.items() if v > tol}
    if bad:
        raise MopInconsistency(f"orthogonality residuals above {tol:.1e} at {rec.index}", bad)
    zr = _zero_certificate(lat, rec)
    rec.residuals.update(zr)
    if zr["sign_changes"] != rec.index.total or len(rec.zeros) != rec.index.total:
        raise MopInconsistency(f"P at {rec.index} does not have {rec.index.total} real simple zeros", zr)
    return rec


def _zero_certificate(lat: MopLattice, rec: MopRecord) -> dict:
    """Sign changes of ``P`` between its computed zeros (AT-system check)."""
    zs = rec.zeros
    if not zs:
        return {"sign_changes": 0, "min_gap": float("inf")}
    pad = 1.0 + (zs[-1] - zs[0])
    probes = [zs[0] - pad] + [0.5 * (u + v) for u, v in zip(zs[:-1], zs[1:])] + [zs[-1] + pad]
    with mpmath.workdps(lat.dps):
        vals = [rec.P(mpmath.mpf(x)) for x in probes]
    changes = sum(1 for u, v in zip(vals[:-1], vals[1:]) if mpmath.sign(u) * mpmath.sign(v) < 0)
    gaps = np.diff(zs)
    return {"sign_changes": changes, "min_gap": float(gaps.min()) if len(gaps) else float("inf")}


def interlacing_report(lattice: MopLattice, indices: Sequence) -> dict:
    """Check strict interlacing of zeros of ``P_k`` and ``P_{k-e_j}`` on every lattice edge."""
    edges, failures = 0, []
    for idx in map(MultiIndex.of, indices):
        for j in (1, 2):
            if not idx.has_below(j):
                continue
            big = lattice.record(idx).zeros
            small = lattice.record(idx.shift(j, -1)).zeros
            edges += 1
            ok = len(big) == len(small) + 1 and all(big[i] < small[i] < big[i + 1] for i in range(len(small)))
            if not ok:
                failures.append([list(idx.as_tuple()), j])
    return {"edges": edges, "failures": failures, "passed": not failures}


def biorthogonality_report(lattice: MopLattice, indices: Sequence) -> dict:
    """Residuals of ``int P_k Q_j`` against the biorthogonality pattern.

    Only pairs where the pattern prescribes a value are checked: 1 when
    ``|k| = |j| - 1``; 0 when ``k >= j`` componentwise or ``|k| <= |j| - 2``.
    """
    idxs = [MultiIndex.of(i) for i in indices]
    worst, checked = 0.0, 0
    for k in idxs:
        Pk = lattice.record(k).P
        for j in idxs:
            if j.total == 0:
                continue
            if k.total == j.total - 1:
                target = 1
            elif (j.k1 <= k.k1 and j.k2 <= k.k2) or k.total <= j.total - 2:
                target = 0
            else:
                continue
            rec = lattice.record(j)
            val = lattice.pq_integral(Pk, rec)
            scale = sum(lattice._integral_scale(Pk * rec.A(i), i) for i in (1, 2) if rec.A(i) is not None)
            worst = max(worst, float(abs(val - target) / max(scale, 1)))
            checked += 1
    return {"pairs": checked, "max_residual": worst, "passed": worst < lattice.residual_tol}


# --------------------------------------------------------------------------
# recurrences


def _coeff_residual(p: RealPoly, scale_polys: Sequence[RealPoly]) -> float:
    scale = max((abs(c) for q in scale_polys for c in q.coeffs), default=1)
    return float(max(abs(c) for c in p.coeffs) / max(scale, 1))


def recurrence_coefficients(V: Potential, a: float, N: float, index, cfg: PrecisionConfig | None = None,
                            lattice: MopLattice | None = None, n_points: int = 20, seed: int = 0) -> RecurrenceData:
    """Nearest-neighbour recurrence coefficients at ``index``.

    ``b^{(j)}`` comes from ``-(1/2 pi i) oint P_{k+e_j}/P_k dz/z`` on a
    circle enclosing all zeros; ``a^{(j)}`` from ratios of type I leading
    coefficients. The report compares ``b`` with the subleading-coefficient
    route, ``a`` with a least-squares fit of the recurrence remainder, and
    the full four-term identity at ``n_points`` random points.
    """
    lat = _lattice(V, a, N, cfg, lattice)
    idx = MultiIndex.of(index)
    tol = lat.residual_tol
    with mpmath.workdps(lat.dps):
        b = {j: lat.rec_b(idx, j, "contour") for j in (1, 2)}
        bc = {j: lat.rec_b(idx, j, "coefficients") for j in (1, 2)}
        acoef = {j: lat.rec_a(idx, j) for j in (1, 2)}
        P = lat.record(idx).P
        below = {j: lat.record(idx.shift(j, -1)).P for j in (1, 2) if idx.has_below(j)}
        x = RealPoly((mpmath.mpf(0), mpmath.mpf(1)))
        rng = np.random.default_rng(seed)
        zs = lat.record(idx).zeros
        span = max([abs(z) for z in zs], default=1.0) + 1.0
        pts = [mpmath.mpf(float(t)) for t in rng.uniform(-span, span, n_points)]
        four_term = 0.0
        a_fit_err = 0.0
        for j in (1, 2):
            Pe = lat.record(idx.shift(j)).P
            rem = x * P - Pe - b[j] * P
            full = rem
            for i, Pi in below.items():
                full = _padd(full, acoef[i] * Pi, -1)
            for t in pts:
                scale = abs(t * P(t)) + abs(Pe(t)) + abs(b[j] * P(t)) + sum(abs(acoef[i] * Pi(t)) for i, Pi in below.items())
                four_term = max(four_term, float(abs(full(t)) / max(scale, 1e-300)))
            fit = _fit_a(rem, below, idx.total)
            for i in below:
                a_fit_err = max(a_fit_err, float(abs(fit[i] - acoef[i]) / max(abs(acoef[i]), 1)))
        b_err = max(float(abs(b[j] - bc[j]) / max(abs(b[j]), 1)) for j in (1, 2))
    report = {"four_term_residual": four_term, "b_route_difference": b_err, "a_route_difference": a_fit_err}
    # the contour route is limited only by the trapezoid tolerance
    ctol = max(tol, 10.0 ** (-(lat.digits - 12)))
    if four_term > ctol or b_err > ctol or a_fit_err > ctol:
        raise MopInconsistency(f"recurrence identities fail at {idx}", report)
    return RecurrenceData(idx, acoef[1], acoef[2], b[1], b[2], report=report)


def _fit_a(rem: RealPoly, below: dict, K: int) -> dict:
    """Least-squares ``rem = sum_i a_i P_{k-e_i}`` over all coefficients."""
    keys = sorted(below)
    if not keys:
        return {}
    A = mpmath.matrix(K, len(keys))
    y = mpmath.matrix(K, 1)
    for r in range(K):
        y[r] = rem.coeff(r)
        for c, i in enumerate(keys):
            A[r, c] = below[i].coeff(r)
    if len(keys) == 2 and K < 2:
        raise MopInconsistency("remainder too short to separate a^(1) and a^(2)")
    sol, _ = mpmath.qr_solve(A, y)
    return {i: sol[c] for c, i in enumerate(keys)}


def _expand_down(lat: MopLattice, path: UpRightPath, k: int, c: int) -> dict[int, object]:
    """Coefficients ``{l: p}`` with ``P_{n_k - e_c} = sum_l p P_{n_{k-l}}``.

    Repeatedly applies ``P_{m+e_d} - P_{m+e_c} = (b^{(c)}_m - b^{(d)}_m) P_m``
    walking back along the path until the path itself steps in direction ``c``.
    """
    if not path.index(k).has_below(c):
        raise LatticeExtensionRequest(f"{path.index(k)} - e{c} is off the lattice")
    out: dict[int, object] = {}
    mult = mpmath.mpf(1)
    kk = k
    while True:
        if kk - 1 < 0:
            raise PartialWindowError(f"off-path expansion at step {k} runs past the start of the path")
        d = path.direction(kk)
        out[k - kk + 1] = out.get(k - kk + 1, 0) + mult
        if d == c:
            return out
        m = path.index(kk - 1).shift(c, -1)
        mult = mult * (lat.rec_b(m, c) - lat.rec_b(m, d))
        kk -= 1


def _expand_up(lat: MopLattice, path: UpRightPath, k: int, c: int) -> dict[int, object]:
    """Coefficients ``{i: q}`` with ``Q_{n_k + e_c} = sum_i q Q_{n_{k+i+1}}``.

    With ``d`` the direction of the next path step, each stage applies
    ``Q_{n+e_c} = Q_{n+e_d} + (b^{(c)}_{n+e_d} - b^{(d)}_{n+e_c}) Q_{n+e_c+e_d}``
    and moves forward until the path itself steps in direction ``c``.
    """
    out: dict[int, object] = {}
    mult = mpmath.mpf(1)
    kk = k
    while True:
        if kk + 1 >= len(path):
            raise PartialWindowError(f"off-path expansion at step {k} runs past the end of the path")
        d = path.direction(kk + 1)
        out[kk - k] = out.get(kk - k, 0) + mult
        if d == c:
            return out
        off = path.index(kk).shift(c)
        mult = mult * (lat.rec_b(path.index(kk + 1), c) - lat.rec_b(off, d))
        kk += 1


def step_recurrence(path: UpRightPath, k: int, lattice: MopLattice) -> tuple[list, float]:
    """``x P_{n_k} = P_{n_{k+1}} + sum_{l=0}^{d} theta^{(l)} P_{n_{k-l}}``.

    ``theta^{(0)}`` is ``b`` in the direction of the next step, ``theta^{(1)}``
    equals ``a^{(1)} + a^{(2)}`` and the higher terms are ``a^{(j)}`` times
    products of ``b``-differences collected by :func:`_expand_down`. Returns
    the ``d + 1`` coefficients and the coefficientwise residual of the
    identity relative to the largest coefficient involved.
    """
    lat = lattice
    n = path.index(k)
    nxt = path.index(k + 1)
    with mpmath.workdps(lat.dps):
        theta = [mpmath.mpf(0)] * (path.d + 1)
        theta[0] = lat.rec_b(n, path.direction(k + 1))
        for c in (1, 2):
            if not n.has_below(c):
                continue
            ac = lat.rec_a(n, c)
            for l, p in _expand_down(lat, path, k, c).items():
                if l > path.d:
                    raise MopInconsistency(f"step recurrence at {k} needs l = {l} > d = {path.d}")
                theta[l] += ac * p
        x = RealPoly((mpmath.mpf(0), mpmath.mpf(1)))
        lhs = x * lat.record(n).P
        rhs = lat.record(nxt).P
        used = [lhs, rhs]
        for l, t in enumerate(theta):
            if k - l < 0:
                if t != 0:
                    raise PartialWindowError(f"window of step {k} reaches below the path start")
                continue
            term = t * lat.record(path.index(k - l)).P
            rhs = rhs + term
            used.append(term)
        res = _coeff_residual(_padd(lhs, rhs, -1), used)
    return theta, res


def offpath_coefficients(path: UpRightPath, k: int, lattice: MopLattice, n_points: int = 12,
                         seed: int = 1) -> dict:
    """Expansion coefficients of the off-path neighbours of ``n_k``.

    ``p_list`` expresses ``P_{n_k - e_perp}`` (``perp``: the direction not
    taken by the step into ``n_k``) in path polynomials ``P_{n_{k-1-i}}``;
    ``q_list`` expresses ``Q_{n_k + e_perp}`` (``perp``: the direction not
    taken by the step out of ``n_k``) in path functions ``Q_{n_{k+1+i}}``.
    Both identities are verified: the first coefficientwise, the second by
    evaluating the type I functions at sample points.
    """
    lat = lattice
    out = {"p_list": [], "q_list": [], "p_residual": None, "q_residual": None}
    with mpmath.workdps(lat.dps):
        if k >= 1:
            c = _other(path.direction(k))
            n = path.index(k)
            if n.has_below(c):
                coef = _expand_down(lat, path, k, c)
                plist = [coef.get(i + 1, mpmath.mpf(0)) for i in range(max(coef))]
                lhs = lat.record(n.shift(c, -1)).P
                rhs = RealPoly((mpmath.mpf(0),))
                used = [lhs]
                for i, p in enumerate(plist):
                    term = p * lat.record(path.index(k - 1 - i)).P
                    used.append(term)
                    rhs = rhs + term
                out["p_list"] = plist
                out["p_residual"] = _coeff_residual(_padd(lhs, rhs, -1), used)
        if k + 1 < len(path):
            c = _other(path.direction(k + 1))
            coef = _expand_up(lat, path, k, c)
            qlist = [coef.get(i, mpmath.mpf(0)) for i in range(max(coef) + 1)]
            target = lat.record(path.index(k).shift(c))
            recs = [lat.record(path.index(k + 1 + i)) for i in range(len(qlist))]
            zs = target.zeros or [0.0]
            span = max(abs(z) for z in zs) + 0.5
            pts = np.random.default_rng(seed).uniform(-span, span, n_points)
            worst = 0.0
            for t in pts:
                t = mpmath.mpf(float(t))
                lhs = _eval_Q(lat, target, t)
                terms = [q * _eval_Q(lat, r, t) for q, r in zip(qlist, recs)]
                scale = abs(lhs) + sum(abs(v) for v in terms)
                worst = max(worst, float(abs(lhs - mpmath.fsum(terms)) / max(scale, mpmath.mpf(10) ** (-lat.dps))))
            out["q_list"] = qlist
            out["q_residual"] = worst
    return out


def _eval_Q(lat: MopLattice, rec: MopRecord, x):
    out = mpmath.mpf(0)
    for j in (1, 2):
        A = rec.A(j)
        if A is not None:
            out += A(x) * mpmath.exp(-lat.N * lat.exponent(j).to_mp()(x))
    return out


# --------------------------------------------------------------------------
# finite-N spectral curve


def _pol_dV_cauchy(V: Potential, moments: Sequence):
    """Polynomial part of ``V'(z) int g(x)/(x-z) dx`` from ``M_s = int x^s g``.

    ``int g/(x-z) = -sum_s M_s z^{-s-1}``, so with ``V' = sum v_k z^{k-1}``
    the polynomial part is ``-sum_k v_k sum_{s<=k-2} M_s z^{k-2-s}``.
    """
    m = V.m
    coeffs = [mpmath.mpf(0)] * max(m - 1, 1)
    for k in range(2, m + 1):
        vk = mpmath.mpf(V.v(k))
        for s in range(k - 1):
            coeffs[k - 2 - s] -= vk * moments[s]
    return RealPoly(tuple(coeffs))


def finite_n_curve(V: Potential, a: float, N: float, index, cfg: PrecisionConfig | None = None,
                   lattice: MopLattice | None = None) -> FiniteNCurve:
    """Finite-N spectral curve at ``index`` (both components at least 1).

    The coefficient matrix ``W`` of ``phi' = N W phi`` with
    ``phi = (P_n, P_{n-e1}, P_{n-e2}) exp(-N V)`` has entries, with rows
    ``r = (P_n, P_{n-e1}, P_{n-e2})``, columns ``s = (n, n+e1, n+e2)``,
    ``beta = (1, -a^{(1)}, -a^{(2)})`` and ``G_ij = pol(V' C[r_i Q_{s_j}])``:

    * ``W_00 = -V' + G_00``
    * ``W_jj = -a_j + beta_j G_jj`` for ``j = 1, 2``
    * ``W_ij = beta_j G_ij`` otherwise.

    The ``-V'`` and ``-a_j`` terms are the exceptional cases of the Cauchy
    product reductions ``P C[Q] = C[PQ] - 1`` and
    ``A^{(j)}_{n+e_j} C_j[P_{n-e_j}] = C_j[A P] - gamma_{n+e_j}/gamma_n``.
    ``G`` only needs ``int x^s r_i Q_{s_j}`` for ``s <= m - 2``. The ODE
    itself is verified coefficientwise as an independent check of the
    entries.
    """
    lat = _lattice(V, a, N, cfg, lattice)
    idx = MultiIndex.of(index)
    if idx.k1 < 1 or idx.k2 < 1:
        raise ContractViolation("finite_n_curve needs both index components >= 1")
    m = V.m
    with mpmath.workdps(lat.dps):
        rows = [idx, idx.shift(1, -1), idx.shift(2, -1)]
        cols = [idx, idx.shift(1), idx.shift(2)]
        r = [lat.record(i).P for i in rows]
        qrec = [lat.record(j) for j in cols]
        beta = [mpmath.mpf(1), -lat.rec_a(idx, 1), -lat.rec_a(idx, 2)]
        dV = RealPoly(tuple(mpmath.mpf(v) for v in V.vcoeffs))
        W = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(3):
                mom = [lat.pq_integral(r[i], qrec[j], s) for s in range(max(m - 1, 1))]
                G = beta[j] * _pol_dV_cauchy(V, mom)
                if i == j == 0:
                    G = G - dV
                elif i == j:
                    G = G - lat.aj(j)
                W[i][j] = G
        tr = W[0][0] + W[1][1] + W[2][2]
        tr2 = RealPoly((mpmath.mpf(0),))
        for i in range(3):
            for j in range(3):
                tr2 = tr2 + W[i][j] * W[j][i]
        q2 = tr
        q1 = RealPoly(tuple(c / 2 for c in (tr * tr - tr2).coeffs))
        q0 = (W[0][0] * (W[1][1] * W[2][2] - W[1][2] * W[2][1])
              - W[0][1] * (W[1][0] * W[2][2] - W[1][2] * W[2][0])
              + W[0][2] * (W[1][0] * W[2][1] - W[1][1] * W[2][0]))
        report = _curve_checks(lat, V, idx, r, W, q0, q1, q2)
        # drop the rounding-level coefficients above the degrees fixed by the checks
        q0 = RealPoly(q0.coeffs[:m])
        q1 = RealPoly(q1.coeffs[:m - 1])
        q2 = RealPoly(q2.coeffs[:m])
    curve = FiniteNCurve(q0, q1, q2, idx, N, float(a), V, W, report)
    tol = 10.0 ** (-(lat.digits - 10))
    for key in ("trace_identity", "q1_degree", "q0_leading", "q0_subleading", "ode_residual"):
        if report[key] > tol:
            raise AssemblyError(f"finite-N curve check {key} failed at {idx}", key, report[key])
    return curve


def _curve_checks(lat, V, idx, r, W, q0, q1, q2) -> dict:
    m = V.m
    N = mpmath.mpf(lat.N)
    amp = mpmath.mpf(lat.a)
    dV = RealPoly(tuple(mpmath.mpf(v) for v in V.vcoeffs))
    vm, vm1 = mpmath.mpf(V.v(m)), mpmath.mpf(V.v(m - 1))
    scale = max(1, max(abs(c) for c in dV.coeffs))
    trace = max(abs(c) for c in _padd(q2, dV).coeffs) / scale
    q1_top = max([abs(q1.coeff(k)) for k in range(m - 1, len(q1.coeffs))] + [mpmath.mpf(0)]) / scale
    lead = abs(q0.coeff(m - 1) - vm * amp**2)
    sub = abs(q0.coeff(m - 2) - (vm1 * amp + vm * (idx.k1 - idx.k2) / N) * amp)
    top = max([abs(q0.coeff(k)) for k in range(m, len(q0.coeffs))] + [mpmath.mpf(0)])
    # r_i'/N - V' r_i = sum_j W_ij r_j
    ode = mpmath.mpf(0)
    for i in range(3):
        lhs = RealPoly(tuple(c / N for c in r[i].deriv().coeffs)) - dV * r[i]
        rhs = RealPoly((mpmath.mpf(0),))
        used = [lhs]
        for j in range(3):
            term = W[i][j] * r[j]
            used.append(term)
            rhs = rhs + term
        ode = max(ode, mpmath.mpf(_coeff_residual(_padd(lhs, rhs, -1), used)))
    return {"trace_identity": float(trace), "q1_degree": float(q1_top),
            "q0_leading": float(max(lead, top) / scale), "q0_subleading": float(sub / scale),
            "ode_residual": float(ode)}


# --------------------------------------------------------------------------
# convergence along a ladder


def _coefficient_distance(fc: FiniteNCurve, ref: SpectralCurve) -> float:
    d = 0.0
    for q, p in ((fc.q0, ref.p0), (fc.q1, ref.p1)):
        n = max(len(q.coeffs), len(p.coeffs))
        d = max(d, max(float(abs(q.coeff(k) - mpmath.mpf(p.coeff(k)))) for k in range(n)))
    return d


def _reference_cdf(ref: SpectralCurve):
    from scipy.integrate import quad

    sup = support(ref)
    ivs = list(sup.intervals)
    f = lambda t: float(density(ref, np.array([t]))[0])
    masses = [quad(f, lo, hi, limit=200, epsabs=1e-12)[0] for lo, hi in ivs]
    total = sum(masses)

    def cdf(x: float) -> float:
        acc = 0.0
        for (lo, hi), mass in zip(ivs, masses):
            if x >= hi:
                acc += mass
            elif x > lo:
                acc += quad(f, lo, x, limit=200, epsabs=1e-12)[0]
        return acc / total

    return cdf


def convergence_study(V: Potential, a: float, path: UpRightPath, N_list: Sequence[int],
                      cfg: PrecisionConfig | None = None, reference: SpectralCurve | None = None,
                      floor: float | None = None) -> dict:
    """Finite-N curves and zero distributions along ``n_N = path[N]``.

    For each ``N`` the weights are ``exp(-N V_j)`` and the index has total
    degree ``N``. Distances are sup-norms of the ``(q0, q1)`` coefficient
    differences to ``reference`` (default: the largest-N curve, which is
    then excluded from the monotonicity flag). The Kolmogorov distance
    compares the zero-counting CDF with the reference density; ``max|zero|``
    is the boundedness diagnostic. ``monotone`` allows increases below
    ``floor`` (default ``10^-(digits-10)``), the level where coefficient
    distances are pure rounding.
    """
    cfg = cfg or PrecisionConfig.extended()
    floor = 10.0 ** (-(cfg.working_digits - 10)) if floor is None else floor
    rows = []
    curves = {}
    for N in N_list:
        lat = MopLattice(V, a, N, cfg)
        idx = path.index(N)
        fc = finite_n_curve(V, a, N, idx, cfg, lattice=lat)
        zeros = compute_mop(V, a, N, idx, lattice=lat).zeros
        curves[N] = (fc, zeros, lat.dps)
    ref = reference if reference is not None else curves[max(N_list)][0].to_spectral_curve()
    cdf = _reference_cdf(ref)
    for N in N_list:
        fc, zeros, dps = curves[N]
        K = len(zeros)
        ks = 0.0
        for i, z in enumerate(zeros):
            F = cdf(z)
            ks = max(ks, abs(F - i / K), abs(F - (i + 1) / K))
        with mpmath.workdps(dps):
            dist = _coefficient_distance(fc, ref)
        rows.append({"N": N, "index": list(fc.index.as_tuple()), "coefficient_distance": dist,
                     "kolmogorov": ks, "max_abs_zero": max(abs(z) for z in zeros),
                     "q0": fc.q0.as_list(), "q1": fc.q1.as_list(), "digits": dps})
    judged = rows if reference is not None else rows[:-1]
    dists = [r["coefficient_distance"] for r in judged]
    monotone = all(d2 <= d1 or d2 <= floor for d1, d2 in zip(dists[:-1], dists[1:]))
    strict = all(d2 < d1 for d1, d2 in zip(dists[:-1], dists[1:]))
    return {"rows": rows, "monotone": monotone, "strictly_decreasing": strict, "floor": floor,
            "max_abs_zero": max(r["max_abs_zero"] for r in rows)}
