"""Command-line front end: configuration-driven experiments with file outputs.

Subcommands ``curve-analyze``, ``symmetric``, ``mop`` and ``converge`` read a
YAML (or JSON) configuration and write CSV/JSON/SVG artifacts into ``--out``.

Exit codes: 0 all checks passed, 1 a mathematical invariant failed, 2 the
configuration is invalid, 3 the precision budget was exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .curve import SpectralCurve, admissibility_check, classify_local_behaviors, density, pastur_curve, support
from .measures import (
    cauchy_residuals,
    component_periods,
    extract_measures,
    variational_residuals,
)
from .mop import (
    CACHE_ENV,
    AssemblyError,
    MopInconsistency,
    MopLattice,
    MultiIndex,
    PartialWindowError,
    PrecisionBudgetExceeded,
    UpRightPath,
    biorthogonality_report,
    compute_mop,
    convergence_study,
    finite_n_curve,
    interlacing_report,
    offpath_coefficients,
    recurrence_coefficients,
    step_recurrence,
)
from .numerics import Potential, PrecisionConfig, RealPoly
from .quad_diff import boutroux_periods, build_gamma_star, classify_regime, export_svg
from .symmetric import NotSymmetricError, build_constrained_pair, check_symmetry, verify_potential_identities

log = logging.getLogger("extsource")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    """Schema violation in an experiment configuration."""


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Exactly one of ``curve`` (a spectral curve, possibly given as a Pastur
    shorthand) or ``model`` (potential, ``a`` and lattice/path data for the
    polynomial layer) is present.
    """

    curve: SpectralCurve | None = None
    model: dict | None = None
    precision: PrecisionConfig = field(default_factory=PrecisionConfig)
    grids: dict = field(default_factory=dict)
    out: Path = Path("out")
    formats: tuple = FORMATS

    @classmethod
    def from_mapping(cls, d: dict, precision: int | None = None, out=None, formats=None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        has_curve, has_model = "curve" in d, "model" in d
        if has_curve == has_model:
            raise ConfigError("exactly one of 'curve' or 'model' must be given")
        prec = dict(d.get("precision") or {})
        if precision is not None:
            prec["working_digits"] = int(precision)
        if has_model:
            prec.setdefault("working_digits", 120)
            if "quad_rel_tol" not in prec:
                prec["quad_rel_tol"] = 10.0 ** (-(int(prec["working_digits"]) - 10))
        try:
            pcfg = PrecisionConfig(**prec)
        except TypeError as exc:
            raise ConfigError(f"bad precision block: {exc}") from None
        outputs = d.get("outputs") or {}
        fmts = tuple(formats or outputs.get("formats") or FORMATS)
        bad = [f for f in fmts if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown output formats {bad}")
        outdir = Path(out or outputs.get("directory") or "out")
        grids = dict(d.get("grids") or {})
        if has_curve:
            return cls(curve=_parse_curve(d["curve"]), precision=pcfg, grids=grids, out=outdir, formats=fmts)
        return cls(model=_parse_model(d["model"]), precision=pcfg, grids=grids, out=outdir, formats=fmts)


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return d[key]


def _number(x, what: str) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {x!r}") from None


def _parse_curve(c: dict) -> SpectralCurve:
    a = _number(_require(c, "a", "curve"), "curve.a")
    alpha = _number(c.get("alpha", 0.5), "curve.alpha")
    if c.get("pastur"):
        return pastur_curve(a, alpha)
    v = _require(c, "v", "curve")
    p1 = _require(c, "p1", "curve")
    p0 = _require(c, "p0", "curve")
    try:
        V = Potential(tuple(float(x) for x in v))
    except Exception as exc:
        raise ConfigError(f"curve.v: {exc}") from None
    return SpectralCurve(V, a, alpha, RealPoly(tuple(float(x) for x in p1)), RealPoly(tuple(float(x) for x in p0)))


def _parse_model(m: dict) -> dict:
    a = _number(_require(m, "a", "model"), "model.a")
    v = m.get("v", [0.0, 1.0])
    try:
        V = Potential(tuple(float(x) for x in v))
    except Exception as exc:
        raise ConfigError(f"model.v: {exc}") from None
    out = {"V": V, "a": a}
    if "N" in m:
        out["N"] = _number(m["N"], "model.N")
    if "max_total" in m:
        out["max_total"] = int(m["max_total"])
    if "indices" in m:
        out["indices"] = [tuple(int(t) for t in ix) for ix in m["indices"]]
    if "alpha" in m:
        out["alpha"] = _number(m["alpha"], "model.alpha")
    if "path_length" in m:
        out["path_length"] = int(m["path_length"])
    if "N_list" in m:
        out["N_list"] = [int(n) for n in m["N_list"]]
    if "reference" in m:
        ref = m["reference"]
        out["reference"] = pastur_curve(a, out.get("alpha", 0.5)) if ref == "pastur" else _parse_curve(ref)
    return out


def load_config(path: Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}") from None
    return ExperimentConfig.from_mapping(data, **overrides)


# --------------------------------------------------------------------------
# writers (deterministic: sorted keys, repr floats, no timestamps)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set)):
        seq = sorted(x) if isinstance(x, set) else x
        return [_jsonable(v) for v in seq]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, complex) or isinstance(x, np.complexfloating):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    try:
        return float(x)
    except (TypeError, ValueError):
        return str(x)


class Writer:
    def __init__(self, out: Path, formats):
        self.out = Path(out)
        self.formats = set(formats)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def json(self, name: str, payload: dict):
        if "json" not in self.formats:
            return
        p = self.out / name
        p.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self.written.append(p.name)

    def csv(self, name: str, header, rows):
        if "csv" not in self.formats:
            return
        p = self.out / name
        with p.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for r in rows:
                wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.written.append(p.name)

    def svg(self, name: str, groups: dict, intervals=()):
        if "svg" not in self.formats:
            return
        export_svg(self.out / name, groups, intervals)
        self.written.append(name)


def _graph(xs, ys) -> np.ndarray:
    """A real graph ``(x, y)`` as a complex polyline for the SVG writer."""
    return np.asarray(xs, dtype=float) + 1j * np.asarray(ys, dtype=float)


# --------------------------------------------------------------------------
# commands


def cmd_curve_analyze(cfg: ExperimentConfig) -> int:
    """Admissibility, regime, Gamma*, measures and residual checks of one curve."""
    curve, pc = cfg.curve, cfg.precision
    wr = Writer(cfg.out, cfg.formats)
    adm = admissibility_check(curve, pc)
    if not adm.is_admissible:
        wr.json("admissibility.json", adm.to_dict())
        log.error("curve is not admissible: %s", "; ".join(adm.notes))
        return EXIT_INVARIANT
    n_density = int(cfg.grids.get("density_points", 400))
    sup = support(curve, pc)
    lo, hi = sup.hull
    pad = 0.05 * (hi - lo)
    xs = np.linspace(lo - pad, hi + pad, n_density)
    rho = density(curve, xs)
    wr.csv("density.csv", ["x", "density"], zip(xs, rho))
    wr.svg("density.svg", {"density": [_graph(xs, rho)]}, sup.intervals)

    regime = classify_regime(curve, pc)
    gamma = build_gamma_star(curve, regime, pc)
    vcm = extract_measures(curve, regime, gamma, pc)
    behaviors = [b.to_dict() for b in classify_local_behaviors(curve, pc)]
    wr.json("regime.json", {"regime": regime.to_dict(), "admissibility": adm.to_dict(),
                            "local_behaviors": behaviors, "measures": vcm.to_dict()})
    wr.csv("gamma_star.csv", ["re", "im"], ((z.real, z.imag) for z in gamma.points))
    wr.svg("gamma_star.svg", {"gamma_star": [gamma.points], "delta3": [gamma.delta3]}, sup.intervals)
    for prof in vcm.measures:
        if "csv" in cfg.formats:
            prof.to_csv(wr.out / f"{prof.name}.csv")
            wr.written.append(f"{prof.name}.csv")

    n_cauchy = int(cfg.grids.get("cauchy_points", 50))
    from .measures import default_zgrid

    cres = cauchy_residuals(curve, vcm, default_zgrid(regime, n=n_cauchy))
    var = variational_residuals(curve, vcm, pc, energy=bool(cfg.grids.get("energy", False)))
    comps = component_periods(vcm)
    periods = boutroux_periods(curve, regime, comps, vcm.labeler)
    mass = vcm.mass_relations()
    const_dev = var["constancy_max"]
    checks = {
        "mass_relations": max(abs(v) for v in mass.values()) < 1e-6,
        "cauchy": cres["max"] < 1e-4,
        "component_constants": const_dev < 1e-5,
        "periods": _period_check(comps, periods) < 1e-5,
    }
    wr.json("residuals.json", {"mass_relations": mass, "cauchy": cres, "variational": var,
                               "components": comps, "periods": periods, "checks": checks})
    ok = all(checks.values())
    log.info("curve-analyze: regime %s, checks %s", regime.regime.value, checks)
    return EXIT_OK if ok else EXIT_INVARIANT


def _period_check(comps, periods) -> float:
    by_id = {p["cycle_id"]: p for p in periods}
    worst = 0.0
    for c in comps:
        p = by_id.get(f"{c['id']}:loop(2,3)")
        if p is not None:
            worst = max(worst, abs(complex(p["period"]) - c["mass_combination"]))
    for p in periods:
        if "boutroux" in p and not p["cycle_id"].startswith("B"):
            worst = max(worst, abs(p["boutroux"]))
    return worst


def cmd_symmetric(cfg: ExperimentConfig) -> int:
    """Constrained equilibrium pair of a symmetric curve and its potential identities."""
    curve, pc = cfg.curve, cfg.precision
    wr = Writer(cfg.out, cfg.formats)
    cert = check_symmetry(curve)
    if not cert.is_symmetric:
        wr.json("symmetry.json", cert.to_dict())
        log.error("curve is not symmetric")
        return EXIT_INVARIANT
    regime = classify_regime(curve, pc)
    gamma = build_gamma_star(curve, regime, pc)
    vcm = extract_measures(curve, regime, gamma, pc)
    pair = build_constrained_pair(curve, regime, vcm)
    report = verify_potential_identities(curve, pair, vcm)
    if "csv" in cfg.formats:
        pair.to_csv(wr.out / "nu2.csv")
        pair.nu1.to_csv(wr.out / "nu1.csv")
        wr.written += ["nu2.csv", "nu1.csv"]
    Y = max(4.0 * pair.y_star, 4.0)
    ys = np.linspace(0.0, Y, 400)
    wr.svg("nu2_vs_sigma.svg", {"nu2": [_graph(ys, pair.nu2_density(ys))],
                                "sigma": [_graph(ys, np.full_like(ys, pair.sigma_level))]})
    wr.json("constrained_equilibrium.json", {"pair": pair.to_dict(), "symmetry": cert.to_dict(), "report": report})
    return EXIT_OK if report["passed"] else EXIT_INVARIANT


def _lattice_indices(model: dict) -> list[MultiIndex]:
    if "indices" in model:
        return [MultiIndex.of(i) for i in model["indices"]]
    K = int(model.get("max_total", 8))
    return [MultiIndex(i, t - i) for t in range(K + 1) for i in range(t + 1)]


def cmd_mop(cfg: ExperimentConfig) -> int:
    """Lattice of MOPs with zero, biorthogonality and recurrence reports."""
    m, pc = cfg.model, cfg.precision
    N = m.get("N")
    if N is None:
        raise ConfigError("model: missing required field 'N'")
    wr = Writer(cfg.out, cfg.formats)
    cache = os.environ.get(CACHE_ENV) or str(cfg.out / "cache")
    lat = MopLattice(m["V"], m["a"], N, pc, cache_dir=cache)
    idxs = _lattice_indices(m)
    records = [compute_mop(m["V"], m["a"], N, i, lattice=lat) for i in idxs]
    inter = interlacing_report(lat, idxs)
    bio = biorthogonality_report(lat, idxs)
    rec_rows, rec_worst = [], 0.0
    top = max(i.total for i in idxs)
    for i in idxs:
        if i.total >= top:
            continue
        rd = recurrence_coefficients(m["V"], m["a"], N, i, lattice=lat)
        rec_worst = max(rec_worst, rd.report["four_term_residual"])
        rec_rows.append((i.k1, i.k2, float(rd.a1), float(rd.a2), float(rd.b1), float(rd.b2),
                         rd.report["four_term_residual"]))
    wr.csv("zeros.csv", ["k1", "k2", "zeros"],
           ((r.index.k1, r.index.k2, " ".join(repr(z) for z in r.zeros)) for r in records))
    wr.csv("recurrence.csv", ["k1", "k2", "a1", "a2", "b1", "b2", "four_term_residual"], rec_rows)
    report = {"interlacing": inter, "biorthogonality": bio, "recurrence_max_residual": rec_worst,
              "digits": lat.digits, "working_dps": lat.dps}
    ok = inter["passed"] and bio["passed"] and rec_worst < 10.0 ** (-(lat.digits - 12))
    if "alpha" in m:
        path = UpRightPath.from_alpha(m["alpha"], int(m.get("path_length", top)))
        steps = []
        for k in range(1, len(path) - 1):
            try:
                theta, res = step_recurrence(path, k, lat)
                op = offpath_coefficients(path, k, lat)
            except PartialWindowError as exc:
                steps.append({"k": k, "index": path.index(k).as_tuple(), "skipped": str(exc)})
                continue
            steps.append({"k": k, "index": path.index(k).as_tuple(), "theta": [float(t) for t in theta],
                          "residual": res, "p_list": [float(p) for p in op["p_list"]],
                          "q_list": [float(q) for q in op["q_list"]],
                          "p_residual": op["p_residual"], "q_residual": op["q_residual"]})
        done = [s for s in steps if "skipped" not in s]
        worst = max([s["residual"] for s in done] + [s["p_residual"] or 0.0 for s in done]
                    + [s["q_residual"] or 0.0 for s in done] + [0.0])
        report["path"] = {"d": path.d, "alpha": path.alpha_target, "steps": steps, "max_residual": worst}
        ok = ok and worst < 10.0 ** (-(lat.digits - 12))
        end = path.index(len(path) - 1)
        if end.k1 >= 1 and end.k2 >= 1:
            fc = finite_n_curve(m["V"], m["a"], N, end, lattice=lat)
            report["finite_n_curve"] = fc.to_dict()
    wr.json("mop_report.json", report)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_converge(cfg: ExperimentConfig) -> int:
    """Finite-N curves along a ladder of N compared with a limiting curve."""
    m, pc = cfg.model, cfg.precision
    N_list = m.get("N_list", [8, 16, 32])
    alpha = m.get("alpha", 0.5)
    path = UpRightPath.from_alpha(alpha, max(N_list) + 1)
    res = convergence_study(m["V"], m["a"], path, N_list, pc, reference=m.get("reference"))
    wr = Writer(cfg.out, cfg.formats)
    wr.csv("convergence.csv", ["N", "k1", "k2", "coefficient_distance", "kolmogorov", "max_abs_zero"],
           ((r["N"], r["index"][0], r["index"][1], r["coefficient_distance"], r["kolmogorov"], r["max_abs_zero"])
            for r in res["rows"]))
    Ns = [r["N"] for r in res["rows"]]
    wr.svg("convergence.svg", {"kolmogorov": [_graph(np.log2(Ns), [r["kolmogorov"] for r in res["rows"]])]})
    wr.json("convergence.json", res)
    ks_ok = res["rows"][-1]["kolmogorov"] < float(cfg.grids.get("kolmogorov_tol", 0.1))
    return EXIT_OK if (res["monotone"] and ks_ok) else EXIT_INVARIANT


COMMANDS = {
    "curve-analyze": cmd_curve_analyze,
    "symmetric": cmd_symmetric,
    "mop": cmd_mop,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extsource", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("config", type=Path, help="YAML or JSON experiment configuration")
        p.add_argument("--precision", type=int, default=None, help="working decimal digits")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--format", dest="formats", action="append", choices=FORMATS,
                       help="output format (repeatable; default all)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, precision=args.precision, out=args.out, formats=args.formats)
        needs_model = args.command in ("mop", "converge")
        if needs_model and cfg.model is None:
            raise ConfigError(f"{args.command} needs a 'model' block")
        if not needs_model and cfg.curve is None:
            raise ConfigError(f"{args.command} needs a 'curve' block")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except PrecisionBudgetExceeded as exc:
        print(json.dumps({"error": "precision_budget", "message": str(exc),
                          "log10_condition": exc.log10_condition, "digits": exc.digits}), file=sys.stderr)
        return EXIT_BUDGET
    except (MopInconsistency, AssemblyError, NotSymmetricError) as exc:
        print(json.dumps({"error": "invariant", "message": str(exc),
                          "report": _jsonable(getattr(exc, "report", {}))}), file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
