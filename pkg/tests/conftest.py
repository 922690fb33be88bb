from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from extsource.curve import SpectralCurve, pastur_curve
from extsource.measures import VectorCriticalMeasure, extract_measures
from extsource.quad_diff import GammaStar, RegimeReport, build_gamma_star, classify_regime

_CRITERIA: list[str] = []


@dataclass
class Pipeline:
    curve: SpectralCurve
    regime: RegimeReport
    gamma: GammaStar
    vcm: VectorCriticalMeasure
    classify_seconds: float


def run_pipeline(curve: SpectralCurve, panels_per: int = 12) -> Pipeline:
    t0 = time.perf_counter()
    rep = classify_regime(curve)
    dt = time.perf_counter() - t0
    g = build_gamma_star(curve, rep)
    vcm = extract_measures(curve, rep, g, panels_per=panels_per)
    return Pipeline(curve, rep, g, vcm, dt)


_CACHE: dict = {}


@pytest.fixture(scope="session")
def pastur():
    """Lazily built pipelines for the Gaussian-potential curves, keyed by ``a``."""

    def get(a: float) -> Pipeline:
        if a not in _CACHE:
            _CACHE[a] = run_pipeline(pastur_curve(a, 0.5))
        return _CACHE[a]

    return get


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert."""

    def report(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        print(line)
        _CRITERIA.append(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
