from __future__ import annotations

import json

import numpy as np
import pytest

from extsource.measures import B, cauchy_residuals, component_periods, export_report


def test_interaction_matrix_is_semidefinite_with_one_flat_direction():
    M = B.as_array()
    assert np.allclose(M, M.T)
    ev = np.linalg.eigvalsh(M)
    assert ev[0] == pytest.approx(0.0, abs=1e-12) and np.all(ev[1:] > 0)
    assert np.allclose(M @ np.array([1.0, -1.0, 1.0]), 0.0)


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_unsaturated_cases_have_no_third_measure(pastur, a):
    vcm = pastur(a).vcm
    assert vcm.mu3.is_zero
    # the source is symmetric, so mu1 and mu2 carry equal mass
    assert vcm.mu1.mass == pytest.approx(0.5, abs=1e-8)
    assert vcm.mu2.mass == pytest.approx(0.5, abs=1e-8)


def test_saturated_case_masses(pastur):
    vcm = pastur(0.5).vcm
    assert vcm.mu3.mass > 0
    assert vcm.mu1.mass - vcm.mu3.mass == pytest.approx(0.5, abs=1e-8)
    assert vcm.mu2.mass + vcm.mu3.mass == pytest.approx(0.5, abs=1e-8)


def test_mu1_and_mu2_mirror_each_other(pastur):
    vcm = pastur(2.0).vcm
    s1 = sorted(tuple(iv) for iv in vcm.mu1.support)
    s2 = sorted((-b, -a) for a, b in vcm.mu2.support)
    assert np.allclose(s1, s2, atol=1e-10)


def test_cauchy_residuals_off_axis(pastur):
    p = pastur(1.0)
    grid = np.array([0.3 + 0.4j, -1.2 + 0.1j, 2.5 - 0.7j, 0.5])
    res = cauchy_residuals(p.curve, p.vcm, grid)
    assert res["max"] < 1e-6
    assert res["notes"]


def test_component_mass_combination_sums(pastur):
    comps = component_periods(pastur(2.0).vcm)
    assert len(comps) == 2
    vals = sorted(c["mass_combination"] for c in comps)
    assert vals == pytest.approx([-0.5, 0.5], abs=1e-8)


def test_profile_and_report_export(pastur, tmp_path):
    vcm = pastur(0.5).vcm
    for prof in vcm.measures:
        path = prof.to_csv(tmp_path / f"{prof.name}.csv")
        assert path.read_text().splitlines()[0] == "re,im,density"
    out = export_report(tmp_path / "r.json", vcm.to_dict())
    assert json.loads(out.read_text())["masses"][2] == pytest.approx(vcm.mu3.mass)
