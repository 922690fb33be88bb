from __future__ import annotations

import json

import pytest
import yaml

from extsource import cli


def write(tmp_path, name, data) -> str:
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


def run(argv) -> int:
    return cli.main([str(a) for a in argv])


def test_missing_field_is_a_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", {"curve": {"pastur": True, "alpha": 0.5}})
    assert run(["curve-analyze", cfg, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "'a'" in err["message"]


@pytest.mark.parametrize("data", [
    {"curve": {"pastur": True, "a": 1.0}, "model": {"a": 1.0, "N": 4}},
    {"model": {"a": 0.5}, "outputs": {"formats": ["pdf"]}},
    {"curve": {"a": 0.5, "v": [0.0, 1.0, 2.0], "p1": [0.75], "p0": [0.0, 0.25]}},
])
def test_schema_violations(tmp_path, data):
    cfg = write(tmp_path, "c.yaml", data)
    assert run(["converge", cfg, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_wrong_block_for_command(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"curve": {"pastur": True, "a": 2.0}})
    assert run(["mop", cfg, "--out", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_inadmissible_curve_exits_1(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"curve": {"a": 0.5, "alpha": 0.5, "v": [0.0, 1.0],
                                               "p1": [0.75], "p0": [0.0, 0.6]}})
    out = tmp_path / "o"
    assert run(["curve-analyze", cfg, "--out", out]) == cli.EXIT_INVARIANT
    rep = json.loads((out / "admissibility.json").read_text())
    assert rep["is_admissible"] is False


def test_asymmetric_curve_exits_1(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"curve": {"pastur": True, "a": 0.5, "alpha": 0.3}})
    out = tmp_path / "o"
    assert run(["symmetric", cfg, "--out", out]) == cli.EXIT_INVARIANT
    assert not json.loads((out / "symmetry.json").read_text())["is_symmetric"]


def test_curve_analyze_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"curve": {"pastur": True, "a": 2.0}})
    outs = [tmp_path / "o1", tmp_path / "o2"]
    for out in outs:
        assert run(["curve-analyze", cfg, "--out", out]) == cli.EXIT_OK
    names = sorted(p.name for p in outs[0].iterdir())
    for n in ("density.csv", "density.svg", "regime.json", "gamma_star.csv", "gamma_star.svg",
              "mu1.csv", "mu2.csv", "mu3.csv", "residuals.json"):
        assert n in names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n
    res = json.loads((outs[0] / "residuals.json").read_text())
    assert all(res["checks"].values())


def test_symmetric_two_cut_records_zero_height(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"curve": {"pastur": True, "a": 2.0}})
    out = tmp_path / "o"
    assert run(["symmetric", cfg, "--out", out, "--format", "json", "--format", "svg"]) == cli.EXIT_OK
    rep = json.loads((out / "constrained_equilibrium.json").read_text())
    assert rep["pair"]["y_star"] == 0.0
    assert (out / "nu2_vs_sigma.svg").exists()
    assert not (out / "nu2.csv").exists()


def test_mop_command_with_cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("EXTSOURCE_CACHE", str(tmp_path / "cache"))
    cfg = write(tmp_path, "m.yaml", {"model": {"v": [0.0, 1.0], "a": 0.5, "N": 6, "max_total": 5,
                                               "alpha": 0.5, "path_length": 6}})
    out = tmp_path / "o"
    assert run(["mop", cfg, "--precision", 40, "--out", out]) == cli.EXIT_OK
    assert list((tmp_path / "cache").rglob("*.json"))
    rep = json.loads((out / "mop_report.json").read_text())
    assert rep["interlacing"]["passed"] and rep["biorthogonality"]["passed"]
    fc = rep["finite_n_curve"]
    assert fc["index"] == [3, 3]
    assert (out / "zeros.csv").exists() and (out / "recurrence.csv").exists()


def test_precision_budget_exits_3(tmp_path, capsys):
    cfg = write(tmp_path, "m.yaml", {"model": {"v": [0.0, 0.0, 0.0, 1.0], "a": 1.0, "N": 1,
                                               "indices": [[14, 14]]}})
    assert run(["mop", cfg, "--precision", 16, "--out", tmp_path / "o"]) == cli.EXIT_BUDGET
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "precision_budget" and err["log10_condition"] > 0


def test_converge_command(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"model": {"v": [0.0, 1.0], "a": 0.5, "alpha": 0.5,
                                               "N_list": [4, 8], "reference": "pastur"}})
    out = tmp_path / "o"
    code = run(["converge", cfg, "--precision", 40, "--out", out])
    rep = json.loads((out / "convergence.json").read_text())
    assert rep["monotone"]
    assert code == (cli.EXIT_OK if rep["rows"][-1]["kolmogorov"] < 0.1 else cli.EXIT_INVARIANT)
    assert (out / "convergence.csv").read_text().startswith("N,k1,k2")
