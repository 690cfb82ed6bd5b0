import csv
import json

import numpy as np
import pytest

from spike_dyn import ConfigError, DivergenceError
from spike_dyn import cli
from spike_dyn import experiments as ex
from spike_dyn.genx_error import RiskModel, normalized_risk

# small, fast settings shared by the simulation runs
SMALL = dict(d=6, m=8, n=400, rho=20.0, A=0.3, s=1e-4, eta=5e-3, max_steps=1500, record_every=10)


def small_cfg(tmp_path, experiment, **overrides):
    raw = dict(SMALL, experiment=experiment, output_dir=str(tmp_path / experiment))
    raw.update(overrides)
    return ex.ExperimentConfig.from_dict(raw)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def assert_manifest_complete(out, manifest):
    on_disk = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    assert on_disk == sorted(manifest.files)
    assert len(set(manifest.files)) == len(manifest.files)
    saved = json.loads((out / "manifest.json").read_text())
    assert saved["files"] == manifest.files
    assert saved["version"] == ex.__version__
    assert saved["duration_s"] >= 0
    assert saved["config"]["experiment"] == manifest.config["experiment"]


# --- config


def test_defaults_are_reference_settings():
    cfg = ex.ExperimentConfig.from_dict({"experiment": "fig1"})
    assert (cfg.d, cfg.m, cfg.n, cfg.rho, cfg.A, cfg.sigma2, cfg.s) == (30, 50, 10_000, 20.0, 0.3, 1.0, 1e-5)
    assert ex.ExperimentConfig.from_dict({"experiment": "fig2"}).delta == 3.0
    assert ex.ExperimentConfig.from_dict({"experiment": "fig4"}).gamma == 3.0
    fig5 = ex.ExperimentConfig.from_dict({"experiment": "fig5"})
    assert fig5.d == 600 and fig5.trials == 10 and fig5.effective_d == 600
    assert ex.ExperimentConfig.from_dict({"experiment": "fig5", "full_scale": True}).effective_d == 3000


def test_long_experiment_names():
    assert ex.ExperimentConfig.from_dict({"experiment": "fig2_weight_evolution"}).experiment == "fig2"


@pytest.mark.parametrize(
    "raw",
    [
        {"experiment": "fig1", "bogus": 1},
        {"experiment": "nope"},
        {"experiment": "fig3", "rho_list": []},
        {"experiment": "fig5", "gamma_list": [0.5, 2.0]},
        {"experiment": "fig4", "gamma": 1.0},
        {"experiment": "fig1", "A": 1.5},
        {"experiment": "fig1", "m": 10},
        {"experiment": "fig1", "eta": 0.1},
        {"experiment": "fig5", "gamma_list": [1000.0], "d": 50},
        {"experiment": "fig1", "trials": 0},
    ],
)
def test_config_rejected(raw):
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_dict(raw)


def test_config_from_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "fig4", "grid_size": 5}))
    assert ex.ExperimentConfig.from_json(path).grid_size == 5
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_json(path)
    with pytest.raises(ConfigError):
        ex.ExperimentConfig.from_json(tmp_path / "missing.json")


def test_seed_env(monkeypatch):
    cfg = ex.ExperimentConfig.from_dict({"experiment": "fig4"})
    monkeypatch.setenv(ex.SEED_ENV, "42")
    assert ex.seed_from_env(cfg).seed_base == 42
    monkeypatch.setenv(ex.SEED_ENV, "x")
    with pytest.raises(ConfigError):
        ex.seed_from_env(cfg)


# --- figure runs


def test_fig1_outputs_and_determinism(tmp_path):
    cfg = small_cfg(tmp_path, "fig1", field_resolution=11, nullcline_resolution=101)
    manifest = ex.run_fig1(cfg)
    out = tmp_path / "fig1"
    assert sorted(manifest.files) == sorted(
        ["field.csv", "nullclines.csv", "trajectory_full.csv", "trajectory_reduced.csv", "basis.json"]
    )
    assert_manifest_complete(out, manifest)
    header, rows = read_csv(out / "field.csv")
    assert header == ["w1", "w2", "dw1", "dw2"] and len(rows) == 121
    header, rows = read_csv(out / "nullclines.csv")
    assert header == ["w1", "w2", "which"]
    assert {r[2].split("/")[0] for r in rows} == {"dw1", "dw2"}
    header, _ = read_csv(out / "trajectory_full.csv")
    assert header == list(ex.TRAJECTORY_COLUMNS) + ["mu_proj", "mu_perp_proj"]
    header, _ = read_csv(out / "trajectory_reduced.csv")
    assert header == ["t", "w1", "w2", "mu_proj", "mu_perp_proj"]
    basis = json.loads((out / "basis.json").read_text())
    assert {"V", "sigma_xy_norm", "lambda1", "lambda2", "nu", "overlap1", "overlap2", "parallel"} <= set(basis)

    first = data_files(out)
    ex.run_fig1(cfg)
    assert data_files(out) == first


def test_fig1_without_coupling_emits_field_only(tmp_path):
    cfg = small_cfg(tmp_path, "fig1", rho=0.0, A=0.5, field_resolution=9, moments="population")
    manifest = ex.run_fig1(cfg)
    assert sorted(manifest.files) == ["basis.json", "field.csv"]
    assert manifest.warnings
    assert_manifest_complete(tmp_path / "fig1", manifest)


def test_fig1_needs_single_setting(tmp_path):
    cfg = small_cfg(tmp_path, "fig1", rho_list=[5.0, 20.0])
    with pytest.raises(ConfigError):
        ex.run_fig1(cfg)


def test_fig2_outputs(tmp_path):
    cfg = small_cfg(tmp_path, "fig2")
    manifest = ex.run_fig2(cfg)
    out = tmp_path / "fig2"
    assert_manifest_complete(out, manifest)
    header, rows = read_csv(out / "evolution.csv")
    assert header == list(ex.TRAJECTORY_COLUMNS) + ["early_analytic"]
    table = np.array(rows, dtype=float)
    scales = json.loads((out / "timescales.json").read_text())
    # the analytic curve starts from the initial growth magnitude
    assert table[0, -1] == pytest.approx(scales["u0"], rel=1e-12)
    assert scales["delta"] == 3.0
    assert scales["early_timescale"] > 0 and scales["later_phase_bound"] > 0
    assert scales["later_timescale"] == pytest.approx(scales["early_timescale"] + scales["later_phase_bound"])


def test_fig2_without_coupling_omits_later_timescale(tmp_path):
    cfg = small_cfg(tmp_path, "fig2", rho=5.0, A=1.0, moments="population")
    manifest = ex.run_fig2(cfg)
    scales = json.loads((tmp_path / "fig2" / "timescales.json").read_text())
    assert scales["later_phase_bound"] is None and scales["later_timescale"] is None
    assert manifest.warnings


def test_fig3_sweep_and_threads(tmp_path):
    cfg = small_cfg(tmp_path, "fig3", rho_list=[0.0, 5.0, 20.0], A_list=[0.5])
    ex.run_fig3(cfg, threads=1)
    serial = (tmp_path / "fig3" / "loss_sweep.csv").read_bytes()
    ex.run_fig3(cfg, threads=3)
    assert (tmp_path / "fig3" / "loss_sweep.csv").read_bytes() == serial
    header, rows = read_csv(tmp_path / "fig3" / "loss_sweep.csv")
    assert header == list(ex.SWEEP_COLUMNS)
    assert {float(r[0]) for r in rows} == {0.0, 5.0, 20.0}
    first = [float(r[4]) for r in rows if r[2] == "0"]
    # normalized loss starts at ~1 for every setting
    assert np.allclose(first, 1.0, atol=1e-3)


def test_fig4_grid(tmp_path):
    cfg = ex.ExperimentConfig.from_dict({"experiment": "fig4", "grid_size": 7, "output_dir": str(tmp_path)})
    manifest = ex.run_fig4(cfg)
    assert_manifest_complete(tmp_path, manifest)
    header, rows = read_csv(tmp_path / "risk_colormap.csv")
    assert header == list(ex.COLORMAP_COLUMNS) and len(rows) == 49
    for g, rho, A, s2, _, norm in (map(float, r) for r in rows):
        assert norm == normalized_risk(RiskModel(g, s2, rho, A))
        if A == 0.0:
            assert norm == pytest.approx(1 - 1 / g, rel=1e-14)


def test_fig5_small(tmp_path):
    cfg = ex.ExperimentConfig.from_dict(
        {"experiment": "fig5", "d": 60, "trials": 3, "gamma_list": [2.0, 3.0], "A_list": [0.5],
         "output_dir": str(tmp_path)}
    )
    manifest = ex.run_fig5(cfg, threads=2)
    header, rows = read_csv(tmp_path / "risk_vs_gamma.csv")
    assert header == list(ex.RISK_COLUMNS) and len(rows) == 2
    assert all(r[-1] == "3" for r in rows)
    assert manifest.runs[0]["seeds"] == [0, 1, 2]
    first = data_files(tmp_path)
    ex.run_fig5(cfg, threads=1)
    assert data_files(tmp_path) == first


def test_custom_run(tmp_path):
    cfg = small_cfg(tmp_path, "custom")
    manifest = ex.run_custom(cfg)
    assert_manifest_complete(tmp_path / "custom", manifest)
    header, rows = read_csv(tmp_path / "custom" / "trajectory.csv")
    assert header == list(ex.TRAJECTORY_COLUMNS)
    assert ex.check_csv(tmp_path / "custom" / "trajectory_reduced.csv", ex.REDUCED_COLUMNS) > 1


def test_check_csv_rejects_bad_files(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError):
        ex.check_csv(path, ("a", "b"))
    path.write_text("a,b\n1,zz\n")
    with pytest.raises(ValueError):
        ex.check_csv(path, ("a", "b"))
    with pytest.raises(ValueError):
        ex.check_csv(path, ("b",))


# --- validate


def test_validate_default_passes():
    report = ex.validate(ex.ExperimentConfig.from_dict({"experiment": "validate"}))
    names = [c["name"] for c in report["checks"]]
    assert sorted(names) == sorted(ex.DEFAULT_TOLERANCES) and len(names) == len(set(names))
    assert report["passed"], report


def test_validate_fault_injection():
    cfg = ex.ExperimentConfig.from_dict({"experiment": "validate", "tolerances": {"kappa_residual": -1.0}})
    report = ex.validate(cfg)
    status = {c["name"]: c["passed"] for c in report["checks"]}
    assert status["kappa_residual"] is False
    assert not report["passed"]
    assert sum(status.values()) == len(status) - 1


def test_validate_unknown_tolerance():
    cfg = ex.ExperimentConfig.from_dict({"experiment": "validate", "tolerances": {"nope": 1.0}})
    with pytest.raises(ConfigError):
        ex.validate(cfg)


# --- CLI


def write_config(tmp_path, raw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_success(tmp_path, capsys):
    conf = write_config(tmp_path, {"grid_size": 4})
    assert cli.main(["fig4", "--config", conf, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "risk_colormap.csv").exists()
    assert (tmp_path / "o" / "manifest.json").exists()
    assert "risk_colormap.csv" in capsys.readouterr().out


def test_cli_config_errors(tmp_path):
    assert cli.main(["fig4", "--config", write_config(tmp_path, {"unknown_key": 1})]) == cli.EXIT_CONFIG
    assert cli.main(["fig4", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["fig4", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["fig5", "--out", str(tmp_path), "--threads", "0"]) == cli.EXIT_CONFIG


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise DivergenceError("weights exceeded the divergence threshold")

    monkeypatch.setattr(ex, "run_custom", boom)
    assert cli.main(["custom", "--out", str(tmp_path)]) == cli.EXIT_DIVERGENCE


def test_cli_validate_strict(tmp_path):
    conf = write_config(tmp_path, {"tolerances": {"ridge_limit": -1.0}})
    out = str(tmp_path / "v")
    assert cli.main(["validate", "--config", conf, "--out", out]) == 0
    assert cli.main(["validate", "--config", conf, "--out", out, "--strict"]) == cli.EXIT_INVARIANT
    report = json.loads((tmp_path / "v" / "validation.json").read_text())
    assert not report["passed"]


def test_cli_seed_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SPIKE_DYN_SEED", "5")
    conf = write_config(tmp_path, {"d": 40, "trials": 2, "gamma_list": [2.0], "A_list": [0.5]})
    assert cli.main(["fig5", "--config", conf, "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["seed_base"] == 5
    assert manifest["runs"][0]["seeds"] == [5, 6]


def test_cli_subcommand_overrides_config_experiment(tmp_path):
    conf = write_config(tmp_path, {"experiment": "fig1", "grid_size": 3})
    assert cli.main(["fig4", "--config", conf, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "risk_colormap.csv").exists()
