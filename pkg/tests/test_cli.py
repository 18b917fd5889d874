import json
import subprocess
import sys
import time

import numpy as np
import pytest

from wlboot.cli import main
from wlboot.config import ConfigError, list_presets, read_config, resolve_scenario_file, scenario_from_config
from wlboot.series import load_csv


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ar3_csv(tmp_path, capsys):
    cfg = tmp_path / "ar3.cfg"
    cfg.write_text("phi0 = 0\nphi1 = 0.5\nphi2 = -0.3\nphi3 = 0.35\nsigma = 1\nsample-t = 300\n")
    path = tmp_path / "ar3.csv"
    assert run(["-q", "simulate", "--config", str(cfg), "--seed", "7", "--out", str(path)], capsys)[0] == 0
    return path


def test_fit_auto_selects_three(ar3_csv, tmp_path, capsys):
    out = tmp_path / "fit.json"
    code, stdout, _ = run(["-q", "fit", str(ar3_csv), "--order", "auto", "--p-max", "6", "--method", "ols", "--out", str(out)], capsys)
    assert code == 0
    assert stdout.split() == [str(out), str(out.with_suffix(".weights.csv"))]
    rep = json.loads(out.read_text())
    assert rep["order"] == 3
    assert set(rep["order_selection"]["table"]) == {str(p) for p in range(1, 7)}


def test_weighted_fit_flags_contaminated_rows(tmp_path, capsys):
    data = tmp_path / "ao.csv"
    code, stdout, _ = run(["-q", "simulate", "--config", "fig3_ao_5pct", "--seed", "3", "--out", str(data)], capsys)
    assert code == 0
    rows = json.loads(stdout)["outlier_rows"]
    assert len(rows) == 5
    out = tmp_path / "w.json"
    assert run(["-q", "fit", str(data), "--order", "1", "--method", "weighted", "--out", str(out)], capsys)[0] == 0
    table = np.genfromtxt(out.with_suffix(".weights.csv"), delimiter=",", names=True)
    smallest = set(table["row"][np.argsort(table["weight"])[:5]].astype(int))
    assert smallest == set(rows)


def test_missing_file_exit_2(tmp_path, capsys):
    code, stdout, err = run(["fit", str(tmp_path / "none.csv"), "--out", str(tmp_path / "x.json")], capsys)
    assert code == 2 and stdout == ""
    assert json.loads(err.strip().splitlines()[-1])["error"] == "input_error"


def test_numerical_failure_exit_3(tmp_path, capsys):
    path = tmp_path / "const.csv"
    path.write_text("x\n" + "1\n" * 12)
    code, _, err = run(["-q", "fit", str(path), "--order", "1", "--out", str(tmp_path / "x.json")], capsys)
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "numerical_failure"


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 2


def test_forecast_outputs_and_determinism(ar3_csv, tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}" / "fc.json"
        argv = ["-q", "forecast", str(ar3_csv), "--order", "3", "--horizon", "12", "--b-reps", "99", "--seed", "11", "--out", str(out)]
        assert run(argv, capsys)[0] == 0
        outs.append((out.read_bytes(), out.with_suffix(".csv").read_bytes()))
    assert outs[0] == outs[1]
    rep = json.loads(outs[0][0])
    assert set(rep["methods"]) == {"ols_cml", "weighted_likelihood"}
    for m in rep["methods"].values():
        assert np.array(m["lower"]).shape == (12, 1)
        assert np.all(np.array(m["lower"]) <= np.array(m["upper"]))
        assert np.all(np.array(m["normal_lower"]) < np.array(m["normal_upper"]))
    assert len(outs[0][1].decode().splitlines()) == 1 + 2 * 12


def test_forecast_b1_collapses(ar3_csv, tmp_path, capsys):
    out = tmp_path / "b1.json"
    argv = ["-q", "forecast", str(ar3_csv), "--order", "3", "--method", "ols", "--b-reps", "1", "--horizon", "3", "--seed", "1", "--out", str(out)]
    assert run(argv, capsys)[0] == 0
    m = json.loads(out.read_text())["methods"]["ols_cml"]
    assert m["lower"] == m["upper"]


def test_forecast_var_reuses_fit_report(tmp_path, capsys):
    data = tmp_path / "var.csv"
    assert run(["-q", "simulate", "--config", "fig5_var_clean_gaussian", "--seed", "2", "--out", str(data)], capsys)[0] == 0
    fit_out = tmp_path / "fit.json"
    assert run(["-q", "fit", str(data), "--order", "2", "--method", "weighted", "--out", str(fit_out)], capsys)[0] == 0
    out = tmp_path / "fc.json"
    assert run(["-q", "forecast", str(data), "--model", str(fit_out), "--horizon", "4", "--b-reps", "49", "--seed", "3", "--out", str(out)], capsys)[0] == 0
    rep = json.loads(out.read_text())
    assert list(rep["methods"]) == ["weighted_likelihood"]
    m = rep["methods"]["weighted_likelihood"]
    assert m["order"] == 2 and m["interval_kind"] == "bonferroni"
    assert np.array(m["upper"]).shape == (4, 2)


def test_config_file_and_flag_precedence(ar3_csv, tmp_path, capsys):
    cfg = tmp_path / "fit.cfg"
    cfg.write_text("order = 2\nmethod = ols\n")
    out = tmp_path / "f.json"
    _, _, err = run(["fit", str(ar3_csv), "--config", str(cfg), "--out", str(out)], capsys)
    assert json.loads(out.read_text())["order"] == 2
    assert "order = 2" in err
    run(["-q", "fit", str(ar3_csv), "--config", str(cfg), "--order", "1", "--out", str(out)], capsys)
    assert json.loads(out.read_text())["order"] == 1
    cfg.write_text("horizon = 3\n")
    assert run(["-q", "fit", str(ar3_csv), "--config", str(cfg), "--out", str(out)], capsys)[0] == 2


def test_contaminate_ao_and_io(ar3_csv, tmp_path, capsys):
    clean = load_csv(ar3_csv).values
    out = tmp_path / "ao.csv"
    code, stdout, _ = run(["-q", "contaminate", str(ar3_csv), "--kind", "ao", "--rows", "10,20", "--magnitude", "5", "--out", str(out)], capsys)
    assert code == 0 and json.loads(stdout)["outlier_rows"] == [10, 20]
    diff = load_csv(out).values - clean
    assert np.flatnonzero(diff[:, 0]).tolist() == [9, 19]
    out = tmp_path / "io.csv"
    assert run(["-q", "contaminate", str(ar3_csv), "--kind", "io", "--rows", "50", "--magnitude", "3", "--order", "3", "--out", str(out)], capsys)[0] == 0
    diff = load_csv(out).values[:, 0] - clean[:, 0]
    assert np.all(np.abs(diff[:49]) < 1e-12)
    assert diff[49] == pytest.approx(3.0, abs=1e-12)
    assert abs(diff[50]) > 0.1
    out = tmp_path / "rate.csv"
    code, stdout, _ = run(["-q", "contaminate", str(ar3_csv), "--kind", "ao", "--rate", "0.05", "--seed", "4", "--out", str(out)], capsys)
    assert code == 0 and len(json.loads(stdout)["outlier_rows"]) == 15


def test_experiment_smoke(tmp_path, capsys):
    start = time.perf_counter()
    code, stdout, _ = run(["-q", "experiment", "--config", "smoke", "--out", str(tmp_path / "smoke")], capsys)
    assert time.perf_counter() - start < 10
    assert code == 0
    paths = stdout.split()
    assert [p.rsplit("/", 1)[1] for p in paths] == ["report.json", "report.csv", "resolved_config.cfg"]
    resolved = read_config(paths[2])
    assert resolved["mc-reps"] == "1" and resolved["smoothing-c"] == "0.25"


def test_experiment_overrides(tmp_path, capsys):
    out = tmp_path / "exp"
    argv = ["-q", "experiment", "--config", "smoke", "--out", str(out), "--horizon", "2", "--set", "estimators=ols"]
    assert run(argv, capsys)[0] == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 3 and all(l.startswith("ols_cml") for l in lines[1:])


def test_experiment_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("phi1 = 0.5\ngamma = 0.7\n")
    assert run(["-q", "experiment", "--config", str(bad), "--out", str(tmp_path / "o")], capsys)[0] == 2
    bad.write_text("phi1 = 0.5\nunknown = 1\n")
    assert run(["-q", "experiment", "--config", str(bad), "--out", str(tmp_path / "o")], capsys)[0] == 2


def test_all_presets_parse():
    names = list_presets()
    assert {"fig1_phi05_clean", "fig3_ao_5pct", "fig6_var_ao_5pct", "smoke"} <= set(names)
    for name in names:
        scenario, _ = scenario_from_config(read_config(resolve_scenario_file(name)))
        assert scenario.name == name


def test_matrix_config_values():
    scenario, _ = scenario_from_config(read_config(resolve_scenario_file("fig7_var_io_5pct")))
    np.testing.assert_array_equal(scenario.model.phis[1], [[-0.2, 0.0], [0.8, -0.1]])
    assert scenario.contamination.component_mask == (0,)
    with pytest.raises(ConfigError):
        scenario_from_config({"phi1": "0.5", "phi3": "0.1"})


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wlboot", "experiment", "--list-presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "smoke" in res.stdout.split()
