import csv
import json

import numpy as np
import pytest

from ensvs.cli import main
from ensvs.data import save_csv
from ensvs.simulation import SimulationConfig, apply_mcar, generate_dataset


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    d, _ = generate_dataset(SimulationConfig(n=120, p=9, s=2), 0)
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    save_csv(apply_mcar(d, 0.1, seed=1), path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_select_writes_one_ratio_row_per_covariate(toy_csv, tmp_path):
    code = main(["select", "--data", str(toy_csv), "--response", "y", "--selector", "lasso",
                 "--k", "3", "--B", "300", "--r", "0.95", "--out", str(tmp_path), "--threads", "1", "-q"])
    assert code == 0
    rows = _rows(tmp_path / "ratios.csv")
    assert [r["variable"] for r in rows] == [f"x{j}" for j in range(1, 10)]
    assert set(rows[0]) == {"variable", "appeared", "selected", "ratio", "selected_flag"}
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["threshold_used"] == 0.95
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["master_seed"] == 0
    assert set(manifest["artifacts"]) >= {"result", "ratios", "manifest"}


def test_select_cv_records_threshold_and_curve(toy_csv, tmp_path):
    code = main(["select", "--data", str(toy_csv), "--response", "y", "--selector", "lasso",
                 "--k", "3", "--B", "300", "--r", "cv", "--out", str(tmp_path), "--threads", "1", "-q"])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert 0 < manifest["chosen_threshold"] <= 1
    curve = _rows(manifest["artifacts"]["cv_curve"])
    assert curve and set(curve[0]) == {"threshold", "mean_mse", "sd_mse"}


def test_select_output_independent_of_threads(toy_csv, tmp_path):
    args = ["select", "--data", str(toy_csv), "--response", "y", "--selector", "stepwise",
            "--k", "3", "--B", "90", "-q"]
    assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    assert (tmp_path / "a/ratios.csv").read_bytes() == (tmp_path / "b/ratios.csv").read_bytes()
    assert (tmp_path / "a/result.json").read_bytes() == (tmp_path / "b/result.json").read_bytes()


def test_select_missing_response_is_usage_error(toy_csv):
    with pytest.raises(SystemExit) as exc:
        main(["select", "--data", str(toy_csv), "--selector", "lasso", "--k", "3", "--B", "30"])
    assert exc.value.code == 2


def test_select_bad_flag_value_is_usage_error(toy_csv):
    with pytest.raises(SystemExit) as exc:
        main(["select", "--data", str(toy_csv), "--response", "y", "--selector", "lasso",
              "--k", "3", "--B", "30", "--r", "1.5"])
    assert exc.value.code == 2


def test_select_validation_error_exit_1(toy_csv, tmp_path, capsys):
    code = main(["select", "--data", str(toy_csv), "--response", "y", "--selector", "lasso",
                 "--k", "30", "--B", "30", "--out", str(tmp_path), "-q"])
    assert code == 1
    assert "k=30 exceeds p=9" in capsys.readouterr().err


def test_select_unreadable_csv_exit_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nx,3\n")
    assert main(["select", "--data", str(bad), "--response", "y", "--selector", "lasso",
                 "--k", "1", "--B", "10", "-q"]) == 1


def test_config_file_precedence(toy_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("selector = stepwise\nk = 4\nB = 200\nmissing = complete-case\n")
    out = tmp_path / "o"
    code = main(["select", "--config", str(cfg), "--data", str(toy_csv), "--response", "y",
                 "--B", "120", "--out", str(out), "-q", "--threads", "1"])
    assert code == 0
    resolved = json.loads((out / "manifest.json").read_text())["config"]
    assert (resolved["selector"], resolved["k"], resolved["B"], resolved["missing"]) == ("stepwise", 4, 120, "complete-case")


def test_config_file_unknown_key(toy_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(SystemExit) as exc:
        main(["select", "--config", str(cfg), "--data", str(toy_csv), "--response", "y",
              "--selector", "lasso", "--k", "3", "--B", "30"])
    assert exc.value.code == 2


def test_no_data_on_stdout(toy_csv, tmp_path, capsys):
    main(["select", "--data", str(toy_csv), "--response", "y", "--selector", "lasso",
          "--k", "3", "--B", "60", "--out", str(tmp_path), "--threads", "1"])
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "select" in captured.err


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--p", "20", "--s", "3", "--k", "5", "--B", "20,40", "--T", "3",
                 "--selector", "lasso,stepwise", "--r", "0.95,cv", "--mechanism", "mcar",
                 "--out", str(out), "--threads", "1", "-q"])
    assert code == 0
    return out


def test_simulate_outputs(sim_dir):
    rows = _rows(sim_dir / "results.csv")
    cells = {}
    for r in rows:
        key = (r["method"], r["variant"], r["options"], r["threshold"], r["B"])
        cells[key] = cells.get(key, 0) + 1
    assert set(cells.values()) == {3}
    assert len(cells) == 2 * (2 * 2 + 1)
    assert "runtime_s" in _rows(sim_dir / "timings.csv")[0]
    agg = json.loads((sim_dir / "aggregate.json").read_text())
    assert len(agg["cells"]) == len(cells)


def test_simulate_preset_low_shape(tmp_path):
    code = main(["simulate", "--preset", "low", "--mechanism", "none", "--T", "5", "--rho", "0",
                 "--snr", "4", "--variant", "standard", "--selector", "lasso,stepwise",
                 "--out", str(tmp_path), "--threads", "1", "-q"])
    assert code == 0
    rows = _rows(tmp_path / "results.csv")
    assert len(rows) == 2 * 5
    assert {r["p"] for r in rows} == {"100"}


def test_simulate_preset_high_mar_rate(tmp_path):
    code = main(["simulate", "--preset", "high", "--mechanism", "mar", "--rate", "0.2", "--T", "2",
                 "--variant", "standard", "--selector", "lasso", "--rho", "0", "--snr", "4",
                 "--out", str(tmp_path), "--threads", "1", "-q"])
    assert code == 0
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    rates = [m["empirical_missing_rate"] for m in agg["missing_rates"]]
    assert rates and all(abs(r - 0.2) < 0.02 for r in rates)


def test_simulate_unknown_preset():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--preset", "medium"])
    assert exc.value.code == 2


def test_simulate_needs_preset_or_p():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--T", "1"])
    assert exc.value.code == 2


def test_report_fig3_columns(sim_dir, tmp_path):
    out = tmp_path / "fig3.csv"
    assert main(["report", "--in", str(sim_dir), "--figure", "fig3", "--out", str(out), "-q"]) == 0
    rows = _rows(out)
    assert list(rows[0])[:4] == ["B", "selector", "sd_tp", "sd_fp"]
    assert {r["B"] for r in rows} == {"20", "40"}


def test_report_tables_layout(sim_dir, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["report", "--in", str(sim_dir), "--figure", "tables", "--out", str(out), "-q"]) == 0
    rows = _rows(out)
    assert list(rows[0])[:8] == ["rho", "snr", "mech", "method", "variant", "TP", "FN", "FP"]
    assert {r["mech"] for r in rows} == {"MCAR"}
    for r in rows:
        assert float(r["TP"]) + float(r["FN"]) == pytest.approx(3.0)


@pytest.mark.parametrize("figure", ["fig1", "fig2", "fig4"])
def test_report_other_figures(sim_dir, tmp_path, figure):
    out = tmp_path / f"{figure}.csv"
    assert main(["report", "--in", str(sim_dir), "--figure", figure, "--out", str(out), "-q"]) == 0
    assert _rows(out)


def test_report_fig4_has_chosen_thresholds(sim_dir, tmp_path):
    out = tmp_path / "f4.csv"
    main(["report", "--in", str(sim_dir), "--figure", "fig4", "--out", str(out), "-q"])
    cv = [r for r in _rows(out) if r["threshold"] == "cv"]
    assert cv and all(0 < float(r["median_chosen_threshold"]) <= 1 for r in cv)


def test_report_empty_dir_exit_1(tmp_path):
    assert main(["report", "--in", str(tmp_path), "--figure", "fig3", "-q"]) == 1


def test_report_missing_dir_exit_1(tmp_path):
    assert main(["report", "--in", str(tmp_path / "nope"), "--figure", "tables", "-q"]) == 1
