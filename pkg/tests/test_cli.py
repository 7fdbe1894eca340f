import json
import math

import pytest

from bivex.cli import build_parser, main, resolve_sweep
from bivex.errors import UsageError
from bivex.rate_functions import Scale


def _run_json(tmp_path, argv, name="out.json"):
    out = tmp_path / name
    code = main(argv + ["--format", "json", "--out", str(out), "--silent"])
    return code, json.loads(out.read_text(encoding="utf-8"))


def test_rate_large_scale(tmp_path):
    code, rows = _run_json(tmp_path, ["rate", "--scale", "large", "--rho", "0.5", "--u1", "1", "--u2", "1"])
    assert code == 0
    assert rows[0]["rate"] == pytest.approx(2.0 / 3.0)
    assert rows[0]["case"] == "InteriorOneIndex"
    assert rows[0]["regime"] == "OneIndexDominant"


def test_rate_right_scale(tmp_path):
    code, rows = _run_json(
        tmp_path, ["rate", "--scale", "right", "--rho", "0", "--u1", "2", "--u2", "2", "--sigma1", "1", "--sigma2", "1"]
    )
    assert code == 0
    assert rows[0]["rate"] == pytest.approx(-2.0)
    assert rows[0]["status"] == "ok"


def test_rate_invalid_right_scale_point_is_skipped(tmp_path):
    code, rows = _run_json(tmp_path, ["rate", "--rho", "0", "--u1", "1", "--u2", "1"])
    assert code == 0
    assert rows[0]["status"] == "skipped"
    assert rows[0]["reason"] == "u ≤ √2·σ"
    assert rows[0]["rate"] == ""


def test_rate_grid_is_a_cartesian_product(tmp_path):
    code, rows = _run_json(
        tmp_path, ["rate", "--scale", "large", "--rho", "0", "--rho", "0.5", "--u1", "1", "--u1", "2", "--u2", "1"]
    )
    assert code == 0
    assert [(r["rho"], r["u1"]) for r in rows] == [(0.0, 1.0), (0.0, 2.0), (0.5, 1.0), (0.5, 2.0)]


def test_sharp_ratio_column_approaches_one(tmp_path):
    code, rows = _run_json(
        tmp_path, ["sharp", "--rho", "0.5", "--u1", "2", "--u2", "2", "--n", "1000", "--an", "4", "--an", "8"]
    )
    assert code == 0
    assert [r["k"] for r in rows] == pytest.approx([0.103374, 0.103374], abs=1e-6)
    assert [r["k_published"] for r in rows] == pytest.approx([0.119366, 0.119366], abs=1e-6)
    gaps = [abs(r["ratio_over_k"] - 1.0) for r in rows]
    assert gaps[1] < gaps[0]
    assert (rows[0]["b"], rows[0]["c"], rows[0]["k_row"]) == (2, 1, 5)


def test_sharp_cone_exponents(tmp_path):
    code, rows = _run_json(tmp_path, ["sharp", "--rho", "0.8", "--u1", "2", "--u2", "1", "--n", "1000", "--an", "8"])
    assert code == 0
    assert (rows[0]["b"], rows[0]["c"]) == (1, 1)


def test_sharp_unsorted_threshold_is_a_usage_error(tmp_path, capsys):
    code = main(["sharp", "--rho", "0.5", "--u1", "1", "--u2", "2", "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "thresholds must satisfy u2 ≤ u1" in capsys.readouterr().out
    assert not (tmp_path / "x.csv").exists()


def test_sharp_sort_flag_swaps_coordinates(tmp_path):
    code, rows = _run_json(tmp_path, ["sharp", "--rho", "0.5", "--u1", "1", "--u2", "2", "--an", "4", "--sort"])
    assert code == 0
    assert (rows[0]["u1"], rows[0]["u2"]) == (2.0, 1.0)


def test_oracle_right_scale_row(tmp_path):
    code, rows = _run_json(tmp_path, ["oracle", "--rho", "0.5", "--u1", "2", "--u2", "2", "--logn", "46"])
    assert code == 0
    row = rows[0]
    assert row["n"] == ""
    assert row["a_n"] == pytest.approx(math.sqrt(46.0))
    assert row["reference_rate"] == pytest.approx(-5.0 / 3.0)
    assert abs(row["normalized_log_T"] - row["reference_rate"]) < 0.2


def test_oracle_large_scale_rows(tmp_path):
    code, rows = _run_json(
        tmp_path, ["oracle", "--scale", "large", "--rho", "0.5", "--u1", "2", "--u2", "2", "--n", "1000", "--an", "6"]
    )
    assert code == 0
    assert rows[0]["dominant"] == "equal"
    assert rows[0]["log_e_n"] < rows[0]["log_S_equal"] - 10.0


def test_mc_degenerate_coincidence(tmp_path):
    code, rows = _run_json(tmp_path, ["mc", "--rho", "1", "--coincidence", "--trials", "500"])
    assert code == 0
    assert rows[0]["p_distinct"] == 0.0
    assert rows[0]["method"] == "Naive"


def test_mc_output_is_byte_identical_across_runs(tmp_path):
    argv = ["mc", "--rho", "0.5", "--u1", "1.5", "--u2", "1.5", "--n", "100", "--trials", "20000", "--seed", "7", "--silent"]
    assert main(argv + ["--out", str(tmp_path / "a.csv"), "--threads", "1"]) == 0
    assert main(argv + ["--out", str(tmp_path / "b.csv"), "--threads", "4"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_mc_naive_and_is_agree(tmp_path):
    base = ["mc", "--rho", "0.5", "--u1", "1", "--u2", "1", "--an", "4", "--n", "1000", "--seed", "3"]
    _, naive = _run_json(tmp_path, base + ["--trials", "40000"], "naive.json")
    _, weighted = _run_json(tmp_path, base + ["--trials", "4000", "--method", "is"], "is.json")
    a, b = naive[0], weighted[0]
    assert abs(a["log_p"] - b["log_p"]) < 3.0 * math.hypot(a["std_err_log"], b["std_err_log"])


def test_verify_single_criterion(tmp_path):
    out = tmp_path / "verify.csv"
    assert main(["verify", "--criterion", "QUAD", "--out", str(out), "--silent"]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "criterion,parameters,expected,observed,tolerance,pass"
    assert all(line.startswith("QUAD,") and line.endswith(",true") for line in lines[1:])


def test_config_file_with_flag_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SWEEP_RHO", "-0.5")
    cfg_file = tmp_path / "sweep.cfg"
    cfg_file.write_text("scale = large\nrho = {{SWEEP_RHO}}\nu1 = 1\nu2 = 1\n", encoding="utf-8")
    code, rows = _run_json(tmp_path, ["rate", "--config", str(cfg_file)])
    assert code == 0
    assert rows[0]["rate"] == pytest.approx(1.0)
    code, rows = _run_json(tmp_path, ["rate", "--config", str(cfg_file), "--rho", "0.5"], "override.json")
    assert rows[0]["rate"] == pytest.approx(2.0 / 3.0)


def test_resolve_sweep_rejects_bad_values():
    parser = build_parser()
    with pytest.raises(UsageError):
        resolve_sweep(parser.parse_args(["mc", "--trials", "0"]))
    with pytest.raises(UsageError):
        resolve_sweep(parser.parse_args(["sharp", "--an", "-1"]))
    cfg = resolve_sweep(parser.parse_args(["oracle", "--scale", "large", "--n", "10"]))
    assert cfg.scale == Scale.LARGE
    assert cfg.counts() == [(10, math.log(10))]


def test_bad_arguments_exit_with_usage_code(capsys):
    assert main(["rate", "--rho", "abc"]) == 2
    assert main(["nope"]) == 2


def test_resolved_sweep_is_logged(tmp_path):
    _run_json(tmp_path, ["rate", "--scale", "large", "--rho", "0.5", "--u1", "1", "--u2", "1"])
    text = (tmp_path / "bivex_log.txt").read_text(encoding="utf-8")
    assert "bivex rate: resolved sweep" in text
    assert "Result is SweepConfig" in text


def test_oracle_skips_unit_sample_at_right_scale(tmp_path):
    code, rows = _run_json(tmp_path, ["oracle", "--rho", "0", "--u1", "2", "--u2", "2", "--n", "1"])
    assert code == 0
    assert rows[0]["status"] == "skipped"
