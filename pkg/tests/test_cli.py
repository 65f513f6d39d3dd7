import csv
import io

import pytest

from pdsplit.cli import (
    ConfigError,
    ExperimentConfig,
    build_config,
    compare_runs,
    main,
    parse_key_values,
)

SMALL = ["--n", "60", "--m-data", "12", "--nnz", "4", "--ref-budget", "5000"]
FUSED = ["--problem", "fused_lasso", "--mu1", "2", "--mu2", "0.5"] + SMALL
LASSO = ["--problem", "lasso", "--mu", "1"] + SMALL


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_solve_writes_trace_and_summary(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["solve", *FUSED, "--max-iter", "3000", "--out", str(out)])
    assert code == 0
    rows = _rows(out / "trace.csv")
    assert rows[0]["iter"] == "0" and rows[0]["wall_ms"] == ""
    summary = (out / "summary.txt").read_text()
    assert "exit_code: 0" in summary and "relaxed" in summary
    assert "iters_to_gap_1e-04" in capsys.readouterr().out


def test_refused_stepsizes_write_nothing(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", *LASSO, "--algo", "cp", "--lambda-scale", "1.32", "--out", str(out)])
    assert code == 4
    assert not out.exists()


def test_auto_theta_admits_larger_lambda(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", *LASSO, "--algo", "cp", "--lambda-scale", "1.32", "--auto-theta",
                 "--max-iter", "20000", "--out", str(out)])
    assert code == 0
    assert "theta: 0.757" in (out / "summary.txt").read_text()


@pytest.mark.parametrize("extra", [
    ["--theta", "0.9", "--auto-theta"],
    ["--r", "0.1", "--r-scale", "0.5"],
    ["--lambda", "0.1", "--lambda-scale", "0.5"],
    ["--algo", "admm"],
    ["--lambda", "-1"],
    ["--n", "1"],
    ["--bogus", "1"],
    ["--theta", "abc"],
])
def test_bad_configuration_exits_3(extra, tmp_path):
    assert main(["solve", *FUSED, *extra, "--out", str(tmp_path / "x")]) == 3


def test_unknown_key_in_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = lasso\nstep_size = 3\n")
    assert main(["solve", "--config", str(cfg)]) == 3


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nproblem = lasso\nlambda = 4/3\nseed = 7\n")
    values = parse_key_values(cfg.read_text().splitlines())
    c = build_config(values, {"seed": 9})
    assert c.problem == "lasso" and c.lam == pytest.approx(4 / 3) and c.seed == 9
    with pytest.raises(ConfigError):
        parse_key_values(["seed = 1", "seed = 2"])
    with pytest.raises(ConfigError):
        parse_key_values(["no equals sign"])


def test_zero_iterations_single_row(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", *FUSED, "--max-iter", "0", "--out", str(out)]) == 0
    rows = _rows(out / "trace.csv")
    assert len(rows) == 1 and rows[0]["iter"] == "0"


def test_identical_configs_give_identical_traces(tmp_path):
    codes = {main(["solve", *FUSED, "--max-iter", "200", "--out", str(tmp_path / name)]) for name in "ab"}
    assert len(codes) == 1
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_timing_column_on_request(tmp_path):
    out = tmp_path / "run"
    main(["solve", *FUSED, "--max-iter", "20", "--timing", "--out", str(out)])
    assert all(row["wall_ms"] for row in _rows(out / "trace.csv"))


def test_phi_column(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", *FUSED, "--phi", "--max-iter", "3000", "--theta", "0.9",
                 "--r-scale", "1.0", "--out", str(out)]) == 0
    phi = [float(row["phi"]) for row in _rows(out / "trace.csv")]
    assert len(phi) > 1 and all(b <= a + 1e-10 * phi[0] for a, b in zip(phi, phi[1:]))


def test_override_beyond_dual_bound_stagnates(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", *FUSED, "--lambda-scale", "1.5", "--override-check",
                 "--max-iter", "3000", "--out", str(out)])
    assert code == 5
    assert "status: max_iter" in (out / "summary.txt").read_text()


def test_override_beyond_primal_bound_diverges(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", *FUSED, "--r-scale", "2.5", "--override-check",
                 "--max-iter", "5000", "--out", str(out)])
    assert code == 2
    assert "status: diverged" in (out / "summary.txt").read_text()
    assert len(_rows(out / "trace.csv")) >= 1


def test_compare_single_config(tmp_path, capsys):
    cfg = tmp_path / "pd3o.cfg"
    cfg.write_text("problem = fused_lasso\nalgo = pd3o\nmu1 = 2\nmu2 = 0.5\nn = 60\nm_data = 12\nnnz = 4\n")
    assert main(["compare", str(cfg)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "label,iters_to_1e-4,final_gap,wall_ms"
    assert len(lines) == 2 and lines[1].startswith("pd3o,")


def test_compare_variants(tmp_path):
    out = tmp_path / "cmp.csv"
    code = main(["compare", *LASSO, "--algo", "cp", "--variant", "default:lambda_scale=1",
                 "--variant", "wide:lambda_scale=1.32,auto_theta=true", "--out", str(out)])
    assert code == 0
    rows = _rows(out)
    assert [r["label"] for r in rows] == ["default", "wide"]
    assert all(r["iters_to_1e-4"] for r in rows)


def test_compare_rejects_mixed_seeds(tmp_path):
    a, b = tmp_path / "a.cfg", tmp_path / "b.cfg"
    a.write_text("seed = 1\n")
    b.write_text("seed = 2\n")
    assert main(["compare", str(a), str(b)]) == 3
    with pytest.raises(ConfigError):
        compare_runs([ExperimentConfig(mu1=1.0), ExperimentConfig(mu1=2.0)])
    with pytest.raises(ConfigError):
        compare_runs([])


def test_tightness_command(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["tightness", "--grid", "0.9,1.4", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [r["classification"] for r in rows] == ["converged", "diverged"]
    assert main(["tightness", "--grid", ""]) == 3
    assert main(["tightness", "--grid", "-1"]) == 3


def test_check_stepsizes(capsys):
    assert main(["check-stepsizes", "--r", "1", "--lambda", "1.3", "--theta", "0.76",
                 "--L", "0", "--sigma", "1"]) == 0
    text = capsys.readouterr().out
    assert "chambolle_pock" in text
    assert main(["check-stepsizes", "--r", "1", "--lambda", "1.3", "--L", "0", "--sigma", "1"]) == 4
    assert main(["check-stepsizes", "--r", "1", "--lambda", "1.3", "--auto-theta",
                 "--L", "0", "--sigma", "1"]) == 0


def test_gen_problem_then_solve(tmp_path):
    inst = tmp_path / "inst"
    assert main(["gen-problem", *FUSED, "--out", str(inst)]) == 0
    assert (inst / "meta.json").exists() and (inst / "K.csv").exists()
    out = tmp_path / "run"
    assert main(["solve", "--instance", str(inst), "--max-iter", "3000", "--out", str(out)]) == 0
    assert main(["solve", "--instance", str(tmp_path / "missing")]) == 3


def test_missing_subcommand_exits_3():
    assert main([]) == 3
