"""End-to-end tests for the command-line interface."""

import argparse

import pytest

from sepcon.cli import RunConfig, build_parser, main
from sepcon.errors import ValidationError
from sepcon.repository import read_csv


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


class TestArguments:
    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "usage: sepcon" in capsys.readouterr().out

    def test_config_flag_and_aliases(self, tmp_path):
        args = build_parser().parse_args(
            ["solve", "--config", "tiny", "--grid-m", "4", "--kind", "grid", "-o", str(tmp_path)]
        )
        cfg = RunConfig.from_args(args)
        assert cfg.config == "tiny"
        assert cfg.resolution == 4
        assert cfg.kind == "grid"

    @pytest.mark.parametrize(
        "argv, flag",
        [
            (["solve"], "--config"),
            (["solve", "tiny", "--seed", "-1"], "--seed"),
            (["simulate", "tiny", "--episodes", "0"], "--episodes"),
            (["simulate", "tiny", "--workers", "0"], "--workers"),
            (["solve", "tiny", "--resolution", "0"], "--resolution"),
            (["example", "--rho", "1.5"], "--rho"),
        ],
    )
    def test_validation(self, argv, flag):
        with pytest.raises(ValidationError) as info:
            RunConfig.from_args(build_parser().parse_args(argv))
        assert info.value.location == flag

    def test_example_needs_no_config(self):
        args = argparse.Namespace(command="example", out=".", seed=0)
        assert RunConfig.from_args(args).config is None


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{\n  \"horizon\": 2,\n  oops\n}\n", encoding="utf-8")
        assert _run(tmp_path, "solve", str(bad)) == 2
        assert capsys.readouterr().err.startswith("error[config]: ")

    def test_validation_error(self, tmp_path, capsys):
        assert _run(tmp_path, "solve") == 3
        assert "error[validation]: --config" in capsys.readouterr().err

    def test_negative_seed(self, tmp_path):
        assert _run(tmp_path, "solve", "tiny", "--seed", "-1") == 3

    def test_budget_error(self, tmp_path, capsys):
        assert _run(tmp_path, "oracle-check", "noiseless", "--method", "enumerate") == 4
        assert "error[budget]:" in capsys.readouterr().err

    def test_missing_fixture(self, tmp_path):
        assert _run(tmp_path, "solve", "no_such_system") == 2


class TestSolve:
    def test_writes_artifacts(self, tmp_path, capsys):
        assert _run(tmp_path, "solve", "tiny") == 0
        target = tmp_path / "tiny_solve"
        assert (target / "solution.json").exists()
        table = read_csv(target / "solution.csv")
        assert table["columns"] == ["stage", "node", "belief", "value", "action"]
        assert {row["stage"] for row in table["rows"]} == {"0", "1", "2"}
        assert "V_0 = " in capsys.readouterr().out

    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "tiny", "--out", str(a)]) == 0
        assert main(["solve", "tiny", "--out", str(b)]) == 0
        for name in ("solution.csv", "solution.json"):
            assert (a / "tiny_solve" / name).read_bytes() == (b / "tiny_solve" / name).read_bytes()

    def test_override_changes_the_hash(self, tmp_path):
        assert main(["solve", "tiny", "--out", str(tmp_path / "a")]) == 0
        assert main(["solve", "tiny", "--beta", "0", "--out", str(tmp_path / "b")]) == 0
        plain = read_csv(tmp_path / "a" / "tiny_solve" / "solution.csv")["meta"]
        changed = read_csv(tmp_path / "b" / "tiny_solve" / "solution.csv")["meta"]
        assert plain["config_hash"] != changed["config_hash"]


class TestSimulate:
    def test_exact_mode(self, tmp_path):
        assert _run(tmp_path, "simulate", "noiseless", "-n", "50", "--trace-episodes", "2") == 0
        target = tmp_path / "noiseless_simulate_exact"
        summary = {r["metric"]: r["value"] for r in read_csv(target / "summary.csv")["rows"]}
        assert summary["episodes"] == "50"
        assert summary["costs_agree"] == "1"
        assert summary["penalty_iff_states_equal"] == "1"
        lines = (target / "trace.jsonl").read_text(encoding="utf-8").splitlines()
        assert '"header"' in lines[0]
        assert len(lines) == 1 + 2 * 4
        assert all('"memory"' in line for line in lines[1:])

    def test_summaries_are_reproducible(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["simulate", "tiny", "-n", "40", "--seed", "5", "--out", str(tmp_path / sub)]) == 0
        a = (tmp_path / "a" / "tiny_simulate_exact" / "summary.csv").read_bytes()
        b = (tmp_path / "b" / "tiny_simulate_exact" / "summary.csv").read_bytes()
        assert a == b

    def test_learned_mode(self, tmp_path):
        assert _run(tmp_path, "simulate", "learning", "--mode", "learned", "-n", "20") == 0
        target = tmp_path / "learning_simulate_learned"
        curve = read_csv(target / "tv_curve.csv")
        assert curve["columns"] == ["episode", "tv"]
        assert len(curve["rows"]) == 21
        summary = {r["metric"]: r["value"] for r in read_csv(target / "summary.csv")["rows"]}
        assert "final_tv" in summary
        assert (target / "trace.jsonl").exists()

    def test_saved_solution_replaces_the_solve(self, tmp_path, capsys):
        saved = tmp_path / "a" / "tiny_solve" / "solution.json"
        assert main(["solve", "tiny", "--out", str(tmp_path / "a")]) == 0
        argv = ["simulate", "tiny", "-n", "40", "--seed", "5"]
        assert main([*argv, "--solution", str(saved), "--out", str(tmp_path / "a")]) == 0
        assert "Loaded alpha solution" in capsys.readouterr().out
        assert main([*argv, "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "tiny_simulate_exact" / "summary.csv").read_bytes()
        b = (tmp_path / "b" / "tiny_simulate_exact" / "summary.csv").read_bytes()
        assert a == b

    def test_saved_solution_must_match_the_config(self, tmp_path, capsys):
        assert _run(tmp_path, "solve", "tiny") == 0
        saved = str(tmp_path / "tiny_solve" / "solution.json")
        code = _run(tmp_path, "simulate", "tiny", "-n", "5", "--beta", "3", "--solution", saved)
        assert code == 2
        assert "error[config]: " in capsys.readouterr().err

    def test_missing_solution_file(self, tmp_path):
        missing = str(tmp_path / "nowhere.json")
        assert _run(tmp_path, "simulate", "tiny", "-n", "5", "--solution", missing) == 2


class TestFilterTrace:
    def test_filter_matches_enumeration(self, tmp_path):
        assert _run(tmp_path, "filter-trace", "tiny", "--seed", "3") == 0
        table = read_csv(tmp_path / "tiny_filter" / "filter.csv")
        assert len(table["rows"]) == 3
        for row in table["rows"]:
            assert float(row["brute_force_tv"]) <= 1e-10
        assert table["rows"][-1]["u"] == ""

    def test_with_saved_solution(self, tmp_path):
        assert _run(tmp_path, "solve", "tiny") == 0
        saved = str(tmp_path / "tiny_solve" / "solution.json")
        assert _run(tmp_path, "filter-trace", "tiny", "--seed", "3", "--solution", saved) == 0
        assert len(read_csv(tmp_path / "tiny_filter" / "filter.csv")["rows"]) == 3


class TestExample:
    def test_gains_table(self, tmp_path, capsys):
        assert _run(tmp_path, "example", "--rho", "-0.5", "--samples", "0") == 0
        (csv_path,) = tmp_path.glob("example_rho_m*/example.csv")
        rows = {r["quantity"]: r for r in read_csv(csv_path)["rows"]}
        assert float(rows["gain_u2"]["optimal"]) == pytest.approx(0.5)
        assert float(rows["gain_u3_x2"]["optimal"]) == pytest.approx(-0.25)
        assert (csv_path.parent / "walkthrough.csv").exists()
        assert "differs from the published" not in capsys.readouterr().out

    def test_discrepancy_is_reported(self, tmp_path, capsys):
        assert _run(tmp_path, "example", "--rho", "0.5", "--samples", "0") == 0
        assert "differs from the published" in capsys.readouterr().out
        assert len(list(tmp_path.glob("example_rho_p*/example.csv"))) == 1


class TestOracleCheck:
    def test_fixture_and_random_instances(self, tmp_path, capsys):
        assert _run(tmp_path, "oracle-check", "tiny", "--instances", "3") == 0
        table = read_csv(tmp_path / "oracle_check" / "oracle.csv")
        assert len(table["rows"]) == 4
        assert all(row["ok"] == "1" for row in table["rows"])
        assert "DP matches oracle on 4 system(s)" in capsys.readouterr().out

    def test_needs_something_to_check(self, tmp_path):
        assert _run(tmp_path, "oracle-check") == 3
