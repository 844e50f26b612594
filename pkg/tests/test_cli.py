import json

import numpy as np

from factored_bandits import bernoulli_chain, bound_curve, checkpoints, gem_mining
from factored_bandits.cli import cli_main


def read_csv_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


class TestBench:
    def test_smoke_writes_all_artifacts(self, tmp_path, capsys):
        code = cli_main(
            [
                "bench", "bernoulli-chain",
                "--agents", "4", "--horizon", "50", "--runs", "2",
                "--seed", "3", "--out", str(tmp_path),
            ]
        )
        assert code == 0
        traces = tmp_path / "bernoulli-chain_traces.csv"
        aggs = tmp_path / "bernoulli-chain_aggregates.csv"
        figure = tmp_path / "bernoulli-chain_regret.svg"
        assert traces.exists() and aggs.exists() and figure.exists()
        header, rows = read_csv_rows(aggs)
        assert header == ["policy", "t", "mean_cum_regret", "std_cum_regret", "bound"]
        # four default policies, one row per step each
        assert len(rows) == 4 * 50
        assert {r[0] for r in rows} == {"mats", "factored_ucb", "scql", "random"}
        header, rows = read_csv_rows(traces)
        assert len(rows) == 4 * 2 * 50
        assert figure.read_text().lstrip().startswith("<?xml")

    def test_policy_subset_and_determinism(self, tmp_path):
        args = [
            "bench", "poisson-chain",
            "--agents", "3", "--horizon", "40", "--runs", "2",
            "--policy", "mats", "--policy", "random", "--seed", "5",
        ]
        assert cli_main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli_main(args + ["--out", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "poisson-chain_traces.csv").read_bytes()
        second = (tmp_path / "b" / "poisson-chain_traces.csv").read_bytes()
        assert first == second

    def test_bad_flag_is_config_error(self, capsys):
        assert cli_main(["bench", "bernoulli-chain", "--agents", "not-a-number"]) == 1
        assert cli_main(["bench", "no-such-preset"]) == 1

    def test_single_agent_chain_is_runtime_rejected(self, capsys):
        assert cli_main(["bench", "bernoulli-chain", "--agents", "1"]) == 1


class TestRun:
    def test_config_file_round(self, tmp_path, capsys):
        config = {
            "environment": {"name": "gem-mining", "villages": 3, "seed": 2},
            "policies": [{"kind": "mats"}, {"kind": "random", "label": "uniform"}],
            "horizon": 30,
            "runs": 2,
            "master_seed": 9,
            "output": str(tmp_path / "out"),
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert cli_main(["run", str(path)]) == 0
        header, rows = read_csv_rows(tmp_path / "out" / "gem-mining_aggregates.csv")
        assert {r[0] for r in rows} == {"mats", "uniform"}

    def test_problem_file_environment(self, tmp_path, capsys):
        from pathlib import Path

        problem = Path(__file__).resolve().parent.parent / "configs" / "example_problem.json"
        assert cli_main(["validate", str(problem)]) == 0
        config = {
            "environment": {"problem_file": str(problem)},
            "policies": [{"kind": "mats"}, {"kind": "factored_ucb"}],
            "horizon": 25,
            "runs": 2,
            "master_seed": 4,
            "output": str(tmp_path / "out"),
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert cli_main(["run", str(path)]) == 0
        assert (tmp_path / "out" / "two-teams_aggregates.csv").exists()

    def test_missing_config_is_config_error(self, capsys):
        assert cli_main(["run", "/nonexistent/config.json"]) == 1

    def test_malformed_config_is_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert cli_main(["run", str(path)]) == 1
        path.write_text(json.dumps({"environment": {"name": "bernoulli-chain"}}))
        assert cli_main(["run", str(path)]) == 1
        err = capsys.readouterr().err
        assert "error" in err

    def test_unknown_policy_field_is_config_error(self, tmp_path, capsys):
        config = {
            "environment": {"name": "bernoulli-chain", "agents": 2},
            "policies": [{"kind": "mats", "temperature": 3}],
            "horizon": 5,
            "runs": 1,
            "master_seed": 0,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert cli_main(["run", str(path)]) == 1


class TestValidate:
    def test_valid_problem(self, tmp_path, capsys):
        env = gem_mining(4, 1)
        path = tmp_path / "problem.json"
        env.save_problem(path)
        assert cli_main(["validate", str(path)]) == 0
        assert "ok" in capsys.readouterr().out

    def test_orphan_agent_names_the_agent(self, tmp_path, capsys):
        doc = {
            "agents": 2,
            "action_counts": [2, 2],
            "groups": [[0]],
            "distributions": [{"kind": "bernoulli", "params": [0.5, 0.5]}],
        }
        path = tmp_path / "orphan.json"
        path.write_text(json.dumps(doc))
        assert cli_main(["validate", str(path)]) == 1
        assert "agent 1" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert cli_main(["validate", "/nonexistent/problem.json"]) == 1


class TestBound:
    def test_writes_curve_csv(self, tmp_path):
        out = tmp_path / "bound.csv"
        code = cli_main(
            ["bound", "--preset", "bernoulli-chain", "--agents", "10",
             "--horizon", "100", "--out", str(out)]
        )
        assert code == 0
        header, rows = read_csv_rows(out)
        assert header == ["t", "bound"]
        assert len(rows) == 100
        env = bernoulli_chain(10)
        expected = bound_curve(env.spec, 0.5 / env.reward_scale, checkpoints(100))
        np.testing.assert_allclose([float(r[1]) for r in rows], expected)

    def test_stdout_mode(self, capsys):
        assert cli_main(
            ["bound", "--preset", "poisson-chain", "--agents", "3", "--horizon", "5"]
        ) == 0
        out = capsys.readouterr().out
        assert out.startswith("t,bound\n")
        assert len(out.splitlines()) == 6


class TestUsage:
    def test_help_exits_zero(self):
        assert cli_main(["--help"]) == 0

    def test_no_command_is_config_error(self):
        assert cli_main([]) == 1

    def test_shipped_configs_parse(self):
        from pathlib import Path

        from factored_bandits.cli import load_experiment_config

        config_dir = Path(__file__).resolve().parent.parent / "configs"
        for name in ("bernoulli_chain", "poisson_chain", "gem_mining"):
            config = load_experiment_config(config_dir / f"{name}.json")
            assert config.runs == 20
