"""Command-line entry point for benchmark experiments.

Subcommands:

* ``bench <preset>``: run a built-in benchmark and write traces CSV,
  aggregates CSV, and the regret figure into the output directory.
* ``run <config.json>``: same pipeline driven by a config file.
* ``validate <problem.json>``: structural check of a problem file.
* ``bound``: emit the theoretical regret ceiling as a curve CSV.

Exit codes: 0 on success, 1 on configuration errors (including usage
errors), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .environments import PRESETS, Environment, build_preset
from .model import SpecError
from .policies import POLICY_KINDS, PolicyConfig
from .runner import (
    ExperimentConfig,
    aggregate,
    bound_curve,
    checkpoints,
    run_experiment,
    write_aggregates_csv,
    write_bound_csv,
    write_traces_csv,
)

DEFAULT_POLICIES = ("mats", "factored_ucb", "scql", "random")


class ConfigError(ValueError):
    """Bad command line, config file, or problem file."""


def _parse_delta(text: str):
    if text == "theorem":
        return "theorem"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"delta must be a number in (0, 1] or 'theorem', got {text!r}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mamab",
        description="Multi-agent bandit benchmarks: Thompson sampling vs baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a built-in benchmark preset")
    bench.add_argument("preset", choices=PRESETS)
    bench.add_argument("--agents", type=int, default=10,
                       help="chain length, or number of villages for gem-mining")
    bench.add_argument("--horizon", type=int, default=10_000)
    bench.add_argument("--runs", type=int, default=20)
    bench.add_argument("--seed", type=int, default=0, help="master seed for run derivation")
    bench.add_argument("--env-seed", type=int, default=0,
                       help="generator seed for gem-mining")
    bench.add_argument("--policy", action="append", choices=POLICY_KINDS,
                       help="repeatable; defaults to all four policies")
    bench.add_argument("--sigma", type=float, default=0.5,
                       help="subgaussian scale of the unscaled local rewards")
    bench.add_argument("--delta", type=_parse_delta, default="theorem")
    bench.add_argument("--epsilon", type=float, default=0.1)
    bench.add_argument("--alpha", type=float, default=0.1, help="scql learning rate")
    bench.add_argument("--out", default="out")
    bench.add_argument("--full-resolution", action="store_true")
    bench.add_argument("--normalize", action="store_true",
                       help="plot regret divided by the optimal mean")

    run = sub.add_parser("run", help="run an experiment described by a config file")
    run.add_argument("config", help="path to the experiment config JSON")
    run.add_argument("--out", default=None, help="override the config's output directory")

    val = sub.add_parser("validate", help="check a problem file")
    val.add_argument("problem", help="path to the problem JSON")

    bound = sub.add_parser("bound", help="emit the theoretical regret ceiling")
    bound.add_argument("--preset", choices=PRESETS, required=True)
    bound.add_argument("--agents", type=int, default=10)
    bound.add_argument("--env-seed", type=int, default=0)
    bound.add_argument("--sigma", type=float, default=0.5,
                       help="subgaussian scale of the unscaled local rewards")
    bound.add_argument("--horizon", type=int, default=10_000)
    bound.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    return parser


def _policy_config_from_dict(doc: dict[str, Any]) -> PolicyConfig:
    known = {
        "kind", "sigma", "delta", "epsilon", "epsilon_decay", "learning_rate",
        "alpha", "label",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown policy fields: {sorted(unknown)}")
    if "kind" not in doc:
        raise ConfigError("every policy needs a 'kind'")
    kwargs = dict(doc)
    if "alpha" in kwargs:
        kwargs["learning_rate"] = kwargs.pop("alpha")
    try:
        return PolicyConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad policy config {doc}: {exc}") from exc


def _environment_from_dict(doc: dict[str, Any]) -> Environment:
    if "problem_file" in doc:
        return Environment.load_problem(doc["problem_file"])
    name = doc.get("name")
    if name not in PRESETS:
        raise ConfigError(f"environment needs a preset name from {PRESETS} or a problem_file")
    agents = int(doc.get("agents", doc.get("villages", 10)))
    return build_preset(name, agents, int(doc.get("seed", 0)))


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        env = _environment_from_dict(doc["environment"])
        policies = tuple(_policy_config_from_dict(p) for p in doc["policies"])
        return ExperimentConfig(
            environment=env,
            policies=policies,
            horizon=int(doc["horizon"]),
            runs=int(doc["runs"]),
            master_seed=int(doc["master_seed"]),
            output=doc.get("output"),
            full_resolution=bool(doc.get("full_resolution", False)),
            normalize=bool(doc.get("normalize", False)),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc


def execute_experiment(config: ExperimentConfig, out_dir: str | Path) -> dict[str, Path]:
    """Run all cells and write traces, aggregates, and the figure.

    Returns the paths written, keyed by artifact name.
    """
    from .report import render_regret_figure

    env = config.environment
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = run_experiment(
        env, config.policies, config.horizon, config.runs, config.master_seed
    )
    grid = checkpoints(config.horizon, config.full_resolution)
    aggs = aggregate(traces)
    sigma_unscaled = next(
        (p.sigma for p in config.policies if p.kind == "factored_ucb"), 0.5
    )
    bound = bound_curve(env.spec, sigma_unscaled / env.reward_scale, grid)

    paths = {
        "traces": out / f"{env.name}_traces.csv",
        "aggregates": out / f"{env.name}_aggregates.csv",
        "figure": out / f"{env.name}_regret.svg",
    }
    write_traces_csv(paths["traces"], traces, grid, env.optimal_mean)
    write_aggregates_csv(paths["aggregates"], aggs, grid, bound)
    render_regret_figure(
        paths["figure"],
        aggs,
        grid,
        bound=bound,
        normalize=config.normalize,
        optimal_mean=env.optimal_mean,
        title=env.name,
    )
    for agg in aggs:
        final = agg.mean[-1] if agg.mean.size else 0.0
        print(f"{agg.policy_id}: mean cumulative regret at T={config.horizon}: {final:.4f}")
    return paths


def _cmd_bench(args) -> int:
    env = build_preset(args.preset, args.agents, args.env_seed)
    kinds = args.policy if args.policy else list(DEFAULT_POLICIES)
    policies = tuple(
        PolicyConfig(
            kind=kind,
            sigma=args.sigma,
            delta=args.delta,
            epsilon=args.epsilon,
            learning_rate=args.alpha,
        )
        for kind in kinds
    )
    config = ExperimentConfig(
        environment=env,
        policies=policies,
        horizon=args.horizon,
        runs=args.runs,
        master_seed=args.seed,
        full_resolution=args.full_resolution,
        normalize=args.normalize,
    )
    paths = execute_experiment(config, args.out)
    print(f"wrote {paths['traces']}, {paths['aggregates']}, {paths['figure']}")
    return 0


def _cmd_run(args) -> int:
    config = load_experiment_config(args.config)
    out_dir = args.out or config.output or "out"
    paths = execute_experiment(config, out_dir)
    print(f"wrote {paths['traces']}, {paths['aggregates']}, {paths['figure']}")
    return 0


def _cmd_validate(args) -> int:
    env = Environment.load_problem(args.problem)
    spec = env.spec
    print(
        f"{args.problem}: ok "
        f"({spec.num_agents} agents, {spec.num_groups} groups, "
        f"{spec.total_local_arms} local arms)"
    )
    return 0


def _cmd_bound(args) -> int:
    env = build_preset(args.preset, args.agents, args.env_seed)
    grid = checkpoints(args.horizon, full_resolution=True)
    curve = bound_curve(env.spec, args.sigma / env.reward_scale, grid)
    if args.out is None:
        sys.stdout.write("t,bound\n")
        for t, b in zip(grid, curve):
            sys.stdout.write(f"{t},{format(float(b), '.17g')}\n")
    else:
        write_bound_csv(args.out, grid, curve)
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "bench": _cmd_bench,
    "run": _cmd_run,
    "validate": _cmd_validate,
    "bound": _cmd_bound,
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        # argparse exits 0 for --help and 2 for usage errors; usage
        # problems are configuration errors here.
        return 0 if exit_.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SpecError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
