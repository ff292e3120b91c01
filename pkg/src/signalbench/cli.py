"""Command-line entry point: train, eval, compare, demand-gen, audit.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure.
The output root defaults to ``$SIGNALBENCH_OUT`` or ``./runs``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile

from .audit import run_audit
from .config import ConfigError, RunConfig, build_config, read_config_file
from .demand import PEAK_ROWS, HOURLY_DEMAND, DemandSchedule, scenario_demand
from .dqn import DivergenceError, run_training
from .experiments import (
    ScenarioSpec,
    compare_controllers,
    maxout_histogram,
    run_scenario,
    summarize,
    write_histogram_csv,
)
from .neural import CheckpointError, load_checkpoint

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
OUT_ENV = "SIGNALBENCH_OUT"

log = logging.getLogger("signalbench")


class OutputExists(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat section.key=value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="signalbench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train the DQN agent")
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--gamma", type=float)

    for name, help_ in (("eval", "run the trained agent on a scenario"),
                        ("compare", "compare DQN, actuated and pre-timed control")):
        e = sub.add_parser(name, parents=[common], help=help_)
        e.add_argument("--checkpoint", required=name == "eval")
        e.add_argument("--scenario", help=f"{', '.join(PEAK_ROWS)}, zero, or a demand CSV")
        if name == "eval":
            e.add_argument("--seed", type=int, default=0)
        else:
            e.add_argument("--seeds", help="comma-separated seeds")
            e.add_argument("--workers", type=int)

    sub.add_parser("demand-gen", parents=[common], help="write the hourly demand CSVs")

    a = sub.add_parser("audit", parents=[common], help="run invariant checks on a seeded run")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--scenario")
    return p


def _load_config(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if getattr(args, "episodes", None) is not None:
        values["dqn.episodes"] = str(args.episodes)
    if getattr(args, "gamma", None) is not None:
        values["dqn.gamma"] = repr(args.gamma)
    if args.command == "train" and args.seed is not None:
        values["dqn.seed"] = str(args.seed)
    if getattr(args, "scenario", None):
        values["run.scenario"] = args.scenario
    if getattr(args, "seeds", None):
        values["run.seeds"] = args.seeds
    if getattr(args, "workers", None) is not None:
        values["run.workers"] = str(args.workers)
    return build_config(values)


def _out_dir(args, cfg: RunConfig) -> str:
    return args.out or cfg.run.out_dir or os.environ.get(OUT_ENV) or "runs"


def _claim(paths, force: bool) -> None:
    existing = [p for p in paths if os.path.exists(p)]
    if existing and not force:
        raise OutputExists(f"refusing to overwrite {', '.join(existing)} (use --force)")


def _publish(out: str, names, write) -> list[str]:
    """Write ``names`` into a staging dir via ``write(paths)``, then move them into ``out``."""
    os.makedirs(out, exist_ok=True)
    finals = [os.path.join(out, n) for n in names]
    with tempfile.TemporaryDirectory(dir=out, prefix=".stage-") as stage:
        write([os.path.join(stage, n) for n in names])
        for name, final in zip(names, finals):
            os.replace(os.path.join(stage, name), final)
    return finals


def cmd_train(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    targets = [os.path.join(out, "training_log.csv"), os.path.join(out, "checkpoint.txt")]
    _claim(targets, args.force)
    print(f"training {cfg.dqn.episodes} episodes (gamma={cfg.dqn.gamma}, "
          f"minibatch={cfg.dqn.minibatch}, replay_start={cfg.dqn.replay_start_size})")

    def progress(e):
        print(f"episode {e.episode + 1}/{cfg.dqn.episodes} steps={e.steps} "
              f"return={e.ret:.1f} loss={e.mean_loss:.4f} eps={e.epsilon:.3f}", flush=True)

    results = []

    # run_training writes both files into the staging dir it is given
    def write(paths):
        stage = os.path.dirname(paths[0])
        results.append(run_training(cfg.dqn, cfg.sim, cfg.plan, cfg.reward, cfg.env,
                                    out_dir=stage, progress=progress))

    _publish(out, [os.path.basename(t) for t in targets], write)
    result = results[0]
    print(f"wrote {targets[1]} after {result.global_steps} agent steps")
    return EXIT_OK


def _scenario(cfg: RunConfig):
    try:
        return scenario_demand(cfg.run.scenario)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def cmd_eval(args, cfg: RunConfig) -> int:
    demand, duration = _scenario(cfg)
    net = load_checkpoint(args.checkpoint)
    out = _out_dir(args, cfg)
    names = ["metrics.csv", "histogram.csv", "summary.csv"]
    targets = [os.path.join(out, n) for n in names]
    _claim(targets, args.force)
    spec = ScenarioSpec(cfg.run.scenario, demand, "dqn", duration, args.seed, net,
                        sim_config=cfg.sim, plan=cfg.plan, env_config=cfg.env)
    record = run_scenario(spec)

    def write(paths):
        record.write_metrics_csv(paths[0])
        write_histogram_csv(maxout_histogram(record.countdowns), paths[1])
        summarize([("dqn", args.seed, record)]).write_csv(paths[2])

    _publish(out, names, write)
    print(f"DQN on {cfg.run.scenario}: mean NS queue {record.queue_ns.mean():.3f}, "
          f"mean WE queue {record.queue_we.mean():.3f}")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    demand, duration = _scenario(cfg)
    out = _out_dir(args, cfg)
    target = os.path.join(out, "summary.csv")
    _claim([target], args.force)
    net = load_checkpoint(args.checkpoint) if args.checkpoint else None
    summary = compare_controllers(demand, duration, net, cfg.run.seeds, cfg.run.workers,
                                  sim_config=cfg.sim, plan=cfg.plan, env_config=cfg.env)
    _publish(out, ["summary.csv"], lambda paths: summary.write_csv(paths[0]))
    for direction in ("NS", "WE", "total"):
        means = ", ".join(f"{c}={v[direction]:.3f}" for c, v in summary.means.items())
        print(f"{direction}: {summary.verdicts[direction]}  ({means})")
    return EXIT_OK


def cmd_demand_gen(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    targets = {name: os.path.join(out, f"demand_{name}.csv") for name in PEAK_ROWS}
    targets.update({row: os.path.join(out, f"demand_{row}.csv") for row in HOURLY_DEMAND})
    _claim(targets.values(), args.force)

    def write(paths):
        for name, path in zip(targets, paths):
            rows = PEAK_ROWS[name] if name in PEAK_ROWS else [name]
            DemandSchedule.from_rows(rows).to_csv(path)

    _publish(out, [os.path.basename(p) for p in targets.values()], write)
    print(f"wrote {len(targets)} demand files to {out}")
    return EXIT_OK


def cmd_audit(args, cfg: RunConfig) -> int:
    demand, duration = _scenario(cfg)
    results = run_audit(cfg, demand, duration, args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_RUNTIME


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "demand-gen": cmd_demand_gen, "audit": cmd_audit}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (CheckpointError, OutputExists) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
