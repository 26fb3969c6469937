"""Command-line front end: ``train``, ``eval``, ``oracle`` and ``sweep``.

Every run writes into one output directory holding the effective config
(``config.json``), a ``manifest.json`` with seed, code version and file list,
plus the CSVs and checkpoints of the subcommand. Exit codes are 0 on success,
2 for configuration or contract errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import ConfigError, __version__
from .comm_env import DEFAULT_ACTION_CAP, CommEnv
from .comp_env import CompEnv
from .ddqn import COMM_HYPER, COMP_HYPER, AgentHyper, evaluate, evaluate_random, train
from .neural import init_mlp, load_params, save_params
from .oracle import COMP_ENUMERATION_CAP, oracle_eval
from .seeding import child_seed, stream
from .topology import MB, ScenarioConfig, build_topology

OUTPUT_ROOT_ENV = "SLICING_OUTPUT_ROOT"
LEVELS = ("comm", "comp")

METRICS_COLUMNS = ["episode", "cum_avg_reward", "mean_loss", "epsilon"]
EVAL_COLUMNS = ["level", "gnb", "policy", "episodes", "rounds", "mean_reward",
                "mean_delay_s", "p95_delay_s", "feasibility_rate"]
ORACLE_COLUMNS = ["level", "gnb", "policy", "episodes", "mean_reward"]
COMM_TRACE_COLUMNS = ["step", "action_index", "feasible", "reward", "delay_sum_s"]
COMP_TRACE_COLUMNS = ["round", "task_id", "server", "cores", "placement", "delay_s", "reward"]
DELAY_COLUMNS = ["level", "device_count", "task_size_mb", "mean_delay_s", "p95_delay_s",
                 "feasibility_rate"]


class RunIOError(Exception):
    """Filesystem failure; maps to exit code 3."""


@dataclasses.dataclass(frozen=True)
class EnvSettings:
    penalty: float = 1.0
    action_cap: int = DEFAULT_ACTION_CAP


@dataclasses.dataclass(frozen=True)
class EvalSettings:
    episodes: int = 100
    seed_offset: int = 1


@dataclasses.dataclass(frozen=True)
class SweepSettings:
    device_counts: tuple = (2, 3, 4, 5, 6)
    task_sizes_mb: tuple = (0.5, 0.7, 1.0)
    eval_rounds: int = 1000


@dataclasses.dataclass(frozen=True)
class RunConfig:
    level: str = "comp"
    seed: int = 0
    out: str = "runs/default"
    scenario: ScenarioConfig = ScenarioConfig()
    comm_agent: AgentHyper = COMM_HYPER
    comp_agent: AgentHyper = COMP_HYPER
    comm_env: EnvSettings = EnvSettings()
    comp_env: EnvSettings = EnvSettings()
    eval: EvalSettings = EvalSettings()
    sweep: SweepSettings = SweepSettings()

    def validate(self) -> "RunConfig":
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {LEVELS}, got {self.level!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        self.scenario.validate()
        for name in ("comm_env", "comp_env"):
            env = getattr(self, name)
            if env.penalty < 0:
                raise ConfigError(f"{name}.penalty must be >= 0")
            if env.action_cap < 1:
                raise ConfigError(f"{name}.action_cap must be >= 1")
        if self.eval.episodes < 1:
            raise ConfigError("eval.episodes must be >= 1")
        if not self.sweep.device_counts or not self.sweep.task_sizes_mb:
            raise ConfigError("sweep needs at least one device count and one task size")
        if min(self.sweep.device_counts) < 1 or min(self.sweep.task_sizes_mb) <= 0:
            raise ConfigError("sweep device counts and task sizes must be positive")
        if self.sweep.eval_rounds < 1:
            raise ConfigError("sweep.eval_rounds must be >= 1")
        return self

    @property
    def agent(self) -> AgentHyper:
        return self.comm_agent if self.level == "comm" else self.comp_agent

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "seed": self.seed,
            "out": self.out,
            "scenario": {k: v for k, v in self.scenario.to_dict().items() if k != "seed"},
            "comm_agent": self.comm_agent.to_dict(),
            "comp_agent": self.comp_agent.to_dict(),
            "comm_env": dataclasses.asdict(self.comm_env),
            "comp_env": dataclasses.asdict(self.comp_env),
            "eval": dataclasses.asdict(self.eval),
            "sweep": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in dataclasses.asdict(self.sweep).items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "config")
        base = cls()
        parts = {}
        for key in ("level", "seed", "out"):
            if key in data:
                parts[key] = data[key]
        if "scenario" in data:
            scenario = _section(data, "scenario")
            if "seed" in scenario:
                raise ConfigError("scenario.seed is not allowed; the top-level seed drives all randomness")
            parts["scenario"] = ScenarioConfig.from_dict(scenario)
        if "comm_agent" in data:
            parts["comm_agent"] = AgentHyper.from_dict(_section(data, "comm_agent"), COMM_HYPER)
        if "comp_agent" in data:
            parts["comp_agent"] = AgentHyper.from_dict(_section(data, "comp_agent"), COMP_HYPER)
        for key, kind in (("comm_env", EnvSettings), ("comp_env", EnvSettings),
                          ("eval", EvalSettings), ("sweep", SweepSettings)):
            if key in data:
                parts[key] = _simple_section(kind, _section(data, key), key)
        try:
            return dataclasses.replace(base, **parts).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _reject_unknown(data: dict, known: set, where: str) -> None:
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _section(data: dict, key: str) -> dict:
    value = data[key]
    if not isinstance(value, dict):
        raise ConfigError(f"{key} must be a JSON object")
    return value


def _simple_section(kind, data: dict, where: str):
    _reject_unknown(data, {f.name for f in dataclasses.fields(kind)}, where)
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    return kind(**values)


# ---------------------------------------------------------------------------
# file helpers

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


class RunDir:
    """Output directory that remembers which files it wrote, for the manifest."""

    def __init__(self, path: Path):
        self.path = path
        self.files: list = []
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise RunIOError(f"cannot create output directory {path}: {exc}") from exc

    def write_text(self, name: str, text: str) -> Path:
        target = self.path / name
        try:
            target.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise RunIOError(f"cannot write {target}: {exc}") from exc
        self.files.append(name)
        return target

    def write_csv(self, name: str, columns, rows) -> Path:
        return self.write_text(name, csv_text(columns, rows))

    def write_checkpoint(self, name: str, params) -> Path:
        target = self.path / name
        try:
            save_params(params, target)
        except OSError as exc:
            raise RunIOError(f"cannot write {target}: {exc}") from exc
        self.files.append(name)
        return target

    def finish(self, command: str, config: RunConfig, extra: Optional[dict] = None) -> None:
        self.write_text("config.json", json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        manifest = {"command": command, "seed": config.seed, "level": config.level,
                    "version": __version__, "files": sorted(set(self.files) | {"manifest.json"})}
        manifest.update(extra or {})
        self.write_text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def resolve_out(out: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(out)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise RunIOError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# environments

def topology_for(config: RunConfig, scenario: Optional[ScenarioConfig] = None):
    return build_topology(scenario or config.scenario, seed=config.seed)


def comm_envs(config: RunConfig, topology) -> list:
    settings, hyper = config.comm_env, config.comm_agent
    return [CommEnv(topology, g.id, penalty=settings.penalty, episode_length=hyper.episode_length,
                    action_cap=settings.action_cap) for g in topology.gnbs]


def comp_env(config: RunConfig, topology) -> CompEnv:
    env = CompEnv(topology, penalty=config.comp_env.penalty)
    if env.n_actions > config.comp_env.action_cap:
        raise ConfigError(f"action space too large: {env.n_actions} > cap {config.comp_env.action_cap}")
    return env


def level_envs(config: RunConfig, topology) -> list:
    """``[(gnb_label, env), ...]`` for the configured level."""
    if config.level == "comm":
        return [(env.gnb.id, env) for env in comm_envs(config, topology)]
    return [("", comp_env(config, topology))]


def _names(level: str, gnb) -> tuple:
    tag = "comp" if level == "comp" else f"comm_gnb{gnb}"
    return f"metrics_{tag}.csv", f"{tag}.ckpt", f"trace_{tag}.csv"


def metrics_rows(metrics) -> list:
    return [{"episode": m.episode, "cum_avg_reward": m.cumulative_average_reward,
             "mean_loss": m.mean_loss, "epsilon": m.epsilon} for m in metrics]


def _train_seed(config: RunConfig, gnb) -> int:
    if config.level == "comm":
        return child_seed(config.seed, "train.comm", gnb)
    return child_seed(config.seed, "train.comp")


def _eval_seed(config: RunConfig, gnb) -> int:
    return child_seed(config.seed + config.eval.seed_offset, "eval", 0 if gnb == "" else gnb)


# ---------------------------------------------------------------------------
# subcommands

def run_train(config: RunConfig) -> Path:
    topology = topology_for(config)
    envs = level_envs(config, topology)
    run = RunDir(resolve_out(config.out))
    run.write_text("topology.json", topology.to_json() + "\n")
    for gnb, env in envs:
        metrics_name, ckpt_name, _ = _names(config.level, gnb)
        if getattr(env, "device_count", 1) == 0:
            continue
        agent, metrics = train(env, config.agent, _train_seed(config, gnb))
        run.write_csv(metrics_name, METRICS_COLUMNS, metrics_rows(metrics))
        run.write_checkpoint(ckpt_name, agent.main)
    run.finish("train", config)
    return run.path


def init_checkpoint(config: RunConfig, path: Path, gnb: int = 0) -> Path:
    """Write an untrained network for the configured level (handy as a baseline)."""
    envs = dict(level_envs(config, topology_for(config)))
    env = envs[gnb if config.level == "comm" else ""]
    dims = [env.state_dim, *config.agent.hidden_dims, env.n_actions]
    params = init_mlp(dims, stream(config.seed, "agent.init", gnb))
    save_params(params, path)
    return path


def _load_checked(path: str, env):
    try:
        params = load_params(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {path}") from exc
    except OSError as exc:
        raise RunIOError(f"cannot read checkpoint {path}: {exc}") from exc
    dims = params.layer_dims
    expected = (env.state_dim, env.n_actions)
    if (dims[0], dims[-1]) != expected:
        raise ConfigError(f"checkpoint dims mismatch: expected input/output {expected[0]}/{expected[1]}, "
                          f"got {dims[0]}/{dims[-1]}")
    return params


def _eval_row(level, gnb, policy, episodes, result) -> dict:
    return {"level": level, "gnb": gnb, "policy": policy, "episodes": episodes,
            "rounds": result.rounds, "mean_reward": result.mean_reward,
            "mean_delay_s": result.mean_delay_s, "p95_delay_s": result.p95_delay_s,
            "feasibility_rate": result.feasibility_rate}


def run_eval(config: RunConfig, checkpoints: dict) -> Path:
    """Greedy and random evaluation of ``{gnb_label: checkpoint_path}``."""
    envs = dict(level_envs(config, topology_for(config)))
    unknown = sorted(set(map(str, checkpoints)) - set(map(str, envs)))
    if unknown:
        raise ConfigError(f"no gNB {', '.join(unknown)} in this topology")
    episodes = config.eval.episodes
    loaded = {gnb: _load_checked(path, envs[gnb]) for gnb, path in checkpoints.items()}
    run = RunDir(resolve_out(config.out))
    rows = []
    for gnb in sorted(loaded, key=str):
        env, params = envs[gnb], loaded[gnb]
        trace_name = _names(config.level, gnb)[2]
        trace = []
        if config.level == "comm":
            def log(out, trace=trace):
                trace.append({"step": len(trace), "action_index": out.action_index,
                              "feasible": out.feasible, "reward": out.reward,
                              "delay_sum_s": float(np.nansum(out.per_device_delay_s))})
            columns = COMM_TRACE_COLUMNS
        else:
            def log(out, env=env, trace=trace):
                if out.done:
                    trace.extend(env.trace)
            columns = COMP_TRACE_COLUMNS
        seed = _eval_seed(config, gnb)
        greedy = evaluate(env, params, episodes, seed, on_outcome=log)
        rows.append(_eval_row(config.level, gnb, "greedy", episodes, greedy))
        rows.append(_eval_row(config.level, gnb, "random", episodes,
                              evaluate_random(env, episodes, seed)))
        run.write_csv(trace_name, columns, trace)
    run.write_csv("eval.csv", EVAL_COLUMNS, rows)
    run.finish("eval", config, {"checkpoints": {str(k): str(v) for k, v in checkpoints.items()}})
    return run.path


def run_oracle(config: RunConfig) -> Path:
    envs = level_envs(config, topology_for(config))
    episodes = config.eval.episodes
    rows = []
    for gnb, env in envs:
        if config.level == "comp":
            env.check_round_cap(COMP_ENUMERATION_CAP)
        seed = _eval_seed(config, gnb)
        rows.append({"level": config.level, "gnb": gnb, "policy": "oracle", "episodes": episodes,
                     "mean_reward": oracle_eval(env, episodes, seed)})
        rows.append({"level": config.level, "gnb": gnb, "policy": "random", "episodes": episodes,
                     "mean_reward": evaluate_random(env, episodes, seed).mean_reward})
    run = RunDir(resolve_out(config.out))
    run.write_csv("oracle.csv", ORACLE_COLUMNS, rows)
    run.finish("oracle", config)
    return run.path


def sweep_scenario(config: RunConfig, device_count: int, size_mb: Optional[float] = None):
    """Scenario for one sweep cell.

    comp: ``device_count`` devices spread round-robin over all gNBs.
    comm: ``device_count`` devices in every cell (only gNB 0 is evaluated).
    Training (``size_mb`` None) draws sizes across the sweep's size range.
    """
    sizes = config.sweep.task_sizes_mb
    lo, hi = (min(sizes), max(sizes)) if size_mb is None else (size_mb, size_mb)
    if config.level == "comp":
        counts = {"device_total": device_count}
    else:
        counts = {"devices_per_gnb": device_count, "device_total": None}
    return config.scenario.replace(task_size_bytes_min=lo * MB, task_size_bytes_max=hi * MB, **counts)


def _sweep_env(config: RunConfig, scenario):
    topology = topology_for(config, scenario)
    if config.level == "comm":
        return comm_envs(config, topology)[0]
    return comp_env(config, topology)


def sweep_cell(config: RunConfig, device_count: int) -> list:
    """Train one agent for ``device_count`` and evaluate it at every task size."""
    env = _sweep_env(config, sweep_scenario(config, device_count))
    agent, _ = train(env, config.agent, child_seed(config.seed, "sweep.train", device_count))
    hyper = config.agent
    rounds = config.sweep.eval_rounds
    episodes = rounds if config.level == "comp" else math.ceil(rounds / hyper.episode_length)
    rows = []
    for size in config.sweep.task_sizes_mb:
        eval_env = _sweep_env(config, sweep_scenario(config, device_count, size))
        result = evaluate(eval_env, agent.main, episodes,
                          child_seed(config.seed, "sweep.eval", device_count))
        rows.append({"level": config.level, "device_count": device_count, "task_size_mb": size,
                     "mean_delay_s": result.mean_delay_s, "p95_delay_s": result.p95_delay_s,
                     "feasibility_rate": result.feasibility_rate})
    return rows


def _sweep_cell_job(args):
    config_dict, device_count = args
    return sweep_cell(RunConfig.from_dict(config_dict), device_count)


def run_sweep(config: RunConfig, jobs: int = 1, chart: bool = False) -> Path:
    counts = sorted(set(config.sweep.device_counts))
    for d in counts:  # surface contract errors before any training
        _sweep_env(config, sweep_scenario(config, d))
    if jobs > 1 and len(counts) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_sweep_cell_job, [(config.to_dict(), d) for d in counts]))
    else:
        cells = [sweep_cell(config, d) for d in counts]
    rows = sorted((r for cell in cells for r in cell),
                  key=lambda r: (r["task_size_mb"], r["device_count"]))
    run = RunDir(resolve_out(config.out))
    csv_path = run.write_csv("delay.csv", DELAY_COLUMNS, rows)
    if chart:
        render_chart(csv_path, run.path / "delay.svg")
        run.files.append("delay.svg")
    run.finish("sweep", config)
    return run.path


def read_delay_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{**r, "device_count": int(r["device_count"]), "task_size_mb": float(r["task_size_mb"]),
                 "mean_delay_s": float(r["mean_delay_s"])} for r in csv.DictReader(fh)]


def render_chart(csv_path, svg_path) -> None:
    """Line chart of mean delay against device count, one line per task size."""
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("charts need matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "delay-chart"  # stable element ids
    import matplotlib.pyplot as plt

    rows = read_delay_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for size in sorted({r["task_size_mb"] for r in rows}):
        pts = sorted((r["device_count"], r["mean_delay_s"]) for r in rows if r["task_size_mb"] == size)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{size:g} MB")
    ax.set_xlabel("devices")
    ax.set_ylabel("mean delay [s]")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise RunIOError(f"cannot write {svg_path}: {exc}") from exc
    finally:
        plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oran-slicing", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config; unknown keys are rejected")
        p.add_argument("--level", choices=LEVELS)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=f"output directory (relative paths go under ${OUTPUT_ROOT_ENV})")
        p.add_argument("--episodes", type=int, help="override training episodes of the level")
        return p

    common(sub.add_parser("train", help="train the level's agent(s)"))
    p = common(sub.add_parser("eval", help="greedy and random evaluation of checkpoint(s)"))
    p.add_argument("--checkpoint", action="append", required=True, metavar="[GNB=]PATH",
                   help="checkpoint file; comm checkpoints may be prefixed by their gNB id")
    p.add_argument("--eval-episodes", type=int)
    p = common(sub.add_parser("oracle", help="exhaustive and random reference rewards"))
    p.add_argument("--eval-episodes", type=int)
    p = common(sub.add_parser("sweep", help="mean delay over device counts and task sizes"))
    p.add_argument("--devices", type=int, nargs="+")
    p.add_argument("--sizes", type=float, nargs="+", metavar="MB")
    p.add_argument("--rounds", type=int, help="evaluation rounds per cell")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--chart", action="store_true", help="also render delay.svg (needs matplotlib)")
    return parser


def config_from_args(args) -> RunConfig:
    data = load_config(args.config)
    config = RunConfig.from_dict(data)
    changes = {k: getattr(args, k) for k in ("level", "seed", "out") if getattr(args, k) is not None}
    if changes:
        config = dataclasses.replace(config, **changes)
    if args.episodes is not None:
        field = "comm_agent" if config.level == "comm" else "comp_agent"
        config = dataclasses.replace(config, **{field: getattr(config, field).replace(episodes=args.episodes)})
    if getattr(args, "eval_episodes", None) is not None:
        config = dataclasses.replace(config, eval=EvalSettings(args.eval_episodes, config.eval.seed_offset))
    if args.command == "sweep":
        s = config.sweep
        config = dataclasses.replace(config, sweep=SweepSettings(
            tuple(args.devices) if args.devices else s.device_counts,
            tuple(args.sizes) if args.sizes else s.task_sizes_mb,
            args.rounds if args.rounds is not None else s.eval_rounds))
    return config.validate()


def parse_checkpoints(specs, level: str) -> dict:
    out = {}
    for spec in specs:
        gnb, sep, path = spec.partition("=")
        if not sep:
            gnb, path = "0", spec
        if level == "comp":
            out[""] = path
            continue
        try:
            out[int(gnb)] = path
        except ValueError as exc:
            raise ConfigError(f"bad gNB id in --checkpoint {spec!r}") from exc
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "train":
            path = run_train(config)
        elif args.command == "eval":
            path = run_eval(config, parse_checkpoints(args.checkpoint, config.level))
        elif args.command == "oracle":
            path = run_oracle(config)
        else:
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            path = run_sweep(config, jobs=args.jobs, chart=args.chart)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunIOError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
