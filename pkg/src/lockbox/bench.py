"""Experiment harness: scale sweep, dependency study, kinematic demo and the
DQN pipeline.  Every experiment writes per-trial CSVs (the source of truth),
a summary CSV and SVG plots.

Seeding: trial ``t`` of cell ``c`` (one cell per config x scale, shared by
all variants so they see the same relabelled lockboxes) draws from
``np.random.default_rng(np.random.SeedSequence([seed, c, t]))``.  The label
permutation is drawn first, then a 31-bit solver seed.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention import FEATURE_NAMES
from .core import LockboxError, LockboxSpec, min_remaining_steps, randomize_labels, reference_config, restrict, validate
from .dqn import DQNConfig, TrainLog, dqn_solve, dqn_train, label_randomizer, load_net, save_net
from .planners import KinematicEnv, SolverConfig, SymbolicEnv, heuristic_solve
from .sim import SimParams, write_trace_csv

CSV_SCHEMA_VERSION = 1
OUT_ENV = "LOCKBOX_OUT"
DEFAULT_OUT = "results"

BASE = "base"
ATTENTION = "base+attention"
DQN = "dqn"
VARIANTS = (BASE, ATTENTION, DQN)

TRIAL_COLUMNS = (
    "schema", "experiment", "config", "scale", "variant", "trial", "solved", "steps", "min_steps",
    *(f"w_{n}" for n in FEATURE_NAMES),
    *(f"mw_{n}" for n in FEATURE_NAMES),
)
SUMMARY_COLUMNS = (
    "schema", "experiment", "config", "scale", "variant", "trials", "solved", "success_rate",
    "mean_steps", "p25_steps", "p50_steps", "p75_steps", "max_steps",
)


class ConfigError(ValueError):
    """Bad experiment config, unknown lockbox or unusable output directory."""


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass
class ExperimentConfig:
    experiment: str
    configs: list = field(default_factory=lambda: ["sim-7-ID1"])
    scales: list = field(default_factory=lambda: [4, 5, 6, 7])
    variants: list = field(default_factory=lambda: [BASE, ATTENTION])
    trials: int = 1000
    max_steps: int = 1000
    seed: int = 0
    out: str | None = None
    jobs: int = 1
    dqn: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")
        if not self.configs or not self.scales:
            raise ConfigError("need at least one config and one scale")

    def out_dir(self) -> Path:
        return Path(self.out) if self.out else default_out() / self.experiment


def load_experiment(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_lockbox(name: str) -> LockboxSpec:
    try:
        spec = reference_config(name)
    except (LockboxError, OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load lockbox {name!r}: {exc}") from exc
    problems = validate(spec)
    if problems:
        raise ConfigError(f"{name}: " + "; ".join(problems))
    return spec


def scaled(spec: LockboxSpec, scale: int) -> LockboxSpec:
    if not 2 <= scale <= spec.n:
        raise ConfigError(f"scale {scale} outside 2..{spec.n} for {spec.name}")
    return spec if scale == spec.n else restrict(spec, scale)


def trial_rng(seed: int, cell: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(cell), int(trial)]))


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


# --------------------------------------------------------------------------
# single trials


def _weights_cells(w) -> list[str]:
    if w is None:
        return [""] * len(FEATURE_NAMES)
    return [f"{float(x):.9f}" for x in w]


def run_symbolic_trial(spec: LockboxSpec, variant: str, seed: int, cell: int, trial: int, max_steps: int,
                       net=None) -> dict:
    rng = trial_rng(seed, cell, trial)
    s = randomize_labels(spec, rng)
    solver_seed = int(rng.integers(2**31))
    t0 = time.perf_counter()
    if variant == DQN:
        result = dqn_solve(net, s, max_steps)
    else:
        cfg = SolverConfig(max_steps=max_steps, use_attention=variant == ATTENTION, seed=solver_seed)
        result = heuristic_solve(SymbolicEnv(s), cfg)
    return {
        "trial": trial,
        "solved": result.solved,
        "steps": result.steps,
        "min_steps": min_remaining_steps(s, s.initial_state()),
        "final_weights": result.final_weights,
        "mean_weights": result.mean_weights,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
    }


def _trial_job(args) -> dict:
    return run_symbolic_trial(*args)


def run_cell(spec: LockboxSpec, variant: str, seed: int, cell: int, trials: int, max_steps: int,
             jobs: int = 1, net=None) -> list[dict]:
    """All trials of one cell, in trial order whatever the worker count."""
    args = [(spec, variant, seed, cell, t, max_steps, net) for t in range(trials)]
    if jobs <= 1:
        return [_trial_job(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_job, args, chunksize=max(1, trials // (4 * jobs))))


# --------------------------------------------------------------------------
# tables and plots


def trial_row(experiment: str, config: str, scale: int, variant: str, r: dict) -> list:
    return [
        CSV_SCHEMA_VERSION, experiment, config, scale, variant, r["trial"], int(r["solved"]), r["steps"],
        "" if r["min_steps"] is None else r["min_steps"],
        *_weights_cells(r.get("final_weights")), *_weights_cells(r.get("mean_weights")),
    ]


def summarize(experiment: str, config: str, scale: int, variant: str, results: list[dict]) -> dict:
    solved = [r["steps"] for r in results if r["solved"]]
    q = np.percentile(solved, [25, 50, 75]) if solved else [np.nan] * 3
    return {
        "schema": CSV_SCHEMA_VERSION, "experiment": experiment, "config": config, "scale": scale,
        "variant": variant, "trials": len(results), "solved": len(solved),
        "success_rate": len(solved) / len(results),
        "mean_steps": float(np.mean(solved)) if solved else float("nan"),
        "p25_steps": float(q[0]), "p50_steps": float(q[1]), "p75_steps": float(q[2]),
        "max_steps": max(solved) if solved else "",
    }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            values = [row[c] for c in columns] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in values])


def write_timings(path: Path, cells: list[tuple[str, int, str, list[dict]]]) -> None:
    rows = [[cfg, scale, variant, r["trial"], f"{r['wall_time_ms']:.3f}"]
            for cfg, scale, variant, results in cells for r in results]
    write_csv(path, ("config", "scale", "variant", "trial", "wall_time_ms"), rows)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lockbox"
    return plt


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def plot_steps(path: Path, cells: list[tuple[str, int, str, list[dict]]]) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    labels, data = [], []
    for cfg, scale, variant, results in cells:
        labels.append(f"{scale}\n{variant}")
        data.append([r["steps"] for r in results if r["solved"]] or [0])
    ax.boxplot(data, showfliers=False)
    ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=7)
    ax.set_ylabel("manipulation steps (solved trials)")
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_weights(path: Path, means: dict[str, np.ndarray]) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(FEATURE_NAMES))
    width = 0.8 / max(1, len(means))
    for i, (name, w) in enumerate(means.items()):
        ax.bar(x + i * width, w, width, label=name)
    ax.axhline(0, color="k", lw=0.5)
    ax.set_xticks(x + 0.4 - width / 2, FEATURE_NAMES)
    ax.set_ylabel("mean attention weight")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_force_trace(path: Path, traj, params: SimParams) -> None:
    plt = _pyplot()
    f = np.array(traj.wrenches)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, name in zip(range(3, 6), ("fx", "fy", "fz")):
        ax.plot(traj.times, f[:, k], label=name, lw=0.8)
    ax.axhline(params.f_max[3], color="k", ls="--", lw=0.5)
    ax.axhline(-params.f_max[3], color="k", ls="--", lw=0.5)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("force [N]")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


# --------------------------------------------------------------------------
# experiments


@dataclass
class Report:
    experiment: str
    out: Path
    summary: list[dict]
    checks: dict[str, bool] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _run_matrix(cfg: ExperimentConfig, nets: dict[int, object] | None = None):
    cells = []
    cell_index = 0
    for config in cfg.configs:
        spec = load_lockbox(config)
        for scale in cfg.scales:
            sub = scaled(spec, scale)
            for variant in cfg.variants:
                net = None
                if variant == DQN:
                    if not nets or scale not in nets:
                        raise ConfigError(f"no trained network for scale {scale}")
                    net = nets[scale]
                results = run_cell(sub, variant, cfg.seed, cell_index, cfg.trials, cfg.max_steps, cfg.jobs, net)
                cells.append((config, scale, variant, results))
            cell_index += 1
    return cells


def _write_matrix(cfg: ExperimentConfig, out: Path, cells) -> list[dict]:
    rows = [trial_row(cfg.experiment, c, s, v, r) for c, s, v, results in cells for r in results]
    write_csv(out / "trials.csv", TRIAL_COLUMNS, rows)
    summary = [summarize(cfg.experiment, c, s, v, results) for c, s, v, results in cells]
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    write_timings(out / "timings.csv", cells)
    return summary


def _cell(summary, config, scale, variant) -> dict | None:
    for row in summary:
        if (row["config"], row["scale"], row["variant"]) == (config, scale, variant):
            return row
    return None


def run_scale_sweep(cfg: ExperimentConfig) -> Report:
    out = _prepare_out(cfg.out_dir())
    cells = _run_matrix(cfg)
    summary = _write_matrix(cfg, out, cells)
    plot_steps(out / "steps.svg", cells)
    checks = {}
    for row in summary:
        if row["variant"] in (BASE, ATTENTION):
            checks[f"{row['config']} scale {row['scale']} {row['variant']} all solved"] = row["solved"] == row["trials"]
    for config in cfg.configs:
        for scale in cfg.scales:
            b, a = _cell(summary, config, scale, BASE), _cell(summary, config, scale, ATTENTION)
            if b and a:
                checks[f"{config} scale {scale} attention mean <= base mean"] = a["mean_steps"] <= b["mean_steps"]
    return Report(cfg.experiment, out, summary, checks)


def run_dependency_study(cfg: ExperimentConfig) -> Report:
    """Base vs attention on each config at full scale, plus the mean attention
    weights; the first config is expected to favour near joints and the
    others far ones."""
    out = _prepare_out(cfg.out_dir())
    cells = _run_matrix(cfg)
    summary = _write_matrix(cfg, out, cells)
    final, mean = {}, {}
    weight_rows = []
    for config, scale, variant, results in cells:
        if variant != ATTENTION:
            continue
        final[config] = np.mean([r["final_weights"] for r in results], axis=0)
        mean[config] = np.mean([r["mean_weights"] for r in results], axis=0)
        for stat, w in (("final", final[config]), ("trial_mean", mean[config])):
            weight_rows.append([config, scale, stat, *(f"{x:.6f}" for x in w)])
    write_csv(out / "weights.csv", ("config", "scale", "statistic", *FEATURE_NAMES), weight_rows)
    if final:
        plot_weights(out / "weights.svg", final)
    checks, info = {}, {}
    for i, config in enumerate(cfg.configs):
        scale = cfg.scales[-1]
        b, a = _cell(summary, config, scale, BASE), _cell(summary, config, scale, ATTENTION)
        if b and a:
            gain = 1.0 - a["mean_steps"] / b["mean_steps"]
            info[f"{config} improvement"] = gain
            checks[f"{config} attention mean < base mean"] = a["mean_steps"] < b["mean_steps"]
        if config in final:
            sign = -1 if i == 0 else 1
            dist = final[config][:3]
            info[f"{config} final distance weights"] = dist.tolist()
            info[f"{config} trial-mean distance weights"] = mean[config][:3].tolist()
            checks[f"{config} distance weights {'negative' if sign < 0 else 'positive'}"] = bool(
                np.all(sign * dist > 0))
    return Report(cfg.experiment, out, summary, checks, info)


def revisits_skip_wiggle(attempt_log, probe_log) -> bool:
    """Once a joint has been operated, later attempts must reuse its model."""
    known = set()
    for (j, moved), (pj, probes, reused) in zip(attempt_log, probe_log):
        if pj != j:
            raise ValueError("attempt and probe logs are out of step")
        if j in known and (probes != 0 or not reused):
            return False
        if moved:
            known.add(j)
    return True


def run_integrated_demo(cfg: ExperimentConfig) -> Report:
    out = _prepare_out(cfg.out_dir())
    (out / "traces").mkdir(exist_ok=True)
    spec = scaled(load_lockbox(cfg.configs[0]), cfg.scales[0])
    params = SimParams()
    trial_rows, attempt_rows, summary_rows = [], [], []
    all_reuse, max_ratio = True, 0.0
    example = None
    for t in range(cfg.trials):
        rng = trial_rng(cfg.seed, 0, t)
        s = randomize_labels(spec, rng)
        solver_seed = int(rng.integers(2**31))
        env = KinematicEnv(s, params, rng=rng, strict=True)
        result = heuristic_solve(env, SolverConfig(max_steps=cfg.max_steps, use_attention=True, seed=solver_seed))
        reuse = revisits_skip_wiggle(result.attempt_log, env.probe_log)
        all_reuse &= reuse
        for step, ((j, moved), (_, probes, reused), (_, desired, traj)) in enumerate(
                zip(result.attempt_log, env.probe_log, env.traces), start=1):
            bound = params.overshoot_bound(env.mechanisms[j].stiffness)
            ratio = float(np.max(np.abs(np.array(traj.wrenches)) / bound)) if len(traj) else 0.0
            max_ratio = max(max_ratio, ratio)
            solved_after = result.solved and step == len(result.attempt_log)
            attempt_rows.append([t, step, j, int(moved), int(solved_after), probes, int(reused), f"{ratio:.6f}"])
            write_trace_csv(traj, out / "traces" / f"trial{t:03d}_step{step:03d}_{j}.csv")
            if example is None and moved and not reused:
                example = traj
        kinds = {j: e.kind_code for j, e in sorted(env.cache.items())}
        trial_rows.append([t, int(result.solved), result.steps, int(reuse), env.mismatches,
                           " ".join(f"{j}:{k}" for j, k in kinds.items())])
    write_csv(out / "demo_trials.csv", ("trial", "solved", "steps", "cache_reuse_ok", "mismatches", "joint_types"),
              trial_rows)
    write_csv(out / "attempts.csv",
              ("trial_id", "step", "joint", "moved", "solved_after", "wiggle_probes", "reused", "max_wrench_ratio"),
              attempt_rows)
    if example is not None:
        plot_force_trace(out / "force.svg", example, params)
    solved = sum(r[1] for r in trial_rows)
    summary_rows.append({"schema": CSV_SCHEMA_VERSION, "experiment": cfg.experiment, "config": cfg.configs[0],
                         "scale": spec.n, "variant": ATTENTION, "trials": cfg.trials, "solved": solved,
                         "success_rate": solved / cfg.trials,
                         "mean_steps": float(np.mean([r[2] for r in trial_rows if r[1]])) if solved else float("nan"),
                         "p25_steps": float("nan"), "p50_steps": float("nan"), "p75_steps": float("nan"),
                         "max_steps": max((r[2] for r in trial_rows if r[1]), default="")})
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary_rows)
    checks = {
        "solved in >= 90% of runs": solved >= 0.9 * cfg.trials,
        "revisited joints skip the wiggle": all_reuse,
        "wrench within gate bound": max_ratio <= 1.0 + 1e-9,
    }
    return Report(cfg.experiment, out, summary_rows, checks, {"max_wrench_ratio": max_ratio})


def run_dqn_pipeline(cfg: ExperimentConfig) -> Report:
    """Train one network per scale, then evaluate every variant on the same
    relabelled lockboxes."""
    out = _prepare_out(cfg.out_dir())
    nets_dir = out / "nets"
    nets_dir.mkdir(exist_ok=True)
    try:
        dcfg = DQNConfig(**{**cfg.dqn, "seed": cfg.dqn.get("seed", cfg.seed)})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad dqn settings: {exc}") from exc
    nets, train_rows = {}, []
    base_spec = load_lockbox(cfg.configs[0])
    for scale in cfg.scales:
        sub = scaled(base_spec, scale)
        path = nets_dir / f"dqn-{scale}.json"
        log = TrainLog()
        t0 = time.perf_counter()
        scale_cfg = DQNConfig(**{**asdict(dcfg), "seed": dcfg.seed * 1000 + scale})
        net = dqn_train(scale_cfg, scale, label_randomizer(sub), log)
        save_net(net, path, {"scale": scale, "config": cfg.configs[0], **asdict(scale_cfg)})
        nets[scale] = load_net(path)
        tail = log.episode_solved[-max(1, len(log.episode_solved) // 10):]
        train_rows.append([scale, scale_cfg.episodes, f"{np.mean(tail):.6f}", f"{time.perf_counter() - t0:.1f}"])
    write_csv(out / "training.csv", ("scale", "episodes", "train_success_last10pct", "train_seconds"), train_rows)
    cells = _run_matrix(cfg, nets)
    summary = _write_matrix(cfg, out, cells)
    plot_steps(out / "steps.svg", cells)
    config = cfg.configs[0]
    rates = [(_cell(summary, config, s, DQN) or {}).get("success_rate") for s in cfg.scales]
    checks = {}
    if all(r is not None for r in rates):
        checks["dqn success non-increasing with scale"] = all(a >= b for a, b in zip(rates, rates[1:]))
        checks[f"dqn success at scale {cfg.scales[-1]} < 20%"] = rates[-1] < 0.2
    base_last = _cell(summary, config, cfg.scales[-1], BASE)
    if base_last:
        checks[f"base solves every trial at scale {cfg.scales[-1]}"] = base_last["success_rate"] == 1.0
    return Report(cfg.experiment, out, summary, checks, {"dqn_success": dict(zip(cfg.scales, rates))})


RUNNERS = {
    "sweep": run_scale_sweep,
    "deps": run_dependency_study,
    "demo": run_integrated_demo,
    "dqn": run_dqn_pipeline,
}

DEFAULT_EXPERIMENTS = {
    "sweep": ExperimentConfig("sweep"),
    "deps": ExperimentConfig("deps", configs=["sim-7-ID1", "sim-7-ID2"], scales=[7]),
    "demo": ExperimentConfig("demo", configs=["physical-5"], scales=[5], variants=[ATTENTION], trials=10,
                             max_steps=100),
    "dqn": ExperimentConfig("dqn", variants=[BASE, DQN]),
}
