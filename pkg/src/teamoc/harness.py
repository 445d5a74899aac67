"""Experiment configuration, runs, sweeps, Monte-Carlo oracle and curve data."""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import teamgrid
from .core import ModelEnv, OptionPool, load_model, logistic, softmax, clamp_beta
from .doc import LearnerConfig, make_learner

ALGORITHMS = ("doc", "actor-critic-centralized", "actor-critic-decentralized", "random")
METRIC_FIELDS = ("seed", "episode", "return", "steps", "broadcast_rate", "option_switches", "wall_time_ms")
SWEEP_AXES = ("broadcast_penalty", "num_options", "num_agents")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str = "switch"
    num_agents: int = 2
    num_goals: int | None = None
    size: int | None = None
    env_max_steps: int | None = None
    layout_seed: int = 0
    actions: list | None = None          # subset of grid actions offered to the learner
    model_path: str | None = None        # tabular model file when env == "model"
    algorithm: str = "doc"
    broadcast_mode: str = "always"
    seeds: list = field(default_factory=lambda: [0])
    episodes: int = 1000
    out_dir: str = "runs/out"
    aggregate_window: int = 100
    final_fraction: float = 0.1
    record_wall_time: bool = False
    workers: int = 1                     # seeds run in parallel processes when > 1
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def validate(self) -> None:
        bad = []
        if self.env not in ("fourrooms", "switch", "dualswitch", "model"):
            bad.append(f"env: unknown environment {self.env!r}")
        if self.env == "model" and not self.model_path:
            bad.append("model_path: required when env is 'model'")
        if self.algorithm not in ALGORITHMS:
            bad.append(f"algorithm: must be one of {ALGORITHMS}")
        if self.broadcast_mode not in ("always", "intermittent", "never"):
            bad.append("broadcast_mode: must be always, intermittent or never")
        if not self.seeds:
            bad.append("seeds: must be nonempty")
        if self.episodes < 1:
            bad.append("episodes: must be >= 1")
        if self.aggregate_window < 1:
            bad.append("aggregate_window: must be >= 1")
        if self.workers < 1:
            bad.append("workers: must be >= 1")
        if not 0 < self.final_fraction <= 1:
            bad.append("final_fraction: must lie in (0, 1]")
        if bad:
            raise ConfigError("invalid config fields:\n  " + "\n  ".join(bad))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    lk = {f.name for f in fields(LearnerConfig)}
    ld = d.pop("learner", {}) or {}
    extra = set(ld) - lk
    if extra:
        raise ConfigError(f"unknown learner fields: {sorted(extra)}")
    return ExperimentConfig(learner=LearnerConfig(**ld), **d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")


def build_env(cfg: ExperimentConfig):
    if cfg.env == "model":
        model = load_model(cfg.model_path)
        return ModelEnv(model, max_steps=cfg.learner.max_steps)
    spec = teamgrid.make_env(cfg.env, cfg.num_agents, cfg.num_goals, cfg.size,
                             cfg.env_max_steps or cfg.learner.max_steps, cfg.layout_seed)
    return teamgrid.GridLearningEnv(spec, cfg.actions)


# ---------------------------------------------------------------------------
# metrics files


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(METRIC_FIELDS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in METRIC_FIELDS) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        out = []
        for r in rd:
            out.append({"seed": int(r["seed"]), "episode": int(r["episode"]), "return": float(r["return"]),
                        "steps": int(r["steps"]), "broadcast_rate": float(r["broadcast_rate"]),
                        "option_switches": int(r["option_switches"]),
                        "wall_time_ms": float(r["wall_time_ms"])})
    return out


def _column(rows, name):
    return np.array([r[name] for r in rows], dtype=float)


def aggregate(per_seed: dict, window: int) -> list[dict]:
    """Mean and standard deviation across seeds of per-window means."""
    lengths = {len(v) for v in per_seed.values()}
    if len(lengths) != 1:
        raise ConfigError("seed runs have different episode counts")
    n = lengths.pop()
    out = []
    for lo in range(0, n, window):
        hi = min(lo + window, n)
        rets = [float(np.mean(_column(rows[lo:hi], "return"))) for rows in per_seed.values()]
        brs = [float(np.mean(_column(rows[lo:hi], "broadcast_rate"))) for rows in per_seed.values()]
        steps = [float(np.mean(_column(rows[lo:hi], "steps"))) for rows in per_seed.values()]
        out.append({"episode_start": lo, "episode_end": hi - 1,
                    "mean_return": float(np.mean(rets)), "std_return": float(np.std(rets)),
                    "mean_broadcast_rate": float(np.mean(brs)), "std_broadcast_rate": float(np.std(brs)),
                    "mean_steps": float(np.mean(steps))})
    return out


def write_rows(rows: Sequence[dict], path) -> None:
    if not rows:
        raise ConfigError("nothing to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in keys) + "\n")


def final_window(rows: Sequence[dict], fraction: float = 0.1) -> dict:
    """Means over the last ``fraction`` of episodes of one seed."""
    n = len(rows)
    k = max(1, int(math.ceil(n * fraction)))
    tail = rows[n - k:]
    return {"return": float(np.mean(_column(tail, "return"))),
            "broadcast_rate": float(np.mean(_column(tail, "broadcast_rate"))),
            "steps": float(np.mean(_column(tail, "steps")))}


# ---------------------------------------------------------------------------
# runs


def run_seed(cfg: ExperimentConfig, seed: int, env=None):
    env = env if env is not None else build_env(cfg)
    learner = make_learner(env, cfg.learner, seed, cfg.algorithm, cfg.broadcast_mode)
    rows = []
    for _ in range(cfg.episodes):
        t0 = time.perf_counter()
        m = learner.run_episode()
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_wall_time else 0.0
        rows.append({"seed": seed, "episode": m.episode, "return": float(m.ret), "steps": m.steps,
                     "broadcast_rate": float(m.broadcast_rate), "option_switches": m.option_switches,
                     "wall_time_ms": float(round(wall, 3))})
    return rows, learner


def _seed_job(cfg_dict: dict, seed: int) -> list[dict]:
    return run_seed(config_from_dict(cfg_dict), seed)[0]


def run(cfg: ExperimentConfig) -> dict:
    """Train every seed and write per-seed metrics, the aggregate and a summary."""
    cfg.validate()
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError(f"output directory {out} is not writable: {e}") from e
    per_seed = {}
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_seed_job, [config_to_dict(cfg)] * len(cfg.seeds), cfg.seeds))
    else:
        env = build_env(cfg)
        results = [run_seed(cfg, seed, env)[0] for seed in cfg.seeds]
    # join barrier: every seed file is written before aggregation
    for seed, rows in zip(cfg.seeds, results):
        write_metrics(rows, out / f"metrics_seed{seed}.csv")
        per_seed[seed] = rows
    agg = aggregate(per_seed, cfg.aggregate_window)
    write_rows(agg, out / "aggregate.csv")
    finals = {s: final_window(r, cfg.final_fraction) for s, r in per_seed.items()}
    summary = {
        "final_return_per_seed": {str(s): f["return"] for s, f in finals.items()},
        "final_broadcast_rate_per_seed": {str(s): f["broadcast_rate"] for s, f in finals.items()},
        "final_return_mean": float(np.mean([f["return"] for f in finals.values()])),
        "final_return_std": float(np.std([f["return"] for f in finals.values()])),
        "final_broadcast_rate_mean": float(np.mean([f["broadcast_rate"] for f in finals.values()])),
    }
    save_config(cfg, out / "config.json")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"per_seed": per_seed, "aggregate": agg, "summary": summary}


def with_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    c = copy.deepcopy(cfg)
    if axis == "broadcast_penalty":
        c.learner.broadcast_penalty = float(value)
    elif axis == "num_options":
        c.learner.num_options = int(value)
    elif axis == "num_agents":
        c.num_agents = int(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return c


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence) -> list[dict]:
    """Run the base config once per value; writes a final-window comparison table."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    base = Path(cfg.out_dir)
    table = []
    for v in values:
        c = with_axis(cfg, axis, v)
        c.out_dir = str(base / f"{axis}={v}")
        res = run(c)
        s = res["summary"]
        table.append({"axis": axis, "value": v, "final_return_mean": s["final_return_mean"],
                      "final_return_std": s["final_return_std"],
                      "final_broadcast_rate_mean": s["final_broadcast_rate_mean"],
                      "seeds": len(c.seeds)})
    base.mkdir(parents=True, exist_ok=True)
    write_rows(table, base / f"sweep_{axis}.csv")
    return table


# ---------------------------------------------------------------------------
# Monte-Carlo oracle (deliberately self-contained: plain simulation only)


def oracle_evaluate(model, pool: OptionPool, policy, episodes: int, rng: np.random.Generator,
                    mode: str = "always", initial_option: int | None = None, horizon: int | None = None,
                    truncation_tol: float = 1e-12, terminal_states=(), q_table=None):
    """Discounted return of an option policy by direct simulation.

    ``policy`` maps a joint state index to the joint option started there
    after a termination (the coordinator sees the state under cheap talk).
    The first option is ``initial_option`` if given, else policy[s0].
    With ``q_table`` (S, joint options) a termination instead re-picks only
    the terminated agents' components, greedily on q_table with the others
    frozen.  Returns (mean, standard error).
    """
    P = np.asarray(model.P)
    R = np.asarray(model.R)
    S = P.shape[0]
    J = model.num_agents
    gamma = model.discount
    st = model.state_table
    sizes = pool.sizes
    policy = np.asarray(policy, dtype=int)
    if horizon is None:
        horizon = int(math.ceil(math.log(truncation_tol) / math.log(gamma)))
    terminal = np.zeros(S, dtype=bool)
    terminal[list(terminal_states)] = True
    # per-agent parameter tables
    act_p = [softmax(pool.theta[j]) for j in range(J)]                      # (K, S^j, A^j)
    br_p = [logistic(pool.eps[j]) for j in range(J)]
    term_p = [clamp_beta(logistic(pool.phi[j])) for j in range(J)]
    cdfP = np.cumsum(P, axis=2)
    all_comps = np.stack(np.unravel_index(np.arange(pool.num_joint), sizes), axis=1)
    if q_table is not None:
        q_table = np.asarray(q_table, dtype=float)
    init_cdf = np.cumsum(model.initial)

    n = episodes
    s = np.minimum(np.searchsorted(init_cdf, rng.random(n) * init_cdf[-1], side="right"), S - 1)
    comps = np.stack(np.unravel_index(policy[s] if initial_option is None
                                      else np.full(n, initial_option), sizes), axis=1)
    total = np.zeros(n)
    disc = np.ones(n)
    alive = ~terminal[s]
    for _ in range(horizon):
        if not alive.any():
            break
        a_comp = np.empty((n, J), dtype=int)
        for j in range(J):
            pj = act_p[j][comps[:, j], st[s, j + 1]]                           # (n, A^j)
            c = np.cumsum(pj, axis=1)
            a_comp[:, j] = np.minimum((c < rng.random(n)[:, None] * c[:, -1:]).sum(axis=1), pj.shape[1] - 1)
        a = np.ravel_multi_index(tuple(a_comp.T), model.agent_actions)
        c = cdfP[s, a]
        s2 = np.minimum((c < rng.random(n)[:, None] * c[:, -1:]).sum(axis=1), S - 1)
        r = R[s, a, s2]
        if mode != "never" and model.broadcast_penalty != 0.0:
            for j in range(J):
                if mode == "always":
                    br = np.ones(n)
                else:
                    br = rng.random(n) < br_p[j][comps[:, j], st[s2, j + 1]]
                r = r + model.broadcast_penalty * br
        total += np.where(alive, disc * r, 0.0)
        disc *= gamma
        term = np.zeros((n, J), dtype=bool)
        for j in range(J):
            term[:, j] = rng.random(n) < term_p[j][comps[:, j], st[s2, j + 1]]
        any_term = term.any(axis=1) & alive
        if any_term.any():
            if q_table is None:
                comps[any_term] = np.stack(np.unravel_index(policy[s2[any_term]], sizes), axis=1)
            else:
                t, c = term[any_term], comps[any_term]
                keep = np.all(t[:, None, :] | (all_comps[None, :, :] == c[:, None, :]), axis=2)
                vals = np.where(keep, q_table[s2[any_term]], -np.inf)
                comps[any_term] = all_comps[np.argmax(vals, axis=1)]
        s = s2
        alive &= ~terminal[s]
    mean = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


# ---------------------------------------------------------------------------
# curve data


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` most recent points."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def emit_plotdata(metric_files: Sequence, window: int, out_path, column: str = "return") -> list[dict]:
    """Smoothed per-episode curve with the mean and a one-SD band across seeds.

    Output columns: episode, mean, std, lower, upper, seeds.
    """
    series = []
    episodes = None
    for p in metric_files:
        rows = read_metrics(p)
        ep = [r["episode"] for r in rows]
        if episodes is None:
            episodes = ep
        elif ep != episodes:
            raise ConfigError(f"{p} covers different episodes than {metric_files[0]}")
        series.append(moving_average(_column(rows, column), window))
    if not series:
        raise ConfigError("no metrics files given")
    M = np.vstack(series)
    mean, std = M.mean(axis=0), M.std(axis=0)
    out = [{"episode": e, "mean": float(m), "std": float(s), "lower": float(m - s), "upper": float(m + s),
            "seeds": len(series)} for e, m, s in zip(episodes, mean, std)]
    write_rows(out, out_path)
    return out
