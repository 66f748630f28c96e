"""Training loop, metrics logging, aggregation across seeds, and plotting.

One ``run`` drives a single (config, seed) training session and leaves a
self-describing directory behind:

- ``config.resolved``  resolved configuration echo
- ``metrics.csv``  one row per evaluation point (deterministic content:
  rerunning the same config and seed reproduces it byte for byte)
- ``timing.csv``   wall-clock progress, kept out of metrics.csv on purpose
- ``summary.json`` seed, counters, and end state
- ``agent.bin`` / ``model.bin`` final checkpoints

All randomness derives from one root seed fanned out into independent
named streams (environment seeding, action noise, update batches, network
init, model ensemble, evaluation), so runs replay exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, config_lines, load_config, validate
from .envs import evaluate_policy, make_env
from .errors import NumericalError
from .explore import ActionSelector, SelectorConfig
from .mve import MveConfig, make_target_fn
from .replay import ReplayBuffer, Transition
from .sac import SacAgent
from .worldmodel import WorldModelEnsemble

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "mean_return", "return_variance", "critic_loss", "actor_loss",
                  "temperature_loss", "alpha", "model_loss", "mean_chosen_u",
                  "mean_dist_to_mean", "horizon")


def _fmt(value) -> str:
    """Canonical CSV cell: shortest round-trip text for floats."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _mean_or_nan(values) -> float:
    return float(np.mean(values)) if values else math.nan


def _draw_seed(rng) -> int:
    return int(rng.integers(2 ** 63))


@dataclass
class RunResult:
    run_dir: Path
    config: RunConfig
    seed: int
    agent: SacAgent
    ensemble: WorldModelEnsemble | None
    buffer: ReplayBuffer
    counters: dict
    metrics: list[dict] = field(default_factory=list)


def run(cfg: RunConfig, seed: int, run_dir, *, env_factory=None, step_callback=None,
        save_buffer=False) -> RunResult:
    """Train one agent for cfg.total_steps environment steps.

    ``env_factory`` substitutes the environment (tests); ``step_callback``
    is invoked as ``callback(step, diag, step_result)`` after every
    environment step.
    """
    validate(cfg)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    factory = env_factory if env_factory is not None else (lambda: make_env(cfg.env))
    env = factory()
    spec = env.spec

    streams = np.random.SeedSequence(seed).spawn(6)
    env_seed_rng = np.random.default_rng(streams[0])
    action_rng = np.random.default_rng(streams[1])
    update_rng = np.random.default_rng(streams[2])
    init_rng = np.random.default_rng(streams[3])
    model_rng = np.random.default_rng(streams[4])
    eval_rng = np.random.default_rng(streams[5])

    buffer = ReplayBuffer(cfg.buffer_capacity, spec.state_dim, spec.action_dim)
    agent = SacAgent(spec.state_dim, spec.action_dim, spec.action_low, spec.action_high,
                     policy_hidden=cfg.policy_hidden, critic_hidden=cfg.critic_hidden,
                     gamma=cfg.gamma, tau=cfg.tau, lr_actor=cfg.lr_actor,
                     lr_critic=cfg.lr_critic, lr_alpha=cfg.lr_alpha,
                     target_entropy=cfg.resolved_target_entropy(spec.action_dim),
                     rng=init_rng)
    ensemble = None
    if cfg.needs_ensemble:
        ensemble = WorldModelEnsemble(
            spec.state_dim, spec.action_dim, buffer.stats,
            n_members=cfg.ensemble_size, hidden=cfg.model_hidden, lr=cfg.lr_model,
            min_ready_transitions=cfg.warmup_transitions,
            include_reward_in_uncertainty=cfg.uncertainty_includes_reward,
            rng=model_rng)
    selector = ActionSelector(
        SelectorConfig(cfg.selector_kind, cfg.n_candidates, cfg.s_samples,
                       cfg.selector_temperature),
        agent.policy, ensemble=ensemble, critics=agent.critics)
    target_fn = make_target_fn(agent, ensemble, MveConfig(cfg.horizon, cfg.gamma)) \
        if cfg.uses_mve else None

    (run_dir / "config.resolved").write_text("\n".join(config_lines(cfg)) + "\n",
                                             encoding="utf-8")
    counters = {"env_steps": 0, "episodes": 0, "update_rounds": 0, "update_skips": 0,
                "model_rounds": 0, "model_skips": 0, "fallback_steps": 0, "evals": 0}
    losses: dict[str, list] = {k: [] for k in
                               ("critic_loss", "actor_loss", "temperature_loss", "model_loss")}
    chosen_us: list[float] = []
    dists: list[float] = []
    metrics_rows: list[dict] = []
    start = time.monotonic()
    result = RunResult(run_dir, cfg, seed, agent, ensemble, buffer, counters, metrics_rows)

    def write_checkpoints():
        agent.save(run_dir / "agent.bin")
        if ensemble is not None:
            ensemble.save(run_dir / "model.bin")
        if save_buffer:
            buffer.save(run_dir / "buffer.bin")

    def write_summary(aborted=False, error=None):
        summary = {"seed": seed, "env": cfg.env, "algo": cfg.algo,
                   "aborted": aborted, "error": error,
                   "alpha": agent.temperature.alpha,
                   "wall_seconds": time.monotonic() - start}
        summary.update(counters)
        (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n",
                                              encoding="utf-8")

    with open(run_dir / "metrics.csv", "w", encoding="utf-8", newline="") as mf, \
         open(run_dir / "timing.csv", "w", encoding="utf-8", newline="") as tf:
        mf.write(",".join(METRIC_COLUMNS) + "\n")
        tf.write("step,wall_seconds\n")

        def evaluate(step):
            mean_ret, ret_var = evaluate_policy(factory(), agent.eval_action,
                                                cfg.eval_episodes, _draw_seed(eval_rng))
            row = {"step": step, "mean_return": mean_ret, "return_variance": ret_var,
                   "critic_loss": _mean_or_nan(losses["critic_loss"]),
                   "actor_loss": _mean_or_nan(losses["actor_loss"]),
                   "temperature_loss": _mean_or_nan(losses["temperature_loss"]),
                   "alpha": agent.temperature.alpha,
                   "model_loss": _mean_or_nan(losses["model_loss"]),
                   "mean_chosen_u": _mean_or_nan(chosen_us),
                   "mean_dist_to_mean": _mean_or_nan(dists),
                   "horizon": cfg.horizon}
            metrics_rows.append(row)
            mf.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS) + "\n")
            mf.flush()
            tf.write(f"{step},{time.monotonic() - start:.3f}\n")
            tf.flush()
            for v in losses.values():
                v.clear()
            chosen_us.clear()
            dists.clear()
            counters["evals"] += 1

        state = env.reset(seed=_draw_seed(env_seed_rng))
        try:
            for step in range(1, cfg.total_steps + 1):
                action, diag = selector.act(state, action_rng)
                if diag.kind_used != cfg.selector_kind:
                    counters["fallback_steps"] += 1
                if not math.isnan(diag.u_chosen):
                    chosen_us.append(diag.u_chosen)
                dists.append(diag.dist_to_mean)
                res = env.step(action)
                buffer.push(Transition(state, action, res.reward, res.next_state, res.terminal))
                state = res.next_state
                counters["env_steps"] = step
                if res.terminal or res.truncated:
                    counters["episodes"] += 1
                    state = env.reset(seed=_draw_seed(env_seed_rng))

                if buffer.size >= cfg.update_start:
                    if ensemble is not None:
                        model_loss = ensemble.train_round(buffer, cfg.model_batch_size)
                        if model_loss is None:
                            counters["model_skips"] += 1
                        else:
                            counters["model_rounds"] += 1
                            losses["model_loss"].append(model_loss)
                    for _ in range(cfg.updates_per_step):
                        batch = buffer.sample(cfg.batch_size, update_rng)
                        round_losses = agent.update(batch, update_rng, target_fn=target_fn)
                        counters["update_rounds"] += 1
                        for key in ("critic_loss", "actor_loss", "temperature_loss"):
                            losses[key].append(round_losses[key])
                else:
                    counters["update_skips"] += cfg.updates_per_step

                if step % cfg.eval_interval == 0 or step == cfg.total_steps:
                    evaluate(step)
                if step_callback is not None:
                    step_callback(step, diag, res)
        except NumericalError as exc:
            log.error("aborting run at step %d: %s", counters["env_steps"], exc)
            write_checkpoints()
            buffer.save(run_dir / "buffer.bin")
            write_summary(aborted=True, error=str(exc))
            raise

    write_checkpoints()
    write_summary()
    return result


def smooth(series, window: int) -> np.ndarray:
    """Trailing moving average; early entries average what exists so far."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if window == 1 or x.size == 0:
        return x.copy()
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(0, idx - window + 1)
    return (csum[idx + 1] - csum[lo]) / (idx - lo + 1)


def read_metrics(run_dir) -> dict[str, np.ndarray]:
    """Columns of a run's metrics.csv as float arrays (step as int)."""
    path = Path(run_dir) / "metrics.csv"
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    out = {name: data[:, i] for i, name in enumerate(header)}
    out["step"] = out["step"].astype(np.int64)
    return out


FINAL_WINDOW = 10


def aggregate(run_dirs, out_dir=None) -> dict:
    """Combine per-seed runs into per-(env, algo) curves and final scores.

    Runs are grouped by the (env, algo) recorded in their config echo; all
    runs in a group must share the same evaluation step grid. Curves carry
    the across-seed mean and population variance of mean_return; the final
    score averages each run's last ``FINAL_WINDOW`` evaluations, then takes
    mean and population standard deviation across seeds.

    With ``out_dir`` set, writes ``aggregate.csv`` and ``final_scores.csv``.
    """
    groups: dict[tuple[str, str], list] = {}
    for rd in run_dirs:
        rd = Path(rd)
        cfg = load_config(rd / "config.resolved")
        with open(rd / "summary.json", "r", encoding="utf-8") as fh:
            summary = json.load(fh)
        groups.setdefault((cfg.env, cfg.algo), []).append((int(summary["seed"]),
                                                           read_metrics(rd)))
    result = {}
    for key in sorted(groups):
        runs = sorted(groups[key], key=lambda item: item[0])
        steps = runs[0][1]["step"]
        for s, m in runs[1:]:
            if not np.array_equal(m["step"], steps):
                raise ValueError(
                    f"runs for {key} disagree on evaluation steps "
                    f"(seed {s}: {m['step']} vs {steps}); aggregate like with like")
        per_seed = np.stack([m["mean_return"] for _, m in runs])
        finals = per_seed[:, -min(FINAL_WINDOW, per_seed.shape[1]):].mean(axis=1)
        result[key] = {
            "seeds": [s for s, _ in runs],
            "steps": steps,
            "per_seed": per_seed,
            "mean": per_seed.mean(axis=0),
            "variance": per_seed.var(axis=0),
            "final_mean": float(finals.mean()),
            "final_std": float(finals.std()),
        }
    if out_dir is not None and result:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "aggregate.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("env,algo,step,mean,variance\n")
            for (env, algo), g in result.items():
                for i, step in enumerate(g["steps"]):
                    fh.write(f"{env},{algo},{step},{_fmt(g['mean'][i])},"
                             f"{_fmt(g['variance'][i])}\n")
        with open(out_dir / "final_scores.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("env,algo,n_seeds,final_mean,final_std\n")
            for (env, algo), g in result.items():
                fh.write(f"{env},{algo},{len(g['seeds'])},{_fmt(g['final_mean'])},"
                         f"{_fmt(g['final_std'])}\n")
    return result


def plot(agg: dict, out_dir, smooth_window: int = 1, render: bool = True) -> list[Path]:
    """Write smoothed learning curves (CSV always, PNG when rendering).

    The CSV has exactly the columns step, mean, variance, algorithm, env,
    with the moving average applied to the mean column only. Returns the
    list of files written; an empty aggregate writes nothing.
    """
    if not agg:
        log.info("nothing to plot: no aggregated runs")
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    curves = out_dir / "curves.csv"
    with open(curves, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,mean,variance,algorithm,env\n")
        for (env, algo), g in sorted(agg.items()):
            sm = smooth(g["mean"], smooth_window)
            for i, step in enumerate(g["steps"]):
                fh.write(f"{step},{_fmt(sm[i])},{_fmt(g['variance'][i])},{algo},{env}\n")
    written.append(curves)
    if render:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        by_env: dict[str, list] = {}
        for (env, algo), g in sorted(agg.items()):
            by_env.setdefault(env, []).append((algo, g))
        for env, entries in by_env.items():
            fig, ax = plt.subplots(figsize=(7, 4.5))
            for algo, g in entries:
                sm = smooth(g["mean"], smooth_window)
                std = np.sqrt(g["variance"])
                ax.plot(g["steps"], sm, label=algo)
                ax.fill_between(g["steps"], sm - std, sm + std, alpha=0.2)
            ax.set_xlabel("environment steps")
            ax.set_ylabel("mean evaluation return")
            ax.set_title(env)
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"curve_{env}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
    return written
