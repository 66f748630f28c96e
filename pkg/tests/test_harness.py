"""Training harness: run artifacts, determinism, aggregation, plotting."""

import json

import numpy as np
import pytest

from bexp.config import RunConfig, config_lines, load_config
from bexp.errors import NumericalError
from bexp.harness import (FINAL_WINDOW, METRIC_COLUMNS, _fmt, aggregate,
                          plot, read_metrics, run, smooth)


def micro_cfg(**overrides):
    base = dict(env="pendulum", algo="sac", total_steps=30, seeds=(0,),
                updates_per_step=2, update_start=5, batch_size=8,
                eval_interval=10, eval_episodes=2,
                policy_hidden=(8,), critic_hidden=(8,), model_hidden=(8,),
                buffer_capacity=1000, warmup_transitions=10,
                model_batch_size=8, ensemble_size=2)
    base.update(overrides)
    return RunConfig(**base)


def synth_run(root, name, env, algo, seed, steps, returns):
    """Fabricate a run directory with a known metrics curve."""
    rd = root / name
    rd.mkdir()
    cfg = RunConfig(env=env, algo=algo)
    (rd / "config.resolved").write_text("\n".join(config_lines(cfg)) + "\n")
    (rd / "summary.json").write_text(json.dumps({"seed": seed}))
    with open(rd / "metrics.csv", "w", newline="") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for s, r in zip(steps, returns):
            row = dict.fromkeys(METRIC_COLUMNS, 0.0)
            row["step"], row["mean_return"] = int(s), float(r)
            fh.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS) + "\n")
    return rd


# --- smoothing ---

def test_smooth_window_one_is_identity_copy():
    x = [3.0, 1.0, 4.0]
    out = smooth(x, 1)
    assert np.array_equal(out, x)
    out[0] = 99.0  # mutating the result must not alias the input


def test_smooth_constant_series_unchanged():
    assert np.array_equal(smooth([2.5] * 6, 4), [2.5] * 6)


def test_smooth_two_point_oracle():
    assert np.array_equal(smooth([0.0, 10.0], 2), [0.0, 5.0])


def test_smooth_trailing_average_hand_computed():
    out = smooth([1.0, 2.0, 3.0, 4.0], 3)
    assert np.allclose(out, [1.0, 1.5, 2.0, 3.0], rtol=0, atol=1e-12)


def test_smooth_rejects_bad_window_and_handles_empty():
    with pytest.raises(ValueError, match="window"):
        smooth([1.0], 0)
    assert smooth([], 3).size == 0


# --- single runs ---

def test_zero_step_run_writes_valid_empty_artifacts(tmp_path):
    cfg = micro_cfg(total_steps=0)
    res = run(cfg, seed=0, run_dir=tmp_path / "r0")
    metrics = (tmp_path / "r0" / "metrics.csv").read_text()
    assert metrics == ",".join(METRIC_COLUMNS) + "\n"
    assert res.metrics == []
    echoed = load_config(tmp_path / "r0" / "config.resolved")
    assert echoed == cfg
    summary = json.loads((tmp_path / "r0" / "summary.json").read_text())
    assert summary["env_steps"] == 0 and summary["aborted"] is False
    assert (tmp_path / "r0" / "agent.bin").exists()


def test_micro_run_artifacts_and_counters(tmp_path):
    cfg = micro_cfg()
    res = run(cfg, seed=1, run_dir=tmp_path / "r1")
    m = read_metrics(tmp_path / "r1")
    assert list(m) == list(METRIC_COLUMNS)
    assert m["step"].tolist() == [10, 20, 30]
    assert (np.diff(m["step"]) > 0).all()
    assert (m["horizon"] == cfg.horizon).all()
    assert np.isfinite(m["mean_return"]).all()
    assert len(res.metrics) == 3

    summary = json.loads((tmp_path / "r1" / "summary.json").read_text())
    assert summary["env_steps"] == 30
    assert summary["evals"] == 3
    assert summary["wall_seconds"] > 0.0
    # cadence: every step contributes updates_per_step rounds or skips
    assert summary["update_rounds"] + summary["update_skips"] == 2 * 30
    assert summary["update_skips"] == 2 * 4  # buffer below update_start for steps 1-4
    timing = (tmp_path / "r1" / "timing.csv").read_text().splitlines()
    assert timing[0] == "step,wall_seconds"
    assert len(timing) == 4


def test_final_step_always_evaluated(tmp_path):
    cfg = micro_cfg(total_steps=25, eval_interval=10)
    run(cfg, seed=0, run_dir=tmp_path / "r")
    assert read_metrics(tmp_path / "r")["step"].tolist() == [10, 20, 25]


def test_same_seed_reproduces_metrics_bytes(tmp_path):
    cfg = micro_cfg(total_steps=40)
    run(cfg, seed=3, run_dir=tmp_path / "a")
    run(cfg, seed=3, run_dir=tmp_path / "b")
    run(cfg, seed=4, run_dir=tmp_path / "c")
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    c = (tmp_path / "c" / "metrics.csv").read_bytes()
    assert a == b
    assert a != c


def test_step_callback_sees_every_step(tmp_path):
    seen = []
    run(micro_cfg(total_steps=7), seed=0, run_dir=tmp_path / "r",
        step_callback=lambda step, diag, res: seen.append(step))
    assert seen == list(range(1, 8))


def test_selector_fallback_counted_until_model_ready(tmp_path):
    # warmup larger than the run: bounded selection never engages
    cfg = micro_cfg(algo="sac+be", total_steps=12, warmup_transitions=500)
    kinds = []
    res = run(cfg, seed=0, run_dir=tmp_path / "r",
              step_callback=lambda step, diag, r: kinds.append(diag.kind_used))
    assert res.counters["fallback_steps"] == 12
    assert set(kinds) == {"vanilla"}
    # model training was attempted once the buffer reached update_start
    assert res.counters["model_rounds"] + res.counters["model_skips"] == 12 - 4


def test_model_rounds_counted_once_batch_available(tmp_path):
    cfg = micro_cfg(algo="sac+be", total_steps=12, warmup_transitions=6,
                    model_batch_size=4)
    res = run(cfg, seed=0, run_dir=tmp_path / "r")
    assert res.counters["model_rounds"] == 12 - 4
    assert res.counters["model_skips"] == 0
    assert res.ensemble is not None and res.ensemble.ready
    assert (tmp_path / "r" / "model.bin").exists()


def test_plain_sac_builds_no_ensemble(tmp_path):
    res = run(micro_cfg(total_steps=5), seed=0, run_dir=tmp_path / "r")
    assert res.ensemble is None
    assert not (tmp_path / "r" / "model.bin").exists()


def test_numerical_abort_checkpoints_and_summary(tmp_path, monkeypatch):
    # capture the live agent at construction so the callback can poison it
    import bexp.harness as harness
    agent_box = {}
    orig_agent_cls = harness.SacAgent

    class Grabby(orig_agent_cls):
        def __init__(self, *a, **kw):
            super().__init__(*a, **kw)
            agent_box["agent"] = self

    monkeypatch.setattr(harness, "SacAgent", Grabby)

    def poison(step, diag, res):
        if step == 6:
            agent_box["agent"].critics.q1.theta[:] = np.nan

    with pytest.raises(NumericalError):
        run(micro_cfg(total_steps=20), seed=0, run_dir=tmp_path / "r",
            step_callback=poison)

    summary = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert summary["aborted"] is True
    assert summary["error"]
    assert (tmp_path / "r" / "buffer.bin").exists()
    assert (tmp_path / "r" / "agent.bin").exists()


def test_save_buffer_flag_writes_buffer(tmp_path):
    run(micro_cfg(total_steps=5), seed=0, run_dir=tmp_path / "r", save_buffer=True)
    assert (tmp_path / "r" / "buffer.bin").exists()


# --- aggregation ---

def test_aggregate_mean_and_population_variance(tmp_path):
    steps = [10, 20, 30]
    d1 = synth_run(tmp_path, "s0", "pendulum", "sac", 0, steps, [1.0, 1.0, 1.0])
    d2 = synth_run(tmp_path, "s1", "pendulum", "sac", 1, steps, [3.0, 3.0, 3.0])
    agg = aggregate([d1, d2], out_dir=tmp_path / "agg")
    g = agg[("pendulum", "sac")]
    assert g["seeds"] == [0, 1]
    assert np.array_equal(g["mean"], [2.0, 2.0, 2.0])
    assert np.array_equal(g["variance"], [1.0, 1.0, 1.0])  # population, not sample
    assert g["final_mean"] == 2.0
    assert g["final_std"] == 1.0

    lines = (tmp_path / "agg" / "aggregate.csv").read_text().splitlines()
    assert lines[0] == "env,algo,step,mean,variance"
    assert lines[1] == "pendulum,sac,10,2.0,1.0"
    finals = (tmp_path / "agg" / "final_scores.csv").read_text().splitlines()
    assert finals[0] == "env,algo,n_seeds,final_mean,final_std"
    assert finals[1] == "pendulum,sac,2,2.0,1.0"


def test_aggregate_single_run_zero_variance(tmp_path):
    d = synth_run(tmp_path, "solo", "point_mass", "sac+be", 5, [10], [7.5])
    g = aggregate([d])[("point_mass", "sac+be")]
    assert np.array_equal(g["variance"], [0.0])
    assert g["final_std"] == 0.0


def test_aggregate_final_score_uses_trailing_window(tmp_path):
    steps = list(range(10, 260, 10))  # 25 evaluation points
    returns = list(range(25))         # 0..24
    d = synth_run(tmp_path, "w", "pendulum", "sac", 0, steps, returns)
    g = aggregate([d])[("pendulum", "sac")]
    assert FINAL_WINDOW == 10
    assert g["final_mean"] == np.mean(returns[-10:])  # rows 16..25 only


def test_aggregate_groups_by_env_and_algo(tmp_path):
    d1 = synth_run(tmp_path, "a", "pendulum", "sac", 0, [10], [1.0])
    d2 = synth_run(tmp_path, "b", "pendulum", "sac+be", 0, [10], [2.0])
    d3 = synth_run(tmp_path, "c", "mountain_car", "sac", 0, [10], [3.0])
    agg = aggregate([d1, d2, d3])
    assert set(agg) == {("pendulum", "sac"), ("pendulum", "sac+be"),
                        ("mountain_car", "sac")}


def test_aggregate_rejects_mismatched_step_grids(tmp_path):
    d1 = synth_run(tmp_path, "a", "pendulum", "sac", 0, [10, 20], [1.0, 1.0])
    d2 = synth_run(tmp_path, "b", "pendulum", "sac", 1, [10, 30], [1.0, 1.0])
    with pytest.raises(ValueError, match="disagree"):
        aggregate([d1, d2])


# --- plotting ---

def test_plot_writes_exact_curve_schema_and_values(tmp_path):
    steps = [10, 20, 30, 40]
    d = synth_run(tmp_path, "p", "pendulum", "sac", 0, steps, [0.0, 10.0, 20.0, 30.0])
    agg = aggregate([d])
    written = plot(agg, tmp_path / "plots", smooth_window=2, render=False)
    assert written == [tmp_path / "plots" / "curves.csv"]
    lines = (tmp_path / "plots" / "curves.csv").read_text().splitlines()
    assert lines[0] == "step,mean,variance,algorithm,env"
    got = [line.split(",") for line in lines[1:]]
    assert [g[0] for g in got] == ["10", "20", "30", "40"]
    # trailing moving average with window 2 on the mean column only
    assert [float(g[1]) for g in got] == [0.0, 5.0, 15.0, 25.0]
    assert [float(g[2]) for g in got] == [0.0, 0.0, 0.0, 0.0]
    assert {g[3] for g in got} == {"sac"} and {g[4] for g in got} == {"pendulum"}


def test_plot_renders_png_per_env(tmp_path):
    d1 = synth_run(tmp_path, "a", "pendulum", "sac", 0, [10, 20], [1.0, 2.0])
    d2 = synth_run(tmp_path, "b", "mountain_car", "sac", 0, [10, 20], [1.0, 2.0])
    written = plot(aggregate([d1, d2]), tmp_path / "plots", render=True)
    names = {p.name for p in written}
    assert names == {"curves.csv", "curve_pendulum.png", "curve_mountain_car.png"}
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_plot_empty_aggregate_is_a_noop(tmp_path, caplog):
    with caplog.at_level("INFO", logger="bexp.harness"):
        written = plot({}, tmp_path / "plots")
    assert written == []
    assert not (tmp_path / "plots").exists()
    assert any("nothing to plot" in r.message for r in caplog.records)
