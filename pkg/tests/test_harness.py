import json

import numpy as np
import pytest

from hyperbandit.cli import main
from hyperbandit.envs import SyntheticEnv
from hyperbandit.harness.agents import HyperBanditAgent, RandomAgent
from hyperbandit.harness.config import ConfigError, ExperimentConfig, Seeds
from hyperbandit.harness.metrics import (
    MetricError,
    normalized_accumulated_reward,
    regret,
    svd_report,
    timing_report,
)
from hyperbandit.harness.outputs import read_buffers, read_svd, read_trace, write_outputs, write_trace
from hyperbandit.harness.runner import RunTrace, make_env, run, run_agent
from hyperbandit.hypernet import Hypernetwork, TrainConfig
from hyperbandit.linalg import singular_values
from hyperbandit.periods import N_PERIODS, period_embeddings

SMALL_ENV = {"kind": "synthetic", "n_users": 10, "n_items": 60, "latent_dim": 4}


def small_config(policy="hyperbandit", **kw):
    base = dict(
        policy=policy,
        n_steps=300,
        buffer_size=100,
        d_u=8,
        o_a=6,
        l_a=4,
        n_candidates=10,
        hidden=(16, 16),
        training=TrainConfig(max_epochs=20),
        environment=dict(SMALL_ENV),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def make_trace(rewards, items=None):
    n = len(rewards)
    return RunTrace(
        t=np.arange(n),
        period=np.zeros(n, dtype=np.int64),
        user_id=np.zeros(n, dtype=np.int64),
        item_id=np.zeros(n, dtype=np.int64) if items is None else np.asarray(items),
        reward=np.asarray(rewards, dtype=np.int64),
        step_seconds=np.full(n, 1e-3),
    )


# -- configuration -----------------------------------------------------------


def test_config_round_trip_through_dict():
    cfg = small_config(tau=None, seeds=Seeds(3, 4, 5, 6, 7))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


@pytest.mark.parametrize(
    "data, needle",
    [
        ({"policy": "greedy"}, "policy"),
        ({"policy": "hyperbandit", "buffer_size": 9}, "buffer_size"),
        ({"policy": "hyperbandit", "alpha": -1}, "alpha"),
        ({"policy": "hyperbandit", "tau": 26}, "tau"),
        ({"policy": "hyperbandit", "bogus": 1}, "bogus"),
        ({"policy": "linucb", "environment": {"kind": "synthetic", "n_items": 10}}, "n_items"),
        ({"policy": "linucb", "environment": {"kind": "replay"}}, "environment"),
        ({"policy": "linucb", "training": {"validation_fraction": 1.5}}, "validation_fraction"),
    ],
)
def test_config_errors_are_named(data, needle):
    with pytest.raises(ConfigError, match=needle):
        ExperimentConfig.from_dict(data)


def test_config_small_buffer_allowed_for_baselines():
    assert ExperimentConfig(policy="linucb", buffer_size=5).buffer_size == 5


def test_config_load_errors(tmp_path):
    with pytest.raises(OSError):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)


def test_reseeded_keeps_baseline_distinct():
    cfg = small_config().reseeded(4)
    s = cfg.seeds
    assert s.environment == s.policy == s.hypernetwork == s.embedding == 4
    assert s.random_baseline != s.policy


# -- run ---------------------------------------------------------------------


def test_random_policy_self_normalizes():
    cfg = ExperimentConfig(policy="random", n_steps=20000, environment={"kind": "synthetic"})
    result = run(cfg)
    assert abs(normalized_accumulated_reward(result.trace, result.baseline) - 1.0) <= 0.05


def test_degenerate_run_always_picks_first_candidate():
    cfg = small_config(alpha=0.0, freeze_hypernetwork=True)
    env = make_env(cfg)
    agent = HyperBanditAgent(
        env.item_features, cfg.d_u, l_a=cfg.l_a, alpha=0.0, hidden=cfg.hidden, freeze=True
    )
    agent.net.weights[-1][...] = 0.0
    agent.net.biases[-1][...] = 0.0
    trace = run_agent(env, agent, 200, 50)
    first = [env.step(t).candidate_ids[0] for t in range(200)]
    assert trace.item_id.tolist() == [int(i) for i in first]
    assert all(b.epochs == 0 for b in trace.buffers)


def test_run_is_deterministic():
    a, b = run(small_config()), run(small_config())
    for name in ("item_id", "reward", "user_id", "period"):
        assert np.array_equal(getattr(a.trace, name), getattr(b.trace, name))
    assert [x.train_loss for x in a.trace.buffers] == [x.train_loss for x in b.trace.buffers]


def test_run_buffers_and_trace_shape():
    result = run(small_config(n_steps=250))
    assert len(result.trace) == 250
    assert [b.steps for b in result.trace.buffers] == [100, 100, 50]
    assert np.all(np.diff(result.trace.cumulative_reward) >= 0)
    assert all(b.epochs >= 1 for b in result.trace.buffers)


def test_trace_validation():
    with pytest.raises(ValueError):
        RunTrace(np.array([0, 0]), *(np.zeros(2, dtype=np.int64),) * 4, np.zeros(2))
    with pytest.raises(ValueError):
        make_trace([0, 2])


# -- metrics -----------------------------------------------------------------


def test_normalized_reward_examples():
    assert normalized_accumulated_reward(make_trace([1] * 30 + [0] * 10), make_trace([1] * 10 + [0] * 30)) == 3.0
    t = make_trace([1, 0, 1, 1])
    assert normalized_accumulated_reward(t, t) == 1.0
    with pytest.raises(MetricError):
        normalized_accumulated_reward(t, make_trace([0, 0, 0, 0]))
    with pytest.raises(MetricError):
        normalized_accumulated_reward(t, make_trace([1, 1]))


@pytest.fixture(scope="module")
def small_env():
    return SyntheticEnv(n_users=10, n_items=60, d_u=8, o_a=6, l_a=4, n_candidates=10, seed=2)


def test_oracle_policy_has_zero_regret(small_env):
    items = []
    for t in range(500):
        step = small_env.step(t)
        items.append(int(step.candidate_ids[np.argmax(small_env.candidate_rewards(step))]))
    reg = regret(make_trace([0] * 500, items), small_env)
    assert np.all(reg.per_step == 0.0)


def test_regret_nonnegative_and_cumulative(small_env):
    trace = run_agent(small_env, RandomAgent(0), 2000, 2000)
    reg = regret(trace, small_env)
    assert np.all(reg.per_step >= 0)
    assert np.all(np.diff(reg.cumulative) >= 0)
    assert np.allclose(reg.cumulative, np.cumsum(reg.per_step))


def test_random_regret_matches_monte_carlo(small_env):
    n = 20000
    trace = run_agent(small_env, RandomAgent(7), n, n)
    observed = regret(trace, small_env).per_step.mean()
    # Independent estimate: average gap between the best and a uniformly drawn candidate.
    rng = np.random.default_rng(123)
    gaps = []
    for t in range(n):
        step = small_env.step(t)
        values = small_env.candidate_rewards(step)
        gaps.append(values.max() - values[rng.integers(len(values))])
    assert abs(observed / np.mean(gaps) - 1) <= 0.02


def test_regret_rejects_replay(tmp_path):
    from test_core import _write_replay

    cfg = ExperimentConfig(
        policy="linucb", d_u=3, o_a=2, l_a=2, tau=None, n_candidates=10,
        environment=dict(zip(("interactions", "users", "items"), map(str, _write_replay(tmp_path))), kind="replay"),
    )
    result = run(cfg)
    assert len(result.trace) == 30
    with pytest.raises(MetricError):
        regret(result.trace, result.env)


def test_timing_report():
    with pytest.raises(MetricError):
        timing_report(make_trace([]))
    assert timing_report(make_trace([0, 1, 1])).mean_step_seconds == pytest.approx(1e-3, abs=1e-18)


@pytest.mark.parametrize("tau", [2, None])
def test_svd_report(tau):
    net = Hypernetwork(25, 25, tau=tau, hidden=(32,), seed=1)
    for w in net.weights:
        w *= 5
    sigma = svd_report(net, embedding_seed=0)
    assert sigma.shape == (N_PERIODS, 25)
    thetas, _ = net.forward_batch(period_embeddings(0))
    for p in range(N_PERIODS):
        assert abs(np.sum(sigma[p] ** 2) - np.sum(thetas[p] ** 2)) <= 1e-8 * max(1.0, np.sum(thetas[p] ** 2))
        assert np.all(np.diff(sigma[p]) <= 0)
        if tau == 2:
            assert np.sum(sigma[p] > 1e-8 * sigma[p, 0]) <= 2
    assert np.array_equal(sigma[3], singular_values(thetas[3]))


def test_full_rank_report_after_training_on_rank_two_env():
    cfg = small_config(tau=None, n_steps=200, environment=dict(SMALL_ENV, rank=2))
    result = run(cfg)
    sigma = svd_report(result.agent.net, cfg.seeds.embedding)
    assert sigma.shape == (N_PERIODS, min(cfg.d_a, cfg.d_u))


# -- files -------------------------------------------------------------------


def test_trace_csv_round_trip(tmp_path):
    result = run(small_config(policy="linucb", n_steps=400))
    write_trace(result.trace, tmp_path / "trace.csv")
    back = read_trace(tmp_path / "trace.csv")
    for name in ("t", "period", "user_id", "item_id", "reward"):
        assert np.array_equal(getattr(back, name), getattr(result.trace, name))


def test_write_outputs_files(tmp_path):
    result = run(small_config())
    summary = write_outputs(result, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"trace.csv", "buffers.csv", "summary.json", "timings.json", "regret.csv", "svd.csv", "checkpoint.npz"} <= names
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert len(read_buffers(tmp_path / "buffers.csv")) == summary["n_buffers"] == 3
    assert read_svd(tmp_path / "svd.csv").shape == (N_PERIODS, 8)
    timings = json.loads((tmp_path / "timings.json").read_text())
    assert timings["mean_step_seconds"] > 0


# -- CLI ---------------------------------------------------------------------


def write_config(tmp_path, **kw):
    cfg = small_config(**kw).to_dict()
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_cli_run_and_svd(tmp_path, capsys):
    path = write_config(tmp_path, n_steps=200)
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
    assert json.loads(capsys.readouterr().out)["policy"] == "hyperbandit"
    out = tmp_path / "svd2.csv"
    assert main(["svd-report", "--checkpoint", str(tmp_path / "out" / "checkpoint.npz"), "--out", str(out)]) == 0
    assert np.array_equal(read_svd(out), read_svd(tmp_path / "out" / "svd.csv"))


def test_cli_run_is_byte_identical(tmp_path):
    path = write_config(tmp_path, n_steps=200)
    for d in ("a", "b"):
        assert main(["run", "--config", str(path), "--out", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "summary.json", "buffers.csv", "svd.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_sweep(tmp_path, capsys):
    path = write_config(tmp_path, policy="linucb", n_steps=200)
    assert main(["sweep", "--config", str(path), "--seeds", "3", "--out", str(tmp_path / "sw")]) == 0
    assert "±" in capsys.readouterr().out
    report = json.loads((tmp_path / "sw" / "sweep.json").read_text())
    assert report["seeds"] == [0, 1, 2]
    assert report["mean"] == pytest.approx(np.mean(report["normalized_accumulated_reward"]))


def test_cli_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"policy": "nope"}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert main(["svd-report", "--checkpoint", str(tmp_path / "nope.npz"), "--out", str(tmp_path / "s.csv")]) == 2
    # A zero-reward environment makes the normalized reward undefined.
    zero = write_config(tmp_path, policy="random", n_steps=50)
    import hyperbandit.harness.runner as runner

    original = runner.make_env

    def zero_env(config):
        env = original(config)
        env.reward_table[:] = 0.0
        return env

    monkeypatch.setattr(runner, "make_env", zero_env)
    assert main(["run", "--config", str(zero), "--out", str(tmp_path / "z")]) == 3
