import json
import os

import numpy as np
import pytest

from banditbench import harness
from banditbench.harness import (ExperimentConfig, RegretTrace, build_rounds,
                                 emit_outputs, read_traces, run_episode,
                                 run_grid, run_repeats, summarize)
from banditbench.nn import TrainConfig
from banditbench.policies import Policy, Decision, PolicyConfig

FAST_TRAIN = TrainConfig(step_size=0.001, iterations=3)


def fast_config(algorithm="neural-ts", **kw):
    policy = PolicyConfig(algorithm=algorithm, nu=0.1, reg=1.0, train=FAST_TRAIN,
                          posterior="diagonal", width=4, depth=2, stop_train=1000)
    defaults = dict(dataset="synthetic-nonlinear", policy=policy, horizon=10,
                    repeats=2, base_seed=0, n_arms=3, raw_dim=4)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class SpyPolicy(Policy):
    """Test double recording the rounds at which observe is invoked."""

    def __init__(self):
        self.select_count = 0
        self.observe_rounds = []

    def select(self, contexts):
        self.select_count += 1
        return Decision(0, np.zeros(len(contexts)), np.zeros(len(contexts)),
                        np.zeros(len(contexts)))

    def observe(self, context, reward):
        self.observe_rounds.append(self.select_count)


class TestRounds:
    def test_synthetic_deterministic(self):
        config = fast_config()
        a = build_rounds(config, 5)
        b = build_rounds(config, 5)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.contexts, rb.contexts)
            np.testing.assert_array_equal(ra.rewards, rb.rewards)

    def test_mushroom_like_shape(self):
        config = fast_config(dataset="mushroom-like", horizon=50)
        rounds = build_rounds(config, 0)
        assert len(rounds) == 50
        assert rounds[0].contexts.shape[0] == 2

    def test_horizon_exceeding_dataset(self):
        config = fast_config(dataset="mushroom-like", horizon=9000)
        with pytest.raises(ValueError):
            build_rounds(config, 0)


class TestDelayProtocol:
    def test_flush_positions(self, monkeypatch):
        spy = SpyPolicy()
        monkeypatch.setattr(harness, "make_policy", lambda *a, **k: spy)
        run_episode(fast_config(delay=3, horizon=10), 0)
        # flushes at t = 3, 6, 9 plus the terminal flush at t = T = 10
        assert spy.observe_rounds == [3, 3, 3, 6, 6, 6, 9, 9, 9, 10]

    def test_delay_zero_equals_delay_one(self):
        t0 = run_episode(fast_config(delay=0), 0)
        t1 = run_episode(fast_config(delay=1), 0)
        for a, b in zip(t0.rounds, t1.rounds):
            assert {k: v for k, v in a.items() if k != "wall_us"} == \
                {k: v for k, v in b.items() if k != "wall_us"}

    def test_frozen_between_flushes(self, monkeypatch):
        from banditbench.policies import make_policy as real_make_policy
        states = []

        class Wrapper(Policy):
            def __init__(self, inner):
                self.inner = inner

            def select(self, contexts):
                states.append((self.inner.net.theta.flat.tobytes(),
                               self.inner.design.logdet))
                return self.inner.select(contexts)

            def observe(self, context, reward):
                self.inner.observe(context, reward)

        monkeypatch.setattr(
            harness, "make_policy",
            lambda cfg, dim, seed: Wrapper(real_make_policy(cfg, dim, seed)))
        run_episode(fast_config(algorithm="neural-ucb", delay=4, horizon=12), 0)
        # state at select time changes only at flush boundaries: rounds
        # 1-5 share the initial state (flush after round 4's select), then 6-9, ...
        assert len(states) == 12
        for t in range(1, 12):
            boundary_passed = (t % 4 == 0)
            if boundary_passed:
                assert states[t] != states[t - 1]
            else:
                assert states[t] == states[t - 1]


class TestEpisode:
    def test_uniform_regret_binomial(self):
        config = fast_config(algorithm="uniform", dataset="mushroom-like",
                             horizon=2000, repeats=1)
        trace = run_episode(config, 0)
        # balanced 2-class stream: expected regret T/2
        assert abs(trace.total_regret - 1000) < 3 * np.sqrt(2000 * 0.25) + 30

    def test_oracle_policy_zero_regret(self, monkeypatch):
        config = fast_config(dataset="mushroom-like", horizon=30)
        rounds = build_rounds(config, config.base_seed ^ 0)

        class Oracle(Policy):
            def __init__(self):
                self.t = 0

            def select(self, contexts):
                arm = rounds[self.t].optimal_arm
                self.t += 1
                K = len(contexts)
                return Decision(arm, np.zeros(K), np.zeros(K), np.zeros(K))

            def observe(self, context, reward):
                pass

        monkeypatch.setattr(harness, "make_policy", lambda *a, **k: Oracle())
        assert run_episode(config, 0).total_regret == 0.0

    def test_regret_equals_mistake_count(self):
        config = fast_config(dataset="mushroom-like", horizon=60,
                             algorithm="eps-greedy")
        trace = run_episode(config, 0)
        mistakes = sum(1 for r in trace.rounds if r["reward"] == 0.0)
        assert trace.total_regret == mistakes

    def test_cum_regret_nondecreasing(self):
        trace = run_episode(fast_config(horizon=20), 1)
        cum = trace.cum_regret
        assert np.all(np.diff(cum) >= -1e-12)

    def test_deterministic_repeat(self):
        a = run_episode(fast_config(), 1)
        b = run_episode(fast_config(), 1)
        for ra, rb in zip(a.rounds, b.rounds):
            assert {k: v for k, v in ra.items() if k != "wall_us"} == \
                {k: v for k, v in rb.items() if k != "wall_us"}


class TestSummarize:
    @staticmethod
    def _trace(total, T=4):
        rounds = [{"t": t, "arm": 0, "reward": 0.0,
                   "regret": 0.0, "cum_regret": total * t / T, "sigma": 0.0,
                   "wall_us": 1} for t in range(1, T + 1)]
        return RegretTrace("x", 0, rounds)

    def test_single_trace_zero_std(self):
        stats = summarize([self._trace(100)])
        assert stats["std"] == 0.0
        assert stats["mean"] == 100.0

    def test_two_traces(self):
        stats = summarize([self._trace(100), self._trace(300)])
        assert stats["mean"] == pytest.approx(200.0)
        assert stats["std"] == pytest.approx(141.42, abs=0.01)
        assert stats["stderr"] == pytest.approx(stats["std"] / np.sqrt(2))

    def test_band_is_stderr_per_round(self):
        traces = [self._trace(100), self._trace(300)]
        stats = summarize(traces)
        curves = np.stack([t.cum_regret for t in traces])
        np.testing.assert_allclose(stats["curve_stderr"],
                                   curves.std(axis=0, ddof=1) / np.sqrt(2))


class TestGrid:
    def test_single_cell_equals_repeats(self):
        config = fast_config(algorithm="uniform", repeats=2)
        table, best = run_grid(config, parallel=False)
        assert len(table) == 1
        direct = summarize(run_repeats(config, parallel=False))
        assert best["mean"] == pytest.approx(direct["mean"])

    def test_grid_counting(self):
        config = fast_config(algorithm="uniform", repeats=2,
                             reg_grid=(1.0, 0.1), nu_grid=(0.1, 0.01))
        table, _ = run_grid(config, parallel=False)
        assert len(table) == 4

    def test_tie_break_smaller_nu_then_reg(self):
        # uniform ignores nu/reg so every cell ties; the winner must be the
        # smallest nu, then the smallest reg
        config = fast_config(algorithm="uniform", repeats=1,
                             reg_grid=(1.0, 0.1), nu_grid=(0.1, 0.01))
        _, best = run_grid(config, parallel=False)
        assert best["nu"] == 0.01
        assert best["reg"] == 0.1


class TestOutputs:
    def test_jsonl_roundtrip(self, tmp_path):
        config = fast_config(algorithm="uniform", repeats=2, horizon=15)
        traces = run_repeats(config, parallel=False)
        emit_outputs(traces, summarize(traces), str(tmp_path))
        back = read_traces(str(tmp_path), "uniform")
        assert len(back) == 2
        for a, b in zip(traces, back):
            assert a.rounds == b.rounds

    def test_plot_csv_rows(self, tmp_path):
        config = fast_config(algorithm="uniform", repeats=2, horizon=15)
        traces = run_repeats(config, parallel=False)
        emit_outputs(traces, summarize(traces), str(tmp_path))
        lines = (tmp_path / "plot_uniform.csv").read_text().strip().splitlines()
        assert len(lines) == 16  # header + T rows

    def test_summary_rows_match_grid_cells(self, tmp_path):
        config = fast_config(algorithm="uniform", repeats=1,
                             reg_grid=(1.0, 0.1), nu_grid=(0.1,))
        table, best = run_grid(config, parallel=False)
        stats = {"n_repeats": 1, "mean": best["mean"], "std": 0.0, "stderr": 0.0,
                 "curve_mean": np.zeros(0), "curve_stderr": np.zeros(0)}
        emit_outputs([], stats, str(tmp_path), grid_table=table)
        lines = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 cells

    def test_byte_identical_traces_modulo_wallclock(self, tmp_path):
        config = fast_config(horizon=12, repeats=1)
        for sub in ("a", "b"):
            traces = run_repeats(config, parallel=False)
            emit_outputs(traces, summarize(traces), str(tmp_path / sub))

        def strip(path):
            out = []
            with open(path) as fh:
                for line in fh:
                    row = json.loads(line)
                    row.pop("wall_us")
                    out.append(json.dumps(row, sort_keys=True))
            return "\n".join(out)

        name = "trace_neural-ts_0.jsonl"
        assert strip(tmp_path / "a" / name) == strip(tmp_path / "b" / name)


class TestPool:
    def test_thread_cap_env(self, monkeypatch):
        monkeypatch.setenv("BANDITBENCH_THREADS", "1")
        assert harness._pool_size() == 1

    def test_parallel_matches_serial(self):
        config = fast_config(algorithm="uniform", repeats=2, horizon=20)
        serial = [t.total_regret for t in run_repeats(config, parallel=False)]
        parallel = [t.total_regret for t in run_repeats(config, parallel=True)]
        assert serial == parallel
