import collections

import numpy as np
import pytest

from lac import analysis, pool as pm
from lac.analysis import (TrajectoryGraph, call_frequency_curve, discretize,
                          oracle_adaptive, oracle_fixed)


class TestDiscretize:
    def test_one_hot_confident(self):
        pat = discretize(np.array([[0.0, 1.0, 0.0]]))
        assert pat[0] == 1 * 2 + 1

    def test_uniform_not_confident(self):
        pat = discretize(np.array([[0.5, 0.5, 0.0, 0.0]]))
        assert pat[0] == 0 * 2 + 0


class TestOracleFixed:
    def test_perfect_single(self, perfect_pool):
        acc, subset = oracle_fixed(perfect_pool, 1)
        assert acc == 1.0 and subset == (0,)

    def test_router_k2_exact(self, router_pool):
        acc, subset = oracle_fixed(router_pool, 2)
        assert acc == 0.75
        assert 0 in subset  # the router is in every optimal pair

    def test_k_equals_pool_size(self, router_pool):
        acc, subset = oracle_fixed(router_pool, 3)
        assert subset == (0, 1, 2)
        # full pattern: router confidence + both specialists is enough
        assert acc == 1.0

    def test_purity(self, router_pool):
        assert oracle_fixed(router_pool, 2) == oracle_fixed(router_pool, 2)


class TestOracleAdaptive:
    def test_router_h2_exact(self, router_pool):
        acc, tree = oracle_adaptive(router_pool, 2)
        assert acc == 1.0
        assert tree["classifier"] == 0  # starts with the router

    def test_full_horizon_equals_fixed(self, router_pool):
        afix, _ = oracle_fixed(router_pool, 3)
        aada, _ = oracle_adaptive(router_pool, 3)
        assert aada == pytest.approx(afix)

    def test_adaptive_geq_fixed(self, router_pool, perfect_pool):
        for pool in (router_pool, perfect_pool):
            for k in range(1, pool.n_classifiers + 1):
                if k > 3:
                    break
                afix, _ = oracle_fixed(pool, k)
                aada, _ = oracle_adaptive(pool, k)
                assert aada >= afix - 1e-12

    def test_refuses_large(self, router_pool):
        with pytest.raises(pm.PoolError):
            oracle_adaptive(router_pool, 4)


class TestCallFrequencyCurve:
    def test_from_rows(self):
        rows = [{"epoch": 1, "call_freq_0": "0.5", "call_freq_1": "0.5"},
                {"epoch": 2, "call_freq_0": "0.25", "call_freq_1": "0.75"}]
        epochs, series = call_frequency_curve(rows, 2)
        assert epochs == [1, 2]
        assert series[1] == [0.5, 0.75]

    def test_forced_uniformity_full_horizon(self, router_pool):
        from lac.agent import AgentConfig, LacNets
        from lac.training import TrainConfig, evaluate
        cfg = TrainConfig(horizon=3, seed=0)
        nets = LacNets(AgentConfig(3, 4, seed=0))
        stats = evaluate(router_pool, nets, cfg, "test")
        # hard mask with horizon = N forces every classifier once
        assert np.allclose(stats["call_frequencies"], 1.0 / 3.0)


class TestTrajectoryGraph:
    def test_single_path_linear_chain(self):
        g = TrajectoryGraph(collections.Counter({(0, 1, 2): 10}))
        assert g.edges[("s", 0)] == 1.0
        assert g.edges[(0, 1)] == 1.0
        assert g.edges[(1, 2)] == 1.0

    def test_edge_probabilities_sum_to_one(self):
        g = TrajectoryGraph(collections.Counter(
            {(0, 1): 6, (0, 2): 2, (1, 0): 2}))
        outs = {}
        for (u, v), p in g.edges.items():
            outs.setdefault(u, 0.0)
            outs[u] += p
        for u, total in outs.items():
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_counts_reconstruct_for_tree_histories(self):
        trajs = collections.Counter({(0, 1): 3, (0, 2): 1})
        g = TrajectoryGraph(trajs)
        # s->0 carries all mass; splits 3:1 afterwards
        assert g.edges[("s", 0)] == 1.0
        assert g.edges[(0, 1)] == pytest.approx(0.75)
        assert g.edges[(0, 2)] == pytest.approx(0.25)

    def test_unreachable_node_absent(self):
        g = TrajectoryGraph(collections.Counter({(0, 2): 5}),
                            names={0: "first", 1: "skipped", 2: "third"})
        dot = g.to_dot()
        assert "skipped" not in dot
        assert "first" in dot and "third" in dot

    def test_dot_format_stable(self):
        trajs = collections.Counter({(1, 0): 2, (0, 1): 2})
        a = TrajectoryGraph(trajs).to_dot()
        b = TrajectoryGraph(trajs).to_dot()
        assert a == b
        assert a.startswith("digraph trajectories {")
        assert '[label="0.500"]' in a


def test_budget_accuracy_rows():
    rows = analysis.budget_accuracy_rows({2: 0.8, 1: 0.5})
    assert rows[0]["horizon"] == 1 and rows[1]["horizon"] == 2
