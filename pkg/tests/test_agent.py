import numpy as np
import pytest

from lac import agent, numkit
from lac.agent import (AgentConfig, HiddenState, LacNets, decide,
                       encode_response, masked_policy, policy, select_action)


@pytest.fixture()
def nets():
    return LacNets(AgentConfig(n_classifiers=4, n_classes=3, seed=0))


class TestHiddenState:
    def test_single_write(self):
        s = HiddenState(4, 2)
        s2 = encode_response(s, 2, [0.7, 0.3])
        assert np.allclose(s2.response_table[2], [0.7, 0.3])
        assert np.all(s2.mask_table[2] == 1.0)
        assert s2.response_table[0].sum() == 0 and s2.mask_table[0].sum() == 0
        # original untouched
        assert s.mask_table.sum() == 0

    def test_double_write_forbidden(self):
        s = encode_response(HiddenState(3, 2), 1, [1.0, 0.0])
        with pytest.raises(numkit.UsageError):
            encode_response(s, 1, [0.0, 1.0])

    def test_writes_commute(self):
        a = encode_response(encode_response(HiddenState(3, 2), 0, [1, 0]),
                            2, [0, 1])
        b = encode_response(encode_response(HiddenState(3, 2), 2, [0, 1]),
                            0, [1, 0])
        assert np.array_equal(a.flatten(), b.flatten())

    def test_mask_counting(self):
        s = HiddenState(5, 4)
        s = encode_response(s, 0, [1, 0, 0, 0])
        s = encode_response(s, 2, [0, 1, 0, 0])
        flat = s.flatten()
        assert (flat[20:] != 0).sum() == 2 * 4
        assert flat.shape == (5 * 4 * 2,)


class TestPolicy:
    def test_near_uniform_at_init(self, nets):
        p = policy(nets, HiddenState(4, 3))
        assert np.abs(p - 0.25).max() < 0.05

    def test_hard_mask_zeroes_called(self, nets):
        s = encode_response(HiddenState(4, 3), 1, [1, 0, 0])
        p = policy(nets, s)
        assert p[1] == 0.0
        assert p.sum() == pytest.approx(1.0, abs=1e-9)

    def test_context_free_first_step(self, nets):
        a = policy(nets, HiddenState(4, 3))
        b = policy(nets, HiddenState(4, 3))
        assert np.array_equal(a, b)

    def test_all_called_raises(self):
        nets = LacNets(AgentConfig(2, 2, seed=1))
        s = HiddenState(2, 2)
        s = encode_response(s, 0, [1, 0])
        s = encode_response(s, 1, [0, 1])
        with pytest.raises(numkit.UsageError):
            policy(nets, s)

    def test_renormalization_preserves_ratios(self, nets):
        s0 = HiddenState(4, 3)
        unmasked = numkit.softmax(
            numkit.forward(nets.action_generator, s0.flatten())[0][0])
        masked = masked_policy(unmasked, np.array([False, True, False, False]))[0]
        for i, j in [(0, 2), (0, 3), (2, 3)]:
            assert masked[i] / masked[j] == pytest.approx(
                unmasked[i] / unmasked[j], rel=1e-9)


class TestSelectAction:
    def test_degenerate(self):
        rng = np.random.default_rng(0)
        assert select_action([1.0, 0.0, 0.0], "sample", rng) == 0

    def test_argmax_tie_break(self):
        assert select_action([0.2, 0.5, 0.3], "argmax") == 1
        assert select_action([0.4, 0.4, 0.2], "argmax") == 0

    def test_sampling_frequencies(self):
        rng = np.random.default_rng(123)
        p = np.array([0.5, 0.3, 0.2])
        n = 100_000
        counts = np.bincount(
            [select_action(p, "sample", rng) for _ in range(n)], minlength=3)
        for i in range(3):
            sigma = np.sqrt(p[i] * (1 - p[i]) * n)
            assert abs(counts[i] - p[i] * n) < 3 * sigma


class TestDecide:
    def test_eval_deterministic(self, nets):
        s = encode_response(HiddenState(4, 3), 0, [0.2, 0.3, 0.5])
        assert np.array_equal(decide(nets, s), decide(nets, s))

    def test_zero_state_fixed_prior(self, nets):
        a = decide(nets, HiddenState(4, 3))
        b = decide(nets, HiddenState(4, 3))
        assert np.array_equal(a, b)
        assert a.sum() == pytest.approx(1.0, abs=1e-9)


class TestBaseline:
    def test_untrained_near_zero(self, nets):
        v = agent.baseline_value(nets, HiddenState(4, 3))
        assert abs(v) < 1.0

    def test_purity(self, nets):
        s = encode_response(HiddenState(4, 3), 2, [1, 0, 0])
        assert agent.baseline_value(nets, s) == agent.baseline_value(nets, s)

    def test_two_layer_baseline_builds(self):
        nets = LacNets(AgentConfig(3, 2, baseline_depth=2, seed=4))
        assert len(nets.baseline_net.layers) == 2
        assert nets.baseline_net.layers[0].dropout == 0.5


class TestArchitecture:
    def test_layer_counts(self, nets):
        # two fully connected transforms in the action generator,
        # three in the decision maker
        assert len(nets.action_generator.layers) == 2
        assert len(nets.decision_maker.layers) == 3
        assert nets.action_generator.in_dim == 2 * 4 * 3
        assert nets.action_generator.out_dim == 4
        assert nets.decision_maker.out_dim == 3
        assert nets.baseline_net.out_dim == 1


class TestCheckpoint:
    def test_round_trip(self, nets, tmp_path):
        path = tmp_path / "agent.ckpt"
        agent.save_agent(nets, path)
        loaded = agent.load_agent(path)
        assert loaded.config.n_classifiers == 4
        for a, b in zip(nets.action_generator.parameters(),
                        loaded.action_generator.parameters()):
            assert np.array_equal(a, b)
        s = encode_response(HiddenState(4, 3), 1, [0.1, 0.2, 0.7])
        assert np.array_equal(decide(nets, s), decide(loaded, s))
