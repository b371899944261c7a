"""Episodic environment: one episode classifies one example by querying
classifiers from the pool, then emits a prediction and gets the reward
R = 1[correct] - lambda * accumulated cost.
"""

from .numkit import UsageError
from .pool import PoolError


class RewardConfig:
    """Cost weight and the fixed number of classifier calls per episode."""

    def __init__(self, horizon, lam=0.0):
        if horizon < 1:
            raise PoolError("bad_horizon", "horizon must be >= 1")
        if lam < 0:
            raise PoolError("bad_lambda", "lambda must be nonnegative")
        self.horizon = horizon
        self.lam = lam


class EpisodeState:
    """Progress of one episode: ordered calls and accumulated cost."""

    def __init__(self, example_index):
        self.example_index = example_index
        self.called = []
        self.accumulated_cost = 0.0

    @property
    def t(self):
        return len(self.called)


class Environment:
    """Wraps a pool split as the agent's MDP."""

    def __init__(self, pool, split, reward_config, hard_mask=True):
        if reward_config.horizon > pool.n_classifiers and hard_mask:
            raise PoolError("bad_horizon",
                            "horizon exceeds pool size in hard-mask mode")
        self.pool = pool
        self.table = pool.tables[split]
        self.config = reward_config
        self.hard_mask = hard_mask

    def reset(self, example_index):
        if not 0 <= example_index < self.table.n_examples:
            raise UsageError("example index %d out of range" % example_index)
        return EpisodeState(example_index)

    def query(self, state, classifier_id):
        """Reveal one classifier's stored response; charges its cost.

        Returns (response, cost, state).  The state is advanced in place.
        """
        if state.t >= self.config.horizon:
            raise UsageError("horizon exceeded")
        if not 0 <= classifier_id < self.pool.n_classifiers:
            raise UsageError("classifier id out of range")
        if self.hard_mask and classifier_id in state.called:
            raise UsageError(
                "policy bug: classifier %d already called" % classifier_id)
        response = self.table.responses[state.example_index, classifier_id]
        cost = self.pool.specs[classifier_id].cost
        state.called.append(classifier_id)
        state.accumulated_cost += cost
        return response, cost, state

    def finalize(self, state, prediction):
        """Terminal reward for the episode's prediction."""
        if state.t != self.config.horizon:
            raise UsageError("finalize before horizon reached")
        label = int(self.table.labels[state.example_index])
        r = 1.0 if prediction == label else 0.0
        return r - self.config.lam * state.accumulated_cost
