"""LAC-sm agent: table-based hidden state, action generator, decision
maker and baseline network.

The hidden state is two N x C tables (responses and call masks),
flattened to a 2*N*C vector in the fixed layout
[response rows || mask rows] for every net input.
"""

import json
import struct

import numpy as np

from . import numkit
from .numkit import UsageError, forward, softmax


class HiddenState:
    """Response table plus mask table for one episode."""

    def __init__(self, n_classifiers, n_classes):
        self.response_table = np.zeros((n_classifiers, n_classes),
                                       dtype=np.float32)
        self.mask_table = np.zeros((n_classifiers, n_classes),
                                   dtype=np.float32)

    def copy(self):
        out = HiddenState(*self.response_table.shape)
        out.response_table[:] = self.response_table
        out.mask_table[:] = self.mask_table
        return out

    def called(self):
        """Boolean vector: which classifiers have been encoded."""
        return self.mask_table[:, 0] > 0

    def flatten(self):
        return np.concatenate([self.response_table.ravel(),
                               self.mask_table.ravel()])


def encode_response(state, classifier_id, response):
    """Fold one classifier's response into a fresh state (phi-2)."""
    if state.mask_table[classifier_id, 0] != 0:
        raise UsageError("response for classifier %d already encoded"
                         % classifier_id)
    out = state.copy()
    out.response_table[classifier_id] = response
    out.mask_table[classifier_id] = 1.0
    return out


class AgentConfig:
    """Sizes and switches of the three nets."""

    def __init__(self, n_classifiers, n_classes, action_hidden=64,
                 decision_hidden=128, baseline_depth=1,
                 baseline_dropout=0.5, hard_mask=True, seed=0):
        if action_hidden < 1 or decision_hidden < 1:
            raise numkit.ConfigurationError("hidden sizes must be positive")
        if baseline_depth not in (1, 2):
            raise numkit.ConfigurationError("baseline_depth must be 1 or 2")
        self.n_classifiers = n_classifiers
        self.n_classes = n_classes
        self.action_hidden = action_hidden
        self.decision_hidden = decision_hidden
        self.baseline_depth = baseline_depth
        self.baseline_dropout = baseline_dropout
        self.hard_mask = hard_mask
        self.seed = seed

    def to_json(self):
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, d):
        return cls(**d)


class LacNets:
    """Action generator, decision maker and baseline network."""

    def __init__(self, config, rng=None):
        self.config = config
        rng = np.random.default_rng(config.seed) if rng is None else rng
        d = 2 * config.n_classifiers * config.n_classes
        self.action_generator = numkit.init_dense(
            [d, config.action_hidden, config.n_classifiers], rng=rng)
        self.decision_maker = numkit.init_dense(
            [d, config.decision_hidden, config.decision_hidden,
             config.n_classes], rng=rng)
        if config.baseline_depth == 1:
            self.baseline_net = numkit.init_dense([d, 1], rng=rng)
        else:
            self.baseline_net = numkit.init_dense(
                [d, config.decision_hidden, 1],
                dropout_rates=[config.baseline_dropout, 0.0], rng=rng)

    def nets(self):
        return [self.action_generator, self.decision_maker, self.baseline_net]


def masked_policy(probs, called):
    """Zero already-called classifiers and renormalize each row."""
    probs = np.atleast_2d(probs).copy()
    called = np.atleast_2d(called)
    probs[called] = 0.0
    totals = probs.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise UsageError("no callable classifier left")
    return probs / totals


def policy(nets, state, mode="eval"):
    """Distribution over classifiers for the next call (phi-1)."""
    logits, _ = forward(nets.action_generator, state.flatten(), mode=mode)
    probs = softmax(logits[0])
    if nets.config.hard_mask:
        called = state.called()
        if called.all():
            raise UsageError("all classifiers already called")
        probs = masked_policy(probs, called)[0]
    return probs


def select_action(policy_vector, mode="sample", rng=None):
    """Pick a classifier id; argmax ties break to the lowest index."""
    p = np.asarray(policy_vector, dtype=np.float64)
    if mode == "argmax":
        return int(p.argmax())
    if rng is None:
        raise UsageError("sample mode needs an rng")
    return int(rng.choice(len(p), p=p / p.sum()))


def decide(nets, state, mode="eval"):
    """Class distribution from the current hidden state."""
    logits, _ = forward(nets.decision_maker, state.flatten(), mode=mode)
    return softmax(logits[0])


def baseline_value(nets, state, mode="eval", rng=None):
    """Predicted return of the current state."""
    out, _ = forward(nets.baseline_net, state.flatten(), mode=mode, rng=rng)
    return float(out[0, 0])


AGENT_MAGIC = b"LACAG1\x00\x00"


def save_agent(nets, path):
    """Agent checkpoint: JSON config header plus the three net dumps."""
    header = json.dumps(nets.config.to_json()).encode()
    with open(path, "wb") as fh:
        fh.write(AGENT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for net in nets.nets():
            numkit.save_net(net, fh)


def load_agent(path):
    with open(path, "rb") as fh:
        if fh.read(8) != AGENT_MAGIC:
            raise numkit.ConfigurationError("bad agent checkpoint magic")
        (hlen,) = struct.unpack("<I", fh.read(4))
        config = AgentConfig.from_json(json.loads(fh.read(hlen).decode()))
        nets = LacNets(config)
        nets.action_generator = numkit.load_net(fh)
        nets.decision_maker = numkit.load_net(fh)
        nets.baseline_net = numkit.load_net(fh)
    return nets
