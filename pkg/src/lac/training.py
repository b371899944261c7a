"""Hybrid-loss training of the LAC agent.

Total loss = gamma * (action_loss + alpha * entropy_bonus) + supervised,
with the baseline net trained alongside on MSE-to-return.  Gradients are
isolated by construction: supervised feeds the decision maker only, the
policy terms feed the action generator only, the baseline loss feeds the
baseline net only.

Rollouts are vectorized over the batch; every step runs one batched
forward per net.
"""

import collections
import csv

import numpy as np

from . import numkit
from .agent import LacNets, masked_policy
from .numkit import NonFiniteGradient, UsageError, backward, forward, softmax

PROB_FLOOR = 1e-12


class TrainConfig:
    """Every knob of the training loop."""

    def __init__(self, horizon, gamma=0.01, alpha=0.5, beta=1e-4, lam=0.0,
                 epochs=200, learning_rate=1e-3, lr_drop_epochs=(170, 190),
                 batch_size=128, optimizer="adam", eval_mode="argmax",
                 seed=0):
        if min(gamma, alpha, beta) < 0:
            raise numkit.ConfigurationError("gamma/alpha/beta must be >= 0")
        if horizon < 1:
            raise numkit.ConfigurationError("horizon must be >= 1")
        if any(e >= epochs for e in lr_drop_epochs):
            pass  # allowed: drops outside the run simply never fire
        self.horizon = horizon
        self.gamma = gamma
        self.alpha = alpha
        self.beta = beta
        self.lam = lam
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lr_drop_epochs = tuple(lr_drop_epochs)
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.eval_mode = eval_mode
        self.seed = seed

    def to_json(self):
        d = dict(self.__dict__)
        d["lr_drop_epochs"] = list(self.lr_drop_epochs)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "lr_drop_epochs" in d:
            d["lr_drop_epochs"] = tuple(d["lr_drop_epochs"])
        return cls(**d)


class BatchTrace:
    """Everything one batch rollout recorded, for losses and gradients."""

    def __init__(self):
        self.hard_mask = True
        self.labels = None          # (K,)
        self.actions = []           # per step (K,)
        self.policies = []          # per step (K, N) masked+renormalized
        self.called_before = []     # per step (K, N) bool, state before action
        self.action_logit_tapes = []
        self.decision_probs = []    # per step (K, C)
        self.decision_tapes = []
        self.baseline_values = []   # per step (K,)
        self.baseline_tapes = []
        self.rewards = None         # (K,)
        self.costs = None           # (K,)

    @property
    def horizon(self):
        return len(self.actions)

    @property
    def batch_size(self):
        return len(self.labels)


def _sample_rows(probs, rng):
    """One categorical draw per row."""
    u = rng.random(probs.shape[0])
    cum = probs.cumsum(axis=1)
    acts = (cum < u[:, None]).sum(axis=1)
    return np.minimum(acts, probs.shape[1] - 1)


def rollout(pool, split, nets, config, batch_indices, rng=None,
            action_mode="sample", train_mode=False):
    """Run one batch of episodes, recording tapes for the backward pass."""
    table = pool.tables[split]
    cfg = nets.config
    K = len(batch_indices)
    N, C = cfg.n_classifiers, cfg.n_classes
    if config.horizon > N and cfg.hard_mask:
        raise UsageError("horizon exceeds pool size in hard-mask mode")
    costs = pool.costs()
    resp = np.zeros((K, N, C), dtype=np.float32)
    mask = np.zeros((K, N, C), dtype=np.float32)
    called = np.zeros((K, N), dtype=bool)
    trace = BatchTrace()
    trace.hard_mask = cfg.hard_mask
    trace.labels = table.labels[batch_indices].astype(np.int64)
    cost_acc = np.zeros(K)
    rows = np.arange(K)
    net_mode = "train" if train_mode else "eval"
    for _ in range(config.horizon):
        x_pre = np.concatenate([resp.reshape(K, -1), mask.reshape(K, -1)],
                               axis=1)
        logits, tape_a = forward(nets.action_generator, x_pre)
        probs = softmax(logits)
        if cfg.hard_mask:
            probs = masked_policy(probs, called)
        if action_mode == "sample":
            acts = _sample_rows(probs, rng)
            if cfg.hard_mask:
                # float round-off can in principle land on a zeroed id
                bad = called[rows, acts]
                for k in np.flatnonzero(bad):
                    acts[k] = int(np.argmax(probs[k]))
        else:
            acts = probs.argmax(axis=1)
        b_out, tape_b = forward(nets.baseline_net, x_pre, mode=net_mode,
                                rng=rng)
        trace.called_before.append(called.copy())
        responses = table.responses[batch_indices, acts]
        resp[rows, acts] = responses
        mask[rows, acts] = 1.0
        called[rows, acts] = True
        cost_acc += costs[acts]
        x_post = np.concatenate([resp.reshape(K, -1), mask.reshape(K, -1)],
                                axis=1)
        dec_logits, tape_d = forward(nets.decision_maker, x_post)
        trace.actions.append(acts)
        trace.policies.append(probs)
        trace.action_logit_tapes.append(tape_a)
        trace.decision_probs.append(softmax(dec_logits))
        trace.decision_tapes.append(tape_d)
        trace.baseline_values.append(b_out[:, 0].astype(np.float64))
        trace.baseline_tapes.append(tape_b)
    predictions = trace.decision_probs[-1].argmax(axis=1)
    correct = (predictions == trace.labels).astype(np.float64)
    trace.costs = cost_acc
    trace.rewards = correct - config.lam * cost_acc
    return trace


def supervised_loss(trace):
    """Mean cross-entropy of the decision at every step (intermediate
    supervision)."""
    total = 0.0
    K = trace.batch_size
    for probs in trace.decision_probs:
        p = np.maximum(probs[np.arange(K), trace.labels], PROB_FLOOR)
        total += -np.log(p).sum()
    return total / (K * trace.horizon)


def advantages(trace):
    """R - b(s_{t-1}) per (episode, step); baseline treated as constant."""
    return [trace.rewards - b for b in trace.baseline_values]


def action_loss(trace):
    """-(1/K) sum_k sum_t A_{k,t} log pi(a_{k,t} | s_{k,t-1})."""
    K = trace.batch_size
    total = 0.0
    for t, acts in enumerate(trace.actions):
        logp = np.log(np.maximum(
            trace.policies[t][np.arange(K), acts], PROB_FLOOR))
        adv = trace.rewards - trace.baseline_values[t]
        total += (adv * logp).sum()
    return -total / K


def entropy_bonus(trace, beta):
    """Negative-entropy terms of the loss.

    term1: batch-mean action distribution per step, steps 2..c only (the
    first step is context-free).  term2: per-episode distribution over
    all steps, scaled by beta and averaged.
    """
    term1 = 0.0
    for probs in trace.policies[1:]:
        pbar = probs.mean(axis=0)
        nz = pbar > 0
        term1 += (pbar[nz] * np.log(pbar[nz])).sum()
    term2 = 0.0
    for probs in trace.policies:
        p = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(p > 0, p * np.log(np.maximum(p, PROB_FLOOR)), 0.0)
        term2 += plogp.sum()
    term2 /= trace.batch_size * trace.horizon
    return term1 + beta * term2


def baseline_loss(trace):
    """MSE between b(s_{t-1}) and the episode return."""
    total = 0.0
    for b in trace.baseline_values:
        total += ((b - trace.rewards) ** 2).sum()
    return total / (trace.batch_size * trace.horizon)


def total_loss(trace, config):
    """Scalar components and the combined training objective."""
    l_s = supervised_loss(trace)
    l_a = action_loss(trace)
    l_h = entropy_bonus(trace, config.beta)
    l_b = baseline_loss(trace)
    total = config.gamma * (l_a + config.alpha * l_h) + l_s
    return {"loss_total": total, "loss_action": l_a, "loss_entropy": l_h,
            "loss_supervised": l_s, "loss_baseline": l_b}


def policy_logit_grads(trace, config):
    """d(total loss)/d(action logits) per step, analytic.

    The policy is a masked renormalized softmax, i.e. a plain softmax
    over the uncalled subset; for a per-probability gradient g the logit
    gradient is pi * (g - <g, pi>) on that subset.
    """
    K = trace.batch_size
    grads = []
    pbar_cache = [p.mean(axis=0) for p in trace.policies]
    for t in range(trace.horizon):
        probs = trace.policies[t]
        acts = trace.actions[t]
        adv = trace.rewards - trace.baseline_values[t]
        g = np.zeros_like(probs)
        # action loss: d/dpi(a) of -(A/K) log pi(a)
        p_a = np.maximum(probs[np.arange(K), acts], PROB_FLOOR)
        g[np.arange(K), acts] += -(adv / K) / p_a * config.gamma
        # entropy term1 (steps >= 2): d/dpi = (1/K)(log pbar + 1)
        if t >= 1:
            pbar = pbar_cache[t]
            live = pbar > 0
            gt1 = np.zeros_like(pbar)
            gt1[live] = (np.log(pbar[live]) + 1.0) / K
            g += (config.gamma * config.alpha) * gt1[None, :]
        # entropy term2: beta/(K*c) * (log pi + 1)
        live = probs > 0
        gt2 = np.zeros_like(probs)
        gt2[live] = (np.log(probs[live]) + 1.0)
        g += (config.gamma * config.alpha * config.beta
              / (K * trace.horizon)) * gt2
        # chain through renormalized softmax over the uncalled subset
        inner = (g * probs).sum(axis=1, keepdims=True)
        logit_grad = probs * (g - inner)
        if trace.hard_mask:
            logit_grad[trace.called_before[t]] = 0.0
        grads.append(logit_grad.astype(np.float32))
    return grads


def accumulate_gradients(nets, trace, config):
    """Backward pass for all three nets; returns grads per net."""
    K = trace.batch_size
    c = trace.horizon
    a_grads = [np.zeros_like(p) for p in nets.action_generator.parameters()]
    d_grads = [np.zeros_like(p) for p in nets.decision_maker.parameters()]
    b_grads = [np.zeros_like(p) for p in nets.baseline_net.parameters()]
    logit_grads = policy_logit_grads(trace, config)
    onehot = np.eye(nets.config.n_classes)
    for t in range(c):
        g, _ = backward(nets.action_generator, trace.action_logit_tapes[t],
                        logit_grads[t])
        for acc, gr in zip(a_grads, g):
            acc += gr
        dec = trace.decision_probs[t]
        dg = (dec - onehot[trace.labels]) / (K * c)
        g, _ = backward(nets.decision_maker, trace.decision_tapes[t],
                        dg.astype(np.float32))
        for acc, gr in zip(d_grads, g):
            acc += gr
        bg = 2.0 * (trace.baseline_values[t] - trace.rewards) / (K * c)
        g, _ = backward(nets.baseline_net, trace.baseline_tapes[t],
                        bg[:, None].astype(np.float32))
        for acc, gr in zip(b_grads, g):
            acc += gr
    return a_grads, d_grads, b_grads


def evaluate(pool, nets, config, split, mode="argmax", rng=None):
    """Deterministic (in argmax mode) evaluation over a whole split."""
    table = pool.tables[split]
    n = table.n_examples
    stats = {"n": n}
    correct = 0
    call_counts = np.zeros(nets.config.n_classifiers)
    trajectories = collections.Counter()
    cost_total = 0.0
    first_step = None
    bs = 1024
    for start in range(0, n, bs):
        idx = np.arange(start, min(start + bs, n))
        trace = rollout(pool, split, nets, config, idx, rng=rng,
                        action_mode=mode)
        if first_step is None:
            first_step = trace.policies[0]
        preds = trace.decision_probs[-1].argmax(axis=1)
        correct += int((preds == trace.labels).sum())
        for acts in trace.actions:
            np.add.at(call_counts, acts, 1)
        cost_total += trace.costs.sum()
        seqs = np.stack(trace.actions, axis=1)
        for row in seqs:
            trajectories[tuple(int(a) for a in row)] += 1
    stats["accuracy"] = correct / n
    stats["mean_cost"] = cost_total / n
    stats["call_frequencies"] = call_counts / (n * config.horizon)
    stats["trajectories"] = trajectories
    stats["first_step_policy"] = first_step
    return stats


class MetricsLog:
    """Per-epoch rows; written as the CSV contract of the CLI."""

    def __init__(self, n_classifiers):
        self.n_classifiers = n_classifiers
        self.rows = []

    def header(self):
        return (["epoch", "loss_total", "loss_action", "loss_entropy",
                 "loss_supervised", "loss_baseline", "test_accuracy"]
                + ["call_freq_%d" % i for i in range(self.n_classifiers)])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows:
                out = [row["epoch"]]
                for key in self.header()[1:7]:
                    out.append("%.10g" % row[key])
                for f in row["call_frequencies"]:
                    out.append("%.10g" % f)
                w.writerow(out)


def train(pool, nets, config, eval_split="test", log_hook=None):
    """Full training loop; returns (nets, MetricsLog).

    Deterministic under a fixed config seed.  On non-finite gradients the
    loop aborts and returns the state after the last good epoch.
    """
    rng = np.random.default_rng(config.seed)
    table = pool.tables["train"]
    n = table.n_examples
    opts = {}
    for name, net in [("action", nets.action_generator),
                      ("decision", nets.decision_maker),
                      ("baseline", nets.baseline_net)]:
        opts[name] = numkit.OptimizerState(
            net.parameters(), kind=config.optimizer,
            learning_rate=config.learning_rate)
    log = MetricsLog(nets.config.n_classifiers)
    train_dropout = any(l.dropout > 0 for l in nets.baseline_net.layers)
    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate * (
            0.1 ** sum(epoch > e for e in config.lr_drop_epochs))
        for o in opts.values():
            o.learning_rate = lr
        perm = rng.permutation(n)
        sums = collections.defaultdict(float)
        n_batches = 0
        try:
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                trace = rollout(pool, "train", nets, config, idx, rng=rng,
                                action_mode="sample", train_mode=train_dropout)
                losses = total_loss(trace, config)
                if not np.isfinite(losses["loss_total"]):
                    raise NonFiniteGradient("non-finite loss at epoch %d"
                                            % epoch)
                ag, dg, bg = accumulate_gradients(nets, trace, config)
                numkit.optimizer_step(nets.action_generator.parameters(), ag,
                                      opts["action"])
                numkit.optimizer_step(nets.decision_maker.parameters(), dg,
                                      opts["decision"])
                numkit.optimizer_step(nets.baseline_net.parameters(), bg,
                                      opts["baseline"])
                for k, v in losses.items():
                    sums[k] += v
                n_batches += 1
        except NonFiniteGradient:
            break
        stats = evaluate(pool, nets, config, eval_split,
                         mode=config.eval_mode)
        row = {k: sums[k] / n_batches for k in
               ("loss_total", "loss_action", "loss_entropy",
                "loss_supervised", "loss_baseline")}
        row["epoch"] = epoch
        row["test_accuracy"] = stats["accuracy"]
        row["call_frequencies"] = stats["call_frequencies"]
        row["first_step_policy"] = stats["first_step_policy"]
        log.rows.append(row)
        if log_hook is not None:
            log_hook(row)
    return nets, log
