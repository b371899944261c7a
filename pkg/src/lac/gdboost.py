"""GD-MC gradient boosting over dense-net base learners, plus bagging
with weight transfer.

Base learners regress the negative functional gradient of a
codeword-margin loss with MSE; each accepted round adds v * beta * phi
to the committee, with beta found by bisection on dL/dbeta.
"""

import copy
import csv

import numpy as np

from . import numkit
from .numkit import backward, forward


class Codebook:
    """Symmetric codewords: +1 at the class coordinate, -1/(M-1) elsewhere."""

    def __init__(self, n_classes):
        m = n_classes
        self.codewords = np.full((m, m), -1.0 / (m - 1))
        np.fill_diagonal(self.codewords, 1.0)

    @property
    def n_classes(self):
        return self.codewords.shape[0]


def gdmc_loss(outputs, labels, codebook):
    """Sum over samples of sum_{j != z} exp((<y_j,f> - <y_z,f>) / 2)."""
    f = np.asarray(outputs, dtype=np.float64)
    proj = f @ codebook.codewords.T            # (n, M): <y_j, f_i>
    correct = proj[np.arange(len(labels)), labels]
    margins = 0.5 * (proj - correct[:, None])
    e = np.exp(margins)
    e[np.arange(len(labels)), labels] = 0.0
    return float(e.sum())


def gradient_targets(outputs, labels, codebook):
    """Negative gradient of gdmc_loss w.r.t. each committee output."""
    f = np.asarray(outputs, dtype=np.float64)
    n = len(labels)
    proj = f @ codebook.codewords.T
    correct = proj[np.arange(n), labels]
    e = np.exp(0.5 * (proj - correct[:, None]))
    e[np.arange(n), labels] = 0.0
    # dL/df_i = sum_j e_ij * (y_j - y_z)/2
    grad = 0.5 * (e @ codebook.codewords
                  - e.sum(axis=1)[:, None] * codebook.codewords[labels])
    return -grad


class Committee:
    """Additive model f(x) = sum_m v * beta_m * phi_m(x)."""

    def __init__(self, shrinkage=0.5):
        if not 0.0 < shrinkage <= 1.0:
            raise numkit.ConfigurationError("shrinkage must be in (0,1]")
        self.shrinkage = shrinkage
        self.members = []  # (net, beta)

    def predict(self, features):
        out = None
        for net, beta in self.members:
            y, _ = forward(net, features)
            y = self.shrinkage * beta * np.asarray(y, dtype=np.float64)
            out = y if out is None else out + y
        if out is None:
            raise numkit.UsageError("empty committee")
        return out

    def predict_labels(self, features):
        return self.predict(features).argmax(axis=1)


def fit_base_learner(features, targets, arch, epochs=200, learning_rate=1e-2,
                     batch_size=64, rng=None, init_from=None):
    """MSE-regress a dense net onto the gradient targets."""
    rng = np.random.default_rng(0) if rng is None else rng
    if init_from is not None:
        net = copy.deepcopy(init_from)
    else:
        net = numkit.init_dense(arch, rng=rng)
    opt = numkit.OptimizerState(net.parameters(), kind="adam",
                                learning_rate=learning_rate)
    n = len(features)
    targets = np.asarray(targets, dtype=np.float32)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            out, tape = forward(net, features[idx])
            g = 2.0 * (out - targets[idx]) / (len(idx) * out.shape[1])
            grads, _ = backward(net, tape, g.astype(np.float32))
            numkit.optimizer_step(net.parameters(), grads, opt)
    return net


def binary_search_beta(committee_outputs, candidate_outputs, labels,
                       codebook, beta_max=8.0, iters=20):
    """Bisection on the sign of dL/dbeta along the candidate direction.

    Returns (beta, descent_flag); a non-descent direction gives (0, False).
    Shrinkage is applied outside, so the search is over the raw step.
    """
    base = np.asarray(committee_outputs, dtype=np.float64)
    cand = np.asarray(candidate_outputs, dtype=np.float64)

    def dloss(beta):
        f = base + beta * cand
        n = len(labels)
        proj = f @ codebook.codewords.T
        correct = proj[np.arange(n), labels]
        e = np.exp(0.5 * (proj - correct[:, None]))
        e[np.arange(n), labels] = 0.0
        cproj = cand @ codebook.codewords.T
        ccorrect = cproj[np.arange(n), labels]
        return float((e * 0.5 * (cproj - ccorrect[:, None])).sum())

    if dloss(0.0) >= 0.0:
        return 0.0, False
    lo, hi = 0.0, beta_max
    if dloss(hi) < 0.0:
        return hi, True
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if dloss(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), True


class BoostConfig:
    def __init__(self, rounds, arch, shrinkage=0.5, weight_transfer=True,
                 epochs_per_round=150, learning_rate=1e-2, beta_max=8.0,
                 bisect_iters=20, seed=0):
        self.rounds = rounds
        self.arch = list(arch)
        self.shrinkage = shrinkage
        self.weight_transfer = weight_transfer
        self.epochs_per_round = epochs_per_round
        self.learning_rate = learning_rate
        self.beta_max = beta_max
        self.bisect_iters = bisect_iters
        self.seed = seed


def _accuracy(committee, features, labels):
    return float((committee.predict_labels(features) == labels).mean())


def boost(train_x, train_y, val_x, val_y, config):
    """GD-MC boosting loop; returns (Committee, curve rows).

    Rounds whose fitted direction is not a descent direction are recorded
    as no-ops and skipped.
    """
    rng = np.random.default_rng(config.seed)
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    codebook = Codebook(n_classes)
    committee = Committee(config.shrinkage)
    f_train = np.zeros((len(train_x), n_classes))
    f_val = np.zeros((len(val_x), n_classes))
    curve = []
    prev_net = None
    for rnd in range(1, config.rounds + 1):
        targets = gradient_targets(f_train, train_y, codebook)
        net = fit_base_learner(
            train_x, targets, config.arch, epochs=config.epochs_per_round,
            learning_rate=config.learning_rate, rng=rng,
            init_from=prev_net if config.weight_transfer else None)
        cand_train, _ = forward(net, train_x)
        cand_train = np.asarray(cand_train, dtype=np.float64)
        beta, descent = binary_search_beta(
            f_train, cand_train, train_y, codebook,
            beta_max=config.beta_max, iters=config.bisect_iters)
        if descent:
            committee.members.append((net, beta))
            prev_net = net
            f_train = f_train + config.shrinkage * beta * cand_train
            cand_val, _ = forward(net, val_x)
            f_val = f_val + config.shrinkage * beta * np.asarray(
                cand_val, dtype=np.float64)
        curve.append({
            "round": rnd,
            "accepted": int(descent),
            "beta": beta if descent else 0.0,
            "train_loss": gdmc_loss(f_train, train_y, codebook),
            "val_loss": gdmc_loss(f_val, val_y, codebook),
            "train_acc": float((f_train.argmax(axis=1) == train_y).mean()),
            "val_acc": float((f_val.argmax(axis=1) == val_y).mean()),
        })
    return committee, curve


class BagConfig:
    def __init__(self, rounds, arch, weight_transfer=False,
                 epochs_per_round=150, learning_rate=1e-2, seed=0):
        self.rounds = rounds
        self.arch = list(arch)
        self.weight_transfer = weight_transfer
        self.epochs_per_round = epochs_per_round
        self.learning_rate = learning_rate
        self.seed = seed


def bag(train_x, train_y, val_x, val_y, config):
    """Bootstrap-aggregated committee with uniform weights.

    Each round resamples len(train) examples with replacement and fits a
    codeword regressor; the ensemble output is the member mean.
    """
    rng = np.random.default_rng(config.seed)
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    codebook = Codebook(n_classes)
    committee = Committee(shrinkage=1.0)
    val_sum = np.zeros((len(val_x), n_classes))
    curve = []
    prev_net = None
    for rnd in range(1, config.rounds + 1):
        idx = rng.integers(len(train_x), size=len(train_x))
        targets = codebook.codewords[train_y[idx]]
        net = fit_base_learner(
            train_x[idx], targets, config.arch,
            epochs=config.epochs_per_round,
            learning_rate=config.learning_rate, rng=rng,
            init_from=prev_net if config.weight_transfer else None)
        committee.members.append((net, 1.0 / config.rounds))
        prev_net = net
        out, _ = forward(net, val_x)
        val_sum += np.asarray(out, dtype=np.float64)
        val_mean = val_sum / rnd
        member_acc = float((np.asarray(out).argmax(axis=1) == val_y).mean())
        curve.append({
            "round": rnd,
            "member_val_acc": member_acc,
            "val_acc": float((val_mean.argmax(axis=1) == val_y).mean()),
        })
    # uniform mean over however many members were fit
    committee.members = [(net, 1.0 / len(committee.members))
                         for net, _ in committee.members]
    return committee, curve


def write_curve_csv(curve, path):
    fields = list(curve[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in curve:
            w.writerow({k: ("%.10g" % v if isinstance(v, float) else v)
                        for k, v in row.items()})
