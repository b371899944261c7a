"""Brute-force policy oracles and reporting artifacts.

The oracles discretize each response to (argmax class, confident flag)
and search policy classes exhaustively: fixed k-subsets with an
empirical-Bayes readout, and adaptive decision trees whose branches are
the observed discretized responses.  Both are independent of the agent
and serve as references for what a policy can achieve.
"""

import collections
import itertools
from math import comb

import numpy as np

from .pool import PoolError

CONFIDENT_THRESHOLD = 0.9


def discretize(responses):
    """(argmax class, confidence bit) per response row."""
    r = np.asarray(responses)
    argmax = r.argmax(axis=-1)
    conf = (r.max(axis=-1) >= CONFIDENT_THRESHOLD).astype(np.int64)
    return argmax * 2 + conf


def _majority_count(labels):
    if len(labels) == 0:
        return 0, 0
    counts = np.bincount(labels)
    return int(counts.argmax()), int(counts.max())


def oracle_fixed(pool, k, train_split="train", eval_split="test"):
    """Best context-agnostic accuracy over fixed k-subsets.

    Empirical Bayes over the joint discretized pattern, estimated on the
    train split and scored on eval_split.  Returns (accuracy, subset).
    """
    n = pool.n_classifiers
    if comb(n, k) > comb(20, min(k, 10)):
        raise PoolError("too_large", "subset enumeration too large; "
                        "restrict the pool with subset_view first")
    n_patterns_per_clf = 2 * pool.n_classes
    if n_patterns_per_clf ** k > 10 ** 6:
        raise PoolError("too_large", "pattern space too large for Bayes "
                        "tables; reduce k or the class count")
    train = pool.tables[train_split]
    evalt = pool.tables[eval_split]
    train_pat = discretize(train.responses)   # (n_ex, N)
    eval_pat = discretize(evalt.responses)
    global_major, _ = _majority_count(train.labels)
    best = (-1.0, None)
    for subset in itertools.combinations(range(n), k):
        table = {}
        cols = train_pat[:, subset]
        for pattern, label in zip(map(tuple, cols), train.labels):
            table.setdefault(pattern, []).append(int(label))
        rule = {p: _majority_count(np.array(ls))[0]
                for p, ls in table.items()}
        cols_eval = eval_pat[:, subset]
        correct = sum(
            rule.get(tuple(p), global_major) == int(y)
            for p, y in zip(cols_eval, evalt.labels))
        acc = correct / evalt.n_examples
        if acc > best[0]:
            best = (acc, subset)
    return best


def oracle_adaptive(pool, horizon, train_split="train", eval_split="test"):
    """Best adaptive accuracy over depth-`horizon` observation trees.

    Exhaustive search fitted on the train split, scored on eval_split.
    Returns (accuracy, tree) where tree nodes are
    {"classifier": id, "branches": {pattern: subtree}} and leaves are
    {"predict": label}.
    """
    if pool.n_classifiers > 6 or horizon > 3:
        raise PoolError("too_large",
                        "adaptive oracle limited to N <= 6, horizon <= 3")
    train = pool.tables[train_split]
    patterns = discretize(train.responses)
    labels = np.asarray(train.labels, dtype=np.int64)
    global_major, _ = _majority_count(labels)

    def search(indices, called, depth):
        if depth == horizon:
            pred, count = _majority_count(labels[indices])
            if len(indices) == 0:
                pred = global_major
            return count, {"predict": pred}
        best_count, best_tree = -1, None
        for a in range(pool.n_classifiers):
            if a in called:
                continue
            branches = {}
            total = 0
            groups = collections.defaultdict(list)
            for i in indices:
                groups[int(patterns[i, a])].append(i)
            for pat, sub in groups.items():
                cnt, subtree = search(np.array(sub), called | {a}, depth + 1)
                total += cnt
                branches[pat] = subtree
            if total > best_count:
                best_count = total
                best_tree = {"classifier": a, "branches": branches}
        return best_count, best_tree

    _, tree = search(np.arange(train.n_examples), frozenset(), 0)

    evalt = pool.tables[eval_split]
    eval_pat = discretize(evalt.responses)
    correct = 0
    for i in range(evalt.n_examples):
        node = tree
        while "classifier" in node:
            pat = int(eval_pat[i, node["classifier"]])
            nxt = node["branches"].get(pat)
            if nxt is None:
                node = {"predict": global_major}
                break
            node = nxt
        if node["predict"] == int(evalt.labels[i]):
            correct += 1
    return correct / evalt.n_examples, tree


def call_frequency_curve(log_rows, n_classifiers):
    """Per-classifier frequency series across epochs.

    Accepts MetricsLog rows or dict rows read from the metrics CSV.
    Frequencies at every epoch sum to 1 (calls normalized by
    episodes x horizon).
    """
    series = {i: [] for i in range(n_classifiers)}
    epochs = []
    for row in log_rows:
        epochs.append(int(row["epoch"]))
        if "call_frequencies" in row:
            freqs = row["call_frequencies"]
        else:
            freqs = [float(row["call_freq_%d" % i])
                     for i in range(n_classifiers)]
        for i in range(n_classifiers):
            series[i].append(float(freqs[i]))
    return epochs, series


class TrajectoryGraph:
    """Transition graph of evaluation trajectories.

    Nodes are "s" (start) plus classifier ids; edge weights are the
    empirical conditional probability of the next call given the current
    node (terminal visits carry no outgoing edge).
    """

    def __init__(self, trajectories, names=None):
        if not trajectories:
            raise PoolError("empty", "no trajectories")
        self.names = names or {}
        self.total = sum(trajectories.values())
        visits = collections.Counter()
        out_counts = collections.defaultdict(collections.Counter)
        nonterminal = collections.Counter()
        for seq, count in trajectories.items():
            prev = "s"
            for a in seq:
                out_counts[prev][a] += count
                nonterminal[prev] += count
                visits[a] += count
                prev = a
        visits["s"] = self.total
        self.visits = visits
        self.edges = {}
        for u, outs in out_counts.items():
            for v, c in outs.items():
                self.edges[(u, v)] = c / nonterminal[u]

    def node_share(self, node):
        if node == "s":
            return 1.0
        return self.visits.get(node, 0) / self.total

    def to_dot(self):
        """Stable-sorted DOT text with 3-decimal labels."""

        def node_id(n):
            return "s" if n == "s" else "c%d" % n

        def node_label(n):
            if n == "s":
                return "s"
            name = self.names.get(n, "clf%d" % n)
            return "%s (%.3f)" % (name, self.node_share(n))

        lines = ["digraph trajectories {"]
        nodes = sorted(self.visits, key=lambda n: (n != "s", n))
        for n in nodes:
            lines.append('  %s [label="%s"];' % (node_id(n), node_label(n)))
        for (u, v), p in sorted(self.edges.items(),
                                key=lambda kv: (kv[0][0] != "s", str(kv[0]))):
            lines.append('  %s -> %s [label="%.3f"];'
                         % (node_id(u), node_id(v), p))
        lines.append("}")
        return "\n".join(lines) + "\n"


def budget_accuracy_rows(results):
    """Rows for the budget -> accuracy report CSV."""
    return [{"horizon": h, "accuracy": "%.10g" % acc}
            for h, acc in sorted(results.items())]
