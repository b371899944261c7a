"""Context-agnostic stacking baselines: MLPs over concatenated classifier
responses, exhaustive best-subset search, and a k-NN voter.
"""

import itertools

import numpy as np

from . import numkit
from .numkit import backward, forward, softmax


class StackerConfig:
    """Depth, widths and training knobs for one stacker fit."""

    DEFAULT_WIDTHS = {3: (256, 128), 5: (256, 256, 128, 64)}

    def __init__(self, depth=3, hidden_widths=None, subset=None, epochs=60,
                 learning_rate=1e-3, batch_size=128, seed=0):
        if depth not in (3, 5) and hidden_widths is None:
            raise numkit.ConfigurationError(
                "depth must be 3 or 5 unless widths are given")
        self.depth = depth
        self.hidden_widths = (tuple(hidden_widths) if hidden_widths
                              else self.DEFAULT_WIDTHS[depth])
        self.subset = list(subset) if subset is not None else None
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.seed = seed


def stack_inputs(pool, split, subset):
    """Concatenated response vectors of the subset classifiers."""
    tab = pool.tables[split]
    x = tab.responses[:, subset, :].reshape(tab.n_examples, -1)
    return x.astype(np.float32), tab.labels.astype(np.int64)


def train_stacker(pool, config):
    """Cross-entropy-train an MLP on stacked responses.

    Returns (net, accuracies dict over available splits).
    """
    subset = config.subset
    if subset is None:
        subset = list(range(pool.n_classifiers))
    if not subset:
        raise numkit.ConfigurationError("classifier subset must be nonempty")
    rng = np.random.default_rng(config.seed)
    x, y = stack_inputs(pool, "train", subset)
    dims = [x.shape[1], *config.hidden_widths, pool.n_classes]
    net = numkit.init_dense(dims, rng=rng)
    opt = numkit.OptimizerState(net.parameters(), kind="adam",
                                learning_rate=config.learning_rate)
    onehot = np.eye(pool.n_classes, dtype=np.float32)
    n = len(x)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            logits, tape = forward(net, x[idx])
            probs = softmax(logits)
            g = (probs - onehot[y[idx]]) / len(idx)
            grads, _ = backward(net, tape, g.astype(np.float32))
            numkit.optimizer_step(net.parameters(), grads, opt)
    accs = {}
    for split in pool.tables:
        sx, sy = stack_inputs(pool, split, subset)
        logits, _ = forward(net, sx)
        accs[split] = float((np.asarray(logits).argmax(axis=1) == sy).mean())
    return net, accs


def best_subset(pool, k, config):
    """Train one stacker per k-subset; argmax by validation accuracy.

    Ties break to the lexicographically smallest subset.  Falls back to
    the test split when the pool has no validation split.
    """
    if k > pool.n_classifiers:
        raise numkit.ConfigurationError("k exceeds pool size")
    select_split = "val" if "val" in pool.tables else "test"
    best = None
    results = []
    for subset in itertools.combinations(range(pool.n_classifiers), k):
        cfg = StackerConfig(depth=config.depth,
                            hidden_widths=config.hidden_widths,
                            subset=list(subset), epochs=config.epochs,
                            learning_rate=config.learning_rate,
                            batch_size=config.batch_size, seed=config.seed)
        _, accs = train_stacker(pool, cfg)
        results.append((subset, accs))
        if best is None or accs[select_split] > best[1][select_split]:
            best = (subset, accs)
    return best[0], best[1], results


def knn_stacker(pool, k_neighbors, subset=None, eval_split="test"):
    """Majority vote among Euclidean nearest train neighbors.

    Distance ties prefer the lower train index; vote ties prefer the
    lower class index.
    """
    if k_neighbors < 1:
        raise numkit.ConfigurationError("k_neighbors must be >= 1")
    if subset is None:
        subset = list(range(pool.n_classifiers))
    train_x, train_y = stack_inputs(pool, "train", subset)
    test_x, test_y = stack_inputs(pool, eval_split, subset)
    correct = 0
    bs = 256
    for start in range(0, len(test_x), bs):
        chunk = test_x[start:start + bs]
        d2 = ((chunk[:, None, :].astype(np.float64)
               - train_x[None, :, :]) ** 2).sum(axis=2)
        # stable mergesort keeps lower train index first on distance ties
        order = np.argsort(d2, axis=1, kind="stable")[:, :k_neighbors]
        votes = train_y[order]
        for i, row in enumerate(votes):
            counts = np.bincount(row, minlength=pool.n_classes)
            pred = int(counts.argmax())
            if pred == test_y[start + i]:
                correct += 1
    return correct / len(test_x)
