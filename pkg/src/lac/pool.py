"""Classifier pools: synthetic oracle pools and pools imported from
response-table files.

A pool is the agent's whole world: per-example, per-classifier class
probability vectors plus labels.  Tables are stored one file per split
in the LACRT1 binary format documented in `save_table`.
"""

import json
import struct

import numpy as np

TABLE_MAGIC = b"LACRT1\x00\x00"
SPLIT_TAGS = {"train": 0, "val": 1, "test": 2}
SPLIT_NAMES = {v: k for k, v in SPLIT_TAGS.items()}

OFF_UNIFORM_SUBSET = "uniform_over_subset"
OFF_CONFIDENT_RANDOM = "confident_random_in_subset"
OFF_UNIFORM_ALL = "uniform_over_all"
_OFF_BEHAVIORS = (OFF_UNIFORM_SUBSET, OFF_CONFIDENT_RANDOM, OFF_UNIFORM_ALL)


class PoolError(Exception):
    """Pool validation/load failure with a machine-readable code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class ClassifierSpec:
    """Identity, cost and trained class subset of one pool member."""

    def __init__(self, id, name, cost, class_subset, source="synthetic",
                 arch=None, test_accuracy=None):
        if cost < 0:
            raise PoolError("bad_cost", "cost must be nonnegative")
        if not class_subset:
            raise PoolError("empty_subset", "class_subset must be nonempty")
        self.id = id
        self.name = name
        self.cost = float(cost)
        self.class_subset = sorted(set(class_subset))
        self.source = source
        self.arch = arch
        self.test_accuracy = test_accuracy

    def to_json(self):
        d = {"id": self.id, "name": self.name, "cost": self.cost,
             "class_subset": self.class_subset}
        if self.arch is not None:
            d["arch"] = self.arch
        if self.test_accuracy is not None:
            d["test_accuracy"] = self.test_accuracy
        return d


class ResponseTable:
    """Responses [example][classifier][class] plus labels for one split."""

    def __init__(self, labels, responses, split_tag):
        labels = np.asarray(labels, dtype=np.uint16)
        responses = np.asarray(responses, dtype=np.float32)
        if responses.ndim != 3:
            raise PoolError("bad_shape", "responses must be 3-d")
        if labels.shape[0] != responses.shape[0]:
            raise PoolError("bad_shape", "labels/responses length mismatch")
        if split_tag not in SPLIT_TAGS:
            raise PoolError("bad_split", "unknown split %r" % split_tag)
        self.labels = labels
        self.responses = responses
        self.split_tag = split_tag
        self.validate()

    @property
    def n_examples(self):
        return self.responses.shape[0]

    @property
    def n_classifiers(self):
        return self.responses.shape[1]

    @property
    def n_classes(self):
        return self.responses.shape[2]

    def validate(self):
        if self.n_examples:
            if self.responses.min() < 0.0 or self.responses.max() > 1.0:
                raise PoolError("bad_range", "responses outside [0,1]")
            sums = self.responses.sum(axis=2, dtype=np.float64)
            if np.abs(sums - 1.0).max() > 1e-4:
                raise PoolError("row_sum", "response row sums deviate from 1")
            if self.labels.size and int(self.labels.max()) >= self.n_classes:
                raise PoolError("bad_label", "label out of class range")


class Pool:
    """Immutable bundle of specs and per-split response tables."""

    def __init__(self, specs, tables, name="pool"):
        self.specs = list(specs)
        self.tables = dict(tables)
        self.name = name
        ids = [s.id for s in self.specs]
        if ids != list(range(len(ids))):
            raise PoolError("bad_ids", "classifier ids must be dense 0..N-1")
        n_classes = None
        for split, tab in self.tables.items():
            if tab.n_classifiers != len(self.specs):
                raise PoolError(
                    "count_mismatch",
                    "split %s has %d classifiers, manifest has %d"
                    % (split, tab.n_classifiers, len(self.specs)))
            if n_classes is None:
                n_classes = tab.n_classes
            elif tab.n_classes != n_classes:
                raise PoolError("class_mismatch", "splits disagree on n_classes")
        for s in self.specs:
            if n_classes is not None and max(s.class_subset) >= n_classes:
                raise PoolError("bad_subset", "class_subset outside range")

    @property
    def n_classifiers(self):
        return len(self.specs)

    @property
    def n_classes(self):
        return next(iter(self.tables.values())).n_classes

    def costs(self):
        return np.array([s.cost for s in self.specs])


class SyntheticPoolConfig:
    """Recipe for an oracle pool with controlled specialization."""

    def __init__(self, n_classes, classifiers, examples_per_split,
                 label_prior=None, seed=0, balanced=False):
        if not classifiers:
            raise PoolError("empty_pool", "need at least one classifier")
        self.n_classes = n_classes
        self.classifiers = classifiers  # list of dicts, see generate_synthetic
        self.examples_per_split = dict(examples_per_split)
        self.label_prior = label_prior
        self.seed = seed
        self.balanced = balanced

    @classmethod
    def from_json(cls, d):
        return cls(n_classes=d["n_classes"], classifiers=d["classifiers"],
                   examples_per_split=d["examples_per_split"],
                   label_prior=d.get("label_prior"), seed=d.get("seed", 0),
                   balanced=d.get("balanced", False))


def _one_hot(n, i):
    v = np.zeros(n, dtype=np.float32)
    v[i] = 1.0
    return v


def _synth_response(label, subset, accuracy, off_behavior, n_classes,
                    rng, correct_flag):
    subset = list(subset)
    if label in subset:
        if correct_flag:
            return _one_hot(n_classes, label)
        wrong = [c for c in subset if c != label]
        if not wrong:
            return _one_hot(n_classes, label)
        return _one_hot(n_classes, wrong[int(rng.integers(len(wrong)))])
    if off_behavior == OFF_UNIFORM_SUBSET:
        v = np.zeros(n_classes, dtype=np.float32)
        v[subset] = 1.0 / len(subset)
        return v
    if off_behavior == OFF_CONFIDENT_RANDOM:
        return _one_hot(n_classes, subset[int(rng.integers(len(subset)))])
    if off_behavior == OFF_UNIFORM_ALL:
        return np.full(n_classes, 1.0 / n_classes, dtype=np.float32)
    raise PoolError("bad_behavior", "unknown off_subset_behavior %r"
                    % off_behavior)


def generate_synthetic(config):
    """Sample a Pool from a SyntheticPoolConfig, deterministically per seed.

    Each classifier dict needs: class_subset, in_subset_accuracy,
    off_subset_behavior, and optionally cost (default 1.0) and name.
    With `balanced` set, labels cycle round-robin and in-subset hits are
    realized as exact fractions instead of Bernoulli draws, so accuracy
    statistics are exact in every split.
    """
    rng = np.random.default_rng(config.seed)
    n_classes = config.n_classes
    specs = []
    for i, c in enumerate(config.classifiers):
        if not c["class_subset"]:
            raise PoolError("empty_subset", "classifier %d has empty subset" % i)
        if not 0.0 <= c["in_subset_accuracy"] <= 1.0:
            raise PoolError("bad_accuracy", "accuracy outside [0,1]")
        if c.get("off_subset_behavior", OFF_UNIFORM_SUBSET) not in _OFF_BEHAVIORS:
            raise PoolError("bad_behavior", "unknown off_subset_behavior")
        specs.append(ClassifierSpec(
            id=i, name=c.get("name", "clf%d" % i), cost=c.get("cost", 1.0),
            class_subset=c["class_subset"], source="synthetic"))
    prior = config.label_prior
    if prior is None:
        prior = np.full(n_classes, 1.0 / n_classes)
    prior = np.asarray(prior, dtype=np.float64)
    prior = prior / prior.sum()

    tables = {}
    for split, n in config.examples_per_split.items():
        if config.balanced:
            labels = np.arange(n) % n_classes
        else:
            labels = rng.choice(n_classes, size=n, p=prior)
        labels = labels.astype(np.uint16)
        responses = np.zeros((n, len(specs), n_classes), dtype=np.float32)
        for k, c in enumerate(config.classifiers):
            acc = c["in_subset_accuracy"]
            subset = sorted(set(c["class_subset"]))
            behavior = c.get("off_subset_behavior", OFF_UNIFORM_SUBSET)
            if config.balanced:
                _fill_balanced(responses[:, k, :], labels, subset, acc,
                               behavior, n_classes)
            else:
                flags = rng.random(n) < acc
                for e in range(n):
                    responses[e, k] = _synth_response(
                        int(labels[e]), subset, acc, behavior,
                        n_classes, rng, bool(flags[e]))
        tables[split] = ResponseTable(labels, responses, split)
    return Pool(specs, tables)


def _fill_balanced(out, labels, subset, accuracy, behavior, n_classes):
    """Deterministic realization of one classifier's responses.

    Within each label group the first round(acc*count) examples are hits;
    every "random" class pick cycles through its candidates so that class
    counts are exact whenever the group size divides evenly.
    """
    for y in range(n_classes):
        idx = np.flatnonzero(labels == y)
        if y in subset:
            n_hit = int(round(accuracy * len(idx)))
            wrong = [c for c in subset if c != y]
            for j, e in enumerate(idx):
                if j < n_hit or not wrong:
                    out[e] = _one_hot(n_classes, y)
                else:
                    out[e] = _one_hot(n_classes, wrong[(j - n_hit) % len(wrong)])
        elif behavior == OFF_UNIFORM_SUBSET:
            v = np.zeros(n_classes, dtype=np.float32)
            v[subset] = 1.0 / len(subset)
            out[idx] = v
        elif behavior == OFF_CONFIDENT_RANDOM:
            for j, e in enumerate(idx):
                out[e] = _one_hot(n_classes, subset[j % len(subset)])
        else:
            out[idx] = np.full(n_classes, 1.0 / n_classes, dtype=np.float32)


def save_table(table, path):
    """Write a ResponseTable in the LACRT1 format.

    Header (32 bytes): magic "LACRT1\\0\\0"; u32 n_examples,
    n_classifiers, n_classes; u32 split tag (0 train, 1 val, 2 test);
    8 reserved zero bytes.  Then labels as u16, then responses as f32
    in [example][classifier][class] order.  All little-endian.
    """
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<IIII", table.n_examples, table.n_classifiers,
                             table.n_classes, SPLIT_TAGS[table.split_tag]))
        fh.write(b"\x00" * 8)
        fh.write(table.labels.astype("<u2").tobytes())
        fh.write(table.responses.astype("<f4").tobytes())


def load_table(path):
    """Read and validate an LACRT1 file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 32:
        raise PoolError("truncated", "%s: shorter than header" % path)
    if data[:8] != TABLE_MAGIC:
        raise PoolError("bad_magic",
                        "%s: bad magic at offset 0: %r" % (path, data[:8]))
    n_examples, n_classifiers, n_classes, tag = struct.unpack(
        "<IIII", data[8:24])
    if tag not in SPLIT_NAMES:
        raise PoolError("bad_split", "%s: unknown split tag %d" % (path, tag))
    expected = 32 + 2 * n_examples + 4 * n_examples * n_classifiers * n_classes
    if len(data) != expected:
        raise PoolError("truncated", "%s: size %d, expected %d"
                        % (path, len(data), expected))
    labels = np.frombuffer(data, dtype="<u2", count=n_examples, offset=32)
    responses = np.frombuffer(
        data, dtype="<f4", count=n_examples * n_classifiers * n_classes,
        offset=32 + 2 * n_examples)
    responses = responses.reshape(n_examples, n_classifiers, n_classes)
    return ResponseTable(labels.copy(), responses.copy(), SPLIT_NAMES[tag])


def save_pool(pool, out_dir):
    """Write manifest.json plus one <split>.rt file per split."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"name": pool.name, "n_classes": pool.n_classes,
                "classifiers": [s.to_json() for s in pool.specs]}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    for split, tab in pool.tables.items():
        save_table(tab, os.path.join(out_dir, split + ".rt"))


def load_pool(manifest_path, table_paths=None):
    """Load a pool from its manifest and split files.

    `table_paths` maps split name to file path; defaults to <split>.rt
    siblings of the manifest.
    """
    import os
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    specs = [ClassifierSpec(
        id=c["id"], name=c["name"], cost=c["cost"],
        class_subset=c["class_subset"], source="imported",
        arch=c.get("arch"), test_accuracy=c.get("test_accuracy"))
        for c in manifest["classifiers"]]
    if table_paths is None:
        base = os.path.dirname(manifest_path)
        table_paths = {}
        for split in SPLIT_TAGS:
            p = os.path.join(base, split + ".rt")
            if os.path.exists(p):
                table_paths[split] = p
    tables = {}
    for split, path in table_paths.items():
        tab = load_table(path)
        if tab.split_tag != split:
            raise PoolError("bad_split", "%s: tagged %s, expected %s"
                            % (path, tab.split_tag, split))
        if tab.n_classes != manifest["n_classes"]:
            raise PoolError("class_mismatch",
                            "%s: %d classes, manifest says %d"
                            % (path, tab.n_classes, manifest["n_classes"]))
        tables[split] = tab
    return Pool(specs, tables, name=manifest.get("name", "pool"))


def average_responses_accuracy(pool, split):
    """Accuracy of argmax over the unweighted mean response."""
    tab = pool.tables[split]
    mean = tab.responses.mean(axis=1, dtype=np.float64)
    pred = mean.argmax(axis=1)
    return float((pred == tab.labels).mean())


def classifier_accuracy(pool, split, classifier_id):
    """Plain argmax accuracy of a single pool member."""
    tab = pool.tables[split]
    pred = tab.responses[:, classifier_id, :].argmax(axis=1)
    return float((pred == tab.labels).mean())


def subset_view(pool, classifier_ids):
    """Pool restricted to the listed classifiers, ids re-densified."""
    ids = list(classifier_ids)
    if len(set(ids)) != len(ids):
        raise PoolError("duplicate_id", "duplicate classifier id")
    for i in ids:
        if not 0 <= i < pool.n_classifiers:
            raise PoolError("bad_id", "classifier id %d out of range" % i)
    specs = []
    for new_id, old_id in enumerate(ids):
        s = pool.specs[old_id]
        specs.append(ClassifierSpec(
            id=new_id, name=s.name, cost=s.cost, class_subset=s.class_subset,
            source=s.source, arch=s.arch, test_accuracy=s.test_accuracy))
    tables = {split: ResponseTable(tab.labels, tab.responses[:, ids, :],
                                   split)
              for split, tab in pool.tables.items()}
    return Pool(specs, tables, name=pool.name + "-view")
