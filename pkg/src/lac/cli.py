"""Command-line surface.

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 64 usage
error.  Every command writes a run_manifest.json next to its outputs.
All randomness flows from --seed.
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import agent, analysis, gdboost, pool as poolmod, stacker, training
from .numkit import ConfigurationError, UsageError
from .pool import PoolError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_USAGE = 64


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def data_dir():
    return os.environ.get("LAC_DATA_DIR", ".")


def resolve(path):
    if os.path.isabs(path):
        return path
    return os.path.join(data_dir(), path)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return None


def write_run_manifest(out_dir, command, config_path, seed, inputs, outputs,
                       started):
    manifest = {
        "command": command,
        "config_path": config_path,
        "seed": seed,
        "input_hashes": {p: _sha256(p) for p in inputs if os.path.exists(p)},
        "output_paths": sorted(outputs),
        "wall_time_seconds": time.time() - started,
        "git_revision": _git_revision(),
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _load_pool_dir(path):
    manifest = os.path.join(resolve(path), "manifest.json")
    if not os.path.exists(manifest):
        raise FileNotFoundError(manifest)
    return poolmod.load_pool(manifest)


def _parse_ids(text):
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise CliUsageError("bad id list %r" % text)


def cmd_pool(args):
    started = time.time()
    if args.pool_cmd == "synth":
        with open(resolve(args.config)) as fh:
            cfg = poolmod.SyntheticPoolConfig.from_json(json.load(fh))
        if args.seed is not None:
            cfg.seed = args.seed
        pool = poolmod.generate_synthetic(cfg)
        out = resolve(args.out)
        poolmod.save_pool(pool, out)
        outputs = [os.path.join(out, "manifest.json")] + [
            os.path.join(out, s + ".rt") for s in pool.tables]
        write_run_manifest(out, "pool synth", resolve(args.config),
                           cfg.seed, [resolve(args.config)], outputs, started)
        print("wrote pool with %d classifiers to %s"
              % (pool.n_classifiers, out))
        return EXIT_OK
    if args.pool_cmd == "import":
        tables = {}
        for spec in args.table or []:
            split, path = spec.split("=", 1)
            tables[split] = resolve(path)
        pool = poolmod.load_pool(resolve(args.manifest),
                                 tables if tables else None)
        out = resolve(args.out)
        poolmod.save_pool(pool, out)
        write_run_manifest(out, "pool import", resolve(args.manifest), None,
                           [resolve(args.manifest), *tables.values()],
                           [os.path.join(out, "manifest.json")], started)
        print("imported pool %s (%d classifiers)"
              % (pool.name, pool.n_classifiers))
        return EXIT_OK
    if args.pool_cmd == "validate":
        pool = _load_pool_dir(args.pool)
        for split, tab in pool.tables.items():
            tab.validate()
        print("pool valid: %d classifiers, %d classes, splits: %s"
              % (pool.n_classifiers, pool.n_classes,
                 ",".join(sorted(pool.tables))))
        return EXIT_OK
    if args.pool_cmd == "subset":
        pool = _load_pool_dir(args.pool)
        view = poolmod.subset_view(pool, _parse_ids(args.ids))
        out = resolve(args.out)
        poolmod.save_pool(view, out)
        write_run_manifest(out, "pool subset", None, None,
                           [os.path.join(resolve(args.pool), "manifest.json")],
                           [os.path.join(out, "manifest.json")], started)
        print("wrote %d-classifier view to %s" % (view.n_classifiers, out))
        return EXIT_OK
    raise CliUsageError("unknown pool subcommand")


def _train_config_from_args(args):
    base = {}
    if args.config:
        with open(resolve(args.config)) as fh:
            base = json.load(fh)
    # flags win over config-file values
    for key, val in [("horizon", args.horizon), ("gamma", args.gamma),
                     ("alpha", args.alpha), ("beta", args.beta),
                     ("lam", getattr(args, "lam", None)),
                     ("epochs", args.epochs), ("seed", args.seed),
                     ("batch_size", args.batch_size),
                     ("learning_rate", args.learning_rate)]:
        if val is not None:
            base[key] = val
    if "horizon" not in base:
        raise CliUsageError("--horizon is required")
    if base["horizon"] < 1:
        raise CliUsageError("--horizon must be >= 1")
    return training.TrainConfig.from_json(base)


def cmd_train_lac(args):
    started = time.time()
    pool = _load_pool_dir(args.pool)
    config = _train_config_from_args(args)
    agent_cfg = agent.AgentConfig(
        n_classifiers=pool.n_classifiers, n_classes=pool.n_classes,
        action_hidden=args.action_hidden, decision_hidden=args.decision_hidden,
        baseline_depth=args.baseline_depth, hard_mask=not args.soft_mask,
        seed=config.seed)
    nets = agent.LacNets(agent_cfg)
    nets, log = training.train(pool, nets, config)
    out = resolve(args.out)
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, "agent.ckpt")
    metrics = os.path.join(out, "metrics.csv")
    agent.save_agent(nets, ckpt)
    log.write_csv(metrics)
    with open(os.path.join(out, "train_config.json"), "w") as fh:
        json.dump(config.to_json(), fh, indent=2)
        fh.write("\n")
    write_run_manifest(
        out, "train-lac", resolve(args.config) if args.config else None,
        config.seed,
        [os.path.join(resolve(args.pool), "manifest.json")],
        [ckpt, metrics], started)
    if log.rows:
        print("final test accuracy: %.4f" % log.rows[-1]["test_accuracy"])
    return EXIT_OK


def cmd_eval_lac(args):
    nets = agent.load_agent(resolve(args.ckpt))
    pool = _load_pool_dir(args.pool)
    config = training.TrainConfig(horizon=args.horizon or
                                  nets.config.n_classifiers,
                                  seed=args.seed or 0)
    rng = np.random.default_rng(config.seed)
    stats = training.evaluate(pool, nets, config, args.split,
                              mode=args.mode, rng=rng)
    freqs = ",".join("%.4f" % f for f in stats["call_frequencies"])
    print("accuracy=%.4f mean_cost=%.4f call_freq=[%s] trajectories=%d"
          % (stats["accuracy"], stats["mean_cost"], freqs,
             len(stats["trajectories"])))
    return EXIT_OK


def _toy_blobs(n_classes, n_per_class, dim, spread, seed):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 3.0, size=(n_classes, dim))
    xs, ys = [], []
    for c in range(n_classes):
        xs.append(centers[c] + rng.normal(0.0, spread,
                                          size=(n_per_class, dim)))
        ys.append(np.full(n_per_class, c))
    x = np.concatenate(xs).astype(np.float32)
    y = np.concatenate(ys).astype(np.int64)
    perm = rng.permutation(len(x))
    return x[perm], y[perm]


def load_feature_dataset(args):
    """Either an .npz with train_x/train_y/val_x/val_y or the built-in
    Gaussian-blob toy."""
    if args.data:
        with np.load(resolve(args.data)) as d:
            return (d["train_x"], d["train_y"].astype(np.int64),
                    d["val_x"], d["val_y"].astype(np.int64))
    x, y = _toy_blobs(args.toy_classes, args.toy_per_class, args.toy_dim,
                      args.toy_spread, args.seed or 0)
    n_val = len(x) // 4
    return x[n_val:], y[n_val:], x[:n_val], y[:n_val]


def cmd_boost(args):
    started = time.time()
    train_x, train_y, val_x, val_y = load_feature_dataset(args)
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    arch = [train_x.shape[1], args.hidden, n_classes]
    cfg = gdboost.BoostConfig(
        rounds=args.rounds, arch=arch, shrinkage=args.shrinkage,
        weight_transfer=not args.no_weight_transfer,
        epochs_per_round=args.epochs_per_round, seed=args.seed or 0)
    _, curve = gdboost.boost(train_x, train_y, val_x, val_y, cfg)
    out = resolve(args.out)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "boost_curve.csv")
    gdboost.write_curve_csv(curve, path)
    write_run_manifest(out, "boost", None, cfg.seed, [], [path], started)
    print("boost: %d/%d rounds accepted, final val_acc=%.4f"
          % (sum(r["accepted"] for r in curve), args.rounds,
             curve[-1]["val_acc"]))
    return EXIT_OK


def cmd_bag(args):
    started = time.time()
    train_x, train_y, val_x, val_y = load_feature_dataset(args)
    n_classes = int(max(train_y.max(), val_y.max())) + 1
    arch = [train_x.shape[1], args.hidden, n_classes]
    cfg = gdboost.BagConfig(
        rounds=args.rounds, arch=arch,
        weight_transfer=args.weight_transfer,
        epochs_per_round=args.epochs_per_round, seed=args.seed or 0)
    _, curve = gdboost.bag(train_x, train_y, val_x, val_y, cfg)
    out = resolve(args.out)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "bag_curve.csv")
    gdboost.write_curve_csv(curve, path)
    write_run_manifest(out, "bag", None, cfg.seed, [], [path], started)
    print("bag: final val_acc=%.4f" % curve[-1]["val_acc"])
    return EXIT_OK


def cmd_stack(args):
    started = time.time()
    pool = _load_pool_dir(args.pool)
    out = resolve(args.out)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "stack_results.csv")
    rows = []
    if args.k is not None:
        cfg = stacker.StackerConfig(depth=args.depth, epochs=args.epochs,
                                    seed=args.seed or 0)
        subset, accs, results = stacker.best_subset(pool, args.k, cfg)
        for sub, a in results:
            rows.append((sub, len(sub), a.get("val", a["test"]), a["test"]))
        print("best subset %s: test accuracy %.4f"
              % (",".join(map(str, subset)), accs["test"]))
    else:
        if args.subset == "all":
            subset = list(range(pool.n_classifiers))
        else:
            subset = _parse_ids(args.subset)
        cfg = stacker.StackerConfig(depth=args.depth, subset=subset,
                                    epochs=args.epochs, seed=args.seed or 0)
        _, accs = stacker.train_stacker(pool, cfg)
        rows.append((tuple(subset), len(subset),
                     accs.get("val", accs["test"]), accs["test"]))
        print("stacker depth=%d subset=%s test accuracy %.4f"
              % (args.depth, subset, accs["test"]))
    with open(path, "w", newline="") as fh:
        fh.write("subset,k,val_acc,test_acc\n")
        for sub, k, va, ta in rows:
            fh.write("\"%s\",%d,%.10g,%.10g\n"
                     % (" ".join(map(str, sub)), k, va, ta))
    write_run_manifest(out, "stack", None, args.seed,
                       [os.path.join(resolve(args.pool), "manifest.json")],
                       [path], started)
    return EXIT_OK


def cmd_report(args):
    if args.report_cmd == "trajectories":
        nets = agent.load_agent(resolve(args.ckpt))
        pool = _load_pool_dir(args.pool)
        config = training.TrainConfig(horizon=args.horizon, seed=0)
        stats = training.evaluate(pool, nets, config, args.split)
        names = {s.id: s.name for s in pool.specs}
        graph = analysis.TrajectoryGraph(stats["trajectories"], names)
        with open(resolve(args.out), "w") as fh:
            fh.write(graph.to_dot())
        print("wrote %s (%d distinct trajectories)"
              % (resolve(args.out), len(stats["trajectories"])))
        return EXIT_OK
    if args.report_cmd == "callfreq":
        import csv as _csv
        with open(resolve(args.metrics)) as fh:
            rows = list(_csv.DictReader(fh))
        n = sum(1 for k in rows[0] if k.startswith("call_freq_"))
        epochs, series = analysis.call_frequency_curve(rows, n)
        with open(resolve(args.out), "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["epoch"] + ["call_freq_%d" % i for i in range(n)])
            for j, e in enumerate(epochs):
                w.writerow([e] + ["%.10g" % series[i][j] for i in range(n)])
        print("wrote %s" % resolve(args.out))
        return EXIT_OK
    raise CliUsageError("unknown report subcommand")


def build_parser():
    p = _Parser(prog="lac", description="Least-action classifier toolkit")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS threads (determinism is kept either way)")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("pool", help="create, import or inspect pools")
    psub = pp.add_subparsers(dest="pool_cmd", required=True)
    ps = psub.add_parser("synth")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--seed", type=int)
    pi = psub.add_parser("import")
    pi.add_argument("--manifest", required=True)
    pi.add_argument("--table", action="append",
                    help="split=path, repeatable")
    pi.add_argument("--out", required=True)
    pv = psub.add_parser("validate")
    pv.add_argument("--pool", required=True)
    pb = psub.add_parser("subset")
    pb.add_argument("--pool", required=True)
    pb.add_argument("--ids", required=True)
    pb.add_argument("--out", required=True)

    pt = sub.add_parser("train-lac", help="train an agent on a pool")
    pt.add_argument("--pool", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--config", help="JSON TrainConfig; flags override")
    pt.add_argument("--horizon", type=int)
    pt.add_argument("--gamma", type=float)
    pt.add_argument("--alpha", type=float)
    pt.add_argument("--beta", type=float)
    pt.add_argument("--lambda", dest="lam", type=float)
    pt.add_argument("--epochs", type=int)
    pt.add_argument("--seed", type=int)
    pt.add_argument("--batch-size", type=int, dest="batch_size")
    pt.add_argument("--learning-rate", type=float, dest="learning_rate")
    pt.add_argument("--action-hidden", type=int, default=64)
    pt.add_argument("--decision-hidden", type=int, default=128)
    pt.add_argument("--baseline-depth", type=int, default=1)
    pt.add_argument("--soft-mask", action="store_true")

    pe = sub.add_parser("eval-lac", help="evaluate a checkpoint")
    pe.add_argument("--pool", required=True)
    pe.add_argument("--ckpt", required=True)
    pe.add_argument("--split", default="test")
    pe.add_argument("--horizon", type=int)
    pe.add_argument("--mode", choices=["argmax", "sample"], default="argmax")
    pe.add_argument("--seed", type=int)

    for name in ("boost", "bag"):
        pb = sub.add_parser(name, help="GD-MC boosting / bagging study")
        pb.add_argument("--rounds", type=int, required=True)
        pb.add_argument("--out", required=True)
        pb.add_argument("--data", help=".npz with train_x/train_y/val_x/val_y")
        pb.add_argument("--hidden", type=int, default=32)
        pb.add_argument("--epochs-per-round", type=int, default=150,
                        dest="epochs_per_round")
        pb.add_argument("--seed", type=int)
        pb.add_argument("--toy-classes", type=int, default=3)
        pb.add_argument("--toy-per-class", type=int, default=200)
        pb.add_argument("--toy-dim", type=int, default=2)
        pb.add_argument("--toy-spread", type=float, default=2.0)
        if name == "boost":
            pb.add_argument("--shrinkage", type=float, default=0.5)
            pb.add_argument("--no-weight-transfer", action="store_true")
        else:
            pb.add_argument("--weight-transfer", action="store_true")

    pst = sub.add_parser("stack", help="MLP stacking baselines")
    pst.add_argument("--pool", required=True)
    pst.add_argument("--out", required=True)
    pst.add_argument("--depth", type=int, default=3)
    pst.add_argument("--subset", default="all")
    pst.add_argument("--k", type=int, help="best-subset search of size k")
    pst.add_argument("--epochs", type=int, default=60)
    pst.add_argument("--seed", type=int)

    pr = sub.add_parser("report", help="reporting artifacts")
    rsub = pr.add_subparsers(dest="report_cmd", required=True)
    rt = rsub.add_parser("trajectories")
    rt.add_argument("--pool", required=True)
    rt.add_argument("--ckpt", required=True)
    rt.add_argument("--horizon", type=int, required=True)
    rt.add_argument("--split", default="test")
    rt.add_argument("--out", required=True)
    rc = rsub.add_parser("callfreq")
    rc.add_argument("--metrics", required=True)
    rc.add_argument("--out", required=True)
    return p


COMMANDS = {
    "pool": cmd_pool,
    "train-lac": cmd_train_lac,
    "eval-lac": cmd_eval_lac,
    "boost": cmd_boost,
    "bag": cmd_bag,
    "stack": cmd_stack,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except CliUsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (PoolError, ConfigurationError, UsageError, KeyError) as exc:
        print("validation error: %s" % exc, file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
