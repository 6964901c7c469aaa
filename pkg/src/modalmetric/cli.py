"""Command-line entry point.

Commands:
    train         train one method over the configured seeds
    eval          embed the held-out split with a checkpoint and report
                  retrieval metrics
    diagnose      baseline / mathm / gan side-by-side comparison table
    ablate        the eight-row loss-combination ablation table
    sweep-lambda  mAP as a function of the embedding-loss weight

Any config key can be overridden on the command line as `--key value`
(qualified as `--section.key` when the bare name is ambiguous). Exit
codes: 0 success, 2 config error, 3 data error, 4 zero-shot protocol
violation, 5 numeric failure.
"""

import argparse
import csv
import io
import os
import sys
from dataclasses import replace

import numpy as np

from .config import load_config, parse_overrides
from .errors import ConfigError, ModalMetricError, ProtocolError
from .evaluation import compute_metrics
from .fsutil import atomic_write_text, write_json
from .model import embed_forward, load_checkpoint, save_checkpoint
from .training import ablation_variants, log_columns, train

DIAGNOSE_METHODS = ("baseline", "mathm", "gan")
DEFAULT_LAMBDAS = "0,0.5,1,2"


def _cell(x):
    # plain-float repr round-trips exactly and is stable across runs
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_csv(path, columns, rows):
    """Write dict rows to CSV with a fixed column order, atomically."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    atomic_write_text(path, buf.getvalue())


def _mean_std(dicts, keys):
    """Per-key mean and sample standard deviation over runs."""
    out = {}
    for key in keys:
        values = np.array([d[key] for d in dicts], dtype=np.float64)
        out[key] = float(values.mean())
        out[f"{key}_std"] = (
            float(values.std(ddof=1)) if len(values) > 1 else 0.0
        )
    return out


METRIC_KEYS = (
    "map_at_all",
    "prec_at_k",
    "map_at_200",
    "prec_at_200",
    "modality_gap",
    "between_class_same_modality",
    "between_class_cross_modality",
    "within_class_same_modality",
    "within_class_cross_modality",
)


def evaluate_params(params, test_set, cfg, train_class_ids):
    """Embed the evaluation split and compute all metrics, enforcing the
    zero-shot guard against the training classes recorded at train time.
    """
    overlap = sorted(set(train_class_ids) & set(test_set.class_ids))
    if overlap:
        raise ProtocolError(
            f"zero-shot violation: classes {overlap} were used in training"
        )
    embeddings, _ = embed_forward(
        params.embedder, test_set.features, test_set.modalities
    )
    return compute_metrics(
        embeddings,
        test_set.labels,
        test_set.modalities,
        k=cfg.eval_k,
        query_modality=cfg.query_modality,
    )


def _train_and_eval(cfg, train_set, test_set, train_config):
    result = train(train_set, train_config)
    metrics = evaluate_params(
        result.params, test_set, cfg, result.train_class_ids
    )
    return result, metrics


def cmd_train(cfg, args):
    train_set, _ = cfg.load_data()
    for seed in cfg.seeds():
        tc = cfg.train_config(seed)
        result = train(train_set, tc)
        out_dir = os.path.join(cfg.out, tc.method, f"seed-{seed}")
        write_csv(
            os.path.join(out_dir, "training_log.csv"),
            log_columns(tc),
            result.log,
        )
        meta = {
            "d_in": train_set.d_in,
            "n_train_classes": train_set.n_classes,
            "train_class_ids": list(result.train_class_ids),
            "train": tc.to_dict(),
        }
        save_checkpoint(os.path.join(out_dir, "checkpoint.json"),
                        result.params, meta)
        print(f"trained {tc.method} seed {seed}: "
              f"final loss {result.log[-1]['l_total']:.6f} -> {out_dir}")
    return 0


def cmd_eval(cfg, args):
    if not args.checkpoint:
        raise ConfigError("eval requires at least one --checkpoint")
    _, test_set = cfg.load_data()
    os.makedirs(cfg.out, exist_ok=True)
    snapshots = []
    for i, path in enumerate(args.checkpoint):
        params, meta = load_checkpoint(path)
        metrics = evaluate_params(
            params, test_set, cfg, meta["train_class_ids"]
        )
        snapshot = metrics.to_dict()
        snapshots.append(snapshot)
        name = ("metrics.json" if len(args.checkpoint) == 1
                else f"metrics-{i}.json")
        write_json(os.path.join(cfg.out, name), snapshot)
        print(f"{path}: map_at_all={snapshot['map_at_all']:.4f} "
              f"prec_at_{snapshot['k']}={snapshot['prec_at_k']:.4f}")
    if len(snapshots) > 1:
        mean = _mean_std(snapshots, METRIC_KEYS)
        mean["k"] = snapshots[0]["k"]
        mean["n_runs"] = len(snapshots)
        write_json(os.path.join(cfg.out, "metrics_mean.json"), mean)
        print(f"mean over {len(snapshots)} runs: "
              f"map_at_all={mean['map_at_all']:.4f} "
              f"(std {mean['map_at_all_std']:.4f})")
    return 0


def _emit_table(cfg, command, label_column, rows, columns):
    out_dir = os.path.join(cfg.out, command)
    write_csv(os.path.join(out_dir, "table.csv"), columns, rows)
    write_json(os.path.join(out_dir, "table.json"), rows)
    width = max(len(str(r[label_column])) for r in rows)
    for row in rows:
        cells = "  ".join(
            f"{c}={row[c]:.4f}" for c in columns
            if c != label_column and not c.endswith("_std")
        )
        print(f"{str(row[label_column]):<{width}}  {cells}")
    print(f"wrote {os.path.join(out_dir, 'table.csv')}")
    return 0


def cmd_diagnose(cfg, args):
    train_set, test_set = cfg.load_data()
    rows = []
    given = [args.baseline, args.mathm, args.gan]
    if any(given):
        if not all(given):
            raise ConfigError(
                "diagnose from checkpoints needs all of --baseline, "
                "--mathm and --gan"
            )
        metas = []
        for method, path in zip(DIAGNOSE_METHODS, given):
            params, meta = load_checkpoint(path)
            metas.append(meta)
            metrics = evaluate_params(
                params, test_set, cfg, meta["train_class_ids"]
            )
            rows.append({"method": method, **_mean_std([metrics.to_dict()],
                                                        METRIC_KEYS)})
        splits = {tuple(m["train_class_ids"]) for m in metas}
        if len(splits) > 1:
            raise ProtocolError(
                "diagnose checkpoints were trained on different splits"
            )
    else:
        for method in DIAGNOSE_METHODS:
            snapshots = []
            for seed in cfg.seeds():
                tc = replace(cfg.train_config(seed), method=method)
                _, metrics = _train_and_eval(cfg, train_set, test_set, tc)
                snapshots.append(metrics.to_dict())
            rows.append({"method": method, **_mean_std(snapshots,
                                                       METRIC_KEYS)})
    columns = ["method"]
    for key in METRIC_KEYS:
        columns += [key, f"{key}_std"]
    return _emit_table(cfg, "diagnose", "method", rows, columns)


def cmd_ablate(cfg, args):
    train_set, test_set = cfg.load_data()
    rows = []
    for name, variant in ablation_variants(cfg.train):
        snapshots = []
        for seed in cfg.seeds():
            tc = replace(variant, seed=seed)
            _, metrics = _train_and_eval(cfg, train_set, test_set, tc)
            snapshots.append(metrics.to_dict())
        rows.append({
            "variant": name,
            **_mean_std(snapshots, ("map_at_all", "prec_at_k")),
        })
    columns = ["variant", "map_at_all", "map_at_all_std",
               "prec_at_k", "prec_at_k_std"]
    return _emit_table(cfg, "ablate", "variant", rows, columns)


def cmd_sweep_lambda(cfg, args):
    try:
        lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --lambdas value: {args.lambdas!r}")
    if not lambdas or any(lam < 0 for lam in lambdas):
        raise ConfigError("--lambdas needs comma-separated reals >= 0")
    train_set, test_set = cfg.load_data()
    rows = []
    for lam in lambdas:
        snapshots = []
        for seed in cfg.seeds():
            tc = cfg.train_config(seed)
            tc = replace(tc, loss=replace(tc.loss, lam=lam))
            _, metrics = _train_and_eval(cfg, train_set, test_set, tc)
            snapshots.append(metrics.to_dict())
        rows.append({
            "lam": lam,
            **_mean_std(snapshots, ("map_at_all", "prec_at_k")),
        })
    columns = ["lam", "map_at_all", "map_at_all_std",
               "prec_at_k", "prec_at_k_std"]
    return _emit_table(cfg, "sweep-lambda", "lam", rows, columns)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "ablate": cmd_ablate,
    "sweep-lambda": cmd_sweep_lambda,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="modalmetric",
        description="cross-modality metric learning: train, evaluate, "
                    "and diagnose sketch-photo embedding models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="config file (INI)")
        p.add_argument("--method", default=None,
                       help="training method tag "
                            "(cls-only | baseline | mathm | gan)")
        p.add_argument("--seed", type=int, default=None,
                       help="pin a single seed (sets n_seeds=1)")
        p.add_argument("--out", default=None, help="output directory")
        if name == "eval":
            p.add_argument("--checkpoint", action="append", default=[],
                           help="checkpoint file; repeat for a mean "
                                "over runs")
        if name == "diagnose":
            p.add_argument("--baseline", default=None)
            p.add_argument("--mathm", default=None)
            p.add_argument("--gan", default=None)
        if name == "sweep-lambda":
            p.add_argument("--lambdas", default=DEFAULT_LAMBDAS,
                           help="comma-separated weight values")
    return parser


def main(argv=None):
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        cfg = load_config(
            args.config,
            parse_overrides(extras),
            method=args.method,
            seed=args.seed,
            out=args.out,
        )
        return COMMANDS[args.command](cfg, args)
    except ModalMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
