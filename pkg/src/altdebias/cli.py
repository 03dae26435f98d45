"""Command-line entry point.

Subcommands: ``generate`` (build dataset caches), ``train`` (run one
training configuration into a run directory), ``eval`` (metrics for saved
checkpoints), ``plot`` (SVG trend chart from metrics.csv files), ``sweep``
(expand a grid of independent train runs).

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 data/checkpoint
mismatch.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, datasets, metrics, mlp, svgchart, train

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_MISMATCH = 4


class ValidationError(ValueError):
    pass


class MismatchError(ValueError):
    pass


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _config_digest(config_snapshot):
    return hashlib.sha256(
        _canonical_json(config_snapshot).encode()).hexdigest()


def _load_sidecar(data_dir):
    path = os.path.join(data_dir, "dataset.json")
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return json.load(f)


def _load_split(data_dir, split, sidecar):
    path = os.path.join(data_dir, f"{split}.dbmc")
    if not os.path.exists(path):
        raise ValidationError(f"missing dataset cache {path}")
    seed = sidecar.get("seed") if sidecar else None
    return datasets.load_dataset(path, seed=seed)


def _empirical_fractions(dataset):
    return [float(dataset.aligned[:, a].mean())
            for a in range(dataset.num_attributes)]


# -- generate ------------------------------------------------------------------

def cmd_generate(args):
    variant = args.variant.replace("-", "_")
    ratios = [args.ratio_left]
    if variant == "multi_color":
        if args.ratio_right is None:
            raise ValidationError("multi-color needs --ratio-right")
        ratios.append(args.ratio_right)
    try:
        config = datasets.DatasetConfig(
            variant=variant, ratios=tuple(ratios), seed=args.seed,
            train_count=args.train_count, test_count=args.test_count,
            jitter_std=args.jitter_std)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    if args.synthetic:
        ss = np.random.SeedSequence((args.seed, 0x61F9))
        s_train, s_test = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
        raw_train = datasets.synthesize_glyphs(config.train_count, s_train)
        raw_test = datasets.synthesize_glyphs(config.test_count * 2, s_test)
        source = "synthetic_glyph"
    else:
        mnist_dir = args.mnist_dir or os.environ.get("DEBIAS_DATA_DIR")
        if not mnist_dir:
            raise ValidationError(
                "no --mnist-dir (or DEBIAS_DATA_DIR) given; pass --synthetic "
                "to generate from procedural glyphs instead")
        try:
            raw_train, raw_test = datasets.load_mnist(mnist_dir)
        except FileNotFoundError as exc:
            raise ValidationError(
                f"MNIST IDX files not found in {mnist_dir} ({exc}); "
                "pass --synthetic to proceed without them") from exc
        source = "mnist"

    train_set, test_set = datasets.generate_biased(raw_train, raw_test, config)
    os.makedirs(args.out, exist_ok=True)
    datasets.save_dataset(train_set, os.path.join(args.out, "train.dbmc"))
    datasets.save_dataset(test_set, os.path.join(args.out, "test.dbmc"))
    sidecar = {
        "variant": variant,
        "ratios": list(config.ratios),
        "seed": config.seed,
        "source": source,
        "train_count": train_set.count,
        "test_count": test_set.count,
        "jitter_std": config.jitter_std,
        "empirical_aligned_train": _empirical_fractions(train_set),
        "empirical_aligned_test": _empirical_fractions(test_set),
        "tool_version": __version__,
    }
    with open(os.path.join(args.out, "dataset.json"), "w") as f:
        f.write(_canonical_json(sidecar))
    print(f"wrote {args.out}: train={train_set.count} test={test_set.count} "
          f"aligned(train)={sidecar['empirical_aligned_train']}")
    return 0


# -- train ---------------------------------------------------------------------

def _train_config_from_args(args):
    method = args.method.replace("-", "_")
    try:
        return train.TrainConfig(
            method=method, epochs=args.epochs, batch_size=args.batch_size,
            lr=args.lr, seed=args.seed, eval_every=args.eval_every,
            focal_alpha=args.alpha, focal_gamma=args.gamma, gce_q=args.q,
            classifier_ckpt=args.classifier_ckpt)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _write_metrics_csv(records, path):
    with open(path, "w", newline="") as f:
        f.write(",".join(metrics.MetricsRecord.CSV_FIELDS) + "\n")
        for rec in records:
            f.write(rec.csv_row() + "\n")


def run_training(config, data_dir, out_dir, checkpoint_every=0):
    """Execute one run into ``out_dir``; returns the final MetricsRecord."""
    sidecar = _load_sidecar(data_dir)
    train_set = _load_split(data_dir, "train", sidecar)
    test_set = _load_split(data_dir, "test", sidecar)
    os.makedirs(out_dir, exist_ok=True)
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)

    snapshot = {"train": asdict(config), "dataset": sidecar}
    manifest = {
        "name": os.path.basename(os.path.normpath(out_dir)),
        "config": snapshot,
        "tool_version": __version__,
        "seed": config.seed,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        f.write(_canonical_json(manifest))

    def on_epoch(record, state):
        if checkpoint_every and record.epoch % checkpoint_every == 0:
            mlp.save_checkpoint(state.classifier, os.path.join(
                ckpt_dir, f"classifier_epoch{record.epoch}.ckpt"))
            if state.discoverer is not None:
                mlp.save_checkpoint(state.discoverer, os.path.join(
                    ckpt_dir, f"discoverer_epoch{record.epoch}.ckpt"))

    state, records = train.run(config, train_set, test_set, on_epoch=on_epoch)

    mlp.save_checkpoint(state.classifier,
                        os.path.join(ckpt_dir, "classifier_final.ckpt"))
    if state.discoverer is not None:
        mlp.save_checkpoint(state.discoverer,
                            os.path.join(ckpt_dir, "discoverer_final.ckpt"))
    _write_metrics_csv(records, os.path.join(out_dir, "metrics.csv"))
    final = records[-1] if records else metrics.MetricsRecord(epoch=0)
    summary = {
        "final": final.to_dict(),
        "manifest_digest": _config_digest(snapshot),
        "skipped_steps": state.skipped_steps,
        "degenerate_class_batches": state.degenerate_batches,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        f.write(_canonical_json(summary))
    manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                            time.gmtime())
    with open(manifest_path, "w") as f:
        f.write(_canonical_json(manifest))
    return final


def cmd_train(args):
    config = _train_config_from_args(args)
    final = run_training(config, args.data, args.out,
                         checkpoint_every=args.checkpoint_every)
    print(f"{config.method}: final unbiased_acc="
          f"{final.unbiased if final.unbiased is None else round(final.unbiased, 4)}")
    return 0


# -- eval ----------------------------------------------------------------------

def _run_manifest_for_ckpt(ckpt_path):
    run_dir = os.path.dirname(os.path.dirname(os.path.abspath(ckpt_path)))
    path = os.path.join(run_dir, "manifest.json")
    if os.path.exists(path):
        with open(path) as f:
            return json.load(f)
    return None


def cmd_eval(args):
    sidecar = _load_sidecar(args.data)
    manifest = _run_manifest_for_ckpt(args.ckpt)
    if manifest and sidecar and not args.allow_mismatch:
        trained_on = manifest.get("config", {}).get("dataset") or {}
        if (trained_on.get("seed"), trained_on.get("variant")) != \
                (sidecar.get("seed"), sidecar.get("variant")):
            raise MismatchError(
                f"checkpoint was trained on dataset seed "
                f"{trained_on.get('seed')}/{trained_on.get('variant')} but "
                f"--data has {sidecar.get('seed')}/{sidecar.get('variant')}; "
                "pass --allow-mismatch to evaluate anyway")
    test_set = _load_split(args.data, "test", sidecar)
    try:
        classifier = mlp.load_checkpoint(args.ckpt)
    except mlp.CheckpointError as exc:
        raise ValidationError(str(exc)) from exc
    if classifier.head_kind != mlp.HEAD_SOFTMAX_CLASSES:
        raise MismatchError("--ckpt is not a classifier checkpoint")
    discoverer = None
    if args.discoverer_ckpt:
        discoverer = mlp.load_checkpoint(args.discoverer_ckpt)
        if discoverer.head_kind == mlp.HEAD_SOFTMAX_CLASSES:
            raise MismatchError("--discoverer-ckpt is not a discoverer")
    record = metrics.evaluate(classifier, test_set, discoverer=discoverer)
    payload = record.to_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as f:
            f.write(_canonical_json(payload))
    return 0


# -- plot ----------------------------------------------------------------------

def cmd_plot(args):
    series = []
    for path in args.csv:
        try:
            with open(path, newline="") as f:
                rows = list(csv.DictReader(f))
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from exc
        if not rows:
            raise ValidationError(f"{path}: empty metrics file")
        label_base = os.path.basename(os.path.dirname(os.path.abspath(path))) \
            or os.path.basename(path)
        for column in args.columns:
            if column not in rows[0]:
                raise ValidationError(f"{path}: no column {column!r}")
            xs, ys = [], []
            for row in rows:
                if row[column]:
                    xs.append(float(row["epoch"]))
                    ys.append(float(row[column]))
            if xs:
                series.append((f"{label_base}:{column}", xs, ys))
    if not series:
        raise ValidationError("no plottable values in the given files")
    try:
        svg = svgchart.line_chart(series, title=args.title, x_label="epoch",
                                  y_label=", ".join(args.columns))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    with open(args.out, "w") as f:
        f.write(svg)
    print(f"wrote {args.out} ({len(series)} series)")
    return 0


# -- sweep ---------------------------------------------------------------------

def cmd_sweep(args):
    methods = [m.replace("-", "_") for m in args.methods.split(",")]
    batch_sizes = [int(b) for b in args.batch_sizes.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    os.makedirs(args.out, exist_ok=True)
    results = []
    for method in methods:
        for batch_size in batch_sizes:
            for seed in seeds:
                name = f"{method.replace('_', '-')}-b{batch_size}-s{seed}"
                run_dir = os.path.join(args.out, name)
                try:
                    config = train.TrainConfig(
                        method=method, epochs=args.epochs,
                        batch_size=batch_size, lr=args.lr, seed=seed,
                        eval_every=args.eval_every)
                except ValueError as exc:
                    raise ValidationError(str(exc)) from exc
                final = run_training(config, args.data, run_dir)
                results.append({"run": name, "final": final.to_dict()})
                print(f"{name}: unbiased={final.unbiased}")
    with open(os.path.join(args.out, "sweep.json"), "w") as f:
        f.write(_canonical_json(results))
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="altdebias",
        description="Bias discovery and mitigation benchmark on colored "
                    "digit datasets.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build dataset cache files")
    p.add_argument("--variant", required=True,
                   choices=["multi-color", "colored-fg", "colored-bg"])
    p.add_argument("--ratio-left", type=float, required=True)
    p.add_argument("--ratio-right", type=float)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--train-count", type=int, default=60000)
    p.add_argument("--test-count", type=int, default=10000)
    p.add_argument("--jitter-std", type=float, default=0.0)
    p.add_argument("--mnist-dir")
    p.add_argument("--synthetic", action="store_true",
                   help="use procedural glyphs instead of MNIST files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run one training configuration")
    p.add_argument("--method", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--q", type=float, default=0.7)
    p.add_argument("--classifier-ckpt")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved checkpoints")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--discoverer-ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--allow-mismatch", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="SVG trend chart from metrics.csv files")
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--columns", nargs="+",
                   default=["disc_acc_left", "disc_acc_right"])
    p.add_argument("--title", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sweep", help="expand a grid of independent runs")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="vanilla,debian")
    p.add_argument("--batch-sizes", default="256")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, datasets.ParseError, ValueError) as exc:
        if isinstance(exc, MismatchError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_MISMATCH
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
