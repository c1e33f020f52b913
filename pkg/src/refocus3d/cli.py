"""Command-line driver for batch experimentation.

Subcommands: gen-data, train, corrupt, eval, focus-stats, influence, outliers,
report. All randomness flows from --seed; repeated invocations with identical
flags produce byte-identical artifacts. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines, corruptions, evaluation, io, network, refocus, shapes
from .focus import classify_focus, focus_stats
from .influence import argmax_count_influence, l1_feature_influence, normalize_influence

SOR_SWEEP = tuple(0.5 + 0.25 * i for i in range(11))  # 0.5 .. 3.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _float6(x):
    return format(float(x), ".6f")


def _schedule_from_args(args):
    overrides = {}
    for name in ("jitter_sigma", "scale_span", "rotate_angle", "add_local_sigma",
                 "drop_fraction"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "add_points", None) is not None:
        overrides["add_points"] = args.add_points
    return corruptions.schedule_with(**overrides)


def _load_split(data_dir, split):
    return io.load_dataset(evaluation.resolve_split_dir(data_dir, split), split=split)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    out = Path(args.out)
    test_per_class = (args.test_per_class if args.test_per_class is not None
                      else max(1, args.per_class // 4))
    for split, per_class in (("train", args.per_class), ("test", test_per_class)):
        dataset = shapes.build_dataset(per_class, args.points, args.seed, split)
        io.save_dataset(out / split, dataset, binary=args.binary)
        print(f"wrote {len(dataset)} {split} clouds to {out / split}")
    return 0


def cmd_train(args):
    dataset = _load_split(args.data, "train")
    config = network.TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
        cosine_annealing=not args.no_cosine, seed=args.seed, augment=args.augment,
        val_fraction=args.val_fraction)
    sampler = refocus.refocus_train_sampler if args.refocus else None
    params = network.train(dataset, config, sampler=sampler, verbose=not args.quiet)
    network.save_checkpoint(args.out, params)
    print(f"wrote checkpoint {args.out}")
    return 0


def cmd_corrupt(args):
    dataset = _load_split(args.data, args.split)
    schedule = _schedule_from_args(args)
    out = Path(args.out)
    for family in corruptions.FAMILIES:
        for severity in corruptions.SEVERITIES:
            corrupted, flags = corruptions.corrupt_dataset(
                dataset, family, severity, args.seed, schedule)
            sub = out / f"{family}_{severity}"
            io.save_dataset(sub, corrupted)
            names = io.dataset_file_names(corrupted)
            io.save_flags(sub / "flags.csv", dict(zip(names, flags)))
    print(f"wrote {len(corruptions.FAMILIES) * len(corruptions.SEVERITIES)} "
          f"corrupted datasets to {out}")
    return 0


def cmd_eval(args):
    config = evaluation.ExperimentConfig(
        checkpoint=args.checkpoint, data_dir=args.data, defense=args.defense,
        split=args.split, seed=args.seed, fixed_k=args.fixed_k, k_min=args.k_min,
        srs_fraction=args.srs_fraction, sor_k=args.sor_k, sor_sigma=args.sor_sigma,
        alpha=args.alpha, beta=args.beta, bins=args.bins, ce_mode=args.ce_mode,
        schedule=_schedule_from_args(args), pivot_report=args.pivot_report,
        pivot_checkpoint=args.pivot_checkpoint, workers=args.workers)
    report = evaluation.run_experiment(config)
    if args.out:
        evaluation.write_report(report, args.out)
        print(f"wrote report to {args.out}")
    print(f"clean OA {_float6(report.clean_oa)}  mCE {_float6(report.mce)}")
    if args.timing:
        params = network.load_checkpoint(args.checkpoint)
        dataset = _load_split(args.data, args.split)
        pipeline = evaluation.make_pipeline(
            params, args.defense, fixed_k=args.fixed_k, k_min=args.k_min,
            srs_fraction=args.srs_fraction, sor_k=args.sor_k,
            sor_sigma=args.sor_sigma, seed=args.seed)
        latency = evaluation.measure_latency(pipeline, dataset.samples[0].cloud)
        # stdout only: wall-clock numbers must not leak into report files
        print(f"mean per-sample latency over 100 iterations: {latency * 1e3:.3f} ms")
    return 0


def cmd_focus_stats(args):
    params = network.load_checkpoint(args.checkpoint)
    dataset = _load_split(args.data, args.split)
    names = io.manifest_files(evaluation.resolve_split_dir(args.data, args.split))
    pipeline = evaluation.VanillaPipeline(params)
    records = evaluation.evaluate(pipeline, dataset, args.workers)
    values = [r.focus_before for r in records]
    if args.band_data:
        band_set = _load_split(args.band_data, args.band_split)
        band_records = evaluation.evaluate(pipeline, band_set, args.workers)
        stats_values = [r.focus_before for r in band_records]
    else:
        stats_values = values
    stats = focus_stats(stats_values, args.alpha, args.beta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "focus.csv", "w", newline="\n") as fh:
        fh.write("file,focus,band\n")
        for name, value in zip(names, values):
            fh.write(f"{name},{_float6(value)},{classify_focus(value, stats)}\n")
    with open(out / "histogram.csv", "w", newline="\n") as fh:
        fh.write("bin_left,bin_right,count\n")
        for left, right, count in evaluation.histogram_table(values, args.bins):
            fh.write(f"{_float6(left)},{_float6(right)},{count}\n")
    print(f"mu {_float6(stats.mu)}  sigma {_float6(stats.sigma)}  "
          f"band [{_float6(stats.under_edge)}, {_float6(stats.over_edge)}]")
    return 0


def cmd_influence(args):
    params = network.load_checkpoint(args.checkpoint)
    cloud = io.load_cloud(args.cloud)
    trace = network.forward(params, cloud)
    raw = (argmax_count_influence(trace) if args.measure == "argmax"
           else l1_feature_influence(trace))
    values = normalize_influence(raw)
    with open(args.out, "w", newline="\n") as fh:
        fh.write("point_index,value\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{_float6(v)}\n")
    print(f"wrote {values.size} influence values to {args.out}")
    return 0


def cmd_outliers(args):
    params = network.load_checkpoint(args.checkpoint)
    dataset = io.load_dataset(args.data)
    names = io.manifest_files(args.data)
    flags = io.load_flags(Path(args.data) / "flags.csv",
                          {n: len(s.cloud) for n, s in zip(names, dataset.samples)})
    rows = []
    for name, sample in zip(names, dataset.samples):
        flag = flags[name]
        _, removed = baselines.influence_outlier_removal(params, sample.cloud)
        p, r = baselines.precision_recall(removed, flag)
        rows.append((name, "influence", p, r))
        for sigma in SOR_SWEEP:
            removed = baselines.sor_removed_indices(sample.cloud, args.sor_k, sigma)
            p, r = baselines.precision_recall(removed, flag)
            rows.append((name, f"sor_{sigma:.2f}", p, r))
    with open(args.out, "w", newline="\n") as fh:
        fh.write("file,method,precision,recall\n")
        for name, method, p, r in rows:
            fh.write(f"{name},{method},{_float6(p)},{_float6(r)}\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_report(args):
    data = evaluation.load_report_json(args.report)
    print(f"defense: {data['config']['defense']}")
    print(f"clean OA: {_float6(data['clean_oa'])}")
    print(f"mCE: {_float6(data['mce'])}")
    print("CE by family:")
    for family in corruptions.FAMILIES:
        print(f"  {family:12s} {_float6(data['ce'][family])}")
    print("accuracy by severity:")
    by_family = {}
    for entry in data["corruptions"]:
        by_family.setdefault(entry["family"], []).append(entry["accuracy"])
    for family in corruptions.FAMILIES:
        cells = "  ".join(_float6(a) for a in by_family[family])
        print(f"  {family:12s} {cells}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_schedule_flags(p):
    p.add_argument("--jitter-sigma", type=float, dest="jitter_sigma",
                   help="jitter sigma per severity unit (default 0.01)")
    p.add_argument("--scale-span", type=float, dest="scale_span",
                   help="scale factor span per severity unit (default 0.1)")
    p.add_argument("--rotate-angle", type=float, dest="rotate_angle",
                   help="max rotation angle per severity unit (default pi/10)")
    p.add_argument("--add-points", type=int, dest="add_points",
                   help="points added per severity unit (default 10)")
    p.add_argument("--add-local-sigma", type=float, dest="add_local_sigma",
                   help="local clump sigma (default 0.05)")
    p.add_argument("--drop-fraction", type=float, dest="drop_fraction",
                   help="dropped fraction per severity unit (default 0.15)")


def build_parser():
    parser = _Parser(prog="refocus3d",
                     description="Focus analysis and refocused inference for "
                                 "robust point-cloud classification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate the synthetic shape dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-class", type=int, default=200, help="training clouds per class")
    p.add_argument("--test-per-class", type=int, default=None,
                   help="test clouds per class (default per-class // 4)")
    p.add_argument("--points", type=int, default=1024, help="points per cloud")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary", action="store_true", help="write .rfpc caches instead of .xyz")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--data", required=True, help="dataset directory (train split)")
    p.add_argument("--out", required=True, help="checkpoint path (.rfnn)")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--refocus", action="store_true",
                   help="train on the least influential points (random crop size)")
    p.add_argument("--augment", action="store_true",
                   help="anisotropic scale [2/3,3/2] and translation [-0.2,0.2]")
    p.add_argument("--no-cosine", action="store_true", help="disable cosine annealing")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("corrupt", help="write the 35-dataset corruption suite")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("eval", help="evaluate a checkpoint over the corruption suite")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--defense", default="none", choices=evaluation.DEFENSES)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--fixed-k", type=int, default=None,
                   help="fixed retained-point count (disables the adaptive rule)")
    p.add_argument("--k-min", type=int, default=16)
    p.add_argument("--srs-fraction", type=float, default=0.3)
    p.add_argument("--sor-k", type=int, default=baselines.SOR_DEFAULT_K)
    p.add_argument("--sor-sigma", type=float, default=baselines.SOR_DEFAULT_SIGMA)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--ce-mode", default="sum-ratio", choices=("sum-ratio", "mean-ratio"))
    p.add_argument("--pivot-report", default=None,
                   help="report.json of the pivot run (defense none)")
    p.add_argument("--pivot-checkpoint", default=None,
                   help="pivot model to evaluate when no pivot report is given")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="print mean batch-size-1 latency over 100 iterations")
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("focus-stats", help="per-sample focus values and histogram")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--band-data", default=None,
                   help="dataset whose focus statistics define the bands")
    p.add_argument("--band-split", default="train")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_focus_stats)

    p = sub.add_parser("influence", help="dump per-point influence for one cloud")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True, help=".xyz or .rfpc file")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--measure", default="argmax", choices=("argmax", "l1"))
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("outliers", help="precision/recall of outlier removal vs SOR sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True,
                   help="corrupted dataset directory containing flags.csv")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--sor-k", type=int, default=baselines.SOR_DEFAULT_K)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("report", help="print a saved report.json")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit 2, message on stderr
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
