"""Command line entry point: ``simulate``, ``classify`` and ``report``.

Exit status is 0 on success, 2 on a usage error and 3 on a data error
(missing or malformed input, unwritable output, inconsistent data).
"""

import argparse
from dataclasses import fields, replace
import hashlib
import logging
import os
import sys

from . import formats, metrics, simulate
from .pipeline import DataError, PipelineConfig, classify

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

DATASET_KEYS = {f.name for f in fields(simulate.DatasetSpec)}
PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)}


def _split_config(path, keep):
    """Config entries in ``keep``; keys known to neither command are an error."""
    if path is None:
        return {}
    values = formats.read_config(path)
    unknown = set(values) - DATASET_KEYS - PIPELINE_KEYS
    if unknown:
        raise DataError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    return {k: v for k, v in values.items() if k in keep}


def _dataset_spec(args):
    values = _split_config(args.config, DATASET_KEYS)
    types = {f.name: f.type for f in fields(simulate.DatasetSpec)}
    kwargs = {}
    for key, raw in values.items():
        typ = types[key] if isinstance(types[key], str) else types[key].__name__
        try:
            kwargs[key] = int(raw) if typ == "int" else float(raw) if typ == "float" else raw
        except ValueError:
            raise DataError(f"config key {key!r}: cannot parse {raw!r} as {typ}") from None
    for key in ("L", "n_clusters", "per_cluster", "snr", "max_shift", "template_kind", "seed"):
        value = getattr(args, key)
        if value is not None:
            kwargs[key] = value
    try:
        return simulate.DatasetSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataError(str(exc)) from None


def _pipeline_config(args):
    config = PipelineConfig().with_overrides(_split_config(args.config, PIPELINE_KEYS))
    updates = {"threads": args.threads}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.no_translation:
        updates["enable_translation"] = False
    if args.no_center:
        updates["center"] = False
    if args.freeze_align:
        updates["freeze_align"] = True
    return replace(config, **updates)


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def cmd_simulate(args):
    spec = _dataset_spec(args)
    stack, truths, _ = simulate.render_dataset(spec, threads=args.threads)
    formats.write_stack(stack, args.out_stack)
    simulate.write_ground_truth(truths, args.out_truth)
    sys.stdout.write(metrics.format_report({
        "N_IMAGES": spec.n_images,
        "L": spec.L,
        "N_CLUSTERS": spec.n_clusters,
        "SNR": spec.snr,
        "NOISE_VAR": spec.noise_variance,
        "MAX_SHIFT": spec.max_shift,
        "SEED": spec.seed,
        "STACK_SHA256": _sha256(args.out_stack),
    }))
    return EXIT_OK


def write_poses(labels, alpha, t, path):
    simulate.write_ground_truth(
        [simulate.GroundTruth(int(lab), float(a), (float(x), float(y)))
         for lab, a, (x, y) in zip(labels, alpha, t)], path)


def cmd_classify(args):
    config = _pipeline_config(args)
    stack = formats.read_stack(args.stack)
    truth = simulate.read_ground_truth(args.truth) if args.truth else None
    result = classify(stack, config, truth)
    if args.trace:
        for i, ll in enumerate(result.trace):
            sys.stderr.write(f"TRACE\t{i}\t{ll:.17g}\n")

    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    formats.write_labels(result.labels, os.path.join(out, "labels.csv"))
    write_poses(result.labels, result.alpha, result.t, os.path.join(out, "poses.csv"))
    formats.write_stack(result.averages, os.path.join(out, "averages.stk"))
    for c, avg in enumerate(result.averages):
        formats.write_pgm(avg, os.path.join(out, f"class_{c:03d}.pgm"))
    formats.save_model(result.model, os.path.join(out, "model.fbspca"))
    formats.save_mixture(result.theta, os.path.join(out, "mixture.pgmm"))
    if result.report is not None:
        text = metrics.format_report(result.report)
        with open(os.path.join(out, "report.tsv"), "w", encoding="utf-8") as fh:
            fh.write(text)
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args):
    truth = simulate.read_ground_truth(args.truth)
    labels = formats.read_labels(args.labels)
    poses = simulate.read_ground_truth(args.poses)
    for name, path, rows in (("labels", args.labels, labels), ("poses", args.poses, poses)):
        if len(rows) != len(truth):
            raise DataError(
                f"{path}: {name} file has {len(rows)} data rows (lines 2-{len(rows) + 1}) "
                f"but {args.truth} has {len(truth)} (lines 2-{len(truth) + 1})")
    report = metrics.score_all(
        [g.label for g in truth], labels,
        alpha_true=[g.alpha_true for g in truth], t_true=[g.t_true for g in truth],
        alpha_pred=[p.alpha_true for p in poses], t_pred=[p.t_true for p in poses],
        translation=not args.no_translation)
    text = metrics.format_report(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="polargmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker cap; 1 is fully serial (default)")

    sim = sub.add_parser("simulate", help="render a synthetic dataset with ground truth")
    common(sim)
    sim.add_argument("--out-stack", required=True)
    sim.add_argument("--out-truth", required=True)
    sim.add_argument("--L", type=int, dest="L")
    sim.add_argument("--n-clusters", type=int)
    sim.add_argument("--per-cluster", type=int)
    sim.add_argument("--snr", type=float)
    sim.add_argument("--max-shift", type=float)
    sim.add_argument("--template-kind", choices=["procedural_blobs", "voxel_phantom"])
    sim.set_defaults(func=cmd_simulate)

    cls = sub.add_parser("classify", help="cluster and align an image stack")
    common(cls)
    cls.add_argument("stack")
    cls.add_argument("--truth", help="ground truth CSV; enables the metric report")
    cls.add_argument("--out-dir", required=True)
    cls.add_argument("--no-translation", action="store_true",
                     help="search rotations only (also skips centering)")
    cls.add_argument("--no-center", action="store_true", help="skip EM centering")
    cls.add_argument("--freeze-align", action="store_true",
                     help="align once, then run EM on fixed aligned coefficients")
    cls.add_argument("--trace", action="store_true",
                     help="print the batch log-likelihood per iteration to stderr")
    cls.set_defaults(func=cmd_classify)

    rep = sub.add_parser("report", help="score labels and poses against ground truth")
    rep.add_argument("--truth", required=True)
    rep.add_argument("--labels", required=True)
    rep.add_argument("--poses", required=True)
    rep.add_argument("--no-translation", action="store_true",
                     help="report TE2 as UNDEFINED")
    rep.add_argument("--out", help="also write the report here")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        # DataError and MalformedFileError are ValueErrors
        sys.stderr.write(f"polargmm: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
