#!/usr/bin/env python3
"""
molseq command line
String tools (canon, augment, enumerate, selfies), ROC-AUC evaluation and the
SIDER training / hyperparameter-search / reporting pipeline.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

import pandas as pd

# Add the project root to Python path so we can import our modules
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from molseq.experiment import (  # noqa: E402
    REFERENCE_SCORES,
    REFERENCE_SETUPS,
    AugmentConfig,
    HpoSpec,
    Setup,
    compare_reports,
    emit_report,
    load_report,
    load_sider_csv,
    run_hpo,
    run_suite,
    select_tasks,
    subsample,
    summary_frame,
)
from molseq.metrics import ScoredLabels, curve_frame, format_stat, roc_auc, roc_curve  # noqa: E402
from molseq.model import ModelKind  # noqa: E402
from molseq.selfies import decode_selfies, encode_selfies, selfies_to_smiles  # noqa: E402
from molseq.settings import load_settings, setup_logging  # noqa: E402
from molseq.smiles import augment, canonical_smiles, enumerate_random, parse_smiles  # noqa: E402
from molseq.storage import dump_json, read_lines, write_frame_csv, write_lines  # noqa: E402
from molseq.train import Optimizer, TrainConfig  # noqa: E402

logger = logging.getLogger("molseq")

STRING_COMMANDS = ("canon", "augment", "enumerate", "selfies")


# Input / output helpers =======================================================


def read_input(path):
    """Lines of `path`, or of stdin when no path is given."""
    if path and path != "-":
        return read_lines(path)
    return [line.strip() for line in sys.stdin if line.strip()]


def write_output(path, lines):
    if path and path != "-":
        write_lines(path, lines)
    else:
        for line in lines:
            print(line)


def map_lines(lines, convert, what):
    """Apply `convert` to each line; failures are logged and counted."""
    out, failures = [], 0
    for n, line in enumerate(lines, start=1):
        try:
            result = convert(line)
        except ValueError as e:
            logger.error(f"❌ line {n}: {what} failed for '{line}': {e}")
            failures += 1
            continue
        if isinstance(result, list):
            out.extend(result)
        else:
            out.append(result)
    return out, failures


# String commands ==============================================================


def cmd_canon(args):
    lines = read_input(args.input)
    out, failures = map_lines(lines, lambda s: canonical_smiles(parse_smiles(s)), "canonicalization")
    write_output(args.output, out)
    return 1 if failures else 0


def cmd_augment(args):
    lines = read_input(args.input)
    convert = lambda s: augment(s, args.n_gen, args.n_keep, args.seed)  # noqa: E731
    out, failures = map_lines(lines, convert, "augmentation")
    write_output(args.output, out)
    return 1 if failures else 0


def cmd_enumerate(args):
    lines = read_input(args.input)
    convert = lambda s: [enumerate_random(s, args.seed + k) for k in range(args.count)]  # noqa: E731
    out, failures = map_lines(lines, convert, "enumeration")
    write_output(args.output, out)
    return 1 if failures else 0


def cmd_selfies(args):
    lines = read_input(args.input)
    if args.direction == "encode":
        convert = lambda s: encode_selfies(parse_smiles(s), canonical=not args.keep_order)  # noqa: E731
        out, failures = map_lines(lines, convert, "SELFIES encoding")
    else:
        convert = selfies_to_smiles if args.smiles else lambda s: canonical_smiles(decode_selfies(s))  # noqa: E731
        out, failures = map_lines(lines, convert, "SELFIES decoding")
    write_output(args.output, out)
    return 1 if failures else 0


def cmd_eval(args):
    frame = pd.read_csv(args.input)
    missing = {args.score_column, args.label_column} - set(frame.columns)
    if missing:
        logger.error(f"❌ {args.input} is missing columns: {', '.join(sorted(missing))}")
        return 1
    data = ScoredLabels(frame[args.score_column].to_numpy(), frame[args.label_column].to_numpy())
    auc = roc_auc(data)
    print(f"{auc:.6f}")
    logger.info(f"✅ ROC-AUC {auc:.4f} over {data.n_pos} positives and {data.n_neg} negatives")
    if args.curve:
        write_frame_csv(args.curve, curve_frame(roc_curve(data)))
    return 0


# Pipeline commands ============================================================


def load_table(args):
    table = load_sider_csv(args.data, skip_invalid=args.skip_invalid, progress=args.progress)
    if args.tasks:
        table = select_tasks(table, [t.strip() for t in args.tasks.split(";") if t.strip()])
    if args.subsample:
        table = subsample(table, args.subsample, args.split_seed)
        logger.info(f"Subsampled to {len(table)} molecules")
    return table


def train_config(args):
    return TrainConfig(
        max_epochs=args.max_epochs,
        es_patience=args.es_patience or None,
        lr_patience=args.lr_patience or None,
        lr_factor=args.lr_factor,
        lr_init=args.lr,
        batch_size=args.batch_size,
        optimizer=Optimizer(args.optimizer),
        clip_norm=args.clip_norm,
    )


def augment_config(args):
    return AugmentConfig(args.n_gen, args.n_keep, args.aug_seed)


def run_kwargs(args, workers):
    return dict(
        train_cfg=train_config(args),
        split_seed=args.split_seed,
        augment_cfg=augment_config(args),
        workers=workers,
        ddof=args.ddof,
        record_time=args.record_time,
        artifacts_dir=args.artifacts,
        progress=args.progress,
    )


def log_headline(report):
    headline = report.aggregates["configs"]
    if headline["mean"] is None:
        logger.warning(f"⚠️ {report.setup_name}: no defined test ROC-AUC")
        return
    logger.info(f"📊 {report.setup_name}: {headline['mean']:.3f} ± {headline['std']:.3f} (n={headline['n']})")
    if report.excluded_tasks:
        logger.info(f"   excluded tasks: {'; '.join(report.excluded_tasks)}")


def cmd_train(args, settings):
    """One fixed hidden size, one or more seeds."""
    kind = ModelKind.parse(args.model)
    hpo = HpoSpec(kind, grid=(args.hidden,), n_configs=1, top_k=1, seeds=tuple(args.seed), embed_dim=args.embed_dim)
    report = run_hpo(load_table(args), Setup.parse(args.setup), hpo, **run_kwargs(args, settings.workers))
    log_headline(report)
    if args.out:
        emit_report(report, args.out)
    return 0


def cmd_hpo(args, settings):
    kind = ModelKind.parse(args.model)
    grid = tuple(int(h) for h in args.grid.split(",")) if args.grid else None
    hpo = HpoSpec(
        kind,
        grid=grid,
        n_configs=args.n_configs,
        top_k=args.top_k,
        seeds=tuple(args.seed),
        top_k_scope=args.top_k_scope,
        sample_seed=args.sample_seed,
        embed_dim=args.embed_dim,
    )
    report = run_hpo(load_table(args), Setup.parse(args.setup), hpo, **run_kwargs(args, settings.workers))
    log_headline(report)
    if args.out:
        emit_report(report, args.out)
    return 0


def cmd_suite(args, settings):
    hpo = HpoSpec(
        ModelKind.LSTM,
        n_configs=args.n_configs,
        top_k=args.top_k,
        seeds=tuple(args.seed),
        top_k_scope=args.top_k_scope,
        sample_seed=args.sample_seed,
        embed_dim=args.embed_dim,
    )
    reports = run_suite(load_table(args), REFERENCE_SETUPS, out_dir=args.out_dir, hpo=hpo, **run_kwargs(args, settings.workers))
    for report in reports:
        log_headline(report)
    return 0


def report_text(report):
    headline = report.aggregates["configs"]
    lines = [f"{report.setup_name}: {format_stat(report.headline) if headline['mean'] is not None else 'undefined'}"]
    reference = REFERENCE_SCORES.get(report.setup_name)
    if reference:
        lines.append(f"  reference: {reference[0]:.3f} ± {reference[1]:.3f}")
    for name in ("tasks", "runs"):
        stat = report.aggregates[name]
        if stat["mean"] is not None:
            lines.append(f"  by {name}: {stat['mean']:.3f} ± {stat['std']:.3f} (n={stat['n']})")
    for task, score in sorted(report.task_scores.items()):
        lines.append(f"  {task}: {score:.3f}")
    if report.excluded_tasks:
        lines.append(f"  excluded: {'; '.join(report.excluded_tasks)}")
    return lines


def cmd_report(args):
    reports = [load_report(path) for path in args.input]
    if args.format == "csv":
        text = summary_frame(reports).to_csv(index=False, lineterminator="\n")
        lines = text.rstrip("\n").split("\n")
    elif args.format == "json":
        lines = [dump_json([r.to_dict() for r in reports]).rstrip("\n")]
    else:
        lines = [line for r in reports for line in report_text(r)]
    write_output(args.output, lines)
    return 0


def cmd_compare(args):
    frame = compare_reports([load_report(path) for path in args.input])
    if frame.empty:
        logger.warning("⚠️ No comparable report pairs found")
    if args.output:
        write_frame_csv(args.output, frame)
    else:
        print(frame.to_string(index=False))
    return 0


# Argument parsing =============================================================


def add_io(parser):
    parser.add_argument("--in", dest="input", help="input file (default: stdin)")
    parser.add_argument("--out", dest="output", help="output file (default: stdout)")


def add_pipeline(parser):
    parser.add_argument("--data", required=True, help="SIDER-format CSV")
    parser.add_argument("--setup", default="smiles", choices=["smiles", "aug-smiles", "selfies", "aug-selfies"])
    parser.add_argument("--model", default="lstm", choices=["lstm", "qk-lstm"])
    parser.add_argument("--seed", type=int, nargs="+", default=[0], help="training seeds")
    parser.add_argument("--split-seed", type=int, default=0)
    parser.add_argument("--tasks", help="';'-separated task columns to keep")
    parser.add_argument("--subsample", type=int, help="keep at most N molecules")
    parser.add_argument("--skip-invalid", action="store_true", help="drop rows with unparseable SMILES")
    parser.add_argument("--embed-dim", type=int, default=64)
    parser.add_argument("--max-epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--lr-factor", type=float, default=0.5)
    parser.add_argument("--es-patience", type=int, default=10, help="0 disables early stopping")
    parser.add_argument("--lr-patience", type=int, default=5, help="0 disables LR reduction")
    parser.add_argument("--optimizer", default="adam", choices=[o.value for o in Optimizer])
    parser.add_argument("--clip-norm", type=float)
    parser.add_argument("--n-gen", type=int, default=20)
    parser.add_argument("--n-keep", type=int, default=5)
    parser.add_argument("--aug-seed", type=int, default=0)
    parser.add_argument("--ddof", type=int, default=0, choices=[0, 1])
    parser.add_argument("--workers", type=int, help="overrides MOLSEQ_WORKERS")
    parser.add_argument("--record-time", action="store_true", help="store wall-clock seconds in the report")
    parser.add_argument("--artifacts", help="directory for checkpoints and training histories")
    parser.add_argument("--progress", action="store_true")


def add_search(parser):
    parser.add_argument("--n-configs", type=int, default=4)
    parser.add_argument("--top-k", type=int, default=3)
    parser.add_argument("--top-k-scope", default="config", choices=["config", "seed"])
    parser.add_argument("--sample-seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="molseq", description=__doc__.strip().split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canon", help="canonicalize SMILES, one per line")
    add_io(p)

    p = sub.add_parser("augment", help="keep the shortest distinct random SMILES per input")
    add_io(p)
    p.add_argument("--n-gen", type=int, default=20)
    p.add_argument("--n-keep", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("enumerate", help="random SMILES enumerations")
    add_io(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("selfies", help="convert between SMILES and SELFIES")
    p.add_argument("direction", choices=["encode", "decode"])
    add_io(p)
    p.add_argument("--keep-order", action="store_true", help="encode in input atom order")
    p.add_argument("--smiles", action="store_true", help="decode straight to canonical SMILES")

    p = sub.add_parser("eval", help="ROC-AUC of a (score,label) CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--score-column", default="score")
    p.add_argument("--label-column", default="label")
    p.add_argument("--curve", help="write the ROC curve as CSV")

    p = sub.add_parser("train", help="train one hidden size per task")
    add_pipeline(p)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--out", help="report path (.json; a .csv summary is written alongside)")

    p = sub.add_parser("hpo", help="random hidden-size search with top-k averaging")
    add_pipeline(p)
    add_search(p)
    p.add_argument("--grid", help="comma-separated hidden sizes (default: the model's grid)")
    p.add_argument("--out", help="report path (.json; a .csv summary is written alongside)")

    p = sub.add_parser("suite", help="run the six reference setups")
    add_pipeline(p)
    add_search(p)
    p.add_argument("--out-dir", default="reports")

    p = sub.add_parser("report", help="print one or more JSON reports")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--format", default="text", choices=["text", "csv", "json"])
    p.add_argument("--out", dest="output")

    p = sub.add_parser("compare", help="pairwise deltas between reports")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--out", dest="output")
    return parser


def main(argv=None):
    """Main execution function."""
    args = build_parser().parse_args(argv)
    settings = load_settings()
    if getattr(args, "workers", None):
        settings = replace(settings, workers=args.workers)

    # String commands print results to stdout, so their log goes to stderr
    quiet = args.command in STRING_COMMANDS or args.command in ("eval", "report") or (
        args.command == "compare" and not args.output
    )
    setup_logging(settings, stream=sys.stderr if quiet else sys.stdout)

    pipeline = args.command in ("train", "hpo", "suite")
    if pipeline:
        logger.info("=" * 60)
        logger.info(f"🚀 Starting molseq {args.command} ({args.model if args.command != 'suite' else 'reference setups'})")
        logger.info("=" * 60)

    handlers = {
        "canon": cmd_canon,
        "augment": cmd_augment,
        "enumerate": cmd_enumerate,
        "selfies": cmd_selfies,
        "eval": cmd_eval,
        "report": cmd_report,
        "compare": cmd_compare,
    }
    try:
        if pipeline:
            code = {"train": cmd_train, "hpo": cmd_hpo, "suite": cmd_suite}[args.command](args, settings)
        else:
            code = handlers[args.command](args)
    except Exception as e:
        logger.error(f"❌ molseq {args.command} failed: {e}")
        return 1
    finally:
        if pipeline:
            logger.info("=" * 60)
            logger.info(f"📝 molseq {args.command} finished")
            logger.info("=" * 60)

    if pipeline and code == 0:
        logger.info("🎉 Completed successfully!")
    return code


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
