"""Command-line front end.

Subcommands: `run` (seeded experiments, trace + summary files), `enumerate`
(dump a small space with synthetic ground truth), `label` (build a labeled
dataset file), `train-predictor` (fit the binary predictor from such a
file), `compare` (speedup report between two run summaries), and
`gen-synthetic` (materialize the synthetic benchmark as a table file).

Exit codes: 0 success, 1 usage error, 2 runtime error. All stdout output is
line-delimited JSON; files are written deterministically so a rerun with the
same config and seed is byte-identical. NAS_SEED provides the default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace

import numpy as np

from . import cellspace
from .cellspace import SpaceLimits
from .errors import CellSearchError, ConfigError
from .harness import (
    ExperimentConfig,
    build_oracle,
    compare_runs,
    label_random_specs,
    read_labeled,
    read_summary,
    run_experiment,
    synthetic_optimum,
    write_labeled,
    write_summary,
)
from .oracle import (
    DEFAULT_LABEL_THRESHOLD,
    SimClock,
    SyntheticOracleParams,
    dump_table_lines,
    synth_record,
)
from .predictor import (
    TrainConfig,
    TrainedPredictor,
    heldout_accuracy,
    save_predictor,
    stratified_split,
    train,
)
from .traces import write_trace


class UsageError(Exception):
    """Bad command line or inconsistent option combination."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _limits_type(text: str) -> SpaceLimits:
    try:
        v, e = (int(part) for part in text.split(","))
        return SpaceLimits(v, e)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(
            f"limits must look like '5,9': {exc}"
        ) from None


def _seed_list_type(text: str):
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None


def _default_seed() -> int:
    raw = os.environ.get("NAS_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"NAS_SEED={raw!r} is not an integer") from None


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_params(path) -> SyntheticOracleParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return SyntheticOracleParams.from_json_obj(json.load(fh))
        except (json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"{path}: bad synthetic params: {exc}") from None


# ---------------------------------------------------------------------------
# run


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                cfg = ExperimentConfig.from_json_obj(json.load(fh))
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: {exc}") from None
    else:
        cfg = ExperimentConfig()

    top = {}
    if args.algo:
        top["algo"] = args.algo.upper()
    if args.fitness:
        top["fitness"] = args.fitness.upper()
    if args.oracle:
        if args.oracle.lower() == "synthetic":
            top["oracle_source"] = "SYNTHETIC"
            top["table_path"] = None
        else:
            top["oracle_source"] = "FILE"
            top["table_path"] = args.oracle
    if args.limits:
        top["limits"] = args.limits
    for name in ("n_label", "label_charge", "label_threshold", "top_k"):
        value = getattr(args, name)
        if value is not None:
            top[name] = value

    evo = {
        k: getattr(args, k)
        for k in ("population_size", "sample_size", "cycles")
        if getattr(args, k) is not None
    }
    if evo:
        top["evolution"] = replace(cfg.evolution, **evo)
    ref = {
        k: getattr(args, k)
        for k in ("batch_size", "iterations", "learning_rate")
        if getattr(args, k) is not None
    }
    if ref:
        top["reinforce"] = replace(cfg.reinforce, **ref)
    return replace(cfg, **top) if top else cfg


def cmd_run(args) -> int:
    seeds = args.seeds if args.seeds is not None else [
        args.seed if args.seed is not None else _default_seed()
    ]
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    os.makedirs(args.out, exist_ok=True)
    for seed in seeds:
        run_cfg = replace(cfg, seed=seed)
        outdir = args.out if len(seeds) == 1 else os.path.join(args.out, f"seed-{seed}")
        os.makedirs(outdir, exist_ok=True)
        result = run_experiment(run_cfg)
        write_trace(result.trace, os.path.join(outdir, "trace.csv"))
        write_summary(result.summary, os.path.join(outdir, "summary.json"), result.trace)
        if result.search_trace is not None:
            write_trace(result.search_trace, os.path.join(outdir, "search_trace.csv"))
        if result.trained is not None:
            save_predictor(result.trained, os.path.join(outdir, "predictor.json"))
        if args.json:
            _emit(result.summary.to_json_obj())
        else:
            line = {
                "seed": seed,
                "out": outdir,
                "best_hash": result.summary.best_hash,
                "best_true_acc": result.summary.best_true_acc,
                "total_sim_seconds": result.summary.total_sim_seconds,
            }
            if result.labeling is not None:
                line["heldout_accuracy"] = result.labeling.heldout_accuracy
            _emit(line)
    return 0


# ---------------------------------------------------------------------------
# enumerate / gen-synthetic


def cmd_enumerate(args) -> int:
    params = _load_params(args.params) if args.params else SyntheticOracleParams()
    if args.optimum:
        spec, record = synthetic_optimum(params, args.limits)
        _emit(
            {
                "hash": record.spec_hash,
                "val_accuracy": record.val_accuracy,
                "train_time_s": record.train_time_s,
                "spec": spec.to_json_obj(),
            }
        )
        return 0
    for spec in cellspace.enumerate_space(args.limits):
        record = synth_record(spec, params)
        _emit(
            {
                "hash": record.spec_hash,
                "val_accuracy": record.val_accuracy,
                "train_time_s": record.train_time_s,
                "spec": spec.to_json_obj(),
            }
        )
    return 0


def cmd_gen_synthetic(args) -> int:
    params = _load_params(args.params) if args.params else SyntheticOracleParams()
    pairs = [
        (spec, synth_record(spec, params))
        for spec in cellspace.enumerate_space(args.limits)
    ]
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in dump_table_lines(pairs):
            fh.write(line + "\n")
    _emit({"count": len(pairs), "out": args.out})
    return 0


# ---------------------------------------------------------------------------
# label / train-predictor


def cmd_label(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        cfg = ExperimentConfig(
            limits=args.limits or SpaceLimits(),
            oracle_source="SYNTHETIC" if args.oracle.lower() == "synthetic" else "FILE",
            table_path=None if args.oracle.lower() == "synthetic" else args.oracle,
            n_label=args.n,
            label_charge=args.charge,
            label_threshold=args.threshold,
            seed=seed,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    clock = SimClock()
    labeled, events, threshold = label_random_specs(
        cfg, build_oracle(cfg), clock, random.Random(seed)
    )
    meta = {
        "threshold": threshold,
        "limits": [cfg.limits.max_vertices, cfg.limits.max_edges],
        "oracle_source": cfg.oracle_source,
        "label_charge": cfg.label_charge,
        "seed": seed,
        "sim_seconds": clock.elapsed_s,
    }
    write_labeled(args.out, labeled, meta)
    _emit(
        {
            "n_labeled": len(labeled),
            "positives": sum(y for _, y in labeled),
            "threshold": threshold,
            "sim_seconds": clock.elapsed_s,
            "out": args.out,
        }
    )
    return 0


def cmd_train_predictor(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    items, meta = read_labeled(args.data)
    train_ds, held_ds, split_meta = stratified_split(
        items,
        np.random.default_rng(seed),
        heldout_fraction=args.heldout_fraction,
        target_positive_share=args.target_positive_share,
    )
    try:
        cfg = TrainConfig(
            learning_rate=args.learning_rate,
            epochs=args.epochs,
            batch=args.batch,
            seed=seed,
            hidden_size=args.hidden,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    params, losses = train(train_ds, cfg)
    held_acc = heldout_accuracy(params, held_ds)
    trained = TrainedPredictor(
        params=params,
        threshold_used=float(meta.get("threshold", DEFAULT_LABEL_THRESHOLD)),
        train_seed=seed,
    )
    save_predictor(trained, args.out)
    _emit(
        {
            "train_size": len(train_ds),
            "heldout_size": len(held_ds),
            "heldout_accuracy": held_acc,
            "final_train_loss": losses[-1],
            "positive_share": split_meta["train_positive_share"],
            "out": args.out,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    a = read_summary(args.summary_a)
    b = read_summary(args.summary_b)
    report = compare_runs(a, b, target=args.target)
    _emit(report.to_json_obj())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment per seed")
    run.add_argument("--algo", choices=["evolution", "reinforce"])
    run.add_argument("--fitness", choices=["oracle", "predictor"])
    run.add_argument("--oracle", help="'synthetic' or a benchmark table path")
    run.add_argument("--limits", type=_limits_type, help="V,E e.g. 5,9")
    run.add_argument("--config", help="JSON experiment config; flags override")
    seed_group = run.add_mutually_exclusive_group()
    seed_group.add_argument("--seed", type=int)
    seed_group.add_argument(
        "--seeds", type=_seed_list_type, help="comma-separated; per-seed subdirs"
    )
    run.add_argument("--population-size", type=int, dest="population_size")
    run.add_argument("--sample-size", type=int, dest="sample_size")
    run.add_argument("--cycles", type=int)
    run.add_argument("--batch-size", type=int, dest="batch_size")
    run.add_argument("--iterations", type=int)
    run.add_argument("--learning-rate", type=float, dest="learning_rate")
    run.add_argument("--n-label", type=int, dest="n_label")
    run.add_argument("--label-charge", type=float, dest="label_charge")
    run.add_argument("--label-threshold", type=float, dest="label_threshold")
    run.add_argument("--top-k", type=int, dest="top_k")
    run.add_argument("--out", required=True)
    run.add_argument("--json", action="store_true", help="print full summaries")
    run.set_defaults(func=cmd_run)

    enum = sub.add_parser("enumerate", help="dump a small space with ground truth")
    enum.add_argument("--limits", type=_limits_type, required=True)
    enum.add_argument("--params", help="synthetic params JSON file")
    enum.add_argument("--optimum", action="store_true", help="print only the best cell")
    enum.set_defaults(func=cmd_enumerate)

    lab = sub.add_parser("label", help="write a labeled dataset file")
    lab.add_argument("--limits", type=_limits_type)
    lab.add_argument("--oracle", default="synthetic")
    lab.add_argument("--n", type=int, default=400)
    lab.add_argument("--charge", type=float, default=1.0)
    lab.add_argument("--threshold", type=float)
    lab.add_argument("--seed", type=int)
    lab.add_argument("--out", required=True)
    lab.set_defaults(func=cmd_label)

    tp = sub.add_parser("train-predictor", help="fit the predictor from a dataset file")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--epochs", type=int, default=200)
    tp.add_argument("--learning-rate", type=float, default=0.05, dest="learning_rate")
    tp.add_argument("--batch", type=int, default=16)
    tp.add_argument("--hidden", type=int, default=16)
    tp.add_argument("--heldout-fraction", type=float, default=0.2, dest="heldout_fraction")
    tp.add_argument(
        "--target-positive-share", type=float, default=0.2, dest="target_positive_share"
    )
    tp.set_defaults(func=cmd_train_predictor)

    cmp_ = sub.add_parser("compare", help="speedup report between two run summaries")
    cmp_.add_argument("summary_a")
    cmp_.add_argument("summary_b")
    cmp_.add_argument("--target", type=float)
    cmp_.set_defaults(func=cmd_compare)

    gen = sub.add_parser("gen-synthetic", help="materialize the synthetic benchmark")
    gen.add_argument("--limits", type=_limits_type, required=True)
    gen.add_argument("--params", help="synthetic params JSON file")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"cellsearch: usage error: {exc}\n")
        return 1
    except (CellSearchError, OSError) as exc:
        sys.stderr.write(f"cellsearch: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
