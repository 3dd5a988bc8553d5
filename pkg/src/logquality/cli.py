"""Command-line entry point: extract, train, assess, explain, analyze, eval."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from . import analysis, corpus, models, preprocess
from .encoder import CheckpointError, ModelConfig
from .explain import DEFAULT_BUDGET, NothingToExplain, explain_prediction

REPORT_FORMAT_VERSION = 1
PROTOCOLS = ("holdout", "leave-one-system-out", "repeated-splits")
BUNDLED = "bundled"

logger = logging.getLogger("logquality")


class CliError(Exception):
    pass


def _env_seed() -> int:
    raw = os.environ.get("QULOG_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"QULOG_SEED must be an integer, got {raw!r}") from None


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=False)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def _load_data(path: str) -> corpus.Dataset:
    if path == BUNDLED:
        return corpus.bundled_corpus()
    if not os.path.exists(path):
        raise CliError(f"dataset not found: {path}")
    return corpus.read_dataset(path)


def _grammars(langs) -> list:
    return [corpus.builtin_grammar(lang) for lang in langs]


def _tagger(args):
    tags = getattr(args, "tags", None)
    return preprocess.PosTagger.from_tag_file(tags) if tags else None


def _prepared(dataset, task, args, labeled: bool = True):
    """Dataset in the form the task expects (linguistic tasks attach group labels)."""
    if task.input_channel == "tokens" or not labeled:
        return dataset
    tagger = _tagger(args)
    groups = preprocess.group_by_structure(dataset, tagger)
    labels = preprocess.read_labels(args.labels) if args.labels else preprocess.bundled_labels()
    return preprocess.apply_group_labels(groups, labels, default=args.default_label)


def _load_model(path: str) -> models.QualityModel:
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path}")
    return models.load_model(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args) -> int:
    dataset = corpus.extract_tree(args.root, _grammars(args.lang), args.system or os.path.basename(os.path.abspath(args.root)),
                                  exclude=args.exclude or (), workers=args.workers)
    corpus.write_dataset(dataset, args.out)
    report = {
        "format_version": REPORT_FORMAT_VERSION,
        "instructions": len(dataset),
        "skipped_files": [asdict(s) for s in dataset.skipped],
        "skipped_levels": dict(sorted(dataset.skipped_levels.items())),
    }
    if args.skip_report:
        _write_json(report, args.skip_report)
    else:
        print(json.dumps(report), file=sys.stderr)
    return 0


def _train_config(args, task) -> models.TrainConfig:
    overrides = {k: getattr(args, k) for k in ("batch_size", "patience", "lr", "class_weight", "validation_fraction")
                 if getattr(args, k) is not None}
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    return models.TrainConfig.for_task(task, seed=args.seed, **overrides)


def _model_config(args) -> ModelConfig:
    kw = {k: getattr(args, k) for k in ("max_len", "d", "heads", "layers") if getattr(args, k) is not None}
    return ModelConfig(seed=args.seed, **kw)


def cmd_train(args) -> int:
    task = models.get_task(args.task)
    data = _prepared(_load_data(args.data), task, args)
    cfg = _train_config(args, task)
    model = models.train(data, task, cfg, _model_config(args), tagger=_tagger(args))
    models.save_model(model, args.out)
    models.write_training_log(model.log, args.log or args.out + ".log.csv")
    return 0


def cmd_assess(args) -> int:
    model = _load_model(args.model)
    if args.data:
        dataset = _load_data(args.data)
    else:
        if not args.lang:
            raise CliError("--root needs at least one --lang")
        dataset = corpus.extract_tree(args.root, _grammars(args.lang), os.path.basename(os.path.abspath(args.root)))
    data = _prepared(dataset, model.task, args, labeled=args.labels is not None or args.data is not None)
    assessment = models.assess(model, data, tagger=_tagger(args))
    _write_json(assessment.to_report(), args.out)
    return 0


def cmd_explain(args) -> int:
    model = _load_model(args.model)
    class_index = None
    if args.class_name is not None:
        if args.class_name not in model.task.class_names:
            raise CliError(f"unknown class {args.class_name!r}; model classes are {list(model.task.class_names)}")
        class_index = model.task.class_names.index(args.class_name)
    explanation = explain_prediction(model, args.text, class_index, args.mode, args.budget, args.seed, _tagger(args))
    _write_json({"format_version": REPORT_FORMAT_VERSION, **explanation.to_dict()}, args.out)
    return 0


def cmd_analyze(args) -> int:
    dataset = _load_data(args.data)
    ns = tuple(args.ns) if args.ns else analysis.NS
    report = analysis.analytics_report(dataset, ns)
    if args.model:
        model = _load_model(args.model)
        if model.task.input_channel != "tokens":
            raise CliError("contingency analysis needs a level model")
        table = analysis.contingency(models.assess(model, dataset))
        report["contingency"] = asdict(table)
    if args.csv:
        analysis.write_entropy_csv(analysis.entropy_distribution(dataset, ns), args.csv)
    _write_json(report, args.out)
    return 0


def cmd_eval(args) -> int:
    if args.protocol not in PROTOCOLS:
        raise CliError(f"unknown protocol {args.protocol!r}; choose from {', '.join(PROTOCOLS)}")
    model = _load_model(args.model)
    data = _prepared(_load_data(args.data), model.task, args)
    tagger = _tagger(args)
    if args.protocol == "holdout":
        result = models.evaluate_holdout(model, data, tagger)
    else:
        trainer = models.encoder_trainer(model.train_config, model.encoder.config)
        if args.protocol == "leave-one-system-out":
            result = models.leave_one_system_out(data, model.task, trainer, tagger)
        else:
            result = models.repeated_splits(data, model.task, trainer, repeats=args.repeats, seed=args.seed, tagger=tagger)
    _write_json(result.to_report(), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser and configuration


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logquality", description="Assess log instruction quality.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, config=True):
        if config:
            p.add_argument("--config", help="JSON file with option defaults (flags win)")
        if seed:
            p.add_argument("--seed", type=int, help="random seed (default: $QULOG_SEED or 0)")

    def linguistic(p):
        p.add_argument("--labels", help="structure labels JSONL (default: bundled labels)")
        p.add_argument("--default-label", choices=preprocess.LABELS, help="label for unlabeled groups")
        p.add_argument("--tags", help="external POS tag file (JSONL)")

    p = sub.add_parser("extract", help="extract log instructions from a source tree")
    p.add_argument("--root", required=True)
    p.add_argument("--lang", nargs="+", required=True, choices=("python", "java"))
    p.add_argument("--out", required=True)
    p.add_argument("--system")
    p.add_argument("--exclude", nargs="*")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--skip-report")
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a level or linguistic model")
    p.add_argument("--data", required=True, help=f"dataset JSONL or '{BUNDLED}'")
    p.add_argument("--task", required=True, choices=("iwe", "ie", "iw", "we", "linguistic"))
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--validation-fraction", type=float)
    p.add_argument("--class-weight", choices=("none", "balanced"))
    p.add_argument("--max-len", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--layers", type=int)
    linguistic(p)
    common(p, seed=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("assess", help="assess instructions with a trained model")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--root")
    p.add_argument("--lang", nargs="+", choices=("python", "java"))
    p.add_argument("--out", default="-")
    linguistic(p)
    common(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("explain", help="explain one prediction token by token")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--class", dest="class_name")
    p.add_argument("--mode", choices=("exact", "sampled"))
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--out", default="-")
    p.add_argument("--tags", help=argparse.SUPPRESS)
    common(p, seed=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("analyze", help="entropy and overlap analytics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--ns", type=int, nargs="+")
    p.add_argument("--csv", help="per-n-gram entropy CSV")
    p.add_argument("--model", help="level model for a contingency table")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="evaluate a model under a protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--repeats", type=int, default=30)
    linguistic(p)
    common(p, seed=True)
    p.set_defaults(func=cmd_eval)
    parser.commands = sub.choices
    return parser


def apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    """Fill options from ``--config`` that were not given on the command line."""
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None
        if not isinstance(config, dict):
            raise CliError("config must be a JSON object")
        known = set(vars(args)) - {"func", "command", "config", "verbose"}
        unknown = sorted(set(config) - known)
        if unknown:
            raise CliError(f"unknown config key(s): {', '.join(unknown)}")
        # reparse with config values as defaults so explicit flags still win
        parser.commands[args.command].set_defaults(**config)
        args = parser.parse_args(argv)
    if hasattr(args, "seed") and args.seed is None:
        args.seed = _env_seed()
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = apply_config(parser, args, argv)
        return args.func(args)
    except (CliError, CheckpointError, FileNotFoundError, NothingToExplain, corpus.DatasetFormatError,
            models.TaskMismatch, models.TrainingError, preprocess.MissingLabels, preprocess.TaggingError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
