"""Command-line entry point: train, tag, eval, gradcheck, attn-dump, sweep.

Exit codes: 0 success, 1 check or metric failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

from . import data
from .config import TASKS, TrainConfig, load_config_file

log = logging.getLogger("psatag")

ABLATION_FLAGS = ("disable_mask", "disable_gauss", "disable_tokenpos", "disable_fusion1", "disable_fusion2")
ABLATION_GRID = {
    "full": {},
    "no_mask": {"disable_mask": True},
    "no_tokenpos": {"disable_tokenpos": True},
    "no_gauss": {"disable_gauss": True},
    "no_positional_bias": {"disable_mask": True, "disable_tokenpos": True, "disable_gauss": True},
    "no_fusion1": {"disable_fusion1": True},
    "no_fusion2": {"disable_fusion2": True},
    "no_fusion": {"disable_fusion1": True, "disable_fusion2": True},
}


class UsageError(Exception):
    pass


def _existing_file(value):
    if not Path(value).is_file():
        raise argparse.ArgumentTypeError(f"no such file: {value}")
    return value


def _writable_path(value):
    parent = Path(value).resolve().parent
    if not parent.is_dir():
        raise argparse.ArgumentTypeError(f"directory does not exist: {parent}")
    return value


def _int_list(value):
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def _add_config_options(p):
    g = p.add_argument_group("model/training options (override --config)")
    g.add_argument("--config", type=_existing_file, help="JSON or key=value config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--eta0", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--clip", type=float)
    g.add_argument("--dropout-lstm", type=float)
    g.add_argument("--dropout-attn", type=float)
    g.add_argument("-k", "--window", dest="k", type=int, help="window size k (epsilon = k/2, r = k)")
    g.add_argument("--patience", type=int)
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--word-emb", type=int)
    g.add_argument("--char-emb", type=int)
    g.add_argument("--char-hidden", type=int)
    g.add_argument("--word-hidden", type=int)
    g.add_argument("--token-col", type=int)
    g.add_argument("--tag-col", type=int)
    g.add_argument("--learn-alphas", action="store_true", default=None)
    g.add_argument("--factorized-crf", action="store_true", default=None)
    for flag in ABLATION_FLAGS:
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true", default=None)


def build_config(args, task):
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key in ("seed", "eta0", "rho", "momentum", "batch_size", "clip", "dropout_lstm", "dropout_attn", "k",
                "patience", "max_epochs", "word_emb", "char_emb", "char_hidden", "word_hidden",
                "token_col", "tag_col", "learn_alphas", "factorized_crf", *ABLATION_FLAGS):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if task is not None:
        values["task"] = task
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def make_parser():
    parser = argparse.ArgumentParser(prog="psatag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train a tagger and write a checkpoint")
    p.add_argument("--train", required=True, type=_existing_file)
    p.add_argument("--dev", required=True, type=_existing_file)
    p.add_argument("--test", type=_existing_file)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--out", required=True, type=_writable_path)
    p.add_argument("--embeddings", type=_existing_file)
    p.add_argument("--log", type=_writable_path, help="epoch log (JSON lines); default <out>.log.jsonl")
    _add_config_options(p)

    p = sub.add_parser("tag", help="append predicted tags to a CoNLL file")
    p.add_argument("--model", required=True, type=_existing_file)
    p.add_argument("--input", required=True, type=_existing_file)
    p.add_argument("--output", type=_writable_path, help="default: standard output")
    p.add_argument("--token-col", type=int)
    p.add_argument("--tag-col", type=int, help="gold tag column to validate against the model's tag set")

    p = sub.add_parser("eval", help="score a model on gold data, or a tagged file")
    p.add_argument("--model", type=_existing_file)
    p.add_argument("--input", type=_existing_file, help="gold CoNLL file (with --model)")
    p.add_argument("--pred", type=_existing_file, help="tagged file: gold in --tag-col, prediction last")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--token-col", type=int, default=0)
    p.add_argument("--tag-col", type=int)
    p.add_argument("--json", type=_writable_path, help="also write metrics as JSON here")
    p.add_argument("--min-metric", type=float, help="exit 1 if the task metric falls below this")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width-scale", type=int, default=1)
    p.add_argument("--samples", type=int, default=24, help="coordinates per parameter group")
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("attn-dump", help="write per-sentence attention matrices as JSON")
    p.add_argument("--model", required=True, type=_existing_file)
    p.add_argument("--input", required=True, type=_existing_file)
    p.add_argument("--layer", required=True, type=int, choices=(1, 2))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--token-col", type=int)

    p = sub.add_parser("sweep", help="window-size sweep and ablation grid over several seeds")
    p.add_argument("--train", required=True, type=_existing_file)
    p.add_argument("--dev", required=True, type=_existing_file)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--embeddings", type=_existing_file)
    p.add_argument("--grid", choices=("window", "ablation", "all", "none"), default="all")
    p.add_argument("--ks", type=_int_list, default=[2, 5, 8, 10, 12, 15])
    p.add_argument("--seeds", type=int, default=5, help="runs per setting (mean and std reported)")
    _add_config_options(p)
    return parser


# ------------------------------------------------------------------ verbs

def cmd_train(args):
    from .trainer import save_checkpoint, train

    config = build_config(args, args.task)
    tr = data.read_conll(args.train, config.token_col, config.tag_col)
    dev = data.read_conll(args.dev, config.token_col, config.tag_col)
    test = data.read_conll(args.test, config.token_col, config.tag_col) if args.test else None
    log_path = args.log or f"{args.out}.log.jsonl"
    ckpt, logs = train(config, tr, dev, embeddings_path=args.embeddings, log_path=log_path, test_corpus=test,
                       progress=lambda e: print(f"epoch={e.epoch} loss={e.train_loss:.4f} dev={e.dev_metric:.4f} "
                                                f"lr={e.learning_rate:.6f}", file=sys.stderr))
    save_checkpoint(args.out, ckpt)
    print(f"best_dev={ckpt.best_metric:.6f} best_epoch={ckpt.epoch} epochs_run={len(logs)} checkpoint={args.out}")
    if test is not None:
        from .trainer import evaluate_model

        m = evaluate_model(ckpt.build_model(), data.prepare_tags(test, config.task), config.task)
        print(m.to_text())
    return 0


def _load_model(path):
    from .trainer import CheckpointError, load_checkpoint

    try:
        return load_checkpoint(path).build_model()
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None


def cmd_tag(args):
    model = _load_model(args.model)
    token_col = args.token_col if args.token_col is not None else model.config.token_col
    corpus = data.read_conll(args.input, token_col, args.tag_col, allow_empty=True)
    if args.tag_col is not None:
        gold = data.prepare_tags(corpus, model.config.task)
        unknown = sorted({t for s in gold for t in s.tags} - set(model.vocab.tags))
        if unknown:
            raise UsageError(f"input tags not in the model's tag set ({model.config.task}): {unknown[:10]}")
    preds = model.predict(corpus.sentences) if len(corpus) else []
    lines = []
    for rows, tags in zip(corpus.rows, preds):
        lines.extend(" ".join([*fields, tag]) for fields, tag in zip(rows, tags))
        lines.append("")
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args):
    if args.pred is not None:
        if args.model is not None or args.input is not None:
            raise UsageError("use either --pred or --model/--input")
        task = args.task
        if task is None:
            raise UsageError("--task is required with --pred")
        gold_col = args.tag_col if args.tag_col is not None else -2
        gold = data.read_conll(args.pred, args.token_col, gold_col)
        pred = data.read_conll(args.pred, args.token_col, -1)
        gold = data.prepare_tags(gold, task)
        metrics = data.evaluate([s.tags for s in gold], [s.tags for s in pred], task)
    else:
        if args.model is None or args.input is None:
            raise UsageError("eval needs --pred, or both --model and --input")
        from .trainer import evaluate_model

        model = _load_model(args.model)
        task = args.task or model.config.task
        tag_col = args.tag_col if args.tag_col is not None else model.config.tag_col
        gold = data.prepare_tags(data.read_conll(args.input, args.token_col, tag_col), task)
        metrics = evaluate_model(model, gold, task)
    print(metrics.to_text())
    if args.json:
        Path(args.json).write_text(metrics.to_json() + "\n", encoding="utf-8")
    if args.min_metric is not None and metrics.main(task) < args.min_metric:
        return 1
    return 0


def cmd_gradcheck(args):
    from .gradcheck import run_gradcheck

    if args.width_scale < 1 or args.samples < 1:
        raise UsageError("--width-scale and --samples must be >= 1")
    report = run_gradcheck(seed=args.seed, width_scale=args.width_scale, samples=args.samples, tol=args.tol)
    for line in report.lines():
        print(line)
    if report.offenders:
        print("FAIL: " + ", ".join(g.name for g in report.offenders))
        return 1
    print("PASS")
    return 0


def cmd_attn_dump(args):
    out_dir = Path(args.out_dir)
    model = _load_model(args.model)
    params = model.psa1 if args.layer == 1 else model.psa2
    if params is None:
        raise UsageError(f"fusion layer {args.layer} is disabled in this model")
    token_col = args.token_col if args.token_col is not None else model.config.token_col
    corpus = data.read_conll(args.input, token_col, None, allow_empty=True)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, trace in enumerate(model.attention_traces(corpus.sentences, args.layer)):
        trace.write(out_dir / f"sentence_{i:05d}.json")
    print(f"wrote {len(corpus)} attention traces to {out_dir}")
    return 0


def sweep_settings(grid, ks):
    settings = []
    if grid in ("window", "all"):
        settings += [(f"k={k}", {"k": k}) for k in ks]
    if grid in ("ablation", "all"):
        settings += list(ABLATION_GRID.items())
    if grid == "none":
        settings.append(("base", {}))
    return settings


def cmd_sweep(args):
    from .trainer import train

    base = build_config(args, args.task)
    out_dir = Path(args.out_dir)
    tr = data.read_conll(args.train, base.token_col, base.tag_col)
    dev = data.read_conll(args.dev, base.token_col, base.tag_col)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, changes in sweep_settings(args.grid, args.ks):
        scores = []
        for run in range(args.seeds):
            cfg = base.replace(seed=base.seed + run, **changes)
            ckpt, _ = train(cfg, tr, dev, embeddings_path=args.embeddings)
            scores.append(ckpt.best_metric)
        std = statistics.stdev(scores) if len(scores) > 1 else 0.0
        rows.append({"setting": name, "mean": statistics.fmean(scores), "std": std, "runs": scores})
        print(f"{name:<22} {rows[-1]['mean']:.4f} +- {std:.4f}  (n={len(scores)})", flush=True)
    (out_dir / "summary.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return 0


COMMANDS = {
    "train": cmd_train,
    "tag": cmd_tag,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "attn-dump": cmd_attn_dump,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"psatag {args.verb}: error: {exc}", file=sys.stderr)
        return 2
    except (data.ConllFormatError, data.EmptyCorpus, data.EmbeddingFormatError, data.TagSchemeError) as exc:
        print(f"psatag {args.verb}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
