"""Command-line interface: ``seqtag {train,eval,predict,split,subsample}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
import argparse
import logging
import os
import sys
from dataclasses import fields

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (build_vocabularies, format_conll, load_embeddings, read_conll,
                   read_features, split_corpus, subsample, write_conll)
from .errors import ConfigError, SeqtagError
from .numerics import Rng
from .training import TrainConfig, evaluate, train_joint
from .transfer import TaskSpec, build_joint_model, read_label_mapping

log = logging.getLogger("seqtag")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
METRIC_FLAGS = {"accuracy": "accuracy", "chunk-f1": "chunk_f1"}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(key, text):
    types = {f.name: f.type for f in fields(TrainConfig)}
    if key not in types:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = types[key]
    try:
        if kind is bool or kind == "bool":
            return _parse_bool(text)
        if kind is int or kind == "int":
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("-", "_")
            values[key] = _coerce(key, value.strip())
    return values


def build_config(args):
    values = read_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "source_prob": args.source_prob,
                 "labeling_rate": args.labeling_rate}
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, value.strip())
    return TrainConfig(**values)


def _features(path, suffix, n):
    if not suffix:
        return [None] * n
    feats = read_features(path + suffix)
    if len(feats) != n:
        raise ConfigError(f"{path + suffix} has {len(feats)} sentences, expected {n}")
    return feats


def _encode(view, raws, extras, with_tags=True):
    return [view.to_sentence(r, e, with_tags) for r, e in zip(raws, extras)]


def cmd_train(args):
    config = build_config(args)
    arch = args.arch
    metric = METRIC_FLAGS[args.metric]
    if arch != "none" and not args.source_train:
        raise ConfigError(f"--arch {arch} requires --source-train")
    root = Rng(config.seed)

    tgt_train = read_conll(args.train)
    tgt_extra = _features(args.train, args.extra_features, len(tgt_train))
    if config.labeling_rate < 1.0:
        kept = subsample(list(zip(tgt_train, tgt_extra)), config.labeling_rate,
                         root.derive("labeling-rate"))
        tgt_train = [r for r, _ in kept]
        tgt_extra = [e for _, e in kept]
    if not tgt_train:
        raise ConfigError("no target training sentences left after subsampling")
    tgt_dev = read_conll(args.dev)
    dev_extra = _features(args.dev, args.extra_features, len(tgt_dev))
    extra_dim = tgt_extra[0].shape[1] if args.extra_features else 0

    train_sets = {"target": tgt_train}
    src_train = src_dev = []
    if arch != "none":
        src_train = read_conll(args.source_train)
        src_dev = read_conll(args.source_dev) if args.source_dev else []
        train_sets["source"] = src_train

    mapping = read_label_mapping(args.label_map) if args.label_map else None
    vocabs = build_vocabularies(train_sets, share_words=arch in ("T-A", "T-B"),
                                share_chars=arch != "none", min_count=config.min_count,
                                lowercase=config.lowercase)

    def labels(*corpora):
        return sorted({t for corpus in corpora for s in corpus for t in s.tags})

    target = TaskSpec(args.task, labels(tgt_train, tgt_dev), vocabs["target"].words,
                      vocabs["target"].chars, metric, extra_dim, mapping)
    source = None
    if arch != "none":
        source = TaskSpec(args.source_task, labels(src_train, src_dev), vocabs["source"].words,
                          vocabs["source"].chars, METRIC_FLAGS[args.source_metric or args.metric])
    model = build_joint_model(arch, source, target, config, root)
    if args.embeddings:
        load_embeddings(args.embeddings, target.words, model.target.encoder.word_table,
                        config.lowercase)

    view = model.target
    train_t = _encode(view, tgt_train, tgt_extra)
    dev_t = _encode(view, tgt_dev, dev_extra)
    train_s = dev_s = None
    if source is not None:
        sview = model.source
        train_s = _encode(sview, src_train, [None] * len(src_train))
        dev_s = _encode(sview, src_dev, [None] * len(src_dev)) or None

    result = train_joint(model, train_t, dev_t, config, train_s, dev_s)
    save_checkpoint(model, config, args.checkpoint)
    log_path = args.out or args.checkpoint + ".log"
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("".join(line + "\n" for line in result.log_lines))
    log.info("best target dev %.6f at step %d; checkpoint %s", result.best_metric,
             result.best_step, args.checkpoint)
    print(f"best_dev\t{result.best_metric:.6f}")
    print(f"best_step\t{result.best_step}")
    if args.test:
        raws = read_conll(args.test)
        test = _encode(view, raws, _features(args.test, args.extra_features, len(raws)))
        print(f"test\t{evaluate(view, test, metric).value:.6f}")
    return 0


def cmd_eval(args):
    model, config, meta = load_checkpoint(args.checkpoint)
    view = model.views[args.view]
    metric = METRIC_FLAGS[args.metric] if args.metric else view.metric
    raws = read_conll(args.test)
    if not raws:
        raise ConfigError(f"{args.test} has no sentences")
    sents = _encode(view, raws, _features(args.test, args.extra_features, len(raws)))
    ev = evaluate(view, sents, metric)
    if metric == "accuracy":
        print(f"accuracy\t{ev.value:.6f}")
    else:
        rep = ev.report
        print(f"precision\t{rep.overall.precision:.6f}")
        print(f"recall\t{rep.overall.recall:.6f}")
        print(f"f1\t{rep.overall.f1:.6f}")
        for typ, score in rep.by_type.items():
            print(f"f1[{typ}]\t{score.f1:.6f}")
    return 0


def cmd_predict(args):
    model, config, meta = load_checkpoint(args.checkpoint)
    view = model.views[args.view]
    raws = read_conll(args.test, tag_col=None)
    sents = _encode(view, raws, _features(args.test, args.extra_features, len(raws)),
                    with_tags=False)
    preds = view.predict(sents) if sents else []
    text = format_conll(raws, [view.tag_names(p) for p in preds])
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_split(args):
    sents = read_conll(args.input, tag_col=None)
    parts = split_corpus(sents, Rng(args.seed).derive("split"))
    for name, part in zip(("train", "dev", "test"), parts):
        write_conll(part, f"{args.out}.{name}.conll")
        print(f"{name}\t{len(part)}")
    return 0


def cmd_subsample(args):
    sents = read_conll(args.input, tag_col=None)
    kept = subsample(sents, args.labeling_rate, Rng(args.seed).derive("labeling-rate"))
    write_conll(kept, args.out)
    print(f"kept\t{len(kept)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="seqtag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a single-task or transfer model")
    t.add_argument("--arch", choices=["none", "T-A", "T-B", "T-C"], default="none")
    t.add_argument("--task", default="target", help="name of the target task")
    t.add_argument("--source-task", default="source")
    t.add_argument("--train", required=True)
    t.add_argument("--dev", required=True)
    t.add_argument("--test")
    t.add_argument("--source-train")
    t.add_argument("--source-dev")
    t.add_argument("--label-map")
    t.add_argument("--labeling-rate", type=float)
    t.add_argument("--source-prob", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--config")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key")
    t.add_argument("--embeddings")
    t.add_argument("--extra-features", metavar="SUFFIX",
                   help="read per-token features from FILE+SUFFIX for every target file")
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--metric", choices=sorted(METRIC_FLAGS), default="accuracy")
    t.add_argument("--source-metric", choices=sorted(METRIC_FLAGS))
    t.add_argument("--out", help="training log path (default CHECKPOINT.log)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a tagged file with a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--metric", choices=sorted(METRIC_FLAGS))
    e.add_argument("--extra-features", metavar="SUFFIX")
    e.add_argument("--view", choices=["target", "source"], default="target")
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="append predicted tags to a column file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.add_argument("--extra-features", metavar="SUFFIX")
    p.add_argument("--view", choices=["target", "source"], default="target")
    p.set_defaults(func=cmd_predict)

    s = sub.add_parser("split", help="seeded 80/10/10 train/dev/test split")
    s.add_argument("input")
    s.add_argument("--out", required=True, help="output prefix")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    r = sub.add_parser("subsample", help="keep a fraction of the sentences")
    r.add_argument("input")
    r.add_argument("--labeling-rate", type=float, required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_subsample)
    return parser


def _setup_logging():
    level = os.environ.get("SEQTAG_LOG_LEVEL", "info").lower()
    if level not in LOG_LEVELS:
        raise ConfigError(f"SEQTAG_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except ConfigError as exc:
        print(f"seqtag: configuration error: {exc}", file=sys.stderr)
        return 2
    except (SeqtagError, OSError) as exc:
        print(f"seqtag: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
