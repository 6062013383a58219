"""Command-line pipeline: prepare, train, evaluate, predict, freq.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import CONFIG_ENV, TrainConfig, load_config
from .corpus import assemble_split
from .evaluation import confusion_csv, evaluate
from .models import ARCHITECTURES, build_model, load_checkpoint, read_manifest, save_checkpoint
from .textprep import CleanDocument, Filtered, StopwordList, clean_text, preprocess_article, remove_stopwords, term_frequencies, tokenize_words, write_frequency_tsv
from .tokenizer import Vocabulary, build_vocabulary, encode_batch
from .training import classify, spec_from_config, train

log = logging.getLogger("bnfakenews")

TRAIN_CACHE = "train.tsv"
TEST_CACHE = "test.tsv"
VOCAB_FILE = "vocab.tsv"
STOPWORDS_FILE = "stopwords.txt"
CONFIG_FILE = "config.txt"


class VocabularyMismatch(RuntimeError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, subcommand: str, config: TrainConfig | None, seed, inputs, artifacts, started: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": None if config is None else config.to_text().splitlines(),
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "artifacts": [str(a) for a in artifacts],
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def resolve_config(path: str | None) -> tuple[TrainConfig, Path | None]:
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        return load_config(path), Path(path)
    return TrainConfig(), None


def write_docs(docs: list[CleanDocument], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            fh.write(f"{d.article_id}\t{d.label}\t{' '.join(d.tokens)}\n")


def read_docs(path) -> list[CleanDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            article_id, label, text = line.rstrip("\n").split("\t")
            docs.append(CleanDocument(article_id, tuple(text.split(" ")) if text else (), int(label)))
    return docs


def _check_prepared(prepared: Path) -> None:
    for name in (TRAIN_CACHE, TEST_CACHE, VOCAB_FILE, STOPWORDS_FILE):
        if not (prepared / name).is_file():
            raise FileNotFoundError(f"{prepared} is not a prepared corpus directory (missing {name})")


# subcommands --------------------------------------------------------------------


def cmd_prepare(args) -> int:
    started = time.monotonic()
    config, config_path = resolve_config(args.config)
    stops = StopwordList.load(args.stopwords)
    split = assemble_split(args.train_authentic, args.train_fake, args.test_authentic, args.test_fake)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    prepared = {}
    for name, articles in (("train", split.train), ("test", split.test)):
        kept, stats = [], {0: [0, 0], 1: [0, 0]}
        for a in articles:
            res = preprocess_article(a, stops, config.min_words, config.count_before_stopwords)
            if isinstance(res, Filtered):
                stats[a.label][1] += 1
            else:
                stats[a.label][0] += 1
                kept.append(res)
        prepared[name] = kept
        for label in (1, 0):
            k, f = stats[label]
            print(f"{name} label={label}: kept {k}, filtered {f}")
    print(f"row errors: {len(split.row_errors)}, train/test overlaps: {len(split.overlaps)}")

    vocab = build_vocabulary(prepared["train"], config.vocab_max_size, config.seq_len)
    write_docs(prepared["train"], out / TRAIN_CACHE)
    write_docs(prepared["test"], out / TEST_CACHE)
    vocab.save(out / VOCAB_FILE)
    shutil.copyfile(args.stopwords, out / STOPWORDS_FILE)
    (out / CONFIG_FILE).write_text(config.to_text(), encoding="utf-8")
    print(f"vocabulary: {len(vocab)} entries -> {out / VOCAB_FILE}")
    inputs = [args.train_authentic, args.train_fake, args.test_authentic, args.test_fake, args.stopwords]
    if config_path:
        inputs.append(config_path)
    artifacts = [out / n for n in (TRAIN_CACHE, TEST_CACHE, VOCAB_FILE, STOPWORDS_FILE, CONFIG_FILE)]
    write_manifest(out / "run_manifest.json", "prepare", config, config.seed, inputs, artifacts, started)
    return 0


def cmd_train(args) -> int:
    started = time.monotonic()
    config, config_path = resolve_config(args.config)
    prepared = Path(args.prepared_dir)
    _check_prepared(prepared)
    vocab = Vocabulary.load(prepared / VOCAB_FILE)
    changes = {"seq_len": vocab.seq_len}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.balance:
        changes["balance"] = True
    config = config.replace(**changes)
    docs = read_docs(prepared / TRAIN_CACHE)
    model = build_model(spec_from_config(args.arch, vocab, config), seed=config.seed)
    model, history = train(model, docs, vocab, config)

    model_out = Path(args.model_out)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    vocab_ref = {"sha256": sha256_file(prepared / VOCAB_FILE), "entries": len(vocab)}
    save_checkpoint(model, model_out, vocab_ref, config.digest())
    history_out = Path(args.history_out) if args.history_out else model_out.with_name(model_out.name + ".history.csv")
    history_out.write_text(history.to_csv(), encoding="utf-8")
    last = history.epochs[-1]
    print(f"{args.arch}: {len(history.epochs)} epochs, final loss {last.loss:.6f}, accuracy {last.accuracy:.6f}")
    inputs = [prepared / TRAIN_CACHE, prepared / VOCAB_FILE] + ([config_path] if config_path else [])
    write_manifest(model_out.with_name(model_out.name + ".run.json"), "train", config, config.seed, inputs, [model_out, history_out], started)
    return 0


def _vocab_for(model_path, prepared: Path) -> Vocabulary:
    manifest = read_manifest(model_path)
    expected = manifest.get("vocabulary", {}).get("sha256")
    actual = sha256_file(prepared / VOCAB_FILE)
    if expected != actual:
        raise VocabularyMismatch(f"checkpoint was trained with vocabulary {expected}, {prepared / VOCAB_FILE} is {actual}")
    return Vocabulary.load(prepared / VOCAB_FILE)


def cmd_evaluate(args) -> int:
    started = time.monotonic()
    prepared = Path(args.prepared_dir)
    _check_prepared(prepared)
    vocab = _vocab_for(args.model, prepared)
    model = load_checkpoint(args.model)
    docs = read_docs(prepared / TEST_CACHE)
    report, curve = evaluate(model, docs, vocab, args.threshold)

    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "roc.csv").write_text(curve.to_csv() if curve else "fpr,tpr,threshold\n", encoding="utf-8")
    (out / "confusion.csv").write_text(confusion_csv(report.confusion), encoding="utf-8")
    print(f"accuracy {report.accuracy:.4f}  precision {report.precision:.4f}  recall {report.recall:.4f}  f1 {report.f1:.4f}")
    artifacts = [out / n for n in ("metrics.txt", "roc.csv", "confusion.csv")]
    write_manifest(out / "run_manifest.json", "evaluate", None, None, [args.model, prepared / TEST_CACHE, prepared / VOCAB_FILE], artifacts, started)
    return 0


def cmd_predict(args) -> int:
    prepared = Path(args.prepared_dir)
    vocab = _vocab_for(args.model, prepared)
    stops = StopwordList.load(prepared / STOPWORDS_FILE)
    model = load_checkpoint(args.model)
    if args.text is not None:
        lines = [args.text]
    else:
        lines = Path(args.input_file).read_text(encoding="utf-8").splitlines()
    token_lists = []
    for n, line in enumerate(lines, start=1):
        tokens = remove_stopwords(tokenize_words(clean_text(line)), stops)
        if not tokens:
            print(f"warning: input {n} is empty after cleaning; scoring an all-PAD sequence", file=sys.stderr)
        token_lists.append(tokens)
    probs = model.predict(encode_batch(token_lists, vocab, model.spec.seq_len)) if token_lists else np.array([])
    for p in probs:
        print(f"{float(p):.9g}\t{classify(float(p), args.threshold)}")
    return 0


def cmd_freq(args) -> int:
    started = time.monotonic()
    prepared = Path(args.prepared_dir)
    _check_prepared(prepared)
    source = prepared / (TRAIN_CACHE if args.split == "train" else TEST_CACHE)
    table = term_frequencies(read_docs(source), args.top_k)
    out = Path(args.out) if args.out else prepared / f"freq_{args.split}.tsv"
    write_frequency_tsv(table, out)
    print(f"{len(table)} rows (after stopword removal) -> {out}")
    write_manifest(out.with_name(out.name + ".run.json"), "freq", None, None, [source], [out], started)
    return 0


# parser -------------------------------------------------------------------------------


def _positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnfakenews", description="Bangla fake-news detection pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="clean the four corpus files and build the vocabulary")
    p.add_argument("--train-authentic", required=True, help="Authentic-48K.csv")
    p.add_argument("--train-fake", required=True, help="Fake-1K.csv")
    p.add_argument("--test-authentic", required=True, help="LabeledAuthentic-7K.csv")
    p.add_argument("--test-fake", required=True, help="LabeledFake-1K.csv")
    p.add_argument("--stopwords", required=True, help="newline-delimited Bengali stopword list")
    p.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV})")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one architecture on a prepared corpus")
    p.add_argument("--prepared-dir", required=True)
    p.add_argument("--arch", required=True, choices=ARCHITECTURES)
    p.add_argument("--balance", action="store_true", help="oversample the minority class")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--model-out", required=True)
    p.add_argument("--history-out", help="default: <model-out>.history.csv")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score the prepared test split")
    p.add_argument("--model", required=True)
    p.add_argument("--prepared-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify raw text")
    p.add_argument("--model", required=True)
    p.add_argument("--prepared-dir", required=True, help="directory holding the training vocabulary and stopwords")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--input-file", help="one document per line")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("freq", help="word-frequency table of a prepared split")
    p.add_argument("--prepared-dir", required=True)
    p.add_argument("--split", required=True, choices=("train", "test"))
    p.add_argument("--top-k", required=True, type=_positive_int)
    p.add_argument("--out", help="default: <prepared-dir>/freq_<split>.tsv")
    p.set_defaults(func=cmd_freq)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - one-line cause, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
