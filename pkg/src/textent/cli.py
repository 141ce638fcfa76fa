"""Command-line pipeline: build-corpus, pretrain, train, encode, eval-typing,
eval-classify, and nn.

Flag values resolve in three layers: built-in defaults, then a TOML config
file given with ``--config`` (flat keys mirroring the flag names), then
explicit flags.  ``--dump-config`` prints the resolved configuration as TOML
and exits without running.  Every run that writes an output file also writes
a ``<output>.manifest.json`` recording the resolved configuration, input file
hashes, seed, and wall time.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing files,
invariant violations).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import classify as classify_mod
from . import corpus as corpus_mod
from . import sgns as sgns_mod
from . import typing_eval as typing_mod
from .errors import DataError, TextentError
from .model import ModelParameters, TrainConfig, encode, load_model, save_model
from .train import train
from .vectors import VectorStore, load_vectors, nearest_entities, save_vectors

PROG = "textent"


@dataclass(frozen=True)
class Opt:
    name: str
    type: type = str
    default: object = None
    help: str = ""
    flag: bool = False
    required: bool = False

    @property
    def key(self) -> str:
        return self.name.replace("-", "_")


COMMON_OPTS = [
    Opt("config", str, None, "TOML config file; explicit flags override it"),
    Opt("seed", int, 42, "random seed"),
    Opt("threads", int, 1, "worker threads (1 = deterministic)"),
]

COMMANDS: dict[str, list[Opt]] = {
    "build-corpus": [
        Opt("input", str, required=True, help="annotated JSON-lines corpus"),
        Opt("output", str, required=True, help="compiled dataset path"),
        Opt("min-word-count", int, 5),
        Opt("min-entity-count", int, 3),
        Opt("min-links", int, 5),
        Opt("keep-entities", str, None, "file of entity names exempt from the link filter"),
        Opt("min-score", float, 0.05),
        Opt("max-words", int, 2000),
        Opt("max-entities", int, 300),
        Opt("dedup-entities", flag=True, default=False),
        Opt("truncate-before-oov", flag=True, default=False),
    ],
    "pretrain": [
        Opt("corpus", str, required=True, help="annotated JSON-lines corpus"),
        Opt("output", str, required=True, help="embedding text file"),
        Opt("dim", int, 300),
        Opt("window", int, 10),
        Opt("negatives", int, 15),
        Opt("min-count", int, 3),
        Opt("epochs", int, 5),
        Opt("subsample", float, 1e-3),
        Opt("lr", float, 0.025),
        Opt("power", float, 0.75),
        Opt("min-score", float, 0.0),
    ],
    "train": [
        Opt("data", str, required=True, help="compiled dataset"),
        Opt("output", str, required=True, help="model file"),
        Opt("init", str, None, "pretrained embedding file"),
        Opt("variant", str, "full", "full | word | entity"),
        Opt("dim", int, 300),
        Opt("negatives", int, 100),
        Opt("dropout", float, 0.5),
        Opt("batch-size", int, 100),
        Opt("epochs", int, 50),
        Opt("adadelta-rho", float, 0.95),
        Opt("adadelta-eps", float, 1e-6),
        Opt("neg-dist", str, "uniform", "uniform | unigram"),
    ],
    "encode": [
        Opt("model", str, required=True),
        Opt("vocab", str, required=True, help="compiled dataset holding the vocabulary"),
        Opt("input", str, required=True, help="JSON-lines documents"),
        Opt("output", str, required=True, help="TSV of document vectors"),
        Opt("min-score", float, 0.05),
        Opt("max-words", int, 0, "0 = unlimited"),
        Opt("max-entities", int, 0, "0 = unlimited"),
    ],
    "eval-typing": [
        Opt("model", str, None, "model file (with --vocab)"),
        Opt("vocab", str, None),
        Opt("vectors", str, None,
            "embedding text file to evaluate instead of a model"),
        Opt("dataset", str, required=True, help="typing TSV"),
        Opt("report", str, required=True, help="report JSON path"),
        Opt("hidden", int, 200),
        Opt("epochs", int, 100),
        Opt("batch-size", int, 32),
        Opt("bep", str, "entity", "entity | global"),
    ],
    "eval-classify": [
        Opt("model", str, required=True),
        Opt("vocab", str, required=True),
        Opt("corpus", str, required=True, help="labeled JSON-lines corpus"),
        Opt("report", str, required=True),
        Opt("dev-frac", float, 0.1),
        Opt("min-count", int, 5),
        Opt("min-score", float, 0.05),
        Opt("epochs", int, 100),
        Opt("batch-size", int, 32),
        Opt("finetune", flag=True, default=False),
    ],
    "nn": [
        Opt("model", str, required=True),
        Opt("vocab", str, required=True),
        Opt("text", str, required=True, help="query sentence (whitespace tokenized)"),
        Opt("annotations", str, None, "JSON file of annotations for the query"),
        Opt("top", int, 10),
        Opt("min-score", float, 0.05),
        Opt("output", str, None, "write results here instead of stdout"),
    ],
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for cmd, opts in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--dump-config", action="store_true", default=False,
                       help="print the resolved configuration as TOML and exit")
        for opt in opts + COMMON_OPTS:
            flag = "--" + opt.name
            if opt.flag:
                p.add_argument(flag, action="store_true",
                               default=argparse.SUPPRESS, help=opt.help)
            else:
                p.add_argument(flag, type=opt.type, default=argparse.SUPPRESS,
                               help=opt.help)
    return parser


def _resolve_config(cmd: str, ns: argparse.Namespace) -> dict:
    opts = COMMANDS[cmd] + COMMON_OPTS
    by_key = {o.key: o for o in opts}
    cfg = {o.key: o.default for o in opts}
    explicit = {k: v for k, v in vars(ns).items() if k in by_key}

    config_path = explicit.get("config", None)
    if config_path is not None:
        with open(config_path, "rb") as fh:
            try:
                file_cfg = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise DataError(f"{config_path}: invalid TOML: {exc}")
        for raw_key, value in file_cfg.items():
            key = raw_key.replace("-", "_")
            if key not in by_key:
                raise _UsageError(f"unknown config key {raw_key!r} for {cmd}")
            opt = by_key[key]
            cfg[key] = bool(value) if opt.flag else opt.type(value)
    cfg.update(explicit)

    missing = [o.name for o in opts if o.required and cfg[o.key] is None]
    if missing:
        raise _UsageError(f"{cmd}: missing required option(s): "
                          + ", ".join("--" + m for m in missing))
    if cmd == "eval-typing" and cfg["vectors"] is None and (
            cfg["model"] is None or cfg["vocab"] is None):
        raise _UsageError(
            "eval-typing: provide --model with --vocab, or --vectors")
    return cfg


def _toml_dump(cmd: str, cfg: dict) -> str:
    lines = []
    for opt in COMMANDS[cmd] + COMMON_OPTS:
        value = cfg[opt.key]
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, (int, float)):
            text = repr(value)
        else:
            text = json.dumps(str(value))
        lines.append(f"{opt.name} = {text}")
    return "\n".join(lines) + "\n"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(output_path, cmd, cfg, inputs, artifacts, started):
    manifest = {
        "subcommand": cmd,
        "config": {k: v for k, v in cfg.items() if k != "config"},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": cfg.get("seed"),
        "wall_time_seconds": time.monotonic() - started,
        "artifacts": [str(a) for a in artifacts],
    }
    with open(str(output_path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_model_and_vocab(cfg):
    params, vocab_hash = load_model(cfg["model"])
    dataset = corpus_mod.load_dataset(cfg["vocab"])
    if dataset.vocab.content_hash() != vocab_hash:
        raise DataError(
            f"{cfg['vocab']}: vocabulary hash does not match the one recorded "
            f"in {cfg['model']}")
    return params, dataset.vocab


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_build_corpus(cfg, started):
    raw = corpus_mod.read_corpus(cfg["input"])
    keep: set[str] = set()
    inputs = [cfg["input"]]
    if cfg["keep_entities"]:
        with open(cfg["keep_entities"], "r", encoding="utf-8") as fh:
            keep = {line.strip() for line in fh if line.strip()}
        inputs.append(cfg["keep_entities"])
    dataset, stats = corpus_mod.build_corpus(
        raw, min_word_count=cfg["min_word_count"],
        min_entity_count=cfg["min_entity_count"], min_links=cfg["min_links"],
        keep_set=keep, min_score=cfg["min_score"], max_words=cfg["max_words"],
        max_entities=cfg["max_entities"], dedup_entities=cfg["dedup_entities"],
        truncate_before_oov=cfg["truncate_before_oov"])
    sidecar_cfg = {k: v for k, v in cfg.items() if k != "config"}
    sidecar_cfg.update(stats)
    corpus_mod.save_dataset(dataset, cfg["output"], config=sidecar_cfg)
    _write_manifest(cfg["output"], "build-corpus", cfg, inputs,
                    [cfg["output"], cfg["output"] + ".json"], started)


def _cmd_pretrain(cfg, started):
    raw = corpus_mod.read_corpus(cfg["corpus"])
    docs = [corpus_mod.normalize(corpus_mod.filter_annotations(d, cfg["min_score"]))
            for d in raw]
    sentences = list(corpus_mod.emit_pretrain_stream(docs))
    sgns_cfg = sgns_mod.SgnsConfig(
        dim=cfg["dim"], window=cfg["window"], negatives=cfg["negatives"],
        min_count=cfg["min_count"], epochs=cfg["epochs"],
        subsample_threshold=cfg["subsample"], initial_lr=cfg["lr"],
        power=cfg["power"], seed=cfg["seed"], threads=cfg["threads"])
    embeddings = sgns_mod.train_skipgram(sentences, sgns_cfg)
    save_vectors(VectorStore(embeddings), cfg["output"])
    with open(cfg["output"] + ".json", "w", encoding="utf-8") as fh:
        json.dump({k: v for k, v in cfg.items() if k != "config"},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg["output"], "pretrain", cfg, [cfg["corpus"]],
                    [cfg["output"], cfg["output"] + ".json"], started)


def _cmd_train(cfg, started):
    dataset = corpus_mod.load_dataset(cfg["data"])
    inputs = [cfg["data"]]
    pretrained = None
    if cfg["init"]:
        pretrained = dict(load_vectors(cfg["init"]).items())
        inputs.append(cfg["init"])
    train_cfg = TrainConfig(
        dim=cfg["dim"], variant=cfg["variant"], k=cfg["negatives"],
        dropout=cfg["dropout"], batch_size=cfg["batch_size"],
        epochs=cfg["epochs"], adadelta_rho=cfg["adadelta_rho"],
        adadelta_eps=cfg["adadelta_eps"], neg_distribution=cfg["neg_dist"],
        seed=cfg["seed"], threads=cfg["threads"])
    result = train(dataset, pretrained, train_cfg)
    sidecar = {"train_config": {k: v for k, v in cfg.items() if k != "config"},
               "epoch_losses": result.epoch_losses}
    save_model(result.params, cfg["output"], dataset.vocab.content_hash(),
               sidecar=sidecar)
    _write_manifest(cfg["output"], "train", cfg, inputs,
                    [cfg["output"], cfg["output"] + ".json"], started)


def _compile_query(doc, vocab, cfg):
    doc = corpus_mod.normalize(corpus_mod.filter_annotations(doc, cfg["min_score"]))
    return corpus_mod.compile_document(
        doc, vocab, cfg.get("max_words", 0), cfg.get("max_entities", 0),
        require_target=False)


def _cmd_encode(cfg, started):
    params, vocab = _load_model_and_vocab(cfg)
    with open(cfg["output"], "w", encoding="utf-8") as out:
        for doc in corpus_mod.iter_corpus(cfg["input"]):
            compiled = _compile_query(doc, vocab, cfg)
            vec = encode(compiled, params, dropout=0.0).v
            out.write(doc.doc_id)
            for x in vec:
                out.write("\t" + repr(float(x)))
            out.write("\n")
    _write_manifest(cfg["output"], "encode", cfg,
                    [cfg["model"], cfg["vocab"], cfg["input"]],
                    [cfg["output"]], started)


def _entity_vectors(params: ModelParameters, vocab) -> dict[str, np.ndarray]:
    return {name: params.c[i] for i, name in enumerate(vocab.target_entities)}


def _cmd_eval_typing(cfg, started):
    if cfg["vectors"]:
        store = load_vectors(cfg["vectors"])
        prefix = corpus_mod.ENTITY_TOKEN_PREFIX
        vectors = {name[len(prefix):] if name.startswith(prefix) else name: vec
                   for name, vec in store.items()}
        inputs = [cfg["vectors"], cfg["dataset"]]
    else:
        params, vocab = _load_model_and_vocab(cfg)
        vectors = _entity_vectors(params, vocab)
        inputs = [cfg["model"], cfg["vocab"], cfg["dataset"]]
    data = typing_mod.load_typing_dataset(cfg["dataset"])
    report = typing_mod.run_typing_evaluation(
        vectors, data, epochs=cfg["epochs"], seed=cfg["seed"],
        hidden=cfg["hidden"], batch_size=cfg["batch_size"], bep_mode=cfg["bep"])
    with open(cfg["report"], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg["report"], "eval-typing", cfg, inputs,
                    [cfg["report"]], started)


def _cmd_eval_classify(cfg, started):
    params, vocab = _load_model_and_vocab(cfg)
    labeled = classify_mod.read_labeled_corpus(cfg["corpus"])
    report = classify_mod.run_classification(
        params, vocab, labeled, dev_frac=cfg["dev_frac"], seed=cfg["seed"],
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        min_count=cfg["min_count"], min_score=cfg["min_score"],
        finetune=cfg["finetune"])
    with open(cfg["report"], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg["report"], "eval-classify", cfg,
                    [cfg["model"], cfg["vocab"], cfg["corpus"]],
                    [cfg["report"]], started)


def _cmd_nn(cfg, started):
    params, vocab = _load_model_and_vocab(cfg)
    tokens = cfg["text"].split()
    anns = []
    inputs = [cfg["model"], cfg["vocab"]]
    if cfg["annotations"]:
        with open(cfg["annotations"], "r", encoding="utf-8") as fh:
            for raw in json.load(fh):
                anns.append(corpus_mod.Annotation(
                    start=int(raw["start"]), end=int(raw["end"]),
                    entity=str(raw["entity"]), score=float(raw.get("score", 1.0))))
        anns.sort(key=lambda a: a.start)
        inputs.append(cfg["annotations"])
    doc = corpus_mod.RawDocument(doc_id="query", target_entity="",
                                 tokens=tokens, annotations=anns)
    doc.validate()
    compiled = _compile_query(doc, vocab, cfg)
    query = encode(compiled, params, dropout=0.0).v
    store = VectorStore.from_matrix(vocab.target_entities, params.c,
                                    prefix=corpus_mod.ENTITY_TOKEN_PREFIX)
    results = nearest_entities(query, store, cfg["top"])
    lines = "".join(f"{name}\t{cos:.6f}\n" for name, cos in results)
    if cfg["output"]:
        with open(cfg["output"], "w", encoding="utf-8") as fh:
            fh.write(lines)
        _write_manifest(cfg["output"], "nn", cfg, inputs, [cfg["output"]], started)
    else:
        sys.stdout.write(lines)


_HANDLERS = {
    "build-corpus": _cmd_build_corpus,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "encode": _cmd_encode,
    "eval-typing": _cmd_eval_typing,
    "eval-classify": _cmd_eval_classify,
    "nn": _cmd_nn,
}


def dispatch(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise _UsageError("a subcommand is required")
        cfg = _resolve_config(ns.command, ns)
    except _UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)

    if getattr(ns, "dump_config", False):
        sys.stdout.write(_toml_dump(ns.command, cfg))
        return 0

    started = time.monotonic()
    try:
        _HANDLERS[ns.command](cfg, started)
    except TextentError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = exc.filename if exc.filename else exc
        print(f"{PROG}: error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
