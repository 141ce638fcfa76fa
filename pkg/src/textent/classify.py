"""Multiclass text classification over frozen document encodings.

Documents are preprocessed (lowercasing, rare-word and rare-entity removal,
annotation score filtering, with counts taken on the classification corpus
itself), encoded with a trained document model at dropout 0, and fed to a
multinomial logistic-regression layer trained with Adam.  Epoch selection
uses dev accuracy; the dev set is a random fraction of the training split.

The encoder stays frozen by default.  ``finetune=True`` instead updates a
copy of the encoder jointly with the classifier.

Labeled corpora are JSON lines ``{"id":…, "label":…, "tokens":[…],
"annotations":[…]}``; an optional ``"split"`` field ("train" or "test",
default "train") carries a pre-defined partition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import metrics
from .corpus import Annotation, RawDocument, Vocabulary, compile_document, \
    filter_annotations, normalize
from .errors import EmptyTrainSet, MalformedFile
from .model import ModelParameters, encode
from .optim import Adam


@dataclass
class LabeledCorpus:
    documents: list[RawDocument]
    labels: list[str]
    classes: list[str]           # sorted label inventory
    split: list[str]             # per document: train / dev / test

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == split]


def read_labeled_corpus(path) -> LabeledCorpus:
    documents, labels, split = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(path, f"invalid JSON: {exc}", line=lineno)
            try:
                label = str(obj["label"])
                tokens = list(obj["tokens"])
            except KeyError as exc:
                raise MalformedFile(path, f"missing field {exc}", line=lineno)
            anns = []
            for raw in obj.get("annotations") or []:
                try:
                    anns.append(Annotation(start=int(raw["start"]),
                                           end=int(raw["end"]),
                                           entity=str(raw["entity"]),
                                           score=float(raw.get("score", 1.0))))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedFile(path, f"bad annotation: {exc}", line=lineno)
            anns.sort(key=lambda a: a.start)
            doc = RawDocument(doc_id=str(obj.get("id", lineno)), target_entity="",
                              tokens=tokens, annotations=anns)
            try:
                doc.validate()
            except ValueError as exc:
                raise MalformedFile(path, str(exc), line=lineno)
            sp = obj.get("split", "train")
            if sp not in ("train", "test"):
                raise MalformedFile(path, f"unknown split {sp!r}", line=lineno)
            documents.append(doc)
            labels.append(label)
            split.append(sp)
    if not documents:
        raise MalformedFile(path, "no documents in corpus")
    return LabeledCorpus(documents=documents, labels=labels,
                         classes=sorted(set(labels)), split=split)


def assign_dev_split(corpus: LabeledCorpus, dev_frac: float,
                     seed: int) -> LabeledCorpus:
    """Move a random dev_frac of the training documents into the dev split."""
    if not 0.0 <= dev_frac < 1.0:
        raise ValueError("dev_frac must be in [0, 1)")
    rng = np.random.default_rng(seed)
    train_idx = corpus.indices("train")
    n_dev = int(round(dev_frac * len(train_idx)))
    chosen = set(np.asarray(train_idx)[rng.permutation(len(train_idx))[:n_dev]].tolist())
    split = [("dev" if i in chosen else s) for i, s in enumerate(corpus.split)]
    return replace(corpus, split=split)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def _splice_tokens(doc: RawDocument, keep_words: set[str]) -> RawDocument:
    """Remove tokens outside keep_words, remapping annotation spans.

    An annotation whose span loses every token is dropped.
    """
    kept_before = [0]
    for tok in doc.tokens:
        kept_before.append(kept_before[-1] + (1 if tok in keep_words else 0))
    tokens = [t for t in doc.tokens if t in keep_words]
    anns = []
    for ann in doc.annotations:
        s, e = kept_before[ann.start], kept_before[ann.end]
        if s < e:
            anns.append(Annotation(start=s, end=e, entity=ann.entity,
                                   score=ann.score))
    return replace(doc, tokens=tokens, annotations=anns)


def preprocess_corpus(corpus: LabeledCorpus, min_count: int = 5,
                      min_score: float = 0.05) -> LabeledCorpus:
    """Lowercase, score-filter annotations, and remove rare words/entities.

    Frequencies are counted on this corpus.  Words below min_count are
    spliced out of the token streams (annotation spans are remapped); entity
    annotations are then counted on what remains and rare ones dropped.  The
    operation is idempotent.
    """
    docs = [filter_annotations(normalize(d), min_score) for d in corpus.documents]

    word_counts: dict[str, int] = {}
    for doc in docs:
        for tok in doc.tokens:
            word_counts[tok] = word_counts.get(tok, 0) + 1
    keep_words = {w for w, c in word_counts.items() if c >= min_count}
    docs = [_splice_tokens(d, keep_words) for d in docs]

    ent_counts: dict[str, int] = {}
    for doc in docs:
        for ann in doc.annotations:
            ent_counts[ann.entity] = ent_counts.get(ann.entity, 0) + 1
    keep_ents = {e for e, c in ent_counts.items() if c >= min_count}
    docs = [replace(d, annotations=[a for a in d.annotations
                                    if a.entity in keep_ents])
            for d in docs]
    return replace(corpus, documents=docs)


# ---------------------------------------------------------------------------
# Encoding and the logistic layer
# ---------------------------------------------------------------------------

def encode_corpus(corpus: LabeledCorpus, params: ModelParameters,
                  vocab: Vocabulary, max_words: int = 0,
                  max_entities: int = 0) -> np.ndarray:
    """Encode every document at dropout 0; row i belongs to document i.

    Tokens and entities outside the model vocabulary are dropped; a document
    with empty bags maps to the zero vector.
    """
    out = np.zeros((len(corpus.documents), params.d))
    for i, doc in enumerate(corpus.documents):
        compiled = compile_document(doc, vocab, max_words, max_entities,
                                    require_target=False)
        out[i] = encode(compiled, params, dropout=0.0).v
    return out


@dataclass
class SoftmaxClassifier:
    W_c: np.ndarray   # (n_classes, d)
    bias: np.ndarray  # (n_classes,)


def classify(vector: np.ndarray, clf: SoftmaxClassifier) -> tuple[int, np.ndarray]:
    """Predicted class id (ties to the lower index) and class probabilities."""
    logits = clf.W_c @ vector + clf.bias
    exps = np.exp(logits - logits.max())
    probs = exps / exps.sum()
    return int(np.argmax(probs)), probs


@dataclass
class ClassifierResult:
    classifier: SoftmaxClassifier
    best_epoch: int
    dev_accuracy: list[float]


def _accuracy(X, y, clf) -> float:
    logits = X @ clf.W_c.T + clf.bias
    return float(np.mean(np.argmax(logits, axis=1) == y))


def train_classifier(vectors: np.ndarray, label_ids: Sequence[int],
                     train_idx: Sequence[int], dev_idx: Sequence[int],
                     n_classes: int, epochs: int, seed: int,
                     batch_size: int = 32, lr: float = 1e-3) -> ClassifierResult:
    """Multinomial logistic regression with Adam; snapshot at best dev accuracy.

    Weights start at zero, so epochs=0 yields uniform class probabilities.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    dev_idx = np.asarray(dev_idx, dtype=np.intp)
    if train_idx.size == 0:
        raise EmptyTrainSet("no training documents")
    y = np.asarray(label_ids, dtype=np.int64)
    d = vectors.shape[1]
    clf = SoftmaxClassifier(W_c=np.zeros((n_classes, d)), bias=np.zeros(n_classes))
    opt = Adam({"W_c": clf.W_c, "bias": clf.bias}, lr=lr)
    rng = np.random.default_rng(seed)

    best = SoftmaxClassifier(W_c=clf.W_c.copy(), bias=clf.bias.copy())
    best_epoch = 0
    best_score = -np.inf
    curve: list[float] = []
    for epoch in range(1, epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        for lo in range(0, order.size, batch_size):
            idx = order[lo:lo + batch_size]
            X = vectors[idx]
            logits = X @ clf.W_c.T + clf.bias
            logits -= logits.max(axis=1, keepdims=True)
            exps = np.exp(logits)
            probs = exps / exps.sum(axis=1, keepdims=True)
            probs[np.arange(idx.size), y[idx]] -= 1.0
            dlogits = probs / idx.size
            opt.step({"W_c": clf.W_c, "bias": clf.bias},
                     {"W_c": dlogits.T @ X, "bias": dlogits.sum(axis=0)})
        if dev_idx.size:
            score = _accuracy(vectors[dev_idx], y[dev_idx], clf)
            curve.append(score)
            if score > best_score:
                best_score = score
                best_epoch = epoch
                best = SoftmaxClassifier(W_c=clf.W_c.copy(), bias=clf.bias.copy())
        else:
            curve.append(float("nan"))
            best_epoch = epoch
            best = SoftmaxClassifier(W_c=clf.W_c.copy(), bias=clf.bias.copy())
    return ClassifierResult(classifier=best, best_epoch=best_epoch,
                            dev_accuracy=curve)


# ---------------------------------------------------------------------------
# Joint fine-tuning (optional path)
# ---------------------------------------------------------------------------

def _clone_params(params: ModelParameters) -> ModelParameters:
    return ModelParameters(variant=params.variant, a=params.a.copy(),
                           b=params.b.copy(), c=params.c.copy(),
                           W=None if params.W is None else params.W.copy())


def _finetune(corpus, params, vocab, label_ids, train_idx, dev_idx, n_classes,
              epochs, seed, batch_size, lr, max_words, max_entities):
    """Train the logistic layer and an encoder copy jointly."""
    if len(train_idx) == 0:
        raise EmptyTrainSet("no training documents")
    tuned = _clone_params(params)
    compiled = [compile_document(d, vocab, max_words, max_entities,
                                 require_target=False)
                for d in corpus.documents]
    d = tuned.d
    clf = SoftmaxClassifier(W_c=np.zeros((n_classes, d)), bias=np.zeros(n_classes))
    arrays = {"W_c": clf.W_c, "bias": clf.bias, "a": tuned.a, "b": tuned.b}
    if tuned.W is not None:
        arrays["W"] = tuned.W
    opt = Adam(arrays, lr=lr)
    rng = np.random.default_rng(seed)
    y = np.asarray(label_ids, dtype=np.int64)
    train_idx = np.asarray(train_idx, dtype=np.intp)
    dev_idx = np.asarray(dev_idx, dtype=np.intp)

    def encode_all(idx):
        return np.asarray([encode(compiled[i], tuned, dropout=0.0).v for i in idx])

    best_state = (_clone_params(tuned),
                  SoftmaxClassifier(W_c=clf.W_c.copy(), bias=clf.bias.copy()))
    best_epoch = 0
    best_score = -np.inf
    curve: list[float] = []
    for epoch in range(1, epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        for lo in range(0, order.size, batch_size):
            idx = order[lo:lo + batch_size]
            encs = [encode(compiled[i], tuned, dropout=0.0) for i in idx]
            X = np.asarray([e.v for e in encs])
            logits = X @ clf.W_c.T + clf.bias
            logits -= logits.max(axis=1, keepdims=True)
            exps = np.exp(logits)
            probs = exps / exps.sum(axis=1, keepdims=True)
            probs[np.arange(idx.size), y[idx]] -= 1.0
            dlogits = probs / idx.size

            grads = {"W_c": dlogits.T @ X, "bias": dlogits.sum(axis=0),
                     "a": np.zeros_like(tuned.a), "b": np.zeros_like(tuned.b)}
            if tuned.W is not None:
                grads["W"] = np.zeros_like(tuned.W)
            dV = dlogits @ clf.W_c
            for row, enc in enumerate(encs):
                dv = dV[row]
                if tuned.variant == "full":
                    zero = np.zeros(d)
                    stacked = np.concatenate(
                        [enc.v_w if enc.v_w is not None else zero,
                         enc.v_e if enc.v_e is not None else zero])
                    grads["W"] += np.outer(dv, stacked)
                    dstacked = tuned.W.T @ dv
                    dvw, dve = dstacked[:d], dstacked[d:]
                elif tuned.variant == "word":
                    dvw, dve = dv, None
                else:
                    dvw, dve = None, dv
                if dvw is not None and enc.words:
                    grads["a"][enc.words] += dvw / len(enc.words)
                if dve is not None and enc.ctx_entities:
                    grads["b"][enc.ctx_entities] += dve / len(enc.ctx_entities)
            params_map = {"W_c": clf.W_c, "bias": clf.bias,
                          "a": tuned.a, "b": tuned.b}
            if tuned.W is not None:
                params_map["W"] = tuned.W
            opt.step(params_map, grads)

        if dev_idx.size:
            score = _accuracy(encode_all(dev_idx), y[dev_idx], clf)
            curve.append(score)
            take = score > best_score
        else:
            curve.append(float("nan"))
            take = True
        if take:
            best_score = curve[-1]
            best_epoch = epoch
            best_state = (_clone_params(tuned),
                          SoftmaxClassifier(W_c=clf.W_c.copy(),
                                            bias=clf.bias.copy()))
    tuned, clf = best_state
    return ClassifierResult(classifier=clf, best_epoch=best_epoch,
                            dev_accuracy=curve), tuned


# ---------------------------------------------------------------------------
# Full protocol
# ---------------------------------------------------------------------------

def run_classification(params: ModelParameters, vocab: Vocabulary,
                       corpus: LabeledCorpus, dev_frac: float, seed: int,
                       epochs: int, batch_size: int = 32, min_count: int = 5,
                       min_score: float = 0.05, finetune: bool = False,
                       max_words: int = 0, max_entities: int = 0) -> dict:
    """Preprocess, encode, train the logistic layer, and score the test split."""
    corpus = preprocess_corpus(corpus, min_count=min_count, min_score=min_score)
    corpus = assign_dev_split(corpus, dev_frac, seed)
    class_id = {c: i for i, c in enumerate(corpus.classes)}
    label_ids = [class_id[l] for l in corpus.labels]
    train_idx = corpus.indices("train")
    dev_idx = corpus.indices("dev")
    test_idx = corpus.indices("test")

    if finetune:
        fit, tuned = _finetune(corpus, params, vocab, label_ids, train_idx,
                               dev_idx, len(corpus.classes), epochs, seed,
                               batch_size, 1e-3, max_words, max_entities)
        vectors = encode_corpus(corpus, tuned, vocab, max_words, max_entities)
    else:
        vectors = encode_corpus(corpus, params, vocab, max_words, max_entities)
        fit = train_classifier(vectors, label_ids, train_idx, dev_idx,
                               len(corpus.classes), epochs, seed, batch_size)

    predicted = [corpus.classes[classify(vectors[i], fit.classifier)[0]]
                 for i in test_idx]
    gold = [corpus.labels[i] for i in test_idx]
    report = metrics.classification_report(predicted, gold, corpus.classes)
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "per_class_f1": report.per_class_f1,
        "best_epoch": fit.best_epoch,
        "classes": list(corpus.classes),
        "finetuned_encoder": bool(finetune),
    }
