"""Fine-grained entity typing over learned entity vectors.

A single-hidden-layer MLP with tanh activation maps an entity vector to
independent per-type probabilities through a sigmoid output layer, trained
with summed binary cross-entropy.  Epoch selection uses dev precision-at-1;
per-type decision thresholds are then tuned on dev probabilities to maximize
each type's F1.

Dataset files are TSV: ``entity_name<TAB>split<TAB>comma-separated types``
with split one of train/dev/test.  The type inventory is the sorted set of
type names seen in the file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import metrics
from .errors import MalformedFile, MissingVector, ShapeMismatch
from .optim import Adam

SPLITS = ("train", "dev", "test")

PROB_CLAMP = 1e-7

# Any threshold above every attainable probability; assigns nothing.
THRESHOLD_SENTINEL = float(np.nextafter(1.0, 2.0))


@dataclass
class TypingDataset:
    types: list[str]
    gold: dict[str, frozenset[int]]   # entity name -> gold type ids
    split: dict[str, str]             # entity name -> train/dev/test

    def entities(self, split: str) -> list[str]:
        return [e for e in self.gold if self.split[e] == split]


def load_typing_dataset(path) -> TypingDataset:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedFile(path, "expected entity<TAB>split<TAB>types",
                                    line=lineno)
            entity, split, types = parts
            if split not in SPLITS:
                raise MalformedFile(path, f"unknown split {split!r}", line=lineno)
            names = [t for t in types.split(",") if t]
            if not names:
                raise MalformedFile(path, "empty type list", line=lineno)
            rows.append((entity, split, names, lineno))
    if not rows:
        raise MalformedFile(path, "no entities in dataset")
    inventory = sorted({t for _, _, names, _ in rows for t in names})
    type_id = {t: i for i, t in enumerate(inventory)}
    gold: dict[str, frozenset[int]] = {}
    split: dict[str, str] = {}
    for entity, sp, names, lineno in rows:
        if entity in gold:
            raise MalformedFile(path, f"duplicate entity {entity!r}", line=lineno)
        gold[entity] = frozenset(type_id[t] for t in names)
        split[entity] = sp
    return TypingDataset(types=inventory, gold=gold, split=split)


@dataclass
class TypingModel:
    W_h: np.ndarray  # (hidden, d)
    W_o: np.ndarray  # (n_types, hidden)


def mlp_forward(c_e: np.ndarray, model: TypingModel) -> np.ndarray:
    """Per-type probabilities sigmoid(W_o tanh(W_h c_e)); strictly in (0,1)."""
    if model.W_h.shape[1] != len(c_e):
        raise ShapeMismatch(f"vector of length {len(c_e)} vs W_h {model.W_h.shape}")
    hidden = np.tanh(model.W_h @ c_e)
    return _sigmoid(model.W_o @ hidden)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_batch(X: np.ndarray, model: TypingModel):
    hidden = np.tanh(X @ model.W_h.T)
    return _sigmoid(hidden @ model.W_o.T), hidden


def bce_loss(probs: np.ndarray, gold: frozenset[int] | set[int]) -> float:
    """Binary cross-entropy summed over types (probs clamped before log)."""
    y = np.zeros(len(probs))
    y[list(gold)] = 1.0
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum())


@dataclass
class TypingResult:
    model: TypingModel
    best_epoch: int
    dev_p_at_1: list[float]


def _dev_p_at_1(X: np.ndarray, gold: list[frozenset[int]], model: TypingModel) -> float:
    probs, _ = _forward_batch(X, model)
    ranked = [metrics.rank_types(p) for p in probs]
    return metrics.precision_at_1(ranked, gold)


def _glorot(rng, rows, cols):
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def train_typing(entity_vectors: Mapping[str, np.ndarray], data: TypingDataset,
                 epochs: int, seed: int, hidden: int = 200,
                 batch_size: int = 32, lr: float = 1e-3) -> TypingResult:
    """Train the typing MLP; returns the snapshot from the best dev epoch.

    Adam with standard defaults on shuffled mini-batches; after each epoch
    the dev precision-at-1 decides whether the current parameters become the
    returned snapshot.  Raises MissingVector if a train or dev entity has no
    vector.
    """
    train_names = data.entities("train")
    dev_names = data.entities("dev")
    for name in train_names + dev_names:
        if name not in entity_vectors:
            raise MissingVector(f"no vector for entity {name!r}")
    if not train_names:
        raise ValueError("typing dataset has no training entities")

    d = len(next(iter(entity_vectors.values())))
    n_types = len(data.types)
    rng = np.random.default_rng(seed)
    model = TypingModel(W_h=_glorot(rng, hidden, d), W_o=_glorot(rng, n_types, hidden))

    X_train = np.asarray([entity_vectors[n] for n in train_names])
    Y_train = np.zeros((len(train_names), n_types))
    for i, name in enumerate(train_names):
        Y_train[i, list(data.gold[name])] = 1.0
    X_dev = np.asarray([entity_vectors[n] for n in dev_names]) if dev_names else None
    gold_dev = [data.gold[n] for n in dev_names]

    best = TypingModel(W_h=model.W_h.copy(), W_o=model.W_o.copy())
    best_epoch = 0
    best_score = -np.inf
    curve: list[float] = []
    opt = Adam({"W_h": model.W_h, "W_o": model.W_o}, lr=lr)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train_names))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            X, Y = X_train[idx], Y_train[idx]
            probs, hidden_act = _forward_batch(X, model)
            dlogits = (probs - Y) / len(idx)
            grad_Wo = dlogits.T @ hidden_act
            dhidden = dlogits @ model.W_o
            dpre = dhidden * (1.0 - hidden_act ** 2)
            grad_Wh = dpre.T @ X
            opt.step({"W_h": model.W_h, "W_o": model.W_o},
                     {"W_h": grad_Wh, "W_o": grad_Wo})
        if dev_names:
            score = _dev_p_at_1(X_dev, gold_dev, model)
            curve.append(score)
            if score > best_score:
                best_score = score
                best_epoch = epoch
                best = TypingModel(W_h=model.W_h.copy(), W_o=model.W_o.copy())
        else:
            # Without a dev set there is nothing to select on: keep the last.
            curve.append(float("nan"))
            best_epoch = epoch
            best = TypingModel(W_h=model.W_h.copy(), W_o=model.W_o.copy())
    return TypingResult(model=best, best_epoch=best_epoch, dev_p_at_1=curve)


def tune_thresholds(probs: Mapping[str, np.ndarray],
                    gold: Mapping[str, frozenset[int] | set[int]],
                    n_types: int) -> np.ndarray:
    """Per-type threshold maximizing F1 of {entities with p_t >= theta_t}.

    Candidates are the distinct observed probabilities for the type plus a
    sentinel above 1.0 that assigns nothing; F1 ties resolve to the larger
    threshold.  A type with no gold members gets the sentinel.
    """
    if not probs:
        raise ValueError("cannot tune thresholds on an empty dev set")
    names = list(probs)
    P = np.asarray([probs[n] for n in names])
    thresholds = np.empty(n_types)
    for t in range(n_types):
        members = np.array([t in gold[n] for n in names])
        n_gold = int(members.sum())
        candidates = sorted(set(P[:, t].tolist()), reverse=True)
        best_theta = THRESHOLD_SENTINEL
        best_f1 = 0.0  # the sentinel assigns nothing: F1 = 0 by convention
        for theta in candidates:
            assigned = P[:, t] >= theta
            tp = int((assigned & members).sum())
            fp = int((assigned & ~members).sum())
            fn = n_gold - tp
            denom = 2 * tp + fp + fn
            f1 = 2 * tp / denom if denom else 0.0
            if f1 > best_f1:
                best_f1 = f1
                best_theta = theta
        thresholds[t] = best_theta
    return thresholds


def predict_types(probs: np.ndarray, thresholds: np.ndarray) -> set[int]:
    """All type ids whose probability clears the type's threshold."""
    return {t for t in range(len(probs)) if probs[t] >= thresholds[t]}


def run_typing_evaluation(entity_vectors: Mapping[str, np.ndarray],
                          data: TypingDataset, epochs: int, seed: int,
                          hidden: int = 200, batch_size: int = 32,
                          bep_mode: str = "entity") -> dict:
    """Full protocol: train, pick the dev epoch, tune thresholds, score test.

    Returns the report dict with ranking metrics (precision-at-1, breakeven
    point), thresholded metrics (strict accuracy, micro and macro F1), the
    chosen epoch, and the tuned per-type thresholds.
    """
    fit = train_typing(entity_vectors, data, epochs=epochs, seed=seed,
                       hidden=hidden, batch_size=batch_size)

    def probs_for(names):
        return {n: mlp_forward(np.asarray(entity_vectors[n]), fit.model)
                for n in names}

    dev_names = data.entities("dev")
    test_names = data.entities("test")
    for name in test_names:
        if name not in entity_vectors:
            raise MissingVector(f"no vector for entity {name!r}")
    dev_probs = probs_for(dev_names)
    thresholds = tune_thresholds(dev_probs, data.gold, len(data.types))

    test_probs = probs_for(test_names)
    ranked = [metrics.rank_types(test_probs[n]) for n in test_names]
    gold = [data.gold[n] for n in test_names]
    predicted = [predict_types(test_probs[n], thresholds) for n in test_names]
    if bep_mode == "global":
        bep = metrics.breakeven_point_global([test_probs[n] for n in test_names], gold)
    else:
        bep = metrics.breakeven_point(ranked, gold)
    return {
        "p_at_1": metrics.precision_at_1(ranked, gold),
        "bep": bep,
        "accuracy": metrics.strict_accuracy(predicted, gold),
        "micro_f1": metrics.micro_f1(predicted, gold),
        "macro_f1": metrics.macro_f1_entities(predicted, gold),
        "best_epoch": fit.best_epoch,
        "per_type_thresholds": {data.types[t]: float(thresholds[t])
                                for t in range(len(data.types))},
    }
