"""Evaluation measures for multi-label typing and multiclass classification.

Typing functions take parallel sequences, one element per entity: a ranked
type list (descending probability, ties by ascending type id) or a predicted
type set, plus the gold type set.  Everywhere the 0/0 case of F1 (precision
and recall both zero) is defined as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch


def rank_types(probs: np.ndarray) -> list[int]:
    """Type ids by descending probability; ties broken by ascending id."""
    order = sorted(range(len(probs)), key=lambda t: (-probs[t], t))
    return order


def _check_pairs(a, b, what="entities"):
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} {what}")
    if len(a) == 0:
        raise ValueError(f"no {what} to score")


def precision_at_1(ranked: Sequence[Sequence[int]],
                   gold: Sequence[set[int]]) -> float:
    """Fraction of entities whose top-ranked type is a gold type."""
    _check_pairs(ranked, gold)
    hits = 0
    for order, g in zip(ranked, gold):
        if not g:
            raise ValueError("gold type set must be non-empty")
        hits += order[0] in g
    return hits / len(ranked)


def breakeven_point(ranked: Sequence[Sequence[int]],
                    gold: Sequence[set[int]]) -> float:
    """Mean per-entity precision at cutoff |gold|.

    At that cutoff precision equals recall, so this is each entity's
    precision-recall breakeven F1, averaged over entities.
    """
    _check_pairs(ranked, gold)
    total = 0.0
    for order, g in zip(ranked, gold):
        if not g:
            raise ValueError("gold type set must be non-empty")
        cut = len(g)
        total += sum(1 for t in order[:cut] if t in g) / cut
    return total / len(ranked)


def breakeven_point_global(probs: Sequence[np.ndarray],
                           gold: Sequence[set[int]]) -> float:
    """Pooled-ranking breakeven: precision among the top-R (entity, type)
    decisions, where R is the total number of gold assignments.

    Decisions are ranked by score, ties by (entity index, type id).
    """
    _check_pairs(probs, gold)
    decisions = []
    for ei, p in enumerate(probs):
        for t in range(len(p)):
            decisions.append((-float(p[t]), ei, t))
    decisions.sort()
    r = sum(len(g) for g in gold)
    hits = sum(1 for _, ei, t in decisions[:r] if t in gold[ei])
    return hits / r


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def strict_accuracy(predicted: Sequence[set[int]],
                    gold: Sequence[set[int]]) -> float:
    """Fraction of entities whose predicted set equals the gold set exactly."""
    _check_pairs(predicted, gold)
    return sum(p == g for p, g in zip(predicted, gold)) / len(predicted)


def micro_f1(predicted: Sequence[set[int]], gold: Sequence[set[int]]) -> float:
    """F1 over all (entity, type) assignment decisions pooled globally."""
    _check_pairs(predicted, gold)
    tp = fp = fn = 0
    for p, g in zip(predicted, gold):
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    return _f1(tp, fp, fn)


def macro_f1_entities(predicted: Sequence[set[int]],
                      gold: Sequence[set[int]]) -> float:
    """Per-entity F1 of predicted vs gold types, averaged over entities."""
    _check_pairs(predicted, gold)
    total = 0.0
    for p, g in zip(predicted, gold):
        total += _f1(len(p & g), len(p - g), len(g - p))
    return total / len(predicted)


@dataclass
class ClassificationReport:
    accuracy: float
    macro_f1: float
    per_class_f1: dict[str, float]


def classification_report(predicted: Sequence[str], gold: Sequence[str],
                          classes: Sequence[str]) -> ClassificationReport:
    """Exact-match accuracy plus one-vs-rest F1 per class and its mean.

    Classes absent from both gold and prediction contribute F1 = 0.
    """
    if len(predicted) != len(gold):
        raise LengthMismatch(f"{len(predicted)} predictions vs {len(gold)} labels")
    if len(predicted) == 0:
        raise ValueError("no examples to score")
    known = set(classes)
    for label in list(predicted) + list(gold):
        if label not in known:
            raise ValueError(f"label {label!r} not in the class list")
    accuracy = sum(p == g for p, g in zip(predicted, gold)) / len(gold)
    per_class = {}
    for cls in classes:
        tp = sum(1 for p, g in zip(predicted, gold) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predicted, gold) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(predicted, gold) if p != cls and g == cls)
        per_class[cls] = _f1(tp, fp, fn)
    macro = float(np.mean([per_class[c] for c in classes]))
    return ClassificationReport(accuracy=accuracy, macro_f1=macro,
                                per_class_f1=per_class)
