"""Skip-gram with negative sampling over the entity-replaced token stream.

Words and ``ENTITY/`` tokens share one embedding space, so the vectors this
trainer produces can seed the word, contextual-entity, and target-entity
tables of the document model (contextual and target tables receive the same
entity vector).

The trainer follows the classic formulation: input vectors uniform in
[-0.5/d, 0.5/d], output vectors zero, noise distribution proportional to
count^0.75, frequent-token subsampling, a dynamic window radius drawn
uniformly from [1, window] per center token, and a learning rate that decays
linearly with scan progress down to a floor of ``initial_lr * 1e-4``.
Single-threaded runs with a fixed seed are bit-reproducible.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyCorpus, EmptyVocabulary

LR_FLOOR_FACTOR = 1e-4


@dataclass
class SgnsConfig:
    dim: int = 300
    window: int = 10
    negatives: int = 15
    min_count: int = 3
    epochs: int = 5
    subsample_threshold: float = 1e-3
    initial_lr: float = 0.025
    power: float = 0.75
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.dim <= 0 or self.window < 1 or self.negatives < 1 or self.epochs < 0:
            raise ValueError("invalid skip-gram configuration")


class SamplingTable:
    """Noise distribution over token ids proportional to count^power."""

    def __init__(self, probabilities: np.ndarray):
        self.probabilities = probabilities
        self.cumulative = np.cumsum(probabilities)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(self.cumulative, rng.random(size), side="right")

    def sample_excluding(self, exclude: int, rng: np.random.Generator,
                         size: int) -> np.ndarray:
        """Draw ``size`` ids, resampling any draw that hits ``exclude``."""
        if self.probabilities.size < 2:
            raise ValueError("cannot exclude the only sampleable id")
        out = self.sample(rng, size)
        colliding = out == exclude
        while colliding.any():
            out[colliding] = self.sample(rng, int(colliding.sum()))
            colliding = out == exclude
        return out


def build_sampling_table(counts: Sequence[int] | np.ndarray,
                         power: float = 0.75) -> SamplingTable:
    """P(i) = counts[i]^power / sum_j counts[j]^power."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise EmptyVocabulary("cannot build a sampling table over zero tokens")
    if np.any(counts <= 0):
        raise ValueError("all counts must be positive")
    weighted = counts ** power
    return SamplingTable(weighted / weighted.sum())


@dataclass
class SgnsParameters:
    """Input (syn0) and output (syn1) vectors, one row per vocabulary token."""

    syn0: np.ndarray
    syn1: np.ndarray


def sgns_pair_step(center: int, context: int, negatives: np.ndarray,
                   params: SgnsParameters, lr: float) -> float:
    """One SGD update for a (center, context) pair; returns the pre-update loss.

    Loss is -log sigma(u_ctx . v_c) - sum_neg log sigma(-u_neg . v_c).
    Negatives must already exclude the context id.
    """
    v = params.syn0[center]
    u_pos = params.syn1[context]
    u_neg = params.syn1[negatives]

    pos_sig = 1.0 / (1.0 + math.exp(-float(np.dot(u_pos, v))))
    neg_dots = u_neg @ v
    neg_sig = 1.0 / (1.0 + np.exp(-neg_dots))

    loss = math.fsum([-math.log(pos_sig)] + [-math.log(1.0 - s) for s in neg_sig])

    grad_v = (pos_sig - 1.0) * u_pos + neg_sig @ u_neg
    grad_pos = (pos_sig - 1.0) * v

    params.syn1[context] -= lr * grad_pos
    # np.add.at accumulates correctly when an id is drawn more than once.
    np.add.at(params.syn1, negatives, -lr * np.outer(neg_sig, v))
    params.syn0[center] -= lr * grad_v
    return loss


class _SgnsVocab:
    def __init__(self, counts: dict[str, int], min_count: int):
        kept = {t: c for t, c in counts.items() if c >= min_count}
        self.tokens = sorted(kept, key=lambda t: (-kept[t], t))
        self.ids = {t: i for i, t in enumerate(self.tokens)}
        self.counts = np.array([kept[t] for t in self.tokens], dtype=np.int64)


def _keep_probabilities(counts: np.ndarray, threshold: float) -> np.ndarray:
    # Classic frequent-token downsampling curve; 1.0 everywhere when disabled.
    if threshold <= 0:
        return np.ones_like(counts, dtype=np.float64)
    x = counts / (threshold * counts.sum())
    return np.minimum(1.0, (np.sqrt(x) + 1.0) / x)


def _train_positions(sentence_ids, params, table, keep_prob, cfg, rng, lr_of):
    """Process one sentence: subsample, slide windows, update in place."""
    ids = np.asarray(sentence_ids, dtype=np.int64)
    if ids.size == 0:
        return 0.0, 0
    retained = ids[rng.random(ids.size) < keep_prob[ids]]
    loss = 0.0
    pairs = 0
    for i in range(retained.size):
        lr = lr_of()
        radius = int(rng.integers(1, cfg.window + 1))
        lo = max(0, i - radius)
        hi = min(retained.size, i + radius + 1)
        center = int(retained[i])
        for j in range(lo, hi):
            if j == i:
                continue
            context = int(retained[j])
            negs = table.sample_excluding(context, rng, cfg.negatives)
            loss += sgns_pair_step(center, context, negs, params, lr)
            pairs += 1
    return loss, pairs


def train_skipgram(sentences: Iterable[Sequence[str]], config: SgnsConfig,
                   ) -> dict[str, np.ndarray]:
    """Train embeddings over tokenized sentences; returns token -> vector.

    The returned vectors are the input-side rows.  With ``threads=1`` the
    result is bit-identical across runs for a fixed seed; with more threads,
    workers update the shared tables lock-free and small races are accepted.
    """
    sentences = [list(s) for s in sentences]
    counts: dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
    vocab = _SgnsVocab(counts, config.min_count)
    if not vocab.tokens:
        raise EmptyCorpus("no tokens survive the min_count filter")

    rng = np.random.default_rng(config.seed)
    d = config.dim
    params = SgnsParameters(
        syn0=rng.uniform(-0.5 / d, 0.5 / d, size=(len(vocab.tokens), d)),
        syn1=np.zeros((len(vocab.tokens), d)),
    )
    # One distinct token admits no negatives and no informative pairs.
    if config.epochs == 0 or len(vocab.tokens) < 2:
        return {t: params.syn0[i].copy() for i, t in enumerate(vocab.tokens)}

    table = build_sampling_table(vocab.counts, config.power)
    keep_prob = _keep_probabilities(vocab.counts, config.subsample_threshold)
    id_sentences = [
        [vocab.ids[t] for t in sent if t in vocab.ids] for sent in sentences
    ]
    id_sentences = [s for s in id_sentences if s]

    total_scan = config.epochs * sum(len(s) for s in id_sentences)
    scanned = [0]
    min_lr = config.initial_lr * LR_FLOOR_FACTOR

    def lr_of():
        frac = scanned[0] / max(1, total_scan)
        return max(min_lr, config.initial_lr * (1.0 - frac))

    if config.threads <= 1:
        for _ in range(config.epochs):
            for sent in id_sentences:
                _train_positions(sent, params, table, keep_prob, config, rng, lr_of)
                scanned[0] += len(sent)
    else:
        _train_parallel(id_sentences, params, table, keep_prob, config,
                        scanned, lr_of)

    return {t: params.syn0[i].copy() for i, t in enumerate(vocab.tokens)}


def _train_parallel(id_sentences, params, table, keep_prob, config, scanned, lr_of):
    seeds = np.random.SeedSequence(config.seed).spawn(config.threads)
    for _ in range(config.epochs):
        workers = []
        for w in range(config.threads):
            chunk = id_sentences[w::config.threads]
            wrng = np.random.default_rng(seeds[w])

            def run(chunk=chunk, wrng=wrng):
                for sent in chunk:
                    _train_positions(sent, params, table, keep_prob, config,
                                     wrng, lr_of)
                    scanned[0] += len(sent)  # benign race; lr schedule only

            workers.append(threading.Thread(target=run))
        for t in workers:
            t.start()
        for t in workers:
            t.join()
