"""Training loop for the document-to-entity model.

Each epoch shuffles the documents and walks mini-batches; every example draws
fresh dropout masks and negatives, per-example gradients are accumulated over
the batch, and Adadelta applies one update per batch (touched rows only).
``threads=1`` with a fixed seed is bit-reproducible; more threads run
lock-free over shared parameters and accept races.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .corpus import ENTITY_TOKEN_PREFIX, CompiledDataset, Vocabulary
from .errors import DataError, EmptyDataset
from .model import (Gradients, ModelParameters, TrainConfig, backward, encode,
                    sample_negatives, sample_negatives_unigram,
                    sampled_softmax_loss)
from .optim import AdadeltaState, adadelta_update_dense, adadelta_update_rows
from .sgns import build_sampling_table


@dataclass
class TrainResult:
    params: ModelParameters
    epoch_losses: list[float]


def init_parameters(vocab: Vocabulary, config: TrainConfig,
                    pretrained=None) -> ModelParameters:
    """Build the initial parameter tables.

    Rows are uniform in [-0.5/d, 0.5/d] unless a pretrained vector exists for
    the token: words match directly, and both entity tables receive the same
    ``ENTITY/<name>`` vector.  The projection W is Glorot-uniform over its
    fan (bound sqrt(6 / 3d)).
    """
    d = config.dim
    rng = np.random.default_rng(config.seed)
    bound = 0.5 / d
    a = rng.uniform(-bound, bound, size=(vocab.n_words, d))
    b = rng.uniform(-bound, bound, size=(vocab.n_ctx_entities, d))
    c = rng.uniform(-bound, bound, size=(vocab.n_target_entities, d))
    W = None
    if config.variant == "full":
        wb = np.sqrt(6.0 / (3 * d))
        W = rng.uniform(-wb, wb, size=(d, 2 * d))

    if pretrained is not None:
        def fill(matrix, names, key_of):
            for i, name in enumerate(names):
                vec = pretrained.get(key_of(name))
                if vec is None:
                    continue
                if len(vec) != d:
                    raise DataError(
                        f"pretrained vector for {key_of(name)!r} has dimension "
                        f"{len(vec)}, expected {d}")
                matrix[i] = vec

        fill(a, vocab.words, lambda w: w)
        fill(b, vocab.ctx_entities, lambda e: ENTITY_TOKEN_PREFIX + e)
        fill(c, vocab.target_entities, lambda e: ENTITY_TOKEN_PREFIX + e)

    return ModelParameters(variant=config.variant, a=a, b=b, c=c, W=W)


def _example_step(doc, params, config, neg_table, rng):
    enc = encode(doc, params, dropout=config.dropout, rng=rng)
    if config.neg_distribution == "unigram":
        negs = sample_negatives_unigram(doc.target, config.k, neg_table, rng)
    else:
        negs = sample_negatives(doc.target, config.k, params.c.shape[0], rng)
    loss, _ = sampled_softmax_loss(enc.v, doc.target, negs, params.c)
    grads = backward(enc, doc.target, negs, params)
    return loss, grads


def _apply_batch(params, state, acc: Gradients, config):
    adadelta_update_rows(params.a, state, "a", acc.a_rows,
                         config.adadelta_rho, config.adadelta_eps)
    adadelta_update_rows(params.b, state, "b", acc.b_rows,
                         config.adadelta_rho, config.adadelta_eps)
    adadelta_update_rows(params.c, state, "c", acc.c_rows,
                         config.adadelta_rho, config.adadelta_eps)
    if acc.W is not None:
        adadelta_update_dense(params.W, state, "W", acc.W,
                              config.adadelta_rho, config.adadelta_eps)


def _run_batches(batches, docs, params, state, config, neg_table, rng, losses):
    for batch in batches:
        acc = Gradients()
        for di in batch:
            loss, grads = _example_step(docs[di], params, config, neg_table, rng)
            acc.accumulate(grads)
            losses.append(loss)
        _apply_batch(params, state, acc, config)


def train(dataset: CompiledDataset, pretrained=None,
          config: TrainConfig | None = None) -> TrainResult:
    """Train model parameters on a compiled dataset.

    ``pretrained`` is an optional token -> vector map used to seed the
    embedding tables.  Returns the final parameters and the mean per-example
    loss of each epoch.
    """
    config = config or TrainConfig()
    docs = dataset.documents
    if not docs:
        raise EmptyDataset("cannot train on an empty dataset")
    if any(d.target is None for d in docs):
        raise EmptyDataset("every training document needs a target entity")

    params = init_parameters(dataset.vocab, config, pretrained)
    state = AdadeltaState(params.named_arrays())
    rng = np.random.default_rng(config.seed)

    neg_table = None
    if config.neg_distribution == "unigram":
        # Weight targets by how often each entity is referenced in context.
        counts = np.ones(dataset.vocab.n_target_entities, dtype=np.float64)
        for i, name in enumerate(dataset.vocab.target_entities):
            cid = dataset.vocab.ctx_entity_id(name)
            if cid is not None:
                counts[i] += dataset.vocab.ctx_entity_counts[cid]
        neg_table = build_sampling_table(counts, 0.75)

    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(docs))
        batches = [order[i:i + config.batch_size]
                   for i in range(0, len(order), config.batch_size)]
        losses: list[float] = []
        if config.threads <= 1:
            _run_batches(batches, docs, params, state, config, neg_table,
                         rng, losses)
        else:
            seeds = np.random.SeedSequence(rng.integers(2 ** 63)).spawn(config.threads)
            workers = []
            for w in range(config.threads):
                wrng = np.random.default_rng(seeds[w])
                wloss: list[float] = []
                losses_per = (batches[w::config.threads], wrng, wloss)
                workers.append((threading.Thread(
                    target=_run_batches,
                    args=(losses_per[0], docs, params, state, config,
                          neg_table, losses_per[1], losses_per[2])), wloss))
            for t, _ in workers:
                t.start()
            for t, _ in workers:
                t.join()
            for _, wloss in workers:
                losses.extend(wloss)
        epoch_losses.append(float(np.mean(losses)))
    return TrainResult(params=params, epoch_losses=epoch_losses)
