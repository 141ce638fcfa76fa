"""Synthetic corpus generators and small utilities shared by the tests."""

from __future__ import annotations

import json

import numpy as np

from textent.corpus import (Annotation, RawDocument, build_vocabularies,
                            compile_dataset, normalize)
from textent.typing_eval import TypingDataset


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def raw_doc(doc_id, tokens, target="", annotations=(), links=10):
    return RawDocument(doc_id=doc_id, target_entity=target, tokens=list(tokens),
                       annotations=list(annotations), incoming_links=links)


def toy_kb(n_targets=50, words_per_target=4, n_ctx=20, doc_len=30, seed=0):
    """One document per target entity, with nearly disjoint word signatures.

    Every target has its own small word set and a contextual entity shared
    with a few other targets, so the dataset is easy to memorize.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for t in range(n_targets):
        signature = [f"w{t * words_per_target + j:03d}" for j in range(words_per_target)]
        tokens = [signature[rng.integers(len(signature))] for _ in range(doc_len)]
        ctx = f"ctx{t % n_ctx}"
        ann = Annotation(start=0, end=1, entity=ctx, score=1.0)
        docs.append(raw_doc(f"d{t}", tokens, target=f"t{t:02d}", annotations=[ann]))
    docs = [normalize(d) for d in docs]
    vocab = build_vocabularies(docs, min_word_count=1, min_entity_count=1)
    return compile_dataset(docs, vocab, max_words=0, max_entities=0)


def typed_kb(n_types=5, entities_per_type=40, doc_len=50, seed=3):
    """A corpus with five latent types and complementary word/entity signals.

    Word usage only identifies the type up to a pair ({0,1}, {2,3}, {4}) and
    contextual entities up to a different pairing ({0,2}, {1,3}, {4}), so a
    single signal is ambiguous while the combination pins the type exactly.
    Returns (compiled dataset, typing dataset); typing splits are 40/30/30
    per type.
    """
    rng = np.random.default_rng(seed)
    word_group = [0, 0, 1, 1, 2]
    ctx_group = [0, 1, 0, 1, 2]
    word_pools = [[f"g{g}w{j}" for j in range(12)] for g in range(3)]
    ctx_pools = [[f"cg{g}e{j}" for j in range(3)] for g in range(3)]
    noise = [f"shared{j}" for j in range(8)]
    docs = []
    gold = {}
    split = {}
    types = [f"type{k}" for k in range(n_types)]
    for k in range(n_types):
        pool = word_pools[word_group[k]]
        ctx_pool = ctx_pools[ctx_group[k]]
        for e in range(entities_per_type):
            name = f"t{k}_{e:02d}"
            tokens = [
                pool[rng.integers(len(pool))] if rng.random() < 0.9
                else noise[rng.integers(len(noise))]
                for _ in range(doc_len)
            ]
            anns = [Annotation(start=j, end=j + 1,
                               entity=ctx_pool[rng.integers(len(ctx_pool))])
                    for j in range(4)]
            docs.append(raw_doc(f"doc_{name}", tokens, target=name, annotations=anns))
            gold[name] = frozenset({k})
            frac = e / entities_per_type
            split[name] = "train" if frac < 0.4 else ("dev" if frac < 0.7 else "test")
    docs = [normalize(d) for d in docs]
    vocab = build_vocabularies(docs, min_word_count=1, min_entity_count=1)
    dataset = compile_dataset(docs, vocab, max_words=0, max_entities=0)
    typing = TypingDataset(types=types, gold=gold, split=split)
    return dataset, typing


def random_instance(rng, variant, d=5, max_words=4, max_ents=3, max_negs=5,
                    n_words=6, n_ctx=5, n_targets=8):
    """A random model + compiled document + candidate set for gradient checks."""
    from textent.corpus import Document
    from textent.model import ModelParameters, sample_negatives

    W = rng.normal(scale=0.6, size=(d, 2 * d)) if variant == "full" else None
    params = ModelParameters(
        variant=variant,
        a=rng.normal(scale=0.6, size=(n_words, d)),
        b=rng.normal(scale=0.6, size=(n_ctx, d)),
        c=rng.normal(scale=0.6, size=(n_targets, d)),
        W=W)
    doc = Document(
        target=int(rng.integers(n_targets)),
        words=rng.integers(0, n_words, size=rng.integers(0, max_words + 1)).tolist(),
        ctx_entities=rng.integers(0, n_ctx, size=rng.integers(0, max_ents + 1)).tolist())
    k = int(rng.integers(1, max_negs + 1))
    negs = sample_negatives(doc.target, k, n_targets, rng)
    return params, doc, negs


def textent_loss(params, doc, target, negatives):
    from textent.model import encode, sampled_softmax_loss

    enc = encode(doc, params, dropout=0.0)
    return sampled_softmax_loss(enc.v, target, negatives, params.c)[0]


def fd_max_rel_error(params, doc, negatives, h=1e-6):
    """Max relative error of analytic vs central-difference gradients."""
    from textent.model import backward, encode

    enc = encode(doc, params, dropout=0.0)
    grads = backward(enc, doc.target, negatives, params)

    def rel(analytic, fd):
        return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)

    def entry(arr, idx, analytic):
        orig = arr[idx]
        arr[idx] = orig + h
        up = textent_loss(params, doc, doc.target, negatives)
        arr[idx] = orig - h
        down = textent_loss(params, doc, doc.target, negatives)
        arr[idx] = orig
        return rel(analytic, (up - down) / (2.0 * h))

    worst = 0.0
    for rows, table in ((grads.a_rows, params.a), (grads.b_rows, params.b),
                        (grads.c_rows, params.c)):
        for i, g in rows.items():
            for j in range(len(g)):
                worst = max(worst, entry(table, (i, j), g[j]))
    if grads.W is not None:
        for i in range(grads.W.shape[0]):
            for j in range(grads.W.shape[1]):
                worst = max(worst, entry(params.W, (i, j), grads.W[i, j]))
    return worst


def clique_sentences(n_cliques=2, tokens_per_clique=10, n_sentences=200,
                     sentence_len=12, seed=0):
    """Sentences that never mix tokens from different cliques."""
    rng = np.random.default_rng(seed)
    cliques = [[f"c{k}t{j}" for j in range(tokens_per_clique)]
               for k in range(n_cliques)]
    sentences = []
    for i in range(n_sentences):
        clique = cliques[i % n_cliques]
        sentences.append([clique[rng.integers(len(clique))]
                          for _ in range(sentence_len)])
    return sentences, cliques
