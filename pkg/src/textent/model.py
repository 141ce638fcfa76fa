"""The document-to-entity model: encoding, sampled softmax, gradients, files.

A document is represented by the average of its word vectors and the average
of its contextual-entity vectors.  The ``full`` variant fuses the two bags
through a d x 2d projection; the ``word`` and ``entity`` variants use one bag
alone.  Training scores the document vector against target-entity vectors
over a sampled candidate set (the true target plus k random negatives) with
a softmax cross-entropy loss.

Model files use magic ``TXM1`` and store the variant, dimension, a hash of
the vocabulary the model was trained against, and the parameter matrices in
row-major little-endian float32, with a JSON sidecar for the training
configuration and the per-epoch loss log.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Document
from .errors import MalformedFile, ShapeMismatch
from .sgns import SamplingTable

VARIANTS = ("full", "word", "entity")

MODEL_MAGIC = b"TXM1"


@dataclass
class ModelParameters:
    """Embedding tables and the fusion projection.

    ``a`` holds word vectors, ``b`` contextual-entity vectors, ``c``
    target-entity vectors; all are (rows, d) float arrays.  ``W`` is the
    (d, 2d) projection and is present exactly when variant is ``full``.
    """

    variant: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        d = self.a.shape[1]
        if self.b.shape[1] != d or self.c.shape[1] != d:
            raise ShapeMismatch("embedding tables disagree on dimension")
        if self.variant == "full":
            if self.W is None or self.W.shape != (d, 2 * d):
                raise ShapeMismatch(f"full variant requires W of shape ({d}, {2 * d})")
        elif self.W is not None:
            raise ShapeMismatch("W is only present for the full variant")

    @property
    def d(self) -> int:
        return self.a.shape[1]

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {"a": self.a, "b": self.b, "c": self.c}
        if self.W is not None:
            out["W"] = self.W
        return out


@dataclass
class TrainConfig:
    """Training hyperparameters (defaults follow the reference setup)."""

    dim: int = 300
    variant: str = "full"
    k: int = 100
    dropout: float = 0.5
    batch_size: int = 100
    epochs: int = 50
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    neg_distribution: str = "uniform"  # or "unigram" (count^0.75 over targets)
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.k < 1 or self.batch_size < 1 or self.epochs < 0 or self.dim < 1:
            raise ValueError("invalid training configuration")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.neg_distribution not in ("uniform", "unigram"):
            raise ValueError("neg_distribution must be 'uniform' or 'unigram'")


@dataclass
class DocumentEncoding:
    """Encoder output: the two bag averages and the final document vector.

    ``v_w`` / ``v_e`` are None when the corresponding bag is empty (after
    dropout); the final ``v`` substitutes a zero vector for a missing side.
    ``words`` and ``ctx_entities`` record the retained (post-dropout) ids the
    encoding was computed from, which the backward pass needs.
    """

    v_w: np.ndarray | None
    v_e: np.ndarray | None
    v: np.ndarray
    words: list[int] = field(default_factory=list)
    ctx_entities: list[int] = field(default_factory=list)


def bag_average(ids: Sequence[int], table: np.ndarray) -> np.ndarray | None:
    """Mean of the rows selected by ids, or None for an empty bag."""
    if len(ids) == 0:
        return None
    return table[np.asarray(ids, dtype=np.intp)].sum(axis=0) / len(ids)


def apply_word_dropout(ids: Sequence[int], p: float,
                       rng: np.random.Generator) -> list[int]:
    """Keep each id independently with probability 1-p; order preserved."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if p == 0.0:
        return list(ids)
    keep = rng.random(len(ids)) >= p
    return [i for i, k in zip(ids, keep) if k]


def encode(doc: Document, params: ModelParameters, dropout: float = 0.0,
           rng: np.random.Generator | None = None) -> DocumentEncoding:
    """Encode a compiled document into a d-vector.

    With ``dropout`` > 0 both bags are thinned first (an rng is then
    required); inference callers pass dropout=0, which is deterministic.
    """
    words = list(doc.words)
    ents = list(doc.ctx_entities)
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout requires an rng")
        words = apply_word_dropout(words, dropout, rng)
        ents = apply_word_dropout(ents, dropout, rng)

    v_w = bag_average(words, params.a)
    v_e = bag_average(ents, params.b)
    d = params.d
    zero = np.zeros(d)
    if params.variant == "full":
        stacked = np.concatenate([v_w if v_w is not None else zero,
                                  v_e if v_e is not None else zero])
        v = params.W @ stacked
    elif params.variant == "word":
        v = v_w.copy() if v_w is not None else zero
    else:
        v = v_e.copy() if v_e is not None else zero
    return DocumentEncoding(v_w=v_w, v_e=v_e, v=v, words=words, ctx_entities=ents)


def sample_negatives(target: int, k: int, n_targets: int,
                     rng: np.random.Generator) -> np.ndarray:
    """k uniform draws (with replacement) from [0, n_targets) minus the target."""
    if n_targets < 2:
        raise ValueError("need at least two target entities to sample negatives")
    if k < 1:
        raise ValueError("k must be at least 1")
    out = rng.integers(0, n_targets, size=k)
    colliding = out == target
    while colliding.any():
        out[colliding] = rng.integers(0, n_targets, size=int(colliding.sum()))
        colliding = out == target
    return out


def sample_negatives_unigram(target: int, k: int, table: SamplingTable,
                             rng: np.random.Generator) -> np.ndarray:
    """k draws from a count^power noise distribution, excluding the target."""
    return table.sample_excluding(target, rng, k)


def sampled_softmax_loss(v: np.ndarray, target: int, negatives: np.ndarray,
                         c: np.ndarray) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy over the candidate set {target} + negatives.

    Returns (loss, probs) where probs is ordered target-first then the
    negatives as given.  Stabilized by max-subtraction; the loss is computed
    as logsumexp(scores) - score(target), which is exact for flat scores.
    """
    cand = np.concatenate([[target], np.asarray(negatives, dtype=np.int64)])
    scores = c[cand] @ v
    m = float(scores.max())
    exps = np.exp(scores - m)
    z = math.fsum(exps)
    loss = math.log(z) + m - float(scores[0])
    return loss, exps / z


@dataclass
class Gradients:
    """Sparse row gradients for the embedding tables, dense for W."""

    a_rows: dict[int, np.ndarray] = field(default_factory=dict)
    b_rows: dict[int, np.ndarray] = field(default_factory=dict)
    c_rows: dict[int, np.ndarray] = field(default_factory=dict)
    W: np.ndarray | None = None

    def accumulate(self, other: "Gradients"):
        for mine, theirs in ((self.a_rows, other.a_rows),
                             (self.b_rows, other.b_rows),
                             (self.c_rows, other.c_rows)):
            for i, g in theirs.items():
                if i in mine:
                    mine[i] = mine[i] + g
                else:
                    mine[i] = g
        if other.W is not None:
            self.W = other.W if self.W is None else self.W + other.W


def backward(encoding: DocumentEncoding, target: int, negatives: np.ndarray,
             params: ModelParameters) -> Gradients:
    """Gradients of the sampled softmax loss for one example.

    Touches exactly the candidate rows of ``c``, the retained word/entity
    rows recorded in the encoding (with the shared 1/len averaging factor),
    and ``W`` for the full variant.
    """
    cand = np.concatenate([[target], np.asarray(negatives, dtype=np.int64)])
    scores = params.c[cand] @ encoding.v
    exps = np.exp(scores - scores.max())
    probs = exps / exps.sum()

    coeff = probs.copy()
    coeff[0] -= 1.0  # d(loss)/d(score_i) = p_i - [i == target]

    grads = Gradients()
    for ci, w in zip(cand, coeff):
        ci = int(ci)
        if ci in grads.c_rows:
            grads.c_rows[ci] = grads.c_rows[ci] + w * encoding.v
        else:
            grads.c_rows[ci] = w * encoding.v

    grad_v = coeff @ params.c[cand]

    d = params.d
    if params.variant == "full":
        zero = np.zeros(d)
        stacked = np.concatenate([encoding.v_w if encoding.v_w is not None else zero,
                                  encoding.v_e if encoding.v_e is not None else zero])
        grads.W = np.outer(grad_v, stacked)
        grad_stacked = params.W.T @ grad_v
        grad_vw, grad_ve = grad_stacked[:d], grad_stacked[d:]
    elif params.variant == "word":
        grad_vw, grad_ve = grad_v, None
    else:
        grad_vw, grad_ve = None, grad_v

    if grad_vw is not None and encoding.words:
        share = grad_vw / len(encoding.words)
        for i in encoding.words:
            if i in grads.a_rows:
                grads.a_rows[i] = grads.a_rows[i] + share
            else:
                grads.a_rows[i] = share.copy()
    if grad_ve is not None and encoding.ctx_entities:
        share = grad_ve / len(encoding.ctx_entities)
        for i in encoding.ctx_entities:
            if i in grads.b_rows:
                grads.b_rows[i] = grads.b_rows[i] + share
            else:
                grads.b_rows[i] = share.copy()
    return grads


def full_softmax_rank(v: np.ndarray, c: np.ndarray, target: int) -> int:
    """1-based rank of the target among all rows by score, ties to lower id."""
    scores = c @ v
    st = scores[target]
    better = int(np.count_nonzero(scores > st))
    tied_before = int(np.count_nonzero(scores[:target] == st))
    return 1 + better + tied_before


# ---------------------------------------------------------------------------
# Model files (magic TXM1)
# ---------------------------------------------------------------------------

def save_model(params: ModelParameters, path, vocab_hash: str,
               sidecar: dict | None = None):
    """Write the binary model plus a ``<path>.json`` sidecar."""
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<I", VARIANTS.index(params.variant)))
    out.write(struct.pack("<I", params.d))
    raw_hash = vocab_hash.encode("ascii")
    out.write(struct.pack("<I", len(raw_hash)))
    out.write(raw_hash)
    out.write(struct.pack("<III", params.a.shape[0], params.b.shape[0],
                          params.c.shape[0]))
    for mat in (params.a, params.b, params.c):
        out.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())
    if params.W is not None:
        out.write(np.ascontiguousarray(params.W, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(out.getvalue())
    meta = dict(sidecar or {})
    meta.update({"variant": params.variant, "dim": params.d,
                 "vocab_hash": vocab_hash})
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[ModelParameters, str]:
    """Read a model file; returns (parameters, vocab_hash).

    Matrices are widened back to float64 (exactly) for in-memory use.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise MalformedFile(path, "bad magic; not a model file")
    pos = 4

    def unpack(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise MalformedFile(path, "truncated model file")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (variant_code,) = unpack("<I")
    if variant_code >= len(VARIANTS):
        raise MalformedFile(path, f"unknown variant code {variant_code}")
    variant = VARIANTS[variant_code]
    (d,) = unpack("<I")
    (hash_len,) = unpack("<I")
    if pos + hash_len > len(data):
        raise MalformedFile(path, "truncated model file")
    vocab_hash = data[pos:pos + hash_len].decode("ascii")
    pos += hash_len
    n_a, n_b, n_c = unpack("<III")

    def matrix(rows, cols):
        nonlocal pos
        nbytes = rows * cols * 4
        if pos + nbytes > len(data):
            raise MalformedFile(path, "truncated model file")
        mat = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos)
        pos += nbytes
        return mat.reshape(rows, cols).astype(np.float64)

    a = matrix(n_a, d)
    b = matrix(n_b, d)
    c = matrix(n_c, d)
    W = matrix(d, 2 * d) if variant == "full" else None
    if pos != len(data):
        raise MalformedFile(path, "trailing bytes after matrices")
    return ModelParameters(variant=variant, a=a, b=b, c=c, W=W), vocab_hash
