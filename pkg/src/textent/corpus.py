"""Corpus ingestion, filtering, vocabularies, and compiled training examples.

The ingestion boundary is a UTF-8 JSON-lines file, one document per line:

    {"id": str, "target_entity": str|null, "tokens": [str],
     "annotations": [{"start": int, "end": int, "entity": str, "score": float}],
     "incoming_links": int}

``target_entity`` names the entity the document describes (null for documents
that do not belong to the knowledge base).  Annotations mark token spans
[start, end) linked to an entity, with a relevance score in [0, 1] (1.0 for
gold markup).

A compiled dataset is stored as a binary file (magic ``TXE1``, little-endian
u32 lengths) holding the three vocabulary tables followed by the documents in
id space, plus a JSON sidecar recording the configuration and counts used to
build it.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .errors import DataError, EmptyCorpus, MalformedFile, UnknownTarget

ENTITY_TOKEN_PREFIX = "ENTITY/"

DATASET_MAGIC = b"TXE1"


@dataclass(frozen=True)
class Annotation:
    """A token span [start, end) linked to an entity, with a relevance score."""

    start: int
    end: int
    entity: str
    score: float = 1.0

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"annotation span [{self.start}, {self.end}) is empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"annotation score {self.score} outside [0, 1]")


@dataclass
class RawDocument:
    """A tokenized document with entity annotations.

    ``target_entity`` is the canonical name of the entity the document
    describes; the empty string marks a document outside the knowledge base.
    ``incoming_links`` is 0 when unknown.
    """

    doc_id: str
    target_entity: str
    tokens: list[str]
    annotations: list[Annotation] = field(default_factory=list)
    incoming_links: int = 0

    def validate(self):
        """Check span bounds, ordering, and non-overlap; raise ValueError."""
        if self.incoming_links < 0:
            raise ValueError("incoming_links must be non-negative")
        prev_end = 0
        for ann in self.annotations:
            if ann.start < prev_end:
                raise ValueError(
                    f"annotations overlap or are unsorted near span "
                    f"[{ann.start}, {ann.end})"
                )
            if ann.end > len(self.tokens):
                raise ValueError(
                    f"annotation span [{ann.start}, {ann.end}) exceeds "
                    f"{len(self.tokens)} tokens"
                )
            prev_end = ann.end


class Vocabulary:
    """Bidirectional token/id maps for words, contextual entities, and targets.

    Ids are dense and contiguous from 0 within each namespace.  Assignment
    order is descending corpus count with lexicographic tie-break, so two
    builds over the same corpus produce identical tables.
    """

    def __init__(self, words, word_counts, ctx_entities, ctx_entity_counts,
                 target_entities, target_entity_counts=None):
        self.words = list(words)
        self.word_counts = list(word_counts)
        self.ctx_entities = list(ctx_entities)
        self.ctx_entity_counts = list(ctx_entity_counts)
        self.target_entities = list(target_entities)
        self.target_entity_counts = (
            list(target_entity_counts)
            if target_entity_counts is not None
            else [1] * len(self.target_entities)
        )
        self._word_ids = {w: i for i, w in enumerate(self.words)}
        self._ctx_ids = {e: i for i, e in enumerate(self.ctx_entities)}
        self._target_ids = {e: i for i, e in enumerate(self.target_entities)}
        if len(self._word_ids) != len(self.words):
            raise DataError("duplicate word in vocabulary")
        if len(self._ctx_ids) != len(self.ctx_entities):
            raise DataError("duplicate contextual entity in vocabulary")
        if len(self._target_ids) != len(self.target_entities):
            raise DataError("duplicate target entity in vocabulary")

    @property
    def n_words(self):
        return len(self.words)

    @property
    def n_ctx_entities(self):
        return len(self.ctx_entities)

    @property
    def n_target_entities(self):
        return len(self.target_entities)

    def word_id(self, token: str) -> int | None:
        return self._word_ids.get(token)

    def ctx_entity_id(self, entity: str) -> int | None:
        return self._ctx_ids.get(entity)

    def target_entity_id(self, entity: str) -> int | None:
        return self._target_ids.get(entity)

    def word(self, i: int) -> str:
        return self.words[i]

    def ctx_entity(self, i: int) -> str:
        return self.ctx_entities[i]

    def target_entity(self, i: int) -> str:
        return self.target_entities[i]

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (self.words == other.words
                and self.word_counts == other.word_counts
                and self.ctx_entities == other.ctx_entities
                and self.ctx_entity_counts == other.ctx_entity_counts
                and self.target_entities == other.target_entities
                and self.target_entity_counts == other.target_entity_counts)

    def to_bytes(self) -> bytes:
        """Canonical binary serialization (also embedded in dataset files)."""
        out = io.BytesIO()
        _write_string_table(out, self.words, self.word_counts)
        _write_string_table(out, self.ctx_entities, self.ctx_entity_counts)
        _write_string_table(out, self.target_entities, self.target_entity_counts)
        return out.getvalue()

    def content_hash(self) -> str:
        """Hex SHA-256 of the canonical serialization."""
        return hashlib.sha256(self.to_bytes()).hexdigest()


@dataclass
class Document:
    """A compiled training example in id space.

    ``target`` is None for documents outside the knowledge base.  ``words``
    preserves corpus order; ``ctx_entities`` preserves annotation order.
    """

    target: int | None
    words: list[int]
    ctx_entities: list[int]


@dataclass
class CompiledDataset:
    documents: list[Document]
    vocab: Vocabulary


# ---------------------------------------------------------------------------
# Filtering and normalization
# ---------------------------------------------------------------------------

def filter_annotations(doc: RawDocument, min_score: float) -> RawDocument:
    """Keep only annotations with score >= min_score (boundary survives)."""
    if not 0.0 <= min_score <= 1.0:
        raise ValueError(f"min_score {min_score} outside [0, 1]")
    kept = [a for a in doc.annotations if a.score >= min_score]
    return replace(doc, annotations=kept)


def normalize(doc: RawDocument) -> RawDocument:
    """Lowercase every token; annotations (entity names included) untouched."""
    return replace(doc, tokens=[t.lower() for t in doc.tokens])


def select_training_documents(corpus: Sequence[RawDocument], min_links: int,
                              keep_set: frozenset[str] | set[str] = frozenset(),
                              ) -> list[RawDocument]:
    """Drop documents with fewer than min_links incoming links.

    A document whose target entity appears in ``keep_set`` is exempt, so that
    entities needed by downstream evaluations are never filtered away.
    """
    if min_links < 0:
        raise ValueError("min_links must be non-negative")
    return [d for d in corpus
            if d.incoming_links >= min_links or d.target_entity in keep_set]


# ---------------------------------------------------------------------------
# Vocabularies
# ---------------------------------------------------------------------------

def _ordered_ids(counts: dict[str, int]) -> list[str]:
    # Descending count, lexicographic tie-break: deterministic id assignment.
    return sorted(counts, key=lambda t: (-counts[t], t))


def build_vocabularies(corpus: Sequence[RawDocument], min_word_count: int,
                       min_entity_count: int) -> Vocabulary:
    """Count tokens and annotations over the corpus and assign dense ids.

    Words below ``min_word_count`` occurrences and annotated entities below
    ``min_entity_count`` occurrences are excluded.  Every document's target
    entity receives a target id (documents with an empty target contribute
    none).  Expects tokens already lowercased by :func:`normalize`.
    """
    if not corpus:
        raise EmptyCorpus("no documents to build vocabularies from")
    word_counts: dict[str, int] = {}
    ctx_counts: dict[str, int] = {}
    target_counts: dict[str, int] = {}
    for doc in corpus:
        for tok in doc.tokens:
            word_counts[tok] = word_counts.get(tok, 0) + 1
        for ann in doc.annotations:
            ctx_counts[ann.entity] = ctx_counts.get(ann.entity, 0) + 1
        if doc.target_entity:
            target_counts[doc.target_entity] = target_counts.get(doc.target_entity, 0) + 1

    word_counts = {w: c for w, c in word_counts.items() if c >= min_word_count}
    ctx_counts = {e: c for e, c in ctx_counts.items() if c >= min_entity_count}

    words = _ordered_ids(word_counts)
    ctx = _ordered_ids(ctx_counts)
    targets = _ordered_ids(target_counts)
    return Vocabulary(
        words, [word_counts[w] for w in words],
        ctx, [ctx_counts[e] for e in ctx],
        targets, [target_counts[e] for e in targets],
    )


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

def compile_document(doc: RawDocument, vocab: Vocabulary, max_words: int,
                     max_entities: int, require_target: bool = True,
                     dedup_entities: bool = False,
                     truncate_before_oov: bool = False) -> Document:
    """Map a document into id space.

    Out-of-vocabulary tokens and entities are silently dropped; by default
    truncation to ``max_words`` / ``max_entities`` applies after that removal
    (pass ``truncate_before_oov=True`` for the other reading).  A limit of 0
    disables truncation.  ``dedup_entities`` keeps only the first occurrence
    of each contextual entity.
    """
    tokens = doc.tokens
    if truncate_before_oov and max_words > 0:
        tokens = tokens[:max_words]
    word_ids = [i for i in (vocab.word_id(t) for t in tokens) if i is not None]
    if not truncate_before_oov and max_words > 0:
        word_ids = word_ids[:max_words]

    anns = doc.annotations
    if truncate_before_oov and max_entities > 0:
        anns = anns[:max_entities]
    ent_ids = [i for i in (vocab.ctx_entity_id(a.entity) for a in anns)
               if i is not None]
    if dedup_entities:
        ent_ids = list(dict.fromkeys(ent_ids))
    if not truncate_before_oov and max_entities > 0:
        ent_ids = ent_ids[:max_entities]

    target: int | None = None
    if doc.target_entity:
        target = vocab.target_entity_id(doc.target_entity)
    if target is None and require_target:
        raise UnknownTarget(
            f"document {doc.doc_id!r}: target entity {doc.target_entity!r} "
            f"is not in the target vocabulary"
        )
    return Document(target=target, words=word_ids, ctx_entities=ent_ids)


def compile_dataset(corpus: Sequence[RawDocument], vocab: Vocabulary,
                    max_words: int, max_entities: int,
                    dedup_entities: bool = False,
                    truncate_before_oov: bool = False) -> CompiledDataset:
    """Compile a training corpus; every document must have a unique target."""
    documents = []
    seen: dict[int, str] = {}
    for doc in corpus:
        compiled = compile_document(doc, vocab, max_words, max_entities,
                                    require_target=True,
                                    dedup_entities=dedup_entities,
                                    truncate_before_oov=truncate_before_oov)
        if compiled.target in seen:
            raise DataError(
                f"target entity {doc.target_entity!r} appears in documents "
                f"{seen[compiled.target]!r} and {doc.doc_id!r}; the dataset "
                f"must hold one document per target entity"
            )
        seen[compiled.target] = doc.doc_id
        documents.append(compiled)
    return CompiledDataset(documents=documents, vocab=vocab)


def emit_pretrain_stream(corpus: Iterable[RawDocument]) -> Iterator[list[str]]:
    """Yield each document's tokens with annotation spans collapsed.

    Every annotated span is replaced by one synthetic token
    ``ENTITY/<entity name>``; unannotated tokens pass through unchanged.
    Expects annotations already score-filtered and tokens normalized.
    """
    for doc in corpus:
        out: list[str] = []
        pos = 0
        for ann in doc.annotations:
            out.extend(doc.tokens[pos:ann.start])
            out.append(ENTITY_TOKEN_PREFIX + ann.entity)
            pos = ann.end
        out.extend(doc.tokens[pos:])
        yield out


# ---------------------------------------------------------------------------
# JSON-lines corpus files
# ---------------------------------------------------------------------------

def iter_corpus(path) -> Iterator[RawDocument]:
    """Parse an annotated JSON-lines corpus, validating each document."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(path, f"invalid JSON: {exc}", line=lineno)
            yield _document_from_obj(obj, path, lineno)


def read_corpus(path) -> list[RawDocument]:
    return list(iter_corpus(path))


def _document_from_obj(obj, path, lineno) -> RawDocument:
    if not isinstance(obj, dict):
        raise MalformedFile(path, "document line is not a JSON object", line=lineno)
    try:
        doc_id = str(obj["id"])
        tokens = obj["tokens"]
    except KeyError as exc:
        raise MalformedFile(path, f"missing field {exc}", line=lineno)
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise MalformedFile(path, "tokens must be a list of strings", line=lineno)
    target = obj.get("target_entity") or ""
    anns = []
    for raw in obj.get("annotations", []):
        try:
            anns.append(Annotation(start=int(raw["start"]), end=int(raw["end"]),
                                   entity=str(raw["entity"]),
                                   score=float(raw.get("score", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(path, f"bad annotation: {exc}", line=lineno)
    anns.sort(key=lambda a: a.start)
    doc = RawDocument(doc_id=doc_id, target_entity=str(target), tokens=list(tokens),
                      annotations=anns, incoming_links=int(obj.get("incoming_links", 0)))
    try:
        doc.validate()
    except ValueError as exc:
        raise MalformedFile(path, str(exc), line=lineno)
    return doc


# ---------------------------------------------------------------------------
# Compiled dataset files (magic TXE1)
# ---------------------------------------------------------------------------

def _write_u32(out, value: int):
    out.write(struct.pack("<I", value))


def _write_u64(out, value: int):
    out.write(struct.pack("<Q", value))


def _write_string_table(out, names: Sequence[str], counts: Sequence[int] | None):
    _write_u32(out, len(names))
    for i, name in enumerate(names):
        raw = name.encode("utf-8")
        _write_u32(out, len(raw))
        out.write(raw)
        if counts is not None:
            _write_u64(out, counts[i])


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedFile(self.path, "truncated dataset file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string_table(self, with_counts: bool):
        n = self.u32()
        names, counts = [], []
        for _ in range(n):
            ln = self.u32()
            names.append(self.take(ln).decode("utf-8"))
            counts.append(self.u64() if with_counts else 1)
        return names, counts


def save_dataset(dataset: CompiledDataset, path, config: dict | None = None):
    """Write the binary dataset plus a ``<path>.json`` sidecar."""
    out = io.BytesIO()
    out.write(DATASET_MAGIC)
    out.write(dataset.vocab.to_bytes())
    _write_u32(out, len(dataset.documents))
    for doc in dataset.documents:
        if doc.target is None:
            raise DataError("cannot serialize a document without a target")
        _write_u32(out, doc.target)
        _write_u32(out, len(doc.words))
        for w in doc.words:
            _write_u32(out, w)
        _write_u32(out, len(doc.ctx_entities))
        for e in doc.ctx_entities:
            _write_u32(out, e)
    with open(path, "wb") as fh:
        fh.write(out.getvalue())
    sidecar = {
        "config": config or {},
        "counts": {
            "documents": len(dataset.documents),
            "words": dataset.vocab.n_words,
            "ctx_entities": dataset.vocab.n_ctx_entities,
            "target_entities": dataset.vocab.n_target_entities,
        },
        "vocab_hash": dataset.vocab.content_hash(),
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> CompiledDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _Reader(data, path)
    if rd.take(4) != DATASET_MAGIC:
        raise MalformedFile(path, "bad magic; not a compiled dataset")
    words, word_counts = rd.string_table(with_counts=True)
    ctx, ctx_counts = rd.string_table(with_counts=True)
    targets, target_counts = rd.string_table(with_counts=True)
    vocab = Vocabulary(words, word_counts, ctx, ctx_counts, targets, target_counts)
    n_docs = rd.u32()
    documents = []
    for _ in range(n_docs):
        target = rd.u32()
        words_ids = [rd.u32() for _ in range(rd.u32())]
        ent_ids = [rd.u32() for _ in range(rd.u32())]
        documents.append(Document(target=target, words=words_ids, ctx_entities=ent_ids))
    if rd.pos != len(data):
        raise MalformedFile(path, "trailing bytes after documents")
    return CompiledDataset(documents=documents, vocab=vocab)


# ---------------------------------------------------------------------------
# End-to-end corpus build
# ---------------------------------------------------------------------------

def build_corpus(raw_docs: Sequence[RawDocument], min_word_count: int = 5,
                 min_entity_count: int = 3, min_links: int = 5,
                 keep_set: frozenset[str] | set[str] = frozenset(),
                 min_score: float = 0.05, max_words: int = 2000,
                 max_entities: int = 300, dedup_entities: bool = False,
                 truncate_before_oov: bool = False,
                 ) -> tuple[CompiledDataset, dict]:
    """Run the full pipeline: filter, select, normalize, count, compile.

    Documents without a target entity cannot be training examples and are
    dropped (the count is reported in the returned stats dict).
    """
    docs = [filter_annotations(d, min_score) for d in raw_docs]
    docs = select_training_documents(docs, min_links, keep_set)
    skipped = sum(1 for d in docs if not d.target_entity)
    docs = [normalize(d) for d in docs if d.target_entity]
    if not docs:
        raise EmptyCorpus("no documents survived selection")
    vocab = build_vocabularies(docs, min_word_count, min_entity_count)
    dataset = compile_dataset(docs, vocab, max_words, max_entities,
                              dedup_entities=dedup_entities,
                              truncate_before_oov=truncate_before_oov)
    stats = {
        "input_documents": len(raw_docs),
        "selected_documents": len(dataset.documents),
        "skipped_no_target": skipped,
    }
    return dataset, stats
