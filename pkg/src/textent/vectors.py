"""Embedding serialization and cosine nearest-entity queries.

The on-disk format is plain text: a header line ``<count> <dim>`` followed by
one ``<name> <v1> ... <vd>`` line per vector.  Values are written with
shortest round-trip decimal encoding, so save followed by load reproduces
every float exactly.  Names may contain spaces (entity names routinely do);
the loader splits each row from the right, taking the last ``dim`` fields as
the vector.
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .corpus import ENTITY_TOKEN_PREFIX
from .errors import MalformedFile, ZeroQuery


class VectorStore:
    """An immutable name -> vector map with a uniform dimension.

    Namespaces are encoded in the names themselves: entity vectors carry the
    ``ENTITY/`` prefix (``WORD/`` is available for word exports when both
    kinds share a store).
    """

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        if not vectors:
            raise ValueError("a vector store must hold at least one vector")
        self._names = list(vectors)
        self._matrix = np.asarray([vectors[n] for n in self._names], dtype=np.float64)
        if self._matrix.ndim != 2:
            raise ValueError("all vectors must share one dimension")
        self._index = {n: i for i, n in enumerate(self._names)}
        if len(self._index) != len(self._names):
            raise ValueError("vector names must be unique")

    @classmethod
    def from_matrix(cls, names: Iterable[str], matrix: np.ndarray,
                    prefix: str = "") -> "VectorStore":
        names = [prefix + n for n in names]
        matrix = np.asarray(matrix, dtype=np.float64)
        if len(names) != matrix.shape[0]:
            raise ValueError("one name per matrix row required")
        return cls(dict(zip(names, matrix)))

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self):
        return len(self._names)

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name: str) -> np.ndarray:
        return self._matrix[self._index[name]]

    def get(self, name: str):
        i = self._index.get(name)
        return None if i is None else self._matrix[i]

    def items(self):
        for i, n in enumerate(self._names):
            yield n, self._matrix[i]


def save_vectors(store: VectorStore, path):
    """Write the text format; exact round trip with :func:`load_vectors`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(store)} {store.dim}\n")
        for name, vec in store.items():
            fh.write(name)
            for x in vec:
                fh.write(" " + repr(float(x)))
            fh.write("\n")


def load_vectors(path) -> VectorStore:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise MalformedFile(path, "empty file", line=1)
        parts = header.split()
        if len(parts) != 2:
            raise MalformedFile(path, "header must be '<count> <dim>'", line=1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedFile(path, "non-integer header fields", line=1)
        if count < 1 or dim < 1:
            raise MalformedFile(path, "count and dim must be positive", line=1)
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) < dim + 1:
                raise MalformedFile(path, f"row has fewer than {dim + 1} fields",
                                    line=lineno)
            name = " ".join(fields[:-dim])
            if not name:
                raise MalformedFile(path, "empty vector name", line=lineno)
            if name in vectors:
                raise MalformedFile(path, f"duplicate name {name!r}", line=lineno)
            try:
                vec = np.array([float(x) for x in fields[-dim:]], dtype=np.float64)
            except ValueError:
                raise MalformedFile(path, "non-numeric vector field", line=lineno)
            vectors[name] = vec
        if len(vectors) != count:
            raise MalformedFile(
                path, f"header declares {count} rows but file holds {len(vectors)}")
    return VectorStore(vectors)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, defined as 0.0 when either vector has zero norm."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def nearest_entities(query: np.ndarray, store: VectorStore, n: int,
                     ) -> list[tuple[str, float]]:
    """Top-n entity vectors by cosine similarity, descending, ties by name.

    Only names in the ``ENTITY/`` namespace are candidates (returned with the
    prefix stripped); a store holding no prefixed names is treated as an
    entity-only store and scanned whole.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    query = np.asarray(query, dtype=np.float64)
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        raise ZeroQuery("query vector has zero norm")
    scored = []
    any_prefixed = any(name.startswith(ENTITY_TOKEN_PREFIX) for name in store.names)
    for name, vec in store.items():
        if any_prefixed:
            if not name.startswith(ENTITY_TOKEN_PREFIX):
                continue
            label = name[len(ENTITY_TOKEN_PREFIX):]
        else:
            label = name
        scored.append((label, cosine(query, vec)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:n]
