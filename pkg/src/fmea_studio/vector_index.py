"""Exact top-k cosine similarity store over chunk and table embeddings.

The baseline (and only) search is an exact brute-force scan; store sizes here
are a few thousand entries at most, so approximate indexes would only add
risk. Results order by descending score with ties broken by ascending
entry id, which keeps every report reproducible.

On-disk layout (single file, little-endian, bit-exact round-trip):

    magic   4 bytes  b"FVS1"
    dim     u32
    count   u32
    then per entry, sorted by entry_id:
        entry_id     u32 length + UTF-8 bytes
        document_id  u32 length + UTF-8 bytes
        kind         u8 (0 = chunk, 1 = table)
        vector       dim * f32
        payload      u32 byte length + UTF-8 bytes

Vectors are canonicalized to float32 at upsert so the file round-trips
exactly; scoring happens in float64.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    ProviderUnavailableError,
    ValidationFailedError,
    ZeroVectorError,
)
from .providers import EmbeddingProvider

_MAGIC = b"FVS1"


class EntryKind(Enum):
    CHUNK = "Chunk"
    TABLE = "Table"


_KIND_CODES = {EntryKind.CHUNK: 0, EntryKind.TABLE: 1}
_KIND_FROM_CODE = {code: kind for kind, code in _KIND_CODES.items()}


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension vector of finite reals, canonicalized to float32."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValidationFailedError("embedding vector must be non-empty")
        canonical = tuple(float(np.float32(v)) for v in self.values)
        if any(not math.isfinite(v) for v in canonical):
            raise ValidationFailedError("embedding vector values must be finite")
        object.__setattr__(self, "values", canonical)

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class IndexEntry:
    entry_id: str
    document_id: str
    vector: EmbeddingVector
    payload: str
    kind: EntryKind


@dataclass(frozen=True)
class RetrievalResult:
    entry_id: str
    score: float
    payload: str
    kind: EntryKind


def embed(text: str, provider: EmbeddingProvider) -> EmbeddingVector:
    """Embed one text. Deterministic for a fixed provider and input."""
    if not text:
        raise ValidationFailedError("cannot embed empty text")
    vectors = provider.embed_batch([text])
    if len(vectors) != 1:
        raise ProviderUnavailableError(
            f"provider returned {len(vectors)} vectors for 1 text"
        )
    return EmbeddingVector(tuple(vectors[0]))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = np.asarray(a.values, dtype=np.float64)
    bv = np.asarray(b.values, dtype=np.float64)
    norm_a = float(np.linalg.norm(av))
    norm_b = float(np.linalg.norm(bv))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity undefined for an all-zero vector")
    return float(np.dot(av, bv) / (norm_a * norm_b))


class VectorStore:
    """In-memory exact-similarity store with atomic batched writes.

    Reads may run concurrently; each write takes the lock and applies its
    whole batch or nothing, so queries observe either the pre- or post-batch
    state, never a partial one.
    """

    def __init__(self, dim: int | None = None):
        self._dim = dim
        self._entries: dict[str, IndexEntry] = {}
        self._lock = threading.RLock()

    @property
    def dim(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[IndexEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.entry_id)

    def get(self, entry_id: str) -> IndexEntry | None:
        with self._lock:
            return self._entries.get(entry_id)

    def document_ids(self) -> set[str]:
        with self._lock:
            return {e.document_id for e in self._entries.values()}

    def _check_batch(self, entries: Sequence[IndexEntry]) -> None:
        dim = self._dim
        for entry in entries:
            if dim is None:
                dim = entry.vector.dim
            elif entry.vector.dim != dim:
                raise DimensionMismatchError(
                    f"entry {entry.entry_id!r} has dim {entry.vector.dim}, store dim {dim}"
                )

    def upsert_batch(self, entries: Sequence[IndexEntry]) -> int:
        """Insert or replace by entry_id; the whole batch applies or none of it."""
        entries = list(entries)
        with self._lock:
            self._check_batch(entries)
            if entries and self._dim is None:
                self._dim = entries[0].vector.dim
            for entry in entries:
                self._entries[entry.entry_id] = entry
        return len(entries)

    def replace_document(self, document_id: str, entries: Sequence[IndexEntry]) -> int:
        """Atomically drop every entry of a document and insert the new batch."""
        entries = list(entries)
        for entry in entries:
            if entry.document_id != document_id:
                raise ValidationFailedError(
                    f"entry {entry.entry_id!r} belongs to {entry.document_id!r}"
                )
        with self._lock:
            self._check_batch(entries)
            if entries and self._dim is None:
                self._dim = entries[0].vector.dim
            stale = [
                eid
                for eid, entry in self._entries.items()
                if entry.document_id == document_id
            ]
            for eid in stale:
                del self._entries[eid]
            for entry in entries:
                self._entries[entry.entry_id] = entry
        return len(entries)

    def query_by_vector(
        self,
        vector: EmbeddingVector,
        k: int,
        document_filter: Iterable[str] | None = None,
    ) -> list[RetrievalResult]:
        """Exact top-k by cosine similarity; zero-norm entries cannot rank."""
        if k < 1:
            raise ValidationFailedError("k must be >= 1")
        with self._lock:
            if not self._entries:
                return []
            if self._dim is not None and vector.dim != self._dim:
                raise DimensionMismatchError(
                    f"query dim {vector.dim} differs from store dim {self._dim}"
                )
            allowed = set(document_filter) if document_filter is not None else None
            candidates = [
                e
                for e in self._entries.values()
                if allowed is None or e.document_id in allowed
            ]
        if not candidates:
            return []
        qv = np.asarray(vector.values, dtype=np.float64)
        qnorm = float(np.linalg.norm(qv))
        if qnorm == 0.0:
            raise ZeroVectorError("query vector is all-zero")
        matrix = np.asarray([c.vector.values for c in candidates], dtype=np.float64)
        norms = np.linalg.norm(matrix, axis=1)
        scored: list[tuple[float, IndexEntry]] = []
        for entry, row, norm in zip(candidates, matrix, norms):
            if norm == 0.0:
                continue
            scored.append((float(np.dot(row, qv) / (norm * qnorm)), entry))
        scored.sort(key=lambda pair: (-pair[0], pair[1].entry_id))
        return [
            RetrievalResult(e.entry_id, score, e.payload, e.kind)
            for score, e in scored[:k]
        ]

    def query(
        self,
        query_text: str,
        k: int,
        provider: EmbeddingProvider,
        document_filter: Iterable[str] | None = None,
    ) -> list[RetrievalResult]:
        """Embed the query text and return the exact top-k matches."""
        if k < 1:
            raise ValidationFailedError("k must be >= 1")
        with self._lock:
            empty = not self._entries
        if empty:
            return []
        return self.query_by_vector(embed(query_text, provider), k, document_filter)

    # --- single-file persistence -------------------------------------------

    def save(self, path: str | Path) -> None:
        with self._lock:
            entries = sorted(self._entries.values(), key=lambda e: e.entry_id)
            dim = self._dim if self._dim is not None else 0
            parts = [_MAGIC, struct.pack("<II", dim, len(entries))]
            for entry in entries:
                for text in (entry.entry_id, entry.document_id):
                    raw = text.encode("utf-8")
                    parts.append(struct.pack("<I", len(raw)))
                    parts.append(raw)
                parts.append(struct.pack("<B", _KIND_CODES[entry.kind]))
                parts.append(
                    struct.pack(f"<{len(entry.vector.values)}f", *entry.vector.values)
                )
                payload = entry.payload.encode("utf-8")
                parts.append(struct.pack("<I", len(payload)))
                parts.append(payload)
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "VectorStore":
        data = Path(path).read_bytes()
        if data[:4] != _MAGIC:
            raise ValidationFailedError(f"not a vector store file: {path}")
        offset = 4
        dim, count = struct.unpack_from("<II", data, offset)
        offset += 8
        store = cls(dim=dim if dim > 0 else None)
        entries: list[IndexEntry] = []
        for _ in range(count):

            def read_str() -> str:
                nonlocal offset
                (length,) = struct.unpack_from("<I", data, offset)
                offset += 4
                text = data[offset : offset + length].decode("utf-8")
                offset += length
                return text

            entry_id = read_str()
            document_id = read_str()
            (kind_code,) = struct.unpack_from("<B", data, offset)
            offset += 1
            values = struct.unpack_from(f"<{dim}f", data, offset)
            offset += 4 * dim
            (payload_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            payload = data[offset : offset + payload_len].decode("utf-8")
            offset += payload_len
            entries.append(
                IndexEntry(
                    entry_id=entry_id,
                    document_id=document_id,
                    vector=EmbeddingVector(tuple(float(v) for v in values)),
                    payload=payload,
                    kind=_KIND_FROM_CODE[kind_code],
                )
            )
        store.upsert_batch(entries)
        return store
