"""Chunked document store with exact cosine top-k search.

Documents are deduplicated by a content hash, split into chunks, embedded,
and searched by brute-force dot product over unit vectors. Persistence is
a small binary vector file plus a JSON-lines sidecar; round-trips are
bit-exact so a reloaded store returns identical search results.

An engine instance runs two of these: one behind the rejection gate and
one feeding answer context. They never share a persistence root.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .embedding import EmbeddingBackend
from .errors import CorruptStore, DimensionMismatch, EmbeddingUnavailable
from .splitters import DEFAULT_MAX_CHARS, DEFAULT_OVERLAP, Chunk, split

logger = logging.getLogger(__name__)

_MAGIC = b"HXDF"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

_VECTORS_FILE = "vectors.bin"
_META_FILE = "meta.jsonl"

# How far a stored vector's norm may drift from 1 before re-normalizing.
_NORM_TOLERANCE = 1e-6

TEXT_SUFFIXES = (".md", ".markdown", ".txt")


@dataclass
class DocumentRecord:
    doc_id: str
    source_path: str
    full_text: str
    mime: str = "text/plain"


@dataclass(frozen=True)
class SearchHit:
    chunk: Chunk
    similarity: float

    @property
    def chunk_id(self) -> str:
        return self.chunk.chunk_id

    @property
    def doc_id(self) -> str:
        return self.chunk.doc_id


@dataclass
class IngestSummary:
    files_seen: int = 0
    docs_added: int = 0
    docs_skipped: int = 0
    chunks_added: int = 0


def make_document(full_text: str, source_path: str = "", mime: str = "text/plain") -> DocumentRecord:
    doc_id = hashlib.sha256(full_text.encode("utf-8")).hexdigest()
    return DocumentRecord(doc_id=doc_id, source_path=source_path, full_text=full_text, mime=mime)


class FeatureStore:
    def __init__(
        self,
        embedder: EmbeddingBackend,
        *,
        splitter: str = "hybrid",
        max_chars: int = DEFAULT_MAX_CHARS,
        overlap: int = DEFAULT_OVERLAP,
    ) -> None:
        self.embedder = embedder
        self.splitter = splitter
        self.max_chars = max_chars
        self.overlap = overlap
        self._docs: dict[str, DocumentRecord] = {}
        self._chunks: list[Chunk] = []
        self._matrix = np.zeros((0, embedder.dim), dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.embedder.dim

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def doc_count(self) -> int:
        return len(self._docs)

    @property
    def chunks(self) -> list[Chunk]:
        return list(self._chunks)

    def get_document(self, doc_id: str) -> DocumentRecord | None:
        return self._docs.get(doc_id)

    def embed_text(self, text: str) -> np.ndarray:
        return self._normalize(self.embedder.embed([text])[0])

    @staticmethod
    def _normalize(vec: np.ndarray) -> np.ndarray:
        arr = np.asarray(vec, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise EmbeddingUnavailable("backend returned a zero vector")
        if abs(norm - 1.0) > _NORM_TOLERANCE:
            arr = arr / norm
        return arr

    def add_document(self, record: DocumentRecord) -> int:
        """Split, embed, and index a document. Returns chunks added (0 if known)."""
        if record.doc_id in self._docs:
            return 0
        chunks = split(self.splitter, record.full_text, self.max_chars, self.overlap, doc_id=record.doc_id)
        if chunks:
            # Embed before mutating anything so a backend failure leaves the
            # store untouched.
            vectors = [self._normalize(v) for v in self.embedder.embed([c.body for c in chunks])]
            self._matrix = np.vstack([self._matrix, np.stack(vectors)])
            self._chunks.extend(chunks)
        self._docs[record.doc_id] = record
        return len(chunks)

    def ingest(self, directory: str | Path, suffixes: tuple[str, ...] = TEXT_SUFFIXES) -> IngestSummary:
        """Index every text/markdown file under ``directory``. Idempotent."""
        root = Path(directory)
        if not root.is_dir():
            raise ValueError(f"not a directory: {root}")
        summary = IngestSummary()
        for path in sorted(p for p in root.rglob("*") if p.is_file() and p.suffix in suffixes):
            summary.files_seen += 1
            text = path.read_text(encoding="utf-8", errors="replace")
            if not text.strip():
                summary.docs_skipped += 1
                continue
            mime = "text/markdown" if path.suffix in (".md", ".markdown") else "text/plain"
            record = make_document(text, source_path=str(path), mime=mime)
            known = record.doc_id in self._docs
            added = self.add_document(record)
            if known:
                summary.docs_skipped += 1
            else:
                summary.docs_added += 1
                summary.chunks_added += added
        return summary

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-k by cosine over unit vectors; ties break by chunk_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        n = len(self._chunks)
        if n == 0:
            return []
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"query shape {q.shape}, index dim {self.dim}")
        sims = self._matrix @ q
        order = sorted(range(n), key=lambda i: (-sims[i], self._chunks[i].chunk_id))
        return [SearchHit(self._chunks[i], float(sims[i])) for i in order[:k]]

    def search_text(self, text: str, k: int) -> list[SearchHit]:
        return self.search(self.embed_text(text), k)

    # ── Persistence ──────────────────────────────────────────────────────

    def persist(self, root: str | Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        header = _HEADER.pack(_MAGIC, _FORMAT_VERSION, self.dim, len(self._chunks))
        blob = header + np.ascontiguousarray(self._matrix, dtype="<f8").tobytes()
        _atomic_write_bytes(root / _VECTORS_FILE, blob)

        lines = [
            json.dumps(
                {
                    "kind": "store",
                    "dim": self.dim,
                    "splitter": self.splitter,
                    "max_chars": self.max_chars,
                    "overlap": self.overlap,
                },
                ensure_ascii=False,
            )
        ]
        for doc in self._docs.values():
            lines.append(json.dumps({"kind": "doc", **asdict(doc)}, ensure_ascii=False))
        for chunk in self._chunks:
            entry = asdict(chunk)
            entry["char_span"] = list(chunk.char_span)
            lines.append(json.dumps({"kind": "chunk", **entry}, ensure_ascii=False))
        _atomic_write_bytes(root / _META_FILE, ("\n".join(lines) + "\n").encode("utf-8"))

    @classmethod
    def load(cls, root: str | Path, embedder: EmbeddingBackend) -> "FeatureStore":
        root = Path(root)
        vec_path = root / _VECTORS_FILE
        meta_path = root / _META_FILE
        if not vec_path.is_file() or not meta_path.is_file():
            raise CorruptStore(f"store files missing under {root}")

        blob = vec_path.read_bytes()
        if len(blob) < _HEADER.size:
            raise CorruptStore("vector file shorter than header")
        magic, version, dim, count = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise CorruptStore(f"bad magic {magic!r}")
        if version != _FORMAT_VERSION:
            raise CorruptStore(f"unsupported format version {version}")
        if dim != embedder.dim:
            raise DimensionMismatch(f"stored dim {dim}, embedder dim {embedder.dim}")
        expected = _HEADER.size + count * dim * 8
        if len(blob) != expected:
            raise CorruptStore(f"vector file has {len(blob)} bytes, expected {expected}")
        matrix = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(count, dim).copy()

        store_line: dict | None = None
        docs: dict[str, DocumentRecord] = {}
        chunks: list[Chunk] = []
        try:
            for line in meta_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                kind = entry.pop("kind")
                if kind == "store":
                    store_line = entry
                elif kind == "doc":
                    doc = DocumentRecord(**entry)
                    docs[doc.doc_id] = doc
                elif kind == "chunk":
                    entry["char_span"] = tuple(entry["char_span"])
                    chunks.append(Chunk(**entry))
                else:
                    raise CorruptStore(f"unknown meta line kind {kind!r}")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptStore(f"sidecar unreadable: {exc}") from exc
        if store_line is None:
            raise CorruptStore("sidecar missing store line")
        if len(chunks) != count:
            raise CorruptStore(f"sidecar lists {len(chunks)} chunks, vector file {count}")

        store = cls(
            embedder,
            splitter=store_line.get("splitter", "hybrid"),
            max_chars=int(store_line.get("max_chars", DEFAULT_MAX_CHARS)),
            overlap=int(store_line.get("overlap", DEFAULT_OVERLAP)),
        )
        store._docs = docs
        store._chunks = chunks
        store._matrix = matrix
        return store


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
