"""Style embeddings: a deterministic stylometric featurizer plus store I/O.

The built-in featurizer concatenates hashed character n-gram term
frequencies, function-word relative frequencies, and a small block of
punctuation/casing/length statistics, then L2-normalizes.  It is a
self-contained stand-in for neural style encoders; externally computed
neural embeddings enter through the same binary store format.
"""

from __future__ import annotations

import math
import struct
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._function_words import FUNCTION_WORDS
from .corpus import Document, Episode, SourceLabel, _char_sentence_spans, DEFAULT_ABBREVIATIONS
from .errors import StoreError
from .tokenize import word_spans

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)

STATS_DIM = 16


@dataclass(frozen=True)
class ProjectionHead:
    """Linear map (d_out x d_in) applied after the base features."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise StoreError("bad-head", "projection weights must be a matrix")
        if w.shape[0] > w.shape[1]:
            raise StoreError("bad-head", "projection cannot increase dimension")
        if not np.all(np.isfinite(w)):
            raise StoreError("bad-head", "projection weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class FeaturizerConfig:
    ngram_orders: tuple[int, ...] = (1, 2, 3, 4)
    buckets: int = 8192
    function_words: tuple[str, ...] = FUNCTION_WORDS
    projection: ProjectionHead | None = None

    def __post_init__(self):
        if self.buckets < 256 or self.buckets & (self.buckets - 1):
            raise StoreError("bad-config", "buckets must be a power of two >= 256")
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise StoreError("bad-config", "ngram orders must be positive")
        if self.projection is not None and self.projection.d_in != self.base_dim:
            raise StoreError(
                "dim-mismatch",
                f"projection expects d_in={self.projection.d_in}, featurizer produces {self.base_dim}",
            )

    @property
    def base_dim(self) -> int:
        return self.buckets + len(self.function_words) + STATS_DIM

    @property
    def dim(self) -> int:
        return self.projection.d_out if self.projection else self.base_dim


def _hashed_ngram_block(text: str, orders: tuple[int, ...], buckets: int) -> np.ndarray:
    """Term frequencies of FNV-1a-hashed character n-grams.

    Each n-gram hashes its UTF-32-LE code-point bytes prefixed by the order
    byte, so identical grams of different orders land in decorrelated
    buckets.  Integer hashing keeps the block identical across platforms.
    """
    counts = np.zeros(buckets, dtype=np.int64)
    mask = np.uint64(buckets - 1)
    cps = np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)
    total = 0
    for k in orders:
        if len(cps) < k:
            continue
        windows = sliding_window_view(cps, k)
        h0 = ((int(_FNV_OFFSET) ^ k) * int(_FNV_PRIME)) & 0xFFFFFFFFFFFFFFFF
        h = np.full(len(windows), h0, dtype=np.uint64)
        for col in range(k):
            cp = windows[:, col].astype(np.uint64)
            for shift in (0, 8, 16, 24):  # little-endian byte order of each code point
                byte = (cp >> np.uint64(shift)) & np.uint64(0xFF)
                h = (h ^ byte) * _FNV_PRIME
        np.add.at(counts, (h & mask).astype(np.int64), 1)
        total += len(windows)
    block = counts.astype(np.float64)
    if total:
        block /= total
    return block


def _normalize_word(word: str) -> str:
    start, end = 0, len(word)
    while start < end and unicodedata.category(word[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(word[end - 1]).startswith("P"):
        end -= 1
    return word[start:end].lower()


def _function_word_block(words: list[str], inventory: tuple[str, ...]) -> np.ndarray:
    index = {w: i for i, w in enumerate(inventory)}
    block = np.zeros(len(inventory), dtype=np.float64)
    for word in words:
        slot = index.get(_normalize_word(word))
        if slot is not None:
            block[slot] += 1.0
    if words:
        block /= len(words)
    return block


def _stats_block(text: str, words: list[str]) -> np.ndarray:
    n_chars = len(text)
    letters = upper = digits = spaces = punct = 0
    commas = periods = questions = exclaims = quotes = 0
    for ch in text:
        cat = unicodedata.category(ch)
        if cat.startswith("L"):
            letters += 1
            if ch.isupper():
                upper += 1
        elif ch.isdigit():
            digits += 1
        elif ch.isspace():
            spaces += 1
        if cat.startswith("P"):
            punct += 1
        if ch == ",":
            commas += 1
        elif ch == ".":
            periods += 1
        elif ch == "?":
            questions += 1
        elif ch == "!":
            exclaims += 1
        elif ch in "\"'‘’“”":
            quotes += 1
    n_words = len(words)
    word_lens = np.array([len(w) for w in words], dtype=np.float64) if words else np.zeros(0)
    sent_lens = [
        len(word_spans(text[a:b])) for a, b in _char_sentence_spans(text, DEFAULT_ABBREVIATIONS)
    ]
    sents = np.array(sent_lens, dtype=np.float64) if sent_lens else np.zeros(0)
    caps = sum(1 for w in words if w[:1].isupper())
    distinct = len({w.lower() for w in words})
    stats = np.array(
        [
            math.log1p(n_chars),
            word_lens.mean() if n_words else 0.0,
            word_lens.std() if n_words else 0.0,
            sents.mean() if len(sents) else 0.0,
            sents.std() if len(sents) else 0.0,
            upper / letters if letters else 0.0,
            digits / n_chars if n_chars else 0.0,
            spaces / n_chars if n_chars else 0.0,
            punct / n_chars if n_chars else 0.0,
            commas / n_words if n_words else 0.0,
            periods / n_words if n_words else 0.0,
            questions / n_words if n_words else 0.0,
            exclaims / n_words if n_words else 0.0,
            quotes / n_words if n_words else 0.0,
            caps / n_words if n_words else 0.0,
            distinct / n_words if n_words else 0.0,
        ],
        dtype=np.float64,
    )
    return stats


_BLOCK_WEIGHTS = (1.0, 1.0, 0.25)


def _unit(block: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(block)
    return block / norm if norm > 0.0 else block


def featurize_text(text: str, cfg: FeaturizerConfig) -> np.ndarray:
    if not text:
        raise StoreError("empty-document", "cannot featurize empty text")
    words = [text[a:b] for a, b in word_spans(text)]
    # each block is L2-normalized before concatenation; otherwise the raw
    # statistics (scale ~5) swamp the term frequencies (scale ~0.1) and
    # compress every cosine toward 1
    blocks = (
        _hashed_ngram_block(text, cfg.ngram_orders, cfg.buckets),
        _function_word_block(words, cfg.function_words),
        _stats_block(text, words),
    )
    vec = np.concatenate([w * _unit(b) for w, b in zip(_BLOCK_WEIGHTS, blocks)])
    vec /= np.linalg.norm(vec)
    if cfg.projection is not None:
        vec = cfg.projection.weights @ vec
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise StoreError("degenerate-projection", "projection produced a zero vector")
        vec /= norm
    return vec.astype(np.float32)


def featurize_document(doc: Document, cfg: FeaturizerConfig) -> np.ndarray:
    """Unit-norm style vector of one document; deterministic for fixed config."""
    return featurize_text(doc.text, cfg)


class BuiltinEmbedder:
    """Document embedder backed by the stylometric featurizer.

    Featurization is a pure function of (text, config), so results are
    memoized by text; disable for corpora too large to hold vectors in
    memory.
    """

    def __init__(self, cfg: FeaturizerConfig | None = None, cache: bool = True):
        self.cfg = cfg or FeaturizerConfig()
        self._cache: dict[str, np.ndarray] | None = {} if cache else None

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def embed_document(self, doc: Document) -> np.ndarray:
        if self._cache is None:
            return featurize_document(doc, self.cfg)
        vec = self._cache.get(doc.text)
        if vec is None:
            vec = featurize_document(doc, self.cfg)
            self._cache[doc.text] = vec
        return vec


class StoreEmbedder:
    """Document embedder that looks vectors up in a per-document store."""

    def __init__(self, records: Iterable["EmbeddingRecord"]):
        self._by_id = {r.id: r.vector for r in records}
        dims = {v.shape[0] for v in self._by_id.values()}
        if len(dims) > 1:
            raise StoreError("dim-mismatch", "store contains mixed dimensions")
        self._dim = dims.pop() if dims else 0

    @property
    def dim(self) -> int:
        return self._dim

    def embed_document(self, doc: Document) -> np.ndarray:
        try:
            return self._by_id[doc.id]
        except KeyError:
            raise StoreError("missing-embedding", f"no stored embedding for document {doc.id!r}")


class EpisodeStoreEmbedder:
    """Episode-level lookup for protocols that never touch document vectors."""

    def __init__(self, records: Iterable["EmbeddingRecord"]):
        self._by_id = {r.id: r.vector for r in records}
        dims = {v.shape[0] for v in self._by_id.values()}
        if len(dims) > 1:
            raise StoreError("dim-mismatch", "store contains mixed dimensions")
        self._dim = dims.pop() if dims else 0

    @property
    def dim(self) -> int:
        return self._dim

    def episode_vector(self, ep: Episode) -> np.ndarray:
        try:
            return self._by_id[ep.id]
        except KeyError:
            raise StoreError("missing-embedding", f"no stored embedding for episode {ep.id!r}")

    def embed_document(self, doc: Document) -> np.ndarray:
        raise StoreError("missing-embedding", "episode store has no per-document vectors")


def pool_vectors(vectors: list[np.ndarray], normalize_each: bool = False) -> np.ndarray:
    """Mean-pool vectors and renormalize; order-invariant by construction."""
    if not vectors:
        raise StoreError("empty-episode", "cannot pool zero vectors")
    stack = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    if normalize_each:
        norms = np.linalg.norm(stack, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise StoreError("degenerate-episode", "zero vector cannot be normalized")
        stack = stack / norms
    mean = stack.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise StoreError("degenerate-episode", "episode mean collapsed to the zero vector")
    return (mean / norm).astype(np.float32)


def embed_episode(ep: Episode, embedder, normalize_docs: bool = False) -> np.ndarray:
    """Episode embedding: mean of per-document vectors, then L2-normalized.

    ``normalize_docs`` additionally normalizes each document vector before
    pooling, for embedders whose outputs are not already unit norm.
    """
    return pool_vectors([embedder.embed_document(d) for d in ep.documents], normalize_docs)


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    author: str
    source: SourceLabel
    domain: str
    vector: np.ndarray = field(repr=False)


_MAGIC = b"STYL"
_VERSION = 1


def _write_str(fh, s: str) -> None:
    data = s.encode("utf-8")
    if len(data) > 0xFFFF:
        raise StoreError("string-too-long", f"string field exceeds 65535 bytes: {s[:32]!r}...")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StoreError("truncated-store", "store file ends mid-record")
    return data


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", _read_exact(fh, 2))
    return _read_exact(fh, n).decode("utf-8")


def write_store(records: list[EmbeddingRecord], path: str, normalized: bool = True, dim: int | None = None) -> None:
    """Write records in the binary store format (little-endian, magic STYL)."""
    if records:
        dims = {r.vector.shape[0] for r in records}
        if len(dims) != 1:
            raise StoreError("dim-mismatch", "records disagree on embedding dimension")
        dim = dims.pop()
    elif dim is None:
        dim = 0
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIBQ", _VERSION, dim, 1 if normalized else 0, len(records)))
        for r in records:
            vec = np.ascontiguousarray(r.vector, dtype="<f4")
            if not np.all(np.isfinite(vec)):
                raise StoreError("non-finite-embedding", f"record {r.id!r} has non-finite values")
            _write_str(fh, r.id)
            _write_str(fh, r.author)
            _write_str(fh, r.source.label())
            _write_str(fh, r.domain)
            fh.write(vec.tobytes())


def _read_store(path: str) -> tuple[list[EmbeddingRecord], bool, int]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise StoreError("bad-magic", f"not an embedding store (magic {magic!r})")
        version, dim, normalized, count = struct.unpack("<IIBQ", _read_exact(fh, 17))
        if version != _VERSION:
            raise StoreError("bad-version", f"unsupported store version {version}")
        records = []
        for _ in range(count):
            rid = _read_str(fh)
            author = _read_str(fh)
            label = _read_str(fh)
            domain = _read_str(fh)
            vec = np.frombuffer(_read_exact(fh, 4 * dim), dtype="<f4").copy()
            records.append(
                EmbeddingRecord(rid, author, SourceLabel.from_label(label), domain, vec)
            )
        if fh.read(1):
            raise StoreError("trailing-bytes", "store has trailing bytes after last record")
    return records, bool(normalized), dim


def read_store(path: str) -> list[EmbeddingRecord]:
    """Read a store verbatim; the roundtrip through write_store is bit-exact."""
    return _read_store(path)[0]


def import_external(path: str, expected_dim: int | None = None) -> list[EmbeddingRecord]:
    """Read and validate an externally produced store.

    Vectors must be finite and share one dimension; when the header's
    normalized flag is unset, each vector is L2-normalized on import.
    """
    records, normalized, dim = _read_store(path)
    if expected_dim is not None and dim != expected_dim:
        raise StoreError("dim-mismatch", f"store dim {dim} != expected {expected_dim}")
    for r in records:
        if not np.all(np.isfinite(r.vector)):
            raise StoreError("non-finite-embedding", f"record {r.id!r} has non-finite values")
    if not normalized:
        out = []
        for r in records:
            norm = float(np.linalg.norm(r.vector.astype(np.float64)))
            if norm == 0.0:
                raise StoreError("zero-embedding", f"record {r.id!r} is the zero vector")
            out.append(
                EmbeddingRecord(
                    r.id, r.author, r.source, r.domain,
                    (r.vector.astype(np.float64) / norm).astype(np.float32),
                )
            )
        records = out
    return records
