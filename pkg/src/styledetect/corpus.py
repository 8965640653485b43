"""Corpus ingestion, sentence-boundary truncation, and episode grouping.

Documents are short writing samples truncated to the last sentence boundary
before a token budget (128 by default, 32 for the short-sample variant).
Episodes are ordered groups of N documents by one author in one domain; they
are the unit every detector scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import CorpusError
from .rng import SplitMix64, derive_seed
from .tokenize import TokenizerSpec, build_tokenizer

TERMINALS = frozenset(".!?…")

# Lowercased abbreviations whose trailing period does not end a sentence.
# Extend via the `abbreviations` argument or the corpus config file.
DEFAULT_ABBREVIATIONS = frozenset(
    """
    dr mr mrs ms prof sr jr st mt ave blvd rd
    etc e.g i.e viz cf vs al ca approx
    fig figs eq eqs no nos vol vols ch chs sec p pp
    inc ltd co corp dept univ est
    jan feb mar apr jun jul aug sep sept oct nov dec
    mon tue tues wed thu thurs fri sat sun
    a.m p.m u.s u.k u.n d.c ph.d m.d b.a m.a b.s m.s
    """.split()
)


@dataclass(frozen=True)
class SourceLabel:
    """Who produced a document: a human, or a named machine model."""

    kind: str  # "human" | "machine"
    model_name: str = ""

    def __post_init__(self):
        if self.kind not in ("human", "machine"):
            raise CorpusError("bad-source-kind", f"unknown source kind {self.kind!r}")
        if self.kind == "machine" and not self.model_name:
            raise CorpusError("missing-model-name", "machine sources need a model name")
        if self.kind == "human" and self.model_name:
            raise CorpusError("bad-source-kind", "human sources carry no model name")

    @classmethod
    def human(cls) -> "SourceLabel":
        return cls("human")

    @classmethod
    def machine(cls, model_name: str) -> "SourceLabel":
        return cls("machine", model_name)

    @classmethod
    def from_label(cls, label: str) -> "SourceLabel":
        return cls.human() if label == "human" else cls.machine(label)

    def label(self) -> str:
        return "human" if self.kind == "human" else self.model_name


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    author: str
    source: SourceLabel
    domain: str
    timestamp: int | None = None
    token_count: int = 0
    hard_cut: bool = False


@dataclass(frozen=True)
class Episode:
    """Ordered documents by one author/source/domain; id is the lead doc id."""

    id: str
    documents: tuple[Document, ...]
    author: str
    source: SourceLabel
    domain: str

    def __post_init__(self):
        if not self.documents:
            raise CorpusError("empty-episode", "episodes need at least one document")
        for doc in self.documents:
            if (doc.author, doc.source, doc.domain) != (self.author, self.source, self.domain):
                raise CorpusError(
                    "mixed-episode",
                    f"document {doc.id} does not share the episode's author/source/domain",
                )

    def timestamp(self) -> int | None:
        """Earliest member timestamp, or None unless every member has one."""
        stamps = [d.timestamp for d in self.documents]
        if any(s is None for s in stamps):
            return None
        return min(stamps)


def _char_sentence_spans(text: str, abbreviations: frozenset[str]) -> list[tuple[int, int]]:
    """Sentence spans in character offsets; see segment_sentences for the rule."""
    n = len(text)
    spans = []
    start = None
    i = 0
    while i < n:
        ch = text[i]
        if start is None:
            if not ch.isspace():
                start = i
            else:
                i += 1
                continue
        if ch in TERMINALS:
            j = i
            while j + 1 < n and text[j + 1] in TERMINALS:
                j += 1
            followed_ok = j + 1 == n or text[j + 1].isspace()
            boundary = followed_ok
            if boundary and j == i and ch == ".":
                # lone period: suppress after known abbreviations and initials
                k = i
                while k > start and not text[k - 1].isspace():
                    k -= 1
                word = text[k:i].lstrip("\"'‘“([{")
                lowered = word.lower().rstrip(".")
                if lowered in abbreviations or (len(word) == 1 and word.isalpha()):
                    boundary = False
            if boundary:
                spans.append((start, j + 1))
                start = None
            i = j + 1
            continue
        i += 1
    if start is not None:
        end = n
        while end > start and text[end - 1].isspace():
            end -= 1
        spans.append((start, end))
    return spans


def _byte_offsets(text: str) -> list[int]:
    """offsets[c] = byte position of character c in the UTF-8 encoding."""
    offsets = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        offsets[i] = pos
        pos += len(ch.encode("utf-8"))
    offsets[len(text)] = pos
    return offsets


def segment_sentences(
    text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[tuple[int, int]]:
    """Half-open UTF-8 byte spans of sentences.

    A sentence ends at a run of terminal marks (. ! ? …) followed by
    whitespace or end-of-text; a lone period is suppressed when the preceding
    word is a known abbreviation or a single-letter initial.  Spans are
    disjoint, ordered, and cover all non-whitespace text; trailing material
    without a terminal forms a final span ending at end-of-text.
    """
    if not text:
        return []
    char_spans = _char_sentence_spans(text, abbreviations)
    offsets = _byte_offsets(text)
    return [(offsets[a], offsets[b]) for a, b in char_spans]


def truncate_to_boundary(
    text: str,
    max_tokens: int,
    tok: TokenizerSpec = TokenizerSpec(),
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> tuple[str, int, bool]:
    """Longest sentence-aligned prefix within the token budget.

    Returns (prefix, token_count, hard_cut).  When even the first sentence
    exceeds the budget, the prefix is the first max_tokens tokens instead and
    hard_cut is set so downstream reports can exclude the document.
    """
    if max_tokens < 1:
        raise CorpusError("bad-max-tokens", "max_tokens must be >= 1")
    if not text or not text.strip():
        raise CorpusError("empty-document", "empty document")
    tokenizer = build_tokenizer(tok)
    sent_spans = _char_sentence_spans(text, abbreviations)
    kept_end = None
    total = 0
    for a, b in sent_spans:
        count = tokenizer.count(text[a:b])
        if total + count > max_tokens:
            break
        total += count
        kept_end = b
    if kept_end is None:
        token_spans = tokenizer.token_spans(text)
        cut = token_spans[max_tokens - 1][1]
        return text[:cut], max_tokens, True
    return text[:kept_end], total, False


_REQUIRED_FIELDS = ("id", "text", "author", "label", "domain")


def ingest_corpus(
    lines: Iterable[str],
    max_tokens: int = 128,
    tok: TokenizerSpec = TokenizerSpec(),
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
    field_map: Mapping[str, str] | None = None,
) -> list[Document]:
    """Parse line-delimited JSON records into truncated Documents.

    Each record needs id/text/author/label/domain (label is "human" or a
    model name) and may carry an integer timestamp.  `field_map` renames
    record keys, e.g. {"text": "body"}.  Malformed records and duplicate ids
    raise with the offending line number or id.
    """
    field_map = dict(field_map or {})
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorpusError("malformed-record", f"line {lineno}: invalid JSON ({exc.msg})")
        if not isinstance(record, dict):
            raise CorpusError("malformed-record", f"line {lineno}: record is not an object")
        values = {}
        for name in _REQUIRED_FIELDS:
            key = field_map.get(name, name)
            if key not in record:
                raise CorpusError("malformed-record", f"line {lineno}: missing field {name!r}")
            value = record[key]
            if not isinstance(value, str) or (name != "text" and not value):
                raise CorpusError("malformed-record", f"line {lineno}: field {name!r} must be a non-empty string")
            values[name] = value
        ts_key = field_map.get("timestamp", "timestamp")
        timestamp = record.get(ts_key)
        if timestamp is not None and not isinstance(timestamp, int):
            raise CorpusError("malformed-record", f"line {lineno}: timestamp must be an integer")
        if values["id"] in seen:
            raise CorpusError("duplicate-id", f"duplicate document id {values['id']!r}")
        seen.add(values["id"])
        try:
            text, count, hard_cut = truncate_to_boundary(values["text"], max_tokens, tok, abbreviations)
        except CorpusError as exc:
            raise CorpusError(exc.code, f"line {lineno}: {exc.message}")
        docs.append(
            Document(
                id=values["id"],
                text=text,
                author=values["author"],
                source=SourceLabel.from_label(values["label"]),
                domain=values["domain"],
                timestamp=timestamp,
                token_count=count,
                hard_cut=hard_cut,
            )
        )
    return docs


def build_episodes(docs: list[Document], n: int, seed: int) -> list[Episode]:
    """Partition documents into same-author episodes of exactly n.

    Within each (author, source, domain) group the documents are shuffled by
    a seed derived from the group key, then chunked; remainders smaller than
    n are dropped so every episode has exactly n members.  A document never
    appears in more than one episode.
    """
    if n < 1:
        raise CorpusError("bad-episode-size", "episode size must be >= 1")
    groups: dict[tuple[str, str, str, str], list[Document]] = {}
    for doc in docs:
        key = (doc.author, doc.source.kind, doc.source.model_name, doc.domain)
        groups.setdefault(key, []).append(doc)
    episodes = []
    for key in sorted(groups):
        members = list(groups[key])
        rng = SplitMix64(derive_seed(seed, "episodes", *key))
        rng.shuffle(members)
        for i in range(0, len(members) - n + 1, n):
            chunk = tuple(members[i : i + n])
            episodes.append(
                Episode(
                    id=chunk[0].id,
                    documents=chunk,
                    author=chunk[0].author,
                    source=chunk[0].source,
                    domain=chunk[0].domain,
                )
            )
    return episodes


def balance_corpus(docs: list[Document], seed: int) -> list[Document]:
    """Equalize human/machine counts by seeded down-sampling of the majority."""
    human_idx = [i for i, d in enumerate(docs) if d.source.kind == "human"]
    machine_idx = [i for i, d in enumerate(docs) if d.source.kind == "machine"]
    if not human_idx or not machine_idx:
        raise CorpusError("single-class", "balancing needs both human and machine documents")
    if len(human_idx) == len(machine_idx):
        return list(docs)
    majority, target = (human_idx, len(machine_idx)) if len(human_idx) > len(machine_idx) else (machine_idx, len(human_idx))
    rng = SplitMix64(derive_seed(seed, "balance"))
    kept = {majority[i] for i in rng.sample(len(majority), target)}
    minority = set(machine_idx if majority is human_idx else human_idx)
    return [d for i, d in enumerate(docs) if i in kept or i in minority]


@dataclass(frozen=True)
class CorpusConfig:
    max_tokens: int = 128
    tokenizer: TokenizerSpec = field(default_factory=TokenizerSpec)
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS


def load_corpus_config(path: str) -> CorpusConfig:
    """Read the plain-text key=value corpus config file."""
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise CorpusError("bad-config", f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise CorpusError("bad-config", f"cannot read config {path}: {exc}")
    cfg = CorpusConfig()
    if "max_tokens" in values:
        try:
            cfg = replace(cfg, max_tokens=int(values["max_tokens"]))
        except ValueError:
            raise CorpusError("bad-config", "max_tokens must be an integer")
    mode = values.get("tokenizer", cfg.tokenizer.mode)
    spec = TokenizerSpec(
        mode=mode,
        vocab_path=values.get("vocab_path"),
        merges_path=values.get("merges_path"),
    )
    cfg = replace(cfg, tokenizer=spec)
    if "abbreviations" in values:
        try:
            with open(values["abbreviations"], encoding="utf-8") as fh:
                words = frozenset(w.strip().lower() for w in fh if w.strip())
        except OSError as exc:
            raise CorpusError("bad-config", f"cannot read abbreviation list: {exc}")
        cfg = replace(cfg, abbreviations=words)
    return cfg
