"""Pluggable tokenization used for truncation budgets and the n-gram LM.

Two modes:

* ``word``: maximal runs of non-whitespace characters.  Trailing punctuation
  stays attached to its word ("end." is one token), which matches how the
  truncation budget is counted throughout the engine.
* ``bpe``: greedy lowest-rank byte-pair merges over the characters of each
  whitespace-delimited word, driven by external vocab/merges files.  This
  approximates subword vocabularies used by neural encoders while staying
  deterministic for a fixed pair of files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import CorpusError

Span = tuple[int, int]


@dataclass(frozen=True)
class TokenizerSpec:
    """Configuration selecting the tokenizer; 'bpe' requires both files."""

    mode: str = "word"
    vocab_path: str | None = None
    merges_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("word", "bpe"):
            raise CorpusError("bad-tokenizer-mode", f"unknown tokenizer mode {self.mode!r}")
        if self.mode == "bpe" and not (self.vocab_path and self.merges_path):
            raise CorpusError("bpe-files-missing", "bpe mode requires vocab_path and merges_path")


def word_spans(text: str) -> list[Span]:
    """Character spans of whitespace-delimited tokens."""
    spans = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(text)))
    return spans


class WordTokenizer:
    mode = "word"

    def token_spans(self, text: str) -> list[Span]:
        return word_spans(text)

    def tokenize(self, text: str) -> list[str]:
        return [text[a:b] for a, b in word_spans(text)]

    def count(self, text: str) -> int:
        return len(word_spans(text))


class BpeTokenizer:
    """Character-level BPE over per-word symbol sequences."""

    mode = "bpe"

    def __init__(self, vocab_path: str, merges_path: str):
        try:
            with open(vocab_path, encoding="utf-8") as fh:
                vocab = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError("bpe-vocab-unreadable", f"cannot load BPE vocab {vocab_path}: {exc}")
        if not isinstance(vocab, dict):
            raise CorpusError("bpe-vocab-unreadable", "BPE vocab must be a JSON object {token: id}")
        self.vocab = {str(tok): int(idx) for tok, idx in vocab.items()}
        self.ranks: dict[tuple[str, str], int] = {}
        try:
            with open(merges_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if not line or line.startswith("#"):
                        continue
                    parts = line.split(" ")
                    if len(parts) != 2:
                        raise CorpusError("bpe-merges-malformed", f"bad merges line: {line!r}")
                    pair = (parts[0], parts[1])
                    if pair not in self.ranks:
                        self.ranks[pair] = len(self.ranks)
        except OSError as exc:
            raise CorpusError("bpe-merges-unreadable", f"cannot load BPE merges {merges_path}: {exc}")

    def _merge_word(self, word: str) -> list[str]:
        symbols = list(word)
        while len(symbols) > 1:
            best = None
            best_rank = None
            for i in range(len(symbols) - 1):
                rank = self.ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best, best_rank = i, rank
            if best is None:
                break
            merged = symbols[best] + symbols[best + 1]
            # merge every occurrence of the winning pair, left to right
            out = []
            i = 0
            while i < len(symbols):
                if (
                    i < len(symbols) - 1
                    and symbols[i] + symbols[i + 1] == merged
                    and self.ranks.get((symbols[i], symbols[i + 1])) == best_rank
                ):
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            symbols = out
        return symbols

    def token_spans(self, text: str) -> list[Span]:
        spans = []
        for wa, wb in word_spans(text):
            pos = wa
            for piece in self._merge_word(text[wa:wb]):
                spans.append((pos, pos + len(piece)))
                pos += len(piece)
        return spans

    def tokenize(self, text: str) -> list[str]:
        return [text[a:b] for a, b in self.token_spans(text)]

    def count(self, text: str) -> int:
        return len(self.token_spans(text))


def build_tokenizer(spec: TokenizerSpec) -> WordTokenizer | BpeTokenizer:
    if spec.mode == "word":
        return WordTokenizer()
    return BpeTokenizer(spec.vocab_path, spec.merges_path)
