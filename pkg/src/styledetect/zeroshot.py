"""Likelihood-based zero-shot detectors: Rank, LogRank, and Entropy.

The detectors consume per-position token statistics from a pluggable
provider.  The built-in provider is an additively smoothed n-gram language
model, a desk-scale stand-in for large neural LMs; statistics precomputed by
an external LM can be loaded from a line-delimited JSON file instead.

Sign conventions are fixed so that for every detector in the engine a larger
score means more machine-like: ranks and entropies enter negated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable

from .corpus import Document
from .errors import MetricError
from .rng import SplitMix64
from .tokenize import TokenizerSpec, build_tokenizer

UNK = "<unk>"
BOS = "<s>"


@dataclass(frozen=True)
class TokenStats:
    """Statistics of one scored position under the provider's distribution."""

    probability: float  # probability of the observed token, in (0, 1]
    rank: int  # 1-based; descending probability, ties by ascending token id
    entropy: float  # entropy of the full distribution, nats


class NGramLM:
    """Additive-smoothed n-gram LM over a fixed tokenizer.

    Conditional distributions are P(t | ctx) = (count + alpha) / (total +
    alpha * |V|); contexts never seen in training therefore back off to the
    uniform distribution.  Token ids are indices into the sorted vocabulary,
    which also fixes rank tie-breaking.
    """

    def __init__(self, order: int, alpha: float, tok: TokenizerSpec, counts, vocab):
        self.order = order
        self.alpha = alpha
        self.tok = tok
        self._tokenizer = build_tokenizer(tok)
        self.counts = counts  # context tuple -> {token: count}
        self.vocab = vocab  # sorted tuple of tokens, UNK included
        self._ids = {t: i for i, t in enumerate(vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _context(self, tokens: list[str], i: int) -> tuple[str, ...]:
        ctx = tokens[max(0, i - self.order + 1) : i]
        pad = self.order - 1 - len(ctx)
        return tuple([BOS] * pad + ctx)

    def distribution(self, ctx: tuple[str, ...]) -> list[float]:
        table = self.counts.get(ctx, {})
        total = sum(table.values())
        denom = total + self.alpha * self.vocab_size
        return [(table.get(t, 0) + self.alpha) / denom for t in self.vocab]

    def _map_token(self, token: str) -> str:
        return token if token in self._ids else UNK

    def doc_stats(self, doc: Document) -> list[TokenStats]:
        tokens = [self._map_token(t) for t in self._tokenizer.tokenize(doc.text)]
        stats = []
        for i, token in enumerate(tokens):
            probs = self.distribution(self._context(tokens, i))
            stats.append(_position_stats(probs, self._ids[token]))
        return stats

    def sample(self, n_tokens: int, seed: int) -> list[str]:
        """Draw a token sequence from the model (used for sanity checks)."""
        rng = SplitMix64(seed)
        out: list[str] = []
        for i in range(n_tokens):
            probs = self.distribution(self._context(out, i))
            u = rng.uniform()
            acc = 0.0
            pick = len(probs) - 1
            for j, p in enumerate(probs):
                acc += p
                if u < acc:
                    pick = j
                    break
            out.append(self.vocab[pick])
        return out


def _position_stats(probs: list[float], token_id: int) -> TokenStats:
    p_obs = probs[token_id]
    rank = 1
    for j, p in enumerate(probs):
        if p > p_obs or (p == p_obs and j < token_id):
            rank += 1
    entropy = -sum(p * math.log(p) for p in probs if p > 0.0)
    return TokenStats(probability=p_obs, rank=rank, entropy=entropy)


def train_ngram_lm(
    texts: Iterable[str], order: int = 3, alpha: float = 1.0, tok: TokenizerSpec = TokenizerSpec()
) -> NGramLM:
    """Count order-length contexts over the corpus, BOS-padded per text."""
    if order < 1:
        raise MetricError("bad-order", "n-gram order must be >= 1")
    if alpha <= 0:
        raise MetricError("bad-alpha", "smoothing constant must be positive")
    tokenizer = build_tokenizer(tok)
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    vocab: set[str] = set()
    n_texts = 0
    for text in texts:
        tokens = tokenizer.tokenize(text)
        if not tokens:
            continue
        n_texts += 1
        vocab.update(tokens)
        padded = [BOS] * (order - 1) + tokens
        for i in range(len(tokens)):
            ctx = tuple(padded[i : i + order - 1])
            table = counts.setdefault(ctx, {})
            table[tokens[i]] = table.get(tokens[i], 0) + 1
    if not n_texts:
        raise MetricError("empty-corpus", "cannot train an n-gram LM on an empty corpus")
    vocab.add(UNK)
    return NGramLM(order, alpha, tok, counts, tuple(sorted(vocab)))


class ConstantDistributionProvider:
    """Provider with one fixed next-token distribution at every position.

    Token ids follow the sorted order of the distribution's support.  Used
    for hand-checkable fixtures and degenerate analyses.
    """

    def __init__(self, distribution: dict[str, float], tok: TokenizerSpec = TokenizerSpec()):
        total = sum(distribution.values())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise MetricError("bad-distribution", f"probabilities sum to {total}, not 1")
        self.vocab = tuple(sorted(distribution))
        self.probs = [distribution[t] for t in self.vocab]
        self._ids = {t: i for i, t in enumerate(self.vocab)}
        self._tokenizer = build_tokenizer(tok)

    def doc_stats(self, doc: Document) -> list[TokenStats]:
        stats = []
        for token in self._tokenizer.tokenize(doc.text):
            if token not in self._ids:
                raise MetricError("unknown-token", f"token {token!r} outside provider vocabulary")
            stats.append(_position_stats(self.probs, self._ids[token]))
        return stats


class PrecomputedStatsProvider:
    """Per-document statistics loaded from line-delimited JSON.

    Each line carries {"id", "ranks": [...], "logprobs": [...],
    "entropies": [...]} as produced by an external likelihood model.
    """

    def __init__(self, by_id: dict[str, list[TokenStats]]):
        self._by_id = by_id

    @classmethod
    def load(cls, fh: IO[str]) -> "PrecomputedStatsProvider":
        by_id: dict[str, list[TokenStats]] = {}
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MetricError("malformed-stats", f"line {lineno}: invalid JSON ({exc.msg})")
            try:
                ranks = rec["ranks"]
                logprobs = rec["logprobs"]
                entropies = rec["entropies"]
                doc_id = rec["id"]
            except (KeyError, TypeError):
                raise MetricError("malformed-stats", f"line {lineno}: missing id/ranks/logprobs/entropies")
            if not (len(ranks) == len(logprobs) == len(entropies)):
                raise MetricError("malformed-stats", f"line {lineno}: array lengths differ")
            by_id[doc_id] = [
                TokenStats(probability=math.exp(lp), rank=int(r), entropy=float(h))
                for r, lp, h in zip(ranks, logprobs, entropies)
            ]
        return cls(by_id)

    def doc_stats(self, doc: Document) -> list[TokenStats]:
        try:
            return self._by_id[doc.id]
        except KeyError:
            raise MetricError("missing-stats", f"no precomputed statistics for document {doc.id!r}")


def _stats_or_error(doc: Document, provider) -> list[TokenStats]:
    stats = provider.doc_stats(doc)
    if not stats:
        raise MetricError("no-scorable-position", f"document {doc.id!r} has no scorable position")
    return stats


def rank_score(doc: Document, provider) -> float:
    """Negated mean rank of observed tokens (best possible is -1.0)."""
    stats = _stats_or_error(doc, provider)
    return -sum(s.rank for s in stats) / len(stats)


def logrank_score(doc: Document, provider) -> float:
    """Negated mean log-rank; 0.0 when every token is the argmax."""
    stats = _stats_or_error(doc, provider)
    return -sum(math.log(s.rank) for s in stats) / len(stats)


def entropy_score(doc: Document, provider) -> float:
    """Negated mean distribution entropy (nats); low entropy looks machine-like."""
    stats = _stats_or_error(doc, provider)
    return -sum(s.entropy for s in stats) / len(stats)


def episode_score(episode_docs: Iterable[Document], provider, kind: str = "rank") -> float:
    """Average per-document zero-shot score within an episode."""
    fns = {"rank": rank_score, "logrank": logrank_score, "entropy": entropy_score}
    try:
        fn = fns[kind]
    except KeyError:
        raise MetricError("bad-detector", f"unknown zero-shot detector {kind!r}")
    scores = [fn(d, provider) for d in episode_docs]
    if not scores:
        raise MetricError("empty-episode", "cannot score an empty episode")
    return sum(scores) / len(scores)
