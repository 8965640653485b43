"""Shared fixtures: synthetic authors with distinct, seeded style signatures.

Each synthetic author draws content-word letters from an author-specific
distribution and function words from author-specific preferences, so the
stylometric featurizer can tell authors apart without any real data.
"""

from __future__ import annotations

import string

import pytest

from styledetect.corpus import Document, SourceLabel
from styledetect.rng import SplitMix64, derive_seed

_FUNCTION_POOL = (
    "the of and to in that it as for was with his on be at by had not are but "
    "from or have an they which one you were her all she there would their we"
).split()

_PUNCT_STYLES = [".", ".", ".", "!", "?"]


class AuthorProfile:
    def __init__(self, name: str, seed: int):
        rng = SplitMix64(derive_seed(seed, "author", name))
        letters = list(string.ascii_lowercase)
        # heavily skewed, author-specific letter weights make char n-grams
        # genuinely discriminative between authors
        self.letter_weights = [0.01 + rng.uniform() ** 4 for _ in letters]
        self.letters = letters
        idx = rng.sample(len(_FUNCTION_POOL), 8)
        self.function_words = [_FUNCTION_POOL[i] for i in idx]
        self.fw_rate = 0.2 + 0.2 * rng.uniform()
        self.word_len = 3 + rng.randbelow(5)
        self.punct = _PUNCT_STYLES[rng.randbelow(len(_PUNCT_STYLES))]
        self.sentence_len = 6 + rng.randbelow(6)

    def _letter(self, rng: SplitMix64) -> str:
        total = sum(self.letter_weights)
        u = rng.uniform() * total
        acc = 0.0
        for letter, w in zip(self.letters, self.letter_weights):
            acc += w
            if u < acc:
                return letter
        return self.letters[-1]

    def _word(self, rng: SplitMix64) -> str:
        if rng.uniform() < self.fw_rate:
            return self.function_words[rng.randbelow(len(self.function_words))]
        length = max(2, self.word_len + rng.randbelow(3) - 1)
        return "".join(self._letter(rng) for _ in range(length))

    def document_text(self, rng: SplitMix64, n_words: int = 50) -> str:
        words = []
        count = 0
        while count < n_words:
            sent = [self._word(rng) for _ in range(self.sentence_len)]
            sent[0] = sent[0].capitalize()
            words.append(" ".join(sent) + self.punct)
            count += self.sentence_len
        return " ".join(words)


def make_corpus(
    n_machine: int = 2,
    n_human: int = 4,
    docs_per_author: int = 10,
    domains: tuple[str, ...] = ("forum",),
    seed: int = 7,
    words_per_doc: int = 50,
) -> list[Document]:
    """Documents for n_machine model-authors and n_human humans per domain."""
    docs = []
    for domain in domains:
        authors = []
        for m in range(n_machine):
            name = f"model-{domain}-{m}"
            authors.append((name, SourceLabel.machine(name)))
        for h in range(n_human):
            authors.append((f"human-{domain}-{h}", SourceLabel.human()))
        for author, source in authors:
            profile = AuthorProfile(author, seed)
            rng = SplitMix64(derive_seed(seed, "docs", author, domain))
            for d in range(docs_per_author):
                text = profile.document_text(rng, n_words=words_per_doc)
                docs.append(
                    Document(
                        id=f"{author}/{domain}/{d}",
                        text=text,
                        author=author,
                        source=source,
                        domain=domain,
                        timestamp=1_600_000_000 + d * 86_400,
                        token_count=len(text.split()),
                    )
                )
    return docs


@pytest.fixture
def small_corpus() -> list[Document]:
    return make_corpus(n_machine=2, n_human=3, docs_per_author=8, seed=11)
