"""Word and BPE tokenizers."""

import json

import pytest

from styledetect.errors import CorpusError
from styledetect.tokenize import BpeTokenizer, TokenizerSpec, WordTokenizer, build_tokenizer


class TestWordTokenizer:
    def setup_method(self):
        self.tok = WordTokenizer()

    def test_attached_punctuation(self):
        assert self.tok.tokenize("One two three.") == ["One", "two", "three."]

    def test_multiple_spaces_and_newlines(self):
        assert self.tok.tokenize("a  b\nc\t d ") == ["a", "b", "c", "d"]

    def test_empty(self):
        assert self.tok.tokenize("") == []
        assert self.tok.count("   ") == 0

    def test_spans_slice_back(self):
        text = "héllo,  wörld!"
        spans = self.tok.token_spans(text)
        assert [text[a:b] for a, b in spans] == ["héllo,", "wörld!"]


@pytest.fixture
def bpe_files(tmp_path):
    vocab = {tok: i for i, tok in enumerate(["a", "b", "c", "ab", "abc", "lo", "hel", "hello"])}
    merges = ["#version: test", "a b", "ab c", "l o", "h e"]
    vp = tmp_path / "vocab.json"
    mp = tmp_path / "merges.txt"
    vp.write_text(json.dumps(vocab))
    mp.write_text("\n".join(merges) + "\n")
    return str(vp), str(mp)


class TestBpeTokenizer:
    def test_requires_both_files(self):
        with pytest.raises(CorpusError):
            TokenizerSpec(mode="bpe", vocab_path="x.json")

    def test_merges_apply_in_rank_order(self, bpe_files):
        tok = BpeTokenizer(*bpe_files)
        # a+b merges first (rank 0), then ab+c (rank 1)
        assert tok.tokenize("abc") == ["abc"]
        assert tok.tokenize("abcabc") == ["abc", "abc"]

    def test_unmergeable_symbols_stay(self, bpe_files):
        tok = BpeTokenizer(*bpe_files)
        assert tok.tokenize("xyz") == ["x", "y", "z"]

    def test_word_boundaries_respected(self, bpe_files):
        tok = BpeTokenizer(*bpe_files)
        assert tok.tokenize("ab c") == ["ab", "c"]

    def test_deterministic(self, bpe_files):
        spec = TokenizerSpec(mode="bpe", vocab_path=bpe_files[0], merges_path=bpe_files[1])
        t1 = build_tokenizer(spec)
        t2 = build_tokenizer(spec)
        text = "abc ablo hello xyzc"
        assert t1.tokenize(text) == t2.tokenize(text)

    def test_spans_cover_words(self, bpe_files):
        tok = BpeTokenizer(*bpe_files)
        text = " abca  hello "
        spans = tok.token_spans(text)
        assert "".join(text[a:b] for a, b in spans) == "abcahello"

    def test_bad_vocab_errors(self, tmp_path, bpe_files):
        bad = tmp_path / "bad.json"
        bad.write_text("[1,2]")
        with pytest.raises(CorpusError) as err:
            BpeTokenizer(str(bad), bpe_files[1])
        assert err.value.code == "bpe-vocab-unreadable"
