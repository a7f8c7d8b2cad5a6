"""Corpus loading, the synthetic-language generator, and the analytics."""

import pytest

from vocabex.analytics import (
    fragmentation,
    run_k_sweep,
    speedup_proxy,
    sweep_to_text,
    target_token_ratio,
)
from vocabex.bpe import BpeTokenizer
from vocabex.corpus import load_corpus, synthetic_agglutinative_corpus
from vocabex.errors import FormatError
from vocabex.expansion import VocabularyExpander


def byte_tokens():
    return [bytes([b]) for b in range(256)]


def make_tokenizer(merges):
    tokens = byte_tokens() + [l + r for l, r in merges]
    return BpeTokenizer.from_vocab_and_merges(tokens, merges)


class TestLoadCorpus:
    def test_reads_lines(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("one\ntwo\nthree\n", encoding="utf-8")
        corpus = load_corpus(path)
        assert corpus.sentences == ["one", "two", "three"]
        assert corpus.path == str(path)

    def test_sample_is_deterministic_and_order_preserving(self, tmp_path):
        path = tmp_path / "c.txt"
        lines = [f"sentence {i}" for i in range(100)]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        a = load_corpus(path, sample_size=10, seed=4)
        b = load_corpus(path, sample_size=10, seed=4)
        c = load_corpus(path, sample_size=10, seed=5)
        assert a.sentences == b.sentences
        assert a.sentences != c.sentences
        indices = [lines.index(s) for s in a.sentences]
        assert indices == sorted(indices)

    def test_sample_size_at_or_above_length_keeps_all(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("a\nb\n", encoding="utf-8")
        assert load_corpus(path, sample_size=2).sentences == ["a", "b"]
        assert load_corpus(path, sample_size=99).sentences == ["a", "b"]

    def test_invalid_utf8_reports_line_number(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_bytes(b"fine\n\xff\xfe broken\nfine\n")
        with pytest.raises(FormatError, match="line 2"):
            load_corpus(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read"):
            load_corpus(tmp_path / "nope.txt")

    def test_negative_sample_size(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("a\n", encoding="utf-8")
        with pytest.raises(ValueError):
            load_corpus(path, sample_size=-1)


class TestSyntheticCorpus:
    def test_deterministic_per_seed(self):
        a = synthetic_agglutinative_corpus(50, seed=3)
        b = synthetic_agglutinative_corpus(50, seed=3)
        c = synthetic_agglutinative_corpus(50, seed=4)
        assert a.sentences == b.sentences
        assert a.sentences != c.sentences

    def test_shape_and_alphabet(self):
        corpus = synthetic_agglutinative_corpus(30, seed=0)
        assert len(corpus) == 30
        for sentence in corpus:
            words = sentence.split(" ")
            assert 3 <= len(words) <= 8
            assert all(not ch.isascii() for word in words for ch in word)

    def test_morphemes_recur(self):
        corpus = synthetic_agglutinative_corpus(200, seed=1)
        words = [w for s in corpus for w in s.split()]
        stems = {w[:3] for w in words}  # every stem is >= 3 letters
        # few distinct stems shared across many words -> heavy morpheme reuse
        assert len(stems) <= 40
        assert len(words) / len(stems) > 10


class TestFragmentation:
    def test_self_baseline_is_one(self):
        tok = make_tokenizer([(b"a", b"b")])
        report = fragmentation(["abab"], {"only": tok}, "only")
        assert report.per_tokenizer["only"].relative_to_baseline == 1.0

    def test_two_tokenizer_ratio(self):
        merged = make_tokenizer([(b"a", b"b")])
        plain = make_tokenizer([])
        report = fragmentation(["ab"], {"A": merged, "B": plain}, "A")
        assert report.per_tokenizer["A"].avg_tokens_per_sentence == 1.0
        assert report.per_tokenizer["B"].avg_tokens_per_sentence == 2.0
        assert report.per_tokenizer["B"].relative_to_baseline == 2.0

    def test_missing_baseline(self):
        with pytest.raises(ValueError, match="baseline"):
            fragmentation(["x"], {"A": make_tokenizer([])}, "Z")

    def test_empty_corpus(self):
        with pytest.raises(ValueError, match="non-empty"):
            fragmentation([], {"A": make_tokenizer([])}, "A")

    def test_text_rendering(self):
        report = fragmentation(["ab", "cd"], {"base": make_tokenizer([])}, "base")
        text = report.to_text()
        assert "base" in text and "avg tokens/sentence" in text

    def test_json_dict(self):
        report = fragmentation(["ab"], {"base": make_tokenizer([])}, "base")
        d = report.to_json_dict()
        assert d["format_version"] == 1
        assert d["per_tokenizer"]["base"]["total_tokens"] == 2


class TestTargetTokenRatio:
    def test_zero_when_no_new_tokens(self):
        tok = make_tokenizer([(b"a", b"b")])
        assert target_token_ratio(["abab"], tok, []) == 0.0

    def test_one_when_everything_is_new(self):
        tok = make_tokenizer([(b"a", b"b")])
        assert target_token_ratio(["abab"], tok, [tok.vocab_.id_of(b"ab")]) == 1.0

    def test_mixed_matches_recount(self):
        tok = make_tokenizer([(b"a", b"b")])
        new = {tok.vocab_.id_of(b"ab")}
        corpus = ["abc ab", "xyzab"]
        ids = [i for s in corpus for i in tok.encode(s).ids]
        want = sum(i in new for i in ids) / len(ids)
        assert target_token_ratio(corpus, tok, new) == want

    def test_errors(self):
        tok = make_tokenizer([])
        with pytest.raises(ValueError, match="non-empty"):
            target_token_ratio([], tok, [])
        with pytest.raises(ValueError, match="not in target"):
            target_token_ratio(["x"], tok, [999999])


class TestSpeedupProxy:
    def test_identity_expansion_ratio_one(self):
        tok = make_tokenizer([(b"a", b"b")])
        report = speedup_proxy(["abab abab"], tok, tok)
        assert report.token_ratio == 1.0
        assert report.target_token_ratio_input == 0.0  # id spaces match, nothing added

    def test_expansion_never_slower(self):
        source = BpeTokenizer(vocab_size=270).fit(["plain english text"] * 3)
        aux = BpeTokenizer(vocab_size=280).fit(["κουκου λοκο"] * 5)
        expander = VocabularyExpander(source, aux, k=8).fit(["κουκου λοκο κουκου"])
        report = speedup_proxy(["κουκου λοκο", "plain text"], source, expander.target_tokenizer_)
        assert report.token_ratio >= 1.0
        assert 0.0 <= report.target_token_ratio_input <= 1.0

    def test_unrelated_vocabularies_give_no_new_token_ratio(self):
        a = make_tokenizer([(b"a", b"b")])
        b = make_tokenizer([(b"c", b"d")])
        report = speedup_proxy(["abcd"], a, b)
        assert report.target_token_ratio_input is None

    def test_output_corpus_ratio(self):
        source = make_tokenizer([])
        tokens = byte_tokens() + [b"ab"]
        target = BpeTokenizer.from_vocab_and_merges(tokens, [(b"a", b"b")])
        report = speedup_proxy(["xy"], source, target, output_corpus=["ab ab"])
        assert report.target_token_ratio_output == pytest.approx(2 / 3)

    def test_proxy_label_in_json(self):
        tok = make_tokenizer([])
        assert "proxy" in speedup_proxy(["x"], tok, tok).to_json_dict()["note"]


class TestKSweep:
    def test_ratio_non_decreasing_in_k(self):
        corpus = synthetic_agglutinative_corpus(150, seed=2).sentences
        source = BpeTokenizer(vocab_size=300).fit(["the plain source language text"] * 4)
        aux = BpeTokenizer(vocab_size=320).fit(corpus)
        records = run_k_sweep(source, aux, corpus, k_values=(2, 4, 8, 16, 32))
        ratios = [r["token_ratio"] for r in records]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))
        assert all(r["unreachable_count"] == 0 for r in records)
        assert records[0]["source_tokens"] == records[-1]["source_tokens"]

    def test_sweep_text_rendering(self):
        corpus = synthetic_agglutinative_corpus(40, seed=5).sentences
        source = BpeTokenizer(vocab_size=280).fit(["abc def"] * 2)
        aux = BpeTokenizer(vocab_size=290).fit(corpus)
        records = run_k_sweep(source, aux, corpus, k_values=(1, 2))
        text = sweep_to_text(records)
        assert "token ratio" in text and text.count("\n") >= 3

    def test_negative_k_rejected(self):
        tok = make_tokenizer([])
        with pytest.raises(ValueError, match=">= 0"):
            run_k_sweep(tok, tok, ["x"], k_values=(-1,))
