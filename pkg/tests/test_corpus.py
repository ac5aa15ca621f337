from __future__ import annotations

import random

import pytest

from ambigeval.corpus import (
    AlignmentLink,
    AlignmentParseError,
    CorpusError,
    corpus_summary,
    load_corpus,
    parse_alignment_line,
    tokenize,
)
from conftest import write_corpus


class TestTokenize:
    def test_space_language_splits_punctuation(self):
        assert tokenize("He washed his hands in a basin.", "en") == [
            "He", "washed", "his", "hands", "in", "a", "basin", ".",
        ]

    def test_cjk_per_character(self):
        assert tokenize("他在盆里洗了手。", "zh") == [
            "他", "在", "盆", "里", "洗", "了", "手", "。",
        ]

    def test_cjk_keeps_ascii_runs(self):
        assert tokenize("power12 系统", "zh") == ["power12", "系", "统"]

    def test_empty_text(self):
        assert tokenize("", "en") == []
        assert tokenize("   ", "zh") == []

    def test_unknown_language(self):
        with pytest.raises(CorpusError, match="unknown language code"):
            tokenize("hello", "xx")

    def test_quotes_and_leading_punct(self):
        assert tokenize('"Hello," she said.', "en") == [
            '"', "Hello", ",", '"', "she", "said", ".",
        ]

    def test_no_empty_tokens_and_chars_preserved(self):
        rng = random.Random(7)
        alphabet = "abc XY12 。，中文不 .!?\"'()"
        for _ in range(200):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            for lang in ("en", "zh"):
                tokens = tokenize(text, lang)
                assert all(tokens), (text, lang)
                assert "".join(tokens) == "".join(text.split()), (text, lang)


class TestParseAlignmentLine:
    def test_basic(self):
        assert parse_alignment_line("0-0 1-2") == [
            AlignmentLink(0, 0), AlignmentLink(1, 2),
        ]

    def test_empty_line_is_unaligned(self):
        assert parse_alignment_line("") == []

    def test_malformed_token_position(self):
        with pytest.raises(AlignmentParseError) as exc_info:
            parse_alignment_line("3-x")
        assert exc_info.value.token_index == 1
        assert exc_info.value.column == 1

    def test_malformed_later_token(self):
        with pytest.raises(AlignmentParseError) as exc_info:
            parse_alignment_line("0-0 12 1-1")
        assert exc_info.value.token_index == 2
        assert exc_info.value.column == 5

    def test_duplicates_preserved(self):
        assert parse_alignment_line("0-0 0-0") == [
            AlignmentLink(0, 0), AlignmentLink(0, 0),
        ]


class TestLoadCorpus:
    def test_single_domain(self, tmp_path):
        manifest = write_corpus(
            tmp_path,
            {
                "news": {
                    "train": [
                        ("A cat.", "一只猫。", "1-1"),
                        ("A dog.", "一只狗。", "1-1"),
                        ("A bird.", "一只鸟。", "1-1"),
                    ],
                    "test": [("A fish.", "一条鱼。")],
                }
            },
        )
        corpus = load_corpus(manifest)
        assert len(corpus.pairs) == 4
        assert len(corpus.train_pairs("news")) == 3
        assert corpus.pairs[0].source_tokens == ("A", "cat", ".")

    def test_line_count_mismatch_names_files_and_line(self, tmp_path):
        manifest = write_corpus(
            tmp_path,
            {"news": {"train": [("a b.", "甲。", "0-0")], "test": [("x.", "乙。")]}},
        )
        src = tmp_path / "news" / "test.src"
        src.write_text("".join(f"line {i}.\n" for i in range(10)), encoding="utf-8")
        tgt = tmp_path / "news" / "test.tgt"
        tgt.write_text("".join(f"行{i}。\n" for i in range(9)), encoding="utf-8")
        with pytest.raises(CorpusError) as exc_info:
            load_corpus(manifest)
        message = str(exc_info.value)
        assert "test.src" in message and "test.tgt" in message
        assert "line 10" in message

    def test_missing_file(self, tmp_path):
        manifest = write_corpus(
            tmp_path, {"news": {"train": [("a.", "甲。", "")], "test": [("b.", "乙。")]}}
        )
        (tmp_path / "news" / "train.align").unlink()
        with pytest.raises(CorpusError, match="missing file"):
            load_corpus(manifest)

    def test_unknown_language_code(self, tmp_path):
        manifest = write_corpus(
            tmp_path,
            {"news": {"train": [("a.", "b.", "")], "test": [("c.", "d.")]}},
            language_pair=("en", "tlh"),
        )
        with pytest.raises(CorpusError, match="unknown language code"):
            load_corpus(manifest)

    def test_out_of_bounds_alignment_is_load_error(self, tmp_path):
        manifest = write_corpus(
            tmp_path,
            {"news": {"train": [("a b.", "甲。", "0-5")], "test": [("c.", "乙。")]}},
        )
        with pytest.raises(CorpusError, match="out of bounds"):
            load_corpus(manifest)

    def test_alignment_links_in_bounds(self, tiny_manifest):
        corpus = load_corpus(tiny_manifest)
        for pair in corpus.pairs:
            if pair.split != "train":
                continue
            for link in corpus.alignment_for(pair):
                assert 0 <= link.src_index < len(pair.source_tokens)
                assert 0 <= link.tgt_index < len(pair.target_tokens)

    def test_deterministic(self, tiny_manifest):
        assert load_corpus(tiny_manifest) == load_corpus(tiny_manifest)

    def test_um_corpus_layout_test_sizes(self, tmp_path):
        # Five domains with the published test-set sizes.
        sizes = {
            "education": 790,
            "laws": 456,
            "news": 1500,
            "science": 503,
            "spoken": 455,
        }
        domains = {}
        for domain, size in sizes.items():
            domains[domain] = {
                "train": [(f"src {i}.", f"译{i}。", "0-0") for i in range(3)],
                "test": [(f"sentence {i}.", f"句{i}。") for i in range(size)],
            }
        corpus = load_corpus(write_corpus(tmp_path, domains))
        summary = {d: test for d, _, test in corpus_summary(corpus)}
        assert summary == sizes

    def test_duplicate_domain_id(self, tmp_path):
        manifest = write_corpus(
            tmp_path, {"news": {"train": [("a.", "甲。", "")], "test": [("b.", "乙。")]}}
        )
        raw = manifest.read_text(encoding="utf-8")
        import json

        data = json.loads(raw)
        data["domains"].append(data["domains"][0])
        manifest.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(CorpusError, match="duplicate domain id"):
            load_corpus(manifest)

    def test_nfc_normalization(self, tmp_path):
        # e + combining acute composes to the same lexicon key as é
        decomposed = "café."
        manifest = write_corpus(
            tmp_path,
            {"news": {"train": [(decomposed, "甲。", "0-0")], "test": [("b.", "乙。")]}},
        )
        corpus = load_corpus(manifest)
        assert corpus.train_pairs("news")[0].source_tokens[0] == "café"
