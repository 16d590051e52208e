"""Alphabet, word vocabulary, encoding, and diacritics tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lacuna.vocab import (
    MISSING,
    NO_WORD,
    PAD,
    PREDICT,
    RESERVED,
    START,
    UNK_WORD,
    CharAlphabet,
    WordVocab,
    build_char_alphabet,
    build_word_vocab,
    encode,
    strip_diacritics,
)

GREEK = "αβγδεζηθικλμνξοπρστυφχψω"


class TestCharAlphabet:
    def test_reserved_plus_corpus_symbols(self):
        alpha = build_char_alphabet(["αββ"])
        assert alpha.symbols[: len(RESERVED)] == list(RESERVED)
        assert set(alpha.symbols[len(RESERVED):]) == {"α", "β"}

    def test_frequency_then_codepoint_order(self):
        alpha = build_char_alphabet(["ββα"])
        assert alpha.symbols[len(RESERVED):] == ["β", "α"]
        # equal frequencies fall back to codepoint order
        alpha = build_char_alphabet(["βα"])
        assert alpha.symbols[len(RESERVED):] == ["α", "β"]

    def test_min_count_filters(self):
        alpha = build_char_alphabet(["ααβ"], min_count=2)
        assert "α" in alpha and "β" not in alpha

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_char_alphabet([])

    def test_index_symbol_bijection(self):
        alpha = build_char_alphabet([GREEK])
        for i, sym in enumerate(alpha.symbols):
            assert alpha.index[sym] == i
        assert len(set(alpha.symbols)) == len(alpha.symbols)

    def test_reserved_not_duplicated_when_in_corpus(self):
        alpha = build_char_alphabet(["α- β0?"])
        assert alpha.symbols.count(MISSING) == 1
        assert alpha.symbols.count(" ") == 1
        assert alpha.symbols.count("0") == 1

    def test_save_load_roundtrip(self, tmp_path):
        alpha = build_char_alphabet(["ββα γ"])
        path = tmp_path / "alphabet.tsv"
        alpha.save(path)
        again = CharAlphabet.load(path)
        assert again.symbols == alpha.symbols
        assert again.fingerprint() == alpha.fingerprint()

    def test_fingerprint_tracks_order(self):
        a = CharAlphabet(["α", "β"])
        b = CharAlphabet(["β", "α"])
        assert a.fingerprint() != b.fingerprint()


class TestWordVocab:
    def test_frequency_ranks_first(self):
        vocab = build_word_vocab(["α β β"])
        assert vocab.words[2:] == ["β", "α"]

    def test_cap_keeps_most_frequent(self):
        vocab = build_word_vocab(["α β β"], cap=1)
        assert vocab.words == [UNK_WORD, NO_WORD, "β"]
        assert vocab.lookup("α") == vocab.unk_id

    def test_damaged_word_never_enters(self):
        vocab = build_word_vocab(["ἄ--ν ἄ--ν ἄ--ν καλος"])
        assert all(MISSING not in w for w in vocab.words)
        assert vocab.lookup("ἄ--ν") == vocab.unk_id

    def test_tie_broken_lexicographically(self):
        vocab = build_word_vocab(["β α"])
        assert vocab.words[2:] == ["α", "β"]

    def test_cap_bound_holds(self):
        texts = [" ".join(f"w{i}" for i in range(500))]
        vocab = build_word_vocab(texts, cap=100)
        assert len(vocab) <= 100 + 2

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_word_vocab(["α β β γγ"])
        path = tmp_path / "vocab.tsv"
        vocab.save(path)
        again = WordVocab.load(path)
        assert again.words == vocab.words
        assert again.counts == vocab.counts


class TestEncode:
    @pytest.fixture
    def codec(self):
        corpus = ["μηδεν αγαν ετι αγαν"]
        alpha = build_char_alphabet(corpus + ["ἄν?"])
        vocab = build_word_vocab(corpus + ["ἄν"])
        return alpha, vocab

    def test_damaged_word_spans_map_to_unk(self, codec):
        alpha, vocab = codec
        seq = encode("μηδεν ἄ??ν", alpha, vocab)
        span = slice(6, 10)
        assert (seq.word_ids[span] == vocab.unk_id).all()
        assert seq.predict_mask[7] and seq.predict_mask[8]

    def test_no_predict_marks_means_empty_mask(self, codec):
        alpha, vocab = codec
        seq = encode("μηδεν αγαν", alpha, vocab)
        assert not seq.predict_mask.any()

    def test_single_space_is_no_word(self, codec):
        alpha, vocab = codec
        seq = encode(" ", alpha, vocab)
        assert list(seq.word_ids) == [vocab.no_word_id]

    def test_streams_aligned(self, codec):
        alpha, vocab = codec
        seq = encode("μηδεν αγαν ἄ??ν", alpha, vocab)
        assert len(seq.char_ids) == len(seq.word_ids) == len(seq.predict_mask) == len(seq.text)

    def test_word_ids_constant_within_spans(self, codec):
        alpha, vocab = codec
        text = "μηδεν αγαν ετι"
        seq = encode(text, alpha, vocab)
        pos = 0
        for word in text.split(" "):
            ids = set(seq.word_ids[pos : pos + len(word)])
            assert len(ids) == 1
            pos += len(word) + 1

    def test_known_word_gets_own_index(self, codec):
        alpha, vocab = codec
        seq = encode("αγαν", alpha, vocab)
        assert (seq.word_ids == vocab.index["αγαν"]).all()
        assert vocab.index["αγαν"] not in (vocab.unk_id, vocab.no_word_id)

    def test_out_of_alphabet_names_character_and_position(self, codec):
        alpha, vocab = codec
        with pytest.raises(ValueError, match=r"'Z' at position 2"):
            encode("μηZ", alpha, vocab)

    def test_decode_roundtrip(self, codec):
        alpha, vocab = codec
        text = "μηδεν αγαν ἄ??ν --ετι"
        seq = encode(text, alpha, vocab)
        assert alpha.decode(seq.char_ids) == text


class TestStripDiacritics:
    def test_known_forms(self):
        # expected strings frozen from the canonical decomposition tables
        assert strip_diacritics("ἄγαν") == "αγαν"
        assert strip_diacritics("μηδέν") == "μηδεν"
        assert strip_diacritics("ἀπολλοδώρου") == "απολλοδωρου"

    def test_unaccented_text_unchanged(self):
        assert strip_diacritics("αγαν") == "αγαν"

    def test_idempotent(self):
        for text in ["ἄγαν", "μηδέν ἄγαν", "καὶ τῷ δήμῳ"]:
            once = strip_diacritics(text)
            assert strip_diacritics(once) == once

    @given(st.text(alphabet="αβγἄέῳῆὶϊΐ ἀ-?" + GREEK, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_base_letter_count_preserved(self, text):
        import unicodedata

        def base_len(s):
            return sum(
                1 for ch in unicodedata.normalize("NFD", s) if unicodedata.category(ch) != "Mn"
            )

        stripped = strip_diacritics(text)
        assert base_len(stripped) == base_len(text)
        assert strip_diacritics(stripped) == stripped
