"""Character alphabet, capped word vocabulary, and text encoding.

The alphabet is corpus-derived: reserved symbols come first in a fixed
order, then corpus characters sorted by frequency (descending) with
codepoint as the tie-break. Words are whitespace-delimited; damaged
words (containing the missing-character mark) never enter the
vocabulary and encode to the unknown-word index.
"""

from __future__ import annotations

import hashlib
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

MISSING = "-"      # a character lost to damage
PREDICT = "?"      # a character the model must predict
NUMERAL = "0"      # placeholder for numeric notation
SPACE = " "
START = "␂"   # start-of-output marker (never appears in corpus text)
PAD = "␀"     # batch padding (never appears in corpus text)

RESERVED = (PAD, START, PREDICT, MISSING, SPACE, NUMERAL)

UNK_WORD = "<unk>"
NO_WORD = "<now>"


class CharAlphabet:
    """Bijective index <-> symbol map with reserved control symbols."""

    def __init__(self, corpus_symbols: Iterable[str]):
        symbols = list(RESERVED)
        seen = set(symbols)
        for sym in corpus_symbols:
            if len(sym) != 1:
                raise ValueError(f"alphabet symbols must be single characters, got {sym!r}")
            if sym not in seen:
                seen.add(sym)
                symbols.append(sym)
        self.symbols: list[str] = symbols
        self.index: dict[str, int] = {s: i for i, s in enumerate(symbols)}
        self.pad_id = self.index[PAD]
        self.start_id = self.index[START]
        self.predict_id = self.index[PREDICT]
        self.missing_id = self.index[MISSING]
        self.space_id = self.index[SPACE]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, sym: str) -> bool:
        return sym in self.index

    def corpus_symbols(self) -> set[str]:
        """Symbols that may appear in normalized corpus text (no control marks)."""
        return set(self.symbols) - {PAD, START, PREDICT}

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.symbols[i] for i in ids)

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, sym in enumerate(self.symbols):
                fh.write(f"{i}\t{sym}\tU+{ord(sym):04X}\n")

    @classmethod
    def load(cls, path) -> "CharAlphabet":
        symbols = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, sym, _cp = line.split("\t")
                if int(idx) != len(symbols):
                    raise ValueError(f"alphabet file out of order at index {idx}")
                symbols.append(sym)
        if list(symbols[: len(RESERVED)]) != list(RESERVED):
            raise ValueError("alphabet file missing the reserved symbol prefix")
        return cls(symbols[len(RESERVED):])


def build_char_alphabet(texts: Iterable[str], min_count: int = 1) -> CharAlphabet:
    """Alphabet over every character with frequency >= min_count, plus reserved.

    Order is deterministic: frequency descending, codepoint ascending on ties.
    """
    counts: Counter[str] = Counter()
    n = 0
    for text in texts:
        n += 1
        counts.update(text)
    if n == 0:
        raise ValueError("cannot build an alphabet from an empty corpus")
    kept = [(c, k) for c, k in counts.items() if k >= min_count and c not in RESERVED]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return CharAlphabet(c for c, _ in kept)


class WordVocab:
    """Frequency-capped word -> index map with unknown and non-word entries."""

    def __init__(self, words_with_counts: list[tuple[str, int]]):
        for w, _ in words_with_counts:
            if MISSING in w or PREDICT in w or SPACE in w:
                raise ValueError(f"vocabulary word may not contain '-', '?', or spaces: {w!r}")
        self.words = [UNK_WORD, NO_WORD] + [w for w, _ in words_with_counts]
        self.counts = [0, 0] + [c for _, c in words_with_counts]
        self.index = {w: i for i, w in enumerate(self.words)}
        self.unk_id = 0
        self.no_word_id = 1

    def __len__(self) -> int:
        return len(self.words)

    def lookup(self, word: str) -> int:
        if MISSING in word or PREDICT in word:
            return self.unk_id
        return self.index.get(word, self.unk_id)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, (w, c) in enumerate(zip(self.words, self.counts)):
                fh.write(f"{i}\t{w}\t{c}\n")

    @classmethod
    def load(cls, path) -> "WordVocab":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                _idx, word, count = line.split("\t")
                entries.append((word, int(count)))
        if [w for w, _ in entries[:2]] != [UNK_WORD, NO_WORD]:
            raise ValueError("vocab file missing the reserved entry prefix")
        return cls(entries[2:])


def build_word_vocab(texts: Iterable[str], cap: int = 100_000) -> WordVocab:
    """Top-cap words by frequency; ties broken lexicographically.

    Words containing the missing-character mark are damaged fragments,
    not words, and are excluded from counting.
    """
    counts: Counter[str] = Counter()
    for text in texts:
        for word in text.split(SPACE):
            if word and MISSING not in word and PREDICT not in word:
                counts[word] += 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return WordVocab(ranked[:cap])


@dataclass
class EncodedSequence:
    """Aligned per-character index streams for one text."""

    char_ids: np.ndarray       # (T,) int64
    word_ids: np.ndarray       # (T,) int64, constant across each word span
    predict_mask: np.ndarray   # (T,) bool, true exactly at '?'
    text: str

    def __len__(self) -> int:
        return len(self.char_ids)

    @property
    def num_predict(self) -> int:
        return int(self.predict_mask.sum())


def encode(text: str, alphabet: CharAlphabet, vocab: WordVocab | None = None) -> EncodedSequence:
    """Aligned char/word index streams for a normalized text.

    Every character of a whitespace-delimited word shares that word's
    vocabulary index; words that are damaged, under prediction, or out
    of vocabulary map to the unknown-word index, and space characters
    map to the dedicated non-word index.
    """
    char_ids = np.empty(len(text), dtype=np.int64)
    for i, ch in enumerate(text):
        idx = alphabet.index.get(ch)
        if idx is None:
            raise ValueError(f"character {ch!r} at position {i} is not in the alphabet")
        char_ids[i] = idx

    word_ids = np.empty(len(text), dtype=np.int64)
    pos = 0
    for chunk in _word_spans(text):
        if chunk == SPACE:
            word_ids[pos] = vocab.no_word_id if vocab is not None else 0
            pos += 1
        else:
            wid = vocab.lookup(chunk) if vocab is not None else 0
            word_ids[pos : pos + len(chunk)] = wid
            pos += len(chunk)

    predict_mask = char_ids == alphabet.predict_id
    return EncodedSequence(char_ids, word_ids, predict_mask, text)


def _word_spans(text: str):
    """Maximal non-space spans and individual spaces, in order."""
    start = 0
    for i, ch in enumerate(text):
        if ch == SPACE:
            if start < i:
                yield text[start:i]
            yield SPACE
            start = i + 1
    if start < len(text):
        yield text[start:]


def strip_diacritics(text: str) -> str:
    """Remove combining marks: decompose, drop marks, recompose base letters."""
    decomposed = unicodedata.normalize("NFD", text)
    bare = "".join(ch for ch in decomposed if unicodedata.category(ch) != "Mn")
    return unicodedata.normalize("NFC", bare)
