"""Normalization pipeline: raw annotated inscription records to clean corpus.

Raw interchange format: one record per line, ``id<TAB>raw_text``. Missing
characters may appear pre-expanded as runs of ``-`` or as a length
annotation ``{N}`` (N a positive decimal integer); both normalize to one
``-`` per missing character.

The cleaning stages run in a fixed order so the pipeline is
deterministic and golden-file testable:

1. numeric notations   -> a single ``0`` per maximal numeral run
2. editorial symbols   -> stripped (bracket inventory is configurable)
3. non-Greek comments  -> dropped (Latin-script word runs by default)
4. lacuna annotations  -> ``{N}`` expands to N ``-`` characters
5. lowercase
6. spacing             -> whitespace runs and duplicate punctuation collapse
7. alphabet filter     -> only alphabet characters and ``-`` survive
8. length filter       -> records shorter than 100 characters are discarded

A second application of the pipeline to its own output is the identity.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .vocab import CharAlphabet

SPLITS = ("train", "valid", "test")


@dataclass
class RawRecord:
    id: int
    raw_text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class CleanRecord:
    id: int
    text: str
    split: str


@dataclass
class Discarded:
    id: int
    stage: str
    reason: str


class LacunaError(ValueError):
    """Malformed lacuna annotation: non-positive length or stray brace."""


@dataclass
class PipelineConfig:
    """Knobs for the under-documented cleaning heuristics.

    The editorial-symbol inventory and the comment detector are exposed
    here rather than hard-coded; the defaults cover the common editorial
    bracket conventions and Latin-script annotations.
    """

    editorial_symbols: str = "[]()<>⟨⟩⟦⟧〚〛"
    numeral_classes: str = "0-9ʹ͵"   # digits plus numeral marks
    comment_pattern: str = r"[A-Za-z]+"
    duplicate_punctuation: str = ".,;:·"
    min_length: int = 100


DEFAULT_CONFIG = PipelineConfig()


# --------------------------------------------------------------------------
# individual stages (each deterministic, each idempotent on clean text)
# --------------------------------------------------------------------------


_ANNOTATION = re.compile(r"\{\d+\}")


def replace_numerals(text: str, config: PipelineConfig = DEFAULT_CONFIG) -> tuple[str, int]:
    """Each maximal run of numeral characters becomes a single ``0``.

    Lacuna annotations ``{N}`` are protected: their digits state a gap
    length, not a numeral in the text, and are consumed later.
    """
    pattern = re.compile(f"[{config.numeral_classes}]+")
    parts: list[str] = []
    total = 0
    last = 0
    for match in _ANNOTATION.finditer(text):
        segment, n = pattern.subn("0", text[last : match.start()])
        parts.append(segment)
        parts.append(match.group(0))
        total += n
        last = match.end()
    segment, n = pattern.subn("0", text[last:])
    parts.append(segment)
    return "".join(parts), total + n


def strip_editorial(text: str, config: PipelineConfig = DEFAULT_CONFIG) -> tuple[str, int]:
    """Remove editorial bracket symbols, keeping the characters they wrap."""
    table = set(config.editorial_symbols)
    kept = [ch for ch in text if ch not in table]
    return "".join(kept), len(text) - len(kept)


def drop_comments(text: str, config: PipelineConfig = DEFAULT_CONFIG) -> tuple[str, int]:
    """Drop non-Greek notes (by default: Latin-script word runs)."""
    pattern = re.compile(config.comment_pattern)
    out, n = pattern.subn("", text)
    return out, n


_LACUNA = re.compile(r"\{([^{}]*)\}")


def expand_lacunae(text: str) -> tuple[str, int]:
    """Expand each ``{N}`` to exactly N ``-`` characters.

    Raises LacunaError for a non-positive or non-numeric length and for
    any brace left over after expansion (unclosed or nested annotation).
    """

    def repl(match: re.Match) -> str:
        body = match.group(1)
        if not body.isdigit() or int(body) <= 0:
            raise LacunaError(f"lacuna length must be a positive integer, got {{{body}}}")
        return "-" * int(body)

    out, n = _LACUNA.subn(repl, text)
    if "{" in out or "}" in out:
        raise LacunaError("stray brace: unclosed or nested lacuna annotation")
    return out, n


def collapse_spacing(text: str, config: PipelineConfig = DEFAULT_CONFIG) -> str:
    """Whitespace runs become one space; duplicated punctuation collapses."""
    text = re.sub(r"\s+", " ", text).strip()
    for mark in config.duplicate_punctuation:
        text = re.sub(re.escape(mark) + "{2,}", mark, text)
    return text


def filter_to_alphabet(text: str, alphabet: CharAlphabet) -> tuple[str, int]:
    """Keep only normalized-corpus characters and ``-``."""
    allowed = alphabet.corpus_symbols() | {"-"}
    kept = [ch for ch in text if ch in allowed]
    return "".join(kept), len(text) - len(kept)


# --------------------------------------------------------------------------
# record-level pipeline
# --------------------------------------------------------------------------


def normalize_record(
    raw: RawRecord,
    alphabet: CharAlphabet,
    config: PipelineConfig = DEFAULT_CONFIG,
    counters: Counter | None = None,
) -> CleanRecord | Discarded:
    """All cleaning stages in order; same input always yields the same output."""
    counters = counters if counters is not None else Counter()
    if not raw.raw_text:
        return Discarded(raw.id, "parse", "empty raw text")

    text, n = replace_numerals(raw.raw_text, config)
    counters["numeral_runs_replaced"] += n
    text, n = strip_editorial(text, config)
    counters["editorial_symbols_stripped"] += n
    text, n = drop_comments(text, config)
    counters["comments_removed"] += n
    try:
        text, n = expand_lacunae(text)
    except LacunaError as exc:
        return Discarded(raw.id, "lacuna-expansion", str(exc))
    counters["lacunae_expanded"] += n
    text = text.lower()
    text = collapse_spacing(text, config)
    text, n = filter_to_alphabet(text, alphabet)
    counters["characters_filtered"] += n
    text = collapse_spacing(text, config)  # filtering can re-expose doubled spaces

    if len(text) < config.min_length:
        return Discarded(raw.id, "length-filter", f"{len(text)} < {config.min_length} characters")
    return CleanRecord(raw.id, text, assign_split(raw.id))


def assign_split(record_id: int) -> str:
    """Held-out assignment by the identifier's last decimal digit: 3 is test, 4 is valid."""
    last = record_id % 10
    if last == 3:
        return "test"
    if last == 4:
        return "valid"
    return "train"


# --------------------------------------------------------------------------
# corpus-level build
# --------------------------------------------------------------------------


@dataclass
class SplitStats:
    inscriptions: int = 0
    words: int = 0
    chars: int = 0


@dataclass
class CorpusManifest:
    """Per-split inscription/word/character counts plus the alphabet hash."""

    splits: dict[str, SplitStats]
    alphabet_sha256: str

    def to_dict(self) -> dict:
        return {
            "splits": {name: vars(stats) for name, stats in self.splits.items()},
            "alphabet_sha256": self.alphabet_sha256,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        return cls(
            splits={name: SplitStats(**stats) for name, stats in d["splits"].items()},
            alphabet_sha256=d["alphabet_sha256"],
        )


@dataclass
class NormalizationReport:
    records_in: int = 0
    records_kept: int = 0
    discarded_by_stage: Counter = field(default_factory=Counter)
    stage_counters: Counter = field(default_factory=Counter)

    @property
    def records_discarded(self) -> int:
        return sum(self.discarded_by_stage.values())

    def to_dict(self) -> dict:
        return {
            "records_in": self.records_in,
            "records_kept": self.records_kept,
            "records_discarded": self.records_discarded,
            "discarded_by_stage": dict(self.discarded_by_stage),
            "stage_counters": dict(self.stage_counters),
        }


def count_words(text: str) -> int:
    return len([w for w in text.split(" ") if w])


def count_chars(text: str) -> int:
    """Non-space characters, counting ``-`` (a missing character is a character)."""
    return len(text) - text.count(" ")


def iter_raw_dir(raw_dir: Path) -> Iterator[RawRecord]:
    """Parse every interchange file under raw_dir, sorted by file name.

    Lines that fail to decode or parse surface as records with id -1 and
    empty text so the caller can count them as discarded.
    """
    raw_dir = Path(raw_dir)
    for path in sorted(p for p in raw_dir.iterdir() if p.is_file()):
        try:
            payload = path.read_bytes()
        except OSError as exc:
            raise OSError(f"unreadable input file {path}: {exc}") from exc
        for lineno, line in enumerate(payload.split(b"\n"), start=1):
            if not line.strip():
                continue
            try:
                decoded = line.decode("utf-8")
            except UnicodeDecodeError:
                yield RawRecord(-1, "", {"error": f"{path.name}:{lineno}: invalid encoding"})
                continue
            rid, _, text = decoded.partition("\t")
            if not _ or not rid.strip().isdigit():
                yield RawRecord(-1, "", {"error": f"{path.name}:{lineno}: malformed line"})
                continue
            yield RawRecord(int(rid), text)


def build_corpus(
    raw_dir: Path,
    out_dir: Path,
    alphabet: CharAlphabet,
    config: PipelineConfig = DEFAULT_CONFIG,
) -> tuple[CorpusManifest, NormalizationReport]:
    """Normalize a raw directory into split files, a manifest, and a report.

    Emission is deterministic: records are sorted by id within each split.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = NormalizationReport()
    kept: dict[str, list[CleanRecord]] = {name: [] for name in SPLITS}
    seen_ids: set[int] = set()

    for raw in iter_raw_dir(Path(raw_dir)):
        report.records_in += 1
        if "error" in raw.metadata:
            report.discarded_by_stage["parse"] += 1
            continue
        if raw.id in seen_ids:
            raise ValueError(f"duplicate record id {raw.id} in raw corpus")
        seen_ids.add(raw.id)
        result = normalize_record(raw, alphabet, config, report.stage_counters)
        if isinstance(result, Discarded):
            report.discarded_by_stage[result.stage] += 1
            continue
        report.records_kept += 1
        kept[result.split].append(result)

    splits: dict[str, SplitStats] = {}
    for name in SPLITS:
        records = sorted(kept[name], key=lambda r: r.id)
        write_split(out_dir / f"{name}.jsonl", records)
        splits[name] = SplitStats(
            inscriptions=len(records),
            words=sum(count_words(r.text) for r in records),
            chars=sum(count_chars(r.text) for r in records),
        )

    manifest = CorpusManifest(splits=splits, alphabet_sha256=alphabet.fingerprint())
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return manifest, report


def write_split(path: Path, records: Iterable[CleanRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({"id": record.id, "text": record.text}, ensure_ascii=False) + "\n")


def read_split(path: Path, split: str | None = None) -> list[CleanRecord]:
    path = Path(path)
    name = split or path.stem
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(CleanRecord(obj["id"], obj["text"], name))
    return records


def load_corpus(out_dir: Path) -> dict[str, list[CleanRecord]]:
    out_dir = Path(out_dir)
    return {name: read_split(out_dir / f"{name}.jsonl", name) for name in SPLITS}


def derive_alphabet(raw_dir: Path, min_count: int = 1, config: PipelineConfig = DEFAULT_CONFIG) -> CharAlphabet:
    """Bootstrap an alphabet from raw files: run the pre-filter stages, count.

    The alphabet filter itself needs an alphabet, so this first pass
    applies stages 1-6 only and keeps every character that clears the
    frequency threshold.
    """
    from .vocab import build_char_alphabet

    texts = []
    for raw in iter_raw_dir(Path(raw_dir)):
        if "error" in raw.metadata:
            continue
        text, _ = replace_numerals(raw.raw_text, config)
        text, _ = strip_editorial(text, config)
        text, _ = drop_comments(text, config)
        try:
            text, _ = expand_lacunae(text)
        except LacunaError:
            continue
        texts.append(collapse_spacing(text.lower(), config).replace("-", ""))
    return build_char_alphabet(texts, min_count=min_count)
