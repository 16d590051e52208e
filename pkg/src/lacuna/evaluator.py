"""Metrics and evaluation protocol: CER, Top-k, context sweeps, full-text restoration.

Evaluation gaps are sampled with the same bounds as training targets,
but deterministically per record (seeded by the record id), so runs
are directly comparable. Diacritics are stripped from both sides of
every comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import RngState, Tensor
from .beam import BeamConfig, Hypothesis
from .corpus import CleanRecord
from .model import ModelConfig
from .restorers import Seq2SeqRestorer
from .vocab import CharAlphabet, WordVocab, strip_diacritics

MAX_EVAL_CONTEXT = 1000
MAX_GAP = 10


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i]
        for j, cb in enumerate(b, start=1):
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = curr
    return prev[-1]


def cer(pred: str, target: str) -> float:
    """Edit distance divided by target length; may exceed 1 for long predictions."""
    if not target:
        raise ValueError("cer: target must be non-empty")
    return levenshtein(pred, target) / len(target)


def top_k_hit(hypotheses: list[Hypothesis], target: str, k: int = 20) -> bool:
    """True iff the diacritics-stripped target appears in the first k texts."""
    want = strip_diacritics(target)
    return any(strip_diacritics(h.text) == want for h in hypotheses[:k])


def hit_rank(hypotheses: list[Hypothesis], target: str) -> int | None:
    want = strip_diacritics(target)
    for rank, h in enumerate(hypotheses, start=1):
        if strip_diacritics(h.text) == want:
            return rank
    return None


@dataclass
class ExampleRecord:
    record_id: int
    target: str
    top_prediction: str
    rank: int | None


@dataclass
class EvalResult:
    cer: float
    top20: float
    examples: int
    records: list[ExampleRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cer": self.cer,
            "top20": self.top20,
            "examples": self.examples,
            "records": [vars(r) for r in self.records],
        }


@dataclass
class ContextSweepPoint:
    length: int
    top20: float
    cer: float


@dataclass
class GapRestoration:
    start: int
    length: int
    hypotheses: list[Hypothesis]


def sample_eval_gap(text: str, rng: RngState, max_gap: int = MAX_GAP, tries: int = 200) -> tuple[int, int] | None:
    """A target span free of missing-character marks, or None."""
    n = len(text)
    for _ in range(tries):
        length = int(rng.integers(1, min(max_gap, n)))
        start = int(rng.integers(0, n - length))
        if "-" not in text[start : start + length]:
            return start, length
    return None


def context_window(text: str, gap_start: int, gap_len: int, desired: int) -> tuple[int, str]:
    """A window of at most ``desired`` characters centered on the gap.

    Returns (window start offset, window text). The window always
    contains the whole gap; truncation is symmetric up to clamping at
    the record boundaries.
    """
    n = len(text)
    desired = min(desired, n)
    if desired < gap_len:
        raise ValueError(f"context window {desired} shorter than the gap ({gap_len})")
    center = gap_start + gap_len // 2
    w0 = center - desired // 2
    w0 = max(0, min(w0, n - desired))
    if w0 > gap_start:
        w0 = gap_start
    if w0 + desired < gap_start + gap_len:
        w0 = gap_start + gap_len - desired
    return w0, text[w0 : w0 + desired]


def mask_span(text: str, start: int, length: int) -> str:
    return text[:start] + "?" * length + text[start + length :]


def evaluate_with_restorer(
    records: list[CleanRecord],
    restorer,
    beam: BeamConfig = BeamConfig(width=100, top_k=20),
    seed: int = 0,
    max_records: int | None = None,
    context_length: int | None = None,
    max_gap: int = MAX_GAP,
) -> EvalResult:
    """Per-record seeded gap sampling, beam decoding, micro-averaged CER."""
    chosen = sorted(records, key=lambda r: r.id)
    if max_records is not None:
        chosen = chosen[:max_records]

    total_dist = 0
    total_chars = 0
    hits = 0
    rows: list[ExampleRecord] = []
    for record in chosen:
        rng = RngState.from_seed_sequence(seed, record.id)
        effective_max_gap = max_gap
        if context_length is not None:
            effective_max_gap = min(max_gap, context_length - 1)
        gap = sample_eval_gap(record.text, rng, max_gap=effective_max_gap)
        if gap is None:
            continue
        gap_start, gap_len = gap
        desired = context_length if context_length is not None else min(MAX_EVAL_CONTEXT, len(record.text))
        w0, window = context_window(record.text, gap_start, gap_len, desired)
        masked = mask_span(window, gap_start - w0, gap_len)
        target = record.text[gap_start : gap_start + gap_len]

        hypotheses = restorer.propose(masked, beam)
        pred = strip_diacritics(hypotheses[0].text)
        want = strip_diacritics(target)
        total_dist += levenshtein(pred, want)
        total_chars += len(want)
        rank = hit_rank(hypotheses, target)
        if rank is not None and rank <= 20:
            hits += 1
        rows.append(ExampleRecord(record.id, target, hypotheses[0].text, rank))

    n = len(rows)
    return EvalResult(
        cer=total_dist / total_chars if total_chars else 0.0,
        top20=hits / n if n else 0.0,
        examples=n,
        records=rows,
    )


def evaluate(
    records: list[CleanRecord],
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    vocab: WordVocab | None = None,
    beam: BeamConfig = BeamConfig(width=100, top_k=20),
    seed: int = 0,
    max_records: int | None = None,
    context_length: int | None = None,
) -> EvalResult:
    restorer = Seq2SeqRestorer(params, config, alphabet, vocab)
    return evaluate_with_restorer(
        records, restorer, beam=beam, seed=seed,
        max_records=max_records, context_length=context_length,
    )


def context_sweep(
    records: list[CleanRecord],
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    vocab: WordVocab | None = None,
    lengths: list[int] = (20, 50, 100, 200, 500, 1000),
    beam: BeamConfig = BeamConfig(width=100, top_k=20),
    seed: int = 0,
    max_records: int | None = None,
) -> list[ContextSweepPoint]:
    """Top-20 accuracy at each requested context length, same gaps throughout."""
    points = []
    for length in lengths:
        if length < 2:
            raise ValueError(f"context length {length} is below the minimum (gap + 1)")
        result = evaluate(
            records, params, config, alphabet, vocab,
            beam=beam, seed=seed, max_records=max_records, context_length=length,
        )
        points.append(ContextSweepPoint(length=length, top20=result.top20, cer=result.cer))
    return points


def find_gaps(text: str) -> list[tuple[int, int]]:
    """Maximal runs of missing-character marks, left to right."""
    gaps = []
    i = 0
    while i < len(text):
        if text[i] == "-":
            j = i
            while j < len(text) and text[j] == "-":
                j += 1
            gaps.append((i, j - i))
            i = j
        else:
            i += 1
    return gaps


def restore_full_text(
    text: str,
    restorer,
    beam: BeamConfig = BeamConfig(width=100, top_k=20),
    max_context: int = MAX_EVAL_CONTEXT,
) -> tuple[str, list[GapRestoration]]:
    """Fill every gap left to right, committing the best hypothesis each time.

    Later gaps see earlier restorations as context. Returns the fully
    restored text plus each gap's ranked hypothesis list.
    """
    restored = text
    results: list[GapRestoration] = []
    while True:
        gaps = find_gaps(restored)
        if not gaps:
            break
        start, length = gaps[0]
        w0, window = context_window(restored, start, length, min(max_context, len(restored)))
        masked = mask_span(window, start - w0, length)
        hypotheses = restorer.propose(masked, beam)
        results.append(GapRestoration(start=start, length=length, hypotheses=hypotheses))
        restored = restored[:start] + hypotheses[0].text + restored[start + length :]
    return restored, results
