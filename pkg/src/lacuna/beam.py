"""Beam-search decoding over a fixed-length gap, with attention records.

The output length is pinned by the number of ``?`` marks, so all
hypotheses have equal length and raw summed log-probabilities are
directly comparable — no length normalization. Ties break
lexicographically on the character-id sequence so rankings are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import DecoderState, EncoderOutput, ModelConfig, decode_step, encode, init_decoder_state
from .vocab import CharAlphabet, EncodedSequence, WordVocab


@dataclass
class BeamConfig:
    width: int = 100
    top_k: int = 20

    def __post_init__(self):
        if not 1 <= self.top_k <= self.width:
            raise ValueError(f"top_k must be in [1, width]: top_k={self.top_k}, width={self.width}")


@dataclass
class Hypothesis:
    """One candidate restoration with its evidence."""

    text: str
    char_ids: np.ndarray
    log_prob: float
    attention: np.ndarray  # (steps, source length)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "log_prob": self.log_prob,
            "attention": self.attention.tolist(),
        }


def beam_core(
    step_fn: Callable,
    start_state,
    length: int,
    width: int,
    allowed: np.ndarray,
) -> list[tuple[tuple[int, ...], float, list[np.ndarray]]]:
    """Generic fixed-length beam expansion.

    ``step_fn(prev_ids, state, parent_idx)`` returns per-row
    log-probabilities (k, A), the next state, and either per-row
    attention rows (k, T) or None. Returns the surviving
    (sequence, log_prob, attention_rows) entries, best first.
    """
    seqs: list[tuple[int, ...]] = [()]
    scores = [0.0]
    attn: list[list[np.ndarray]] = [[]]
    state = start_state
    prev_ids = None
    parent_idx = None

    for _ in range(length):
        logp, state, rows = step_fn(prev_ids, state, parent_idx)
        logp = logp.astype(np.float64, copy=False)

        candidates = []
        for i, (seq, score) in enumerate(zip(seqs, scores)):
            for a in allowed:
                candidates.append((score + logp[i, a], seq + (int(a),), i))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        survivors = candidates[:width]

        parent_idx = np.array([c[2] for c in survivors], dtype=np.int64)
        prev_ids = np.array([c[1][-1] for c in survivors], dtype=np.int64)
        seqs = [c[1] for c in survivors]
        scores = [c[0] for c in survivors]
        if rows is not None:
            attn = [attn[c[2]] + [rows[c[2]]] for c in survivors]
        else:
            attn = [[] for _ in survivors]

    return [(s, sc, a) for s, sc, a in zip(seqs, scores, attn)]


def _broadcast_encoder(enc: EncoderOutput, k: int) -> EncoderOutput:
    """A k-row view of a single-sequence encoding (no data copies)."""
    T, W = enc.memory.shape[1], enc.memory.shape[2]
    return EncoderOutput(
        memory=Tensor(np.broadcast_to(enc.memory.data, (k, T, W))),
        final_h=enc.final_h,
        final_c=enc.final_c,
        valid=np.broadcast_to(enc.valid, (k, T)),
        attn_bias=Tensor(np.broadcast_to(enc.attn_bias.data, (k, T))),
    )


def beam_search(
    seq: EncodedSequence,
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    beam: BeamConfig = BeamConfig(),
) -> list[Hypothesis]:
    """Top-k restoration hypotheses for the ``?`` gap in ``seq``.

    Expands exactly num_predict steps, keeping the ``beam.width`` best
    prefixes by total log-probability at each step. Control symbols
    (padding, start, the gap marks themselves) are never emitted.
    """
    L = seq.num_predict
    if L == 0:
        raise ValueError("beam_search: input has no '?' positions to predict")

    enc = encode(seq, params, config, alphabet)
    init_state = init_decoder_state(enc, params, config)
    excluded = {alphabet.pad_id, alphabet.start_id, alphabet.predict_id, alphabet.missing_id}
    allowed = np.array([i for i in range(len(alphabet)) if i not in excluded], dtype=np.int64)

    def step_fn(prev_ids, state: DecoderState, parent_idx):
        if prev_ids is None:
            prev_ids = np.array([alphabet.start_id], dtype=np.int64)
        else:
            state = state.reorder(parent_idx)
        k = len(prev_ids)
        logits, state, weights = decode_step(
            prev_ids, state, _broadcast_encoder(enc, k), params, config
        )
        logp = ad.log_softmax(logits).data
        return logp, state, weights.data

    entries = beam_core(step_fn, init_state, L, beam.width, allowed)
    hypotheses = [
        Hypothesis(
            text=alphabet.decode(ids),
            char_ids=np.array(ids, dtype=np.int64),
            log_prob=score,
            attention=np.stack(rows) if rows else np.zeros((0, len(seq))),
        )
        for ids, score, rows in entries[: beam.top_k]
    ]
    return hypotheses


def score_sequence(
    seq: EncodedSequence,
    target_ids: np.ndarray,
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
) -> float:
    """Teacher-forced total log-probability of one candidate fill."""
    enc = encode(seq, params, config, alphabet)
    state = init_decoder_state(enc, params, config)
    prev = np.array([alphabet.start_id], dtype=np.int64)
    total = 0.0
    for t, target in enumerate(target_ids):
        logits, state, _ = decode_step(prev, state, enc, params, config)
        logp = ad.log_softmax(logits).data[0]
        total += float(logp[target])
        prev = np.array([target], dtype=np.int64)
    return total


def scale_attention_for_viz(attention: np.ndarray, predict_mask: np.ndarray) -> np.ndarray:
    """Min-max scale each decode-step row to [0, 1], separately for the
    gap columns and the context columns; a constant region scales to 0."""
    attention = np.asarray(attention, dtype=np.float64)
    predict_mask = np.asarray(predict_mask, dtype=bool)
    if attention.ndim != 2 or attention.shape[1] != predict_mask.shape[0]:
        raise ValueError(
            f"attention {attention.shape} does not align with mask of length {predict_mask.shape[0]}"
        )
    scaled = np.zeros_like(attention)
    for region in (predict_mask, ~predict_mask):
        if not region.any():
            continue
        block = attention[:, region]
        lo = block.min(axis=1, keepdims=True)
        hi = block.max(axis=1, keepdims=True)
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        scaled[:, region] = np.where(span > 0, (block - lo) / safe, 0.0)
    return scaled
