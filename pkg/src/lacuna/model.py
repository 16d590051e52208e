"""Character(+word) sequence-to-sequence restoration model.

A 2-layer LSTM encoder (unidirectional or bidirectional) reads the
damaged text as aligned character and word embedding streams; a 2-layer
LSTM decoder with multiplicative attention over the encoder memory
emits exactly one character per ``?`` position.

The three variants share one decoder code path and differ only in the
encoder: direction count and the presence of the word stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import RngState, Tensor
from .vocab import CharAlphabet, EncodedSequence, WordVocab

VARIANTS = ("uni", "bi", "bi-word")

ATTN_MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    variant: str
    alphabet_size: int
    word_vocab_size: int | None = None
    hidden: int = 512
    layers: int = 2
    char_embed: int = 128
    word_embed: int = 128
    dropout: float = 0.2
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "bi-word" and not self.word_vocab_size:
            raise ValueError("the bi-word variant requires a word vocabulary")
        if min(self.hidden, self.layers, self.char_embed, self.alphabet_size) <= 0:
            raise ValueError("model dimensions must be positive")

    @property
    def directions(self) -> int:
        return 1 if self.variant == "uni" else 2

    @property
    def use_words(self) -> bool:
        return self.variant == "bi-word"

    @property
    def encoder_width(self) -> int:
        return self.hidden * self.directions

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "variant", "alphabet_size", "word_vocab_size", "hidden", "layers",
            "char_embed", "word_embed", "dropout", "dtype")}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def parameter_manifest(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list of every tensor the model owns."""
    H = config.hidden
    manifest: list[tuple[str, tuple[int, ...]]] = [("embed.char", (config.alphabet_size, config.char_embed))]
    if config.use_words:
        manifest.append(("embed.word", (config.word_vocab_size, config.word_embed)))

    # each direction is an independent 2-layer stack; outputs concatenate
    enc_in0 = config.char_embed + (config.word_embed if config.use_words else 0)
    directions = ("fwd", "bwd") if config.directions == 2 else ("fwd",)
    for layer in range(config.layers):
        in_dim = enc_in0 if layer == 0 else H
        for direction in directions:
            manifest.append((f"enc.l{layer}.{direction}.W", (in_dim + H, 4 * H)))
            manifest.append((f"enc.l{layer}.{direction}.b", (4 * H,)))

    for layer in range(config.layers):
        manifest.append((f"bridge.h.l{layer}.W", (config.encoder_width, H)))
        manifest.append((f"bridge.h.l{layer}.b", (H,)))
        manifest.append((f"bridge.c.l{layer}.W", (config.encoder_width, H)))
        manifest.append((f"bridge.c.l{layer}.b", (H,)))

    manifest.append(("attn.W", (H, config.encoder_width)))

    for layer in range(config.layers):
        in_dim = config.char_embed if layer == 0 else H
        manifest.append((f"dec.l{layer}.W", (in_dim + H, 4 * H)))
        manifest.append((f"dec.l{layer}.b", (4 * H,)))

    manifest.append(("out.W", (H + config.encoder_width, config.alphabet_size)))
    manifest.append(("out.b", (config.alphabet_size,)))
    return manifest


def init_model(config: ModelConfig, rng: RngState) -> dict[str, Tensor]:
    """Allocate and initialize every manifest tensor, deterministically.

    Weight matrices draw uniform in [-k, k] with k = 1/sqrt(fan-in);
    biases start at zero; embedding tables use their row width as fan-in.
    """
    params: dict[str, Tensor] = {}
    for name, shape in parameter_manifest(config):
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=config.np_dtype)
        else:
            fan_in = shape[1] if name.startswith("embed.") else shape[0]
            k = 1.0 / math.sqrt(fan_in)
            data = rng.uniform(-k, k, shape, dtype=config.np_dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


@dataclass
class Batch:
    """Padded, aligned index arrays for a batch of encoded sequences."""

    char_ids: np.ndarray            # (B, T)
    word_ids: np.ndarray            # (B, T)
    lengths: np.ndarray             # (B,)
    targets: np.ndarray | None      # (B, L) padded with the alphabet pad id
    target_lengths: np.ndarray | None

    @classmethod
    def from_sequences(
        cls,
        seqs: list[EncodedSequence],
        alphabet: CharAlphabet,
        vocab: WordVocab | None = None,
        targets: list[np.ndarray] | None = None,
    ) -> "Batch":
        B = len(seqs)
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        T = int(lengths.max())
        word_pad = vocab.no_word_id if vocab is not None else 0
        char_ids = np.full((B, T), alphabet.pad_id, dtype=np.int64)
        word_ids = np.full((B, T), word_pad, dtype=np.int64)
        for i, s in enumerate(seqs):
            char_ids[i, : len(s)] = s.char_ids
            word_ids[i, : len(s)] = s.word_ids

        target_arr = target_lengths = None
        if targets is not None:
            for i, (s, t) in enumerate(zip(seqs, targets)):
                if len(t) != s.num_predict:
                    raise ValueError(
                        f"sequence {i}: {len(t)} target characters for "
                        f"{s.num_predict} predict positions"
                    )
            target_lengths = np.array([len(t) for t in targets], dtype=np.int64)
            L = int(target_lengths.max())
            target_arr = np.full((B, L), alphabet.pad_id, dtype=np.int64)
            for i, t in enumerate(targets):
                target_arr[i, : len(t)] = t
        return cls(char_ids, word_ids, lengths, target_arr, target_lengths)

    @property
    def size(self) -> int:
        return self.char_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.char_ids.shape[1]


@dataclass
class EncoderOutput:
    """Per-position memory and per-layer final states for decoder bootstrap."""

    memory: Tensor               # (B, T, hidden * directions)
    final_h: list[Tensor]        # per layer, (B, hidden * directions)
    final_c: list[Tensor]
    valid: np.ndarray            # (B, T) bool
    attn_bias: Tensor            # (B, T): 0 where valid, large negative at padding

    @property
    def length(self) -> int:
        return self.memory.shape[1]


@dataclass
class DecoderState:
    h: list[Tensor]              # per layer, (B, hidden)
    c: list[Tensor]

    def reorder(self, idx: np.ndarray) -> "DecoderState":
        return DecoderState(
            h=[Tensor(t.data[idx]) for t in self.h],
            c=[Tensor(t.data[idx]) for t in self.c],
        )


def lstm_step(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    H = h.shape[1]
    z = ad.add(ad.matmul(ad.concat([x, h], axis=1), W), b)
    i = ad.sigmoid(ad.slice_axis(z, 1, 0, H))
    f = ad.sigmoid(ad.slice_axis(z, 1, H, 2 * H))
    g = ad.tanh(ad.slice_axis(z, 1, 2 * H, 3 * H))
    o = ad.sigmoid(ad.slice_axis(z, 1, 3 * H, 4 * H))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def _zeros(B: int, H: int, dtype) -> Tensor:
    return Tensor(np.zeros((B, H), dtype=dtype))


def _scan_direction(
    xs: list[Tensor],
    params: dict[str, Tensor],
    direction: str,
    config: ModelConfig,
    rng: RngState | None,
    training: bool,
) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
    """Run one direction's stacked layers over its step inputs.

    Returns (top-layer outputs per step, stacked h per layer (B,T,H),
    stacked c per layer) — the stacks let callers pick per-row final
    states by true length.
    """
    B = xs[0].shape[0]
    dtype = xs[0].data.dtype
    H = config.hidden
    inputs = xs
    h_stacks: list[Tensor] = []
    c_stacks: list[Tensor] = []
    for layer in range(config.layers):
        W = params[f"enc.l{layer}.{direction}.W"]
        b = params[f"enc.l{layer}.{direction}.b"]
        h, c = _zeros(B, H, dtype), _zeros(B, H, dtype)
        hs, cs = [], []
        for x in inputs:
            if training and config.dropout > 0:
                x = ad.dropout(x, config.dropout, rng, training=True)
            h, c = lstm_step(x, h, c, W, b)
            hs.append(h)
            cs.append(c)
        h_stacks.append(ad.stack(hs, axis=1))
        c_stacks.append(ad.stack(cs, axis=1))
        inputs = hs
    return inputs, h_stacks, c_stacks


def _embed_steps(batch: Batch, params: dict[str, Tensor], config: ModelConfig,
                 char_ids: np.ndarray, word_ids: np.ndarray) -> list[Tensor]:
    steps = []
    for t in range(char_ids.shape[1]):
        x = ad.embedding_gather(params["embed.char"], char_ids[:, t])
        if config.use_words:
            w = ad.embedding_gather(params["embed.word"], word_ids[:, t])
            x = ad.concat([x, w], axis=1)
        steps.append(x)
    return steps


def encode_batch(
    batch: Batch,
    params: dict[str, Tensor],
    config: ModelConfig,
    rng: RngState | None = None,
    training: bool = False,
) -> EncoderOutput:
    """Encode a padded batch; padding never contaminates real positions.

    The backward direction consumes each row reversed by its own true
    length, so its state at every real position has seen exactly the
    suffix of that row — stacked outputs are then permuted back to
    source order.
    """
    B, T = batch.char_ids.shape
    rows = np.arange(B)[:, None]
    steps_fwd = _embed_steps(batch, params, config, batch.char_ids, batch.word_ids)
    out_fwd, h_stacks_f, c_stacks_f = _scan_direction(steps_fwd, params, "fwd", config, rng, training)
    last = batch.lengths - 1

    if config.directions == 1:
        memory = ad.stack(out_fwd, axis=1)
        final_h = [ad.select_rows(s, last) for s in h_stacks_f]
        final_c = [ad.select_rows(s, last) for s in c_stacks_f]
    else:
        # per-row reversal permutation: real positions flip, padding stays
        ar = np.arange(T)[None, :]
        perm = np.where(ar < batch.lengths[:, None], batch.lengths[:, None] - 1 - ar, ar)
        rev_chars = batch.char_ids[rows, perm]
        rev_words = batch.word_ids[rows, perm]
        steps_bwd = _embed_steps(batch, params, config, rev_chars, rev_words)
        out_bwd, h_stacks_b, c_stacks_b = _scan_direction(steps_bwd, params, "bwd", config, rng, training)
        bwd_memory = ad.time_permute(ad.stack(out_bwd, axis=1), perm)
        memory = ad.concat([ad.stack(out_fwd, axis=1), bwd_memory], axis=2)
        final_h = [
            ad.concat([ad.select_rows(f, last), ad.select_rows(b, last)], axis=1)
            for f, b in zip(h_stacks_f, h_stacks_b)
        ]
        final_c = [
            ad.concat([ad.select_rows(f, last), ad.select_rows(b, last)], axis=1)
            for f, b in zip(c_stacks_f, c_stacks_b)
        ]

    valid = np.arange(T)[None, :] < batch.lengths[:, None]
    bias = np.where(valid, 0.0, ATTN_MASK_VALUE).astype(config.np_dtype)
    return EncoderOutput(memory, final_h, final_c, valid, Tensor(bias))


def encode(
    seq: EncodedSequence,
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    rng: RngState | None = None,
    training: bool = False,
) -> EncoderOutput:
    """Single-sequence convenience wrapper around encode_batch."""
    return encode_batch(Batch.from_sequences([seq], alphabet), params, config, rng, training)


def init_decoder_state(enc: EncoderOutput, params: dict[str, Tensor], config: ModelConfig) -> DecoderState:
    """Bridge the encoder's final states into decoder width with linear maps."""
    h, c = [], []
    for layer in range(config.layers):
        h.append(ad.add(ad.matmul(enc.final_h[layer], params[f"bridge.h.l{layer}.W"]),
                        params[f"bridge.h.l{layer}.b"]))
        c.append(ad.add(ad.matmul(enc.final_c[layer], params[f"bridge.c.l{layer}.W"]),
                        params[f"bridge.c.l{layer}.b"]))
    return DecoderState(h, c)


def attend(query: Tensor, enc: EncoderOutput, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Multiplicative attention of a decoder state over the encoder memory.

    Scores are a bilinear product through attn.W; padded positions are
    masked out before the softmax. Returns (context, weights).
    """
    scores = ad.attention_scores(enc.memory, ad.matmul(query, params["attn.W"]))
    weights = ad.softmax(ad.add(scores, enc.attn_bias), axis=1)
    context = ad.attention_combine(weights, enc.memory)
    return context, weights


def decode_step(
    prev_ids: np.ndarray,
    state: DecoderState,
    enc: EncoderOutput,
    params: dict[str, Tensor],
    config: ModelConfig,
    rng: RngState | None = None,
    training: bool = False,
) -> tuple[Tensor, DecoderState, Tensor]:
    """One decoder step: (logits over the alphabet, next state, attention row)."""
    drop = config.dropout if training else 0.0
    x = ad.embedding_gather(params["embed.char"], np.asarray(prev_ids))
    h_list, c_list = [], []
    for layer in range(config.layers):
        if drop > 0:
            x = ad.dropout(x, drop, rng, training=True)
        h, c = lstm_step(x, state.h[layer], state.c[layer],
                         params[f"dec.l{layer}.W"], params[f"dec.l{layer}.b"])
        h_list.append(h)
        c_list.append(c)
        x = h
    top = h_list[-1]
    context, weights = attend(top, enc, params)
    proj_in = ad.concat([top, context], axis=1)
    if drop > 0:
        proj_in = ad.dropout(proj_in, drop, rng, training=True)
    logits = ad.add(ad.matmul(proj_in, params["out.W"]), params["out.b"])
    return logits, DecoderState(h_list, c_list), weights


def forward_loss(
    batch: Batch,
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    scheduled_p: float = 0.0,
    rng: RngState | None = None,
    training: bool = True,
) -> Tensor:
    """Mean per-step cross-entropy over the predicted positions.

    With probability ``scheduled_p`` each step is fed the model's own
    argmax prediction instead of the ground-truth previous character
    (scheduled sampling); scheduled_p = 0 is pure teacher forcing.
    """
    if batch.targets is None:
        raise ValueError("forward_loss requires target sequences")
    if (training and config.dropout > 0 or scheduled_p > 0) and rng is None:
        raise ValueError("an RngState is required when dropout or scheduled sampling is active")

    B, L = batch.targets.shape
    enc = encode_batch(batch, params, config, rng, training)
    state = init_decoder_state(enc, params, config)
    prev = np.full(B, alphabet.start_id, dtype=np.int64)
    dtype = config.np_dtype

    step_losses = []
    for t in range(L):
        logits, state, _ = decode_step(prev, state, enc, params, config, rng, training)
        ce = ad.cross_entropy_rows(logits, batch.targets[:, t])
        valid = (t < batch.target_lengths).astype(dtype)
        step_losses.append(ad.mul(ce, Tensor(valid)))

        truth = batch.targets[:, t]
        if scheduled_p > 0:
            use_model = rng.coin(scheduled_p, B)
            prev = np.where(use_model, np.argmax(logits.data, axis=1), truth)
        else:
            prev = truth

    total = step_losses[0]
    for part in step_losses[1:]:
        total = ad.add(total, part)
    per_example = ad.mul(total, Tensor((1.0 / batch.target_lengths).astype(dtype)))
    return ad.reduce_mean(per_example)


def greedy_rollout(
    seq: EncodedSequence,
    params: dict[str, Tensor],
    config: ModelConfig,
    alphabet: CharAlphabet,
    steps: int | None = None,
) -> np.ndarray:
    """Argmax decoding for exactly as many steps as there are ``?`` marks.

    Control symbols (padding, start, the gap marks) are never emitted.
    """
    L = steps if steps is not None else seq.num_predict
    if L < 1:
        raise ValueError("nothing to predict: input has no '?' positions")
    enc = encode(seq, params, config, alphabet)
    state = init_decoder_state(enc, params, config)
    prev = np.array([alphabet.start_id], dtype=np.int64)
    banned = [alphabet.pad_id, alphabet.start_id, alphabet.predict_id, alphabet.missing_id]
    out = np.empty(L, dtype=np.int64)
    for t in range(L):
        logits, state, _ = decode_step(prev, state, enc, params, config)
        row = logits.data[0].copy()
        row[banned] = -np.inf
        out[t] = int(np.argmax(row))
        prev = out[t : t + 1]
    return out
