"""Character-level recurrent language model baseline with a restoration mode.

A 2-layer LSTM over characters, trained on next-character prediction
with Adam, learning-rate decay on validation stall, gradient clipping,
and dropout on the inputs and hidden layers.

Restoration scores every candidate fill by the log-probability of the
full sequence: left context, candidate, and right context (the right
context is scored by continuing the forward pass through the fixed
suffix), so the LM sees evidence on both sides of the gap.

Scoring convention: the first character of a text is unconditioned
(windows are interior text, so there is no begin marker to condition
on); a sequence's score sums log P(x_t | x_<t) for t >= 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, RngState, Tape, Tensor, adam_step, backward, clip_global_norm
from .beam import BeamConfig, Hypothesis, beam_core
from .checkpoint import Checkpoint, save_checkpoint
from .corpus import CleanRecord
from .model import lstm_step
from .vocab import CharAlphabet


@dataclass
class LmConfig:
    alphabet_size: int
    layers: int = 2
    hidden: int = 1024
    char_embed: int = 1024
    dropout: float = 0.2
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.alphabet_size, self.layers, self.hidden, self.char_embed) <= 0:
            raise ValueError("model dimensions must be positive")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "alphabet_size", "layers", "hidden", "char_embed", "dropout", "dtype")}

    @classmethod
    def from_dict(cls, d: dict) -> "LmConfig":
        return cls(**d)


def lm_parameter_manifest(config: LmConfig) -> list[tuple[str, tuple[int, ...]]]:
    H = config.hidden
    manifest = [("embed.char", (config.alphabet_size, config.char_embed))]
    for layer in range(config.layers):
        in_dim = config.char_embed if layer == 0 else H
        manifest.append((f"lstm.l{layer}.W", (in_dim + H, 4 * H)))
        manifest.append((f"lstm.l{layer}.b", (4 * H,)))
    manifest.append(("out.W", (H, config.alphabet_size)))
    manifest.append(("out.b", (config.alphabet_size,)))
    return manifest


def init_lm(config: LmConfig, rng: RngState) -> dict[str, Tensor]:
    params = {}
    for name, shape in lm_parameter_manifest(config):
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=config.np_dtype)
        else:
            fan_in = shape[1] if name.startswith("embed.") else shape[0]
            k = 1.0 / math.sqrt(fan_in)
            data = rng.uniform(-k, k, shape, dtype=config.np_dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


@dataclass
class LmState:
    h: list[Tensor]
    c: list[Tensor]

    @classmethod
    def zeros(cls, batch: int, config: LmConfig) -> "LmState":
        make = lambda: Tensor(np.zeros((batch, config.hidden), dtype=config.np_dtype))
        return cls(h=[make() for _ in range(config.layers)],
                   c=[make() for _ in range(config.layers)])

    def reorder(self, idx: np.ndarray) -> "LmState":
        return LmState(h=[Tensor(t.data[idx]) for t in self.h],
                       c=[Tensor(t.data[idx]) for t in self.c])


def lm_step(
    char_ids: np.ndarray,
    state: LmState,
    params: dict[str, Tensor],
    config: LmConfig,
    rng: RngState | None = None,
    training: bool = False,
) -> tuple[Tensor, LmState]:
    """Consume one character per row; logits predict the next character."""
    drop = config.dropout if training else 0.0
    x = ad.embedding_gather(params["embed.char"], np.asarray(char_ids))
    h_list, c_list = [], []
    for layer in range(config.layers):
        if drop > 0:
            x = ad.dropout(x, drop, rng, training=True)
        h, c = lstm_step(x, state.h[layer], state.c[layer],
                         params[f"lstm.l{layer}.W"], params[f"lstm.l{layer}.b"])
        h_list.append(h)
        c_list.append(c)
        x = h
    if drop > 0:
        x = ad.dropout(x, drop, rng, training=True)
    logits = ad.add(ad.matmul(x, params["out.W"]), params["out.b"])
    return logits, LmState(h_list, c_list)


def lm_loss(
    windows: np.ndarray,
    params: dict[str, Tensor],
    config: LmConfig,
    rng: RngState | None = None,
    training: bool = True,
) -> Tensor:
    """Next-character cross-entropy averaged over every transition.

    ``windows`` is (B, T) integer ids; the T-1 transitions of each row
    contribute equally to the mean.
    """
    windows = np.atleast_2d(np.asarray(windows, dtype=np.int64))
    B, T = windows.shape
    if T < 2:
        raise ValueError("lm_loss needs windows of at least 2 characters")
    state = LmState.zeros(B, config)
    losses = []
    for t in range(T - 1):
        logits, state = lm_step(windows[:, t], state, params, config, rng, training)
        losses.append(ad.cross_entropy(logits, windows[:, t + 1]))
    total = losses[0]
    for part in losses[1:]:
        total = ad.add(total, part)
    return ad.mul(total, Tensor(np.asarray(1.0 / (T - 1), dtype=config.np_dtype)))


def lm_score_text(ids: np.ndarray, params: dict[str, Tensor], config: LmConfig) -> float:
    """Full-pass log-probability of a sequence (first character unconditioned)."""
    ids = np.asarray(ids, dtype=np.int64)
    state = LmState.zeros(1, config)
    total = 0.0
    for t in range(len(ids) - 1):
        logits, state = lm_step(ids[t : t + 1], state, params, config)
        logp = ad.log_softmax(logits).data[0]
        total += float(logp[ids[t + 1]])
    return total


def perplexity(records: list[CleanRecord] | list[str], params, config, alphabet,
               window: int = 200, max_windows: int = 16, seed: int = 0) -> float:
    """exp(mean next-character NLL) over deterministic sample windows."""
    rng = RngState.from_seed_sequence(seed, 1)
    texts = [r.text if isinstance(r, CleanRecord) else r for r in records]
    nlls = []
    for i in range(max_windows):
        text = texts[int(rng.choice(len(texts)))]
        w = min(window, len(text))
        start = int(rng.integers(0, len(text) - w))
        ids = np.array([alphabet.index[c] for c in text[start : start + w]])
        if len(ids) < 2:
            continue
        nlls.append(-lm_score_text(ids, params, config) / (len(ids) - 1))
    return math.exp(float(np.mean(nlls)))


# --------------------------------------------------------------------------
# restoration
# --------------------------------------------------------------------------


def lm_restore(
    text: str,
    params: dict[str, Tensor],
    config: LmConfig,
    alphabet: CharAlphabet,
    beam: BeamConfig = BeamConfig(),
) -> list[Hypothesis]:
    """Ranked fills for the single ``?`` gap, scored on the full sequence.

    Beam expansion ranks prefixes by left-context + fill log-probability;
    survivors are re-ranked after the fixed right context is scored by
    continuing the forward pass through it.
    """
    runs = _predict_runs(text)
    if len(runs) != 1:
        raise ValueError(f"lm_restore expects exactly one '?' run, found {len(runs)}")
    gap_start, L = runs[0]
    left = np.array([alphabet.index[c] for c in text[:gap_start]], dtype=np.int64)
    right = np.array([alphabet.index[c] for c in text[gap_start + L :]], dtype=np.int64)

    state = LmState.zeros(1, config)
    left_score = 0.0
    next_logp = None  # distribution over the first gap character
    for t in range(len(left)):
        logits, state = lm_step(left[t : t + 1], state, params, config)
        logp = ad.log_softmax(logits).data
        if t + 1 < len(left):
            left_score += float(logp[0, left[t + 1]])
        else:
            next_logp = logp

    excluded = {alphabet.pad_id, alphabet.start_id, alphabet.predict_id, alphabet.missing_id}
    allowed = np.array([i for i in range(len(alphabet)) if i not in excluded], dtype=np.int64)

    def step_fn(prev_ids, beam_state, parent_idx):
        if prev_ids is None:
            # first expansion: conditioned on the left context (or unconditioned
            # for a gap at the very start of the text)
            if next_logp is None:
                return np.zeros((1, len(alphabet))), state, None
            return next_logp, state, None
        beam_state = beam_state.reorder(parent_idx)
        logits, beam_state = lm_step(prev_ids, beam_state, params, config)
        return ad.log_softmax(logits).data, beam_state, None

    entries = beam_core(step_fn, state, L, beam.width, allowed)

    # roll each survivor's state through the fill, then the fixed suffix
    seqs = [np.array(e[0], dtype=np.int64) for e in entries]
    scores = np.array([e[1] for e in entries], dtype=np.float64)
    k = len(seqs)
    states = LmState(
        h=[Tensor(np.repeat(t.data, k, axis=0)) for t in state.h],
        c=[Tensor(np.repeat(t.data, k, axis=0)) for t in state.c],
    )
    for t in range(L):
        ids = np.array([s[t] for s in seqs])
        logits, states = lm_step(ids, states, params, config)
        logp = ad.log_softmax(logits).data
        if t == L - 1 and len(right):
            scores += logp[np.arange(k), right[0]]
    for j in range(len(right) - 1):
        logits, states = lm_step(np.full(k, right[j]), states, params, config)
        logp = ad.log_softmax(logits).data
        scores += logp[:, right[j + 1]]

    order = sorted(range(k), key=lambda i: (-(left_score + scores[i]), tuple(seqs[i])))
    hypotheses = []
    for i in order[: beam.top_k]:
        hypotheses.append(Hypothesis(
            text=alphabet.decode(seqs[i]),
            char_ids=seqs[i],
            log_prob=left_score + float(scores[i]),
            attention=np.zeros((0, len(text))),
        ))
    return hypotheses


def _predict_runs(text: str) -> list[tuple[int, int]]:
    runs = []
    i = 0
    while i < len(text):
        if text[i] == "?":
            j = i
            while j < len(text) and text[j] == "?":
                j += 1
            runs.append((i, j - i))
            i = j
        else:
            i += 1
    return runs


@dataclass
class LmRestorer:
    params: dict[str, Tensor]
    config: LmConfig
    alphabet: CharAlphabet

    def propose(self, masked_text: str, beam: BeamConfig = BeamConfig()) -> list[Hypothesis]:
        return lm_restore(masked_text, self.params, self.config, self.alphabet, beam)


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


@dataclass
class LmTrainConfig:
    batch_size: int = 32
    window: int = 150
    lr: float = 2e-3
    decay: float = 0.95          # multiplicative, applied on validation stall
    clip: float = 5.0
    dropout: float = 0.2
    max_steps: int = 1000
    ckpt_every: int = 200
    seed: int = 0
    val_windows: int = 8


@dataclass
class LmFitResult:
    loss_trace: list[float] = field(default_factory=list)
    val_losses: list[tuple[int, float]] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    best_path: Path | None = None
    last_path: Path | None = None
    best_val: float = math.inf


def _sample_window(records: list[CleanRecord], rng: RngState, window: int, alphabet) -> np.ndarray:
    record = records[rng.choice(len(records))]
    w = min(window, len(record.text))
    start = int(rng.integers(0, len(record.text) - w))
    chunk = record.text[start : start + w]
    return np.array([alphabet.index[c] for c in chunk], dtype=np.int64)


def train_lm(
    corpus: dict[str, list[CleanRecord]],
    config: LmConfig,
    train_config: LmTrainConfig,
    alphabet: CharAlphabet,
    out_dir: Path,
    log_fn=None,
) -> LmFitResult:
    """Adam with stall-triggered learning-rate decay and best-checkpoint keeping."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.dropout = train_config.dropout
    rng = RngState(train_config.seed)
    params = init_lm(config, rng)
    opt = AdamState.for_params(params, lr=train_config.lr)
    result = LmFitResult()
    log_file = open(out_dir / "train_log.jsonl", "w", encoding="utf-8")

    train_records = corpus["train"]
    valid_records = corpus.get("valid") or train_records
    val_rng = RngState.from_seed_sequence(train_config.seed, 99)
    val_batch = np.stack([
        _sample_window(valid_records, val_rng, train_config.window, alphabet)
        for _ in range(train_config.val_windows)
    ])

    def save(step: int, name: str) -> Path:
        path = out_dir / name
        save_checkpoint(path, Checkpoint(
            kind="lm", config=config.to_dict(), params=params, alphabet=alphabet,
            opt_state=opt, rng_state=rng.state_dict(), step=step,
        ))
        return path

    def validate(step: int) -> None:
        loss = float(lm_loss(val_batch, params, config, training=False).data)
        result.val_losses.append((step, loss))
        log_file.write(json.dumps({"event": "validation", "step": step,
                                   "loss": loss, "lr": opt.lr}) + "\n")
        if loss < result.best_val:
            result.best_val = loss
            result.best_path = save(step, "best.ckpt")
        elif step > 0:
            opt.lr *= train_config.decay

    result.last_path = save(0, "last.ckpt")
    validate(0)

    for step in range(1, train_config.max_steps + 1):
        batch = np.stack([
            _sample_window(train_records, rng, train_config.window, alphabet)
            for _ in range(train_config.batch_size)
        ])
        tape = Tape()
        with tape.recording():
            loss = lm_loss(batch, params, config, rng=rng, training=True)
        loss_value = float(loss.data)
        if not math.isfinite(loss_value):
            raise RuntimeError(f"non-finite loss at step {step}")
        for p in params.values():
            p.zero_grad()
        backward(tape, loss)
        tape.release()
        clip_global_norm([p.grad_array() for p in params.values()], train_config.clip)
        adam_step(params, opt)
        result.loss_trace.append(loss_value)
        result.lr_trace.append(opt.lr)
        log_file.write(json.dumps({"event": "step", "step": step, "loss": loss_value}) + "\n")
        if log_fn is not None:
            log_fn({"step": step, "loss": loss_value})
        if step % train_config.ckpt_every == 0 or step == train_config.max_steps:
            result.last_path = save(step, "last.ckpt")
            validate(step)

    log_file.close()
    return result
