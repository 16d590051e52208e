"""Training-example sampling and the optimization loop with checkpointing.

Each step samples a batch of inscriptions, cuts a context window of
100-1000 characters from each, hides a span of 1-10 characters behind
``?`` marks, and optimizes the restoration loss with Adam under
global-norm clipping and scheduled sampling. Target spans are resampled
if they overlap pre-existing damage: no ground truth exists there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, RngState, Tape, Tensor, adam_step, backward, clip_global_norm
from .beam import BeamConfig
from .checkpoint import Checkpoint, save_checkpoint
from .corpus import CleanRecord
from .evaluator import evaluate
from .model import Batch, ModelConfig, forward_loss, init_model
from .vocab import CharAlphabet, WordVocab, encode

MIN_CONTEXT = 100
MAX_CONTEXT = 1000
MAX_TARGET = 10


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-3
    clip: float = 5.0
    scheduled_p: float = 0.5
    dropout: float = 0.2
    max_steps: int = 1000
    ckpt_every: int = 200
    seed: int = 0
    # validation pass at checkpoint cadence: capped and narrow-beamed to
    # keep cadence cost bounded; full-protocol evaluation is a separate run
    val_max_records: int | None = 64
    val_beam_width: int = 10

    def __post_init__(self):
        if self.batch_size <= 0 or self.max_steps < 0 or self.ckpt_every <= 0:
            raise ValueError("batch_size and ckpt_every must be positive, max_steps non-negative")
        if not 0.0 <= self.scheduled_p <= 1.0:
            raise ValueError(f"scheduled_p must be in [0, 1], got {self.scheduled_p}")


@dataclass
class TrainingExample:
    """A context window, with the hidden span given by (gap_start, gap_len)."""

    context: str
    gap_start: int
    gap_len: int

    @property
    def masked(self) -> str:
        return (
            self.context[: self.gap_start]
            + "?" * self.gap_len
            + self.context[self.gap_start + self.gap_len :]
        )

    @property
    def target(self) -> str:
        return self.context[self.gap_start : self.gap_start + self.gap_len]


def sample_training_example(
    record: CleanRecord,
    rng: RngState,
    min_context: int = MIN_CONTEXT,
    max_context: int = MAX_CONTEXT,
    max_target: int = MAX_TARGET,
    tries: int = 100,
) -> TrainingExample | None:
    """Sample (context, target span) for one record, or None to skip it.

    Context length is uniform in [min_context, min(max_context, record
    length)]; the target span is uniform inside the context with length
    uniform in [1, max_target], resampled while it overlaps ``-``.
    """
    n = len(record.text)
    if n < min_context or record.text.count("-") == n:
        return None
    for _ in range(tries):
        c = int(rng.integers(min_context, min(max_context, n)))
        start = int(rng.integers(0, n - c))
        context = record.text[start : start + c]
        length = int(rng.integers(1, max_target))
        gap_start = int(rng.integers(0, c - length))
        if "-" not in context[gap_start : gap_start + length]:
            return TrainingExample(context, gap_start, length)
    return None


@dataclass
class StepStats:
    loss: float
    grad_norm: float          # post-clip global norm
    grad_norm_preclip: float


def train_step(
    examples: list[TrainingExample],
    params: dict[str, Tensor],
    opt_state: AdamState,
    model_config: ModelConfig,
    train_config: TrainConfig,
    alphabet: CharAlphabet,
    vocab: WordVocab | None,
    rng: RngState,
    step: int = 0,
) -> StepStats:
    """Forward, backward, clip, Adam. Returns the mean batch loss."""
    seqs = [encode(ex.masked, alphabet, vocab) for ex in examples]
    targets = [
        np.array([alphabet.index[ch] for ch in ex.target], dtype=np.int64) for ex in examples
    ]
    batch = Batch.from_sequences(seqs, alphabet, vocab, targets=targets)

    tape = Tape()
    with tape.recording():
        loss = forward_loss(
            batch, params, model_config, alphabet,
            scheduled_p=train_config.scheduled_p, rng=rng, training=True,
        )
    loss_value = float(loss.data)
    if not math.isfinite(loss_value):
        raise RuntimeError(f"non-finite loss at step {step}")
    for p in params.values():
        p.zero_grad()
    backward(tape, loss)
    tape.release()

    grads = [p.grad_array() for p in params.values()]
    _, pre_norm = clip_global_norm(grads, max_norm=train_config.clip)
    adam_step(params, opt_state)
    return StepStats(
        loss=loss_value,
        grad_norm=min(pre_norm, train_config.clip),
        grad_norm_preclip=pre_norm,
    )


@dataclass
class ValidationPoint:
    step: int
    cer: float
    top20: float


@dataclass
class FitResult:
    loss_trace: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    validation: list[ValidationPoint] = field(default_factory=list)
    best_path: Path | None = None
    last_path: Path | None = None
    best_cer: float = math.inf


def fit(
    corpus: dict[str, list[CleanRecord]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    alphabet: CharAlphabet,
    vocab: WordVocab | None,
    out_dir: Path,
    log_fn=None,
) -> FitResult:
    """Train from scratch, checkpointing on cadence and keeping the best.

    The checkpoint stream and the loss trace are fully determined by
    (corpus, configs, seed). Validation uses its own per-record seeds,
    so it never perturbs the training random stream.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_config.dropout = train_config.dropout

    rng = RngState(train_config.seed)
    params = init_model(model_config, rng)
    opt_state = AdamState.for_params(params, lr=train_config.lr)
    result = FitResult()
    log_path = out_dir / "train_log.jsonl"
    log_file = open(log_path, "w", encoding="utf-8")

    train_records = [r for r in corpus.get("train", []) if len(r.text) >= MIN_CONTEXT]
    valid_records = corpus.get("valid", [])
    if not train_records and train_config.max_steps > 0:
        raise ValueError("no trainable records: corpus 'train' split is empty or too short")

    def checkpoint_at(step: int, name: str) -> Path:
        path = out_dir / name
        save_checkpoint(path, Checkpoint(
            kind="seq2seq",
            config=model_config.to_dict(),
            params=params,
            alphabet=alphabet,
            word_vocab=vocab,
            opt_state=opt_state,
            rng_state=rng.state_dict(),
            step=step,
        ))
        return path

    def validate(step: int) -> None:
        if not valid_records:
            return
        eval_result = evaluate(
            valid_records, params, model_config, alphabet, vocab,
            beam=BeamConfig(width=train_config.val_beam_width,
                            top_k=min(20, train_config.val_beam_width)),
            seed=train_config.seed,
            max_records=train_config.val_max_records,
        )
        point = ValidationPoint(step=step, cer=eval_result.cer, top20=eval_result.top20)
        result.validation.append(point)
        log_file.write(json.dumps({
            "event": "validation", "step": step,
            "cer": point.cer, "top20": point.top20,
        }) + "\n")
        log_file.flush()
        if point.cer < result.best_cer:
            result.best_cer = point.cer
            result.best_path = checkpoint_at(step, "best.ckpt")

    result.last_path = checkpoint_at(0, "last.ckpt")
    validate(0)

    for step in range(1, train_config.max_steps + 1):
        examples: list[TrainingExample] = []
        while len(examples) < train_config.batch_size:
            record = train_records[rng.choice(len(train_records))]
            example = sample_training_example(record, rng)
            if example is not None:
                examples.append(example)
        stats = train_step(
            examples, params, opt_state, model_config, train_config,
            alphabet, vocab, rng, step=step,
        )
        result.loss_trace.append(stats.loss)
        result.grad_norms.append(stats.grad_norm)
        line = {"event": "step", "step": step, "loss": stats.loss, "grad_norm": stats.grad_norm}
        log_file.write(json.dumps(line) + "\n")
        if log_fn is not None:
            log_fn(line)

        if step % train_config.ckpt_every == 0 or step == train_config.max_steps:
            result.last_path = checkpoint_at(step, "last.ckpt")
            validate(step)

    if result.best_path is None:
        result.best_path = result.last_path
    log_file.close()
    return result
