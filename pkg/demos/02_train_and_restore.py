#!/usr/bin/env python3
"""Train a small restoration model on synthetic inscriptions, then restore.

Builds a corpus where a personal name always appears twice, trains a
reduced model for a few hundred steps, and shows ranked hypotheses with
their attention evidence for a masked second occurrence.

Runtime: a few minutes on one core.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import tempfile
from pathlib import Path

import numpy as np

from lacuna.autodiff import AdamState, RngState
from lacuna.beam import BeamConfig, beam_search, scale_attention_for_viz
from lacuna.model import ModelConfig, init_model
from lacuna.trainer import TrainConfig, TrainingExample, train_step
from lacuna.vocab import build_char_alphabet, build_word_vocab, encode

NAMES = ["νικιας", "φιλων", "κλεων", "αγαθων", "μενων", "λυσιας", "ξενων", "ερμων"]
FILLER = ["και", "του", "δημου", "εδοξεν", "βουληι", "ειναι", "επειδη", "ανδρα",
          "αγαθον", "περι", "ταυτα", "ιερον", "ετους", "αρχοντος"]

rng = RngState(0)


def make_text():
    name = NAMES[rng.choice(len(NAMES))]
    head = " ".join(FILLER[rng.choice(len(FILLER))] for _ in range(3))
    mid = " ".join(FILLER[rng.choice(len(FILLER))] for _ in range(3))
    text = f"{head} {name} {mid} {name}"
    while len(text) < 100:
        text += " " + FILLER[rng.choice(len(FILLER))]
    gap_start = len(head) + 1 + len(name) + 1 + len(mid) + 1
    return text, gap_start, len(name), name


examples = [make_text() for _ in range(600)]
texts = [t for t, *_ in examples]
alphabet = build_char_alphabet(texts)
vocab = build_word_vocab(texts)
print(f"{len(examples)} texts, alphabet {len(alphabet)}, vocabulary {len(vocab)}")

config = ModelConfig("bi-word", alphabet_size=len(alphabet), word_vocab_size=len(vocab),
                     hidden=48, char_embed=32, word_embed=32, dropout=0.2)
tconf = TrainConfig(batch_size=32, lr=3e-3, scheduled_p=0.5, dropout=0.2)
params = init_model(config, RngState(1))
opt = AdamState.for_params(params, lr=tconf.lr)
train_rng = RngState(2)

print("training...")
for step in range(1, 701):
    batch = []
    for _ in range(tconf.batch_size):
        text, gs, gl, _ = examples[train_rng.choice(500)]  # hold out the tail
        batch.append(TrainingExample(text, gs, gl))
    stats = train_step(batch, params, opt, config, tconf, alphabet, vocab, train_rng, step)
    if step % 100 == 0:
        print(f"  step {step:4d}  loss {stats.loss:.3f}  grad_norm {stats.grad_norm:.2f}")

text, gs, gl, truth = examples[550]  # held out
masked = text[:gs] + "?" * gl + text[gs + gl:]
print(f"\ndamaged:  {masked}")
print(f"truth:    {truth}")

seq = encode(masked, alphabet, vocab)
hypotheses = beam_search(seq, params, config, alphabet, BeamConfig(width=100, top_k=20))
print("\nrank  log-prob  fill")
for rank, h in enumerate(hypotheses[:10], start=1):
    marker = "  <- truth" if h.text == truth else ""
    print(f"{rank:4d}  {h.log_prob:8.3f}  {h.text}{marker}")

print("\nattention of the top hypothesis (first decode step, scaled 0..1):")
scaled = scale_attention_for_viz(hypotheses[0].attention, seq.predict_mask)
row = scaled[0]
strongest = np.argsort(row)[::-1][:8]
for pos in sorted(strongest):
    print(f"  pos {pos:3d} {masked[max(0, pos-3):pos+4]!r:16} weight {row[pos]:.2f}")
