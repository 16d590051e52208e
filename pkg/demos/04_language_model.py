#!/usr/bin/env python3
"""Character LM baseline: train briefly, then rank fills for a gap.

The LM scores each candidate by the log-probability of the whole
sequence, so right context influences the ranking even though the
model itself is unidirectional.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import tempfile
from pathlib import Path

from lacuna.autodiff import RngState
from lacuna.beam import BeamConfig
from lacuna.checkpoint import load_checkpoint
from lacuna.corpus import CleanRecord, assign_split
from lacuna.lm import LmConfig, LmRestorer, LmTrainConfig, perplexity, train_lm
from lacuna.vocab import build_char_alphabet

WORDS = ["και", "του", "δημου", "εδοξεν", "βουληι", "ειναι", "επειδη",
         "ανδρα", "αγαθον", "περι", "ταυτα", "ιερον"]
rng = RngState(3)
records = []
for i in range(40):
    text = " ".join(WORDS[rng.choice(len(WORDS))] for _ in range(40))
    records.append(CleanRecord(i, text[:150], assign_split(i)))
corpus = {"train": [r for r in records if r.split == "train"],
          "valid": [r for r in records if r.split == "valid"],
          "test": [r for r in records if r.split == "test"]}
alphabet = build_char_alphabet([r.text for r in records])

config = LmConfig(alphabet_size=len(alphabet), hidden=48, char_embed=24, dropout=0.1)

with tempfile.TemporaryDirectory() as tmp:
    print("training the character LM...")
    result = train_lm(
        corpus, config,
        LmTrainConfig(batch_size=16, window=80, max_steps=300, ckpt_every=100,
                      seed=0, lr=5e-3, dropout=0.1),
        alphabet, Path(tmp),
    )
    print("validation loss trace:", [f"{v:.3f}" for _, v in result.val_losses])
    best = load_checkpoint(result.best_path)

ppl = perplexity(corpus["test"], best.params, LmConfig.from_dict(best.config), best.alphabet)
print(f"held-out perplexity: {ppl:.2f} (alphabet size {len(alphabet)})")

masked = "και του δημου εδοξεν ειν?? και περι ταυτα"
restorer = LmRestorer(best.params, LmConfig.from_dict(best.config), best.alphabet)
print(f"\ndamaged: {masked}")
print("rank  log-prob  fill")
for rank, h in enumerate(restorer.propose(masked, BeamConfig(width=50, top_k=8)), start=1):
    print(f"{rank:4d}  {h.log_prob:8.3f}  {h.text!r}")
