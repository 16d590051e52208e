#!/usr/bin/env python3
"""Metrics on synthetic data: CER, Top-20 hits, and a context-length sweep.

Uses an untrained model so it runs in seconds; the point is the
protocol and the report shapes, not the scores.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(var, "1")

from lacuna.autodiff import RngState
from lacuna.beam import BeamConfig
from lacuna.corpus import CleanRecord, assign_split
from lacuna.evaluator import cer, context_sweep, evaluate, top_k_hit
from lacuna.model import ModelConfig, init_model
from lacuna.vocab import build_char_alphabet, build_word_vocab

print("=== metric units ===")
print(f"cer('αβγ', 'αβγ') = {cer('αβγ', 'αβγ')}")
print(f"cer('αβγ', 'αβδ') = {cer('αβγ', 'αβδ'):.3f}")
print(f"cer('αβ',  'αβγ') = {cer('αβ', 'αβγ'):.3f}")

WORDS = ["και", "του", "δημου", "εδοξεν", "βουληι", "ειναι", "επειδη", "ανδρα"]
rng = RngState(0)
records = []
for i in range(20):
    text = " ".join(WORDS[rng.choice(len(WORDS))] for _ in range(35))
    records.append(CleanRecord(i, text[:140], assign_split(i)))

alphabet = build_char_alphabet([r.text for r in records])
vocab = build_word_vocab([r.text for r in records])
config = ModelConfig("bi-word", alphabet_size=len(alphabet), word_vocab_size=len(vocab),
                     hidden=16, char_embed=8, word_embed=8, dropout=0.0)
params = init_model(config, RngState(7))

print("\n=== evaluation protocol (untrained model, so scores are poor) ===")
result = evaluate(records, params, config, alphabet, vocab,
                  beam=BeamConfig(width=20, top_k=20), seed=0)
print(f"examples {result.examples}  CER {result.cer:.3f}  Top-20 {result.top20:.3f}")
for row in result.records[:3]:
    print(f"  record {row.record_id}: target {row.target!r} top {row.top_prediction!r} rank {row.rank}")

print("\n=== context sweep ===")
points = context_sweep(records, params, config, alphabet, vocab,
                       lengths=[20, 50, 100], beam=BeamConfig(width=10, top_k=10), seed=0)
print("length\ttop20\tcer")
for p in points:
    print(f"{p.length}\t{p.top20:.3f}\t{p.cer:.3f}")
