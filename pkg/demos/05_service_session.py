#!/usr/bin/env python3
"""Drive the HTTP service end to end: create, propose, accept, replay.

Runs the FastAPI app in-process against a stub model, exercising the
same wire format the browser workbench consumes.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import json
import tempfile

from fastapi.testclient import TestClient

from lacuna.autodiff import RngState
from lacuna.beam import BeamConfig
from lacuna.model import ModelConfig, init_model
from lacuna.restorers import Seq2SeqRestorer
from lacuna.service import create_app
from lacuna.vocab import build_char_alphabet, build_word_vocab

TEXT = "και του δημου εδοξεν ----- αγαθον ειναι και περι ταυτα εγραψεν"

seed_texts = [TEXT.replace("-----", "ανδρα")]
alphabet = build_char_alphabet(seed_texts)
vocab = build_word_vocab(seed_texts)
config = ModelConfig("bi-word", alphabet_size=len(alphabet), word_vocab_size=len(vocab),
                     hidden=16, char_embed=8, word_embed=8, dropout=0.0)
restorer = Seq2SeqRestorer(init_model(config, RngState(4)), config, alphabet, vocab)

with tempfile.TemporaryDirectory() as data_dir:
    app = create_app(restorer, data_dir, model_id="demo-stub",
                     default_beam=BeamConfig(width=30, top_k=10))
    client = TestClient(app)

    print("health:", client.get("/v1/health").json())

    session_id = client.post("/v1/sessions", json={"text": TEXT}).json()["id"]
    print("created session", session_id)

    gap_start = TEXT.index("-----")
    proposal = client.post(f"/v1/sessions/{session_id}/propose",
                           json={"start": gap_start, "length": 5}).json()
    print(f"\ntop hypotheses for the {proposal['gap']['length']}-char gap:")
    for rank, h in enumerate(proposal["hypotheses"][:5], start=1):
        print(f"  {rank}. {h['text']!r}  log-prob {h['log_prob']:.3f}")

    chosen = proposal["hypotheses"][0]["text"]
    session = client.post(f"/v1/sessions/{session_id}/accept",
                          json={"start": gap_start, "length": 5, "text": chosen}).json()
    print(f"\naccepted {chosen!r}; text now:\n  {session['text']}")

    print("\nsession history:")
    print(json.dumps(session["history"], indent=2, ensure_ascii=False))

    # a fresh app over the same data directory replays the log
    fresh = TestClient(create_app(restorer, data_dir, model_id="demo-stub"))
    replayed = fresh.get(f"/v1/sessions/{session_id}").json()
    print("\nafter restart, replayed text matches:", replayed["text"] == session["text"])
