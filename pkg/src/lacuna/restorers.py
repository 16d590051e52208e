"""Model-agnostic proposal interface over checkpoints.

A restorer turns a masked text window (one or more ``?`` marks) into a
ranked hypothesis list. The seq2seq and language-model backends share
this surface so the evaluator, the CLI, and the HTTP service do not
care which architecture produced a checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor
from .beam import BeamConfig, Hypothesis, beam_search
from .checkpoint import Checkpoint, load_checkpoint
from .model import ModelConfig
from .vocab import CharAlphabet, WordVocab, encode


@dataclass
class Seq2SeqRestorer:
    params: dict[str, Tensor]
    config: ModelConfig
    alphabet: CharAlphabet
    vocab: WordVocab | None = None

    def propose(self, masked_text: str, beam: BeamConfig = BeamConfig()) -> list[Hypothesis]:
        seq = encode(masked_text, self.alphabet, self.vocab)
        return beam_search(seq, self.params, self.config, self.alphabet, beam)


def restorer_from_checkpoint(ckpt: Checkpoint):
    if ckpt.kind == "seq2seq":
        return Seq2SeqRestorer(
            params=ckpt.params,
            config=ModelConfig.from_dict(ckpt.config),
            alphabet=ckpt.alphabet,
            vocab=ckpt.word_vocab,
        )
    if ckpt.kind == "lm":
        from .lm import LmConfig, LmRestorer

        return LmRestorer(
            params=ckpt.params,
            config=LmConfig.from_dict(ckpt.config),
            alphabet=ckpt.alphabet,
        )
    raise ValueError(f"unknown checkpoint kind {ckpt.kind!r}")


def load_restorer(path):
    return restorer_from_checkpoint(load_checkpoint(path))
