"""Named-tensor checkpoint serialization.

Layout: magic bytes ``PYML1``, an 8-byte little-endian header length,
a JSON header (model kind and config, step counter, optimizer scalars,
rng state, alphabet symbols, optional word vocabulary, and the ordered
tensor manifest of name/shape pairs), then the raw little-endian
float32 tensor data concatenated in manifest order.

Round-trips are bit-exact for float32 tensors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import AdamState, Tensor
from .vocab import RESERVED, CharAlphabet, WordVocab

MAGIC = b"PYML1"


@dataclass
class Checkpoint:
    kind: str                       # "seq2seq" or "lm"
    config: dict
    params: dict[str, Tensor]
    alphabet: CharAlphabet
    word_vocab: WordVocab | None = None
    opt_state: AdamState | None = None
    rng_state: dict | None = None
    step: int = 0


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors: list[tuple[str, np.ndarray]] = [
        (name, p.data) for name, p in ckpt.params.items()
    ]
    adam = None
    if ckpt.opt_state is not None:
        state = ckpt.opt_state
        adam = {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
                "eps": state.eps, "step": state.step}
        tensors += [(f"adam.m.{n}", a) for n, a in state.m.items()]
        tensors += [(f"adam.v.{n}", a) for n, a in state.v.items()]

    header = {
        "kind": ckpt.kind,
        "config": ckpt.config,
        "step": ckpt.step,
        "adam": adam,
        "rng": ckpt.rng_state,
        "alphabet": ckpt.alphabet.symbols,
        "word_vocab": (
            list(zip(ckpt.word_vocab.words, ckpt.word_vocab.counts))
            if ckpt.word_vocab is not None else None
        ),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        offset += n * 4
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes after tensor data")

    params = {
        name: Tensor(arr, requires_grad=True, name=name)
        for name, arr in arrays.items()
        if not name.startswith("adam.")
    }
    opt_state = None
    if header.get("adam") is not None:
        adam = header["adam"]
        opt_state = AdamState(lr=adam["lr"], beta1=adam["beta1"], beta2=adam["beta2"],
                              eps=adam["eps"], step=adam["step"])
        for name in params:
            opt_state.m[name] = arrays[f"adam.m.{name}"]
            opt_state.v[name] = arrays[f"adam.v.{name}"]

    symbols = header["alphabet"]
    alphabet = CharAlphabet(symbols[len(RESERVED):])
    if alphabet.symbols != symbols:
        raise ValueError(f"{path}: alphabet in header is not in canonical order")
    word_vocab = None
    if header.get("word_vocab") is not None:
        entries = [(w, int(c)) for w, c in header["word_vocab"]]
        word_vocab = WordVocab(entries[2:])  # first two are the reserved rows

    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        params=params,
        alphabet=alphabet,
        word_vocab=word_vocab,
        opt_state=opt_state,
        rng_state=header.get("rng"),
        step=header.get("step", 0),
    )
