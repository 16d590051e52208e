"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

Provides exactly the primitive set needed by recurrent sequence models
(matmul, elementwise ops, concat/slice, activations, softmax families,
embedding lookup, dropout, cross-entropy) plus the Adam optimizer,
global-norm gradient clipping, and a finite-difference gradient checker.

Gradients are recorded on an explicit :class:`Tape` in execution order,
so the backward pass is a simple reverse iteration — no recursion, no
graph traversal, safe for graphs tens of thousands of nodes deep (long
recurrent rollouts).
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Tape",
    "RngState",
    "AdamState",
    "matmul",
    "add",
    "mul",
    "concat",
    "slice_axis",
    "sigmoid",
    "tanh",
    "softmax",
    "log_softmax",
    "embedding_gather",
    "dropout",
    "cross_entropy",
    "cross_entropy_rows",
    "reduce_sum",
    "reduce_mean",
    "stack",
    "reshape",
    "attention_scores",
    "attention_combine",
    "select_rows",
    "time_permute",
    "backward",
    "finite_difference_check",
    "clip_global_norm",
    "adam_step",
    "set_debug_checks",
]

# When enabled, every primitive validates that its output is finite.
# Off by default: the per-node cost is measurable inside long recurrent
# rollouts, and the trainer already aborts on a non-finite loss.
_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class Tensor:
    """A dense real-valued array plus gradient bookkeeping.

    ``data`` is always a numpy array (float32 for training, float64 for
    gradient checking). ``grad`` is lazily allocated during the backward
    pass; it is ``None`` for tensors no backward pass has touched.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def grad_array(self) -> np.ndarray:
        """The accumulated gradient, or zeros if nothing reached this tensor."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def _accumulate(self, g: np.ndarray, fresh: bool = False) -> None:
        # ``fresh`` marks a newly allocated array this tensor may adopt
        # outright; others are copied so no two tensors alias one buffer
        if self.grad is None:
            self.grad = g if fresh else g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


class Tape:
    """Execution-ordered record of primitive applications.

    Recording order is a topological order of the graph, so reversing it
    is a valid backward schedule. A tape supports one backward pass.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._leaves: dict[int, Tensor] = {}
        self._produced: set[int] = set()
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Tensor, inputs: Iterable[Tensor], backward_fn) -> None:
        for t in inputs:
            if t.requires_grad and id(t) not in self._produced:
                self._leaves[id(t)] = t
        self._produced.add(id(out))
        self._nodes.append((out, backward_fn))

    @contextlib.contextmanager
    def recording(self):
        _TAPE_STACK.append(self)
        try:
            yield self
        finally:
            _TAPE_STACK.pop()

    def release(self) -> None:
        """Drop recorded nodes so intermediates can be garbage-collected."""
        self._nodes.clear()
        self._leaves.clear()
        self._produced.clear()


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _finish(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise FloatingPointError(f"{op}: non-finite output")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = _active_tape()
    if tape is not None and requires:
        tape._record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data.T, fresh=True)
        if b.requires_grad:
            b._accumulate(a.data.T @ g, fresh=True)

    return _finish(a.data @ b.data, (a, b), backward_fn, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ValueError(f"add: incompatible shapes {a.shape} + {b.shape}") from None

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = _unbroadcast(g, a.shape)
            a._accumulate(ga, fresh=ga is not g)
        if b.requires_grad:
            gb = _unbroadcast(g, b.shape)
            b._accumulate(gb, fresh=gb is not g)

    return _finish(out, (a, b), backward_fn, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ValueError(f"mul: incompatible shapes {a.shape} * {b.shape}") from None

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape), fresh=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape), fresh=True)

    return _finish(out, (a, b), backward_fn, "mul")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: empty input list")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g: np.ndarray) -> None:
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(start, stop)
                t._accumulate(g[tuple(idx)])

    return _finish(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn, "concat")


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    t = _as_tensor(t)
    if not (0 <= start < stop <= t.shape[axis]):
        raise ValueError(f"slice_axis: [{start}:{stop}] out of bounds for axis {axis} of shape {t.shape}")
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[idx] = g
            t._accumulate(full, fresh=True)

    return _finish(t.data[idx].copy(), (t,), backward_fn, "slice_axis")


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    t = _as_tensor(t)
    old = t.shape

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g.reshape(old))

    return _finish(t.data.reshape(shape), (t,), backward_fn, "reshape")


def sigmoid(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = expit(t.data)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g * out * (1.0 - out), fresh=True)

    return _finish(out, (t,), backward_fn, "sigmoid")


def tanh(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.tanh(t.data)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g * (1.0 - out * out), fresh=True)

    return _finish(out, (t,), backward_fn, "tanh")


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = _as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            dot = (g * out).sum(axis=axis, keepdims=True)
            t._accumulate(out * (g - dot), fresh=True)

    return _finish(out, (t,), backward_fn, "softmax")


def log_softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = _as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - logz
    soft = np.exp(out)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g - soft * g.sum(axis=axis, keepdims=True), fresh=True)

    return _finish(out, (t,), backward_fn, "log_softmax")


def embedding_gather(table: Tensor, ids) -> Tensor:
    """Rows of an embedding table: output shape = ids.shape + (embed_dim,)."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(
            f"embedding_gather: id out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )

    def backward_fn(g: np.ndarray) -> None:
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))

    return _finish(table.data[ids], (table,), backward_fn, "embedding_gather")


def dropout(t: Tensor, p: float, rng: "RngState", training: bool = True) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return t
    t = _as_tensor(t)
    keep = rng.random(t.shape) >= p
    scale = 1.0 / (1.0 - p)
    mask = keep.astype(t.data.dtype) * np.asarray(scale, dtype=t.data.dtype)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g * mask, fresh=True)

    return _finish(t.data * mask, (t,), backward_fn, "dropout")


def cross_entropy_rows(logits: Tensor, targets) -> Tensor:
    """Per-row negative log-likelihood of integer targets; shape (N,)."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(
            f"cross_entropy: logits {logits.shape} incompatible with targets {targets.shape}"
        )
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(logits.shape[0])
    out = -logp[rows, targets]

    def backward_fn(g: np.ndarray) -> None:
        if logits.requires_grad:
            grad = np.exp(logp)
            grad[rows, targets] -= 1.0
            logits._accumulate(grad * g[:, None], fresh=True)

    return _finish(out, (logits,), backward_fn, "cross_entropy")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood over rows; scalar."""
    return reduce_mean(cross_entropy_rows(logits, targets))


def reduce_sum(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            if axis is None:
                t._accumulate(np.full_like(t.data, g), fresh=True)
            else:
                t._accumulate(np.broadcast_to(np.expand_dims(g, axis), t.shape).copy(), fresh=True)

    return _finish(t.data.sum(axis=axis), (t,), backward_fn, "reduce_sum")


def reduce_mean(t: Tensor, axis: int | None = None) -> Tensor:
    t = _as_tensor(t)
    n = t.data.size if axis is None else t.shape[axis]

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            if axis is None:
                t._accumulate(np.full_like(t.data, g / n), fresh=True)
            else:
                t._accumulate(np.broadcast_to(np.expand_dims(g / n, axis), t.shape).copy(), fresh=True)

    return _finish(t.data.mean(axis=axis), (t,), backward_fn, "reduce_mean")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]

    def backward_fn(g: np.ndarray) -> None:
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(part)

    return _finish(np.stack([t.data for t in tensors], axis=axis), tensors, backward_fn, "stack")


def attention_scores(memory: Tensor, query: Tensor) -> Tensor:
    """Dot of a per-row query against every memory position.

    memory (B, T, H) x query (B, H) -> scores (B, T).
    """
    memory, query = _as_tensor(memory), _as_tensor(query)
    if memory.data.ndim != 3 or query.data.ndim != 2 or memory.shape[2] != query.shape[1]:
        raise ValueError(f"attention_scores: memory {memory.shape} vs query {query.shape}")
    out = np.einsum("bth,bh->bt", memory.data, query.data)

    def backward_fn(g: np.ndarray) -> None:
        if memory.requires_grad:
            memory._accumulate(g[:, :, None] * query.data[:, None, :], fresh=True)
        if query.requires_grad:
            query._accumulate(np.einsum("bt,bth->bh", g, memory.data), fresh=True)

    return _finish(out, (memory, query), backward_fn, "attention_scores")


def attention_combine(weights: Tensor, memory: Tensor) -> Tensor:
    """Attention-weighted sum of memory: (B, T) x (B, T, H) -> (B, H)."""
    weights, memory = _as_tensor(weights), _as_tensor(memory)
    if weights.shape != memory.shape[:2]:
        raise ValueError(f"attention_combine: weights {weights.shape} vs memory {memory.shape}")
    out = np.einsum("bt,bth->bh", weights.data, memory.data)

    def backward_fn(g: np.ndarray) -> None:
        if weights.requires_grad:
            weights._accumulate(np.einsum("bh,bth->bt", g, memory.data), fresh=True)
        if memory.requires_grad:
            memory._accumulate(weights.data[:, :, None] * g[:, None, :], fresh=True)

    return _finish(out, (weights, memory), backward_fn, "attention_combine")


def select_rows(t: Tensor, idx) -> Tensor:
    """Per-row time selection: t (B, T, H), idx (B,) -> (B, H)."""
    t = _as_tensor(t)
    idx = np.asarray(idx)
    rows = np.arange(t.shape[0])

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            full = np.zeros_like(t.data)
            full[rows, idx] = g
            t._accumulate(full, fresh=True)

    return _finish(t.data[rows, idx].copy(), (t,), backward_fn, "select_rows")


def time_permute(t: Tensor, perm) -> Tensor:
    """Per-row permutation of the time axis: out[b, i] = t[b, perm[b, i]]."""
    t = _as_tensor(t)
    perm = np.asarray(perm)
    rows = np.arange(t.shape[0])[:, None]
    inv = np.argsort(perm, axis=1)

    def backward_fn(g: np.ndarray) -> None:
        if t.requires_grad:
            t._accumulate(g[rows, inv], fresh=True)

    return _finish(t.data[rows, perm].copy(), (t,), backward_fn, "time_permute")


# --------------------------------------------------------------------------
# backward pass and verification
# --------------------------------------------------------------------------


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into every requires_grad tensor on the tape.

    Leaf tensors the loss never touches end with a zero gradient, per the
    additive-accumulation contract.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if tape._consumed:
        raise RuntimeError("backward: tape already consumed (one backward pass per tape)")
    tape._consumed = True
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._nodes):
        if out.grad is not None:
            backward_fn(out.grad)
    for leaf in tape._leaves.values():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)


def finite_difference_check(
    f: Callable[[], Tensor],
    x: Tensor,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients of x.

    ``f`` must be deterministic across calls (freeze any stochastic ops by
    re-seeding their RngState inside ``f``). The analytic gradient comes
    from one taped backward pass; each coordinate is then perturbed by
    ±h for the numeric estimate.
    """
    tape = Tape()
    with tape.recording():
        loss = f()
    x.zero_grad()
    backward(tape, loss)
    analytic = x.grad_array().copy()

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f().data)
        flat[i] = orig - h
        lo = float(f().data)
        flat[i] = orig
        numeric = (hi - lo) / (2.0 * h)
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst


def clip_global_norm(grads: Sequence[np.ndarray], max_norm: float = 5.0) -> tuple[list[np.ndarray], float]:
    """Scale gradients in place so the global L2 norm is at most max_norm.

    Returns (grads, pre-clip global norm). Direction is preserved: all
    gradients share one scale factor.
    """
    if max_norm <= 0:
        raise ValueError(f"clip_global_norm: max_norm must be > 0, got {max_norm}")
    grads = list(grads)
    total = 0.0
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("clip_global_norm: non-finite gradient")
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return grads, norm


# --------------------------------------------------------------------------
# optimization and randomness
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments and hyperparameters for a named parameter set."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, Tensor], lr: float = 1e-3, **kwargs) -> "AdamState":
        state = cls(lr=lr, **kwargs)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """One Adam update with bias correction, reading each tensor's .grad."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = p.grad_array()
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"adam_step: moment shape {m.shape} != param shape {p.shape} for {name!r}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)


class RngState:
    """Seeded random stream for every stochastic operation.

    All randomness (initialization, dropout masks, sampling, scheduled
    sampling coins) flows through one of these, so a fixed seed plus a
    fixed operation order reproduces results bit-exactly. The underlying
    generator state is JSON-serializable for checkpointing.
    """

    def __init__(self, seed: int | None = 0):
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    @classmethod
    def from_seed_sequence(cls, *entropy: int) -> "RngState":
        rng = cls.__new__(cls)
        rng.seed = None
        rng._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))
        return rng

    def uniform(self, low: float, high: float, size, dtype=np.float32) -> np.ndarray:
        return self._gen.uniform(low, high, size=size).astype(dtype)

    def random(self, size) -> np.ndarray:
        return self._gen.random(size=size)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high] inclusive."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def coin(self, p: float, size=None):
        return self._gen.random(size=size) < p

    def choice(self, n: int) -> int:
        return int(self._gen.integers(0, n))

    def state_dict(self) -> dict:
        state = self._gen.bit_generator.state
        return {"seed": self.seed, "pcg64": {k: str(v) if isinstance(v, int) else v
                                             for k, v in state["state"].items()},
                "has_uint32": state["has_uint32"], "uinteger": state["uinteger"]}

    def load_state_dict(self, d: dict) -> None:
        self.seed = d.get("seed")
        state = self._gen.bit_generator.state
        state["state"] = {k: int(v) for k, v in d["pcg64"].items()}
        state["has_uint32"] = d["has_uint32"]
        state["uinteger"] = d["uinteger"]
        self._gen.bit_generator.state = state
