"""Minimal reverse-mode autodiff over dense float64 arrays.

A forward pass runs inside a `Tape` context; every primitive records a
backward closure in execution order, so one reverse sweep over the tape
propagates exact gradients. Tapes are rebuilt per forward pass (graphs
change size subject to subject). Outside a tape context the primitives
still compute values, which is the cheap inference path.

Gradients accumulate: calling `backward` twice without `reset_grads`
doubles them, and a tensor feeding two ops receives both contributions.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels


class ShapeMismatch(ValueError):
    pass


_node_counter = itertools.count()


class Tensor:
    """Dense float64 value with a lazily allocated gradient buffer."""

    __slots__ = ("value", "grad", "name", "node_id", "tape")

    def __init__(self, value, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self.node_id = next(_node_counter)
        self.tape: Tape | None = None

    @property
    def shape(self):
        return self.value.shape

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def reset_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Execution-ordered record of primitives for one forward pass."""

    def __init__(self):
        self._records: list[tuple[str, tuple[Tensor, ...], Tensor, Callable[[], None]]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.pop()
        return False

    def __len__(self):
        return len(self._records)

    def record(self, name, inputs, out, backward_fn):
        self._records.append((name, inputs, out, backward_fn))

    def reset_grads(self):
        """Drop every gradient touched by this tape (leaves included)."""
        for _, inputs, out, _ in self._records:
            out.reset_grad()
            for t in inputs:
                t.reset_grad()

    def run_backward(self):
        for _, _, _, fn in reversed(self._records):
            fn()


def _active_tape() -> Tape | None:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def backward(root: Tensor):
    """Accumulate d(root)/d(x) into x.grad for every tensor behind root.

    Leaf gradients (parameters, inputs) accumulate across calls;
    intermediate op outputs get a fresh gradient buffer per pass, so two
    passes exactly double the leaves.
    """
    if root.value.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    if root.tape is None:
        raise ValueError("backward: root was not recorded on a tape")
    for _, _, out, _ in root.tape._records:
        out.reset_grad()
    root.ensure_grad()
    root.grad += 1.0
    root.tape.run_backward()


def _emit(name, inputs, value, backward_fn) -> Tensor:
    out = Tensor(value)
    tape = _active_tape()
    if tape is not None:
        out.tape = tape
        tape.record(name, inputs, out, backward_fn(out))
    return out


def _unbroadcast(grad, shape):
    # undo numpy broadcasting: sum over expanded axes back to `shape`
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ------------------------------------------------------------ primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad @ b.value.T
            b.ensure_grad()
            b.grad += a.value.T @ out.grad
        return fn

    return _emit("matmul", (a, b), a.value @ b.value, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.value + b.value
    except ValueError:
        raise ShapeMismatch(f"add: incompatible shapes {a.shape} and {b.shape}")

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += _unbroadcast(out.grad, a.shape)
            b.ensure_grad()
            b.grad += _unbroadcast(out.grad, b.shape)
        return fn

    return _emit("add", (a, b), value, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        value = a.value * b.value
    except ValueError:
        raise ShapeMismatch(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += _unbroadcast(out.grad * b.value, a.shape)
            b.ensure_grad()
            b.grad += _unbroadcast(out.grad * a.value, b.shape)
        return fn

    return _emit("mul", (a, b), value, bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += c * out.grad
        return fn

    return _emit("scale", (a,), a.value * c, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def transpose(a: Tensor) -> Tensor:
    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad.T
        return fn

    return _emit("transpose", (a,), a.value.T, bwd)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"concat_last: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[1]

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad[:, :split]
            b.ensure_grad()
            b.grad += out.grad[:, split:]
        return fn

    return _emit("concat_last", (a, b), np.concatenate([a.value, b.value], axis=1), bwd)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"concat_rows: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[0]

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad[:split]
            b.ensure_grad()
            b.grad += out.grad[split:]
        return fn

    return _emit("concat_rows", (a, b), np.concatenate([a.value, b.value], axis=0), bwd)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            kernels.scatter_add_rows(a.grad, idx, out.grad)
        return fn

    return _emit("gather_rows", (a,), a.value[idx], bwd)


def segment_sum(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    if a.value.ndim != 2 or len(seg) != a.shape[0]:
        raise ShapeMismatch(f"segment_sum: values {a.shape} vs {len(seg)} segment ids")
    seg = np.asarray(seg, dtype=np.int64)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad[seg]
        return fn

    return _emit("segment_sum", (a,), kernels.segment_sum(a.value, seg, n_segments), bwd)


def segment_softmax(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Softmax of a column of scores over ragged segments (one per source node)."""
    if a.value.ndim != 2 or a.shape[1] != 1 or len(seg) != a.shape[0]:
        raise ShapeMismatch(f"segment_softmax: scores {a.shape} vs {len(seg)} segment ids")
    seg = np.asarray(seg, dtype=np.int64)
    alpha = kernels.segment_softmax(a.value[:, 0], seg, n_segments)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            g = kernels.segment_softmax_grad(alpha, out.grad[:, 0], seg, n_segments)
            a.grad += g[:, None]
        return fn

    return _emit("segment_softmax", (a,), alpha[:, None], bwd)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.value > 0
    deriv = np.where(mask, 1.0, slope)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * deriv
        return fn

    return _emit("leaky_relu", (a,), np.where(mask, a.value, slope * a.value), bwd)


def elu(a: Tensor) -> Tensor:
    value = np.where(a.value > 0, a.value, np.expm1(a.value))
    deriv = np.where(a.value > 0, 1.0, value + 1.0)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * deriv
        return fn

    return _emit("elu", (a,), value, bwd)


def sigmoid(a: Tensor) -> Tensor:
    value = 1.0 / (1.0 + np.exp(-a.value))

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * value * (1.0 - value)
        return fn

    return _emit("sigmoid", (a,), value, bwd)


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.value)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * (1.0 - value * value)
        return fn

    return _emit("tanh", (a,), value, bwd)


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax along the last axis (row of class scores)."""
    mx = a.value.max(axis=-1, keepdims=True)
    shifted = a.value - mx
    value = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            p = np.exp(value)
            a.grad += out.grad - p * out.grad.sum(axis=-1, keepdims=True)
        return fn

    return _emit("log_softmax", (a,), value, bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad[0, 0]
        return fn

    return _emit("sum_all", (a,), np.array([[a.value.sum()]]), bwd)


def mean_all(a: Tensor) -> Tensor:
    inv = 1.0 / a.value.size

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad[0, 0] * inv
        return fn

    return _emit("mean_all", (a,), np.array([[a.value.mean()]]), bwd)


def square(a: Tensor) -> Tensor:
    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * 2.0 * a.value
        return fn

    return _emit("square", (a,), a.value * a.value, bwd)


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.value)

    def bwd(out):
        def fn():
            if out.grad is None:
                return
            a.ensure_grad()
            a.grad += out.grad * sign
        return fn

    return _emit("absolute", (a,), np.abs(a.value), bwd)


# -------------------------------------------------------- gradient check

@dataclass
class GradCheckReport:
    h: float
    tol: float
    per_param: dict[str, float]
    max_rel_err: float
    worst_param: str
    passed: bool

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max relative error {self.max_rel_err:.3e} "
                f"(worst parameter {self.worst_param!r}, tol {self.tol:.1e}, h {self.h:.1e})")


def gradient_check(f: Callable[[], Tensor], params: dict[str, Tensor],
                   h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central differences.

    `f` must rebuild its forward pass on each call (deterministically) and
    return a scalar tensor. Analytic gradients come from one taped run;
    numeric ones perturb each parameter entry by +/- h with no tape active.
    The per-parameter error is the max absolute deviation scaled by the
    gradient magnitude of that parameter (floored at 1e-6 so dead-flat
    gradients do not divide by zero).
    """
    for p in params.values():
        p.reset_grad()
    with Tape() as tape:
        loss = f()
        backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
                for name, p in params.items()}
    tape.reset_grads()

    per_param = {}
    worst = ""
    worst_err = 0.0
    for name, p in params.items():
        flat = p.value.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f().item()
            flat[i] = orig - h
            f_minus = f().item()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        numeric = numeric.reshape(p.value.shape)
        a = analytic[name]
        denom = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-6)
        err = float(np.abs(a - numeric).max(initial=0.0) / denom)
        per_param[name] = err
        if err >= worst_err:
            worst_err = err
            worst = name
    return GradCheckReport(h=h, tol=tol, per_param=per_param,
                           max_rel_err=worst_err, worst_param=worst,
                           passed=worst_err < tol)


# ----------------------------------------------------------- checkpoints

def save_checkpoint(named_params: dict[str, Tensor], path):
    """Write parameters as a flat JSON map name -> {shape, values}."""
    payload = {
        name: {"shape": list(p.value.shape), "values": p.value.reshape(-1).tolist()}
        for name, p in named_params.items()
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        payload = json.load(fh)
    out = {}
    for name, rec in payload.items():
        arr = np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"])
        out[name] = arr
    return out
