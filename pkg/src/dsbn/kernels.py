"""Segment/scatter kernels used by the autodiff primitives.

These are the hot inner loops of encoder training: softmax over ragged
per-node neighbor segments and row scatter-adds. Two interchangeable
implementations are provided, a numba-jitted one and a pure-numpy one.
Selection is controlled by the DSBN_BACKEND environment variable
("numba" or "numpy"); default is numba when importable, else numpy.

Both backends accumulate in the same edge order, so results agree to
the last bit. `benchmarks/bench_kernels.py` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

_REQUESTED = os.environ.get("DSBN_BACKEND", "").strip().lower()
if _REQUESTED not in ("", "numba", "numpy"):
    raise ValueError(f"DSBN_BACKEND must be 'numba' or 'numpy', got {_REQUESTED!r}")

_HAVE_NUMBA = False
if _REQUESTED != "numpy":
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _REQUESTED == "numba":
            raise ImportError("DSBN_BACKEND=numba but numba is not installed")


# ---------------------------------------------------------------- numpy

def _scatter_add_rows_np(acc, idx, rows):
    np.add.at(acc, idx, rows)
    return acc


def _segment_sum_np(values, seg, n_segments):
    out = np.zeros((n_segments, values.shape[1]))
    np.add.at(out, seg, values)
    return out


def _segment_softmax_np(scores, seg, n_segments):
    # max-subtraction per segment keeps exp() in range
    mx = np.full(n_segments, -np.inf)
    np.maximum.at(mx, seg, scores)
    ex = np.exp(scores - mx[seg])
    denom = np.zeros(n_segments)
    np.add.at(denom, seg, ex)
    return ex / denom[seg]


def _segment_softmax_grad_np(alpha, grad_out, seg, n_segments):
    dot = np.zeros(n_segments)
    np.add.at(dot, seg, alpha * grad_out)
    return alpha * (grad_out - dot[seg])


# ---------------------------------------------------------------- numba

if _HAVE_NUMBA:

    @njit(cache=True)
    def _scatter_add_rows_nb(acc, idx, rows):
        for e in range(idx.shape[0]):
            i = idx[e]
            for c in range(rows.shape[1]):
                acc[i, c] += rows[e, c]
        return acc

    @njit(cache=True)
    def _segment_sum_nb(values, seg, n_segments):
        out = np.zeros((n_segments, values.shape[1]))
        for e in range(seg.shape[0]):
            i = seg[e]
            for c in range(values.shape[1]):
                out[i, c] += values[e, c]
        return out

    @njit(cache=True)
    def _segment_softmax_nb(scores, seg, n_segments):
        mx = np.full(n_segments, -np.inf)
        for e in range(seg.shape[0]):
            if scores[e] > mx[seg[e]]:
                mx[seg[e]] = scores[e]
        ex = np.empty_like(scores)
        denom = np.zeros(n_segments)
        for e in range(seg.shape[0]):
            ex[e] = np.exp(scores[e] - mx[seg[e]])
            denom[seg[e]] += ex[e]
        for e in range(seg.shape[0]):
            ex[e] /= denom[seg[e]]
        return ex

    @njit(cache=True)
    def _segment_softmax_grad_nb(alpha, grad_out, seg, n_segments):
        dot = np.zeros(n_segments)
        for e in range(seg.shape[0]):
            dot[seg[e]] += alpha[e] * grad_out[e]
        out = np.empty_like(alpha)
        for e in range(seg.shape[0]):
            out[e] = alpha[e] * (grad_out[e] - dot[seg[e]])
        return out


if _HAVE_NUMBA:
    BACKEND = "numba"
    scatter_add_rows = _scatter_add_rows_nb
    segment_sum = _segment_sum_nb
    segment_softmax = _segment_softmax_nb
    segment_softmax_grad = _segment_softmax_grad_nb
else:
    BACKEND = "numpy"
    scatter_add_rows = _scatter_add_rows_np
    segment_sum = _segment_sum_np
    segment_softmax = _segment_softmax_np
    segment_softmax_grad = _segment_softmax_grad_np


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
