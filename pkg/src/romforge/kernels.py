"""Scatter kernels for sparse polynomial force evaluation.

The compiled extension ``romforge._kernels`` is used when it imports; the
numpy implementations below are the fallback. Setting the environment
variable ``ROMFORGE_PURE_PYTHON=1`` forces the fallback.

All routines share one contract: ``rows`` is sorted non-decreasing, ``U`` has
shape ``(n_state, n_samples)`` and ``out`` has shape ``(n_rows, n_samples)``;
term ``e`` adds ``coef[e] * U[a[e]] * U[b[e]] * ...`` into ``out[rows[e]]``.
"""

import os

import numpy as np

__all__ = ["BACKEND", "scatter_lin", "scatter_quad", "scatter_cubic", "numpy_kernels"]


def _segments(rows):
    if rows.size == 0:
        return rows, rows
    starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
    return rows[starts], starts


def _accumulate(rows, vals, out):
    if rows.size == 0:
        return
    targets, starts = _segments(rows)
    out[targets] += np.add.reduceat(vals, starts, axis=0)


def np_scatter_lin(rows, coef, a, U, out):
    _accumulate(rows, coef[:, None] * U[a], out)


def np_scatter_quad(rows, coef, a, b, U, out):
    _accumulate(rows, coef[:, None] * U[a] * U[b], out)


def np_scatter_cubic(rows, coef, a, b, c, U, out):
    _accumulate(rows, coef[:, None] * U[a] * U[b] * U[c], out)


class numpy_kernels:
    """Namespace holding the pure-numpy implementations (used by benchmarks)."""

    scatter_lin = staticmethod(np_scatter_lin)
    scatter_quad = staticmethod(np_scatter_quad)
    scatter_cubic = staticmethod(np_scatter_cubic)


_force_pure = os.environ.get("ROMFORGE_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("pure-python kernels requested")
    from romforge._kernels import scatter_cubic, scatter_lin, scatter_quad

    BACKEND = "cython"
except ImportError:
    scatter_lin = np_scatter_lin
    scatter_quad = np_scatter_quad
    scatter_cubic = np_scatter_cubic
    BACKEND = "numpy"
