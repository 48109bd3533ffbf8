# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter kernels for sparse polynomial forces.

Each routine accumulates one monomial family into ``out`` for every column
(time sample) of the state matrix ``U``.
"""

ctypedef double f8
from libc.stdint cimport int64_t as i8


def scatter_lin(const i8[::1] rows, const f8[::1] coef, const i8[::1] a,
                const f8[:, ::1] U, f8[:, ::1] out):
    cdef Py_ssize_t e, m, n_terms = coef.shape[0], n_cols = U.shape[1]
    cdef i8 r, ia
    cdef f8 c
    for e in range(n_terms):
        r = rows[e]
        ia = a[e]
        c = coef[e]
        for m in range(n_cols):
            out[r, m] += c * U[ia, m]


def scatter_quad(const i8[::1] rows, const f8[::1] coef, const i8[::1] a,
                 const i8[::1] b, const f8[:, ::1] U, f8[:, ::1] out):
    cdef Py_ssize_t e, m, n_terms = coef.shape[0], n_cols = U.shape[1]
    cdef i8 r, ia, ib
    cdef f8 c
    for e in range(n_terms):
        r = rows[e]
        ia = a[e]
        ib = b[e]
        c = coef[e]
        for m in range(n_cols):
            out[r, m] += c * U[ia, m] * U[ib, m]


def scatter_cubic(const i8[::1] rows, const f8[::1] coef, const i8[::1] a,
                  const i8[::1] b, const i8[::1] c3, const f8[:, ::1] U,
                  f8[:, ::1] out):
    cdef Py_ssize_t e, m, n_terms = coef.shape[0], n_cols = U.shape[1]
    cdef i8 r, ia, ib, ic
    cdef f8 c
    for e in range(n_terms):
        r = rows[e]
        ia = a[e]
        ib = b[e]
        ic = c3[e]
        c = coef[e]
        for m in range(n_cols):
            out[r, m] += c * U[ia, m] * U[ib, m] * U[ic, m]
