# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for gradient-descent stepping on a diagonal target.

Advances the full factors in place for a fixed number of steps. The target
matrix is the m-by-n diagonal embedding of ``sigma``, so the residual product
is never formed: the update uses the Gram matrices of the factors, which
keeps the per-step cost at O((m+n) d^2). Internally the factors are held
transposed (d-by-m) so every inner loop runs contiguously over the long
axis, and the two time levels ping-pong between buffers.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _one_step(double[:, ::1] TUs, double[:, ::1] TVs,
                    double[:, ::1] TUd, double[:, ::1] TVd,
                    double[:, ::1] MU, double[:, ::1] MV,
                    double[::1] sigma, double eta, double half_lam) noexcept nogil:
    cdef Py_ssize_t d = TUs.shape[0]
    cdef Py_ssize_t m = TUs.shape[1]
    cdef Py_ssize_t n = TVs.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, coef
    # Gram matrices of the source iterate: MV <- U^T U, MU <- V^T V.
    for j in range(d):
        for k in range(j, d):
            acc = 0.0
            for i in range(m):
                acc += TUs[j, i] * TUs[k, i]
            MV[j, k] = acc
            MV[k, j] = acc
    for j in range(d):
        for k in range(j, d):
            acc = 0.0
            for i in range(n):
                acc += TVs[j, i] * TVs[k, i]
            MU[j, k] = acc
            MU[k, j] = acc
    # Fold in the balancing-regularizer gradient: MU += (lam/2)(U^TU - V^TV),
    # MV -= the same.
    if half_lam != 0.0:
        for j in range(d):
            for k in range(d):
                acc = half_lam * (MV[j, k] - MU[j, k])
                MU[j, k] += acc
                MV[j, k] -= acc
    # U' = U + eta (Sigma V - U MU), transposed: row j over samples i.
    for j in range(d):
        for i in range(m):
            TUd[j, i] = TUs[j, i]
        for k in range(d):
            coef = -eta * MU[k, j]
            for i in range(m):
                TUd[j, i] += coef * TUs[k, i]
        for i in range(d):
            TUd[j, i] += eta * sigma[i] * TVs[j, i]
    # V' = V + eta (Sigma^T U - V MV).
    for j in range(d):
        for i in range(n):
            TVd[j, i] = TVs[j, i]
        for k in range(d):
            coef = -eta * MV[k, j]
            for i in range(n):
                TVd[j, i] += coef * TVs[k, i]
        for i in range(d):
            TVd[j, i] += eta * sigma[i] * TUs[j, i]


def step_chunk(double[:, ::1] U, double[:, ::1] V, double[::1] sigma,
               double eta, double lam, Py_ssize_t n_steps):
    """Run ``n_steps`` simultaneous GD updates of (U, V) in place.

    U is m-by-d, V is n-by-d, both C-contiguous float64. ``lam`` scales the
    balancing-regularizer gradient (0 gives plain GD). No finiteness checks
    are performed here; callers inspect the state between chunks.
    """
    cdef Py_ssize_t m = U.shape[0]
    cdef Py_ssize_t n = V.shape[0]
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t step, i, j
    cdef double half_lam = 0.5 * lam
    if n_steps <= 0:
        return

    TU_a_arr = np.empty((d, m), dtype=np.float64)
    TU_b_arr = np.empty((d, m), dtype=np.float64)
    TV_a_arr = np.empty((d, n), dtype=np.float64)
    TV_b_arr = np.empty((d, n), dtype=np.float64)
    gram = np.empty((2 * d, d), dtype=np.float64)
    cdef double[:, ::1] TU_a = TU_a_arr
    cdef double[:, ::1] TU_b = TU_b_arr
    cdef double[:, ::1] TV_a = TV_a_arr
    cdef double[:, ::1] TV_b = TV_b_arr
    cdef double[:, ::1] MU = gram[:d]
    cdef double[:, ::1] MV = gram[d:]

    for i in range(m):
        for j in range(d):
            TU_a[j, i] = U[i, j]
    for i in range(n):
        for j in range(d):
            TV_a[j, i] = V[i, j]

    cdef bint src_is_a = True
    with nogil:
        for step in range(n_steps):
            if src_is_a:
                _one_step(TU_a, TV_a, TU_b, TV_b, MU, MV, sigma, eta, half_lam)
            else:
                _one_step(TU_b, TV_b, TU_a, TV_a, MU, MV, sigma, eta, half_lam)
            src_is_a = not src_is_a

    if src_is_a:
        for i in range(m):
            for j in range(d):
                U[i, j] = TU_a[j, i]
        for i in range(n):
            for j in range(d):
                V[i, j] = TV_a[j, i]
    else:
        for i in range(m):
            for j in range(d):
                U[i, j] = TU_b[j, i]
        for i in range(n):
            for j in range(d):
                V[i, j] = TV_b[j, i]
