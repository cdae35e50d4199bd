# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 integrator for networks of coupled oscillators.

Mirrors ``oscgroup._kernels_py.integrate`` operation for operation so the
two backends agree to rounding.
"""

import numpy as np

from libc.math cimport tanh, isfinite


cdef void _rhs(
    Py_ssize_t n,
    const double[::1] v,
    const double[::1] w,
    const double[::1] drive,
    const int[::1] indptr,
    const int[::1] indices,
    const double[::1] gains,
    const int[::1] p_indptr,
    const int[::1] p_indices,
    const double[::1] p_data,
    const int[::1] pt_indptr,
    const int[::1] pt_indices,
    const double[::1] pt_data,
    const double[::1] knode,
    double alpha,
    double c,
    double beta,
    double[::1] dv,
    double[::1] dw,
    double[::1] rv,
    double[::1] rw,
) noexcept nogil:
    cdef Py_ssize_t i, p, j, m
    cdef Py_ssize_t n_proj = rv.shape[0]
    cdef double vi, wi, v2, v3, v7, cv, cw, g, sv, sw

    for i in range(n):
        vi = v[i]
        wi = w[i]
        v2 = vi * vi
        v3 = v2 * vi
        v7 = v3 * v3 * vi
        cv = 0.0
        cw = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            g = gains[p]
            cv = cv + g * (v[j] - vi)
            cw = cw + g * (w[j] - wi)
        dv[i] = 3.0 * vi - v3 - v7 + 2.0 - wi + drive[i] + cv
        dw[i] = c * (alpha * (1.0 + tanh(beta * vi)) - wi) + cw

    if n_proj == 0:
        return

    for m in range(n_proj):
        sv = 0.0
        sw = 0.0
        for p in range(p_indptr[m], p_indptr[m + 1]):
            j = p_indices[p]
            sv = sv + p_data[p] * v[j]
            sw = sw + p_data[p] * w[j]
        rv[m] = sv
        rw[m] = sw
    for i in range(n):
        if pt_indptr[i] == pt_indptr[i + 1]:
            continue
        sv = 0.0
        sw = 0.0
        for p in range(pt_indptr[i], pt_indptr[i + 1]):
            m = pt_indices[p]
            sv = sv + pt_data[p] * rv[m]
            sw = sw + pt_data[p] * rw[m]
        dv[i] = dv[i] - knode[i] * sv
        dw[i] = dw[i] - knode[i] * sw


def integrate(
    double[::1] v,
    double[::1] w,
    const double[::1] drive,
    const int[::1] indptr,
    const int[::1] indices,
    const double[::1] gains,
    const int[::1] p_indptr,
    const int[::1] p_indices,
    const double[::1] p_data,
    const int[::1] pt_indptr,
    const int[::1] pt_indices,
    const double[::1] pt_data,
    const double[::1] knode,
    double alpha,
    double c,
    double beta,
    double dt,
    long n_steps,
    long sample_every,
    double[:, ::1] out_v,
    out_w=None,
):
    """Advance ``(v, w)`` in place by ``n_steps`` RK4 steps.

    Returns ``(step, index)`` of the first non-finite value, or ``(-1, -1)``.
    """
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t n_proj = p_indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef long s, row = 0
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    cdef bint keep_w = out_w is not None
    cdef double[:, ::1] ow
    cdef long bad_step = -1
    cdef Py_ssize_t bad_index = -1

    if n_proj < 0:
        n_proj = 0
    cdef double[::1] k1v = np.empty(n), k1w = np.empty(n)
    cdef double[::1] k2v = np.empty(n), k2w = np.empty(n)
    cdef double[::1] k3v = np.empty(n), k3w = np.empty(n)
    cdef double[::1] k4v = np.empty(n), k4w = np.empty(n)
    cdef double[::1] tv = np.empty(n), tw = np.empty(n)
    cdef double[::1] rv = np.empty(n_proj), rw = np.empty(n_proj)
    if keep_w:
        ow = out_w

    for i in range(n):
        out_v[0, i] = v[i]
        if keep_w:
            ow[0, i] = w[i]

    with nogil:
        for s in range(n_steps):
            _rhs(n, v, w, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
                 pt_indptr, pt_indices, pt_data, knode, alpha, c, beta, k1v, k1w, rv, rw)
            for i in range(n):
                tv[i] = v[i] + h2 * k1v[i]
                tw[i] = w[i] + h2 * k1w[i]
            _rhs(n, tv, tw, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
                 pt_indptr, pt_indices, pt_data, knode, alpha, c, beta, k2v, k2w, rv, rw)
            for i in range(n):
                tv[i] = v[i] + h2 * k2v[i]
                tw[i] = w[i] + h2 * k2w[i]
            _rhs(n, tv, tw, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
                 pt_indptr, pt_indices, pt_data, knode, alpha, c, beta, k3v, k3w, rv, rw)
            for i in range(n):
                tv[i] = v[i] + dt * k3v[i]
                tw[i] = w[i] + dt * k3w[i]
            _rhs(n, tv, tw, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
                 pt_indptr, pt_indices, pt_data, knode, alpha, c, beta, k4v, k4w, rv, rw)
            for i in range(n):
                v[i] = v[i] + h6 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
                w[i] = w[i] + h6 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i])
                if not (isfinite(v[i]) and isfinite(w[i])):
                    if bad_step < 0:
                        bad_step = s
                        bad_index = i
            if bad_step >= 0:
                break
            if (s + 1) % sample_every == 0:
                row = row + 1
                for i in range(n):
                    out_v[row, i] = v[i]
                if keep_w:
                    for i in range(n):
                        ow[row, i] = w[i]

    return bad_step, bad_index
