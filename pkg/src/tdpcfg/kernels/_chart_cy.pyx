# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled chart kernels.

Same contract and scaling convention as _chart_py: scaled inside vectors
with per-cell exponents, max entry of each live cell normalized to 1.
Plain tiled C loops (no BLAS) so the measured cost tracks the arithmetic
operation count across grammar sizes.
"""

import numpy as np

from libc.math cimport exp, log, INFINITY


def inside_dense(const double[:, :, ::1] T, const double[:, ::1] Q,
                 const double[::1] r, const long[::1] ids):
    cdef Py_ssize_t n = T.shape[0], m = T.shape[1], p = Q.shape[0]
    cdef Py_ssize_t l = ids.shape[0]
    s_np = np.zeros((l, l, m))
    c_np = np.zeros((l, l))
    alive_np = np.zeros((l, l), dtype=np.uint8)
    acc_np = np.zeros(n)
    cdef double[:, :, ::1] s = s_np
    cdef double[:, ::1] c = c_np
    cdef unsigned char[:, ::1] alive = alive_np
    cdef double[::1] acc = acc_np
    cdef Py_ssize_t i, j, k, w, a, b, cc, t
    cdef double mu, e_star, e_k, f, dot, tot, x

    for i in range(l):
        mu = 0.0
        for t in range(p):
            if Q[t, ids[i]] > mu:
                mu = Q[t, ids[i]]
        if mu > 0.0:
            for t in range(p):
                s[i, i, n + t] = Q[t, ids[i]] / mu
            c[i, i] = log(mu)
            alive[i, i] = 1

    for w in range(2, l + 1):
        for i in range(l - w + 1):
            j = i + w - 1
            e_star = -INFINITY
            for k in range(i, j):
                if alive[i, k] and alive[k + 1, j]:
                    e_k = c[i, k] + c[k + 1, j]
                    if e_k > e_star:
                        e_star = e_k
            for a in range(n):
                acc[a] = 0.0
            if e_star != -INFINITY:
                for k in range(i, j):
                    if not (alive[i, k] and alive[k + 1, j]):
                        continue
                    f = exp(c[i, k] + c[k + 1, j] - e_star)
                    if f == 0.0:
                        continue
                    for a in range(n):
                        tot = 0.0
                        for b in range(m):
                            x = s[i, k, b]
                            if x == 0.0:
                                continue
                            dot = 0.0
                            for cc in range(m):
                                dot += T[a, b, cc] * s[k + 1, j, cc]
                            tot += x * dot
                        acc[a] += f * tot
            mu = 0.0
            for a in range(n):
                if acc[a] > mu:
                    mu = acc[a]
            if mu > 0.0:
                for a in range(n):
                    s[i, j, a] = acc[a] / mu
                c[i, j] = e_star + log(mu)
                alive[i, j] = 1
    return s_np, c_np, alive_np.view(bool), None, None


def inside_factored(const double[:, ::1] U, const double[:, ::1] V,
                    const double[:, ::1] W, const double[:, ::1] Q,
                    const double[::1] r, const long[::1] ids):
    cdef Py_ssize_t n = U.shape[0], d = U.shape[1], m = V.shape[0]
    cdef Py_ssize_t p = Q.shape[0], l = ids.shape[0]
    s_np = np.zeros((l, l, m))
    c_np = np.zeros((l, l))
    alive_np = np.zeros((l, l), dtype=np.uint8)
    P_np = np.zeros((l, l, d))
    R_np = np.zeros((l, l, d))
    acc_np = np.zeros(d)
    raw_np = np.zeros(n)
    cdef double[:, :, ::1] s = s_np
    cdef double[:, ::1] c = c_np
    cdef unsigned char[:, ::1] alive = alive_np
    cdef double[:, :, ::1] P = P_np
    cdef double[:, :, ::1] R = R_np
    cdef double[::1] acc = acc_np
    cdef double[::1] raw = raw_np
    cdef Py_ssize_t i, j, k, w, a, b, t
    cdef double mu, e_star, e_k, f, tot, x

    for i in range(l):
        mu = 0.0
        for t in range(p):
            if Q[t, ids[i]] > mu:
                mu = Q[t, ids[i]]
        if mu > 0.0:
            for t in range(p):
                s[i, i, n + t] = Q[t, ids[i]] / mu
            c[i, i] = log(mu)
            alive[i, i] = 1
    # leaf projections, preterminal rows streamed once across all leaves
    for b in range(p):
        for i in range(l):
            x = s[i, i, n + b]
            if x != 0.0:
                for t in range(d):
                    P[i, i, t] += x * V[n + b, t]
                    R[i, i, t] += x * W[n + b, t]

    for w in range(2, l + 1):
        for i in range(l - w + 1):
            j = i + w - 1
            e_star = -INFINITY
            for k in range(i, j):
                if alive[i, k] and alive[k + 1, j]:
                    e_k = c[i, k] + c[k + 1, j]
                    if e_k > e_star:
                        e_star = e_k
            for t in range(d):
                acc[t] = 0.0
            if e_star != -INFINITY:
                for k in range(i, j):
                    if not (alive[i, k] and alive[k + 1, j]):
                        continue
                    f = exp(c[i, k] + c[k + 1, j] - e_star)
                    if f == 0.0:
                        continue
                    for t in range(d):
                        acc[t] += f * P[i, k, t] * R[k + 1, j, t]
            mu = 0.0
            for a in range(n):
                tot = 0.0
                for t in range(d):
                    tot += U[a, t] * acc[t]
                raw[a] = tot
                if tot > mu:
                    mu = tot
            if mu > 0.0:
                for a in range(n):
                    s[i, j, a] = raw[a] / mu
                c[i, j] = e_star + log(mu)
                alive[i, j] = 1
        if w < l:
            # cache projections once per span; children live on nonterminal
            # coordinates, and streaming each V/W row across the whole
            # width batch keeps the factor matrices out of the hot loop
            for b in range(n):
                for i in range(l - w + 1):
                    j = i + w - 1
                    x = s[i, j, b]
                    if x != 0.0:
                        for t in range(d):
                            P[i, j, t] += x * V[b, t]
                            R[i, j, t] += x * W[b, t]
    return s_np, c_np, alive_np.view(bool), P_np, R_np
