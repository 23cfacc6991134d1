# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ADMM inner-loop kernel; see _kernels_py for the contract."""

from libc.math cimport fmax, fmin

import numpy as np

BACKEND = "compiled"

DEF MAX_RANK = 64


def admm_chunk(int n_iter, double sigma, double alpha,
               double[::1] q, double[::1] x,
               double[:, ::1] G, double[::1] lg, double[::1] ug,
               double[::1] zg, double[::1] yg, double[::1] rho_g,
               double u_cap, double[::1] zc, double[::1] yc, double rho_c,
               double[::1] lb, double[::1] ub,
               double[::1] zb, double[::1] yb, double rho_b,
               double[::1] dinv, double[:, ::1] B, double[:, ::1] S,
               double[::1] dx, double[::1] dyg, double[::1] dyc,
               double[::1] dyb, double[:, ::1] scratch):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = G.shape[0]
    cdef Py_ssize_t r = B.shape[1]
    cdef bint has_cap = u_cap > 0.0
    cdef Py_ssize_t it, i, j, l
    cdef bint last
    cdef double tg[MAX_RANK]
    cdef double w[MAX_RANK]
    cdef double s[MAX_RANK]
    cdef double tc_sum, xt_sum, acc, v, wv, znew, tci, ztci, wb
    cdef double[::1] rhs = scratch[0]
    cdef double[::1] xt = scratch[1]
    cdef double[::1] tc = scratch[2]

    if k > MAX_RANK or r > MAX_RANK:
        raise ValueError("kernel rank limit exceeded")

    with nogil:
        for it in range(n_iter):
            last = it == n_iter - 1
            if last:
                for i in range(n):
                    dx[i] = x[i]
                    dyb[i] = yb[i]
                for j in range(k):
                    dyg[j] = yg[j]
                if has_cap:
                    for i in range(n):
                        dyc[i] = yc[i]

            # rhs = sigma*x - q + A'(rho z - y)
            for j in range(k):
                tg[j] = rho_g[j] * zg[j] - yg[j]
            tc_sum = 0.0
            if has_cap:
                for i in range(n):
                    tci = rho_c * zc[i] - yc[i]
                    tc[i] = tci
                    tc_sum += tci
            for i in range(n):
                acc = sigma * x[i] - q[i] + (rho_b * zb[i] - yb[i])
                for j in range(k):
                    acc += G[j, i] * tg[j]
                if has_cap:
                    acc += tc[i] - u_cap * tc_sum
                rhs[i] = acc

            # xt = M^-1 rhs via Woodbury
            for j in range(r):
                acc = 0.0
                for i in range(n):
                    acc += B[i, j] * rhs[i]
                w[j] = acc
            for j in range(r):
                acc = 0.0
                for l in range(r):
                    acc += S[j, l] * w[l]
                s[j] = acc
            xt_sum = 0.0
            for i in range(n):
                v = dinv[i] * rhs[i]
                for j in range(r):
                    v -= B[i, j] * s[j]
                xt[i] = v
                xt_sum += v
                x[i] = alpha * v + (1.0 - alpha) * x[i]

            # general rows
            for j in range(k):
                acc = 0.0
                for i in range(n):
                    acc += G[j, i] * xt[i]
                wv = alpha * acc + (1.0 - alpha) * zg[j]
                znew = fmin(fmax(wv + yg[j] / rho_g[j], lg[j]), ug[j])
                yg[j] = yg[j] + rho_g[j] * (wv - znew)
                zg[j] = znew

            # cap rows: bounds (-inf, 0]
            if has_cap:
                for i in range(n):
                    ztci = xt[i] - u_cap * xt_sum
                    wv = alpha * ztci + (1.0 - alpha) * zc[i]
                    znew = fmin(wv + yc[i] / rho_c, 0.0)
                    yc[i] = yc[i] + rho_c * (wv - znew)
                    zc[i] = znew

            # box rows
            for i in range(n):
                wb = alpha * xt[i] + (1.0 - alpha) * zb[i]
                znew = fmin(fmax(wb + yb[i] / rho_b, lb[i]), ub[i])
                yb[i] = yb[i] + rho_b * (wb - znew)
                zb[i] = znew

            if last:
                for i in range(n):
                    dx[i] = x[i] - dx[i]
                    dyb[i] = yb[i] - dyb[i]
                for j in range(k):
                    dyg[j] = yg[j] - dyg[j]
                if has_cap:
                    for i in range(n):
                        dyc[i] = yc[i] - dyc[i]
