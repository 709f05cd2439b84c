# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython twin of ``_qp_py.solve_qp``.

Same active-set algorithm and tolerances; the KKT subproblems go straight to
LAPACK dgelsy on preallocated column-major buffers, avoiding per-iteration
Python and numpy overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_lapack cimport dgelsy

cnp.import_array()

BACKEND_NAME = "cython"

cdef double DROP_TOL = 1e-9
cdef double STEP_TOL = 1e-11
cdef double DIR_TOL = 1e-12


cdef int _kkt_solve(double[::1] hdiag, double[::1] c, double[:, ::1] G,
                    double[::1] h, int[::1] work_idx, int wlen, int skip,
                    int n, double[::1] kkt, double[::1] rhs, int[::1] jpvt,
                    double[::1] lap, int lwork) nogil:
    """Solve the KKT system for the working set (optionally excluding the
    entry at position ``skip``); the solution lands in ``rhs``.  Returns the
    LAPACK info code."""
    cdef int k = wlen if skip < 0 else wlen - 1
    cdef int dim = n + k
    cdef int i, j, q, p, row, nrhs, rank, info
    cdef double rcond
    for i in range(dim * dim):
        kkt[i] = 0.0
    for i in range(n):
        kkt[i + i * dim] = hdiag[i]
    p = 0
    for q in range(wlen):
        if q == skip:
            continue
        row = work_idx[q]
        for j in range(n):
            kkt[j + (n + p) * dim] = G[row, j]
            kkt[(n + p) + j * dim] = G[row, j]
        rhs[n + p] = h[row]
        p += 1
    for i in range(n):
        rhs[i] = -c[i]
    for i in range(dim):
        jpvt[i] = 0
    nrhs = 1
    rcond = 1e-13
    dgelsy(&dim, &dim, &nrhs, &kkt[0], &dim, &rhs[0], &dim,
           &jpvt[0], &rcond, &rank, &lap[0], &lwork, &info)
    return info


def solve_qp(double[::1] hdiag, double[::1] c, double[:, ::1] G,
             double[::1] h, double[::1] z0, int max_iter):
    cdef int n = hdiag.shape[0]
    cdef int m = G.shape[0]
    cdef int dmax = n + m
    cdef int lwork = 64 * dmax + 1024

    z_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] active = np.zeros(m, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] tried = np.zeros(m, dtype=np.uint8)
    cdef int[::1] work_idx = np.zeros(m, dtype=np.int32)
    cdef int wlen = 0

    kkt_arr = np.zeros(dmax * dmax, dtype=np.float64)
    rhs_arr = np.zeros(dmax, dtype=np.float64)
    jpvt_arr = np.zeros(dmax, dtype=np.int32)
    lap_arr = np.zeros(lwork, dtype=np.float64)
    d_arr = np.zeros(n, dtype=np.float64)
    gd_arr = np.zeros(m, dtype=np.float64)
    lam_arr = np.zeros(m, dtype=np.float64)

    cdef double[::1] kkt = kkt_arr
    cdef double[::1] rhs = rhs_arr
    cdef int[::1] jpvt = jpvt_arr
    cdef double[::1] lap = lap_arr
    cdef double[::1] d = d_arr
    cdef double[::1] gd = gd_arr
    cdef double[::1] lam = lam_arr

    cdef int it, i, j, q, k, info, jmin, blocking, row, dropped
    cdef double dn, zn, lmin, alpha, a_j, sl, acc, tn

    for it in range(1, max_iter + 1):
        k = wlen
        info = _kkt_solve(hdiag, c, G, h, work_idx, wlen, -1, n,
                          kkt, rhs, jpvt, lap, lwork)
        if info != 0:
            return z_arr, it, False

        dn = 0.0
        zn = 0.0
        for i in range(n):
            d[i] = rhs[i] - z[i]
            dn += d[i] * d[i]
            zn += z[i] * z[i]
        dn = sqrt(dn)
        zn = sqrt(zn)

        if dn <= STEP_TOL * (1.0 + zn):
            if k == 0:
                return z_arr, it, True
            # Degenerate working sets can report spurious negative
            # multipliers; only drop a row if the re-solve actually moves
            # off that constraint.
            for q in range(k):
                lam[q] = rhs[n + q]
                tried[q] = 0
            dropped = -1
            while True:
                jmin = -1
                lmin = -DROP_TOL
                for q in range(k):
                    if not tried[q] and lam[q] < lmin:
                        lmin = lam[q]
                        jmin = q
                if jmin < 0:
                    break
                tried[jmin] = 1
                info = _kkt_solve(hdiag, c, G, h, work_idx, wlen, jmin, n,
                                  kkt, rhs, jpvt, lap, lwork)
                if info != 0:
                    return z_arr, it, False
                tn = 0.0
                acc = 0.0
                row = work_idx[jmin]
                for i in range(n):
                    tn += (rhs[i] - z[i]) * (rhs[i] - z[i])
                    acc += G[row, i] * (rhs[i] - z[i])
                if sqrt(tn) > STEP_TOL * (1.0 + zn) and acc < -DIR_TOL:
                    dropped = jmin
                    break
            if dropped < 0:
                return z_arr, it, True
            active[work_idx[dropped]] = 0
            for q in range(dropped, wlen - 1):
                work_idx[q] = work_idx[q + 1]
            wlen -= 1
            continue

        alpha = 1.0
        blocking = -1
        for j in range(m):
            acc = 0.0
            for i in range(n):
                acc += G[j, i] * d[i]
            gd[j] = acc
        for j in range(m):
            if active[j] or gd[j] <= DIR_TOL:
                continue
            sl = h[j]
            for i in range(n):
                sl -= G[j, i] * z[i]
            a_j = sl / gd[j]
            if a_j < alpha:
                alpha = a_j if a_j > 0.0 else 0.0
                blocking = j
        for i in range(n):
            z[i] = z[i] + alpha * d[i]
        if blocking >= 0:
            active[blocking] = 1
            work_idx[wlen] = blocking
            wlen += 1

    return z_arr, max_iter, False
