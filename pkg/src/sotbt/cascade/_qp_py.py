"""Pure-numpy active-set solver for small strictly convex QPs.

Solves  min 1/2 z' diag(hdiag) z + c' z   s.t.  G z <= h
starting from a feasible point z0.  This is the hot kernel of the
hierarchical cascade; a Cython twin with identical semantics lives in
``_qp_cy.pyx`` and is preferred at import time when available.

Returns (z, iterations, converged).  Working-set subproblems are solved
through the full KKT system with a rank-revealing least-squares factorization
(LAPACK gelsy), which tolerates redundant active rows.
"""

import numpy as np
from scipy.linalg import lstsq

BACKEND_NAME = "python"

_DROP_TOL = 1e-9        # multiplier threshold for leaving the working set
_STEP_TOL = 1e-11       # relative step size treated as "no move"
_DIR_TOL = 1e-12        # minimum constraint-direction product for blocking


def _kkt_solve(H, c, G, h, work):
    n = H.shape[0]
    k = len(work)
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    if k:
        Gw = G[work]
        kkt[:n, n:] = Gw.T
        kkt[n:, :n] = Gw
    rhs = np.concatenate([-c, h[work] if k else np.zeros(0)])
    sol = lstsq(kkt, rhs, lapack_driver="gelsy")[0]
    return sol[:n], sol[n:]


def solve_qp(hdiag, c, G, h, z0, max_iter):
    n = hdiag.shape[0]
    m = G.shape[0]
    z = np.array(z0, dtype=float)
    active = np.zeros(m, dtype=bool)
    work = []  # ordered working set

    H = np.diag(hdiag)
    for it in range(1, max_iter + 1):
        zstar, lam = _kkt_solve(H, c, G, h, work)
        d = zstar - z

        if np.linalg.norm(d) <= _STEP_TOL * (1.0 + np.linalg.norm(z)):
            if not work:
                return z, it, True
            # Degenerate working sets can report spurious negative
            # multipliers; only drop a row if the re-solve actually moves
            # off that constraint.
            dropped = -1
            for j in np.argsort(lam):
                if lam[j] >= -_DROP_TOL:
                    break
                trial = work[:j] + work[j + 1:]
                ztrial, _ = _kkt_solve(H, c, G, h, trial)
                dt_ = ztrial - z
                if (np.linalg.norm(dt_) > _STEP_TOL * (1.0 + np.linalg.norm(z))
                        and G[work[j]] @ dt_ < -_DIR_TOL):
                    dropped = j
                    break
            if dropped < 0:
                return z, it, True
            active[work[dropped]] = False
            del work[dropped]
            continue

        # Longest step along d that stays feasible.
        alpha = 1.0
        blocking = -1
        gd = G @ d
        slack = h - G @ z
        for j in range(m):
            if active[j] or gd[j] <= _DIR_TOL:
                continue
            a_j = slack[j] / gd[j]
            if a_j < alpha:
                alpha = a_j if a_j > 0.0 else 0.0
                blocking = j
        z = z + alpha * d
        if blocking >= 0:
            active[blocking] = True
            work.append(blocking)

    return z, max_iter, False
