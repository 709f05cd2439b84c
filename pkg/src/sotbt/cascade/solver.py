"""Lexicographic least-squares cascade over upper-bound constraints.

Levels are solved in priority order; each level minimizes the norm of its
slack vector subject to the higher levels' slacks frozen at their optima.
A final minimum-norm pass picks the smallest joint velocity among those
achieving all frozen slacks.
"""

import numpy as np

from ..errors import DimensionMismatch, InvalidBoundKind, NumericalFailure
from ._backend import get_backend
from .types import CascadeProblem, CascadeSolution

DEFAULT_REGULARIZATION = 1e-8
FEASIBILITY_TOL = 1e-9
ITER_BUDGET_PER_ROW = 100

_BOUND_KINDS = ("upper", "lower", "double", "equality")


def transcribe_bounds(kind, J, target, lower_target=None):
    """Rewrite a constraint block as upper-bound rows (A, b).

    upper:    J qdot <= target
    lower:    J qdot >= target        ->  -J qdot <= -target
    double:   lower_target <= J qdot <= target
    equality: J qdot == target
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if J.shape[0] != target.shape[0]:
        raise DimensionMismatch(
            f"J has {J.shape[0]} rows but target has {target.shape[0]} entries"
        )
    if kind == "double":
        if lower_target is None:
            raise InvalidBoundKind("double bounds require a lower target")
        lower_target = np.atleast_1d(np.asarray(lower_target, dtype=float))
        if lower_target.shape != target.shape:
            raise DimensionMismatch("lower target shape differs from upper target")
    elif lower_target is not None:
        raise InvalidBoundKind(f"lower target not allowed for kind {kind!r}")

    if kind == "upper":
        return J.copy(), target.copy()
    if kind == "lower":
        return -J, -target
    if kind == "double":
        return np.vstack([J, -J]), np.concatenate([target, -lower_target])
    if kind == "equality":
        return np.vstack([J, -J]), np.concatenate([target, -target])
    raise InvalidBoundKind(f"unknown bound kind {kind!r}; expected one of {_BOUND_KINDS}")


def _stack_fixed(n, fixed):
    if not fixed:
        return np.zeros((0, n)), np.zeros(0)
    rows_A, rows_h = [], []
    for A_i, b_i, w_i in fixed:
        A_i = np.atleast_2d(np.asarray(A_i, dtype=float))
        b_i = np.atleast_1d(np.asarray(b_i, dtype=float))
        w_i = np.atleast_1d(np.asarray(w_i, dtype=float))
        if A_i.shape[1] != n:
            raise DimensionMismatch(
                f"fixed level has {A_i.shape[1]} columns, expected {n}"
            )
        if A_i.shape[0] != b_i.shape[0] or b_i.shape[0] != w_i.shape[0]:
            raise DimensionMismatch("fixed level rows/bounds/slacks disagree")
        rows_A.append(A_i)
        rows_h.append(b_i + w_i)
    return np.vstack(rows_A), np.concatenate(rows_h)


def _feasible_start(Gf, hf, kernel):
    """Phase-1: a point satisfying Gf q <= hf, found by minimizing a
    uniform relaxation t of all rows."""
    m, n = Gf.shape
    hdiag = np.concatenate([np.full(n, 2e-9), [2.0]])
    c = np.zeros(n + 1)
    G = np.hstack([Gf, -np.ones((m, 1))])
    G = np.vstack([G, np.zeros((1, n + 1))])
    G[-1, -1] = -1.0  # t >= 0
    h = np.concatenate([hf, [0.0]])
    t0 = max(0.0, float(-hf.min())) + 1.0 if m else 0.0
    z0 = np.zeros(n + 1)
    z0[-1] = t0
    z, it, ok = kernel.solve_qp(hdiag, c, np.ascontiguousarray(G), h, z0,
                                ITER_BUDGET_PER_ROW * (m + 1))
    if not ok:
        raise NumericalFailure("phase-1 for frozen constraints did not converge",
                               iterations=it)
    if z[-1] > 1e-6:
        raise NumericalFailure(
            f"frozen higher-priority constraints are infeasible (violation {z[-1]:.3e})"
        )
    return z[:n]


def solve_level(n, fixed, current, regularization=DEFAULT_REGULARIZATION,
                backend=None, warm_start=None):
    """Minimize ||w||^2 + regularization*||qdot||^2 for one level subject to
    the frozen higher-priority rows.

    Returns (qdot, w) with w recomputed as the exact nonnegative residual
    max(0, A qdot - b), which also enforces complementarity.
    """
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")
    kernel = get_backend(backend)
    A_p = np.atleast_2d(np.asarray(current[0], dtype=float))
    b_p = np.atleast_1d(np.asarray(current[1], dtype=float))
    if A_p.shape[1] != n:
        raise DimensionMismatch(f"A has {A_p.shape[1]} columns, expected {n}")
    if A_p.shape[0] != b_p.shape[0]:
        raise DimensionMismatch("current level rows and bounds disagree")
    m = A_p.shape[0]
    Gf, hf = _stack_fixed(n, fixed)
    mf = Gf.shape[0]

    if warm_start is not None and (mf == 0 or (Gf @ warm_start <= hf + 1e-12).all()):
        q0 = np.asarray(warm_start, dtype=float)
    elif mf == 0:
        q0 = np.zeros(n)
    else:
        q0 = _feasible_start(Gf, hf, kernel)

    # z = (qdot, w); w enters only its own rows.
    reg = max(regularization, 1e-12)
    hdiag = np.concatenate([np.full(n, 2.0 * reg), np.full(m, 2.0)])
    c = np.zeros(n + m)
    G = np.zeros((mf + m, n + m))
    G[:mf, :n] = Gf
    G[mf:, :n] = A_p
    G[mf:, n:] = -np.eye(m)
    h = np.concatenate([hf, b_p])
    z0 = np.concatenate([q0, np.maximum(A_p @ q0 - b_p, 0.0)])

    max_iter = ITER_BUDGET_PER_ROW * (mf + m)
    z, it, ok = kernel.solve_qp(hdiag, c, np.ascontiguousarray(G), h, z0, max_iter)
    if not ok:
        raise NumericalFailure(
            f"level QP did not converge within {max_iter} active-set iterations",
            iterations=it,
        )
    qdot = z[:n]
    w = np.maximum(A_p @ qdot - b_p, 0.0)
    return qdot, w


def solve_cascade(problem, regularization=DEFAULT_REGULARIZATION, backend=None):
    """Solve all levels in priority order, then return the minimum-norm
    velocity achieving the frozen slacks."""
    if not isinstance(problem, CascadeProblem):
        raise TypeError("expected a CascadeProblem")
    kernel = get_backend(backend)
    n = problem.n
    fixed = []
    slacks = []
    qdot = np.zeros(n)
    for lc in problem.levels:
        try:
            qdot, w = solve_level(n, fixed, (lc.A, lc.b), regularization,
                                  backend=backend, warm_start=qdot)
        except NumericalFailure as exc:
            raise NumericalFailure(f"level {lc.level}: {exc}", level=lc.level,
                                   iterations=exc.iterations) from exc
        fixed.append((lc.A, lc.b, w))
        slacks.append(w)

    if fixed:
        Gf, hf = _stack_fixed(n, fixed)
        z, it, ok = kernel.solve_qp(np.full(n, 2.0), np.zeros(n),
                                    np.ascontiguousarray(Gf), hf, qdot,
                                    ITER_BUDGET_PER_ROW * Gf.shape[0])
        if not ok:
            raise NumericalFailure("minimum-norm pass did not converge", iterations=it)
        qdot = z
    else:
        qdot = np.zeros(n)
    return CascadeSolution(qdot=qdot, slacks=tuple(slacks))


def dump_problem(problem):
    """Plain-text matrix listing of a CascadeProblem, for bug reports."""
    lines = [f"CascadeProblem n={problem.n} P={len(problem.levels)}"]
    for lc in problem.levels:
        lines.append(f"level {lc.level} ({lc.A.shape[0]} rows)")
        for row, bound in zip(lc.A, lc.b):
            lines.append("  [" + " ".join(f"{v: .12g}" for v in row) + f"] <= {bound:.12g}")
    return "\n".join(lines)
