"""Cascade solver unit tests, parametrized over both QP kernel backends."""

import numpy as np
import pytest

from sotbt.cascade import (CascadeProblem, LevelConstraint, available_backends,
                           solve_cascade, solve_level, transcribe_bounds)
from sotbt.errors import DimensionMismatch, InvalidBoundKind

from oracles import grid_search_1d, lexicographic_oracle, random_cascade

BACKENDS = available_backends()


def _levels_from_raw(raw):
    return [LevelConstraint(level=p + 1, A=A, b=b)
            for p, (A, b) in enumerate(raw)]


@pytest.mark.parametrize("backend", BACKENDS)
class TestSolveLevel:
    def test_full_rank_equality_exact(self, backend):
        current = transcribe_bounds("equality", np.eye(2), [1.0, 0.0])
        qdot, w = solve_level(2, [], current, backend=backend)
        assert np.allclose(qdot, [1.0, 0.0], atol=1e-6)
        assert np.all(np.abs(w) <= 1e-8)

    def test_conflicting_equalities_split_slack(self, backend):
        A1, b1 = transcribe_bounds("equality", [[1.0]], [1.0])
        A2, b2 = transcribe_bounds("equality", [[1.0]], [-1.0])
        current = (np.vstack([A1, A2]), np.concatenate([b1, b2]))
        qdot, w = solve_level(1, [], current, backend=backend)
        assert abs(qdot[0]) <= 1e-6
        assert abs(float(w @ w) - 2.0) <= 1e-6
        # exhaustive scan over qdot confirms the minimizer
        best_q, best_cost = grid_search_1d([current])
        assert abs(best_q) <= 1e-3
        assert abs(best_cost - 2.0) <= 1e-3

    def test_fixed_level_projects_to_nullspace(self, backend):
        A1, b1 = transcribe_bounds("equality", [[1.0, 0.0]], [0.0])
        fixed = [(A1, b1, np.zeros(2))]
        current = transcribe_bounds("equality", np.eye(2), [1.0, 1.0])
        qdot, _ = solve_level(2, fixed, current, backend=backend)
        assert np.allclose(qdot, [0.0, 1.0], atol=1e-6)

    def test_dimension_mismatch(self, backend):
        current = transcribe_bounds("equality", np.eye(3), [1.0, 0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            solve_level(2, [], current, backend=backend)


@pytest.mark.parametrize("backend", BACKENDS)
class TestSolveCascade:
    def test_empty_problem_zero_velocity(self, backend):
        sol = solve_cascade(CascadeProblem(n=7, levels=[]), backend=backend)
        assert np.array_equal(sol.qdot, np.zeros(7))
        assert len(sol.slacks) == 0

    def test_nullspace_projection(self, backend):
        A1, b1 = transcribe_bounds("equality", [[1.0, 0.0]], [0.0])
        A2, b2 = transcribe_bounds("equality", np.eye(2), [1.0, 1.0])
        problem = CascadeProblem(n=2, levels=[
            LevelConstraint(level=1, A=A1, b=b1),
            LevelConstraint(level=2, A=A2, b=b2)])
        sol = solve_cascade(problem, backend=backend)
        assert np.allclose(sol.qdot, [0.0, 1.0], atol=1e-6)
        assert sol.objective_per_level[0] <= 1e-8
        assert abs(sol.objective_per_level[1] - 1.0) <= 1e-6

    def test_matches_lexicographic_oracle(self, backend):
        worst = 0.0
        for k in range(100):
            rng = np.random.default_rng([1000, k])
            raw = random_cascade(rng)
            sol = solve_cascade(CascadeProblem(n=7, levels=_levels_from_raw(raw)),
                                backend=backend)
            oracle_slacks, _ = lexicographic_oracle(7, raw)
            for w_sol, w_ref in zip(sol.slacks, oracle_slacks):
                worst = max(worst, abs(np.linalg.norm(w_sol)
                                       - np.linalg.norm(w_ref)))
        assert worst < 1e-6

    def test_feasible_problem_exactness(self, backend):
        rng = np.random.default_rng(7)
        for _ in range(20):
            qdot_true = rng.uniform(-1, 1, size=4)
            levels = []
            for p in (1, 2):
                A = rng.uniform(-1, 1, size=(3, 4))
                b = A @ qdot_true + rng.uniform(0.1, 1.0, size=3)
                levels.append(LevelConstraint(level=p, A=A, b=b))
            sol = solve_cascade(CascadeProblem(n=4, levels=levels),
                                backend=backend)
            assert all(o <= 1e-8 for o in sol.objective_per_level)

    def test_appending_level_preserves_upper_objectives(self, backend):
        for k in range(20):
            rng = np.random.default_rng([2000, k])
            raw = random_cascade(rng, max_levels=2)
            levels = _levels_from_raw(raw)
            base = solve_cascade(CascadeProblem(n=7, levels=levels),
                                 backend=backend)
            extra = LevelConstraint(level=len(levels) + 1,
                                    A=rng.uniform(-1, 1, (1, 7)),
                                    b=rng.uniform(-1, 1, 1))
            ext = solve_cascade(
                CascadeProblem(n=7, levels=levels + [extra]), backend=backend)
            for a, b2 in zip(base.objective_per_level, ext.objective_per_level):
                assert abs(a - b2) <= 1e-8

    def test_level_scaling_invariance(self, backend):
        rng = np.random.default_rng(11)
        levels = _levels_from_raw(random_cascade(rng))
        base = solve_cascade(CascadeProblem(n=7, levels=levels),
                             backend=backend)
        scaled = [LevelConstraint(level=l.level, A=5.0 * l.A, b=5.0 * l.b)
                  if l.level == 2 else l for l in levels]
        sol = solve_cascade(CascadeProblem(n=7, levels=scaled),
                            backend=backend)
        assert np.all(np.abs(sol.qdot - base.qdot) <= 1e-8)

    def test_row_order_invariance(self, backend):
        rng = np.random.default_rng(13)
        A = rng.uniform(-1, 1, size=(4, 3))
        b = rng.uniform(-1, 1, size=4)
        perm = [2, 0, 3, 1]
        sol_a = solve_cascade(CascadeProblem(
            n=3, levels=[LevelConstraint(level=1, A=A, b=b)]), backend=backend)
        sol_b = solve_cascade(CascadeProblem(
            n=3, levels=[LevelConstraint(level=1, A=A[perm], b=b[perm])]),
            backend=backend)
        assert np.all(np.abs(sol_a.qdot - sol_b.qdot) <= 1e-6)

    def test_determinism_bitwise(self, backend):
        rng = np.random.default_rng(17)
        problem = CascadeProblem(n=7, levels=_levels_from_raw(random_cascade(rng)))
        sol_a = solve_cascade(problem, backend=backend)
        sol_b = solve_cascade(problem, backend=backend)
        assert np.array_equal(sol_a.qdot, sol_b.qdot)
        for wa, wb in zip(sol_a.slacks, sol_b.slacks):
            assert np.array_equal(wa, wb)

    def test_solution_invariants(self, backend):
        rng = np.random.default_rng(19)
        levels = _levels_from_raw(random_cascade(rng))
        sol = solve_cascade(CascadeProblem(n=7, levels=levels),
                            backend=backend)
        for lvl, w in zip(levels, sol.slacks):
            assert np.all(lvl.A @ sol.qdot <= lvl.b + w + 1e-9)
        for obj, w in zip(sol.objective_per_level, sol.slacks):
            assert abs(obj - np.linalg.norm(w)) <= 1e-12 * max(1.0, obj)


class TestTranscribeBounds:
    def test_equality_becomes_double_bound(self):
        A, b = transcribe_bounds("equality", np.array([[1.0, 0.0]]),
                                 np.array([0.5]))
        assert A.shape == (2, 2)
        assert np.allclose(A, [[1.0, 0.0], [-1.0, 0.0]])
        assert np.allclose(b, [0.5, -0.5])

    def test_lower_flips_sign(self):
        A, b = transcribe_bounds("lower", np.array([[0.0, 1.0]]),
                                 np.array([-2.0]))
        assert np.allclose(A, [[0.0, -1.0]]) and b[0] == 2.0

    def test_double_symmetric_box(self):
        A, b = transcribe_bounds("double", np.array([[1.0]]), np.array([1.0]),
                                 lower_target=np.array([-1.0]))
        assert A.shape == (2, 1)
        assert np.allclose(b, [1.0, 1.0])

    def test_upper_passthrough(self):
        A, b = transcribe_bounds("upper", np.array([[2.0, 0.0]]),
                                 np.array([3.0]))
        assert np.allclose(A, [[2.0, 0.0]]) and b[0] == 3.0

    def test_unknown_kind(self):
        with pytest.raises(InvalidBoundKind):
            transcribe_bounds("sideways", np.eye(1), np.zeros(1))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            transcribe_bounds("upper", np.eye(2), np.zeros(3))
