"""Task stack semantics and the control step."""

import numpy as np
import pytest

from sotbt.kinematics import (JointState, forward_kinematics,
                              load_bundled_model)
from sotbt.runtime import TaskStack, build_problem, control_step, control_step_ex
from sotbt.tasks import BlockingParams, TaskKind, TaskSpec, evaluate

SEVEN = load_bundled_model("seven_dof")
HOME = np.array([0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785])


def _reach(tid, goal, priority=1, gain=1.0):
    return TaskSpec(id=tid, kind=TaskKind.POINT_REACH, params={"goal": goal},
                    priority=priority, gain=gain)


def _plane(tid, normal, offset, priority=1, gain=2.0, margin=0.02):
    return TaskSpec(id=tid, kind=TaskKind.PLANE_AVOID,
                    params={"normal": normal, "offset": offset,
                            "margin": margin}, priority=priority, gain=gain)


def _state(q=HOME):
    return JointState(q=q.copy(), qdot=np.zeros(SEVEN.n), t=0.0)


class TestTaskStack:
    def test_set_on_empty(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), now=2.0)
        snap = stack.snapshot()
        assert len(snap.tasks) == 1
        assert snap.tasks[0].execution_time(2.0) == 0.0

    def test_upsert_preserves_t_set(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), now=0.0)
        stack.set_task(_reach("a", [0.4, 0.1, 0.5]), now=1.0)
        snap = stack.snapshot()
        assert len(snap.tasks) == 1
        assert snap.tasks[0].t_set == 0.0
        assert np.allclose(snap.tasks[0].spec.params["goal"], [0.4, 0.1, 0.5])

    def test_equal_priority_shares_level(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5], priority=2), 0.0)
        stack.set_task(_reach("b", [0.3, 0.1, 0.5], priority=2), 0.0)
        problem, _, _ = build_problem(SEVEN, _state(), stack.snapshot())
        assert len(problem.levels) == 1
        # two 3-dim equality tasks stacked: 12 transcribed rows
        assert problem.levels[0].A.shape[0] == 12

    def test_remove_only_task(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), 0.0)
        stack.remove_tasks({"a"})
        assert stack.snapshot().task_ids == ()

    def test_remove_empty_set_keeps_revision(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), 0.0)
        rev = stack.snapshot().revision
        stack.remove_tasks(set())
        assert stack.snapshot().revision == rev

    def test_remove_subset(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), 0.0)
        stack.set_task(_reach("b", [0.3, 0.1, 0.5]), 0.0)
        stack.remove_tasks({"a"})
        assert stack.snapshot().task_ids == ("b",)

    def test_revision_strictly_increases(self):
        stack = TaskStack()
        revs = [stack.snapshot().revision]
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), 0.0)
        revs.append(stack.snapshot().revision)
        stack.set_task(_reach("a", [0.4, 0.0, 0.5]), 0.1)
        revs.append(stack.snapshot().revision)
        stack.remove_tasks({"a"})
        revs.append(stack.snapshot().revision)
        assert all(b > a for a, b in zip(revs, revs[1:]))

    def test_snapshot_isolated_from_mutation(self):
        stack = TaskStack()
        stack.set_task(_reach("a", [0.3, 0.0, 0.5]), 0.0)
        snap = stack.snapshot()
        stack.remove_tasks({"a"})
        assert snap.task_ids == ("a",)

    def test_snapshot_ordering(self):
        stack = TaskStack()
        stack.set_task(_reach("low", [0.3, 0.0, 0.5], priority=3), 0.0)
        stack.set_task(_reach("high", [0.3, 0.0, 0.5], priority=1), 0.0)
        stack.set_task(_reach("mid", [0.3, 0.0, 0.5], priority=2), 0.0)
        assert stack.snapshot().task_ids == ("high", "mid", "low")


class TestControlStep:
    def test_empty_stack_only_advances_time(self):
        state = _state()
        new = control_step(SEVEN, state, TaskStack().snapshot(), dt=1e-3)
        assert np.array_equal(new.q, state.q)
        assert np.array_equal(new.qdot, np.zeros(SEVEN.n))
        assert new.t == state.t + 1e-3

    def test_first_order_decay(self):
        goal = forward_kinematics(SEVEN, HOME).position + np.array(
            [0.04, -0.03, 0.05])
        stack = TaskStack()
        stack.set_task(_reach("r", goal, gain=1.0), 0.0)
        snap = stack.snapshot()
        state = _state()
        e0 = evaluate(snap.tasks[0].spec, SEVEN, state).error_norm
        state = control_step(SEVEN, state, snap, dt=1e-3)
        e1 = evaluate(snap.tasks[0].spec, SEVEN, state).error_norm
        expected = e0 * (1.0 - 1.0 * 1e-3)
        assert abs(e1 - expected) / expected < 0.05

    def test_plane_plus_unreachable_goal_fixed_point(self):
        x0 = forward_kinematics(SEVEN, HOME).position
        plane = _plane("p", [0.0, 0.0, 1.0], x0[2] - 0.12, priority=1)
        goal = x0 + np.array([0.0, 0.0, -0.3])  # behind the plane
        stack = TaskStack()
        stack.set_task(plane, 0.0)
        stack.set_task(_reach("r", goal, priority=2, gain=2.0), 0.0)
        snap = stack.snapshot()
        state = _state()
        for _ in range(3000):
            state, info = control_step_ex(SEVEN, state, snap, dt=2e-3)
            ev = evaluate(plane, SEVEN, state)
            assert ev.e[0] <= 1e-6
        # steady state: pinned on the boundary, reach error strictly positive
        assert abs(evaluate(plane, SEVEN, state).e[0]) <= 1e-4
        assert info.task_errors["r"] > 0.05

    def test_velocity_box_respected(self):
        box = TaskSpec(id="box", kind=TaskKind.JOINT_VELOCITY_BOX, params={},
                       priority=1)
        goal = forward_kinematics(SEVEN, HOME).position + np.array(
            [0.3, 0.2, -0.3])
        stack = TaskStack()
        stack.set_task(box, 0.0)
        stack.set_task(_reach("r", goal, priority=2, gain=50.0), 0.0)
        snap = stack.snapshot()
        state = _state()
        for _ in range(50):
            state, info = control_step_ex(SEVEN, state, snap, dt=1e-3)
            assert np.all(np.abs(info.qdot) <= SEVEN.velocity_limits + 1e-9)

    def test_position_limits_clamped(self):
        lo, hi = SEVEN.position_limits
        q = hi - 1e-4
        goal = forward_kinematics(SEVEN, q).position + np.array([0.2, 0.2, 0.2])
        stack = TaskStack()
        stack.set_task(_reach("r", goal, gain=100.0), 0.0)
        state = JointState(q=q.copy(), qdot=np.zeros(SEVEN.n), t=0.0)
        for _ in range(20):
            state, _ = control_step_ex(SEVEN, state, stack.snapshot(), dt=1e-2)
            assert np.all(state.q <= hi + 1e-12)
            assert np.all(state.q >= lo - 1e-12)

    def test_determinism_bitwise(self):
        goal = forward_kinematics(SEVEN, HOME).position + np.array(
            [0.05, 0.05, -0.05])
        stack = TaskStack()
        stack.set_task(_plane("p", [0.0, 0.0, 1.0], 0.05), 0.0)
        stack.set_task(_reach("r", goal, priority=2, gain=2.0), 0.0)
        snap = stack.snapshot()

        def rollout():
            state = _state()
            qs = []
            for _ in range(100):
                state, _ = control_step_ex(SEVEN, state, snap, dt=2e-3)
                qs.append(state.q)
            return np.array(qs)

        assert np.array_equal(rollout(), rollout())

    def test_priority_dominance(self):
        x0 = forward_kinematics(SEVEN, HOME).position
        plane = _plane("p", [0.0, 0.0, 1.0], x0[2] - 0.05, priority=1, gain=2.0)
        stack = TaskStack()
        stack.set_task(plane, 0.0)
        stack.set_task(_reach("r", x0 + np.array([0.05, 0.0, -0.4]),
                              priority=2, gain=3.0), 0.0)
        snap = stack.snapshot()
        state = _state()
        for _ in range(1000):
            state, _ = control_step_ex(SEVEN, state, snap, dt=2e-3)
            assert evaluate(plane, SEVEN, state).e[0] <= 1e-6

    def test_step_info_contents(self):
        stack = TaskStack()
        stack.set_task(_reach("r", [0.35, 0.0, 0.5], priority=2, gain=2.0), 0.0)
        snap = stack.snapshot()
        _, info = control_step_ex(SEVEN, _state(), snap, dt=1e-3)
        assert info.active_ids == ("r",)
        assert info.revision == snap.revision
        assert "r" in info.task_errors
        assert len(info.level_slacks) == 1
