"""Behavior-tree interpreter with task-setting leaves.

Classic reactive semantics (Sequence, Fallback, Parallel, Decorator,
Condition) plus the framework extensions: Non-Blocking and Blocking Action
leaves that upsert tasks into the stack, and SoT control-node variants that
remove their direct children's tasks immediately before returning a final
status or when halted.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

from .errors import ParseError, UnsetBlackboardKey, ValidationError
from .tasks import evaluate

logger = logging.getLogger(__name__)


class TickStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


class Blackboard:
    """Shared key-value store.  Reads of unset keys raise, never default."""

    def __init__(self, seeds=None):
        self._store = dict(seeds or {})

    def get(self, key):
        try:
            return self._store[key]
        except KeyError:
            raise UnsetBlackboardKey(f"blackboard key {key!r} was never set") from None

    def set(self, key, value):
        self._store[key] = value

    def __contains__(self, key):
        return key in self._store

    def as_dict(self):
        return dict(self._store)


@dataclass
class TickContext:
    stack: object
    blackboard: Blackboard
    now: float
    model: object = None
    state: object = None
    world: object = None
    events: list = field(default_factory=list)  # ('halt', id) / ('remove', id, ids)
    statuses: dict = None  # node id -> TickStatus for nodes ticked this tick

    def resolve(self, task):
        return task.resolve(self)

    def log_halt(self, node_id):
        self.events.append(("halt", node_id))


class BTNode:
    """Base node: id, children, and per-activation runtime state."""

    def __init__(self, node_id, children=()):
        self.id = node_id
        self.children = list(children)
        self.last_status = None

    def tick(self, ctx):
        status = self._tick(ctx)
        self.last_status = status
        if ctx.statuses is not None:
            ctx.statuses[self.id] = status
        return status

    def halt(self, ctx):
        """Interrupt this subtree; a no-op for nodes that never ran."""
        if self.last_status is None:
            return
        self._halt(ctx)
        self.last_status = None
        ctx.log_halt(self.id)

    def reset(self):
        self.last_status = None
        for child in self.children:
            child.reset()

    def _tick(self, ctx):
        raise NotImplementedError

    def _halt(self, ctx):
        for child in self.children:
            child.halt(ctx)

    def iter_nodes(self):
        yield self
        for child in self.children:
            yield from child.iter_nodes()


class SequenceNode(BTNode):
    kind = "sequence"

    def _tick(self, ctx):
        for i, child in enumerate(self.children):
            status = self._tick_child(i, ctx)
            if status is not TickStatus.SUCCESS:
                self._redirect(ctx, i)
                return self._finish(ctx, status)
        return self._finish(ctx, TickStatus.SUCCESS)

    def _tick_child(self, i, ctx):
        return self.children[i].tick(ctx)

    def _redirect(self, ctx, i):
        # Flow stopped at child i; halt later children left Running earlier.
        for child in self.children[i + 1:]:
            child.halt(ctx)

    def _finish(self, ctx, status):
        return status


class FallbackNode(BTNode):
    kind = "fallback"

    def _tick(self, ctx):
        for i, child in enumerate(self.children):
            status = self._tick_child(i, ctx)
            if status is not TickStatus.FAILURE:
                self._redirect(ctx, i)
                return self._finish(ctx, status)
        return self._finish(ctx, TickStatus.FAILURE)

    _tick_child = SequenceNode._tick_child
    _redirect = SequenceNode._redirect
    _finish = SequenceNode._finish


class ParallelNode(BTNode):
    kind = "parallel"

    def __init__(self, node_id, children, threshold):
        super().__init__(node_id, children)
        self.threshold = threshold

    def _tick(self, ctx):
        statuses = [self._tick_child(i, ctx) for i in range(len(self.children))]
        successes = sum(s is TickStatus.SUCCESS for s in statuses)
        failures = sum(s is TickStatus.FAILURE for s in statuses)
        if successes >= self.threshold:
            status = TickStatus.SUCCESS
        elif failures > len(self.children) - self.threshold:
            status = TickStatus.FAILURE
        else:
            status = TickStatus.RUNNING
        if status is not TickStatus.RUNNING:
            for child in self.children:
                child.halt(ctx)
        return self._finish(ctx, status)

    _tick_child = SequenceNode._tick_child
    _finish = SequenceNode._finish


class _SoTMixin:
    """Removes the tasks set by direct Action children before a final status
    is returned, and on halt."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.tasks_set = set()  # task ids set during the current activation

    def _tick_child(self, i, ctx):
        child = self.children[i]
        status = child.tick(ctx)
        if isinstance(child, (NonBlockingActionNode, BlockingActionNode)):
            self.tasks_set.add(child.task_id)
        return status

    def _finish(self, ctx, status):
        if status is not TickStatus.RUNNING and self.tasks_set:
            ctx.stack.remove_tasks(self.tasks_set)
            ctx.events.append(("remove", self.id, frozenset(self.tasks_set)))
            self.tasks_set.clear()
        return status

    def _halt(self, ctx):
        super()._halt(ctx)
        if self.tasks_set:
            ctx.stack.remove_tasks(self.tasks_set)
            ctx.events.append(("remove", self.id, frozenset(self.tasks_set)))
            self.tasks_set.clear()

    def halt(self, ctx):
        if self.last_status is None and not self.tasks_set:
            return
        self._halt(ctx)
        self.last_status = None
        ctx.log_halt(self.id)

    def reset(self):
        self.tasks_set.clear()
        BTNode.reset(self)


class SoTSequenceNode(_SoTMixin, SequenceNode):
    kind = "sot_sequence"


class SoTFallbackNode(_SoTMixin, FallbackNode):
    kind = "sot_fallback"


class SoTParallelNode(_SoTMixin, ParallelNode):
    kind = "sot_parallel"


class DecoratorNode(BTNode):
    kind = "decorator"

    POLICIES = ("inverter", "force_success", "repeat_until_failure",
                "set_flag_on_success", "retry_once")

    def __init__(self, node_id, child, policy, key=None):
        super().__init__(node_id, [child])
        if policy not in self.POLICIES:
            raise ValidationError(f"decorator {node_id}: unknown policy {policy!r}")
        if policy == "set_flag_on_success" and not key:
            raise ValidationError(f"decorator {node_id}: set_flag_on_success needs a key")
        self.policy = policy
        self.key = key
        self.retries_used = 0

    def _tick(self, ctx):
        status = self.children[0].tick(ctx)
        if self.policy == "inverter":
            if status is TickStatus.SUCCESS:
                return TickStatus.FAILURE
            if status is TickStatus.FAILURE:
                return TickStatus.SUCCESS
            return status
        if self.policy == "force_success":
            if status is TickStatus.RUNNING:
                return status
            return TickStatus.SUCCESS
        if self.policy == "repeat_until_failure":
            # Loops the child; ends (with Success) once the child fails.
            if status is TickStatus.FAILURE:
                return TickStatus.SUCCESS
            return TickStatus.RUNNING
        if self.policy == "set_flag_on_success":
            if status is TickStatus.SUCCESS:
                ctx.blackboard.set(self.key, True)
            return status
        if self.policy == "retry_once":
            if status is TickStatus.FAILURE and self.retries_used < 1:
                self.retries_used += 1
                self.children[0].halt(ctx)
                return TickStatus.RUNNING
            return status
        raise AssertionError(self.policy)

    def reset(self):
        self.retries_used = 0
        super().reset()


class ConditionNode(BTNode):
    kind = "condition"

    def __init__(self, node_id, key):
        super().__init__(node_id, [])
        self.key = key

    def _tick(self, ctx):
        return TickStatus.SUCCESS if ctx.blackboard.get(self.key) else TickStatus.FAILURE


class NonBlockingActionNode(BTNode):
    """Sets its task and immediately returns Success; used for constraints."""

    kind = "action"

    def __init__(self, node_id, task):
        super().__init__(node_id, [])
        self.task = task

    @property
    def task_id(self):
        return self.task.id

    def _tick(self, ctx):
        ctx.stack.set_task(ctx.resolve(self.task), ctx.now)
        return TickStatus.SUCCESS


class BlockingActionNode(BTNode):
    """Sets its task and returns Running until the error norm drops below the
    error threshold (Success) or the execution time exceeds the time
    threshold (Failure)."""

    kind = "action"

    def __init__(self, node_id, task):
        super().__init__(node_id, [])
        if task.blocking is None:
            raise ValidationError(f"action {node_id}: blocking task needs thresholds")
        self.task = task

    @property
    def task_id(self):
        return self.task.id

    def _tick(self, ctx):
        try:
            spec = ctx.resolve(self.task)
            ctx.stack.set_task(spec, ctx.now)
            err = evaluate(spec, ctx.model, ctx.state).error_norm
        except Exception as exc:  # evaluation errors surface as node Failure
            logger.warning("action %s failed: %s", self.id, exc)
            return TickStatus.FAILURE
        entry = ctx.stack.get(spec.id)
        if entry is None:
            return TickStatus.FAILURE
        t_x = entry.execution_time(ctx.now)
        if t_x > self.task.blocking.time_threshold:
            return TickStatus.FAILURE
        if err <= self.task.blocking.error_threshold:
            return TickStatus.SUCCESS
        return TickStatus.RUNNING


# ---------------------------------------------------------------------------
# Tree document parsing

_CONTROL_TYPES = {
    "sequence": SequenceNode,
    "fallback": FallbackNode,
    "sot_sequence": SoTSequenceNode,
    "sot_fallback": SoTFallbackNode,
}


def parse_tree(document, tasks):
    """Build a validated tree from a nested dict document.

    `tasks` maps task id -> task spec (or template); action leaves reference
    tasks by id and become blocking or non-blocking depending on whether the
    task declares blocking thresholds.
    """
    counter = [0]
    root = _parse_node(document, tasks, counter)
    _validate_tree(root)
    return root


def _node_id(doc, counter, node_type):
    if "id" in doc:
        return str(doc["id"])
    counter[0] += 1
    return f"{node_type}_{counter[0]}"


def _require(doc, allowed, node_type):
    extra = set(doc) - allowed
    if extra:
        raise ParseError(f"{node_type} node: unknown keys {sorted(extra)}")


def _parse_node(doc, tasks, counter):
    if not isinstance(doc, dict) or "type" not in doc:
        raise ParseError(f"node document must be a mapping with a 'type': {doc!r}")
    node_type = doc["type"]

    if node_type in _CONTROL_TYPES:
        _require(doc, {"type", "id", "children"}, node_type)
        children = [_parse_node(c, tasks, counter) for c in doc.get("children", [])]
        if not children:
            raise ParseError(f"{node_type} node needs children")
        return _CONTROL_TYPES[node_type](_node_id(doc, counter, node_type), children)

    if node_type in ("parallel", "sot_parallel"):
        _require(doc, {"type", "id", "children", "threshold"}, node_type)
        children = [_parse_node(c, tasks, counter) for c in doc.get("children", [])]
        if not children:
            raise ParseError(f"{node_type} node needs children")
        threshold = doc.get("threshold", len(children))
        if not 1 <= threshold <= len(children):
            raise ValidationError(
                f"{node_type} threshold {threshold} out of range 1..{len(children)}"
            )
        cls = SoTParallelNode if node_type == "sot_parallel" else ParallelNode
        return cls(_node_id(doc, counter, node_type), children, threshold)

    if node_type == "decorator":
        _require(doc, {"type", "id", "child", "policy", "key"}, node_type)
        if "child" not in doc:
            raise ParseError("decorator node needs exactly one child")
        child = _parse_node(doc["child"], tasks, counter)
        return DecoratorNode(_node_id(doc, counter, node_type), child,
                             doc.get("policy", "force_success"), doc.get("key"))

    if node_type == "condition":
        _require(doc, {"type", "id", "key"}, node_type)
        if "key" not in doc:
            raise ParseError("condition node needs a blackboard key")
        return ConditionNode(_node_id(doc, counter, node_type), doc["key"])

    if node_type == "action":
        _require(doc, {"type", "id", "task"}, node_type)
        task_id = doc.get("task")
        if task_id not in tasks:
            raise ParseError(f"action node references unknown task {task_id!r}")
        task = tasks[task_id]
        node_id = _node_id(doc, counter, node_type)
        if task.blocking is not None:
            return BlockingActionNode(node_id, task)
        return NonBlockingActionNode(node_id, task)

    raise ParseError(f"unknown node type {node_type!r}")


def _validate_tree(root):
    node_ids = set()
    task_ids = set()
    for node in root.iter_nodes():
        if node.id in node_ids:
            raise ValidationError(f"duplicate node id {node.id!r}")
        node_ids.add(node.id)
        if isinstance(node, (NonBlockingActionNode, BlockingActionNode)):
            if node.task_id in task_ids:
                raise ValidationError(
                    f"task id {node.task_id!r} used by more than one action leaf"
                )
            task_ids.add(node.task_id)
