"""Scenario loading, the deterministic co-simulation loop, and trace export.

A scenario file is one YAML document with sections model / world / tasks /
tree / run plus optional disturbances, batch, and retry.  Unknown keys are
hard errors.  The runner alternates one BT tick with `ticks_ratio` control
steps; identical scenario + seed yields a byte-identical trace.
"""

import copy
import importlib.resources
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .bt import Blackboard, TickContext, TickStatus, parse_tree
from .cascade import backend_name
from .errors import NumericalFailure, ScenarioError, SotBtError
from .kinematics import JointState, compute_chain, load_bundled_model, load_model
from .runtime import TaskStack, control_step_ex
from .tasks import BlockingParams, TaskKind, TaskSpec


class Outcome(Enum):
    ROOT_SUCCESS = "RootSuccess"
    ROOT_FAILURE = "RootFailure"
    TIMEOUT = "Timeout"
    ERROR = "Error"


def _strict(doc, required, optional, where):
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    missing = set(required) - set(doc)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    extra = set(doc) - set(required) - set(optional)
    if extra:
        raise ScenarioError(f"{where}: unknown keys {sorted(extra)}")


def _vec3(v, where):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ScenarioError(f"{where}: expected a 3-vector")
    if not np.isfinite(arr).all():
        raise ScenarioError(f"{where}: non-finite entries")
    return arr


def _unit3(v, where):
    arr = _vec3(v, where)
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > 1e-9:
        raise ScenarioError(f"{where}: must be unit norm")
    return arr


# ---------------------------------------------------------------------------
# World


@dataclass
class Plane:
    normal: np.ndarray
    offset: float
    margin: float

    def clearance(self, x):
        return float(self.normal @ x - (self.offset + self.margin))


@dataclass
class Line:
    p0: np.ndarray
    direction: np.ndarray


@dataclass
class MovableObject:
    position: np.ndarray
    attach_radius: float = 0.0
    on_attach_flag: str = None
    detach_on_flag: str = None
    attached: bool = False


@dataclass
class World:
    planes: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    objects: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def clone(self):
        return copy.deepcopy(self)


def _parse_world(doc):
    _strict(doc, (), ("planes", "points", "lines", "objects", "flags"), "world")
    world = World()
    for label, pd in (doc.get("planes") or {}).items():
        _strict(pd, ("normal", "offset"), ("margin",), f"plane {label}")
        world.planes[label] = Plane(normal=_unit3(pd["normal"], f"plane {label}"),
                                    offset=float(pd["offset"]),
                                    margin=float(pd.get("margin", 0.02)))
    for label, v in (doc.get("points") or {}).items():
        world.points[label] = _vec3(v, f"point {label}")
    for label, ld in (doc.get("lines") or {}).items():
        _strict(ld, ("p0",), ("direction", "toward"), f"line {label}")
        p0 = ld["p0"]
        p0 = world.points[p0].copy() if isinstance(p0, str) else _vec3(p0, f"line {label}")
        if "direction" in ld:
            u = _unit3(ld["direction"], f"line {label}")
        elif "toward" in ld:
            target = ld["toward"]
            target = world.points[target] if isinstance(target, str) else _vec3(
                target, f"line {label}")
            diff = target - p0
            norm = np.linalg.norm(diff)
            if norm < 1e-12:
                raise ScenarioError(f"line {label}: endpoints coincide")
            u = diff / norm
        else:
            raise ScenarioError(f"line {label}: needs direction or toward")
        world.lines[label] = Line(p0=p0, direction=u)
    for label, od in (doc.get("objects") or {}).items():
        _strict(od, ("position",),
                ("attach_radius", "on_attach_flag", "detach_on_flag"),
                f"object {label}")
        world.objects[label] = MovableObject(
            position=_vec3(od["position"], f"object {label}"),
            attach_radius=float(od.get("attach_radius", 0.0)),
            on_attach_flag=od.get("on_attach_flag"),
            detach_on_flag=od.get("detach_on_flag"))
    world.flags = dict(doc.get("flags") or {})
    return world


# ---------------------------------------------------------------------------
# Task templates (world labels resolved at tick time)


class TaskTemplate:
    """Task description whose geometric parameters may reference world labels;
    resolution happens per tick so moved goals propagate at the BT rate."""

    def __init__(self, task_id, doc):
        _strict(doc, ("kind", "priority"),
                ("gain", "blocking", "goal", "plane", "line", "bounds",
                 "goal_position", "goal_orientation"),
                f"task {task_id}")
        self.id = task_id
        try:
            self.kind = TaskKind(doc["kind"])
        except ValueError:
            raise ScenarioError(f"task {task_id}: unknown kind {doc['kind']!r}") from None
        self.priority = int(doc["priority"])
        self.gain = float(doc.get("gain", 1.0))
        self.blocking = None
        if "blocking" in doc:
            _strict(doc["blocking"], ("error_threshold", "time_threshold"), (),
                    f"task {task_id} blocking")
            self.blocking = BlockingParams(
                error_threshold=float(doc["blocking"]["error_threshold"]),
                time_threshold=float(doc["blocking"]["time_threshold"]))
        self.doc = doc

    def resolve(self, ctx):
        world = ctx.world
        d = self.doc
        if self.kind in (TaskKind.POINT_REACH, TaskKind.POSE_REACH):
            goal = d.get("goal", d.get("goal_position"))
            goal = _resolve_point(goal, world, f"task {self.id}")
            if self.kind == TaskKind.POINT_REACH:
                params = {"goal": goal}
            else:
                params = {"goal_position": goal,
                          "goal_orientation": np.asarray(d["goal_orientation"], dtype=float)}
        elif self.kind == TaskKind.PLANE_AVOID:
            plane = d["plane"]
            if isinstance(plane, str):
                try:
                    plane = world.planes[plane]
                except KeyError:
                    raise ScenarioError(f"task {self.id}: unknown plane {plane!r}") from None
                params = {"normal": plane.normal, "offset": plane.offset,
                          "margin": plane.margin}
            else:
                _strict(plane, ("normal", "offset"), ("margin",), f"task {self.id} plane")
                params = {"normal": _unit3(plane["normal"], f"task {self.id}"),
                          "offset": float(plane["offset"]),
                          "margin": float(plane.get("margin", 0.02))}
        elif self.kind == TaskKind.LINE_FOLLOW:
            line = d["line"]
            if isinstance(line, str):
                try:
                    line = world.lines[line]
                except KeyError:
                    raise ScenarioError(f"task {self.id}: unknown line {line!r}") from None
                params = {"p0": line.p0, "direction": line.direction}
            else:
                params = {"p0": _vec3(line["p0"], f"task {self.id}"),
                          "direction": _unit3(line["direction"], f"task {self.id}")}
        elif self.kind == TaskKind.JOINT_VELOCITY_BOX:
            params = {"bounds": d.get("bounds")}
        else:
            raise ScenarioError(f"task {self.id}: unhandled kind")
        return TaskSpec(id=self.id, kind=self.kind, params=params,
                        priority=self.priority, gain=self.gain, blocking=self.blocking)


def _resolve_point(value, world, where):
    if isinstance(value, str):
        if value in world.points:
            return world.points[value].copy()
        if value in world.objects:
            return world.objects[value].position.copy()
        raise ScenarioError(f"{where}: unknown point/object label {value!r}")
    return _vec3(value, where)


# ---------------------------------------------------------------------------
# Disturbances


class Disturbance:
    ACTIONS = ("set_flag", "move_goal", "move_object")

    def __init__(self, doc, index):
        where = f"disturbance {index}"
        _strict(doc, ("action",),
                ("at", "when_flag", "equals", "key", "value", "target", "to", "box"),
                where)
        self.action = doc["action"]
        if self.action not in self.ACTIONS:
            raise ScenarioError(f"{where}: unknown action {self.action!r}")
        if ("at" in doc) == ("when_flag" in doc):
            raise ScenarioError(f"{where}: needs exactly one trigger ('at' or 'when_flag')")
        self.at = float(doc["at"]) if "at" in doc else None
        self.when_flag = doc.get("when_flag")
        self.equals = doc.get("equals", True)
        self.key = doc.get("key")
        self.value = doc.get("value")
        self.target = doc.get("target")
        self.to = doc.get("to")
        self.box = doc.get("box")
        self.fired = False
        if self.action == "set_flag" and self.key is None:
            raise ScenarioError(f"{where}: set_flag needs a key")
        if self.action in ("move_goal", "move_object"):
            if self.target is None:
                raise ScenarioError(f"{where}: {self.action} needs a target label")
            if (self.to is None) == (self.box is None):
                raise ScenarioError(f"{where}: needs exactly one of 'to' or 'box'")
            if self.box is not None:
                _strict(self.box, ("lo", "hi"), (), f"{where} box")

    def due(self, t, blackboard):
        if self.fired:
            return False
        if self.at is not None:
            return t >= self.at
        return (self.when_flag in blackboard
                and blackboard.get(self.when_flag) == self.equals)

    def fire(self, world, blackboard, rng):
        self.fired = True
        if self.action == "set_flag":
            blackboard.set(self.key, self.value)
            return
        if self.to is not None:
            new_pos = _vec3(self.to, "disturbance target")
        else:
            lo = _vec3(self.box["lo"], "disturbance box lo")
            hi = _vec3(self.box["hi"], "disturbance box hi")
            new_pos = rng.uniform(lo, hi)
        if self.action == "move_goal":
            if self.target not in world.points:
                raise ScenarioError(f"disturbance targets unknown point {self.target!r}")
            world.points[self.target] = new_pos
        else:
            if self.target not in world.objects:
                raise ScenarioError(f"disturbance targets unknown object {self.target!r}")
            obj = world.objects[self.target]
            obj.position = new_pos
            obj.attached = False
            if obj.on_attach_flag:
                blackboard.set(obj.on_attach_flag, False)


# ---------------------------------------------------------------------------
# Scenario


@dataclass
class RunConfig:
    control_dt: float
    ticks_ratio: int
    max_time: float
    seed: int

    def __post_init__(self):
        if self.control_dt <= 0:
            raise ScenarioError("control_dt must be positive")
        if self.ticks_ratio < 1:
            raise ScenarioError("ticks_ratio must be >= 1")
        if self.max_time <= 0:
            raise ScenarioError("max time must be positive")


class Scenario:
    def __init__(self, doc, base_dir=None):
        _strict(doc, ("name", "model", "initial_q", "world", "tasks", "tree", "run"),
                ("disturbances", "batch", "retry"), "scenario")
        self.name = str(doc["name"])
        self.model = _load_model_ref(doc["model"], base_dir)
        self.initial_q = np.asarray(doc["initial_q"], dtype=float)
        if self.initial_q.shape != (self.model.n,):
            raise ScenarioError(
                f"initial_q has {self.initial_q.shape[0]} entries, model has {self.model.n}")
        self.world = _parse_world(doc["world"] or {})
        self.tasks = {tid: TaskTemplate(tid, td) for tid, td in doc["tasks"].items()}
        self.tree_doc = doc["tree"]
        self.retry = bool(doc.get("retry", False))
        rd = doc["run"]
        _strict(rd, ("control_dt", "ticks_ratio", "max_time"), ("seed",), "run")
        self.run_config = RunConfig(control_dt=float(rd["control_dt"]),
                                    ticks_ratio=int(rd["ticks_ratio"]),
                                    max_time=float(rd["max_time"]),
                                    seed=int(rd.get("seed", 0)))
        self.disturbance_docs = doc.get("disturbances") or []
        for i, dd in enumerate(self.disturbance_docs):
            Disturbance(dd, i)  # validate eagerly
        self.batch = None
        if "batch" in doc:
            _strict(doc["batch"], ("start_regions",), (), "batch")
            self.batch = []
            for i, region in enumerate(doc["batch"]["start_regions"]):
                _strict(region, ("lo", "hi"), (), f"start region {i}")
                lo = np.asarray(region["lo"], dtype=float)
                hi = np.asarray(region["hi"], dtype=float)
                if lo.shape != (self.model.n,) or hi.shape != (self.model.n,):
                    raise ScenarioError(f"start region {i}: wrong dof count")
                self.batch.append((lo, hi))
        self.build_tree()  # validate the tree document eagerly

    def build_tree(self):
        root = parse_tree(self.tree_doc, self.tasks)
        if self.retry:
            from .bt import DecoratorNode

            root = DecoratorNode("retry_root", root, "retry_once")
        return root

    @property
    def plane_labels(self):
        return sorted(self.world.planes)

    @property
    def task_ids(self):
        return sorted(self.tasks)


def _load_model_ref(ref, base_dir):
    if isinstance(ref, str) and not ref.endswith((".yaml", ".yml")):
        return load_bundled_model(ref)
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.is_file():
        raise ScenarioError(f"model file not found: {path}")
    return load_model(path)


def load_scenario(path):
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    return Scenario(doc, base_dir=path.parent)


def bundled_scenario_names():
    root = importlib.resources.files("sotbt") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled_scenario(name):
    ref = importlib.resources.files("sotbt") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return Scenario(yaml.safe_load(ref.read_text()))


# ---------------------------------------------------------------------------
# Trace


@dataclass
class ControlRow:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    task_errors: dict
    level_slacks: tuple
    active_ids: tuple
    revision: int
    clearances: dict


@dataclass
class TickRow:
    index: int
    t: float
    root_status: str
    statuses: dict
    halted: tuple
    removals: tuple  # (sot node id, frozenset of task ids)


@dataclass
class RunResult:
    outcome: Outcome
    control_rows: list
    tick_rows: list
    summary: dict
    attempts: int = 1
    error: str = None

    @property
    def succeeded(self):
        return self.outcome is Outcome.ROOT_SUCCESS


# ---------------------------------------------------------------------------
# Runner


def _update_objects(world, blackboard, ee_position):
    for obj in world.objects.values():
        if obj.attached and obj.detach_on_flag and obj.detach_on_flag in blackboard \
                and blackboard.get(obj.detach_on_flag):
            obj.attached = False
        if obj.attached:
            obj.position = ee_position.copy()
        elif (obj.attach_radius > 0.0
              and np.linalg.norm(ee_position - obj.position) < obj.attach_radius):
            obj.attached = True
            obj.position = ee_position.copy()
            if obj.on_attach_flag:
                blackboard.set(obj.on_attach_flag, True)


def run(scenario, seed=None, rates=None, initial_q=None, backend=None):
    """Deterministic single-threaded co-simulation of one scenario."""
    cfg = scenario.run_config
    dt = cfg.control_dt if rates is None else rates[0]
    ratio = cfg.ticks_ratio if rates is None else rates[1]
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    model = scenario.model
    world = scenario.world.clone()
    blackboard = Blackboard(world.flags)
    stack = TaskStack()
    tree = scenario.build_tree()
    disturbances = [Disturbance(dd, i) for i, dd in enumerate(scenario.disturbance_docs)]
    q0 = scenario.initial_q if initial_q is None else np.asarray(initial_q, dtype=float)
    state = JointState(q=q0.copy(), qdot=np.zeros(model.n), t=0.0)

    control_rows = []
    tick_rows = []
    outcome = Outcome.TIMEOUT
    error_msg = None
    tick_index = 0
    step_wall = 0.0
    step_count = 0

    try:
        while True:
            if world.objects:
                _update_objects(world, blackboard,
                                compute_chain(model, state.q).ee_position)
            for dist in disturbances:
                if dist.due(state.t, blackboard):
                    dist.fire(world, blackboard, rng)

            ctx = TickContext(stack=stack, blackboard=blackboard, now=state.t,
                              model=model, state=state, world=world, statuses={})
            with stack.batch():
                status = tree.tick(ctx)
            halted = tuple(ev[1] for ev in ctx.events if ev[0] == "halt")
            removals = tuple((ev[1], ev[2]) for ev in ctx.events if ev[0] == "remove")
            tick_rows.append(TickRow(index=tick_index, t=state.t,
                                     root_status=status.value,
                                     statuses={k: v.value for k, v in ctx.statuses.items()},
                                     halted=halted, removals=removals))
            tick_index += 1

            for _ in range(ratio):
                snap = stack.snapshot()
                t_pre = state.t
                q_pre = state.q
                ee = compute_chain(model, q_pre).ee_position
                wall0 = time.perf_counter()
                state, info = control_step_ex(model, state, snap, dt, backend=backend)
                step_wall += time.perf_counter() - wall0
                step_count += 1
                clearances = {label: plane.clearance(ee)
                              for label, plane in world.planes.items()}
                control_rows.append(ControlRow(
                    t=t_pre, q=q_pre, qdot=info.qdot,
                    task_errors=info.task_errors,
                    level_slacks=info.level_slacks,
                    active_ids=info.active_ids,
                    revision=info.revision,
                    clearances=clearances))
                if world.objects:
                    _update_objects(world, blackboard,
                                    compute_chain(model, state.q).ee_position)

            if status is TickStatus.SUCCESS:
                outcome = Outcome.ROOT_SUCCESS
                break
            if status is TickStatus.FAILURE:
                outcome = Outcome.ROOT_FAILURE
                break
            if state.t >= cfg.max_time:
                outcome = Outcome.TIMEOUT
                break
    except (NumericalFailure, SotBtError) as exc:
        outcome = Outcome.ERROR
        error_msg = str(exc)

    attempts = 1
    if scenario.retry:
        attempts = tree.retries_used + 1

    final_errors = control_rows[-1].task_errors if control_rows else {}
    min_clearance = min((min(row.clearances.values()) for row in control_rows
                         if row.clearances), default=float("nan"))
    summary = {
        "scenario": scenario.name,
        "outcome": outcome.value,
        "sim_time": round(state.t, 12),
        "ticks": tick_index,
        "control_steps": step_count,
        "mean_step_wall_ms": (step_wall / step_count * 1e3) if step_count else 0.0,
        "min_plane_clearance": min_clearance,
        "final_task_errors": final_errors,
        "attempts": attempts,
        "qp_backend": backend or backend_name(),
    }
    if error_msg:
        summary["error"] = error_msg
    return RunResult(outcome=outcome, control_rows=control_rows, tick_rows=tick_rows,
                     summary=summary, attempts=attempts, error=error_msg)


def run_concurrent(scenario, seed=None, rates=None, initial_q=None, backend=None,
                   wall_limit=60.0):
    """Two-thread execution: the BT loop and the control loop run as separate
    activities sharing one task stack.  Tick mutations stay atomic and every
    control step sees a single stack revision, but the interleaving (and so
    the trace) is not deterministic.  The tree is re-ticked as soon as the
    previous tick finishes, throttled only by a short sleep."""
    import threading

    cfg = scenario.run_config
    dt = cfg.control_dt if rates is None else rates[0]
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    model = scenario.model
    world = scenario.world.clone()
    blackboard = Blackboard(world.flags)
    stack = TaskStack()
    tree = scenario.build_tree()
    disturbances = [Disturbance(dd, i) for i, dd in enumerate(scenario.disturbance_docs)]
    q0 = scenario.initial_q if initial_q is None else np.asarray(initial_q, dtype=float)

    state_lock = threading.Lock()
    shared = {"state": JointState(q=q0.copy(), qdot=np.zeros(model.n), t=0.0),
              "status": TickStatus.RUNNING, "error": None}
    stop = threading.Event()
    control_rows = []
    tick_count = [0]

    def bt_loop():
        try:
            while not stop.is_set():
                with state_lock:
                    state = shared["state"]
                if world.objects:
                    _update_objects(world, blackboard,
                                    compute_chain(model, state.q).ee_position)
                for dist in disturbances:
                    if dist.due(state.t, blackboard):
                        dist.fire(world, blackboard, rng)
                ctx = TickContext(stack=stack, blackboard=blackboard, now=state.t,
                                  model=model, state=state, world=world, statuses={})
                with stack.batch():
                    status = tree.tick(ctx)
                tick_count[0] += 1
                if status is not TickStatus.RUNNING:
                    shared["status"] = status
                    stop.set()
                    return
                time.sleep(1e-4)
        except SotBtError as exc:
            shared["error"] = str(exc)
            stop.set()

    def control_loop():
        try:
            while not stop.is_set():
                snap = stack.snapshot()
                with state_lock:
                    state = shared["state"]
                new_state, info = control_step_ex(model, state, snap, dt,
                                                  backend=backend)
                with state_lock:
                    shared["state"] = new_state
                clearances = {label: plane.clearance(
                    compute_chain(model, state.q).ee_position)
                    for label, plane in world.planes.items()}
                control_rows.append(ControlRow(
                    t=state.t, q=state.q, qdot=info.qdot,
                    task_errors=info.task_errors, level_slacks=info.level_slacks,
                    active_ids=info.active_ids, revision=info.revision,
                    clearances=clearances))
                if new_state.t >= cfg.max_time:
                    stop.set()
                    return
        except SotBtError as exc:
            shared["error"] = str(exc)
            stop.set()

    threads = [threading.Thread(target=bt_loop, daemon=True),
               threading.Thread(target=control_loop, daemon=True)]
    wall0 = time.perf_counter()
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=max(0.0, wall_limit - (time.perf_counter() - wall0)))
    stop.set()
    for th in threads:
        th.join(timeout=5.0)

    if shared["error"]:
        outcome = Outcome.ERROR
    elif shared["status"] is TickStatus.SUCCESS:
        outcome = Outcome.ROOT_SUCCESS
    elif shared["status"] is TickStatus.FAILURE:
        outcome = Outcome.ROOT_FAILURE
    else:
        outcome = Outcome.TIMEOUT
    state = shared["state"]
    min_clearance = min((min(row.clearances.values()) for row in control_rows
                         if row.clearances), default=float("nan"))
    attempts = tree.retries_used + 1 if scenario.retry else 1
    summary = {
        "scenario": scenario.name,
        "outcome": outcome.value,
        "sim_time": round(state.t, 12),
        "ticks": tick_count[0],
        "control_steps": len(control_rows),
        "mean_step_wall_ms": 0.0,
        "min_plane_clearance": min_clearance,
        "final_task_errors": control_rows[-1].task_errors if control_rows else {},
        "attempts": attempts,
        "qp_backend": backend or backend_name(),
        "mode": "concurrent",
    }
    if shared["error"]:
        summary["error"] = shared["error"]
    return RunResult(outcome=outcome, control_rows=control_rows, tick_rows=[],
                     summary=summary, attempts=attempts, error=shared["error"])


def run_batch(scenario, trials, seed=0, rates=None, backend=None):
    """Randomized repeated runs in the shape of the robustness table:
    per-start-region and total success rates split by attempt."""
    if trials < 1:
        raise ScenarioError("trials must be >= 1")
    regions = scenario.batch or [(scenario.initial_q, scenario.initial_q)]
    rows = {i: {"trials": 0, "attempt1": 0, "attempt2": 0, "failed": 0}
            for i in range(len(regions))}
    results = []
    for k in range(trials):
        region_idx = k % len(regions)
        lo, hi = regions[region_idx]
        trial_rng = np.random.default_rng([seed, k])
        q0 = trial_rng.uniform(lo, hi)
        result = run(scenario, seed=int(trial_rng.integers(2**31)), rates=rates,
                     initial_q=q0, backend=backend)
        rec = rows[region_idx]
        rec["trials"] += 1
        if result.succeeded:
            if result.attempts <= 1:
                rec["attempt1"] += 1
            else:
                rec["attempt2"] += 1
        else:
            rec["failed"] += 1
        results.append((region_idx, result))
    return BatchReport(rows=rows, results=results)


@dataclass
class BatchReport:
    rows: dict
    results: list

    @property
    def total_trials(self):
        return sum(r["trials"] for r in self.rows.values())

    @property
    def total_successes(self):
        return sum(r["attempt1"] + r["attempt2"] for r in self.rows.values())

    @property
    def all_succeeded(self):
        return self.total_successes == self.total_trials

    def table(self):
        def pct(part, whole):
            return f"{100.0 * part / whole:.0f}%" if whole else "-"

        lines = ["Position  #Trials  Overall  Attempt 1  Attempt 2"]
        tot = {"trials": 0, "attempt1": 0, "attempt2": 0}
        for i in sorted(self.rows):
            r = self.rows[i]
            overall = r["attempt1"] + r["attempt2"]
            lines.append(f"{i + 1:>8}  {r['trials']:>7}  {pct(overall, r['trials']):>7}"
                         f"  {pct(r['attempt1'], r['trials']):>9}"
                         f"  {pct(r['attempt2'], r['trials'] - r['attempt1']) if r['attempt2'] else '-':>9}")
            for key in tot:
                tot[key] += r[key]
        overall = tot["attempt1"] + tot["attempt2"]
        lines.append(f"{'Total':>8}  {tot['trials']:>7}  {pct(overall, tot['trials']):>7}"
                     f"  {pct(tot['attempt1'], tot['trials']):>9}"
                     f"  {pct(tot['attempt2'], tot['trials'] - tot['attempt1']) if tot['attempt2'] else '-':>9}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Export


def _fmt(v):
    return repr(float(v))


def trace_csv(result, scenario):
    """Control rows; columns are frozen: t, q*, qd*, err_<task> (blank when
    inactive), wnorm_<level>, active_tasks, revision."""
    n = scenario.model.n
    task_ids = scenario.task_ids
    max_levels = len({t.priority for t in scenario.tasks.values()})
    header = (["t"] + [f"q{i}" for i in range(n)] + [f"qd{i}" for i in range(n)]
              + [f"err_{tid}" for tid in task_ids]
              + [f"wnorm_{p}" for p in range(1, max_levels + 1)]
              + ["active_tasks", "revision"])
    lines = [",".join(header)]
    for row in result.control_rows:
        cells = [_fmt(row.t)]
        cells += [_fmt(v) for v in row.q]
        cells += [_fmt(v) for v in row.qdot]
        cells += [_fmt(row.task_errors[tid]) if tid in row.task_errors else ""
                  for tid in task_ids]
        slacks = list(row.level_slacks) + [None] * (max_levels - len(row.level_slacks))
        cells += [_fmt(w) if w is not None else "" for w in slacks]
        cells.append(";".join(row.active_ids))
        cells.append(str(row.revision))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def ticks_csv(result):
    header = ["tick", "t", "root_status", "node_statuses", "halted", "removed"]
    lines = [",".join(header)]
    for row in result.tick_rows:
        statuses = ";".join(f"{k}={v}" for k, v in row.statuses.items())
        removed = ";".join(f"{nid}:{'|'.join(sorted(ids))}" for nid, ids in row.removals)
        lines.append(",".join([str(row.index), _fmt(row.t), row.root_status,
                               statuses, ";".join(row.halted), removed]))
    return "\n".join(lines) + "\n"


def plotdata_csv(result, scenario):
    """Time vs per-task error norm and per-plane clearance, for plotting."""
    task_ids = scenario.task_ids
    planes = scenario.plane_labels
    header = (["t"] + [f"err_{tid}" for tid in task_ids]
              + [f"clearance_{lbl}" for lbl in planes])
    lines = [",".join(header)]
    for row in result.control_rows:
        cells = [_fmt(row.t)]
        cells += [_fmt(row.task_errors[tid]) if tid in row.task_errors else ""
                  for tid in task_ids]
        cells += [_fmt(row.clearances[lbl]) for lbl in planes]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_text(result):
    s = result.summary
    lines = [f"scenario: {s['scenario']}",
             f"outcome: {s['outcome']}",
             f"simulated time: {s['sim_time']} s",
             f"bt ticks: {s['ticks']}",
             f"control steps: {s['control_steps']}",
             f"mean control step wall time: {s['mean_step_wall_ms']:.4f} ms",
             f"min plane clearance: {s['min_plane_clearance']:.6g} m",
             f"attempts: {s['attempts']}"]
    if s["final_task_errors"]:
        lines.append("final task error norms:")
        for tid, err in sorted(s["final_task_errors"].items()):
            lines.append(f"  {tid}: {err:.6g}")
    if "error" in s:
        lines.append(f"error: {s['error']}")
    return "\n".join(lines) + "\n"


def export(result, scenario, out_dir, formats=("csv", "summary")):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        (out_dir / "trace.csv").write_text(trace_csv(result, scenario))
        (out_dir / "ticks.csv").write_text(ticks_csv(result))
        written += ["trace.csv", "ticks.csv"]
    if "summary" in formats:
        (out_dir / "summary.txt").write_text(summary_text(result))
        written.append("summary.txt")
    if "plotdata" in formats:
        (out_dir / "plotdata.csv").write_text(plotdata_csv(result, scenario))
        written.append("plotdata.csv")
    return [out_dir / name for name in written]
