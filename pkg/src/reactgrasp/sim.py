"""Kinematic closed-loop simulation of reactive reach-to-grasp episodes.

The integrator advances ``q <- q + qdot dt`` at the control rate; the planner
(target selection, fingertip paths, fields, joint QP) runs at the planning
rate on an immutable snapshot of the robot and object state. In the default
deterministic mode both loops share one thread and the planner runs every
``control_rate / planning_rate`` steps. The real-time mode runs them on two
threads that exchange snapshots through last-value-wins slots.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import threading
import time
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .controller import ControllerParams, GraspController, PLANNERS
from .fields import _expso3
from .geometry import OBSTACLE, TARGET, SdfObject, build_collision_pairs, clearance_values
from .kinematics import ConfigurationError, RobotModel, forward_kinematics, load_robot
from .qpsolver import warm_up
from .scenes import SceneObject, build_objects, load_scenario_dict, pose_from, scenario_candidates

log = logging.getLogger(__name__)

TELEPORT, VELOCITY, PUSH = "object_teleport", "object_velocity", "robot_push"
SUCCESS, COLLISION, TIMEOUT, STALL, REACHED = "success", "collision", "timeout", "stall", "reached"


@dataclass
class SimParams:
    control_rate: float = 500.0  # Hz
    planning_rate: float = 100.0  # Hz
    duration: float = 20.0  # s
    threshold: float = 0.01  # m, per-fingertip success band
    hold: float = 0.1  # s the band must hold before the gripper closes
    stall_time: float = 1.0  # s
    stall_speed: float = 1e-3  # m/s
    record_paths: bool = False
    deterministic: bool = True
    seed: int = 0
    stop_on_success: bool = True  # False keeps running to the duration (benchmarks)

    def __post_init__(self):
        ratio = self.control_rate / self.planning_rate
        if self.control_rate <= 0 or self.planning_rate <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError("control rate must be a positive integer multiple of the planning rate")
        if self.duration <= 0 or self.threshold <= 0 or self.hold < 0:
            raise ConfigurationError("duration and threshold must be positive")


@dataclass
class DisturbanceEvent:
    time: float
    kind: str
    object: str | None = None
    pose: np.ndarray | None = None  # teleport target (4x4, world <- object)
    twist: np.ndarray | None = None  # (6,) linear then angular velocity, world frame
    qdot: np.ndarray | None = None  # joint-velocity offset of a push
    duration: float = 0.0

    def __post_init__(self):
        if self.time < 0:
            raise ConfigurationError("disturbance time must be non-negative")
        if self.kind not in (TELEPORT, VELOCITY, PUSH):
            raise ConfigurationError(f"unknown disturbance kind {self.kind!r}")
        if self.kind in (VELOCITY, PUSH) and not self.duration > 0:
            raise ConfigurationError(f"{self.kind} needs a positive duration")
        if self.kind in (TELEPORT, VELOCITY) and not self.object:
            raise ConfigurationError(f"{self.kind} needs an object id")
        if self.kind == TELEPORT:
            self.pose = pose_from(self.pose)
        if self.kind == VELOCITY:
            self.twist = np.asarray(self.twist, dtype=float).reshape(6)
        if self.kind == PUSH:
            self.qdot = np.asarray(self.qdot, dtype=float)

    @classmethod
    def from_dict(cls, d: dict) -> "DisturbanceEvent":
        kind = d.get("kind", d.get("type"))
        return cls(float(d["time"]), kind, d.get("object"), d.get("pose"), d.get("twist"), d.get("qdot"),
                   float(d.get("duration", 0.0)))

    def to_dict(self) -> dict:
        out = {"time": self.time, "kind": self.kind}
        if self.object is not None:
            out["object"] = self.object
        if self.pose is not None:
            out["pose"] = np.asarray(self.pose).tolist()
        if self.twist is not None:
            out["twist"] = np.asarray(self.twist).tolist()
        if self.qdot is not None:
            out["qdot"] = np.asarray(self.qdot).tolist()
        if self.duration:
            out["duration"] = self.duration
        return out


@dataclass
class Scene:
    """Objects (one target), environment, candidate grasps in the target frame, q0 and disturbances."""

    objects: list[SceneObject]
    environment: list[SdfObject]
    candidates: list[np.ndarray]
    q0: np.ndarray
    disturbances: list[DisturbanceEvent] = field(default_factory=list)
    self_pairs: list | None = None
    name: str = "scene"

    def __post_init__(self):
        targets = [o for o in self.objects if o.obj.role == TARGET]
        if len(targets) != 1:
            raise ConfigurationError("scene needs exactly one target object")
        names = {o.name for o in self.objects}
        for ev in self.disturbances:
            if ev.object is not None and ev.object not in names:
                raise ConfigurationError(f"disturbance refers to unknown object {ev.object!r}")
        if not self.candidates:
            raise ConfigurationError("empty candidate set")
        m = len(self.candidates[0])
        if any(np.asarray(c).shape != (m, 3) for c in self.candidates):
            raise ConfigurationError("every candidate set needs the same number of fingertip positions")
        self.q0 = np.asarray(self.q0, dtype=float)

    @property
    def target(self) -> SceneObject:
        return next(o for o in self.objects if o.obj.role == TARGET)

    def validate(self, model: RobotModel):
        model.check_q(self.q0)
        if len(self.candidates[0]) != model.m:
            raise ConfigurationError(f"candidates have {len(self.candidates[0])} fingertips, robot has {model.m}")
        for ev in self.disturbances:
            if ev.kind == PUSH and ev.qdot.shape != (model.n,):
                raise ConfigurationError("push offset must have one entry per joint")


@dataclass
class Scenario:
    scene: Scene
    robot: RobotModel
    controller: ControllerParams
    sim: SimParams


# ---------------------------------------------------------------------------
# Parameter overrides


def _parse_value(text: str):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, TypeError):
        return text


def apply_overrides(controller: ControllerParams, sim: SimParams, overrides: dict):
    """Apply dotted ``section.name`` overrides (sections: fields, tracker, path, sim)."""
    controller = copy.deepcopy(controller)
    sim_vals = {}
    for key, val in overrides.items():
        section, _, name = key.partition(".")
        if isinstance(val, str):
            val = _parse_value(val)
        if section == "sim":
            if name not in {f.name for f in fields(SimParams)}:
                raise ConfigurationError(f"unknown parameter {key!r}")
            sim_vals[name] = val
            continue
        target = getattr(controller, section, None)
        if not is_dataclass(target) or name not in {f.name for f in fields(target)}:
            raise ConfigurationError(f"unknown parameter {key!r}")
        setattr(controller, section, replace(target, **{name: val}))
    return controller, replace(sim, **sim_vals)


# ---------------------------------------------------------------------------
# Scenario files


def _initial_q(spec, model: RobotModel) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in model.named_configurations:
            raise ConfigurationError(f"unknown named configuration {spec!r}")
        return model.named_configurations[spec].copy()
    return model.check_q(np.asarray(spec, dtype=float))


def scenario_from_dict(data: dict, base_dir: Path | None = None, robot: RobotModel | None = None,
                       overrides: dict | None = None, seed: int | None = None) -> Scenario:
    from .robots import default_robot, default_self_pairs

    if robot is None:
        rpath = data.get("robot", "builtin")
        if rpath == "builtin":
            robot = default_robot()
        else:
            p = Path(rpath)
            robot = load_robot(base_dir / p if base_dir is not None and not p.is_absolute() else p)
    objects, env = build_objects(data, base_dir)
    target = next(o for o in objects if o.obj.role == TARGET)
    cands = scenario_candidates(data, target)
    q0 = _initial_q(data.get("initial", "center_up"), robot)
    events = [DisturbanceEvent.from_dict(d) for d in data.get("disturbances", [])]
    pairs = data.get("self_pairs")
    if pairs is None and robot.name == "arm7_hand8":
        pairs = default_self_pairs(robot)
    scene = Scene(objects, env, cands, q0, events, pairs or [], data.get("name", "scene"))
    scene.validate(robot)
    params = dict(data.get("params", {}))
    sim = SimParams()
    for k in ("control_rate", "planning_rate", "duration", "seed"):
        if k in data:
            params[f"sim.{k}"] = data[k]
    params.update(overrides or {})
    if seed is not None:
        params["sim.seed"] = seed
    controller, sim = apply_overrides(ControllerParams(), sim, params)
    return Scenario(scene, robot, controller, sim)


def load_scenario(path, overrides: dict | None = None, seed: int | None = None) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return scenario_from_dict(load_scenario_dict(path), path.parent, overrides=overrides, seed=seed)


# ---------------------------------------------------------------------------
# Simulation state and disturbances


@dataclass(frozen=True)
class Snapshot:
    """Immutable state handed to the planner."""

    t: float
    q: np.ndarray
    objects: tuple[SdfObject, ...]


@dataclass
class SimState:
    t: float
    q: np.ndarray
    base_poses: dict  # object name -> pose before scripted motion offsets
    phases: dict
    twists: list = field(default_factory=list)  # (name, twist, end time)
    pushes: list = field(default_factory=list)  # (qdot offset, end time)


def apply_disturbance(state: SimState, event: DisturbanceEvent) -> SimState:
    """Return a new state with ``event`` applied (the input is not modified)."""
    new = replace(state, base_poses=dict(state.base_poses), twists=list(state.twists), pushes=list(state.pushes))
    if event.kind == TELEPORT:
        if event.object not in new.base_poses:
            raise ConfigurationError(f"unknown object {event.object!r}")
        new.base_poses[event.object] = np.array(event.pose, dtype=float)
    elif event.kind == VELOCITY:
        if event.object not in new.base_poses:
            raise ConfigurationError(f"unknown object {event.object!r}")
        new.twists.append((event.object, np.array(event.twist), event.time + event.duration))
    else:
        new.pushes.append((np.array(event.qdot), event.time + event.duration))
    return new


def _object_snapshots(scene: Scene, state: SimState) -> tuple[SdfObject, ...]:
    out = []
    for so in scene.objects:
        T = state.base_poses[so.name].copy()
        if so.motion is not None:
            T[:3, 3] += so.motion.offset(state.t, state.phases[so.name])
        out.append(so.obj.with_pose(T))
    return tuple(out)


def _advance_objects(state: SimState, dt: float):
    t_end = state.t + dt
    keep = []
    for name, tw, end in state.twists:
        T = state.base_poses[name].copy()
        T[:3, 3] += tw[:3] * dt
        T[:3, :3] = _expso3(tw[3:] * dt) @ T[:3, :3]
        state.base_poses[name] = T
        if end > t_end + 1e-12:
            keep.append((name, tw, end))
    state.twists = keep


def _push_velocity(state: SimState, n: int, dt: float) -> np.ndarray:
    v = np.zeros(n)
    keep = []
    for qd, end in state.pushes:
        v += qd
        if end > state.t + dt + 1e-12:
            keep.append((qd, end))
    state.pushes = keep
    return v


# ---------------------------------------------------------------------------
# Trace


@dataclass
class Trace:
    columns: list[str]
    rows: list
    ticks: list = field(default_factory=list)
    events: list = field(default_factory=list)
    paths: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name) -> np.ndarray:
        return self.array()[:, self.columns.index(name)]

    def terminal(self) -> dict | None:
        for ev in reversed(self.events):
            if ev["type"] in (SUCCESS, COLLISION, TIMEOUT):
                return ev
        return None

    def write(self, out_dir, prefix="trace"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{prefix}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            w.writerows([[repr(float(v)) for v in r] for r in self.rows])
        (out / f"{prefix}_events.json").write_text(
            json.dumps({"meta": self.meta, "events": self.events, "ticks": self.ticks}, indent=1, default=_json_default)
        )
        if self.paths:
            with open(out / f"{prefix}_paths.jsonl", "w") as fh:
                for rec in self.paths:
                    fh.write(json.dumps(rec, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def trace_columns(model: RobotModel) -> list[str]:
    cols = ["t"] + [f"q{j}" for j in range(model.n)]
    for i in range(model.m):
        cols += [f"x{i}_{a}" for a in "xyz"]
    for i in range(model.m):
        cols += [f"target{i}_{a}" for a in "xyz"]
    cols += [f"err{i}" for i in range(model.m)]
    cols += ["error", "center_error", "min_gamma", "min_target", "min_obstacle", "alpha", "beta", "target_index"]
    return cols


# ---------------------------------------------------------------------------
# Episodes


class _Slot:
    """Single-producer/single-consumer last-value-wins exchange."""

    def __init__(self, value=None):
        self._lock = threading.Lock()
        self._value = value

    def put(self, value):
        with self._lock:
            self._value = value

    def get(self):
        with self._lock:
            return self._value


class _Episode:
    def __init__(self, scene: Scene, robot: RobotModel, params: ControllerParams, sim: SimParams, planner: str):
        scene.validate(robot)
        self.scene, self.robot, self.sim = scene, robot, sim
        self.pairs = build_collision_pairs(robot, scene.self_pairs or [], scene.environment)
        self.controller = GraspController(robot, self.pairs, scene.environment, params, planner)
        rng = np.random.default_rng(sim.seed)
        phases = {}
        for so in scene.objects:
            ph = so.motion.phase if so.motion is not None else 0.0
            phases[so.name] = float(rng.uniform(0, 2 * np.pi)) if ph == "random" else float(ph)
        self.state = SimState(0.0, scene.q0.copy(), {so.name: so.obj.pose.copy() for so in scene.objects}, phases)
        self.pending = sorted(scene.disturbances, key=lambda e: e.time)
        self.columns = trace_columns(robot)
        self.trace = Trace(self.columns, [], meta={"scene": scene.name, "planner": planner, "seed": sim.seed,
                                                   "control_rate": sim.control_rate,
                                                   "planning_rate": sim.planning_rate})
        self.roles = [so.obj.role for so in scene.objects]
        self.qdot = np.zeros(robot.n)
        self.monitor = _Monitor(sim)
        warm_up()  # compile/load the solver kernels before the clock starts

    def snapshot(self) -> Snapshot:
        return Snapshot(self.state.t, self.state.q.copy(), _object_snapshots(self.scene, self.state))

    def candidates_world(self, objects) -> list[np.ndarray]:
        T = objects[self.roles.index(TARGET)].pose
        return [c @ T[:3, :3].T + T[:3, 3] for c in self.scene.candidates]

    def plan(self, snap: Snapshot, tick_index: int):
        res = self.controller.tick(snap.q, snap.objects, self.candidates_world(snap.objects))
        out = res.tracker
        rec = {
            "tick": tick_index, "t": snap.t, "status": out.status, "iterations": out.iterations,
            "residual": out.residual, "rows": out.rows, "flags": out.flags, "target_index": res.target_index,
            "alpha": res.targets.alpha, "beta": res.targets.beta, "g": res.targets.g,
            "wall": res.timings["total"], "timings": res.timings,
            "path_violation": [p.max_violation if p is not None else None for p in res.paths],
            "path_seed": [o.last_seed for o in self.controller.optimizers] if self.controller.planner == "ours" else [],
        }
        self.trace.ticks.append(rec)
        if self.sim.record_paths and self.controller.planner == "ours":
            self.trace.paths.append({"tick": tick_index, "t": snap.t,
                                     "paths": [p.waypoints for p in res.paths if p is not None]})
        if "infeasible" in out.flags:
            self.event("infeasible", snap.t)
        return res

    def event(self, etype, t, **extra):
        ev = {"type": etype, "t": float(t)}
        ev.update(extra)
        self.trace.events.append(ev)
        return ev

    def apply_due(self):
        st = self.state
        while self.pending and self.pending[0].time <= st.t + 1e-12:
            ev = self.pending.pop(0)
            self.state = apply_disturbance(self.state, ev)
            self.monitor.in_band_since = None  # the hold window restarts after every disturbance
            self.event("disturbance", self.state.t, kind=ev.kind, object=ev.object)

    def record(self, targets_world, alpha, beta, k):
        robot, st = self.robot, self.state
        kin = forward_kinematics(robot, st.q)
        objs = _object_snapshots(self.scene, st)
        g, per_obj = clearance_values(robot, kin, self.pairs, self.scene.environment, objs)
        min_t = min([d for d, r in zip(per_obj, self.roles) if r == TARGET], default=np.inf)
        min_o = min([d for d, r in zip(per_obj, self.roles) if r == OBSTACLE], default=np.inf)
        x = kin.positions
        tgt = np.asarray(targets_world, dtype=float)
        errs = np.linalg.norm(x - tgt, axis=1)
        center = float(np.linalg.norm(x.mean(axis=0) - tgt.mean(axis=0)))
        row = np.concatenate(([st.t], st.q, x.ravel(), tgt.ravel(), errs,
                              [errs.max(), center, g, min_t, min_o, alpha, beta, k]))
        self.trace.rows.append(row)
        return x, errs.max(), g, min_t, min_o

    def integrate(self, qdot, dt):
        st = self.state
        push = _push_velocity(st, self.robot.n, dt)
        _advance_objects(st, dt)
        st.q = st.q + (qdot + push) * dt
        st.t = st.t + dt


def run_episode(scene: Scene, robot: RobotModel, params: ControllerParams | None = None,
                sim: SimParams | None = None, planner: str = "ours", duration_limit: float | None = None) -> Trace:
    """Simulate one episode and return its trace (success, collision or timeout)."""
    if planner not in PLANNERS:
        raise ConfigurationError(f"unknown planner {planner!r}")
    params = params or ControllerParams()
    sim = sim or SimParams()
    if duration_limit is not None:
        sim = replace(sim, duration=duration_limit)
    ep = _Episode(scene, robot, params, sim, planner)
    if sim.deterministic:
        _run_deterministic(ep)
    else:
        _run_threaded(ep)
    return ep.trace


class _Monitor:
    """Success/stall bookkeeping shared by both loop modes."""

    def __init__(self, sim: SimParams):
        self.sim = sim
        self.in_band_since = None
        self.slow_since = None
        self.stalled = False
        self.prev_x = None
        self.reported = False

    def update(self, ep: _Episode, t, x, err, dt):
        sim = self.sim
        if err < sim.threshold:
            if self.in_band_since is None:
                self.in_band_since = t
            if t - self.in_band_since >= sim.hold - 1e-9:
                return SUCCESS
        else:
            self.in_band_since = None
            self.reported = False
        if self.prev_x is not None:
            speed = float(np.max(np.linalg.norm(x - self.prev_x, axis=1))) / dt
            if speed < sim.stall_speed and err >= sim.threshold:
                if self.slow_since is None:
                    self.slow_since = t
                if not self.stalled and t - self.slow_since >= sim.stall_time:
                    self.stalled = True
                    ep.event(STALL, t, error=err)
            else:
                self.slow_since = None
                self.stalled = False
        self.prev_x = x
        return None


def _step_checks(ep: _Episode, tgt, alpha, beta, k, dt):
    x, err, g, mt, mo = ep.record(tgt, alpha, beta, k)
    st = ep.state
    mon = ep.monitor
    if min(g, mt, mo) < 0:
        ep.event(COLLISION, st.t, min_gamma=g, min_target=mt, min_obstacle=mo, error=err)
        return True
    if mon.update(ep, st.t, x, err, dt) == SUCCESS and not mon.reported:
        mon.reported = True
        # success only counts once the disturbance schedule is exhausted
        final = not ep.pending and not st.pushes and not st.twists
        if final and ep.sim.stop_on_success:
            ep.event(SUCCESS, st.t, error=err)
            return True
        ep.event(REACHED, st.t, error=err)
    return False


def _run_deterministic(ep: _Episode):
    sim = ep.sim
    dt = 1.0 / sim.control_rate
    ratio = int(round(sim.control_rate / sim.planning_rate))
    steps = int(round(sim.duration * sim.control_rate))
    tgt, alpha, beta, k = None, 0.0, 0.0, -1
    for step in range(steps + 1):
        ep.state.t = step * dt  # avoids drift from repeated addition
        ep.apply_due()
        if step % ratio == 0:
            snap = ep.snapshot()
            res = ep.plan(snap, step // ratio)
            ep.qdot = res.qdot
            tgt, alpha, beta, k = res.targets.target, res.targets.alpha, res.targets.beta, res.target_index
        elif ep.scene.objects and any(so.motion is not None for so in ep.scene.objects) or ep.state.twists:
            # the target may have moved since the last tick; keep the recorded target current
            tgt = ep.candidates_world(_object_snapshots(ep.scene, ep.state))[k]
        if _step_checks(ep, tgt, alpha, beta, k, dt):
            return
        if step == steps:
            break
        ep.integrate(ep.qdot, dt)
    ep.event(TIMEOUT, ep.state.t, error=float(ep.trace.rows[-1][ep.columns.index("error")]))


def _run_threaded(ep: _Episode):
    """Real-time two-thread mode: 500 Hz integrator, 100 Hz planner."""
    sim = ep.sim
    dt = 1.0 / sim.control_rate
    period = 1.0 / sim.planning_rate
    steps = int(round(sim.duration * sim.control_rate))
    snap_slot = _Slot(ep.snapshot())
    cmd_slot = _Slot(None)
    stop = threading.Event()
    overruns = [0]

    def planner():
        tick = 0
        next_t = time.perf_counter()
        while not stop.is_set():
            snap = snap_slot.get()
            res = ep.plan(snap, tick)
            cmd_slot.put(res)
            tick += 1
            next_t += period
            now = time.perf_counter()
            if now > next_t:
                missed = int((now - next_t) // period) + 1
                overruns[0] += missed
                next_t += missed * period
            else:
                time.sleep(max(0.0, next_t - now))

    th = threading.Thread(target=planner, daemon=True)
    tgt, alpha, beta, k = None, 0.0, 0.0, -1
    th.start()
    try:
        while cmd_slot.get() is None:
            time.sleep(1e-4)
        start = time.perf_counter()
        for step in range(steps + 1):
            ep.state.t = step * dt
            ep.apply_due()
            res = cmd_slot.get()
            ep.qdot = res.qdot
            tgt, alpha, beta, k = res.targets.target, res.targets.alpha, res.targets.beta, res.target_index
            if _step_checks(ep, tgt, alpha, beta, k, dt):
                break
            if step == steps:
                ep.event(TIMEOUT, ep.state.t, error=float(ep.trace.rows[-1][ep.columns.index("error")]))
                break
            ep.integrate(ep.qdot, dt)
            snap_slot.put(ep.snapshot())
            delay = start + (step + 1) * dt - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
    finally:
        stop.set()
        th.join(timeout=5.0)
    ep.trace.meta["overruns"] = overruns[0]
    if overruns[0]:
        ep.event("overrun", ep.state.t, count=overruns[0])


# ---------------------------------------------------------------------------
# Summaries


def evaluate_trace(trace: Trace, threshold: float = 0.01) -> dict:
    """Deterministic aggregation of a terminated trace."""
    arr = trace.array()
    term = trace.terminal()
    col = trace.columns.index
    walls = np.array([t["wall"] for t in trace.ticks]) if trace.ticks else np.zeros(0)
    # infeasible and aborted ticks command zero / the previous velocity and carry no residual
    residuals = [t["residual"] for t in trace.ticks
                 if t["status"] != "primal_infeasible" and np.isfinite(t["residual"])]
    if len(arr):
        min_g = float(arr[:, col("min_gamma")].min())
        min_t = float(arr[:, col("min_target")].min())
        min_o = float(arr[:, col("min_obstacle")].min())
        err = float(arr[-1, col("error")])
        center = float(arr[-1, col("center_error")])
    else:
        min_g = min_t = min_o = float("inf")
        err = center = float("nan")
    collision = min(min_g, min_t, min_o) < 0 or any(e["type"] == COLLISION for e in trace.events)
    success = term is not None and term["type"] == SUCCESS and not collision
    return {
        "scene": trace.meta.get("scene"),
        "planner": trace.meta.get("planner"),
        "seed": trace.meta.get("seed"),
        "success": bool(success),
        "collision": bool(collision),
        "terminal": term["type"] if term else None,
        "time": float(arr[-1, 0]) if len(arr) else 0.0,
        "terminal_error": err,
        "terminal_center_error": center,
        "min_gamma": min_g,
        "min_target_distance": min_t,
        "min_obstacle_distance": min_o,
        "ticks": len(trace.ticks),
        "tick_mean": float(walls.mean()) if walls.size else 0.0,
        "tick_p95": float(np.percentile(walls, 95)) if walls.size else 0.0,
        "tick_max": float(walls.max()) if walls.size else 0.0,
        "overruns": int(trace.meta.get("overruns", 0)),
        "max_residual": float(max(residuals)) if residuals else 0.0,
        "infeasible_ticks": sum(1 for t in trace.ticks if t["status"] == "primal_infeasible"),
        "aborted_ticks": sum(1 for t in trace.ticks if t["status"] == "aborted"),
        "stalls": sum(1 for e in trace.events if e["type"] == STALL),
        "reached": next((e["t"] for e in trace.events if e["type"] in (SUCCESS, REACHED)), None),
    }


def run_scenario(scenario: Scenario, planner: str = "ours") -> Trace:
    return run_episode(scenario.scene, scenario.robot, scenario.controller, scenario.sim, planner)


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=1, default=_json_default)


__all__ = [
    "SimParams", "DisturbanceEvent", "Scene", "Scenario", "Snapshot", "SimState", "Trace", "apply_disturbance",
    "apply_overrides", "evaluate_trace", "load_scenario", "run_episode", "run_scenario", "scenario_from_dict",
    "summary_to_json", "trace_columns",
]
