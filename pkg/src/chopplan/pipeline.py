"""Scene/task files, validation, and the end-to-end relocation pipeline.

A scene file lists rigid primitives on a table; a task file orders them to
goals (move or throw). `run_pipeline` plans every object in sequence —
grip resolution, grasp ranking with continuity chaining, trajectory assembly —
and emits one trajectory file per object plus a deterministic report. All
randomness derives from a single seed, so reruns are byte-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .arm_ik import Unreachable
from .chopsticks import ChopstickConfig, ChopstickPairSpec, stick_states
from .geometry import Capsule, RigidTransform, UnitQuaternion
from .grasp import (
    NoReachableGrasp,
    ObjectTooWide,
    RigidObject,
    arm_hint_for,
    rank_grasps,
    reachability,
)
from .grip_ik import GripPose, InfeasibleContact, default_contact_fractions, solve_grip_ik
from .hand import HandModel
from .reward import BodyState, SimFrame, score_trajectory
from .styles import parse_style
from .trajectory import (
    Cuboid,
    Environment,
    PlanningFailure,
    TaskTrajectory,
    ThrowInfeasible,
    ThrowPlan,
    RETREAT_HEIGHT,
    assemble_task,
    assemble_throw,
    min_clearance,
)
from .geometry import slerp
from . import fileio

SCENE_FORMAT = "scene/1"
TASK_FORMAT = "task/1"

# Release region for throws: kept inside the arm's reliable reach so the
# release state is kinematically attainable.
THROW_REGION = Cuboid(center=[0.0, 0.0, 0.1], size=[0.24, 0.3, 0.2])
THROW_RELEASE_HEIGHT = 0.25  # m above the table


class SceneError(ValueError):
    """Malformed scene or task file."""


@dataclass(frozen=True)
class SceneSpec:
    """Rigid primitives on a table, with the cuboid the planner works inside."""

    table_height: float = 0.0
    workspace: Cuboid = field(
        default_factory=lambda: Cuboid(center=[0.05, 0.0, 0.125], size=[0.5, 0.5, 0.25])
    )
    objects: tuple[tuple[str, RigidObject], ...] = ()

    def object_named(self, name: str) -> RigidObject:
        for oid, obj in self.objects:
            if oid == name:
                return obj
        raise KeyError(f"no object named {name!r} in the scene")

    def environment(self) -> Environment:
        return Environment(self.table_height, tuple(o for _, o in self.objects))


@dataclass(frozen=True)
class TaskItem:
    """One relocation: move `object_id` to `goal`, or throw it at a point."""

    object_id: str
    mode: str  # "move" | "throw"
    goal: RigidTransform | None = None  # move mode
    target: np.ndarray | None = None  # throw mode landing point

    def __post_init__(self):
        if self.mode not in ("move", "throw"):
            raise ValueError(f"unknown task mode {self.mode!r}")
        if self.mode == "move" and self.goal is None:
            raise ValueError("move task needs a goal pose")
        if self.mode == "throw":
            if self.target is None:
                raise ValueError("throw task needs a target point")
            object.__setattr__(
                self, "target", np.asarray(self.target, dtype=float).reshape(3)
            )


@dataclass(frozen=True)
class TaskSpec:
    """Ordered relocation list plus the chopstick placement noise level."""

    items: tuple[TaskItem, ...] = ()
    noise_sigma: float = 0.0  # m, isotropic noise on planned pair positions

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")


def _parse_vec(value, n, where) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=float).reshape(n)
    except (TypeError, ValueError) as e:
        raise SceneError(f"{where}: expected {n} numbers, got {value!r}") from e
    return v


def _parse_pose(doc, where) -> RigidTransform:
    pos = _parse_vec(doc.get("position", [0.0, 0.0, 0.0]), 3, where)
    quat = doc.get("orientation", [1.0, 0.0, 0.0, 0.0])
    q = _parse_vec(quat, 4, where)
    n = float(np.linalg.norm(q))
    if n < 1e-9:
        raise SceneError(f"{where}: zero-norm orientation quaternion")
    return RigidTransform(pos, UnitQuaternion(*q))


def parse_scene(doc: dict) -> SceneSpec:
    if not isinstance(doc, dict) or doc.get("format") != SCENE_FORMAT:
        raise SceneError(f"scene file must declare format: {SCENE_FORMAT}")
    ws = doc.get("workspace", {})
    workspace = Cuboid(
        center=_parse_vec(ws.get("center", [0.05, 0.0, 0.125]), 3, "workspace.center"),
        size=_parse_vec(ws.get("size", [0.5, 0.5, 0.25]), 3, "workspace.size"),
    )
    objects = []
    seen = set()
    for i, entry in enumerate(doc.get("objects", [])):
        where = f"objects[{i}]"
        if not isinstance(entry, dict) or "id" not in entry or "shape" not in entry:
            raise SceneError(f"{where}: each object needs 'id' and 'shape'")
        oid = str(entry["id"])
        if oid in seen:
            raise SceneError(f"{where}: duplicate object id {oid!r}")
        seen.add(oid)
        try:
            obj = RigidObject(
                shape=entry["shape"],
                pose=_parse_pose(entry, where),
                radius=float(entry.get("radius", 0.0)),
                length=float(entry.get("length", 0.0)),
                sides=entry.get("sides"),
            )
        except (TypeError, ValueError) as e:
            raise SceneError(f"{where} ({oid!r}): {e}") from e
        objects.append((oid, obj))
    return SceneSpec(
        table_height=float(doc.get("table_height", 0.0)),
        workspace=workspace,
        objects=tuple(objects),
    )


def parse_task(doc: dict) -> TaskSpec:
    if not isinstance(doc, dict) or doc.get("format") != TASK_FORMAT:
        raise SceneError(f"task file must declare format: {TASK_FORMAT}")
    items = []
    for i, entry in enumerate(doc.get("items", [])):
        where = f"items[{i}]"
        if not isinstance(entry, dict) or "object" not in entry:
            raise SceneError(f"{where}: each item needs an 'object' id")
        mode = str(entry.get("mode", "move"))
        try:
            if mode == "throw":
                item = TaskItem(
                    object_id=str(entry["object"]),
                    mode=mode,
                    target=_parse_vec(entry.get("target"), 3, f"{where}.target"),
                )
            else:
                goal_doc = entry.get("goal")
                if not isinstance(goal_doc, dict):
                    raise SceneError(f"{where}.goal: expected a pose mapping")
                item = TaskItem(
                    object_id=str(entry["object"]),
                    mode=mode,
                    goal=_parse_pose(goal_doc, f"{where}.goal"),
                )
        except ValueError as e:
            raise SceneError(f"{where}: {e}") from e
        items.append(item)
    return TaskSpec(
        items=tuple(items), noise_sigma=float(doc.get("noise_sigma", 0.0))
    )


def _load_yaml(path):
    with open(path) as fh:
        try:
            return yaml.safe_load(fh)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            loc = f"{path}:{mark.line + 1}" if mark else str(path)
            raise SceneError(f"{loc}: {e}") from e


def load_scene(path) -> SceneSpec:
    return parse_scene(_load_yaml(path))


def load_task(path) -> TaskSpec:
    return parse_task(_load_yaml(path))


def _object_capsule(obj: RigidObject) -> Capsule:
    """Sphere or capsule primitive as a collision capsule."""
    half = obj.length / 2.0 if obj.shape == "capsule" else 0.0
    return Capsule(half, obj.radius, obj.pose)


def _box_corners(obj: RigidObject) -> np.ndarray:
    half = obj.sides / 2.0
    signs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
    )
    return np.array([obj.pose.apply(half * s) for s in signs])


def _boxes_overlap(a: RigidObject, b: RigidObject) -> bool:
    """Oriented-box overlap by the separating-axis test (15 axes)."""
    ra = np.column_stack([a.pose.orientation.rotate(e) for e in np.eye(3)])
    rb = np.column_stack([b.pose.orientation.rotate(e) for e in np.eye(3)])
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            cr = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(cr)
            if n > 1e-9:
                axes.append(cr / n)
    ca, cb = _box_corners(a), _box_corners(b)
    for axis in axes:
        pa, pb = ca @ axis, cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def objects_overlap(a: RigidObject, b: RigidObject) -> bool:
    if a.shape == "box" and b.shape == "box":
        return _boxes_overlap(a, b)
    if a.shape == "box":
        a, b = b, a
    from .trajectory import obstacle_clearance

    clearance, _ = obstacle_clearance(_object_capsule(a), b)
    return clearance < 0.0


def _lowest_point(obj: RigidObject) -> float:
    if obj.shape == "box":
        return float(_box_corners(obj)[:, 2].min())
    a0, a1 = _object_capsule(obj).endpoints()
    return float(min(a0[2], a1[2]) - obj.radius)


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def validate_scene(scene: SceneSpec) -> list[Diagnostic]:
    """Size-range warnings, floating/overlap errors, containment warnings."""
    out: list[Diagnostic] = []
    for oid, obj in scene.objects:
        for w in obj.size_warnings():
            out.append(Diagnostic("warning", f"{oid}: {w}"))
        if _lowest_point(obj) < scene.table_height - 1e-9:
            out.append(Diagnostic("error", f"{oid}: penetrates the table plane"))
        if not scene.workspace.contains(obj.com):
            out.append(Diagnostic("warning", f"{oid}: center of mass outside the workspace"))
    for i, (ida, a) in enumerate(scene.objects):
        for idb, b in scene.objects[i + 1 :]:
            if objects_overlap(a, b):
                out.append(Diagnostic("error", f"{ida} and {idb} overlap"))
    return out


def trajectory_sim_frames(traj: TaskTrajectory) -> list[SimFrame]:
    """Trajectory frames as tracking-scorer snapshots.

    Joint vector = arm joints; stick poses from the pair configuration;
    contact gaps unavailable from a kinematic plan, so omitted (zero cost).
    """
    frames = []
    for f in traj.frames:
        (pu, ou), (pl, ol) = stick_states(f.config, traj.spec)
        obj = None
        if f.object_pose is not None:
            obj = BodyState(f.object_pose.position, f.object_pose.orientation)
        frames.append(
            SimFrame(
                q=f.arm_q,
                qdot=np.zeros_like(f.arm_q),
                chop=(BodyState(pu, ou), BodyState(pl, ol)),
                obj=obj,
                root=f.hand_root,
            )
        )
    return frames


@dataclass(frozen=True)
class ObjectResult:
    object_id: str
    mode: str
    status: str  # "ok" | "failed"
    error: str | None = None
    grasp_quality: float = 0.0
    grasp_total: float = 0.0
    score: float = 0.0
    frames: int = 0
    duration: float = 0.0
    trajectory_file: str | None = None
    plan_seconds: float = 0.0
    throw: ThrowPlan | None = None


@dataclass(frozen=True)
class PipelineResult:
    results: tuple[ObjectResult, ...]
    report_path: str | None

    @property
    def ok(self) -> bool:
        return all(r.status == "ok" for r in self.results)


def _resolve_grip(style, model: HandModel, grip: GripPose | None) -> GripPose:
    if grip is not None:
        return grip
    return solve_grip_ik(default_contact_fractions(style, model), style, model)


def _task_waypoints(
    cfg: ChopstickConfig,
    obj,
    item: TaskItem,
    table_height: float,
    current: ChopstickConfig | None = None,
):
    """Key pair configurations the arm must reach while executing `item`
    with grasp `cfg`: approach start, grasp, goal release and retreat (move)
    or the throw release state, plus midpoints between consecutive waypoints."""
    points = [] if current is None else [current]
    points.append(cfg)
    if item.mode == "move":
        rel_rot = item.goal.orientation * obj.pose.orientation.conjugate()
        end_o = rel_rot * cfg.orientation
        end_p = item.goal.position + rel_rot.rotate(cfg.position - obj.com)
        points.append(ChopstickConfig(end_p, end_o, cfg.opening))
        points.append(
            ChopstickConfig(end_p + np.array([0.0, 0.0, RETREAT_HEIGHT]), end_o, 0.0)
        )
    else:
        p_r = THROW_REGION.boundary_toward(item.target)
        p_r[2] = table_height + THROW_RELEASE_HEIGHT
        points.append(ChopstickConfig(p_r, cfg.orientation, cfg.opening))
    out = []
    for a, b in zip(points, points[1:]):
        mid = ChopstickConfig(
            0.5 * (a.position + b.position),
            slerp(a.orientation, b.orientation, 0.5),
            0.5 * (a.opening + b.opening),
        )
        out += [a, mid]
    out.append(points[-1])
    return out


def _select_grasp(
    shortlist,
    obj,
    env: Environment,
    spec: ChopstickPairSpec,
    grip: GripPose,
    model: HandModel,
    item: TaskItem,
    current: ChopstickConfig | None = None,
):
    """Highest-ranked grasp that clears the rest of the scene (the grasped
    object itself must be touched, so it is excluded) and keeps the arm
    within reach at every waypoint of the task."""
    rest = env.without(obj)
    for cand in sorted(shortlist, key=lambda c: -c.total):
        if cand.total <= 0.0:
            break
        if min_clearance(cand.config, rest, spec)[0] < 0.0:
            continue
        waypoints = _task_waypoints(cand.config, obj, item, env.table_height, current)
        if all(reachability(w, grip, model)[0] for w in waypoints):
            return cand
    raise NoReachableGrasp(
        "every ranked grasp collides with the scene or leaves the arm's reach"
    )


_FAILURES = (
    NoReachableGrasp,
    ObjectTooWide,
    PlanningFailure,
    ThrowInfeasible,
    Unreachable,
    InfeasibleContact,
)


def run_pipeline(
    scene: SceneSpec,
    task: TaskSpec,
    model: HandModel,
    style=None,
    grip: GripPose | None = None,
    seed: int = 0,
    out_dir=".",
    spec: ChopstickPairSpec | None = None,
) -> PipelineResult:
    """Plan every task item in order; write trajectory files and a report.

    Objects already relocated stay in the collision environment at their goal
    poses; failures are recorded and planning continues with the next object.
    Positive `task.noise_sigma` perturbs each planned grasp position with
    isotropic Gaussian noise. All randomness stems from `seed`; wall-clock
    plan times appear only in the returned results, never in the files, so
    reruns are byte-identical.
    """
    import os

    if spec is None:
        spec = ChopstickPairSpec()
    if style is None and grip is None:
        style = parse_style("11120")
    elif style is None:
        style = grip.style
    grip = _resolve_grip(style, model, grip)
    digest = fileio.morphology_hash(model.source)

    os.makedirs(out_dir, exist_ok=True)
    root_ss = np.random.SeedSequence(seed)
    item_seeds = root_ss.spawn(len(task.items))

    # World state evolves as objects move: id -> current RigidObject.
    world = {oid: obj for oid, obj in scene.objects}
    current: ChopstickConfig | None = None
    swivel = 0.0
    results: list[ObjectResult] = []

    for idx, item in enumerate(task.items):
        grasp_seed, noise_seed, plan_seed = item_seeds[idx].spawn(3)
        t0 = time.perf_counter()
        try:
            obj = world.get(item.object_id)
            if obj is None:
                raise SceneError(f"task references unknown object {item.object_id!r}")
            env = Environment(scene.table_height, tuple(world.values()))
            _, shortlist = rank_grasps(
                obj, grip, model, current=current, seed=grasp_seed, n_keep=40
            )
            best = _select_grasp(shortlist, obj, env, spec, grip, model, item, current)
            grasp = best.config
            if task.noise_sigma > 0.0:
                rng = np.random.default_rng(noise_seed)
                noisy = grasp.position + rng.normal(scale=task.noise_sigma, size=3)
                grasp = ChopstickConfig(noisy, grasp.orientation, grasp.opening)

            if item.mode == "move":
                traj = assemble_task(
                    obj, grasp, item.goal, grip, model, env,
                    current=current, spec=spec, seed=plan_seed, swivel_hint=swivel,
                )
                throw = None
                world[item.object_id] = obj.with_pose(item.goal)
            else:
                traj, throw = assemble_throw(
                    obj, grasp, THROW_REGION, item.target, grip, model, env,
                    current=current, spec=spec, seed=plan_seed, swivel_hint=swivel,
                    release_height=THROW_RELEASE_HEIGHT,
                )
                del world[item.object_id]  # thrown out of the scene

            fname = f"{idx:02d}_{item.object_id}.traj"
            fileio.write_trajectory(traj, os.path.join(out_dir, fname), digest)
            sim = trajectory_sim_frames(traj)
            score = score_trajectory(sim, sim, grip.style)
            last = traj.frames[-1]
            current = last.config
            swivel = arm_hint_for(current, grip, model)
            results.append(
                ObjectResult(
                    object_id=item.object_id,
                    mode=item.mode,
                    status="ok",
                    grasp_quality=best.quality,
                    grasp_total=best.total,
                    score=score,
                    frames=len(traj.frames),
                    duration=last.time,
                    trajectory_file=fname,
                    plan_seconds=time.perf_counter() - t0,
                    throw=throw,
                )
            )
        except (_FAILURES + (SceneError,)) as e:
            results.append(
                ObjectResult(
                    object_id=item.object_id,
                    mode=item.mode,
                    status="failed",
                    error=f"{type(e).__name__}: {e}",
                    plan_seconds=time.perf_counter() - t0,
                )
            )

    report_path = os.path.join(out_dir, "report.txt")
    with open(report_path, "w") as fh:
        fh.write(format_report(results, seed, model.name))
    return PipelineResult(results=tuple(results), report_path=report_path)


def format_report(results, seed: int, morphology: str) -> str:
    """Deterministic run report (no wall-clock content)."""
    lines = [
        "pipeline report",
        f"seed {seed}",
        f"morphology {morphology}",
        f"objects {len(results)}",
        f"failed {sum(1 for r in results if r.status != 'ok')}",
    ]
    for r in results:
        if r.status == "ok":
            lines.append(
                f"{r.object_id} {r.mode} ok file={r.trajectory_file}"
                f" frames={r.frames} duration={r.duration!r}"
                f" quality={r.grasp_quality!r} total={r.grasp_total!r}"
                f" score={r.score!r}"
            )
        else:
            lines.append(f"{r.object_id} {r.mode} failed {r.error}")
    return "\n".join(lines) + "\n"


def demo_scene(n_objects: int = 8, seed: int = 0) -> tuple[SceneSpec, TaskSpec]:
    """Random grasp-and-move benchmark scene: `n_objects` primitives with
    non-overlapping start and goal poses inside the reachable workspace."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xDE30]))
    shapes = ["sphere", "capsule", "box"]
    placed: list[RigidObject] = []
    objects = []
    items = []

    def sample_xy(existing, min_gap):
        for _ in range(1000):
            p = rng.uniform([-0.10, -0.13], [0.09, 0.13])
            if all(np.linalg.norm(p - q) >= min_gap for q in existing):
                return p
        raise RuntimeError("could not place demo objects without overlap")

    starts: list[np.ndarray] = []
    goals: list[np.ndarray] = []
    for i in range(n_objects):
        shape = shapes[i % len(shapes)]
        radius = float(rng.uniform(0.006, 0.009))
        length = float(rng.uniform(0.02, 0.035))
        sides = rng.uniform(0.011, 0.018, size=3)
        if shape == "sphere":
            h = radius
            obj = RigidObject("sphere", RigidTransform.identity(), radius=radius)
        elif shape == "capsule":
            h = length / 2.0 + radius
            obj = RigidObject(
                "capsule", RigidTransform.identity(), radius=radius, length=length
            )
        else:
            h = float(sides[2]) / 2.0
            obj = RigidObject("box", RigidTransform.identity(), sides=sides)
        xy = sample_xy(starts + goals, 0.05)
        starts.append(xy)
        pose = RigidTransform(np.array([xy[0], xy[1], h]), UnitQuaternion.identity())
        obj = obj.with_pose(pose)
        placed.append(obj)
        oid = f"{shape}{i}"
        objects.append((oid, obj))
        gxy = sample_xy(starts + goals, 0.05)
        goals.append(gxy)
        goal = RigidTransform(np.array([gxy[0], gxy[1], h]), UnitQuaternion.identity())
        items.append(TaskItem(object_id=oid, mode="move", goal=goal))

    scene = SceneSpec(table_height=0.0, objects=tuple(objects))
    task = TaskSpec(items=tuple(items), noise_sigma=0.0)
    return scene, task


def scene_to_doc(scene: SceneSpec) -> dict:
    objects = []
    for oid, obj in scene.objects:
        entry = {
            "id": oid,
            "shape": obj.shape,
            "position": [float(v) for v in obj.pose.position],
            "orientation": [
                obj.pose.orientation.w,
                obj.pose.orientation.x,
                obj.pose.orientation.y,
                obj.pose.orientation.z,
            ],
        }
        if obj.shape in ("sphere", "capsule"):
            entry["radius"] = obj.radius
        if obj.shape == "capsule":
            entry["length"] = obj.length
        if obj.shape == "box":
            entry["sides"] = [float(v) for v in obj.sides]
        objects.append(entry)
    return {
        "format": SCENE_FORMAT,
        "table_height": scene.table_height,
        "workspace": {
            "center": [float(v) for v in scene.workspace.center],
            "size": [float(v) for v in scene.workspace.size],
        },
        "objects": objects,
    }


def task_to_doc(task: TaskSpec) -> dict:
    items = []
    for item in task.items:
        entry = {"object": item.object_id, "mode": item.mode}
        if item.mode == "move":
            entry["goal"] = {
                "position": [float(v) for v in item.goal.position],
                "orientation": [
                    item.goal.orientation.w,
                    item.goal.orientation.x,
                    item.goal.orientation.y,
                    item.goal.orientation.z,
                ],
            }
        else:
            entry["target"] = [float(v) for v in item.target]
        items.append(entry)
    return {"format": TASK_FORMAT, "noise_sigma": task.noise_sigma, "items": items}


def save_scene(scene: SceneSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_doc(scene), fh, sort_keys=False)


def save_task(task: TaskSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(task_to_doc(task), fh, sort_keys=False)
