"""Phase-segmented trajectory generation for the chopstick pair.

Chopstick paths are cubic Bezier curves in position with slerped orientations;
the two interior control points are optimized to minimize arc length plus a
clamped log-barrier on clearance between the stick capsules and the
environment. Arm joint angles come from the analytic IK with frame-to-frame
swivel chaining, and the object trajectory follows rigidly from the tips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .arm_ik import ArmIKSolution, Unreachable, arm_ik, solve_reachable
from .chopsticks import ChopstickConfig, ChopstickPairSpec, stick_capsules
from .geometry import (
    Capsule,
    RigidTransform,
    UnitQuaternion,
    clog,
    clog_derivative,
    closest_point_on_segment,
    closest_points_between_segments,
    slerp,
)
from .grasp import RigidObject
from .grip_ik import GripPose
from .hand import HandModel

DT = 0.01  # s, trajectory sample period
REFERENCE_SPEED = 0.25  # m/s, nominal chopstick speed setting phase durations
CLEARANCE_THRESHOLD = 0.001  # m, clog threshold for the collision barrier
CLEARANCE_FLOOR = 1e-6  # m, linear-continuation floor inside the barrier
CLOSE_RAMP = 0.2  # s, closing ramp at the end of the approach phase
RELEASE_RAMP = 0.3  # s, opening ramp of the release phase
GRAVITY = 9.81  # m/s^2
DEFAULT_FLIGHT_TIME = 0.3  # s
DEFAULT_RELEASE_HEIGHT = 0.3  # m above the table
DEFAULT_SPEED_CAP = 5.0  # m/s
PHASES = ("approach", "relocate", "release", "retreat")
RETREAT_HEIGHT = 0.08  # m the pair lifts after releasing, clearing the object


class PlanningFailure(RuntimeError):
    """No collision-free trajectory found; carries the best penetration seen."""

    def __init__(self, message: str, worst_penetration: float):
        self.worst_penetration = float(worst_penetration)
        super().__init__(f"{message} (worst penetration {worst_penetration:.5f} m)")


class ThrowInfeasible(RuntimeError):
    """The required release speed exceeds the configured cap."""


@dataclass(frozen=True)
class Cuboid:
    """Axis-aligned workspace box."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        size = np.asarray(self.size, dtype=float).reshape(3)
        if np.any(size <= 0):
            raise ValueError("cuboid size must be positive")
        object.__setattr__(self, "size", size)

    def contains(self, point, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(point) - self.center) <= self.size / 2 + tol))

    def boundary_toward(self, target_xy) -> np.ndarray:
        """Boundary point (x, y at the wall facing target, z at the center)."""
        d = np.asarray(target_xy, dtype=float)[:2] - self.center[:2]
        n = np.linalg.norm(d)
        if n < 1e-12:
            d = np.array([1.0, 0.0])
        else:
            d = d / n
        half = self.size[:2] / 2.0
        with np.errstate(divide="ignore"):
            s = np.min(np.where(np.abs(d) > 1e-12, half / np.abs(d), np.inf))
        return np.array([*(self.center[:2] + s * d), self.center[2]])


DEFAULT_WORKSPACE = Cuboid(center=[0.05, 0.0, 0.125], size=[0.5, 0.5, 0.25])


@dataclass(frozen=True)
class Environment:
    """Collision world for the barrier: a table plane plus rigid primitives."""

    table_height: float = 0.0
    objects: tuple[RigidObject, ...] = ()

    def without(self, obj: RigidObject) -> "Environment":
        return Environment(
            self.table_height, tuple(o for o in self.objects if o is not obj)
        )


def bezier_position(t: float, p0, q1, q2, p3) -> np.ndarray:
    """Cubic Bezier point at parameter t in [0, 1]."""
    p0, q1, q2, p3 = (np.asarray(v, dtype=float) for v in (p0, q1, q2, p3))
    s = 1.0 - t
    return s**3 * p0 + 3 * s * s * t * q1 + 3 * s * t * t * q2 + t**3 * p3


def bezier_velocity(t: float, p0, q1, q2, p3) -> np.ndarray:
    """Derivative of the cubic Bezier with respect to its parameter."""
    p0, q1, q2, p3 = (np.asarray(v, dtype=float) for v in (p0, q1, q2, p3))
    s = 1.0 - t
    return 3 * s * s * (q1 - p0) + 6 * s * t * (q2 - q1) + 3 * t * t * (p3 - q2)


@dataclass(frozen=True)
class PhasePlan:
    """One phase of a task: Bezier position controls plus endpoint configs."""

    phase: str
    start: ChopstickConfig
    end: ChopstickConfig
    q1: np.ndarray
    q2: np.ndarray
    duration: float
    reference_speed: float = REFERENCE_SPEED

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")
        object.__setattr__(self, "q1", np.asarray(self.q1, dtype=float).reshape(3))
        object.__setattr__(self, "q2", np.asarray(self.q2, dtype=float).reshape(3))
        if self.duration < 0:
            raise ValueError("phase duration must be nonnegative")

    @property
    def displacement(self) -> float:
        return float(np.linalg.norm(self.end.position - self.start.position))

    def config_at(self, u: float, opening: float | None = None) -> ChopstickConfig:
        """Pair configuration at normalized phase time u in [0, 1]."""
        pos = bezier_position(u, self.start.position, self.q1, self.q2, self.end.position)
        orient = slerp(self.start.orientation, self.end.orientation, u)
        if opening is None:
            opening = (1.0 - u) * self.start.opening + u * self.end.opening
        return ChopstickConfig(pos, orient, opening)

    def sample_count(self) -> int:
        return max(2, int(round(self.duration / DT)) + 1)

    def arc_length(self, samples: int | None = None) -> float:
        n = samples if samples is not None else max(self.sample_count(), 64)
        pts = [
            bezier_position(u, self.start.position, self.q1, self.q2, self.end.position)
            for u in np.linspace(0.0, 1.0, n)
        ]
        return float(sum(np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])))


def phase_plan(
    phase: str,
    start: ChopstickConfig,
    end: ChopstickConfig,
    reference_speed: float = REFERENCE_SPEED,
    min_duration: float = 0.0,
) -> PhasePlan:
    """Straight-line initial plan; duration = displacement / reference speed."""
    delta = end.position - start.position
    duration = max(float(np.linalg.norm(delta)) / reference_speed, min_duration)
    return PhasePlan(
        phase=phase,
        start=start,
        end=end,
        q1=start.position + delta / 3.0,
        q2=start.position + 2.0 * delta / 3.0,
        duration=duration,
        reference_speed=reference_speed,
    )


def _barrier(z: float) -> tuple[float, float]:
    """Clearance barrier value/slope, linearly continued below the floor."""
    if z >= CLEARANCE_THRESHOLD:
        return 0.0, 0.0
    if z >= CLEARANCE_FLOOR:
        return clog(z, CLEARANCE_THRESHOLD), clog_derivative(z, CLEARANCE_THRESHOLD)
    slope = clog_derivative(CLEARANCE_FLOOR, CLEARANCE_THRESHOLD)
    return clog(CLEARANCE_FLOOR, CLEARANCE_THRESHOLD) + slope * (z - CLEARANCE_FLOOR), slope


def obstacle_clearance(cap: Capsule, obstacle, table_height: float | None = None):
    """(signed clearance, gradient of clearance w.r.t. capsule translation).

    `obstacle` is a RigidObject, or None with `table_height` set for the table
    plane. Negative clearance is penetration depth.
    """
    a0, a1 = cap.endpoints()
    if obstacle is None:
        z = min(a0[2], a1[2]) - cap.radius - table_height
        return z, np.array([0.0, 0.0, 1.0])
    if obstacle.shape == "sphere":
        c = closest_point_on_segment(obstacle.com, a0, a1)
        diff = c - obstacle.com
        d = float(np.linalg.norm(diff))
        grad = diff / d if d > 1e-12 else np.array([0.0, 0.0, 1.0])
        return d - cap.radius - obstacle.radius, grad
    if obstacle.shape == "capsule":
        axis = obstacle.pose.orientation.rotate([0.0, 0.0, 1.0])
        h = obstacle.length / 2.0
        b0 = obstacle.com - h * axis
        b1 = obstacle.com + h * axis
        ca, cb = closest_points_between_segments(a0, a1, b0, b1)
        diff = ca - cb
        d = float(np.linalg.norm(diff))
        grad = diff / d if d > 1e-12 else np.array([0.0, 0.0, 1.0])
        return d - cap.radius - obstacle.radius, grad
    # Box: minimize the box SDF over the capsule axis, gradient by envelope.
    # Work in box-local coordinates so each SDF sample is a few vector ops.
    half = obstacle.sides / 2.0
    rot = obstacle.pose.orientation.to_matrix()
    b0 = rot.T @ (a0 - obstacle.pose.position)
    seg = rot.T @ (a1 - a0)

    def f(t):
        q = np.abs(b0 + t * seg) - half
        outside = np.linalg.norm(np.maximum(q, 0.0))
        return outside + min(float(np.max(q)), 0.0)

    ts = np.linspace(0.0, 1.0, 33)
    qs = np.abs(b0[None, :] + ts[:, None] * seg[None, :]) - half
    vals = np.linalg.norm(np.maximum(qs, 0.0), axis=1) + np.minimum(
        qs.max(axis=1), 0.0
    )
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    for _ in range(50):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    t_star = 0.5 * (lo + hi)
    local = b0 + t_star * seg
    q = np.abs(local) - half
    if np.any(q > 0):
        pos = np.maximum(q, 0.0)
        g_local = np.sign(local) * pos / np.linalg.norm(pos)
    else:
        g_local = np.zeros(3)
        kk = int(np.argmax(q))
        g_local[kk] = math.copysign(1.0, local[kk]) if local[kk] != 0 else 1.0
    return f(t_star) - cap.radius, obstacle.pose.orientation.rotate(g_local)


def min_clearance(config: ChopstickConfig, env: Environment, spec: ChopstickPairSpec):
    """(min clearance over both sticks and all obstacles, gradient w.r.t. the
    pair position)."""
    best = math.inf
    best_grad = np.array([0.0, 0.0, 1.0])
    for cap in stick_capsules(config, spec):
        entries = [(None, env.table_height)] + [(o, None) for o in env.objects]
        for obstacle, table in entries:
            z, grad = obstacle_clearance(cap, obstacle, table)
            if z < best:
                best, best_grad = z, grad
    return best, best_grad


def _clearance_batch(a0, a1, radius, obstacle, table_height=None):
    """Vectorized obstacle_clearance over N capsule placements.

    `a0`/`a1` are (N, 3) endpoint arrays of the moving capsule; returns the
    (N,) signed clearances and (N, 3) gradients w.r.t. capsule translation.
    """
    n = a0.shape[0]
    up = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    if obstacle is None:
        z = np.minimum(a0[:, 2], a1[:, 2]) - radius - table_height
        return z, up

    def normalized(diff):
        dist = np.linalg.norm(diff, axis=1)
        safe = np.maximum(dist, 1e-12)
        return dist, np.where(dist[:, None] > 1e-12, diff / safe[:, None], up)

    if obstacle.shape == "sphere":
        d = a1 - a0
        aa = np.einsum("ij,ij->i", d, d)
        t = np.clip(
            np.einsum("ij,ij->i", obstacle.com[None, :] - a0, d)
            / np.maximum(aa, 1e-18),
            0.0,
            1.0,
        )
        dist, grad = normalized(a0 + t[:, None] * d - obstacle.com)
        return dist - radius - obstacle.radius, grad
    if obstacle.shape == "capsule":
        axis = obstacle.pose.orientation.rotate([0.0, 0.0, 1.0])
        h = obstacle.length / 2.0
        b0 = obstacle.com - h * axis
        d1 = a1 - a0
        d2 = 2.0 * h * axis
        r = a0 - b0
        aa = np.einsum("ij,ij->i", d1, d1)
        e = float(d2 @ d2)
        f = r @ d2
        c = np.einsum("ij,ij->i", d1, r)
        b = d1 @ d2
        denom = aa * e - b * b
        s = np.where(
            denom > 1e-18,
            np.clip((b * f - c * e) / np.where(denom > 1e-18, denom, 1.0), 0.0, 1.0),
            0.0,
        )
        t = np.clip((b * s + f) / e, 0.0, 1.0)
        s = np.clip((b * t - c) / np.maximum(aa, 1e-18), 0.0, 1.0)
        dist, grad = normalized(a0 + s[:, None] * d1 - (b0 + t[:, None] * d2))
        return dist - radius - obstacle.radius, grad
    # Box: per-sample 1D SDF minimization along the axis, all in local coords.
    half = obstacle.sides / 2.0
    rot = obstacle.pose.orientation.to_matrix()
    b0 = (a0 - obstacle.pose.position) @ rot
    seg = (a1 - a0) @ rot

    def sdf(t):
        q = np.abs(b0 + t[:, None] * seg) - half
        return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(
            q.max(axis=1), 0.0
        )

    ts = np.linspace(0.0, 1.0, 33)
    qs = np.abs(b0[:, None, :] + ts[None, :, None] * seg[:, None, :]) - half
    vals = np.linalg.norm(np.maximum(qs, 0.0), axis=2) + np.minimum(
        qs.max(axis=2), 0.0
    )
    k = np.argmin(vals, axis=1)
    lo = ts[np.maximum(k - 1, 0)]
    hi = ts[np.minimum(k + 1, len(ts) - 1)]
    for _ in range(50):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        left = sdf(m1) <= sdf(m2)
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
    t_star = 0.5 * (lo + hi)
    local = b0 + t_star[:, None] * seg
    q = np.abs(local) - half
    outside = np.any(q > 0.0, axis=1)
    pos = np.maximum(q, 0.0)
    pnorm = np.maximum(np.linalg.norm(pos, axis=1), 1e-18)
    g_out = np.sign(local) * pos / pnorm[:, None]
    face = np.argmax(q, axis=1)
    g_in = np.zeros_like(local)
    rows = np.arange(n)
    g_in[rows, face] = np.where(
        local[rows, face] != 0.0, np.sign(local[rows, face]), 1.0
    )
    g_local = np.where(outside[:, None], g_out, g_in)
    return sdf(t_star) - radius, g_local @ rot.T


def _stick_offsets(plan: PhasePlan, spec: ChopstickPairSpec):
    """Per-sample stick capsule endpoints relative to the pair position.

    The pair orientation and opening at each sample do not depend on the
    interior control points, so these offsets are constant during a solve.
    """
    n = plan.sample_count()
    us = np.linspace(0.0, 1.0, n)
    o0 = np.zeros((2, n, 3))
    o1 = np.zeros((2, n, 3))
    for k, u in enumerate(us):
        cfg = plan.config_at(float(u))
        for s, cap in enumerate(stick_capsules(cfg, spec)):
            e0, e1 = cap.endpoints()
            o0[s, k] = e0 - cfg.position
            o1[s, k] = e1 - cfg.position
    return us, o0, o1


def _min_clearance_batch(pts, o0, o1, env: Environment, spec: ChopstickPairSpec):
    """(per-sample min clearance, per-sample gradient) over sticks/obstacles."""
    n = pts.shape[0]
    zmin = np.full(n, np.inf)
    gmin = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    entries = [(None, env.table_height)] + [(o, None) for o in env.objects]
    for s in range(2):
        a0 = pts + o0[s]
        a1 = pts + o1[s]
        for obstacle, table in entries:
            z, g = _clearance_batch(a0, a1, spec.radius, obstacle, table)
            better = z < zmin
            zmin = np.where(better, z, zmin)
            gmin = np.where(better[:, None], g, gmin)
    return zmin, gmin


def phase_objective(params, plan: PhasePlan, env: Environment, spec: ChopstickPairSpec):
    """Arc length plus clearance barrier, with its gradient in (q1, q2).

    The path position enters every obstacle distance purely as a translation
    of the pair, so the barrier gradient is the clearance gradient times the
    Bernstein weight of each control point (envelope theorem at the witness).
    """
    return _phase_objective_impl(params, plan, env, spec, _stick_offsets(plan, spec))


def _phase_objective_impl(params, plan, env, spec, geometry):
    q1 = np.asarray(params[:3], dtype=float)
    q2 = np.asarray(params[3:], dtype=float)
    us, o0, o1 = geometry
    s = (1.0 - us)[:, None]
    u = us[:, None]
    pts = (
        s**3 * plan.start.position
        + 3 * s * s * u * q1
        + 3 * s * u * u * q2
        + u**3 * plan.end.position
    )
    w1 = 3.0 * us * (1.0 - us) ** 2  # d point / d q1
    w2 = 3.0 * us**2 * (1.0 - us)  # d point / d q2

    grad = np.zeros(6)
    seg = np.diff(pts, axis=0)
    d = np.linalg.norm(seg, axis=1)
    value = float(d.sum())
    ok = d > 1e-12
    u_hat = np.where(ok[:, None], seg / np.maximum(d, 1e-12)[:, None], 0.0)
    grad[:3] = np.einsum("k,kj->j", np.diff(w1), u_hat)
    grad[3:] = np.einsum("k,kj->j", np.diff(w2), u_hat)

    z, zgrad = _min_clearance_batch(pts, o0, o1, env, spec)
    for k in np.nonzero(z < CLEARANCE_THRESHOLD)[0]:
        bval, bslope = _barrier(float(z[k]))
        value += bval
        grad[:3] += bslope * w1[k] * zgrad[k]
        grad[3:] += bslope * w2[k] * zgrad[k]
    return value, grad


def worst_penetration(plan: PhasePlan, env: Environment, spec: ChopstickPairSpec) -> float:
    """Deepest penetration (0 if clear) over the plan's 10 ms samples."""
    us, o0, o1 = _stick_offsets(plan, spec)
    pts = np.array([plan.config_at(float(u)).position for u in us])
    z, _ = _min_clearance_batch(pts, o0, o1, env, spec)
    return max(0.0, float(-z.min()))


def optimize_phase(
    plan: PhasePlan,
    env: Environment,
    spec: ChopstickPairSpec | None = None,
    seed: int | np.random.SeedSequence = 0,
    n_starts: int = 5,
    freeze_q2: bool = False,
) -> PhasePlan:
    """Optimize the interior control points; multi-start quasi-Newton.

    Starts from the straight-line thirds plus seeded perturbations and keeps
    the best collision-free result. `freeze_q2` pins the end control point
    (used by throw planning to hold the release velocity).
    """
    if spec is None:
        spec = ChopstickPairSpec()
    if plan.duration == 0.0 or plan.displacement < 1e-12:
        z, _ = min_clearance(plan.start, env, spec)
        if z < 0.0:
            raise PlanningFailure("endpoint configuration collides", -z)
        return plan

    delta = plan.end.position - plan.start.position
    scale = max(float(np.linalg.norm(delta)), 1e-3)
    base = np.concatenate([plan.start.position + delta / 3.0, plan.start.position + 2 * delta / 3.0])

    # The straight-line plan minimizes path length; if the barrier is inactive
    # along it the plan is already optimal and the solve can be skipped.
    geometry = _stick_offsets(plan, spec)
    if not freeze_q2:
        straight = replace(plan, q1=base[:3], q2=base[3:])
        us = geometry[0]
        pts = np.array([straight.config_at(float(u)).position for u in us])
        z, _ = _min_clearance_batch(pts, geometry[1], geometry[2], env, spec)
        if float(z.min()) >= CLEARANCE_THRESHOLD:
            return straight

    rng = np.random.default_rng(seed)
    starts = [base]
    for _ in range(n_starts - 1):
        starts.append(base + rng.normal(scale=0.4 * scale, size=6))

    q2_pin = plan.q2.copy()

    def objective(params):
        if freeze_q2:
            params = np.concatenate([params, q2_pin])
        v, g = _phase_objective_impl(params, plan, env, spec, geometry)
        return (v, g[:3]) if freeze_q2 else (v, g)

    best = None
    best_val = math.inf
    worst_seen = math.inf
    for s in starts:
        x0 = s[:3] if freeze_q2 else s
        res = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10},
        )
        q1 = res.x[:3]
        q2 = q2_pin if freeze_q2 else res.x[3:]
        candidate = replace(plan, q1=q1, q2=q2)
        pen = worst_penetration(candidate, env, spec)
        worst_seen = min(worst_seen, pen)
        if pen <= 0.0 and res.fun < best_val:
            best, best_val = candidate, res.fun
    if best is None:
        raise PlanningFailure(f"{plan.phase} phase has no collision-free path", worst_seen)
    return best


@dataclass(frozen=True)
class TrajectoryFrame:
    time: float
    phase: str
    config: ChopstickConfig
    hand_root: RigidTransform
    arm_q: np.ndarray
    object_pose: RigidTransform | None

    def __post_init__(self):
        object.__setattr__(self, "arm_q", np.asarray(self.arm_q, dtype=float).reshape(7))


@dataclass(frozen=True)
class TaskTrajectory:
    """Sampled task trajectory at a fixed 10 ms period."""

    frames: tuple[TrajectoryFrame, ...]
    morphology: str
    style: tuple[int, ...]
    spec: ChopstickPairSpec = field(default_factory=ChopstickPairSpec)
    dt: float = DT

    @property
    def duration(self) -> float:
        return self.frames[-1].time if self.frames else 0.0

    def frame_at(self, t: float) -> TrajectoryFrame:
        """Frame covering time t, clamped to the trajectory's span."""
        if not self.frames:
            raise ValueError("empty trajectory")
        idx = int(round(t / self.dt))
        return self.frames[min(max(idx, 0), len(self.frames) - 1)]


class _ArmChain:
    """Frame-to-frame arm solving with swivel continuity."""

    def __init__(self, model: HandModel, hint: float = 0.0):
        self.arm = model.arm
        self.hint = hint

    def solve(self, target: RigidTransform, phase: str) -> ArmIKSolution:
        try:
            sol = arm_ik(target, self.arm, swivel=self.hint)
        except Unreachable as e:
            raise Unreachable(f"{phase} phase: {e}") from e
        if not sol.within_limits(self.arm):
            found = None
            for k in range(1, 315):
                for sign in (1.0, -1.0):
                    cand = arm_ik(target, self.arm, swivel=self.hint + sign * 0.02 * k)
                    if cand.within_limits(self.arm):
                        found = cand
                        break
                if found is not None:
                    break
            if found is None:
                raise Unreachable(f"{phase} phase: no limit-respecting arm pose")
            sol = found
        self.hint = sol.swivel
        return sol


def _emit_phase(
    plan: PhasePlan,
    opening_fn,
    grip: GripPose,
    chain: _ArmChain,
    t0: float,
    object_rel: RigidTransform | None,
    object_fixed: RigidTransform | None,
    skip_first: bool,
) -> tuple[list[TrajectoryFrame], float]:
    frames = []
    n = plan.sample_count()
    hand_in_pair = grip.hand_in_pair()
    for k in range(n):
        if k == 0 and skip_first:
            continue
        u = k / (n - 1)
        t = t0 + u * plan.duration
        cfg = plan.config_at(u, opening=opening_fn(u * plan.duration))
        hand_root = cfg.frame().compose(hand_in_pair)
        sol = chain.solve(hand_root, plan.phase)
        if object_rel is not None:
            obj_pose = cfg.frame().compose(object_rel)
        else:
            obj_pose = object_fixed
        frames.append(
            TrajectoryFrame(
                time=t,
                phase=plan.phase,
                config=cfg,
                hand_root=hand_root,
                arm_q=sol.q,
                object_pose=obj_pose,
            )
        )
    return frames, t0 + plan.duration


def default_start_config(grip: GripPose, opening: float) -> ChopstickConfig:
    """A neutral pair configuration above the workspace, used when no current
    configuration is supplied."""
    return ChopstickConfig(np.array([-0.05, 0.0, 0.15]), UnitQuaternion.identity(), opening)


def assemble_task(
    obj: RigidObject,
    grasp: ChopstickConfig,
    goal: RigidTransform,
    grip: GripPose,
    model: HandModel,
    env: Environment,
    current: ChopstickConfig | None = None,
    spec: ChopstickPairSpec | None = None,
    seed: int | np.random.SeedSequence = 0,
    swivel_hint: float = 0.0,
) -> TaskTrajectory:
    """Full approach / relocate / release trajectory moving `obj` to `goal`.

    The approach keeps the pair opened and closes onto the object over the
    final 0.2 s; the relocate phase carries the object rigidly with the tip
    frame; the release holds the pose and opens over 0.3 s. The target object
    is excluded from the collision environment (the sticks must touch it).
    """
    if spec is None:
        spec = ChopstickPairSpec()
    env_planning = env.without(obj)
    seeds = np.random.SeedSequence(seed).spawn(3) if isinstance(seed, int) else seed.spawn(3)

    phi_open = min(spec.max_opening, grasp.opening + 0.1)
    if current is None:
        current = default_start_config(grip, phi_open)

    approach = phase_plan(
        "approach",
        ChopstickConfig(current.position, current.orientation, phi_open),
        ChopstickConfig(grasp.position, grasp.orientation, grasp.opening),
        min_duration=CLOSE_RAMP,
    )
    approach = optimize_phase(approach, env_planning, spec, seed=seeds[0])

    rel_rot = goal.orientation * obj.pose.orientation.conjugate()
    end_orientation = rel_rot * grasp.orientation
    end_position = goal.position + rel_rot.rotate(grasp.position - obj.com)
    relocate = phase_plan(
        "relocate",
        grasp,
        ChopstickConfig(end_position, end_orientation, grasp.opening),
    )
    relocate = optimize_phase(relocate, env_planning, spec, seed=seeds[1])

    release_cfg = relocate.end
    release = PhasePlan(
        phase="release",
        start=release_cfg,
        end=ChopstickConfig(release_cfg.position, release_cfg.orientation, 0.0),
        q1=release_cfg.position,
        q2=release_cfg.position,
        duration=RELEASE_RAMP,
    )

    chain = _ArmChain(model, hint=swivel_hint)
    frames: list[TrajectoryFrame] = []
    t = 0.0

    def approach_opening(tau):
        d = approach.duration
        if d <= CLOSE_RAMP or tau >= d:
            # Entire (short) approach is the closing ramp.
            u = tau / d if d > 0 else 1.0
            return phi_open + (grasp.opening - phi_open) * u
        if tau < d - CLOSE_RAMP:
            return phi_open
        u = (tau - (d - CLOSE_RAMP)) / CLOSE_RAMP
        return phi_open + (grasp.opening - phi_open) * u

    fs, t = _emit_phase(approach, approach_opening, grip, chain, t, None, None, False)
    frames += fs

    if relocate.displacement > 1e-12:
        object_rel = grasp.frame().inverse().compose(obj.pose)
        fs, t = _emit_phase(
            relocate,
            lambda tau: grasp.opening,
            grip,
            chain,
            t,
            object_rel,
            None,
            True,
        )
        frames += fs

    def release_opening(tau):
        u = min(tau / RELEASE_RAMP, 1.0)
        return (1.0 - u) * grasp.opening

    fs, t = _emit_phase(release, release_opening, grip, chain, t, None, goal, True)
    frames += fs

    # Lift away from the released object (still excluded from collisions, the
    # sticks start in contact with it) so the next task begins from a clear
    # configuration.
    retreat = phase_plan(
        "retreat",
        release.end,
        ChopstickConfig(
            release_cfg.position + np.array([0.0, 0.0, RETREAT_HEIGHT]),
            release_cfg.orientation,
            0.0,
        ),
    )
    retreat = optimize_phase(retreat, env_planning, spec, seed=seeds[2])
    fs, t = _emit_phase(retreat, lambda tau: 0.0, grip, chain, t, None, goal, True)
    frames += fs

    return TaskTrajectory(
        frames=tuple(frames), morphology=model.name, style=grip.style, spec=spec
    )


@dataclass(frozen=True)
class ThrowPlan:
    release_config: ChopstickConfig
    velocity: np.ndarray
    plan: PhasePlan

    def __post_init__(self):
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3))


def release_velocity(p_release, p_target, flight_time: float = DEFAULT_FLIGHT_TIME) -> np.ndarray:
    """Projectile release velocity hitting the target after `flight_time`."""
    p_r = np.asarray(p_release, dtype=float)
    p_t = np.asarray(p_target, dtype=float)
    if flight_time <= 0:
        raise ValueError("flight time must be positive")
    v_xy = (p_t[:2] - p_r[:2]) / flight_time
    v_z = (p_t[2] - p_r[2] + 0.5 * GRAVITY * flight_time**2) / flight_time
    return np.array([v_xy[0], v_xy[1], v_z])


def plan_throw(
    region: Cuboid,
    target,
    start: ChopstickConfig,
    spec: ChopstickPairSpec | None = None,
    env: Environment | None = None,
    flight_time: float = DEFAULT_FLIGHT_TIME,
    release_height: float = DEFAULT_RELEASE_HEIGHT,
    table_height: float = 0.0,
    speed_cap: float = DEFAULT_SPEED_CAP,
    seed: int | np.random.SeedSequence = 0,
) -> ThrowPlan:
    """Release state and relocate-phase plan throwing an object to `target`.

    The release point sits at the workspace boundary toward the target at a
    fixed height above the table; the release velocity is the closed-form
    projectile solution; the relocate Bezier's end control point is pinned so
    the end tangent matches the required velocity.
    """
    if spec is None:
        spec = ChopstickPairSpec()
    target = np.asarray(target, dtype=float).reshape(3)
    p_r = region.boundary_toward(target)
    p_r[2] = table_height + release_height
    v = release_velocity(p_r, target, flight_time)
    speed = float(np.linalg.norm(v))
    if speed > speed_cap:
        raise ThrowInfeasible(
            f"required release speed {speed:.3f} m/s exceeds the cap {speed_cap} m/s"
        )

    release_cfg = ChopstickConfig(p_r, start.orientation, start.opening)
    base = phase_plan("relocate", start, release_cfg)
    # End tangent: dm/dt at u=1 is 3 (P3 - q2) / duration; pin q2 to match v.
    q2 = p_r - v * base.duration / 3.0
    plan = replace(base, q2=q2)
    if env is not None:
        plan = optimize_phase(plan, env, spec, seed=seed, freeze_q2=True)
    return ThrowPlan(release_config=release_cfg, velocity=v, plan=plan)


def assemble_throw(
    obj: RigidObject,
    grasp: ChopstickConfig,
    region: Cuboid,
    target,
    grip: GripPose,
    model: HandModel,
    env: Environment,
    current: ChopstickConfig | None = None,
    spec: ChopstickPairSpec | None = None,
    seed: int | np.random.SeedSequence = 0,
    swivel_hint: float = 0.0,
    flight_time: float = DEFAULT_FLIGHT_TIME,
    release_height: float = DEFAULT_RELEASE_HEIGHT,
    speed_cap: float = DEFAULT_SPEED_CAP,
) -> tuple[TaskTrajectory, ThrowPlan]:
    """Approach, accelerate to the release state, and snap open to throw.

    The relocate phase ends at the planned release point with the Bezier end
    tangent matching the required ballistic velocity; the release phase holds
    the pose and opens quickly at the release instant.
    """
    if spec is None:
        spec = ChopstickPairSpec()
    env_planning = env.without(obj)
    seeds = np.random.SeedSequence(seed).spawn(2) if isinstance(seed, int) else seed.spawn(2)

    phi_open = min(spec.max_opening, grasp.opening + 0.1)
    if current is None:
        current = default_start_config(grip, phi_open)
    approach = phase_plan(
        "approach",
        ChopstickConfig(current.position, current.orientation, phi_open),
        ChopstickConfig(grasp.position, grasp.orientation, grasp.opening),
        min_duration=CLOSE_RAMP,
    )
    approach = optimize_phase(approach, env_planning, spec, seed=seeds[0])

    throw = plan_throw(
        region,
        target,
        grasp,
        spec=spec,
        env=env_planning,
        flight_time=flight_time,
        release_height=release_height,
        table_height=env.table_height,
        speed_cap=speed_cap,
        seed=seeds[1],
    )
    relocate = throw.plan

    release_cfg = relocate.end
    quick_ramp = 0.1
    release = PhasePlan(
        phase="release",
        start=release_cfg,
        end=ChopstickConfig(release_cfg.position, release_cfg.orientation, 0.0),
        q1=release_cfg.position,
        q2=release_cfg.position,
        duration=quick_ramp,
    )

    chain = _ArmChain(model, hint=swivel_hint)
    frames: list[TrajectoryFrame] = []
    t = 0.0

    def approach_opening(tau):
        d = approach.duration
        if d <= CLOSE_RAMP or tau >= d:
            u = tau / d if d > 0 else 1.0
            return phi_open + (grasp.opening - phi_open) * u
        if tau < d - CLOSE_RAMP:
            return phi_open
        u = (tau - (d - CLOSE_RAMP)) / CLOSE_RAMP
        return phi_open + (grasp.opening - phi_open) * u

    fs, t = _emit_phase(approach, approach_opening, grip, chain, t, None, None, False)
    frames += fs

    object_rel = grasp.frame().inverse().compose(obj.pose)
    fs, t = _emit_phase(
        relocate, lambda tau: grasp.opening, grip, chain, t, object_rel, None, True
    )
    frames += fs

    released_pose = frames[-1].object_pose

    def release_opening(tau):
        u = min(tau / quick_ramp, 1.0)
        return (1.0 - u) * grasp.opening

    fs, t = _emit_phase(release, release_opening, grip, chain, t, None, released_pose, True)
    frames += fs

    traj = TaskTrajectory(
        frames=tuple(frames), morphology=model.name, style=grip.style, spec=spec
    )
    return traj, throw


def projectile_position(p_release, v_release, t: float) -> np.ndarray:
    """Ballistic position t seconds after release (drag-free)."""
    p = np.asarray(p_release, dtype=float)
    v = np.asarray(v_release, dtype=float)
    return p + v * t - np.array([0.0, 0.0, 0.5 * GRAVITY * t * t])
