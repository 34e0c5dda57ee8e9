"""Grasp selection for the chopstick pair viewed as a parallel gripper.

Pipeline: discretize the 3D orientation space on an Euler grid, complete each
orientation to a full 7-DoF configuration whose tip line passes through the
object's center of mass, score by a grasp-quality metric, refine with particle
swarm optimization, filter by arm reachability, and weight by continuity with
the current configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arm_ik import ArmIKSolution, solve_reachable
from .chopsticks import (
    ChopstickConfig,
    ChopstickPairSpec,
    tip_line_direction,
    tip_midpoint,
)
from .geometry import RigidTransform, UnitQuaternion, quat_angle
from .grip_ik import GripPose
from .hand import HandModel

# Quality weights: a 1 cm midpoint offset and a ~11.5 degree normal
# misalignment each cost a factor e^-1.
MIDPOINT_WEIGHT = 100.0  # 1/m
ALIGNMENT_WEIGHT = 5.0
CONTINUITY_WEIGHT = 5.0  # 1/rad

# Admissible size ranges per primitive (meters); violations warn, not fail.
SIZE_RANGES = {
    "sphere": {"radius": (0.005, 0.01)},
    "capsule": {"radius": (0.005, 0.01), "length": (0.02, 0.04)},
    "box": {"sides": (0.01, 0.02)},
}


class ObjectTooWide(ValueError):
    """The object's width along the grasp line exceeds the tip opening range."""


class NoReachableGrasp(RuntimeError):
    """Every scored candidate is unreachable by the arm."""


@dataclass(frozen=True)
class RigidObject:
    """A graspable primitive: sphere, capsule (axis local z) or box."""

    shape: str
    pose: RigidTransform
    radius: float = 0.0
    length: float = 0.0  # capsule cylindrical section length
    sides: np.ndarray | None = None  # box edge lengths
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.shape not in ("sphere", "capsule", "box"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.shape in ("sphere", "capsule") and self.radius <= 0:
            raise ValueError(f"{self.shape} needs a positive radius")
        if self.shape == "capsule" and self.length <= 0:
            raise ValueError("capsule needs a positive length")
        if self.shape == "box":
            sides = np.asarray(self.sides, dtype=float).reshape(3)
            if np.any(sides <= 0):
                raise ValueError("box sides must be positive")
            object.__setattr__(self, "sides", sides)
        object.__setattr__(
            self, "velocity", np.asarray(self.velocity, dtype=float).reshape(3)
        )
        object.__setattr__(
            self,
            "angular_velocity",
            np.asarray(self.angular_velocity, dtype=float).reshape(3),
        )

    @property
    def com(self) -> np.ndarray:
        return self.pose.position

    def with_pose(self, pose: RigidTransform) -> "RigidObject":
        return RigidObject(
            shape=self.shape,
            pose=pose,
            radius=self.radius,
            length=self.length,
            sides=None if self.sides is None else self.sides.copy(),
            velocity=self.velocity,
            angular_velocity=self.angular_velocity,
        )

    def size_warnings(self) -> list[str]:
        """Out-of-range size diagnostics (warnings, never errors)."""
        out = []
        rng = SIZE_RANGES[self.shape]
        if self.shape in ("sphere", "capsule"):
            lo, hi = rng["radius"]
            if not lo <= self.radius <= hi:
                out.append(
                    f"{self.shape} radius {self.radius} m outside [{lo}, {hi}] m"
                )
        if self.shape == "capsule":
            lo, hi = rng["length"]
            if not lo <= self.length <= hi:
                out.append(f"capsule length {self.length} m outside [{lo}, {hi}] m")
        if self.shape == "box":
            lo, hi = rng["sides"]
            for s in self.sides:
                if not lo <= s <= hi:
                    out.append(f"box side {s} m outside [{lo}, {hi}] m")
        return out


def surface_exit(obj: RigidObject, direction) -> tuple[float, np.ndarray]:
    """Exit of the ray from the CoM along `direction` (world, unit).

    Returns (distance to the surface, outward unit normal at the exit point).
    """
    d_world = np.asarray(direction, dtype=float)
    d = obj.pose.orientation.conjugate().rotate(d_world)  # object-local
    if obj.shape == "sphere":
        return obj.radius, d_world
    if obj.shape == "capsule":
        h = obj.length / 2.0
        c = abs(float(d[2]))
        s = math.sqrt(max(1.0 - c * c, 0.0))
        if s > 1e-12:
            t = obj.radius / s
            if t * c <= h:
                n_local = np.array([d[0], d[1], 0.0]) / s
                return t, obj.pose.orientation.rotate(n_local)
        # Exits through a spherical cap.
        t = c * h + math.sqrt(max(c * c * h * h - h * h + obj.radius**2, 0.0))
        cap_center = np.array([0.0, 0.0, math.copysign(h, d[2])])
        n_local = (t * d - cap_center) / obj.radius
        return t, obj.pose.orientation.rotate(n_local)
    # Box: first face plane the ray crosses.
    half = obj.sides / 2.0
    with np.errstate(divide="ignore"):
        t_faces = np.where(np.abs(d) > 1e-12, half / np.abs(d), np.inf)
    k = int(np.argmin(t_faces))
    n_local = np.zeros(3)
    n_local[k] = math.copysign(1.0, d[k])
    return float(t_faces[k]), obj.pose.orientation.rotate(n_local)


def grasp_width(obj: RigidObject, direction) -> float:
    """Object width along the line through the CoM in `direction`."""
    d = np.asarray(direction, dtype=float)
    t_plus, _ = surface_exit(obj, d)
    t_minus, _ = surface_exit(obj, -d)
    return t_plus + t_minus


def _euler_orientation(yaw, pitch, roll) -> UnitQuaternion:
    return (
        UnitQuaternion.from_axis_angle([0, 0, 1], yaw)
        * UnitQuaternion.from_axis_angle([0, 1, 0], pitch)
        * UnitQuaternion.from_axis_angle([1, 0, 0], roll)
    )


def _centered_full(n: int) -> np.ndarray:
    """n angles uniform over a full turn, including 0, ordered by magnitude."""
    vals = (np.arange(n) - n // 2) * (2.0 * math.pi / n)
    return np.array(sorted(vals, key=abs))


def _centered_half(n: int) -> np.ndarray:
    """n angles uniform in the open (-pi/2, pi/2), ordered by magnitude."""
    vals = (np.arange(n) - (n - 1) / 2.0) * (math.pi / n)
    return np.array(sorted(vals, key=abs))


def grid_shape(n_total: int) -> tuple[int, int, int]:
    """(yaw, pitch, roll) counts whose product covers n_total (2000 -> 20x10x10)."""
    base = max(1, round((n_total / 2.0) ** (1.0 / 3.0)))
    ny, npitch, nroll = 2 * base, base, base
    while ny * npitch * nroll < n_total:
        ny += 1
    return ny, npitch, nroll


def discretize_orientations(n_total: int) -> list[UnitQuaternion]:
    """Deterministic Euler-angle grid of n_total unique orientations.

    Yaw spans a full turn, pitch the open (-pi/2, pi/2) band (avoiding the
    gimbal seam so every grid cell is a distinct rotation), roll a full turn.
    Angles are ordered by magnitude, so the first entry is the identity.
    """
    if n_total < 1:
        raise ValueError("need at least one orientation")
    ny, npitch, nroll = grid_shape(n_total)
    out = []
    for yaw in _centered_full(ny):
        for pitch in _centered_half(npitch):
            for roll in _centered_full(nroll):
                out.append(_euler_orientation(yaw, pitch, roll))
                if len(out) == n_total:
                    return out
    return out


def complete_config(
    o_chop: UnitQuaternion,
    obj: RigidObject,
    spec: ChopstickPairSpec | None = None,
) -> ChopstickConfig:
    """Complete an orientation to a 7-DoF configuration around the object.

    The opening angle is solved so the tip separation equals half the object's
    width along the tip line, and the position places the tip-line midpoint on
    the object's center of mass. Width and tip-line direction are coupled
    through the opening, so a short fixed-point iteration is used.
    """
    if spec is None:
        spec = ChopstickPairSpec()
    phi = 0.0
    for _ in range(6):
        cfg = ChopstickConfig(np.zeros(3), o_chop, phi)
        d_hat = tip_line_direction(cfg, spec)
        width = grasp_width(obj, d_hat)
        separation = width / 2.0
        arg = separation / (2.0 * spec.pivot_to_tip)
        if arg > math.sin(spec.max_opening / 2.0):
            raise ObjectTooWide(
                f"required tip separation {separation:.4f} m exceeds the "
                f"maximum {spec.max_tip_separation():.4f} m"
            )
        new_phi = 2.0 * math.asin(arg)
        if abs(new_phi - phi) < 1e-12:
            phi = new_phi
            break
        phi = new_phi
    cfg = ChopstickConfig(np.zeros(3), o_chop, phi)
    offset = tip_midpoint(cfg, spec)  # midpoint when the pivot sits at origin
    return ChopstickConfig(obj.com - offset, o_chop, phi)


def grasp_quality(
    config: ChopstickConfig,
    obj: RigidObject,
    spec: ChopstickPairSpec | None = None,
) -> float:
    """Score in [0, 1] rewarding a tip-line midpoint near the CoM and a tip
    line aligned with the contact surface normals."""
    if spec is None:
        spec = ChopstickPairSpec()
    m = tip_midpoint(config, spec)
    d_hat = tip_line_direction(config, spec)
    _, n_plus = surface_exit(obj, d_hat)
    _, n_minus = surface_exit(obj, -d_hat)
    misalign = max(1.0 - abs(float(n_plus @ d_hat)), 0.0) + max(
        1.0 - abs(float(n_minus @ d_hat)), 0.0
    )
    midpoint_err = float(np.linalg.norm(m - obj.com))
    return math.exp(-MIDPOINT_WEIGHT * midpoint_err) * math.exp(
        -ALIGNMENT_WEIGHT * misalign
    )


def _euler_quality(angles, obj, spec) -> float:
    try:
        cfg = complete_config(_euler_orientation(*angles), obj, spec)
    except ObjectTooWide:
        return 0.0
    return grasp_quality(cfg, obj, spec)


_PSO_BOUNDS = np.array(
    [[-math.pi, math.pi], [-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6], [-math.pi, math.pi]]
)


def pso_refine(
    obj: RigidObject,
    spec: ChopstickPairSpec | None = None,
    n_starts: int = 10,
    particles: int = 20,
    iterations: int = 50,
    seed: int | np.random.SeedSequence = 0,
    grid_size: int = 2000,
) -> list[ChopstickConfig]:
    """Particle-swarm refinement of grasp quality over the orientation space.

    Runs `n_starts` independent swarms (inertia 0.72, cognitive/social 1.49),
    snaps each swarm's best orientation to its nearest grid neighbor, and
    returns the completed configurations sorted by descending quality.
    """
    if spec is None:
        spec = ChopstickPairSpec()
    rng = np.random.default_rng(seed)
    lo, hi = _PSO_BOUNDS[:, 0], _PSO_BOUNDS[:, 1]
    span = hi - lo
    grid = discretize_orientations(grid_size)
    results = []
    for _ in range(n_starts):
        pos = rng.uniform(lo, hi, size=(particles, 3))
        vel = rng.uniform(-span, span, size=(particles, 3)) * 0.1
        pbest = pos.copy()
        pbest_val = np.array([_euler_quality(p, obj, spec) for p in pos])
        g = int(np.argmax(pbest_val))
        gbest, gbest_val = pbest[g].copy(), float(pbest_val[g])
        for _ in range(iterations):
            r1 = rng.uniform(size=(particles, 3))
            r2 = rng.uniform(size=(particles, 3))
            vel = 0.72 * vel + 1.49 * r1 * (pbest - pos) + 1.49 * r2 * (gbest - pos)
            pos = np.clip(pos + vel, lo, hi)
            for i in range(particles):
                val = _euler_quality(pos[i], obj, spec)
                if val > pbest_val[i]:
                    pbest[i] = pos[i]
                    pbest_val[i] = val
                    if val > gbest_val:
                        gbest, gbest_val = pos[i].copy(), val
        best_q = _euler_orientation(*gbest)
        snapped = min(grid, key=lambda o: quat_angle(o, best_q))
        try:
            results.append(complete_config(snapped, obj, spec))
        except ObjectTooWide:
            continue
    results.sort(key=lambda c: grasp_quality(c, obj, spec), reverse=True)
    return results


def reachability(
    config: ChopstickConfig,
    grip: GripPose,
    model: HandModel,
    swivel_hint: float = 0.0,
) -> tuple[bool, ArmIKSolution | None]:
    """Whether a joint-limit-respecting arm pose realizes the configuration.

    The required hand-root transform is the configuration's pair frame
    composed with the grip's hand-in-pair transform.
    """
    target = config.frame().compose(grip.hand_in_pair())
    sol = solve_reachable(target, model.arm, swivel_hint=swivel_hint)
    return sol is not None, sol


def continuity_score(candidate: UnitQuaternion, current: UnitQuaternion) -> float:
    """exp(-5 * angle) weighting of a candidate against the current orientation."""
    return math.exp(-CONTINUITY_WEIGHT * quat_angle(candidate, current))


@dataclass(frozen=True)
class GraspCandidate:
    config: ChopstickConfig
    quality: float
    reachable: float  # 0.0 or 1.0
    continuity: float
    arm: ArmIKSolution | None = None

    @property
    def total(self) -> float:
        return self.quality * self.reachable * self.continuity


def rank_grasps(
    obj: RigidObject,
    grip: GripPose,
    model: HandModel,
    current: ChopstickConfig | None = None,
    spec: ChopstickPairSpec | None = None,
    seed: int | np.random.SeedSequence = 0,
    n_keep: int = 10,
    grid_size: int = 2000,
) -> tuple[GraspCandidate, list[GraspCandidate]]:
    """Best grasp configuration plus the full ranked shortlist.

    Scores the orientation grid plus PSO-refined candidates by quality, keeps
    the top `n_keep`, multiplies in reachability and continuity, and returns
    the argmax. Ties break deterministically by grid order.
    """
    if spec is None:
        spec = ChopstickPairSpec()
    candidates: list[ChopstickConfig] = []
    for o in discretize_orientations(grid_size):
        try:
            candidates.append(complete_config(o, obj, spec))
        except ObjectTooWide:
            continue
    if not candidates:
        raise ObjectTooWide("object too wide for every candidate orientation")
    candidates.extend(pso_refine(obj, spec, seed=seed, grid_size=grid_size))

    qualities = [grasp_quality(c, obj, spec) for c in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (-qualities[i], i))
    shortlist = [(candidates[i], qualities[i]) for i in order[:n_keep]]

    hint = 0.0 if current is None else arm_hint_for(current, grip, model)
    scored = []
    for cfg, quality in shortlist:
        ok, sol = reachability(cfg, grip, model, swivel_hint=hint)
        xi = 1.0 if current is None else continuity_score(cfg.orientation, current.orientation)
        scored.append(
            GraspCandidate(
                config=cfg,
                quality=quality,
                reachable=1.0 if ok else 0.0,
                continuity=xi,
                arm=sol,
            )
        )
    scored.sort(key=lambda c: -c.total)
    if scored[0].reachable == 0.0:
        raise NoReachableGrasp("no candidate admits a limit-respecting arm pose")
    return scored[0], scored


def arm_hint_for(config: ChopstickConfig, grip: GripPose, model: HandModel) -> float:
    """Swivel of the current configuration's arm pose, if one exists, else 0."""
    ok, sol = reachability(config, grip, model)
    return sol.swivel if ok and sol is not None else 0.0
