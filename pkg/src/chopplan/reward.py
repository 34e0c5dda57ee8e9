"""Tracking reward stack and controller state-vector assembly.

The per-frame reward is a product of exponentials of nonpositive error terms:
hand joint tracking, per-stick pose tracking, object pose tracking (omitted
when the reference carries no object), and fingertip contact maintenance. The
state assembler concatenates the current simulated state with six lookahead
reference frames, expressing all rigid-body components in the local hand-root
(palm) frame so the vector is invariant under rigid transports of the scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, UnitQuaternion, quat_angle

HAND_WEIGHT = 10.0
POSITION_WEIGHT = 40.0
ANGLE_WEIGHT = 10.0
CONTACT_WEIGHT = 10.0

LOOKAHEAD_STEPS = 6
LOOKAHEAD_DT = 0.05  # s


@dataclass(frozen=True)
class BodyState:
    """Pose and velocity of one rigid body."""

    position: np.ndarray
    orientation: UnitQuaternion
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "velocity", "angular_velocity"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float).reshape(3)
            )


@dataclass(frozen=True)
class SimFrame:
    """One snapshot of the tracked system.

    `q`/`qdot` are whatever joint vector the caller tracks (hand, or hand+arm);
    reward only requires sim and ref to agree on its length.
    `contact_distances` holds one nonnegative fingertip-to-stick gap per
    contacting finger. Contact-force entries are accepted but default to zero
    when no dynamics are available.
    """

    q: np.ndarray
    qdot: np.ndarray
    chop: tuple[BodyState, BodyState]
    obj: BodyState | None = None
    contact_distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    root: RigidTransform = field(default_factory=RigidTransform.identity)
    f_hand: np.ndarray | None = None
    f_chop: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float).reshape(-1))
        d = np.asarray(self.contact_distances, dtype=float).reshape(-1)
        if np.any(d < 0):
            raise ValueError("contact distances must be nonnegative")
        object.__setattr__(self, "contact_distances", d)


@dataclass(frozen=True)
class RewardBreakdown:
    r_hand: float
    r_chop: float
    r_obj: float
    r_contact: float

    @property
    def r(self) -> float:
        return math.exp(self.r_hand + self.r_chop + self.r_obj + self.r_contact)


def reward(sim: SimFrame, ref: SimFrame, style) -> RewardBreakdown:
    """Per-frame tracking reward.

    r_hand = -10 ||q - q_ref||; per stick -40 ||p - p_ref|| - 10 angle;
    object term likewise, omitted when either frame carries no object;
    r_contact = -10 sum of fingertip contact gaps.
    """
    if sim.q.shape != ref.q.shape:
        raise ValueError("sim and ref joint vectors differ in length")
    n_contacts = sum(1 for c in style if c != 0)
    if len(sim.contact_distances) not in (0, n_contacts):
        raise ValueError(
            f"expected {n_contacts} contact distances, got {len(sim.contact_distances)}"
        )
    r_hand = -HAND_WEIGHT * float(np.linalg.norm(sim.q - ref.q))
    r_chop = 0.0
    for s, r in zip(sim.chop, ref.chop):
        r_chop -= POSITION_WEIGHT * float(np.linalg.norm(s.position - r.position))
        r_chop -= ANGLE_WEIGHT * quat_angle(s.orientation, r.orientation)
    r_obj = 0.0
    if sim.obj is not None and ref.obj is not None:
        r_obj -= POSITION_WEIGHT * float(np.linalg.norm(sim.obj.position - ref.obj.position))
        r_obj -= ANGLE_WEIGHT * quat_angle(sim.obj.orientation, ref.obj.orientation)
    r_contact = -CONTACT_WEIGHT * float(np.sum(sim.contact_distances))
    return RewardBreakdown(r_hand, r_chop, r_obj, r_contact)


def score_trajectory(sim_frames, ref_frames, style) -> float:
    """Mean per-frame reward; the frame sequences must be equally long."""
    sim_frames = list(sim_frames)
    ref_frames = list(ref_frames)
    if len(sim_frames) != len(ref_frames):
        raise ValueError(
            f"frame count mismatch: sim {len(sim_frames)} vs ref {len(ref_frames)}"
        )
    if not sim_frames:
        raise ValueError("cannot score an empty trajectory")
    return float(
        np.mean([reward(s, r, style).r for s, r in zip(sim_frames, ref_frames)])
    )


def _local_body(root: RigidTransform, body: BodyState) -> list[float]:
    inv = root.inverse()
    p = inv.apply(body.position)
    o = inv.orientation * body.orientation
    v = inv.orientation.rotate(body.velocity)
    w = inv.orientation.rotate(body.angular_velocity)
    return [*p, *o.as_array(), *v, *w]


def object_size_vector(obj=None) -> np.ndarray:
    """Fixed-width size descriptor [radius, length, side_x, side_y, side_z]."""
    out = np.zeros(5)
    if obj is None:
        return out
    out[0] = obj.radius
    out[1] = obj.length
    if obj.sides is not None:
        out[2:] = obj.sides
    return out


def _reference_chop_7dof(ref_traj, t: float) -> list[float]:
    """Reference pair state in the 7-DoF gripper parameterization, palm-local,
    with rates from forward differences of consecutive samples."""
    f0 = ref_traj.frame_at(t)
    f1 = ref_traj.frame_at(t + ref_traj.dt)
    inv = f0.hand_root.inverse()
    p = inv.apply(f0.config.position)
    o = inv.orientation * f0.config.orientation
    if f1 is f0:
        v = np.zeros(3)
        w = np.zeros(3)
        phidot = 0.0
    else:
        dt = ref_traj.dt
        v = inv.orientation.rotate((f1.config.position - f0.config.position) / dt)
        w_world = _angular_velocity(f0.config.orientation, f1.config.orientation, dt)
        w = inv.orientation.rotate(w_world)
        phidot = (f1.config.opening - f0.config.opening) / dt
    return [*p, *o.as_array(), f0.config.opening, *v, *w, phidot]


def _angular_velocity(o0: UnitQuaternion, o1: UnitQuaternion, dt: float) -> np.ndarray:
    rel = o1 * o0.conjugate()
    w = rel.w
    vec = np.array([rel.x, rel.y, rel.z])
    n = float(np.linalg.norm(vec))
    if n < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(n, w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return (angle / dt) * (vec / n)


def assemble_state(
    sim: SimFrame,
    ref_traj,
    t: float,
    obj=None,
    ref_hand_q: np.ndarray | None = None,
) -> np.ndarray:
    """Flat controller state vector at time t.

    Layout: sim joint state (q, qdot); both stick states palm-local (position,
    orientation quaternion, linear and angular velocity); object state
    palm-local (zeros when absent); fixed-width object size descriptor;
    contact gaps; contact-force magnitudes (zero-filled when unavailable);
    then six reference lookahead blocks sampled every 0.05 s over the next
    0.3 s (held at the final frame past the end), each containing the
    reference joint vector and the reference pair state in the 7-DoF gripper
    parameterization with rates, plus the reference object state, all relative
    to the reference frame's own palm.
    """
    parts: list[float] = [*sim.q, *sim.qdot]
    for body in sim.chop:
        parts += _local_body(sim.root, body)
    if sim.obj is not None:
        parts += _local_body(sim.root, sim.obj)
    else:
        parts += [0.0] * 13
    parts += list(object_size_vector(obj))
    parts += list(sim.contact_distances)
    n_c = len(sim.contact_distances)
    f_hand = np.zeros(n_c) if sim.f_hand is None else np.asarray(sim.f_hand, float)
    f_chop = np.zeros(2) if sim.f_chop is None else np.asarray(sim.f_chop, float)
    parts += list(f_hand) + list(f_chop)

    if ref_hand_q is None:
        ref_hand_q = np.zeros_like(sim.q)
    for k in range(1, LOOKAHEAD_STEPS + 1):
        tk = t + k * LOOKAHEAD_DT
        parts += list(np.asarray(ref_hand_q, dtype=float))
        parts += _reference_chop_7dof(ref_traj, tk)
        fk = ref_traj.frame_at(tk)
        if fk.object_pose is not None:
            inv = fk.hand_root.inverse()
            p = inv.apply(fk.object_pose.position)
            o = inv.orientation * fk.object_pose.orientation
            parts += [*p, *o.as_array(), *np.zeros(6)]
        else:
            parts += [0.0] * 13
    return np.array(parts, dtype=float)
