"""Analytic 7-DoF arm inverse kinematics.

The arm is shoulder (3 DoF, intrinsic z-y-x rotation), elbow (1 DoF, local y)
and wrist (3 DoF, intrinsic z-y-x). Both segments extend along local +x. The
wrist point coincides with the hand-root origin, so the hand-root transform is
the IK target. The one-parameter self-motion of the elbow about the
shoulder-to-wrist axis is exposed as the swivel angle, which callers thread
from frame to frame for continuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, UnitQuaternion
from .hand import ArmSpec, HandModel

_DEGENERATE = 1e-9


class Unreachable(RuntimeError):
    """No arm configuration reaches the requested hand-root transform."""


@dataclass(frozen=True)
class ArmIKSolution:
    """Joint angles (shoulder z-y-x, elbow, wrist z-y-x) and the swivel used."""

    q: np.ndarray
    swivel: float

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(7))

    def within_limits(self, arm: ArmSpec, tol: float = 1e-9) -> bool:
        return bool(
            np.all(self.q >= arm.limits[:, 0] - tol)
            and np.all(self.q <= arm.limits[:, 1] + tol)
        )


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _euler_zyx(R) -> tuple[float, float, float]:
    """Angles (z, y, x) with R = Rz(a) @ Ry(b) @ Rx(c); b in [-pi/2, pi/2]."""
    sb = float(np.clip(-R[2, 0], -1.0, 1.0))
    b = math.asin(sb)
    if abs(sb) > 1.0 - 1e-12:
        # Gimbal lock: only a -/+ c is determined; put everything in c.
        if sb > 0:
            return 0.0, b, math.atan2(R[0, 1], R[1, 1])
        return 0.0, b, math.atan2(-R[0, 1], R[1, 1])
    a = math.atan2(R[1, 0], R[0, 0])
    c = math.atan2(R[2, 1], R[2, 2])
    return a, b, c


def _arm_of(model_or_arm) -> ArmSpec:
    return model_or_arm.arm if isinstance(model_or_arm, HandModel) else model_or_arm


def arm_fk(model_or_arm, q) -> RigidTransform:
    """Hand-root transform produced by the 7 arm joint angles."""
    arm = _arm_of(model_or_arm)
    q = np.asarray(q, dtype=float).reshape(7)
    rs = _rot_z(q[0]) @ _rot_y(q[1]) @ _rot_x(q[2])
    re = _rot_y(q[3])
    rw = _rot_z(q[4]) @ _rot_y(q[5]) @ _rot_x(q[6])
    x = np.array([1.0, 0.0, 0.0])
    elbow = arm.shoulder_position + arm.upper_length * (rs @ x)
    wrist = elbow + arm.fore_length * (rs @ re @ x)
    return RigidTransform(wrist, UnitQuaternion.from_matrix(rs @ re @ rw))


def _swivel_basis(w_hat) -> tuple[np.ndarray, np.ndarray]:
    """Reference directions spanning the elbow circle plane (normal w_hat)."""
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(w_hat @ ref)) > 0.99:
        ref = np.array([1.0, 0.0, 0.0])
    u = ref - (ref @ w_hat) * w_hat
    u /= np.linalg.norm(u)
    return u, np.cross(w_hat, u)


def arm_swivel(model_or_arm, q) -> float:
    """Swivel angle of a configuration (0 when the arm is singularly straight)."""
    arm = _arm_of(model_or_arm)
    q = np.asarray(q, dtype=float).reshape(7)
    rs = _rot_z(q[0]) @ _rot_y(q[1]) @ _rot_x(q[2])
    x = np.array([1.0, 0.0, 0.0])
    elbow = arm.shoulder_position + arm.upper_length * (rs @ x)
    wrist = elbow + arm.fore_length * (rs @ _rot_y(q[3]) @ x)
    sw = wrist - arm.shoulder_position
    r = float(np.linalg.norm(sw))
    if r < _DEGENERATE:
        return 0.0
    w_hat = sw / r
    d = (arm.upper_length**2 - arm.fore_length**2 + r * r) / (2.0 * r)
    perp = elbow - arm.shoulder_position - d * w_hat
    if np.linalg.norm(perp) < _DEGENERATE:
        return 0.0
    u, v = _swivel_basis(w_hat)
    return math.atan2(float(perp @ v), float(perp @ u))


def arm_ik(target: RigidTransform, model_or_arm, swivel: float = 0.0) -> ArmIKSolution:
    """Closed-form arm configuration placing the hand root at `target`.

    The elbow angle comes from the law of cosines on the two segment lengths
    and the shoulder-to-wrist distance; the elbow position is set by `swivel`
    on its circle; shoulder and wrist rotations follow by frame alignment.
    Raises Unreachable when the wrist distance is outside the annulus the arm
    can cover or the elbow flexion exceeds its limit. Joint-limit violations
    of the other angles are reported via `within_limits`, not raised, so
    callers can scan swivel values.
    """
    arm = _arm_of(model_or_arm)
    l1, l2 = arm.upper_length, arm.fore_length
    sw = target.position - arm.shoulder_position
    r = float(np.linalg.norm(sw))
    if r > l1 + l2 + 1e-12 or r < abs(l1 - l2) - 1e-12:
        raise Unreachable(f"wrist distance {r:.4f} m outside [{abs(l1-l2):.4f}, {l1+l2:.4f}]")
    cos_elbow = np.clip((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    elbow_angle = math.acos(float(cos_elbow))
    if not arm.limits[3, 0] - 1e-12 <= elbow_angle <= arm.limits[3, 1] + 1e-12:
        raise Unreachable(f"elbow flexion {elbow_angle:.4f} rad outside limits")

    if r < _DEGENERATE:
        raise Unreachable("wrist coincides with the shoulder")
    w_hat = sw / r
    u, v = _swivel_basis(w_hat)
    d = (l1 * l1 - l2 * l2 + r * r) / (2.0 * r)
    rho_sq = l1 * l1 - d * d
    rho = math.sqrt(max(rho_sq, 0.0))
    circ = math.cos(swivel) * u + math.sin(swivel) * v
    elbow = arm.shoulder_position + d * w_hat + rho * circ

    a_hat = (elbow - arm.shoulder_position) / l1  # upper-arm direction
    b_hat = (target.position - elbow) / l2  # forearm direction
    # Shoulder rotation maps local x to a_hat and local -z to the forearm's
    # component perpendicular to the upper arm (which tends to -circ as the
    # arm straightens, so the same convention covers the singular case).
    f2 = b_hat - float(b_hat @ a_hat) * a_hat
    n = np.linalg.norm(f2)
    f2 = f2 / n if n > _DEGENERATE else -circ
    rs = np.column_stack([a_hat, np.cross(-f2, a_hat), -f2])  # maps x,y,z
    q0, q1, q2 = _euler_zyx(rs)
    re = _rot_y(elbow_angle)
    rw = re.T @ rs.T @ target.orientation.to_matrix()
    q4, q5, q6 = _euler_zyx(rw)
    return ArmIKSolution(
        q=np.array([q0, q1, q2, elbow_angle, q4, q5, q6]), swivel=float(swivel)
    )


def solve_reachable(
    target: RigidTransform, model_or_arm, swivel_hint: float = 0.0, scan: int = 16
) -> ArmIKSolution | None:
    """Limit-respecting solution closest (in swivel) to the hint, or None.

    Tries the hint first, then swivel values fanning out around the circle.
    """
    arm = _arm_of(model_or_arm)
    offsets = [0.0]
    for k in range(1, scan // 2 + 1):
        step = 2.0 * math.pi * k / scan
        offsets += [step, -step]
    for off in offsets:
        try:
            sol = arm_ik(target, arm, swivel=swivel_hint + off)
        except Unreachable:
            return None
        if sol.within_limits(arm):
            return sol
    return None
