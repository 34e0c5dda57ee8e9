"""Gripping-pose synthesis: barrier-penalized inverse kinematics that pulls
the contacting fingertips onto proposed stick contact points, solved with
projected L-BFGS from the default T-pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .chopsticks import HeldPair
from .geometry import (
    RigidTransform,
    clog,
    clog_derivative,
    closest_point_on_segment,
    closest_points_between_segments,
)
from .hand import HandModel, fingertip_capsule, forward_kinematics, point_jacobian
from .styles import contacting_fingers, is_valid_style

BARRIER_THRESHOLD = 0.001  # m, clog threshold of the IK objective
BARRIER_FLOOR = 1e-6  # m, keeps the barrier finite during line search
CONTACT_TOLERANCE = 0.001  # m, residual bound for a converged grip
MAX_PENETRATION = 0.001  # m


class InfeasibleContact(RuntimeError):
    """IK failed to realize the proposed contacts."""

    def __init__(self, residuals, penetration):
        self.residuals = np.asarray(residuals, dtype=float)
        self.penetration = float(penetration)
        super().__init__(
            f"grip IK did not converge: residuals {np.round(self.residuals, 5)} m, "
            f"max penetration {self.penetration:.5f} m"
        )


@dataclass(frozen=True)
class GripPose:
    """A joint configuration realizing a gripping style."""

    q: np.ndarray
    style: tuple[int, ...]
    anchors: dict  # finger index -> contact point in the pair (lower-stick) frame
    holding_offset: float
    residuals: np.ndarray
    max_penetration: float
    held: HeldPair = field(default_factory=HeldPair)

    def hand_in_pair(self) -> RigidTransform:
        return self.held.hand_in_pair(self.holding_offset)


# Mean non-thumb fingertip x at the default pose of the reference hand; used
# to scale the held-pair placement to other morphologies.
_REFERENCE_REACH = 0.1775


def _model_reach(model: HandModel) -> float:
    fk = forward_kinematics(model, model.default_pose())
    xs = [
        fingertip_capsule(model, fk, i).endpoints()[1][0]
        for i in range(1, model.finger_count)
    ]
    return float(np.mean(xs))


def default_held_pair(model: HandModel) -> HeldPair:
    """Held-pair placement scaled to the hand's reach so the grip region sits
    under the fingertips for any morphology."""
    s = _model_reach(model) / _REFERENCE_REACH
    base = HeldPair()
    return HeldPair(
        spec=base.spec,
        frame=RigidTransform(s * base.frame.position, base.frame.orientation),
        upper_offset=base.upper_offset,
        palm_reference=s * base.palm_reference,
    )


def default_contact_fractions(style, model: HandModel | None = None,
                              held: HeldPair | None = None) -> np.ndarray:
    """Mid-stick contact proposal: the thumb grips rear-most and the
    remaining contacting fingers sit slightly toward the tips.

    With a model, the fractions are chosen so each contact sits under the
    curled reach of its finger; without one, reference-hand constants apply.
    """
    pairs = contacting_fingers(style)
    if model is None:
        return np.array([0.52 if i == 0 else 0.38 + 0.02 * i for i, _ in pairs])
    if held is None:
        held = default_held_pair(model)
    fk = forward_kinematics(model, model.default_pose())
    fractions = []
    for finger, stick in pairs:
        tip_x = fingertip_capsule(model, fk, finger).endpoints()[1][0]
        x_des = (0.80 if finger == 0 else 0.68) * tip_x
        stick_tip = held.axis_point(stick, 0.0)
        stick_rear = held.axis_point(stick, 1.0)
        frac = (stick_tip[0] - x_des) / (stick_tip[0] - stick_rear[0])
        fractions.append(float(np.clip(frac, 0.05, 0.95)))
    return np.array(fractions)


def _barrier(z_raw: float) -> tuple[float, float]:
    """Penetration barrier value and slope in the raw (unclamped) argument.

    Below the clamp floor the barrier continues linearly so line searches see
    a finite, consistent gradient that still pushes out of penetration.
    """
    if z_raw >= BARRIER_THRESHOLD:
        return 0.0, 0.0
    if z_raw >= BARRIER_FLOOR:
        return clog(z_raw, BARRIER_THRESHOLD), clog_derivative(z_raw, BARRIER_THRESHOLD)
    slope = clog_derivative(BARRIER_FLOOR, BARRIER_THRESHOLD)
    return (
        clog(BARRIER_FLOOR, BARRIER_THRESHOLD) + slope * (z_raw - BARRIER_FLOOR),
        slope,
    )


def contact_points_and_normals(x, style, held: HeldPair):
    """Contact targets on the stick surfaces plus their outward normals.

    One point per contacting finger, offset from the stick axis toward the
    palm side; x entries are arclength fractions along the assigned stick
    (0 = tip, 1 = rear).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    pairs = contacting_fingers(style)
    if len(x) != len(pairs):
        raise ValueError(f"expected {len(pairs)} contact fractions, got {len(x)}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("contact fractions must lie in [0, 1]")
    points = []
    normals = []
    for frac, (_, stick) in zip(x, pairs):
        axis_pt = held.axis_point(stick, float(frac))
        cap = held.stick_capsule(stick)
        a0, a1 = cap.endpoints()
        axis_dir = (a1 - a0) / np.linalg.norm(a1 - a0)
        toward = held.palm_reference - axis_pt
        toward -= (toward @ axis_dir) * axis_dir
        n = np.linalg.norm(toward)
        if n < 1e-12:
            raise ValueError("palm reference lies on the stick axis")
        normals.append(toward / n)
        points.append(axis_pt + cap.radius * toward / n)
    return points, normals


def contact_points(x, style, held: HeldPair) -> list[np.ndarray]:
    return contact_points_and_normals(x, style, held)[0]


def ik_objective(q, x, style, model: HandModel, held: HeldPair):
    """Value and gradient of the grip IK objective.

    Sum over contacting fingers of squared fingertip-to-contact distance plus
    a clamped log-barrier on penetration: the barrier argument is the
    threshold minus the penetration depth, so it vanishes for separated
    fingertips and diverges as penetration approaches the threshold.
    """
    targets = contact_points(x, style, held)
    return _objective_from_targets(q, targets, style, model, held)


def _objective_from_targets(q, targets, style, model, held):
    q = np.asarray(q, dtype=float)
    fk = forward_kinematics(model, q)
    pairs = contacting_fingers(style)
    value = 0.0
    grad = np.zeros(model.dof_count)
    for target, (finger, stick) in zip(targets, pairs):
        cap = fingertip_capsule(model, fk, finger)
        tip_joint = model.links[model.fingers[finger].tip_link].joint
        a0, a1 = cap.endpoints()

        # Fingertip-surface-to-target distance via the axis segment.
        c = closest_point_on_segment(target, a0, a1)
        diff = c - target
        d_ax = float(np.linalg.norm(diff))
        value += (d_ax - cap.radius) ** 2
        if d_ax > 1e-12:
            u = diff / d_ax
            jac = point_jacobian(model, fk, tip_joint, c)
            grad += 2.0 * (d_ax - cap.radius) * (jac @ u)

        # Penetration barrier against the assigned stick.
        scap = held.stick_capsule(stick)
        s0, s1 = scap.endpoints()
        ca, cb = closest_points_between_segments(a0, a1, s0, s1)
        axis_gap = float(np.linalg.norm(ca - cb))
        signed = axis_gap - cap.radius - scap.radius
        bval, bslope = _barrier(BARRIER_THRESHOLD + signed)
        if bval != 0.0 or bslope != 0.0:
            value += bval
            if axis_gap > 1e-12:
                u = (ca - cb) / axis_gap
                jac = point_jacobian(model, fk, tip_joint, ca)
                grad += bslope * (jac @ u)
    return value, grad


def _tip_placement_objective(q, tip_goals, style, model):
    """Least-squares pull of each distal fingertip endpoint onto its goal.

    Targeting the distal endpoint (rather than the nearest axis point) makes
    the rest of the phalanx extend away from the stick, so the warm start
    enters the barrier stage essentially penetration-free.
    """
    q = np.asarray(q, dtype=float)
    fk = forward_kinematics(model, q)
    value = 0.0
    grad = np.zeros(model.dof_count)
    for goal, (finger, _) in zip(tip_goals, contacting_fingers(style)):
        cap = fingertip_capsule(model, fk, finger)
        tip_joint = model.links[model.fingers[finger].tip_link].joint
        _, a1 = cap.endpoints()
        diff = a1 - goal
        value += float(diff @ diff)
        jac = point_jacobian(model, fk, tip_joint, a1)
        grad += 2.0 * (jac @ diff)
    return value, grad


def grip_metrics(q, x, style, model, held):
    """(residuals, max penetration) of a configuration against the contacts."""
    targets = contact_points(x, style, held)
    fk = forward_kinematics(model, q)
    residuals = []
    penetration = 0.0
    for target, (finger, stick) in zip(targets, contacting_fingers(style)):
        cap = fingertip_capsule(model, fk, finger)
        a0, a1 = cap.endpoints()
        c = closest_point_on_segment(target, a0, a1)
        residuals.append(abs(float(np.linalg.norm(c - target)) - cap.radius))
        scap = held.stick_capsule(stick)
        s0, s1 = scap.endpoints()
        ca, cb = closest_points_between_segments(a0, a1, s0, s1)
        signed = float(np.linalg.norm(ca - cb)) - cap.radius - scap.radius
        penetration = max(penetration, -signed)
    return np.array(residuals), penetration


def solve_grip_ik(
    x,
    style,
    model: HandModel,
    held: HeldPair | None = None,
    holding_offset: float = 0.0,
    max_iter: int = 500,
    q0: np.ndarray | None = None,
) -> GripPose:
    """Minimize the contact objective from the T-pose under joint limits.

    Raises InfeasibleContact when the converged pose leaves any fingertip
    more than 1 mm from its contact or penetrating beyond 1 mm.
    """
    ok, reason = is_valid_style(style)
    if not ok:
        raise ValueError(f"invalid gripping style {tuple(style)}: {reason}")
    if held is None:
        held = default_held_pair(model)
    style = tuple(int(c) for c in style)
    x = np.asarray(x, dtype=float).reshape(-1)
    targets = contact_points(x, style, held)  # validates x range

    if q0 is None:
        q0 = model.default_pose()
    bounds = list(zip(model.lower_limits, model.upper_limits))

    # Stage 1: barrier-free placement of each distal fingertip endpoint at its
    # contact point offset outward by the fingertip radius. This lands on the
    # correct side of the sticks and leaves a short, well-conditioned polish.
    _, normals = contact_points_and_normals(x, style, held)
    tip_goals = []
    fk0 = forward_kinematics(model, q0)
    for target, normal, (finger, _) in zip(targets, normals, contacting_fingers(style)):
        radius = fingertip_capsule(model, fk0, finger).radius
        tip_goals.append(target + radius * normal)
    warm = minimize(
        _tip_placement_objective,
        q0,
        args=(tip_goals, style, model),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-12, "maxls": 40},
    )

    # Stage 2: full objective with the penetration barrier.
    result = minimize(
        _objective_from_targets,
        warm.x,
        args=(targets, style, model, held),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-12, "maxls": 40},
    )
    q = model.clamp(result.x)
    residuals, penetration = grip_metrics(q, x, style, model, held)
    if np.any(residuals > CONTACT_TOLERANCE) or penetration >= MAX_PENETRATION:
        raise InfeasibleContact(residuals, penetration)

    pair_inv = held.frame.inverse()
    anchors = {
        finger: pair_inv.apply(target)
        for target, (finger, _) in zip(targets, contacting_fingers(style))
    }
    return GripPose(
        q=q,
        style=style,
        anchors=anchors,
        holding_offset=holding_offset,
        residuals=residuals,
        max_penetration=penetration,
        held=held,
    )
