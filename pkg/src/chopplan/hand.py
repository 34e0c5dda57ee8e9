"""Articulated hand + arm model: morphology loading, forward kinematics,
PD torque computation and fingertip geometry queries.

The hand is a tree of revolute joints rooted at the wrist mount. Multi-DoF
joints are composed intrinsically in the axis order declared by the
morphology file. The 7-DoF arm (shoulder 3, elbow 1, wrist 3) is described
by segment lengths and limits and handled analytically in `arm_ik`.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .geometry import (
    Capsule,
    RigidTransform,
    UnitQuaternion,
    capsule_point_distance,
)

MORPHOLOGY_FORMAT = "morphology/1"

PRESET_NAMES = ("standard", "long_finger", "large", "tri_finger")


class MorphologyError(ValueError):
    """Raised for malformed or inconsistent morphology files."""


def _rpy_quat(rpy) -> UnitQuaternion:
    roll, pitch, yaw = rpy
    return (
        UnitQuaternion.from_axis_angle([0, 0, 1], yaw)
        * UnitQuaternion.from_axis_angle([0, 1, 0], pitch)
        * UnitQuaternion.from_axis_angle([1, 0, 0], roll)
    )


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: int  # -1 for root
    origin: RigidTransform
    axes: np.ndarray  # (k, 3) unit axes, intrinsic composition order
    limits: np.ndarray  # (k, 2) radians


@dataclass(frozen=True)
class LinkSpec:
    name: str
    joint: int
    capsule: Capsule  # local frame, axis = local z


@dataclass(frozen=True)
class FingerSpec:
    name: str
    tip_link: int


@dataclass(frozen=True)
class ArmSpec:
    shoulder_position: np.ndarray
    upper_length: float
    fore_length: float
    limits: np.ndarray  # (7, 2): shoulder zyx, elbow, wrist zyx

    @property
    def dof_count(self) -> int:
        return 7


@dataclass(frozen=True)
class PDGains:
    kp: np.ndarray
    kd: np.ndarray
    torque_limit: np.ndarray

    def __post_init__(self):
        kp = np.asarray(self.kp, dtype=float)
        kd = np.asarray(self.kd, dtype=float)
        lim = np.asarray(self.torque_limit, dtype=float)
        if np.any(kp < 0) or np.any(kd < 0):
            raise ValueError("PD gains must be nonnegative")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)
        object.__setattr__(self, "torque_limit", lim)


class HandModel:
    """Immutable kinematic model; safe to share across parallel solves."""

    def __init__(self, name, joints, links, fingers, arm, source: dict | None = None):
        self.name: str = name
        self.source: dict = source if source is not None else {}
        self.joints: list[JointSpec] = joints
        self.links: list[LinkSpec] = links
        self.fingers: list[FingerSpec] = fingers
        self.arm: ArmSpec = arm

        self.joint_index = {j.name: i for i, j in enumerate(joints)}
        self.link_index = {l.name: i for i, l in enumerate(links)}

        # Flattened DoF table: joint index and axis slot per DoF.
        dof_joint = []
        joint_dof_start = []
        n = 0
        for i, j in enumerate(joints):
            joint_dof_start.append(n)
            for _ in range(len(j.axes)):
                dof_joint.append(i)
                n += 1
        self.dof_joint = np.array(dof_joint, dtype=int)
        self.joint_dof_start = joint_dof_start
        self.dof_count = n

        lo = []
        hi = []
        for j in joints:
            for k in range(len(j.axes)):
                lo.append(j.limits[k, 0])
                hi.append(j.limits[k, 1])
        self.lower_limits = np.array(lo)
        self.upper_limits = np.array(hi)

        # Per-joint ancestor DoF masks (inclusive of the joint's own DoFs).
        self._ancestor_mask = np.zeros((len(joints), n), dtype=bool)
        for i, j in enumerate(joints):
            if j.parent >= 0:
                self._ancestor_mask[i] = self._ancestor_mask[j.parent]
            s = joint_dof_start[i]
            self._ancestor_mask[i, s : s + len(j.axes)] = True

    @property
    def hand_dof_count(self) -> int:
        return self.dof_count

    @property
    def arm_dof_count(self) -> int:
        return self.arm.dof_count

    @property
    def finger_count(self) -> int:
        return len(self.fingers)

    def default_pose(self) -> np.ndarray:
        """The T-pose: all joint angles zero, clamped into limits."""
        return np.clip(np.zeros(self.dof_count), self.lower_limits, self.upper_limits)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits, self.upper_limits)

    def ancestor_dofs(self, joint: int) -> np.ndarray:
        return self._ancestor_mask[joint]

    @staticmethod
    def from_dict(data: dict) -> "HandModel":
        if not isinstance(data, dict):
            raise MorphologyError("morphology document must be a mapping")
        if data.get("format") != MORPHOLOGY_FORMAT:
            raise MorphologyError(
                f"unsupported morphology format {data.get('format')!r}, "
                f"expected {MORPHOLOGY_FORMAT!r}"
            )
        name = data.get("name", "unnamed")

        joints: list[JointSpec] = []
        index: dict[str, int] = {}
        roots = 0
        for jd in data.get("joints", []):
            jname = jd["name"]
            if jname in index:
                raise MorphologyError(f"duplicate joint name {jname!r}")
            parent_name = jd.get("parent")
            if parent_name is None:
                parent = -1
                roots += 1
            else:
                if parent_name not in index:
                    raise MorphologyError(
                        f"joint {jname!r}: parent {parent_name!r} must be declared first"
                    )
                parent = index[parent_name]
            origin = jd.get("origin", {})
            frame = RigidTransform(
                np.asarray(origin.get("xyz", [0, 0, 0]), dtype=float),
                _rpy_quat(origin.get("rpy", [0, 0, 0])),
            )
            axes = np.asarray(jd.get("axes", []), dtype=float).reshape(-1, 3)
            limits = np.asarray(jd.get("limits", []), dtype=float).reshape(-1, 2)
            if len(axes) != len(limits):
                raise MorphologyError(f"joint {jname!r}: axes/limits length mismatch")
            for k, ax in enumerate(axes):
                n = np.linalg.norm(ax)
                if n == 0:
                    raise MorphologyError(f"joint {jname!r}: zero axis")
                axes[k] = ax / n
            if np.any(limits[:, 0] > limits[:, 1]):
                raise MorphologyError(f"joint {jname!r}: lower limit above upper")
            index[jname] = len(joints)
            joints.append(JointSpec(jname, parent, frame, axes, limits))
        if not joints or roots != 1:
            raise MorphologyError("joint tree must have exactly one root")

        links: list[LinkSpec] = []
        link_index: dict[str, int] = {}
        for ld in data.get("links", []):
            lname = ld["name"]
            jname = ld["joint"]
            if jname not in index:
                raise MorphologyError(f"link {lname!r}: unknown joint {jname!r}")
            if ld["radius"] <= 0 or ld["half_length"] < 0:
                raise MorphologyError(f"link {lname!r}: nonpositive geometry")
            origin = ld.get("origin", {})
            frame = RigidTransform(
                np.asarray(origin.get("xyz", [0, 0, 0]), dtype=float),
                _rpy_quat(origin.get("rpy", [0, 0, 0])),
            )
            link_index[lname] = len(links)
            links.append(
                LinkSpec(
                    lname,
                    index[jname],
                    Capsule(float(ld["half_length"]), float(ld["radius"]), frame),
                )
            )

        fingers: list[FingerSpec] = []
        for fd in data.get("fingers", []):
            tip = fd["tip_link"]
            if tip not in link_index:
                raise MorphologyError(f"finger {fd['name']!r}: unknown tip link {tip!r}")
            fingers.append(FingerSpec(fd["name"], link_index[tip]))
        if not fingers:
            raise MorphologyError("morphology declares no fingers")

        ad = data.get("arm")
        if ad is None:
            raise MorphologyError("morphology declares no arm")
        limits = np.asarray(
            ad.get(
                "limits",
                [[-math.pi, math.pi]] * 3
                + [[0.0, 2.9]]
                + [[-2.0, 2.0]] * 3,
            ),
            dtype=float,
        ).reshape(7, 2)
        arm = ArmSpec(
            np.asarray(ad.get("shoulder_position", [0, 0, 0]), dtype=float),
            float(ad["upper_length"]),
            float(ad["fore_length"]),
            limits,
        )
        if arm.upper_length <= 0 or arm.fore_length <= 0:
            raise MorphologyError("arm segment lengths must be positive")

        return HandModel(name, joints, links, fingers, arm, source=copy.deepcopy(data))


def load_morphology(path) -> HandModel:
    with open(path) as f:
        data = yaml.safe_load(f)
    return HandModel.from_dict(data)


class FKResult:
    """World frames for every joint and link, plus the per-DoF screw data
    needed for point Jacobians."""

    __slots__ = ("joint_frames", "link_frames", "dof_axes", "dof_origins")

    def __init__(self, joint_frames, link_frames, dof_axes, dof_origins):
        self.joint_frames: list[RigidTransform] = joint_frames
        self.link_frames: list[RigidTransform] = link_frames
        self.dof_axes: np.ndarray = dof_axes
        self.dof_origins: np.ndarray = dof_origins


def forward_kinematics(model: HandModel, q: np.ndarray, root: RigidTransform | None = None) -> FKResult:
    """World transforms for all joints and links at configuration q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.dof_count,):
        raise ValueError(f"expected {model.dof_count} joint angles, got {q.shape}")
    if root is None:
        root = RigidTransform.identity()

    joint_frames: list[RigidTransform] = []
    dof_axes = np.zeros((model.dof_count, 3))
    dof_origins = np.zeros((model.dof_count, 3))
    d = 0
    for j in model.joints:
        base = root if j.parent < 0 else joint_frames[j.parent]
        t = base.compose(j.origin)
        for axis in j.axes:
            dof_axes[d] = t.orientation.rotate(axis)
            dof_origins[d] = t.position
            t = RigidTransform(
                t.position, t.orientation * UnitQuaternion.from_axis_angle(axis, q[d])
            )
            d += 1
        joint_frames.append(t)

    link_frames = [joint_frames[l.joint].compose(l.capsule.frame) for l in model.links]
    return FKResult(joint_frames, link_frames, dof_axes, dof_origins)


def point_jacobian(model: HandModel, fk: FKResult, joint: int, point: np.ndarray) -> np.ndarray:
    """(dof_count, 3) Jacobian of a world point rigidly attached to `joint`."""
    mask = model.ancestor_dofs(joint)
    jac = np.zeros((model.dof_count, 3))
    diff = point - fk.dof_origins[mask]
    jac[mask] = np.cross(fk.dof_axes[mask], diff)
    return jac


def link_capsule(model: HandModel, fk: FKResult, link: int) -> Capsule:
    spec = model.links[link]
    return Capsule(spec.capsule.half_length, spec.capsule.radius, fk.link_frames[link])


def pd_torque(gains: PDGains, q_target, q, qdot) -> tuple[np.ndarray, np.ndarray]:
    """PD servo torques with saturation: tau = kp (q_target - q) - kd qdot.

    Returns (tau, saturated) where saturated flags DoFs clamped at the
    torque limit.
    """
    q_target = np.asarray(q_target, dtype=float)
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if not (q_target.shape == q.shape == qdot.shape):
        raise ValueError("pd_torque inputs must share a common length")
    raw = gains.kp * (q_target - q) - gains.kd * qdot
    tau = np.clip(raw, -gains.torque_limit, gains.torque_limit)
    return tau, np.abs(raw) > gains.torque_limit


def default_gains(model: HandModel) -> PDGains:
    """Default servo gains for the hand DoFs (configuration, not ground truth)."""
    kp = np.full(model.dof_count, 3.0)
    return PDGains(kp=kp, kd=0.1 * kp, torque_limit=np.full(model.dof_count, 2.0))


def fingertip_capsule(model: HandModel, fk: FKResult, finger: int) -> Capsule:
    if not 0 <= finger < len(model.fingers):
        raise IndexError(f"finger index {finger} out of range")
    return link_capsule(model, fk, model.fingers[finger].tip_link)


def fingertip_closest_point(
    model: HandModel, q: np.ndarray, finger: int, target
) -> tuple[np.ndarray, float]:
    """Closest point on the fingertip capsule surface to `target`, with its
    (nonnegative) distance to the target."""
    fk = forward_kinematics(model, q)
    cap = fingertip_capsule(model, fk, finger)
    signed, surface = capsule_point_distance(cap, target)
    return surface, abs(signed)


# ---------------------------------------------------------------------------
# Preset morphologies


def _finger_chain(name, parent, base_xyz, base_rpy, lengths, radius, palm=True):
    """Joint/link dicts for one palm-bone + 4-DoF finger chain."""
    prox, mid, dist = lengths
    joints = []
    links = []
    if palm:
        palm_joint = f"palm_{name}"
        joints.append(
            {
                "name": palm_joint,
                "parent": parent,
                "origin": {"xyz": base_xyz, "rpy": base_rpy},
                "axes": [[0, 0, 1], [0, 1, 0]],
                "limits": [[-0.12, 0.12], [-0.12, 0.12]],
            }
        )
        links.append(_bone_link(f"{name}_metacarpal", palm_joint, 0.075, radius * 1.3))
        mcp_parent = palm_joint
        mcp_xyz = [0.075, 0.0, 0.0]
    else:
        mcp_parent = parent
        mcp_xyz = base_xyz
    joints += [
        {
            "name": f"{name}_mcp",
            "parent": mcp_parent,
            "origin": {"xyz": mcp_xyz, "rpy": [0, 0, 0] if palm else base_rpy},
            "axes": [[0, 0, 1], [0, 1, 0]],
            "limits": [[-0.40, 0.40], [-0.35, 1.85]],
        },
        {
            "name": f"{name}_pip",
            "parent": f"{name}_mcp",
            "origin": {"xyz": [prox, 0, 0]},
            "axes": [[0, 1, 0]],
            "limits": [[-0.10, 2.0]],
        },
        {
            "name": f"{name}_dip",
            "parent": f"{name}_pip",
            "origin": {"xyz": [mid, 0, 0]},
            "axes": [[0, 1, 0]],
            "limits": [[-0.10, 1.6]],
        },
    ]
    links += [
        _bone_link(f"{name}_proximal", f"{name}_mcp", prox, radius),
        _bone_link(f"{name}_middle", f"{name}_pip", mid, radius),
        _bone_link(f"{name}_tip", f"{name}_dip", dist, radius * 0.9),
    ]
    return joints, links


def _bone_link(name, joint, length, radius):
    # Capsule axis is local z; bones run along local x, hence the pitch.
    return {
        "name": name,
        "joint": joint,
        "origin": {"xyz": [length / 2, 0, 0], "rpy": [0, math.pi / 2, 0]},
        "half_length": length / 2,
        "radius": radius,
    }


def _thumb_chain(parent, scale=1.0):
    s = scale
    joints = [
        {
            "name": "thumb_cmc",
            "parent": parent,
            "origin": {"xyz": [0.02 * s, 0.03 * s, -0.01 * s], "rpy": [0, 0, 0.5]},
            "axes": [[0, 0, 1], [0, 1, 0], [1, 0, 0]],
            "limits": [[-1.2, 0.8], [-0.3, 1.4], [-0.8, 0.8]],
        },
        {
            "name": "thumb_mcp",
            "parent": "thumb_cmc",
            "origin": {"xyz": [0.046 * s, 0, 0]},
            "axes": [[0, 0, 1], [0, 1, 0]],
            "limits": [[-0.4, 0.4], [-0.3, 1.3]],
        },
        {
            "name": "thumb_ip",
            "parent": "thumb_mcp",
            "origin": {"xyz": [0.035 * s, 0, 0]},
            "axes": [[0, 1, 0]],
            "limits": [[-0.2, 1.5]],
        },
    ]
    links = [
        _bone_link("thumb_proximal", "thumb_cmc", 0.046 * s, 0.010 * s),
        _bone_link("thumb_middle", "thumb_mcp", 0.035 * s, 0.009 * s),
        _bone_link("thumb_tip", "thumb_ip", 0.030 * s, 0.008 * s),
    ]
    return joints, links


_FINGER_LAYOUT = {
    "index": (0.028, (0.045, 0.027, 0.023)),
    "middle": (0.009, (0.048, 0.030, 0.024)),
    "ring": (-0.009, (0.044, 0.028, 0.023)),
    "pinky": (-0.028, (0.036, 0.022, 0.020)),
}

_DEFAULT_ARM = {
    "shoulder_position": [-0.45, 0.0, 0.35],
    "upper_length": 0.30,
    "fore_length": 0.30,
}


def preset_morphology(name: str) -> dict:
    """Morphology dict for one of the shipped presets."""
    if name == "standard":
        return _human_morphology("standard", finger_scale=1.0, global_scale=1.0)
    if name == "long_finger":
        return _human_morphology("long_finger", finger_scale=2.0, global_scale=1.0)
    if name == "large":
        return _human_morphology("large", finger_scale=1.0, global_scale=2.0)
    if name == "tri_finger":
        return _tri_finger_morphology()
    raise KeyError(f"unknown preset {name!r}; options: {PRESET_NAMES}")


def _human_morphology(name, finger_scale, global_scale):
    g = global_scale
    joints = [{"name": "hand_root", "parent": None}]
    links = [
        {
            "name": "palm",
            "joint": "hand_root",
            "origin": {"xyz": [0.05 * g, 0, 0], "rpy": [0, math.pi / 2, 0]},
            "half_length": 0.04 * g,
            "radius": 0.022 * g,
        },
        {
            # Web between thumb and index: a capsule, not a box.
            "name": "union_valley",
            "joint": "hand_root",
            "origin": {
                "xyz": [0.045 * g, 0.028 * g, -0.008 * g],
                "rpy": [0, math.pi / 2, -0.5],
            },
            "half_length": 0.025 * g,
            "radius": 0.012 * g,
        },
    ]
    tj, tl = _thumb_chain("hand_root", scale=g)
    joints += tj
    links += tl
    for fname, (y, lengths) in _FINGER_LAYOUT.items():
        scaled = tuple(v * finger_scale * g for v in lengths)
        fj, fl = _finger_chain(
            fname, "hand_root", [0.01 * g, y * g, 0.0], [0, 0, 0], scaled, 0.008 * g
        )
        joints += fj
        links += fl
    # Thumb segments follow the finger scale as well.
    if finger_scale != 1.0:
        for j in joints:
            if j["name"] in ("thumb_mcp", "thumb_ip"):
                j["origin"]["xyz"][0] *= finger_scale
        for l in links:
            if l["name"].startswith("thumb_"):
                l["half_length"] *= finger_scale
                l["origin"]["xyz"][0] *= finger_scale
    fingers = [{"name": "thumb", "tip_link": "thumb_tip"}] + [
        {"name": f, "tip_link": f"{f}_tip"} for f in _FINGER_LAYOUT
    ]
    return {
        "format": MORPHOLOGY_FORMAT,
        "name": name,
        "joints": joints,
        "links": links,
        "fingers": fingers,
        "arm": dict(_DEFAULT_ARM),
    }


def _tri_finger_morphology():
    """Claw-grabber style hand: a thumb plus two opposing fingers."""
    joints = [{"name": "hand_root", "parent": None}]
    links = [
        {
            "name": "palm",
            "joint": "hand_root",
            "origin": {"xyz": [0.04, 0, 0], "rpy": [0, math.pi / 2, 0]},
            "half_length": 0.03,
            "radius": 0.02,
        }
    ]
    tj, tl = _thumb_chain("hand_root")
    joints += tj
    links += tl
    for fname, y in (("claw_a", 0.02), ("claw_b", -0.02)):
        fj, fl = _finger_chain(
            fname, "hand_root", [0.01, y, 0.0], [0, 0, 0], (0.05, 0.03, 0.024), 0.008
        )
        joints += fj
        links += fl
    fingers = [
        {"name": "thumb", "tip_link": "thumb_tip"},
        {"name": "claw_a", "tip_link": "claw_a_tip"},
        {"name": "claw_b", "tip_link": "claw_b_tip"},
    ]
    return {
        "format": MORPHOLOGY_FORMAT,
        "name": "tri_finger",
        "joints": joints,
        "links": links,
        "fingers": fingers,
        "arm": dict(_DEFAULT_ARM),
    }


def get_model(name_or_path: str) -> HandModel:
    """Resolve a preset name or a morphology file path to a model."""
    if name_or_path in PRESET_NAMES:
        return HandModel.from_dict(preset_morphology(name_or_path))
    return load_morphology(name_or_path)


def dump_morphology(data: dict, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)
