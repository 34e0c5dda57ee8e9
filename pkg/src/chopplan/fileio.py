"""Plain-text, versioned, bit-exact round-trippable artifact files.

Floats are written with `repr`, whose shortest-round-trip guarantee makes a
write/read cycle reproduce every value bit for bit, keeping golden files
diffable.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np
import yaml

from .chopsticks import ChopstickConfig, ChopstickPairSpec, HeldPair, stick_states
from .geometry import RigidTransform, UnitQuaternion
from .grip_ik import GripPose
from .trajectory import TaskTrajectory, TrajectoryFrame

TRAJECTORY_FORMAT = "trajectory/1"
GRIP_POSE_FORMAT = "grippose/1"


class FileFormatError(ValueError):
    """Malformed or wrong-version artifact file."""


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def _quat(o: UnitQuaternion) -> list[float]:
    return [o.w, o.x, o.y, o.z]


def morphology_hash(morphology: dict) -> str:
    """Stable content hash of a morphology document."""
    text = yaml.safe_dump(morphology, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_trajectory(traj: TaskTrajectory, path, morphology_digest: str = "") -> None:
    lines = [
        TRAJECTORY_FORMAT,
        f"dt {traj.dt!r}",
        f"frames {len(traj.frames)}",
        f"morphology {traj.morphology}",
        f"morphology_hash {morphology_digest or '-'}",
        "style " + ",".join(str(c) for c in traj.style),
        "spec "
        + _fmt(
            [
                traj.spec.length,
                traj.spec.radius,
                traj.spec.pivot_to_tip,
                traj.spec.max_opening,
            ]
        ),
    ]
    for f in traj.frames:
        upper, lower = stick_states(f.config, traj.spec)
        rec = [f.time]
        rec += [*f.config.position, *_quat(f.config.orientation), f.config.opening]
        rec += [*upper[0], *_quat(upper[1]), *lower[0], *_quat(lower[1])]
        rec += [*f.hand_root.position, *_quat(f.hand_root.orientation)]
        rec += list(f.arm_q)
        if f.object_pose is not None:
            rec += [*f.object_pose.position, *_quat(f.object_pose.orientation)]
        line = f.phase + " " + _fmt(rec)
        if f.object_pose is None:
            line += " -"
        lines.append(line)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory(path) -> TaskTrajectory:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != TRAJECTORY_FORMAT:
        raise FileFormatError(f"{path}: expected header {TRAJECTORY_FORMAT!r}")

    def header(i, key):
        parts = lines[i].split(None, 1)
        if parts[0] != key:
            raise FileFormatError(f"{path}:{i+1}: expected {key!r}")
        return parts[1] if len(parts) > 1 else ""

    dt = float(header(1, "dt"))
    n = int(header(2, "frames"))
    morphology = header(3, "morphology")
    header(4, "morphology_hash")
    style = tuple(int(c) for c in header(5, "style").split(","))
    sl, sr, sp, sm = (float(v) for v in header(6, "spec").split())
    spec = ChopstickPairSpec(length=sl, radius=sr, pivot_to_tip=sp, max_opening=sm)

    frames = []
    for i, line in enumerate(lines[7 : 7 + n], start=8):
        parts = line.split()
        phase = parts[0]
        has_obj = parts[-1] != "-"
        vals = [float(v) for v in (parts[1:] if has_obj else parts[1:-1])]
        expected = 1 + 8 + 14 + 7 + 7 + (7 if has_obj else 0)
        if len(vals) != expected:
            raise FileFormatError(f"{path}:{i}: expected {expected} numbers, got {len(vals)}")
        t = vals[0]
        cfg = ChopstickConfig(
            vals[1:4], UnitQuaternion(*vals[4:8]), vals[8]
        )
        hand = RigidTransform(np.array(vals[23:26]), UnitQuaternion(*vals[26:30]))
        arm_q = np.array(vals[30:37])
        obj = None
        if has_obj:
            obj = RigidTransform(np.array(vals[37:40]), UnitQuaternion(*vals[40:44]))
        frames.append(
            TrajectoryFrame(
                time=t, phase=phase, config=cfg, hand_root=hand, arm_q=arm_q, object_pose=obj
            )
        )
    if len(frames) != n:
        raise FileFormatError(f"{path}: header declares {n} frames, found {len(frames)}")
    return TaskTrajectory(
        frames=tuple(frames), morphology=morphology, style=style, spec=spec, dt=dt
    )


def write_grip_pose(pose: GripPose, path) -> None:
    held = pose.held
    lines = [
        GRIP_POSE_FORMAT,
        "style " + ",".join(str(c) for c in pose.style),
        f"holding_offset {pose.holding_offset!r}",
        "q " + _fmt(pose.q),
        "residuals " + _fmt(pose.residuals),
        f"max_penetration {pose.max_penetration!r}",
        "pair_spec "
        + _fmt([held.spec.length, held.spec.radius, held.spec.pivot_to_tip, held.spec.max_opening]),
        "pair_frame " + _fmt([*held.frame.position, *_quat(held.frame.orientation)]),
        "upper_offset " + _fmt(held.upper_offset),
        "palm_reference " + _fmt(held.palm_reference),
        f"anchors {len(pose.anchors)}",
    ]
    for finger in sorted(pose.anchors):
        lines.append(f"anchor {finger} " + _fmt(pose.anchors[finger]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grip_pose(path) -> GripPose:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != GRIP_POSE_FORMAT:
        raise FileFormatError(f"{path}: expected header {GRIP_POSE_FORMAT!r}")
    kv = {}
    anchors = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        key, rest = ln.split(None, 1)
        if key == "anchor":
            fidx, coords = rest.split(None, 1)
            anchors[int(fidx)] = np.array([float(v) for v in coords.split()])
        else:
            kv[key] = rest
    try:
        sl, sr, sp, sm = (float(v) for v in kv["pair_spec"].split())
        fr = [float(v) for v in kv["pair_frame"].split()]
        held = HeldPair(
            spec=ChopstickPairSpec(length=sl, radius=sr, pivot_to_tip=sp, max_opening=sm),
            frame=RigidTransform(np.array(fr[:3]), UnitQuaternion(*fr[3:])),
            upper_offset=np.array([float(v) for v in kv["upper_offset"].split()]),
            palm_reference=np.array([float(v) for v in kv["palm_reference"].split()]),
        )
        return GripPose(
            q=np.array([float(v) for v in kv["q"].split()]),
            style=tuple(int(c) for c in kv["style"].split(",")),
            anchors=anchors,
            holding_offset=float(kv["holding_offset"]),
            residuals=np.array([float(v) for v in kv["residuals"].split()]),
            max_penetration=float(kv["max_penetration"]),
            held=held,
        )
    except (KeyError, ValueError) as e:
        raise FileFormatError(f"{path}: malformed grip pose file ({e})") from e
