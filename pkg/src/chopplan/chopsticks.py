"""Chopstick pair geometry.

Two views of the same pair of sticks are used:

* a held pair fixed in the hand-root frame, used by the grip IK solver;
* a 7-DoF parallel-gripper configuration (lower-stick pose + opening angle)
  used by the grasp planner and trajectory generator, expandable to the
  12-DoF twin-capsule state used by the tracking scorer.

Pair frame convention: local +x runs from the rear toward the tips, the
opening rotation is about local +z through the pivot, and the tips separate
along local +y as the pair opens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Capsule, RigidTransform, UnitQuaternion

_Z_TO_X = UnitQuaternion.from_axis_angle([0, 1, 0], math.pi / 2)


@dataclass(frozen=True)
class ChopstickPairSpec:
    """Stick dimensions and the pivot the opening rotation acts about."""

    length: float = 0.26
    radius: float = 0.004
    pivot_to_tip: float = 0.20
    max_opening: float = 0.6  # rad

    @property
    def pivot_to_rear(self) -> float:
        return self.length - self.pivot_to_tip

    def max_tip_separation(self) -> float:
        return 2.0 * self.pivot_to_tip * math.sin(self.max_opening / 2.0)


@dataclass(frozen=True)
class ChopstickConfig:
    """7-DoF parallel-gripper configuration of the pair."""

    position: np.ndarray  # pivot of the lower stick
    orientation: UnitQuaternion  # lower stick frame (+x toward tips)
    opening: float  # rad, relative rotation of the upper stick

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.opening < 0.0:
            raise ValueError("opening angle must be nonnegative")

    def frame(self) -> RigidTransform:
        return RigidTransform(self.position, self.orientation)

    def with_opening(self, opening: float) -> "ChopstickConfig":
        return replace(self, opening=opening)


def tip_separation(spec: ChopstickPairSpec, opening: float) -> float:
    return 2.0 * spec.pivot_to_tip * math.sin(opening / 2.0)


def opening_for_separation(spec: ChopstickPairSpec, separation: float) -> float:
    """Inverse of tip_separation; raises for separations beyond the opening range."""
    arg = separation / (2.0 * spec.pivot_to_tip)
    if not 0.0 <= arg <= math.sin(spec.max_opening / 2.0):
        raise ValueError(f"tip separation {separation} outside opening range")
    return 2.0 * math.asin(arg)


def lower_tip(config: ChopstickConfig, spec: ChopstickPairSpec) -> np.ndarray:
    return config.position + spec.pivot_to_tip * config.orientation.rotate([1, 0, 0])


def upper_tip(config: ChopstickConfig, spec: ChopstickPairSpec) -> np.ndarray:
    c, s = math.cos(config.opening), math.sin(config.opening)
    return config.position + spec.pivot_to_tip * config.orientation.rotate([c, s, 0.0])


def tip_midpoint(config: ChopstickConfig, spec: ChopstickPairSpec) -> np.ndarray:
    return 0.5 * (lower_tip(config, spec) + upper_tip(config, spec))


def tip_line_direction(config: ChopstickConfig, spec: ChopstickPairSpec) -> np.ndarray:
    """Unit direction from the lower tip toward the upper tip (defined for
    opening 0 as the limit direction, local +y)."""
    h = 0.5 * config.opening
    return config.orientation.rotate([-math.sin(h), math.cos(h), 0.0])


def _stick_capsule(spec: ChopstickPairSpec, pivot, orientation: UnitQuaternion) -> Capsule:
    center = pivot + orientation.rotate(
        [0.5 * (spec.pivot_to_tip - spec.pivot_to_rear), 0.0, 0.0]
    )
    return Capsule(spec.length / 2.0, spec.radius, RigidTransform(center, orientation * _Z_TO_X))


def stick_capsules(config: ChopstickConfig, spec: ChopstickPairSpec) -> tuple[Capsule, Capsule]:
    """(upper, lower) stick capsules in the world frame."""
    lower = _stick_capsule(spec, config.position, config.orientation)
    upper_orient = config.orientation * UnitQuaternion.from_axis_angle([0, 0, 1], config.opening)
    upper = _stick_capsule(spec, config.position, upper_orient)
    return upper, lower


def stick_states(
    config: ChopstickConfig, spec: ChopstickPairSpec
) -> list[tuple[np.ndarray, UnitQuaternion]]:
    """12-DoF twin-capsule poses [(p_com, orientation) upper, lower]."""
    upper, lower = stick_capsules(config, spec)
    return [
        (upper.frame.position, upper.frame.orientation),
        (lower.frame.position, lower.frame.orientation),
    ]


@dataclass(frozen=True)
class HeldPair:
    """Chopstick pair fixed in the hand-root frame, as gripped from the T-pose.

    `frame` is the pair (lower-stick) frame expressed in the hand-root frame;
    `upper_offset` displaces the upper stick parallel to the lower one while
    the pair rests in the hand.
    """

    spec: ChopstickPairSpec = field(default_factory=ChopstickPairSpec)
    frame: RigidTransform = None  # pair frame in hand-root coordinates
    upper_offset: np.ndarray = None  # in pair-local coordinates
    palm_reference: np.ndarray = field(default_factory=lambda: np.array([0.08, 0.01, 0.0]))
    opening: float = 0.0  # rad, upper stick rotated about its pivot (pair +z)

    def __post_init__(self):
        if self.frame is None:
            object.__setattr__(self, "frame", _default_pair_frame())
        if self.upper_offset is None:
            object.__setattr__(self, "upper_offset", _DEFAULT_UPPER_OFFSET.copy())

    def opened(self, opening: float) -> "HeldPair":
        return replace(self, opening=float(opening))

    def upper_rotation(self) -> UnitQuaternion:
        """Opening rotation of the upper stick about its pivot, pair-local."""
        return UnitQuaternion.from_axis_angle([0, 0, 1], self.opening)

    def stick_capsule(self, stick: int) -> Capsule:
        """Capsule for stick 1 (upper) or 2 (lower), in the hand-root frame."""
        if stick not in (1, 2):
            raise ValueError("stick index must be 1 (upper) or 2 (lower)")
        offset = self.upper_offset if stick == 1 else np.zeros(3)
        pivot = self.frame.apply(offset)
        orientation = self.frame.orientation
        if stick == 1 and self.opening != 0.0:
            orientation = orientation * self.upper_rotation()
        return _stick_capsule(self.spec, pivot, orientation)

    def axis_point(self, stick: int, fraction: float) -> np.ndarray:
        """Point on the stick axis at `fraction` of arclength from the tip
        (0 = tip, 1 = rear), in the hand-root frame."""
        cap = self.stick_capsule(stick)
        rear, tip = cap.endpoints()  # local -z is the rear
        return tip + fraction * (rear - tip)

    def hand_in_pair(self, holding_offset: float = 0.0) -> RigidTransform:
        """Hand-root transform expressed in the pair frame.

        `holding_offset` translates the sticks along their axial (+x)
        direction relative to the hand, within +/-5 cm.
        """
        if abs(holding_offset) > 0.05 + 1e-12:
            raise ValueError("holding offset limited to +/-5 cm")
        t = self.frame.inverse()
        return RigidTransform(t.position - np.array([holding_offset, 0.0, 0.0]), t.orientation)


def _default_pair_frame() -> RigidTransform:
    # Lower stick runs along hand +x under the palm, tips forward.
    sep = np.array([0.0, 0.016, 0.022])
    y = sep / np.linalg.norm(sep)
    x = np.array([1.0, 0.0, 0.0])
    z = np.cross(x, y)
    rot = np.column_stack([x, y, z])
    return RigidTransform(
        np.array([0.03, -0.004, -0.050]), UnitQuaternion.from_matrix(rot)
    )


_DEFAULT_UPPER_OFFSET = np.array([0.0, math.sqrt(0.016**2 + 0.022**2), 0.0])
