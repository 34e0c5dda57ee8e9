"""Rigid-transform, quaternion and capsule primitives plus the clamped log-barrier.

Conventions: quaternions are (w, x, y, z) and canonicalized to w >= 0 on
construction; capsule axes run along the local z of their frame; distances are
in meters and signed distances are negative when penetrating.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UnitQuaternion",
    "RigidTransform",
    "Capsule",
    "quat_angle",
    "slerp",
    "clog",
    "clog_derivative",
    "closest_point_on_segment",
    "closest_points_between_segments",
    "capsule_distance",
    "capsule_point_distance",
    "box_point_distance",
    "segment_box_distance",
]

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class UnitQuaternion:
    """Unit quaternion with the double cover resolved by forcing w >= 0."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n == 0.0:
            raise ValueError("zero quaternion cannot be normalized")
        if abs(n - 1.0) > _NORM_TOL:
            warnings.warn("non-unit quaternion input, normalizing", stacklevel=3)
        if abs(n - 1.0) > 1e-12:
            w, x, y, z = self.w / n, self.x / n, self.y / n, self.z / n
        else:
            # Already unit to machine precision: keep the exact bits so that
            # construction is idempotent and text round trips are bit-exact.
            w, x, y, z = self.w, self.x, self.y, self.z
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def identity() -> "UnitQuaternion":
        return UnitQuaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("zero rotation axis")
        axis = axis / n
        h = 0.5 * angle
        s = math.sin(h)
        return UnitQuaternion(math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s)

    @staticmethod
    def from_matrix(m) -> "UnitQuaternion":
        m = np.asarray(m, dtype=float)
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return UnitQuaternion(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def rotate(self, v) -> np.ndarray:
        return self.to_matrix() @ np.asarray(v, dtype=float)


def quat_angle(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Absolute angle between two orientations, in [0, pi].

    Computed from the relative rotation with atan2, which is accurate near 0
    (and exactly 0 for identical inputs) where acos of the dot product loses
    precision.
    """
    w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
    vx = a.w * b.x - b.w * a.x - (a.y * b.z - a.z * b.y)
    vy = a.w * b.y - b.w * a.y - (a.z * b.x - a.x * b.z)
    vz = a.w * b.z - b.w * a.z - (a.x * b.y - a.y * b.x)
    return 2.0 * math.atan2(math.sqrt(vx * vx + vy * vy + vz * vz), abs(w))


def slerp(a: UnitQuaternion, b: UnitQuaternion, t: float) -> UnitQuaternion:
    """Spherical linear interpolation along the shortest arc."""
    qa = a.as_array()
    qb = b.as_array()
    dot = float(qa @ qb)
    if dot < 0.0:
        qb = -qb
        dot = -dot
    dot = min(dot, 1.0)
    theta = math.acos(dot)
    if theta < 1e-12:
        q = qa + t * (qb - qa)
    else:
        s = math.sin(theta)
        q = (math.sin((1.0 - t) * theta) / s) * qa + (math.sin(t * theta) / s) * qb
    q = q / np.linalg.norm(q)
    return UnitQuaternion(q[0], q[1], q[2], q[3])


@dataclass(frozen=True)
class RigidTransform:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    def apply(self, point) -> np.ndarray:
        return self.position + self.orientation.rotate(point)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self * other: apply `other` first, then `self`."""
        return RigidTransform(
            self.apply(other.position), self.orientation * other.orientation
        )

    def inverse(self) -> "RigidTransform":
        inv = self.orientation.conjugate()
        return RigidTransform(-inv.rotate(self.position), inv)


@dataclass(frozen=True)
class Capsule:
    """Capsule with axis along the local z of `frame`."""

    half_length: float
    radius: float
    frame: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")
        if self.half_length < 0.0:
            raise ValueError("capsule half_length must be nonnegative")

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        axis = self.frame.orientation.rotate([0.0, 0.0, 1.0])
        return (
            self.frame.position - self.half_length * axis,
            self.frame.position + self.half_length * axis,
        )


def clog(z: float, z0: float) -> float:
    """Clamped log-barrier: -((z-z0)^2/z) * ln(z/z0) for 0 < z < z0, else 0.

    C1 at z0; diverges as z -> 0+. Callers clamp their inputs to a small
    positive floor to keep line searches finite.
    """
    if z0 <= 0.0:
        raise ValueError("barrier threshold z0 must be positive")
    if z <= 0.0:
        raise ValueError("barrier argument z must be positive")
    if z >= z0:
        return 0.0
    return -((z - z0) ** 2 / z) * math.log(z / z0)


def clog_derivative(z: float, z0: float) -> float:
    """d/dz of clog(z, z0)."""
    if z0 <= 0.0:
        raise ValueError("barrier threshold z0 must be positive")
    if z <= 0.0:
        raise ValueError("barrier argument z must be positive")
    if z >= z0:
        return 0.0
    d = z - z0
    lg = math.log(z / z0)
    return -(2.0 * d / z - d * d / (z * z)) * lg - d * d / (z * z)


def closest_point_on_segment(p, a, b) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy()
    t = float((p - a) @ ab) / denom
    return a + min(max(t, 0.0), 1.0) * ab


def closest_points_between_segments(p1, q1, p2, q2) -> tuple[np.ndarray, np.ndarray]:
    """Closest points between segments [p1,q1] and [p2,q2] (Ericson 5.1.9)."""
    p1 = np.asarray(p1, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-15
    if a <= eps and e <= eps:
        return p1.copy(), p2.copy()
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            if denom > eps * a * e:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    return p1 + s * d1, p2 + t * d2


def capsule_distance(a: Capsule, b: Capsule) -> tuple[float, np.ndarray, np.ndarray]:
    """Signed surface distance between two capsules with surface witness points.

    Negative values are penetration depths. The witness points lie on the two
    capsule surfaces along the axis-to-axis closest direction.
    """
    a0, a1 = a.endpoints()
    b0, b1 = b.endpoints()
    ca, cb = closest_points_between_segments(a0, a1, b0, b1)
    diff = cb - ca
    d = float(np.linalg.norm(diff))
    if d > 1e-12:
        n = diff / d
    else:
        # Axes touch: pick any direction perpendicular to capsule a's axis.
        axis = a.frame.orientation.rotate([0.0, 0.0, 1.0])
        n = np.cross(axis, [1.0, 0.0, 0.0])
        if np.linalg.norm(n) < 1e-9:
            n = np.cross(axis, [0.0, 1.0, 0.0])
        n = n / np.linalg.norm(n)
    return d - a.radius - b.radius, ca + a.radius * n, cb - b.radius * n


def capsule_point_distance(c: Capsule, point) -> tuple[float, np.ndarray]:
    """Signed distance from a point to a capsule surface, plus the surface point."""
    point = np.asarray(point, dtype=float)
    a0, a1 = c.endpoints()
    axis_pt = closest_point_on_segment(point, a0, a1)
    diff = point - axis_pt
    d = float(np.linalg.norm(diff))
    if d > 1e-12:
        n = diff / d
    else:
        axis = c.frame.orientation.rotate([0.0, 0.0, 1.0])
        n = np.cross(axis, [1.0, 0.0, 0.0])
        if np.linalg.norm(n) < 1e-9:
            n = np.cross(axis, [0.0, 1.0, 0.0])
        n = n / np.linalg.norm(n)
    return d - c.radius, axis_pt + c.radius * n


def box_point_distance(half_extents, frame: RigidTransform, point) -> float:
    """Signed distance from a point to an oriented box."""
    half = np.asarray(half_extents, dtype=float)
    local = frame.inverse().apply(point)
    q = np.abs(local) - half
    outside = np.linalg.norm(np.maximum(q, 0.0))
    inside = min(float(np.max(q)), 0.0)
    return float(outside + inside)


def segment_box_distance(p0, p1, half_extents, frame: RigidTransform) -> float:
    """Minimum signed point-box distance over a segment.

    Outside the box the 1D profile is convex; inside it is resolved by a dense
    scan plus ternary refinement, which is accurate well past the millimeter
    tolerances used by the planner.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)

    def f(t):
        return box_point_distance(half_extents, frame, p0 + t * (p1 - p0))

    ts = np.linspace(0.0, 1.0, 33)
    vals = [f(t) for t in ts]
    k = int(np.argmin(vals))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, len(ts) - 1)]
    for _ in range(60):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return f(0.5 * (lo + hi))
