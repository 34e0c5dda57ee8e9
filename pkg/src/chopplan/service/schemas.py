"""Wire models for the planning service and converters to core types."""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, Field

from ..chopsticks import ChopstickConfig, ChopstickPairSpec, HeldPair
from ..geometry import RigidTransform, UnitQuaternion
from ..grasp import GraspCandidate, RigidObject
from ..grip_ik import GripPose

Vec3 = list[float]
Quat = list[float]  # w, x, y, z


class PoseModel(BaseModel):
    position: Vec3 = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)
    orientation: Quat = Field(default=[1.0, 0.0, 0.0, 0.0], min_length=4, max_length=4)

    @classmethod
    def from_core(cls, t: RigidTransform) -> "PoseModel":
        o = t.orientation
        return cls(position=[*map(float, t.position)], orientation=[o.w, o.x, o.y, o.z])

    def to_core(self) -> RigidTransform:
        return RigidTransform(np.array(self.position), UnitQuaternion(*self.orientation))


class ConfigModel(BaseModel):
    """7-DoF chopstick-pair configuration."""

    position: Vec3 = Field(min_length=3, max_length=3)
    orientation: Quat = Field(default=[1.0, 0.0, 0.0, 0.0], min_length=4, max_length=4)
    opening: float = 0.0

    @classmethod
    def from_core(cls, c: ChopstickConfig) -> "ConfigModel":
        o = c.orientation
        return cls(
            position=[*map(float, c.position)],
            orientation=[o.w, o.x, o.y, o.z],
            opening=c.opening,
        )

    def to_core(self) -> ChopstickConfig:
        return ChopstickConfig(
            np.array(self.position), UnitQuaternion(*self.orientation), self.opening
        )


class PairSpecModel(BaseModel):
    length: float = 0.26
    radius: float = 0.004
    pivot_to_tip: float = 0.20
    max_opening: float = 0.6

    @classmethod
    def from_core(cls, s: ChopstickPairSpec) -> "PairSpecModel":
        return cls(
            length=s.length,
            radius=s.radius,
            pivot_to_tip=s.pivot_to_tip,
            max_opening=s.max_opening,
        )

    def to_core(self) -> ChopstickPairSpec:
        return ChopstickPairSpec(
            length=self.length,
            radius=self.radius,
            pivot_to_tip=self.pivot_to_tip,
            max_opening=self.max_opening,
        )


class HeldPairModel(BaseModel):
    spec: PairSpecModel = PairSpecModel()
    frame: PoseModel
    upper_offset: Vec3 = Field(min_length=3, max_length=3)
    palm_reference: Vec3 = Field(min_length=3, max_length=3)

    @classmethod
    def from_core(cls, h: HeldPair) -> "HeldPairModel":
        return cls(
            spec=PairSpecModel.from_core(h.spec),
            frame=PoseModel.from_core(h.frame),
            upper_offset=[*map(float, h.upper_offset)],
            palm_reference=[*map(float, h.palm_reference)],
        )

    def to_core(self) -> HeldPair:
        return HeldPair(
            spec=self.spec.to_core(),
            frame=self.frame.to_core(),
            upper_offset=np.array(self.upper_offset),
            palm_reference=np.array(self.palm_reference),
        )


class GripPoseModel(BaseModel):
    style: str
    q: list[float]
    anchors: dict[int, Vec3]
    holding_offset: float = 0.0
    residuals: list[float]
    max_penetration: float
    held: HeldPairModel

    @classmethod
    def from_core(cls, p: GripPose) -> "GripPoseModel":
        return cls(
            style=",".join(str(c) for c in p.style),
            q=[*map(float, p.q)],
            anchors={k: [*map(float, v)] for k, v in p.anchors.items()},
            holding_offset=p.holding_offset,
            residuals=[*map(float, p.residuals)],
            max_penetration=p.max_penetration,
            held=HeldPairModel.from_core(p.held),
        )

    def to_core(self) -> GripPose:
        return GripPose(
            q=np.array(self.q),
            style=tuple(int(c) for c in self.style.split(",")),
            anchors={k: np.array(v) for k, v in self.anchors.items()},
            holding_offset=self.holding_offset,
            residuals=np.array(self.residuals),
            max_penetration=self.max_penetration,
            held=self.held.to_core(),
        )


class ObjectModel(BaseModel):
    shape: str
    pose: PoseModel = PoseModel()
    radius: float = 0.0
    length: float = 0.0
    sides: Vec3 | None = None

    @classmethod
    def from_core(cls, o: RigidObject) -> "ObjectModel":
        return cls(
            shape=o.shape,
            pose=PoseModel.from_core(o.pose),
            radius=o.radius,
            length=o.length,
            sides=None if o.sides is None else [*map(float, o.sides)],
        )

    def to_core(self) -> RigidObject:
        return RigidObject(
            shape=self.shape,
            pose=self.pose.to_core(),
            radius=self.radius,
            length=self.length,
            sides=self.sides,
        )


class StyleInfo(BaseModel):
    code: str
    fingers: list[int]
    name: str | None = None


class StylesResponse(BaseModel):
    count: int
    styles: list[StyleInfo]


class GripIKRequest(BaseModel):
    style: str
    hand: str = "standard"
    fractions: list[float] | None = None
    holding_offset: float = 0.0
    pair: PairSpecModel | None = None


class GripIKResponse(BaseModel):
    pose: GripPoseModel
    max_residual: float
    max_penetration: float


class GripOptimizeRequest(BaseModel):
    style: str
    hand: str = "standard"
    max_iter: int = 10
    seed: int = 0


class IterationRecord(BaseModel):
    iteration: int
    proposal: list[float]
    score: float


class GripOptimizeResponse(BaseModel):
    pose: GripPoseModel
    score: float
    baseline_score: float
    history: list[IterationRecord]


class GraspRankRequest(BaseModel):
    object: ObjectModel
    style: str
    hand: str = "standard"
    seed: int = 0
    current: ConfigModel | None = None
    n_keep: int = 10
    pair: PairSpecModel | None = None


class GraspCandidateModel(BaseModel):
    config: ConfigModel
    quality: float
    reachable: float
    continuity: float
    total: float

    @classmethod
    def from_core(cls, c: GraspCandidate) -> "GraspCandidateModel":
        return cls(
            config=ConfigModel.from_core(c.config),
            quality=c.quality,
            reachable=c.reachable,
            continuity=c.continuity,
            total=c.total,
        )


class GraspRankResponse(BaseModel):
    best: GraspCandidateModel
    candidates: list[GraspCandidateModel]


class PlanRequest(BaseModel):
    scene: dict
    task: dict
    style: str = "1,1,1,2,0"
    hand: str = "standard"
    seed: int = 0


class ObjectResultModel(BaseModel):
    object_id: str
    mode: str
    status: str
    error: str | None = None
    grasp_quality: float = 0.0
    grasp_total: float = 0.0
    score: float = 0.0
    frames: int = 0
    duration: float = 0.0
    trajectory_file: str | None = None


class PlanResponse(BaseModel):
    ok: bool
    report: str
    results: list[ObjectResultModel]
    files: dict[str, str]  # file name -> trajectory text


class ThrowPlanRequest(BaseModel):
    target: Vec3 = Field(min_length=3, max_length=3)
    start: ConfigModel | None = None
    flight_time: float = 0.3
    release_height: float = 0.3
    table_height: float = 0.0
    speed_cap: float = 5.0
    region_center: Vec3 = Field(default=[0.05, 0.0, 0.125], min_length=3, max_length=3)
    region_size: Vec3 = Field(default=[0.5, 0.5, 0.25], min_length=3, max_length=3)


class ThrowPlanResponse(BaseModel):
    release: ConfigModel
    velocity: Vec3
    landing: Vec3
    landing_error: float


class ScoreRequest(BaseModel):
    sim: str  # trajectory file text
    ref: str


class ScoreResponse(BaseModel):
    score: float
    frames: int
    r_hand: float = 0.0
    r_chop: float = 0.0
    r_obj: float = 0.0
    r_contact: float = 0.0


class ValidateRequest(BaseModel):
    scene: dict
    task: dict | None = None


class DiagnosticModel(BaseModel):
    level: str
    message: str


class ValidateResponse(BaseModel):
    ok: bool
    diagnostics: list[DiagnosticModel]
