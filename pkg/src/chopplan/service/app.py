"""FastAPI application exposing grip, grasp, trajectory and pipeline planning."""

from __future__ import annotations

import os
import tempfile

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import fileio
from ..arm_ik import Unreachable
from ..grasp import NoReachableGrasp, ObjectTooWide, rank_grasps
from ..grip_bo import (
    NoFeasibleGrip,
    evaluate_grip_kinematic,
    optimize_grip,
    tpose_baseline_pose,
)
from ..grip_ik import InfeasibleContact, default_contact_fractions, solve_grip_ik
from ..hand import MorphologyError, get_model
from ..pipeline import (
    Diagnostic,
    SceneError,
    parse_scene,
    parse_task,
    run_pipeline,
    trajectory_sim_frames,
    validate_scene,
)
from ..reward import reward, score_trajectory
from ..styles import STYLE_NAMES, enumerate_valid_styles, parse_style
from ..trajectory import (
    Cuboid,
    PlanningFailure,
    ThrowInfeasible,
    plan_throw,
    projectile_position,
)
from .schemas import (
    ConfigModel,
    DiagnosticModel,
    GraspCandidateModel,
    GraspRankRequest,
    GraspRankResponse,
    GripIKRequest,
    GripIKResponse,
    GripOptimizeRequest,
    GripOptimizeResponse,
    GripPoseModel,
    IterationRecord,
    ObjectResultModel,
    PlanRequest,
    PlanResponse,
    ScoreRequest,
    ScoreResponse,
    StyleInfo,
    StylesResponse,
    ThrowPlanRequest,
    ThrowPlanResponse,
    ValidateRequest,
    ValidateResponse,
)

_DOMAIN_ERRORS = (
    ValueError,
    SceneError,
    MorphologyError,
    InfeasibleContact,
    NoFeasibleGrip,
    NoReachableGrasp,
    ObjectTooWide,
    PlanningFailure,
    ThrowInfeasible,
    Unreachable,
    fileio.FileFormatError,
)


def _model(name: str):
    try:
        return get_model(name)
    except (OSError, MorphologyError) as e:
        raise HTTPException(status_code=422, detail=f"hand model {name!r}: {e}") from e


def create_app() -> FastAPI:
    app = FastAPI(title="chopplan", version="0.1.0")

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HTTPException:
            raise
        except _DOMAIN_ERRORS as e:
            raise HTTPException(
                status_code=422, detail=f"{type(e).__name__}: {e}"
            ) from e

    @app.get("/styles", response_model=StylesResponse)
    def styles() -> StylesResponse:
        out = []
        for s in enumerate_valid_styles():
            out.append(
                StyleInfo(
                    code=",".join(str(c) for c in s),
                    fingers=list(s),
                    name=STYLE_NAMES.get(s),
                )
            )
        return StylesResponse(count=len(out), styles=out)

    @app.post("/grip/ik", response_model=GripIKResponse)
    def grip_ik(req: GripIKRequest) -> GripIKResponse:
        def run():
            style = parse_style(req.style)
            model = _model(req.hand)
            x = (
                np.array(req.fractions)
                if req.fractions is not None
                else default_contact_fractions(style, model)
            )
            pose = solve_grip_ik(
                x, style, model, holding_offset=req.holding_offset
            )
            return GripIKResponse(
                pose=GripPoseModel.from_core(pose),
                max_residual=float(np.max(pose.residuals)),
                max_penetration=pose.max_penetration,
            )

        return guard(run)

    @app.post("/grip/optimize", response_model=GripOptimizeResponse)
    def grip_optimize(req: GripOptimizeRequest) -> GripOptimizeResponse:
        def run():
            style = parse_style(req.style)
            model = _model(req.hand)
            result = optimize_grip(style, model, max_iter=req.max_iter, seed=req.seed)
            baseline = evaluate_grip_kinematic(tpose_baseline_pose(style, model), model)
            return GripOptimizeResponse(
                pose=GripPoseModel.from_core(result.pose),
                score=result.score,
                baseline_score=baseline,
                history=[
                    IterationRecord(iteration=i + 1, proposal=list(x), score=y)
                    for i, (x, y) in enumerate(result.history)
                ],
            )

        return guard(run)

    @app.post("/grasp/rank", response_model=GraspRankResponse)
    def grasp_rank(req: GraspRankRequest) -> GraspRankResponse:
        def run():
            style = parse_style(req.style)
            model = _model(req.hand)
            grip = solve_grip_ik(default_contact_fractions(style, model), style, model)
            best, cands = rank_grasps(
                req.object.to_core(),
                grip,
                model,
                current=None if req.current is None else req.current.to_core(),
                spec=None if req.pair is None else req.pair.to_core(),
                seed=req.seed,
                n_keep=req.n_keep,
            )
            return GraspRankResponse(
                best=GraspCandidateModel.from_core(best),
                candidates=[GraspCandidateModel.from_core(c) for c in cands],
            )

        return guard(run)

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        def run():
            scene = parse_scene(req.scene)
            task = parse_task(req.task)
            style = parse_style(req.style)
            model = _model(req.hand)
            with tempfile.TemporaryDirectory() as tmp:
                result = run_pipeline(
                    scene, task, model, style=style, seed=req.seed, out_dir=tmp
                )
                files = {}
                for r in result.results:
                    if r.trajectory_file:
                        with open(os.path.join(tmp, r.trajectory_file)) as fh:
                            files[r.trajectory_file] = fh.read()
                with open(result.report_path) as fh:
                    report = fh.read()
            return PlanResponse(
                ok=result.ok,
                report=report,
                results=[
                    ObjectResultModel(
                        object_id=r.object_id,
                        mode=r.mode,
                        status=r.status,
                        error=r.error,
                        grasp_quality=r.grasp_quality,
                        grasp_total=r.grasp_total,
                        score=r.score,
                        frames=r.frames,
                        duration=r.duration,
                        trajectory_file=r.trajectory_file,
                    )
                    for r in result.results
                ],
                files=files,
            )

        return guard(run)

    @app.post("/throw-plan", response_model=ThrowPlanResponse)
    def throw_plan(req: ThrowPlanRequest) -> ThrowPlanResponse:
        def run():
            region = Cuboid(center=req.region_center, size=req.region_size)
            start = (
                req.start.to_core()
                if req.start is not None
                else ConfigModel(position=[0.0, 0.0, 0.15]).to_core()
            )
            throw = plan_throw(
                region,
                req.target,
                start,
                flight_time=req.flight_time,
                release_height=req.release_height,
                table_height=req.table_height,
                speed_cap=req.speed_cap,
            )
            landing = projectile_position(
                throw.release_config.position, throw.velocity, req.flight_time
            )
            return ThrowPlanResponse(
                release=ConfigModel.from_core(throw.release_config),
                velocity=[*map(float, throw.velocity)],
                landing=[*map(float, landing)],
                landing_error=float(np.linalg.norm(landing - np.array(req.target))),
            )

        return guard(run)

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        def run():
            trajs = []
            with tempfile.TemporaryDirectory() as tmp:
                for name, text in (("sim", req.sim), ("ref", req.ref)):
                    path = os.path.join(tmp, name)
                    with open(path, "w") as fh:
                        fh.write(text)
                    trajs.append(fileio.read_trajectory(path))
            sim, ref = trajs
            sim_frames = trajectory_sim_frames(sim)
            ref_frames = trajectory_sim_frames(ref)
            value = score_trajectory(sim_frames, ref_frames, sim.style)
            parts = [reward(s, r, sim.style) for s, r in zip(sim_frames, ref_frames)]
            mean = lambda xs: float(np.mean(xs))  # noqa: E731
            return ScoreResponse(
                score=value,
                frames=len(sim.frames),
                r_hand=mean([p.r_hand for p in parts]),
                r_chop=mean([p.r_chop for p in parts]),
                r_obj=mean([p.r_obj for p in parts]),
                r_contact=mean([p.r_contact for p in parts]),
            )

        return guard(run)

    @app.post("/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        def run():
            scene = parse_scene(req.scene)
            diags = validate_scene(scene)
            if req.task is not None:
                task = parse_task(req.task)
                known = {oid for oid, _ in scene.objects}
                for item in task.items:
                    if item.object_id not in known:
                        diags.append(
                            Diagnostic(
                                "error",
                                f"task references unknown object {item.object_id!r}",
                            )
                        )
            return ValidateResponse(
                ok=not any(d.level == "error" for d in diags),
                diagnostics=[
                    DiagnosticModel(level=d.level, message=d.message) for d in diags
                ],
            )

        return guard(run)

    return app


app = create_app()
