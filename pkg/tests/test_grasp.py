"""Grasp selection: surface geometry, quality metric, grid, PSO and ranking."""

import math

import numpy as np
import pytest

from chopplan.chopsticks import ChopstickPairSpec, tip_line_direction, tip_midpoint, tip_separation
from chopplan.geometry import RigidTransform, UnitQuaternion, quat_angle
from chopplan.grasp import (
    GraspCandidate,
    ObjectTooWide,
    RigidObject,
    complete_config,
    continuity_score,
    discretize_orientations,
    grasp_quality,
    grasp_width,
    grid_shape,
    pso_refine,
    rank_grasps,
    reachability,
    surface_exit,
)


def random_quat(rng):
    v = rng.normal(size=4)
    return UnitQuaternion(*(v / np.linalg.norm(v)))


def _inside(obj, p_world):
    """Membership oracle used by the bisection ray-march."""
    p = obj.pose.orientation.conjugate().rotate(p_world - obj.pose.position)
    if obj.shape == "sphere":
        return np.linalg.norm(p) <= obj.radius
    if obj.shape == "capsule":
        h = obj.length / 2.0
        z = min(max(p[2], -h), h)
        return np.linalg.norm(p - np.array([0, 0, z])) <= obj.radius
    return bool(np.all(np.abs(p) <= obj.sides / 2.0))


def _ray_march_exit(obj, direction, hi=1.0, iters=60):
    """Independent exit distance along a ray from the CoM, by bisection."""
    d = np.asarray(direction, dtype=float)
    lo = 0.0
    assert not _inside(obj, obj.com + hi * d)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _inside(obj, obj.com + mid * d):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _random_object(shape, rng):
    pose = RigidTransform(rng.normal(scale=0.05, size=3), random_quat(rng))
    if shape == "sphere":
        return RigidObject("sphere", pose, radius=float(rng.uniform(0.005, 0.01)))
    if shape == "capsule":
        return RigidObject(
            "capsule",
            pose,
            radius=float(rng.uniform(0.005, 0.01)),
            length=float(rng.uniform(0.02, 0.04)),
        )
    return RigidObject("box", pose, sides=rng.uniform(0.01, 0.02, size=3))


@pytest.mark.parametrize("shape", ["sphere", "capsule", "box"])
def test_surface_exit_against_ray_march(shape, rng):
    for _ in range(30):
        obj = _random_object(shape, rng)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        t, n = surface_exit(obj, d)
        assert math.isclose(t, _ray_march_exit(obj, d), abs_tol=1e-9)
        assert math.isclose(np.linalg.norm(n), 1.0, rel_tol=1e-9)
        # outward normal points away from the interior
        assert not _inside(obj, obj.com + t * d + 1e-6 * n)


def test_grasp_width_known_values(rng):
    sphere = RigidObject("sphere", RigidTransform.identity(), radius=0.007)
    for _ in range(10):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        assert math.isclose(grasp_width(sphere, d), 0.014, abs_tol=1e-12)
    box = RigidObject("box", RigidTransform.identity(), sides=[0.01, 0.015, 0.02])
    assert math.isclose(grasp_width(box, [1, 0, 0]), 0.01, abs_tol=1e-12)
    assert math.isclose(grasp_width(box, [0, 0, 1]), 0.02, abs_tol=1e-12)
    cap = RigidObject("capsule", RigidTransform.identity(), radius=0.006, length=0.03)
    assert math.isclose(grasp_width(cap, [1, 0, 0]), 0.012, abs_tol=1e-12)
    assert math.isclose(grasp_width(cap, [0, 0, 1]), 0.03 + 0.012, abs_tol=1e-12)


def test_grid_shape_and_discretization():
    assert grid_shape(2000) == (20, 10, 10)
    grid = discretize_orientations(200)
    assert len(grid) == 200
    assert quat_angle(grid[0], UnitQuaternion.identity()) < 1e-12
    # all entries distinct rotations
    sample = grid[::10]
    for i, a in enumerate(sample):
        for b in sample[i + 1 :]:
            assert quat_angle(a, b) > 1e-6
    with pytest.raises(ValueError):
        discretize_orientations(0)


def test_complete_config_invariants(rng):
    spec = ChopstickPairSpec()
    for shape in ("sphere", "capsule", "box"):
        obj = _random_object(shape, rng)
        cfg = complete_config(random_quat(rng), obj, spec)
        # tip-line midpoint on the center of mass
        np.testing.assert_allclose(tip_midpoint(cfg, spec), obj.com, atol=1e-9)
        # tip separation equals half the object's width along the tip line
        d_hat = tip_line_direction(cfg, spec)
        width = grasp_width(obj, d_hat)
        assert math.isclose(tip_separation(spec, cfg.opening), width / 2.0, abs_tol=1e-9)


def test_object_too_wide():
    big = RigidObject("sphere", RigidTransform.identity(), radius=0.2)
    with pytest.raises(ObjectTooWide):
        complete_config(UnitQuaternion.identity(), big, ChopstickPairSpec())


def test_sphere_quality_is_perfect_for_any_orientation(rng):
    obj = RigidObject("sphere", RigidTransform(rng.normal(scale=0.05, size=3)), radius=0.008)
    spec = ChopstickPairSpec()
    for _ in range(10):
        cfg = complete_config(random_quat(rng), obj, spec)
        q = grasp_quality(cfg, obj, spec)
        assert 0.999 <= q <= 1.0


def test_quality_penalizes_midpoint_offset(rng):
    obj = RigidObject("sphere", RigidTransform.identity(), radius=0.008)
    spec = ChopstickPairSpec()
    cfg = complete_config(UnitQuaternion.identity(), obj, spec)
    base = grasp_quality(cfg, obj, spec)
    from chopplan.chopsticks import ChopstickConfig

    shifted = ChopstickConfig(cfg.position + [0.005, 0, 0], cfg.orientation, cfg.opening)
    assert grasp_quality(shifted, obj, spec) < base
    # a 1 cm midpoint offset costs a factor e^-1
    shifted1cm = ChopstickConfig(cfg.position + [0.01, 0, 0], cfg.orientation, cfg.opening)
    assert math.isclose(grasp_quality(shifted1cm, obj, spec), base * math.exp(-1.0), rel_tol=1e-6)


def test_pso_matches_exhaustive_grid(rng):
    spec = ChopstickPairSpec()
    obj = _random_object("box", rng)
    refined = pso_refine(obj, spec, seed=3)
    assert refined
    best_pso = grasp_quality(refined[0], obj, spec)
    grid_best = 0.0
    for o in discretize_orientations(2000):
        try:
            grid_best = max(grid_best, grasp_quality(complete_config(o, obj, spec), obj, spec))
        except ObjectTooWide:
            continue
    assert best_pso >= 0.98 * grid_best
    # qualities are sorted descending
    qs = [grasp_quality(c, obj, spec) for c in refined]
    assert qs == sorted(qs, reverse=True)


def test_continuity_score():
    q = UnitQuaternion.identity()
    assert continuity_score(q, q) == 1.0
    tilted = UnitQuaternion.from_axis_angle([0, 0, 1], 0.2)
    assert math.isclose(continuity_score(tilted, q), math.exp(-5 * 0.2), rel_tol=1e-9)


def test_rank_grasps_returns_reachable_best(model, standard_grip, rng):
    obj = RigidObject("sphere", RigidTransform([0.0, 0.0, 0.05]), radius=0.008)
    best, shortlist = rank_grasps(
        obj, standard_grip, model, seed=0, n_keep=5, grid_size=100
    )
    assert best.reachable == 1.0
    assert best.total > 0.0
    assert best.arm is not None
    assert len(shortlist) == 5
    totals = [c.total for c in shortlist]
    assert totals == sorted(totals, reverse=True)
    assert best.total == totals[0]
    ok, sol = reachability(best.config, standard_grip, model)
    assert ok and sol.within_limits(model.arm)


def test_rank_grasps_continuity_weighting(model, standard_grip):
    obj = RigidObject("sphere", RigidTransform([0.0, 0.0, 0.05]), radius=0.008)
    current = complete_config(UnitQuaternion.identity(), obj)
    best, shortlist = rank_grasps(
        obj, standard_grip, model, current=current, seed=0, n_keep=5, grid_size=100
    )
    assert all(0.0 < c.continuity <= 1.0 for c in shortlist)


def test_candidate_total_is_product():
    from chopplan.chopsticks import ChopstickConfig

    cand = GraspCandidate(
        config=ChopstickConfig(np.zeros(3), UnitQuaternion.identity(), 0.1),
        quality=0.8,
        reachable=1.0,
        continuity=0.5,
    )
    assert cand.total == 0.8 * 0.5
