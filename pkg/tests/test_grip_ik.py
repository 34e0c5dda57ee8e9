"""Grip IK: contact targets, the penetration barrier and the solver."""

import math

import numpy as np
import pytest

from chopplan.chopsticks import HeldPair
from chopplan.grip_ik import (
    BARRIER_FLOOR,
    BARRIER_THRESHOLD,
    InfeasibleContact,
    _barrier,
    contact_points,
    contact_points_and_normals,
    default_contact_fractions,
    default_held_pair,
    grip_metrics,
    ik_objective,
    solve_grip_ik,
)


def test_default_fractions_shape_and_range(model, standard_style):
    x = default_contact_fractions(standard_style, model)
    assert len(x) == 4
    assert np.all((x >= 0.0) & (x <= 1.0))
    # without a model, the reference-hand constants apply
    x_ref = default_contact_fractions(standard_style)
    assert len(x_ref) == 4


def test_barrier_piecewise_continuity():
    eps = 1e-10
    v_hi, s_hi = _barrier(BARRIER_THRESHOLD - eps)
    assert abs(v_hi) < 1e-6 and abs(s_hi) < 1e-6
    assert _barrier(BARRIER_THRESHOLD) == (0.0, 0.0)
    # continuity across the linear-continuation floor: both branches share the
    # value and slope at the floor, so values at +/-eps differ by ~2*slope*eps
    v_floor, s_floor = _barrier(BARRIER_FLOOR)
    v_above, s_above = _barrier(BARRIER_FLOOR + eps)
    v_below, s_below = _barrier(BARRIER_FLOOR - eps)
    assert abs(v_above - v_below) <= 2.0 * abs(s_floor) * eps * (1.0 + 1e-6) + 1e-12
    assert math.isclose(s_below, s_floor, rel_tol=1e-9)
    assert math.isclose(s_above, s_floor, rel_tol=1e-3)
    # linear continuation keeps pushing outward below the floor
    v_deep, s_deep = _barrier(-0.01)
    assert v_deep > _barrier(BARRIER_FLOOR)[0]
    assert s_deep < 0.0


def test_contact_points_on_stick_surfaces(model, standard_style):
    held = default_held_pair(model)
    x = default_contact_fractions(standard_style, model, held)
    points, normals = contact_points_and_normals(x, standard_style, held)
    assert len(points) == len(normals) == 4
    from chopplan.geometry import capsule_point_distance

    for p, n, stick in zip(points, normals, (1, 1, 1, 2)):
        assert math.isclose(np.linalg.norm(n), 1.0, rel_tol=1e-12)
        d, _ = capsule_point_distance(held.stick_capsule(stick), p)
        assert abs(d) < 1e-9  # targets sit exactly on the surface


def test_contact_points_validation(model, standard_style):
    held = default_held_pair(model)
    with pytest.raises(ValueError):
        contact_points([0.5, 0.5], standard_style, held)  # wrong count
    with pytest.raises(ValueError):
        contact_points([0.5, 0.5, 0.5, 1.5], standard_style, held)  # out of range


def test_solve_standard_grip(standard_grip):
    assert np.all(standard_grip.residuals < 0.001)
    assert standard_grip.max_penetration < 0.001
    assert set(standard_grip.anchors) == {0, 1, 2, 3}


def test_solve_rejects_invalid_style(model):
    with pytest.raises(ValueError):
        solve_grip_ik([0.5, 0.5], (1, 1, 0, 0, 0), model)


def test_holding_offset_recorded(model, standard_style):
    x = default_contact_fractions(standard_style, model)
    pose = solve_grip_ik(x, standard_style, model, holding_offset=0.02)
    assert pose.holding_offset == 0.02
    t0 = pose.held.hand_in_pair(0.0)
    t = pose.hand_in_pair()
    np.testing.assert_allclose(t.position - t0.position, [-0.02, 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        pose.held.hand_in_pair(0.06)


def test_ik_objective_gradient_fd(model, standard_style, rng):
    held = default_held_pair(model)
    x = default_contact_fractions(standard_style, model, held)
    h = 1e-6
    for _ in range(5):
        q = model.clamp(model.default_pose() + rng.uniform(-0.3, 0.3, model.dof_count))
        _, grad = ik_objective(q, x, standard_style, model, held)
        fd = np.zeros_like(grad)
        for k in range(model.dof_count):
            qp, qm = q.copy(), q.copy()
            qp[k] += h
            qm[k] -= h
            fd[k] = (
                ik_objective(qp, x, standard_style, model, held)[0]
                - ik_objective(qm, x, standard_style, model, held)[0]
            ) / (2 * h)
        rel = np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-9)
        assert rel < 1e-4


def test_grip_metrics_of_solution(model, standard_grip, standard_style):
    held = standard_grip.held
    x = default_contact_fractions(standard_style, model, held)
    residuals, penetration = grip_metrics(standard_grip.q, x, standard_style, model, held)
    np.testing.assert_allclose(residuals, standard_grip.residuals, atol=1e-12)
    assert penetration == standard_grip.max_penetration


def test_infeasible_contact_carries_diagnostics():
    e = InfeasibleContact([0.01, 0.002], 0.003)
    assert "0.01" in str(e)
    assert e.penetration == 0.003


def test_held_pair_scaling():
    from chopplan.hand import get_model

    small = default_held_pair(get_model("standard"))
    large = default_held_pair(get_model("large"))
    assert np.linalg.norm(large.frame.position) > np.linalg.norm(small.frame.position)
    assert large.spec == small.spec  # sticks themselves do not scale
