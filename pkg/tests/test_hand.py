"""Hand morphology loading, forward kinematics and point Jacobians."""

import math

import numpy as np
import pytest

from chopplan.geometry import RigidTransform, UnitQuaternion
from chopplan.hand import (
    PRESET_NAMES,
    HandModel,
    MorphologyError,
    dump_morphology,
    fingertip_capsule,
    forward_kinematics,
    get_model,
    link_capsule,
    load_morphology,
    point_jacobian,
    preset_morphology,
)


def test_presets_load():
    for name in PRESET_NAMES:
        m = get_model(name)
        assert m.name == name
        assert m.dof_count > 0
        assert m.finger_count >= 3
        assert np.all(m.lower_limits <= m.upper_limits)


def test_default_pose_within_limits(model):
    q = model.default_pose()
    assert np.all(q >= model.lower_limits)
    assert np.all(q <= model.upper_limits)
    assert np.array_equal(model.clamp(q), q)


def test_source_preserved(model):
    assert model.source["name"] == "standard"
    assert model.source["format"] == "morphology/1"


def test_fk_root_transform_carries_through(model, rng):
    q = rng.uniform(model.lower_limits, model.upper_limits)
    fk0 = forward_kinematics(model, q)
    root = RigidTransform(
        np.array([0.1, -0.2, 0.3]), UnitQuaternion.from_axis_angle([0, 0, 1], 0.7)
    )
    fk1 = forward_kinematics(model, q, root=root)
    for f0, f1 in zip(fk0.link_frames, fk1.link_frames):
        expected = root.compose(f0)
        np.testing.assert_allclose(f1.position, expected.position, atol=1e-12)


def test_fk_rejects_wrong_length(model):
    with pytest.raises(ValueError):
        forward_kinematics(model, np.zeros(model.dof_count + 1))


def test_point_jacobian_matches_fd(model, rng):
    """The Jacobian of a point rigidly attached to a fingertip link."""
    h = 1e-7
    for _ in range(5):
        q = rng.uniform(
            np.maximum(model.lower_limits, -1.0), np.minimum(model.upper_limits, 1.0)
        )
        fk = forward_kinematics(model, q)
        for finger in range(model.finger_count):
            tip_link = model.fingers[finger].tip_link
            tip_joint = model.links[tip_link].joint
            point = fingertip_capsule(model, fk, finger).endpoints()[1]
            local = fk.link_frames[tip_link].inverse().apply(point)
            jac = point_jacobian(model, fk, tip_joint, point)  # (dof, 3)
            for k in range(model.dof_count):
                qp, qm = q.copy(), q.copy()
                qp[k] += h
                qm[k] -= h
                pp = forward_kinematics(model, qp).link_frames[tip_link].apply(local)
                pm = forward_kinematics(model, qm).link_frames[tip_link].apply(local)
                fd = (pp - pm) / (2 * h)
                np.testing.assert_allclose(jac[k], fd, atol=2e-6)


def test_morphology_file_round_trip(tmp_path, rng):
    doc = preset_morphology("standard")
    path = tmp_path / "hand.yaml"
    dump_morphology(doc, path)
    m1 = get_model("standard")
    m2 = load_morphology(path)
    assert m2.dof_count == m1.dof_count
    assert m2.finger_count == m1.finger_count
    q = rng.uniform(m1.lower_limits, m1.upper_limits)
    f1 = forward_kinematics(m1, q)
    f2 = forward_kinematics(m2, q)
    for a, b in zip(f1.link_frames, f2.link_frames):
        np.testing.assert_allclose(a.position, b.position, atol=1e-12)


def test_get_model_resolves_path(tmp_path):
    path = tmp_path / "hand.yaml"
    dump_morphology(preset_morphology("tri_finger"), path)
    assert get_model(str(path)).name == "tri_finger"


def test_morphology_errors():
    with pytest.raises(MorphologyError):
        HandModel.from_dict({"format": "morphology/0"})
    base = preset_morphology("standard")

    bad = preset_morphology("standard")
    bad["joints"].append(dict(bad["joints"][1]))
    with pytest.raises(MorphologyError, match="duplicate"):
        HandModel.from_dict(bad)

    bad = preset_morphology("standard")
    bad["fingers"] = []
    with pytest.raises(MorphologyError, match="finger"):
        HandModel.from_dict(bad)

    bad = preset_morphology("standard")
    del bad["arm"]
    with pytest.raises(MorphologyError, match="arm"):
        HandModel.from_dict(bad)

    assert HandModel.from_dict(base).dof_count > 0  # baseline still loads


def test_get_model_unknown_preset():
    with pytest.raises(OSError):
        get_model("no_such_hand_model")


def test_link_capsules_positive(model):
    fk = forward_kinematics(model, model.default_pose())
    for i in range(len(model.links)):
        cap = link_capsule(model, fk, i)
        assert cap.radius > 0


def test_scaled_presets_differ():
    std = get_model("standard")
    large = get_model("large")
    q = np.zeros(std.dof_count)
    tip_std = fingertip_capsule(std, forward_kinematics(std, q), 1).endpoints()[1]
    tip_large = fingertip_capsule(large, forward_kinematics(large, q), 1).endpoints()[1]
    assert np.linalg.norm(tip_large) > np.linalg.norm(tip_std) * 1.5
