"""Tracking reward values, monotonicity and state-vector assembly."""

import math

import numpy as np
import pytest

from chopplan.chopsticks import ChopstickConfig, ChopstickPairSpec
from chopplan.geometry import RigidTransform, UnitQuaternion
from chopplan.reward import (
    LOOKAHEAD_STEPS,
    BodyState,
    SimFrame,
    assemble_state,
    object_size_vector,
    reward,
    score_trajectory,
)
from chopplan.trajectory import TaskTrajectory, TrajectoryFrame

STYLE = (1, 1, 1, 2, 0)


def identity_frame(nq=7, n_contacts=4, with_obj=True):
    body = BodyState(np.zeros(3), UnitQuaternion.identity())
    return SimFrame(
        q=np.zeros(nq),
        qdot=np.zeros(nq),
        chop=(body, body),
        obj=body if with_obj else None,
        contact_distances=np.zeros(n_contacts),
    )


def test_perfect_tracking_reward_is_exactly_one():
    f = identity_frame()
    assert reward(f, f, STYLE).r == 1.0


def test_hand_error_spot_value():
    ref = identity_frame()
    q = np.zeros(7)
    q[0] = 0.1  # joint-vector error norm 0.1 -> r = e^(-10 * 0.1)
    sim = SimFrame(q=q, qdot=np.zeros(7), chop=ref.chop, obj=ref.obj,
                   contact_distances=np.zeros(4))
    assert abs(reward(sim, ref, STYLE).r - math.exp(-1.0)) < 1e-12


def test_object_error_spot_value():
    ref = identity_frame()
    moved = BodyState(np.array([0.01, 0.0, 0.0]), UnitQuaternion.identity())
    sim = SimFrame(q=np.zeros(7), qdot=np.zeros(7), chop=ref.chop, obj=moved,
                   contact_distances=np.zeros(4))
    # 1 cm object position error -> r = e^(-40 * 0.01)
    assert abs(reward(sim, ref, STYLE).r - math.exp(-0.4)) < 1e-12


def test_object_term_omitted_when_absent():
    ref = identity_frame(with_obj=False)
    moved = BodyState(np.array([0.01, 0.0, 0.0]), UnitQuaternion.identity())
    sim = SimFrame(q=np.zeros(7), qdot=np.zeros(7), chop=ref.chop, obj=moved,
                   contact_distances=np.zeros(4))
    assert reward(sim, ref, STYLE).r == 1.0


def test_contact_gap_term():
    ref = identity_frame()
    sim = SimFrame(q=np.zeros(7), qdot=np.zeros(7), chop=ref.chop, obj=ref.obj,
                   contact_distances=np.array([0.01, 0.0, 0.0, 0.0]))
    assert abs(reward(sim, ref, STYLE).r - math.exp(-0.1)) < 1e-12


def test_reward_monotone_in_errors():
    ref = identity_frame()
    prev = 1.0
    for e in (0.001, 0.01, 0.02, 0.05):
        moved = BodyState(np.array([e, 0.0, 0.0]), UnitQuaternion.identity())
        sim = SimFrame(q=np.zeros(7), qdot=np.zeros(7), chop=(moved, ref.chop[1]),
                       obj=ref.obj, contact_distances=np.zeros(4))
        r = reward(sim, ref, STYLE).r
        assert r < prev
        prev = r


def test_reward_validation():
    ref = identity_frame()
    with pytest.raises(ValueError):
        reward(identity_frame(nq=5), ref, STYLE)  # joint-vector mismatch
    with pytest.raises(ValueError):
        reward(identity_frame(n_contacts=3), ref, STYLE)  # wrong gap count
    with pytest.raises(ValueError):
        SimFrame(q=np.zeros(7), qdot=np.zeros(7), chop=ref.chop,
                 contact_distances=np.array([-0.01]))


def test_score_trajectory_mean_and_corruption():
    f = identity_frame()
    n = 10
    frames = [f] * n
    assert score_trajectory(frames, frames, STYLE) == 1.0
    corrupted = list(frames)
    q = np.zeros(7)
    q[0] = 0.1
    corrupted[4] = SimFrame(q=q, qdot=np.zeros(7), chop=f.chop, obj=f.obj,
                            contact_distances=np.zeros(4))
    rho = math.exp(-1.0)
    expected = (n - 1 + rho) / n
    assert abs(score_trajectory(corrupted, frames, STYLE) - expected) < 1e-12
    with pytest.raises(ValueError):
        score_trajectory(frames, frames[:-1], STYLE)
    with pytest.raises(ValueError):
        score_trajectory([], [], STYLE)


def test_object_size_vector():
    np.testing.assert_array_equal(object_size_vector(None), np.zeros(5))
    from chopplan.grasp import RigidObject

    box = RigidObject("box", RigidTransform.identity(), sides=[0.01, 0.015, 0.02])
    np.testing.assert_allclose(object_size_vector(box), [0, 0, 0.01, 0.015, 0.02])


# ---------------------------------------------------------------------------
# controller state assembly


def make_ref_trajectory(n=40):
    frames = []
    for k in range(n):
        t = k * 0.01
        cfg = ChopstickConfig([0.1 + 0.001 * k, 0.0, 0.1], UnitQuaternion.identity(), 0.1)
        frames.append(
            TrajectoryFrame(
                time=t,
                phase="relocate",
                config=cfg,
                hand_root=RigidTransform([0.05, 0.0, 0.1]),
                arm_q=np.zeros(7),
                object_pose=RigidTransform([0.3, 0.0, 0.1]),
            )
        )
    return TaskTrajectory(frames=tuple(frames), morphology="standard", style=STYLE)


def transported(frame: SimFrame, t: RigidTransform) -> SimFrame:
    def move(b: BodyState) -> BodyState:
        return BodyState(
            t.apply(b.position),
            t.orientation * b.orientation,
            t.orientation.rotate(b.velocity),
            t.orientation.rotate(b.angular_velocity),
        )

    return SimFrame(
        q=frame.q,
        qdot=frame.qdot,
        chop=tuple(move(b) for b in frame.chop),
        obj=None if frame.obj is None else move(frame.obj),
        contact_distances=frame.contact_distances,
        root=t.compose(frame.root),
        f_hand=frame.f_hand,
        f_chop=frame.f_chop,
    )


def random_sim_frame(rng):
    def body():
        v = rng.normal(size=4)
        return BodyState(rng.normal(size=3), UnitQuaternion(*(v / np.linalg.norm(v))),
                         rng.normal(size=3), rng.normal(size=3))

    v = rng.normal(size=4)
    return SimFrame(
        q=rng.normal(size=7),
        qdot=rng.normal(size=7),
        chop=(body(), body()),
        obj=body(),
        contact_distances=np.abs(rng.normal(scale=0.001, size=4)),
        root=RigidTransform(rng.normal(size=3), UnitQuaternion(*(v / np.linalg.norm(v)))),
    )


def test_assemble_state_palm_invariance(rng):
    ref = make_ref_trajectory()
    sim = random_sim_frame(rng)
    base = assemble_state(sim, ref, 0.1)
    for _ in range(20):
        v = rng.normal(size=4)
        t = RigidTransform(rng.normal(size=3), UnitQuaternion(*(v / np.linalg.norm(v))))
        moved = assemble_state(transported(sim, t), ref, 0.1)
        np.testing.assert_allclose(moved, base, atol=1e-9)


def test_assemble_state_dimension_accounting(rng):
    ref = make_ref_trajectory()
    sim = random_sim_frame(rng)
    nq, nc = 7, 4
    expected = (
        2 * nq          # sim joint state
        + 2 * 13        # two stick states, palm-local
        + 13            # object state
        + 5             # object size descriptor
        + nc            # contact gaps
        + nc + 2        # contact-force magnitudes
        + LOOKAHEAD_STEPS * (nq + 15 + 13)  # reference lookahead blocks
    )
    assert assemble_state(sim, ref, 0.1).shape == (expected,)


def test_assemble_state_object_padding(rng):
    ref = make_ref_trajectory()
    sim = random_sim_frame(rng)
    no_obj = SimFrame(q=sim.q, qdot=sim.qdot, chop=sim.chop, obj=None,
                      contact_distances=sim.contact_distances, root=sim.root)
    state = assemble_state(no_obj, ref, 0.1)
    obj_block = state[2 * 7 + 2 * 13 : 2 * 7 + 2 * 13 + 13]
    np.testing.assert_array_equal(obj_block, np.zeros(13))


def test_assemble_state_lookahead_held_past_end(rng):
    ref = make_ref_trajectory(n=5)  # shorter than the 0.3 s lookahead horizon
    sim = random_sim_frame(rng)
    s1 = assemble_state(sim, ref, 1.0)
    s2 = assemble_state(sim, ref, 2.0)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
