"""Bayesian optimization of gripping poses with a GP-UCB acquisition.

The search space is the vector of per-finger contact fractions along the
sticks. Each proposal is realized by the grip IK solver and scored by a
pluggable evaluator; the default evaluator deterministically tracks a short
open-close maneuver sequence and averages the tracking reward, so a physics
or learning-based evaluator can be substituted later without touching the
optimization loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .chopsticks import HeldPair
from .geometry import closest_point_on_segment
from .grip_ik import (
    GripPose,
    InfeasibleContact,
    _objective_from_targets,
    default_contact_fractions,
    default_held_pair,
    grip_metrics,
    solve_grip_ik,
)
from .hand import HandModel, fingertip_capsule, forward_kinematics
from .reward import CONTACT_WEIGHT, HAND_WEIGHT
from .styles import contacting_fingers, is_valid_style

DEFAULT_NOISE = 1e-6
DEFAULT_SIGNAL = 1.0
DEFAULT_LENGTHSCALE = 0.25
DIVERGENCE_GAP = 0.05  # m, contact residual declaring the tracker diverged


class NoFeasibleGrip(RuntimeError):
    """Every contact proposal failed grip IK."""


class GaussianSurrogate:
    """Gaussian-process regressor with a squared-exponential ARD kernel and a
    zero prior mean, refit from scratch on every observation update."""

    def __init__(
        self,
        dim: int,
        lengthscales=None,
        signal_variance: float = DEFAULT_SIGNAL,
        noise_variance: float = DEFAULT_NOISE,
    ):
        self.dim = dim
        if lengthscales is None:
            lengthscales = np.full(dim, DEFAULT_LENGTHSCALE)
        self.lengthscales = np.asarray(lengthscales, dtype=float).reshape(dim)
        self.signal_variance = float(signal_variance)
        self.noise_variance = float(noise_variance)
        self.x = np.zeros((0, dim))
        self.y = np.zeros(0)
        self._chol = None
        self._alpha = None

    @property
    def count(self) -> int:
        return len(self.y)

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        da = a[:, None, :] / self.lengthscales
        db = b[None, :, :] / self.lengthscales
        sq = np.sum((da - db) ** 2, axis=-1)
        return self.signal_variance * np.exp(-0.5 * sq)

    def add(self, x, y: float) -> None:
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        self.x = np.vstack([self.x, x])
        self.y = np.append(self.y, float(y))
        k = self._kernel(self.x, self.x)
        k[np.diag_indices_from(k)] += self.noise_variance + 1e-12
        self._chol = np.linalg.cholesky(k)
        self._alpha = np.linalg.solve(
            self._chol.T, np.linalg.solve(self._chol, self.y)
        )

    def predict(self, x) -> tuple[float, float]:
        """Posterior mean and standard deviation at one point."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        if self.count == 0:
            return 0.0, math.sqrt(self.signal_variance)
        ks = self._kernel(self.x, x)[:, 0]
        mu = float(ks @ self._alpha)
        v = np.linalg.solve(self._chol, ks)
        var = self.signal_variance - float(v @ v)
        return mu, math.sqrt(max(var, 0.0))


def ucb_beta(t: int) -> float:
    """Confidence scaling for iteration t >= 1 (grows logarithmically).

    Deliberately far below the regret-bound schedule: with evaluation budgets
    of ~10 the theoretical scaling makes the standard-deviation term dominate
    the posterior mean everywhere, degenerating into space-filling search.
    """
    return 0.5 + 0.1 * math.log(t)


def ucb_acquisition(surrogate: GaussianSurrogate, candidate, beta: float) -> float:
    mu, sigma = surrogate.predict(candidate)
    return mu + math.sqrt(max(beta, 0.0)) * sigma


@dataclass(frozen=True)
class ManeuverSpec:
    """Open-close evaluation maneuvers: contiguous fixed-length segments, each
    with a pointing direction; the opening follows one full raised-cosine
    cycle per segment, so it starts and ends closed."""

    directions: tuple = (
        (1.0, 0.0, 0.0),
        (math.cos(math.pi / 6), math.sin(math.pi / 6), 0.0),
        (math.cos(math.pi / 6), 0.0, -math.sin(math.pi / 6)),
    )
    segment_duration: float = 1.0
    phi_max: float = 0.15  # rad

    @property
    def total_duration(self) -> float:
        return self.segment_duration * len(self.directions)

    def opening(self, t: float) -> float:
        """Opening angle at time t within the maneuver sequence."""
        if not 0.0 <= t <= self.total_duration + 1e-12:
            raise ValueError("time outside the maneuver span")
        tau = (t % self.segment_duration) / self.segment_duration
        return self.phi_max * (1.0 - math.cos(2.0 * math.pi * tau)) / 2.0


def _opened_targets(pose: GripPose, held: HeldPair) -> list[np.ndarray]:
    """Anchor contact points in the hand frame for the given opened pair."""
    rot = held.upper_rotation()
    targets = []
    for finger, stick in contacting_fingers(pose.style):
        p = pose.anchors[finger]
        if stick == 1:
            p = held.upper_offset + rot.rotate(p - held.upper_offset)
        targets.append(held.frame.apply(p))
    return targets


def evaluate_grip_kinematic(
    pose: GripPose,
    model: HandModel,
    maneuvers: ManeuverSpec | None = None,
    dt: float = 0.01,
    ik_iterations: int = 12,
) -> float:
    """Average tracking reward of deterministically executing the maneuvers.

    Per 10 ms step: the sticks move kinematically with the commanded opening
    (so their own tracking term is exactly zero), the hand re-solves
    contact-maintenance IK warm-started from the previous frame, and the frame
    reward combines the joint-space deviation from the gripping pose with the
    fingertip contact gaps. If the IK loses the contacts the remaining steps
    score zero. The evaluation is fully deterministic.
    """
    if maneuvers is None:
        maneuvers = ManeuverSpec()
    q_ref = np.asarray(pose.q, dtype=float)
    q = q_ref.copy()
    bounds = list(zip(model.lower_limits, model.upper_limits))
    n = int(round(maneuvers.total_duration / dt)) + 1
    total = 0.0
    diverged = False
    for k in range(n):
        if diverged:
            continue  # remaining steps contribute zero
        t = min(k * dt, maneuvers.total_duration)
        held = pose.held.opened(maneuvers.opening(t))
        targets = _opened_targets(pose, held)
        res = minimize(
            _objective_from_targets,
            q,
            args=(targets, pose.style, model, held),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": ik_iterations, "ftol": 1e-14, "gtol": 1e-10},
        )
        q = res.x
        gaps = _contact_gaps(q, targets, pose.style, model)
        if np.any(gaps > DIVERGENCE_GAP):
            diverged = True
            continue
        r = math.exp(
            -HAND_WEIGHT * float(np.linalg.norm(q - q_ref))
            - CONTACT_WEIGHT * float(np.sum(gaps))
        )
        total += r
    return total / n


def _contact_gaps(q, targets, style, model) -> np.ndarray:
    fk = forward_kinematics(model, q)
    gaps = []
    for target, (finger, _) in zip(targets, contacting_fingers(style)):
        cap = fingertip_capsule(model, fk, finger)
        a0, a1 = cap.endpoints()
        c = closest_point_on_segment(target, a0, a1)
        gaps.append(abs(float(np.linalg.norm(c - target)) - cap.radius))
    return np.array(gaps)


def tpose_baseline_pose(style, model: HandModel, held: HeldPair | None = None) -> GripPose:
    """The unoptimized baseline: default joint angles with the default contact
    proposal, regardless of whether the contacts are realized."""
    if held is None:
        held = default_held_pair(model)
    x = default_contact_fractions(style, model, held)
    from .grip_ik import contact_points  # local import to avoid cycle noise

    targets = contact_points(x, style, held)
    q = model.default_pose()
    residuals, penetration = grip_metrics(q, x, style, model, held)
    pair_inv = held.frame.inverse()
    anchors = {
        finger: pair_inv.apply(t)
        for t, (finger, _) in zip(targets, contacting_fingers(style))
    }
    return GripPose(
        q=q,
        style=tuple(int(c) for c in style),
        anchors=anchors,
        holding_offset=0.0,
        residuals=residuals,
        max_penetration=penetration,
        held=held,
    )


def gp_ucb_maximize(
    fn,
    dim: int,
    max_iter: int = 10,
    seed: int | np.random.SeedSequence = 0,
    bounds: tuple[float, float] = (0.0, 1.0),
    acquisition_samples: int = 256,
):
    """Generic GP-UCB maximization of a black-box function on a box domain.

    Returns (best input, best value, history of (input tuple, value)).
    """
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    surrogate = GaussianSurrogate(dim, lengthscales=np.full(dim, DEFAULT_LENGTHSCALE * (hi - lo)))
    best_x, best_y = None, -math.inf
    history = []
    for t in range(1, max_iter + 1):
        if t == 1:
            x = rng.uniform(lo, hi, size=dim)
        else:
            beta = ucb_beta(t)
            cands = rng.uniform(lo, hi, size=(acquisition_samples, dim))
            incumbent = surrogate.x[int(np.argmax(surrogate.y))]
            jitter = np.clip(
                incumbent + rng.normal(scale=0.05 * (hi - lo), size=(16, dim)), lo, hi
            )
            cands = np.vstack([cands, jitter])
            acq = [ucb_acquisition(surrogate, c, beta) for c in cands]
            x = cands[int(np.argmax(acq))]
        y = float(fn(x))
        surrogate.add(x, y)
        history.append((tuple(float(v) for v in x), y))
        if y > best_y:
            best_x, best_y = x, y
    return best_x, best_y, history


@dataclass(frozen=True)
class GripOptimizationResult:
    pose: GripPose
    score: float
    history: tuple = ()  # (proposal tuple, score) per iteration


def optimize_grip(
    style,
    model: HandModel,
    max_iter: int = 10,
    seed: int | np.random.SeedSequence = 0,
    evaluator=None,
    maneuvers: ManeuverSpec | None = None,
    held: HeldPair | None = None,
    acquisition_samples: int = 256,
) -> GripOptimizationResult:
    """GP-UCB loop over contact proposals in [0, 1]^N.

    The first proposal is the reach-informed default; subsequent proposals
    maximize the UCB acquisition over a seeded sample sweep plus local jitter
    around the incumbent. Infeasible proposals score zero and still inform
    the surrogate. Raises NoFeasibleGrip if no proposal is realizable.
    """
    ok, reason = is_valid_style(style)
    if not ok:
        raise ValueError(f"invalid gripping style {tuple(style)}: {reason}")
    if held is None:
        held = default_held_pair(model)
    if evaluator is None:
        evaluator = lambda pose: evaluate_grip_kinematic(pose, model, maneuvers)
    dim = sum(1 for c in style if c != 0)
    rng = np.random.default_rng(seed)
    surrogate = GaussianSurrogate(dim)
    best_pose = None
    best_score = -math.inf
    history = []
    for t in range(1, max_iter + 1):
        if t == 1:
            x = np.clip(default_contact_fractions(style, model, held), 0.0, 1.0)
        else:
            beta = ucb_beta(t)
            cands = rng.uniform(0.0, 1.0, size=(acquisition_samples, dim))
            incumbent = surrogate.x[int(np.argmax(surrogate.y))]
            jitter = np.clip(
                incumbent + rng.normal(scale=0.05, size=(16, dim)), 0.0, 1.0
            )
            cands = np.vstack([cands, jitter])
            acq = [ucb_acquisition(surrogate, c, beta) for c in cands]
            x = cands[int(np.argmax(acq))]
        try:
            pose = solve_grip_ik(x, style, model, held=held)
            score = float(evaluator(pose))
        except InfeasibleContact:
            pose, score = None, 0.0
        surrogate.add(x, score)
        history.append((tuple(float(v) for v in x), score))
        if pose is not None and score > best_score:
            best_pose, best_score = pose, score
    if best_pose is None:
        raise NoFeasibleGrip(f"all {max_iter} contact proposals were infeasible")
    return GripOptimizationResult(pose=best_pose, score=best_score, history=tuple(history))
