"""Kinematic simulation of grasped 1-DoF mechanisms and the control behaviours
that operate them: six-direction wiggling, admissible-direction following
under a wrench gate, and PCA-based joint-type classification.

The grasp is ideal-rigid.  The mechanism reacts to a commanded end-effector
pose with a linear spring on the residual twist between the commanded pose
and its projection onto the joint's motion manifold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PRISMATIC, REVOLUTE
from .se3 import RigidPose, rotation_about, se3_exp, se3_log


@dataclass
class SimParams:
    dt: float = 0.01
    v_max: tuple = (0.5, 0.5, 0.5, 0.05, 0.05, 0.05)
    f_max: tuple = (2.5, 2.5, 2.5, 10.0, 10.0, 10.0)
    wiggle_amplitude: float = 0.005
    move_threshold: float = 0.002
    # Stall test: displacement over ``progress_window`` steps below this.
    progress_epsilon: float = 0.0005
    progress_window: int = 20
    # A stall only counts as the motion limit once some wrench component
    # reaches this fraction of its limit.
    force_ratio: float = 0.9
    max_iters: int = 2000
    lookahead: float = 0.02
    direction_window: int = 5
    grasp_tolerance: float = 0.03
    noise_sigma: float = 0.0
    # Default stiffness, torque gains first.
    stiffness: tuple = (20.0, 20.0, 20.0, 1000.0, 1000.0, 1000.0)

    @property
    def step_limit(self) -> np.ndarray:
        return np.asarray(self.v_max) * self.dt

    def overshoot_bound(self, stiffness=None) -> np.ndarray:
        k = np.asarray(self.stiffness if stiffness is None else stiffness)
        return np.asarray(self.f_max) + k * self.step_limit


@dataclass
class JointMechanism:
    kind: str
    axis: np.ndarray
    anchor: np.ndarray
    q_max: float
    handle0: RigidPose
    q: float = 0.0
    stiffness: np.ndarray = field(default_factory=lambda: np.array(SimParams.stiffness, dtype=float))
    grasp_offset: RigidPose = field(default_factory=RigidPose.identity)

    def __post_init__(self):
        if self.kind not in (PRISMATIC, REVOLUTE):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.stiffness = np.asarray(self.stiffness, dtype=float)
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        self.q = float(np.clip(self.q, 0.0, self.q_max))

    def handle_pose(self, q: float | None = None) -> RigidPose:
        q = self.q if q is None else q
        h = self.handle0
        if self.kind == PRISMATIC:
            return RigidPose(h.rotation, h.translation + q * self.axis)
        r = rotation_about(self.axis, q)
        return RigidPose(r @ h.rotation, self.anchor + r @ (h.translation - self.anchor))

    def ee_pose(self, q: float | None = None) -> RigidPose:
        return self.handle_pose(q) @ self.grasp_offset

    def project(self, commanded: RigidPose) -> float:
        """Unclamped joint coordinate closest to a commanded end-effector pose."""
        p = (commanded @ self.grasp_offset.inverse()).translation
        if self.kind == PRISMATIC:
            return float((p - self.handle0.translation) @ self.axis)
        a = self.axis
        r0 = self.handle0.translation - self.anchor
        r0 = r0 - (r0 @ a) * a
        r = p - self.anchor
        r = r - (r @ a) * a
        return float(np.arctan2(a @ np.cross(r0, r), r0 @ r))

    def end_coordinate(self, state: int) -> float:
        return self.q_max if state else 0.0


def simulate_step(mech: JointMechanism, locked: bool, commanded: RigidPose):
    """Move the mechanism as far as ``commanded`` asks and report the reaction.

    Returns ``(q, achieved_pose, wrench)``; the wrench is the spring reaction
    on the end-effector in its own frame, so it points back towards the
    achieved pose.
    """
    if not locked:
        mech.q = float(np.clip(mech.project(commanded), 0.0, mech.q_max))
    achieved = mech.ee_pose()
    wrench = -mech.stiffness * se3_log(achieved, commanded)
    return mech.q, achieved, wrench


def wrench_gated_interpolate(prev: RigidPose, goal: RigidPose, f_obs, v_max, f_max, dt: float) -> RigidPose:
    """One interpolation step towards ``goal`` that scales down, and past the
    wrench limit reverses, the motion on each twist axis."""
    lim = np.asarray(v_max, dtype=float) * dt
    f_obs = np.asarray(f_obs, dtype=float)
    step = np.clip(se3_log(prev, goal), -lim, lim)
    margin = np.asarray(f_max, dtype=float) - np.abs(f_obs)
    gate = np.tanh(np.abs(margin))
    step = np.where(margin > 0, gate * step, np.sign(f_obs) * gate * lim)
    return se3_exp(prev, step)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class EETrajectory:
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    wrenches: list = field(default_factory=list)
    poses: list = field(default_factory=list)

    def append(self, t: float, pose: RigidPose, wrench) -> None:
        self.times.append(float(t))
        self.positions.append(np.array(pose.translation))
        self.wrenches.append(np.array(wrench, dtype=float))
        self.poses.append(pose)

    def __len__(self) -> int:
        return len(self.times)

    def points(self) -> np.ndarray:
        return np.array(self.positions).reshape(-1, 3)

    def extend(self, other: EETrajectory, t0: float | None = None) -> None:
        shift = (self.times[-1] if self.times and t0 is None else (t0 or 0.0))
        for t, pose, w in zip(other.times, other.poses, other.wrenches):
            self.append(shift + t, pose, w)


TRACE_COLUMNS = ("t", "x", "y", "z", "fx", "fy", "fz", "tx", "ty", "tz")


def write_trace_csv(traj: EETrajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t, p, f in zip(traj.times, traj.positions, traj.wrenches):
            w.writerow([f"{t:.4f}", *(f"{v:.6f}" for v in p), *(f"{v:.6f}" for v in f[3:]),
                        *(f"{v:.6f}" for v in f[:3])])


# --------------------------------------------------------------------------
# behaviours


class WrenchBoundViolation(RuntimeError):
    pass


def _check_wrench(wrench, params: SimParams, mech: JointMechanism, strict: bool) -> None:
    if strict and np.any(np.abs(wrench) > params.overshoot_bound(mech.stiffness) + 1e-9):
        raise WrenchBoundViolation(f"wrench {wrench} beyond gate bound")


def _gated_step(mech, locked, cmd, goal, wrench, params):
    cmd = wrench_gated_interpolate(cmd, goal, wrench, params.v_max, params.f_max, params.dt)
    _, achieved, wrench = simulate_step(mech, locked, cmd)
    return cmd, achieved, wrench


@dataclass
class WiggleResult:
    movable: bool
    best_dp: np.ndarray
    probes: int
    trace: EETrajectory


def wiggle(mech: JointMechanism, locked: bool, amplitude: float, move_threshold: float,
           params: SimParams | None = None, strict: bool = False) -> WiggleResult:
    """Probe the grasped joint along +-x, +-y, +-z of the end-effector frame.

    The mechanism is put back at its starting coordinate afterwards.
    """
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    params = params or SimParams()
    q0 = mech.q
    start = mech.ee_pose()
    trace = EETrajectory()
    n_iters = int(np.ceil(amplitude / params.step_limit[3:].min())) * 3 + 5
    best_dp, best = np.zeros(3), 0.0
    t = 0.0
    for axis in range(3):
        for sign in (1.0, -1.0):
            mech.q = q0
            offset = np.zeros(3)
            offset[axis] = sign * amplitude
            goal = start @ RigidPose.from_translation(offset)
            cmd = start
            _, achieved, wrench = simulate_step(mech, locked, cmd)
            for _ in range(n_iters):
                cmd, achieved, wrench = _gated_step(mech, locked, cmd, goal, wrench, params)
                _check_wrench(wrench, params, mech, strict)
                t += params.dt
                trace.append(t, achieved, wrench)
                dp = achieved.translation - start.translation
                if np.linalg.norm(dp) > best:
                    best, best_dp = float(np.linalg.norm(dp)), dp
                if np.linalg.norm(se3_log(cmd, goal)) < 1e-9:
                    break
    mech.q = q0
    return WiggleResult(best > move_threshold, best_dp, 6, trace)


@dataclass
class FollowResult:
    success: bool
    trajectory: EETrajectory
    reason: str
    direction: np.ndarray


def follow_admissible_direction(mech: JointMechanism, locked: bool, direction, params: SimParams | None = None,
                                rng: np.random.Generator | None = None, strict: bool = False) -> FollowResult:
    """Drive the end-effector along the observed admissible direction until the
    joint stalls against its motion limit with the wrench at its limit."""
    params = params or SimParams()
    rng = rng or np.random.default_rng(0)
    d = np.asarray(direction, dtype=float)
    if np.linalg.norm(d) == 0:
        return FollowResult(False, EETrajectory(), "no direction", d)
    d = d / np.linalg.norm(d)
    cmd = mech.ee_pose()
    _, achieved, wrench = simulate_step(mech, locked, cmd)
    traj = EETrajectory()
    traj.append(0.0, achieved, wrench)
    start = achieved.translation.copy()
    f_max = np.asarray(params.f_max)
    w, win = params.direction_window, params.progress_window
    for it in range(1, params.max_iters + 1):
        goal = RigidPose(achieved.rotation, achieved.translation + params.lookahead * d)
        cmd, achieved, wrench = _gated_step(mech, locked, cmd, goal, wrench, params)
        _check_wrench(wrench, params, mech, strict)
        traj.append(it * params.dt, achieved, wrench)
        if np.linalg.norm(se3_log(achieved, cmd)[3:]) > params.grasp_tolerance:
            return FollowResult(False, traj, "contact lost", d)
        if it >= w:
            dp = traj.positions[-1] - traj.positions[-1 - w]
            if params.noise_sigma > 0:
                dp = dp + rng.normal(0.0, params.noise_sigma, 3)
            if np.linalg.norm(dp) > 1e-4:
                d = dp / np.linalg.norm(dp)
        if it >= win:
            progress = np.linalg.norm(traj.positions[-1] - traj.positions[-1 - win])
            saturated = np.max(np.abs(wrench) / f_max) >= params.force_ratio
            if progress < params.progress_epsilon and saturated:
                moved = np.linalg.norm(traj.positions[-1] - start) > params.move_threshold
                return FollowResult(bool(moved), traj, "limit" if moved else "no progress", d)
    return FollowResult(False, traj, "max iterations", d)


def replay_trajectory(mech: JointMechanism, locked: bool, poses, params: SimParams | None = None,
                      strict: bool = False, waypoint_tol: float = 0.002) -> FollowResult:
    """Track stored end-effector poses through the wrench gate.

    Succeeds when the final waypoint is reached; a joint that refuses to move
    stalls at the wrench limit and the replay is abandoned.
    """
    params = params or SimParams()
    cmd = mech.ee_pose()
    _, achieved, wrench = simulate_step(mech, locked, cmd)
    traj = EETrajectory()
    traj.append(0.0, achieved, wrench)
    f_max = np.asarray(params.f_max)
    stride = max(1, len(poses) // 50)
    waypoints = list(poses[::stride]) + [poses[-1]]
    it, stalled = 0, 0
    for goal in waypoints:
        while np.linalg.norm(achieved.translation - goal.translation) > waypoint_tol:
            it += 1
            cmd, new, wrench = _gated_step(mech, locked, cmd, goal, wrench, params)
            _check_wrench(wrench, params, mech, strict)
            traj.append(it * params.dt, new, wrench)
            progress = np.linalg.norm(new.translation - achieved.translation)
            achieved = new
            saturated = np.max(np.abs(wrench) / f_max) >= params.force_ratio
            stalled = stalled + 1 if (progress < 1e-6 and saturated) else 0
            if stalled >= params.progress_window or it >= params.max_iters:
                return FollowResult(False, traj, "replay stalled", np.zeros(3))
    return FollowResult(True, traj, "replayed", np.zeros(3))


# A quarter-circle arc leaves ~4.25% of the variance on its second axis, so
# alpha must sit below that for 90-degree revolute joints to register.
# scripts/calibrate_alpha.py sweeps the admissible range.
DEFAULT_ALPHA = 0.03


def classify_joint_type(points, alpha: float = DEFAULT_ALPHA) -> int:
    """1 for a straight (prismatic) trajectory, -1 for a planar arc (revolute),
    0 when undecided or when there is too little motion to tell."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        return 0
    centered = pts - pts.mean(axis=0)
    lam = np.sort(np.linalg.eigvalsh(centered.T @ centered / len(pts)))[::-1]
    total = lam.sum()
    if total <= 1e-18:
        return 0
    l1, l2, l3 = lam / total
    if l1 > 1.0 - alpha:
        return 1
    if l3 < alpha < l2:
        return -1
    return 0


# --------------------------------------------------------------------------
# mechanisms for lockbox joints

DEFAULT_PRISMATIC_RANGE = 0.1
DEFAULT_REVOLUTE_RANGE = np.pi / 2
DEFAULT_RADIUS = 0.15


def mechanism_for_joint(joint, grasp_offset: RigidPose | None = None,
                        stiffness=None, state: int | None = None) -> JointMechanism:
    """Build a mechanism for a ``JointSpec``.

    Geometry comes from ``joint.mechanism`` when present; otherwise prismatic
    joints slide 10 cm along the wall's vertical axis and revolute joints
    swing a quarter turn about the wall normal, 15 cm from the handle.
    """
    geo = dict(joint.mechanism or {})
    pos = np.asarray(joint.position, dtype=float)
    kind = joint.kind
    if kind == PRISMATIC:
        axis = geo.get("axis", (0.0, 0.0, 1.0))
        anchor = pos
        q_max = float(geo.get("range", DEFAULT_PRISMATIC_RANGE))
    else:
        axis = geo.get("axis", (0.0, 1.0, 0.0))
        anchor = np.asarray(geo.get("anchor", pos - np.array([DEFAULT_RADIUS, 0.0, 0.0])), dtype=float)
        q_max = float(geo.get("range", DEFAULT_REVOLUTE_RANGE))
    state = joint.initial_state if state is None else state
    mech = JointMechanism(
        kind=kind,
        axis=np.asarray(axis, dtype=float),
        anchor=np.asarray(anchor, dtype=float),
        q_max=q_max,
        handle0=RigidPose.from_translation(pos),
        stiffness=np.asarray(stiffness if stiffness is not None else SimParams.stiffness, dtype=float),
        grasp_offset=grasp_offset or RigidPose.identity(),
    )
    mech.q = mech.end_coordinate(state)
    return mech


# --------------------------------------------------------------------------
# synthetic trajectories for checking the classifier

LINE_LENGTHS = (0.05, 0.3)
ARC_RADII = (0.05, 0.3)
ARC_SWEEPS = (np.pi / 2, np.pi)


def _random_frame(rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q


def synthetic_line(rng: np.random.Generator, n: int = 50, noise: float = 0.0) -> np.ndarray:
    """Evenly spaced points on a random segment, optional Gaussian noise (m)."""
    length = rng.uniform(*LINE_LENGTHS)
    d = _random_frame(rng)[:, 0]
    p0 = rng.uniform(-0.5, 0.5, 3)
    pts = p0 + np.linspace(0.0, length, n)[:, None] * d
    return pts + rng.normal(0.0, noise, pts.shape) if noise > 0 else pts


def synthetic_arc(rng: np.random.Generator, n: int = 50, noise: float = 0.0) -> np.ndarray:
    """Evenly spaced points on a random circular arc of 90 to 180 degrees."""
    r = rng.uniform(*ARC_RADII)
    sweep = rng.uniform(*ARC_SWEEPS)
    frame = _random_frame(rng)
    phi = rng.uniform(0, 2 * np.pi) + np.linspace(0.0, sweep, n)
    local = np.stack([r * np.cos(phi), r * np.sin(phi), np.zeros(n)], axis=1)
    pts = local @ frame.T + rng.uniform(-0.5, 0.5, 3)
    return pts + rng.normal(0.0, noise, pts.shape) if noise > 0 else pts
