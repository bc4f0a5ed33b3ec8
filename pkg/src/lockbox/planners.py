"""Heuristic lockbox solver and the environments it runs against.

The solver only sees an environment through ``joints``, ``try_manipulate``,
``solved``, ``features`` and ``steps``, so the same code drives the symbolic
model and the kinematic simulation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .attention import AttentionModel, features
from .core import KIND_CODE, LockboxSpec, LockboxState, is_solved, is_unlocked, manipulate
from .sim import (
    DEFAULT_ALPHA,
    EETrajectory,
    SimParams,
    classify_joint_type,
    follow_admissible_direction,
    mechanism_for_joint,
    replay_trajectory,
    wiggle,
)
from .se3 import RigidPose

SIZE_THEN_SCORE = "size-then-score"
SIZE_THEN_LEX = "size-then-lex"


class Environment(Protocol):
    target: str

    def joints(self) -> list[str]: ...

    def try_manipulate(self, j: str) -> bool: ...

    def solved(self) -> bool: ...

    def features(self, j: str) -> tuple[np.ndarray, int]: ...

    def steps(self) -> int: ...


class SymbolicEnv:
    """Direct access to the symbolic model: every unlocked joint can be moved."""

    def __init__(self, spec: LockboxSpec):
        self.spec = spec
        self.target = spec.target
        self.state: LockboxState = spec.initial_state()
        self._positions = {j.id: np.asarray(j.position, dtype=float) for j in spec.joints}
        self._kind = {j.id: KIND_CODE[j.kind] for j in spec.joints}
        self._manipulated: set[str] = set()

    def joints(self) -> list[str]:
        return list(self.spec.ids)

    def try_manipulate(self, j: str) -> bool:
        self.state, moved = manipulate(self.spec, self.state, j)
        if moved:
            self._manipulated.add(j)
        return moved

    def solved(self) -> bool:
        return is_solved(self.spec, self.state)

    def features(self, j: str) -> tuple[np.ndarray, int]:
        # The joint type is only known once the joint has been operated.
        return self._positions[j], (self._kind[j] if j in self._manipulated else 0)

    def steps(self) -> int:
        return self.state.step_count


@dataclass
class SolverConfig:
    max_steps: int = 1000
    use_attention: bool = False
    # size-then-score also ranks equal-size combinations by attention score.
    combination_order: str = SIZE_THEN_LEX
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.combination_order not in (SIZE_THEN_SCORE, SIZE_THEN_LEX):
            raise ValueError(f"unknown combination order {self.combination_order!r}")


@dataclass
class TrialResult:
    solved: bool
    steps: int
    attempt_log: list[tuple[str, bool]] = field(default_factory=list)
    final_weights: np.ndarray | None = None
    # Attention weights averaged over every refit during the trial.
    mean_weights: np.ndarray | None = None


def reference_joint(last, candidate: str) -> str | None:
    """Joint whose features ``candidate`` is compared against.

    ``last`` is either a joint id or a recency list of moved joints (oldest
    first); for a list the most recent entry other than the candidate wins.
    """
    if last is None or isinstance(last, str):
        return last
    for j in reversed(last):
        if j != candidate:
            return j
    return None


def attention_scores(attention, env, last, joints) -> dict[str, float] | None:
    if attention is None:
        return None
    return {j: attention.score(features(env, reference_joint(last, j), j)) for j in joints}


def enumerate_combinations(free: list[str], current: dict[str, int], ordering: str = SIZE_THEN_LEX,
                           scores: dict[str, float] | None = None,
                           visits: Callable[[dict[str, int]], int] | None = None,
                           rng: np.random.Generator | None = None) -> list[dict[str, int]]:
    """Every assignment of the free joints other than ``current``.

    Fewer flips come first.  Among equal flip counts, assignments whose
    flipped joints score higher on average come first when scores are given
    and the ordering is size-then-score; the rest is lexicographic in the
    order of ``free``.  ``visits``, when given, ranks ahead of all of that:
    assignments leading to less-visited states are tried first.
    """
    out = []
    for flips in itertools.product((0, 1), repeat=len(free)):
        if not any(flips):
            continue
        flipped = tuple(i for i, f in enumerate(flips) if f)
        if ordering == SIZE_THEN_SCORE and scores is not None:
            mean = float(np.mean([scores[free[i]] for i in flipped]))
        else:
            mean = 0.0
        assignment = {j: current[j] ^ f for j, f in zip(free, flips)}
        seen = visits(assignment) if visits is not None else 0
        tie = float(rng.random()) if rng is not None and seen else 0.0
        out.append(((seen, len(flipped), -mean, tie, flipped), assignment))
    out.sort(key=lambda item: item[0])
    return [a for _, a in out]


def order_locked(locked: list[str], last: str | None = None, attention: AttentionModel | None = None,
                 env=None) -> list[str]:
    """Locked joints to try, most promising first.

    Without attention the input order is kept; with attention joints are
    sorted by descending score relative to ``last``, ties by label.
    """
    if attention is None:
        return list(locked)
    scores = attention_scores(attention, env, last, locked)
    return sorted(locked, key=lambda j: (-scores[j], j))


def heuristic_solve(env, cfg: SolverConfig | None = None, attention: AttentionModel | None = None,
                    on_combination: Callable | None = None) -> TrialResult:
    """Sweep every joint, then alternate between realising state combinations
    of the free joints and retrying the locked ones, restarting whenever a
    joint changes camp.  Stops when the target reaches its goal or the step
    budget runs out."""
    cfg = cfg or SolverConfig()
    if attention is None and cfg.use_attention:
        attention = AttentionModel()
    joints = env.joints()
    log: list[tuple[str, bool]] = []
    parity = {j: 0 for j in joints}
    # Moved joints, least recent first; attention features are taken
    # relative to the latest of these that is not the candidate itself.
    history: list[str] = []
    # Breaks ties between already-visited states; fixed order alone can lock
    # the solver into a cycle.
    rng = np.random.default_rng(cfg.seed)

    weight_sum, n_fits = 0.0, 0

    def done(solved: bool) -> TrialResult:
        if attention is None:
            return TrialResult(solved, env.steps(), log)
        mean = weight_sum / n_fits if n_fits else np.zeros_like(attention.weights)
        return TrialResult(solved, env.steps(), log, attention.weights.copy(), np.asarray(mean, dtype=float))

    def attempt(j: str) -> bool:
        nonlocal weight_sum, n_fits
        moved = env.try_manipulate(j)
        if attention is not None:
            attention.observe(env, reference_joint(history, j), j, moved)
            weight_sum = weight_sum + attention.weights
            n_fits += 1
        if moved:
            parity[j] ^= 1
            if j in history:
                history.remove(j)
            history.append(j)
        log.append((j, moved))
        return moved

    # Times each joint-state vector has been reached by realising a
    # combination.  Without it the solver can cycle forever between the same
    # few near-by states.
    visit_count: dict[tuple[int, ...], int] = {}

    def visits(assignment: dict[str, int]) -> int:
        return visit_count.get(tuple(assignment.get(j, parity[j]) for j in joints), 0)

    movable = {}
    for j in joints:
        if env.steps() >= cfg.max_steps:
            return done(False)
        movable[j] = attempt(j)
        if env.solved():
            return done(True)

    while not env.solved():
        free = [j for j in joints if movable[j]]
        locked = [j for j in joints if not movable[j]]
        scores = None
        if cfg.combination_order == SIZE_THEN_SCORE:
            scores = attention_scores(attention, env, history, free)
        combos = enumerate_combinations(free, parity, cfg.combination_order, scores, visits, rng)
        if not combos:
            # Nothing to rearrange; retry the locked joints as they are.
            combos = [dict()]
        restart = False
        for combo in combos:
            if on_combination is not None:
                on_combination(dict(movable), combo)
            flips = [j for j in free if combo.get(j, parity[j]) != parity[j]]
            for j in flips:
                if env.steps() >= cfg.max_steps:
                    return done(False)
                moved = attempt(j)
                if env.solved():
                    return done(True)
                if not moved:
                    movable[j] = False
                    restart = True
                    break
            if restart:
                break
            key = tuple(parity[j] for j in joints)
            visit_count[key] = visit_count.get(key, 0) + 1
            for j in order_locked(locked, history, attention, env):
                if env.steps() >= cfg.max_steps:
                    return done(False)
                moved = attempt(j)
                if env.solved():
                    return done(True)
                if moved:
                    movable[j] = True
                    restart = True
                    break
            if restart:
                break
        if env.steps() >= cfg.max_steps:
            return done(False)
    return done(True)


# --------------------------------------------------------------------------
# kinematic environment with reusable manipulation models


@dataclass
class CacheEntry:
    trajectory: EETrajectory
    start_state: int
    directions: dict[int, np.ndarray]
    kind_code: int

    def poses_for(self, from_state: int) -> list[RigidPose]:
        poses = self.trajectory.poses
        return list(poses) if from_state == self.start_state else list(reversed(poses))


class ManipulationCache(dict):
    """Joint id -> CacheEntry, only for joints that have been operated."""


# Fraction of a joint's travel within which it counts as at its end stop.
END_TOLERANCE = 0.05


class KinematicEnv:
    """Lockbox whose joints must be operated through the simulated arm.

    The symbolic model decides which joints are locked; whether a joint was
    actually moved is judged by the control behaviours alone.
    """

    def __init__(self, spec: LockboxSpec, params: SimParams | None = None, grasp_offset: RigidPose | None = None,
                 alpha: float = DEFAULT_ALPHA, rng: np.random.Generator | None = None, reuse: bool = True,
                 strict: bool = False):
        self.spec = spec
        self.target = spec.target
        self.params = params or SimParams()
        self.alpha = alpha
        self.rng = rng or np.random.default_rng(0)
        self.reuse = reuse
        self.strict = strict
        self.state = spec.initial_state()
        self.mechanisms = {
            j.id: mechanism_for_joint(j, grasp_offset=grasp_offset, stiffness=self.params.stiffness)
            for j in spec.joints
        }
        self.cache = ManipulationCache()
        # (joint, wiggle probes spent, stored model reused)
        self.probe_log: list[tuple[str, int, bool]] = []
        self.traces: list[tuple[str, int, EETrajectory]] = []
        self.mismatches = 0

    def joints(self) -> list[str]:
        return list(self.spec.ids)

    def is_locked(self, j: str) -> bool:
        return not is_unlocked(self.spec, self.state, j)

    def bit(self, j: str) -> int:
        return self.state.bits[self.spec.index[j]]

    def try_manipulate(self, j: str) -> bool:
        i = self.spec.index[j]
        before = self.state.bits[i]
        desired = 1 - before
        moved = cached_manipulate(self, self.cache, j, desired)
        mech = self.mechanisms[j]
        reached = abs(mech.q - mech.end_coordinate(desired)) <= END_TOLERANCE * mech.q_max
        # Joints latch at either end: close enough snaps in, anything else
        # falls back to where it started.
        mech.q = mech.end_coordinate(desired if reached else before)
        if moved != reached:
            self.mismatches += 1
        bits = self.state.bits
        if reached:
            bits = bits[:i] + (desired,) + bits[i + 1:]
        self.state = LockboxState(bits, j, self.state.step_count + 1)
        return moved

    def solved(self) -> bool:
        return is_solved(self.spec, self.state)

    def features(self, j: str) -> tuple[np.ndarray, int]:
        entry = self.cache.get(j)
        return np.asarray(self.spec.joint(j).position, dtype=float), (entry.kind_code if entry else 0)

    def steps(self) -> int:
        return self.state.step_count


def cached_manipulate(env: KinematicEnv, cache: ManipulationCache, j: str, desired_state: int) -> bool:
    """Operate joint ``j`` towards ``desired_state``.

    Joints operated before replay their stored trajectory (reversed for the
    opposite transition) without wiggling; unknown joints are wiggled and
    then followed along the observed admissible direction.
    """
    mech = env.mechanisms[j]
    locked = env.is_locked(j)
    p = env.params
    entry = cache.get(j) if env.reuse else None
    if entry is not None:
        result = replay_trajectory(mech, locked, entry.poses_for(1 - desired_state), p, strict=env.strict)
        env.probe_log.append((j, 0, True))
        env.traces.append((j, desired_state, result.trajectory))
        return result.success

    w = wiggle(mech, locked, p.wiggle_amplitude, p.move_threshold, p, strict=env.strict)
    env.probe_log.append((j, w.probes, False))
    if not w.movable:
        env.traces.append((j, desired_state, w.trace))
        return False
    result = follow_admissible_direction(mech, locked, w.best_dp, p, env.rng, strict=env.strict)
    trace = EETrajectory()
    trace.extend(w.trace, t0=0.0)
    trace.extend(result.trajectory)
    env.traces.append((j, desired_state, trace))
    if result.success:
        pts = result.trajectory.points()
        start_state = 1 - desired_state
        cache[j] = CacheEntry(
            trajectory=result.trajectory,
            start_state=start_state,
            directions={start_state: pts[-1] - pts[0], desired_state: pts[0] - pts[-1]},
            kind_code=classify_joint_type(pts, env.alpha),
        )
    return result.success
