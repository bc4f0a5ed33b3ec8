"""Random lockbox instances with a tunable near/far locking bias."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np

from .core import (
    JOINT_KINDS,
    DependencyEdge,
    JointSpec,
    LockboxError,
    LockboxSpec,
    _has_cycle,
    min_remaining_steps,
    validate,
)

MAX_ATTEMPTS = 1000

DEFAULT_MIX = {"one_to_one": 1, "many_to_one": 2, "bistable": 1}


@dataclass
class GeneratorParams:
    n_joints: int
    dependency_mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    # -1: lockers drawn from the nearest half, +1: from the farthest half.
    distance_preference: float = 0.0
    workspace: tuple = ((-0.3, 0.0, 0.1), (0.3, 0.1, 0.8))
    seed: int = 0
    # Keep these joints (positions, kinds) instead of sampling new ones.
    joints: tuple[JointSpec, ...] | None = None
    target: str | None = None
    name: str = "random"


def joint_labels(n: int) -> list[str]:
    if n <= 26:
        return list(string.ascii_uppercase[:n])
    return [f"J{i:02d}" for i in range(n)]


def neighbour_pools(positions: np.ndarray) -> tuple[list[set[int]], list[set[int]]]:
    """For each joint, the ceil(N/2) nearest and farthest other joints."""
    n = len(positions)
    k = min(math.ceil(n / 2), n - 1)
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    near, far = [], []
    for j in range(n):
        others = sorted((i for i in range(n) if i != j), key=lambda i: (dist[j, i], i))
        near.append(set(others[:k]))
        far.append(set(others[-k:]))
    return near, far


def _pair_weights(p: float, near: set[int], far: set[int], n: int, exclude: int) -> np.ndarray:
    w = np.zeros(n)
    for i in range(n):
        if i == exclude:
            continue
        w[i] = 0.5 * (1 - p) * (i in near) + 0.5 * (1 + p) * (i in far)
    return w


def _sample_edges(rng: np.random.Generator, params: GeneratorParams, positions: np.ndarray,
                  ids: list[str]) -> list[DependencyEdge]:
    n = len(ids)
    p = float(params.distance_preference)
    near, far = neighbour_pools(positions)
    edges: list[DependencyEdge] = []
    pairs: set[tuple[int, int]] = set()

    def can_add(locker: int, locked: int) -> bool:
        if locker == locked or (locker, locked) in pairs or (locked, locker) in pairs:
            return False
        trial = edges + [DependencyEdge(ids[locker], ids[locked], 0)]
        return not _has_cycle(ids, trial)

    def add(locker: int, locked: int, value: int) -> None:
        pairs.add((locker, locked))
        edges.append(DependencyEdge(ids[locker], ids[locked], int(value)))

    def pick_lockers(locked: int, count: int) -> list[int]:
        w = _pair_weights(p, near[locked], far[locked], n, locked)
        chosen = []
        for _ in range(count):
            cand = np.array([w[i] if can_add(i, locked) and i not in chosen else 0.0 for i in range(n)])
            if cand.sum() <= 0:
                break
            chosen.append(int(rng.choice(n, p=cand / cand.sum())))
        return chosen

    kinds = []
    for kind, count in params.dependency_mix.items():
        kinds += [kind] * int(count)
    rng.shuffle(kinds)
    for kind in kinds:
        if kind == "one_to_one":
            locked = int(rng.integers(n))
            for c in pick_lockers(locked, 1):
                add(c, locked, rng.integers(2))
        elif kind == "many_to_one":
            locked = int(rng.integers(n))
            count = 2 if n < 5 else int(rng.integers(2, 4))
            for c in pick_lockers(locked, count):
                add(c, locked, rng.integers(2))
        elif kind == "bistable":
            locker = int(rng.integers(n))
            value = int(rng.integers(2))
            for v in (value, 1 - value):
                w = np.array([
                    _pair_weights(p, near[j], far[j], n, j)[locker] if can_add(locker, j) else 0.0
                    for j in range(n)
                ])
                if w.sum() <= 0:
                    break
                add(locker, int(rng.choice(n, p=w / w.sum())), v)
        else:
            raise LockboxError(f"unknown dependency type {kind!r}")
    return edges


def _hardest_target(name, joints, edges) -> tuple[str, int] | None:
    best = None
    for j in joints:
        cand = LockboxSpec(name, joints, edges, j.id)
        d = min_remaining_steps(cand, cand.initial_state())
        if d is not None and (best is None or d >= best[1]):
            best = (j.id, d)
    return best


def generate_random(params: GeneratorParams) -> LockboxSpec:
    """Sample a valid, solvable lockbox; deterministic in ``params.seed``."""
    if params.n_joints < 2:
        raise LockboxError("need at least two joints")
    if not -1.0 <= params.distance_preference <= 1.0:
        raise LockboxError("distance_preference must lie in [-1, 1]")
    rng = np.random.default_rng(params.seed)
    lo, hi = (np.asarray(b, dtype=float) for b in params.workspace)
    for _ in range(MAX_ATTEMPTS):
        if params.joints is not None:
            joints = tuple(params.joints)
            if len(joints) != params.n_joints:
                raise LockboxError("n_joints does not match the supplied joints")
        else:
            ids = joint_labels(params.n_joints)
            pos = rng.uniform(lo, hi, size=(params.n_joints, 3))
            kinds = rng.choice(JOINT_KINDS, size=params.n_joints)
            joints = tuple(
                JointSpec(i, str(k), tuple(float(c) for c in x), 0) for i, k, x in zip(ids, kinds, pos)
            )
        ids = [j.id for j in joints]
        positions = np.array([j.position for j in joints], dtype=float)
        edges = tuple(_sample_edges(rng, params, positions, ids))
        if params.target is not None:
            spec = LockboxSpec(params.name, joints, edges, params.target)
            if validate(spec) or min_remaining_steps(spec, spec.initial_state()) is None:
                continue
            return spec
        best = _hardest_target(params.name, joints, edges)
        if best is None:
            continue
        spec = LockboxSpec(params.name, joints, edges, best[0])
        if not validate(spec):
            return spec
    raise LockboxError(f"no solvable lockbox after {MAX_ATTEMPTS} attempts")
