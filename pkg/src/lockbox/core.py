"""Symbolic lockbox model.

A lockbox is a set of binary joints whose mobility is gated by a DAG of
interlocking dependencies.  An edge ``locker -> locked`` with value ``v``
means ``locked`` can only move while ``locker`` sits in state ``v``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PRISMATIC = "prismatic"
REVOLUTE = "revolute"
JOINT_KINDS = (PRISMATIC, REVOLUTE)

# Kinematic type code used by the joint-type classifier and the features.
KIND_CODE = {PRISMATIC: 1, REVOLUTE: -1}

UNSOLVABLE = None


class LockboxError(ValueError):
    """Raised for malformed specs or unknown joints."""


@dataclass(frozen=True)
class JointSpec:
    id: str
    kind: str
    position: tuple[float, float, float]
    initial_state: int = 0
    # Optional geometry override for the kinematic simulation.
    mechanism: Mapping | None = field(default=None, compare=False)


@dataclass(frozen=True)
class DependencyEdge:
    locker: str
    locked: str
    required_state: int


@dataclass(frozen=True)
class LockboxSpec:
    name: str
    joints: tuple[JointSpec, ...]
    edges: tuple[DependencyEdge, ...]
    target: str
    goal_state: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.goal_state is None and self.target in self.ids:
            init = self.joints[self.ids.index(self.target)].initial_state
            object.__setattr__(self, "goal_state", 1 - init)

    @property
    def n(self) -> int:
        return len(self.joints)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(j.id for j in self.joints)

    @cached_property
    def index(self) -> dict[str, int]:
        return {jid: i for i, jid in enumerate(self.ids)}

    @cached_property
    def target_index(self) -> int:
        return self.index[self.target]

    @cached_property
    def locks(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per joint index, the (locker index, required state) pairs gating it."""
        per = [[] for _ in self.joints]
        for e in self.edges:
            per[self.index[e.locked]].append((self.index[e.locker], e.required_state))
        return tuple(tuple(p) for p in per)

    @cached_property
    def lock_masks(self) -> tuple[tuple[int, int], ...]:
        """Per joint, (care mask, value mask) so that unlocked iff bits & care == value."""
        out = []
        for pairs in self.locks:
            care = value = 0
            for i, v in pairs:
                care |= 1 << i
                value |= v << i
            out.append((care, value))
        return tuple(out)

    @cached_property
    def initial_mask(self) -> int:
        return bits_to_mask(j.initial_state for j in self.joints)

    def joint(self, jid: str) -> JointSpec:
        try:
            return self.joints[self.index[jid]]
        except KeyError:
            raise LockboxError(f"unknown joint {jid!r}") from None

    def positions(self) -> np.ndarray:
        return np.array([j.position for j in self.joints], dtype=float)

    def initial_state(self) -> LockboxState:
        return LockboxState(tuple(j.initial_state for j in self.joints))


@dataclass(frozen=True)
class LockboxState:
    bits: tuple[int, ...]
    last_manipulated: str | None = None
    step_count: int = 0

    @property
    def mask(self) -> int:
        return bits_to_mask(self.bits)


def bits_to_mask(bits: Iterable[int]) -> int:
    m = 0
    for i, b in enumerate(bits):
        m |= (int(b) & 1) << i
    return m


def mask_to_bits(mask: int, n: int) -> tuple[int, ...]:
    return tuple((mask >> i) & 1 for i in range(n))


# --------------------------------------------------------------------------
# validation and transitions


def validate(spec: LockboxSpec) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    problems = []
    ids = [j.id for j in spec.joints]
    seen = set()
    for jid in ids:
        if jid in seen:
            problems.append(f"duplicate joint id {jid!r}")
        seen.add(jid)
    for j in spec.joints:
        if j.kind not in JOINT_KINDS:
            problems.append(f"joint {j.id!r}: unknown kind {j.kind!r}")
        if len(j.position) != 3 or not all(math.isfinite(float(c)) for c in j.position):
            problems.append(f"joint {j.id!r}: position must be 3 finite numbers")
        if j.initial_state not in (0, 1):
            problems.append(f"joint {j.id!r}: initial_state must be 0 or 1")
    if spec.target not in seen:
        problems.append(f"unknown target {spec.target!r}")
    if spec.goal_state not in (0, 1):
        problems.append("goal_state must be 0 or 1")
    dangling = False
    for e in spec.edges:
        for end in (e.locker, e.locked):
            if end not in seen:
                problems.append(f"dangling edge endpoint {end!r}")
                dangling = True
        if e.locker == e.locked:
            problems.append(f"self-locking edge on {e.locker!r}")
        if e.required_state not in (0, 1):
            problems.append(f"edge {e.locker}->{e.locked}: required_state must be 0 or 1")
    if not dangling and _has_cycle(ids, spec.edges):
        problems.append("cycle in dependency graph")
    return problems


def _has_cycle(ids: Sequence[str], edges: Iterable[DependencyEdge]) -> bool:
    succ = {i: set() for i in ids}
    indeg = {i: 0 for i in ids}
    for e in edges:
        if e.locked not in succ[e.locker]:
            succ[e.locker].add(e.locked)
            indeg[e.locked] += 1
    queue = deque(i for i in ids if indeg[i] == 0)
    visited = 0
    while queue:
        u = queue.popleft()
        visited += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return visited != len(set(ids))


def _unlocked_mask(spec: LockboxSpec, mask: int, i: int) -> bool:
    care, value = spec.lock_masks[i]
    return mask & care == value


def is_unlocked(spec: LockboxSpec, state: LockboxState, j: str) -> bool:
    if j not in spec.index:
        raise LockboxError(f"unknown joint {j!r}")
    bits = state.bits
    return all(bits[k] == v for k, v in spec.locks[spec.index[j]])


def manipulate(spec: LockboxSpec, state: LockboxState, j: str) -> tuple[LockboxState, bool]:
    """Attempt to toggle joint ``j``; every attempt costs one step."""
    moved = is_unlocked(spec, state, j)
    bits = state.bits
    if moved:
        i = spec.index[j]
        bits = bits[:i] + (1 - bits[i],) + bits[i + 1:]
    return LockboxState(bits, j, state.step_count + 1), moved


def is_solved(spec: LockboxSpec, state: LockboxState) -> bool:
    return state.bits[spec.target_index] == spec.goal_state


# --------------------------------------------------------------------------
# shortest-path oracle


def neighbours(spec: LockboxSpec, mask: int) -> Iterable[int]:
    for i in range(spec.n):
        if _unlocked_mask(spec, mask, i):
            yield mask ^ (1 << i)


def min_remaining_steps(spec: LockboxSpec, state: LockboxState | int) -> int | None:
    """Fewest successful toggles from ``state`` to a solved state (BFS), or None."""
    start = state if isinstance(state, int) else state.mask
    t, goal = spec.target_index, spec.goal_state
    if (start >> t) & 1 == goal:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        m = queue.popleft()
        d = dist[m] + 1
        for nxt in neighbours(spec, m):
            if nxt in dist:
                continue
            if (nxt >> t) & 1 == goal:
                return d
            dist[nxt] = d
            queue.append(nxt)
    return UNSOLVABLE


def distance_table(spec: LockboxSpec) -> np.ndarray:
    """Remaining-step count for every state mask (-1 where unsolvable).

    Toggling a joint never changes its own lock condition, so transitions are
    symmetric and a multi-source BFS from the solved states suffices.
    """
    n, t, goal = spec.n, spec.target_index, spec.goal_state
    dist = np.full(1 << n, -1, dtype=np.int64)
    queue = deque()
    for m in range(1 << n):
        if (m >> t) & 1 == goal:
            dist[m] = 0
            queue.append(m)
    while queue:
        m = queue.popleft()
        for nxt in neighbours(spec, m):
            if dist[nxt] < 0:
                dist[nxt] = dist[m] + 1
                queue.append(nxt)
    return dist


# --------------------------------------------------------------------------
# relabelling, restriction


def relabel(spec: LockboxSpec, mapping: Mapping[str, str]) -> LockboxSpec:
    """Rename joints and re-declare them in label order."""
    joints = sorted((replace(j, id=mapping.get(j.id, j.id)) for j in spec.joints), key=lambda j: j.id)
    edges = tuple(
        DependencyEdge(mapping.get(e.locker, e.locker), mapping.get(e.locked, e.locked), e.required_state)
        for e in spec.edges
    )
    return LockboxSpec(spec.name, tuple(joints), edges, mapping.get(spec.target, spec.target), spec.goal_state)


def randomize_labels(spec: LockboxSpec, seed) -> LockboxSpec:
    """Permute every label except the target's, then declare joints in label order.

    The declaration order drives the planner's initial sweep and the DQN
    input layout, which is what the relabelling is meant to vary.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    others = [jid for jid in spec.ids if jid != spec.target]
    perm = rng.permutation(len(others))
    mapping = {old: others[p] for old, p in zip(others, perm)}
    return relabel(spec, mapping)


def restrict(spec: LockboxSpec, n: int, target: str | None = None) -> LockboxSpec:
    """Induced sub-lockbox on the first ``n`` declared joints.

    If the original target is dropped, the hardest remaining joint (largest
    toggle distance from the initial state, last declared on ties) becomes
    the target.
    """
    if not 1 <= n <= spec.n:
        raise LockboxError(f"cannot restrict {spec.n}-joint lockbox to {n}")
    keep = set(spec.ids[:n])
    joints = spec.joints[:n]
    edges = tuple(e for e in spec.edges if e.locker in keep and e.locked in keep)
    name = f"{spec.name}[:{n}]"
    if target is None:
        target = spec.target if spec.target in keep else None
    if target is None:
        best = None
        for j in joints:
            cand = LockboxSpec(name, joints, edges, j.id)
            d = min_remaining_steps(cand, cand.initial_state())
            if d is not None and (best is None or d >= best[0]):
                best = (d, j.id)
        if best is None:
            raise LockboxError("no solvable target in restricted lockbox")
        target = best[1]
    return LockboxSpec(name, joints, edges, target)


# --------------------------------------------------------------------------
# JSON configs


def spec_to_dict(spec: LockboxSpec) -> dict:
    joints = []
    for j in spec.joints:
        d = {"id": j.id, "kind": j.kind, "position": list(j.position), "initial_state": j.initial_state}
        if j.mechanism is not None:
            d["mechanism"] = dict(j.mechanism)
        joints.append(d)
    return {
        "name": spec.name,
        "joints": joints,
        "edges": [
            {"locker": e.locker, "locked": e.locked, "required_state": e.required_state} for e in spec.edges
        ],
        "target": spec.target,
        "goal_state": spec.goal_state,
    }


def spec_from_dict(data: Mapping) -> LockboxSpec:
    try:
        joints = tuple(
            JointSpec(
                id=str(j["id"]),
                kind=str(j["kind"]),
                position=tuple(float(c) for c in j["position"]),
                initial_state=int(j.get("initial_state", 0)),
                mechanism=j.get("mechanism"),
            )
            for j in data["joints"]
        )
        edges = tuple(
            DependencyEdge(str(e["locker"]), str(e["locked"]), int(e["required_state"])) for e in data["edges"]
        )
        goal = data.get("goal_state")
        return LockboxSpec(str(data.get("name", "")), joints, edges, str(data["target"]),
                           None if goal is None else int(goal))
    except (KeyError, TypeError) as exc:
        raise LockboxError(f"malformed lockbox config: {exc}") from exc


def load_spec(path: str | Path) -> LockboxSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec: LockboxSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2)
        fh.write("\n")


REFERENCE_CONFIGS = ("physical-5", "sim-7-ID1", "sim-7-ID2")


def reference_config(name: str) -> LockboxSpec:
    """Load one of the shipped configs by name, or any JSON file by path."""
    if name in REFERENCE_CONFIGS:
        text = resources.files("lockbox.configs").joinpath(f"{name}.json").read_text()
        return spec_from_dict(json.loads(text))
    if Path(name).exists():
        return load_spec(name)
    raise LockboxError(f"unknown reference config {name!r}")
