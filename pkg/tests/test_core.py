import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_spec
from lockbox.core import (
    REFERENCE_CONFIGS,
    DependencyEdge,
    JointSpec,
    LockboxError,
    LockboxSpec,
    distance_table,
    is_solved,
    is_unlocked,
    manipulate,
    mask_to_bits,
    bits_to_mask,
    min_remaining_steps,
    randomize_labels,
    reference_config,
    relabel,
    restrict,
    save_spec,
    load_spec,
    spec_from_dict,
    spec_to_dict,
    validate,
)
from lockbox.generate import GeneratorParams, generate_random, neighbour_pools


# --------------------------------------------------------------------------
# independent oracle: literal edge semantics + every simple path


def oracle_unlocked(edges, state, j):
    return all(state[e[0]] == e[2] for e in edges if e[1] == j)


def oracle_min_steps(ids, edges, initial, target, goal):
    """Shortest successful-toggle count over all simple paths in state space."""
    start = tuple(initial[j] for j in ids)
    idx = {j: i for i, j in enumerate(ids)}
    best = [None]

    def dfs(state, depth, seen):
        if state[idx[target]] == goal:
            if best[0] is None or depth < best[0]:
                best[0] = depth
            return
        if best[0] is not None and depth >= best[0]:
            return
        named = dict(zip(ids, state))
        for j in ids:
            if oracle_unlocked(edges, named, j):
                nxt = list(state)
                nxt[idx[j]] ^= 1
                nxt = tuple(nxt)
                if nxt not in seen:
                    dfs(nxt, depth + 1, seen | {nxt})

    dfs(start, 0, {start})
    return best[0]


def random_small_spec(rng, n):
    ids = [chr(ord("A") + i) for i in range(n)]
    order = rng.permutation(n)
    edges = []
    for a, b in itertools.combinations(range(n), 2):
        # Edges only point forward in a random topological order.
        if rng.random() < 0.5:
            lo, hi = sorted((order[a], order[b]))
            edges.append((ids[lo], ids[hi], int(rng.integers(2))))
    initial = {j: int(rng.integers(2)) for j in ids}
    target = ids[int(rng.integers(n))]
    spec = make_spec(edges, n=n, target=target, initial=initial)
    return spec, ids, edges, initial, target


def test_bfs_matches_simple_path_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for case in range(700):
        n = 2 + case % 3
        spec, ids, edges, initial, target = random_small_spec(rng, n)
        assert validate(spec) == []
        expected = oracle_min_steps(ids, edges, initial, target, spec.goal_state)
        assert min_remaining_steps(spec, spec.initial_state()) == expected
        checked += expected is not None
    assert checked >= 500


def test_hand_derived_small_examples(one_to_one, many_to_one):
    assert min_remaining_steps(one_to_one, one_to_one.initial_state()) == 2
    assert min_remaining_steps(many_to_one, many_to_one.initial_state()) == 3


def test_bistable_blocks_one_side(bistable):
    s = bistable.initial_state()
    assert is_unlocked(bistable, s, "B")
    assert not is_unlocked(bistable, s, "C")
    s, moved = manipulate(bistable, s, "A")
    assert moved
    assert not is_unlocked(bistable, s, "B")
    assert is_unlocked(bistable, s, "C")


def test_distance_table_agrees_with_bfs():
    spec = reference_config("sim-7-ID1")
    table = distance_table(spec)
    for mask in range(1 << spec.n):
        d = min_remaining_steps(spec, mask)
        assert table[mask] == (-1 if d is None else d)


def test_conflicting_lockers_need_detour():
    # B needs A=1 and C=0, but A only moves while C=1.
    spec = make_spec([("C", "A", 1), ("A", "B", 1), ("C", "B", 0)], n=3, target="B")
    assert min_remaining_steps(spec, spec.initial_state()) == 4
    assert oracle_min_steps("ABC", [("C", "A", 1), ("A", "B", 1), ("C", "B", 0)], dict.fromkeys("ABC", 0), "B", 1) == 4


def test_telescoping_on_random_walks():
    rng = np.random.default_rng(3)
    spec = reference_config("sim-7-ID1")
    table = distance_table(spec)
    for _ in range(1000):
        s = spec.initial_state()
        total = 0
        d0 = table[s.mask]
        while not is_solved(spec, s):
            before = s.mask
            s, _ = manipulate(spec, s, spec.ids[int(rng.integers(spec.n))])
            total += int(table[before] - table[s.mask])
        assert total == d0


# --------------------------------------------------------------------------
# transitions


def test_every_attempt_costs_a_step(one_to_one):
    s = one_to_one.initial_state()
    s, moved = manipulate(one_to_one, s, "B")
    assert not moved and s.step_count == 1 and s.bits == (0, 0)
    assert s.last_manipulated == "B"
    s, moved = manipulate(one_to_one, s, "A")
    assert moved and s.step_count == 2 and s.bits == (1, 0)


def test_unknown_joint_raises(one_to_one):
    with pytest.raises(LockboxError):
        is_unlocked(one_to_one, one_to_one.initial_state(), "Z")


def test_goal_defaults_to_other_end():
    spec = make_spec([("A", "B", 1)], target="B", initial={"B": 1})
    assert spec.goal_state == 0


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12))
def test_mask_round_trip(bits):
    assert mask_to_bits(bits_to_mask(bits), len(bits)) == tuple(bits)


@given(st.integers(0, 2**7 - 1), st.integers(0, 6))
def test_transitions_are_symmetric(mask, j):
    spec = reference_config("sim-7-ID1")
    s = spec.initial_state().__class__(mask_to_bits(mask, spec.n))
    t, moved = manipulate(spec, s, spec.ids[j])
    if moved:
        back, moved_back = manipulate(spec, t, spec.ids[j])
        assert moved_back and back.bits == s.bits


# --------------------------------------------------------------------------
# validation


def test_validate_reports_problems():
    joints = (JointSpec("A", "prismatic", (0, 0, 0)), JointSpec("A", "hinge", (0, 0)))
    spec = LockboxSpec("bad", joints, (DependencyEdge("A", "Q", 2),), "Z", goal_state=0)
    problems = " | ".join(validate(spec))
    for text in ("duplicate", "unknown kind", "position", "unknown target", "dangling", "required_state"):
        assert text in problems


def test_validate_detects_cycle_and_self_edge():
    spec = make_spec([("A", "B", 1), ("B", "C", 1), ("C", "A", 0)], target="C")
    assert "cycle in dependency graph" in validate(spec)
    spec = make_spec([("A", "A", 1)], n=2, target="B")
    assert any("self-locking" in p for p in validate(spec))


# --------------------------------------------------------------------------
# relabelling and restriction


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_randomized_labels_preserve_structure(seed):
    spec = reference_config("sim-7-ID1")
    r = randomize_labels(spec, seed)
    assert r.target == spec.target
    assert list(r.ids) == sorted(r.ids)
    assert min_remaining_steps(r, r.initial_state()) == min_remaining_steps(spec, spec.initial_state())
    assert sorted(j.position for j in r.joints) == sorted(j.position for j in spec.joints)


def test_relabel_moves_edges():
    spec = make_spec([("A", "B", 1)], target="B")
    r = relabel(spec, {"A": "Z"})
    assert r.ids == ("B", "Z")
    assert r.edges == (DependencyEdge("Z", "B", 1),)


def test_restrict_keeps_prefix_and_picks_hardest_target():
    spec = reference_config("sim-7-ID1")
    targets = {n: restrict(spec, n).target for n in (4, 5, 6, 7)}
    assert targets[7] == "G"
    for n in (4, 5, 6):
        sub = restrict(spec, n)
        assert sub.ids == spec.ids[:n]
        best = max(min_remaining_steps(
            LockboxSpec("x", sub.joints, sub.edges, j), LockboxSpec("x", sub.joints, sub.edges, j).initial_state()
        ) or 0 for j in sub.ids)
        assert min_remaining_steps(sub, sub.initial_state()) == best >= 4
    with pytest.raises(LockboxError):
        restrict(spec, 9)


# --------------------------------------------------------------------------
# serialisation


def test_reference_configs_load_and_validate():
    for name in REFERENCE_CONFIGS:
        spec = reference_config(name)
        assert validate(spec) == []
        assert min_remaining_steps(spec, spec.initial_state()) is not None
    assert reference_config("physical-5").n == 5
    id1, id2 = reference_config("sim-7-ID1"), reference_config("sim-7-ID2")
    assert id1.joints == id2.joints and id1.target == id2.target == "G"


def test_json_round_trip(tmp_path):
    spec = reference_config("sim-7-ID2")
    path = tmp_path / "x.json"
    save_spec(spec, path)
    assert load_spec(path) == spec
    data = json.loads(path.read_text())
    data["notes"] = "ignored"
    assert spec_from_dict(data) == spec


def test_malformed_config_raises():
    with pytest.raises(LockboxError):
        spec_from_dict({"joints": [{"id": "A"}], "edges": [], "target": "A"})
    with pytest.raises(LockboxError):
        reference_config("no-such-config")


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_generator_is_valid_and_deterministic(seed):
    p = GeneratorParams(n_joints=5, seed=seed)
    a, b = generate_random(p), generate_random(p)
    assert a == b
    assert validate(a) == []
    assert min_remaining_steps(a, a.initial_state()) is not None
    assert spec_to_dict(a) == spec_to_dict(spec_from_dict(spec_to_dict(a)))


def test_distance_preference_shifts_edge_lengths():
    def mean_edge(p):
        lengths = []
        for seed in range(60):
            spec = generate_random(GeneratorParams(n_joints=7, distance_preference=p, seed=seed))
            pos = {j.id: np.array(j.position) for j in spec.joints}
            lengths += [np.linalg.norm(pos[e.locker] - pos[e.locked]) for e in spec.edges]
        return np.mean(lengths)

    assert mean_edge(-1.0) < mean_edge(1.0)


def test_neighbour_pools_split_near_and_far():
    pos = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
    near, far = neighbour_pools(pos)
    assert near[0] == {1, 2} and far[0] == {2, 3}
