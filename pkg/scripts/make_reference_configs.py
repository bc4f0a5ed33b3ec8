"""Regenerate the shipped lockbox configs in src/lockbox/configs/.

Positions sit on a wall tilted back by ~14 degrees (y = 0.25 z), so the
depth coordinate grows with height.  A and D are revolute, the rest
prismatic.  The ID2 variant keeps every joint where it is and rewires the
same dependency graph onto the embedding with the largest total locker to
locked distance, target G fixed.
"""

from __future__ import annotations

import argparse
import itertools
import json
from pathlib import Path

import numpy as np

from lockbox.core import (
    PRISMATIC,
    REVOLUTE,
    DependencyEdge,
    JointSpec,
    LockboxSpec,
    min_remaining_steps,
    restrict,
    spec_to_dict,
    validate,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "lockbox" / "configs"

XZ = {
    "A": (-0.10, 0.40),
    "B": (0.10, 0.40),
    "C": (-0.10, 0.20),
    "D": (0.10, 0.20),
    "E": (0.05, 0.60),
    "F": (-0.15, 0.60),
    "G": (-0.05, 0.78),
}
REVOLUTES = {"A", "D"}

# (locker, locked, required_state)
ID1_EDGES = [
    ("C", "A", 0), ("C", "D", 1),  # C is bistable
    ("D", "B", 1), ("A", "B", 1),
    ("A", "E", 1), ("B", "E", 1),
    ("A", "F", 1), ("E", "F", 1),
    ("F", "G", 1), ("E", "G", 0),
]

NOTES = {
    "sim-7-ID1": (
        "A locks B, E and F (one-to-many reading); C is bistable, "
        "C=0 frees A and locks D, C=1 the reverse; D->B one-to-one. E->F, B->E, "
        "F->G and E->G were added so that every restricted scale 4..7 needs at "
        "least four steps."
    ),
    "sim-7-ID2": (
        "Same joints as sim-7-ID1; the dependency graph is relabelled onto the "
        "joint placement that maximises total locker-to-locked distance (G kept "
        "as target), so joints are mostly locked by distant joints."
    ),
    "physical-5": "Joints A-E of sim-7-ID1 with their induced dependencies; target E.",
}


def joints() -> tuple[JointSpec, ...]:
    return tuple(
        JointSpec(k, REVOLUTE if k in REVOLUTES else PRISMATIC, (x, round(0.25 * z, 4), z), 0)
        for k, (x, z) in XZ.items()
    )


def id1() -> LockboxSpec:
    return LockboxSpec("sim-7-ID1", joints(), tuple(DependencyEdge(*e) for e in ID1_EDGES), "G")


def _relabel_edges(mapping: dict[str, str]) -> tuple[DependencyEdge, ...]:
    return tuple(DependencyEdge(mapping[a], mapping[b], v) for a, b, v in ID1_EDGES)


def id2() -> LockboxSpec:
    js = joints()
    pos = {j.id: np.asarray(j.position) for j in js}
    movable = [k for k in XZ if k != "G"]
    best = None
    for perm in itertools.permutations(movable):
        mapping = dict(zip(movable, perm), G="G")
        length = sum(np.linalg.norm(pos[mapping[a]] - pos[mapping[b]]) for a, b, _ in ID1_EDGES)
        # Strict ">" keeps the first permutation on ties, which is deterministic.
        if best is None or length > best[0] + 1e-12:
            best = (length, mapping)
    return LockboxSpec("sim-7-ID2", js, _relabel_edges(best[1]), "G")


def physical5() -> LockboxSpec:
    sub = restrict(id1(), 5)
    return LockboxSpec("physical-5", sub.joints, sub.edges, sub.target)


def build() -> dict[str, LockboxSpec]:
    return {"physical-5": physical5(), "sim-7-ID1": id1(), "sim-7-ID2": id2()}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=CONFIG_DIR)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, spec in build().items():
        problems = validate(spec)
        if problems:
            raise SystemExit(f"{name}: {problems}")
        data = spec_to_dict(spec)
        data["notes"] = NOTES[name]
        path = args.out / f"{name}.json"
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"{path}: target {spec.target}, {min_remaining_steps(spec, spec.initial_state())} steps")


if __name__ == "__main__":
    main()
