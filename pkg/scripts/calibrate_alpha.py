"""Sweep the PCA threshold alpha of the joint-type classifier.

For each alpha, classify random lines and 90-180 degree arcs, with and
without 1 mm position noise, and print the accuracy.  Also prints the
normalised spectrum of a quarter-circle arc, the tightest revolute case the
lockbox produces.
"""

from __future__ import annotations

import argparse

import numpy as np

from lockbox.sim import classify_joint_type, synthetic_arc, synthetic_line


def spectrum(points: np.ndarray) -> np.ndarray:
    c = points - points.mean(axis=0)
    lam = np.sort(np.linalg.eigvalsh(c.T @ c))[::-1]
    return lam / lam.sum()


def accuracy(alpha: float, geometries: int, noise: float, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    lines = np.mean([classify_joint_type(synthetic_line(rng, 50, noise), alpha) == 1 for _ in range(geometries)])
    arcs = np.mean([classify_joint_type(synthetic_arc(rng, 50, noise), alpha) == -1 for _ in range(geometries)])
    return float(lines), float(arcs)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--geometries", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    phi = np.linspace(0, np.pi / 2, 50)
    quarter = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=1)
    print("quarter arc spectrum:", np.round(spectrum(quarter), 4))
    print(f"{'alpha':>6} {'line':>6} {'arc':>6} {'line+1mm':>9} {'arc+1mm':>8}")
    for alpha in (0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.08):
        clean = accuracy(alpha, args.geometries, 0.0, args.seed)
        noisy = accuracy(alpha, args.geometries, 0.001, args.seed + 1)
        print(f"{alpha:>6.3f} {clean[0]:>6.3f} {clean[1]:>6.3f} {noisy[0]:>9.3f} {noisy[1]:>8.3f}")


if __name__ == "__main__":
    main()
