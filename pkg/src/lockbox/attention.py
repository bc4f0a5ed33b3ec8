"""Online attention over joints: a ridge regression on feature differences
between the last attempted joint and a candidate, refit on the most recent
five attempts."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

WINDOW = 5
N_FEATURES = 5  # |dx|, |dy|, |dz|, dk, bias
FEATURE_NAMES = ("abs_dx", "abs_dy", "abs_dz", "dk", "bias")


def feature_vector(last_pos, last_k: int, cand_pos, cand_k: int) -> np.ndarray:
    d = np.abs(np.asarray(cand_pos, dtype=float) - np.asarray(last_pos, dtype=float))
    return np.array([d[0], d[1], d[2], float(last_k - cand_k), 1.0])


def features(env, last: str | None, candidate: str) -> np.ndarray:
    """Features of ``candidate`` relative to ``last`` as seen through ``env``."""
    if last is None or last == candidate:
        return np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    lp, lk = env.features(last)
    cp, ck = env.features(candidate)
    return feature_vector(lp, lk, cp, ck)


def ridge_fit(X, y, lam: float = 1.0) -> np.ndarray:
    """Closed-form ridge solution of (X^T X + lam I) w = X^T y.

    The bias column is penalised like every other column.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    A = X.T @ X + lam * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ y)


@dataclass
class TrialSample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError("label must be +1 or -1")
        self.features = np.asarray(self.features, dtype=float)


@dataclass
class AttentionModel:
    lam: float = 1.0
    window: deque = field(default_factory=lambda: deque(maxlen=WINDOW))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))

    def update(self, sample: TrialSample) -> AttentionModel:
        self.window.append(sample)
        X = np.array([s.features for s in self.window])
        y = np.array([s.label for s in self.window], dtype=float)
        self.weights = ridge_fit(X, y, self.lam)
        return self

    def score(self, feats) -> float:
        return float(self.weights @ np.asarray(feats, dtype=float))

    def observe(self, env, last: str | None, joint: str, moved: bool) -> None:
        self.update(TrialSample(features(env, last, joint), 1 if moved else -1))

    def scores(self, env, last: str | None, joints) -> dict[str, float]:
        return {j: self.score(features(env, last, j)) for j in joints}
