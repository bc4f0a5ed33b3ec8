"""Deep Q-network baseline: a 2N -> 64 -> N ReLU network in plain numpy,
trained with experience replay, a target network and the remaining-steps
reward.

The observation is the joint-state vector followed by a one-hot encoding of
the last attempted joint, both in label order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core import LockboxError, LockboxSpec, LockboxState, distance_table, min_remaining_steps, randomize_labels
from .planners import SymbolicEnv, TrialResult

SOLVE_BONUS = 5
MANIFEST_VERSION = 1


# --------------------------------------------------------------------------
# network


@dataclass
class QNetwork:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, n_joints: int, hidden: int = 64, rng: np.random.Generator | None = None) -> QNetwork:
        rng = rng or np.random.default_rng(0)
        n_in = 2 * n_joints
        # He-uniform for the ReLU layer, Glorot-uniform for the linear head.
        a1 = np.sqrt(6.0 / n_in)
        a2 = np.sqrt(6.0 / (hidden + n_joints))
        return cls(
            rng.uniform(-a1, a1, (n_in, hidden)),
            np.zeros(hidden),
            rng.uniform(-a2, a2, (hidden, n_joints)),
            np.zeros(n_joints),
        )

    @property
    def n_joints(self) -> int:
        return self.w2.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> QNetwork:
        return QNetwork(*(p.copy() for p in self.params().values()))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.w1.shape[0]:
            raise ValueError(f"expected input of length {self.w1.shape[0]}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def loss_and_grads(self, x, actions, targets) -> tuple[float, dict[str, np.ndarray]]:
        """Mean of 0.5 (Q(s, a) - target)^2 over the batch, and its gradients."""
        x = np.atleast_2d(self._check(x))
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        b = len(x)
        pre = x @ self.w1 + self.b1
        h = np.maximum(pre, 0.0)
        q = h @ self.w2 + self.b2
        rows = np.arange(b)
        err = q[rows, actions] - targets
        loss = 0.5 * float(np.mean(err**2))
        dq = np.zeros_like(q)
        dq[rows, actions] = err / b
        dh = dq @ self.w2.T
        dpre = dh * (pre > 0)
        grads = {"w1": x.T @ dpre, "b1": dpre.sum(0), "w2": h.T @ dq, "b2": dq.sum(0)}
        return loss, grads


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, net: QNetwork, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in net.params().items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def td_targets(target_net: QNetwork, rewards, next_obs, dones, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0:
        return rewards.copy()
    q_next = target_net.forward(next_obs).max(axis=1)
    return rewards + gamma * (1.0 - np.asarray(dones, dtype=float)) * q_next


def qnet_backward(net: QNetwork, batch, gamma: float, optimizer: Adam, target_net: QNetwork) -> float:
    """One optimiser step on the squared TD error of ``batch``.

    ``batch`` is (obs, actions, rewards, next_obs, dones).
    """
    obs, actions, rewards, next_obs, dones = batch
    y = td_targets(target_net, rewards, next_obs, dones, gamma)
    loss, grads = net.loss_and_grads(obs, actions, y)
    optimizer.step(net, grads)
    return loss


# --------------------------------------------------------------------------
# environment pieces


def observation(bits, last_index: int | None) -> np.ndarray:
    n = len(bits)
    obs = np.zeros(2 * n)
    obs[:n] = bits
    if last_index is not None:
        obs[n + last_index] = 1.0
    return obs


def reward(spec: LockboxSpec, before: LockboxState, after: LockboxState, solved: bool) -> int:
    """Drop in remaining steps caused by one action, plus a bonus on solving."""
    d0 = min_remaining_steps(spec, before)
    d1 = min_remaining_steps(spec, after)
    if d0 is None or d1 is None:
        raise LockboxError("reward is undefined on unsolvable states")
    return d0 - d1 + (SOLVE_BONUS if solved else 0)


class _MaskEnv:
    """Bit-mask lockbox with a precomputed distance table, for fast training."""

    def __init__(self, spec: LockboxSpec):
        self.n = spec.n
        self.care = np.array([c for c, _ in spec.lock_masks], dtype=np.int64)
        self.value = np.array([v for _, v in spec.lock_masks], dtype=np.int64)
        self.dist = distance_table(spec)
        self.target, self.goal = spec.target_index, spec.goal_state
        self.mask = spec.initial_mask
        if self.dist[self.mask] < 0:
            raise LockboxError(f"{spec.name} is unsolvable")

    def bits(self) -> np.ndarray:
        return (self.mask >> np.arange(self.n)) & 1

    def step(self, a: int) -> tuple[int, bool]:
        before = self.mask
        if before & int(self.care[a]) == int(self.value[a]):
            self.mask = before ^ (1 << a)
        solved = (self.mask >> self.target) & 1 == self.goal
        r = int(self.dist[before] - self.dist[self.mask]) + (SOLVE_BONUS if solved else 0)
        return r, bool(solved)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.size = 0
        self._i = 0

    def push(self, obs, action, r, next_obs, done) -> None:
        i = self._i
        self.obs[i], self.actions[i], self.rewards[i] = obs, action, r
        self.next_obs[i], self.dones[i] = next_obs, float(done)
        self._i = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


# --------------------------------------------------------------------------
# training and evaluation


@dataclass
class DQNConfig:
    episodes: int = 10000
    gamma: float = 0.95
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.8
    replay_capacity: int = 10000
    batch_size: int = 64
    target_sync: int = 250
    max_episode_steps: int = 200
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1 or self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("invalid DQN configuration")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def epsilon(self, episode: int) -> float:
        horizon = max(1.0, self.eps_fraction * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class TrainLog:
    episode_steps: list[int] = field(default_factory=list)
    episode_solved: list[bool] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def label_randomizer(base: LockboxSpec) -> Callable[[np.random.Generator], LockboxSpec]:
    return lambda rng: randomize_labels(base, rng)


def dqn_train(cfg: DQNConfig, scale: int, generator: Callable[[np.random.Generator], LockboxSpec],
              log: TrainLog | None = None) -> QNetwork:
    """Train one network for lockboxes of ``scale`` joints drawn from ``generator``."""
    rng = np.random.default_rng(cfg.seed)
    net = QNetwork.init(scale, cfg.hidden, rng)
    target = net.copy()
    opt = Adam(lr=cfg.lr)
    buf = ReplayBuffer(cfg.replay_capacity, 2 * scale)
    updates = 0
    for ep in range(cfg.episodes):
        spec = generator(rng)
        if spec.n != scale:
            raise LockboxError(f"generator produced {spec.n} joints, expected {scale}")
        env = _MaskEnv(spec)
        eps = cfg.epsilon(ep)
        obs = observation(env.bits(), None)
        solved, t = False, 0
        for t in range(1, cfg.max_episode_steps + 1):
            if rng.random() < eps:
                a = int(rng.integers(scale))
            else:
                a = int(np.argmax(net.forward(obs)))
            r, solved = env.step(a)
            nxt = observation(env.bits(), a)
            buf.push(obs, a, r, nxt, solved)
            obs = nxt
            if buf.size >= cfg.batch_size:
                loss = qnet_backward(net, buf.sample(rng, cfg.batch_size), cfg.gamma, opt, target)
                updates += 1
                if log is not None and updates % 100 == 0:
                    log.losses.append(loss)
                if updates % cfg.target_sync == 0:
                    target = net.copy()
            if solved:
                break
        if log is not None:
            log.episode_steps.append(t)
            log.episode_solved.append(solved)
    return net


def dqn_solve(net: QNetwork, spec: LockboxSpec, max_steps: int = 1000) -> TrialResult:
    """Greedy rollout with the heuristic's step budget and counting."""
    if spec.n != net.n_joints:
        raise LockboxError(f"network expects {net.n_joints} joints, lockbox has {spec.n}")
    env = SymbolicEnv(spec)
    ids = env.joints()
    log: list[tuple[str, bool]] = []
    last = None
    while not env.solved() and env.steps() < max_steps:
        a = int(np.argmax(net.forward(observation(env.state.bits, last))))
        moved = env.try_manipulate(ids[a])
        log.append((ids[a], moved))
        last = a
    return TrialResult(env.solved(), env.steps(), log, None)


# --------------------------------------------------------------------------
# weight manifest


def net_to_manifest(net: QNetwork, meta: dict | None = None) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "meta": dict(meta or {}),
        "layers": [
            {"name": k, "shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
            for k, v in net.params().items()
        ],
    }


def net_from_manifest(data: dict) -> QNetwork:
    if data.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {data.get('version')!r}")
    arrays = {l["name"]: np.asarray(l["values"], dtype=float).reshape(l["shape"]) for l in data["layers"]}
    return QNetwork(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])


def save_net(net: QNetwork, path: str | Path, meta: dict | None = None) -> None:
    Path(path).write_text(json.dumps(net_to_manifest(net, meta)) + "\n")


def load_net(path: str | Path) -> QNetwork:
    return net_from_manifest(json.loads(Path(path).read_text()))


def config_dict(cfg: DQNConfig) -> dict:
    return asdict(cfg)
