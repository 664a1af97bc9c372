"""Behavior policies: tabular Q-learning on k-window history states, then softmax."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environments import EnvSpec
from .fsc import Fsc, fsc_from_table, make_k_window_fsc
from .pomdp import sample_start, step


@dataclass(frozen=True)
class QLearnConfig:
    k: int = 1
    episodes: int = 5000
    alpha0: float = 1.0
    epsilon0: float = 0.5
    decay: float = 0.002
    max_steps: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.episodes < 0 or self.max_steps < 1:
            raise ValueError("k >= 1, episodes >= 0 and max_steps >= 1 are required")
        if not (0.0 < self.alpha0 <= 1.0 and 0.0 <= self.epsilon0 <= 1.0):
            raise ValueError("alpha0 must be in (0, 1] and epsilon0 in [0, 1]")
        if self.decay < 0:
            raise ValueError("decay rate must be nonnegative")

    def schedule(self, i: int) -> tuple[float, float]:
        """(learning rate, exploration rate) for episode index i."""
        f = math.exp(-self.decay * i)
        return self.alpha0 * f, self.epsilon0 * f


@dataclass(eq=False)
class QTable:
    values: np.ndarray                    # [N*Z, A], indexed by history-state
    k: int
    log: list = field(default_factory=list)   # (episode, return, alpha, epsilon)

    def to_dict(self) -> dict:
        return {"k": self.k, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "QTable":
        return cls(np.array(doc["values"], dtype=float), int(doc["k"]))


def save_qtable(q: QTable, path) -> None:
    Path(path).write_text(json.dumps(q.to_dict()))


def load_qtable(path) -> QTable:
    return QTable.from_dict(json.loads(Path(path).read_text()))


def write_training_log(q: QTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "return", "alpha", "epsilon"))
        for ep, ret, alpha, eps in q.log:
            w.writerow((ep, repr(ret), repr(alpha), repr(eps)))


def train_q_learning(env: EnvSpec, cfg: QLearnConfig,
                     rng: np.random.Generator | None = None) -> QTable:
    """ε-greedy Q-learning where the state is the last k observations ⟨n,z⟩."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    pomdp = env.pomdp
    structure = make_k_window_fsc(cfg.k, pomdp.n_observations, pomdp.n_actions)
    Z, A = pomdp.n_observations, pomdp.n_actions
    eta = structure.eta
    gamma = pomdp.discount
    terminal = set(pomdp.terminal_states)
    Q = np.zeros((structure.n_history_states, A))
    log = []
    for i in range(cfg.episodes):
        alpha, eps = cfg.schedule(i)
        s, z = sample_start(pomdp, rng)
        n = structure.initial_node
        ret, disc = 0.0, 1.0
        for _ in range(cfg.max_steps):
            h = n * Z + z
            if rng.random() < eps:
                a = int(rng.integers(A))
            else:
                a = int(np.argmax(Q[h]))
            s, z2, r = step(pomdp, s, a, rng)
            n2 = int(eta[n, z, a])
            ret += disc * r
            disc *= gamma
            done = s in terminal
            target = r if done else r + gamma * Q[n2 * Z + z2].max()
            Q[h, a] += alpha * (target - Q[h, a])
            if done:
                break
            n, z = n2, z2
        log.append((i, ret, alpha, eps))
    return QTable(Q, cfg.k, log)


def softmax_policy(structure: Fsc, q: QTable | np.ndarray, tau: float) -> Fsc:
    """ψ(a|n,z) ∝ exp(τ Q(⟨n,z⟩, a)).

    The positive sign favours high-value actions, so large τ gives a
    near-greedy behavior and small τ a more exploratory one.
    """
    if tau <= 0:
        raise ValueError("softmax temperature must be positive")
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    logits = tau * values
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return fsc_from_table(structure, w / w.sum(axis=1, keepdims=True))


def train_behavior(env: EnvSpec, k: int, tau: float | None = None, seed: int = 0,
                   episodes: int = 5000) -> tuple[Fsc, QTable]:
    """Q-learning with the default schedule followed by softmax extraction."""
    cfg = QLearnConfig(k=k, episodes=episodes, seed=seed)
    q = train_q_learning(env, cfg, np.random.default_rng(seed))
    structure = make_k_window_fsc(k, env.pomdp.n_observations, env.pomdp.n_actions)
    return softmax_policy(structure, q, env.softmax_tau if tau is None else tau), q
