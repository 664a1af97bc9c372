"""Finite-state controllers and the k-window memory structure."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PAD = -1  # pre-episode slot in a window label


class IncompletePolicyError(ValueError):
    """An action table is missing rows or has rows that are not distributions."""


@dataclass(frozen=True, eq=False)
class Fsc:
    """Controller ⟨N, n0, ψ, η⟩ with ψ stored as psi[n, z, a] and η as eta[n, z, a]."""

    psi: np.ndarray
    eta: np.ndarray
    initial_node: int = 0
    labels: tuple | None = None
    window: int | None = None

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float)
        eta = np.array(self.eta, dtype=np.int64)
        psi.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "eta", eta)
        if psi.ndim != 3 or eta.shape != psi.shape:
            raise ValueError(f"psi {psi.shape} and eta {eta.shape} must both be [N, Z, A]")
        if np.any(psi < 0) or np.any(np.abs(psi.sum(axis=-1) - 1.0) > 1e-9):
            raise IncompletePolicyError("psi rows must be probability distributions")
        if eta.min() < 0 or eta.max() >= psi.shape[0]:
            raise ValueError("eta maps outside the node set")
        if not 0 <= self.initial_node < psi.shape[0]:
            raise ValueError(f"initial node {self.initial_node} out of range")
        object.__setattr__(self, "_cdf", np.cumsum(psi, axis=-1))

    @property
    def n_nodes(self) -> int:
        return self.psi.shape[0]

    @property
    def n_obs(self) -> int:
        return self.psi.shape[1]

    @property
    def n_actions(self) -> int:
        return self.psi.shape[2]

    @property
    def n_history_states(self) -> int:
        return self.n_nodes * self.n_obs

    def table(self) -> np.ndarray:
        """ψ as an [N*Z, A] table indexed by history-state."""
        return self.psi.reshape(-1, self.n_actions)

    def reachable_nodes(self) -> set[int]:
        seen = {self.initial_node}
        stack = [self.initial_node]
        while stack:
            n = stack.pop()
            for m in np.unique(self.eta[n]):
                if int(m) not in seen:
                    seen.add(int(m))
                    stack.append(int(m))
        return seen

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "initial_node": self.initial_node,
            "labels": None if self.labels is None else [list(l) for l in self.labels],
            "psi": self.psi.tolist(),
            "eta": self.eta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Fsc":
        labels = doc.get("labels")
        return cls(
            psi=doc["psi"],
            eta=doc["eta"],
            initial_node=doc["initial_node"],
            labels=None if labels is None else tuple(tuple(l) for l in labels),
            window=doc.get("window"),
        )


def save_fsc(fsc: Fsc, path) -> None:
    Path(path).write_text(json.dumps(fsc.to_dict()))


def load_fsc(path) -> Fsc:
    return Fsc.from_dict(json.loads(Path(path).read_text()))


def window_labels(k: int, n_obs: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(PAD, n_obs), repeat=k - 1))


def make_k_window_fsc(k: int, n_obs: int, n_actions: int) -> Fsc:
    """Controller whose node holds the last k-1 observations.

    Together with the incoming observation z the pair ⟨n,z⟩ identifies the last
    k observations. Slots before the episode start hold PAD. ψ is uniform.
    """
    if k < 1:
        raise ValueError("window length k must be >= 1")
    labels = window_labels(k, n_obs)
    index = {lab: i for i, lab in enumerate(labels)}
    N = len(labels)
    eta = np.empty((N, n_obs, n_actions), dtype=np.int64)
    for i, lab in enumerate(labels):
        for z in range(n_obs):
            eta[i, z, :] = index[(lab + (z,))[1:]]
    psi = np.full((N, n_obs, n_actions), 1.0 / n_actions)
    return Fsc(psi=psi, eta=eta, initial_node=index[(PAD,) * (k - 1)],
               labels=tuple(labels), window=k)


def uniform_fsc(n_obs: int, n_actions: int) -> Fsc:
    return make_k_window_fsc(1, n_obs, n_actions)


def fsc_step(fsc: Fsc, node: int, obs: int, rng: np.random.Generator) -> tuple[int, int]:
    cdf = fsc._cdf[node, obs]
    a = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.shape[0] - 1)
    return a, int(fsc.eta[node, obs, a])


def fsc_from_table(structure: Fsc, action_table) -> Fsc:
    """New controller with ψ′ = action_table and the structure's nodes, n0 and η."""
    table = np.asarray(action_table, dtype=float)
    shape = structure.psi.shape
    if table.shape == (shape[0] * shape[1], shape[2]):
        table = table.reshape(shape)
    if table.shape != shape:
        raise IncompletePolicyError(f"action table has shape {table.shape}, expected {shape}")
    bad = ~np.isfinite(table).all(axis=-1) | (np.abs(table.sum(axis=-1) - 1.0) > 1e-9) \
        | (table < 0).any(axis=-1)
    if bad.any():
        n, z = (int(i) for i in np.argwhere(bad)[0])
        raise IncompletePolicyError(f"action table row (n={n}, z={z}) is missing or not normalized")
    return Fsc(psi=table, eta=structure.eta, initial_node=structure.initial_node,
               labels=structure.labels, window=structure.window)


def lift_fsc(fsc: Fsc, k_new: int) -> Fsc:
    """Re-express a k-window controller on a k_new-window structure (k_new >= k).

    The lifted ψ ignores the extra, older window slots.
    """
    if fsc.window is None:
        raise ValueError("only window controllers can be lifted")
    k = fsc.window
    if k_new < k:
        raise ValueError(f"cannot lift a {k}-window controller down to {k_new}")
    target = make_k_window_fsc(k_new, fsc.n_obs, fsc.n_actions)
    if k_new == k:
        return fsc_from_table(target, fsc.psi)
    old_index = {lab: i for i, lab in enumerate(fsc.labels)}
    drop = k_new - k
    psi = np.empty_like(target.psi)
    for i, lab in enumerate(target.labels):
        psi[i] = fsc.psi[old_index[lab[drop:]]]
    return fsc_from_table(target, psi)


def replay_nodes(fsc: Fsc, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Node sequence visited by the controller for one episode's observations and actions."""
    nodes = np.empty(len(obs), dtype=np.int64)
    n = fsc.initial_node
    for t in range(len(obs)):
        nodes[t] = n
        n = fsc.eta[n, obs[t], actions[t]]
    return nodes
