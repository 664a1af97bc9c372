"""Trajectory datasets ⟨⟨n,z⟩, a, r⟩ collected under a behavior FSC, and their counts."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environments import EnvSpec
from .fsc import Fsc, replay_nodes
from .simulate import _empty_steps, simulate

DEFAULT_SIZES = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000)
CSV_HEADER = ("episode_id", "t", "node", "obs", "action", "reward", "done")


class CorruptDatasetError(ValueError):
    """Recorded memory nodes disagree with the controller's memory update."""


@dataclass(eq=False)
class Dataset:
    episode: np.ndarray
    t: np.ndarray
    node: np.ndarray
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    done: np.ndarray      # True on the final step of each episode
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.episode.shape[0])

    @property
    def n_episodes(self) -> int:
        return int(self.meta.get("trajectories", len(np.unique(self.episode))))

    def episode_bounds(self) -> list[tuple[int, int]]:
        if len(self) == 0:
            return []
        starts = np.flatnonzero(self.t == 0)
        ends = np.append(starts[1:], len(self))
        return list(zip(starts.tolist(), ends.tolist()))


def empty_dataset(**meta) -> Dataset:
    return Dataset(**_empty_steps(), meta={"trajectories": 0, **meta})


def collect_dataset(env: EnvSpec, behavior: Fsc, num_trajectories: int, max_steps: int = 300,
                    rng: np.random.Generator | None = None, behavior_id: str = "") -> Dataset:
    rng = np.random.default_rng() if rng is None else rng
    batch = simulate(env.pomdp, behavior, num_trajectories, max_steps, rng, record=True)
    meta = {"env": env.name, "behavior": behavior_id, "k": behavior.window,
            "trajectories": int(num_trajectories), "max_steps": int(max_steps)}
    return Dataset(**batch.steps, meta=meta)


def concat(*datasets: Dataset) -> Dataset:
    parts, offset = [], 0
    for d in datasets:
        parts.append(d.episode + offset)
        offset += d.n_episodes
    cols = {k: np.concatenate([getattr(d, k) for d in datasets])
            for k in ("t", "node", "obs", "action", "reward", "done")}
    meta = dict(datasets[0].meta) if datasets else {}
    meta["trajectories"] = offset
    return Dataset(episode=np.concatenate(parts), **cols, meta=meta)


def relabel(dataset: Dataset, structure: Fsc) -> Dataset:
    """Re-derive the memory nodes by replaying each episode through ``structure``."""
    nodes = np.empty_like(dataset.node)
    for lo, hi in dataset.episode_bounds():
        nodes[lo:hi] = replay_nodes(structure, dataset.obs[lo:hi], dataset.action[lo:hi])
    meta = dict(dataset.meta, k=structure.window)
    return Dataset(dataset.episode, dataset.t, nodes, dataset.obs, dataset.action,
                   dataset.reward, dataset.done, meta)


@dataclass(eq=False)
class CountTable:
    visits: np.ndarray        # [H, A] #D(⟨n,z⟩, a)
    transitions: np.ndarray   # [H, A, H] successor counts, episode-final steps excluded
    reward_sums: np.ndarray   # [H, A] R_total(⟨n,z⟩, a)
    starts: np.ndarray        # [H] first history-state of each episode
    n_nodes: int
    n_obs: int

    @property
    def n_history_states(self) -> int:
        return self.visits.shape[0]

    @property
    def n_actions(self) -> int:
        return self.visits.shape[1]

    def __add__(self, other: "CountTable") -> "CountTable":
        return CountTable(self.visits + other.visits, self.transitions + other.transitions,
                          self.reward_sums + other.reward_sums, self.starts + other.starts,
                          self.n_nodes, self.n_obs)


def count(dataset: Dataset, fsc: Fsc) -> CountTable:
    """Occurrence counts of ⟨n,z⟩-action pairs and their within-episode successors."""
    Z, A = fsc.n_obs, fsc.n_actions
    H = fsc.n_history_states
    visits = np.zeros((H, A), dtype=np.int64)
    transitions = np.zeros((H, A, H), dtype=np.int64)
    reward_sums = np.zeros((H, A))
    starts = np.zeros(H, dtype=np.int64)
    if len(dataset) == 0:
        return CountTable(visits, transitions, reward_sums, starts, fsc.n_nodes, Z)

    node, obs, act = dataset.node, dataset.obs, dataset.action
    first = dataset.t == 0
    if np.any(node[first] != fsc.initial_node):
        raise CorruptDatasetError("an episode does not start in the controller's initial node")
    inner = np.flatnonzero(~dataset.done[:-1]) if len(dataset) > 1 else np.zeros(0, dtype=int)
    expected = fsc.eta[node[inner], obs[inner], act[inner]]
    if np.any(expected != node[inner + 1]):
        i = int(inner[np.flatnonzero(expected != node[inner + 1])[0]])
        raise CorruptDatasetError(f"step {i + 1} has node {int(node[i + 1])}, "
                                  f"memory update gives {int(fsc.eta[node[i], obs[i], act[i]])}")
    h = node * Z + obs
    np.add.at(visits, (h, act), 1)
    np.add.at(reward_sums, (h, act), dataset.reward)
    np.add.at(transitions, (h[inner], act[inner], h[inner + 1]), 1)
    np.add.at(starts, h[first], 1)
    return CountTable(visits, transitions, reward_sums, starts, fsc.n_nodes, Z)


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in zip(dataset.episode, dataset.t, dataset.node, dataset.obs, dataset.action,
                   dataset.reward, dataset.done):
        e, t, n, z, a, r, d = row
        w.writerow((int(e), int(t), int(n), int(z), int(a), _fmt(r), int(bool(d))))
    return buf.getvalue()


def save_dataset(dataset: Dataset, path) -> None:
    """Write ``<path>`` (CSV steps) and ``<path>.json`` (meta sidecar)."""
    path = Path(path)
    path.write_text(dataset_to_csv(dataset))
    Path(str(path) + ".json").write_text(json.dumps(dataset.meta, sort_keys=True, indent=1))


def load_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise CorruptDatasetError(f"unexpected header {header}")
        rows = list(reader)
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    if not rows:
        return empty_dataset(**meta)
    cols = list(zip(*rows))
    ints = lambda c: np.array([int(x) for x in c], dtype=np.int64)  # noqa: E731
    return Dataset(episode=ints(cols[0]), t=ints(cols[1]), node=ints(cols[2]), obs=ints(cols[3]),
                   action=ints(cols[4]), reward=np.array([float(x) for x in cols[5]]),
                   done=ints(cols[6]).astype(bool), meta=meta)
