"""Batched episode simulation of a POMDP driven by an FSC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fsc import Fsc
from .pomdp import Pomdp, draw_batch, sample_start, step_batch


@dataclass
class EpisodeBatch:
    returns: np.ndarray          # discounted return per episode
    lengths: np.ndarray
    steps: dict | None = None    # flat step records, sorted by (episode, t)


def simulate(pomdp: Pomdp, fsc: Fsc, n_episodes: int, max_steps: int,
             rng: np.random.Generator, gamma: float | None = None,
             record: bool = False) -> EpisodeBatch:
    """Run ``n_episodes`` in lockstep until each terminates or hits ``max_steps``."""
    if fsc.n_obs != pomdp.n_observations or fsc.n_actions != pomdp.n_actions:
        raise ValueError("controller does not match the POMDP's observation/action sets")
    gamma = pomdp.discount if gamma is None else gamma
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)
    if n_episodes == 0:
        return EpisodeBatch(returns, lengths, _empty_steps() if record else None)

    terminal = pomdp.terminal_mask
    state, obs = sample_start(pomdp, rng, n_episodes)
    node = np.full(n_episodes, fsc.initial_node, dtype=np.int64)
    active = np.arange(n_episodes)
    chunks = []
    disc = 1.0
    for t in range(max_steps):
        if active.size == 0:
            break
        s, z, n = state[active], obs[active], node[active]
        a = draw_batch(fsc._cdf[n, z], rng.random(active.size))
        s2, z2, r = step_batch(pomdp, s, a, rng)
        returns[active] += disc * r
        lengths[active] += 1
        ended = terminal[s2] | (t == max_steps - 1)
        if record:
            chunks.append((active, np.full(active.size, t), n, z, a, r, ended))
        state[active], obs[active] = s2, z2
        node[active] = fsc.eta[n, z, a]
        active = active[~terminal[s2]]
        disc *= gamma

    steps = None
    if record:
        cols = [np.concatenate(c) for c in zip(*chunks)]
        order = np.lexsort((cols[1], cols[0]))
        steps = dict(zip(("episode", "t", "node", "obs", "action", "reward", "done"),
                         (c[order] for c in cols)))
    return EpisodeBatch(returns, lengths, steps)


def _empty_steps() -> dict:
    ints = np.zeros(0, dtype=np.int64)
    return {"episode": ints, "t": ints, "node": ints, "obs": ints, "action": ints,
            "reward": np.zeros(0), "done": np.zeros(0, dtype=bool)}
