"""Finite-history MDP of a known POMDP, built from exact aggregated beliefs.

Instead of enumerating histories one by one, the occupancy of the product chain
(hidden state, structure node, weighting node, observation) is propagated
forward. Summing it over the weighting node gives, for every ⟨n,z⟩, the
occupancy-weighted sum of the exact beliefs of all histories that land in
⟨n,z⟩, which is what explicit enumeration would produce.
"""
from __future__ import annotations

import math

import numpy as np

from .fsc import Fsc
from .mdp import TabularMdp
from .pomdp import Pomdp

STEP_CAP = 300


def default_horizon(k: int | None, gamma: float) -> int:
    k = k or 1
    if gamma <= 0.0:
        return min(STEP_CAP, k + 1)
    return min(STEP_CAP, k + math.ceil(math.log(1e-6) / math.log(gamma)))


def history_occupancy(pomdp: Pomdp, structure: Fsc, weighting: Fsc, horizon: int,
                      occupancy_discount: float = 1.0) -> tuple[np.ndarray, float]:
    """Occupancy over (s, structure node, z) of histories of length < horizon.

    Returns the [S, N, Z] occupancy array and the occupancy mass still alive
    (not yet terminated) at the horizon, weighted like the rest.
    """
    S, A, Z = pomdp.n_states, pomdp.n_actions, pomdp.n_observations
    Ns, Nw = structure.n_nodes, weighting.n_nodes
    if structure.n_obs != Z or weighting.n_obs != Z:
        raise ValueError("controllers and POMDP disagree on the observation count")
    live = ~pomdp.terminal_mask
    T, O = pomdp.transition, pomdp.observation

    mass = np.zeros((S, Ns, Nw, Z))
    mass[:, structure.initial_node, weighting.initial_node, :] = \
        pomdp.initial_belief[:, None] * pomdp.initial_observation
    mass[~live] = 0.0

    # flat target index of (η_s(n_s,z,a), η_w(n_w,z,a)) for every (n_s, n_w, z)
    targets = [
        (structure.eta[:, None, :, a] * Nw + weighting.eta[None, :, :, a]).reshape(-1)
        for a in range(A)
    ]
    occ = np.zeros_like(mass)
    w = 1.0
    for _ in range(horizon):
        occ += w * mass
        if not mass.any():
            break
        new = np.zeros((S, Ns * Nw, Z))
        for a in range(A):
            ma = mass * weighting.psi[None, None, :, :, a]
            moved = np.tensordot(T[:, a, :], ma, axes=([0], [0])).reshape(S, -1)
            agg = np.zeros((S, Ns * Nw))
            np.add.at(agg.T, targets[a], moved.T)
            new += agg[:, :, None] * O[:, a, None, :]
        new[~live] = 0.0
        mass = new.reshape(S, Ns, Nw, Z)
        w *= occupancy_discount
    alive = w * float(mass.sum())
    return occ.sum(axis=2), alive


def build_oracle_finite_history_mdp(pomdp: Pomdp, structure: Fsc, weighting: Fsc,
                                    horizon: int | None = None,
                                    occupancy_discount: float = 1.0) -> TabularMdp:
    """T_H and R_H over ⟨n,z⟩ for the structure's memory update.

    Beliefs of distinct histories sharing an ⟨n,z⟩ are averaged with weights
    equal to their expected visit counts under ``weighting`` (undiscounted by
    default, matching what count-based estimation converges to). ⟨n,z⟩ pairs
    never reached within the horizon are left undefined and listed in
    ``meta["unreached"]``.
    """
    if horizon is None:
        horizon = default_horizon(structure.window, pomdp.discount)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    S, A, Z = pomdp.n_states, pomdp.n_actions, pomdp.n_observations
    N = structure.n_nodes
    H = N * Z
    occ, alive = history_occupancy(pomdp, structure, weighting, horizon, occupancy_discount)

    weight = occ.sum(axis=0).reshape(H)                    # [H]
    reached = weight > 0
    beliefs = np.zeros((H, S))
    beliefs[reached] = (occ.reshape(S, H).T)[reached] / weight[reached, None]

    live = ~pomdp.terminal_mask
    trans = np.zeros((H + 1, A, H + 1))
    reward = np.zeros((H + 1, A))
    hist_nodes = np.repeat(np.arange(N), Z)
    hist_obs = np.tile(np.arange(Z), N)
    for a in range(A):
        landed = beliefs @ pomdp.transition[:, a, :]                 # [H, S']
        to_obs = landed[:, live] @ pomdp.observation[live, a, :]     # [H, Z']
        nxt = structure.eta[hist_nodes, hist_obs, a]                 # [H]
        cols = nxt[:, None] * Z + np.arange(Z)[None, :]
        np.add.at(trans[:H, a, :], (np.arange(H)[:, None], cols), to_obs)
        trans[:H, a, H] = landed[:, ~live].sum(axis=1)
        reward[:H, a] = beliefs @ pomdp.reward[:, a]
    trans[H, :, H] = 1.0
    trans[:H][~reached] = 0.0

    defined = np.zeros((H + 1, A), dtype=bool)
    defined[:H][reached] = True
    defined[H] = True

    initial = np.zeros(H + 1)
    start = pomdp.initial_belief @ pomdp.initial_observation           # [Z]
    initial[structure.initial_node * Z + np.arange(Z)] = start

    total = float(occ.sum())
    return TabularMdp(
        transition=trans, reward=reward, discount=pomdp.discount, initial=initial,
        defined=defined, n_nodes=N, n_obs=Z, reward_bounds=pomdp.reward_bounds,
        meta={
            "origin": "oracle",
            "horizon": horizon,
            "occupancy_discount": occupancy_discount,
            "truncation_weight": alive,
            "total_occupancy": total,
            "unreached": [int(h) for h in np.flatnonzero(~reached)],
            "beliefs": beliefs,
        },
    )
