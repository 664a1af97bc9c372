"""Safe policy improvement with baseline bootstrapping on the finite-history MLE-MDP."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import SafetyReport, zeta_bound
from .data import CountTable
from .fsc import Fsc, IncompletePolicyError, fsc_from_table
from .mdp import (TabularMdp, greedy_actions, performance, policy_evaluation, q_values,
                  sink_padded)


@dataclass(frozen=True)
class SpibbConfig:
    n_wedge: int = 20
    delta: float = 0.05
    k_prime: int | None = None
    v_max: float | None = None       # None: R_max / (1 - γ) from the MDP's reward bounds
    tol: float = 1e-9
    max_policy_iterations: int = 1000

    def __post_init__(self):
        if self.n_wedge < 0:
            raise ValueError("n_wedge must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.v_max is not None and self.v_max < 0:
            raise ValueError("v_max must be >= 0")


@dataclass(frozen=True, eq=False)
class BootstrapSet:
    """Pairs (⟨n,z⟩, a) seen at most N∧ times; stored as an [H, A] mask."""

    mask: np.ndarray
    n_wedge: int

    @property
    def pairs(self) -> set[tuple[int, int]]:
        return {(int(h), int(a)) for h, a in np.argwhere(self.mask)}

    def __contains__(self, pair) -> bool:
        h, a = pair
        return bool(self.mask[h, a])

    def __len__(self) -> int:
        return int(self.mask.sum())


def estimate_mle_mdp(counts: CountTable, structure: Fsc | None = None, gamma: float = 0.95,
                     reward_bounds: tuple[float, float] | None = None) -> TabularMdp:
    """Count-based MLE of T_H and R_H.

    Mass of episode-final steps goes to the sink, so every visited row is a
    distribution. Unvisited rows stay undefined (see ``meta["unknown_rows"]``).
    """
    H, A = counts.visits.shape
    if structure is not None and structure.n_history_states != H:
        raise ValueError("count table and structure disagree on the number of history-states")
    S = H + 1
    pair_counts = np.zeros((S, A, S), dtype=np.int64)
    pair_counts[:H, :, :H] = counts.transitions
    pair_counts[:H, :, H] = counts.visits - counts.transitions.sum(axis=2)
    visits = np.zeros((S, A), dtype=np.int64)
    visits[:H] = counts.visits
    seen = visits > 0

    trans = np.zeros((S, A, S))
    reward = np.zeros((S, A))
    trans[seen] = pair_counts[seen] / visits[seen][:, None]
    reward[:H][seen[:H]] = counts.reward_sums[seen[:H]] / counts.visits[seen[:H]]
    trans[H, :, H] = 1.0
    defined = seen.copy()
    defined[H] = True

    initial = np.zeros(S)
    n_starts = counts.starts.sum()
    if n_starts > 0:
        initial[:H] = counts.starts / n_starts
    return TabularMdp(
        transition=trans, reward=reward, discount=gamma, initial=initial, defined=defined,
        n_nodes=counts.n_nodes, n_obs=counts.n_obs, counts=visits, pair_counts=pair_counts,
        reward_bounds=reward_bounds,
        meta={"origin": "mle", "unknown_rows": [(int(h), int(a)) for h, a in np.argwhere(~seen[:H])]},
    )


def bootstrapped_set(counts: CountTable | np.ndarray, n_wedge: int) -> BootstrapSet:
    """U = {(⟨n,z⟩, a) : #D(⟨n,z⟩, a) <= N∧}, over the full ⟨n,z⟩ × A grid."""
    visits = counts.visits if isinstance(counts, CountTable) else np.asarray(counts)
    return BootstrapSet(mask=visits <= n_wedge, n_wedge=n_wedge)


def _behavior_table(mle: TabularMdp, behavior: Fsc) -> np.ndarray:
    H, A = mle.n_history_states, mle.n_actions
    table = behavior.table()
    if table.shape != (H, A):
        raise IncompletePolicyError(
            f"behavior covers {table.shape} history-state/action pairs, MLE-MDP has {(H, A)}")
    return table


def _default_v_max(mle: TabularMdp) -> float:
    r_max = mle.reward_bounds[1] if mle.reward_bounds is not None else float(mle.reward.max())
    if r_max <= 0:
        r_max = float(np.abs(mle.reward).max())
    return r_max / (1.0 - mle.discount)


def constrained_improvement(mle: TabularMdp, pi_b: np.ndarray, unknown: np.ndarray,
                            tol: float = 1e-9, max_iter: int = 1000) -> tuple[np.ndarray, int]:
    """Policy iteration over policies that copy π_β on the unknown pairs.

    At each state the behavior mass of the known (not-unknown, visited) actions
    is moved onto the known action with the highest Q under the current
    policy; unknown pairs keep π_β's probability exactly.
    """
    H = pi_b.shape[0]
    known = ~unknown & mle.defined[:H]
    free = np.where(known, pi_b, 0.0).sum(axis=1)
    base = np.where(known, 0.0, pi_b)
    policy = pi_b.copy()
    choice = np.full(H, -2)
    for it in range(1, max_iter + 1):
        V = policy_evaluation(mle, policy, tol, undefined="zero")
        Q = q_values(mle, V)[:H]
        new = greedy_actions(Q, known)
        if np.array_equal(new, choice):
            return policy, it
        choice = new
        policy = base.copy()
        rows = np.flatnonzero(choice >= 0)
        policy[rows, choice[rows]] += free[rows]
    return policy, max_iter


def spibb_policy(mle: TabularMdp, behavior: Fsc, unknown: BootstrapSet,
                 cfg: SpibbConfig) -> tuple[Fsc, SafetyReport]:
    """Improved FSC (same nodes, n0 and η as ``behavior``) and its ζ report.

    ``behavior`` must already live on the MLE-MDP's window (see ``lift_fsc``).
    """
    pi_b = _behavior_table(mle, behavior)
    if unknown.mask.shape != pi_b.shape:
        raise ValueError("bootstrapped set does not match the MLE-MDP")
    policy, _ = constrained_improvement(mle, pi_b, unknown.mask, cfg.tol,
                                        cfg.max_policy_iterations)
    improved = fsc_from_table(behavior, policy)

    rho_i = performance(mle, policy_evaluation(mle, sink_padded(policy), undefined="zero"))
    rho_b = performance(mle, policy_evaluation(mle, sink_padded(pi_b), undefined="zero"))
    v_max = _default_v_max(mle) if cfg.v_max is None else cfg.v_max
    report = zeta_bound("finite-history", state_count=mle.n_history_states,
                        action_count=mle.n_actions, obs_count=mle.n_obs, n_wedge=unknown.n_wedge,
                        delta=cfg.delta, v_max=v_max, gamma=mle.discount,
                        rho_improved_mle=rho_i, rho_behavior_mle=rho_b)
    return improved, report


def basic_rl_policy(mle: TabularMdp, behavior: Fsc, cfg: SpibbConfig | None = None) -> Fsc:
    """Unconstrained solve of the MLE-MDP: SPIBB with N∧ = 0.

    History-states without any data keep the behavior's action distribution.
    """
    cfg = SpibbConfig(n_wedge=0) if cfg is None else cfg
    unknown = bootstrapped_set(mle.counts[:mle.n_history_states], 0)
    improved, _ = spibb_policy(mle, behavior, unknown, cfg)
    return improved
