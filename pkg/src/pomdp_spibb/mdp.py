"""Finite MDPs over history-states ⟨n,z⟩, with exact policy evaluation and value iteration.

State layout: history-state ⟨n,z⟩ has index ``n * n_obs + z``; the last index is an
absorbing zero-reward sink that collects episode terminations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TIE_TOL = 1e-10


class MissingDataError(RuntimeError):
    """An undefined (state, action) row is reachable under the policy being solved."""


@dataclass(eq=False)
class TabularMdp:
    transition: np.ndarray            # [S, A, S]
    reward: np.ndarray                # [S, A]
    discount: float
    initial: np.ndarray               # [S] distribution over starting history-states
    defined: np.ndarray               # [S, A] bool, False for rows with no data / unreached
    n_nodes: int
    n_obs: int
    counts: np.ndarray | None = None       # [S, A] int
    pair_counts: np.ndarray | None = None  # [S, A, S] int
    reward_bounds: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A = self.reward.shape
        if self.counts is None:
            self.counts = np.zeros((S, A), dtype=np.int64)
        if self.pair_counts is None:
            self.pair_counts = np.zeros((S, A, S), dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def sink(self) -> int:
        return self.n_states - 1

    @property
    def n_history_states(self) -> int:
        return self.n_nodes * self.n_obs

    def history_index(self, node: int, obs: int) -> int:
        return node * self.n_obs + obs


def sink_padded(table: np.ndarray) -> np.ndarray:
    """Append the sink row to a [H, A] policy table (the sink's row is irrelevant)."""
    H, A = table.shape
    return np.vstack([table, np.full((1, A), 1.0 / A)])


def _effective(mdp: TabularMdp) -> tuple[np.ndarray, np.ndarray]:
    # undefined rows act as zero-reward jumps to the sink
    T = np.array(mdp.transition, dtype=float)
    R = np.array(mdp.reward, dtype=float)
    undef = ~mdp.defined
    T[undef] = 0.0
    T[undef, mdp.sink] = 1.0
    R[undef] = 0.0
    return T, R


def _reachable(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    T, _ = _effective(mdp)
    P = np.einsum("sa,sat->st", policy, T) > 0
    seen = mdp.initial > 0
    frontier = seen.copy()
    while frontier.any():
        nxt = P[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return seen


def check_defined(mdp: TabularMdp, policy: np.ndarray) -> None:
    """Raise MissingDataError if the policy can reach an undefined row from the start."""
    reach = _reachable(mdp, policy)
    bad = reach[:, None] & (policy > 0) & ~mdp.defined
    if bad.any():
        s, a = (int(i) for i in np.argwhere(bad)[0])
        raise MissingDataError(f"policy reaches undefined row (state={s}, action={a})")


def q_values(mdp: TabularMdp, values: np.ndarray) -> np.ndarray:
    T, R = _effective(mdp)
    return R + mdp.discount * (T @ values)


def policy_evaluation(mdp: TabularMdp, policy: np.ndarray, tol: float = 1e-9,
                      undefined: str = "error") -> np.ndarray:
    """Exact V_π via the linear system (I - γ P_π) V = R_π.

    ``policy`` is an [S, A] table (or [S-1, A] without the sink row). With
    ``undefined="zero"`` undefined rows contribute zero reward and terminate;
    with ``"error"`` reaching one raises MissingDataError. ``tol`` is accepted
    for interface symmetry; the direct solve is exact to rounding.
    """
    policy = np.asarray(policy, dtype=float)
    if policy.shape[0] == mdp.n_states - 1:
        policy = sink_padded(policy)
    if undefined == "error":
        check_defined(mdp, policy)
    T, R = _effective(mdp)
    P = np.einsum("sa,sat->st", policy, T)
    r = (policy * R).sum(axis=1)
    A = np.eye(mdp.n_states) - mdp.discount * P
    return np.linalg.solve(A, r)


def performance(mdp: TabularMdp, values: np.ndarray) -> float:
    """ρ = expected value under the start distribution."""
    return float(mdp.initial @ values)


def greedy_actions(q: np.ndarray, allowed: np.ndarray, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Best allowed action per state, lowest index among near-ties; -1 where nothing is allowed."""
    qm = np.where(allowed, q, -np.inf)
    best = qm.max(axis=1)
    has = np.isfinite(best)
    thresh = best - tie_tol * np.maximum(1.0, np.abs(np.where(has, best, 0.0)))
    choice = np.argmax(qm >= thresh[:, None], axis=1)
    return np.where(has, choice, -1)


def deterministic_table(choice: np.ndarray, n_actions: int) -> np.ndarray:
    table = np.zeros((choice.shape[0], n_actions))
    ok = choice >= 0
    table[np.flatnonzero(ok), choice[ok]] = 1.0
    table[~ok] = 1.0 / n_actions
    return table


def value_iteration(mdp: TabularMdp, tol: float = 1e-9, max_iter: int = 100_000,
                    undefined: str = "error"):
    """Optimal values over defined actions.

    Runs Bellman sweeps until the sup-norm residual is below ``tol``, then
    polishes with policy-iteration steps so the returned values are exact for
    the returned greedy policy. Returns (V, Q, greedy) where greedy[s] = -1 for
    states without any defined action.
    """
    T, R = _effective(mdp)
    allowed = mdp.defined.copy()
    allowed[mdp.sink] = True
    gamma = mdp.discount
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = R + gamma * (T @ V)
        Qm = np.where(allowed, Q, -np.inf).max(axis=1)
        Vn = np.where(np.isfinite(Qm), Qm, 0.0)
        resid = np.max(np.abs(Vn - V))
        V = Vn
        if resid <= tol:
            break
    choice = greedy_actions(R + gamma * (T @ V), allowed)
    for _ in range(1000):
        V = policy_evaluation(mdp, deterministic_table(choice, mdp.n_actions), undefined="zero")
        Q = R + gamma * (T @ V)
        new = greedy_actions(Q, allowed)
        if np.array_equal(new, choice):
            break
        choice = new
    V = np.where(choice >= 0, V, 0.0)
    if undefined == "error":
        table = deterministic_table(choice, mdp.n_actions)
        reach = _reachable(mdp, table)
        dead = reach & (choice < 0)
        dead[mdp.sink] = False
        if dead.any():
            raise MissingDataError(f"greedy policy reaches state {int(np.flatnonzero(dead)[0])} "
                                   "with no defined action")
        check_defined(mdp, table)
    return V, Q, choice
