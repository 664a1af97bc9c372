"""Policy performance estimates and aggregate risk metrics."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .environments import EnvSpec
from .fsc import Fsc, fsc_from_table, make_k_window_fsc, uniform_fsc
from .mdp import deterministic_table, value_iteration
from .oracle import build_oracle_finite_history_mdp
from .simulate import simulate


class Performance(NamedTuple):
    mean: float
    stderr: float


class UndefinedNormalization(ZeroDivisionError):
    """ρ(π_max) equals ρ(π_β), so normalized improvement is undefined."""


def rollout_performance(env: EnvSpec, policy: Fsc, episodes: int, max_steps: int = 300,
                        gamma: float | None = None,
                        rng: np.random.Generator | None = None) -> Performance:
    """Mean discounted return over ``episodes`` simulated episodes."""
    rng = np.random.default_rng() if rng is None else rng
    returns = simulate(env.pomdp, policy, episodes, max_steps, rng, gamma=gamma).returns
    if episodes < 2:
        return Performance(float(returns.mean()) if episodes else math.nan, math.nan)
    return Performance(float(returns.mean()), float(returns.std(ddof=1) / math.sqrt(episodes)))


def normalized_improvement(rho_i: float, rho_beta: float, rho_max: float) -> float:
    denom = rho_max - rho_beta
    if denom == 0:
        raise UndefinedNormalization("rho_max == rho_beta")
    return (rho_i - rho_beta) / denom


def cvar_count(n: int, x_percent: float) -> int:
    # round() guards against 10/100*50 evaluating to 5.000000000000001
    return max(1, math.ceil(round(x_percent * n / 100.0, 9)))


def cvar(values, x_percent: float) -> float:
    """Mean of the ⌈x% · n⌉ lowest values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cvar of an empty sequence")
    if not 0 < x_percent <= 100:
        raise ValueError("x_percent must be in (0, 100]")
    return float(v[:cvar_count(v.size, x_percent)].mean())


def optimal_window_fsc(env: EnvSpec, k: int, weighting: Fsc | None = None) -> tuple[Fsc, list]:
    """Greedy k-window controller for the oracle finite-history MDP.

    Beliefs are aggregated under ``weighting`` (uniform-random by default).
    Rows the oracle never reaches get a uniform action distribution and are
    returned in the second element.
    """
    pomdp = env.pomdp
    structure = make_k_window_fsc(k, pomdp.n_observations, pomdp.n_actions)
    weighting = uniform_fsc(pomdp.n_observations, pomdp.n_actions) if weighting is None else weighting
    oracle = build_oracle_finite_history_mdp(pomdp, structure, weighting)
    _, _, greedy = value_iteration(oracle)
    table = deterministic_table(greedy[:oracle.n_history_states], pomdp.n_actions)
    return fsc_from_table(structure, table), oracle.meta["unreached"]


def reference_optimum(env: EnvSpec, k_max: int, episodes: int = 2000, max_steps: int = 300,
                      rng: np.random.Generator | None = None) -> Performance:
    """ρ(π_max) estimate: roll out the oracle-optimal k_max-window controller."""
    fsc, _ = optimal_window_fsc(env, k_max)
    return rollout_performance(env, fsc, episodes, max_steps, rng=rng)
