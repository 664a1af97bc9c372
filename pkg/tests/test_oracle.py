import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factories import one_state_pomdp, random_pomdp, random_window_behavior
from pomdp_spibb.environments import make_tiger
from pomdp_spibb.fsc import make_k_window_fsc, uniform_fsc
from pomdp_spibb.oracle import build_oracle_finite_history_mdp, default_horizon
from pomdp_spibb.pomdp import Pomdp


def enumerate_histories(pomdp, structure, weighting, horizon):
    """Walk every observation/action history of length < horizon one by one.

    Returns the per-⟨n,z⟩ sum of unnormalized joint state vectors P(history, s).
    """
    S, A, Z = pomdp.n_states, pomdp.n_actions, pomdp.n_observations
    live = ~pomdp.terminal_mask
    acc = np.zeros((structure.n_nodes * Z, S))
    stack = []
    for z in range(Z):
        alpha = pomdp.initial_belief * pomdp.initial_observation[:, z] * live
        stack.append((alpha, structure.initial_node, weighting.initial_node, z, 0))
    while stack:
        alpha, ns, nw, z, t = stack.pop()
        if alpha.sum() == 0.0:
            continue
        acc[ns * Z + z] += alpha
        if t + 1 >= horizon:
            continue
        for a in range(A):
            pa = weighting.psi[nw, z, a]
            if pa == 0.0:
                continue
            pred = alpha @ pomdp.transition[:, a, :]
            for z2 in range(Z):
                nxt = pa * pred * pomdp.observation[:, a, z2] * live
                stack.append((nxt, structure.eta[ns, z, a], weighting.eta[nw, z, a], z2, t + 1))
    return acc


def transition_from_beliefs(pomdp, structure, beliefs):
    S, A, Z = pomdp.n_states, pomdp.n_actions, pomdp.n_observations
    H = beliefs.shape[0]
    live = ~pomdp.terminal_mask
    T = np.zeros((H, A, H + 1))
    R = np.zeros((H, A))
    for h in range(H):
        n, z = divmod(h, Z)
        for a in range(A):
            R[h, a] = beliefs[h] @ pomdp.reward[:, a]
            for s in range(S):
                for s2 in range(S):
                    p = beliefs[h, s] * pomdp.transition[s, a, s2]
                    if not live[s2]:
                        T[h, a, H] += p
                        continue
                    for z2 in range(Z):
                        T[h, a, structure.eta[n, z, a] * Z + z2] += p * pomdp.observation[s2, a, z2]
    return T, R


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 5))
def test_product_chain_matches_history_enumeration(seed, k, horizon):
    rng = np.random.default_rng(seed)
    pomdp = random_pomdp(rng, 2, 2, 2)
    structure = make_k_window_fsc(k, 2, 2)
    weighting = random_window_behavior(rng, 2, 2, 2)
    mdp = build_oracle_finite_history_mdp(pomdp, structure, weighting, horizon=horizon)

    acc = enumerate_histories(pomdp, structure, weighting, horizon)
    weight = acc.sum(axis=1)
    reached = weight > 0
    beliefs = np.zeros_like(acc)
    beliefs[reached] = acc[reached] / weight[reached, None]
    T, R = transition_from_beliefs(pomdp, structure, beliefs)
    H = structure.n_history_states
    assert sorted(mdp.meta["unreached"]) == list(np.flatnonzero(~reached))
    np.testing.assert_allclose(mdp.meta["beliefs"], beliefs, atol=1e-12)
    np.testing.assert_allclose(mdp.transition[:H][reached], T[reached], atol=1e-12)
    np.testing.assert_allclose(mdp.reward[:H][reached], R[reached], atol=1e-12)
    assert not mdp.defined[:H][~reached].any()


def test_fully_observable_reduces_to_mdp():
    rng = np.random.default_rng(1)
    S, A = 3, 2
    T = rng.dirichlet(np.ones(S), size=(S, A))
    O = np.broadcast_to(np.eye(S)[:, None, :], (S, A, S))
    pomdp = Pomdp(T, O, rng.uniform(-1, 1, (S, A)), 0.9, np.ones(S) / S, np.eye(S))
    mdp = build_oracle_finite_history_mdp(pomdp, make_k_window_fsc(1, S, A), uniform_fsc(S, A))
    np.testing.assert_allclose(mdp.transition[:S, :, :S], T, atol=1e-12)
    np.testing.assert_allclose(mdp.reward[:S], pomdp.reward, atol=1e-12)
    np.testing.assert_allclose(mdp.initial[:S], np.ones(S) / S)


def test_tiger_memoryless_reward_is_belief_weighted():
    pomdp = make_tiger(0.85).pomdp
    structure = make_k_window_fsc(1, 2, 3)
    mdp = build_oracle_finite_history_mdp(pomdp, structure, uniform_fsc(2, 3))
    acc = enumerate_histories(pomdp, structure, uniform_fsc(2, 3), 8)
    for z in (0, 1):
        b = acc[z] / acc[z].sum()
        # truncating the enumeration at 8 steps changes the aggregated belief slightly
        assert mdp.reward[z, 1] == pytest.approx(b[0] * -100 + b[1] * 10, abs=0.05)
        bl = mdp.meta["beliefs"][z]
        assert mdp.reward[z, 1] == pytest.approx(bl[0] * -100 + bl[1] * 10, abs=1e-12)
    # hearing left makes tiger-left more likely, so opening left is worse there
    assert mdp.reward[0, 1] < mdp.reward[1, 1]


def test_one_state_point_masses():
    pomdp = one_state_pomdp(1.0)
    structure = make_k_window_fsc(2, 1, 1)
    mdp = build_oracle_finite_history_mdp(pomdp, structure, structure)
    for n in structure.reachable_nodes():
        row = mdp.transition[n, 0]
        assert row.max() == 1.0 and row.sum() == 1.0
        assert np.argmax(row) == structure.eta[n, 0, 0]


def test_short_horizon_flags_unreached():
    pomdp = make_tiger().pomdp
    structure = make_k_window_fsc(3, 2, 3)
    mdp = build_oracle_finite_history_mdp(pomdp, structure, uniform_fsc(2, 3), horizon=1)
    # only ⟨(pad,pad), z⟩ exists after one step
    reached = set(range(structure.n_history_states)) - set(mdp.meta["unreached"])
    assert reached == {structure.initial_node * 2, structure.initial_node * 2 + 1}
    assert not mdp.defined[sorted(mdp.meta["unreached"])].any()


def test_rows_are_distributions():
    rng = np.random.default_rng(2)
    pomdp = random_pomdp(rng, 3, 2, 3)
    mdp = build_oracle_finite_history_mdp(pomdp, make_k_window_fsc(2, 3, 2),
                                          random_window_behavior(rng, 1, 3, 2))
    sums = mdp.transition[mdp.defined].sum(axis=-1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_default_horizon():
    assert default_horizon(2, 0.95) == 2 + 270
    assert default_horizon(1, 0.999) == 300
