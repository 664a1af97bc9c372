"""Acceptance criteria 1-7, each at its stated tolerance.

Every test appends one PASS/FAIL line (printed in the terminal summary by
conftest.py) before asserting, so a failing criterion is still reported.
"""
import itertools
import math
import time
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from factories import (as_env, best_constrained_value, mle_from_steps, random_pomdp,
                       random_window_behavior)
from pomdp_spibb.bounds import epsilon, sufficiency_count, weissman_check, zeta_bound
from pomdp_spibb.data import Dataset, collect_dataset, count, relabel
from pomdp_spibb.environments import make_tiger
from pomdp_spibb.experiment import ExperimentConfig, run_experiment
from pomdp_spibb.fsc import fsc_from_table, lift_fsc, make_k_window_fsc
from pomdp_spibb.oracle import build_oracle_finite_history_mdp
from pomdp_spibb.spi import SpibbConfig, bootstrapped_set, estimate_mle_mdp, spibb_policy

MASTER_SEED = 0


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# 1 ---------------------------------------------------------------------------

def test_criterion_1_spibb_constraints():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_sum, worst_gap, violations = 0.0, math.inf, 0
    for _ in range(200):
        S, A, Z = (int(rng.integers(2, 5)), int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        env = as_env(random_pomdp(rng, S, A, Z))
        k = int(rng.integers(1, 3))
        k_prime = k + int(rng.integers(0, 2))
        behavior = random_window_behavior(rng, k, Z, A)
        data = collect_dataset(env, behavior, int(rng.integers(1, 60)), max_steps=40, rng=rng)
        n_wedge = int(rng.integers(0, 31))
        lifted = lift_fsc(behavior, k_prime)
        counts = count(relabel(data, lifted), lifted)
        mle = estimate_mle_mdp(counts, lifted, env.pomdp.discount, env.pomdp.reward_bounds)
        U = bootstrapped_set(counts, n_wedge)
        pi, rep = spibb_policy(mle, lifted, U, SpibbConfig(n_wedge=n_wedge))
        table = pi.table()
        if not np.array_equal(table[U.mask], lifted.table()[U.mask]):
            violations += 1
        worst_sum = max(worst_sum, float(np.max(np.abs(table.sum(axis=1) - 1.0))))
        worst_gap = min(worst_gap, rep.rho_improved_mle - rep.rho_behavior_mle)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and worst_sum <= 1e-12 and worst_gap >= -1e-8 and elapsed < 60
    assert report(1, ok, f"200 instances, U violations={violations}, max |row sum-1|={worst_sum:.1e}, "
                         f"min rho_I-rho_b={worst_gap:.2e}, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------

def test_criterion_2_brute_force():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        Z = int(rng.integers(1, 4))          # k = 1 window: Z history-states
        env = as_env(random_pomdp(rng, int(rng.integers(2, 4)), 2, Z))
        behavior = random_window_behavior(rng, 1, Z, 2)
        data = collect_dataset(env, behavior, int(rng.integers(1, 25)), max_steps=30, rng=rng)
        n_wedge = int(rng.integers(0, 12))
        counts = count(data, behavior)
        mle = estimate_mle_mdp(counts, behavior, env.pomdp.discount)
        _, rep = spibb_policy(mle, behavior, bootstrapped_set(counts, n_wedge),
                              SpibbConfig(n_wedge=n_wedge))
        T, R, init, visits = mle_from_steps(data, Z, 2, Z)
        best = best_constrained_value(T, R, init, env.pomdp.discount, behavior.table(), visits,
                                      n_wedge)
        worst = max(worst, abs(rep.rho_improved_mle - best))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60
    assert report(2, ok, f"100 instances, max |rho - brute force|={worst:.1e}, {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------

def test_criterion_3_bound_formulas():
    mp.mp.dps = 60
    rng = np.random.default_rng(303)
    worst = mp.mpf(0)
    count_mismatch = 0
    for _ in range(20):
        S = int(rng.integers(1, 5000))
        A, Z = int(rng.integers(1, 9)), int(rng.integers(1, 13))
        n_wedge = int(rng.integers(1, 1000))
        delta = float(rng.uniform(1e-4, 0.5))
        v_max = float(rng.uniform(1, 1000))
        gamma = float(rng.uniform(0, 0.99))
        rho_i, rho_b = (float(x) for x in rng.uniform(-10, 10, 2))
        zeta_in = float(rng.uniform(0.1, 100))

        log_arg = 2 * mp.mpf(S) * A * mp.mpf(2) ** Z / mp.mpf(delta)
        eps_ref = mp.sqrt(2 / mp.mpf(n_wedge) * mp.log(log_arg))
        zeta_ref = 4 * mp.mpf(v_max) / (1 - mp.mpf(gamma)) * eps_ref - mp.mpf(rho_i) + mp.mpf(rho_b)
        count_real = (8 * mp.mpf(v_max) ** 2 / (mp.mpf(zeta_in) ** 2 * (1 - mp.mpf(gamma)) ** 2)
                      * mp.log(log_arg))

        eps = epsilon(n_wedge, delta, S, A, Z)
        zeta = zeta_bound("finite-history", S, A, Z, n_wedge, delta, v_max, gamma, rho_i, rho_b).zeta
        n = sufficiency_count(zeta_in, delta, S, A, v_max, gamma, support_exp=Z)
        worst = max(worst, abs(mp.mpf(eps) - eps_ref) / eps_ref,
                    abs(mp.mpf(zeta) - zeta_ref) / abs(zeta_ref),
                    abs(mp.mpf(n) - count_real) / count_real if n != int(mp.ceil(count_real)) else 0)
        count_mismatch += n != int(mp.ceil(count_real))

    z_nw = [zeta_bound("finite-history", 6, 3, 2, nw, 0.05, 200, 0.95, 0, 0).zeta
            for nw in range(1, 201)]
    z_vm = [zeta_bound("finite-history", 6, 3, 2, 20, 0.05, v, 0.95, 0, 0).zeta
            for v in np.linspace(0.5, 500, 200)]
    monotone = all(a > b for a, b in zip(z_nw, z_nw[1:])) and all(a < b for a, b in zip(z_vm, z_vm[1:]))
    # 12 significant digits; an integer count may differ from the exact ceiling
    # only where the real value is within 1e-12 of an integer boundary
    ok = worst <= mp.mpf("1e-12") and monotone
    assert report(3, ok, f"20 parameter sets, max relative error={mp.nstr(worst, 3)}, "
                         f"count ceiling mismatches={count_mismatch}, monotone={monotone}")


# 4 ---------------------------------------------------------------------------

def test_criterion_4_weissman():
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    trials = 10**4
    worst_margin, lines = math.inf, []
    for n, m, eps in itertools.product((2, 3, 4), (10, 100, 1000), (0.2, 0.5)):
        p = rng.dirichlet(np.ones(n))
        counts = rng.multinomial(m, p, size=trials)
        freq = float(np.mean(np.abs(counts / m - p).sum(axis=1) >= eps))
        bound = weissman_check(n, m, eps)
        slack = 3 * math.sqrt(bound * (1 - bound) / trials)
        worst_margin = min(worst_margin, bound + slack - freq)
        lines.append((n, m, eps, freq, bound))
    elapsed = time.perf_counter() - start
    ok = worst_margin >= 0 and elapsed < 120
    tight = min((b - f, n, m, e) for n, m, e, f, b in lines)
    assert report(4, ok, f"18 configs x 1e4 trials, min (bound+3sigma-freq)={worst_margin:.4f} "
                         f"(tightest n={tight[1]} m={tight[2]} eps={tight[3]}), {elapsed:.1f}s")


# 5 ---------------------------------------------------------------------------

def _prefix(data: Dataset, min_steps: int) -> Dataset:
    """Shortest run of whole episodes holding at least ``min_steps`` steps."""
    ends = np.flatnonzero(data.done) + 1
    stop = int(ends[np.searchsorted(ends, min_steps)])
    cols = {c: getattr(data, c)[:stop] for c in ("episode", "t", "node", "obs", "action", "reward", "done")}
    return Dataset(**cols, meta=dict(data.meta, trajectories=int(data.episode[stop - 1]) + 1))


def test_criterion_5_mle_consistency():
    start = time.perf_counter()
    env = make_tiger()
    structure = make_k_window_fsc(2, 2, 3)
    behavior = fsc_from_table(structure, np.tile([0.8, 0.1, 0.1], (structure.n_history_states, 1)))
    oracle = build_oracle_finite_history_mdp(env.pomdp, structure, behavior)
    H = structure.n_history_states
    assert not oracle.meta["unreached"]

    # one long stream of episodes; each size uses a prefix of whole episodes
    data = collect_dataset(env, behavior, 30000, rng=np.random.default_rng(505))
    sizes = (10**2, 10**3, 10**4, 10**5)
    errors = []
    for n in sizes:
        mle = estimate_mle_mdp(count(_prefix(data, n), behavior), structure, env.pomdp.discount)
        # a pair without data has no estimate; it counts as the largest possible L1 of 2
        l1 = np.where(mle.defined[:H], np.abs(mle.transition[:H] - oracle.transition[:H]).sum(-1), 2.0)
        errors.append(float(l1.max()))
    inversions = sum(b > a for a, b in zip(errors, errors[1:]))
    elapsed = time.perf_counter() - start
    ok = inversions <= 1 and errors[-1] < 0.05 and elapsed < 120
    assert report(5, ok, "max row L1 at 1e2..1e5 steps = "
                         + ", ".join(f"{e:.4f}" for e in errors)
                         + f"; inversions={inversions}, {elapsed:.1f}s")


# 6 and 7 --------------------------------------------------------------------

DESK = dict(sizes=(10, 100, 1000), repetitions=50, eval_episodes=2000, delta=0.05,
            seed=MASTER_SEED)
RUNS = {
    "tiger": dict(env="tiger", k=2, k_prime_grid=(2,), n_wedge_grid=(20,)),
    "cheesemaze": dict(env="cheesemaze", k=2, k_prime_grid=(2,), n_wedge_grid=(5,)),
    "voicemail": dict(env="voicemail", k=1, k_prime_grid=(1, 2), n_wedge_grid=(5, 50)),
}


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    start = time.perf_counter()
    reports = {name: run_experiment(ExperimentConfig(**run, **DESK, out=str(root / name)))
               for name, run in RUNS.items()}
    return reports, root, time.perf_counter() - start


def test_criterion_6_qualitative(desk_runs):
    reports, _, elapsed = desk_runs
    checks = []

    tiger = reports["tiger"]
    rb = tiger.behavior_rho
    for size in (100, 1000):
        c = tiger.cell("spibb", 2, 20, size)["cvar10"]
        checks.append((f"6a tiger size {size}: spibb cvar10 {c:.2f} >= {rb - 0.1 * abs(rb):.2f}",
                       c >= rb - 0.1 * abs(rb)))
    basic = tiger.cell("basic_rl", 2, 0, 10)["cvar10"]
    spibb = tiger.cell("spibb", 2, 20, 10)["cvar10"]
    checks.append((f"6b tiger size 10: basic cvar10 {basic:.2f} < spibb {spibb:.2f}", basic < spibb))

    cheese = reports["cheesemaze"]
    for size in (10, 100, 1000):
        m = cheese.cell("spibb", 2, 5, size)["mean"]
        checks.append((f"6c cheesemaze size {size}: mean {m:.4f} >= behavior {cheese.behavior_rho:.4f}",
                       m >= cheese.behavior_rho))

    voice = reports["voicemail"]
    for nw in (5, 50):
        m2 = voice.cell("spibb", 2, nw, 1000)["mean"]
        m1 = voice.cell("spibb", 1, nw, 1000)["mean"]
        checks.append((f"6d voicemail N={nw}: k'=2 mean {m2:.3f} >= k'=1 mean {m1:.3f}", m2 >= m1))

    for text, ok in checks:
        ACCEPTANCE_LINES.append(f"    {'ok ' if ok else 'BAD'} {text}")
    ok = all(ok for _, ok in checks) and elapsed <= 30 * 60
    assert report(6, ok, f"{sum(o for _, o in checks)}/{len(checks)} orderings hold, "
                         f"desk runs took {elapsed:.0f}s")


def test_criterion_7_determinism(desk_runs, tmp_path):
    _, root, _ = desk_runs
    differing, compared = [], 0
    for name, run in RUNS.items():
        out = tmp_path / name
        run_experiment(ExperimentConfig(**run, **DESK, out=str(out), workers=2))
        for path in sorted((root / name).rglob("*.csv")):
            compared += 1
            if (out / path.relative_to(root / name)).read_bytes() != path.read_bytes():
                differing.append(str(path.relative_to(root)))
    ok = compared > 0 and not differing
    assert report(7, ok, f"{compared} CSV files compared after a rerun with 2 workers, "
                         f"differing: {differing or 'none'}")
