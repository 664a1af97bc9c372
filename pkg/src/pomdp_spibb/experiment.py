"""Experiment grid: datasets × algorithms × (N∧, k′) with seeded, reproducible CSV output.

Seeding: every random phase draws from ``SeedSequence(master, spawn_key=key)``
where the key names the phase and the cell, e.g. ``(COLLECT, rep, size)`` or
``(EVAL, rep, size, k')``. Any cell can therefore be recomputed on its own, and
results do not depend on the grid composition or the worker count. All
policies of one (rep, size, k′) cell share the evaluation stream (common
random numbers), so SPIBB with N∧ = 0 and Basic RL give identical rows.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .behavior import train_behavior
from .bounds import SafetyReport
from .data import DEFAULT_SIZES, Dataset, collect_dataset, count, relabel
from .environments import EnvSpec, get_env
from .evaluation import (UndefinedNormalization, cvar, normalized_improvement,
                         reference_optimum, rollout_performance)
from .fsc import Fsc, lift_fsc
from .spi import SpibbConfig, bootstrapped_set, estimate_mle_mdp, spibb_policy

TRAIN, COLLECT, EVAL, BEHAVIOR_EVAL, REFERENCE = range(5)
FULL_N_WEDGE = (5, 7, 10, 15, 20, 30, 50, 70, 100)
ALGORITHMS = ("basic_rl", "spibb")

RESULT_COLUMNS = ("env", "k", "k_prime", "algorithm", "n_wedge", "size", "repetition",
                  "dataset_steps", "rho", "rho_stderr", "zeta", "epsilon", "rho_mle_improved",
                  "rho_mle_behavior", "n_unknown", "error")
SUMMARY_COLUMNS = ("env", "k", "k_prime", "algorithm", "n_wedge", "size", "n", "mean", "cvar10",
                   "cvar1", "norm_mean", "norm_cvar10", "norm_cvar1", "zeta_mean",
                   "behavior_rho", "max_rho")
PANEL_COLUMNS = ("algorithm", "size", "mean", "cvar10", "cvar1", "behavior_rho")


def rng_for(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key)))


def seed_for(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key)).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    env: str = "tiger"
    k: int = 2
    k_prime_grid: tuple[int, ...] | None = None     # None: (k, k+1)
    n_wedge_grid: tuple[int, ...] = FULL_N_WEDGE
    sizes: tuple[int, ...] = (10, 100, 1000)
    repetitions: int = 50
    eval_episodes: int = 2000
    behavior_episodes: int | None = None            # None: repetitions * eval_episodes
    delta: float = 0.05
    seed: int = 0
    max_steps: int = 300
    tau: float | None = None                        # None: environment default
    q_episodes: int = 5000
    k_max: int | None = None                        # None: max(k') + 1
    include_basic_rl: bool = True
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.k_prime_grid is None:
            self.k_prime_grid = (self.k, self.k + 1)
        self.k_prime_grid = tuple(int(x) for x in self.k_prime_grid)
        self.n_wedge_grid = tuple(int(x) for x in self.n_wedge_grid)
        self.sizes = tuple(int(x) for x in self.sizes)
        if not (self.k_prime_grid and self.sizes) or (not self.n_wedge_grid and not self.include_basic_rl):
            raise ValueError("experiment grids must be nonempty")
        if self.repetitions < 1 or self.eval_episodes < 1:
            raise ValueError("repetitions and eval_episodes must be >= 1")
        if min(self.k_prime_grid) < self.k:
            raise ValueError("k' must be >= k")
        if self.behavior_episodes is None:
            self.behavior_episodes = self.repetitions * self.eval_episodes
        if self.k_max is None:
            self.k_max = max(self.k_prime_grid) + 1

    @classmethod
    def full_scale(cls, **overrides) -> "ExperimentConfig":
        base = dict(sizes=DEFAULT_SIZES, repetitions=500, eval_episodes=10000,
                    n_wedge_grid=FULL_N_WEDGE)
        base.update(overrides)
        return cls(**base)


@dataclass
class EvalReport:
    config: ExperimentConfig
    behavior_rho: float
    max_rho: float
    rows: list[dict]
    summary: list[dict] = field(default_factory=list)

    def cell(self, algorithm: str, k_prime: int, n_wedge: int, size: int) -> dict:
        for r in self.summary:
            if (r["algorithm"], r["k_prime"], r["n_wedge"], r["size"]) == (algorithm, k_prime, n_wedge, size):
                return r
        raise KeyError((algorithm, k_prime, n_wedge, size))


def improve(env: EnvSpec, behavior: Fsc, dataset: Dataset, n_wedge: int, k_prime: int | None = None,
            delta: float = 0.05, v_max: float | None = None) -> tuple[Fsc, SafetyReport, int]:
    """Dataset → improved k′-window FSC. ``n_wedge=0`` is Basic RL.

    Returns the improved controller, its safety report and |U|.
    """
    k_prime = behavior.window if k_prime is None else k_prime
    lifted = lift_fsc(behavior, k_prime)
    data = relabel(dataset, lifted) if k_prime != behavior.window else dataset
    counts = count(data, lifted)
    mle = estimate_mle_mdp(counts, lifted, env.pomdp.discount, env.pomdp.reward_bounds)
    unknown = bootstrapped_set(counts, n_wedge)
    cfg = SpibbConfig(n_wedge=n_wedge, delta=delta, k_prime=k_prime,
                      v_max=env.v_max if v_max is None else v_max)
    improved, report = spibb_policy(mle, lifted, unknown, cfg)
    return improved, report, len(unknown)


def _cells(cfg: ExperimentConfig):
    algos = []
    if cfg.include_basic_rl:
        algos.append(("basic_rl", 0))
    algos += [("spibb", nw) for nw in cfg.n_wedge_grid]
    return algos


def run_cell(cfg: ExperimentConfig, env: EnvSpec, behavior: Fsc, rep: int, size: int) -> list[dict]:
    """All algorithm/hyperparameter rows for one (repetition, dataset size)."""
    dataset = collect_dataset(env, behavior, size, cfg.max_steps, rng_for(cfg.seed, COLLECT, rep, size))
    rows = []
    for kp in cfg.k_prime_grid:
        for algo, nw in _cells(cfg):
            row = dict(env=env.name, k=cfg.k, k_prime=kp, algorithm=algo, n_wedge=nw, size=size,
                       repetition=rep, dataset_steps=len(dataset), rho=math.nan,
                       rho_stderr=math.nan, zeta=math.nan, epsilon=math.nan,
                       rho_mle_improved=math.nan, rho_mle_behavior=math.nan, n_unknown=-1, error="")
            try:
                policy, report, n_unknown = improve(env, behavior, dataset, nw, kp, cfg.delta)
                perf = rollout_performance(env, policy, cfg.eval_episodes, cfg.max_steps,
                                           rng=rng_for(cfg.seed, EVAL, rep, size, kp))
                row.update(rho=perf.mean, rho_stderr=perf.stderr, zeta=report.zeta,
                           epsilon=report.epsilon, rho_mle_improved=report.rho_improved_mle,
                           rho_mle_behavior=report.rho_behavior_mle, n_unknown=n_unknown)
            except Exception as exc:  # noqa: BLE001 - one failed cell must not stop the grid
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def _run_cell_job(args):
    return run_cell(*args)


def aggregate(rows: list[dict], behavior_rho: float, max_rho: float) -> list[dict]:
    """Per-(algorithm, k′, N∧, size) statistics; a pure fold over result rows."""
    groups: dict[tuple, list[float]] = {}
    zetas: dict[tuple, list[float]] = {}
    meta: dict[tuple, dict] = {}
    for r in rows:
        key = (r["k_prime"], r["algorithm"], int(r["n_wedge"]), int(r["size"]))
        meta.setdefault(key, {"env": r["env"], "k": r["k"]})
        groups.setdefault(key, [])
        zetas.setdefault(key, [])
        if not r["error"]:
            groups[key].append(float(r["rho"]))
            zetas[key].append(float(r["zeta"]))
    out = []
    for key in sorted(groups, key=lambda t: (t[0], ALGORITHMS.index(t[1]), t[2], t[3])):
        vals = groups[key]
        kp, algo, nw, size = key
        stats = dict(mean=math.nan, cvar10=math.nan, cvar1=math.nan)
        if vals:
            stats = dict(mean=float(np.mean(vals)), cvar10=cvar(vals, 10), cvar1=cvar(vals, 1))
        norm = {}
        for name in ("mean", "cvar10", "cvar1"):
            try:
                norm["norm_" + name] = normalized_improvement(stats[name], behavior_rho, max_rho)
            except UndefinedNormalization:
                norm["norm_" + name] = math.nan
        out.append(dict(env=meta[key]["env"], k=meta[key]["k"], k_prime=kp, algorithm=algo,
                        n_wedge=nw, size=size, n=len(vals), **stats, **norm,
                        zeta_mean=float(np.mean(zetas[key])) if zetas[key] else math.nan,
                        behavior_rho=behavior_rho, max_rho=max_rho))
    return out


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    ints = {"k", "k_prime", "n_wedge", "size", "repetition", "dataset_steps", "n_unknown"}
    floats = {"rho", "rho_stderr", "zeta", "epsilon", "rho_mle_improved", "rho_mle_behavior"}
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append({k: int(v) if k in ints else float(v) if k in floats else v
                        for k, v in r.items()})
    return out


def panel_rows(summary: list[dict], k_prime: int, n_wedge: int) -> list[dict]:
    """One figure panel: SPIBB at (k′, N∧) plus Basic RL at k′."""
    return [r for r in summary if r["k_prime"] == k_prime
            and (r["algorithm"] == "basic_rl" or r["n_wedge"] == n_wedge)]


def write_outputs(report: EvalReport, out) -> None:
    cfg = report.config
    out = Path(out)
    (out / "panels").mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(report.rows, RESULT_COLUMNS))
    (out / "summary.csv").write_text(rows_to_csv(report.summary, SUMMARY_COLUMNS))
    for kp in cfg.k_prime_grid:
        for nw in cfg.n_wedge_grid:
            name = f"{report.rows[0]['env'] if report.rows else cfg.env}_k{cfg.k}_N{nw:03d}_kp{kp}.csv"
            (out / "panels" / name).write_text(rows_to_csv(panel_rows(report.summary, kp, nw),
                                                          PANEL_COLUMNS))
    manifest = dict(config=asdict(cfg), behavior_rho=report.behavior_rho, max_rho=report.max_rho,
                    seed_phases=dict(train=TRAIN, collect=COLLECT, eval=EVAL,
                                     behavior_eval=BEHAVIOR_EVAL, reference=REFERENCE))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def run_experiment(cfg: ExperimentConfig, behavior: Fsc | None = None,
                   env: EnvSpec | None = None) -> EvalReport:
    env = get_env(cfg.env) if env is None else env
    if behavior is None:
        behavior, _ = train_behavior(env, cfg.k, cfg.tau, seed=seed_for(cfg.seed, TRAIN),
                                     episodes=cfg.q_episodes)
    if behavior.window != cfg.k:
        raise ValueError(f"behavior has window {behavior.window}, config says k={cfg.k}")
    behavior_rho = rollout_performance(env, behavior, cfg.behavior_episodes, cfg.max_steps,
                                       rng=rng_for(cfg.seed, BEHAVIOR_EVAL)).mean
    max_rho = reference_optimum(env, cfg.k_max, cfg.behavior_episodes, cfg.max_steps,
                                rng=rng_for(cfg.seed, REFERENCE)).mean

    jobs = [(cfg, env, behavior, rep, size) for rep in range(cfg.repetitions) for size in cfg.sizes]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        results = [_run_cell_job(j) for j in jobs]
    rows = [r for chunk in results for r in chunk]
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    rows.sort(key=lambda r: (r["repetition"], r["size"], r["k_prime"], order[r["algorithm"]], r["n_wedge"]))
    report = EvalReport(cfg, behavior_rho, max_rho, rows, aggregate(rows, behavior_rho, max_rho))
    if cfg.out:
        write_outputs(report, cfg.out)
    return report
