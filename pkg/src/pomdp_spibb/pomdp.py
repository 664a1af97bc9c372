"""Tabular POMDP model: validation, sampling, belief updates and JSON I/O.

Table conventions (all dense numpy arrays):

    transition[s, a, s']    P(s' | s, a)
    observation[s', a, z]   P(z | s', a), the observation emitted on landing in s'
    reward[s, a]            R(s, a)
    initial_observation[s, z]
                            P(z0 | s0), the observation available before the first action
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROW_TOL = 1e-9


class ModelError(ValueError):
    """A model table violates one of its invariants."""


class ImpossibleObservation(ValueError):
    """The observation has zero likelihood under the current belief."""


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_rows(table: np.ndarray, what: str, index_names: tuple[str, ...]) -> None:
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        bad = np.argwhere((table < 0) | ~np.isfinite(table))[0]
        raise ModelError(f"{what}: negative or non-finite entry at {tuple(int(i) for i in bad)}")
    sums = table.sum(axis=-1)
    off = np.abs(sums - 1.0) > ROW_TOL
    if np.any(off):
        idx = tuple(int(i) for i in np.argwhere(off)[0])
        where = ", ".join(f"{n}={i}" for n, i in zip(index_names, idx))
        raise ModelError(f"{what} row ({where}) sums to {sums[idx]!r}, expected 1")


@dataclass(frozen=True, eq=False)
class Pomdp:
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    initial_belief: np.ndarray
    initial_observation: np.ndarray
    terminal_states: tuple[int, ...] = ()
    reward_bounds: tuple[float, float] | None = None
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None
    observation_names: tuple[str, ...] | None = None
    _cdf: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("transition", _frozen(self.transition))
        set_("observation", _frozen(self.observation))
        set_("reward", _frozen(self.reward))
        set_("initial_belief", _frozen(self.initial_belief))
        set_("initial_observation", _frozen(self.initial_observation))
        set_("terminal_states", tuple(sorted(int(s) for s in self.terminal_states)))
        set_("discount", float(self.discount))
        if self.reward_bounds is None:
            set_("reward_bounds", (float(self.reward.min()), float(self.reward.max())))
        else:
            lo, hi = self.reward_bounds
            set_("reward_bounds", (float(lo), float(hi)))
        S, A, Z = self.n_states, self.n_actions, self.n_observations
        for name, n in (("state_names", S), ("action_names", A), ("observation_names", Z)):
            names = getattr(self, name)
            if names is None:
                names = tuple(str(i) for i in range(n))
            set_(name, tuple(str(x) for x in names))
        self.validate()
        self._cdf["T"] = np.cumsum(self.transition, axis=-1)
        self._cdf["O"] = np.cumsum(self.observation, axis=-1)
        self._cdf["b0"] = np.cumsum(self.initial_belief)
        self._cdf["O0"] = np.cumsum(self.initial_observation, axis=-1)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[2]

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask

    def validate(self) -> None:
        S, A = self.reward.shape
        Z = self.observation.shape[-1]
        if self.transition.shape != (S, A, S):
            raise ModelError(f"transition has shape {self.transition.shape}, expected {(S, A, S)}")
        if self.observation.shape != (S, A, Z):
            raise ModelError(f"observation has shape {self.observation.shape}, expected {(S, A, Z)}")
        if self.initial_observation.shape != (S, Z):
            raise ModelError(
                f"initial_observation has shape {self.initial_observation.shape}, expected {(S, Z)}")
        if self.initial_belief.shape != (S,):
            raise ModelError(f"initial_belief has shape {self.initial_belief.shape}, expected {(S,)}")
        _check_rows(self.transition, "transition", ("s", "a"))
        _check_rows(self.observation, "observation", ("s'", "a"))
        _check_rows(self.initial_observation, "initial_observation", ("s",))
        _check_rows(self.initial_belief[None, :], "initial_belief", ())
        if not 0.0 <= self.discount < 1.0:
            raise ModelError(f"discount {self.discount} outside [0, 1)")
        lo, hi = self.reward_bounds
        if lo > hi:
            raise ModelError(f"reward bounds ({lo}, {hi}) are inverted")
        out = (self.reward < lo) | (self.reward > hi)
        if np.any(out):
            s, a = (int(i) for i in np.argwhere(out)[0])
            raise ModelError(f"reward[s={s}, a={a}] = {self.reward[s, a]} outside bounds {self.reward_bounds}")
        for s in self.terminal_states:
            if not 0 <= s < S:
                raise ModelError(f"terminal state {s} out of range")
            for a in range(A):
                if self.transition[s, a, s] != 1.0:
                    raise ModelError(f"terminal state {s} does not self-loop under action {a}")
                if self.reward[s, a] != 0.0:
                    raise ModelError(f"terminal state {s} has nonzero reward under action {a}")

    def to_dict(self) -> dict:
        return {
            "states": list(self.state_names),
            "actions": list(self.action_names),
            "observations": list(self.observation_names),
            "transition": self.transition.tolist(),
            "observation": self.observation.tolist(),
            "reward": self.reward.tolist(),
            "reward_bounds": list(self.reward_bounds),
            "discount": self.discount,
            "initial_belief": self.initial_belief.tolist(),
            "initial_observation": self.initial_observation.tolist(),
            "terminal_states": [self.state_names[s] for s in self.terminal_states],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Pomdp":
        states = list(doc["states"])
        observations = list(doc["observations"])
        if "initial_observation" in doc:
            init_obs = doc["initial_observation"]
        else:
            init_obs = np.full((len(states), len(observations)), 1.0 / len(observations))
        terminal = [states.index(s) if isinstance(s, str) else int(s)
                    for s in doc.get("terminal_states", [])]
        return cls(
            transition=doc["transition"],
            observation=doc["observation"],
            reward=doc["reward"],
            discount=doc["discount"],
            initial_belief=doc["initial_belief"],
            initial_observation=init_obs,
            terminal_states=tuple(terminal),
            reward_bounds=tuple(doc["reward_bounds"]) if "reward_bounds" in doc else None,
            state_names=tuple(states),
            action_names=tuple(doc["actions"]),
            observation_names=tuple(observations),
        )


def save_pomdp(pomdp: Pomdp, path) -> None:
    Path(path).write_text(json.dumps(pomdp.to_dict(), indent=1))


def load_pomdp(path) -> Pomdp:
    return Pomdp.from_dict(json.loads(Path(path).read_text()))


def _draw(cdf_row: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf_row, u, side="right")), cdf_row.shape[0] - 1)


def draw_batch(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling, one categorical draw per row."""
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def step(pomdp: Pomdp, state: int, action: int, rng: np.random.Generator) -> tuple[int, int, float]:
    if not 0 <= state < pomdp.n_states:
        raise ValueError(f"invalid state {state}")
    if not 0 <= action < pomdp.n_actions:
        raise ValueError(f"invalid action {action}")
    next_state = _draw(pomdp._cdf["T"][state, action], rng.random())
    obs = _draw(pomdp._cdf["O"][next_state, action], rng.random())
    return next_state, obs, float(pomdp.reward[state, action])


def step_batch(pomdp: Pomdp, states: np.ndarray, actions: np.ndarray,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized `step` over parallel simulations."""
    n = states.shape[0]
    next_states = draw_batch(pomdp._cdf["T"][states, actions], rng.random(n))
    obs = draw_batch(pomdp._cdf["O"][next_states, actions], rng.random(n))
    return next_states, obs, pomdp.reward[states, actions]


def sample_start(pomdp: Pomdp, rng: np.random.Generator, n: int | None = None):
    """Draw initial state(s) from the initial belief and the matching first observation(s)."""
    if n is None:
        s = _draw(pomdp._cdf["b0"], rng.random())
        return s, _draw(pomdp._cdf["O0"][s], rng.random())
    s = draw_batch(np.broadcast_to(pomdp._cdf["b0"], (n, pomdp.n_states)), rng.random(n))
    z = draw_batch(pomdp._cdf["O0"][s], rng.random(n))
    return s, z


def belief_update(pomdp: Pomdp, belief: np.ndarray, action: int, obs: int) -> np.ndarray:
    """Bayes filter: b'(s') ∝ O(z|s',a) Σ_s T(s'|s,a) b(s)."""
    predicted = np.asarray(belief, dtype=float) @ pomdp.transition[:, action, :]
    unnorm = pomdp.observation[:, action, obs] * predicted
    total = unnorm.sum()
    if total <= 0.0:
        raise ImpossibleObservation(f"observation {obs} has zero likelihood after action {action}")
    return unnorm / total


def initial_posterior(pomdp: Pomdp, obs: int) -> np.ndarray:
    """Belief after seeing the first observation, before any action."""
    unnorm = pomdp.initial_belief * pomdp.initial_observation[:, obs]
    total = unnorm.sum()
    if total <= 0.0:
        raise ImpossibleObservation(f"initial observation {obs} has zero likelihood")
    return unnorm / total
