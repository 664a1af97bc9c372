"""Built-in benchmark POMDPs: CheeseMaze, Tiger and Voicemail.

Rewards follow the standard benchmark descriptions. Noise levels and priors
that those descriptions leave open are constructor parameters whose defaults
are the usual literature values; each environment records which is which in
``EnvSpec.provenance_notes``.

Every episodic environment has one extra absorbing, zero-reward ``done`` state
that the episode enters when it ends.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pomdp import Pomdp, load_pomdp

GAMMA = 0.95


@dataclass(frozen=True, eq=False)
class EnvSpec:
    name: str
    pomdp: Pomdp
    param_overrides: dict = field(default_factory=dict)
    provenance_notes: str = ""
    softmax_tau: float = 1.0  # behavior-policy temperature used by the experiment grid

    @property
    def v_max(self) -> float:
        return self.pomdp.reward_bounds[1] / (1.0 - self.pomdp.discount)


def make_tiger(listen_accuracy: float = 0.85) -> EnvSpec:
    if not 0.5 <= listen_accuracy <= 1.0:
        raise ValueError(f"listen accuracy {listen_accuracy} outside [0.5, 1]")
    LEFT, RIGHT, DONE = 0, 1, 2
    LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
    S, A, Z = 3, 3, 2
    T = np.zeros((S, A, S))
    O = np.full((S, A, Z), 0.5)
    R = np.zeros((S, A))
    for s in (LEFT, RIGHT):
        T[s, LISTEN, s] = 1.0
        T[s, OPEN_LEFT, DONE] = T[s, OPEN_RIGHT, DONE] = 1.0
        O[s, LISTEN, s] = listen_accuracy          # hear-left = 0, hear-right = 1
        O[s, LISTEN, 1 - s] = 1.0 - listen_accuracy
        R[s, LISTEN] = -1.0
    R[LEFT, OPEN_LEFT] = R[RIGHT, OPEN_RIGHT] = -100.0
    R[LEFT, OPEN_RIGHT] = R[RIGHT, OPEN_LEFT] = 10.0
    T[DONE, :, DONE] = 1.0
    pomdp = Pomdp(
        transition=T, observation=O, reward=R, discount=GAMMA,
        initial_belief=[0.5, 0.5, 0.0],
        initial_observation=np.full((S, Z), 0.5),
        terminal_states=(DONE,), reward_bounds=(-100.0, 10.0),
        state_names=("tiger-left", "tiger-right", "done"),
        action_names=("listen", "open-left", "open-right"),
        observation_names=("hear-left", "hear-right"),
    )
    notes = ("rewards -1/-100/+10 and gamma=0.95 from the benchmark description; "
             f"listen_accuracy={listen_accuracy} is a default (literature value 0.85); "
             "first observation is uninformative; opening a door ends the episode")
    return EnvSpec("tiger", pomdp, {"listen_accuracy": listen_accuracy}, notes, softmax_tau=0.05)


def make_voicemail(intent_prior: float = 0.65, ask_accuracy: float = 0.8) -> EnvSpec:
    for name, p in (("intent_prior", intent_prior), ("ask_accuracy", ask_accuracy)):
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name}={p} outside (0, 1)")
    SAVE, DELETE, DONE = 0, 1, 2
    ASK, DO_SAVE, DO_DELETE = 0, 1, 2
    S, A, Z = 3, 3, 2
    T = np.zeros((S, A, S))
    O = np.full((S, A, Z), 0.5)
    R = np.zeros((S, A))
    for s in (SAVE, DELETE):
        T[s, ASK, s] = 1.0
        T[s, DO_SAVE, DONE] = T[s, DO_DELETE, DONE] = 1.0
        O[s, ASK, s] = ask_accuracy                # heard-save = 0, heard-delete = 1
        O[s, ASK, 1 - s] = 1.0 - ask_accuracy
        R[s, ASK] = -1.0
    R[SAVE, DO_SAVE] = 5.0
    R[DELETE, DO_SAVE] = -10.0
    R[DELETE, DO_DELETE] = 5.0
    R[SAVE, DO_DELETE] = -20.0
    T[DONE, :, DONE] = 1.0
    pomdp = Pomdp(
        transition=T, observation=O, reward=R, discount=GAMMA,
        initial_belief=[intent_prior, 1.0 - intent_prior, 0.0],
        initial_observation=np.full((S, Z), 0.5),
        terminal_states=(DONE,), reward_bounds=(-20.0, 5.0),
        state_names=("wants-save", "wants-delete", "done"),
        action_names=("ask", "save", "delete"),
        observation_names=("heard-save", "heard-delete"),
    )
    notes = ("rewards -1/+5/-10/+5/-20 and gamma=0.95 from the benchmark description; "
             f"intent_prior={intent_prior} and ask_accuracy={ask_accuracy} are defaults; "
             "first observation is uninformative; save/delete end the episode")
    return EnvSpec("voicemail", pomdp,
                   {"intent_prior": intent_prior, "ask_accuracy": ask_accuracy}, notes,
                   softmax_tau=0.3)


# McCallum's cheese maze; G is the goal (cell 9). The grid below is the layout
# constant: '#' is solid, digits are cells (A = 10).
#
#     +---+---+---+---+---+
#     | 0   1   2   3   4 |
#     +   +---+   +---+   +
#     | 5 |###| 6 |###| 7 |
#     +   +---+   +---+   +
#     | 8 |###| G |###| 10|
#     +---+---+---+---+---+
CHEESE_LAYOUT = (
    "01234",
    "5#6#7",
    "8#9#A",
)
CHEESE_GOAL = 9
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))   # north, east, south, west


def cheese_cells() -> dict[int, tuple[int, int]]:
    cells = {}
    for r, row in enumerate(CHEESE_LAYOUT):
        for c, ch in enumerate(row):
            if ch != "#":
                cells[int(ch, 16)] = (r, c)
    return cells


def cheese_wall_pattern(cell: int) -> tuple[bool, ...]:
    """(north, east, south, west) blocked flags."""
    cells = cheese_cells()
    occupied = {rc: i for i, rc in cells.items()}
    r, c = cells[cell]
    return tuple((r + dr, c + dc) not in occupied for dr, dc in MOVES)


def make_cheese_maze() -> EnvSpec:
    cells = cheese_cells()
    occupied = {rc: i for i, rc in cells.items()}
    n_cells = len(cells)
    patterns = sorted({cheese_wall_pattern(i) for i in cells})
    obs_of = {i: patterns.index(cheese_wall_pattern(i)) for i in cells}
    S, A, Z = n_cells, 4, len(patterns)
    T = np.zeros((S, A, S))
    O = np.zeros((S, A, Z))
    R = np.full((S, A), -0.01)
    for i, (r, c) in cells.items():
        O[i, :, obs_of[i]] = 1.0
        if i == CHEESE_GOAL:
            T[i, :, i] = 1.0
            R[i, :] = 0.0
            continue
        for a, (dr, dc) in enumerate(MOVES):
            j = occupied.get((r + dr, c + dc), i)
            T[i, a, j] = 1.0
            if j == CHEESE_GOAL:
                R[i, a] = 1.0
    b0 = np.full(S, 1.0 / (S - 1))
    b0[CHEESE_GOAL] = 0.0
    names = lambda p: "".join(d for d, blocked in zip("NESW", p) if blocked) or "open"  # noqa: E731
    pomdp = Pomdp(
        transition=T, observation=O, reward=R, discount=GAMMA,
        initial_belief=b0, initial_observation=O[:, 0, :],
        terminal_states=(CHEESE_GOAL,), reward_bounds=(-0.01, 1.0),
        state_names=tuple("goal" if i == CHEESE_GOAL else f"cell{i}" for i in range(S)),
        action_names=("north", "east", "south", "west"),
        observation_names=tuple(names(p) for p in patterns),
    )
    notes = ("layout from the McCallum cheese maze figure; +1 on reaching the goal, "
             "-0.01 otherwise, gamma=0.95; uniform start over non-goal cells; "
             "bumping into a wall leaves the agent in place")
    return EnvSpec("cheesemaze", pomdp, {}, notes, softmax_tau=15.0)


ENVIRONMENTS = {
    "tiger": make_tiger,
    "voicemail": make_voicemail,
    "cheesemaze": make_cheese_maze,
}


def get_env(name: str) -> EnvSpec:
    """Look up a built-in environment, or load ``file:<path>`` as a JSON POMDP."""
    if name.startswith("file:"):
        path = name[len("file:"):]
        return EnvSpec(name=path, pomdp=load_pomdp(path), provenance_notes=f"loaded from {path}")
    try:
        return ENVIRONMENTS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
