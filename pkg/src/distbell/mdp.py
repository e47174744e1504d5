"""Tabular MDPs, policies, value-distribution tables and rollout oracles.

Terminal states are absorbing self-loops with a zero reward.  The operators
and learners treat a transition into a terminal state as ending the return
(a discount of zero on the successor), so the table entries stored for
terminal states never leak into non-terminal ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .dist import (
    MERGE_TOL,
    PROB_TOL,
    DiscreteDistribution,
    empirical,
    make_discrete,
    point_mass,
)


def _readonly(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _terminal_unreachable(transition: np.ndarray, terminal: np.ndarray) -> bool:
    """True if some non-terminal state cannot reach any terminal state."""
    n_states = terminal.size
    can_finish = terminal.copy()
    reach = transition.max(axis=1) > 0  # (x, x') reachable under some action
    changed = True
    while changed:
        changed = False
        for x in range(n_states):
            if not can_finish[x] and np.any(reach[x] & can_finish):
                can_finish[x] = True
                changed = True
    return not bool(np.all(can_finish))


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with random rewards.

    ``transition[x, a, x']`` is P(x' | x, a); ``reward[x][a]`` is the reward
    law for the pair.
    """

    transition: np.ndarray
    reward: tuple
    terminal: np.ndarray
    gamma: float

    def __post_init__(self):
        P = _readonly(self.transition)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("transition must have shape (n_states, n_actions, n_states)")
        n_states, n_actions, _ = P.shape
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > PROB_TOL):
            raise ValueError("transition rows must be probability vectors")
        reward = tuple(tuple(row) for row in self.reward)
        if len(reward) != n_states or any(len(row) != n_actions for row in reward):
            raise ValueError("reward table shape does not match transition")
        terminal = np.array(self.terminal, dtype=bool).reshape(-1)
        terminal.setflags(write=False)
        if terminal.size != n_states:
            raise ValueError("terminal flags must cover every state")
        for x in np.flatnonzero(terminal):
            for a in range(n_actions):
                if P[x, a, x] != 1.0 or not reward[x][a].is_point_mass(0.0, 0.0):
                    raise ValueError(f"terminal state {x} must self-loop with zero reward")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.gamma == 1.0 and _terminal_unreachable(P, terminal):
            raise ValueError("gamma = 1 requires a terminal state reachable from every state")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "terminal", terminal)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def pairs(self) -> Iterator[tuple[int, int]]:
        for x in range(self.n_states):
            for a in range(self.n_actions):
                yield x, a

    def mean_reward(self) -> np.ndarray:
        return np.array([[r.mean() for r in row] for row in self.reward])

    def max_abs_reward(self) -> float:
        return max(float(np.max(np.abs(r.atoms))) for row in self.reward for r in row)

    def value_bound(self, horizon: int | None = None) -> float:
        """Bound on |return|: r_max / (1 - gamma), or r_max * horizon if gamma = 1."""
        r_max = self.max_abs_reward()
        if self.gamma < 1.0:
            return r_max / (1.0 - self.gamma)
        if horizon is None:
            raise ValueError("an undiscounted MDP needs a horizon for its value bound")
        return r_max * horizon

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "terminal": self.terminal.tolist(),
            "transition": self.transition.tolist(),
            "reward": [[r.to_dict() for r in row] for row in self.reward],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        mdp = cls(
            transition=np.asarray(data["transition"], dtype=np.float64),
            reward=[[DiscreteDistribution.from_dict(r) for r in row] for row in data["reward"]],
            terminal=data["terminal"],
            gamma=float(data["gamma"]),
        )
        if (mdp.n_states, mdp.n_actions) != (data["n_states"], data["n_actions"]):
            raise ValueError("declared sizes disagree with the transition array")
        return mdp

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        return cls.from_dict(json.loads(text))


def load_mdp(path) -> TabularMdp:
    with open(path) as fh:
        return TabularMdp.from_dict(json.load(fh))


def make_policy(probs) -> np.ndarray:
    """Validate an (n_states, n_actions) table of action probabilities."""
    pi = np.array(probs, dtype=np.float64)
    if pi.ndim != 2:
        raise ValueError("policy must be a 2-D table")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > PROB_TOL):
        raise ValueError("policy rows must be probability vectors")
    pi.setflags(write=False)
    return pi


def deterministic_policy(actions: Sequence[int], n_actions: int) -> np.ndarray:
    pi = np.zeros((len(actions), n_actions))
    pi[np.arange(len(actions)), actions] = 1.0
    return make_policy(pi)


class ValueDistributionTable:
    """One return distribution per state-action pair.

    ``bound`` records a global bound on |atom|; it defaults to the largest
    atom magnitude in the table.
    """

    def __init__(self, dists, bound: float | None = None):
        rows = tuple(tuple(row) for row in dists)
        if not rows or not rows[0]:
            raise ValueError("empty table")
        n_actions = len(rows[0])
        if any(len(row) != n_actions for row in rows):
            raise ValueError("ragged table")
        largest = max(float(np.max(np.abs(d.atoms))) for row in rows for d in row)
        if bound is None:
            bound = largest
        elif largest > bound * (1 + 1e-12) + 1e-12:
            raise ValueError(f"atom magnitude {largest} exceeds declared bound {bound}")
        self._rows = rows
        self.bound = float(bound)

    @classmethod
    def constant(cls, n_states: int, n_actions: int, d: DiscreteDistribution | None = None):
        d = point_mass(0.0) if d is None else d
        return cls([[d] * n_actions for _ in range(n_states)])

    @property
    def n_states(self) -> int:
        return len(self._rows)

    @property
    def n_actions(self) -> int:
        return len(self._rows[0])

    def __getitem__(self, key) -> DiscreteDistribution:
        x, a = key
        return self._rows[x][a]

    def pairs(self) -> Iterator[tuple[int, int]]:
        for x in range(self.n_states):
            for a in range(self.n_actions):
                yield x, a

    def rows(self):
        return self._rows

    def replace(self, updates: dict) -> "ValueDistributionTable":
        rows = [list(row) for row in self._rows]
        for (x, a), d in updates.items():
            rows[x][a] = d
        return ValueDistributionTable(rows)

    def means(self) -> np.ndarray:
        return np.array([[d.mean() for d in row] for row in self._rows])

    def variances(self) -> np.ndarray:
        return np.array([[d.variance() for d in row] for row in self._rows])

    def max_support(self) -> int:
        return max(len(d) for row in self._rows for d in row)

    def to_dict(self) -> dict:
        return {"bound": self.bound, "dists": [[d.to_dict() for d in row] for row in self._rows]}

    @classmethod
    def from_dict(cls, data: dict) -> "ValueDistributionTable":
        return cls([[DiscreteDistribution.from_dict(d) for d in row] for row in data["dists"]],
                   bound=data.get("bound"))


# Tie-breaking rules receive (state, tied_actions, z) and return one action.
TieBreak = Callable[[int, Sequence[int], "ValueDistributionTable | None"], int]


def lowest_index(x: int, tied: Sequence[int], z=None) -> int:
    return min(tied)


def greedy_policy(q: np.ndarray, tie_break: TieBreak | None = None, z=None,
                  tol: float = 0.0) -> np.ndarray:
    """Deterministic argmax policy for a Q table.

    Actions whose value is within ``tol`` of the maximum count as tied and are
    resolved by ``tie_break`` (lowest index by default).  ``z`` is forwarded to
    the rule for rules that inspect the current value distribution.
    """
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("Q values must be finite")
    tie_break = tie_break or lowest_index
    choice = []
    for x in range(q.shape[0]):
        best = q[x].max()
        tied = [int(a) for a in np.flatnonzero(q[x] >= best - tol)]
        choice.append(tied[0] if len(tied) == 1 else int(tie_break(x, tied, z)))
    return deterministic_policy(choice, q.shape[1])


# --- example MDPs ---------------------------------------------------------

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
CLIFF_REWARD = -100.0
STEP_REWARD = -1.0


@dataclass(frozen=True)
class CliffLayout:
    rows: int = 4
    cols: int = 12

    def state(self, row: int, col: int) -> int:
        return row * self.cols + col

    def cell(self, x: int) -> tuple[int, int]:
        return divmod(x, self.cols)

    @property
    def start(self) -> int:
        return self.state(self.rows - 1, 0)

    @property
    def goal(self) -> int:
        return self.state(self.rows - 1, self.cols - 1)

    @property
    def cliff(self) -> list[int]:
        return [self.state(self.rows - 1, c) for c in range(1, self.cols - 1)]

    def standable(self) -> list[int]:
        """States an agent can occupy before the episode ends."""
        skip = set(self.cliff) | {self.goal}
        return [x for x in range(self.rows * self.cols) if x not in skip]

    def safe_action(self, x: int) -> int:
        row, col = self.cell(x)
        if col == self.cols - 1:
            return DOWN
        if row == 0:
            return RIGHT
        return UP

    def safe_path(self) -> list[int]:
        x, path = self.start, [self.start]
        while x != self.goal:
            row, col = self.cell(x)
            dr, dc = _MOVES[self.safe_action(x)]
            x = self.state(row + dr, col + dc)
            path.append(x)
        return path


def build_cliffwalk(rows: int = 4, cols: int = 12, gamma: float = 1.0,
                    noise: float = 0.1, layout: bool = False):
    """CliffWalk grid with the noisy safe-path policy.

    Every move costs -1; stepping into the cliff costs -100 and returns the
    agent to the start; the goal is terminal.  Moves into the outer wall leave
    the agent in place.  The policy follows the safe path (up, along the top
    row, down to the goal) w.p. ``1 - noise`` and a uniform action otherwise.
    With ``layout=True`` the :class:`CliffLayout` is returned as a third item.
    """
    if rows < 2 or cols < 3:
        raise ValueError("grid must be at least 2 x 3")
    grid = CliffLayout(rows, cols)
    n_states, n_actions = rows * cols, 4
    cliff = set(grid.cliff)
    P = np.zeros((n_states, n_actions, n_states))
    step, fall, zero = point_mass(STEP_REWARD), point_mass(CLIFF_REWARD), point_mass(0.0)
    reward = [[step] * n_actions for _ in range(n_states)]
    terminal = np.zeros(n_states, dtype=bool)
    terminal[grid.goal] = True
    for x in range(n_states):
        row, col = grid.cell(x)
        for a, (dr, dc) in _MOVES.items():
            if x == grid.goal:
                P[x, a, x] = 1.0
                reward[x][a] = zero
                continue
            nr = min(max(row + dr, 0), rows - 1)
            nc = min(max(col + dc, 0), cols - 1)
            nxt = grid.state(nr, nc)
            if nxt in cliff:
                P[x, a, grid.start] = 1.0
                reward[x][a] = fall
            else:
                P[x, a, nxt] = 1.0
    mdp = TabularMdp(P, reward, terminal, gamma)
    pi = np.full((n_states, n_actions), noise / n_actions)
    for x in range(n_states):
        pi[x, grid.safe_action(x)] += 1.0 - noise
    policy = make_policy(pi)
    if layout:
        return mdp, policy, grid
    return mdp, policy


def build_noncontraction_mdp(epsilon: float = 0.1) -> TabularMdp:
    """Two-state undiscounted example on which the optimality operator expands.

    States: 0 = x1, 1 = x2, 2 = absorbing terminal.  Both actions at x1 move to
    x2 with zero reward.  At x2, action 0 pays 0 and action 1 pays
    ``epsilon - 1`` or ``epsilon + 1`` with equal probability; both end the
    episode.
    """
    P = np.zeros((3, 2, 3))
    P[0, :, 1] = 1.0
    P[1, :, 2] = 1.0
    P[2, :, 2] = 1.0
    zero = point_mass(0.0)
    coin = make_discrete([epsilon - 1.0, epsilon + 1.0], [0.5, 0.5])
    reward = [[zero, zero], [zero, coin], [zero, zero]]
    return TabularMdp(P, reward, [False, False, True], 1.0)


def build_nonstationary_mdp() -> TabularMdp:
    """Single self-looping state, gamma = 1/2: action 0 pays 1/2, action 1 pays 0 or 1."""
    P = np.ones((1, 2, 1))
    reward = [[point_mass(0.5), make_discrete([0.0, 1.0], [0.5, 0.5])]]
    return TabularMdp(P, reward, [False], 0.5)


def build_sample_wasserstein_mdp() -> TabularMdp:
    """One decision, reward 0 or 1 with equal probability, then termination."""
    P = np.zeros((2, 1, 2))
    P[:, 0, 1] = 1.0
    reward = [[make_discrete([0.0, 1.0], [0.5, 0.5])], [point_mass(0.0)]]
    return TabularMdp(P, reward, [False, True], 1.0)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float,
               max_reward_atoms: int = 3, reward_scale: float = 1.0,
               p_terminal: float = 0.0) -> TabularMdp:
    """Random dense MDP; each state is terminal with probability ``p_terminal``."""
    terminal = rng.random(n_states) < p_terminal
    terminal[0] = False
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    reward = []
    for x in range(n_states):
        row = []
        for a in range(n_actions):
            if terminal[x]:
                P[x, a] = 0.0
                P[x, a, x] = 1.0
                row.append(point_mass(0.0))
            else:
                k = int(rng.integers(1, max_reward_atoms + 1))
                row.append(make_discrete(reward_scale * rng.uniform(-1, 1, k), rng.dirichlet(np.ones(k))))
        reward.append(row)
    return TabularMdp(P, reward, terminal, gamma)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return make_policy(rng.dirichlet(np.ones(n_actions), size=n_states))


def random_table(rng: np.random.Generator, n_states: int, n_actions: int,
                 max_atoms: int = 4, scale: float = 5.0) -> ValueDistributionTable:
    rows = []
    for _ in range(n_states):
        row = []
        for _ in range(n_actions):
            k = int(rng.integers(1, max_atoms + 1))
            row.append(make_discrete(rng.uniform(-scale, scale, k), rng.dirichlet(np.ones(k))))
        rows.append(row)
    return ValueDistributionTable(rows)


# --- Monte-Carlo oracle ---------------------------------------------------

def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for sub-stream ``stream_id`` of a root seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_id,)))


def rollout_returns(mdp: TabularMdp, policy, x: int, a: int | None, n_rollouts: int,
                    horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Raw returns of ``n_rollouts`` trajectories from (x, a).

    ``policy`` is a stationary (n_states, n_actions) table or a sequence of such
    tables, one per time step (the last one repeats).  ``a=None`` draws the
    first action from the policy as well.  Trajectories stop at a terminal
    state or after ``horizon`` rewards.
    """
    if n_rollouts < 1 or horizon < 1:
        raise ValueError("n_rollouts and horizon must be positive")
    policies = [np.asarray(policy)] if np.ndim(policy) == 2 else [np.asarray(p) for p in policy]
    n_states, n_actions = mdp.n_states, mdp.n_actions
    P_cum = np.cumsum(mdp.transition, axis=2)
    P_cum[..., -1] = 1.0
    pi_cum = [np.cumsum(p, axis=1) for p in policies]
    for c in pi_cum:
        c[:, -1] = 1.0
    # flattened reward laws: per pair an offset into shared atom/cdf arrays
    atoms, cdfs, offsets, sizes = [], [], np.zeros(n_states * n_actions, int), np.zeros(n_states * n_actions, int)
    pos = 0
    for s in range(n_states):
        for b in range(n_actions):
            r = mdp.reward[s][b]
            k = s * n_actions + b
            offsets[k], sizes[k] = pos, r.atoms.size
            atoms.append(r.atoms)
            c = np.cumsum(r.probs)
            c[-1] = 1.0
            cdfs.append(c)
            pos += r.atoms.size
    atoms = np.concatenate(atoms)
    cdfs = np.concatenate(cdfs)

    state = np.full(n_rollouts, x, dtype=np.int64)
    if a is None:
        action = _draw(pi_cum[0][state], rng)
    else:
        action = np.full(n_rollouts, a, dtype=np.int64)
    returns = np.zeros(n_rollouts)
    alive = ~mdp.terminal[state]
    if a is not None:
        alive[:] = True  # the first reward is always collected
    discount = 1.0
    for t in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s, b = state[idx], action[idx]
        k = s * n_actions + b
        u = rng.random(idx.size)
        # reward: first atom whose cdf exceeds u, searched within the pair's block
        j = np.zeros(idx.size, dtype=np.int64)
        for width in np.unique(sizes[k]):
            sel = sizes[k] == width
            block = cdfs[offsets[k[sel]][:, None] + np.arange(width)]
            j[sel] = np.minimum((block < u[sel, None]).sum(axis=1), width - 1)
        returns[idx] += discount * atoms[offsets[k] + j]
        nxt = _draw(P_cum[s, b], rng)
        state[idx] = nxt
        alive[idx] = ~mdp.terminal[nxt]
        pc = pi_cum[min(t + 1, len(pi_cum) - 1)]
        action[idx] = _draw(pc[nxt], rng)
        discount *= mdp.gamma
    return returns


def _draw(cum_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(cum_rows.shape[0])
    return np.minimum((cum_rows < u[:, None]).sum(axis=1), cum_rows.shape[1] - 1)


def monte_carlo_returns(mdp: TabularMdp, policy, x: int, a: int | None, n_rollouts: int,
                        horizon: int, rng: np.random.Generator,
                        merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Empirical return distribution from (x, a) under ``policy``."""
    return empirical(rollout_returns(mdp, policy, x, a, n_rollouts, horizon, rng), merge_tol)


def monte_carlo_table(mdp: TabularMdp, policy, n_rollouts: int, horizon: int, seed: int,
                      pairs=None, merge_tol: float = MERGE_TOL) -> ValueDistributionTable:
    """Monte-Carlo return table; pair (x, a) uses stream ``x * n_actions + a``.

    Pairs not listed in ``pairs`` (default: all) get a point mass at 0.
    """
    pairs = set(mdp.pairs()) if pairs is None else set(pairs)
    rows = []
    for x in range(mdp.n_states):
        row = []
        for a in range(mdp.n_actions):
            if (x, a) in pairs:
                rng = stream_rng(seed, x * mdp.n_actions + a)
                row.append(monte_carlo_returns(mdp, policy, x, a, n_rollouts, horizon, rng, merge_tol))
            else:
                row.append(point_mass(0.0))
        rows.append(row)
    return ValueDistributionTable(rows)
