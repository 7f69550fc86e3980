"""Environments and behavior policies that produce the offline data.

Two environment families are provided:

* ``TabularMDP`` -- finite states/actions with a dense transition tensor,
  state-based rewards, and an explicit start distribution.  Tabular episodes
  never terminate early; an absorbing goal cell plays that role instead.
* ``MountainCarEnv`` -- the continuous car-on-a-hill problem with force
  actions in [-1, 1].  Episodes end when the car reaches the goal position
  or the horizon runs out.

Reward convention: the reward stored at index ``t`` of a trajectory labels
the state reached at ``t + 1``.  Downstream Q estimation only ever consumes
rewards at future states, so environments whose natural reward depends on
the action fold it into the post-transition reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import InvalidAction, InvalidSpec, NumericalFault

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
_GRID_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class SpaceInfo:
    """Shape metadata for an environment's state and action spaces."""

    state_kind: str  # "index" | "vector"
    action_kind: str  # "index" | "vector"
    n_states: int = 0
    n_actions: int = 0
    state_dim: int = 0
    action_dim: int = 0
    state_low: tuple[float, ...] = ()
    state_high: tuple[float, ...] = ()
    action_low: tuple[float, ...] = ()
    action_high: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with dense dynamics and state-based rewards.

    transition[s, a, s'] is the probability of landing in s'; reward[s] is
    collected upon *entering* s.  ``reward_range`` records (r_min, r_max).
    """

    n_states: int
    n_actions: int
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S,)
    start_dist: np.ndarray  # (S,)
    gamma: float
    horizon: int
    env_id: str = "tabular"
    reward_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise InvalidSpec("need at least one state and one action")
        if self.transition.shape != (self.n_states, self.n_actions, self.n_states):
            raise InvalidSpec(f"transition shape {self.transition.shape} does not match spaces")
        if np.any(self.transition < 0):
            raise InvalidSpec("negative transition probability")
        rowsums = self.transition.sum(axis=2)
        if np.max(np.abs(rowsums - 1.0)) > _PROB_TOL:
            raise InvalidSpec("transition rows must sum to 1")
        if self.start_dist.shape != (self.n_states,) or abs(self.start_dist.sum() - 1.0) > _PROB_TOL:
            raise InvalidSpec("start_dist must be a distribution over states")
        if self.reward.shape != (self.n_states,):
            raise InvalidSpec("reward must be one value per state")
        lo, hi = self.reward_range
        if np.any(self.reward < lo) or np.any(self.reward > hi):
            raise InvalidSpec("reward outside declared reward_range")
        if not (0.0 <= self.gamma < 1.0):
            raise InvalidSpec("gamma must lie in [0, 1)")
        if self.horizon < 1:
            raise InvalidSpec("horizon must be positive")

    @property
    def space(self) -> SpaceInfo:
        return SpaceInfo(
            state_kind="index",
            action_kind="index",
            n_states=self.n_states,
            n_actions=self.n_actions,
        )


@dataclass(frozen=True)
class MountainCarEnv:
    """Continuous mountain car with force actions in [-1, 1].

    Dynamics: velocity += force * action - gravity * cos(3 * position),
    both coordinates clamped to their ranges.  Reaching goal_position ends
    the episode.  Per-step reward is -action_cost * action**2, plus
    goal_reward on the transition that reaches the goal.
    """

    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    goal_position: float = 0.45
    force: float = 0.0015
    gravity: float = 0.0025
    action_cost: float = 0.1
    goal_reward: float = 100.0
    gamma: float = 0.99
    horizon: int = 999
    env_id: str = "mountain_car"

    @property
    def space(self) -> SpaceInfo:
        return SpaceInfo(
            state_kind="vector",
            action_kind="vector",
            state_dim=2,
            action_dim=1,
            state_low=(self.min_position, -self.max_speed),
            state_high=(self.max_position, self.max_speed),
            action_low=(-1.0,),
            action_high=(1.0,),
        )


Env = Union[TabularMDP, MountainCarEnv]


@dataclass(eq=False)
class Trajectory:
    """One logged episode.

    ``rewards[t]`` labels ``states[t + 1]``; ``rewards`` is None for
    reward-free data.  ``terminal`` marks early termination (goal reached)
    as opposed to running out the horizon.
    """

    states: np.ndarray  # (T + 1,) indices or (T + 1, d) vectors
    actions: np.ndarray  # (T,) indices or (T, d) vectors
    rewards: np.ndarray | None  # (T,)
    terminal: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def length(self) -> int:
        return len(self.states)

    def validate(self, horizon: int | None = None):
        if len(self.states) != len(self.actions) + 1:
            raise InvalidSpec("need exactly one more state than actions")
        if self.rewards is not None:
            if len(self.rewards) != len(self.actions):
                raise InvalidSpec("need one reward per action")
            if not np.all(np.isfinite(self.rewards)):
                raise NumericalFault("non-finite reward in trajectory")
        if horizon is not None and self.n_steps > horizon:
            raise InvalidSpec(f"trajectory has {self.n_steps} steps, horizon is {horizon}")


def initial_state(env: Env, rng: np.random.Generator):
    """Sample a start state: tabular from start_dist, car near the valley."""
    if isinstance(env, TabularMDP):
        u = rng.random()
        return int(np.searchsorted(np.cumsum(env.start_dist), u))
    position = rng.uniform(-0.6, -0.4)
    return np.array([position, 0.0])


def step(env: Env, state, action, rng: np.random.Generator):
    """Advance one step; returns (next_state, reward, done).

    Tabular episodes never signal done (goals are absorbing); the car is
    done once it reaches the goal position.
    """
    if isinstance(env, TabularMDP):
        a = int(action)
        if not 0 <= a < env.n_actions:
            raise InvalidAction(f"action {a} outside [0, {env.n_actions})")
        s = int(state)
        if not 0 <= s < env.n_states:
            raise InvalidSpec(f"state {s} outside [0, {env.n_states})")
        u = rng.random()
        nxt = int(np.searchsorted(np.cumsum(env.transition[s, a]), u))
        nxt = min(nxt, env.n_states - 1)  # guard cumsum rounding
        return nxt, float(env.reward[nxt]), False

    state = np.asarray(state, dtype=np.float64)
    if not np.all(np.isfinite(state)):
        raise NumericalFault("non-finite mountain car state")
    a = float(np.asarray(action).reshape(-1)[0])
    if math.isnan(a):
        raise NumericalFault("NaN action")
    if abs(a) > 1.0 + 1e-9:
        raise InvalidAction(f"force {a} outside [-1, 1]")
    position, velocity = float(state[0]), float(state[1])
    velocity += env.force * a - env.gravity * math.cos(3.0 * position)
    velocity = min(max(velocity, -env.max_speed), env.max_speed)
    position += velocity
    position = min(max(position, env.min_position), env.max_position)
    if position <= env.min_position and velocity < 0.0:
        velocity = 0.0  # inelastic left wall
    done = position >= env.goal_position
    reward = -env.action_cost * a * a + (env.goal_reward if done else 0.0)
    return np.array([position, velocity]), reward, done


def rollout(env: Env, policy: Callable, rng: np.random.Generator, max_len: int) -> Trajectory:
    """Run ``policy`` for at most ``max_len`` steps, stopping early on done."""
    if max_len < 1:
        raise InvalidSpec("max_len must be positive")
    if max_len > env.horizon:
        raise InvalidSpec(f"max_len {max_len} exceeds horizon {env.horizon}")
    state = initial_state(env, rng)
    states, actions, rewards = [state], [], []
    terminal = False
    for _ in range(max_len):
        action = policy(state, rng)
        if isinstance(env, TabularMDP):
            action = int(action)
        else:
            action = np.asarray(action, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(action)):
                raise NumericalFault("policy emitted a non-finite action")
        state, reward, done = step(env, state, action, rng)
        actions.append(action)
        rewards.append(reward)
        states.append(state)
        if done:
            terminal = True
            break
    if isinstance(env, TabularMDP):
        traj = Trajectory(
            states=np.array(states, dtype=np.int64),
            actions=np.array(actions, dtype=np.int64),
            rewards=np.array(rewards, dtype=np.float64),
            terminal=terminal,
        )
    else:
        traj = Trajectory(
            states=np.stack(states).astype(np.float64),
            actions=np.stack(actions).astype(np.float64),
            rewards=np.array(rewards, dtype=np.float64),
            terminal=terminal,
        )
    traj.validate(horizon=env.horizon)
    return traj


def make_gridworld(
    width: int,
    height: int,
    goal_cell: int,
    step_reward: float = 0.0,
    goal_reward: float = 1.0,
    slip_prob: float = 0.0,
    gamma: float = 0.99,
    horizon: int = 50,
) -> TabularMDP:
    """Four-action gridworld with an absorbing goal.

    Cells are indexed row-major.  With probability ``slip_prob`` the agent
    moves in a uniformly random direction instead of the intended one;
    moving off the grid leaves the agent in place.  Start states are
    uniform over non-goal cells.
    """
    if width < 1 or height < 1:
        raise InvalidSpec("grid must have positive area")
    n = width * height
    if n < 2:
        raise InvalidSpec("grid needs at least two cells")
    if not 0 <= goal_cell < n:
        raise InvalidSpec(f"goal cell {goal_cell} outside the grid")
    if not 0.0 <= slip_prob < 1.0:
        raise InvalidSpec("slip_prob must lie in [0, 1)")

    def move(cell: int, direction: int) -> int:
        r, c = divmod(cell, width)
        dr, dc = _GRID_MOVES[direction]
        nr, nc = r + dr, c + dc
        if 0 <= nr < height and 0 <= nc < width:
            return nr * width + nc
        return cell

    P = np.zeros((n, 4, n))
    for s in range(n):
        if s == goal_cell:
            P[s, :, s] = 1.0
            continue
        for a in range(4):
            P[s, a, move(s, a)] += 1.0 - slip_prob
            for d in range(4):
                P[s, a, move(s, d)] += slip_prob / 4.0
    reward = np.full(n, step_reward, dtype=np.float64)
    reward[goal_cell] = goal_reward
    start = np.ones(n)
    start[goal_cell] = 0.0
    start /= start.sum()
    lo = float(min(step_reward, goal_reward))
    hi = float(max(step_reward, goal_reward))
    return TabularMDP(
        n_states=n,
        n_actions=4,
        transition=P,
        reward=reward,
        start_dist=start,
        gamma=gamma,
        horizon=horizon,
        env_id=f"gridworld-{width}x{height}-goal{goal_cell}-slip{slip_prob:g}",
        reward_range=(lo, hi),
    )


def gridworld_from_ascii(
    layout: str,
    step_reward: float = 0.0,
    goal_reward: float = 1.0,
    slip_prob: float = 0.0,
    gamma: float = 0.99,
    horizon: int = 50,
) -> TabularMDP:
    """Build a gridworld from an ASCII sketch.

    Characters: '.' free cell, '#' wall, 'G' goal (exactly one), 'S'
    optional start cell(s).  Walls are not states; bumping into one leaves
    the agent in place.
    """
    rows = [line for line in (l.rstrip() for l in layout.splitlines()) if line]
    if not rows:
        raise InvalidSpec("empty layout")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InvalidSpec("layout rows must have equal length")
    height = len(rows)
    cells = {}
    goal = None
    starts = []
    for r in range(height):
        for c in range(width):
            ch = rows[r][c]
            if ch == "#":
                continue
            if ch not in ".GS":
                raise InvalidSpec(f"unknown layout character {ch!r}")
            idx = len(cells)
            cells[(r, c)] = idx
            if ch == "G":
                if goal is not None:
                    raise InvalidSpec("layout must contain exactly one goal")
                goal = idx
            elif ch == "S":
                starts.append(idx)
    if goal is None:
        raise InvalidSpec("layout must contain a goal cell")
    n = len(cells)
    if n < 2:
        raise InvalidSpec("layout needs at least two free cells")

    def move(rc, direction):
        dr, dc = _GRID_MOVES[direction]
        target = (rc[0] + dr, rc[1] + dc)
        return target if target in cells else rc

    P = np.zeros((n, 4, n))
    for rc, s in cells.items():
        if s == goal:
            P[s, :, s] = 1.0
            continue
        for a in range(4):
            P[s, a, cells[move(rc, a)]] += 1.0 - slip_prob
            for d in range(4):
                P[s, a, cells[move(rc, d)]] += slip_prob / 4.0
    reward = np.full(n, step_reward, dtype=np.float64)
    reward[goal] = goal_reward
    start = np.zeros(n)
    if starts:
        start[starts] = 1.0
    else:
        start[:] = 1.0
        start[goal] = 0.0
    start /= start.sum()
    return TabularMDP(
        n_states=n,
        n_actions=4,
        transition=P,
        reward=reward,
        start_dist=start,
        gamma=gamma,
        horizon=horizon,
        env_id=f"gridworld-ascii-{width}x{height}-goal{goal}-slip{slip_prob:g}",
        reward_range=(min(step_reward, goal_reward), max(step_reward, goal_reward)),
    )


@dataclass
class BehaviorPolicy:
    """A stochastic state -> action map with a human-readable descriptor."""

    kind: str
    descriptor: str
    _fn: Callable = field(repr=False)

    def __call__(self, state, rng: np.random.Generator):
        return self._fn(state, rng)


def epsilon_soft_table(greedy_table: np.ndarray, epsilon: float) -> np.ndarray:
    """Mix a deterministic policy table with the uniform one."""
    n_actions = greedy_table.shape[1]
    return (1.0 - epsilon) * greedy_table + epsilon / n_actions


def behavior_policy(kind: str, **params) -> BehaviorPolicy:
    """Build a data-collection policy.

    kinds:
      - "uniform_random": params env.
      - "epsilon_soft_tabular": params mdp, epsilon; epsilon-greedy around
        the value-iteration policy of ``mdp``.
      - "scripted_mountain_car": params sigma; energy pumping
        (full force along the current velocity) plus Gaussian noise.
    """
    if kind == "uniform_random":
        env = params["env"]
        if isinstance(env, TabularMDP):
            n = env.n_actions

            def fn(state, rng):
                return int(rng.integers(n))

        else:

            def fn(state, rng):
                return rng.uniform(-1.0, 1.0, size=1)

        return BehaviorPolicy(kind, "uniform_random", fn)

    if kind == "epsilon_soft_tabular":
        from .oracle import value_iteration  # local import avoids a cycle

        mdp: TabularMDP = params["mdp"]
        epsilon = float(params["epsilon"])
        if not 0.0 <= epsilon <= 1.0:
            raise InvalidSpec("epsilon must lie in [0, 1]")
        _, greedy = value_iteration(mdp)
        table = epsilon_soft_table(greedy, epsilon)
        cdf = np.cumsum(table, axis=1)

        def fn(state, rng):
            return int(np.searchsorted(cdf[int(state)], rng.random()))

        return BehaviorPolicy(kind, f"epsilon_soft(eps={epsilon:g})", fn)

    if kind == "scripted_mountain_car":
        sigma = float(params.get("sigma", 0.0))
        if sigma < 0.0:
            raise InvalidSpec("sigma must be non-negative")

        def fn(state, rng):
            base = 1.0 if state[1] >= 0.0 else -1.0
            noise = sigma * rng.normal() if sigma > 0.0 else 0.0
            return np.array([min(max(base + noise, -1.0), 1.0)])

        return BehaviorPolicy(kind, f"scripted_mc(sigma={sigma:g})", fn)

    raise InvalidSpec(f"unknown behavior policy kind {kind!r}")


def tabular_policy_table(policy: Callable, mdp: TabularMDP, rng: np.random.Generator, n_samples: int = 0) -> np.ndarray:
    """Empirical action table of an arbitrary tabular policy (for oracles)."""
    table = np.zeros((mdp.n_states, mdp.n_actions))
    for s in range(mdp.n_states):
        for _ in range(max(n_samples, 1)):
            table[s, policy(s, rng)] += 1.0
    return table / table.sum(axis=1, keepdims=True)


# -- registry and config-file loading ---------------------------------------


def make_chain(n_states: int = 2, gamma: float = 0.9, horizon: int = 10) -> TabularMDP:
    """Linear chain: action 0 advances, action 1 stays; the last state is
    absorbing and carries reward 1."""
    if n_states < 2:
        raise InvalidSpec("chain needs at least two states")
    P = np.zeros((n_states, 2, n_states))
    for s in range(n_states - 1):
        P[s, 0, s + 1] = 1.0
        P[s, 1, s] = 1.0
    P[n_states - 1, :, n_states - 1] = 1.0
    reward = np.zeros(n_states)
    reward[n_states - 1] = 1.0
    start = np.zeros(n_states)
    start[0] = 1.0
    return TabularMDP(
        n_states=n_states,
        n_actions=2,
        transition=P,
        reward=reward,
        start_dist=start,
        gamma=gamma,
        horizon=horizon,
        env_id=f"chain{n_states}",
        reward_range=(0.0, 1.0),
    )


ENV_REGISTRY: dict[str, Callable[[], Env]] = {
    "chain2": lambda: make_chain(2),
    "gridworld5x5": lambda: make_gridworld(5, 5, goal_cell=24, slip_prob=0.1, gamma=0.9, horizon=40),
    "gridworld5x5b": lambda: make_gridworld(5, 5, goal_cell=20, slip_prob=0.1, gamma=0.9, horizon=40),
    "mountain_car": MountainCarEnv,
}


def make_env(name_or_path: str) -> Env:
    """Resolve a registry name, or load a key-value env spec file."""
    if name_or_path in ENV_REGISTRY:
        return ENV_REGISTRY[name_or_path]()
    return load_env_spec(name_or_path)


def load_env_spec(path) -> Env:
    """Load an environment from a flat key-value text file.

    Required key ``kind`` in {gridworld, mountain_car, chain}; remaining keys
    mirror the factory arguments.  Gridworlds may point at an ASCII layout
    via ``layout_file``.
    """
    from .config import read_kv  # local import avoids a cycle

    kv = read_kv(path)
    kind = kv.pop("kind", None)
    if kind is None:
        raise InvalidSpec(f"{path}: env spec needs a 'kind' key")
    if kind == "mountain_car":
        floats = {k: float(v) for k, v in kv.items() if k != "horizon"}
        if "horizon" in kv:
            floats["horizon"] = int(kv["horizon"])
        return MountainCarEnv(**floats)
    if kind == "chain":
        return make_chain(
            n_states=int(kv.get("n_states", 2)),
            gamma=float(kv.get("gamma", 0.9)),
            horizon=int(kv.get("horizon", 10)),
        )
    if kind == "gridworld":
        common = dict(
            step_reward=float(kv.get("step_reward", 0.0)),
            goal_reward=float(kv.get("goal_reward", 1.0)),
            slip_prob=float(kv.get("slip_prob", 0.0)),
            gamma=float(kv.get("gamma", 0.99)),
            horizon=int(kv.get("horizon", 50)),
        )
        if "layout_file" in kv:
            with open(kv["layout_file"], "r", encoding="utf-8") as fh:
                return gridworld_from_ascii(fh.read(), **common)
        return make_gridworld(
            width=int(kv["width"]),
            height=int(kv["height"]),
            goal_cell=int(kv["goal_cell"]),
            **common,
        )
    raise InvalidSpec(f"unknown env kind {kind!r}")
