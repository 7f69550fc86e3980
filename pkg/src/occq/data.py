"""Offline dataset container, persistence, and contrastive batch sampling.

A dataset is a list of logged trajectories plus environment metadata.  The
on-disk format is line based: a header, then one episode per line with
length-prefixed arrays.  Floats are stored as C99 hex literals so that a
save/load round trip is bit exact.

Batches pair each anchor ``(s_t, a_t)`` of a uniformly drawn episode with a
future state ``s_{t+dt}``, the offset drawn from the truncated geometric
law over the remaining episode; the anchors of one additional episode join
the batch so the in-batch negatives are not all from a single trajectory.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .envs import Env, SpaceInfo, Trajectory, rollout
from .errors import FormatError, InvalidSpec, RewardRequired, VersionError
from .truncgeom import sample_supports

_MAGIC = "occq-dataset"
_VERSION = 1


@dataclass(eq=False)
class OfflineDataset:
    """Immutable-after-load collection of episodes from one environment."""

    episodes: list[Trajectory]
    env_id: str
    gamma: float
    horizon: int
    rewards_available: bool
    behavior_descriptor: str
    space: SpaceInfo
    # Mutable diagnostics; never serialized and never part of equality.
    reward_reads: int = field(default=0, compare=False)
    skipped_episodes: int = field(default=0, compare=False)

    def __post_init__(self):
        for ep in self.episodes:
            ep.validate(horizon=self.horizon)
            if self.rewards_available and ep.rewards is None:
                raise InvalidSpec("rewards_available but an episode has none")
            if not self.rewards_available and ep.rewards is not None:
                raise InvalidSpec("reward-free dataset must not carry rewards")

    def __eq__(self, other) -> bool:
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        if (
            self.env_id != other.env_id
            or self.gamma != other.gamma
            or self.horizon != other.horizon
            or self.rewards_available != other.rewards_available
            or self.behavior_descriptor != other.behavior_descriptor
            or self.space != other.space
            or len(self.episodes) != len(other.episodes)
        ):
            return False
        for a, b in zip(self.episodes, other.episodes):
            if a.terminal != b.terminal:
                return False
            if not np.array_equal(a.states, b.states) or not np.array_equal(a.actions, b.actions):
                return False
            if (a.rewards is None) != (b.rewards is None):
                return False
            if a.rewards is not None and not np.array_equal(a.rewards, b.rewards):
                return False
        return True

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)


@dataclass(eq=False)
class ContrastiveBatch:
    """Anchor/positive pairs for one critic step.

    ``future_rewards[i]`` is the reward labelling ``positives[i]``; None for
    reward-free batches.  ``batch_size`` equals the number of anchors.
    """

    anchor_states: np.ndarray
    anchor_actions: np.ndarray
    positives: np.ndarray
    offsets: np.ndarray
    future_rewards: np.ndarray | None
    batch_size: int


def generate_dataset(env: Env, behavior, n_episodes: int, seed: int) -> OfflineDataset:
    """Roll out ``behavior`` for ``n_episodes``; deterministic under seed."""
    if n_episodes < 1:
        raise InvalidSpec("need at least one episode")
    rng = np.random.default_rng(seed)
    episodes = [rollout(env, behavior, rng, max_len=env.horizon) for _ in range(n_episodes)]
    descriptor = getattr(behavior, "descriptor", "custom")
    return OfflineDataset(
        episodes=episodes,
        env_id=env.env_id,
        gamma=env.gamma,
        horizon=env.horizon,
        rewards_available=True,
        behavior_descriptor=descriptor,
        space=env.space,
    )


def strip_rewards(dataset: OfflineDataset) -> OfflineDataset:
    """Same transitions, no reward signal; idempotent."""
    episodes = [
        Trajectory(states=ep.states, actions=ep.actions, rewards=None, terminal=ep.terminal)
        for ep in dataset.episodes
    ]
    return replace(dataset, episodes=episodes, rewards_available=False, reward_reads=0, skipped_episodes=0)


def _episode_pairs(ep: Trajectory, gamma: float, rng: np.random.Generator, include_rewards: bool):
    n_anchors = ep.n_steps
    anchor_t = np.arange(n_anchors)
    supports = (ep.length - 1) - anchor_t  # remaining future states per anchor
    offsets = sample_supports(1.0 - gamma, supports, rng)
    positives = ep.states[anchor_t + offsets]
    rewards = None
    if include_rewards:
        rewards = ep.rewards[anchor_t + offsets - 1]
    return ep.states[:-1], ep.actions, positives, offsets, rewards


def sample_batch(
    dataset: OfflineDataset,
    gamma: float,
    rng: np.random.Generator,
    include_rewards: bool = True,
) -> ContrastiveBatch:
    """Draw a contrastive batch (one episode's anchors plus a second
    episode's for cross-trajectory negatives).

    Episodes with fewer than two states are skipped and counted in the
    dataset's ``skipped_episodes`` diagnostic.
    """
    if not dataset.episodes:
        raise InvalidSpec("empty dataset")
    if include_rewards and not dataset.rewards_available:
        raise RewardRequired("dataset is reward-free")
    if not 0.0 <= gamma < 1.0:
        raise InvalidSpec("gamma must lie in [0, 1)")

    usable = [i for i, ep in enumerate(dataset.episodes) if ep.length >= 2]
    if not usable:
        raise InvalidSpec("no episode has at least two states")

    def draw_episode(exclude: int | None) -> int | None:
        candidates = [i for i in usable if i != exclude]
        if not candidates:
            return None
        while True:
            i = int(rng.integers(len(dataset.episodes)))
            if dataset.episodes[i].length < 2:
                dataset.skipped_episodes += 1
                continue
            if i == exclude:
                continue
            return i

    first = draw_episode(exclude=None)
    second = draw_episode(exclude=first)
    chosen = [first] if second is None else [first, second]

    parts = [_episode_pairs(dataset.episodes[i], gamma, rng, include_rewards) for i in chosen]
    anchor_states = np.concatenate([p[0] for p in parts])
    anchor_actions = np.concatenate([p[1] for p in parts])
    positives = np.concatenate([p[2] for p in parts])
    offsets = np.concatenate([p[3] for p in parts])
    rewards = None
    if include_rewards:
        rewards = np.concatenate([p[4] for p in parts])
        dataset.reward_reads += len(rewards)
    return ContrastiveBatch(
        anchor_states=anchor_states,
        anchor_actions=anchor_actions,
        positives=positives,
        offsets=offsets,
        future_rewards=rewards,
        batch_size=len(offsets),
    )


def state_action_frequencies(dataset: OfflineDataset, n_states: int, n_actions: int) -> np.ndarray:
    """Empirical (s, a) visit frequencies of a tabular dataset."""
    if dataset.space.state_kind != "index":
        raise InvalidSpec("frequencies need a tabular dataset")
    counts = np.zeros((n_states, n_actions))
    for ep in dataset.episodes:
        np.add.at(counts, (ep.states[:-1], ep.actions), 1.0)
    total = counts.sum()
    if total == 0:
        raise InvalidSpec("dataset has no transitions")
    return counts / total


# -- persistence -------------------------------------------------------------


def _hex(x: float) -> str:
    return float(x).hex()


def _write_array(out: list[str], arr: np.ndarray, kind: str):
    flat = arr.reshape(-1)
    out.append(str(arr.shape[0]))
    if kind == "index":
        out.extend(str(int(v)) for v in flat)
    else:
        out.extend(_hex(v) for v in flat)


class _TokenReader:
    def __init__(self, tokens: list[str], line: int):
        self.tokens = tokens
        self.line = line
        self.pos = 0

    def take(self) -> str:
        if self.pos >= len(self.tokens):
            raise FormatError("truncated record", line=self.line)
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def take_int(self) -> int:
        tok = self.take()
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"expected integer, got {tok!r}", line=self.line) from None

    def take_float(self) -> float:
        tok = self.take()
        try:
            return float.fromhex(tok)
        except ValueError:
            raise FormatError(f"expected hex float, got {tok!r}", line=self.line) from None


def _read_array(reader: _TokenReader, kind: str, width: int) -> np.ndarray:
    n = reader.take_int()
    if kind == "index":
        vals = np.array([reader.take_int() for _ in range(n)], dtype=np.int64)
        return vals
    vals = np.array([reader.take_float() for _ in range(n * width)], dtype=np.float64)
    return vals.reshape(n, width)


def save(dataset: OfflineDataset, path):
    """Write the dataset in the line-based, bit-exact text format."""
    buf = io.StringIO()
    buf.write(f"{_MAGIC} v{_VERSION}\n")
    buf.write(f"env_id {dataset.env_id.replace(' ', '_')}\n")
    buf.write(f"gamma {_hex(dataset.gamma)}\n")
    buf.write(f"horizon {dataset.horizon}\n")
    buf.write(f"rewards_available {int(dataset.rewards_available)}\n")
    buf.write(f"behavior {dataset.behavior_descriptor.replace(' ', '_')}\n")
    s = dataset.space
    if s.state_kind == "index":
        buf.write(f"space index {s.n_states} {s.n_actions}\n")
    else:
        parts = (
            [str(s.state_dim), str(s.action_dim)]
            + [_hex(v) for v in s.state_low]
            + [_hex(v) for v in s.state_high]
            + [_hex(v) for v in s.action_low]
            + [_hex(v) for v in s.action_high]
        )
        buf.write("space vector " + " ".join(parts) + "\n")
    buf.write(f"episodes {dataset.n_episodes}\n")
    for ep in dataset.episodes:
        out: list[str] = []
        _write_array(out, ep.states, s.state_kind)
        _write_array(out, ep.actions, s.action_kind)
        if ep.rewards is None:
            out.append("0")
        else:
            out.append(str(len(ep.rewards)))
            out.extend(_hex(v) for v in ep.rewards)
        out.append(str(int(ep.terminal)))
        buf.write(" ".join(out) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())


def _header_value(lines: list[str], idx: int, key: str) -> list[str]:
    if idx >= len(lines):
        raise FormatError(f"missing header line {key!r}", line=idx + 1)
    parts = lines[idx].split()
    if not parts or parts[0] != key:
        raise FormatError(f"expected header {key!r}", line=idx + 1)
    return parts[1:]


def load(path) -> OfflineDataset:
    """Read a dataset written by ``save``; exact field-by-field inverse."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty file", line=1)
    magic = lines[0].split()
    if not magic or magic[0] != _MAGIC:
        raise FormatError("not a dataset file", line=1)
    if len(magic) != 2 or magic[1] != f"v{_VERSION}":
        raise VersionError(f"unsupported dataset version {' '.join(magic[1:])!r}")
    env_id = _header_value(lines, 1, "env_id")[0]
    gamma = float.fromhex(_header_value(lines, 2, "gamma")[0])
    horizon = int(_header_value(lines, 3, "horizon")[0])
    rewards_available = bool(int(_header_value(lines, 4, "rewards_available")[0]))
    behavior = _header_value(lines, 5, "behavior")[0]
    space_parts = _header_value(lines, 6, "space")
    try:
        if space_parts[0] == "index":
            space = SpaceInfo(
                state_kind="index",
                action_kind="index",
                n_states=int(space_parts[1]),
                n_actions=int(space_parts[2]),
            )
        elif space_parts[0] == "vector":
            sd, ad = int(space_parts[1]), int(space_parts[2])
            vals = [float.fromhex(v) for v in space_parts[3:]]
            if len(vals) != 2 * sd + 2 * ad:
                raise FormatError("space bounds do not match dimensions", line=7)
            space = SpaceInfo(
                state_kind="vector",
                action_kind="vector",
                state_dim=sd,
                action_dim=ad,
                state_low=tuple(vals[:sd]),
                state_high=tuple(vals[sd : 2 * sd]),
                action_low=tuple(vals[2 * sd : 2 * sd + ad]),
                action_high=tuple(vals[2 * sd + ad :]),
            )
        else:
            raise FormatError(f"unknown space kind {space_parts[0]!r}", line=7)
    except (ValueError, IndexError):
        raise FormatError("malformed space header", line=7) from None
    n_episodes = int(_header_value(lines, 7, "episodes")[0])
    episodes = []
    for i in range(n_episodes):
        lineno = 9 + i
        if 8 + i >= len(lines):
            raise FormatError("fewer episode records than declared", line=lineno)
        reader = _TokenReader(lines[8 + i].split(), line=lineno)
        states = _read_array(reader, space.state_kind, space.state_dim)
        actions = _read_array(reader, space.action_kind, space.action_dim)
        n_rewards = reader.take_int()
        rewards = None
        if n_rewards:
            rewards = np.array([reader.take_float() for _ in range(n_rewards)])
        terminal = bool(reader.take_int())
        if reader.pos != len(reader.tokens):
            raise FormatError("trailing tokens in episode record", line=lineno)
        episodes.append(Trajectory(states=states, actions=actions, rewards=rewards, terminal=terminal))
    try:
        return OfflineDataset(
            episodes=episodes,
            env_id=env_id,
            gamma=gamma,
            horizon=horizon,
            rewards_available=rewards_available,
            behavior_descriptor=behavior,
            space=space,
        )
    except InvalidSpec as exc:
        raise FormatError(f"inconsistent dataset: {exc}") from exc
