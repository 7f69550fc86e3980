"""Exact ground truth for tabular MDPs.

Everything here is deterministic linear algebra: discounted occupancy
measures via a resolvent solve, Q-functions in both the occupancy-weighted
and Bellman forms, density ratios against a dataset-weighted marginal, and
a Spearman rank correlation used to compare learned quantities against
these tables.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .envs import TabularMDP
from .errors import InvalidSpec

_COND_WARN = 1e8


@dataclass(frozen=True, eq=False)
class OccupancyTable:
    """Discounted future-state distribution per (s, a); rows sum to one."""

    occupancy: np.ndarray  # (S, A, S)
    marginal: np.ndarray | None
    gamma: float
    horizon: int | None  # None = infinite


@dataclass(frozen=True, eq=False)
class RatioTable:
    """occupancy / marginal with NaN at unsupported next states."""

    ratio: np.ndarray  # (S, A, S)
    marginal: np.ndarray  # (S,)
    supported: np.ndarray  # (S,) bool, marginal > 0
    gamma: float
    horizon: int | None


def _policy_transition(mdp: TabularMDP, policy_table: np.ndarray) -> np.ndarray:
    if policy_table.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidSpec("policy table shape does not match the MDP")
    if np.any(policy_table < 0) or np.max(np.abs(policy_table.sum(axis=1) - 1.0)) > 1e-9:
        raise InvalidSpec("policy table rows must be distributions")
    return np.einsum("sa,sax->sx", policy_table, mdp.transition)


def _resolvent(mdp: TabularMDP, M: np.ndarray) -> np.ndarray:
    """(I - gamma * M)^-1 via an LU solve, warning on poor conditioning."""
    A = np.eye(mdp.n_states) - mdp.gamma * M
    cond = np.linalg.cond(A)
    if cond > _COND_WARN:
        warnings.warn(f"occupancy solve is ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(A, np.eye(mdp.n_states))


def exact_occupancy(mdp: TabularMDP, policy_table: np.ndarray, horizon: int | None = None) -> OccupancyTable:
    """Discounted occupancy d(s'|s,a) = norm * sum_k gamma^(k-1) P[S_{t+k}=s'].

    The infinite-horizon case uses the closed form
    (1 - gamma) * P_a @ (I - gamma * M)^-1 with M the policy-averaged
    transition matrix; a finite horizon truncates the series and
    renormalizes by 1 / (1 - gamma^H).
    """
    if mdp.gamma >= 1.0:
        raise InvalidSpec("gamma must be below 1 for the occupancy solve")
    M = _policy_transition(mdp, policy_table)
    if horizon is None:
        series = _resolvent(mdp, M)
        scale = 1.0 - mdp.gamma
    else:
        if horizon < 1:
            raise InvalidSpec("horizon must be positive")
        term = np.eye(mdp.n_states)
        series = np.eye(mdp.n_states)
        for _ in range(horizon - 1):
            term = mdp.gamma * (term @ M)
            series += term
        scale = (1.0 - mdp.gamma) / (1.0 - mdp.gamma**horizon)
    occ = scale * np.einsum("sax,xy->say", mdp.transition, series)
    return OccupancyTable(occupancy=occ, marginal=None, gamma=mdp.gamma, horizon=horizon)


def exact_q(mdp: TabularMDP, policy_table: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """Q(s,a) as the discounted sum of rewards at future states.

    Computed by reward-weighting the occupancy table; agrees with the
    Bellman solve (see ``bellman_q``) to solver precision.
    """
    occ = exact_occupancy(mdp, policy_table, horizon=horizon)
    if horizon is None:
        scale = 1.0 / (1.0 - mdp.gamma)
    else:
        scale = (1.0 - mdp.gamma**horizon) / (1.0 - mdp.gamma)
    return scale * occ.occupancy @ mdp.reward


def bellman_q(mdp: TabularMDP, policy_table: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """Independent Q computation through the Bellman equations."""
    M = _policy_transition(mdp, policy_table)
    if horizon is None:
        V = _resolvent(mdp, M) @ (M @ mdp.reward)
        return mdp.transition @ (mdp.reward + mdp.gamma * V)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(horizon):
        V = np.einsum("sa,sa->s", policy_table, Q)
        Q = mdp.transition @ (mdp.reward + mdp.gamma * V)
    return Q


def exact_ratio(
    mdp: TabularMDP,
    policy_table: np.ndarray,
    anchor_weights: np.ndarray,
    horizon: int | None = None,
) -> RatioTable:
    """Occupancy over the anchor-weighted marginal.

    ``anchor_weights[s, a]`` are the dataset frequencies of state-action
    pairs; the marginal is the matching mixture of occupancy rows.  Entries
    whose marginal is zero are NaN and excluded from ``supported``.
    """
    w = np.asarray(anchor_weights, dtype=np.float64)
    if w.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidSpec("anchor weights shape does not match the MDP")
    total = w.sum()
    if total <= 0:
        raise InvalidSpec("anchor weights must not be all zero")
    w = w / total
    occ = exact_occupancy(mdp, policy_table, horizon=horizon).occupancy
    marginal = np.einsum("sa,sax->x", w, occ)
    supported = marginal > 0
    ratio = np.full_like(occ, np.nan)
    ratio[:, :, supported] = occ[:, :, supported] / marginal[supported]
    return RatioTable(ratio=ratio, marginal=marginal, supported=supported, gamma=mdp.gamma, horizon=horizon)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties sharing their average rank."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise InvalidSpec("sequences must have equal length")
    if len(x) < 2:
        raise InvalidSpec("need at least two points")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0.0:
        return float("nan")
    return float((rx @ ry) / denom)


def value_iteration(mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal Q and its greedy policy table (ties to the lowest index)."""
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        V = Q.max(axis=1)
        Q_new = mdp.transition @ (mdp.reward + mdp.gamma * V)
        if np.max(np.abs(Q_new - Q)) < tol:
            Q = Q_new
            break
        Q = Q_new
    greedy = np.zeros_like(Q)
    greedy[np.arange(mdp.n_states), Q.argmax(axis=1)] = 1.0
    return Q, greedy
