"""Q-value estimation from the learned critic.

Two estimators of the same quantity, a reward-weighted average of
exponentiated critic logits over future states, scaled by 1 / (1 - gamma):

* the direct path re-encodes a pool of future states at every query;
* the random-feature path exploits the cosine feature map
  F(x) = sqrt(2e/k) * cos(W x + b), whose inner products approximate
  exp(x . y) for unit vectors in expectation, to split the exponential:
  all future-state work collapses into a single running vector
  (``reward_features``, an EMA of reward-weighted mapped features), after
  which each query is one anchor encoding plus one dot product and never
  touches the future encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .critic import CriticParams, encode_anchor, encode_future
from .errors import AccumulatorUninitialized, InvalidSpec, RewardRequired, ShapeError


@dataclass(eq=False)
class RFFState:
    """Fixed random projection plus the reward-weighted feature average.

    ``projection`` (k x d) and ``phase`` (k,) are drawn once and never
    trained.  ``reward_features`` tracks the batch estimates by EMA with
    step ``ema_coeff``; the first batch initializes it directly.
    """

    projection: np.ndarray
    phase: np.ndarray
    reward_features: np.ndarray
    ema_coeff: float
    initialized: bool = False

    @property
    def feature_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.projection.shape[1]


def init_rff(rng: np.random.Generator, feature_dim: int, latent_dim: int, ema_coeff: float) -> RFFState:
    if feature_dim < 1 or latent_dim < 1:
        raise InvalidSpec("feature and latent dimensions must be positive")
    if not 0.0 < ema_coeff <= 1.0:
        raise InvalidSpec("ema_coeff must lie in (0, 1]")
    return RFFState(
        projection=rng.standard_normal((feature_dim, latent_dim)),
        phase=rng.uniform(0.0, 2.0 * np.pi, size=feature_dim),
        reward_features=np.zeros(feature_dim),
        ema_coeff=ema_coeff,
        initialized=False,
    )


def rff_features(rff: RFFState, z: np.ndarray) -> np.ndarray:
    """sqrt(2e/k) * cos(W z + b) for one latent vector or a batch of rows."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    rows = z[None, :] if single else z
    if rows.shape[1] != rff.latent_dim:
        raise ShapeError(f"latent width {rows.shape[1]} does not match projection {rff.latent_dim}")
    scale = np.sqrt(2.0 * np.e / rff.feature_dim)
    out = scale * np.cos(rows @ rff.projection.T + rff.phase)
    return out[0] if single else out


def rff_features_backward(rff: RFFState, z: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient of ``rff_features`` w.r.t. its latent input."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    dout = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    scale = np.sqrt(2.0 * np.e / rff.feature_dim)
    inner = -scale * np.sin(z @ rff.projection.T + rff.phase) * dout
    return inner @ rff.projection


def update_reward_features(rff: RFFState, future_feats: np.ndarray, future_rewards: np.ndarray) -> RFFState:
    """Fold one batch of reward-weighted, feature-mapped future states into
    the running average."""
    if future_rewards is None:
        raise RewardRequired("reward-free batch cannot update the reward-feature average")
    feats = np.atleast_2d(future_feats)
    r = np.asarray(future_rewards, dtype=np.float64).reshape(-1)
    if feats.shape[0] != len(r):
        raise ShapeError("one reward per future feature row required")
    if feats.shape[1] != rff.feature_dim:
        raise ShapeError("feature width does not match the projection")
    batch_estimate = (feats * r[:, None]).mean(axis=0)
    if not rff.initialized:
        new = batch_estimate
    else:
        new = (1.0 - rff.ema_coeff) * rff.reward_features + rff.ema_coeff * batch_estimate
    return replace(rff, reward_features=new, initialized=True)


def q_weighted(exp_logits: np.ndarray, rewards: np.ndarray, gamma: float, weights: np.ndarray | None = None):
    """Core estimator: reward-weighted average of exponentiated logits
    over future samples, scaled by 1 / (1 - gamma).

    ``exp_logits`` has one row per query and one column per future sample.
    ``weights`` (optional, per future sample) reweights the average; by
    default the samples are assumed to come from the offset sampler already,
    so a plain mean applies.
    """
    exp_logits = np.atleast_2d(exp_logits)
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if exp_logits.shape[1] != len(r):
        raise InvalidSpec("one reward per future sample required")
    if len(r) == 0:
        raise InvalidSpec("need at least one future sample")
    if weights is None:
        avg = exp_logits @ r / len(r)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(w) != len(r):
            raise InvalidSpec("one weight per future sample required")
        avg = exp_logits @ (w * r) / w.sum()
    return avg / (1.0 - gamma)


def q_value_direct(
    critic: CriticParams,
    sa_feats: np.ndarray,
    future_state_feats: np.ndarray,
    future_rewards: np.ndarray,
    gamma: float,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Monte-Carlo Q estimate against a pool of future states.

    Encodes the pool through the target future encoder at every call, which
    is exactly the cost the random-feature path amortizes away.
    """
    a_emb, _, _ = encode_anchor(critic, sa_feats)
    f_emb, _, _ = encode_future(critic, future_state_feats, target=True)
    logits = (a_emb @ f_emb.T) / critic.temperature
    q = q_weighted(np.exp(logits), future_rewards, gamma, weights=weights)
    return q if np.asarray(sa_feats).ndim > 1 else q[0]


def q_value_rff(critic: CriticParams, rff: RFFState, sa_feats: np.ndarray, gamma: float) -> np.ndarray:
    """Linearized Q estimate: feature-mapped anchor dotted with the reward
    feature average; no future-encoder work at call time."""
    if not rff.initialized:
        raise AccumulatorUninitialized("no reward-labeled batch folded in yet")
    a_emb, _, _ = encode_anchor(critic, sa_feats)
    q = rff_features(rff, np.atleast_2d(a_emb)) @ rff.reward_features / (1.0 - gamma)
    return q if np.asarray(sa_feats).ndim > 1 else q[0]


def _anchor_embedding_backward(critic: CriticParams, raw, cache, d_emb):
    if critic.l2_normalize_outputs:
        d_raw = nets.l2_normalize_backward(raw, d_emb)
    else:
        d_raw = d_emb
    _, d_in = nets.backward(critic.sa_encoder, cache, d_raw)
    return d_in


def make_rff_q_fn(critic: CriticParams, rff: RFFState, gamma: float):
    """Q function for policy decoding: (state_feats, action_feats) ->
    (q, dq/d action_feats)."""
    if not rff.initialized:
        raise AccumulatorUninitialized("no reward-labeled batch folded in yet")

    def q_fn(state_feats: np.ndarray, action_feats: np.ndarray):
        sa = np.concatenate([np.atleast_2d(state_feats), np.atleast_2d(action_feats)], axis=1)
        emb, raw, cache = encode_anchor(critic, sa)
        feats = rff_features(rff, emb)
        q = feats @ rff.reward_features / (1.0 - gamma)
        d_emb = rff_features_backward(rff, emb, np.tile(rff.reward_features, (sa.shape[0], 1))) / (1.0 - gamma)
        d_in = _anchor_embedding_backward(critic, raw, cache, d_emb)
        da = d_in[:, np.atleast_2d(state_feats).shape[1] :]
        return q, da

    return q_fn


def make_direct_q_fn(
    critic: CriticParams,
    future_state_feats: np.ndarray,
    future_rewards: np.ndarray,
    gamma: float,
):
    """Direct-path Q function; re-encodes the future pool on every call."""
    if future_rewards is None:
        raise RewardRequired("direct Q estimation needs future rewards")
    r = np.asarray(future_rewards, dtype=np.float64).reshape(-1)

    def q_fn(state_feats: np.ndarray, action_feats: np.ndarray):
        sa = np.concatenate([np.atleast_2d(state_feats), np.atleast_2d(action_feats)], axis=1)
        emb, raw, cache = encode_anchor(critic, sa)
        f_emb, _, _ = encode_future(critic, future_state_feats, target=True)
        logits = (np.atleast_2d(emb) @ f_emb.T) / critic.temperature
        expl = np.exp(logits)
        q = expl @ r / (len(r) * (1.0 - gamma))
        # dq/d emb: sum_i r_i exp(logit_i) f_i / (K (1-gamma) temperature)
        d_emb = (expl * r) @ f_emb / (len(r) * (1.0 - gamma) * critic.temperature)
        d_in = _anchor_embedding_backward(critic, raw, cache, d_emb)
        da = d_in[:, np.atleast_2d(state_feats).shape[1] :]
        return q, da

    return q_fn
