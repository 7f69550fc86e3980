"""The implicit occupancy model.

Two encoders score how likely a future state is, given a state-action
anchor: ``sa_encoder`` embeds the anchor, ``future_encoder`` embeds the
candidate future state, and the scaled inner product of the (optionally
L2-normalized) embeddings is the classifier logit.  Training classifies
each anchor's true future state against the other futures in the batch
(InfoNCE with in-batch negatives) plus a squared-log-partition regularizer
that pins the per-row normalization.  A slow EMA copy of the future encoder
serves the Q-estimation side.

Forward passes through the future encoder are counted (``future_encode_rows``)
so the complexity contract of the random-feature Q path can be asserted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .config import TrainConfig
from .errors import BatchTooSmall, NumericalFault
from .nets import AdamState, MLPParams

# Rows pushed through the future encoder (either copy) since the last reset.
_FUTURE_ENCODE_ROWS = 0


def future_encode_rows() -> int:
    return _FUTURE_ENCODE_ROWS


def reset_future_encode_rows():
    global _FUTURE_ENCODE_ROWS
    _FUTURE_ENCODE_ROWS = 0


@dataclass(eq=False)
class CriticParams:
    """Paired encoders plus the EMA target copy of the future encoder."""

    sa_encoder: MLPParams
    future_encoder: MLPParams
    future_encoder_target: MLPParams
    l2_normalize_outputs: bool = True
    temperature: float = 1.0


def init_critic(
    rng: np.random.Generator,
    state_dim: int,
    action_dim: int,
    hidden: tuple[int, ...],
    latent_dim: int,
    densenet: bool = True,
    layernorm: bool = True,
    l2_normalize_outputs: bool = True,
    temperature: float = 1.0,
) -> CriticParams:
    future = nets.init_mlp(rng, state_dim, hidden, latent_dim, densenet=densenet, layernorm=layernorm)
    target = _copy_mlp(future)
    return CriticParams(
        sa_encoder=nets.init_mlp(
            rng, state_dim + action_dim, hidden, latent_dim, densenet=densenet, layernorm=layernorm
        ),
        future_encoder=future,
        future_encoder_target=target,
        l2_normalize_outputs=l2_normalize_outputs,
        temperature=temperature,
    )


def _copy_mlp(params: MLPParams) -> MLPParams:
    return replace(
        params,
        weights=[w.copy() for w in params.weights],
        biases=[b.copy() for b in params.biases],
        ln_scales=[s.copy() for s in params.ln_scales],
        ln_shifts=[s.copy() for s in params.ln_shifts],
    )


def encode_anchor(critic: CriticParams, sa_feats: np.ndarray):
    """Embed state-action rows; returns (embedding, raw_output, cache)."""
    raw, cache = nets.forward(critic.sa_encoder, sa_feats)
    emb = nets.l2_normalize(raw) if critic.l2_normalize_outputs else raw
    return emb, raw, cache


def encode_future(critic: CriticParams, state_feats: np.ndarray, target: bool = False):
    """Embed future-state rows; counted for the complexity contract."""
    global _FUTURE_ENCODE_ROWS
    net = critic.future_encoder_target if target else critic.future_encoder
    raw, cache = nets.forward(net, state_feats)
    _FUTURE_ENCODE_ROWS += np.atleast_2d(state_feats).shape[0]
    emb = nets.l2_normalize(raw) if critic.l2_normalize_outputs else raw
    return emb, raw, cache


def critic_logits(
    critic: CriticParams,
    anchor_feats: np.ndarray,
    positive_feats: np.ndarray,
    target: bool = False,
) -> np.ndarray:
    """K x K similarity matrix: entry (i, j) scores anchor i against
    positive j; the diagonal holds the true pairs."""
    if np.atleast_2d(anchor_feats).shape[0] < 2:
        raise BatchTooSmall("need at least two anchors for a contrastive batch")
    a, _, _ = encode_anchor(critic, anchor_feats)
    p, _, _ = encode_future(critic, positive_feats, target=target)
    logits = (a @ p.T) / critic.temperature
    if not np.all(np.isfinite(logits)):
        raise NumericalFault("non-finite logits")
    return logits


def infonce_loss(logits: np.ndarray) -> float:
    """Mean over rows of -log softmax(row)[diagonal]."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericalFault("non-finite logits")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    return float(np.mean(lse - np.diag(logits)))


def infonce_grad(logits: np.ndarray) -> np.ndarray:
    """d infonce_loss / d logits."""
    k = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    g = p.copy()
    g[np.arange(k), np.arange(k)] -= 1.0
    return g / k


def partition_reg(logits: np.ndarray) -> float:
    """Mean over rows of (log sum_j exp(logit_ij))^2."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericalFault("non-finite logits")
    m = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - m).sum(axis=1)) + m[:, 0]
    return float(np.mean(lse**2))


def partition_reg_grad(logits: np.ndarray) -> np.ndarray:
    k = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    p = np.exp(logits - m)
    p /= p.sum(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - m).sum(axis=1)) + m[:, 0]
    return (2.0 / k) * lse[:, None] * p


def ema_update(target: MLPParams, source: MLPParams, beta: float) -> MLPParams:
    """target <- beta * source + (1 - beta) * target, elementwise."""
    return replace(
        target,
        weights=[beta * s + (1.0 - beta) * t for s, t in zip(source.weights, target.weights)],
        biases=[beta * s + (1.0 - beta) * t for s, t in zip(source.biases, target.biases)],
        ln_scales=[beta * s + (1.0 - beta) * t for s, t in zip(source.ln_scales, target.ln_scales)],
        ln_shifts=[beta * s + (1.0 - beta) * t for s, t in zip(source.ln_shifts, target.ln_shifts)],
    )


def critic_update(
    critic: CriticParams,
    anchor_feats: np.ndarray,
    positive_feats: np.ndarray,
    config: TrainConfig,
    adam: AdamState,
):
    """One gradient step on both encoders, then the EMA target refresh.

    The batch needs no rewards, so reward-free pretraining runs through this
    exact code path.  Returns (critic, adam, metrics).
    """
    if np.atleast_2d(anchor_feats).shape[0] < 2:
        raise BatchTooSmall("need at least two anchors")
    a_emb, a_raw, a_cache = encode_anchor(critic, anchor_feats)
    p_emb, p_raw, p_cache = encode_future(critic, positive_feats, target=False)
    logits = (a_emb @ p_emb.T) / critic.temperature
    if not np.all(np.isfinite(logits)):
        raise NumericalFault("non-finite logits")

    loss = infonce_loss(logits)
    reg = partition_reg(logits)
    dlogits = infonce_grad(logits)
    if config.lambda_partition > 0:
        dlogits = dlogits + config.lambda_partition * partition_reg_grad(logits)

    da_emb = (dlogits @ p_emb) / critic.temperature
    dp_emb = (dlogits.T @ a_emb) / critic.temperature
    if critic.l2_normalize_outputs:
        da_raw = nets.l2_normalize_backward(a_raw, da_emb)
        dp_raw = nets.l2_normalize_backward(p_raw, dp_emb)
    else:
        da_raw, dp_raw = da_emb, dp_emb
    a_grads, _ = nets.backward(critic.sa_encoder, a_cache, da_raw)
    p_grads, _ = nets.backward(critic.future_encoder, p_cache, dp_raw)

    arrays = nets.param_list(critic.sa_encoder) + nets.param_list(critic.future_encoder)
    grads = nets.grad_list(critic.sa_encoder, a_grads) + nets.grad_list(critic.future_encoder, p_grads)
    adam, new_arrays, grad_norm = nets.adam_step(adam, arrays, grads, max_grad_norm=config.max_grad_norm)

    n_sa = len(nets.param_list(critic.sa_encoder))
    new_sa = nets.with_param_list(critic.sa_encoder, new_arrays[:n_sa])
    new_future = nets.with_param_list(critic.future_encoder, new_arrays[n_sa:])
    new_target = ema_update(critic.future_encoder_target, new_future, config.ema_beta)
    new_critic = replace(
        critic, sa_encoder=new_sa, future_encoder=new_future, future_encoder_target=new_target
    )
    metrics = {
        "critic_loss": loss,
        "partition_reg": reg,
        "positive_logit_mean": float(np.mean(np.diag(logits))),
        "critic_grad_norm": grad_norm,
    }
    return new_critic, adam, metrics
