"""Minimal dense network kernel with explicit forward and backward passes.

The encoder architecture is an MLP whose hidden layers apply a linear map,
LayerNorm, then ReLU, and (in DenseNet mode) concatenate each layer's input
to its activation before the next layer; a final linear layer produces the
output.  Gradients are computed by hand and verified against central finite
differences in the test suite, which keeps training fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalFault, ShapeError

_LN_EPS = 1e-5
_L2_EPS = 1e-12

# Rows that hit the zero-vector guard in l2_normalize since the last reset.
_L2_DEGENERATE_ROWS = 0


@dataclass(eq=False)
class MLPParams:
    """Weights of one MLP.

    ``weights[i]`` has shape (fan_out, fan_in); the last entry is the output
    layer.  ``ln_scales`` / ``ln_shifts`` hold one LayerNorm pair per hidden
    layer (unused when ``layernorm`` is off).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    ln_scales: list[np.ndarray]
    ln_shifts: list[np.ndarray]
    densenet: bool = True
    layernorm: bool = True

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1


@dataclass(eq=False)
class MLPGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    ln_scales: list[np.ndarray]
    ln_shifts: list[np.ndarray]


def init_mlp(
    rng: np.random.Generator,
    input_dim: int,
    hidden: tuple[int, ...],
    output_dim: int,
    densenet: bool = True,
    layernorm: bool = True,
) -> MLPParams:
    """Fan-in scaled uniform weights, zero biases, identity LayerNorm."""
    weights, biases, scales, shifts = [], [], [], []
    fan_in = input_dim
    for width in hidden:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(width, fan_in)))
        biases.append(np.zeros(width))
        scales.append(np.ones(width))
        shifts.append(np.zeros(width))
        fan_in = fan_in + width if densenet else width
    bound = 1.0 / np.sqrt(fan_in)
    weights.append(rng.uniform(-bound, bound, size=(output_dim, fan_in)))
    biases.append(np.zeros(output_dim))
    return MLPParams(weights, biases, scales, shifts, densenet=densenet, layernorm=layernorm)


def forward(params: MLPParams, x: np.ndarray):
    """Evaluate the network; returns (output, cache) with the cache holding
    every intermediate needed by ``backward``.  Accepts a single vector or a
    batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"input of width {x.shape[-1]} into a net expecting {params.input_dim}")
    layers = []
    h = x
    for i in range(params.n_hidden):
        z = h @ params.weights[i].T + params.biases[i]
        if params.layernorm:
            mean = z.mean(axis=1, keepdims=True)
            var = z.var(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(var + _LN_EPS)
            z_hat = (z - mean) * inv_std
            n = params.ln_scales[i] * z_hat + params.ln_shifts[i]
        else:
            z_hat, inv_std = None, None
            n = z
        a = np.maximum(n, 0.0)
        nxt = np.concatenate([h, a], axis=1) if params.densenet else a
        layers.append({"x": h, "relu_mask": n > 0.0, "z_hat": z_hat, "inv_std": inv_std})
        h = nxt
    y = h @ params.weights[-1].T + params.biases[-1]
    if not np.all(np.isfinite(y)):
        raise NumericalFault("non-finite activation in forward pass")
    cache = {"layers": layers, "last": h, "single": single, "batch": x.shape[0]}
    return (y[0] if single else y), cache


def _layernorm_backward(dn, z_hat, inv_std, scale):
    d_hat = dn * scale
    dz = inv_std * (
        d_hat - d_hat.mean(axis=1, keepdims=True) - z_hat * (d_hat * z_hat).mean(axis=1, keepdims=True)
    )
    return dz, (dn * z_hat).sum(axis=0), dn.sum(axis=0)


def backward(params: MLPParams, cache, output_grad: np.ndarray):
    """Exact gradients of the forward map.

    Returns (MLPGrads, input_grad); ``output_grad`` must match the forward
    call's output shape.
    """
    dy = np.asarray(output_grad, dtype=np.float64)
    if cache["single"]:
        dy = dy[None, :]
    if dy.shape != (cache["batch"], params.output_dim):
        raise ShapeError("output_grad shape does not match the forward pass")
    h = cache["last"]
    gw = [dy.T @ h]
    gb = [dy.sum(axis=0)]
    gls, glh = [], []
    dh = dy @ params.weights[-1]
    for i in reversed(range(params.n_hidden)):
        layer = cache["layers"][i]
        x = layer["x"]
        if params.densenet:
            dx_skip, da = dh[:, : x.shape[1]], dh[:, x.shape[1] :]
        else:
            dx_skip, da = 0.0, dh
        dn = da * layer["relu_mask"]
        if params.layernorm:
            dz, g_scale, g_shift = _layernorm_backward(dn, layer["z_hat"], layer["inv_std"], params.ln_scales[i])
        else:
            dz, g_scale, g_shift = dn, np.zeros_like(params.ln_scales[i]), np.zeros_like(params.ln_shifts[i])
        gw.append(dz.T @ x)
        gb.append(dz.sum(axis=0))
        gls.append(g_scale)
        glh.append(g_shift)
        dh = dx_skip + dz @ params.weights[i]
    grads = MLPGrads(
        weights=list(reversed(gw)),
        biases=list(reversed(gb)),
        ln_scales=list(reversed(gls)),
        ln_shifts=list(reversed(glh)),
    )
    dx = dh[0] if cache["single"] else dh
    return grads, dx


def param_list(params: MLPParams) -> list[np.ndarray]:
    """Flat ordering of the parameter arrays (stable across calls)."""
    out = list(params.weights) + list(params.biases)
    if params.layernorm:
        out += list(params.ln_scales) + list(params.ln_shifts)
    return out


def grad_list(params: MLPParams, grads: MLPGrads) -> list[np.ndarray]:
    out = list(grads.weights) + list(grads.biases)
    if params.layernorm:
        out += list(grads.ln_scales) + list(grads.ln_shifts)
    return out


def with_param_list(params: MLPParams, arrays: list[np.ndarray]) -> MLPParams:
    """Rebuild an MLPParams from the flat array ordering of ``param_list``."""
    n = len(params.weights)
    weights = [a for a in arrays[:n]]
    biases = [a for a in arrays[n : 2 * n]]
    if params.layernorm:
        k = params.n_hidden
        scales = [a for a in arrays[2 * n : 2 * n + k]]
        shifts = [a for a in arrays[2 * n + k : 2 * n + 2 * k]]
    else:
        scales = [a.copy() for a in params.ln_scales]
        shifts = [a.copy() for a in params.ln_shifts]
    return replace(params, weights=weights, biases=biases, ln_scales=scales, ln_shifts=shifts)


def zeros_like_grads(params: MLPParams) -> MLPGrads:
    return MLPGrads(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
        ln_scales=[np.zeros_like(s) for s in params.ln_scales],
        ln_shifts=[np.zeros_like(s) for s in params.ln_shifts],
    )


def add_grads(a: MLPGrads, b: MLPGrads, scale: float = 1.0) -> MLPGrads:
    return MLPGrads(
        weights=[x + scale * y for x, y in zip(a.weights, b.weights)],
        biases=[x + scale * y for x, y in zip(a.biases, b.biases)],
        ln_scales=[x + scale * y for x, y in zip(a.ln_scales, b.ln_scales)],
        ln_shifts=[x + scale * y for x, y in zip(a.ln_shifts, b.ln_shifts)],
    )


@dataclass(eq=False)
class AdamState:
    """Adam moments for a fixed list of parameter arrays."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(arrays: list[np.ndarray], learning_rate: float) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(a) for a in arrays],
        second_moment=[np.zeros_like(a) for a in arrays],
        step_count=0,
        learning_rate=learning_rate,
    )


def global_grad_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def adam_step(
    state: AdamState,
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
    max_grad_norm: float = 100.0,
):
    """One Adam update with bias correction and global-norm clipping.

    Returns (new_state, new_arrays, pre_clip_grad_norm).  Raises
    NumericalFault on non-finite gradients without touching the parameters.
    """
    if len(arrays) != len(grads) or any(a.shape != g.shape for a, g in zip(arrays, grads)):
        raise ShapeError("gradient shapes do not match parameters")
    norm = global_grad_norm(grads)
    if not np.isfinite(norm):
        raise NumericalFault("non-finite gradient; update skipped")
    if max_grad_norm > 0 and norm > max_grad_norm:
        grads = [g * (max_grad_norm / norm) for g in grads]
    t = state.step_count + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(arrays, grads, state.first_moment, state.second_moment):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
    new_state = replace(state, first_moment=new_m, second_moment=new_v, step_count=t)
    return new_state, new_p, norm


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; near-zero rows pass through a guard and are
    counted in the degenerate-row diagnostic."""
    global _L2_DEGENERATE_ROWS
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    rows = v[None, :] if single else v
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    degenerate = norms <= _L2_EPS
    if np.any(degenerate):
        _L2_DEGENERATE_ROWS += int(degenerate.sum())
    out = rows / np.maximum(norms, _L2_EPS)
    return out[0] if single else out


def l2_normalize_backward(v: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient of l2_normalize w.r.t. its input (rows independent)."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    dout = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    norms = np.maximum(np.linalg.norm(v, axis=1, keepdims=True), _L2_EPS)
    u = v / norms
    return (dout - u * (u * dout).sum(axis=1, keepdims=True)) / norms


def l2_degenerate_rows() -> int:
    return _L2_DEGENERATE_ROWS


def reset_l2_degenerate_rows():
    global _L2_DEGENERATE_ROWS
    _L2_DEGENERATE_ROWS = 0
