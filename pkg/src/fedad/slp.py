"""Single-hidden-layer perceptron detector: Glorot init, forward pass,
binary cross-entropy, exact backprop, and Adam.

The network maps one AP's real feature vector (length 2*L*N) through a
ReLU hidden layer of V units to K sigmoid outputs, one activity
probability per device. Everything is plain numpy and purely
functional: forward/backward/adam_step never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class SlpParams:
    """Two dense layers. Also reused as the container for gradients and
    Adam moments, which share these shapes."""

    w1: np.ndarray  # (V, F)
    b1: np.ndarray  # (V,)
    w2: np.ndarray  # (K, V)
    b2: np.ndarray  # (K,)

    def map(self, fn, *others: "SlpParams") -> "SlpParams":
        """Apply fn leaf-wise across this and optional other parameter sets."""
        return SlpParams(
            *(fn(*leaves) for leaves in zip(self.leaves(), *(o.leaves() for o in others)))
        )

    def leaves(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


@dataclass(frozen=True)
class AdamState:
    first_moment: SlpParams
    second_moment: SlpParams
    step_count: int
    lr: float
    beta1: float
    beta2: float
    epsilon: float


def init_params(config: ScenarioConfig, stream: np.random.Generator) -> SlpParams:
    """Glorot-uniform weights, zero biases."""
    v, f, k = config.hidden_units, config.feature_dim, config.num_devices
    lim1 = np.sqrt(6.0 / (f + v))
    lim2 = np.sqrt(6.0 / (v + k))
    return SlpParams(
        w1=stream.uniform(-lim1, lim1, size=(v, f)),
        b1=np.zeros(v),
        w2=stream.uniform(-lim2, lim2, size=(k, v)),
        b2=np.zeros(k),
    )


def init_adam(
    params: SlpParams,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    zeros = params.map(np.zeros_like)
    return AdamState(
        first_moment=zeros,
        second_moment=params.map(np.zeros_like),
        step_count=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    params: SlpParams, features: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Scores in (0, 1) plus cached activations for backward.

    `features` may be a single vector (F,) or a batch (B, F); scores
    match with shape (K,) or (B, K).
    """
    x = np.atleast_2d(features)
    if x.shape[1] != params.w1.shape[1]:
        raise ValueError(
            f"feature length {x.shape[1]} does not match "
            f"model input dim {params.w1.shape[1]}"
        )
    z1 = x @ params.w1.T + params.b1
    hidden = np.maximum(z1, 0.0)
    z2 = hidden @ params.w2.T + params.b2
    scores = _sigmoid(z2)
    if features.ndim == 1:
        scores = scores[0]
    return scores, {"x": x, "z1": z1, "hidden": hidden, "z2": z2}


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over all device outputs (and the batch,
    if scores are batched), with probabilities clamped away from 0/1."""
    s = np.clip(scores, PROB_CLAMP, 1.0 - PROB_CLAMP)
    a = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-(a * np.log(s) + (1.0 - a) * np.log(1.0 - s))))


def backward(params: SlpParams, features: np.ndarray, labels: np.ndarray) -> SlpParams:
    """Exact gradients of the mean BCE, using the fused sigmoid-BCE delta
    (scores - labels) / (batch * K)."""
    scores, cache = forward(params, features)
    s = np.atleast_2d(scores)
    a = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    batch = s.shape[0]
    k = s.shape[1]
    d2 = (s - a) / (batch * k)                      # (B, K)
    dw2 = d2.T @ cache["hidden"]
    db2 = d2.sum(axis=0)
    dhidden = d2 @ params.w2                        # (B, V)
    d1 = dhidden * (cache["z1"] > 0.0)
    dw1 = d1.T @ cache["x"]
    db1 = d1.sum(axis=0)
    return SlpParams(w1=dw1, b1=db1, w2=dw2, b2=db2)


def adam_step(
    params: SlpParams, grads: SlpParams, state: AdamState
) -> tuple[SlpParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    t = state.step_count + 1
    m = state.first_moment.map(
        lambda m_, g_: state.beta1 * m_ + (1.0 - state.beta1) * g_, grads
    )
    v = state.second_moment.map(
        lambda v_, g_: state.beta2 * v_ + (1.0 - state.beta2) * g_ * g_, grads
    )
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params = params.map(
        lambda p_, m_, v_: p_ - state.lr * (m_ / bc1) / (np.sqrt(v_ / bc2) + state.epsilon),
        m,
        v,
    )
    new_state = AdamState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state


def params_to_vector(params: SlpParams) -> np.ndarray:
    """Flatten in the fixed order w1, b1, w2, b2 (row-major)."""
    return np.concatenate([leaf.ravel() for leaf in params.leaves()])


def vector_to_params(vec: np.ndarray, template: SlpParams) -> SlpParams:
    out = []
    offset = 0
    for leaf in template.leaves():
        out.append(vec[offset : offset + leaf.size].reshape(leaf.shape))
        offset += leaf.size
    if offset != vec.size:
        raise ValueError(f"vector length {vec.size} does not match template ({offset})")
    return SlpParams(*out)
