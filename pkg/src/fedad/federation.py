"""Federated training orchestration and clustered score fusion.

One round: the CPU broadcasts the global model, every AP runs local
mini-batch Adam on its own received data, the CPU forms a weighted
average of the returned parameters and applies its own optimization step
(plain pass-through or a FedOpt-style Adam on the averaging delta).

At inference the CPU fuses per-AP probabilities per device over the
cluster of that device's strongest APs, then hard-thresholds.

Update wire format (version 1, little-endian), used for checkpoints and
to make the parameters-only exchange auditable:

    magic  b"ADUP" | u32 version | u32 round | u32 ap_index | f64 weight
    u32 hidden_units | u32 input_dim | u32 num_devices
    w1 (V*F f64) | b1 (V f64) | w2 (K*V f64) | b2 (K f64)
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import Dataset, apply_feature_scaler, build_dataset, fit_feature_scaler
from .scenario import ScenarioArtifacts
from .slp import AdamState, SlpParams, adam_step, backward, bce_loss, forward, init_adam, init_params

_MAGIC = b"ADUP"
_WIRE_VERSION = 1
_HEADER = struct.Struct("<4sIIIdIII")


@dataclass(frozen=True)
class FederationConfig:
    rounds: int = 100
    local_epochs: int = 2
    batch_size: int = 32
    server_mode: str = "server-adam"  # or "plain-average"
    train_samples: int = 512
    eval_samples: int = 256
    local_lr: float = 1e-3
    server_lr: float = 0.005
    server_eps: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_mode: str = "shard_size"   # or "beta_sum"
    regenerate_each_round: bool = False

    def __post_init__(self) -> None:
        for key in ("rounds", "batch_size", "train_samples", "eval_samples"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs: must be >= 0, got {self.local_epochs}")
        if self.server_mode not in ("plain-average", "server-adam"):
            raise ValueError(f"server_mode: unknown mode {self.server_mode!r}")
        if self.weight_mode not in ("shard_size", "beta_sum"):
            raise ValueError(f"weight_mode: unknown mode {self.weight_mode!r}")


@dataclass(frozen=True)
class LocalUpdate:
    """One AP's trained parameters plus its aggregation weight."""

    params: SlpParams
    weight: float
    ap_index: int

    def __post_init__(self) -> None:
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


@dataclass
class TrainingHistory:
    heldout_bce: list[float] = field(default_factory=list)
    round_seconds: list[float] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)


def local_train(
    global_params: SlpParams,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    fed: FederationConfig,
    ap_index: int,
    stream: np.random.Generator,
    weight: float | None = None,
) -> LocalUpdate:
    """Train a copy of the global model on one AP's shard.

    epochs = 0 returns the global parameters untouched. The weight
    defaults to the shard size (classic federated averaging).
    """
    if features.shape[0] == 0:
        raise ValueError(f"AP {ap_index}: cannot train on an empty shard")
    n = features.shape[0]
    params = global_params
    state = init_adam(
        params, lr=fed.local_lr, beta1=fed.adam_beta1, beta2=fed.adam_beta2,
        epsilon=fed.adam_eps,
    )
    for _ in range(epochs):
        order = stream.permutation(n)
        for start in range(0, n, fed.batch_size):
            batch = order[start : start + fed.batch_size]
            grads = backward(params, features[batch], labels[batch])
            params, state = adam_step(params, grads, state)
    return LocalUpdate(
        params=params,
        weight=float(n) if weight is None else float(weight),
        ap_index=ap_index,
    )


def aggregate(updates: list[LocalUpdate]) -> SlpParams:
    """Parameter-wise weighted mean, weights normalized to sum one and
    summation performed in ascending ap_index order (so reordering the
    input list is bit-exact).

    Computed as base + sum_i c_i * (p_i - base) against the lowest-index
    update, which makes a single update and identical inputs exact, not
    just close.
    """
    if not updates:
        raise ValueError("aggregate requires at least one update")
    ordered = sorted(updates, key=lambda u: u.ap_index)
    total = 0.0
    for u in ordered:
        total += u.weight
    if total <= 0:
        raise ValueError("aggregation weights must not all be zero")
    base = ordered[0].params
    acc = base
    for u in ordered[1:]:
        coef = u.weight / total
        acc = acc.map(lambda a, p, b: a + coef * (p - b), u.params, base)
    return acc


def server_step(
    current_global: SlpParams,
    aggregated: SlpParams,
    server_state: AdamState | None,
    mode: str,
) -> tuple[SlpParams, AdamState | None]:
    """CPU-side optimization step.

    plain-average passes the aggregate through. server-adam treats
    (current - aggregated) as a pseudo-gradient and applies one Adam step
    to the current global model (FedOpt).
    """
    if mode == "plain-average":
        return aggregated, server_state
    if mode != "server-adam":
        raise ValueError(f"unknown server mode {mode!r}")
    if server_state is None:
        raise ValueError("server-adam mode requires a server Adam state")
    pseudo_grad = current_global.map(lambda c, a: c - a, aggregated)
    return adam_step(current_global, pseudo_grad, server_state)


def heldout_bce(
    params: SlpParams, dataset: Dataset, beta: np.ndarray, cluster_size: int
) -> float:
    """BCE of the system output on held-out events: the global model runs
    at every AP and the per-device cluster fusion produces the scores."""
    n_events, m, _ = dataset.features.shape
    k = dataset.labels.shape[1]
    per_ap = np.empty((m, n_events, k))
    for ap in range(m):
        scores, _ = forward(params, dataset.features[:, ap, :])
        per_ap[ap] = scores
    fused = np.empty((n_events, k))
    for i in range(n_events):
        fused[i] = fuse_cluster_scores(per_ap[:, i, :], beta, cluster_size)
    return bce_loss(fused, dataset.labels)


def run_training(
    artifacts: ScenarioArtifacts,
    fed: FederationConfig,
    stream: np.random.Generator,
    train_data: Dataset | None = None,
    heldout_data: Dataset | None = None,
) -> tuple[SlpParams, TrainingHistory]:
    """Full federated run: R rounds of broadcast, local training at all M
    APs, weighted aggregation, and the server step. Per-AP shards are the
    APs' own views of a single shared event set, generated once (or fresh
    each round when regenerate_each_round is set).
    """
    cfg = artifacts.config
    init_stream, data_stream, heldout_stream, shuffle_root = stream.spawn(4)

    params = init_params(cfg, init_stream)
    if train_data is None:
        train_data = build_dataset(
            cfg, artifacts.beta, artifacts.pilots, fed.train_samples, data_stream
        )
    if heldout_data is None:
        heldout_data = build_dataset(
            cfg, artifacts.beta, artifacts.pilots, fed.eval_samples, heldout_stream
        )
    scaler = None
    if cfg.standardize_features and not train_data.provenance.get("standardized"):
        scaler = fit_feature_scaler(train_data)
        train_data = apply_feature_scaler(train_data, scaler)
        heldout_data = apply_feature_scaler(heldout_data, scaler)

    m = cfg.num_aps
    shuffle_streams = shuffle_root.spawn(fed.rounds * m)
    server_state = None
    if fed.server_mode == "server-adam":
        # server_eps is FedAdam's tau: raising it makes early steps
        # proportional to the averaging delta instead of its sign.
        server_state = init_adam(
            params, lr=fed.server_lr, beta1=fed.adam_beta1, beta2=fed.adam_beta2,
            epsilon=fed.server_eps,
        )

    history = TrainingHistory(seeds={"master_seed": cfg.master_seed})
    for rnd in range(fed.rounds):
        t0 = time.perf_counter()
        if fed.regenerate_each_round and rnd > 0:
            train_data = build_dataset(
                cfg, artifacts.beta, artifacts.pilots, fed.train_samples, data_stream
            )
            if scaler is not None:
                train_data = apply_feature_scaler(train_data, scaler)
        updates = []
        for ap in range(m):
            feats, labels = train_data.shard(ap)
            weight = None
            if fed.weight_mode == "beta_sum":
                weight = float(np.sum(artifacts.beta[ap]))
            updates.append(
                local_train(
                    params, feats, labels, fed.local_epochs, fed, ap,
                    shuffle_streams[rnd * m + ap], weight=weight,
                )
            )
        aggregated = aggregate(updates)
        params, server_state = server_step(params, aggregated, server_state, fed.server_mode)
        history.heldout_bce.append(
            heldout_bce(params, heldout_data, artifacts.beta, cfg.cluster_size)
        )
        history.round_seconds.append(time.perf_counter() - t0)
    return params, history


def fuse_cluster_scores(
    per_ap_scores: np.ndarray, beta: np.ndarray, cluster_size: int
) -> np.ndarray:
    """Fuse per-AP probabilities: for each device, average the scores of
    the cluster_size APs with the largest large-scale gain toward it (ties
    broken toward the lower AP index)."""
    m, k = beta.shape
    if cluster_size > m:
        raise ValueError(f"cluster_size {cluster_size} exceeds number of APs {m}")
    if per_ap_scores.shape != (m, k):
        raise ValueError(
            f"per_ap_scores shape {per_ap_scores.shape} does not match beta {beta.shape}"
        )
    order = np.argsort(-beta, axis=0, kind="stable")       # (M, K), best AP first
    top = order[:cluster_size, :]                          # (T, K)
    return per_ap_scores[top, np.arange(k)[None, :]].mean(axis=0)


def threshold_detect(scores: np.ndarray, theta: float) -> np.ndarray:
    """Hard decision: active iff score >= theta."""
    return (np.asarray(scores) >= theta).astype(np.int8)


def serialize_update(update: LocalUpdate, round_index: int) -> bytes:
    """Pack one AP-to-CPU update in the version-1 wire format; the payload
    is parameter tensors and one scalar weight, nothing else."""
    p = update.params
    v, f = p.w1.shape
    k = p.w2.shape[0]
    header = _HEADER.pack(
        _MAGIC, _WIRE_VERSION, round_index, update.ap_index, update.weight, v, f, k
    )
    body = b"".join(leaf.astype("<f8").tobytes(order="C") for leaf in p.leaves())
    return header + body


def deserialize_update(blob: bytes) -> tuple[int, LocalUpdate]:
    magic, version, round_index, ap_index, weight, v, f, k = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC:
        raise ValueError("not an AP update blob")
    if version != _WIRE_VERSION:
        raise ValueError(f"unsupported update version {version}")
    sizes = _field_sizes(v, f, k)
    offset = _HEADER.size
    leaves = []
    for name, shape in (("w1", (v, f)), ("b1", (v,)), ("w2", (k, v)), ("b2", (k,))):
        count = sizes[name]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        leaves.append(arr.astype(np.float64))
        offset += count * 8
    params = SlpParams(*leaves)
    return round_index, LocalUpdate(params=params, weight=weight, ap_index=ap_index)


def _field_sizes(v: int, f: int, k: int) -> dict[str, int]:
    return {"w1": v * f, "b1": v, "w2": k * v, "b2": k}


def update_schema(blob: bytes) -> dict:
    """Header fields and the element count of every array field, for
    auditing what actually crosses the AP-to-CPU boundary."""
    magic, version, round_index, ap_index, weight, v, f, k = _HEADER.unpack_from(blob, 0)
    return {
        "magic": magic.decode("ascii"),
        "version": version,
        "round": round_index,
        "ap_index": ap_index,
        "weight": weight,
        "array_fields": _field_sizes(v, f, k),
    }
