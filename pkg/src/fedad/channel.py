"""Small-scale fading, per-AP received-signal synthesis, and labeled
dataset construction.

Feature encoding: each AP's L x N observation is flattened column-major
(antenna by antenna) and the real parts are concatenated ahead of the
imaginary parts, giving a lossless real vector of length 2*L*N. The
inverse (`received_from_features`) is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig, sample_activity

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Channels:
    """Small-scale coefficients h and composite gains g = sqrt(beta) * h,
    both shaped (M, K, N)."""

    h: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """A batch of Monte-Carlo uplink events seen by every AP.

    features: (n_samples, M, 2*L*N) real
    labels:   (n_samples, K) 0/1
    """

    features: np.ndarray
    labels: np.ndarray
    provenance: dict

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def shard(self, ap_index: int) -> tuple[np.ndarray, np.ndarray]:
        """One AP's local view: its features across all events, shared labels."""
        return self.features[:, ap_index, :], self.labels


def draw_channels(
    beta: np.ndarray, config: ScenarioConfig, stream: np.random.Generator
) -> Channels:
    """i.i.d. CN(0,1) small-scale fading, composed with sqrt(beta)."""
    shape = (config.num_aps, config.num_devices, config.antennas_per_ap)
    h = (stream.standard_normal(shape) + 1j * stream.standard_normal(shape)) / _SQRT2
    g = np.sqrt(beta)[:, :, None] * h
    return Channels(h=h, g=g)


def synthesize_received(
    activity: np.ndarray,
    channels: Channels,
    pilots: np.ndarray,
    config: ScenarioConfig,
    noise_stream: np.random.Generator,
) -> np.ndarray:
    """Received signal y (M, L, N): superposition of the active devices'
    scaled pilots through their channels, plus CN(0, noise_var) AWGN."""
    coef = activity.astype(np.float64) * np.sqrt(config.tx_power)   # (K,)
    weighted = coef[None, :, None] * channels.g                     # (M, K, N)
    signal = np.einsum("lk,mkn->mln", pilots, weighted)
    shape = signal.shape
    noise = (
        noise_stream.standard_normal(shape) + 1j * noise_stream.standard_normal(shape)
    ) * np.sqrt(config.noise_var / 2.0)
    return signal + noise


def features_from_received(y_m: np.ndarray) -> np.ndarray:
    """Flatten one AP's L x N observation to a real vector of length 2*L*N."""
    flat = y_m.flatten(order="F")
    return np.concatenate([flat.real, flat.imag])


def received_from_features(features: np.ndarray, pilot_len: int, antennas: int) -> np.ndarray:
    """Bit-exact inverse of `features_from_received`."""
    half = pilot_len * antennas
    flat = features[:half] + 1j * features[half:]
    return flat.reshape((pilot_len, antennas), order="F")


def build_dataset(
    config: ScenarioConfig,
    beta: np.ndarray,
    pilots: np.ndarray,
    n_samples: int,
    stream: np.random.Generator,
) -> Dataset:
    """Generate n_samples labeled uplink events.

    Each event owns an independent child stream (activity, channels, noise
    drawn in that fixed order), so datasets are reproducible regardless of
    how callers parallelize. Within an event all APs observe the same
    transmission, which is what makes per-AP shards non-iid.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples: must be >= 1, got {n_samples}")
    m, k = config.num_aps, config.num_devices
    feat = np.empty((n_samples, m, config.feature_dim))
    labels = np.empty((n_samples, k), dtype=np.int8)
    for i, child in enumerate(stream.spawn(n_samples)):
        activity = sample_activity(config, child)
        channels = draw_channels(beta, config, child)
        y = synthesize_received(activity, channels, pilots, config, child)
        for ap in range(m):
            feat[i, ap] = features_from_received(y[ap])
        labels[i] = activity
    return Dataset(
        features=feat,
        labels=labels,
        provenance={"n_samples": n_samples, "feature_dim": config.feature_dim},
    )


def fit_feature_scaler(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-AP, per-feature mean and std over the given (training) set."""
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    return mean, np.maximum(std, 1e-12)


def apply_feature_scaler(
    dataset: Dataset, scaler: tuple[np.ndarray, np.ndarray]
) -> Dataset:
    mean, std = scaler
    return Dataset(
        features=(dataset.features - mean) / std,
        labels=dataset.labels,
        provenance={**dataset.provenance, "standardized": True},
    )
