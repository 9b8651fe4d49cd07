"""Seeded synthetic benchmark scenarios shared across test modules.

Two fixed suites: an 8-channel anomaly detection scenario (2 corrupted
channels, ~5% anomalous timesteps in val and test) and a 32-channel
4-cluster pruning scenario. Parameters are frozen; the acceptance tests
depend on these exact values.
"""
from __future__ import annotations

import numpy as np

from chinf import core, data, models


ANOMALY_SEEDS = (0, 1, 2, 3, 4)
PRUNING_SEEDS = tuple(range(10))

ANOMALY_WINDOW = 10

PRUNING_SPEC = models.ModelSpec(
    "linear_ci", window=48, channels=32, horizon=12
)
PRUNING_CLUSTERS = 4
PRUNING_CHANNELS_PER_CLUSTER = 8


def corrupted_series(series: core.MtsSeries, inject_seed: int) -> core.MtsSeries:
    """Spike two channels over two intervals totalling 5% of the series."""
    t = series.n_timesteps
    k = max(1, round(0.05 * t / 2))
    a0 = t // 5
    a1 = 3 * t // 5
    spec = data.AnomalySpec(
        kind="spike",
        target_channels=(1, 5),
        intervals=((a0, a0 + k), (a1, a1 + k)),
        magnitude=0.6,
    )
    return data.inject_anomalies(series, spec, seed=inject_seed)


def anomaly_scenario(seed: int):
    """Clean train split plus corrupted, labeled val and test splits."""
    cfg = data.SyntheticConfig(
        clusters=4,
        channels_per_cluster=2,
        length=2000,
        phase_jitter=0.3,
        noise_std=0.05,
        seed=seed,
    )
    split = core.chronological_split(data.gen_synthetic(cfg), 0.5, 0.25)
    val = corrupted_series(split.val, seed * 31 + 1)
    test = corrupted_series(split.test, seed * 31 + 2)
    return split.train, val, test


def anomaly_model(train_series: core.MtsSeries, seed: int) -> models.ModelState:
    spec = models.ModelSpec("mlp_ci", window=ANOMALY_WINDOW, channels=8, hidden=16)
    config = models.TrainConfig(epochs=12, learning_rate=1e-2, batch_size=32, seed=seed)
    windows = core.make_windows(train_series, ANOMALY_WINDOW)
    return models.train(models.init_params(spec, seed), windows, config)


def pruning_split(seed: int) -> core.DatasetSplit:
    cfg = data.SyntheticConfig(
        clusters=PRUNING_CLUSTERS,
        channels_per_cluster=PRUNING_CHANNELS_PER_CLUSTER,
        length=600,
        phase_jitter=0.05,
        noise_std=0.01,
        seed=seed,
    )
    return core.chronological_split(data.gen_synthetic(cfg), 0.5, 0.25)


def pruning_train_config(seed: int) -> models.TrainConfig:
    return models.TrainConfig(epochs=16, learning_rate=1e-2, batch_size=32, seed=seed)


def cluster_of(channel: int) -> int:
    return channel // PRUNING_CHANNELS_PER_CLUSTER


def random_window(rng: np.random.Generator, rows: int, n: int) -> core.MtsWindow:
    return core.MtsWindow(rng.normal(size=(rows, n)), origin_t=rows - 1)


def random_model_case(rng: np.random.Generator, case: int):
    """A random small model plus a matching random window pair."""
    arch = ("linear_ci", "mlp_ci", "mlp_mix")[case % 3]
    n = int(rng.integers(2, 7))
    w = int(rng.integers(3, 9))
    h = int(rng.integers(2, 8))
    horizon = int(rng.integers(0, 2)) * int(rng.integers(1, 4))
    spec = models.ModelSpec(
        arch,
        window=w,
        channels=n,
        hidden=h,
        activation="tanh",
        horizon=horizon,
    )
    state = models.init_params(spec, seed=case)
    rows = spec.total_rows
    z1 = random_window(rng, rows, n)
    z2 = random_window(rng, rows, n)
    selector = (
        models.all_params_selector(spec)
        if case % 4 < 2
        else models.last_layer_selector(spec)
    )
    return state, z1, z2, selector
