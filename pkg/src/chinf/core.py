"""Core containers for multivariate time series, windows, and splits.

A series is a dense (T, N) float64 matrix, time-major: row t is the
observation at timestep t, column j is channel j. All containers are
frozen after construction (arrays are marked read-only) so they can be
shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MtsSeries:
    """A multivariate time series with named channels and optional labels.

    ``timestep_labels``, when present, marks each timestep 0 (normal) or
    1 (anomalous).
    """

    values: np.ndarray
    channel_names: tuple[str, ...]
    timestep_labels: np.ndarray | None = None

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2:
            raise ValueError(f"series values must be 2-D (T, N), got shape {values.shape}")
        t_total, n = values.shape
        if t_total < 1 or n < 1:
            raise ValueError(f"series must have T >= 1 and N >= 1, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("series values must be finite")
        names = tuple(str(c) for c in self.channel_names)
        if len(names) != n:
            raise ValueError(f"got {len(names)} channel names for {n} channels")
        if len(set(names)) != n:
            raise ValueError("channel names must be unique")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channel_names", names)
        if self.timestep_labels is not None:
            labels = np.asarray(self.timestep_labels, dtype=np.int64)
            if labels.shape != (t_total,):
                raise ValueError(
                    f"labels length {labels.shape} does not match series length {t_total}"
                )
            if not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be 0 or 1")
            labels.setflags(write=False)
            object.__setattr__(self, "timestep_labels", labels)

    @property
    def n_timesteps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MtsWindow:
    """A (w, N) slice of a series; ``origin_t`` is the index of its last row
    in the parent series, and the timestep its score is attributed to."""

    values: np.ndarray
    origin_t: int

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"window values must be 2-D with w >= 1, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("window values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DatasetSplit:
    """Chronological train/val/test splits sharing the same channels.

    The train split must be anomaly-free: labels, if present, are all 0.
    """

    train: MtsSeries
    val: MtsSeries
    test: MtsSeries

    def __post_init__(self):
        for name, part in (("val", self.val), ("test", self.test)):
            if part.n_channels != self.train.n_channels:
                raise ValueError(
                    f"{name} split has {part.n_channels} channels, train has {self.train.n_channels}"
                )
            if part.channel_names != self.train.channel_names:
                raise ValueError(f"{name} split channel names differ from train")
        if self.train.timestep_labels is not None and self.train.timestep_labels.any():
            raise ValueError("train split must not contain anomalous timesteps")


def make_windows(series: MtsSeries, w: int, stride: int = 1) -> list[MtsWindow]:
    """Slide a length-``w`` window over the series with the given stride.

    Window k covers rows [k*stride, k*stride + w); its origin_t is the
    index of its last row. Returns floor((T - w) / stride) + 1 windows.
    """
    if w < 1:
        raise ValueError(f"window length must be >= 1, got {w}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    t_total = series.n_timesteps
    if w > t_total:
        raise ValueError(f"window exceeds series length ({w} > {t_total})")
    count = (t_total - w) // stride + 1
    return [
        MtsWindow(values=series.values[k * stride : k * stride + w], origin_t=k * stride + w - 1)
        for k in range(count)
    ]


def window_label(window: MtsWindow, series: MtsSeries) -> int:
    """Label of the window's last timestep; this is what its score is judged
    against."""
    if series.timestep_labels is None:
        raise ValueError("series has no timestep labels")
    if not 0 <= window.origin_t < series.n_timesteps:
        raise ValueError(f"window origin {window.origin_t} outside series of length {series.n_timesteps}")
    return int(series.timestep_labels[window.origin_t])


def chronological_split(series: MtsSeries, train_frac: float, val_frac: float) -> DatasetSplit:
    """Cut a series into contiguous train/val/test parts by fraction."""
    if not (0.0 < train_frac < 1.0 and 0.0 < val_frac < 1.0 and train_frac + val_frac < 1.0):
        raise ValueError(f"invalid split fractions train={train_frac}, val={val_frac}")
    t_total = series.n_timesteps
    t_train = int(round(t_total * train_frac))
    t_val = int(round(t_total * val_frac))
    if min(t_train, t_val, t_total - t_train - t_val) < 1:
        raise ValueError("each split must contain at least one timestep")

    def piece(lo: int, hi: int) -> MtsSeries:
        labels = None
        if series.timestep_labels is not None:
            labels = series.timestep_labels[lo:hi]
        return MtsSeries(series.values[lo:hi], series.channel_names, labels)

    return DatasetSplit(
        train=piece(0, t_train),
        val=piece(t_train, t_train + t_val),
        test=piece(t_train + t_val, t_total),
    )
