"""
Observation windows and least-squares execution time predictors.

A SlidingWindow keeps the N most recent (d, t) observations of one target.
fit() turns a window into a LinearModel with the mean-centered closed form,
falling back to the mean of t when every d in the window is identical.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, List

import numpy as np

MIN_FIT_SIZE = 2


class InsufficientObservations(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    d: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d >= 0):
            raise ValueError(f"input size must be finite and >= 0, got {self.d}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError(f"execution time must be finite and >= 0, got {self.t}")


class SlidingWindow:
    """Fixed-capacity FIFO of observations, oldest first."""

    def __init__(self, capacity: int, entries: Iterable[Observation] = ()):
        if capacity < 1:
            raise ValueError(f"window capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._entries = deque(entries, maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self._entries)

    def __repr__(self) -> str:
        return f"SlidingWindow(capacity={self.capacity}, entries={list(self._entries)!r})"

    @property
    def entries(self) -> List[Observation]:
        return list(self._entries)

    @property
    def is_full(self) -> bool:
        return len(self._entries) == self.capacity

    def append(self, obs: Observation) -> None:
        # deque(maxlen=...) drops the oldest entry when full
        self._entries.append(obs)


def window_append(window: SlidingWindow, obs: Observation) -> SlidingWindow:
    window.append(obs)
    return window


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    degenerate: bool = False

    def predict(self, d: float) -> float:
        return self.slope * d + self.intercept


def fit(window: Iterable[Observation]) -> LinearModel:
    """
    Fits t = slope * d + intercept by ordinary least squares.

    Args:
        window: Observations to fit, at least two

    Returns:
        The fitted model; degenerate (slope 0, intercept mean t) when all d are equal

    Raises:
        InsufficientObservations: fewer than two observations
    """
    entries = list(window)
    if len(entries) < MIN_FIT_SIZE:
        raise InsufficientObservations(
            f"insufficient observations: need {MIN_FIT_SIZE}, got {len(entries)}"
        )

    d = np.fromiter((obs.d for obs in entries), dtype=np.float64, count=len(entries))
    t = np.fromiter((obs.t for obs in entries), dtype=np.float64, count=len(entries))

    mean_t = float(t.mean())
    if np.all(d == d[0]):
        return LinearModel(slope=0.0, intercept=mean_t, degenerate=True)

    mean_d = float(d.mean())
    d_centered = d - mean_d
    slope = float(np.dot(d_centered, t - mean_t) / np.dot(d_centered, d_centered))
    return LinearModel(slope=slope, intercept=mean_t - slope * mean_d)


def predict(model: LinearModel, d: float) -> float:
    return model.predict(d)
