"""
Workload synthesis

Turns path-planning queries into normalized input sizes and generates seeded
task streams whose local and cloud execution times follow a linear cost
profile with Gaussian noise and scheduled exogenous disturbances. Streams
are exchanged as CSV with header task_id,d,t_local,t_cloud.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config

logger = logging.getLogger('offload.workload')

STREAM_COLUMNS = ['task_id', 'd', 't_local', 't_cloud']


class StreamFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PlanQuery:
    start: Tuple[float, float]
    goal: Tuple[float, float]
    grid_resolution: float = config.DEFAULT_GRID_RESOLUTION


def node_count(query: PlanQuery) -> float:
    """
    Number of grid nodes in the square whose diagonal joins start and goal.

    Args:
        query: Start and goal in meters plus the grid resolution

    Returns:
        n = 0.5 * |AB|^2 / g^2, zero when start equals goal
    """
    if query.grid_resolution <= 0:
        raise ValueError(f"grid_resolution must be > 0, got {query.grid_resolution}")
    distance = math.dist(query.start, query.goal)
    return 0.5 * distance ** 2 / query.grid_resolution ** 2


def raw_input_size(n: float) -> float:
    # Natural log: 245,280 * ln(245,280) reproduces the 3,043,962 reference value
    if n < 0:
        raise ValueError(f"node count must be >= 0, got {n}")
    if n <= 1:
        return 0.0
    return n * math.log(n)


def normalize_input_size(raw: float, map_scale: float = config.MAP_SCALE) -> float:
    if map_scale <= 0:
        raise ValueError(f"map_scale must be > 0, got {map_scale}")
    return raw / map_scale


def input_size(query: PlanQuery, map_scale: float = config.MAP_SCALE) -> float:
    """Normalized input size d for a planning query."""
    return normalize_input_size(raw_input_size(node_count(query)), map_scale)


@dataclass(frozen=True)
class Disturbance:
    """Slows every task with start_task <= task_id <= end_task: t * factor + add."""
    start_task: int
    end_task: int
    add: float = 0.0
    factor: float = 1.0

    def __post_init__(self):
        if self.start_task > self.end_task:
            raise ValueError(f"disturbance start {self.start_task} is after end {self.end_task}")
        if self.add < 0 or self.factor < 1:
            raise ValueError("disturbances may only lengthen execution (add >= 0, factor >= 1)")
        if self.add == 0 and self.factor == 1:
            raise ValueError("disturbance must slow tasks down (add > 0 or factor > 1)")

    def active(self, task_id: int) -> bool:
        return self.start_task <= task_id <= self.end_task


@dataclass(frozen=True)
class TargetProfile:
    slope: float
    intercept: float
    noise_std: float = 0.0
    disturbances: Tuple[Disturbance, ...] = ()

    def __post_init__(self):
        if self.intercept < 0:
            raise ValueError(f"intercept must be >= 0, got {self.intercept}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    def expected(self, task_id: int, d: float) -> float:
        """Noise-free time for one task, disturbances included."""
        t = self.slope * d + self.intercept
        for disturbance in self.disturbances:
            if disturbance.active(task_id):
                t = t * disturbance.factor + disturbance.add
        return max(t, config.TIME_FLOOR)

    def sample(self, task_id: int, d: float, rng: np.random.Generator) -> float:
        return float(self.draw(np.array([task_id]), np.array([d]), rng)[0])

    def draw(self, task_ids: np.ndarray, d: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        t = self.slope * d + self.intercept + rng.normal(0.0, self.noise_std, size=len(d))
        for disturbance in self.disturbances:
            mask = (task_ids >= disturbance.start_task) & (task_ids <= disturbance.end_task)
            t = np.where(mask, t * disturbance.factor + disturbance.add, t)
        return np.maximum(t, config.TIME_FLOOR)


@dataclass(frozen=True)
class CostProfile:
    local: TargetProfile
    cloud: TargetProfile


def calibrated_profile() -> CostProfile:
    return CostProfile(
        local=TargetProfile(config.LOCAL_SLOPE, config.LOCAL_INTERCEPT, config.LOCAL_NOISE_STD),
        cloud=TargetProfile(config.CLOUD_SLOPE, config.CLOUD_INTERCEPT, config.CLOUD_NOISE_STD),
    )


class StreamTask(NamedTuple):
    task_id: int
    d: float
    t_local: float
    t_cloud: float


@dataclass(frozen=True)
class TaskStream:
    tasks: Tuple[StreamTask, ...]
    seed: Optional[int] = None
    _columns: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tasks and self.tasks[0].task_id != 1:
            raise ValueError(f"task ids must start at 1, got {self.tasks[0].task_id}")
        previous = 0
        for task in self.tasks:
            if task.task_id <= previous:
                raise ValueError(f"task ids must increase strictly from 1, got {task.task_id} after {previous}")
            if not (math.isfinite(task.d) and task.d >= 0):
                raise ValueError(f"task {task.task_id} has input size {task.d}, expected finite and >= 0")
            if task.t_local <= 0 or task.t_cloud <= 0:
                raise ValueError(f"task {task.task_id} has a non-positive execution time")
            previous = task.task_id

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def column(self, name: str) -> np.ndarray:
        if name not in self._columns:
            index = STREAM_COLUMNS.index(name)
            self._columns[name] = np.array([task[index] for task in self.tasks], dtype=np.float64)
        return self._columns[name]

    def head(self, count: int) -> 'TaskStream':
        return TaskStream(self.tasks[:count], self.seed)


def generate_stream(profile: CostProfile, count: int, seed: int) -> TaskStream:
    """
    Draws a reproducible task stream.

    Args:
        profile: Cost lines, noise and disturbances for both targets
        count: Number of tasks, at least one
        seed: Seed for numpy's default generator

    Returns:
        TaskStream with task ids 1..count and d uniform on [0, D_MAX]
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")

    rng = np.random.default_rng(seed)
    task_ids = np.arange(1, count + 1)
    d = rng.uniform(0.0, config.D_MAX, size=count)
    t_local = profile.local.draw(task_ids, d, rng)
    t_cloud = profile.cloud.draw(task_ids, d, rng)

    tasks = tuple(
        StreamTask(int(i), float(di), float(tl), float(tc))
        for i, di, tl, tc in zip(task_ids, d, t_local, t_cloud)
    )
    logger.debug(f"Generated {count} tasks with seed {seed}")
    return TaskStream(tasks, seed)


def write_stream_csv(stream: TaskStream, path: str) -> None:
    frame = pd.DataFrame(list(stream.tasks), columns=STREAM_COLUMNS)
    frame.to_csv(path, index=False, float_format='%.9g')


def read_stream_csv(path: str) -> TaskStream:
    """
    Loads a stream CSV written by write_stream_csv.

    Raises:
        FileNotFoundError: path does not exist
        StreamFormatError: header or a data row is malformed (the row is named)
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise StreamFormatError(f"{path}: file is empty")
    except pd.errors.ParserError as e:
        raise StreamFormatError(f"{path}: {e}")

    if list(frame.columns) != STREAM_COLUMNS:
        raise StreamFormatError(f"{path}: expected header {','.join(STREAM_COLUMNS)}")

    numeric = frame.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1)
    if bad.any():
        # +2: one for the header line, one for 1-based numbering
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise StreamFormatError(f"{path}: malformed row {row + 2}: {','.join(map(str, frame.iloc[row]))}")

    fractional = numeric['task_id'] % 1 != 0
    if fractional.any():
        row = int(np.flatnonzero(fractional.to_numpy())[0])
        raise StreamFormatError(f"{path}: malformed row {row + 2}: task_id must be an integer")

    values = numeric[['d', 't_local', 't_cloud']].to_numpy()
    out_of_range = ~np.isfinite(values).all(axis=1) | (values[:, 0] < 0) | (values[:, 1:] <= 0).any(axis=1)
    if out_of_range.any():
        row = int(np.flatnonzero(out_of_range)[0])
        raise StreamFormatError(f"{path}: malformed row {row + 2}: d must be finite and >= 0, times finite and > 0")

    tasks = tuple(
        StreamTask(int(task_id), float(d), float(t_local), float(t_cloud))
        for task_id, d, t_local, t_cloud in numeric.itertuples(index=False)
    )
    try:
        return TaskStream(tasks)
    except ValueError as e:
        raise StreamFormatError(f"{path}: {e}")


def summarize_stream(stream: TaskStream) -> dict:
    """Means and d-correlations of both targets, used for CLI summaries."""
    from metrics import UndefinedCorrelation, pearson

    d = stream.column('d')
    summary = {'tasks': len(stream)}
    for target in ('local', 'cloud'):
        t = stream.column(f't_{target}')
        summary[f'mean_t_{target}'] = float(t.mean())
        try:
            summary[f'corr_{target}'] = pearson(t, d)
        except UndefinedCorrelation:
            summary[f'corr_{target}'] = float('nan')
    return summary
