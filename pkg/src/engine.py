"""
Offloading engine

Runs tasks one at a time. Until both observation windows hold N entries every
task executes on both targets (warm-up). Afterwards both predictors are fitted,
the cheaper predicted target is chosen (ties stay local), only that target runs
and only its window receives the new observation.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from window_model import MIN_FIT_SIZE, LinearModel, Observation, SlidingWindow, fit, predict, window_append
from workload import StreamTask, TargetProfile, TaskStream

logger = logging.getLogger('offload.engine')

TRACE_COLUMNS = ['task_id', 'd', 'phase', 'p_local', 'p_cloud', 'target', 't_local', 't_cloud', 'oracle_target']


class Target(str, Enum):
    LOCAL = 'local'
    CLOUD = 'cloud'

    @property
    def other(self) -> 'Target':
        return Target.CLOUD if self is Target.LOCAL else Target.LOCAL


class Phase(str, Enum):
    WARMUP = 'warmup'
    STEADY = 'steady'


class InvalidPrediction(ValueError):
    pass


class ExecutorError(Exception):
    pass


class EngineError(Exception):
    pass


@dataclass(frozen=True)
class Decision:
    target: Target
    p_local: float
    p_cloud: float

    @property
    def predicted(self) -> float:
        return self.p_cloud if self.target is Target.CLOUD else self.p_local

    def prediction(self, target: Target) -> float:
        return self.p_cloud if target is Target.CLOUD else self.p_local


def decide(p_local: float, p_cloud: float) -> Decision:
    """Offload only when the cloud is predicted strictly faster."""
    if math.isnan(p_local) or math.isnan(p_cloud):
        raise InvalidPrediction(f"invalid prediction: p_local={p_local}, p_cloud={p_cloud}")
    target = Target.CLOUD if p_cloud < p_local else Target.LOCAL
    return Decision(target, p_local, p_cloud)


def oracle_target(t_local: float, t_cloud: float) -> Target:
    return decide(t_local, t_cloud).target


@dataclass(frozen=True)
class TaskRecord:
    task_id: int
    d: float
    phase: Phase
    decision: Optional[Decision] = None
    measured_local: Optional[float] = None
    measured_cloud: Optional[float] = None
    # Replay mode keeps both recorded times, executed or not
    recorded_local: Optional[float] = None
    recorded_cloud: Optional[float] = None
    oracle_target: Optional[Target] = None
    executed: Optional[Target] = None
    fallback: bool = False

    def measured(self, target: Target) -> Optional[float]:
        return self.measured_cloud if target is Target.CLOUD else self.measured_local

    def actual(self, target: Target) -> Optional[float]:
        recorded = self.recorded_cloud if target is Target.CLOUD else self.recorded_local
        return recorded if recorded is not None else self.measured(target)


class Executor(Protocol):
    def execute(self, task_id: int, d: float) -> float:
        ...


class ReplayExecutor:
    """Reads the recorded execution time of a task instead of running it."""

    def __init__(self, times: Mapping[int, float]):
        self.times = times

    def execute(self, task_id: int, d: float) -> float:
        try:
            return self.times[task_id]
        except KeyError:
            raise ExecutorError(f"no recorded time for task {task_id}")


class SimulatedExecutor:
    """
    Draws execution times from a cost profile.

    With sleep=True the drawn time is actually spent and the wall-clock
    duration is returned, which is what the live local side does.
    """

    def __init__(self, profile: TargetProfile, seed: int, sleep: bool = False):
        self.profile = profile
        self.rng = np.random.default_rng(seed)
        self.sleep = sleep

    def execute(self, task_id: int, d: float) -> float:
        t = self.profile.sample(task_id, d, self.rng)
        if not self.sleep:
            return t
        started = time.perf_counter()
        time.sleep(t)
        return time.perf_counter() - started


class WindowPredictor:
    """Least-squares predictors over one sliding window per target."""

    def __init__(self, capacity: int):
        self.windows: Dict[Target, SlidingWindow] = {target: SlidingWindow(capacity) for target in Target}
        self._models: Dict[Target, LinearModel] = {}
        self.degenerate_fits = 0

    def ready(self) -> bool:
        return all(window.is_full for window in self.windows.values())

    def observe(self, target: Target, obs: Observation) -> None:
        window_append(self.windows[target], obs)
        self._models.pop(target, None)

    def model(self, target: Target) -> LinearModel:
        # A window only changes on observe, so the last fit stays valid until then
        if target not in self._models:
            model = fit(self.windows[target])
            if model.degenerate:
                self.degenerate_fits += 1
                logger.debug(f"Degenerate {target.value} fit, predicting the window mean")
            self._models[target] = model
        return self._models[target]

    def predict(self, target: Target, task_id: int, d: float) -> float:
        return predict(self.model(target), d)


class OraclePredictor(WindowPredictor):
    """Predicts the recorded times themselves: the best any policy can do."""

    def __init__(self, capacity: int, stream: TaskStream):
        super().__init__(capacity)
        self._times = {task.task_id: (task.t_local, task.t_cloud) for task in stream}

    def predict(self, target: Target, task_id: int, d: float) -> float:
        t_local, t_cloud = self._times[task_id]
        return t_cloud if target is Target.CLOUD else t_local


@dataclass
class EngineConfig:
    window_capacity: int
    clamp_negative_predictions: bool = True
    concurrent_warmup: bool = False
    executors: Dict[Target, Executor] = field(default_factory=dict)

    def __post_init__(self):
        if self.window_capacity < MIN_FIT_SIZE:
            raise ValueError(f"window_capacity must be >= {MIN_FIT_SIZE}, got {self.window_capacity}")


TaskInput = Union[StreamTask, Tuple[int, float]]


class OffloadEngine:
    def __init__(self, config: EngineConfig, predictor: Optional[WindowPredictor] = None,
                 recorded: Optional[Mapping[int, Tuple[float, float]]] = None):
        missing = [target.value for target in Target if target not in config.executors]
        if missing:
            raise ValueError(f"no executor bound for {', '.join(missing)}")
        self.config = config
        self.predictor = predictor or WindowPredictor(config.window_capacity)
        self.recorded = recorded or {}

    @property
    def windows(self) -> Dict[Target, SlidingWindow]:
        return self.predictor.windows

    def step(self, task_id: int, d: float) -> TaskRecord:
        """
        Processes one task and returns its trace record.

        Raises:
            EngineError: no target could execute the task
        """
        recorded_local, recorded_cloud = self.recorded.get(task_id, (None, None))
        replay_oracle = None
        if recorded_local is not None and recorded_cloud is not None:
            replay_oracle = oracle_target(recorded_local, recorded_cloud)

        if not self.predictor.ready():
            times = self._execute_both(task_id, d)
            for target, t in times.items():
                if t is not None:
                    self.predictor.observe(target, Observation(d, t))
            t_local, t_cloud = times[Target.LOCAL], times[Target.CLOUD]
            if replay_oracle is None and t_local is not None and t_cloud is not None:
                replay_oracle = oracle_target(t_local, t_cloud)
            return TaskRecord(task_id, d, Phase.WARMUP,
                              measured_local=t_local, measured_cloud=t_cloud,
                              recorded_local=recorded_local, recorded_cloud=recorded_cloud,
                              oracle_target=replay_oracle)

        decision = decide(self._predict(Target.LOCAL, task_id, d), self._predict(Target.CLOUD, task_id, d))
        executed = decision.target
        t = self._try_execute(executed, task_id, d)
        fallback = t is None
        if fallback:
            executed = executed.other
            logger.warning(f"Task {task_id}: falling back to {executed.value}")
            t = self._try_execute(executed, task_id, d)
            if t is None:
                raise EngineError(f"task {task_id} failed on both targets")

        self.predictor.observe(executed, Observation(d, t))
        return TaskRecord(task_id, d, Phase.STEADY, decision,
                          measured_local=t if executed is Target.LOCAL else None,
                          measured_cloud=t if executed is Target.CLOUD else None,
                          recorded_local=recorded_local, recorded_cloud=recorded_cloud,
                          oracle_target=replay_oracle, executed=executed, fallback=fallback)

    def run(self, tasks: Iterable[TaskInput]) -> List[TaskRecord]:
        trace = []
        for task in tasks:
            trace.append(self.step(task[0], task[1]))
        return trace

    def _predict(self, target: Target, task_id: int, d: float) -> float:
        p = self.predictor.predict(target, task_id, d)
        if self.config.clamp_negative_predictions and p < 0:
            return 0.0
        return p

    def _try_execute(self, target: Target, task_id: int, d: float) -> Optional[float]:
        try:
            return self.config.executors[target].execute(task_id, d)
        except ExecutorError as e:
            logger.error(f"Task {task_id}: {target.value} execution failed: {e}")
            return None

    def _execute_both(self, task_id: int, d: float) -> Dict[Target, Optional[float]]:
        if self.config.concurrent_warmup:
            with ThreadPoolExecutor(max_workers=2) as pool:
                futures = {target: pool.submit(self._try_execute, target, task_id, d) for target in Target}
                times = {target: future.result() for target, future in futures.items()}
        else:
            times = {target: self._try_execute(target, task_id, d) for target in Target}
        if all(t is None for t in times.values()):
            raise EngineError(f"task {task_id} failed on both targets during warm-up")
        return times


def replay_engine(stream: TaskStream, config: EngineConfig,
                  predictor: Optional[WindowPredictor] = None) -> OffloadEngine:
    """Engine whose executors read the stream's recorded times."""
    executors = {
        Target.LOCAL: ReplayExecutor({task.task_id: task.t_local for task in stream}),
        Target.CLOUD: ReplayExecutor({task.task_id: task.t_cloud for task in stream}),
    }
    recorded = {task.task_id: (task.t_local, task.t_cloud) for task in stream}
    return OffloadEngine(replace(config, executors=executors), predictor, recorded)


def run(stream: TaskStream, config: EngineConfig,
        predictor: Optional[WindowPredictor] = None) -> List[TaskRecord]:
    return replay_engine(stream, config, predictor).run(stream)


def trace_rows(trace: Iterable[TaskRecord]) -> List[list]:
    rows = []
    for record in trace:
        decision = record.decision
        rows.append([
            record.task_id,
            record.d,
            record.phase.value,
            decision.p_local if decision else None,
            decision.p_cloud if decision else None,
            decision.target.value if decision else None,
            record.actual(Target.LOCAL),
            record.actual(Target.CLOUD),
            record.oracle_target.value if record.oracle_target else None,
        ])
    return rows


def write_trace_csv(trace: Iterable[TaskRecord], path: str) -> None:
    frame = pd.DataFrame(trace_rows(trace), columns=TRACE_COLUMNS)
    frame.to_csv(path, index=False, float_format='%.9g', na_rep='')
