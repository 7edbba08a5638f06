"""
Evaluation metrics

Rolling-window Pearson correlation between input size and execution time,
residuals (mean predicted minus mean actual time), error rates, decision
accuracy against the faster-target oracle, and the sweep that evaluates all
of them for a list of window sizes plus an 80:20 full-dataset fit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, NamedTuple, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

import config
from engine import (
    EngineConfig,
    OraclePredictor,
    Phase,
    Target,
    TaskRecord,
    decide,
    oracle_target,
    replay_engine,
)
from window_model import MIN_FIT_SIZE, Observation, fit
from workload import TaskStream

logger = logging.getLogger('offload.metrics')

WINDOW_MODE = 'window'
FULL_MODE = 'full_80_20'


class UndefinedCorrelation(ValueError):
    pass


class MetricsError(ValueError):
    pass


def _row_correlations(xw: np.ndarray, yw: np.ndarray) -> np.ndarray:
    # One Pearson r per row of two equally shaped 2-D arrays
    xc = xw - xw.mean(axis=1, keepdims=True)
    yc = yw - yw.mean(axis=1, keepdims=True)
    cov = (xc * yc).sum(axis=1)
    scale = np.sqrt((xc * xc).sum(axis=1) * (yc * yc).sum(axis=1))
    return np.clip(cov / scale, -1.0, 1.0)


def _as_pair(xs: Sequence[float], ys: Sequence[float]):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"sequences must be 1-D and of equal length, got {x.shape} and {y.shape}")
    return x, y


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x, y = _as_pair(xs, ys)
    if len(x) < 2:
        raise UndefinedCorrelation(f"undefined correlation: need 2 points, got {len(x)}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelation("undefined correlation: zero variance")
    return float(_row_correlations(x[np.newaxis, :], y[np.newaxis, :])[0])


class RollingCorrelation(NamedTuple):
    mean: float
    windows: int
    skipped: int


def rolling_correlation(xs: Sequence[float], ys: Sequence[float], window: int) -> RollingCorrelation:
    """
    Pearson r over every contiguous window (stride 1), zero-variance windows skipped.

    Raises:
        ValueError: window larger than the data or smaller than 2
        UndefinedCorrelation: every window has zero variance
    """
    x, y = _as_pair(xs, ys)
    if window < 2 or window > len(x):
        raise ValueError(f"window must be in [2, {len(x)}], got {window}")
    if window == len(x):
        try:
            return RollingCorrelation(pearson(x, y), 1, 0)
        except UndefinedCorrelation:
            raise UndefinedCorrelation("undefined correlation: every window has zero variance")

    xw = sliding_window_view(x, window)
    yw = sliding_window_view(y, window)
    valid = (np.ptp(xw, axis=1) > 0) & (np.ptp(yw, axis=1) > 0)
    skipped = int((~valid).sum())
    if not valid.any():
        raise UndefinedCorrelation("undefined correlation: every window has zero variance")
    r = _row_correlations(xw[valid], yw[valid])
    return RollingCorrelation(float(r.mean()), len(r), skipped)


def rolling_avg_correlation(xs: Sequence[float], ys: Sequence[float], window: int) -> float:
    return rolling_correlation(xs, ys, window).mean


class ResidualReport(NamedTuple):
    mean_t: float
    mean_p: float
    residual: float
    error_rate: float


def residual_report(trace: Sequence[TaskRecord], target: Target) -> ResidualReport:
    """
    Residual of one target's predictions over the steady phase.

    Uses every steady record whose actual time for the target is known: all of
    them in replay mode, only those that executed the target in live mode.

    Returns:
        (mean_t, mean_p, residual = mean_p - mean_t, error_rate = |residual| / mean_t)
    """
    pairs = [
        (record.actual(target), record.decision.prediction(target))
        for record in trace
        if record.phase is Phase.STEADY and record.decision is not None
        and record.actual(target) is not None
    ]
    if not pairs:
        raise MetricsError(f"no steady records with {target.value} predictions and times")

    t, p = np.array(pairs).T
    mean_t = float(t.mean())
    mean_p = float(p.mean())
    residual = mean_p - mean_t
    error_rate = abs(residual) / mean_t if mean_t > 0 else float('inf')
    return ResidualReport(mean_t, mean_p, residual, error_rate)


def decision_accuracy(trace: Sequence[TaskRecord]) -> float:
    """Fraction of steady tasks whose decision picked the faster target."""
    steady = [record for record in trace if record.phase is Phase.STEADY]
    if not steady:
        raise MetricsError("no steady records to score")
    if any(record.oracle_target is None for record in steady):
        raise MetricsError("decision accuracy needs a replay trace with both times recorded")
    correct = sum(record.decision.target is record.oracle_target for record in steady)
    return correct / len(steady)


@dataclass(frozen=True)
class SweepRow:
    N: int
    avg_corr_cloud: float
    avg_corr_local: float
    mean_t_cloud: float
    mean_p_cloud: float
    residual_cloud: float
    mean_t_local: float
    mean_p_local: float
    residual_local: float
    error_rate_cloud: float
    error_rate_local: float
    accuracy: float
    mode: str = WINDOW_MODE
    degenerate_fits: int = 0
    skipped_corr_windows: int = 0


REPORT_COLUMNS = [f.name for f in fields(SweepRow)]


@dataclass
class SweepReport:
    rows: List[SweepRow]
    # Accuracy of other predictors on the same stream, keyed by name
    baselines: Dict[str, float] = field(default_factory=dict)

    def row(self, n: int, mode: str = WINDOW_MODE) -> SweepRow:
        for row in self.rows:
            if row.N == n and row.mode == mode:
                return row
        raise KeyError(f"no {mode} row for N={n}")

    def to_dict(self) -> dict:
        return {'rows': [asdict(row) for row in self.rows], 'baselines': dict(self.baselines)}


def _row_from_trace(n: int, trace: Sequence[TaskRecord], corr_cloud: RollingCorrelation,
                    corr_local: RollingCorrelation, mode: str, degenerate_fits: int) -> SweepRow:
    cloud = residual_report(trace, Target.CLOUD)
    local = residual_report(trace, Target.LOCAL)
    return SweepRow(
        N=n,
        avg_corr_cloud=corr_cloud.mean,
        avg_corr_local=corr_local.mean,
        mean_t_cloud=cloud.mean_t,
        mean_p_cloud=cloud.mean_p,
        residual_cloud=cloud.residual,
        mean_t_local=local.mean_t,
        mean_p_local=local.mean_p,
        residual_local=local.residual,
        error_rate_cloud=cloud.error_rate,
        error_rate_local=local.error_rate,
        accuracy=decision_accuracy(trace),
        mode=mode,
        degenerate_fits=degenerate_fits,
        skipped_corr_windows=corr_cloud.skipped + corr_local.skipped,
    )


def evaluate_window(stream: TaskStream, n: int, clamp: bool = True) -> SweepRow:
    """Replays the stream with window size n and scores the trace."""
    engine = replay_engine(stream, EngineConfig(window_capacity=n, clamp_negative_predictions=clamp))
    trace = engine.run(stream)
    d = stream.column('d')
    return _row_from_trace(
        n, trace,
        rolling_correlation(d, stream.column('t_cloud'), n),
        rolling_correlation(d, stream.column('t_local'), n),
        WINDOW_MODE, engine.predictor.degenerate_fits,
    )


def oracle_accuracy(stream: TaskStream, n: int) -> float:
    """Accuracy of a predictor that knows every recorded time, with the same warm-up as window n."""
    engine = replay_engine(stream, EngineConfig(window_capacity=n), OraclePredictor(n, stream))
    return decision_accuracy(engine.run(stream))


def full_dataset_row(stream: TaskStream, train_fraction: float = config.TRAIN_FRACTION,
                     clamp: bool = True) -> SweepRow:
    """
    Fits once on the leading train_fraction of the stream and scores the rest.

    The split is sequential: the stream is a time series.
    """
    split = int(len(stream) * train_fraction)
    train, test = stream.tasks[:split], stream.tasks[split:]
    if len(train) < MIN_FIT_SIZE or not test:
        raise MetricsError(f"cannot split {len(stream)} tasks {train_fraction:.0%} for training")

    local_model = fit(Observation(task.d, task.t_local) for task in train)
    cloud_model = fit(Observation(task.d, task.t_cloud) for task in train)

    trace = []
    for task in test:
        p_local = local_model.predict(task.d)
        p_cloud = cloud_model.predict(task.d)
        if clamp:
            p_local, p_cloud = max(p_local, 0.0), max(p_cloud, 0.0)
        trace.append(TaskRecord(
            task.task_id, task.d, Phase.STEADY, decide(p_local, p_cloud),
            recorded_local=task.t_local, recorded_cloud=task.t_cloud,
            oracle_target=oracle_target(task.t_local, task.t_cloud),
        ))

    d = stream.column('d')
    return _row_from_trace(
        len(stream), trace,
        RollingCorrelation(pearson(d, stream.column('t_cloud')), 1, 0),
        RollingCorrelation(pearson(d, stream.column('t_local')), 1, 0),
        FULL_MODE, int(local_model.degenerate) + int(cloud_model.degenerate),
    )


def sweep(stream: TaskStream, windows: Sequence[int] = config.DEFAULT_WINDOWS,
          include_full: bool = True, workers: int = 1, clamp: bool = True,
          oracle_baseline: bool = False) -> SweepReport:
    """
    Evaluates every window size on the same stream.

    Window sizes that do not leave at least one steady task are skipped with a
    warning. Rows keep the order of windows, whatever the worker count.
    With oracle_baseline the report also carries the oracle accuracy at the
    smallest usable window size.
    """
    usable = []
    for n in windows:
        if n >= len(stream):
            logger.warning(f"Skipping N={n}: the stream has only {len(stream)} tasks")
        elif n < MIN_FIT_SIZE:
            logger.warning(f"Skipping N={n}: windows need at least {MIN_FIT_SIZE} observations")
        else:
            usable.append(n)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda n: evaluate_window(stream, n, clamp), usable))
    else:
        rows = [evaluate_window(stream, n, clamp) for n in usable]

    if include_full:
        rows.append(full_dataset_row(stream, clamp=clamp))

    for row in rows:
        logger.debug(f"N={row.N} ({row.mode}): accuracy {row.accuracy:.4f}")
    report = SweepReport(rows)
    if oracle_baseline and usable:
        report.baselines['oracle'] = oracle_accuracy(stream, min(usable))
    return report


def write_report_csv(report: SweepReport, path: str) -> None:
    frame = pd.DataFrame([asdict(row) for row in report.rows], columns=REPORT_COLUMNS)
    frame.to_csv(path, index=False, float_format='%.9g')


def format_report_table(report: SweepReport) -> str:
    """Aligned plain-text rendering of the report."""
    headers = ['N', 'r(tc,d)', 'r(tl,d)', 'mean tc', 'mean pc', 'res c',
               'mean tl', 'mean pl', 'res l', 'err c', 'err l', 'accuracy']
    lines = []
    for row in report.rows:
        label = f"{row.N} (full)" if row.mode == FULL_MODE else str(row.N)
        lines.append([
            label,
            f"{row.avg_corr_cloud:.5f}", f"{row.avg_corr_local:.5f}",
            f"{row.mean_t_cloud:.5f}", f"{row.mean_p_cloud:.5f}", f"{row.residual_cloud:+.5f}",
            f"{row.mean_t_local:.5f}", f"{row.mean_p_local:.5f}", f"{row.residual_local:+.5f}",
            f"{row.error_rate_cloud:.2%}", f"{row.error_rate_local:.2%}", f"{row.accuracy:.2%}",
        ])

    widths = [max(len(h), *(len(line[i]) for line in lines)) if lines else len(h)
              for i, h in enumerate(headers)]
    out = ['Accuracy is scored over steady-phase tasks only (warm-up tasks carry no decision).',
           '  '.join(h.rjust(w) for h, w in zip(headers, widths))]
    out += ['  '.join(cell.rjust(w) for cell, w in zip(line, widths)) for line in lines]
    for name, accuracy in report.baselines.items():
        out.append(f"baseline {name}: accuracy {accuracy:.2%}")
    return '\n'.join(out)
