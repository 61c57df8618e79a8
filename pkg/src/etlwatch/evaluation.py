"""Detection metrics, sensitivity sweeps, and machine-readable reports.

AUC is the Mann-Whitney pair statistic (probability that a random anomaly
outscores a random normal, ties counted 0.5) computed from average ranks, so
it matches brute-force pair enumeration bit for bit. Accuracy, precision and
recall come from the confusion matrix at a fixed threshold; a metric whose
denominator is zero is reported as ``None``, never silently as 0 or 1.

Sweeps retrain one model per grid value from the same seed on the same data
bundle, so the knob under study is the only varying factor. Grid points run
serially; results are listed in grid order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autoencoder import (
    DEFAULT_ACTIVATIONS,
    Activation,
    TrainConfig,
    train,
)
from .detector import batch_scores, calibrate_threshold
from .errors import (
    ContractViolationError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .preprocess import (
    FeatureSchema,
    StandardizationStats,
    fit_stats,
    standardize,
    vectorize_events,
)
from .streamgen import LabeledEvent, StreamConfig, generate

LR_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01)
K_GRID = (4, 8, 16, 32, 64, 128)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    auc: float | None
    acc: float | None
    precision: float | None
    recall: float | None
    confusion: ConfusionCounts
    n: int
    delta_used: float


@dataclass(frozen=True)
class SweepEntry:
    knob_value: float
    report: MetricsReport | None
    diverged: bool = False
    overcomplete: bool = False


@dataclass(frozen=True)
class SweepResult:
    knob: str
    grid: tuple[float, ...]
    entries: tuple[SweepEntry, ...]
    seed: int

    def __post_init__(self) -> None:
        if len(self.grid) != len(self.entries):
            raise ContractViolationError("grid and entries must have equal length")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their group's average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    return ranks


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability that a random anomaly outscores a random normal."""
    scores_arr = np.asarray(scores, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=bool)
    if scores_arr.shape != labels_arr.shape or scores_arr.ndim != 1:
        raise ContractViolationError(
            f"scores and labels must be equal-length 1-D sequences, "
            f"got {scores_arr.shape} and {labels_arr.shape}"
        )
    n_pos = int(labels_arr.sum())
    n_neg = labels_arr.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = _average_ranks(scores_arr)
    u = ranks[labels_arr].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def metrics_at_threshold(
    scores: Sequence[float], labels: Sequence[bool], delta: float
) -> MetricsReport:
    """Confusion counts and derived metrics with predicted-anomaly iff score > delta."""
    scores_arr = np.asarray(scores, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=bool)
    if scores_arr.shape != labels_arr.shape or scores_arr.ndim != 1:
        raise ContractViolationError(
            f"scores and labels must be equal-length 1-D sequences, "
            f"got {scores_arr.shape} and {labels_arr.shape}"
        )
    predicted = scores_arr > delta
    confusion = ConfusionCounts(
        tp=int(np.sum(predicted & labels_arr)),
        fp=int(np.sum(predicted & ~labels_arr)),
        tn=int(np.sum(~predicted & ~labels_arr)),
        fn=int(np.sum(~predicted & labels_arr)),
    )
    n = confusion.n
    precision = (
        confusion.tp / (confusion.tp + confusion.fp)
        if confusion.tp + confusion.fp > 0
        else None
    )
    recall = (
        confusion.tp / (confusion.tp + confusion.fn)
        if confusion.tp + confusion.fn > 0
        else None
    )
    return MetricsReport(
        auc=auc(scores_arr, labels_arr),
        acc=(confusion.tp + confusion.tn) / n,
        precision=precision,
        recall=recall,
        confusion=confusion,
        n=n,
        delta_used=float(delta),
    )


# --- data bundle ------------------------------------------------------------

@dataclass(frozen=True)
class DataBundle:
    """Standardized train/validation/test splits of a labeled stream.

    Training rows are normal events only; validation rows keep only normals
    (they calibrate the threshold); the test split keeps everything together
    with its labels. Standardization stats are fit on the training normals
    and frozen for the other splits.
    """

    x_train: np.ndarray
    x_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    stats: StandardizationStats
    schema: FeatureSchema


def make_bundle(
    events: Sequence[LabeledEvent],
    schema: FeatureSchema | None = None,
    train_frac: float = 0.6,
    val_frac: float = 0.2,
) -> DataBundle:
    """Split a labeled stream 60/20/20 in stream order and standardize it."""
    if not 0 < train_frac < 1 or not 0 < val_frac < 1 or train_frac + val_frac >= 1:
        raise ContractViolationError(
            f"invalid split fractions train={train_frac}, val={val_frac}"
        )
    schema = schema or FeatureSchema()
    n = len(events)
    n_train = int(n * train_frac)
    n_val = int(n * val_frac)
    train_part = [e.event for e in events[:n_train] if not e.label]
    val_part = [e.event for e in events[n_train : n_train + n_val] if not e.label]
    test_part = events[n_train + n_val :]
    if len(train_part) < 2 or not val_part or not test_part:
        raise ContractViolationError("stream is too small to split into three parts")

    x_train_raw = vectorize_events(train_part, schema)
    stats = fit_stats(x_train_raw)
    x_train = standardize(x_train_raw, stats)
    x_val = standardize(vectorize_events(val_part, schema), stats)
    x_test = standardize(
        vectorize_events([e.event for e in test_part], schema), stats
    )
    y_test = np.array([e.label for e in test_part], dtype=bool)
    return DataBundle(
        x_train=x_train, x_val=x_val, x_test=x_test, y_test=y_test,
        stats=stats, schema=schema,
    )


def standard_benchmark(seed: int = 7, n_events: int = 10_000) -> DataBundle:
    """The default synthetic benchmark: 10k events, 5% anomalies, equal mix."""
    cfg = StreamConfig(n_events=n_events, anomaly_rate=0.05, seed=seed)
    return make_bundle(generate(cfg))


def evaluate_config(
    bundle: DataBundle,
    cfg: TrainConfig,
    activations: tuple[Activation, Activation] = DEFAULT_ACTIVATIONS,
    calibration_quantile: float = 0.95,
) -> MetricsReport:
    """Train on the bundle, calibrate delta on validation normals, score test."""
    params, _ = train(bundle.x_train, cfg, activations)
    delta = calibrate_threshold(
        batch_scores(params, bundle.x_val), calibration_quantile
    )
    test_scores = batch_scores(params, bundle.x_test)
    return metrics_at_threshold(test_scores, bundle.y_test, delta)


def _run_sweep(
    knob: str,
    grid: Sequence[float],
    configs: Sequence[TrainConfig],
    bundle: DataBundle,
    seed: int,
) -> SweepResult:
    entries = []
    for value, cfg in zip(grid, configs):
        overcomplete = cfg.latent_dim > bundle.x_train.shape[1]
        try:
            report = evaluate_config(bundle, cfg)
        except TrainingDivergedError:
            entries.append(
                SweepEntry(knob_value=value, report=None, diverged=True,
                           overcomplete=overcomplete)
            )
            continue
        entries.append(
            SweepEntry(knob_value=value, report=report, overcomplete=overcomplete)
        )
    return SweepResult(
        knob=knob, grid=tuple(float(v) for v in grid), entries=tuple(entries), seed=seed
    )


def sweep_learning_rate(
    base_cfg: TrainConfig,
    grid: Sequence[float],
    bundle: DataBundle,
    seed: int,
) -> SweepResult:
    """Retrain per learning rate on identical data and seed."""
    if not grid:
        raise ContractViolationError("sweep grid must be non-empty")
    if list(grid) != sorted(grid):
        raise ContractViolationError("learning-rate grid must be sorted ascending")
    configs = [replace(base_cfg, learning_rate=lr, seed=seed) for lr in grid]
    return _run_sweep("lr", grid, configs, bundle, seed)


def sweep_latent_dim(
    base_cfg: TrainConfig,
    grid: Sequence[int],
    bundle: DataBundle,
    seed: int,
) -> SweepResult:
    """Retrain per latent dimension; overcomplete k > d is allowed but flagged."""
    if not grid:
        raise ContractViolationError("sweep grid must be non-empty")
    configs = [replace(base_cfg, latent_dim=int(k), seed=seed) for k in grid]
    return _run_sweep("k", grid, configs, bundle, seed)


# --- report files -------------------------------------------------------------

def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def emit_report(result: SweepResult, path: str | Path, fmt: str = "csv") -> None:
    """Write a sweep report; CSV for plotting, JSON with full confusion counts."""
    if fmt not in ("csv", "json"):
        raise ContractViolationError(f"format must be 'csv' or 'json', got {fmt!r}")
    if not result.entries:
        raise ContractViolationError("refusing to emit a report for an empty grid")
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["knob_value", "auc", "acc", "precision", "recall"])
            for entry in result.entries:
                report = entry.report
                if report is None:
                    writer.writerow([repr(entry.knob_value), "", "", "", ""])
                else:
                    writer.writerow(
                        [
                            repr(entry.knob_value),
                            _cell(report.auc),
                            _cell(report.acc),
                            _cell(report.precision),
                            _cell(report.recall),
                        ]
                    )
        return

    payload = {
        "knob": result.knob,
        "seed": result.seed,
        "grid": list(result.grid),
        "entries": [
            {
                "knob_value": entry.knob_value,
                "diverged": entry.diverged,
                "overcomplete": entry.overcomplete,
                "report": None
                if entry.report is None
                else {
                    "auc": entry.report.auc,
                    "acc": entry.report.acc,
                    "precision": entry.report.precision,
                    "recall": entry.report.recall,
                    "confusion": {
                        "tp": entry.report.confusion.tp,
                        "fp": entry.report.confusion.fp,
                        "tn": entry.report.confusion.tn,
                        "fn": entry.report.confusion.fn,
                    },
                    "n": entry.report.n,
                    "delta_used": entry.report.delta_used,
                },
            }
            for entry in result.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def report_filename(knob: str, seed: int, fmt: str) -> str:
    return f"sweep_{knob}_{seed}.{fmt}"


def metrics_to_dict(report: MetricsReport) -> dict:
    return {
        "auc": report.auc,
        "acc": report.acc,
        "precision": report.precision,
        "recall": report.recall,
        "confusion": {
            "tp": report.confusion.tp,
            "fp": report.confusion.fp,
            "tn": report.confusion.tn,
            "fn": report.confusion.fn,
        },
        "n": report.n,
        "delta_used": report.delta_used,
    }
