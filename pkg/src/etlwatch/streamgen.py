"""Synthetic labeled ETL event streams with four injectable fault classes.

Normal traffic is drawn from configurable base distributions (log-normal
amounts, gamma latencies and durations, Poisson record counts) with two
pieces of realistic structure a detector can learn:

* a diurnal load factor scales expected record counts and latencies by time
  of day, and
* task duration scales with the number of records actually loaded.

Every numeric draw is rejection-truncated to the 0.001-0.999 quantile band
of its conditional distribution, so normal events stay in the bulk and the
fault injectors below are what push events out of it.

Fault classes (applied to a freshly drawn normal event):

* ``delay``     - latency multiplied by a factor uniform in [5, 20]
* ``missing``   - 1 to 3 maskable numeric fields zeroed with their mask bit set
* ``duplicate`` - records_loaded doubled, task_duration_s halved (a re-run load)
* ``spike``     - amount multiplied by a factor uniform in [10, 50]

All randomness flows through :class:`~etlwatch.numerics.SeededRng`; a config
with the same seed reproduces the stream exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

from scipy import stats as sps

from .errors import ContractViolationError
from .numerics import SeededRng
from .preprocess import (
    DEFAULT_DEVICE_TYPES,
    DEFAULT_GEO_REGIONS,
    MASKABLE_FIELDS,
    MS_PER_DAY,
    EtlEvent,
    event_to_dict,
    parse_event,
)

ANOMALY_CLASSES = ("delay", "missing", "duplicate", "spike")
DELAY_FACTOR_RANGE = (5.0, 20.0)
SPIKE_FACTOR_RANGE = (10.0, 50.0)
BAND_QUANTILES = (0.001, 0.999)


@dataclass(frozen=True)
class AnomalyMix:
    """Relative weights of the four fault classes among injected anomalies."""

    delay: float = 0.25
    missing: float = 0.25
    duplicate: float = 0.25
    spike: float = 0.25

    def __post_init__(self) -> None:
        weights = self.weights()
        if any(w < 0 for w in weights):
            raise ContractViolationError(f"mix weights must be non-negative, got {weights}")
        if not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
            raise ContractViolationError(f"mix weights must sum to 1, got {sum(weights)}")

    def weights(self) -> tuple[float, float, float, float]:
        return (self.delay, self.missing, self.duplicate, self.spike)


@dataclass(frozen=True)
class StreamConfig:
    n_events: int = 10_000
    anomaly_rate: float = 0.05
    mix: AnomalyMix = AnomalyMix()
    seed: int = 7
    # base distributions for normal traffic; amounts are conditional on the
    # device channel (point-of-sale loads carry far larger amounts than
    # mobile ones), durations scale with the records actually loaded, and
    # latency follows the diurnal load factor
    amount_log_mu: float = 4.0
    amount_log_sigma: float = 0.5
    amount_device_offsets: tuple[float, ...] = (-0.5, 0.0, 1.0)
    latency_shape: float = 1.3
    latency_scale: float = 90.0
    duration_shape: float = 24.0
    duration_scale: float = 2.5
    records_mean: float = 8.0
    # arrival process and diurnal cycle; the default gap makes a 10k-event
    # stream span about a week, so chronological splits all cover full cycles
    start_timestamp: int = 1_767_225_600_000  # 2026-01-01T00:00:00Z
    mean_gap_ms: float = 60_000.0
    diurnal_amplitude: float = 0.45
    device_weights: tuple[float, ...] = (0.55, 0.3, 0.15)
    geo_weights: tuple[float, ...] = (0.6, 0.25, 0.125, 0.025)

    def __post_init__(self) -> None:
        if self.n_events < 0:
            raise ContractViolationError(f"n_events must be >= 0, got {self.n_events}")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ContractViolationError(
                f"anomaly_rate must lie in [0, 1), got {self.anomaly_rate}"
            )
        for name in (
            "amount_log_sigma", "latency_shape", "latency_scale",
            "duration_shape", "duration_scale", "records_mean", "mean_gap_ms",
        ):
            if getattr(self, name) <= 0:
                raise ContractViolationError(f"{name} must be > 0")
        if not 0.0 <= self.diurnal_amplitude < 1.0:
            raise ContractViolationError("diurnal_amplitude must lie in [0, 1)")
        if len(self.device_weights) != len(DEFAULT_DEVICE_TYPES) or len(
            self.geo_weights
        ) != len(DEFAULT_GEO_REGIONS):
            raise ContractViolationError("categorical weights do not match category counts")
        if len(self.amount_device_offsets) != len(DEFAULT_DEVICE_TYPES):
            raise ContractViolationError(
                "amount_device_offsets must give one offset per device type"
            )


@dataclass(frozen=True)
class LabeledEvent:
    event: EtlEvent
    label: bool
    anomaly_class: str | None = None

    def __post_init__(self) -> None:
        if self.label != (self.anomaly_class is not None):
            raise ContractViolationError(
                "anomaly_class must be present exactly when label is true"
            )
        if self.anomaly_class is not None and self.anomaly_class not in ANOMALY_CLASSES:
            raise ContractViolationError(f"unknown anomaly class {self.anomaly_class!r}")


# --- distribution samplers (all driven by SeededRng.uniform) --------------

def sample_exponential(rng: SeededRng, mean: float) -> float:
    return -mean * math.log(1.0 - rng.uniform())


def sample_normal(rng: SeededRng) -> float:
    # Box-Muller; the sine partner is discarded to keep each call independent
    # of caller state.
    u1 = 1.0 - rng.uniform()
    u2 = rng.uniform()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def sample_lognormal(rng: SeededRng, log_mu: float, log_sigma: float) -> float:
    return math.exp(log_mu + log_sigma * sample_normal(rng))


def sample_gamma(rng: SeededRng, shape: float, scale: float) -> float:
    """Marsaglia-Tsang squeeze method; shape < 1 uses the boost transform."""
    if shape <= 0 or scale <= 0:
        raise ContractViolationError("gamma shape and scale must be > 0")
    if shape < 1.0:
        boost = (1.0 - rng.uniform()) ** (1.0 / shape)
        return sample_gamma(rng, shape + 1.0, scale) * boost
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = sample_normal(rng)
        v = (1.0 + c * x) ** 3
        if v <= 0.0:
            continue
        u = rng.uniform()
        if u < 1.0 - 0.0331 * x**4:
            return d * v * scale
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v * scale


def sample_poisson(rng: SeededRng, mean: float) -> int:
    """Knuth's product method for small means, Hormann's PTRS above 10."""
    if mean <= 0:
        raise ContractViolationError("poisson mean must be > 0")
    if mean < 10.0:
        limit = math.exp(-mean)
        k = 0
        product = rng.uniform()
        while product > limit:
            k += 1
            product *= rng.uniform()
        return k
    # PTRS (transformed rejection with squeeze), Hormann 1993
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.uniform() - 0.5
        v = rng.uniform()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mean + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b) <= (
            -mean + k * loglam - math.lgamma(k + 1.0)
        ):
            return int(k)


def sample_categorical(rng: SeededRng, weights: tuple[float, ...]) -> int:
    u = rng.uniform() * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


# --- normal-event structure ------------------------------------------------

def load_factor(cfg: StreamConfig, timestamp: int) -> float:
    """Diurnal activity multiplier; peaks at 15:00, bottoms at 03:00."""
    frac = (timestamp % MS_PER_DAY) / MS_PER_DAY
    return 1.0 + cfg.diurnal_amplitude * math.sin(2.0 * math.pi * (frac - 0.375))


@lru_cache(maxsize=None)
def _normal_band() -> tuple[float, float]:
    lo, hi = sps.norm.ppf(BAND_QUANTILES)
    return float(lo), float(hi)


@lru_cache(maxsize=None)
def _unit_gamma_band(shape: float) -> tuple[float, float]:
    lo, hi = sps.gamma.ppf(BAND_QUANTILES, a=shape)
    return float(lo), float(hi)


@lru_cache(maxsize=4096)
def _poisson_band(mean: float) -> tuple[float, float]:
    # mean arrives rounded to 0.01 so the cache actually hits; the band is
    # definitional and both generation and tests go through this helper.
    lo, hi = sps.poisson.ppf(BAND_QUANTILES, mu=mean)
    return float(lo), float(hi)


def records_band(cfg: StreamConfig, timestamp: int) -> tuple[float, float]:
    lf = load_factor(cfg, timestamp)
    return _poisson_band(round(cfg.records_mean * lf, 2))


def amount_log_location(cfg: StreamConfig, device_type: str) -> float:
    device_index = DEFAULT_DEVICE_TYPES.index(device_type)
    return cfg.amount_log_mu + cfg.amount_device_offsets[device_index]


def numeric_bands(
    cfg: StreamConfig, timestamp: int, records_loaded: int, device_type: str
) -> dict[str, tuple[float, float]]:
    """Conditional 0.001-0.999 quantile band per numeric field.

    The amount band depends on the event's device channel, the latency band
    on its time of day, the duration band on its actual record count; normal
    draws are truncated to these bands and the generator invariant test
    re-derives them from the emitted fields.
    """
    lf = load_factor(cfg, timestamp)
    z_lo, z_hi = _normal_band()
    log_mu = amount_log_location(cfg, device_type)
    amount_band = (
        math.exp(log_mu + cfg.amount_log_sigma * z_lo),
        math.exp(log_mu + cfg.amount_log_sigma * z_hi),
    )
    g_lo, g_hi = _unit_gamma_band(cfg.latency_shape)
    latency_band = (g_lo * cfg.latency_scale * lf, g_hi * cfg.latency_scale * lf)
    d_lo, d_hi = _unit_gamma_band(cfg.duration_shape)
    duration_scale = cfg.duration_scale * max(records_loaded, 1) / cfg.records_mean
    duration_band = (d_lo * duration_scale, d_hi * duration_scale)
    return {
        "amount": amount_band,
        "latency_ms": latency_band,
        "task_duration_s": duration_band,
        "records_loaded": records_band(cfg, timestamp),
    }


def _truncated(draw, lo: float, hi: float, max_tries: int = 10_000) -> float:
    for _ in range(max_tries):
        value = draw()
        if lo <= value <= hi:
            return value
    raise ContractViolationError(
        f"could not draw a value inside [{lo}, {hi}] after {max_tries} tries"
    )


def _draw_normal_event(cfg: StreamConfig, rng: SeededRng, timestamp: int, event_id: str) -> EtlEvent:
    lf = load_factor(cfg, timestamp)
    device = DEFAULT_DEVICE_TYPES[sample_categorical(rng, cfg.device_weights)]
    geo = DEFAULT_GEO_REGIONS[sample_categorical(rng, cfg.geo_weights)]
    records = int(
        _truncated(
            lambda: sample_poisson(rng, cfg.records_mean * lf),
            *records_band(cfg, timestamp),
        )
    )
    bands = numeric_bands(cfg, timestamp, records, device)
    amount = _truncated(
        lambda: sample_lognormal(rng, amount_log_location(cfg, device), cfg.amount_log_sigma),
        *bands["amount"],
    )
    latency = _truncated(
        lambda: sample_gamma(rng, cfg.latency_shape, cfg.latency_scale * lf),
        *bands["latency_ms"],
    )
    duration_scale = cfg.duration_scale * max(records, 1) / cfg.records_mean
    duration = _truncated(
        lambda: sample_gamma(rng, cfg.duration_shape, duration_scale),
        *bands["task_duration_s"],
    )
    return EtlEvent(
        timestamp=timestamp,
        amount=amount,
        latency_ms=latency,
        task_duration_s=duration,
        records_loaded=records,
        device_type=device,
        geo_region=geo,
        missing_mask=(False,) * len(MASKABLE_FIELDS),
        event_id=event_id,
    )


def inject(event: EtlEvent, anomaly_class: str, rng: SeededRng) -> EtlEvent:
    """Apply one fault signature to a freshly drawn normal event."""
    if anomaly_class == "delay":
        factor = rng.uniform(*DELAY_FACTOR_RANGE)
        return replace(event, latency_ms=event.latency_ms * factor)
    if anomaly_class == "missing":
        n_missing = 1 + rng.index(len(MASKABLE_FIELDS))
        chosen: set[int] = set()
        while len(chosen) < n_missing:
            chosen.add(rng.index(len(MASKABLE_FIELDS)))
        mask = tuple(i in chosen for i in range(len(MASKABLE_FIELDS)))
        updates = {MASKABLE_FIELDS[i]: 0.0 for i in sorted(chosen)}
        return replace(event, missing_mask=mask, **updates)
    if anomaly_class == "duplicate":
        return replace(
            event,
            records_loaded=event.records_loaded * 2,
            task_duration_s=event.task_duration_s * 0.5,
        )
    if anomaly_class == "spike":
        factor = rng.uniform(*SPIKE_FACTOR_RANGE)
        return replace(event, amount=event.amount * factor)
    raise ContractViolationError(f"unknown anomaly class {anomaly_class!r}")


def generate(cfg: StreamConfig) -> list[LabeledEvent]:
    """Generate ``cfg.n_events`` labeled events with strictly increasing timestamps."""
    rng = SeededRng(cfg.seed)
    timestamp = cfg.start_timestamp
    out: list[LabeledEvent] = []
    for i in range(cfg.n_events):
        timestamp += max(1, round(sample_exponential(rng, cfg.mean_gap_ms)))
        event = _draw_normal_event(cfg, rng, timestamp, event_id=f"evt-{i:06d}")
        if rng.uniform() < cfg.anomaly_rate:
            anomaly_class = ANOMALY_CLASSES[sample_categorical(rng, cfg.mix.weights())]
            out.append(
                LabeledEvent(
                    event=inject(event, anomaly_class, rng),
                    label=True,
                    anomaly_class=anomaly_class,
                )
            )
        else:
            out.append(LabeledEvent(event=event, label=False))
    return out


# --- labeled-event files ----------------------------------------------------

def labels_sibling_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".labels.jsonl")


def write_labeled_events(
    events: list[LabeledEvent], path: str | Path, holdout: bool = False
) -> None:
    """Write one JSON record per event.

    With ``holdout=True`` the event file carries no label fields and the
    labels go to a sibling ``<stem>.labels.jsonl`` file keyed by event_id.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for item in events:
            record = event_to_dict(item.event)
            if not holdout:
                record["label"] = item.label
                record["anomaly_class"] = item.anomaly_class
            fh.write(json.dumps(record) + "\n")
    if holdout:
        with open(labels_sibling_path(path), "w", encoding="utf-8") as fh:
            for item in events:
                fh.write(
                    json.dumps(
                        {
                            "event_id": item.event.event_id,
                            "label": item.label,
                            "anomaly_class": item.anomaly_class,
                        }
                    )
                    + "\n"
                )


def read_labeled_events(
    path: str | Path, labels_path: str | Path | None = None
) -> list[LabeledEvent]:
    """Read a labeled stream; falls back to the sibling labels file."""
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))

    if rows and "label" not in rows[0]:
        labels_path = labels_path or labels_sibling_path(path)
        if not Path(labels_path).exists():
            raise ContractViolationError(
                f"{path} has no label fields and no labels file at {labels_path}"
            )
        by_id: dict[str, dict] = {}
        with open(labels_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    record = json.loads(line)
                    by_id[record["event_id"]] = record
        for row in rows:
            try:
                label_row = by_id[row["event_id"]]
            except KeyError as exc:
                raise ContractViolationError(
                    f"event {row.get('event_id')!r} has no entry in {labels_path}"
                ) from exc
            row["label"] = label_row["label"]
            row["anomaly_class"] = label_row["anomaly_class"]

    out = []
    for row in rows:
        if "label" not in row:
            raise ContractViolationError("stream record carries no label")
        out.append(
            LabeledEvent(
                event=parse_event(row),
                label=bool(row["label"]),
                anomaly_class=row.get("anomaly_class"),
            )
        )
    return out
