import math

import numpy as np
import pytest

from etlwatch.errors import ContractViolationError
from etlwatch.numerics import SeededRng
from etlwatch.preprocess import MASKABLE_FIELDS
from etlwatch.streamgen import (
    ANOMALY_CLASSES,
    AnomalyMix,
    LabeledEvent,
    StreamConfig,
    generate,
    inject,
    labels_sibling_path,
    numeric_bands,
    read_labeled_events,
    sample_gamma,
    sample_poisson,
    write_labeled_events,
)


@pytest.fixture(scope="module")
def benchmark_stream():
    return generate(StreamConfig(seed=7))


class TestGenerate:
    def test_zero_rate_means_all_normal(self):
        events = generate(StreamConfig(n_events=300, anomaly_rate=0.0, seed=1))
        assert all(not e.label for e in events)
        assert all(e.anomaly_class is None for e in events)

    def test_same_seed_gives_identical_streams(self):
        a = generate(StreamConfig(n_events=200, seed=5))
        b = generate(StreamConfig(n_events=200, seed=5))
        assert a == b

    def test_different_seeds_differ(self):
        a = generate(StreamConfig(n_events=50, seed=5))
        b = generate(StreamConfig(n_events=50, seed=6))
        assert a != b

    def test_anomaly_count_in_binomial_interval(self, benchmark_stream):
        # binomial(10^4, 0.05): mean 500, 5 sigma ~ 109
        count = sum(e.label for e in benchmark_stream)
        assert 400 <= count <= 600

    def test_event_count_contract(self, benchmark_stream):
        assert len(benchmark_stream) == 10_000

    def test_timestamps_strictly_increase(self, benchmark_stream):
        stamps = [e.event.timestamp for e in benchmark_stream]
        assert all(b > a for a, b in zip(stamps, stamps[1:]))

    def test_gap_mean_matches_config(self, benchmark_stream):
        stamps = [e.event.timestamp for e in benchmark_stream]
        gaps = np.diff(stamps)
        # mean of 10^4 exponential(60000) draws: SE = 600, allow 5 sigma
        assert abs(gaps.mean() - 60_000) < 3_000

    def test_class_counts_match_mix_within_3_sigma(self, benchmark_stream):
        anomalies = [e for e in benchmark_stream if e.label]
        n = len(anomalies)
        for cls in ANOMALY_CLASSES:
            count = sum(1 for e in anomalies if e.anomaly_class == cls)
            expected = n * 0.25
            sigma = math.sqrt(n * 0.25 * 0.75)
            assert abs(count - expected) <= 3 * sigma, (cls, count, expected)

    def test_normal_events_have_no_mask_bits(self, benchmark_stream):
        for item in benchmark_stream:
            if not item.label:
                assert not any(item.event.missing_mask)

    def test_normal_events_lie_in_conditional_bands(self, benchmark_stream):
        cfg = StreamConfig(seed=7)
        for item in benchmark_stream:
            if item.label:
                continue
            event = item.event
            bands = numeric_bands(
                cfg, event.timestamp, event.records_loaded, event.device_type
            )
            for field, (lo, hi) in bands.items():
                value = float(getattr(event, field))
                assert lo <= value <= hi, (field, value, lo, hi)


class TestInject:
    @pytest.fixture
    def normal_event(self):
        return generate(StreamConfig(n_events=1, anomaly_rate=0.0, seed=2))[0].event

    def test_delay_strictly_increases_latency(self, normal_event):
        out = inject(normal_event, "delay", SeededRng(1))
        assert out.latency_ms > normal_event.latency_ms
        factor = out.latency_ms / normal_event.latency_ms
        assert 5.0 <= factor <= 20.0

    def test_missing_sets_mask_and_zeroes_fields(self, normal_event):
        out = inject(normal_event, "missing", SeededRng(2))
        assert any(out.missing_mask)
        for i, field in enumerate(MASKABLE_FIELDS):
            if out.missing_mask[i]:
                assert getattr(out, field) == 0.0

    def test_duplicate_signature(self, normal_event):
        out = inject(normal_event, "duplicate", SeededRng(3))
        assert out.records_loaded == 2 * normal_event.records_loaded
        assert out.task_duration_s == pytest.approx(normal_event.task_duration_s / 2)

    def test_spike_bounds(self, normal_event):
        out = inject(normal_event, "spike", SeededRng(4))
        assert 10.0 * normal_event.amount <= out.amount <= 50.0 * normal_event.amount

    def test_unknown_class(self, normal_event):
        with pytest.raises(ContractViolationError):
            inject(normal_event, "gremlins", SeededRng(5))


class TestSamplers:
    def test_gamma_moments(self):
        rng = SeededRng(11)
        draws = [sample_gamma(rng, 3.0, 2.0) for _ in range(20_000)]
        assert np.mean(draws) == pytest.approx(6.0, rel=0.05)
        assert np.var(draws) == pytest.approx(12.0, rel=0.15)

    def test_gamma_shape_below_one(self):
        rng = SeededRng(12)
        draws = [sample_gamma(rng, 0.5, 1.0) for _ in range(20_000)]
        assert np.mean(draws) == pytest.approx(0.5, rel=0.1)

    def test_poisson_small_and_large_mean(self):
        rng = SeededRng(13)
        small = [sample_poisson(rng, 4.0) for _ in range(20_000)]
        assert np.mean(small) == pytest.approx(4.0, rel=0.05)
        large = [sample_poisson(rng, 40.0) for _ in range(20_000)]
        assert np.mean(large) == pytest.approx(40.0, rel=0.05)
        assert np.var(large) == pytest.approx(40.0, rel=0.15)

    def test_poisson_deterministic(self):
        a = [sample_poisson(SeededRng(9), 25.0) for _ in range(5)]
        b = [sample_poisson(SeededRng(9), 25.0) for _ in range(5)]
        assert a == b


class TestConfigValidation:
    def test_mix_must_sum_to_one(self):
        with pytest.raises(ContractViolationError):
            AnomalyMix(delay=0.5, missing=0.5, duplicate=0.5, spike=0.5)

    def test_mix_rejects_negative(self):
        with pytest.raises(ContractViolationError):
            AnomalyMix(delay=-0.5, missing=0.5, duplicate=0.5, spike=0.5)

    def test_anomaly_rate_range(self):
        with pytest.raises(ContractViolationError):
            StreamConfig(anomaly_rate=1.0)

    def test_labeled_event_invariant(self):
        event = generate(StreamConfig(n_events=1, anomaly_rate=0.0, seed=1))[0].event
        with pytest.raises(ContractViolationError):
            LabeledEvent(event=event, label=True, anomaly_class=None)
        with pytest.raises(ContractViolationError):
            LabeledEvent(event=event, label=False, anomaly_class="delay")


class TestLabeledEventFiles:
    def test_inline_round_trip(self, tmp_path):
        events = generate(StreamConfig(n_events=60, seed=4))
        path = tmp_path / "stream.jsonl"
        write_labeled_events(events, path)
        assert read_labeled_events(path) == events
        assert len(path.read_text().splitlines()) == 60

    def test_holdout_round_trip(self, tmp_path):
        events = generate(StreamConfig(n_events=60, seed=4))
        path = tmp_path / "stream.jsonl"
        write_labeled_events(events, path, holdout=True)
        assert "label" not in path.read_text().splitlines()[0]
        assert labels_sibling_path(path).exists()
        assert read_labeled_events(path) == events

    def test_holdout_without_labels_file_fails(self, tmp_path):
        events = generate(StreamConfig(n_events=5, seed=4))
        path = tmp_path / "stream.jsonl"
        write_labeled_events(events, path, holdout=True)
        labels_sibling_path(path).unlink()
        with pytest.raises(ContractViolationError):
            read_labeled_events(path)
