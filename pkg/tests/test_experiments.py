import pytest

from experiments.latency import experiment_concurrent_broadcast, experiment_latency, soak
from experiments.sync_stability import (
    WRAP_POST_TICK,
    WRAP_PRE_TICK,
    draw_phases,
    experiment_sync,
    experiment_wrap,
)
from experiments.token_ring import experiment_token_ring
from protocol.errors import ConfigError
from timing.clock_math import TICK_MODULUS, tick_diff


def test_data32_latency_at_default_link_clock():
    summary = experiment_latency(3, 'D32', count=5_000, seed=1)
    assert summary.message_count == 5_000
    assert summary.distinct_latencies_fs == [186_046_511]
    assert summary.latency_variance_fs2 == 0.0
    assert abs(summary.latency_mean_fs / 1e6 - 186.05) < 0.5
    assert summary.runtime_s < 1


def test_data32_latency_at_three_times_the_link_clock():
    with pytest.warns(UserWarning):
        summary = experiment_latency(2, 'D32', link_clock_hz=322_500_000, count=1_000)
    assert summary.distinct_latencies_fs == [62_015_503]
    assert abs(summary.latency_mean_fs / 1e6 - 62.0) < 0.5
    assert summary.runtime_s < 1


def test_data8_latency():
    summary = experiment_latency(2, 'd8', count=1_000)
    assert summary.distinct_latencies_fs == [74_418_604]
    assert summary.extra['size_class'] == 'D8'


def test_cable_delay_adds_to_latency():
    summary = experiment_latency(4, 'D16', count=2_000, delay_fs=4_500_000)
    assert summary.distinct_latencies_fs == [summary.extra['expected_latency_fs']]
    assert summary.extra['expected_latency_fs'] == 111_627_906 + 4_500_000


def test_latency_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        experiment_latency(2, 'D64', count=10)
    with pytest.raises(ConfigError):
        experiment_latency(2, 'D32', count=0)


@pytest.mark.slow
def test_soak_three_boards():
    summary = soak(count=100_000, seed=3, progress=False)
    assert summary.message_count == 100_000
    assert summary.distinct_latencies_fs == [186_046_511]
    assert summary.latency_variance_fs2 == 0.0
    assert summary.counters['rx_overflows'] == 0
    assert summary.runtime_s < 10


@pytest.mark.slow
def test_soak_two_boards():
    summary = experiment_latency(2, 'D32', count=100_000, seed=4)
    assert summary.message_count == 100_000
    assert summary.deterministic
    assert summary.latency_variance_fs2 == 0.0
    assert summary.runtime_s < 10


def test_concurrent_broadcasts_keep_single_transmitter_latency():
    summary = experiment_concurrent_broadcast(5, 'D32', seed=2)
    assert summary.message_count == 25
    assert summary.distinct_latencies_fs == [186_046_511]


def test_concurrent_broadcasts_with_skewed_cables():
    matrix = [[0, 1_000, 2_000], [1_000, 0, 3_000], [2_000, 3_000, 0]]
    summary = experiment_concurrent_broadcast(3, 'D8', delay_matrix=matrix)
    assert summary.distinct_latencies_fs == [74_418_604 + d for d in (0, 1_000, 2_000, 3_000)]


def test_sync_stable_over_three_days():
    report, verdict = experiment_sync(3, phase_fs=[0, 12_000, -8_000], days=3)
    assert report.skew_fs == 20_000
    assert verdict.stable
    assert set(verdict.skews_fs) == {20_000}
    assert len(verdict.skews_fs) == 12
    assert not verdict.crossed_wrap


def test_sync_stable_across_the_wrap():
    report, verdict = experiment_sync(5, phase_bound_fs=50_000, days=8, seed=11)
    assert verdict.crossed_wrap
    assert verdict.stable
    assert report.skew_fs <= 100_000
    assert set(verdict.skews_fs) == {report.skew_fs}
    assert verdict.horizon_fs == 8 * 86_400 * 10 ** 15


def test_sync_zero_phases_one_day():
    report, verdict = experiment_sync(2, days=1)
    assert report.skew_fs == 0
    assert verdict.skews_fs == [0] * 4


def test_phase_draws_stay_in_bounds():
    phases = draw_phases(15, 50_000, seed=9)
    assert len(phases) == 15
    assert all(-50_000 <= p <= 50_000 for p in phases)
    assert draw_phases(15, 50_000, seed=9) == phases


def test_counter_wrap_under_program_control():
    _, result = experiment_wrap(3, phase_fs=[0, 12_000, -8_000])
    assert set(result.pre_tick.values()) == {WRAP_PRE_TICK}
    assert WRAP_PRE_TICK == TICK_MODULUS - 10
    assert set(result.post_tick.values()) == {WRAP_POST_TICK}
    assert set(result.edges_between.values()) == {15}
    assert result.pre_skew_fs == result.post_skew_fs == 20_000


def test_token_ring_lap_time():
    result = experiment_token_ring(3, laps=5)
    assert result.expected_lap_fs == 3 * 9_302_325
    assert result.lap_times_fs == [3 * 9_302_325] * 5
    assert result.deterministic


def test_token_ring_with_unequal_cables():
    matrix = [
        [0, 1_000, 0, 0],
        [0, 0, 2_000, 0],
        [0, 0, 0, 3_000],
        [4_000, 0, 0, 0],
    ]
    result = experiment_token_ring(laps=3, delay_matrix=matrix)
    assert result.n_boards == 4
    assert result.lap_times_fs == [4 * 9_302_325 + 10_000] * 3


def test_token_ring_needs_laps():
    with pytest.raises(ConfigError):
        experiment_token_ring(3, laps=0)


def test_skew_sample_spacing_is_exact_in_ticks():
    _, verdict = experiment_sync(2, days=3)
    # 3 days / 12 samples = 21,600 s of 430 MHz ticks
    gaps = {tick_diff(a, b) for a, b in zip(verdict.probe_ticks, verdict.probe_ticks[1:])}
    assert gaps == {21_600 * 430_000_000}
