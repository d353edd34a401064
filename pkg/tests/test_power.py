import math

import pytest

from sleepscale.errors import IncompatiblePair, InvalidSleepSequence, LatencyOutOfRange, PowerTableError, RangeError
from sleepscale.power import (SleepSequence, SleepState, active_power, combined_power, prune_dominated,
                              sleep_catalog)


def test_active_power_full_speed(table):
    assert active_power(table, 1.0) == pytest.approx(250.0)


def test_active_power_scales_cubically(table):
    assert active_power(table, 0.5) == pytest.approx(130 * 0.125 + 120)


@pytest.mark.parametrize('cpu, platform, f, expected', [
    ('C0_idle', 'S0_idle', 1.0, 135.5),
    ('C0_idle', 'S0_idle', 0.5, 75 * 0.125 + 60.5),
    ('C1', 'S0_idle', 0.5, 47 * 0.25 + 60.5),
    ('C3', 'S0_idle', 0.2, 82.5),
    ('C6', 'S0_idle', 0.7, 75.5),
    ('C6', 'S3', 1.0, 28.1),
])
def test_combined_power(table, cpu, platform, f, expected):
    assert combined_power(table, cpu, platform, f) == pytest.approx(expected)


def test_incompatible_pair(table):
    with pytest.raises(IncompatiblePair):
        combined_power(table, 'C0_active', 'S3', 1.0)


@pytest.mark.parametrize('f', [-0.1, 1.5, math.nan])
def test_frequency_out_of_range(table, f):
    with pytest.raises(RangeError):
        combined_power(table, 'C6', 'S3', f)


def test_active_power_rejects_zero_frequency(table):
    with pytest.raises(RangeError):
        active_power(table, 0.0)


def test_catalog_order_and_latencies(catalog):
    assert list(catalog) == ['C0iS0i', 'C1S0i', 'C3S0i', 'C6S0i', 'C6S3']
    assert catalog['C6S3'].wakeup_latency == 1.0
    assert catalog['C0iS0i'].wakeup_latency == 0.0
    assert all(state.entry_delay == 0 for state in catalog.values())


def test_catalog_is_a_legal_cascade_at_full_speed(catalog):
    seq = SleepSequence(tuple(catalog.values()))
    assert seq.powers == sorted(seq.powers, reverse=True)


def test_catalog_latency_override(table):
    catalog = sleep_catalog(table, {'C6S3': 5.0})
    assert catalog['C6S3'].wakeup_latency == 5.0


def test_catalog_latency_out_of_range_warns(table, caplog):
    catalog = sleep_catalog(table, {'C6S3': 20.0})
    assert catalog['C6S3'].wakeup_latency == 20.0
    assert 'outside the supported range' in caplog.text


def test_catalog_latency_out_of_range_strict(table):
    with pytest.raises(LatencyOutOfRange):
        sleep_catalog(table, {'C6S3': 20.0}, strict=True)


def test_catalog_unknown_label(table):
    with pytest.raises(PowerTableError):
        sleep_catalog(table, {'C9S9': 1.0})


def test_catalog_rejects_unordered_latencies_at_full_speed(table):
    # both within range, but C3 no longer wakes slower than C1
    with pytest.raises(InvalidSleepSequence):
        sleep_catalog(table, {'C1S0i': 1e-5, 'C3S0i': 1e-5})


def test_catalog_tolerates_unordered_powers_at_low_frequency(table):
    catalog = sleep_catalog(table, f_idle=0.3)
    assert catalog['C0iS0i'].power < catalog['C1S0i'].power


def test_state_at_frequency_keeps_latency(catalog, table):
    state = catalog['C1S0i'].with_delay(0.5).at_frequency(table, 0.5)
    assert state.power == pytest.approx(47 * 0.25 + 60.5)
    assert state.entry_delay == 0.5
    assert state.wakeup_latency == catalog['C1S0i'].wakeup_latency


def test_sequence_label(catalog):
    assert SleepSequence((catalog['C6S3'],)).label == 'C6S3'
    assert SleepSequence().label == 'none'
    seq = SleepSequence((catalog['C0iS0i'], catalog['C6S3'].with_delay(0.5)))
    assert seq.label == 'C0iS0i>C6S3@0.5'
    assert seq.family == 'C6S3'


def test_sequence_rejects_decreasing_delay(catalog):
    with pytest.raises(InvalidSleepSequence):
        SleepSequence((catalog['C0iS0i'].with_delay(2.0), catalog['C6S3'].with_delay(1.0)))


def test_sequence_rejects_rising_power(catalog):
    with pytest.raises(InvalidSleepSequence):
        SleepSequence((catalog['C6S3'], catalog['C6S0i'].with_delay(1.0)))


def test_sequence_allows_shadowed_state(catalog):
    seq = SleepSequence((catalog['C0iS0i'], catalog['C6S3']))
    assert seq.delays == [0.0, 0.0]


def test_negative_power_rejected():
    with pytest.raises(InvalidSleepSequence):
        SleepState('X', -1.0, 0.0)


def test_prune_dominated_at_low_frequency(table):
    # at f=0.3 C0_idle (75 f^3) draws less than every deeper S0_idle state
    low = sleep_catalog(table, f_idle=0.3)
    kept = prune_dominated(list(low.values()))
    assert [s.label for s in kept] == ['C0iS0i', 'C6S3']
