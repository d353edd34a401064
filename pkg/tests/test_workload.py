import numpy as np
import pytest
from scipy import stats

from sleepscale.errors import ParseError, RangeError, UnstableTarget
from sleepscale.workload import (ArrivalSpec, JobStream, ServiceSpec, TracePattern, UtilizationTrace,
                                 effective_service_time, email_store_trace, generate, rescale_to_utilization,
                                 synth_trace, trace_job_stream, warp_to_trace, workload_preset)


def test_generate_is_seeded():
    a, s = ArrivalSpec.exponential(2.0), ServiceSpec.exponential(5.0)
    assert generate(a, s, 1000, seed=3) == generate(a, s, 1000, seed=3)
    assert generate(a, s, 1000, seed=3) != generate(a, s, 1000, seed=4)


def test_changing_service_keeps_arrivals():
    a = ArrivalSpec.exponential(2.0)
    one = generate(a, ServiceSpec.exponential(5.0), 500, seed=1)
    two = generate(a, ServiceSpec.lognormal(0.2, 2.0), 500, seed=1)
    assert np.array_equal(one.arrivals, two.arrivals)


def test_exponential_gaps_fit():
    stream = generate(ArrivalSpec.exponential(4.0), ServiceSpec.exponential(10.0), 5_000, seed=5)
    assert stats.kstest(stream.gaps, 'expon', args=(0, 0.25)).pvalue > 0.01


def test_lognormal_demands_fit():
    service = ServiceSpec.lognormal(0.092, 3.6)
    stream = generate(ArrivalSpec.exponential(1.0), service, 5_000, seed=2)
    sigma = np.sqrt(np.log1p(3.6 ** 2))
    scale = 0.092 * np.exp(-sigma ** 2 / 2)
    assert stats.kstest(stream.demands, 'lognorm', args=(sigma, 0, scale)).pvalue > 0.01


def test_empirical_replays_in_order():
    a = ArrivalSpec.empirical([1.0, 2.0, 3.0])
    stream = generate(a, ServiceSpec.empirical([0.5]), 5, seed=0)
    assert list(stream.gaps) == [1.0, 2.0, 3.0, 1.0, 2.0]


def test_empirical_bootstrap_draws_from_log():
    stream = generate(ArrivalSpec.empirical([1.0, 2.0]), ServiceSpec.empirical([0.5]), 100, seed=0, bootstrap=True)
    assert set(np.round(stream.gaps, 12)) <= {1.0, 2.0}


def test_generate_needs_jobs():
    with pytest.raises(RangeError):
        generate(ArrivalSpec.exponential(1.0), ServiceSpec.exponential(1.0), 0)


@pytest.mark.parametrize('kwargs', [{'rate': 0}, {'rate': -1}])
def test_bad_rate(kwargs):
    with pytest.raises(RangeError):
        ArrivalSpec.exponential(**kwargs)


def test_presets():
    dns = workload_preset('dns')
    arrivals, service = dns.specs(rho=0.1)
    assert service.mu == pytest.approx(1 / 0.194)
    assert arrivals.mean_value == pytest.approx(1.94)
    with pytest.raises(RangeError):
        workload_preset('ftp')


def test_lognormal_preset_family():
    arrivals, service = workload_preset('mail').specs(rho=0.3, family='lognormal')
    assert arrivals.kind == 'lognormal'
    assert service.cv == 3.6


@pytest.mark.parametrize('beta, expected', [(1.0, 0.4), (0.0, 0.2), (0.5, 0.3)])
def test_effective_service_time(beta, expected):
    assert effective_service_time(0.2, 0.5, beta) == pytest.approx(expected)


def test_rescale_to_utilization(dns_stream):
    scaled = rescale_to_utilization(dns_stream, 0.6)
    assert scaled.utilization == pytest.approx(0.6)
    assert np.array_equal(scaled.demands, dns_stream.demands)


def test_rescale_rejects_unstable(dns_stream):
    with pytest.raises(UnstableTarget):
        rescale_to_utilization(dns_stream, 1.0)


def test_stream_rejects_unsorted_arrivals():
    with pytest.raises(RangeError):
        JobStream([2.0, 1.0], [0.1, 0.1])


def test_trace_rejects_out_of_range():
    with pytest.raises(RangeError):
        UtilizationTrace.from_values([0.2, 1.2])


def test_trace_rejects_gap():
    with pytest.raises(ParseError):
        UtilizationTrace([0, 2], [0.1, 0.2])


def test_synth_trace_shape():
    trace = synth_trace(TracePattern(minutes=1440, low=0.1, high=0.9))
    assert len(trace) == 1440
    assert trace.rho[0] == pytest.approx(0.1)
    assert trace.rho[720] == pytest.approx(0.9)


def test_synth_trace_surge():
    trace = synth_trace(TracePattern(minutes=100, low=0.1, high=0.1, period=100, surges=((40, 10, 0.7),)))
    assert np.all(trace.rho[40:50] == 0.7)
    assert trace.rho[50] == pytest.approx(0.1)


def test_email_store_trace_is_seeded():
    assert email_store_trace(300, seed=4) == email_store_trace(300, seed=4)
    trace = email_store_trace(300, seed=4)
    assert trace.rho.min() >= 0 and trace.rho.max() <= 1


def test_warp_follows_trace():
    trace = UtilizationTrace.from_values([0.2] * 30 + [0.6] * 30)
    arrivals, service = ArrivalSpec.exponential(1.0), ServiceSpec.exponential(2.0)
    stream = warp_to_trace(generate(arrivals, service, 20_000, seed=1), trace, base_rho=0.5)
    low = np.sum(stream.arrivals < 1800)
    high = np.sum((stream.arrivals >= 1800) & (stream.arrivals < 3600))
    assert high / low == pytest.approx(3.0, rel=0.1)


def test_trace_job_stream_covers_trace():
    trace = email_store_trace(120, seed=0)
    arrivals, service = workload_preset('dns').specs(rho=0.5)
    stream = trace_job_stream(trace, arrivals, service, seed=2)
    assert stream.arrivals[-1] > 110 * 60
    assert stream == trace_job_stream(trace, arrivals, service, seed=2)
