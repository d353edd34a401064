"""
Cross-module checks: the simulator against the closed forms, the DNS operating point, and the policy choices that
follow from the power model.
"""
import math
import statistics
import time

import pytest

from sleepscale.analytic import MM1SleepParams, evaluate, tail_prob
from sleepscale.policy import PolicyGrid, QoSConstraint, SleepTemplate, bowl_minimum, frontier, select
from sleepscale.power import SleepSequence, active_power, sleep_catalog
from sleepscale.simulate import Policy, simulate
from sleepscale.workload import ArrivalSpec, ServiceSpec, generate, workload_preset


SLEEP_CONFIGS = [
    (),
    (('C1S0i', 0.0),),
    (('C3S0i', 0.0),),
    (('C6S0i', 0.0),),
    (('C6S3', 0.0),),
    (('C0iS0i', 0.0), ('C6S3', 1.0)),
    (('C6S0i', 0.0), ('C6S3', 0.5)),
]
OPERATING_POINTS = [(0.1, 0.6), (0.1, 0.8), (0.1, 1.0), (0.3, 0.6), (0.3, 0.8), (0.3, 1.0), (0.5, 0.8),
                    (0.5, 1.0)]


@pytest.mark.parametrize('config', SLEEP_CONFIGS, ids=lambda c: '>'.join(l for l, _ in c) or 'none')
@pytest.mark.parametrize('lam, f', OPERATING_POINTS)
def test_simulator_matches_closed_form(table, lam, f, config):
    catalog = sleep_catalog(table, f_idle=f)
    seq = SleepSequence(tuple(catalog[label].with_delay(delay) for label, delay in config))
    arrivals, service = ArrivalSpec.exponential(lam), ServiceSpec.exponential(1.0)
    stream = generate(arrivals, service, 100_000, seed=17)

    expected = evaluate(MM1SleepParams.from_specs(arrivals, service, f, seq, table, p_pre_idle='idle'))
    result = simulate(Policy(f, seq), stream, table, mu=1.0)
    assert result.mean_response == pytest.approx(expected['E_R'], rel=0.03)
    assert result.mean_power == pytest.approx(expected['E_P'], rel=0.03)


@pytest.mark.parametrize('d', [1.0, 2.0, 4.0, 6.0, 8.0])
def test_tail_matches_exceedance(table, d):
    lam, mu, w = 0.3, 1.0, 2.0
    catalog = sleep_catalog(table, {'C6S3': w})
    stream = generate(ArrivalSpec.exponential(lam), ServiceSpec.exponential(mu), 1_000_000, seed=23)
    result = simulate(Policy(1.0, SleepSequence((catalog['C6S3'],))), stream, table, deadline=d,
                      wakeup_model='exponential', seed=29)
    assert result.deadline_miss == pytest.approx(tail_prob(lam, mu, 1.0, w, d), rel=0.05)


@pytest.fixture(scope='module')
def dns_frontier(table):
    arrivals, service = workload_preset('dns').specs(rho=0.1)
    stream = generate(arrivals, service, 50_000, seed=31)
    grid = PolicyGrid(frequencies=tuple(round(0.30 + 0.01 * k, 2) for k in range(71)),
                      sleep_options=(SleepTemplate.immediate('C6S3'), SleepTemplate.immediate('C6S0i'),
                                     SleepTemplate.immediate('C3S0i'), SleepTemplate.immediate('C1S0i')))
    return frontier(grid, stream, table, mu=service.mu), arrivals, service


def test_dns_operating_point(table, dns_frontier):
    points, arrivals, service = dns_frontier
    best = bowl_minimum(points, 'C6S3')
    assert 0.37 <= best.policy.f <= 0.47

    f = best.policy.f
    seq = SleepSequence((sleep_catalog(table, f_idle=f)['C6S3'],))
    expected = evaluate(MM1SleepParams.from_specs(arrivals, service, f, seq, table))
    assert best.mean_power == pytest.approx(expected['E_P'], rel=0.03)


def test_race_to_halt_penalty(dns_frontier):
    points = dns_frontier[0]
    best = bowl_minimum(points, 'C6S3')
    race = next(p for p in points if p.policy.f == 1.0 and p.policy.sleep_label == 'C6S3')
    assert race.mean_power >= 1.35 * best.mean_power


def test_baseline_budget_identity(table):
    stream = generate(ArrivalSpec.exponential(0.8), ServiceSpec.exponential(1.0), 400_000, seed=37)
    result = simulate(Policy(1.0), stream, table, mu=1.0, warmup=1000)
    assert result.normalized_mean_response == pytest.approx(5.0, rel=0.05)


def test_delayed_pair_endpoints(table, dns_stream):
    catalog = sleep_catalog(table, f_idle=0.5)
    shallow, deep = catalog['C0iS0i'], catalog['C6S3']

    def run(*states):
        return simulate(Policy(0.5, SleepSequence(states)), dns_stream, table)

    assert run(shallow, deep.with_delay(0.0)) == run(deep)
    assert run(shallow, deep.with_delay(1e9)) == run(shallow)


@pytest.mark.parametrize('workload, family', [('dns', 'C6S0i'), ('google', 'C3S0i')])
def test_sleep_state_choice_at_high_load(table, workload, family):
    arrivals, service = workload_preset(workload).specs(rho=0.8)
    stream = generate(arrivals, service, 20_000, seed=41)
    grid = PolicyGrid(sleep_options=tuple(SleepTemplate.immediate(l) for l in table.labels))
    qos = QoSConstraint('mean', budget=12.0, mu=service.mu)
    choice = select(grid, stream, table, qos)
    assert choice.feasible
    assert choice.policy.family == family


@pytest.mark.parametrize('budget', [2.0, 5.0, 12.0])
def test_memory_bound_work_runs_slowest(table, budget):
    arrivals, service = workload_preset('dns').specs(rho=0.3, beta=0.0)
    stream = generate(arrivals, service, 5_000, seed=43)
    grid = PolicyGrid(beta=0.0, step=0.05, sleep_options=(SleepTemplate.immediate('C0iS0i'),
                                                          SleepTemplate.immediate('C6S0i')))
    choice = select(grid, stream, table, QoSConstraint('mean', budget=budget, mu=service.mu))
    assert choice.feasible
    assert choice.policy.f == min(grid.frequencies_for(stream))


def test_policy_evaluation_speed(table, catalog, dns_stream):
    policy = Policy(0.5, SleepSequence((catalog['C0iS0i'], catalog['C6S3'].with_delay(2.0))))
    timings = []
    for _ in range(15):
        start = time.perf_counter()
        simulate(policy, dns_stream, table)
        timings.append(time.perf_counter() - start)
    assert statistics.median(timings) < 0.01
