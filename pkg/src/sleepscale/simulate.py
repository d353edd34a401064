"""
Discrete-event simulation of a single FCFS server that scales its frequency and walks through a sequence of
delayed sleep states while idle.

An arrival that finds the server idle wakes it from whichever state it occupies at that instant (entry delays are
inclusive: idle for exactly tau_i means state i). Waking takes the state's latency, is charged at active power and
serves nothing; arrivals during a wake-up or a busy period queue. Before the first entry delay the server idles in
C0_idle/S0_idle at the policy frequency. State changes while idle are instantaneous and free.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import EmptyOutcomes, EmptyStream, RangeError, SleepScaleError
from .power import SleepSequence, active_power, combined_power
from .workload import effective_service_time


PRE_SLEEP = 'C0iS0i'
ACTIVE = 'active'
WAKEUP = 'wakeup'
ROW_COLUMNS = ['f', 'sleep_label', 'E_R', 'norm_E_R', 'E_P', 'p95', 'wakeups']


@dataclass(frozen=True)
class Policy:
    """
    An operating policy: DVFS frequency factor f plus the sleep sequence followed while idle. An empty sequence
    is DVFS only. idle_power overrides the pre-sleep idle power (C0_idle/S0_idle at f) when set.
    """
    f: float
    sleep: SleepSequence = field(default_factory=SleepSequence)
    idle_power: float = None

    def __post_init__(self):
        if not 0 < self.f <= 1:
            raise RangeError(f'Policy frequency factor {self.f} is outside (0, 1].')
        if not isinstance(self.sleep, SleepSequence):
            object.__setattr__(self, 'sleep', SleepSequence(tuple(self.sleep)))

    @property
    def sleep_label(self):
        return self.sleep.label

    @property
    def family(self):
        return self.sleep.family

    @property
    def label(self):
        return f'f={self.f:.4g}/{self.sleep.label}'

    @property
    def first_latency(self):
        return self.sleep[0].wakeup_latency if self.sleep else 0.0

    def pre_sleep_power(self, table):
        if self.idle_power is not None:
            return self.idle_power
        return combined_power(table, 'C0_idle', 'S0_idle', self.f)

    def at_frequency(self, table, f):
        """Same sleep states, re-evaluated at frequency f."""
        return Policy(f, self.sleep.at_frequency(table, f), self.idle_power)


class JobOutcome(NamedTuple):
    arrival: float
    start: float
    departure: float
    response: float
    woke_from: str


@dataclass(frozen=True, eq=False)
class JobOutcomes:
    """Per-job timing of one simulation run. start is when service begins (after any wake-up)."""
    arrival: np.ndarray
    start: np.ndarray
    departure: np.ndarray
    woke_from: tuple

    @property
    def response(self):
        return self.departure - self.arrival

    def __len__(self):
        return len(self.arrival)

    def __getitem__(self, i):
        return JobOutcome(float(self.arrival[i]), float(self.start[i]), float(self.departure[i]),
                          float(self.departure[i] - self.arrival[i]), self.woke_from[i])


@dataclass(frozen=True)
class SimResult:
    """
    Attributes
    ----------
    mean_response : float
        E[R], seconds.
    mean_power : float
        E[P], watts: total energy over the makespan, exactly the charged power when only one power is ever drawn.
    response_p95 : float
        Nearest-rank 95th percentile response time, seconds.
    normalized_mean_response : float
        mu * E[R].
    residency : dict
        Fraction of the makespan spent in "active" (serving), "wakeup", and each sleep state label that was
        actually occupied.
    wakeups : int
        Arrivals that found the server in a state with a non-zero wake-up latency.
    jobs : int
        Jobs included in the response statistics.
    energy : float
        Joules.
    makespan : float
        Seconds from time 0 to the last departure.
    deadline_miss : float
        Fraction of jobs with response >= the deadline, when one was given.
    """
    mean_response: float
    mean_power: float
    response_p95: float
    normalized_mean_response: float
    residency: dict
    wakeups: int
    jobs: int
    energy: float
    makespan: float
    deadline_miss: float = None
    outcomes: JobOutcomes = field(default=None, compare=False, repr=False)

    def to_dict(self):
        record = {'E_R': self.mean_response, 'norm_E_R': self.normalized_mean_response, 'E_P': self.mean_power,
                  'p95': self.response_p95, 'wakeups': self.wakeups, 'jobs': self.jobs, 'energy_J': self.energy,
                  'makespan_s': self.makespan, 'deadline_miss': self.deadline_miss}
        for label, share in self.residency.items():
            record[f'residency.{label}'] = share
        return record


def result_row(policy, result):
    """CSV row of a simulation: f, sleep_label, E_R, norm_E_R, E_P, p95, wakeups."""
    return {'f': policy.f, 'sleep_label': policy.sleep_label, 'E_R': result.mean_response,
            'norm_E_R': result.normalized_mean_response, 'E_P': result.mean_power, 'p95': result.response_p95,
            'wakeups': result.wakeups}


def result_record(policy, result):
    """Flat JSON object of a simulation: the CSV row followed by every other metric."""
    record = result_row(policy, result)
    record.update({k: v for k, v in result.to_dict().items() if k not in record})
    return record


def sleep_state_at(seq, idle_elapsed):
    """
    State occupied after idling for idle_elapsed seconds.

    Returns
    -------
    index : int or None
        Index of the deepest state whose entry delay is <= idle_elapsed, None while still in pre-sleep idle.
    wakeup_latency : float
        Seconds needed to return to active from there (0 from pre-sleep idle).
    """
    if idle_elapsed < 0:
        raise RangeError(f'Idle time must be >= 0, got {idle_elapsed}')
    k = bisect_right(seq.delays, idle_elapsed)
    if not k:
        return None, 0.0
    return k - 1, seq[k - 1].wakeup_latency


def percentile(outcomes, q):
    """
    Nearest-rank percentile of response times.

    Parameters
    ----------
    outcomes : JobOutcomes, SimResult or array-like
        Anything carrying response times. A SimResult must have been simulated with keep_outcomes=True.
    q : float
        Quantile in (0, 1).
    """
    if not 0 < q < 1:
        raise RangeError(f'Quantile must be within (0, 1), got {q}')
    if isinstance(outcomes, SimResult):
        outcomes = outcomes.outcomes
    responses = outcomes.response if isinstance(outcomes, JobOutcomes) else np.asarray(outcomes, dtype=float)
    if responses is None or not len(responses):
        raise EmptyOutcomes('Cannot take a percentile of no jobs.')

    n = len(responses)
    rank = min(max(math.ceil(q * n - 1e-9), 1), n)
    return float(np.partition(responses, rank - 1)[rank - 1])


def simulate(policy, stream, table, beta=1.0, mu=None, warmup=0, deadline=None, wakeup_model='deterministic',
             seed=0, keep_outcomes=False):
    """
    Runs one policy over a job stream.

    Parameters
    ----------
    policy : Policy
    stream : JobStream
    table : PowerTable
    beta : float
        CPU-bound fraction of each job's demand.
    mu : float, optional
        Full-speed service rate used to normalise the response time. Defaults to 1 / the stream's mean demand.
    warmup : int
        Leading jobs excluded from the response statistics (they still count for power).
    deadline : float, optional
        When given, SimResult.deadline_miss is the fraction of jobs with response >= deadline.
    wakeup_model : str
        "deterministic" charges every wake-up its state's latency; "exponential" draws it from an exponential
        distribution with that mean (seeded by `seed`).
    keep_outcomes : bool
        Attach per-job outcomes to the result.

    Returns
    -------
    SimResult
    """
    n = len(stream)
    if not n:
        raise EmptyStream('Cannot simulate an empty job stream.')
    if not 0 <= warmup < n:
        raise RangeError(f'Warm-up of {warmup} jobs leaves nothing to measure in a stream of {n} jobs.')
    if wakeup_model not in ('deterministic', 'exponential'):
        raise RangeError(f'Unknown wake-up model "{wakeup_model}". It should be deterministic or exponential')

    services = effective_service_time(stream.demands, policy.f, beta)
    load = float(services.sum()) / float(stream.arrivals[-1]) if stream.arrivals[-1] > 0 else math.inf
    if load >= 1:
        logger.warning(f'Policy {policy.label} is overloaded on this stream (effective utilization {load:.3f}); '
                       f'the queue will grow without bound')

    seq = policy.sleep
    delays, latencies = seq.delays, seq.latencies
    if wakeup_model == 'exponential':
        scale = np.random.default_rng(seed).exponential(1.0, n).tolist()
    else:
        scale = None

    arrivals = stream.arrivals.tolist()
    service = services.tolist()
    departures = [0.0] * n
    idle = [0.0] * n
    paid = [0.0] * n
    woke = [-1] * n

    free = 0.0
    for j in range(n):
        a = arrivals[j]
        if a >= free:
            gap = a - free
            idle[j] = gap
            k = bisect_right(delays, gap)
            if k:
                w = latencies[k - 1] if scale is None else latencies[k - 1] * scale[j]
                woke[j] = k - 1
                paid[j] = w
                a += w
            free = a + service[j]
        else:
            free += service[j]
        departures[j] = free

    departure = np.array(departures)
    gaps = np.array(idle)
    responses = departure - stream.arrivals
    measured = responses[warmup:]

    makespan = float(departure[-1])
    busy = float(services.sum())
    waking = float(np.sum(paid))

    # pre-sleep idle first, then each state over [tau_i, tau_{i+1}) of every idle gap
    times = [float(np.minimum(gaps, delays[0]).sum()) if seq else float(gaps.sum())]
    powers = [policy.pre_sleep_power(table)]
    bounds = delays[1:] + [math.inf]
    for state, low, high in zip(seq, delays, bounds):
        times.append(float(np.clip(gaps - low, 0.0, high - low).sum()))
        powers.append(state.power)

    energy = active_power(table, policy.f) * (busy + waking)
    for t, p in zip(times, powers):
        energy += p * t
    charged = {active_power(table, policy.f)} | {p for t, p in zip(times, powers) if t > 0}
    mean_power = charged.pop() if len(charged) == 1 else energy / makespan

    residency = {ACTIVE: busy / makespan, WAKEUP: waking / makespan}
    occupied = {}
    for label, t in zip([PRE_SLEEP] + [s.label for s in seq], times):
        occupied[label] = occupied.get(label, 0.0) + t
    for label, t in occupied.items():
        if t > 0:
            residency[label] = t / makespan

    woke_index = np.array(woke)
    has_latency = np.array([w > 0 for w in latencies] + [False])
    wakeups = int(np.sum(has_latency[woke_index]))

    mu = mu or 1.0 / stream.mean_demand
    mean_response = float(measured.mean())
    outcomes = None
    if keep_outcomes:
        labels = [s.label for s in seq]
        woke_from = tuple(labels[k] if k >= 0 else (PRE_SLEEP if g_idle else None)
                          for k, g_idle in zip(woke, _idle_flags(stream.arrivals, departure)))
        outcomes = JobOutcomes(stream.arrivals, departure - np.array(service), departure, woke_from)

    return SimResult(mean_response=mean_response,
                     mean_power=mean_power,
                     response_p95=percentile(measured, 0.95),
                     normalized_mean_response=mu * mean_response,
                     residency=residency,
                     wakeups=wakeups,
                     jobs=len(measured),
                     energy=energy,
                     makespan=makespan,
                     deadline_miss=None if deadline is None else float(np.mean(measured >= deadline)),
                     outcomes=outcomes)


def _idle_flags(arrivals, departure):
    """True for jobs that found the server idle (arrived at or after the previous departure)."""
    previous = np.concatenate([[0.0], departure[:-1]])
    return (arrivals >= previous).tolist()


class SweepEntry(NamedTuple):
    policy: Policy
    result: SimResult
    error: Exception

    @property
    def ok(self):
        return self.error is None


_worker_inputs = {}


def _init_worker(stream, table, options):
    _worker_inputs.update(stream=stream, table=table, options=options)


def _evaluate(policy, stream=None, table=None, options=None):
    stream = stream if stream is not None else _worker_inputs['stream']
    table = table if table is not None else _worker_inputs['table']
    options = options if options is not None else _worker_inputs['options']
    try:
        return SweepEntry(policy, simulate(policy, stream, table, **options), None)
    except SleepScaleError as e:
        logger.debug(f'Policy {policy.label} failed: {e}')
        return SweepEntry(policy, None, e)


def sweep(policies, stream, table, beta=1.0, jobs=1, **options):
    """
    Simulates every policy on the same stream. Entries come back in input order whatever the parallelism; a
    policy that fails carries its exception in SweepEntry.error instead of aborting the sweep.

    Parameters
    ----------
    policies : iterable of Policy
    stream : JobStream
    table : PowerTable
    beta : float
    jobs : int
        Worker processes. 1 evaluates in-process.
    **options
        Passed through to simulate (mu, warmup, deadline, wakeup_model, seed).

    Returns
    -------
    list of SweepEntry
    """
    policies = list(policies)
    options = dict(options, beta=beta)
    logger.info(f'Sweeping {len(policies)} policies over {len(stream)} jobs', extra={'progress': 0})

    if jobs <= 1 or len(policies) < 2:
        return [_evaluate(policy, stream, table, options) for policy in policies]

    chunk = max(1, len(policies) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(stream, table, options)) as pool:
        return list(pool.map(_evaluate, policies, chunksize=chunk))


def results_frame(entries):
    """Sweep entries as a DataFrame with the documented row columns; failed policies are left out."""
    rows = [result_row(e.policy, e.result) for e in entries if e.ok]
    return pd.DataFrame(rows, columns=ROW_COLUMNS)
