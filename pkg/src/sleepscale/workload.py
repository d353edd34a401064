"""
Job streams and utilization traces: generation from parametric or logged distributions, frequency-dependent
service times, rescaling to a target utilization and synthetic minute-level traces.

Utilization of a stream is mean_demand / mean_gap, i.e. lambda/mu at full speed. Trace and job-log files are read
and written by data.py.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ParseError, RangeError, UnstableTarget


KINDS = ('exponential', 'empirical', 'lognormal')


@dataclass(frozen=True)
class _Distribution:
    kind: str = 'exponential'
    rate: float = None
    mean: float = None
    cv: float = None
    values: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RangeError(f'Unknown distribution kind "{self.kind}". It should be one of [{", ".join(KINDS)}]')
        if self.kind == 'exponential' and not (self.rate is not None and self.rate > 0):
            raise RangeError(f'Exponential rate must be > 0, got {self.rate}')
        if self.kind == 'lognormal':
            if not (self.mean is not None and self.mean > 0):
                raise RangeError(f'Lognormal mean must be > 0, got {self.mean}')
            if not (self.cv is not None and self.cv > 0):
                raise RangeError(f'Lognormal coefficient of variation must be > 0, got {self.cv}')
        if self.kind == 'empirical':
            values = tuple(float(v) for v in (self.values or ()))
            if not values:
                raise RangeError('Empirical distribution needs at least one logged value.')
            if min(values) < 0:
                raise RangeError(f'Empirical log contains a negative value: {min(values)}')
            object.__setattr__(self, 'values', values)

    @property
    def mean_value(self):
        if self.kind == 'exponential':
            return 1.0 / self.rate
        if self.kind == 'lognormal':
            return self.mean
        return float(np.mean(self.values))

    @property
    def is_exponential(self):
        return self.kind == 'exponential'

    def sample(self, rng, n, bootstrap=False):
        """
        Draws n values. Empirical logs are replayed in order (cycling when n exceeds the log) unless bootstrap is
        set, in which case they are resampled with replacement.
        """
        if self.kind == 'exponential':
            return rng.exponential(1.0 / self.rate, n)
        if self.kind == 'lognormal':
            sigma2 = math.log1p(self.cv ** 2)
            return rng.lognormal(math.log(self.mean) - sigma2 / 2, math.sqrt(sigma2), n)
        values = np.asarray(self.values, dtype=float)
        if bootstrap:
            return rng.choice(values, n, replace=True)
        return np.resize(values, n)


@dataclass(frozen=True)
class ArrivalSpec(_Distribution):
    """Inter-arrival gap distribution, in seconds."""

    @classmethod
    def exponential(cls, rate):
        return cls(kind='exponential', rate=float(rate))

    @classmethod
    def lognormal(cls, mean, cv):
        return cls(kind='lognormal', mean=float(mean), cv=float(cv))

    @classmethod
    def empirical(cls, gaps):
        return cls(kind='empirical', values=tuple(gaps))


@dataclass(frozen=True)
class ServiceSpec(_Distribution):
    """
    Service demand distribution at full speed, in seconds. cpu_bound_fraction (beta) is the share of a job that
    scales with frequency; the rest is memory-bound and does not.
    """
    cpu_bound_fraction: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.cpu_bound_fraction <= 1:
            raise RangeError(f'CPU-bound fraction must be within [0, 1], got {self.cpu_bound_fraction}')
        if self.kind == 'empirical' and min(self.values) <= 0:
            raise RangeError('Logged service demands must all be > 0.')

    @property
    def mu(self):
        return 1.0 / self.mean_value

    @classmethod
    def exponential(cls, rate, cpu_bound_fraction=1.0):
        return cls(kind='exponential', rate=float(rate), cpu_bound_fraction=cpu_bound_fraction)

    @classmethod
    def lognormal(cls, mean, cv, cpu_bound_fraction=1.0):
        return cls(kind='lognormal', mean=float(mean), cv=float(cv), cpu_bound_fraction=cpu_bound_fraction)

    @classmethod
    def empirical(cls, demands, cpu_bound_fraction=1.0):
        return cls(kind='empirical', values=tuple(demands), cpu_bound_fraction=cpu_bound_fraction)


@dataclass(frozen=True)
class WorkloadPreset:
    """Summary statistics of a logged workload: means in seconds and coefficients of variation."""
    name: str
    gap_mean: float
    gap_cv: float
    service_mean: float
    service_cv: float

    @property
    def mu(self):
        return 1.0 / self.service_mean

    def specs(self, rho=None, family='exponential', beta=1.0):
        """
        Arrival and service specs for this workload. With rho given, the arrival rate is rho * mu (the service
        distribution is what characterises the workload; utilization comes from the trace).

        Returns
        -------
        arrivals : ArrivalSpec
        service : ServiceSpec
        """
        gap_mean = self.gap_mean if rho is None else self.service_mean / rho
        if rho is not None and rho <= 0:
            raise RangeError(f'Utilization must be > 0, got {rho}')

        if family == 'exponential':
            return ArrivalSpec.exponential(1.0 / gap_mean), ServiceSpec.exponential(self.mu, beta)
        if family == 'lognormal':
            arrivals = (ArrivalSpec.exponential(1.0 / gap_mean) if self.gap_cv == 1.0
                        else ArrivalSpec.lognormal(gap_mean, self.gap_cv))
            service = (ServiceSpec.exponential(self.mu, beta) if self.service_cv == 1.0
                       else ServiceSpec.lognormal(self.service_mean, self.service_cv, beta))
            return arrivals, service
        raise RangeError(f'Unknown workload family "{family}". It should be exponential or lognormal')


WORKLOADS = {
    'dns': WorkloadPreset('dns', 1.1, 1.1, 0.194, 1.0),
    'mail': WorkloadPreset('mail', 0.206, 1.9, 0.092, 3.6),
    'google': WorkloadPreset('google', 319e-6, 1.2, 4.2e-3, 1.1),
}


def workload_preset(name):
    try:
        return WORKLOADS[name.lower()]
    except KeyError:
        raise RangeError(f'Unknown workload "{name}". It should be one of [{", ".join(WORKLOADS)}]')


def _frozen(values):
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class JobStream:
    """
    Jobs in arrival order: absolute arrival instants (seconds from 0) and service demands at full speed.
    """
    arrivals: np.ndarray
    demands: np.ndarray
    seed: int = field(default=None)

    def __post_init__(self):
        arrivals, demands = _frozen(self.arrivals), _frozen(self.demands)
        if arrivals.shape != demands.shape or arrivals.ndim != 1:
            raise RangeError(f'Job stream needs one demand per arrival, got {arrivals.shape} and {demands.shape}')
        if len(arrivals) and (arrivals[0] < 0 or np.any(np.diff(arrivals) < 0)):
            raise RangeError('Job stream arrival times must be non-negative and non-decreasing.')
        if len(demands) and np.any(demands <= 0):
            raise RangeError('Job stream demands must all be > 0.')
        object.__setattr__(self, 'arrivals', arrivals)
        object.__setattr__(self, 'demands', demands)

    def __len__(self):
        return len(self.arrivals)

    def __eq__(self, other):
        if not isinstance(other, JobStream):
            return NotImplemented
        return (np.array_equal(self.arrivals, other.arrivals) and np.array_equal(self.demands, other.demands)
                and self.seed == other.seed)

    @classmethod
    def from_gaps(cls, gaps, demands, seed=None):
        return cls(np.cumsum(np.asarray(gaps, dtype=float)), demands, seed)

    @property
    def gaps(self):
        """Inter-arrival gaps, the first measured from time 0."""
        return np.diff(self.arrivals, prepend=0.0)

    @property
    def mean_gap(self):
        return float(self.arrivals[-1]) / len(self) if len(self) else math.nan

    @property
    def mean_demand(self):
        return float(np.mean(self.demands)) if len(self) else math.nan

    @property
    def utilization(self):
        if not len(self) or self.arrivals[-1] == 0:
            return math.inf
        return self.mean_demand / self.mean_gap

    def to_frame(self):
        return pd.DataFrame({'arrival_s': self.arrivals, 'demand_s': self.demands})


def generate(arrivals, service, n, seed=0, bootstrap=False):
    """
    Draws a job stream. Arrival gaps and service demands come from two independent child streams of
    numpy.random.SeedSequence(seed), so changing one distribution never perturbs the other's draws.

    Parameters
    ----------
    arrivals : ArrivalSpec
    service : ServiceSpec
    n : int
        Number of jobs, at least 1.
    seed : int
    bootstrap : bool
        Resample empirical logs with replacement instead of replaying them in order.

    Returns
    -------
    JobStream
    """
    if n < 1:
        raise RangeError(f'Number of jobs must be at least 1, got {n}')
    gap_seq, demand_seq = np.random.SeedSequence(seed).spawn(2)
    gaps = arrivals.sample(np.random.default_rng(gap_seq), n, bootstrap)
    demands = service.sample(np.random.default_rng(demand_seq), n, bootstrap)
    return JobStream.from_gaps(gaps, demands, seed)


def effective_service_time(demand, f, beta=1.0):
    """
    Service time at frequency factor f of a job with full-speed demand `demand`: demand * (beta/f + 1 - beta).
    Accepts scalars or arrays.
    """
    if not 0 < f <= 1:
        raise RangeError(f'Frequency factor {f} is outside (0, 1].')
    if beta == 1:
        return demand / f
    if beta == 0:
        return demand * 1.0
    return demand * (beta / f + (1.0 - beta))


def rescale_to_utilization(stream, target_rho, mu=None):
    """
    Stretches or compresses every inter-arrival gap so the stream runs at target_rho. Demands are untouched.

    Parameters
    ----------
    stream : JobStream
    target_rho : float
        Target utilization, in (0, 1).
    mu : float, optional
        Nominal full-speed service rate. When given, the stream's current utilization is measured against 1/mu
        instead of its own sample mean demand.

    Returns
    -------
    JobStream
    """
    if target_rho >= 1:
        raise UnstableTarget(f'Target utilization {target_rho} would make the server unstable. It should be < 1')
    if target_rho <= 0:
        raise RangeError(f'Target utilization must be > 0, got {target_rho}')
    if not len(stream):
        raise RangeError('Cannot rescale an empty job stream.')

    mean_demand = 1.0 / mu if mu else stream.mean_demand
    current = mean_demand / stream.mean_gap
    ratio = current / target_rho
    logger.debug(f'Rescaling {len(stream)} jobs from utilization {current:.4f} to {target_rho:.4f} '
                 f'(gap multiplier {ratio:.4f})')
    return JobStream(stream.arrivals * ratio, stream.demands, stream.seed)


@dataclass(frozen=True, eq=False)
class UtilizationTrace:
    """Minute-granularity utilization samples with contiguous minute indices."""
    minutes: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        minutes = np.array(self.minutes, dtype=np.int64)
        rho = _frozen(self.rho)
        minutes.setflags(write=False)
        if minutes.shape != rho.shape or minutes.ndim != 1:
            raise ParseError('A trace needs one utilization per minute.')
        steps = np.diff(minutes)
        if np.any(steps != 1):
            bad = int(np.argmax(steps != 1)) + 1
            raise ParseError(f'Minute indices are not contiguous: {minutes[bad - 1]} is followed by {minutes[bad]}',
                             line=bad + 1)
        outside = (rho < 0) | (rho > 1) | np.isnan(rho)
        if np.any(outside):
            bad = int(np.argmax(outside))
            raise RangeError(f'Utilization at minute {minutes[bad]} is outside [0, 1]: {rho[bad]}')
        object.__setattr__(self, 'minutes', minutes)
        object.__setattr__(self, 'rho', rho)

    def __len__(self):
        return len(self.rho)

    def __eq__(self, other):
        if not isinstance(other, UtilizationTrace):
            return NotImplemented
        return np.array_equal(self.minutes, other.minutes) and np.array_equal(self.rho, other.rho)

    @classmethod
    def from_values(cls, rho, start_minute=0):
        return cls(np.arange(start_minute, start_minute + len(rho)), rho)

    def mean(self, start=0, stop=None):
        window = self.rho[start:stop]
        return float(window.mean()) if len(window) else math.nan

    def to_frame(self):
        return pd.DataFrame({'minute': self.minutes, 'rho': self.rho})


@dataclass(frozen=True)
class TracePattern:
    """
    Synthetic trace recipe: a sinusoid between low and high (low at minute 0 when phase is 0), Gaussian noise,
    and rectangular surges given as (start minute, duration in minutes, level).
    """
    minutes: int = 1440
    low: float = 0.1
    high: float = 0.9
    period: float = 1440.0
    phase: float = 0.0
    noise: float = 0.0
    surges: tuple = ()
    seed: int = 0


def synth_trace(pattern):
    t = np.arange(pattern.minutes, dtype=float)
    rho = pattern.low + (pattern.high - pattern.low) * (1 - np.cos(2 * np.pi * (t + pattern.phase)
                                                                   / pattern.period)) / 2
    if pattern.noise:
        rho = rho + np.random.default_rng(pattern.seed).normal(0.0, pattern.noise, pattern.minutes)
    for start, duration, level in pattern.surges:
        window = slice(int(start), int(start) + int(duration))
        rho[window] = np.maximum(rho[window], level)
    return UtilizationTrace.from_values(np.clip(rho, 0.0, 1.0))


def email_store_trace(minutes=1080, seed=0, low=0.1, high=0.9, noise=0.02):
    """
    Email-store-like day: one diurnal swing between low and high over the trace plus two short maintenance
    surges.
    """
    surges = ((int(minutes * 0.3), max(1, minutes // 50), min(0.85, high)),
              (int(minutes * 0.7), max(1, minutes // 36), high))
    return synth_trace(TracePattern(minutes=minutes, low=low, high=high, period=minutes * 4 / 3, noise=noise,
                                    surges=surges, seed=seed))


def warp_to_trace(stream, trace, base_rho=None):
    """
    Maps a stationary job stream onto a time-varying trace: within minute m the stream's gaps are scaled by
    base_rho / rho(m), so minute m runs at utilization rho(m). Jobs that fall past the end of the trace are
    dropped.

    Parameters
    ----------
    stream : JobStream
    trace : UtilizationTrace
    base_rho : float, optional
        Utilization the stream runs at. Defaults to the stream's own sample utilization.

    Returns
    -------
    JobStream
        Arrivals in seconds from the start of the trace's first minute.
    """
    if base_rho is None:
        base_rho = stream.utilization
    rho = np.maximum(trace.rho, 1e-9)
    virtual = np.concatenate([[0.0], np.cumsum(60.0 * rho / base_rho)])
    real = 60.0 * np.arange(len(trace) + 1, dtype=float)

    keep = stream.arrivals < virtual[-1]
    arrivals = np.interp(stream.arrivals[keep], virtual, real)
    return JobStream(arrivals, stream.demands[keep], stream.seed)


def trace_job_stream(trace, arrivals, service, seed=0):
    """
    The true job stream behind a trace: a stationary stream drawn from (arrivals, service) long enough to cover
    the whole trace, warped to follow it. Same inputs give the same stream, so strategies can be paired.
    """
    base_rho = service.mean_value / arrivals.mean_value
    horizon = float(np.sum(60.0 * np.maximum(trace.rho, 1e-9) / base_rho))
    n = int(1.2 * horizon / arrivals.mean_value) + 100

    stream = generate(arrivals, service, n, seed)
    while stream.arrivals[-1] < horizon:
        n *= 2
        stream = generate(arrivals, service, n, seed)
    logger.info(f'Generated {len(stream)} base jobs to cover a {len(trace)}-minute trace')
    return warp_to_trace(stream, trace, base_rho=base_rho)
