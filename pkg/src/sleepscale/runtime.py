"""
The epoch loop. At the start of every T-minute epoch: predict the utilization, rescale a job log to it, select a
policy, over-provision its frequency, then serve the epoch's real arrivals under that policy. The server state
(queue, in-flight wake-up, idle time) carries over epoch boundaries.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
import re
from bisect import bisect_right
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import PowerTableError, RangeError, TraceTooShort, UnknownStrategy
from .policy import DEFAULT_EVAL_JOBS, PolicyGrid, QoSConstraint, SleepTemplate, select
from .power import SleepSequence, active_power, sleep_catalog
from .predict import Predictor
from .simulate import ACTIVE, PRE_SLEEP, WAKEUP, Policy
from .workload import JobStream, effective_service_time, generate, rescale_to_utilization, trace_job_stream


STRATEGY_KINDS = ('SS', 'SS_fixed', 'DVFS', 'R2H')
SHORTHANDS = {'C1': 'C1S0i', 'C3': 'C3S0i', 'C6': 'C6S0i'}
RHO_LIMITS = (0.01, 0.99)


@dataclass(frozen=True)
class Strategy:
    kind: str = 'SS'
    state: str = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise UnknownStrategy(f'Unknown strategy "{self.kind}". It should be one of '
                                  f'[{", ".join(STRATEGY_KINDS)}]')
        if self.kind in ('SS_fixed', 'R2H') and not self.state:
            raise UnknownStrategy(f'Strategy {self.kind} needs a sleep state.')

    @property
    def name(self):
        if self.kind == 'SS_fixed':
            return f'SS:{self.state}'
        if self.kind == 'R2H':
            return f'R2H:{self.state}'
        return self.kind

    @property
    def predicts(self):
        return self.kind != 'R2H'


def parse_strategy(text):
    """
    "SS", "SS:<state>", "DVFS" or "R2H:<state>". C1, C3 and C6 stand for C1S0i, C3S0i and C6S0i; full labels are
    accepted as is. Parentheses work too: "R2H(C3)".
    """
    match = re.fullmatch(r'\s*([A-Za-z0-9]+)\s*(?:[:(]\s*([A-Za-z0-9]+)\s*\)?)?\s*', text or '')
    if not match:
        raise UnknownStrategy(f'Could not read the strategy "{text}". It should look like SS, SS:C3, DVFS or R2H:C6')
    kind, state = match.group(1).upper(), match.group(2)
    if state:
        state = SHORTHANDS.get(state.upper(), state)
    if kind == 'SS' and state:
        return Strategy('SS_fixed', state)
    if kind == 'DVFS' and state:
        raise UnknownStrategy(f'DVFS does not take a sleep state, got "{text}"')
    return Strategy(kind, state)


def over_provision(f_selected, last_delay, budget_delay, alpha):
    """
    Guard-band boost: when the previous epoch's mean delay was under budget (or unknown), raise the frequency by
    a factor 1 + alpha, capped at 1. Otherwise keep it.
    """
    if not 0 < f_selected <= 1:
        raise RangeError(f'Frequency factor {f_selected} is outside (0, 1].')
    if alpha < 0:
        raise RangeError(f'Over-provisioning factor must be >= 0, got {alpha}')
    if last_delay is None or last_delay < budget_delay:
        return min(1.0, f_selected * (1.0 + alpha))
    return f_selected


@dataclass(frozen=True)
class EpochConfig:
    """
    Attributes
    ----------
    T : int
        Minutes per epoch.
    alpha : float
        Over-provisioning factor.
    predictor : str
    predictor_params : dict
    qos : QoSConstraint
    grid : PolicyGrid
    eval_jobs : int
        Jobs in the stream every candidate is evaluated on (also the log window).
    log_source : str
        "log" rescales the last observed jobs, "synthetic" one fixed stream drawn from the base workload.
    min_log_jobs : int
        Below this many observed jobs the synthetic stream is used.
    horizon : str
        "first_minute" uses the prediction for the epoch's first minute for the whole epoch; "epoch_mean" iterates
        the predictor over the epoch and uses the mean.
    jobs : int
        Worker processes for candidate evaluation.
    """
    T: int = 5
    alpha: float = 0.35
    predictor: str = 'lms_cusum'
    predictor_params: dict = field(default_factory=dict, compare=False)
    qos: QoSConstraint = field(default_factory=lambda: QoSConstraint('mean', budget=5.0, rho_b=0.8))
    grid: PolicyGrid = field(default_factory=PolicyGrid)
    eval_jobs: int = DEFAULT_EVAL_JOBS
    log_source: str = 'log'
    min_log_jobs: int = 50
    horizon: str = 'first_minute'
    jobs: int = 1

    def __post_init__(self):
        if self.T < 1:
            raise RangeError(f'Epoch length must be at least 1 minute, got {self.T}')
        if self.alpha < 0:
            raise RangeError(f'Over-provisioning factor must be >= 0, got {self.alpha}')
        if self.log_source not in ('log', 'synthetic'):
            raise RangeError(f'Unknown log source "{self.log_source}". It should be log or synthetic')
        if self.horizon not in ('first_minute', 'epoch_mean'):
            raise RangeError(f'Unknown prediction horizon "{self.horizon}". It should be first_minute or '
                             f'epoch_mean')
        if self.eval_jobs < 1:
            raise RangeError(f'Evaluation stream needs at least 1 job, got {self.eval_jobs}')


@dataclass(frozen=True)
class EpochReport:
    index: int
    start_minute: int
    predicted_rho: float
    realized_rho: float
    policy: Policy
    f_selected: float
    f_applied: float
    feasible: bool
    mean_response: float
    normalized_response: float
    mean_power: float
    jobs_completed: int
    carried_queue: int
    residency: dict = field(default_factory=dict, compare=False)

    def to_row(self):
        return {'epoch': self.index, 'start_minute': self.start_minute, 'predicted_rho': self.predicted_rho,
                'realized_rho': self.realized_rho, 'sleep_label': self.policy.sleep_label,
                'f_selected': self.f_selected, 'f_applied': self.f_applied, 'feasible': self.feasible,
                'E_R': self.mean_response, 'norm_E_R': self.normalized_response, 'E_P': self.mean_power,
                'jobs_completed': self.jobs_completed, 'carried_queue': self.carried_queue}


def reports_frame(reports):
    return pd.DataFrame([r.to_row() for r in reports])


@dataclass(frozen=True)
class RunSummary:
    strategy: str
    epochs: int
    jobs: int
    energy: float
    duration: float
    mean_power: float
    mean_response: float
    normalized_response: float
    deadline_miss: float
    meets_budget: bool
    residency: dict
    families: dict

    def to_dict(self):
        return {'strategy': self.strategy, 'epochs': self.epochs, 'jobs': self.jobs, 'energy_J': self.energy,
                'duration_s': self.duration, 'E_P': self.mean_power, 'E_R': self.mean_response,
                'norm_E_R': self.normalized_response, 'deadline_miss': self.deadline_miss,
                'meets_budget': self.meets_budget, 'residency': dict(self.residency),
                'families': dict(self.families)}


class _Server:
    """
    FCFS server replayed epoch by epoch. A job is served at the frequency of the epoch its service starts in; an
    idle period follows the sleep sequence of the policy in force when the server went idle. Time and energy are
    charged to the epochs they fall in; anything past the last boundary goes to the last epoch.
    """

    def __init__(self, stream, table, beta, epoch_seconds, n_epochs):
        self.arrivals = stream.arrivals
        self.demands = stream.demands
        self.table = table
        self.beta = beta
        self.length = epoch_seconds
        self.last = n_epochs - 1

        self.free = 0.0
        self.next = 0
        self.woken_start = None
        self.policies = []
        self.departures = np.full(len(stream), np.nan)
        self.energy = np.zeros(n_epochs)
        self.time = [defaultdict(float) for _ in range(n_epochs)]
        self.response_sum = np.zeros(n_epochs)
        self.response_count = np.zeros(n_epochs, dtype=np.int64)

    def epoch_of(self, t):
        return min(int(t // self.length), self.last)

    def _charge(self, start, end, power, label):
        while start < end:
            e = self.epoch_of(start)
            stop = end if e == self.last else min(end, (e + 1) * self.length)
            self.energy[e] += power * (stop - start)
            self.time[e][label] += stop - start
            start = stop

    def _idle(self, start, end, wake=True):
        """Charges the idle period [start, end) and returns the wake-up latency owed at `end`."""
        policy = self.policies[self.epoch_of(start)]
        seq = policy.sleep
        delays = seq.delays
        first = delays[0] if seq else math.inf
        self._charge(start, min(end, start + first), policy.pre_sleep_power(self.table), PRE_SLEEP)
        for i, state in enumerate(seq):
            high = start + delays[i + 1] if i + 1 < len(seq) else math.inf
            self._charge(start + delays[i], min(end, high), state.power, state.label)
        if not wake:
            return 0.0

        k = bisect_right(delays, end - start)
        latency = seq[k - 1].wakeup_latency if k else 0.0
        if latency > 0:
            self._charge(end, end + latency, active_power(self.table, policy.f), WAKEUP)
        return latency

    def run_epoch(self, policy, t1):
        """Serves every job that can start before t1 under `policy`."""
        self.policies.append(policy)
        power = active_power(self.table, policy.f)
        n = len(self.arrivals)
        while self.next < n:
            j = self.next
            a = float(self.arrivals[j])
            if a >= t1:
                break
            if self.woken_start is not None:
                start = self.woken_start
            elif a >= self.free:
                start = a + self._idle(self.free, a)
                self.woken_start = start
            else:
                start = self.free
            if start >= t1:
                break

            self.woken_start = None
            finish = start + float(effective_service_time(self.demands[j], policy.f, self.beta))
            self._charge(start, finish, power, ACTIVE)
            self.free = finish
            self.departures[j] = finish
            e = self.epoch_of(finish)
            self.response_sum[e] += finish - a
            self.response_count[e] += 1
            self.next += 1

    def finish(self, end):
        """Idles from the last departure to the end of the trace."""
        if self.free < end:
            self._idle(self.free, end, wake=False)

    def mean_response(self, epoch):
        if epoch < 0 or not self.response_count[epoch]:
            return None
        return float(self.response_sum[epoch] / self.response_count[epoch])


def _fixed_policy(strategy, catalog):
    """Race-to-halt: full speed, one sleep state entered immediately."""
    return Policy(1.0, SleepSequence((catalog[strategy.state],)))


def _strategy_grid(strategy, grid):
    if strategy.kind == 'SS_fixed':
        return grid.restricted(sleep_options=[SleepTemplate.immediate(strategy.state)])
    if strategy.kind == 'DVFS':
        return grid.restricted(sleep_options=[SleepTemplate.none()])
    return grid


def _log_window(stream, t0, size):
    """The last `size` jobs that arrived before t0, as a stream starting at 0."""
    end = int(np.searchsorted(stream.arrivals, t0, side='left'))
    begin = max(0, end - size)
    arrivals = stream.arrivals[begin:end]
    previous = stream.arrivals[begin - 1] if begin else 0.0
    return JobStream.from_gaps(np.diff(arrivals, prepend=previous), stream.demands[begin:end], stream.seed)


def run(trace, workload, cfg, strategy, seed=0, table=None, stream=None):
    """
    Runs one strategy over a utilization trace.

    Parameters
    ----------
    trace : UtilizationTrace
    workload : (ArrivalSpec, ServiceSpec)
        Base workload; its arrivals are warped to follow the trace.
    cfg : EpochConfig
    strategy : Strategy or str
    seed : int
    table : PowerTable, optional
        Defaults to the configured default table.
    stream : JobStream, optional
        The true job stream, when already generated (compare shares one between strategies).

    Returns
    -------
    reports : list of EpochReport
    summary : RunSummary
    """
    if isinstance(strategy, str):
        strategy = parse_strategy(strategy)
    if table is None:
        from .data import load_power_table
        table = load_power_table()
    if len(trace) < 2 * cfg.T:
        raise TraceTooShort(f'Trace has {len(trace)} minutes. It should cover at least 2 epochs of {cfg.T} minutes')
    if strategy.state:
        try:
            table.state_pair(strategy.state)
        except PowerTableError as e:
            raise UnknownStrategy(f'Strategy "{strategy.name}" names an unknown sleep state. {e}')

    arrivals, service = workload
    if float(trace.rho.max()) >= 1:
        logger.warning('The trace reaches utilization 1; the server cannot keep up at those minutes')
    if stream is None:
        stream = trace_job_stream(trace, arrivals, service, seed)

    qos = cfg.qos if cfg.qos.mu is not None else replace(cfg.qos, mu=service.mu)
    grid = _strategy_grid(strategy, replace(cfg.grid, beta=service.cpu_bound_fraction))
    catalog = sleep_catalog(table, cfg.grid.latencies, f_idle=1.0, strict=cfg.grid.strict_latency)
    predictor = Predictor(cfg.predictor, **cfg.predictor_params) if strategy.predicts else None
    synthetic = generate(arrivals, service, cfg.eval_jobs, seed=seed + 1) if strategy.predicts else None

    minutes = len(trace)
    n_epochs = math.ceil(minutes / cfg.T)
    length = 60.0 * cfg.T
    server = _Server(stream, table, service.cpu_bound_fraction, length, n_epochs)
    rho = trace.rho
    learned = 1
    cache = {}
    plans = []

    logger.info(f'Running {strategy.name} over {minutes} minutes in {n_epochs} epochs of {cfg.T} min')
    for e in range(n_epochs):
        m0 = e * cfg.T
        t1 = (m0 + cfg.T) * 60.0 if e < n_epochs - 1 else math.inf

        if not strategy.predicts:
            policy = _fixed_policy(strategy, catalog)
            plans.append((math.nan, policy, 1.0, 1.0, True))
        else:
            if e == 0:
                predicted = float(rho[0])
            else:
                for t in range(learned, m0):
                    predictor.predict(rho[:t], truth=rho[t])
                    predictor.update(rho[t])
                learned = max(learned, m0)
                predicted = predictor.predict(rho[:m0], truth=rho[m0])
                if cfg.horizon == 'epoch_mean' and cfg.T > 1:
                    truth = rho[m0:m0 + cfg.T]
                    ahead = (truth[1:].tolist() if predictor.kind == 'offline'
                             else predictor.forecast(rho[:m0].tolist() + [predicted], cfg.T - 1))
                    predicted = float(np.mean([predicted] + list(ahead)))
            predicted = min(max(predicted, RHO_LIMITS[0]), RHO_LIMITS[1])

            window = None
            if e and cfg.log_source == 'log':
                window = _log_window(stream, m0 * 60.0, cfg.eval_jobs)
                if len(window) < cfg.min_log_jobs:
                    logger.debug(f'Epoch {e}: only {len(window)} logged jobs, using the synthetic log')
                    window = None

            key = None if window is not None else predicted
            if key is not None and key in cache:
                choice = cache[key]
            else:
                log = window if window is not None else synthetic
                choice = select(grid, rescale_to_utilization(log, predicted), table, qos, jobs=cfg.jobs)
                if key is not None:
                    cache[key] = choice

            f_selected = choice.policy.f
            f_applied = over_provision(f_selected, server.mean_response(e - 1), qos.budget_delay, cfg.alpha)
            policy = choice.policy if f_applied == f_selected else choice.policy.at_frequency(table, f_applied)
            plans.append((predicted, policy, f_selected, f_applied, choice.feasible))

        server.run_epoch(policy, t1)
        logger.info(f'Epoch {e + 1}/{n_epochs}: {policy.label}',
                    extra={'progress': int(100 * (e + 1) / n_epochs)})

    end = minutes * 60.0
    server.finish(end)
    return _report(strategy, trace, cfg, qos, stream, server, plans, end)


def _report(strategy, trace, cfg, qos, stream, server, plans, end):
    n_epochs = len(plans)
    length = server.length
    departures = server.departures
    responses = departures - stream.arrivals
    last_time = max(end, float(np.nanmax(departures)) if len(departures) else end)
    ordered = np.sort(departures)

    reports = []
    for e, (predicted, policy, f_selected, f_applied, feasible) in enumerate(plans):
        t0 = e * length
        t1 = (e + 1) * length if e < n_epochs - 1 else math.inf
        duration = length if e < n_epochs - 1 else last_time - t0
        arrived = int(np.searchsorted(stream.arrivals, t1, side='left')) if e < n_epochs - 1 else len(stream)
        departed = int(np.searchsorted(ordered, t1, side='left')) if e < n_epochs - 1 else len(stream)

        mean_response = server.mean_response(e)
        mean_response = math.nan if mean_response is None else mean_response
        minutes = trace.rho[e * cfg.T:(e + 1) * cfg.T]
        reports.append(EpochReport(
            index=e, start_minute=e * cfg.T, predicted_rho=predicted, realized_rho=float(minutes.mean()),
            policy=policy, f_selected=f_selected, f_applied=f_applied, feasible=feasible,
            mean_response=mean_response, normalized_response=qos.mu * mean_response,
            mean_power=float(server.energy[e] / duration), jobs_completed=int(server.response_count[e]),
            carried_queue=arrived - departed,
            residency={label: t / duration for label, t in server.time[e].items() if t > 0}))

    total_time = defaultdict(float)
    for times in server.time:
        for label, t in times.items():
            total_time[label] += t
    energy = float(server.energy.sum())

    mean_response = float(np.mean(responses)) if len(responses) else math.nan
    normalized = qos.mu * mean_response
    miss = float(np.mean(responses >= qos.deadline)) if qos.deadline is not None and len(responses) else None
    meets = normalized <= qos.budget if qos.mode == 'mean' else miss is not None and miss <= qos.max_violation

    summary = RunSummary(strategy=strategy.name, epochs=n_epochs, jobs=len(responses), energy=energy,
                         duration=last_time, mean_power=energy / last_time, mean_response=mean_response,
                         normalized_response=normalized, deadline_miss=miss, meets_budget=bool(meets),
                         residency={label: t / last_time for label, t in sorted(total_time.items()) if t > 0},
                         families=dict(sorted(Counter(p[1].family for p in plans).items())))
    logger.info(f'{strategy.name}: E[P]={summary.mean_power:.2f} W, mu*E[R]={normalized:.3f}')
    return reports, summary


@dataclass(frozen=True)
class ComparisonReport:
    summaries: dict
    reports: dict
    errors: dict = field(default_factory=dict)

    def to_frame(self):
        rows = [{'strategy': s.strategy, 'E_P': s.mean_power, 'norm_E_R': s.normalized_response,
                 'E_R': s.mean_response, 'meets_budget': s.meets_budget, 'jobs': s.jobs}
                for s in self.summaries.values()]
        return pd.DataFrame(rows, columns=['strategy', 'E_P', 'norm_E_R', 'E_R', 'meets_budget', 'jobs'])

    def to_dict(self):
        return {'strategies': [s.to_dict() for s in self.summaries.values()],
                'errors': {name: str(e) for name, e in self.errors.items()}}


def _run_named(args):
    trace, workload, cfg, strategy, seed, table, stream = args
    return run(trace, workload, cfg, strategy, seed, table, stream)


def compare(trace, workload, cfg, strategies, seed=0, table=None, jobs=1):
    """
    Runs several strategies on the same job realization. A strategy that fails is recorded in
    ComparisonReport.errors and the others still run.
    """
    strategies = [parse_strategy(s) if isinstance(s, str) else s for s in strategies]
    if table is None:
        from .data import load_power_table
        table = load_power_table()
    arrivals, service = workload
    stream = trace_job_stream(trace, arrivals, service, seed)

    summaries, reports, errors = {}, {}, {}
    tasks = [(trace, workload, cfg, s, seed, table, stream) for s in strategies]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_named, task) for task in tasks]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as e:
                    outcomes.append(e)
    else:
        outcomes = []
        for task in tasks:
            try:
                outcomes.append(_run_named(task))
            except Exception as e:
                outcomes.append(e)

    for strategy, outcome in zip(strategies, outcomes):
        if isinstance(outcome, Exception):
            logger.error(f'Strategy {strategy.name} failed: {outcome}')
            errors[strategy.name] = outcome
            continue
        reports[strategy.name], summaries[strategy.name] = outcome
    return ComparisonReport(summaries, reports, errors)
