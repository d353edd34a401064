"""
Policy manager: builds the candidate grid of (frequency, sleep sequence) policies, evaluates every candidate by
simulation on one shared job stream and picks the lowest-power policy that meets the QoS constraint.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import pandas as pd

from .errors import EmptyGrid, InvalidSleepSequence, RangeError
from .power import SleepSequence, prune_dominated, sleep_catalog
from .simulate import ROW_COLUMNS, Policy, SimResult, result_row, simulate, sweep
from .workload import ArrivalSpec, ServiceSpec, generate


DEFAULT_EVAL_JOBS = 10_000
DEFAULT_GAP_MULTIPLIERS = (0.1, 0.3, 1.0, 3.0, 10.0)
CASCADE_MULTIPLIERS = (0.0, 0.1, 0.3, 1.0, 3.0)
MODES = ('mean', 'tail')


@dataclass(frozen=True)
class QoSConstraint:
    """
    Attributes
    ----------
    mode : str
        "mean" bounds the normalized mean response mu*E[R] by budget; "tail" bounds Pr(R >= deadline) by
        max_violation.
    budget : float
        Normalized mean response allowed in mean mode. math.inf means unconstrained.
    deadline : float
        Seconds, tail mode.
    max_violation : float
        Allowed fraction of jobs at or past the deadline, tail mode.
    rho_b : float
        Design utilization the constraint was derived from, if any.
    mu : float
        Nominal full-speed service rate used to normalise response times. None uses each stream's own mean.
    """
    mode: str = 'mean'
    budget: float = math.inf
    deadline: float = None
    max_violation: float = 0.05
    rho_b: float = None
    mu: float = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise RangeError(f'Unknown QoS mode "{self.mode}". It should be one of [{", ".join(MODES)}]')
        if self.mode == 'mean' and not self.budget > 1:
            raise RangeError(f'Normalized response budget must be > 1, got {self.budget}')
        if self.mode == 'tail':
            if self.deadline is None or self.deadline <= 0:
                raise RangeError(f'Tail QoS needs a deadline > 0, got {self.deadline}')
            if not 0 < self.max_violation < 1:
                raise RangeError(f'Allowed deadline violation must be within (0, 1), got {self.max_violation}')

    def violation(self, result):
        """How far a result is past the constraint; <= 0 means feasible."""
        if self.mode == 'mean':
            return result.normalized_mean_response - self.budget
        return result.deadline_miss - self.max_violation

    def feasible(self, result):
        return self.violation(result) <= 0

    @property
    def budget_delay(self):
        """The constraint as a mean delay in seconds: budget/mu in mean mode, the deadline in tail mode."""
        if self.mode == 'tail':
            return self.deadline
        if self.mu is None:
            raise RangeError('A mean-response budget needs a service rate to be expressed in seconds.')
        return self.budget / self.mu


def baseline_budget(rho_b, mu, mode='mean', table=None, n=100_000, seed=0):
    """
    QoS constraint matching a baseline that always runs at f = 1 without sleeping, provisioned for rho_b.

    In mean mode the budget is 1/(1 - rho_b). In tail mode the deadline is the 95th-percentile response of a
    simulated M/M/1 baseline at rho_b and the allowed violation 5%.
    """
    if not 0 < rho_b < 1:
        raise RangeError(f'Design utilization must be within (0, 1), got {rho_b}')
    if mode == 'mean':
        return QoSConstraint('mean', budget=1.0 / (1.0 - rho_b), rho_b=rho_b, mu=mu)
    if mode != 'tail':
        raise RangeError(f'Unknown QoS mode "{mode}". It should be one of [{", ".join(MODES)}]')

    if table is None:
        from .data import load_power_table
        table = load_power_table()
    stream = generate(ArrivalSpec.exponential(rho_b * mu), ServiceSpec.exponential(mu), n, seed)
    result = simulate(Policy(1.0), stream, table, mu=mu)
    logger.info(f'Baseline 95th-percentile response at rho_b={rho_b}: {result.response_p95:.6g} s')
    return QoSConstraint('tail', deadline=result.response_p95, max_violation=0.05, rho_b=rho_b, mu=mu)


@dataclass(frozen=True)
class SleepTemplate:
    """
    A sleep sequence recipe: (label, delay) entries. With relative set, delays are multiples of the mean idle
    gap of the stream being evaluated. With prune set, states that do not lower power are dropped before the
    sequence is built (used for cascades).
    """
    entries: tuple = ()
    relative: bool = False
    prune: bool = False

    @classmethod
    def none(cls):
        return cls(())

    @classmethod
    def immediate(cls, label):
        return cls(((label, 0.0),))

    @classmethod
    def delayed(cls, first, second, delay, relative=True):
        return cls(((first, 0.0), (second, float(delay))), relative=relative)

    @classmethod
    def cascade(cls, labels, multipliers=CASCADE_MULTIPLIERS):
        return cls(tuple(zip(labels, (float(m) for m in multipliers))), relative=True, prune=True)

    @property
    def name(self):
        if not self.entries:
            return 'none'
        unit = 'g' if self.relative else ''
        return '>'.join(label if not delay else f'{label}@{delay:.6g}{unit}' for label, delay in self.entries)

    def materialize(self, catalog, mean_gap=1.0):
        """
        Concrete sequence from a catalog of states already evaluated at the policy frequency. Returns None when
        the recipe is not a legal sequence there.
        """
        scale = mean_gap if self.relative else 1.0
        states = [catalog[label].with_delay(delay * scale) for label, delay in self.entries]
        if self.prune:
            states = prune_dominated(states)
        try:
            return SleepSequence(tuple(states))
        except InvalidSleepSequence as e:
            logger.debug(f'Skipping sleep template {self.name}: {e}')
            return None


def default_templates(labels, pre_sleep='C0iS0i', multipliers=DEFAULT_GAP_MULTIPLIERS, delayed=True,
                      cascade=True):
    """
    Immediate singletons for every label, delayed pairs (pre_sleep, deeper state after m mean gaps) and the full
    cascade.
    """
    templates = [SleepTemplate.immediate(label) for label in labels]
    if delayed and pre_sleep in labels:
        for label in labels:
            if label == pre_sleep:
                continue
            templates += [SleepTemplate.delayed(pre_sleep, label, m) for m in multipliers]
    if cascade and len(labels) > 1:
        templates.append(SleepTemplate.cascade(labels, CASCADE_MULTIPLIERS[:len(labels)]))
    return tuple(templates)


def min_stable_frequency(rho, beta=1.0):
    """Smallest f with rho*(beta/f + 1 - beta) < 1 as a limit; 0 for purely memory-bound work."""
    if beta == 0:
        return 0.0
    memory = rho * (1.0 - beta)
    if memory >= 1:
        return math.inf
    return rho * beta / (1.0 - memory)


def frequency_grid(rho, step=0.01, beta=1.0):
    """Multiples of step from one step above the stability limit up to 1.0 (1.0 always included)."""
    if not 0 < step <= 1:
        raise RangeError(f'Frequency step must be within (0, 1], got {step}')
    limit = min_stable_frequency(rho, beta)
    if limit >= 1:
        raise EmptyGrid(f'No stable frequency at utilization {rho:.4g} (beta={beta}).')
    low = min(limit + step, 1.0)
    first = max(1, math.ceil(low / step - 1e-9))
    grid = [round(k * step, 10) for k in range(first, int(math.floor(1.0 / step + 1e-9)) + 1)]
    if not grid or grid[-1] < 1.0:
        grid.append(1.0)
    return grid


@dataclass(frozen=True)
class PolicyGrid:
    """
    Candidate policies.

    Attributes
    ----------
    frequencies : tuple, optional
        Explicit frequency factors. None derives them from each stream's utilization with `step`.
    sleep_options : tuple, optional
        SleepTemplates. None uses default_templates over the table's labels.
    beta : float
    step : float
    latencies : dict, optional
        Wake-up latency overrides per label.
    strict_latency : bool
    """
    frequencies: tuple = None
    sleep_options: tuple = None
    beta: float = 1.0
    step: float = 0.01
    latencies: dict = field(default=None, compare=False)
    strict_latency: bool = False

    def frequencies_for(self, stream):
        if self.frequencies is not None:
            grid = sorted({float(f) for f in self.frequencies})
            for f in grid:
                if not 0 < f <= 1:
                    raise RangeError(f'Grid frequency {f} is outside (0, 1].')
            return grid
        return frequency_grid(stream.utilization, self.step, self.beta)

    def templates_for(self, table):
        if self.sleep_options is not None:
            return tuple(self.sleep_options)
        return default_templates(table.labels)

    def restricted(self, sleep_options=None, frequencies=None):
        changes = {}
        if sleep_options is not None:
            changes['sleep_options'] = tuple(sleep_options)
        if frequencies is not None:
            changes['frequencies'] = tuple(frequencies)
        return replace(self, **changes)


def candidates(grid, stream, table):
    """Every concrete policy of the grid for this stream, deduplicated, in grid order."""
    frequencies = grid.frequencies_for(stream)
    templates = grid.templates_for(table)
    if not frequencies or not templates:
        raise EmptyGrid('The policy grid has no frequencies or no sleep options.')

    base = sleep_catalog(table, grid.latencies, f_idle=1.0, strict=grid.strict_latency)
    policies, seen = [], set()
    for f in frequencies:
        catalog = {label: state.at_frequency(table, f) for label, state in base.items()}
        for template in templates:
            seq = template.materialize(catalog, stream.mean_gap)
            if seq is None:
                continue
            key = (f, seq.label)
            if key in seen:
                continue
            seen.add(key)
            policies.append(Policy(f, seq))

    if not policies:
        raise EmptyGrid('No legal policy could be built from the grid.')
    logger.debug(f'{len(policies)} candidate policies over {len(frequencies)} frequencies')
    return policies


@dataclass(frozen=True)
class PolicyChoice:
    policy: Policy
    predicted: SimResult
    feasible: bool
    margin: float
    evaluated: int = 0


def _preference(entry):
    return (entry.result.mean_power, entry.policy.f, entry.policy.first_latency, entry.policy.sleep_label)


def select(grid, stream, table, qos, jobs=1):
    """
    Evaluates every candidate on `stream` and returns the lowest-power feasible one. Ties go to lower f, then the
    shallower first sleep state, then the label. When nothing is feasible the least violating candidate is
    returned with feasible=False.

    Parameters
    ----------
    grid : PolicyGrid
    stream : JobStream
        Shared by all candidates so that comparisons are paired.
    table : PowerTable
    qos : QoSConstraint
    jobs : int
        Worker processes for the sweep.

    Returns
    -------
    PolicyChoice
    """
    policies = candidates(grid, stream, table)
    entries = sweep(policies, stream, table, beta=grid.beta, jobs=jobs, mu=qos.mu,
                    deadline=qos.deadline if qos.mode == 'tail' else None)
    evaluated = [e for e in entries if e.ok]
    if not evaluated:
        raise entries[0].error

    feasible = [e for e in evaluated if qos.feasible(e.result)]
    if feasible:
        best = min(feasible, key=_preference)
    else:
        best = min(evaluated, key=lambda e: (qos.violation(e.result),) + _preference(e))
        logger.warning(f'No candidate meets the QoS constraint; using the least violating policy {best.policy.label}')

    margin = -qos.violation(best.result)
    logger.debug(f'Selected {best.policy.label}: E[P]={best.result.mean_power:.4g} W, margin {margin:.4g}')
    return PolicyChoice(best.policy, best.result, bool(feasible), margin, len(evaluated))


class FrontierPoint(NamedTuple):
    policy: Policy
    mean_response: float
    mean_power: float
    result: SimResult


def frontier(grid, stream, table, jobs=1, mu=None):
    """
    Every candidate's (E[R], E[P]), sorted by sleep label then frequency: one power-performance curve per sleep
    option.
    """
    policies = candidates(grid, stream, table)
    entries = sweep(policies, stream, table, beta=grid.beta, jobs=jobs, mu=mu)
    points = [FrontierPoint(e.policy, e.result.mean_response, e.result.mean_power, e.result)
              for e in entries if e.ok]
    if not points:
        raise EmptyGrid('No candidate of the grid could be simulated.')
    return sorted(points, key=lambda p: (p.policy.sleep_label, p.policy.f))


def frontier_frame(points, curve=None):
    """
    Frontier as rows in the simulation row format plus a `curve` column: the sleep label, prefixed by `curve`
    when given (to tell several workloads apart in one file).
    """
    rows = []
    for point in points:
        row = result_row(point.policy, point.result)
        row['curve'] = f'{curve}:{point.policy.sleep_label}' if curve else point.policy.sleep_label
        rows.append(row)
    return pd.DataFrame(rows, columns=ROW_COLUMNS + ['curve'])


def bowl_minimum(points, sleep_label):
    """Lowest-power point on one curve of a frontier."""
    curve = [p for p in points if p.policy.sleep_label == sleep_label]
    if not curve:
        raise EmptyGrid(f'The frontier has no curve for "{sleep_label}".')
    return min(curve, key=lambda p: (p.mean_power, p.policy.f))
