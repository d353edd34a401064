"""
Parsing related functions: the short textual specs accepted on the command line for policies, sleep sequences,
latency overrides, distributions, frequency lists and trace surges.
"""
import logging
logger = logging.getLogger('sleepscale')

import json
import re

import numpy as np

from .errors import ParseError, RangeError
from .power import SleepSequence, sleep_catalog
from .simulate import Policy
from .workload import ArrivalSpec, ServiceSpec


NUMBER = r'[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?'


def _number(text, what):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(f'{what} is not a number: "{text}"')


def parse_sleep(expression, catalog):
    """
    Parses a sleep sequence such as "C6S3", "C0iS0i>C6S3@10" or "C0iS0i@0,C6S3@10". "none" (or an empty
    expression) is the empty sequence.

    Parameters
    ----------
    expression : str
        States in order, each "LABEL" or "LABEL@DELAY" (delay in seconds, default 0), separated by ">" or ",".
    catalog : dict
        Maps label to SleepState, already evaluated at the policy frequency.

    Returns
    -------
    SleepSequence
    """
    expression = (expression or '').strip()
    if not expression or expression.lower() == 'none':
        return SleepSequence()

    states = []
    for item in re.split(r'\s*[>,]\s*', expression):
        match = re.fullmatch(rf'([A-Za-z0-9_]+)(?:@({NUMBER}))?', item)
        if not match:
            raise ParseError(f'Sleep state "{item}" in "{expression}" should look like LABEL or LABEL@SECONDS')
        label, delay = match.group(1), match.group(2)
        if label not in catalog:
            raise ParseError(f'Sleep sequence "{expression}" references a sleep state that does not exist: '
                             f'"{label}". It should be one of [{", ".join(catalog)}]')
        states.append(catalog[label].with_delay(_number(delay, f'Delay of "{label}"') if delay else 0.0))
    return SleepSequence(tuple(states))


def parse_policy(expression, table, latencies=None, strict=False):
    """
    Parses a policy "F/SLEEP", e.g. "0.42/C6S3" or "1/C0iS0i>C6S3@10". A bare frequency is DVFS only.

    Returns
    -------
    Policy
    """
    head, _, tail = (expression or '').partition('/')
    f = _number(head.strip(), f'Frequency of policy "{expression}"')
    if not 0 < f <= 1:
        raise RangeError(f'Frequency of policy "{expression}" is outside (0, 1]: {f}')
    catalog = sleep_catalog(table, latencies, f_idle=f, strict=strict)
    return Policy(f, parse_sleep(tail, catalog))


def parse_latencies(items):
    """
    Parses repeated LABEL=SECONDS overrides into a dict.
    """
    latencies = {}
    for item in items or []:
        label, sep, value = item.partition('=')
        if not sep or not label.strip():
            raise ParseError(f'Latency override "{item}" should look like LABEL=SECONDS')
        latencies[label.strip()] = _number(value.strip(), f'Latency of "{label.strip()}"')
        if latencies[label.strip()] < 0:
            raise RangeError(f'Latency of "{label.strip()}" is negative: {value}. It should be >= 0')
    return latencies


def parse_distribution(expression, service=False, beta=1.0):
    """
    Parses "exp:RATE", "lognormal:MEAN:CV" or "values:A,B,C" (a logged sample replayed in order) into an
    ArrivalSpec, or a ServiceSpec when service is set.
    """
    kind, _, rest = (expression or '').partition(':')
    kind = kind.strip().lower()
    cls = ServiceSpec if service else ArrivalSpec
    extra = {'cpu_bound_fraction': beta} if service else {}

    if kind in ('exp', 'exponential'):
        return cls.exponential(_number(rest, f'Rate in "{expression}"'), **extra)
    if kind == 'lognormal':
        mean, _, cv = rest.partition(':')
        return cls.lognormal(_number(mean, f'Mean in "{expression}"'), _number(cv, f'C_v in "{expression}"'),
                             **extra)
    if kind == 'values':
        return cls.empirical([_number(v, f'Logged value in "{expression}"') for v in rest.split(',') if v.strip()],
                             **extra)
    raise ParseError(f'Distribution "{expression}" has an unknown kind: "{kind}". It should be exp, lognormal or '
                     f'values')


def parse_frequencies(expression):
    """
    "0.3,0.5,1" lists frequencies; "START:STOP:STEP" is an inclusive range.
    """
    expression = (expression or '').strip()
    if ':' in expression:
        parts = expression.split(':')
        if len(parts) != 3:
            raise ParseError(f'Frequency range "{expression}" should look like START:STOP:STEP')
        start, stop, step = (_number(p, f'Frequency range "{expression}"') for p in parts)
        if step <= 0 or stop < start:
            raise RangeError(f'Frequency range "{expression}" is empty.')
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 10) for k in range(count)]
    values = [_number(v, 'Frequency') for v in expression.split(',') if v.strip()]
    if not values:
        raise ParseError('No frequencies given.')
    return values


def parse_surges(expression):
    """
    Parses "START:DURATION:LEVEL,..." surges (minutes, minutes, utilization).
    """
    surges = []
    for item in (expression or '').split(','):
        if not item.strip():
            continue
        parts = item.split(':')
        if len(parts) != 3:
            raise ParseError(f'Surge "{item}" should look like START:DURATION:LEVEL')
        start, duration, level = (_number(p, f'Surge "{item}"') for p in parts)
        if not 0 <= level <= 1:
            raise RangeError(f'Surge level in "{item}" is outside [0, 1]: {level}')
        surges.append((int(start), int(duration), level))
    return tuple(surges)


def read_config(path):
    """
    Reads a --config JSON object of option defaults. Keys use the long flag names with dashes or underscores.
    """
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (FileNotFoundError, OSError):
        raise ParseError(f'Could not find the config file "{path}".')
    except json.JSONDecodeError as e:
        raise ParseError(f'Config file "{path}" is not valid JSON: {e.msg}', line=e.lineno)
    if not isinstance(data, dict):
        raise ParseError(f'Config file "{path}" should contain a JSON object.')
    return {key.replace('-', '_'): value for key, value in data.items()}
