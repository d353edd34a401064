"""
Platform power model: CPU and platform power states, combined-state power as a function of the DVFS frequency
factor, and the sleep-state catalog every other module draws its low-power states from.

Voltage scales linearly with frequency (V = f, V = 1 at f = 1), so the dynamic CPU terms written as c*V^2*f become
c*f^3 and the clock-gated C1 term c*V^2 becomes c*f^2.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import IncompatiblePair, InvalidSleepSequence, LatencyOutOfRange, PowerTableError, RangeError


class PowerLaw(Enum):
    CUBIC = 'cubic_in_f'
    QUADRATIC = 'quadratic_in_f'
    CONSTANT = 'constant'

    @property
    def exponent(self):
        return {PowerLaw.CUBIC: 3, PowerLaw.QUADRATIC: 2, PowerLaw.CONSTANT: 0}[self]


@dataclass(frozen=True)
class CpuState:
    name: str
    power_law: PowerLaw
    coefficient: float

    def power(self, f):
        if self.power_law is PowerLaw.CONSTANT:
            return self.coefficient
        return self.coefficient * f ** self.power_law.exponent


@dataclass(frozen=True)
class PlatformState:
    name: str
    power: float


@dataclass(frozen=True)
class PowerTable:
    """
    CPU states, platform states, the legal (cpu, platform) combinations and the combined sleep states built from
    them. Immutable once built; share it freely.

    Attributes
    ----------
    name : str
        Short identifier of the platform, e.g. "xeon".
    cpu_states : dict
        Maps CPU state name to CpuState.
    platform_states : dict
        Maps platform state name to PlatformState.
    compatibility : frozenset
        Legal (cpu name, platform name) pairs.
    sleep_pairs : dict
        Maps a combined-state label such as "C6S3" to its (cpu name, platform name) pair, in catalog order
        (shallowest first).
    latencies : dict
        Default wake-up latency per combined-state label, in seconds.
    latency_bounds : dict
        Allowed (min, max) wake-up latency per label, in seconds.
    """
    name: str
    cpu_states: dict
    platform_states: dict
    compatibility: frozenset
    sleep_pairs: dict
    latencies: dict
    latency_bounds: dict

    @classmethod
    def from_config(cls, data, source='<config>'):
        """
        Builds a table from an already validated power table document (see validate.validate_power_config).
        """
        cpu_states = {row['name']: CpuState(row['name'], PowerLaw(row['law']), float(row['coefficient']))
                      for row in data['cpu_states']}
        platform_states = {row['name']: PlatformState(row['name'], float(row['watts']))
                           for row in data['platform_states']}
        compatibility = frozenset((cpu, platform) for cpu, platform in data['compatibility'])

        sleep_pairs, latencies, bounds = {}, {}, {}
        for row in data['sleep_states']:
            sleep_pairs[row['label']] = (row['cpu'], row['platform'])
            latencies[row['label']] = float(row['latency'])
            bounds[row['label']] = (float(row['min_latency']), float(row['max_latency']))

        table = cls(name=data.get('name', source), cpu_states=cpu_states, platform_states=platform_states,
                    compatibility=compatibility, sleep_pairs=sleep_pairs, latencies=latencies,
                    latency_bounds=bounds)
        logger.debug(f'Loaded power table "{table.name}" with sleep states [{", ".join(sleep_pairs)}]')
        return table

    def state_pair(self, label):
        try:
            return self.sleep_pairs[label]
        except KeyError:
            raise PowerTableError(f'Power table "{self.name}" has no sleep state "{label}". It should be one of '
                                  f'[{", ".join(self.sleep_pairs)}]')

    @property
    def labels(self):
        return list(self.sleep_pairs)

    @property
    def platform_active(self):
        return self.platform_states['S0_active'].power


def _check_frequency(f, allow_zero=True):
    low_ok = f >= 0 if allow_zero else f > 0
    if not (low_ok and f <= 1) or math.isnan(f):
        bounds = '[0, 1]' if allow_zero else '(0, 1]'
        raise RangeError(f'Frequency factor {f} is outside {bounds}.')


def combined_power(table, cpu, platform, f):
    """
    Power of the combined state (cpu, platform) at frequency factor f: CPU term plus platform term.

    Parameters
    ----------
    table : PowerTable
    cpu : str
        CPU state name, e.g. "C0_active".
    platform : str
        Platform state name, e.g. "S0_active".
    f : float
        DVFS frequency factor in [0, 1].

    Returns
    -------
    float
        Watts.
    """
    _check_frequency(f)
    if (cpu, platform) not in table.compatibility:
        raise IncompatiblePair(f'CPU state "{cpu}" cannot be combined with platform state "{platform}" in power '
                               f'table "{table.name}".')
    return table.cpu_states[cpu].power(f) + table.platform_states[platform].power


def active_power(table, f):
    """Power while serving (or waking up) at frequency factor f, i.e. C0_active with S0_active."""
    _check_frequency(f, allow_zero=False)
    return combined_power(table, 'C0_active', 'S0_active', f)


@dataclass(frozen=True)
class SleepState:
    """
    One low-power state: power while resident, delay after the queue empties before it is entered, and the
    latency to return to active operation. cpu/platform remember the pair the power came from so the state can be
    re-evaluated at another frequency.
    """
    label: str
    power: float
    wakeup_latency: float
    entry_delay: float = 0.0
    cpu: str = field(default=None, compare=False)
    platform: str = field(default=None, compare=False)

    def __post_init__(self):
        for name in ['power', 'wakeup_latency', 'entry_delay']:
            if getattr(self, name) < 0:
                raise InvalidSleepSequence(f'Sleep state "{self.label}" has a negative {name}: '
                                           f'{getattr(self, name)}')

    def with_delay(self, entry_delay):
        return replace(self, entry_delay=float(entry_delay))

    def at_frequency(self, table, f):
        if self.cpu is None:
            return self
        return replace(self, power=combined_power(table, self.cpu, self.platform, f))


def _format_delay(value):
    return f'{value:.6g}'


@dataclass(frozen=True)
class SleepSequence:
    """
    Ordered low-power states entered one after another while the server stays idle.

    Entry delays must not decrease; a state whose delay equals the next state's delay is never resident (it is
    shadowed), which lets a delayed pair with a zero second delay coincide exactly with the immediate deeper state.
    Powers must strictly decrease and wake-up latencies strictly increase along the sequence.
    """
    states: tuple = ()

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, 'states', states)

        for shallow, deep in zip(states, states[1:]):
            if deep.entry_delay < shallow.entry_delay:
                raise InvalidSleepSequence(f'Entry delay of "{deep.label}" ({deep.entry_delay} s) is smaller than '
                                           f'that of "{shallow.label}" ({shallow.entry_delay} s).')
            if not deep.power < shallow.power:
                raise InvalidSleepSequence(f'"{deep.label}" ({deep.power:.4g} W) does not draw less power than '
                                           f'"{shallow.label}" ({shallow.power:.4g} W).')
            if not deep.wakeup_latency > shallow.wakeup_latency:
                raise InvalidSleepSequence(f'"{deep.label}" does not wake up slower than "{shallow.label}".')

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __bool__(self):
        return bool(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def delays(self):
        return [s.entry_delay for s in self.states]

    @property
    def powers(self):
        return [s.power for s in self.states]

    @property
    def latencies(self):
        return [s.wakeup_latency for s in self.states]

    @property
    def label(self):
        """"C6S3" for an immediate single state, "C0iS0i>C6S3@0.5" otherwise, "none" when empty."""
        if not self.states:
            return 'none'
        if len(self.states) == 1 and self.states[0].entry_delay == 0:
            return self.states[0].label
        return '>'.join(s.label if s.entry_delay == 0 else f'{s.label}@{_format_delay(s.entry_delay)}'
                        for s in self.states)

    @property
    def family(self):
        """Label of the deepest state, or "none"."""
        return self.states[-1].label if self.states else 'none'

    def at_frequency(self, table, f):
        return SleepSequence(tuple(s.at_frequency(table, f) for s in self.states))


def prune_dominated(states):
    """
    Drops states that would not lower power (or would not raise latency) relative to the last kept state.
    At low frequency the cubic C0_idle term falls below the quadratic C1 term, so a full cascade is not always a
    legal sequence as is.
    """
    kept = []
    for state in states:
        if kept and not (state.power < kept[-1].power and state.wakeup_latency > kept[-1].wakeup_latency):
            logger.debug(f'Dropping "{state.label}" from sequence, dominated by "{kept[-1].label}"')
            continue
        kept.append(state)
    return kept


def sleep_catalog(table, latencies=None, f_idle=1.0, strict=False):
    """
    Builds the combined sleep states of a table at the given idle frequency.

    Parameters
    ----------
    table : PowerTable
    latencies : dict, optional
        Wake-up latency overrides per label, in seconds. Labels not listed keep the table default.
    f_idle : float
        Frequency held while idle (C0_idle and C1 scale with the last DVFS setting).
    strict : bool
        Raise LatencyOutOfRange instead of warning when a latency is outside the table's range.

    Returns
    -------
    catalog : dict
        Maps label to SleepState, shallowest first, all with zero entry delay.
    """
    chosen = dict(table.latencies)
    for label, value in (latencies or {}).items():
        table.state_pair(label)
        chosen[label] = float(value)

    catalog = {}
    for label, (cpu, platform) in table.sleep_pairs.items():
        latency = chosen[label]
        low, high = table.latency_bounds[label]
        if not low <= latency <= high:
            message = (f'Wake-up latency of "{label}" is outside the supported range: {latency} s. '
                       f'It should be within [{low}, {high}] s')
            if strict:
                raise LatencyOutOfRange(message)
            logger.warning(message)
        catalog[label] = SleepState(label, combined_power(table, cpu, platform, f_idle), latency,
                                    cpu=cpu, platform=platform)

    try:
        SleepSequence(tuple(catalog.values()))
    except InvalidSleepSequence as e:
        # below full speed C0_idle can legitimately fall under C1
        if f_idle >= 1.0:
            raise InvalidSleepSequence(f'Sleep states of the power table are not ordered shallowest to deepest: {e}')
        logger.debug(f'Catalog at f={f_idle} is not a monotone cascade: {e}')

    return catalog
