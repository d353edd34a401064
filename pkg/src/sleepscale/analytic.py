"""
Closed forms for Poisson arrivals and exponential service with n delayed sleep states. These check the simulator;
they are not used for policy selection.

Notation follows the simulator: lam is the arrival rate, mu the full-speed service rate, f the frequency factor,
and the sleep sequence carries (P_i, tau_i, w_i) per state. p_active (P0) is the active power already evaluated at f.
"""
import logging
logger = logging.getLogger('sleepscale')

import math
from dataclasses import dataclass, field

from .errors import NoClosedForm, RangeError, SingularParameter, Unstable
from .power import SleepSequence, active_power, combined_power


@dataclass(frozen=True)
class MM1SleepParams:
    """
    Attributes
    ----------
    lam : float
        Arrival rate, jobs/s.
    mu : float
        Service rate at f = 1, jobs/s.
    f : float
        Frequency factor.
    states : SleepSequence
    p_active : float
        P0, watts at f.
    beta : float
        CPU-bound fraction. Service stays exponential, at rate mu / (beta/f + 1 - beta).
    p_pre_idle : float, optional
        Power of the pre-tau_1 idle window. None charges it at P0, as the closed form does.
    """
    lam: float
    mu: float
    f: float
    states: SleepSequence = field(default_factory=SleepSequence)
    p_active: float = 0.0
    beta: float = 1.0
    p_pre_idle: float = None

    def __post_init__(self):
        if not isinstance(self.states, SleepSequence):
            object.__setattr__(self, 'states', SleepSequence(tuple(self.states)))
        if self.lam <= 0 or self.mu <= 0:
            raise RangeError(f'Arrival and service rates must be > 0, got lam={self.lam}, mu={self.mu}')
        if not 0 < self.f <= 1:
            raise RangeError(f'Frequency factor {self.f} is outside (0, 1].')

    @property
    def service_rate(self):
        """mu*f for CPU-bound work."""
        if self.beta == 1:
            return self.mu * self.f
        return self.mu / (self.beta / self.f + 1.0 - self.beta)

    @property
    def rho(self):
        return self.lam / self.mu

    @classmethod
    def from_specs(cls, arrivals, service, f, states, table, p_pre_idle=None):
        """
        Parameters from workload specs. Both must be exponential; anything else has no closed form here.

        Parameters
        ----------
        arrivals : ArrivalSpec
        service : ServiceSpec
        f : float
        states : SleepSequence
        table : PowerTable
        p_pre_idle : float or str, optional
            Watts, or "idle" for the C0_idle/S0_idle power at f the simulator uses.
        """
        for what, spec in [('arrival', arrivals), ('service', service)]:
            if not spec.is_exponential:
                raise NoClosedForm(f'The closed form needs an exponential {what} distribution, got '
                                   f'"{spec.kind}".')
        if p_pre_idle == 'idle':
            p_pre_idle = combined_power(table, 'C0_idle', 'S0_idle', f)
        return cls(arrivals.rate, service.rate, f, states, active_power(table, f), service.cpu_bound_fraction,
                   p_pre_idle)


def _check_stable(p):
    if p.lam >= p.service_rate:
        raise Unstable(f'Arrival rate {p.lam:.6g}/s is not below the service rate {p.service_rate:.6g}/s at '
                       f'f={p.f}; the queue is unstable.')


def _occupancy(p):
    """Per state, the probability that an idle period reaches it but not the next one."""
    lam = p.lam
    delays = p.states.delays
    reach = [math.exp(-lam * tau) for tau in delays]
    return [r - r_next for r, r_next in zip(reach, reach[1:] + [0.0])]


def moment_D(p, alpha=1):
    """
    E[D^alpha] of the wake-up delay at the start of a busy period.

    Parameters
    ----------
    p : MM1SleepParams
    alpha : int
        1 or 2.
    """
    if alpha not in (1, 2):
        raise RangeError(f'Moment order must be 1 or 2, got {alpha}')
    return sum(w ** alpha * q for w, q in zip(p.states.latencies, _occupancy(p)))


def busy_cycle_L(p):
    """Expected length of one idle-plus-busy cycle, seconds."""
    _check_stable(p)
    mf = p.service_rate
    return (mf + mf * p.lam * moment_D(p, 1)) / (p.lam * (mf - p.lam))


def mean_power(p):
    """E[P], watts."""
    _check_stable(p)
    lam, L = p.lam, busy_cycle_L(p)
    sleeping = sum(power * q for power, q in zip(p.states.powers, _occupancy(p)))

    # without sleep states the whole idle period is pre-sleep idle
    reach_first = math.exp(-lam * p.states.delays[0]) if p.states else 0.0

    if p.p_pre_idle is None:
        return sleeping / (lam * L) + p.p_active * (1.0 - reach_first / (lam * L))
    # busy and wake-up at P0, pre-sleep idle at its own power
    pre_idle = (1.0 - reach_first) / (lam * L)
    return sleeping / (lam * L) + p.p_active * (1.0 - 1.0 / (lam * L)) + p.p_pre_idle * pre_idle


def mean_response(p):
    """E[R], seconds."""
    _check_stable(p)
    ed, ed2 = moment_D(p, 1), moment_D(p, 2)
    return 1.0 / (p.service_rate - p.lam) + (2 * ed + p.lam * ed2) / (2 * (1 + p.lam * ed))


def mean_response_mm1(lam, mu, f=1.0):
    """E[R] without setup delays: 1/(mu*f - lam)."""
    if lam >= mu * f:
        raise Unstable(f'Arrival rate {lam:.6g}/s is not below the service rate {mu * f:.6g}/s.')
    return 1.0 / (mu * f - lam)


def normalized_budget(rho_b):
    """mu*E[R] of the baseline provisioned for rho_b: 1/(1 - rho_b)."""
    if not 0 <= rho_b < 1:
        raise RangeError(f'Design utilization must be within [0, 1), got {rho_b}')
    return 1.0 / (1.0 - rho_b)


def tail_prob(lam, mu, f, w1, d, strict=False):
    """
    Pr(R >= d) for a single sleep state entered immediately, with an exponentially distributed wake-up of mean w1.

    At w1*(mu*f - lam) = 1 the formula has a removable singularity; the limit (1 + x*d)*exp(-x*d) is returned
    unless strict is set.
    """
    if d < 0:
        raise RangeError(f'Deadline must be >= 0, got {d}')
    if w1 < 0:
        raise RangeError(f'Wake-up latency must be >= 0, got {w1}')
    x = mu * f - lam
    if x <= 0:
        raise Unstable(f'Arrival rate {lam:.6g}/s is not below the service rate {mu * f:.6g}/s.')
    if d == 0:
        return 1.0
    if w1 == 0:
        return math.exp(-x * d)

    denominator = 1.0 - w1 * x
    if abs(denominator) < 1e-9:
        if strict:
            raise SingularParameter(f'w1*(mu*f - lam) is 1 (w1={w1}, mu*f - lam={x}); the formula is singular.')
        return (1.0 + x * d) * math.exp(-x * d)

    value = (math.exp(-x * d) - w1 * x * math.exp(-d / w1)) / denominator
    return min(max(value, 0.0), 1.0)


def evaluate(p, d=None):
    """
    Every closed-form quantity for one parameter set.

    Returns
    -------
    dict
        L, E_D, E_D2, E_R, norm_E_R, E_P and tail (Pr(R >= d)). tail is None when no deadline is given or the
        sequence is not a single immediate state (or empty).
    """
    result = {
        'L': busy_cycle_L(p),
        'E_D': moment_D(p, 1),
        'E_D2': moment_D(p, 2),
        'E_R': mean_response(p),
        'E_P': mean_power(p),
    }
    result['norm_E_R'] = p.mu * result['E_R']

    tail = None
    if d is not None:
        if not p.states:
            tail = tail_prob(p.lam, p.service_rate, 1.0, 0.0, d)
        elif len(p.states) == 1 and p.states[0].entry_delay == 0:
            tail = tail_prob(p.lam, p.service_rate, 1.0, p.states[0].wakeup_latency, d)
        else:
            logger.warning('Pr(R >= d) is only available for a single sleep state entered immediately.')
    result['tail'] = tail
    return result
