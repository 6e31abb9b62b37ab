import logging
from collections import namedtuple
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from chronolens.exceptions import NotObserved, DomainEscape
from chronolens.causal.structure import chronological, CHRONOLOGY_RTOL
from chronolens.geodesics.engine import integrate_geodesic, REACHED_PARAM
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import check_in_domain, companion_unchecked, frame_from_metric

logger = logging.getLogger('causal.observers')

ObserverSpec = namedtuple('ObserverSpec', ['id', 'z', 'eta', 's_range', 's_ref'])
ObserverSpec.__doc__ = """
A freely falling observer μ with μ(s_ref) = z and μ'(s_ref) = η.

:param id: integer observer id
:param z: tuple of chart coordinates
:param eta: tuple of velocity components, future pointing with g(η, η) = -1
:param s_range: (s_a, s_b) proper time interval of the worldline
:param s_ref: proper time at which the worldline passes z
"""

ObserverGrid = namedtuple('ObserverGrid', ['center', 'h_hat', 'members', 'spacing'])
ObserverGrid.__doc__ = """
:param center: :class:`ObserverSpec` of the central observer (z₀, η₀)
:param h_hat: radius ĥ of the Sasaki ball the members are sampled in
:param members: tuple of :class:`ObserverSpec`, member 0 is the center
:param spacing: typical distance between neighbouring members, 0 for a single worldline
"""

EarliestTime = namedtuple('EarliestTime', ['s', 'event', 'flagged'])
EarliestTime.__doc__ = """
:param s: earliest (sign +) or latest (sign -) observation time
:param event: μ(s)
:param flagged: True when the predicate never flipped on the interval and `s` is the interval boundary
"""

SeparationCheck = namedtuple('SeparationCheck', ['passed', 'p_minus', 'p_plus', 'failures'])
SeparationCheck.__doc__ = """
:param passed: all ordering conditions hold for all members
:param p_minus: μ₀(s₋₁)
:param p_plus: μ₀(s₊₁)
:param failures: list of (member id, condition name) pairs that failed
"""


def make_observer(spec, z, eta, s_range=(-1., 1.), s_ref=0., observer_id=0):
    """
    Builds an :class:`ObserverSpec`, normalizing η to unit proper time.

    :raises ValueError: if η is not future pointing timelike
    """
    z = check_in_domain(spec, z)
    eta = np.asarray(eta, dtype=float)
    g = metric_family(spec).components(z)
    norm = eta @ g @ eta
    if not norm < 0 or eta[0] <= 0:
        raise ValueError("Observer velocity {} is not future pointing timelike".format(eta.tolist()))
    eta = eta / np.sqrt(-norm)
    s_a, s_b = float(s_range[0]), float(s_range[1])
    if not s_a <= s_ref <= s_b or s_a >= s_b:
        raise ValueError("Observer interval {} must contain the reference time {}".format(s_range, s_ref))
    return ObserverSpec(int(observer_id), tuple(float(v) for v in z), tuple(float(v) for v in eta), (s_a, s_b),
                        float(s_ref))


class Worldline:
    """
    The integrated worldline of an observer on its whole interval, integrated forward and backward from z.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param observer: :class:`ObserverSpec`
    """

    def __init__(self, spec, observer):
        self.spec = spec
        self.observer = observer
        z = np.array(observer.z)
        eta = np.array(observer.eta)
        s_a, s_b = observer.s_range
        self.s_ref = observer.s_ref
        self.forward = integrate_geodesic(spec, z, eta, s_b - self.s_ref) if s_b > self.s_ref else None
        self.backward = integrate_geodesic(spec, z, -eta, self.s_ref - s_a) if s_a < self.s_ref else None
        self.escaped = any(segment is not None and segment.termination != REACHED_PARAM
                           for segment in (self.forward, self.backward))
        self.s_a = self.s_ref - (self.backward.s_end if self.backward is not None else 0.)
        self.s_b = self.s_ref + (self.forward.s_end if self.forward is not None else 0.)

    def _state(self, s):
        s = np.clip(np.asarray(s, dtype=float), self.s_a, self.s_b)
        n = self.spec.dim
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        out = np.empty(s.shape + (2 * n,))
        future = s >= self.s_ref
        if np.any(future):
            out[future] = self.forward.state(s[future] - self.s_ref) if self.forward is not None else \
                np.concatenate([self.observer.z, self.observer.eta])
        if np.any(~future):
            state = self.backward.state(self.s_ref - s[~future])
            out[~future] = np.concatenate([state[..., :n], -state[..., n:]], axis=-1)
        return out[0] if scalar else out

    def position(self, s):
        """
        Unwrapped chart position μ(s)
        """
        return self._state(s)[..., :self.spec.dim]

    def velocity(self, s):
        return self._state(s)[..., self.spec.dim:]

    def event(self, s):
        """
        μ(s) with periodic coordinates wrapped into the domain
        """
        return metric_family(self.spec).wrap(self.position(s))

    def samples(self, count):
        s = np.linspace(self.s_a, self.s_b, count)
        return s, self.position(s)


@lru_cache(maxsize=4096)
def worldline(spec, observer):
    """
    Cached :class:`Worldline` of an observer
    """
    return Worldline(spec, observer)


def earliest_obs_time(spec, observer, q, sign=1, tol=1e-8, rtol=CHRONOLOGY_RTOL):
    """
    The earliest observation time f⁺_μ(q) = inf{s : τ(q, μ(s)) > 0} (sign +1), or the latest time
    f⁻_μ(q) = sup{s : τ(μ(s), q) > 0} (sign -1), by bisection of the monotone chronology predicate.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param observer: :class:`ObserverSpec`
    :param q: source event
    :param sign: +1 or -1
    :param tol: bisection tolerance in s
    :param rtol: relative margin tolerance of the chronology predicate
    :return: :class:`EarliestTime`
    :raises NotObserved: if the light cone of q misses the worldline on its interval
    """
    q = check_in_domain(spec, q)
    line = worldline(spec, observer)

    if sign > 0:
        def predicate(s):
            return chronological(spec, q, line.event(s), rtol=rtol)
    else:
        def predicate(s):
            return not chronological(spec, line.event(s), q, rtol=rtol)

    lo, hi = line.s_a, line.s_b
    if not predicate(hi):
        if sign > 0:
            raise NotObserved("The future light cone of {} misses observer {} on [{:.6g}, {:.6g}]".format(
                q.tolist(), observer.id, lo, hi))
        logger.info("Observer %d sees %s in its past on its whole interval, returning the boundary", observer.id, q)
        return EarliestTime(hi, line.event(hi), True)
    if predicate(lo):
        if sign < 0:
            raise NotObserved("The past light cone of {} misses observer {} on [{:.6g}, {:.6g}]".format(
                q.tolist(), observer.id, lo, hi))
        logger.info("Observer %d already sees %s at the start of its interval, returning the boundary",
                    observer.id, q)
        return EarliestTime(lo, line.event(lo), True)
    while hi - lo > tol:
        middle = 0.5 * (lo + hi)
        if predicate(middle):
            hi = middle
        else:
            lo = middle
    s = hi if sign > 0 else lo
    return EarliestTime(s, line.event(s), False)


def _ball_samples(dimension, count, sequence):
    if count <= 0:
        return np.zeros((0, dimension))
    if sequence == 'sobol':
        engine = qmc.Sobol(dimension, scramble=False)
    else:
        engine = qmc.Halton(dimension, scramble=False)
    accepted = []
    while len(accepted) < count:
        batch = 2. * engine.random(max(64, 4 * count)) - 1.
        accepted.extend(batch[np.sum(batch ** 2, axis=1) <= 1.])
    return np.array(accepted[:count])


def observer_congruence(spec, z0, eta0, h_hat, count, s_range=(-1., 1.), s_ref=0., velocity_spread=0.,
                        sequence='halton'):
    """
    Samples a congruence of freely falling observers in the Sasaki ball of radius ĥ around (z₀, η₀).

    Member 0 is the center. The others are placed deterministically by an unscrambled low-discrepancy sequence:
    positions are offset along the spatial Lorentz frame at z₀, velocities along the same frame scaled by
    `velocity_spread`.

    :raises DomainEscape: listing members whose worldline leaves the domain on the interval
    :return: :class:`ObserverGrid`
    """
    z0 = check_in_domain(spec, z0)
    family = metric_family(spec)
    n = spec.dim
    center = make_observer(spec, z0, eta0, s_range, s_ref, 0)
    frame = frame_from_metric(family.components(z0))
    members = [center]
    if h_hat > 0 and count > 1:
        dimension = (n - 1) * (2 if velocity_spread > 0 else 1)
        for i, point in enumerate(_ball_samples(dimension, count - 1, sequence), start=1):
            z = z0 + h_hat * point[:n - 1] @ frame[1:]
            eta = np.array(center.eta)
            if velocity_spread > 0:
                eta = eta + velocity_spread * h_hat * point[n - 1:] @ frame[1:]
            members.append(make_observer(spec, family.wrap(z), eta, s_range, s_ref, i))
        spacing = 2. * h_hat / (count ** (1. / (n - 1)))
    else:
        spacing = 0.
    escaped = [member.id for member in members if worldline(spec, member).escaped]
    if escaped:
        raise DomainEscape(escaped)
    logger.info("Observer congruence with %d members, ĥ=%.4g, spacing %.4g", len(members), h_hat, spacing)
    return ObserverGrid(center, float(h_hat), tuple(members), float(spacing))


def worldline_distance(spec, observer, x, samples=512):
    """
    g⁺ distance (measured at x) from x to the worldline of an observer, and the closest proper time.
    """
    x = np.asarray(x, dtype=float)
    family = metric_family(spec)
    chol = np.linalg.cholesky(companion_unchecked(family.components(x))).T
    line = worldline(spec, observer)

    def distance(s):
        return np.linalg.norm(family.difference(line.position(s), x) @ chol.T, axis=-1)

    s, _ = line.samples(samples)
    values = distance(s)
    i = int(np.argmin(values))
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, len(s) - 1)]
    if hi > lo:
        result = minimize_scalar(lambda t: float(distance(t)), bounds=(lo, hi), method='bounded',
                                 options=dict(xatol=1e-12))
        if result.fun < values[i]:
            return float(result.fun), float(result.x)
    return float(values[i]), float(s[i])


def in_tube(spec, grid, x):
    """
    Membership of x in the observation tube U: within ĥ of the central worldline, or closer than half the
    member spacing to some member worldline.
    """
    x = check_in_domain(spec, x)
    if worldline_distance(spec, grid.center, x)[0] <= grid.h_hat * (1. + 1e-12):
        return True
    if grid.spacing <= 0:
        return False
    return any(worldline_distance(spec, member, x)[0] < 0.5 * grid.spacing for member in grid.members[1:])


def diamond_endpoints(spec, grid, schedule):
    """
    p⁻ = μ₀(s₋₁) and p⁺ = μ₀(s₊₁) of a schedule (s₋₂, s₋₁, s₊₁, s₊₂[, s₊₃, s₊₄])
    """
    line = worldline(spec, grid.center)
    return line.event(schedule[1]), line.event(schedule[2])


def check_separation(spec, grid, schedule):
    """
    Checks the ordering conditions μ(s₋₂) ≪ μ₀(s₋₁) and μ₀(s₊₁) ≪ μ(s₊₂) (and μ₀(s₊₃) ≪ μ(s₊₄) when the schedule
    has six entries) for every member μ of the congruence.

    :return: :class:`SeparationCheck`
    """
    schedule = [float(s) for s in schedule]
    if len(schedule) not in (4, 6) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("Schedule must be 4 or 6 increasing times, got {}".format(schedule))
    center = worldline(spec, grid.center)
    p_minus, p_plus = diamond_endpoints(spec, grid, schedule)
    failures = []
    for member in grid.members:
        line = worldline(spec, member)
        if not chronological(spec, line.event(schedule[0]), p_minus):
            failures.append((member.id, 's-2 before p-'))
        if not chronological(spec, p_plus, line.event(schedule[3])):
            failures.append((member.id, 's+2 after p+'))
        if len(schedule) == 6 and not chronological(spec, center.event(schedule[4]), line.event(schedule[5])):
            failures.append((member.id, 's+4 after s+3'))
    if failures:
        logger.warning("Observer schedule %s violates %d ordering conditions", schedule, len(failures))
    return SeparationCheck(not failures, p_minus, p_plus, failures)
