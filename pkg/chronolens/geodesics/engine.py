import json
import logging
from collections import namedtuple

import numpy as np
from scipy.integrate import RK45, OdeSolution

from chronolens.exceptions import StepFailure, OutOfDomain
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import check_in_domain, christoffel_unchecked, companion_unchecked, NULL_TOL

logger = logging.getLogger('geodesics.engine')

REACHED_PARAM = 'reached_param'
LEFT_DOMAIN = 'left_domain'
LEFT_DIAMOND = 'left_diamond'

#: accepted steps between two projections of a null velocity back onto the cone
RENORMALIZE_EVERY = 50


class GeodesicSegment(namedtuple('GeodesicSegment', ['spec', 'x0', 'xi0', 's', 'x', 'xdot', 'norms', 'termination',
                                                     'dense'])):
    """
    A numerically integrated geodesic. Coordinates of periodic axes are unwrapped along the segment.
    """
    __slots__ = ()

    @property
    def s_end(self):
        return float(self.s[-1])

    def state(self, s):
        if self.dense is None:
            return np.concatenate([self.x[0], self.xdot[0]]) if np.ndim(s) == 0 else \
                np.tile(np.concatenate([self.x[0], self.xdot[0]]), (len(s), 1))
        return self.dense(s).T

    def position(self, s):
        n = len(self.x0)
        return self.state(s)[..., :n]

    def velocity(self, s):
        n = len(self.x0)
        return self.state(s)[..., n:]


GeodesicSegment.__doc__ += """
:param spec: :class:`~chronolens.metrics.catalog.MetricSpec` the geodesic was integrated in
:param x0: initial event
:param xi0: initial velocity
:param s: accepted affine parameters, strictly monotone
:param x: positions at the accepted parameters
:param xdot: velocities at the accepted parameters
:param norms: g(ẋ, ẋ) at the accepted parameters
:param termination: one of 'reached_param', 'left_domain', 'left_diamond'
:param dense: :class:`scipy.integrate.OdeSolution` over the whole segment, None for a constant segment
"""

BundleResult = namedtuple('BundleResult', ['s', 'x', 'xdot', 'exit_param'])
BundleResult.__doc__ = """
:param s: uniform grid of affine parameters, shape (K,)
:param x: positions, shape (m, K, n). NaN after a ray left the domain
:param xdot: velocities, same shape as `x`
:param exit_param: affine parameter at which each ray stopped (s_max if it never did)
"""


def _geodesic_rhs(family, y):
    """
    Right hand side of ẍ^k = -Γ^k_ij ẋ^i ẋ^j for states of shape (..., 2n)
    """
    n = family.dim
    x = family.clamp(y[..., :n])
    v = y[..., n:]
    gamma = christoffel_unchecked(family, x)
    acceleration = -np.einsum('...kij,...i,...j->...k', gamma, v, v)
    return np.concatenate([v, acceleration], axis=-1)


def project_null(g, v):
    """
    Moves v onto the null cone of g by changing only its time component. The root nearest to the current
    time component is taken, so past pointing vectors stay past pointing. Vectorized.
    """
    g = np.asarray(g)
    v = np.array(v, dtype=float)
    spatial = v[..., 1:]
    a = g[..., 0, 0]
    b = 2. * np.einsum('...i,...i->...', g[..., 0, 1:], spatial)
    c = np.einsum('...i,...ij,...j->...', spatial, g[..., 1:, 1:], spatial)
    root = np.sqrt(np.maximum(b ** 2 - 4. * a * c, 0.))
    first = (-b - root) / (2. * a)
    second = (-b + root) / (2. * a)
    v[..., 0] = np.where(np.abs(first - v[..., 0]) <= np.abs(second - v[..., 0]), first, second)
    return v


def _is_null(family, x, xi):
    g = family.components(x)
    value = xi @ g @ xi
    return abs(value) <= NULL_TOL * (xi @ companion_unchecked(g) @ xi)


def _restart(fun, solver, y, s_max, tol):
    first_step = min(solver.step_size, abs(s_max - solver.t))
    return RK45(fun, solver.t, y, s_max, rtol=tol, atol=tol, first_step=first_step)


def _bisect_exit(interpolant, s_inside, s_outside, inside, n, tol=1e-12):
    while abs(s_outside - s_inside) > tol * (1. + abs(s_inside)):
        middle = 0.5 * (s_inside + s_outside)
        if inside(interpolant(middle)[:n]):
            s_inside = middle
        else:
            s_outside = middle
    return s_inside


def integrate_geodesic(spec, x, xi, s_max, tol=1e-9, region=None):
    """
    Integrates the geodesic equation with an adaptive embedded Runge-Kutta 4(5) stepper.

    Null initial velocities are projected back onto the null cone every :data:`RENORMALIZE_EVERY` accepted
    steps. The integration stops at `s_max`, when the geodesic leaves the chart domain, or when the optional
    `region` predicate becomes false. Exits are located on the dense output by bisection. A negative `s_max`
    integrates towards the past.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param x: initial event
    :param xi: initial velocity, nonzero
    :param s_max: final affine parameter
    :param tol: relative and absolute tolerance of the stepper
    :param region: optional callable taking a position and returning whether the geodesic is still inside
    :return: :class:`GeodesicSegment`
    :raises StepFailure: if the stepper fails, with the last accepted state
    """
    x = check_in_domain(spec, x)
    xi = np.asarray(xi, dtype=float)
    family = metric_family(spec)
    n = spec.dim
    if not np.any(xi):
        raise ValueError("Initial velocity must be nonzero")
    null = _is_null(family, x, xi)
    g0 = family.components(x)

    def inside(position):
        return bool(family.in_domain(position)) and (region is None or region(position))

    def fun(_, y):
        return _geodesic_rhs(family, y)

    y0 = np.concatenate([x, xi])
    ts, ys, interpolants = [0.], [y0], []
    termination = REACHED_PARAM
    solver = RK45(fun, 0., y0, s_max, rtol=tol, atol=tol)
    accepted = 0
    while solver.status == 'running':
        message = solver.step()
        if solver.status == 'failed':
            raise StepFailure("Geodesic integration failed at s={:.6g}: {}".format(solver.t, message),
                              last_state=(ts[-1], ys[-1][:n], ys[-1][n:]))
        interpolant = solver.dense_output()
        if not inside(solver.y[:n]):
            s_exit = _bisect_exit(interpolant, ts[-1], solver.t, inside, n)
            if s_exit != ts[-1]:
                interpolants.append(interpolant)
                ts.append(s_exit)
                ys.append(interpolant(s_exit))
            termination = LEFT_DOMAIN if not family.in_domain(solver.y[:n]) else LEFT_DIAMOND
            break
        interpolants.append(interpolant)
        ts.append(solver.t)
        ys.append(solver.y.copy())
        accepted += 1
        if null and accepted % RENORMALIZE_EVERY == 0 and solver.status == 'running':
            y = solver.y.copy()
            y[n:] = project_null(family.components(family.clamp(y[:n])), y[n:])
            ys[-1] = y
            solver = _restart(fun, solver, y, s_max, tol)

    s = np.array(ts)
    states = np.array(ys)
    positions, velocities = states[:, :n], states[:, n:]
    g = family.components(family.clamp(positions))
    norms = np.einsum('ki,kij,kj->k', velocities, g, velocities)
    dense = OdeSolution(s, interpolants) if interpolants else None
    logger.debug("Geodesic from %s: %d steps, termination %s at s=%.6g, norm drift %.3g", x, len(s) - 1,
                 termination, s[-1], np.abs(norms - xi @ g0 @ xi).max())
    return GeodesicSegment(spec, x, xi, s, positions, velocities, norms, termination, dense)


def exp_map(spec, x, xi):
    """
    The exponential map exp_x(ξ), i.e. the geodesic with initial velocity ξ evaluated at s = 1.
    Periodic coordinates of the result are wrapped into the domain.

    :raises OutOfDomain: if the geodesic leaves the chart before s = 1
    """
    x = check_in_domain(spec, x)
    if not np.any(xi):
        return x.copy()
    segment = integrate_geodesic(spec, x, xi, 1.)
    if segment.termination != REACHED_PARAM:
        raise OutOfDomain(segment.x[-1].tolist(), list(spec.domain))
    return metric_family(spec).wrap(segment.x[-1])


def integrate_bundle(spec, x0s, xis, s_max, samples, tol=1e-9, t_stop=None):
    """
    Integrates many geodesics in one vectorized Runge-Kutta run and samples them on a uniform affine grid.
    A ray that leaves the domain (or whose time coordinate passes `t_stop`) is frozen and the stepper is
    restarted for the remaining rays.

    :param x0s: initial events, shape (m, n)
    :param xis: initial velocities, shape (m, n)
    :param s_max: final affine parameter, positive
    :param samples: number of grid samples K
    :return: :class:`BundleResult`
    """
    family = metric_family(spec)
    n = spec.dim
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    m = len(x0s)
    grid = np.linspace(0., s_max, samples)
    xs = np.full((m, samples, n), np.nan)
    vs = np.full((m, samples, n), np.nan)
    exit_param = np.full(m, float(s_max))
    if m == 0:
        return BundleResult(grid, xs, vs, exit_param)

    g = family.components(x0s)
    null = np.abs(np.einsum('ki,kij,kj->k', xis, g, xis)) <= \
        NULL_TOL * np.einsum('ki,kij,kj->k', xis, companion_unchecked(g), xis)
    alive = family.in_domain(x0s).copy()
    exit_param[~alive] = 0.

    def fun(_, y):
        y = y.reshape(m, 2 * n)
        dy = np.zeros_like(y)
        dy[alive] = _geodesic_rhs(family, y[alive])
        return dy.ravel()

    def still_inside(positions):
        ok = family.in_domain(positions)
        if t_stop is not None:
            ok &= positions[..., 0] <= t_stop
        return ok

    y = np.concatenate([x0s, xis], axis=1)
    xs[alive, 0], vs[alive, 0] = x0s[alive], xis[alive]
    next_sample = 1
    solver = RK45(fun, 0., y.ravel(), s_max, rtol=tol, atol=tol)
    accepted = 0
    while solver.status == 'running' and np.any(alive):
        message = solver.step()
        if solver.status == 'failed':
            raise StepFailure("Bundle integration failed at s={:.6g}: {}".format(solver.t, message))
        interpolant = solver.dense_output()
        last_sample = np.searchsorted(grid, solver.t, side='right')
        if last_sample > next_sample:
            states = interpolant(grid[next_sample:last_sample]).T.reshape(-1, m, 2 * n)
            positions = states[..., :n]
            valid = still_inside(positions) & alive[None, :]
            # a ray stays dead once it left
            valid = np.cumprod(valid, axis=0).astype(bool)
            block = np.swapaxes(states, 0, 1)
            xs[:, next_sample:last_sample] = np.where(valid.T[..., None], block[..., :n], np.nan)
            vs[:, next_sample:last_sample] = np.where(valid.T[..., None], block[..., n:], np.nan)
            next_sample = last_sample
        y = solver.y.reshape(m, 2 * n)
        leaving = alive & ~still_inside(y[:, :n])
        accepted += 1
        renormalize = accepted % RENORMALIZE_EVERY == 0 and np.any(null & alive)
        if np.any(leaving) or renormalize:
            exit_param[leaving] = solver.t
            alive &= ~leaving
            y = y.copy()
            if renormalize:
                mask = null & alive
                y[mask, n:] = project_null(family.components(family.clamp(y[mask, :n])), y[mask, n:])
            if solver.status == 'running':
                solver = _restart(fun, solver, y.ravel(), s_max, tol)
    xs[:, next_sample:] = np.nan
    vs[:, next_sample:] = np.nan
    if solver.status == 'finished':
        final = solver.y.reshape(m, 2 * n)
        ok = alive & still_inside(final[:, :n])
        xs[ok, -1], vs[ok, -1] = final[ok, :n], final[ok, n:]
    logger.debug("Bundle of %d rays integrated to s=%.4g, %d left early", m, s_max, np.sum(exit_param < s_max))
    return BundleResult(grid, xs, vs, exit_param)


def write_segment(segment, fh):
    """
    Writes a segment as JSON lines: one metadata line followed by one line per accepted sample.

    :param fh: open text file handle
    """
    header = dict(kind='geodesic_segment', metric=segment.spec.to_dict(), x0=segment.x0.tolist(),
                  xi0=segment.xi0.tolist(), termination=segment.termination, samples=len(segment.s))
    fh.write(json.dumps(header, sort_keys=True) + '\n')
    for s, x, xdot, norm in zip(segment.s, segment.x, segment.xdot, segment.norms):
        fh.write(json.dumps(dict(s=float(s), x=x.tolist(), xdot=xdot.tolist(), norm=float(norm)),
                            sort_keys=True) + '\n')


def read_segment_samples(fh):
    """
    Reads back a segment written by :func:`write_segment`.

    :return: (header dict, s array, x array, xdot array, norms array)
    """
    lines = [json.loads(line) for line in fh if line.strip()]
    header, rows = lines[0], lines[1:]
    return (header, np.array([r['s'] for r in rows]), np.array([r['x'] for r in rows]),
            np.array([r['xdot'] for r in rows]), np.array([r['norm'] for r in rows]))
