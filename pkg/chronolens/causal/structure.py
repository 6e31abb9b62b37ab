import logging
from collections import namedtuple

import numpy as np
from scipy.optimize import least_squares

from chronolens.exceptions import SolverNoConverge, IndeterminateRelation
from chronolens.geodesics.engine import integrate_geodesic, REACHED_PARAM
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import check_in_domain, companion_unchecked, frame_from_metric

logger = logging.getLogger('causal.structure')

#: "τ became positive" threshold for time separations obtained by shooting
TAU_POS_TOL = 1e-6
#: "τ became positive" threshold for events sampled along an integrated null geodesic of the base event;
#: a position error δ off the cone gives τ of order √δ
TAU_SAMPLED_TOL = 1e-4
#: relative threshold on the causal margin Δt - d for closed form chronology
CHRONOLOGY_RTOL = 1e-12

CHRONOLOGICAL = 'chronological'
HORISMOS = 'horismos'
NONE = 'none'

Separation = namedtuple('Separation', ['tau', 'approximate', 'method'])
Separation.__doc__ = """
:param tau: time separation τ(x, y) ≥ 0
:param approximate: True when the value is a lower bound because shooting did not converge
:param method: 'time_function', 'closed_form', 'spatial_shooting' or 'shooting'
"""

CausalRelation = namedtuple('CausalRelation', ['kind', 'tau', 'witness'])
CausalRelation.__doc__ = """
:param kind: 'chronological', 'horismos' or 'none'
:param tau: time separation
:param witness: :class:`NullConnector` realizing a horismos relation when one was computed, else None
"""

NullConnector = namedtuple('NullConnector', ['direction', 'parameter', 'residual'])
NullConnector.__doc__ = """
:param direction: future null vector ξ at x, normalized to unit time component in the Lorentz frame at x
:param parameter: affine parameter r with exp_x(r ξ) = y
:param residual: g⁺ norm of the endpoint mismatch
"""


def _endpoint(spec, x, w, length=1.):
    """
    Endpoint of the geodesic from x with velocity w at parameter `length`. If the geodesic leaves the chart the
    last point is linearly extrapolated so that residuals stay continuous for the least squares solvers.
    """
    segment = integrate_geodesic(spec, x, w, length, tol=1e-10)
    if segment.termination == REACHED_PARAM:
        return segment.x[-1]
    return segment.x[-1] + (length - segment.s_end) * segment.xdot[-1]


def spatial_distance(spec, y1, y2, starts=4):
    """
    Distance between two points of the spatial factor of a product family. Closed form where the family has one,
    otherwise the shortest of several converged geodesic shooting solves.
    """
    family = metric_family(spec)
    closed = family.spatial_distance(y1, y2)
    if closed is not None:
        return float(closed)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    x = np.concatenate([[0.5 * (family.lower[0] + family.upper[0])], y1])
    if not np.any(y2 - y1):
        return 0.
    rng = np.random.default_rng(0)
    best = np.inf
    for start in range(starts):
        w0 = y2 - y1
        if start:
            w0 = w0 * (1. + 0.2 * rng.standard_normal()) + 0.2 * np.linalg.norm(w0) * rng.standard_normal(len(w0))

        def residual(w):
            return _endpoint(spec, x, np.concatenate([[0.], w]))[1:] - y2

        solution = least_squares(residual, w0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        if np.linalg.norm(solution.fun) < 1e-9:
            g = family.components(x)
            best = min(best, float(np.sqrt(solution.x @ g[1:, 1:] @ solution.x)))
    if not np.isfinite(best):
        raise SolverNoConverge("Spatial shooting from {} to {} did not converge".format(y1, y2))
    return best


def chronology_margin(spec, x, y):
    """
    The causal margin Δt - d(x, y): positive exactly when x ≪ y. Available for the closed form families,
    for conformally flat families through their flat background, and for product families with a
    shooting based spatial distance. Returns None when no margin exists for the family.
    """
    family = metric_family(spec)
    margin = family.chronology_margin(x, y)
    if margin is not None:
        return margin
    if hasattr(family, 'spatial_exponent'):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (y[0] - x[0]) - spatial_distance(spec, x[1:], y[1:])
    return None


def _shooting_separation(spec, x, y, starts):
    family = metric_family(spec)
    g_x = family.components(x)
    g_plus_y = companion_unchecked(family.components(y))
    frame = frame_from_metric(g_x)
    d = family.difference(y, x)
    base = np.linalg.solve(frame.T, d)
    rng = np.random.default_rng(1)
    best_tau, converged = 0., False
    for start in range(max(starts, 8)):
        guess = base.copy()
        if start:
            guess[1:] *= 1. + 0.3 * rng.uniform(-1, 1)
            guess[1:] += 0.2 * np.linalg.norm(guess[1:]) * rng.standard_normal(len(guess) - 1)
            guess[0] = max(guess[0] * (1. + 0.2 * rng.uniform(-1, 1)), np.linalg.norm(guess[1:]) * 1.01)

        def residual(c):
            error = family.difference(y, _endpoint(spec, x, c @ frame))
            return np.linalg.cholesky(g_plus_y).T @ error

        try:
            solution = least_squares(residual, guess, xtol=1e-13, ftol=1e-13, gtol=1e-13, max_nfev=200)
        except Exception as e:
            logger.debug("Shooting start %d failed: %s", start, e)
            continue
        if np.linalg.norm(solution.fun) > 1e-8:
            continue
        converged = True
        c = solution.x
        if c[0] > 0 and c[0] ** 2 > np.sum(c[1:] ** 2):
            best_tau = max(best_tau, float(np.sqrt(c[0] ** 2 - np.sum(c[1:] ** 2))))
    return best_tau, converged


def time_separation(spec, x, y, starts=8, strict=False):
    """
    Time separation τ(x, y), the supremum of proper times of causal curves from x to y.

    Closed form sqrt((Δt² - d²)₊) for the product families with a closed form or shooting spatial distance,
    otherwise the longest timelike geodesic among multi-start shooting solutions of exp_x(w) = y.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param x: first event
    :param y: second event
    :param starts: number of shooting starts, at least 8 are used
    :param strict: raise :class:`~chronolens.exceptions.SolverNoConverge` instead of returning an approximate value
    :return: :class:`Separation`
    """
    x = check_in_domain(spec, x)
    y = check_in_domain(spec, y)
    family = metric_family(spec)
    dt = y[0] - x[0]
    if dt <= 0:
        return Separation(0., False, 'time_function')
    if family.chronology == 'closed_form' or hasattr(family, 'spatial_exponent'):
        d = family.spatial_distance(x[1:], y[1:])
        method = 'closed_form'
        if d is None:
            d = spatial_distance(spec, x[1:], y[1:])
            method = 'spatial_shooting'
        return Separation(float(np.sqrt(max(dt ** 2 - float(d) ** 2, 0.))), False, method)
    margin = chronology_margin(spec, x, y)
    if margin is not None and margin <= 0:
        return Separation(0., False, 'closed_form')
    tau, converged = _shooting_separation(spec, x, y, starts)
    if not converged:
        if strict:
            raise SolverNoConverge("No shooting start from {} to {} converged".format(x.tolist(), y.tolist()))
        logger.debug("Time separation from %s to %s is an approximate lower bound", x, y)
        return Separation(tau, True, 'shooting')
    return Separation(tau, False, 'shooting')


def chronological(spec, x, y, rtol=CHRONOLOGY_RTOL, tau_tol=TAU_POS_TOL):
    """
    The predicate x ≪ y. Uses the causal margin with relative tolerance `rtol` where the family has one,
    else τ(x, y) > `tau_tol`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y[0] <= x[0]:
        return False
    margin = chronology_margin(spec, x, y)
    if margin is not None:
        return bool(margin > rtol * (1. + abs(y[0] - x[0])))
    return time_separation(spec, x, y).tau > tau_tol


def causally_precedes(spec, x, y, tol=1e-9):
    """
    The predicate x ≤ y (y ∈ J⁺(x)).
    """
    margin = chronology_margin(spec, x, y)
    if margin is not None:
        return bool(margin >= -tol * (1. + abs(float(y[0]) - float(x[0]))))
    return causal_relation(spec, x, y).kind != NONE


def null_direction(frame, u):
    """
    Future null vector e₀ + Σ u_a e_a of a Lorentz frame for a unit spatial direction u
    """
    return frame[0] + np.asarray(u) @ frame[1:]


def null_connector(spec, x, y, starts=8, tol=1e-6):
    """
    Finds a future null geodesic from x through y by shooting over launch directions and affine length.
    The launch direction is parametrized as u = normalize(u₀ + B p) around the flat guess u₀.

    :return: :class:`NullConnector` or None when no start converged to a g⁺ residual below `tol`
    """
    x = check_in_domain(spec, x)
    y = check_in_domain(spec, y)
    family = metric_family(spec)
    n = spec.dim
    frame = frame_from_metric(family.components(x))
    chol = np.linalg.cholesky(companion_unchecked(family.components(y))).T
    base = np.linalg.solve(frame.T, family.difference(y, x))
    if base[0] <= 0:
        return None
    u_flat = base[1:] / max(np.linalg.norm(base[1:]), 1e-300)
    rng = np.random.default_rng(2)
    best = None
    for start in range(starts):
        u0 = u_flat if start == 0 else u_flat + 0.3 * rng.standard_normal(n - 1)
        if start and start % 2 == 1:
            u0 = -u0
        u0 = u0 / np.linalg.norm(u0)
        # orthonormal complement of u0 in the spatial frame
        basis = np.linalg.svd(u0[None, :])[2][1:] if n > 2 else np.zeros((0, 1))
        r0 = base[0] if start == 0 else base[0] * (1. + 0.5 * start / starts)

        def direction(p):
            u = u0 + p[:-1] @ basis if n > 2 else u0
            return null_direction(frame, u / np.linalg.norm(u))

        def residual(p):
            return chol @ family.difference(y, _endpoint(spec, x, direction(p) * p[-1]))

        p0 = np.concatenate([np.zeros(n - 2), [r0]])
        solution = least_squares(residual, p0, xtol=1e-13, ftol=1e-13, gtol=1e-13, max_nfev=200)
        error = float(np.linalg.norm(solution.fun))
        candidate = NullConnector(direction(solution.x), float(solution.x[-1]), error)
        if solution.x[-1] > 0 and (best is None or error < best.residual):
            best = candidate
        if error < tol:
            return candidate
    if best is not None:
        logger.debug("Null shooting from %s to %s: best residual %.3g", x, y, best.residual)
    return best


def causal_relation(spec, x, y, tau_tol=TAU_POS_TOL, none_threshold=1e-3):
    """
    Classifies the causal relation of x to y.

    :return: :class:`CausalRelation`
    :raises IndeterminateRelation: when null shooting neither converges nor clearly fails
    """
    x = check_in_domain(spec, x)
    y = check_in_domain(spec, y)
    if chronological(spec, x, y, tau_tol=tau_tol):
        return CausalRelation(CHRONOLOGICAL, time_separation(spec, x, y).tau, None)
    margin = chronology_margin(spec, x, y)
    if margin is not None:
        dt = abs(y[0] - x[0])
        if margin >= -1e-9 * (1. + dt) and y[0] > x[0]:
            return CausalRelation(HORISMOS, 0., None)
        return CausalRelation(NONE, 0., None)
    if y[0] <= x[0]:
        return CausalRelation(NONE, 0., None)
    connector = null_connector(spec, x, y)
    if connector is not None and connector.residual < 1e-6:
        return CausalRelation(HORISMOS, 0., connector)
    if connector is None or connector.residual > none_threshold:
        return CausalRelation(NONE, 0., None)
    raise IndeterminateRelation("Null shooting from {} to {} stalled at residual {:.3g}".format(
        x.tolist(), y.tolist(), connector.residual))
