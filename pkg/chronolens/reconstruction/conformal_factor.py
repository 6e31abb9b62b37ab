import logging
from collections import namedtuple

import numpy as np
from scipy.integrate import solve_ivp

from chronolens.exceptions import ChronoLensError, LeftVacuumRegion, StepFailure
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import check_in_domain, christoffel_unchecked, ricci

logger = logging.getLogger('reconstruction.conformal_factor')

ConformalFactorTrack = namedtuple('ConformalFactorTrack', ['s', 'x', 'f', 'df', 'dense'])
ConformalFactorTrack.__doc__ = """
The conformal factor f along a null geodesic.

:param s: sample parameters
:param x: geodesic positions at the samples
:param f: f at the samples
:param df: covector ∇f at the samples
:param dense: :class:`scipy.integrate.OdeSolution` of the state (x, ẋ, f, ∇f)
"""


def factor_hessian(g, g_inv, ric, df):
    """
    ∇∇f for a factor making e^{2f} g Ricci flat, from the conformal transformation law of the Ricci tensor
    and its trace (n ≥ 3):
    ∇_j∇_k f = f_j f_k + (Ric_jk - (R / (2(n-1)) + (n-2)/2 |df|²) g_jk) / (n-2)
    """
    n = g.shape[0]
    scalar = np.einsum('pq,pq->', g_inv, ric)
    squared = df @ g_inv @ df
    return np.outer(df, df) + (ric - (scalar / (2. * (n - 1)) + 0.5 * (n - 2) * squared) * g) / (n - 2)


def _rhs(spec, family):
    n = spec.dim

    def rhs(_, y):
        x, v, df = y[:n], y[n:2 * n], y[2 * n + 1:]
        gamma = christoffel_unchecked(family, x)
        g = family.components(x)
        hessian = factor_hessian(g, np.linalg.inv(g), ricci(spec, x), df)
        acceleration = -np.einsum('kij,i,j->k', gamma, v, v)
        d_df = v @ hessian + np.einsum('mjk,j,m->k', gamma, v, df)
        return np.concatenate([v, acceleration, [v @ df], d_df])
    return rhs


def conformal_factor_ode(spec, x0, xi0, f0, df0, s_max, region=None, tol=1e-10, samples=101):
    """
    Integrates the conformal factor f with e^{2f} g Ricci flat along the null geodesic γ of g from x0 with
    initial velocity ξ0, given f and ∇f at γ(0). The state (γ, γ̇, f, ∇f) evolves by the geodesic equation,
    df/ds = γ̇^k ∇_k f and d(∇_k f)/ds = γ̇^j ∇_j∇_k f + Γ^m_jk γ̇^j ∇_m f with the Hessian of
    :func:`factor_hessian`. Adaptive Runge-Kutta 4(5).

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec` of g
    :param x0: start event, inside the vacuum region
    :param xi0: null initial velocity
    :param f0: f(x0)
    :param df0: covector ∇f(x0)
    :param s_max: final affine parameter
    :param region: (lower, upper) corners of the coordinate box declared vacuum for e^{2f} g, None for the
        whole domain
    :param tol: relative and absolute integrator tolerance
    :param samples: number of uniform samples in the returned track
    :raises LeftVacuumRegion: when γ leaves the region before `s_max`
    :return: :class:`ConformalFactorTrack`
    """
    if spec.dim < 3:
        raise ValueError("The conformal factor equation needs dimension at least 3")
    family = metric_family(spec)
    n = spec.dim
    x0 = check_in_domain(spec, x0)
    lower, upper = (np.array(spec.lower), np.array(spec.upper)) if region is None else \
        (np.asarray(region[0], dtype=float), np.asarray(region[1], dtype=float))
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise LeftVacuumRegion(0.)

    def leaves(_, y):
        return float(min(np.min(y[:n] - lower), np.min(upper - y[:n])))
    leaves.terminal = True
    leaves.direction = -1

    y0 = np.concatenate([x0, np.asarray(xi0, dtype=float), [float(f0)], np.asarray(df0, dtype=float)])
    solution = solve_ivp(_rhs(spec, family), (0., float(s_max)), y0, method='RK45', rtol=tol, atol=tol,
                         dense_output=True, events=leaves)
    if solution.status == 1:
        raise LeftVacuumRegion(float(solution.t_events[0][0]))
    if solution.status != 0:
        raise StepFailure(solution.message, (solution.t[-1], solution.y[:n, -1], solution.y[n:2 * n, -1]))
    s = np.linspace(0., float(s_max), samples)
    states = solution.sol(s).T
    logger.debug("Conformal factor from %s over %g: %d steps, f %.6g -> %.6g", x0, s_max, len(solution.t),
                 states[0, 2 * n], states[-1, 2 * n])
    return ConformalFactorTrack(s, states[:, :n], states[:, 2 * n], states[:, 2 * n + 1:], solution.sol)


FactorGeodesic = namedtuple('FactorGeodesic', ['x0', 'xi0', 's_max', 'f0', 'df0'])
FactorGeodesic.__doc__ = """
:param x0: start event on the boundary of the observed region
:param xi0: null initial velocity
:param s_max: final affine parameter
:param f0: boundary value f(x0), ignored for 'flattening' boundary data
:param df0: boundary covector ∇f(x0), None for zero
"""

FactorParameters = namedtuple('FactorParameters', ['geodesics', 'boundary', 'region', 'tol', 'samples',
                                                   'gate_error'])
FactorParameters.__doc__ = """
:param geodesics: list of :class:`FactorGeodesic`
:param boundary: 'given' takes f0 and df0 of each geodesic, 'flattening' the values at x0 of the factor that makes
    a conformally flat metric flat
:param region: (lower, upper) corners of the vacuum region, None for the whole domain
:param tol: integrator tolerance
:param samples: samples per track
:param gate_error: largest accepted deviation from the flattening factor along any track, None for no gate
"""


def make_geodesic(x0, xi0, s_max, f0=0., df0=None):
    return FactorGeodesic(tuple(float(v) for v in x0), tuple(float(v) for v in xi0), float(s_max), float(f0),
                          None if df0 is None else tuple(float(v) for v in df0))


def default_factor_parameters(geodesics, **overrides):
    """
    :param geodesics: :class:`FactorGeodesic` or dicts of :func:`make_geodesic` arguments
    """
    geodesics = [g if isinstance(g, FactorGeodesic) else make_geodesic(**g) for g in geodesics]
    parameters = FactorParameters(geodesics=geodesics, boundary='given', region=None, tol=1e-10, samples=101,
                                  gate_error=None)
    parameters = parameters._replace(**overrides)
    if parameters.boundary not in ('given', 'flattening'):
        raise ValueError("Unknown boundary data '{}'".format(parameters.boundary))
    if parameters.region is not None:
        region = parameters.region
        if isinstance(region, dict):
            region = (region['lower'], region['upper'])
        parameters = parameters._replace(region=(tuple(float(v) for v in region[0]),
                                                 tuple(float(v) for v in region[1])))
    return parameters


FLATTENABLE_FAMILIES = ('minkowski', 'conformal_bump')


def flattening_factor(spec, x):
    """
    The factor f with e^{2f} g = η for a flat or conformal_bump metric g = e^{2φ} η, f = -φ.

    :raises ValueError: for metrics not known to be conformally flat in closed form
    :return: (f, ∇f) at x
    """
    family = metric_family(spec)
    x = np.asarray(x, dtype=float)
    if spec.family == 'conformal_bump':
        return -family.conformal_exponent(x), -family.conformal_gradient(x)
    if spec.family == 'minkowski':
        return np.zeros(x.shape[:-1]), np.zeros_like(x)
    raise ValueError("No closed form flattening factor for the {} family".format(spec.family))


def factor_tracks(spec, parameters):
    """
    Integrates the conformal factor along every geodesic of the parameters. A track that leaves the vacuum
    region or fails to integrate is reported with its reason instead of samples. When the flattening factor of
    `spec` is known the largest deviation of f from it is reported as the track error.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec` of the representative metric g
    :param parameters: :class:`FactorParameters`
    :return: list of track dicts (index, status, reason, s, x, f, error)
    """
    known = spec.family in FLATTENABLE_FAMILIES
    if parameters.boundary == 'flattening' and not known:
        raise ValueError("Flattening boundary data need a flat or conformal_bump metric, got {}".format(
            spec.family))
    tracks = []
    for index, geodesic in enumerate(parameters.geodesics):
        if parameters.boundary == 'flattening':
            f0, df0 = flattening_factor(spec, geodesic.x0)
        else:
            f0 = geodesic.f0
            df0 = np.zeros(spec.dim) if geodesic.df0 is None else np.array(geodesic.df0)
        track = dict(index=index, status='integrated', reason=None, s=None, x=None, f=None, error=None)
        try:
            result = conformal_factor_ode(spec, geodesic.x0, geodesic.xi0, float(f0), df0, geodesic.s_max,
                                          parameters.region, parameters.tol, parameters.samples)
        except LeftVacuumRegion as e:
            logger.warning("Conformal factor track %d: %s", index, e)
            track.update(status='skipped', reason='left_region')
            tracks.append(track)
            continue
        except ChronoLensError as e:
            logger.warning("Conformal factor track %d failed: %s", index, e)
            track.update(status='skipped', reason='failed')
            tracks.append(track)
            continue
        track.update(s=result.s.tolist(), x=result.x.tolist(), f=result.f.tolist())
        if known:
            track['error'] = float(np.max(np.abs(result.f - flattening_factor(spec, result.x)[0])))
        tracks.append(track)
    logger.info("Conformal factor on %d of %d tracks", sum(t['status'] == 'integrated' for t in tracks),
                len(tracks))
    return tracks
