import logging
from collections import namedtuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import christoffel_unchecked, companion_unchecked, NULL_TOL

logger = logging.getLogger('geodesics.jacobi')

ConjugateReport = namedtuple('ConjugateReport', ['parameter', 'trace_s', 'trace_det'])
ConjugateReport.__doc__ = """
:param parameter: first conjugate affine parameter, `numpy.inf` if there is none before the segment ends
:param trace_s: affine parameters at which the Jacobi determinant was sampled
:param trace_det: det(A(s)) / s^n at those parameters, where A is the Jacobi matrix with A(0) = 0, A'(0) = 1
"""


def christoffel_derivatives(family, x):
    """
    d_l Γ^k_ij by fourth order central differences of the Christoffel symbols.

    :return: array (..., n, n, n, n) indexed [l, k, i, j]
    """
    x = np.asarray(x, dtype=float)
    n = family.dim
    result = np.empty(x.shape[:-1] + (n,) * 4)
    for axis in range(n):
        step = 1e-5 * (1. + np.abs(x[..., axis]))
        shift = np.zeros(x.shape)
        shift[..., axis] = step
        result[..., axis, :, :, :] = (
            -christoffel_unchecked(family, family.clamp(x + 2 * shift))
            + 8 * christoffel_unchecked(family, family.clamp(x + shift))
            - 8 * christoffel_unchecked(family, family.clamp(x - shift))
            + christoffel_unchecked(family, family.clamp(x - 2 * shift))) / (12. * step[..., None, None, None])
    return result


def _variational_rhs(family, y):
    n = family.dim
    x, v = y[:n], y[n:2 * n]
    a = y[2 * n:2 * n + n * n].reshape(n, n)
    b = y[2 * n + n * n:].reshape(n, n)
    x = family.clamp(x)
    gamma = christoffel_unchecked(family, x)
    d_gamma = christoffel_derivatives(family, x)
    acceleration = -np.einsum('kij,i,j->k', gamma, v, v)
    db = -np.einsum('lkij,i,j,lm->km', d_gamma, v, v, a) - 2. * np.einsum('kij,i,jm->km', gamma, v, b)
    return np.concatenate([v, acceleration, b.ravel(), db.ravel()])


def jacobi_first_conjugate(segment, tol=1e-10, samples=2000):
    """
    Finds the first point conjugate to the start of a geodesic segment.

    The Jacobi equation A'' + (d_l Γ^k_ij v^i v^j) A^l + 2 Γ^k_ij v^i A'^j = 0 is integrated together with the
    geodesic for the full frame A(0) = 0, A'(0) = 1. The tangential variation never vanishes, so a zero of
    det A for s > 0 is exactly a conjugate point. The first sign change of det A(s) / s^n is bracketed on a
    uniform grid and refined to 1e-8.

    :param segment: :class:`~chronolens.geodesics.engine.GeodesicSegment`
    :param tol: tolerance of the variational integration
    :param samples: number of grid samples used to bracket sign changes
    :return: :class:`ConjugateReport`
    """
    family = metric_family(segment.spec)
    g0 = family.components(segment.x0)
    null = abs(segment.xi0 @ g0 @ segment.xi0) <= NULL_TOL * (segment.xi0 @ companion_unchecked(g0) @ segment.xi0)
    if family.flat or (null and family.conformally_flat):
        return ConjugateReport(np.inf, np.array([]), np.array([]))
    n = family.dim
    s_end = segment.s_end
    y0 = np.concatenate([segment.x0, segment.xi0, np.zeros(n * n), np.eye(n).ravel()])
    solution = solve_ivp(lambda _, y: _variational_rhs(family, y), (0., s_end), y0, method='RK45',
                         rtol=tol, atol=tol, dense_output=True)
    if solution.status < 0:
        logger.warning("Jacobi integration stopped early: %s", solution.message)
        s_end = float(solution.t[-1])

    def scaled_det(s):
        a = solution.sol(s)[2 * n:2 * n + n * n].reshape(n, n)
        return np.linalg.det(a) / s ** n

    trace_s = np.linspace(0., s_end, samples + 1)[1:]
    trace_det = np.array([scaled_det(s) for s in trace_s])
    changes = np.nonzero(np.sign(trace_det[1:]) != np.sign(trace_det[:-1]))[0]
    if len(changes) == 0:
        return ConjugateReport(np.inf, trace_s, trace_det)
    i = changes[0]
    if trace_det[i + 1] == 0.:
        parameter = float(trace_s[i + 1])
    else:
        parameter = brentq(scaled_det, trace_s[i], trace_s[i + 1], xtol=1e-9, rtol=1e-12)
    logger.debug("First conjugate point at s=%.9f", parameter)
    return ConjugateReport(parameter, trace_s, trace_det)
