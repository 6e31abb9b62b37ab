import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import NoCutInDomain, NeverInside
from chronolens.geodesics.engine import integrate_geodesic
from chronolens.geodesics.jacobi import jacobi_first_conjugate
from chronolens.metrics.catalog import metric_family

logger = logging.getLogger('geodesics.cut')

CUT = 'cut'
CONJUGATE = 'conjugate'
DOMAIN_EXIT = 'domain_exit'

CutReport = namedtuple('CutReport', ['rho', 'lower_bound', 'cause', 'conjugate'])
CutReport.__doc__ = """
:param rho: modified cut parameter ρ(x, ξ)
:param lower_bound: True when no cut was found before the geodesic left the domain; `rho` is then the exit
    parameter and only a lower bound
:param cause: 'cut' (time separation became positive), 'conjugate' (first conjugate point came first) or
    'domain_exit'
:param conjugate: first conjugate parameter, `numpy.inf` if none
"""


def null_cut_parameter(spec, x, xi, s_max=1e3, ds=1e-5, coarse=400, strict=False, rtol=1e-8, tau_tol=None):
    """
    The modified cut parameter ρ(x, ξ) = sup{s : τ(x, γ(s)) = 0} of a future null geodesic, capped by its first
    conjugate point.

    The predicate "x ≪ γ(s)" is sampled on a coarse grid and bisected to `ds`. Closed form chronology uses
    the causal margin with relative tolerance `rtol`, above the integrator noise of the sampled geodesic.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param x: base event
    :param xi: future null direction
    :param s_max: largest affine parameter considered
    :param ds: bisection tolerance
    :param coarse: number of coarse samples
    :param strict: raise :class:`~chronolens.exceptions.NoCutInDomain` instead of returning a lower bound
    :param tau_tol: τ threshold of shooting families, None for
        :data:`~chronolens.causal.structure.TAU_SAMPLED_TOL`
    :return: :class:`CutReport`
    """
    from chronolens.causal.structure import TAU_SAMPLED_TOL, chronological

    if tau_tol is None:
        tau_tol = TAU_SAMPLED_TOL

    segment = integrate_geodesic(spec, x, xi, s_max)
    conjugate = jacobi_first_conjugate(segment).parameter
    s_end = min(segment.s_end, conjugate)
    family = metric_family(spec)
    if family.chronology is None and not hasattr(family, 'spatial_exponent'):
        coarse = min(coarse, 40)

    def after_cut(s):
        return chronological(spec, x, family.wrap(segment.position(s)), rtol=rtol, tau_tol=tau_tol)

    grid = np.linspace(0., s_end, coarse + 1)[1:]
    first = next((i for i, s in enumerate(grid) if after_cut(s)), None)
    if first is None:
        if conjugate <= segment.s_end:
            logger.debug("Null geodesic from %s reaches its conjugate point at s=%.6g before a cut", x, conjugate)
            return CutReport(float(conjugate), False, CONJUGATE, conjugate)
        if strict:
            raise NoCutInDomain(segment.s_end)
        logger.info("No null cut point before the domain exit at s=%.6g; returning it as a lower bound",
                    segment.s_end)
        return CutReport(segment.s_end, True, DOMAIN_EXIT, conjugate)
    lo = grid[first - 1] if first else 0.
    hi = grid[first]
    while hi - lo > ds:
        middle = 0.5 * (lo + hi)
        if after_cut(middle):
            hi = middle
        else:
            lo = middle
    rho = 0.5 * (lo + hi)
    cause = CUT
    if conjugate < rho:
        rho, cause = float(conjugate), CONJUGATE
    return CutReport(float(rho), False, cause, conjugate)


def diamond_escape(spec, segment, p_minus, p_plus, tol=1e-8, samples=400):
    """
    The last affine parameter at which a geodesic lies in the causal diamond J(p⁻, p⁺) = J⁺(p⁻) ∩ J⁻(p⁺).
    Membership is assumed to stay false after the first exit.

    :param segment: :class:`~chronolens.geodesics.engine.GeodesicSegment`
    :return: exit parameter, or the segment end when the geodesic is still inside there
    :raises NeverInside: if no sampled point of the geodesic lies in the diamond
    """
    from chronolens.causal.structure import causally_precedes

    family = metric_family(spec)
    p_minus = np.asarray(p_minus, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)

    def inside(s):
        y = family.wrap(segment.position(s))
        return causally_precedes(spec, p_minus, y) and causally_precedes(spec, y, p_plus)

    grid = np.union1d(np.linspace(segment.s[0], segment.s_end, samples + 1), segment.s)
    membership = [inside(s) for s in grid]
    if not any(membership):
        raise NeverInside("Geodesic from {} misses the diamond between {} and {}".format(
            segment.x0.tolist(), p_minus.tolist(), p_plus.tolist()))
    first_in = membership.index(True)
    try:
        first_out = membership.index(False, first_in)
    except ValueError:
        return float(segment.s_end)
    lo, hi = grid[first_out - 1], grid[first_out]
    while hi - lo > tol:
        middle = 0.5 * (lo + hi)
        if inside(middle):
            lo = middle
        else:
            hi = middle
    return float(lo)
