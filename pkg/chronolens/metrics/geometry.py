import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import OutOfDomain, IllConditioned
from chronolens.metrics.catalog import metric_family

logger = logging.getLogger('metrics.geometry')

TIMELIKE = 'timelike'
NULL = 'null'
SPACELIKE = 'spacelike'

#: relative null tolerance, |g(ξ,ξ)| ≤ NULL_TOL ‖ξ‖²_{g⁺}
NULL_TOL = 1e-9

MetricEval = namedtuple('MetricEval', ['g', 'g_inv', 'det_g', 'partials'])
MetricEval.__doc__ = """
:param g: symmetric (n, n) metric components
:param g_inv: inverse components
:param det_g: determinant, negative for a Lorentzian metric
:param partials: (n, n, n) array of d_k g_ij indexed [k, i, j], or None when not requested
"""

TangentVector = namedtuple('TangentVector', ['base', 'xi'])
TangentVector.__doc__ = """
:param base: chart coordinates of the base event
:param xi: vector components
"""

CausalCharacter = namedtuple('CausalCharacter', ['kind', 'value'])
CausalCharacter.__doc__ = """
:param kind: one of 'timelike', 'null', 'spacelike'
:param value: g(ξ, ξ)
"""


def check_in_domain(spec, x, margin=0.):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim or not np.all(np.isfinite(x)) or \
            not np.all(metric_family(spec).in_domain(x, margin)):
        raise OutOfDomain(x.tolist(), list(spec.domain))
    return x


def eval_metric(spec, x, partials=False):
    """
    Evaluates the metric at an event.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param x: chart coordinates of the event
    :param partials: fill the first partial derivatives
    :return: :class:`MetricEval`
    """
    x = check_in_domain(spec, x)
    family = metric_family(spec)
    g = family.components(x)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    dg = metric_partials(spec, x) if partials else None
    return MetricEval(g, np.linalg.inv(g), np.linalg.det(g), dg)


def _fd_partials(family, x):
    """
    Fourth order central differences of the metric components along every axis, relative step 1e-5 (1 + |x|)
    """
    x = np.asarray(x, dtype=float)
    n = family.dim
    dg = np.empty(x.shape[:-1] + (n, n, n))
    for k in range(n):
        step = 1e-5 * (1. + np.abs(x[..., k]))
        shift = np.zeros(x.shape)
        shift[..., k] = step
        dg[..., k, :, :] = (-family.components(x + 2 * shift) + 8 * family.components(x + shift)
                            - 8 * family.components(x - shift) + family.components(x - 2 * shift)) \
            / (12. * step[..., None, None])
    return dg


def metric_partials(spec, x, method='auto'):
    """
    :param method: 'analytic', 'fd' or 'auto' (analytic when the family provides it)
    :return: (..., n, n, n) array of d_k g_ij indexed [k, i, j]
    """
    family = metric_family(spec)
    if method in ('auto', 'analytic'):
        dg = family.partials(x)
        if dg is not None:
            return dg
        if method == 'analytic':
            raise ValueError("Family {} has no analytic partials".format(spec.family))
    return _fd_partials(family, x)


def christoffel_from(g_inv, dg):
    """
    Γ^k_ij = ½ g^kl (d_i g_lj + d_j g_li - d_l g_ij), vectorized over leading axes.
    """
    # lowered[..., l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    lowered = dg.swapaxes(-3, -2) + np.einsum('...jli->...lij', dg) - dg
    return 0.5 * np.einsum('...kl,...lij->...kij', g_inv, lowered)


def christoffel_unchecked(family, x):
    """
    Christoffel symbols without domain checks, used inside integrators where points are clamped.
    """
    x = np.asarray(x, dtype=float)
    if family.flat:
        return np.zeros(x.shape[:-1] + (family.dim,) * 3)
    dg = family.partials(x)
    if dg is None:
        dg = _fd_partials(family, x)
    return christoffel_from(np.linalg.inv(family.components(x)), dg)


def christoffel(spec, x, method='auto'):
    """
    Christoffel symbols of the second kind.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param x: chart coordinates of the event
    :param method: 'analytic', 'fd' or 'auto'
    :return: (n, n, n) array indexed [k, i, j], symmetric in i, j
    """
    x = check_in_domain(spec, x)
    family = metric_family(spec)
    if method == 'fd':
        check_in_domain(spec, x, margin=2e-5 * (1. + np.max(np.abs(x))))
    dg = metric_partials(spec, x, method)
    gamma = christoffel_from(np.linalg.inv(family.components(x)), dg)
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))


def ricci(spec, x):
    """
    Ricci tensor R_jk = d_i Γ^i_jk - d_k Γ^i_ij + Γ^i_ip Γ^p_jk - Γ^i_kp Γ^p_ij, with the derivatives of Γ
    taken by fourth order central differences (relative step 1e-3).

    :raises IllConditioned: if the difference stencil leaves the domain
    """
    x = check_in_domain(spec, x)
    family = metric_family(spec)
    n = spec.dim
    if family.flat:
        return np.zeros((n, n))
    step = 1e-3 * (1. + np.abs(x))
    stencil = np.array([x + c * np.eye(n)[k] * step[k] for k in range(n) for c in (-2, -1, 1, 2)])
    if not np.all(family.in_domain(stencil)):
        raise IllConditioned("Curvature stencil around {} leaves the domain".format(x.tolist()))
    gammas = christoffel_unchecked(family, stencil).reshape(n, 4, n, n, n)
    d_gamma = (gammas[:, 0] - 8 * gammas[:, 1] + 8 * gammas[:, 2] - gammas[:, 3]) / (12. * step[:, None, None, None])
    gamma = christoffel_unchecked(family, x)
    ric = (np.einsum('iijk->jk', d_gamma) - np.einsum('kiij->jk', d_gamma)
           + np.einsum('iip,pjk->jk', gamma, gamma) - np.einsum('ikp,pij->jk', gamma, gamma))
    return 0.5 * (ric + ric.T)


def riemannian_companion(spec, x):
    """
    The Riemannian companion g⁺: same eigenvectors as g, eigenvalues replaced by their absolute values.
    """
    x = check_in_domain(spec, x)
    return companion_unchecked(metric_family(spec).components(x))


def companion_unchecked(g):
    eigenvalues, eigenvectors = np.linalg.eigh(g)
    return np.einsum('...ik,...k,...jk->...ij', eigenvectors, np.abs(eigenvalues), eigenvectors)


def causal_character(spec, v):
    """
    Classifies a tangent vector. Null when |g(ξ,ξ)| ≤ 1e-9 ‖ξ‖²_{g⁺}.

    :param v: :class:`TangentVector`
    :raises OutOfDomain: when the base event lies outside the chart domain
    :return: :class:`CausalCharacter`
    """
    g = metric_family(spec).components(check_in_domain(spec, v.base))
    xi = np.asarray(v.xi, dtype=float)
    value = float(xi @ g @ xi)
    scale = float(xi @ companion_unchecked(g) @ xi)
    if abs(value) <= NULL_TOL * scale:
        return CausalCharacter(NULL, value)
    return CausalCharacter(TIMELIKE if value < 0 else SPACELIKE, value)


def lorentz_frame(spec, x):
    """
    Orthonormal frame at x. Row 0 is the future unit normal of the time function x⁰,
    rows 1..n-1 are the coordinate axes made g-orthonormal by Gram-Schmidt.

    :return: (n, n) array whose rows are the frame vectors
    """
    x = check_in_domain(spec, x)
    g = metric_family(spec).components(x)
    return frame_from_metric(g)


def frame_from_metric(g):
    n = g.shape[-1]
    g_inv = np.linalg.inv(g)
    if not g_inv[0, 0] < 0:
        raise IllConditioned("x⁰ is not a time function at this point")
    frame = np.zeros((n, n))
    frame[0] = -g_inv[:, 0] / np.sqrt(-g_inv[0, 0])
    for a in range(1, n):
        v = np.eye(n)[a]
        v = v + (frame[0] @ g @ v) * frame[0]
        for b in range(1, a):
            v = v - (frame[b] @ g @ v) * frame[b]
        frame[a] = v / np.sqrt(v @ g @ v)
    return frame


def null_time_component(g, spatial):
    """
    The future time component v⁰ that puts v = (v⁰, spatial) on the null cone of g, vectorized.
    """
    g = np.asarray(g)
    spatial = np.asarray(spatial, dtype=float)
    a = g[..., 0, 0]
    b = 2. * np.einsum('...i,...i->...', g[..., 0, 1:], spatial)
    c = np.einsum('...i,...ij,...j->...', spatial, g[..., 1:, 1:], spatial)
    discriminant = np.maximum(b ** 2 - 4. * a * c, 0.)
    # a < 0, so the larger root is the future one
    return (-b - np.sqrt(discriminant)) / (2. * a)
