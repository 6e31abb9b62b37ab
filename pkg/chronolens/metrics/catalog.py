import hashlib
import json
from abc import ABC, abstractmethod
from collections import namedtuple, OrderedDict
from functools import lru_cache

import numpy as np

FAMILIES = ('minkowski', 'conformal_bump', 'product_spatial', 'einstein_cylinder', 'schwarzschild_like')


class MetricSpec(namedtuple('MetricSpec', ['family', 'dim', 'params', 'domain'])):
    """
    An analytic Lorentzian metric of the catalog, signature (-,+,...,+), on a single coordinate box.
    Instances are hashable so that the evaluated family objects can be cached.
    """
    __slots__ = ()

    def param(self, name, default=None):
        for key, value in self.params:
            if key == name:
                return value
        return default

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.domain], dtype=float)

    @property
    def upper(self):
        return np.array([hi for _, hi in self.domain], dtype=float)

    def to_dict(self):
        params = OrderedDict()
        for key, value in self.params:
            params[key] = list(value) if isinstance(value, tuple) else value
        return OrderedDict([('family', self.family), ('dim', self.dim), ('params', params),
                            ('domain', [[lo, hi] for lo, hi in self.domain])])


MetricSpec.__doc__ += """
:param family: name of the catalog family, one of :data:`FAMILIES`
:param dim: spacetime dimension n in {2, 3, 4}
:param params: tuple of (name, value) pairs, sorted by name. Values are floats, tuples of floats or strings
:param domain: tuple of (lower, upper) bounds, one per coordinate. Periodic coordinates use [0, period)
"""


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(float(v) for v in value)
    if isinstance(value, str):
        return value
    return float(value)


_DEFAULTS = {
    'minkowski': lambda dim: {},
    'conformal_bump': lambda dim: dict(amplitude=0.2, width=0.5, center=[0.] * dim, profile='gaussian'),
    'einstein_cylinder': lambda dim: dict(radius=1.0),
    'schwarzschild_like': lambda dim: dict(mass=1.0),
}


def _product_defaults(dim, params):
    if params.get('profile', 'bump') == 'sphere':
        return dict(profile='sphere', radius=1.0)
    return dict(profile='bump', amplitude=0.2, width=0.5, center=[0.] * (dim - 1))


def _default_domain(family, dim, params):
    if family == 'einstein_cylinder':
        return [[-5., 10.], [0., 2 * np.pi]] + [[-5., 5.]] * (dim - 2)
    if family == 'product_spatial' and params['profile'] == 'sphere':
        return [[-5., 10.], [1e-3, np.pi - 1e-3], [0., 2 * np.pi]]
    if family == 'schwarzschild_like':
        m = params['mass']
        return [[-100. * m, 100. * m], [2.05 * m, 40. * m], [1e-3, np.pi - 1e-3], [0., 2 * np.pi]]
    return [[-5., 5.]] * dim


def make_metric_spec(family, dim, params=None, domain=None):
    """
    Builds a validated :class:`MetricSpec`, filling per-family default parameters and domain.

    :param family: catalog family name
    :param dim: spacetime dimension
    :param params: dict of parameters overriding the defaults
    :param domain: list of [lower, upper] pairs, one per coordinate
    :return: :class:`MetricSpec`
    """
    if family not in FAMILIES:
        raise ValueError("Unknown metric family '{}'. Known families: {}".format(family, ', '.join(FAMILIES)))
    dim = int(dim)
    if dim not in (2, 3, 4):
        raise ValueError("Spacetime dimension must be 2, 3 or 4, got {}".format(dim))
    params = dict(params or {})
    if family == 'product_spatial':
        merged = _product_defaults(dim, params)
    else:
        merged = _DEFAULTS[family](dim)
    merged.update(params)

    if family == 'schwarzschild_like' and dim != 4:
        raise ValueError("schwarzschild_like is only defined for dim=4")
    if family == 'product_spatial' and merged['profile'] == 'sphere' and dim != 3:
        raise ValueError("The sphere profile of product_spatial is only defined for dim=3 (R x S^2)")
    if family == 'product_spatial' and merged['profile'] not in ('bump', 'sphere'):
        raise ValueError("Unknown product_spatial profile '{}'".format(merged['profile']))
    if family == 'conformal_bump' and merged['profile'] not in ('gaussian', 'compact'):
        raise ValueError("Unknown conformal_bump profile '{}'".format(merged['profile']))
    for positive in ('width', 'radius', 'mass'):
        if positive in merged and not float(merged[positive]) > 0:
            raise ValueError("Parameter '{}' must be positive".format(positive))
    if 'center' in merged:
        expected = dim if family == 'conformal_bump' else dim - 1
        if len(merged['center']) != expected:
            raise ValueError("Parameter 'center' needs {} components".format(expected))

    if domain is None:
        domain = _default_domain(family, dim, merged)
    if len(domain) != dim or any(float(lo) >= float(hi) for lo, hi in domain):
        raise ValueError("Domain must be {} increasing [lower, upper] pairs, got {}".format(dim, domain))
    if family == 'schwarzschild_like' and float(domain[1][0]) <= 2 * float(merged['mass']):
        raise ValueError("schwarzschild_like domain must satisfy r > 2m")

    frozen_params = tuple(sorted((key, _freeze(value)) for key, value in merged.items()))
    frozen_domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    return MetricSpec(family, dim, frozen_params, frozen_domain)


def metric_spec_from_dict(d):
    return make_metric_spec(d['family'], d['dim'], d.get('params'), d.get('domain'))


def spec_hash(spec):
    """
    Stable short hash of a metric spec, used to tie datasets to the metric they were computed on
    """
    blob = json.dumps(spec.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]


@lru_cache(maxsize=64)
def metric_family(spec):
    """
    The family object evaluating a spec. Cached per spec.
    """
    classes = dict(minkowski=Minkowski,
                   conformal_bump=ConformalBump,
                   einstein_cylinder=EinsteinCylinder,
                   schwarzschild_like=SchwarzschildLike)
    if spec.family == 'product_spatial':
        if spec.param('profile') == 'sphere':
            return ProductSphere(spec)
        return ProductBump(spec)
    return classes[spec.family](spec)


class MetricFamily(ABC):
    """
    Base class for all catalog families. Methods are vectorized over leading axes of `x`.

    :param spec: :class:`MetricSpec`
    """
    #: Christoffel symbols vanish identically in the chart
    flat = False
    #: 'closed_form' when :meth:`chronology_margin` is exact, 'conformal' when it is exact through the flat
    #: conformal background, None when time separation needs geodesic shooting
    chronology = None
    #: conformal to a flat metric, so null geodesics have no conjugate points
    conformally_flat = False

    def __init__(self, spec):
        self.spec = spec
        self.dim = spec.dim
        self.lower = spec.lower
        self.upper = spec.upper
        self.periods = {}

    @abstractmethod
    def components(self, x):
        """
        :param x: array (..., n) of chart points
        :return: array (..., n, n) of metric components g_ij
        """
        pass

    def partials(self, x):
        """
        :return: array (..., n, n, n) with entry [k, i, j] = d_k g_ij, or None when the family has no
            analytic derivatives
        """
        return None

    def chronology_margin(self, x, y):
        """
        :return: Δt - d(x, y) for families whose time separation has a closed form, else None.
            τ(x, y) > 0 exactly when the margin is positive.
        """
        return None

    def spatial_distance(self, y1, y2):
        """
        Distance of the spatial metric for product families, else None
        """
        return None

    def wrap(self, x):
        x = np.array(x, dtype=float)
        for axis, period in self.periods.items():
            lo = self.lower[axis]
            x[..., axis] = lo + np.mod(x[..., axis] - lo, period)
        return x

    def difference(self, y, x):
        """
        y - x with periodic coordinates wrapped into (-period/2, period/2]
        """
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        for axis, period in self.periods.items():
            d[..., axis] = d[..., axis] - period * np.round(d[..., axis] / period)
        return d

    def in_domain(self, x, margin=0.):
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for axis in range(self.dim):
            if axis in self.periods:
                continue
            inside &= (x[..., axis] >= self.lower[axis] + margin) & (x[..., axis] <= self.upper[axis] - margin)
        return inside

    def clamp(self, x):
        """
        Projects points into the closed domain box (periodic axes untouched)
        """
        x = np.array(x, dtype=float)
        for axis in range(self.dim):
            if axis not in self.periods:
                x[..., axis] = np.clip(x[..., axis], self.lower[axis], self.upper[axis])
        return x

    def embed(self, x):
        """
        Euclidean embedding of chart points in which periodic axes become circles of the same circumference.
        Used for nearest-neighbour queries.
        """
        x = np.asarray(x, dtype=float)
        columns = []
        for axis in range(self.dim):
            if axis in self.periods:
                radius = self.periods[axis] / (2 * np.pi)
                angle = 2 * np.pi * x[..., axis] / self.periods[axis]
                columns += [radius * np.cos(angle), radius * np.sin(angle)]
            else:
                columns.append(x[..., axis])
        return np.stack(columns, axis=-1)


def _eta(dim):
    eta = np.eye(dim)
    eta[0, 0] = -1.
    return eta


class Minkowski(MetricFamily):
    flat = True
    chronology = 'closed_form'
    conformally_flat = True

    def __init__(self, spec):
        super().__init__(spec)
        self.eta = _eta(self.dim)

    def components(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.eta, x.shape[:-1] + (self.dim, self.dim)).copy()

    def partials(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def chronology_margin(self, x, y):
        d = self.difference(y, x)
        return d[..., 0] - np.linalg.norm(d[..., 1:], axis=-1)

    def spatial_distance(self, y1, y2):
        return np.linalg.norm(np.asarray(y2, dtype=float) - np.asarray(y1, dtype=float), axis=-1)


class ConformalBump(Minkowski):
    """
    g = exp(2 φ) η with a bump φ in space-time. The 'gaussian' profile is
    φ = A exp(-|x - c|² / (2 w²)), the 'compact' profile φ = A exp(1 - 1 / (1 - |x - c|² / w²)) inside
    the ball of radius w and zero outside.
    """
    flat = False
    chronology = 'conformal'

    def __init__(self, spec):
        super().__init__(spec)
        self.amplitude = spec.param('amplitude')
        self.width = spec.param('width')
        self.center = np.array(spec.param('center'))
        self.profile = spec.param('profile')

    def conformal_exponent(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - self.center) ** 2, axis=-1) / self.width ** 2
        if self.profile == 'gaussian':
            return self.amplitude * np.exp(-0.5 * r2)
        inside = r2 < 1.
        safe = np.where(inside, r2, 0.)
        return np.where(inside, self.amplitude * np.exp(1. - 1. / (1. - safe)), 0.)

    def conformal_gradient(self, x):
        x = np.asarray(x, dtype=float)
        phi = self.conformal_exponent(x)[..., None]
        offset = x - self.center
        if self.profile == 'gaussian':
            return -phi * offset / self.width ** 2
        r2 = np.sum(offset ** 2, axis=-1, keepdims=True) / self.width ** 2
        denominator = np.where(r2 < 1., (1. - r2) ** 2, 1.)
        return np.where(r2 < 1., -2. * phi * offset / (self.width ** 2 * denominator), 0.)

    def components(self, x):
        scale = np.exp(2. * self.conformal_exponent(x))
        return scale[..., None, None] * super().components(x)

    def partials(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.exp(2. * self.conformal_exponent(x))
        grad = self.conformal_gradient(x)
        return 2. * (grad * scale[..., None])[..., :, None, None] * self.eta

    def spatial_distance(self, y1, y2):
        return None


class EinsteinCylinder(Minkowski):
    """
    -dt² + R² dθ² (+ dz² for each further dimension); θ is periodic with period 2π.
    """

    def __init__(self, spec):
        super().__init__(spec)
        self.radius = spec.param('radius')
        self.periods = {1: 2 * np.pi}
        self.eta = _eta(self.dim)
        self.eta[1, 1] = self.radius ** 2

    def chronology_margin(self, x, y):
        d = self.difference(y, x)
        d[..., 1] *= self.radius
        return d[..., 0] - np.linalg.norm(d[..., 1:], axis=-1)

    def spatial_distance(self, y1, y2):
        d = np.asarray(y2, dtype=float) - np.asarray(y1, dtype=float)
        d[..., 0] = self.radius * (d[..., 0] - 2 * np.pi * np.round(d[..., 0] / (2 * np.pi)))
        return np.linalg.norm(d, axis=-1)


class ProductBump(MetricFamily):
    """
    -dt² + exp(2 ψ(y)) δ_ab dy^a dy^b with a Gaussian bump ψ in the spatial coordinates.
    """

    def __init__(self, spec):
        super().__init__(spec)
        self.amplitude = spec.param('amplitude')
        self.width = spec.param('width')
        self.center = np.array(spec.param('center'))

    def spatial_exponent(self, y):
        y = np.asarray(y, dtype=float)
        return self.amplitude * np.exp(-0.5 * np.sum((y - self.center) ** 2, axis=-1) / self.width ** 2)

    def spatial_gradient(self, y):
        y = np.asarray(y, dtype=float)
        return -self.spatial_exponent(y)[..., None] * (y - self.center) / self.width ** 2

    def components(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        g[..., 0, 0] = -1.
        scale = np.exp(2. * self.spatial_exponent(x[..., 1:]))
        for a in range(1, self.dim):
            g[..., a, a] = scale
        return g

    def partials(self, x):
        x = np.asarray(x, dtype=float)
        dg = np.zeros(x.shape[:-1] + (self.dim,) * 3)
        scale = np.exp(2. * self.spatial_exponent(x[..., 1:]))
        grad = self.spatial_gradient(x[..., 1:])
        for k in range(1, self.dim):
            for a in range(1, self.dim):
                dg[..., k, a, a] = 2. * grad[..., k - 1] * scale
        return dg


class ProductSphere(MetricFamily):
    """
    -dt² + R² (dθ² + sin²θ dφ²) on R x S², coordinates (t, θ, φ) with φ periodic.
    """
    chronology = 'closed_form'

    def __init__(self, spec):
        super().__init__(spec)
        self.radius = spec.param('radius')
        self.periods = {2: 2 * np.pi}

    def components(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (3, 3))
        g[..., 0, 0] = -1.
        g[..., 1, 1] = self.radius ** 2
        g[..., 2, 2] = self.radius ** 2 * np.sin(x[..., 1]) ** 2
        return g

    def partials(self, x):
        x = np.asarray(x, dtype=float)
        dg = np.zeros(x.shape[:-1] + (3, 3, 3))
        dg[..., 1, 2, 2] = 2. * self.radius ** 2 * np.sin(x[..., 1]) * np.cos(x[..., 1])
        return dg

    def spatial_distance(self, y1, y2):
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        cos_angle = (np.cos(y1[..., 0]) * np.cos(y2[..., 0]) +
                     np.sin(y1[..., 0]) * np.sin(y2[..., 0]) * np.cos(y2[..., 1] - y1[..., 1]))
        return self.radius * np.arccos(np.clip(cos_angle, -1., 1.))

    def chronology_margin(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (y[..., 0] - x[..., 0]) - self.spatial_distance(x[..., 1:], y[..., 1:])


class SchwarzschildLike(MetricFamily):
    """
    Exterior Schwarzschild metric in coordinates (t, r, θ, φ), r > 2m, φ periodic.
    """

    def __init__(self, spec):
        super().__init__(spec)
        self.mass = spec.param('mass')
        self.periods = {3: 2 * np.pi}

    def components(self, x):
        x = np.asarray(x, dtype=float)
        r, theta = x[..., 1], x[..., 2]
        f = 1. - 2. * self.mass / r
        g = np.zeros(x.shape[:-1] + (4, 4))
        g[..., 0, 0] = -f
        g[..., 1, 1] = 1. / f
        g[..., 2, 2] = r ** 2
        g[..., 3, 3] = r ** 2 * np.sin(theta) ** 2
        return g

    def partials(self, x):
        x = np.asarray(x, dtype=float)
        r, theta = x[..., 1], x[..., 2]
        m = self.mass
        f = 1. - 2. * m / r
        df = 2. * m / r ** 2
        dg = np.zeros(x.shape[:-1] + (4, 4, 4))
        dg[..., 1, 0, 0] = -df
        dg[..., 1, 1, 1] = -df / f ** 2
        dg[..., 1, 2, 2] = 2. * r
        dg[..., 1, 3, 3] = 2. * r * np.sin(theta) ** 2
        dg[..., 2, 3, 3] = 2. * r ** 2 * np.sin(theta) * np.cos(theta)
        return dg
