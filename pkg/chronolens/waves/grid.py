import json
import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import CFLViolation, NaNDetected
from chronolens.metrics.catalog import metric_family

logger = logging.getLogger('waves.grid')

GridSpec = namedtuple('GridSpec', ['dim', 't0', 'k', 'steps', 'lower', 'upper', 'h', 'counts', 'background'])
GridSpec.__doc__ = """
A uniform space-time lattice for the wave solver.

:param dim: spacetime dimension, 2 (1+1) or 3 (1+2)
:param t0: first time level
:param k: time step
:param steps: number of time steps, the lattice has steps + 1 time levels
:param lower: tuple of lower spatial bounds
:param upper: tuple of upper spatial bounds
:param h: spatial spacing, equal on all axes
:param counts: tuple of points per spatial axis
:param background: None for the flat metric, else a product_spatial
    :class:`~chronolens.metrics.catalog.MetricSpec` -dt² + exp(2ψ(y)) δ whose coefficients are sampled once
"""

GridField = namedtuple('GridField', ['grid', 'values'])
GridField.__doc__ = """
:param grid: :class:`GridSpec`
:param values: array of shape (steps + 1,) + counts
"""

SourceProfile = namedtuple('SourceProfile', ['kind', 'amplitude', 'center', 'width', 'covector', 'power',
                                             'mollification', 'radius'])
SourceProfile.__doc__ = """
:param kind: 'gaussian_bump' or 'mollified_plane_wave'
:param amplitude: overall factor
:param center: space-time center (plane waves: a point of the front b·(x - center) = 0)
:param width: Gaussian width, None for plane waves
:param covector: null covector b of a plane wave, None for bumps
:param power: exponent a ≥ 2 of (b·x)^a_+
:param mollification: width over which (b·x)^a_+ is smoothed at the front
:param radius: support radius around the center
"""

GAUSSIAN_CUTOFF = 7.5


def wave_speed(background, lower, upper, h):
    if background is None:
        return 1.
    family = metric_family(background)
    axes = [np.arange(lo, hi + 0.5 * h, h) for lo, hi in zip(lower, upper)]
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    return float(np.exp(-family.spatial_exponent(points)).max())


def make_grid_spec(dim, lower, upper, h, t_end, t0=0., cfl=0.5, background=None):
    """
    :param cfl: ratio k / h
    :param background: optional :class:`~chronolens.metrics.catalog.MetricSpec`; minkowski counts as flat
    :raises CFLViolation: if k c_max / h exceeds 0.5, c_max the largest coordinate wave speed
    :return: :class:`GridSpec`
    """
    if dim not in (2, 3):
        raise ValueError("Wave lattices are 1+1 or 1+2 dimensional, got dim={}".format(dim))
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    if len(lower) != dim - 1 or len(upper) != dim - 1:
        raise ValueError("Need {} spatial bounds".format(dim - 1))
    if background is not None:
        if background.family == 'minkowski':
            background = None
        elif background.family != 'product_spatial' or background.param('profile') != 'bump':
            raise ValueError("Wave backgrounds are flat or product_spatial bumps, got {}".format(background.family))
        elif background.dim != dim:
            raise ValueError("Background dimension {} differs from the lattice dimension {}".format(
                background.dim, dim))
    counts = tuple(int(round((hi - lo) / h)) + 1 for lo, hi in zip(lower, upper))
    upper = tuple(lo + (count - 1) * h for lo, count in zip(lower, counts))
    speed = wave_speed(background, lower, upper, h)
    if cfl * speed > 0.5 + 1e-12:
        raise CFLViolation("CFL number {:.4g} (k/h = {:.4g}, wave speed {:.4g}) exceeds 0.5".format(
            cfl * speed, cfl, speed))
    k = cfl * h
    steps = int(np.ceil((t_end - t0) / k - 1e-9))
    return GridSpec(dim, float(t0), float(k), steps, lower, upper, float(h), counts, background)


def time_axis(grid):
    return grid.t0 + grid.k * np.arange(grid.steps + 1)


def spatial_axes(grid):
    return [lo + grid.h * np.arange(count) for lo, count in zip(grid.lower, grid.counts)]


def field_shape(grid):
    return (grid.steps + 1,) + tuple(grid.counts)


def lattice_events(grid):
    """
    :return: array of shape field_shape + (dim,) with the (t, y) coordinates of every lattice point
    """
    return np.stack(np.meshgrid(time_axis(grid), *spatial_axes(grid), indexing='ij'), axis=-1)


def cell_volume(grid):
    return grid.k * grid.h ** (grid.dim - 1)


def make_field(grid, values):
    """
    :raises NaNDetected: at the first time level with non-finite values
    """
    values = np.asarray(values, dtype=float)
    if values.shape != field_shape(grid):
        values = np.broadcast_to(values, field_shape(grid)).copy()
    bad = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    if bad.any():
        raise NaNDetected(int(np.argmax(bad)))
    return GridField(grid, values)


def zero_field(grid):
    return GridField(grid, np.zeros(field_shape(grid)))


def background_coefficients(grid):
    """
    Frozen coefficients of the spatial operator Δ_h u = (1/σ) Σ_i D_i⁻(κ_i D_i⁺ u) with σ = √det h and
    κ = √det h h^ii = exp((d - 2) ψ) for h = exp(2ψ) δ in d spatial dimensions.

    :return: (σ on the lattice, list of κ on the cell faces of each axis), None for the flat background
    """
    if grid.background is None:
        return None
    family = metric_family(grid.background)
    d = grid.dim - 1
    axes = spatial_axes(grid)
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    sigma = np.exp(d * family.spatial_exponent(points))
    kappas = []
    for axis in range(d):
        shifted = [a for a in axes]
        shifted[axis] = 0.5 * (axes[axis][1:] + axes[axis][:-1])
        faces = np.stack(np.meshgrid(*shifted, indexing='ij'), axis=-1)
        kappas.append(np.exp((d - 2) * family.spatial_exponent(faces)))
    return sigma, kappas


def gaussian_bump(center, width, amplitude=1.):
    """
    A space-time Gaussian cut off at :data:`GAUSSIAN_CUTOFF` widths, where it is below 1e-12 of its peak.
    """
    return SourceProfile('gaussian_bump', float(amplitude), tuple(float(c) for c in center), float(width), None,
                         None, None, GAUSSIAN_CUTOFF * float(width))


def smooth_step(z):
    """
    C∞ step: 0 for z ≤ 0, 1 for z ≥ 1
    """
    z = np.clip(np.asarray(z, dtype=float), 0., 1.)
    with np.errstate(divide='ignore', over='ignore'):
        left = np.where(z > 0, np.exp(-1. / np.where(z > 0, z, 1.)), 0.)
        right = np.where(z < 1, np.exp(-1. / np.where(z < 1, 1. - z, 1.)), 0.)
    return left / (left + right)


def mollified_plane_wave(grid, center, covector, radius, power=2, mollification=None, amplitude=1., null_tol=1e-9):
    """
    A plane-wave source amplitude (b·(x - center))^a_+ S((b·(x - center)) / m) E(x): the power is switched on by
    the C∞ step S over the mollification width m (4 cells by default) and localized by the C∞ bump envelope
    E = exp(1 - 1 / (1 - |x - center|² / radius²)).

    :raises ValueError: if b is not null for the background at the center or a < 2
    """
    covector = np.asarray(covector, dtype=float)
    center = np.asarray(center, dtype=float)
    if power < 2:
        raise ValueError("Plane wave power must be at least 2, got {}".format(power))
    inverse = np.eye(grid.dim)
    inverse[0, 0] = -1.
    if grid.background is not None:
        inverse[1:, 1:] *= np.exp(-2. * metric_family(grid.background).spatial_exponent(center[1:]))
    norm = covector @ inverse @ covector
    if abs(norm) > null_tol * (covector @ covector):
        raise ValueError("Plane wave covector {} is not null (g(b, b) = {:.3g})".format(covector.tolist(), norm))
    mollification = 4. * grid.h if mollification is None else float(mollification)
    return SourceProfile('mollified_plane_wave', float(amplitude), tuple(center.tolist()), None,
                         tuple(covector.tolist()), int(power), mollification, float(radius))


def evaluate_profile(profile, events):
    """
    :param events: array (..., dim) of space-time points
    :return: source values, exactly zero outside the support ball
    """
    offset = np.asarray(events, dtype=float) - np.array(profile.center)
    r2 = np.sum(offset ** 2, axis=-1) / profile.radius ** 2
    inside = r2 < 1.
    if profile.kind == 'gaussian_bump':
        values = profile.amplitude * np.exp(-0.5 * np.sum(offset ** 2, axis=-1) / profile.width ** 2)
        return np.where(inside, values, 0.)
    phase = offset @ np.array(profile.covector)
    ramp = np.where(phase > 0, np.maximum(phase, 0.) ** profile.power, 0.) * smooth_step(phase / profile.mollification)
    envelope = np.where(inside, np.exp(1. - 1. / (1. - np.where(inside, r2, 0.))), 0.)
    return profile.amplitude * ramp * envelope


def sample_source(grid, profile):
    """
    :return: :class:`GridField` of the profile on the lattice
    """
    return make_field(grid, evaluate_profile(profile, lattice_events(grid)))


def support_box(field):
    """
    Bounding box of the nonzero lattice points of a field, widened by one cell.

    :return: (lower, upper) space-time corners, None for a zero field
    """
    nonzero = np.argwhere(field.values != 0.)
    if not len(nonzero):
        return None
    grid = field.grid
    steps = np.array([grid.k] + [grid.h] * (grid.dim - 1))
    origin = np.array((grid.t0,) + grid.lower)
    return origin + (nonzero.min(axis=0) - 1) * steps, origin + (nonzero.max(axis=0) + 1) * steps


def write_snapshot(field, fh, config_hash=None):
    """
    Flat binary snapshot: one JSON header line describing the lattice, then the values as little endian float64
    in row-major order.

    :param fh: file handle opened in binary mode
    """
    grid = field.grid
    header = dict(kind='grid_field', dim=grid.dim, t0=grid.t0, k=grid.k, steps=grid.steps, lower=list(grid.lower),
                  upper=list(grid.upper), h=grid.h, counts=list(grid.counts), shape=list(field.values.shape),
                  dtype='<f8', background=None if grid.background is None else grid.background.to_dict(),
                  config_hash=config_hash)
    fh.write((json.dumps(header, sort_keys=True) + '\n').encode('utf-8'))
    fh.write(np.ascontiguousarray(field.values, dtype='<f8').tobytes())


def read_snapshot(fh):
    """
    :return: (header dict, values array)
    """
    header = json.loads(fh.readline().decode('utf-8'))
    values = np.frombuffer(fh.read(), dtype=header['dtype']).reshape(header['shape'])
    return header, values


def write_slice_csv(field, fh, step):
    """
    One time level of a field as CSV rows of spatial coordinates and value
    """
    grid = field.grid
    axes = spatial_axes(grid)
    names = ['x', 'y'][:grid.dim - 1]
    fh.write(','.join(['t'] + names + ['value']) + '\n')
    t = time_axis(grid)[step]
    points = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, grid.dim - 1)
    for point, value in zip(points, field.values[step].ravel()):
        fh.write(','.join(repr(float(v)) for v in [t] + list(point) + [value]) + '\n')
