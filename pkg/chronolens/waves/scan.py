import logging
from collections import namedtuple

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from chronolens.exceptions import NoIntersection
from chronolens.metrics.catalog import metric_family
from chronolens.waves.grid import spatial_axes, time_axis

logger = logging.getLogger('waves.scan')

FrontIntersection = namedtuple('FrontIntersection', ['q', 'residual', 'intersecting'])
FrontIntersection.__doc__ = """
:param q: space-time point closest to all fronts in the least squares sense
:param residual: largest distance of q from a front, see :func:`front_residuals`
:param intersecting: True if the residual is below the tolerance
"""

ScanTable = namedtuple('ScanTable', ['q', 'offsets', 'amplitude', 'gradient', 'curvature', 'peak_offset',
                                     'on_energy', 'off_energy', 'ratio', 'intersecting', 'samples'])
ScanTable.__doc__ = """
:param q: apex of the scanned forward cone
:param offsets: radial offsets from the cone in cells
:param amplitude: mean |M| at each offset
:param gradient: mean discrete gradient magnitude |∇M| at each offset
:param curvature: mean magnitude of the radial second difference |M(ρ + h) - 2 M(ρ) + M(ρ - h)| / h² at each
    offset
:param peak_offset: offset of the largest mean curvature
:param on_energy: mean squared curvature profile within the ring around the cone
:param off_energy: mean squared curvature profile in the off-cone band
:param ratio: on_energy / off_energy, None when the field is flat there
:param intersecting: whether the fronts meet at q
:param samples: number of lattice points averaged per offset
"""


def front_residuals(profiles, event, speed=1.):
    """
    Signed distance of a space-time event from the front of every source. A plane wave's front is the hyperplane
    b·(x - center) = 0, at distance b·(x - center) / |b|. A Gaussian bump's front is the forward cone of its
    center, t - t_j = |y - y_j| / speed, at distance (speed (t - t_j) - |y - y_j|) / √(1 + speed²).

    :param profiles: :class:`~chronolens.waves.grid.SourceProfile`
    :param speed: wave speed of the cones
    :return: array with one residual per profile
    """
    event = np.asarray(event, dtype=float)
    residuals = []
    for profile in profiles:
        offset = event - np.array(profile.center)
        if profile.kind == 'mollified_plane_wave':
            covector = np.array(profile.covector)
            residuals.append(covector @ offset / np.linalg.norm(covector))
        else:
            residuals.append((speed * offset[0] - np.linalg.norm(offset[1:])) / np.sqrt(1. + speed ** 2))
    return np.array(residuals)


def front_intersection(profiles, tol, strict=False, speed=1.):
    """
    The common point q of the fronts of the given sources: plane-wave hyperplanes and the forward cones of
    Gaussian bumps.

    :param profiles: :class:`~chronolens.waves.grid.SourceProfile`
    :param tol: largest residual at which the fronts count as meeting, typically half a cell
    :param strict: raise instead of returning a non-intersecting result
    :param speed: wave speed of the bump cones
    :raises NoIntersection: with `strict` when the fronts do not meet
    :return: :class:`FrontIntersection`
    """
    centers = np.array([p.center for p in profiles], dtype=float)
    start = centers.mean(axis=0)
    bumps = [p for p in profiles if p.kind == 'gaussian_bump']
    if bumps:
        start[0] += np.mean([np.linalg.norm(start[1:] - np.array(p.center[1:])) for p in bumps]) / speed

    def residuals(x):
        return front_residuals(profiles, x, speed)

    fit = least_squares(residuals, start, method='lm' if len(profiles) >= len(start) else 'trf')
    residual = float(np.max(np.abs(fit.fun)))
    intersecting = residual <= tol
    if not intersecting:
        message = "Fronts miss their best common point {} by {:.3g}".format(fit.x.tolist(), residual)
        if strict:
            raise NoIntersection(message)
        logger.warning(message)
    return FrontIntersection(fit.x, residual, intersecting)


def cone_speed(grid, event):
    """
    Coordinate wave speed of the lattice background at the spatial part of a space-time event
    """
    if grid.background is None:
        return 1.
    return float(np.exp(-metric_family(grid.background).spatial_exponent(np.asarray(event[1:], dtype=float))))


def _directions(grid, angles):
    if grid.dim == 2:
        return np.array([[-1.], [1.]])
    phi = 2. * np.pi * np.arange(angles) / angles
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def singularity_scan(field, q, ring_cells=3, off_cone_cells=(8, 16), angles=64, intersecting=True):
    """
    Samples |M|, its discrete space-time gradient magnitude and its radial second difference on shells at fixed
    radial offsets from the forward light cone of q, on every time level where the whole band of offsets fits
    behind the apex. The cone uses the wave speed at q. Samples are linearly interpolated; points whose radial
    neighbours one cell in and out leave the lattice are dropped.

    In 1+2 dimensions the tails of the incoming waves fill M⁽⁴⁾ with a smooth bulk inside the cone whose gradient
    grows towards the axis, while the switch-on of M⁽⁴⁾ across the cone shows up in the second difference. Peak
    offset and energies are therefore taken from the curvature profile.

    :param field: :class:`~chronolens.waves.grid.GridField` M⁽⁴⁾
    :param q: space-time apex
    :param ring_cells: half width of the on-cone band
    :param off_cone_cells: (inner, outer) distance of the off-cone band
    :param angles: directions per shell in 1+2 dimensions
    :return: :class:`ScanTable`
    """
    grid = field.grid
    q = np.asarray(q, dtype=float)
    inner, outer = off_cone_cells
    offsets = np.arange(-outer, outer + 1)
    gradient = np.sqrt(sum(g ** 2 for g in np.gradient(field.values, grid.k, *([grid.h] * (grid.dim - 1)))))
    speed = cone_speed(grid, q)
    times = time_axis(grid)
    radii = speed * (times - q[0])
    levels = np.nonzero(radii >= (outer + 1) * grid.h)[0]
    directions = _directions(grid, angles)
    origin = np.array(grid.lower)
    upper = np.array([axis[-1] for axis in spatial_axes(grid)])

    def sample(values, level_index, points):
        cells = (points - origin) / grid.h
        return ndimage.map_coordinates(values, np.vstack([level_index[None, :], cells.T]), order=1)

    amplitude_profile = np.full(len(offsets), np.nan)
    gradient_profile = np.full(len(offsets), np.nan)
    curvature_profile = np.full(len(offsets), np.nan)
    counts = np.zeros(len(offsets), dtype=int)
    for i, offset in enumerate(offsets):
        rho = radii[levels][:, None] + offset * grid.h
        points = q[1:][None, None, :] + rho[..., None] * directions[None, :, :]
        steps = grid.h * np.broadcast_to(directions[None, :, :], points.shape)
        inside = np.ones(points.shape[:-1], dtype=bool)
        for shifted in (points - steps, points + steps):
            inside &= np.all((shifted >= origin) & (shifted <= upper), axis=-1)
        if not inside.any():
            continue
        level_index = np.broadcast_to(levels[:, None], inside.shape)[inside]
        step = steps[inside]
        middle = sample(field.values, level_index, points[inside])
        outward = sample(field.values, level_index, points[inside] + step)
        inward = sample(field.values, level_index, points[inside] - step)
        amplitude_profile[i] = np.mean(np.abs(middle))
        gradient_profile[i] = np.mean(sample(gradient, level_index, points[inside]))
        curvature_profile[i] = np.mean(np.abs(outward - 2. * middle + inward)) / grid.h ** 2
        counts[i] = int(inside.sum())

    on = np.abs(offsets) <= ring_cells
    off = (np.abs(offsets) >= inner) & (np.abs(offsets) <= outer)
    if np.all(np.isnan(curvature_profile)):
        logger.warning("No time level of the lattice leaves room for the scan behind %s", q.tolist())
        return ScanTable(q, offsets, amplitude_profile, gradient_profile, curvature_profile, None, None, None, None,
                         intersecting, counts)
    on_energy = float(np.nanmean(curvature_profile[on] ** 2))
    off_energy = float(np.nanmean(curvature_profile[off] ** 2))
    peak = int(offsets[np.nanargmax(curvature_profile)])
    ratio = on_energy / off_energy if off_energy > 0 else None
    if on_energy == 0 and off_energy == 0:
        peak = None
    logger.info("Singularity scan at %s: peak offset %s cells, on/off ratio %s", q.tolist(), peak, ratio)
    return ScanTable(q, offsets, amplitude_profile, gradient_profile, curvature_profile, peak, on_energy, off_energy,
                     ratio, intersecting, counts)


def scan_table_to_dict(table):
    def clean(values):
        return [None if not np.isfinite(v) else float(v) for v in values]
    return dict(q=np.asarray(table.q).tolist(), offsets=table.offsets.tolist(), amplitude=clean(table.amplitude),
                gradient=clean(table.gradient), curvature=clean(table.curvature), peak_offset=table.peak_offset,
                on_energy=table.on_energy, off_energy=table.off_energy, ratio=table.ratio,
                intersecting=bool(table.intersecting), samples=table.samples.tolist())


def write_scan_csv(table, fh):
    """
    One row per radial offset
    """
    def cell(value):
        return '' if np.isnan(value) else repr(float(value))

    fh.write('offset,amplitude,gradient,curvature,samples\n')
    for offset, amplitude, gradient, curvature, count in zip(table.offsets, table.amplitude, table.gradient,
                                                             table.curvature, table.samples):
        fh.write('{},{},{},{},{}\n'.format(int(offset), cell(amplitude), cell(gradient), cell(curvature), int(count)))
