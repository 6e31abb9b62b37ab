"""
Plot data as CSV tables. Nothing here renders; every function returns rows or writes them to an open file.
"""
import csv
import logging

import numpy as np

from chronolens import convert_dict_to_numpy, get_grouped_dict
from chronolens.metrics import metric_spec_from_dict
from chronolens.observations import celestial_directions
from chronolens.waves import GridSpec, GridField

logger = logging.getLogger('utils.plot_data')

ARRIVAL_HEADER = ['source_id', 'observer_id', 's', 'earliest']
SECTION_HEADER = ['target_id', 'sample', 'v0']
HISTOGRAM_HEADER = ['lower', 'upper', 'count']


def arrival_surface_rows(records):
    """
    Arrival times s over (source, observer), one row per record. In flat space the earliest arrivals of one
    source over a line of observers trace a cone.

    :param records: iterable of :class:`~chronolens.observations.pipeline.ArrivalRecord`
    """
    rows = [[r.source_id, r.observer_id, r.s, int(r.earliest_flag)] for r in records]
    return sorted(rows, key=lambda row: (row[0], row[1], row[2]))


def cone_section_rows(report, samples=64):
    """
    Future null directions v = (v₀, θ) of every fitted cone C(v, v) = 0, one per unit spatial direction θ, with
    v₀ the future root of C₀₀ v₀² + 2 (C₀·θ) v₀ + θᵀ C θ = 0. Directions without a real future root are left
    out.

    :param report: reconstruction report dict
    """
    rows = []
    for target in report['targets']:
        if target['form'] is None:
            continue
        target = convert_dict_to_numpy(target)
        form = target['form']
        dim = form.shape[0]
        thetas = celestial_directions(dim, samples)
        for i, theta in enumerate(thetas):
            a = form[0, 0]
            b = 2. * form[0, 1:] @ theta
            c = theta @ form[1:, 1:] @ theta
            discriminant = b * b - 4. * a * c
            if discriminant < 0 or a == 0:
                continue
            roots = [(-b + sign * np.sqrt(discriminant)) / (2. * a) for sign in (1., -1.)]
            future = [root for root in roots if root > 0]
            if not future:
                continue
            rows.append([int(target['target_id']), i, float(min(future))] + [float(v) for v in theta])
    logger.debug("%d cone section points of %d targets", len(rows), len(report['targets']))
    return rows


def residual_histogram(report, bins=20):
    """
    Histogram of log10 of the largest cone fit residual per reconstructed target

    :return: rows (lower edge, upper edge, count), empty without reconstructed targets
    """
    grouped = get_grouped_dict(report['targets'])
    residuals = [max(r) for r in grouped.get('residuals', []) if r]
    if not residuals:
        return []
    values = np.log10(np.maximum(residuals, 1e-300))
    counts, edges = np.histogram(values, bins=bins)
    return [[float(lo), float(hi), int(count)] for lo, hi, count in zip(edges[:-1], edges[1:], counts)]


def section_header(dim):
    return SECTION_HEADER + ['theta_{}'.format(i + 1) for i in range(dim - 1)]


def write_rows(header, rows, fh):
    writer = csv.writer(fh, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def field_from_snapshot(header, values):
    """
    :return: :class:`~chronolens.waves.grid.GridField` of a snapshot read with
        :func:`~chronolens.waves.grid.read_snapshot`
    """
    background = header.get('background')
    grid = GridSpec(header['dim'], header['t0'], header['k'], header['steps'], tuple(header['lower']),
                    tuple(header['upper']), header['h'], tuple(header['counts']),
                    None if background is None else metric_spec_from_dict(background))
    return GridField(grid, np.array(values))


def slice_steps(grid, count=5):
    """
    `count` evenly spaced time levels of a lattice, including the first and the last
    """
    return [int(step) for step in np.unique(np.linspace(0, grid.steps, count).round().astype(int))]
