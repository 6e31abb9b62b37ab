import itertools
import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import ChronoLensError
from chronolens.causal.structure import chronological, causally_precedes
from chronolens.geodesics.engine import integrate_geodesic, REACHED_PARAM
from chronolens.metrics.catalog import metric_family
from chronolens.metrics.geometry import companion_unchecked
from chronolens.observations.pipeline import observe_sources, assemble_dataset

logger = logging.getLogger('observations.sources')

Source = namedtuple('Source', ['id', 'x', 'parent', 'offset'])
Source.__doc__ = """
:param id: integer source id, unique in a dataset
:param x: tuple of chart coordinates
:param parent: id of the target this source accompanies along one of its null geodesics, None for targets
:param offset: affine offset from the parent along that geodesic, None for targets
"""

SourceRegion = namedtuple('SourceRegion', ['center', 'half_widths'])
SourceRegion.__doc__ = """
The coordinate box V in which targets are sampled.

:param center: box center
:param half_widths: half widths per coordinate
"""


def in_source_region(spec, x, p_minus, p_plus):
    """
    Membership of x in I⁻(p⁺) \\ J⁻(p⁻)
    """
    return chronological(spec, x, p_plus) and not causally_precedes(spec, x, p_minus)


def region_violations(spec, region, p_minus, p_plus, points_per_axis=3):
    """
    Checks the box V against I⁻(p⁺) \\ J⁻(p⁻) on a regular lattice including the corners.

    :return: list of lattice points outside the allowed set
    """
    center = np.asarray(region.center, dtype=float)
    half = np.asarray(region.half_widths, dtype=float)
    family = metric_family(spec)
    steps = np.linspace(-1., 1., points_per_axis)
    violations = []
    for unit in itertools.product(steps, repeat=spec.dim):
        x = center + half * np.array(unit)
        if not family.in_domain(x) or not in_source_region(spec, x, p_minus, p_plus):
            violations.append(x.tolist())
    return violations


def sample_sources(spec, region, count, p_minus, p_plus, rng, first_id=0, max_tries=100):
    """
    Draws `count` targets uniformly from the box V, rejecting points outside I⁻(p⁺) \\ J⁻(p⁻).

    :param rng: :class:`numpy.random.Generator`
    :return: list of :class:`Source`
    """
    center = np.asarray(region.center, dtype=float)
    half = np.asarray(region.half_widths, dtype=float)
    sources = []
    tries = 0
    while len(sources) < count:
        tries += 1
        if tries > max_tries * max(count, 1):
            raise ChronoLensError("Could only place {} of {} sources in the source region".format(len(sources),
                                                                                                  count))
        x = center + half * rng.uniform(-1., 1., spec.dim)
        if metric_family(spec).in_domain(x) and in_source_region(spec, x, p_minus, p_plus):
            sources.append(Source(first_id + len(sources), tuple(float(v) for v in x), None, None))
    logger.info("Sampled %d sources in %d draws", count, tries)
    return sources


def spread_records(spec, q, records, count):
    """
    Greedy farthest-point selection of records with well separated arrival directions, one per observer.
    Only untied earliest records count.
    """
    family = metric_family(spec)
    by_observer = {}
    for record in sorted(records, key=lambda r: (r.observer_id, r.s)):
        if record.earliest_flag and not record.on_worldline:
            by_observer.setdefault(record.observer_id, []).append(record)
    candidates = [own[0] for own in by_observer.values()
                  if len(own) == 1 or own[1].s - own[0].s > 1e-9]
    candidates.sort(key=lambda record: record.observer_id)
    if not candidates:
        return []
    g_plus = companion_unchecked(family.components(np.asarray(q, dtype=float)))

    def angle(a, b):
        u, v = np.array(a.launch), np.array(b.launch)
        cosine = (u @ g_plus @ v) / np.sqrt((u @ g_plus @ u) * (v @ g_plus @ v))
        return np.arccos(np.clip(cosine, -1., 1.))

    chosen = [candidates[0]]
    while len(chosen) < min(count, len(candidates)):
        remaining = [c for c in candidates if c not in chosen]
        chosen.append(max(remaining, key=lambda c: min(angle(c, other) for other in chosen)))
    return chosen


def companion_sources(spec, target, records, offsets, count, first_id):
    """
    Sources placed on the null geodesics from a target towards its earliest arrivals, at the given affine offsets
    from the target (negative offsets lie in its past). Their observation sets share the arrival of the
    target, so that null traces through the target can be matched.

    :param target: :class:`Source`
    :param records: arrival records of the target, with launch directions
    :param offsets: affine offsets in the launch normalization
    :param count: number of geodesics used
    :param first_id: id of the first companion
    :return: list of :class:`Source`
    """
    family = metric_family(spec)
    q = np.array(target.x)
    companions = []
    for record in spread_records(spec, q, records, count):
        launch = np.array(record.launch)
        for offset in offsets:
            segment = integrate_geodesic(spec, q, launch, float(offset), tol=1e-12)
            if segment.termination != REACHED_PARAM:
                logger.debug("Companion of %d at offset %g leaves the domain", target.id, offset)
                continue
            x = family.wrap(segment.x[-1])
            companions.append(Source(first_id + len(companions), tuple(float(v) for v in x), target.id,
                                     float(offset)))
    logger.debug("Target %d: %d companions", target.id, len(companions))
    return companions


def assemble_traced_dataset(spec, grid, targets, parameters, offsets, count, environment=None, **dataset_options):
    """
    Sweeps the targets, places their companions and sweeps those, then assembles one dataset of all sources.
    Companion ids follow the largest target id.

    :param targets: list of :class:`Source` without parents
    :param offsets: companion affine offsets, see :func:`companion_sources`
    :param count: number of null geodesics per target carrying companions
    :param dataset_options: passed on to :func:`~chronolens.observations.pipeline.assemble_dataset`
    :return: :class:`~chronolens.observations.pipeline.ObservationDataset`
    """
    observed, errors = observe_sources(spec, grid, targets, parameters, environment)
    companions = []
    next_id = max([target.id for target in targets], default=-1) + 1
    for target in targets:
        placed = companion_sources(spec, target, observed.get(target.id, []), offsets, count, next_id)
        next_id += len(placed)
        companions += placed
    dataset = assemble_dataset(spec, grid, list(targets) + companions, parameters, environment, observed=observed,
                               **dataset_options)
    return dataset._replace(errors=sorted(errors + dataset.errors))
