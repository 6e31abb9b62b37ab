import logging
from collections import namedtuple

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import null_space
from sklearn.neighbors import NearestNeighbors

from chronolens.exceptions import ChronoLensError, EmptySet, DuplicateSourceId, StepFailure
from chronolens.causal.observers import worldline, worldline_distance, earliest_obs_time
from chronolens.causal.structure import TAU_SAMPLED_TOL, chronological, null_direction
from chronolens.geodesics.engine import integrate_geodesic, integrate_bundle
from chronolens.geodesics.jacobi import jacobi_first_conjugate
from chronolens.metrics.catalog import metric_family, spec_hash
from chronolens.metrics.geometry import check_in_domain, companion_unchecked, frame_from_metric
from chronolens.utils.environment import Environment

logger = logging.getLogger('observations.pipeline')

ArrivalRecord = namedtuple('ArrivalRecord', ['source_id', 'observer_id', 's', 'x', 'xi', 'affine_length',
                                             'earliest_flag', 'on_worldline', 'launch'])
ArrivalRecord.__doc__ = """
One element of a light observation set: a future null geodesic from a source crossing an observer worldline.

:param source_id: id of the source q
:param observer_id: id of the observer μ
:param s: arrival proper time on the worldline
:param x: arrival event μ(s), periodic coordinates wrapped
:param xi: arrival direction, null with unit g⁺ norm. NaN for the degenerate record of a source on the worldline
:param affine_length: affine distance from the source when the geodesic is parametrized so that its arrival
    velocity is `xi`
:param earliest_flag: True iff the arrival lies before the cut point of the geodesic, i.e. the record belongs to
    the earliest observation set
:param on_worldline: True for the degenerate record of a source lying on the worldline
:param launch: future null direction at the source, e₀ + u in the Lorentz frame there. Truth data, None when
    withheld
"""

ForwardParameters = namedtuple('ForwardParameters', ['dir_count', 's_max', 'ray_samples', 'worldline_samples',
                                                     'seed_tol', 'cluster_tol', 'ray_tol', 'newton_tol',
                                                     'accept_tol', 'max_iter', 'dedup_tol', 'tie_tol',
                                                     'polish_tol', 'on_worldline_tol'])
ForwardParameters.__doc__ = """
:param dir_count: number of null directions launched from every source
:param s_max: largest affine parameter of the launched rays
:param ray_samples: number of uniform affine samples per ray used for crossing detection
:param worldline_samples: number of samples per observer worldline used for crossing detection
:param seed_tol: embedded distance below which a ray sample and a worldline sample seed a crossing
:param cluster_tol: linkage distance in (s, launch direction) separating distinct crossings of one observer
:param ray_tol: integrator tolerance of the refined rays
:param newton_tol: g⁺ residual at which the Newton refinement of a crossing stops
:param accept_tol: largest g⁺ residual of an accepted crossing
:param max_iter: Newton iterations per crossing
:param dedup_tol: crossings of one observer closer than this in s with the same direction are merged
:param tie_tol: arrivals closer than this in s are ties
:param polish_tol: bisection tolerance of the earliest observation time used to polish earliest records
:param on_worldline_tol: g⁺ distance below which a source lies on an observer worldline
"""


def default_forward_parameters(dim, **overrides):
    """
    :return: :class:`ForwardParameters` with the defaults for spacetime dimension `dim`
    """
    defaults = dict(dir_count={2: 2, 3: 512, 4: 2048}[dim], s_max=12., ray_samples=601, worldline_samples=801,
                    seed_tol=0.2, cluster_tol=0.2, ray_tol=1e-11, newton_tol=1e-11, accept_tol=1e-6, max_iter=25,
                    dedup_tol=1e-7, tie_tol=1e-9, polish_tol=1e-11, on_worldline_tol=1e-9)
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ValueError("Unknown forward parameters {}".format(sorted(unknown)))
    defaults.update(overrides)
    return ForwardParameters(**defaults)


def celestial_directions(dim, count):
    """
    Deterministic unit directions on the celestial sphere S^{n-2}: the two signs for n = 2, evenly spaced angles
    for n = 3 and a Fibonacci lattice for n = 4.

    :return: array (count, n - 1)
    """
    if dim == 2:
        return np.array([[1.], [-1.]])
    k = np.arange(count)
    if dim == 3:
        angles = 2 * np.pi * k / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    z = 1. - (2. * k + 1.) / count
    radius = np.sqrt(1. - z ** 2)
    phi = np.pi * (3. - np.sqrt(5.)) * k
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi), z])


def _unit_companion(g, v):
    return v / np.sqrt(v @ companion_unchecked(g) @ v)


def _crossing_seeds(bundle, ray_index, sample_index, s_w, distances, neighbours, directions, cluster_tol,
                    r_min=0.):
    """
    Reduces the (ray sample, worldline sample) pairs near one observer to one seed per distinct crossing.

    :return: list of (ray, r, s) triples
    """
    pairs = [(ray_index[k], bundle.s[sample_index[k] + 1], s_w[j], d)
             for j in range(len(s_w)) for d, k in zip(distances[j], neighbours[j])]
    pairs = [p for p in pairs if p[1] > r_min]
    if not pairs:
        return []
    # closest pair per ray on every gap-separated stretch of worldline time
    candidates = []
    stretch = None
    for ray, r, s, d in sorted(pairs, key=lambda p: (p[0], p[2])):
        if stretch is not None and stretch[0] == ray and s - stretch[4] <= cluster_tol:
            stretch[4] = s
            if d < stretch[3]:
                stretch[1:4] = r, s, d
        else:
            stretch = [ray, r, s, d, s]
            candidates.append(stretch)
    if len(candidates) == 1:
        labels = [1]
    else:
        features = np.column_stack([[c[2] for c in candidates], directions[[c[0] for c in candidates]]])
        labels = fcluster(linkage(features, method='single'), t=cluster_tol, criterion='distance')
    seeds = {}
    for label, candidate in zip(labels, candidates):
        if label not in seeds or candidate[3] < seeds[label][3]:
            seeds[label] = candidate
    return [(ray, r, s) for ray, r, s, _, _ in sorted(seeds.values(), key=lambda c: (c[2], c[0]))]


def refine_crossing(spec, q, frame, u0, r0, line, s0, parameters):
    """
    Newton refinement of a ray-worldline crossing. Solves exp_q(r ξ(a)) = μ(s) for the launch direction
    ξ(a) = e₀ + normalize(u₀ + B a) (B an orthonormal complement of u₀), the affine length r and the proper
    time s. The r and s columns of the Jacobian are the two tangents, the direction columns are forward
    differences of neighbouring rays.

    :return: (r, s, launch direction, ray segment) or None when the iteration does not converge
    """
    family = metric_family(spec)
    n = spec.dim
    basis = null_space(np.atleast_2d(u0)).T if n > 2 else np.zeros((0, 1))

    def launch(a):
        u = u0 + a @ basis if n > 2 else u0
        return null_direction(frame, u / np.linalg.norm(u))

    def ray(a, r):
        return integrate_geodesic(spec, q, launch(a), 1.25 * r + 0.05, tol=parameters.ray_tol)

    a, r, s = np.zeros(n - 2), float(r0), float(s0)
    error, segment = np.inf, None
    try:
        for iteration in range(parameters.max_iter + 1):
            segment = ray(a, r)
            if segment.s_end < r or not line.s_a <= s <= line.s_b:
                return None
            x_r = segment.position(r)
            residual = family.difference(line.position(s), x_r)
            chol = np.linalg.cholesky(companion_unchecked(family.components(family.clamp(x_r)))).T
            error = np.linalg.norm(chol @ residual)
            if error < parameters.newton_tol or iteration == parameters.max_iter:
                break
            jacobian = np.empty((n, n))
            for k in range(n - 2):
                step = 1e-7
                shifted = ray(a + step * np.eye(n - 2)[k], r)
                if shifted.s_end < r:
                    return None
                jacobian[:, k] = -family.difference(shifted.position(r), x_r) / step
            jacobian[:, n - 2] = -segment.velocity(r)
            jacobian[:, n - 1] = line.velocity(s)
            update = np.linalg.lstsq(jacobian, -residual, rcond=None)[0]
            norm = np.linalg.norm(update)
            if norm > 0.5:
                update *= 0.5 / norm
            a = a + update[:n - 2]
            r = r + update[n - 2]
            s = float(np.clip(s + update[n - 1], line.s_a, line.s_b))
            if r <= 0:
                return None
    except (StepFailure, np.linalg.LinAlgError) as e:
        logger.debug("Crossing refinement from %s failed: %s", q, e)
        return None
    if error > parameters.accept_tol:
        logger.debug("Crossing refinement from %s stopped at residual %.3g", q, error)
        return None
    return r, s, launch(a), segment


def _observe_degenerate(spec, member, q, parameters):
    distance, s = worldline_distance(spec, member, q)
    if distance >= parameters.on_worldline_tol:
        return None
    n = spec.dim
    return ArrivalRecord(None, member.id, s, tuple(metric_family(spec).wrap(q).tolist()), (np.nan,) * n, 0., True,
                         True, (np.nan,) * n)


def light_observation_set(spec, grid, q, parameters, source_id=0, strict=False):
    """
    The light observation set of a source q: every crossing of a future null geodesic from q with an observer
    worldline of the grid.

    Null directions e₀ + u of the Lorentz frame at q are launched for the unit vectors u of
    :func:`celestial_directions` and integrated as one bundle. Ray samples within `seed_tol` of worldline samples
    (in the Euclidean embedding of the chart) seed crossings, which are refined by :func:`refine_crossing`.
    A source on a worldline additionally gets a degenerate record with undefined direction.

    :param spec: :class:`~chronolens.metrics.catalog.MetricSpec`
    :param grid: :class:`~chronolens.causal.observers.ObserverGrid`
    :param q: source event
    :param parameters: :class:`ForwardParameters`
    :param source_id: id stamped on the records
    :param strict: raise :class:`~chronolens.exceptions.EmptySet` when no ray meets an observer
    :return: list of :class:`ArrivalRecord` sorted by (observer id, s)
    """
    q = check_in_domain(spec, q)
    family = metric_family(spec)
    n = spec.dim
    frame = frame_from_metric(family.components(q))
    directions = celestial_directions(n, parameters.dir_count)
    xis = null_direction(frame, directions)
    lines = [worldline(spec, member) for member in grid.members]
    t_stop = max(line.position(line.s_b)[0] for line in lines) + parameters.seed_tol
    bundle = integrate_bundle(spec, np.tile(q, (len(xis), 1)), xis, parameters.s_max, parameters.ray_samples,
                              tol=1e-8, t_stop=t_stop)
    ray_points = bundle.x[:, 1:]
    ray_index, sample_index = np.nonzero(np.isfinite(ray_points[..., 0]))
    tree = None
    if len(ray_index):
        tree = NearestNeighbors(radius=parameters.seed_tol).fit(family.embed(ray_points[ray_index, sample_index]))

    records = []
    for member, line in zip(grid.members, lines):
        degenerate = _observe_degenerate(spec, member, q, parameters)
        if degenerate is not None:
            records.append(degenerate._replace(source_id=source_id))
        if tree is None:
            continue
        s_w, positions = line.samples(parameters.worldline_samples)
        distances, neighbours = tree.radius_neighbors(family.embed(positions))
        seeds = _crossing_seeds(bundle, ray_index, sample_index, s_w, distances, neighbours, directions,
                                parameters.cluster_tol, r_min=2 * parameters.seed_tol if degenerate else 0.)
        crossings = []
        for ray, r0, s0 in seeds:
            refined = refine_crossing(spec, q, frame, directions[ray], r0, line, s0, parameters)
            if refined is None:
                continue
            r, s, launch, segment = refined
            if any(abs(s - other[1]) < parameters.dedup_tol and
                   np.linalg.norm(launch - other[2]) < parameters.cluster_tol for other in crossings):
                continue
            crossings.append(refined)
        for r, s, launch, segment in crossings:
            records.append(_arrival_record(spec, q, source_id, member, line, r, s, launch, segment))

    _polish_earliest(spec, grid, q, records, parameters)
    records.sort(key=lambda record: (record.observer_id, record.s))
    if not records:
        if strict:
            raise EmptySet("No null geodesic from {} meets the observation tube".format(q.tolist()))
        logger.info("Source %s at %s is not observed by any of the %d observers", source_id, q, len(lines))
    else:
        logger.debug("Source %s: %d arrivals at %d observers", source_id, len(records),
                     len(set(record.observer_id for record in records)))
    return records


def _arrival_record(spec, q, source_id, member, line, r, s, launch, segment):
    family = metric_family(spec)
    x = family.wrap(line.position(s))
    g = family.components(x)
    velocity = segment.velocity(r)
    speed = np.sqrt(velocity @ companion_unchecked(g) @ velocity)
    before_cut = not chronological(spec, q, x, rtol=1e-8, tau_tol=TAU_SAMPLED_TOL)
    if before_cut:
        before_cut = r <= jacobi_first_conjugate(segment).parameter
    return ArrivalRecord(source_id, member.id, float(s), tuple(x.tolist()), tuple((velocity / speed).tolist()),
                         float(r * speed), bool(before_cut), False, tuple(launch.tolist()))


def _polish_earliest(spec, grid, q, records, parameters):
    """
    Replaces the arrival time of the earliest record per observer by the bisection of the earliest observation
    time where the chronology predicate is closed form, in place.
    """
    family = metric_family(spec)
    if family.chronology is None:
        return
    members = {member.id: member for member in grid.members}
    for observer_id in set(record.observer_id for record in records):
        candidates = [i for i, record in enumerate(records)
                      if record.observer_id == observer_id and record.earliest_flag and not record.on_worldline]
        if not candidates:
            continue
        first = min(candidates, key=lambda i: records[i].s)
        member = members[observer_id]
        try:
            s = earliest_obs_time(spec, member, q, tol=parameters.polish_tol).s
        except ChronoLensError as e:
            logger.warning("No earliest observation time of %s at observer %d: %s", q, observer_id, e)
            continue
        if abs(s - records[first].s) > 1e-6:
            logger.warning("Earliest arrival of %s at observer %d differs from the bisection: %.9g vs %.9g", q,
                           observer_id, records[first].s, s)
            continue
        x = family.wrap(worldline(spec, member).position(s))
        records[first] = records[first]._replace(s=float(s), x=tuple(x.tolist()))


def earliest_observation_set(records):
    """
    The records of the earliest observation set, i.e. those arriving before the cut point of their geodesic.
    """
    return [record for record in records if record.earliest_flag]


def earliest_point_on_observer(records, observer_id, tie_tol=1e-9):
    """
    The record with the smallest arrival time at one observer.

    :return: an :class:`ArrivalRecord`, a tuple of records when several arrive within `tie_tol`, or None when the
        observer has no record
    """
    own = sorted((record for record in records if record.observer_id == observer_id), key=lambda r: r.s)
    if not own:
        return None
    ties = tuple(record for record in own if record.s - own[0].s < tie_tol)
    return ties[0] if len(ties) == 1 else ties


def arrival_direction_estimate(spec, grid, records):
    """
    Estimates the arrival direction at the central observer from the earliest arrival times over the whole
    congruence: a quadratic least squares fit of s against the spatial offsets of the member positions in the
    Lorentz frame at the center gives the gradient of the arrival time, and the direction is e₀ + ∇s.

    :return: null vector with unit g⁺ norm, or None when fewer members than fit coefficients saw the source
    """
    family = metric_family(spec)
    n = spec.dim
    z0 = np.array(grid.center.z)
    g = family.components(z0)
    frame = frame_from_metric(g)
    offsets, times = [], []
    for member in grid.members:
        first = earliest_point_on_observer([r for r in records if r.earliest_flag and not r.on_worldline],
                                           member.id)
        if first is None or isinstance(first, tuple):
            continue
        offsets.append(frame[1:] @ g @ family.difference(np.array(member.z), z0))
        times.append(first.s)
    offsets = np.array(offsets)
    rows = [np.ones(len(times))] + list(offsets.T) + [offsets[:, i] * offsets[:, j]
                                                      for i in range(n - 1) for j in range(i, n - 1)]
    design = np.column_stack(rows) if len(times) else np.zeros((0, len(rows)))
    if len(times) < design.shape[1]:
        return None
    coefficients = np.linalg.lstsq(design, np.array(times), rcond=None)[0]
    direction = frame[0] + coefficients[1:n] @ frame[1:]
    return _unit_companion(g, direction)


ObservationDataset = namedtuple('ObservationDataset', ['metadata', 'records', 'truth', 'errors'])
ObservationDataset.__doc__ = """
:param metadata: dict with the metric spec and its hash, the observer grid, the diamond endpoints, the forward
    parameters, the truth-withheld flag, the config hash and the ids of the targets (sources without a parent)
:param records: list of :class:`ArrivalRecord` sorted by (source id, observer id, s)
:param truth: dict source id -> dict(x=..., parent=..., offset=...) of source positions, None when withheld
:param errors: list of (source id, message) pairs of sources whose sweep failed
"""

DatasetView = namedtuple('DatasetView', ['metadata', 'records'])
DatasetView.__doc__ = """
What reconstruction sees of an :class:`ObservationDataset`: records without launch directions and no source
positions.
"""


def dataset_view(dataset):
    """
    :return: :class:`DatasetView` of a dataset
    """
    return DatasetView(dict(dataset.metadata), [record._replace(launch=None) for record in dataset.records])


def grid_to_dict(grid):
    return dict(center=grid.center._asdict(), h_hat=grid.h_hat, spacing=grid.spacing,
                members=[member._asdict() for member in grid.members])


def _observe_source(item):
    spec, grid, source, parameters = item
    try:
        return source.id, light_observation_set(spec, grid, source.x, parameters, source_id=source.id), None
    except ChronoLensError as e:
        logger.warning("Forward sweep of source %s failed: %s", source.id, e)
        return source.id, [], "{}: {}".format(type(e).__name__, e)


def observe_sources(spec, grid, sources, parameters, environment=None):
    """
    Light observation sets of many sources, one independent sweep per source.

    :return: (dict source id -> list of records, list of (source id, message) errors)
    """
    environment = environment or Environment()
    results = environment.map(_observe_source, [(spec, grid, source, parameters) for source in sources])
    observed = {source_id: records for source_id, records, _ in results}
    errors = [(source_id, message) for source_id, _, message in results if message is not None]
    return observed, errors


def assemble_dataset(spec, grid, sources, parameters, environment=None, observed=None, p_minus=None, p_plus=None,
                     withhold_truth=False, config_hash=None):
    """
    Runs the forward sweeps of all sources not in `observed` and assembles the dataset.

    :param sources: list of :class:`~chronolens.observations.sources.Source`
    :param observed: optional dict source id -> records of sources swept before
    :raises DuplicateSourceId: if two sources share an id
    :return: :class:`ObservationDataset`
    """
    ids = [source.id for source in sources]
    duplicates = sorted(set(i for i in ids if ids.count(i) > 1))
    if duplicates:
        raise DuplicateSourceId("Source ids {} are used more than once".format(duplicates))
    observed = dict(observed or {})
    pending = [source for source in sources if source.id not in observed]
    swept, errors = observe_sources(spec, grid, pending, parameters, environment)
    observed.update(swept)
    records = [record for source in sources for record in observed.get(source.id, [])]
    records.sort(key=lambda record: (record.source_id, record.observer_id, record.s))
    metadata = dict(kind='observation_dataset', metric=spec.to_dict(), metric_hash=spec_hash(spec),
                    grid=grid_to_dict(grid), p_minus=None if p_minus is None else list(map(float, p_minus)),
                    p_plus=None if p_plus is None else list(map(float, p_plus)), parameters=parameters._asdict(),
                    truth_withheld=bool(withhold_truth), config_hash=config_hash, source_count=len(sources),
                    target_ids=[source.id for source in sources if source.parent is None])
    truth = None if withhold_truth else {source.id: dict(x=[float(v) for v in source.x], parent=source.parent,
                                                         offset=source.offset) for source in sources}
    if errors:
        logger.warning("%d of %d sources failed: %s", len(errors), len(sources), errors)
    logger.info("Dataset with %d records of %d sources", len(records), len(sources))
    return ObservationDataset(metadata, records, truth, sorted(errors))
