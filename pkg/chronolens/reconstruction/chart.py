import itertools
import logging
from collections import namedtuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

from chronolens.exceptions import NoValidTuple
from chronolens.causal.observers import ObserverSpec, worldline
from chronolens.geodesics.engine import integrate_geodesic
from chronolens.metrics.catalog import metric_family
from chronolens.reconstruction.cone import normalize_form

logger = logging.getLogger('reconstruction.chart')

ArrivalChart = namedtuple('ArrivalChart', ['source_id', 'observers', 'y', 'condition', 'valid'])
ArrivalChart.__doc__ = """
Observation-time coordinates Y(q) = (f⁺_{μ_1}(q), ..., f⁺_{μ_n}(q)) of one source.

:param source_id: id of the source q
:param observers: tuple of the n observer ids of the chart
:param y: tuple of the n earliest observation times
:param condition: condition number of the chart differences over the neighbouring sources
:param valid: condition below κ_max
"""


class EarliestTimeTable:
    """
    Earliest observation times of all sources at all observers, read from the records of a dataset view.
    Entries are NaN where the observer did not see the source, where the earliest arrival is tied (several
    geodesics arrive within `tie_tol`) and for sources on the worldline.

    :param records: iterable of :class:`~chronolens.observations.pipeline.ArrivalRecord`
    :param tie_tol: arrivals closer than this are ties
    """

    def __init__(self, records, tie_tol=1e-9):
        by_pair = {}
        for record in records:
            by_pair.setdefault((record.source_id, record.observer_id), []).append(record)
        self.source_ids = sorted(set(source_id for source_id, _ in by_pair))
        self.observer_ids = sorted(set(observer_id for _, observer_id in by_pair))
        self._rows = {source_id: i for i, source_id in enumerate(self.source_ids)}
        self._columns = {observer_id: j for j, observer_id in enumerate(self.observer_ids)}
        self.values = np.full((len(self.source_ids), len(self.observer_ids)), np.nan)
        self.earliest = {}
        self.tied = set()
        self.flagged = set()
        for (source_id, observer_id), own in by_pair.items():
            own = sorted((r for r in own if not r.on_worldline), key=lambda r: r.s)
            if not own:
                continue
            if len(own) > 1 and own[1].s - own[0].s < tie_tol:
                self.tied.add((source_id, observer_id))
                continue
            if not own[0].earliest_flag:
                self.flagged.add((source_id, observer_id))
                continue
            self.earliest[source_id, observer_id] = own[0]
            self.values[self._rows[source_id], self._columns[observer_id]] = own[0].s

    def columns(self, observers):
        return [self._columns[o] for o in observers]

    def y(self, source_id, observers):
        """
        :return: array of the earliest times of a source at `observers`, NaN where unavailable
        """
        if source_id not in self._rows or any(o not in self._columns for o in observers):
            return np.full(len(observers), np.nan)
        return self.values[self._rows[source_id], self.columns(observers)]

    def complete(self, observers):
        """
        :return: (source ids, Y matrix) of the sources with finite times at all `observers`
        """
        if any(o not in self._columns for o in observers):
            return [], np.zeros((0, len(observers)))
        block = self.values[:, self.columns(observers)]
        keep = np.all(np.isfinite(block), axis=1)
        return [s for s, k in zip(self.source_ids, keep) if k], block[keep]


def candidate_tuples(observer_ids, dim, extra=3):
    """
    All n-subsets of the first n + `extra` observers
    """
    pool = sorted(observer_ids)[:dim + extra]
    return list(itertools.combinations(pool, dim))


def _condition(differences):
    singular = np.linalg.svd(differences, compute_uv=False)
    if len(singular) < differences.shape[1] or singular[-1] <= singular[0] * 1e-15:
        return np.inf
    return float(singular[0] / singular[-1])


def observation_time_chart(view, dim, targets=None, observer_tuples=None, neighbours=None, kappa_max=1e4,
                           table=None, tie_tol=1e-9):
    """
    Evaluates the observation-time chart Y at every target and picks, per target, the observer tuple with the
    best conditioned Jacobian. The conditioning is estimated from the differences Y(q') - Y(q) over the k
    nearest sources q' (nearest in the table of all candidate observers).

    :param view: :class:`~chronolens.observations.pipeline.DatasetView`
    :param dim: spacetime dimension n
    :param targets: source ids to chart, all sources by default
    :param observer_tuples: candidate n-tuples of observer ids, by default :func:`candidate_tuples`
    :param neighbours: k, 3 n by default
    :param kappa_max: largest condition number of a valid chart
    :raises NoValidTuple: if no target has a valid chart
    :return: list of :class:`ArrivalChart`, one per target with finite times at some candidate tuple
    """
    if table is None:
        table = EarliestTimeTable(view.records, tie_tol)
    targets = table.source_ids if targets is None else list(targets)
    if not targets:
        return []
    tuples = [tuple(t) for t in (observer_tuples or candidate_tuples(table.observer_ids, dim))]
    k = neighbours or 3 * dim
    union = sorted(set(itertools.chain.from_iterable(tuples)))
    ids, block = table.complete(union)
    if len(ids) < 2:
        raise NoValidTuple("Fewer than two sources are seen by all candidate observers {}".format(union))
    tree = NearestNeighbors(n_neighbors=min(k + 1, len(ids))).fit(block)
    row_of = {source_id: i for i, source_id in enumerate(ids)}
    column_of = {observer: j for j, observer in enumerate(union)}

    charts = []
    for target in targets:
        if target not in row_of:
            logger.debug("Source %s lacks untied earliest times at the candidate observers", target)
            continue
        _, nearest = tree.kneighbors(block[row_of[target]][None, :])
        nearest = [i for i in nearest[0] if i != row_of[target]]
        best = None
        for observers in tuples:
            columns = [column_of[o] for o in observers]
            differences = block[nearest][:, columns] - block[row_of[target], columns]
            condition = _condition(differences)
            if best is None or condition < best[1]:
                best = observers, condition
        observers, condition = best
        y = tuple(float(v) for v in block[row_of[target], [column_of[o] for o in observers]])
        charts.append(ArrivalChart(target, observers, y, condition, bool(condition < kappa_max)))
    if charts and not any(chart.valid for chart in charts):
        raise NoValidTuple("All condition numbers exceed κ_max = {:g}, best {:.3g}".format(
            kappa_max, min(chart.condition for chart in charts)))
    logger.info("Charted %d of %d targets, %d valid", len(charts), len(targets), sum(c.valid for c in charts))
    return charts


def observers_from_metadata(metadata):
    """
    :return: dict observer id -> :class:`~chronolens.causal.observers.ObserverSpec` of the grid stored in a
        dataset header
    """
    members = {}
    for member in metadata['grid']['members']:
        members[int(member['id'])] = ObserverSpec(int(member['id']), tuple(map(float, member['z'])),
                                                  tuple(map(float, member['eta'])),
                                                  tuple(map(float, member['s_range'])), float(member['s_ref']))
    return members


def source_tangent(spec, record, tol=1e-12):
    """
    The tangent ζ at the source of the null geodesic of a record, in the affine parametrization whose arrival
    velocity is the recorded direction ξ. Integrates back from the arrival event by the recorded affine length.

    :return: (source event, ζ)
    """
    segment = integrate_geodesic(spec, np.array(record.x), np.array(record.xi), -record.affine_length, tol=tol)
    return metric_family(spec).wrap(segment.x[-1]), segment.xdot[-1]


def first_variation_rate(spec, source_event, zeta, z_dot, arrival_event, theta, observer_velocity):
    """
    Rate of change dT/ds of the earliest observation time along a source curve z(s):
    g(ż, ζ) / g(θ, μ̇), with ζ and θ the source and arrival tangents of one affinely parametrized null geodesic.
    """
    family = metric_family(spec)
    g_q = family.components(np.asarray(source_event, dtype=float))
    g_x = family.components(np.asarray(arrival_event, dtype=float))
    return float(np.asarray(z_dot) @ g_q @ zeta) / float(np.asarray(theta) @ g_x @ observer_velocity)


def chart_jacobian(spec, records, observers):
    """
    Jacobian dY of the observation-time chart at a source from the first variation identity, one row per
    observer: row j is (g ζ_j) / g(θ_j, μ̇_j).

    :param records: the earliest records of the source at the chart observers, in chart order
    :param observers: :class:`~chronolens.causal.observers.ObserverSpec` in chart order
    :return: (source event, n x n Jacobian)
    """
    family = metric_family(spec)
    rows = []
    q = None
    for record, observer in zip(records, observers):
        source_event, zeta = source_tangent(spec, record)
        q = source_event if q is None else q
        velocity = worldline(spec, observer).velocity(record.s)
        g_x = family.components(np.array(record.x))
        rows.append(family.components(source_event) @ zeta / float(np.array(record.xi) @ g_x @ velocity))
    return q, np.array(rows)


def pushforward_form(spec, records, observers):
    """
    The true metric at a source pushed forward through the chart: J^{-T} g J^{-1}, unit Frobenius norm and
    C₀₀ < 0. This is the form a perfect cone fit in chart coordinates recovers.
    """
    q, jacobian = chart_jacobian(spec, records, observers)
    inverse = np.linalg.inv(jacobian)
    return normalize_form(inverse.T @ metric_family(spec).components(q) @ inverse)
