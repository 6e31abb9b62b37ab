import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import TooFewMatches

logger = logging.getLogger('reconstruction.traces')

NullTrace = namedtuple('NullTrace', ['anchor', 'source_ids', 'points', 'tangent', 'residual'])
NullTrace.__doc__ = """
The image in chart coordinates of the past null geodesic of one arrival of a target.

:param anchor: the arrival record of the target
:param source_ids: ids of the sources sharing the arrival, ordered by affine length (farthest first)
:param points: array (m, n) of their chart points
:param tangent: unit tangent of the fitted curve at the target's chart point
:param residual: RMS distance of the points from the fitted curve
"""

TraceParameters = namedtuple('TraceParameters', ['match_tol', 'dir_tol', 'min_points', 'residual_tol'])
TraceParameters.__doc__ = """
:param match_tol: largest arrival time difference of two records on one null geodesic
:param dir_tol: largest angle between their arrival directions
:param min_points: fewest sources on a trace
:param residual_tol: largest RMS residual of the cubic fit
"""


def default_trace_parameters(**overrides):
    parameters = TraceParameters(match_tol=3e-8, dir_tol=2e-2, min_points=4, residual_tol=1e-4)
    return parameters._replace(**overrides)


def _angle(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    cosine = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(cosine, -1., 1.)))


class ArrivalIndex:
    """
    Earliest records grouped per observer and sorted by arrival time, for matching arrivals of different sources.
    """

    def __init__(self, records):
        self.by_observer = {}
        for record in records:
            if record.earliest_flag and not record.on_worldline:
                self.by_observer.setdefault(record.observer_id, []).append(record)
        self.times = {}
        for observer_id, own in self.by_observer.items():
            own.sort(key=lambda r: r.s)
            self.times[observer_id] = np.array([r.s for r in own])

    def matches(self, anchor, match_tol, dir_tol):
        times = self.times.get(anchor.observer_id)
        if times is None:
            return []
        lo, hi = np.searchsorted(times, [anchor.s - match_tol, anchor.s + match_tol])
        return [r for r in self.by_observer[anchor.observer_id][lo:hi]
                if r.source_id != anchor.source_id and abs(r.s - anchor.s) < match_tol
                and _angle(r.xi, anchor.xi) < dir_tol]


def fit_trace_curve(points, at):
    """
    Fits a cubic (lower degree for fewer points) in chord length through ordered chart points.

    :param points: array (m, n)
    :param at: index of the point where the tangent is evaluated
    :return: (unit tangent, RMS residual)
    """
    points = np.asarray(points, dtype=float)
    chords = np.r_[0., np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))]
    degree = min(3, len(points) - 1)
    coefficients = [np.polyfit(chords, points[:, k], degree) for k in range(points.shape[1])]
    fitted = np.column_stack([np.polyval(c, chords) for c in coefficients])
    tangent = np.array([np.polyval(np.polyder(c), chords[at]) for c in coefficients])
    residual = float(np.sqrt(np.mean(np.sum((points - fitted) ** 2, axis=1))))
    return tangent / np.linalg.norm(tangent), residual


def build_null_traces(view, chart, table, parameters, index=None):
    """
    Null traces through one target: for every earliest arrival of the target, the other sources with a matching
    arrival (same observer, arrival times within `match_tol`, directions within `dir_tol`) lie on the same past
    null geodesic. Ordered by affine length and mapped through the chart, they are fitted by a cubic curve whose
    tangent at the target is a null direction in chart coordinates.

    Arrivals with too few matches or a poor fit are logged and skipped.

    :param view: :class:`~chronolens.observations.pipeline.DatasetView`
    :param chart: :class:`~chronolens.reconstruction.chart.ArrivalChart` of the target
    :param table: :class:`~chronolens.reconstruction.chart.EarliestTimeTable` of the view
    :param parameters: :class:`TraceParameters`
    :param index: optional :class:`ArrivalIndex` of the view, shared between targets
    :return: list of :class:`NullTrace`
    """
    index = index or ArrivalIndex(view.records)
    target = chart.source_id
    anchors = [record for (source_id, _), record in sorted(table.earliest.items()) if source_id == target]
    traces = []
    for anchor in anchors:
        try:
            traces.append(_trace(anchor, chart, table, parameters, index))
        except TooFewMatches as e:
            logger.debug("Target %s, observer %s: %s", target, anchor.observer_id, e)
    logger.debug("Target %s: %d of %d arrivals give null traces", target, len(traces), len(anchors))
    return traces


def _trace(anchor, chart, table, parameters, index):
    members = [anchor] + index.matches(anchor, parameters.match_tol, parameters.dir_tol)
    points = []
    for record in sorted(members, key=lambda r: -r.affine_length):
        y = table.y(record.source_id, chart.observers)
        if np.all(np.isfinite(y)):
            points.append((record, y))
    if len(points) < parameters.min_points or all(record is not anchor for record, _ in points):
        raise TooFewMatches("{} of {} sources on the trace have chart points".format(len(points), len(members)))
    at = [i for i, (record, _) in enumerate(points) if record is anchor][0]
    tangent, residual = fit_trace_curve(np.array([y for _, y in points]), at)
    if residual > parameters.residual_tol:
        raise TooFewMatches("Cubic fit residual {:.3g} above {:.3g}".format(residual, parameters.residual_tol))
    return NullTrace(anchor, [record.source_id for record, _ in points], np.array([y for _, y in points]), tangent,
                     residual)
