import csv
import json
import logging
from collections import namedtuple

import numpy as np

from chronolens.exceptions import ChronoLensError, NoValidTuple, DegenerateSpan, NonLorentzianFit
from chronolens.reconstruction.chart import EarliestTimeTable, observation_time_chart, observers_from_metadata, \
    pushforward_form
from chronolens.reconstruction.cone import fit_null_cone, conformal_class_distance
from chronolens.reconstruction.conformal_factor import default_factor_parameters, factor_tracks
from chronolens.reconstruction.traces import ArrivalIndex, TraceParameters, build_null_traces
from chronolens.utils.environment import Environment

logger = logging.getLogger('reconstruction.region')

ReconstructionParameters = namedtuple('ReconstructionParameters', ['kappa_max', 'neighbours', 'observer_tuples',
                                                                   'match_tol', 'dir_tol', 'min_points',
                                                                   'residual_tol', 'span_tol', 'tie_tol',
                                                                   'gate_median', 'gate_max', 'gate_residual',
                                                                   'factor'])
ReconstructionParameters.__doc__ = """
:param kappa_max: largest condition number of a valid chart
:param neighbours: number of neighbouring sources in the conditioning estimate, None for 3 n
:param observer_tuples: candidate observer tuples, None for all n-subsets of the first n + 3 observers
:param match_tol: arrival time tolerance of trace matching
:param dir_tol: arrival direction tolerance of trace matching, radians
:param min_points: fewest sources on a null trace
:param residual_tol: largest RMS residual of a trace fit
:param span_tol: relative singular value below which trace tangents do not span
:param tie_tol: arrivals closer than this are ties
:param gate_median: largest accepted median distance to the true conformal class
:param gate_max: largest accepted distance at any target, None for no gate
:param gate_residual: largest accepted median cone fit residual
:param factor: :class:`~chronolens.reconstruction.conformal_factor.FactorParameters` of the conformal factor
    tracks, None to skip them
"""


def default_reconstruction_parameters(**overrides):
    parameters = ReconstructionParameters(kappa_max=1e4, neighbours=None, observer_tuples=None, match_tol=3e-8,
                                          dir_tol=2e-2, min_points=4, residual_tol=1e-4, span_tol=1e-8,
                                          tie_tol=1e-9, gate_median=1e-2, gate_max=None, gate_residual=1e-4,
                                          factor=None)
    parameters = parameters._replace(**overrides)
    if isinstance(parameters.factor, dict):
        parameters = parameters._replace(factor=default_factor_parameters(**parameters.factor))
    return parameters


TargetResult = namedtuple('TargetResult', ['target_id', 'status', 'reason', 'estimate', 'chart', 'trace_count',
                                           'distance'])
TargetResult.__doc__ = """
:param target_id: id of the target source
:param status: 'reconstructed' or 'skipped'
:param reason: why a target was skipped: 'tied', 'flagged', 'no_chart', 'invalid_chart', 'too_few_traces',
    'degenerate', 'non_lorentzian' or 'failed'; None when reconstructed
:param estimate: :class:`~chronolens.reconstruction.cone.ConformalEstimate` or None
:param chart: :class:`~chronolens.reconstruction.chart.ArrivalChart` or None
:param trace_count: number of null traces through the target
:param distance: conformal class distance to the pushforward of the true metric, None without truth
"""


def _skip(target_id, reason, chart=None, trace_count=0):
    logger.info("Skipping target %s: %s", target_id, reason)
    return TargetResult(target_id, 'skipped', reason, None, chart, trace_count, None)


def reconstruct_target(view, table, chart, parameters, index=None, truth_spec=None):
    """
    Null traces and cone fit at one charted target, compared with the true metric when `truth_spec` is given.

    :return: :class:`TargetResult`
    """
    target = chart.source_id
    if not chart.valid:
        return _skip(target, 'invalid_chart', chart)
    trace_parameters = TraceParameters(parameters.match_tol, parameters.dir_tol, parameters.min_points,
                                       parameters.residual_tol)
    traces = build_null_traces(view, chart, table, trace_parameters, index)
    dim = len(chart.observers)
    if len(traces) < dim * (dim + 1) // 2 - 1:
        return _skip(target, 'too_few_traces', chart, len(traces))
    try:
        estimate = fit_null_cone([trace.tangent for trace in traces], target, parameters.span_tol)
    except DegenerateSpan:
        return _skip(target, 'degenerate', chart, len(traces))
    except NonLorentzianFit as e:
        logger.warning("Target %s: %s", target, e)
        return _skip(target, 'non_lorentzian', chart, len(traces))
    distance = None
    if truth_spec is not None:
        members = observers_from_metadata(view.metadata)
        records = [table.earliest[target, o] for o in chart.observers]
        truth = pushforward_form(truth_spec, records, [members[o] for o in chart.observers])
        distance = conformal_class_distance(estimate, truth)
    logger.debug("Target %s: %d traces, max residual %.3g, distance %s", target, len(traces),
                 estimate.residuals.max(), distance)
    return TargetResult(target, 'reconstructed', None, estimate, chart, len(traces), distance)


def _reconstruct_item(item):
    view, table, chart, parameters, truth_spec, index = item
    try:
        return reconstruct_target(view, table, chart, parameters, index, truth_spec)
    except ChronoLensError as e:
        logger.warning("Reconstruction of target %s failed: %s", chart.source_id, e)
        return _skip(chart.source_id, 'failed', chart)


def reconstruct_region(view, parameters=None, targets=None, truth_spec=None, environment=None, config_hash=None):
    """
    Runs chart, null traces and cone fit for every target of a dataset view and summarizes the result.

    Targets with a tied or cut-flagged earliest arrival at some observer are skipped, as are targets without a
    valid chart or with too few traces to determine the cone.

    :param view: :class:`~chronolens.observations.pipeline.DatasetView`
    :param parameters: :class:`ReconstructionParameters`
    :param targets: target ids, by default the dataset's targets (sources without a parent)
    :param truth_spec: :class:`~chronolens.metrics.catalog.MetricSpec` of the true metric, enables the distance
        to the pushed forward true conformal class and the gates
    :param environment: :class:`~chronolens.utils.environment.Environment` for per-target parallelism
    :param config_hash: stamped on the report
    :return: report dict
    """
    parameters = parameters or default_reconstruction_parameters()
    environment = environment or Environment()
    dim = int(view.metadata['metric']['dim']) if view.metadata.get('metric') else None
    if targets is None:
        targets = view.metadata.get('target_ids')
    table = EarliestTimeTable(view.records, parameters.tie_tol)
    if targets is None:
        targets = table.source_ids
    results = {}
    usable = []
    for target in targets:
        if any(source_id == target for source_id, _ in table.tied):
            results[target] = _skip(target, 'tied')
        elif any(source_id == target for source_id, _ in table.flagged):
            results[target] = _skip(target, 'flagged')
        else:
            usable.append(target)

    charts = []
    if usable:
        try:
            charts = observation_time_chart(view, dim, usable, parameters.observer_tuples, parameters.neighbours,
                                            parameters.kappa_max, table=table)
        except NoValidTuple as e:
            logger.warning("No valid observation-time chart: %s", e)
    charted = set(chart.source_id for chart in charts)
    for target in usable:
        if target not in charted:
            results[target] = _skip(target, 'no_chart')
    for chart in charts:
        if not chart.valid:
            results[chart.source_id] = _skip(chart.source_id, 'invalid_chart', chart)
    valid = [chart for chart in charts if chart.valid]
    if environment.jobs == 1:
        index = ArrivalIndex(view.records)
        fitted = [_reconstruct_item((view, table, chart, parameters, truth_spec, index)) for chart in valid]
    else:
        fitted = environment.map(_reconstruct_item, [(view, table, chart, parameters, truth_spec, None)
                                                     for chart in valid])
    results.update((result.target_id, result) for result in fitted)
    ordered = [results[target] for target in sorted(results)]
    factor = None
    if parameters.factor is not None:
        if truth_spec is None:
            logger.warning("Conformal factor tracks need the metric of the dataset, which is withheld")
            factor = []
        else:
            factor = factor_tracks(truth_spec, parameters.factor)
    return make_report(ordered, parameters, view.metadata, config_hash, factor)


def _summary(values):
    if not values:
        return dict(count=0, median=None, max=None)
    return dict(count=len(values), median=float(np.median(values)), max=float(np.max(values)))


def make_report(results, parameters, metadata=None, config_hash=None, factor=None):
    """
    Aggregates per-target results into the reconstruction report with gate outcomes. Gates on the true class
    distance only apply when distances are available.

    :param factor: conformal factor track dicts of :func:`~chronolens.reconstruction.conformal_factor.factor_tracks`,
        None when no tracks were requested
    """
    metadata = metadata or {}
    reconstructed = [r for r in results if r.status == 'reconstructed']
    distances = [r.distance for r in reconstructed if r.distance is not None]
    residuals = [float(np.max(r.estimate.residuals)) for r in reconstructed]
    skipped = {}
    for result in results:
        if result.status == 'skipped':
            skipped[result.reason] = skipped.get(result.reason, 0) + 1
    distance_summary, residual_summary = _summary(distances), _summary(residuals)
    gates = dict(residual=residual_summary['median'] is None or
                 residual_summary['median'] <= parameters.gate_residual)
    if distances:
        gates['median_distance'] = distance_summary['median'] <= parameters.gate_median
        if parameters.gate_max is not None:
            gates['max_distance'] = distance_summary['max'] <= parameters.gate_max
    if factor and parameters.factor.gate_error is not None:
        errors = [track['error'] for track in factor if track['status'] == 'integrated']
        gates['factor_error'] = bool(errors) and len(errors) == len(factor) and \
            all(e is not None and e <= parameters.factor.gate_error for e in errors)
    passed = all(gates.values()) and (bool(reconstructed) or not results)
    report = dict(kind='reconstruction_report', config_hash=config_hash, metric_hash=metadata.get('metric_hash'),
                  targets=[_result_to_dict(r) for r in results],
                  summary=dict(targets=len(results), reconstructed=len(reconstructed), skipped=skipped,
                               distance=distance_summary, residual=residual_summary),
                  factor=factor, gates=gates, passed=bool(passed))
    logger.info("Reconstructed %d of %d targets, median distance %s, gates %s", len(reconstructed), len(results),
                distance_summary['median'], 'passed' if passed else 'failed')
    return report


def _result_to_dict(result):
    estimate = result.estimate
    return dict(target_id=result.target_id, status=result.status, reason=result.reason,
                observers=None if result.chart is None else list(result.chart.observers),
                condition=None if result.chart is None or not np.isfinite(result.chart.condition)
                else result.chart.condition,
                trace_count=result.trace_count, distance=result.distance,
                form=None if estimate is None else estimate.form.tolist(),
                normalization=None if estimate is None else estimate.normalization,
                singular_ratio=None if estimate is None else estimate.singular_ratio,
                residuals=None if estimate is None else estimate.residuals.tolist(),
                eigenvalues=None if estimate is None else estimate.eigenvalues.tolist())


def write_report(report, fh):
    fh.write(json.dumps(report, sort_keys=True, indent=2) + '\n')


def write_report_csv(report, fh):
    """
    One row per target: id, status, distance, largest residual, trace count and singular value ratio
    """
    writer = csv.writer(fh, lineterminator='\n')
    writer.writerow(['target_id', 'status', 'reason', 'distance', 'residual', 'trace_count', 'singular_ratio'])
    for target in report['targets']:
        residual = max(target['residuals']) if target['residuals'] else None
        writer.writerow([target['target_id'], target['status'], target['reason'] or '',
                         '' if target['distance'] is None else repr(target['distance']),
                         '' if residual is None else repr(residual), target['trace_count'],
                         '' if target['singular_ratio'] is None else repr(target['singular_ratio'])])


def write_factor_csv(report, fh):
    """
    One row per sample of every integrated conformal factor track: track index, affine parameter, position and f
    """
    writer = csv.writer(fh, lineterminator='\n')
    tracks = [track for track in report.get('factor') or [] if track['status'] == 'integrated']
    dim = len(tracks[0]['x'][0]) if tracks else 0
    writer.writerow(['track', 's'] + ['x{}'.format(i) for i in range(dim)] + ['f'])
    for track in tracks:
        for s, x, f in zip(track['s'], track['x'], track['f']):
            writer.writerow([track['index'], repr(s)] + [repr(v) for v in x] + [repr(f)])


def reconstruction_parameters_to_dict(parameters):
    """
    Plain JSON-ready form of :class:`ReconstructionParameters`, accepted back by
    :func:`default_reconstruction_parameters`
    """
    data = parameters._asdict()
    factor = parameters.factor
    if factor is not None:
        data['factor'] = dict(factor._asdict(), geodesics=[dict(g._asdict()) for g in factor.geodesics],
                              region=None if factor.region is None else dict(lower=list(factor.region[0]),
                                                                             upper=list(factor.region[1])))
    return data
