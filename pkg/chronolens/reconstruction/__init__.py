from .chart import ArrivalChart, EarliestTimeTable, candidate_tuples, observation_time_chart, \
    observers_from_metadata, source_tangent, first_variation_rate, chart_jacobian, pushforward_form
from .cone import ConformalEstimate, NORMALIZATION, normalize_form, fit_null_cone, conformal_class_distance
from .traces import NullTrace, TraceParameters, default_trace_parameters, ArrivalIndex, fit_trace_curve, \
    build_null_traces
from .conformal_factor import ConformalFactorTrack, FactorGeodesic, FactorParameters, FLATTENABLE_FAMILIES, \
    factor_hessian, conformal_factor_ode, make_geodesic, default_factor_parameters, flattening_factor, factor_tracks
from .region import ReconstructionParameters, TargetResult, default_reconstruction_parameters, reconstruct_target, \
    reconstruct_region, make_report, write_report, write_report_csv, write_factor_csv, \
    reconstruction_parameters_to_dict

__all__ = ['ArrivalChart', 'EarliestTimeTable', 'candidate_tuples', 'observation_time_chart',
           'observers_from_metadata', 'source_tangent', 'first_variation_rate', 'chart_jacobian', 'pushforward_form',
           'ConformalEstimate', 'NORMALIZATION', 'normalize_form', 'fit_null_cone', 'conformal_class_distance',
           'NullTrace', 'TraceParameters', 'default_trace_parameters', 'ArrivalIndex', 'fit_trace_curve',
           'build_null_traces', 'ConformalFactorTrack', 'FactorGeodesic', 'FactorParameters', 'FLATTENABLE_FAMILIES',
           'factor_hessian', 'conformal_factor_ode', 'make_geodesic', 'default_factor_parameters',
           'flattening_factor', 'factor_tracks', 'ReconstructionParameters', 'TargetResult',
           'default_reconstruction_parameters', 'reconstruct_target', 'reconstruct_region', 'make_report',
           'write_report', 'write_report_csv', 'write_factor_csv', 'reconstruction_parameters_to_dict']
