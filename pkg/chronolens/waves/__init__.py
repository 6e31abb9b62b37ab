from .grid import GridSpec, GridField, SourceProfile, GAUSSIAN_CUTOFF, make_grid_spec, time_axis, spatial_axes, \
    field_shape, lattice_events, make_field, zero_field, background_coefficients, gaussian_bump, \
    mollified_plane_wave, evaluate_profile, sample_source, support_box, write_snapshot, read_snapshot, \
    write_slice_csv
from .solver import check_domain, causal_solve, nonlinear_solve, influence_mask, discrete_energy, l2_norm, \
    relative_error, dalembert_oracle, oracle_field
from .scan import FrontIntersection, ScanTable, front_residuals, front_intersection, cone_speed, singularity_scan, \
    scan_table_to_dict, write_scan_csv
from .interaction import WaveParameters, ExpansionTerms, ExpansionRemainders, ExpansionReport, \
    default_wave_parameters, expansion_terms, expansion_remainders, check_causal_independence, \
    fourth_interaction_formula, fourth_interaction_finite_difference, default_delta, make_expansion_report, \
    expansion_report_to_dict, write_expansion_report

__all__ = ['GridSpec', 'GridField', 'SourceProfile', 'GAUSSIAN_CUTOFF', 'make_grid_spec', 'time_axis',
           'spatial_axes', 'field_shape', 'lattice_events', 'make_field', 'zero_field', 'background_coefficients',
           'gaussian_bump', 'mollified_plane_wave', 'evaluate_profile', 'sample_source', 'support_box',
           'write_snapshot', 'read_snapshot', 'write_slice_csv', 'check_domain', 'causal_solve', 'nonlinear_solve',
           'influence_mask', 'discrete_energy', 'l2_norm', 'relative_error', 'dalembert_oracle', 'oracle_field',
           'FrontIntersection', 'ScanTable', 'front_residuals', 'front_intersection', 'cone_speed',
           'singularity_scan', 'scan_table_to_dict',
           'write_scan_csv', 'WaveParameters', 'ExpansionTerms', 'ExpansionRemainders', 'ExpansionReport',
           'default_wave_parameters', 'expansion_terms', 'expansion_remainders', 'check_causal_independence',
           'fourth_interaction_formula', 'fourth_interaction_finite_difference', 'default_delta',
           'make_expansion_report', 'expansion_report_to_dict', 'write_expansion_report']
