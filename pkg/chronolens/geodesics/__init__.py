from .engine import GeodesicSegment, BundleResult, REACHED_PARAM, LEFT_DOMAIN, LEFT_DIAMOND, integrate_geodesic, \
    exp_map, integrate_bundle, project_null, write_segment, read_segment_samples
from .jacobi import ConjugateReport, jacobi_first_conjugate
from .cut import CutReport, null_cut_parameter, diamond_escape

__all__ = ['GeodesicSegment', 'BundleResult', 'REACHED_PARAM', 'LEFT_DOMAIN', 'LEFT_DIAMOND', 'integrate_geodesic',
           'exp_map', 'integrate_bundle', 'project_null', 'write_segment', 'read_segment_samples', 'ConjugateReport',
           'jacobi_first_conjugate', 'CutReport', 'null_cut_parameter', 'diamond_escape']
