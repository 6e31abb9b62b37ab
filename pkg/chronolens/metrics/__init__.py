from .catalog import FAMILIES, MetricSpec, MetricFamily, make_metric_spec, metric_spec_from_dict, metric_family, \
    spec_hash
from .geometry import MetricEval, TangentVector, CausalCharacter, TIMELIKE, NULL, SPACELIKE, NULL_TOL, \
    check_in_domain, eval_metric, metric_partials, christoffel, ricci, riemannian_companion, causal_character, \
    lorentz_frame

__all__ = ['FAMILIES', 'MetricSpec', 'MetricFamily', 'make_metric_spec', 'metric_spec_from_dict', 'metric_family',
           'spec_hash', 'MetricEval', 'TangentVector', 'CausalCharacter', 'TIMELIKE', 'NULL', 'SPACELIKE', 'NULL_TOL',
           'check_in_domain', 'eval_metric', 'metric_partials', 'christoffel', 'ricci', 'riemannian_companion',
           'causal_character', 'lorentz_frame']
