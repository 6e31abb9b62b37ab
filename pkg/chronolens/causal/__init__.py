from .structure import TAU_POS_TOL, TAU_SAMPLED_TOL, CHRONOLOGICAL, HORISMOS, NONE, Separation, CausalRelation, \
    NullConnector, time_separation, chronological, chronology_margin, causally_precedes, causal_relation, \
    null_connector
from .observers import ObserverSpec, ObserverGrid, EarliestTime, SeparationCheck, make_observer, worldline, \
    earliest_obs_time, observer_congruence, in_tube, check_separation, diamond_endpoints
from .fermi import fermi_map, fermi_chart

__all__ = ['TAU_POS_TOL', 'TAU_SAMPLED_TOL', 'CHRONOLOGICAL', 'HORISMOS', 'NONE', 'Separation', 'CausalRelation',
           'NullConnector', 'time_separation', 'chronological', 'chronology_margin', 'causally_precedes',
           'causal_relation', 'null_connector', 'ObserverSpec', 'ObserverGrid', 'EarliestTime', 'SeparationCheck',
           'make_observer', 'worldline', 'earliest_obs_time', 'observer_congruence', 'in_tube', 'check_separation',
           'diamond_endpoints', 'fermi_map', 'fermi_chart']
