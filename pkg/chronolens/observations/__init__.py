from .pipeline import ArrivalRecord, ForwardParameters, ObservationDataset, DatasetView, default_forward_parameters, \
    celestial_directions, refine_crossing, light_observation_set, earliest_observation_set, \
    earliest_point_on_observer, arrival_direction_estimate, observe_sources, assemble_dataset, dataset_view
from .sources import Source, SourceRegion, in_source_region, region_violations, sample_sources, spread_records, \
    companion_sources, assemble_traced_dataset
from .io import write_dataset, read_dataset, read_dataset_view

__all__ = ['ArrivalRecord', 'ForwardParameters', 'ObservationDataset', 'DatasetView', 'default_forward_parameters',
           'celestial_directions', 'refine_crossing', 'light_observation_set', 'earliest_observation_set',
           'earliest_point_on_observer', 'arrival_direction_estimate', 'observe_sources', 'assemble_dataset',
           'dataset_view', 'Source', 'SourceRegion', 'in_source_region', 'region_violations', 'sample_sources',
           'spread_records', 'companion_sources', 'assemble_traced_dataset', 'write_dataset', 'read_dataset',
           'read_dataset_view']
