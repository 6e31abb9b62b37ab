import json
import logging

import numpy as np

from chronolens.observations.pipeline import ArrivalRecord, ObservationDataset, DatasetView

logger = logging.getLogger('observations.io')


def _vector(values):
    if values is None:
        return None
    return [None if not np.isfinite(v) else float(v) for v in values]


def _tuple(values):
    if values is None:
        return None
    return tuple(np.nan if v is None else float(v) for v in values)


def record_to_dict(record, with_launch=True):
    d = record._asdict()
    d.update(x=_vector(record.x), xi=_vector(record.xi), launch=_vector(record.launch) if with_launch else None)
    return d


def record_from_dict(d):
    return ArrivalRecord(int(d['source_id']), int(d['observer_id']), float(d['s']), _tuple(d['x']),
                         _tuple(d['xi']), float(d['affine_length']), bool(d['earliest_flag']),
                         bool(d['on_worldline']), _tuple(d.get('launch')))


def write_dataset(dataset, fh):
    """
    Writes a dataset as JSON lines: one metadata line (with the source truth table unless withheld) followed by one
    line per arrival record. Keys are sorted so that equal datasets give identical files.

    :param dataset: :class:`~chronolens.observations.pipeline.ObservationDataset`
    :param fh: open text file handle
    """
    withheld = dataset.metadata.get('truth_withheld', False)
    header = dict(dataset.metadata)
    header.update(truth=None if withheld or dataset.truth is None else
                  {str(k): v for k, v in sorted(dataset.truth.items())},
                  errors=[list(e) for e in dataset.errors], record_count=len(dataset.records))
    fh.write(json.dumps(header, sort_keys=True) + '\n')
    for record in dataset.records:
        fh.write(json.dumps(record_to_dict(record, with_launch=not withheld), sort_keys=True) + '\n')


def read_dataset(fh):
    """
    Reads a dataset written by :func:`write_dataset`.

    :return: :class:`~chronolens.observations.pipeline.ObservationDataset`
    """
    lines = [line for line in fh if line.strip()]
    header = json.loads(lines[0])
    if header.get('kind') != 'observation_dataset':
        raise ValueError("Not an observation dataset: kind {}".format(header.get('kind')))
    truth = header.pop('truth', None)
    errors = [tuple(e) for e in header.pop('errors', [])]
    header.pop('record_count', None)
    records = [record_from_dict(json.loads(line)) for line in lines[1:]]
    if truth is not None:
        truth = {int(k): v for k, v in truth.items()}
    logger.debug("Read dataset with %d records", len(records))
    return ObservationDataset(header, records, truth, errors)


def read_dataset_view(fh):
    """
    Reads only what reconstruction may see: metadata and records, without the truth table and launch directions.

    :return: :class:`~chronolens.observations.pipeline.DatasetView`
    """
    lines = [line for line in fh if line.strip()]
    header = json.loads(lines[0])
    if header.get('kind') != 'observation_dataset':
        raise ValueError("Not an observation dataset: kind {}".format(header.get('kind')))
    for key in ('truth', 'errors', 'record_count'):
        header.pop(key, None)
    records = []
    for line in lines[1:]:
        d = json.loads(line)
        d['launch'] = None
        records.append(record_from_dict(d))
    return DatasetView(header, records)
