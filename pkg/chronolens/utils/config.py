"""
Scenario files: loading, schema validation with JSON pointers, defaults, the semantic checks that need the
metric, and the configuration hash that ties the outputs of the stages together.
"""
import copy
import hashlib
import json
import logging
import os

import numpy as np
from jsonschema import Draft7Validator

from chronolens import sdict
from chronolens.causal import observer_congruence, check_separation, diamond_endpoints
from chronolens.exceptions import ConfigError, CFLViolation, DomainEscape, OutOfDomain
from chronolens.metrics import make_metric_spec, causal_character, TangentVector, NULL
from chronolens.observations import SourceRegion, default_forward_parameters, region_violations
from chronolens.reconstruction import FLATTENABLE_FAMILIES, default_reconstruction_parameters, \
    reconstruction_parameters_to_dict
from chronolens.waves import make_grid_spec, gaussian_bump, mollified_plane_wave, default_wave_parameters

logger = logging.getLogger('utils.config')

SCHEMA_DIRECTORY = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'schema')

# Keys that do not change any result and stay out of the configuration hash
UNHASHED_KEYS = ('output', 'jobs')

# Sections whose content determines the observation dataset
FORWARD_SECTIONS = ('metric', 'observers', 'sources', 'forward', 'withhold_truth', 'seed')

DEFAULTS = {
    'name': 'scenario',
    'seed': 1234,
    'output': './results',
    'jobs': 1,
    'withhold_truth': False,
    'observers': {
        'h_hat': 0.2,
        'count': 8,
        's_range': [-1., 3.],
        's_ref': 0.,
        'velocity_spread': 0.,
        'sequence': 'halton',
    },
    'sources': {
        'count': 0,
        'targets': [],
        'companions': None,
    },
    'forward': {},
    'reconstruction': {},
    'wave': {
        't0': 0.,
        'cfl': 0.5,
        'background': None,
        'a': 1.,
        'epsilons': [1e-2, 5e-3, 2e-3, 1e-3],
        'delta': None,
        'method': 'direct',
        'picard_tol': 1e-10,
        'probe': None,
        'scan': {
            'enabled': True,
            'q': None,
            'ring_cells': 3,
            'off_cone_cells': [8, 16],
            'angles': 64,
            'intersection_tol': None,
        },
        'gates': {
            'slope_min': 4.5,
            'interaction_error_max': 2e-2,
            'peak_offset_max': None,
            'ratio_min': None,
            'ratio_max': None,
        },
        'snapshots': False,
    },
    'plots': {
        'cone_samples': 64,
        'residual_bins': 20,
    },
}


def load_schema(name):
    with open(os.path.join(SCHEMA_DIRECTORY, '{}.schema.json'.format(name))) as fh:
        return json.load(fh)


def _pointer(prefix, path):
    return prefix + ''.join('/{}'.format(part) for part in path)


def schema_errors(instance, schema, prefix=''):
    """
    :return: list of (JSON pointer, message) pairs of all schema violations, ordered by pointer
    """
    validator = Draft7Validator(schema)
    errors = [(_pointer(prefix, error.absolute_path), error.message) for error in validator.iter_errors(instance)]
    return sorted(errors)


def _merge(defaults, values):
    merged = copy.deepcopy(defaults)
    for key, value in values.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def apply_defaults(raw):
    """
    Fills the defaults of the top level and of every section present in `raw`. Absent sections stay absent.
    """
    config = {key: copy.deepcopy(value) for key, value in DEFAULTS.items() if not isinstance(value, dict)}
    for key, value in raw.items():
        if isinstance(DEFAULTS.get(key), dict) and isinstance(value, dict):
            config[key] = _merge(DEFAULTS[key], value)
        else:
            config[key] = copy.deepcopy(value)
    if 'metric' in config and 'sources' not in config:
        config['sources'] = copy.deepcopy(DEFAULTS['sources'])
    if 'metric' in config:
        config.setdefault('forward', {})
        config.setdefault('reconstruction', {})
    config.setdefault('plots', copy.deepcopy(DEFAULTS['plots']))
    return config


def metric_spec(config):
    metric = config['metric']
    return make_metric_spec(metric['family'], metric['dim'], metric.get('params'), metric.get('domain'))


def congruence(config, spec):
    observers = config['observers']
    return observer_congruence(spec, observers['z0'], observers['eta0'], observers['h_hat'], observers['count'],
                               s_range=observers['s_range'], s_ref=observers['s_ref'],
                               velocity_spread=observers['velocity_spread'], sequence=observers['sequence'])


def source_region(config):
    region = config['sources'].get('region')
    if region is None:
        return None
    return SourceRegion(tuple(region['center']), tuple(region['half_widths']))


def forward_parameters(config):
    return default_forward_parameters(config['metric']['dim'], **config['forward'])


def reconstruction_parameters(config):
    overrides = dict(config['reconstruction'])
    if overrides.get('observer_tuples') is not None:
        overrides['observer_tuples'] = [tuple(t) for t in overrides['observer_tuples']]
    if hasattr(overrides.get('factor'), 'todict'):
        overrides['factor'] = overrides['factor'].todict()
    return default_reconstruction_parameters(**overrides)


def wave_grid(config):
    wave = config['wave']
    background = wave.get('background')
    if background is not None:
        background = make_metric_spec(background['family'], background['dim'], background.get('params'),
                                      background.get('domain'))
    return make_grid_spec(wave['dim'], wave['lower'], wave['upper'], wave['h'], wave['t_end'], t0=wave['t0'],
                          cfl=wave['cfl'], background=background)


def wave_profiles(config, grid):
    """
    :return: list of :class:`~chronolens.waves.grid.SourceProfile` of the wave sources
    """
    profiles = []
    for source in config['wave']['sources']:
        amplitude = source.get('amplitude', 1.)
        if source['kind'] == 'gaussian_bump':
            profiles.append(gaussian_bump(source['center'], source.get('width', 0.05), amplitude))
        else:
            profiles.append(mollified_plane_wave(grid, source['center'], source['covector'],
                                                 source.get('radius', 0.2), source.get('power', 2),
                                                 source.get('mollification'), amplitude))
    return profiles


def wave_parameters(config):
    wave = config['wave']
    probe = wave.get('probe')
    if probe is not None:
        probe = (tuple(probe['lower']), tuple(probe['upper']))
    return default_wave_parameters(a=float(wave['a']), epsilons=tuple(wave['epsilons']), delta=wave['delta'],
                                   method=wave['method'], picard_tol=wave['picard_tol'], probe=probe)


def _check_dimensions(config, errors):
    dim = config['metric']['dim']
    observers = config.get('observers')
    if observers is not None:
        for key in ('z0', 'eta0'):
            if len(observers[key]) != dim:
                errors.append(('/observers/{}'.format(key), "needs {} components".format(dim)))
    sources = config['sources']
    region = sources.get('region')
    if region is not None:
        for key in ('center', 'half_widths'):
            if len(region[key]) != dim:
                errors.append(('/sources/region/{}'.format(key), "needs {} components".format(dim)))
    for i, target in enumerate(sources['targets']):
        if len(target) != dim:
            errors.append(('/sources/targets/{}'.format(i), "needs {} components".format(dim)))
    if sources['count'] > 0 and region is None:
        errors.append(('/sources/region', "is required to sample {} sources".format(sources['count'])))


def _check_factor(config, spec, errors):
    factor = config['reconstruction'].get('factor')
    if factor is None:
        return
    dim = spec.dim
    if dim < 3:
        errors.append(('/reconstruction/factor', "needs a metric of dimension at least 3"))
        return
    if factor.get('boundary') == 'flattening' and spec.family not in FLATTENABLE_FAMILIES:
        errors.append(('/reconstruction/factor/boundary', "flattening needs one of the families {}".format(
            ', '.join(FLATTENABLE_FAMILIES))))
    region = factor.get('region')
    if region is not None:
        for key in ('lower', 'upper'):
            if len(region[key]) != dim:
                errors.append(('/reconstruction/factor/region/{}'.format(key), "needs {} components".format(dim)))
    for i, geodesic in enumerate(factor['geodesics']):
        pointer = '/reconstruction/factor/geodesics/{}'.format(i)
        lengths = [key for key in ('x0', 'xi0', 'df0') if geodesic.get(key) is not None and len(geodesic[key]) != dim]
        for key in lengths:
            errors.append(('{}/{}'.format(pointer, key), "needs {} components".format(dim)))
        if lengths:
            continue
        try:
            character = causal_character(spec, TangentVector(geodesic['x0'], geodesic['xi0']))
        except OutOfDomain as e:
            errors.append(('{}/x0'.format(pointer), str(e)))
            continue
        if character.kind != NULL:
            errors.append(('{}/xi0'.format(pointer), "must be null at x0, g(xi0, xi0) = {:.3g}".format(
                character.value)))


def _check_tomography(config, errors):
    try:
        spec = metric_spec(config)
    except ValueError as e:
        errors.append(('/metric', str(e)))
        return
    if 'observers' not in config:
        errors.append(('/observers', "is required with a metric"))
        return
    _check_dimensions(config, errors)
    if errors:
        return
    for section, build in (('/forward', forward_parameters), ('/reconstruction', reconstruction_parameters)):
        try:
            build(config)
        except (ValueError, TypeError) as e:
            errors.append((section, str(e)))
    _check_factor(config, spec, errors)
    try:
        grid = congruence(config, spec)
        separation = check_separation(spec, grid, config['observers']['schedule'])
    except DomainEscape as e:
        errors.append(('/observers', str(e)))
        return
    except ValueError as e:
        errors.append(('/observers/schedule', str(e)))
        return
    if not separation.passed:
        logger.warning("Observer schedule violates the separation condition for %s", separation.failures)
    region = source_region(config)
    if region is not None:
        p_minus, p_plus = diamond_endpoints(spec, grid, config['observers']['schedule'])
        violations = region_violations(spec, region, p_minus, p_plus)
        if violations:
            errors.append(('/sources/region', "{} points of the region lie outside I-(p+) minus J-(p-), e.g. {}"
                           .format(len(violations), np.round(violations[0], 6).tolist())))


def _check_wave(config, errors):
    wave = config['wave']
    if wave.get('background') is not None:
        errors += schema_errors(wave['background'], load_schema('metric'), '/wave/background')
        if errors:
            return
    for key in ('lower', 'upper'):
        if len(wave[key]) != wave['dim'] - 1:
            errors.append(('/wave/{}'.format(key), "needs {} components".format(wave['dim'] - 1)))
    if wave['t_end'] <= wave['t0']:
        errors.append(('/wave/t_end', "must lie after t0"))
    epsilons = wave['epsilons']
    if max(epsilons) < 10. * min(epsilons):
        errors.append(('/wave/epsilons', "must span at least a decade"))
    if errors:
        return
    try:
        grid = wave_grid(config)
    except CFLViolation as e:
        errors.append(('/wave/cfl', str(e)))
        return
    except ValueError as e:
        errors.append(('/wave', str(e)))
        return
    for i, source in enumerate(wave['sources']):
        if len(source['center']) != wave['dim']:
            errors.append(('/wave/sources/{}/center'.format(i), "needs {} components".format(wave['dim'])))
        elif source['kind'] == 'mollified_plane_wave':
            if len(source.get('covector', [])) != wave['dim']:
                errors.append(('/wave/sources/{}/covector'.format(i), "needs {} components".format(wave['dim'])))
                continue
            try:
                mollified_plane_wave(grid, source['center'], source['covector'], source.get('radius', 0.2),
                                     source.get('power', 2))
            except ValueError as e:
                errors.append(('/wave/sources/{}'.format(i), str(e)))
    scan_q = wave['scan']['q']
    if scan_q is not None and len(scan_q) != wave['dim']:
        errors.append(('/wave/scan/q', "needs {} components".format(wave['dim'])))
    probe = wave['probe']
    if probe is not None:
        for key in ('lower', 'upper'):
            if len(probe[key]) != wave['dim']:
                errors.append(('/wave/probe/{}'.format(key), "needs {} components".format(wave['dim'])))


def normalize_config(raw):
    """
    Validates a scenario document and returns its normalized form.

    :param raw: dict parsed from a scenario file
    :raises ConfigError: listing every violation with its JSON pointer
    :return: :class:`~chronolens.sdict`
    """
    if not isinstance(raw, dict):
        raise ConfigError([('', "scenario must be a JSON object")])
    errors = schema_errors(raw, load_schema('scenario'))
    if isinstance(raw.get('metric'), dict):
        errors += schema_errors(raw['metric'], load_schema('metric'), '/metric')
    if errors:
        raise ConfigError(errors)
    if 'metric' not in raw and 'wave' not in raw:
        raise ConfigError([('', "scenario needs a metric with observers, a wave section or both")])

    config = apply_defaults(raw)
    if 'metric' in config:
        _check_tomography(config, errors)
    if 'wave' in config:
        _check_wave(config, errors)
    if errors:
        raise ConfigError(errors)
    if 'metric' in config:
        config['forward'] = forward_parameters(config)._asdict()
        parameters = reconstruction_parameters_to_dict(reconstruction_parameters(config))
        config['reconstruction'] = json.loads(json.dumps(parameters))
        config['metric'] = metric_spec(config).to_dict()
    logger.debug("Normalized scenario '%s'", config['name'])
    return sdict(json.loads(json.dumps(config)))


def validate_config(path, overrides=None):
    """
    Reads, validates and normalizes a scenario file.

    :param overrides: top level keys replacing those of the file, e.g. the seed given on the command line

    :raises ConfigError: on unreadable files, invalid JSON or invalid scenarios
    :return: normalized configuration as :class:`~chronolens.sdict`
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError([('', "cannot read {}: {}".format(path, e.strerror))])
    except json.JSONDecodeError as e:
        raise ConfigError([('', "invalid JSON at line {} column {}: {}".format(e.lineno, e.colno, e.msg))])
    if isinstance(raw, dict) and overrides:
        raw.update(overrides)
    config = normalize_config(raw)
    logger.info("Scenario '%s' from %s is valid, hash %s", config.name, path, config_hash(config)[:12])
    return config


def canonical_json(value):
    return json.dumps(value, sort_keys=True, separators=(',', ':'))


def config_hash(config, sections=None):
    """
    SHA-256 of the canonical JSON of the normalized configuration without output directory and job count.

    :param sections: restrict the hash to these top level keys
    """
    data = config.todict() if hasattr(config, 'todict') else dict(config)
    data = {key: value for key, value in data.items() if key not in UNHASHED_KEYS}
    if sections is not None:
        data = {key: value for key, value in data.items() if key in sections}
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


def forward_hash(config):
    """
    Hash of the sections that determine the observation dataset, stamped on the dataset and checked by
    reconstruction
    """
    return config_hash(config, FORWARD_SECTIONS)


def write_normalized(config, fh):
    fh.write(json.dumps(config.todict(), sort_keys=True, indent=2) + '\n')
