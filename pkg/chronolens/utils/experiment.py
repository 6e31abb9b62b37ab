import hashlib
import json
import logging
import os
import sys

import numpy as np
import scipy
import sklearn

from chronolens import timed
from chronolens.causal import check_separation, diamond_endpoints
from chronolens.exceptions import ChronoLensError, ConfigError, HashMismatch
from chronolens.logging_tools import create_shared_logger_data, configure_loggers
from chronolens.metrics import metric_spec_from_dict, spec_hash
from chronolens.observations import Source, sample_sources, assemble_dataset, assemble_traced_dataset, \
    write_dataset, read_dataset, read_dataset_view
from chronolens.paths import Paths, make_safe_name
from chronolens.reconstruction import reconstruct_region, write_report, write_report_csv, write_factor_csv
from chronolens.utils import config as scenario
from chronolens.utils import plot_data
from chronolens.utils.environment import Environment
from chronolens.version import FULL_VERSION
from chronolens.waves import sample_source, make_field, check_domain, expansion_terms, expansion_remainders, \
    fourth_interaction_formula, fourth_interaction_finite_difference, default_delta, make_expansion_report, \
    expansion_report_to_dict, front_residuals, front_intersection, cone_speed, singularity_scan, write_scan_csv, \
    write_snapshot, read_snapshot, write_slice_csv

LOGGER_NAMES = ['bin', 'metrics', 'geodesics', 'causal', 'observations', 'reconstruction', 'waves', 'utils']

WAVE_FIELDS = ('w1', 'w2', 'w3', 'w4', 'm4')

COMMANDS = ('validate', 'forward', 'reconstruct', 'wave', 'plots', 'all')

EXIT_PASSED = 0
EXIT_GATES_FAILED = 2
EXIT_CONFIG_ERROR = 3
EXIT_FAILURE = 4


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for block in iter(lambda: fh.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def package_versions():
    return dict(chronolens=FULL_VERSION, numpy=np.__version__, scipy=scipy.__version__,
                scikit_learn=sklearn.__version__)


def git_commit(path):
    """
    Commit of the git working tree containing `path`, None outside a repository or without gitpython
    """
    try:
        import git
        return git.Repo(path, search_parent_directories=True).head.commit.hexsha
    except Exception:
        return None


class Experiment(object):
    def __init__(self, config, root_dir_path=None, jobs=1, force=False):
        """
        Runs the stages of one scenario and keeps their outputs in one run directory.

        :param config: normalized scenario, see :func:`~chronolens.utils.config.validate_config`
        :param root_dir_path: directory in which the run directory is created, the scenario's output by default.
            Created if missing.
        :param jobs: worker processes of the stages
        :param force: reconstruct datasets whose configuration hash differs from this scenario
        """
        self.config = config
        self.root_dir_path = os.path.abspath(root_dir_path or config.output)
        self.jobs = jobs
        self.force = force
        self.logger = logging.getLogger('bin.chronolens')
        self.hash = scenario.config_hash(config)
        self.forward_hash = scenario.forward_hash(config) if 'metric' in config else None
        self.paths = None
        self.env = None

    def prepare_experiment(self):
        """
        Creates the run directory, configures the loggers of all subsystems to write into its logs directory and
        echoes the normalized configuration.

        :return: :class:`~chronolens.paths.Paths` of the run
        """
        os.makedirs(self.root_dir_path, exist_ok=True)
        name = make_safe_name(self.config.name)
        self.paths = Paths(name, root_dir_path=self.root_dir_path)
        create_shared_logger_data(logger_names=LOGGER_NAMES,
                                  log_levels=['INFO'] * len(LOGGER_NAMES),
                                  log_to_consoles=[True] * len(LOGGER_NAMES),
                                  sim_name=name,
                                  log_directory=self.paths.logs_path)
        configure_loggers()
        self.env = Environment(self.jobs)
        with open(os.path.join(self.paths.root_dir_path, 'config.normalized.json'), 'w') as fh:
            scenario.write_normalized(self.config, fh)
        self.logger.info("Scenario '%s' (hash %s) writes to %s", self.config.name, self.hash[:12],
                         self.paths.root_dir_path)
        return self.paths

    def _write_manifest(self, stage, outputs, **extra):
        root = self.paths.root_dir_path
        manifest = dict(kind='manifest', stage=stage, config_hash=self.hash, versions=package_versions(),
                        commit=git_commit(root),
                        outputs={os.path.relpath(path, root): file_sha256(path) for path in sorted(outputs)})
        manifest.update(extra)
        path = os.path.join(root, 'manifest.{}.json'.format(stage))
        with open(path, 'w') as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2) + '\n')
        return path

    @property
    def dataset_path(self):
        return self.paths.get_fpath('datasets', 'dataset', 'jsonl')

    def _targets(self, spec, p_minus, p_plus):
        sources = self.config.sources
        targets = [Source(i, tuple(float(v) for v in x), None, None) for i, x in enumerate(sources.targets)]
        if sources['count'] > 0:
            rng = np.random.default_rng(self.config.seed)
            targets += sample_sources(spec, scenario.source_region(self.config), sources['count'], p_minus, p_plus,
                                      rng, first_id=len(targets))
        return targets

    def run_forward(self):
        """
        Builds metric, observers and sources of the scenario, sweeps every source and writes the dataset.

        :return: (dataset path, list of (source id, message) errors of failed sweeps)
        """
        config = self.config
        spec = scenario.metric_spec(config)
        grid = scenario.congruence(config, spec)
        schedule = config.observers.schedule
        separation = check_separation(spec, grid, schedule)
        if not separation.passed:
            self.logger.warning("Separation condition fails for %s", separation.failures)
        p_minus, p_plus = diamond_endpoints(spec, grid, schedule)
        parameters = scenario.forward_parameters(config)
        targets = self._targets(spec, p_minus, p_plus)
        options = dict(p_minus=p_minus, p_plus=p_plus, withhold_truth=config.withhold_truth,
                       config_hash=self.forward_hash)
        companions = config.sources.companions
        with timed(self.logger, 'Forward sweep of {} targets'.format(len(targets))):
            if companions is not None and targets:
                dataset = assemble_traced_dataset(spec, grid, targets, parameters, tuple(companions.offsets),
                                                  companions['count'], self.env, **options)
            else:
                dataset = assemble_dataset(spec, grid, targets, parameters, self.env, **options)
        with open(self.dataset_path, 'w') as fh:
            write_dataset(dataset, fh)
        self._write_manifest('forward', [self.dataset_path], dataset_hash=self.forward_hash,
                             records=len(dataset.records), sources=dataset.metadata['source_count'],
                             errors=len(dataset.errors))
        self.logger.info("Dataset of %d sources with %d records written to %s", dataset.metadata['source_count'],
                         len(dataset.records), self.dataset_path)
        return self.dataset_path, dataset.errors

    def check_dataset(self, metadata):
        """
        :raises HashMismatch: if the dataset was made by another scenario or on another metric, unless forced
        """
        problems = []
        if metadata.get('config_hash') != self.forward_hash:
            problems.append("configuration hash {} differs from {}".format(metadata.get('config_hash'),
                                                                            self.forward_hash))
        expected = spec_hash(scenario.metric_spec(self.config))
        if metadata.get('metric_hash') != expected:
            problems.append("metric hash {} differs from {}".format(metadata.get('metric_hash'), expected))
        if not problems:
            return
        message = "Dataset does not belong to this scenario: " + "; ".join(problems)
        if not self.force:
            raise HashMismatch(message)
        self.logger.warning("%s (continuing because of --force)", message)

    def run_reconstruct(self, dataset_path=None):
        """
        Reconstructs every target of a dataset. Only the view of the dataset is read, never the source
        positions; the true metric comes from the dataset header unless the truth is withheld.

        :return: (report path, True if all gates passed)
        """
        path = dataset_path or self.dataset_path
        if not os.path.exists(path):
            raise ChronoLensError("Dataset {} does not exist, run the forward stage first".format(path))
        with open(path) as fh:
            view = read_dataset_view(fh)
        self.check_dataset(view.metadata)
        truth_spec = None
        if not view.metadata.get('truth_withheld'):
            truth_spec = metric_spec_from_dict(view.metadata['metric'])
        parameters = scenario.reconstruction_parameters(self.config)
        with timed(self.logger, 'Reconstruction'):
            report = reconstruct_region(view, parameters, truth_spec=truth_spec, environment=self.env,
                                        config_hash=self.hash)
        report_path = self.paths.get_fpath('reports', 'reconstruction', 'json')
        csv_path = self.paths.get_fpath('reports', 'reconstruction', 'csv')
        with open(report_path, 'w') as fh:
            write_report(report, fh)
        with open(csv_path, 'w') as fh:
            write_report_csv(report, fh)
        outputs = [report_path, csv_path]
        if report['factor']:
            factor_path = self.paths.get_fpath('reports', 'conformal_factor', 'csv')
            with open(factor_path, 'w') as fh:
                write_factor_csv(report, fh)
            outputs.append(factor_path)
        self._write_manifest('reconstruct', outputs, dataset_sha256=file_sha256(path),
                             passed=report['passed'])
        summary = report['summary']
        if summary['skipped']:
            self.logger.warning("Skipped targets by reason: %s", summary['skipped'])
        return report_path, report['passed']

    def _wave_gates(self, terms, report):
        gates = self.config.wave.gates
        outcome = {}
        if gates.slope_min is not None and np.any(terms.w2.values):
            outcome['slope'] = report.slope is not None and report.slope >= gates.slope_min
        if gates.interaction_error_max is not None and report.interaction_error is not None:
            outcome['interaction_error'] = report.interaction_error <= gates.interaction_error_max
        scan = report.scan
        if scan is not None:
            if gates.peak_offset_max is not None:
                outcome['peak_offset'] = scan.peak_offset is not None and abs(scan.peak_offset) <= \
                    gates.peak_offset_max
            if gates.ratio_min is not None:
                outcome['ratio_min'] = scan.ratio is not None and scan.ratio >= gates.ratio_min
            if gates.ratio_max is not None:
                outcome['ratio_max'] = scan.ratio is not None and scan.ratio <= gates.ratio_max
        return outcome

    def _scan(self, grid, profiles, interaction):
        settings = self.config.wave.scan
        tol = settings.intersection_tol or 0.5 * grid.h
        centers = np.mean([profile.center for profile in profiles], axis=0)
        speed = cone_speed(grid, centers)
        front = front_intersection(profiles, tol, speed=speed)
        if settings.q is None:
            q, intersecting = front.q, front.intersecting
        else:
            q = np.asarray(settings.q, dtype=float)
            residual = float(np.max(np.abs(front_residuals(profiles, q, speed))))
            intersecting = residual <= tol
            self.logger.info("Scan point %s is %.3g from the farthest front", q.tolist(), residual)
        return singularity_scan(interaction, q, settings.ring_cells, tuple(settings.off_cone_cells), settings.angles,
                                intersecting)

    def run_wave(self):
        """
        The wave experiment: expansion terms and remainders of the summed source, and with four sources the
        fourth order interaction by formula and by mixed difference plus the singularity scan.

        :return: (report path, True if all gates passed)
        """
        config = self.config
        grid = scenario.wave_grid(config)
        profiles = scenario.wave_profiles(config, grid)
        parameters = scenario.wave_parameters(config)
        if parameters.probe is not None:
            check_domain(grid, parameters.probe)
        sources = [sample_source(grid, profile) for profile in profiles]
        f = make_field(grid, sum(source.values for source in sources))
        outputs = []
        with timed(self.logger, 'Expansion'):
            terms = expansion_terms(grid, parameters.a, f)
            remainders = expansion_remainders(grid, parameters.a, f, parameters.epsilons, terms, parameters.method,
                                              parameters.picard_tol)
        fields = dict(terms._asdict())
        if len(sources) == 4:
            with timed(self.logger, 'Fourth order interaction'):
                formula = fourth_interaction_formula(grid, parameters.a, sources)
                delta = default_delta(sources) if parameters.delta is None else parameters.delta
                difference = fourth_interaction_finite_difference(grid, parameters.a, sources, delta,
                                                                  parameters.method, parameters.picard_tol, self.env)
            scan = self._scan(grid, profiles, formula) if config.wave.scan.enabled else None
            report = make_expansion_report(remainders, formula, difference, delta, scan)
            fields['m4'] = formula
        else:
            self.logger.info("%d wave sources, the fourth order interaction needs four", len(sources))
            report = make_expansion_report(remainders)

        if report.scan is not None:
            path = self.paths.get_fpath('waves', 'scan', 'csv')
            with open(path, 'w') as fh:
                write_scan_csv(report.scan, fh)
            outputs.append(path)
        if config.wave.snapshots:
            for name in WAVE_FIELDS:
                if name in fields:
                    path = self.paths.get_fpath('waves', name, 'bin')
                    with open(path, 'wb') as fh:
                        write_snapshot(fields[name], fh, self.hash)
                    outputs.append(path)

        gates = self._wave_gates(terms, report)
        result = expansion_report_to_dict(report, self.hash)
        result.update(gates=gates, passed=all(gates.values()), source_count=len(sources), a=parameters.a)
        report_path = self.paths.get_fpath('reports', 'wave', 'json')
        with open(report_path, 'w') as fh:
            fh.write(json.dumps(result, sort_keys=True, indent=2) + '\n')
        self._write_manifest('wave', outputs + [report_path], passed=result['passed'])
        self.logger.info("Wave experiment: slope %s, interaction error %s, gates %s", report.slope,
                         report.interaction_error, gates)
        return report_path, result['passed']

    def emit_plots(self, dataset_path=None, report_path=None):
        """
        Writes the CSV plot data of whatever the earlier stages left in the run directory: arrival time surfaces
        of the dataset, cone sections and residual histogram of the reconstruction report, time slices of the
        wave snapshots.

        :raises ChronoLensError: if an explicitly given input is missing
        :return: list of written paths
        """
        settings = self.config.plots
        dataset_path = self._plot_input(dataset_path, self.paths.get_fpath('datasets', 'dataset', 'jsonl'))
        report_path = self._plot_input(report_path, self.paths.get_fpath('reports', 'reconstruction', 'json'))
        written = []
        if dataset_path is not None:
            with open(dataset_path) as fh:
                dataset = read_dataset(fh)
            written.append(self._write_plot('arrival_times', plot_data.ARRIVAL_HEADER,
                                            plot_data.arrival_surface_rows(dataset.records)))
        if report_path is not None:
            with open(report_path) as fh:
                report = json.load(fh)
            dim = len(report['targets'][0]['form']) if report['targets'] and report['targets'][0]['form'] else \
                self.config.metric['dim']
            written.append(self._write_plot('cone_sections', plot_data.section_header(dim),
                                            plot_data.cone_section_rows(report, settings.cone_samples)))
            written.append(self._write_plot('residual_histogram', plot_data.HISTOGRAM_HEADER,
                                            plot_data.residual_histogram(report, settings.residual_bins)))
        for name in WAVE_FIELDS:
            path = self.paths.get_fpath('waves', name, 'bin')
            if not os.path.exists(path):
                continue
            with open(path, 'rb') as fh:
                field = plot_data.field_from_snapshot(*read_snapshot(fh))
            for step in plot_data.slice_steps(field.grid):
                slice_path = self.paths.get_fpath('plots', '{}_step{:05d}'.format(name, step), 'csv')
                with open(slice_path, 'w') as fh:
                    write_slice_csv(field, fh, step)
                written.append(slice_path)
        if written:
            self._write_manifest('plots', written)
        self.logger.info("Wrote %d plot data files", len(written))
        return written

    def _plot_input(self, given, default):
        if given is not None:
            if not os.path.exists(given):
                raise ChronoLensError("Plot input {} does not exist".format(given))
            return given
        return default if os.path.exists(default) else None

    def _write_plot(self, name, header, rows):
        path = self.paths.get_fpath('plots', name, 'csv')
        with open(path, 'w') as fh:
            plot_data.write_rows(header, rows, fh)
        return path

    def end_experiment(self):
        """
        Ends the experiment, disables the environment's logging and closes the log files

        :return: :class:`~chronolens.paths.Paths` of the run
        """
        if self.env is not None:
            self.env.disable_logging()
        for name in LOGGER_NAMES:
            named = logging.getLogger(name)
            for handler in list(named.handlers):
                named.removeHandler(handler)
                handler.close()
        return self.paths


def _require(config, section, command):
    if section not in config:
        raise ConfigError([('/{}'.format(section), "is required by the '{}' command".format(command))])


def run_command(command, config_path, out=None, seed=None, force=False, jobs=1, dataset=None, report=None):
    """
    Runs one command of the command line front end on a scenario file.

    :param command: one of :data:`COMMANDS`
    :param out: directory of the run directories, the scenario's output by default
    :param seed: replaces the seed of the scenario
    :param dataset: dataset for reconstruct and plots, the run's own dataset by default
    :param report: reconstruction report for plots, the run's own report by default
    :return: exit code, :data:`EXIT_PASSED` when every gate passed
    """
    logger = logging.getLogger('bin.chronolens')
    assert command in COMMANDS, "Unknown command {}".format(command)
    try:
        config = scenario.validate_config(config_path, None if seed is None else dict(seed=int(seed)))
        if command in ('forward', 'reconstruct'):
            _require(config, 'metric', command)
        elif command == 'wave':
            _require(config, 'wave', command)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG_ERROR
    if command == 'validate':
        scenario.write_normalized(config, sys.stdout)
        return EXIT_PASSED

    experiment = Experiment(config, out, jobs, force)
    passed = True
    try:
        experiment.prepare_experiment()
        tomography = 'metric' in config
        if command in ('forward', 'all') and tomography:
            _, errors = experiment.run_forward()
            if errors:
                logger.error("Forward sweeps failed for %d sources: %s", len(errors), errors)
                return EXIT_FAILURE
        if command in ('reconstruct', 'all') and tomography:
            _, ok = experiment.run_reconstruct(dataset)
            passed = passed and ok
        if command in ('wave', 'all') and 'wave' in config:
            _, ok = experiment.run_wave()
            passed = passed and ok
        if command in ('plots', 'all'):
            experiment.emit_plots(dataset, report)
    except ConfigError as e:
        logger.error("%s", e)
        return EXIT_CONFIG_ERROR
    except Exception:
        logger.exception("Command '%s' failed", command)
        return EXIT_FAILURE
    finally:
        experiment.end_experiment()
    if not passed:
        logger.warning("Acceptance gates failed")
        return EXIT_GATES_FAILED
    return EXIT_PASSED
