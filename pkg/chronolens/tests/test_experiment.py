import csv
import io
import json
import os
import runpy
import shutil
import subprocess
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from unittest import mock

import numpy as np

from chronolens.observations import read_dataset
from chronolens.utils.experiment import run_command, EXIT_PASSED, EXIT_CONFIG_ERROR, EXIT_FAILURE
from chronolens.utils.config import validate_config, config_hash, forward_hash

FLAT_SCENARIO = dict(name='flat run',
                     seed=11,
                     metric=dict(family='minkowski', dim=3),
                     observers=dict(z0=[0., 0., 0.], eta0=[1., 0., 0.], h_hat=0.2, count=8, s_range=[-1., 3.],
                                    schedule=[-0.9, -0.5, 2.0, 2.8]),
                     sources=dict(targets=[[0., 0.5, 0.1], [0.1, -0.3, 0.45]],
                                  companions=dict(offsets=[-0.04, -0.02, 0.02, 0.04], count=6)),
                     forward=dict(dir_count=128))

LINEAR_WAVE_SCENARIO = dict(name='linear wave',
                            wave=dict(dim=2, lower=[-3.5], upper=[3.5], h=0.02, t_end=1.5, a=0.,
                                      sources=[dict(kind='gaussian_bump', center=[0.35, x], width=0.04,
                                                    amplitude=100.) for x in (-2.4, -0.8, 0.8, 2.4)],
                                      scan=dict(enabled=False), snapshots=True))

REPOSITORY = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..'))
SCRIPT = os.path.join(REPOSITORY, 'bin', 'chronolens-run.py')


def crossing_wave_scenario(moved=None):
    """
    Four Gaussian sources on the diagonals whose cones meet at (0.17 + 0.36 √2, 0, 0). With `moved` the third
    source sits farther out, its cone misses that point and the scan there expects no focus.
    """
    corners = [[0.36, 0.36], [-0.36, 0.36], [-0.36, -0.36], [0.36, -0.36]]
    scan = dict(enabled=True, q=None)
    gates = dict(slope_min=4.5, interaction_error_max=0.02, peak_offset_max=3, ratio_min=5.)
    if moved is not None:
        corners[2] = moved
        scan['q'] = [0.17 + 0.36 * np.sqrt(2.), 0., 0.]
        gates = dict(slope_min=4.5, interaction_error_max=0.02, ratio_min=0.5, ratio_max=2.)
    return dict(name='crossing waves',
                wave=dict(dim=3, lower=[-0.9, -0.9], upper=[0.9, 0.9], h=0.02, t_end=1.1, a=1.,
                          sources=[dict(kind='gaussian_bump', center=[0.17] + corner, width=0.02, amplitude=60000.)
                                   for corner in corners],
                          scan=scan, gates=gates, snapshots=False))


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class ExperimentTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.config_path = cls.write_scenario('flat.json', FLAT_SCENARIO)
        cls.out = os.path.join(cls.directory, 'out')
        cls.run_dir = os.path.join(cls.out, 'flat-run')
        cls.forward_code = run_command('forward', cls.config_path, out=cls.out)
        cls.dataset_path = os.path.join(cls.run_dir, 'datasets', 'dataset.jsonl')

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)

    @classmethod
    def write_scenario(cls, name, scenario):
        path = os.path.join(cls.directory, name)
        with open(path, 'w') as fh:
            json.dump(scenario, fh)
        return path

    def test_forward_writes_dataset_and_manifest(self):
        self.assertEqual(self.forward_code, EXIT_PASSED)
        with open(self.dataset_path) as fh:
            dataset = read_dataset(fh)
        config = validate_config(self.config_path)
        self.assertEqual(dataset.metadata['config_hash'], forward_hash(config))
        self.assertEqual(dataset.metadata['target_ids'], [0, 1])
        self.assertGreater(dataset.metadata['source_count'], 2)
        with open(os.path.join(self.run_dir, 'manifest.forward.json')) as fh:
            manifest = json.load(fh)
        self.assertEqual(manifest['config_hash'], config_hash(config))
        self.assertIn(os.path.join('datasets', 'dataset.jsonl'), manifest['outputs'])
        self.assertIn('numpy', manifest['versions'])
        self.assertTrue(os.path.exists(os.path.join(self.run_dir, 'logs', 'flat-run_run.log')))
        with open(os.path.join(self.run_dir, 'config.normalized.json')) as fh:
            self.assertEqual(json.load(fh)['forward']['dir_count'], 128)

    def test_forward_is_deterministic(self):
        out = os.path.join(self.directory, 'again')
        self.assertEqual(run_command('forward', self.config_path, out=out), EXIT_PASSED)
        with open(self.dataset_path, 'rb') as first, \
                open(os.path.join(out, 'flat-run', 'datasets', 'dataset.jsonl'), 'rb') as second:
            self.assertEqual(first.read(), second.read())

    def test_earliest_arrivals_lie_on_the_flat_cone(self):
        with open(self.dataset_path) as fh:
            dataset = read_dataset(fh)
        earliest = [record for record in dataset.records if record.earliest_flag]
        self.assertGreater(len(earliest), 0)
        for record in earliest:
            q = np.array(dataset.truth[record.source_id]['x'])
            x = np.array(record.x)
            self.assertAlmostEqual(x[0] - q[0], np.linalg.norm(x[1:] - q[1:]), delta=1e-6)

    def test_reconstruct_and_plots(self):
        out = os.path.join(self.directory, 'stages')
        os.makedirs(os.path.join(out, 'flat-run', 'datasets'))
        shutil.copy(self.dataset_path, os.path.join(out, 'flat-run', 'datasets', 'dataset.jsonl'))
        self.assertEqual(run_command('reconstruct', self.config_path, out=out), EXIT_PASSED)
        run_dir = os.path.join(out, 'flat-run')
        with open(os.path.join(run_dir, 'reports', 'reconstruction.json')) as fh:
            report = json.load(fh)
        self.assertEqual(report['config_hash'], config_hash(validate_config(self.config_path)))
        self.assertEqual(report['summary']['reconstructed'], 2)
        self.assertLess(report['summary']['distance']['max'], 1e-2)
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'reports', 'reconstruction.csv')))
        self.assertFalse(os.path.exists(os.path.join(run_dir, 'reports', 'conformal_factor.csv')))

        self.assertEqual(run_command('plots', self.config_path, out=out), EXIT_PASSED)
        arrivals = read_csv(os.path.join(run_dir, 'plots', 'arrival_times.csv'))
        self.assertEqual(arrivals[0], ['source_id', 'observer_id', 's', 'earliest'])
        with open(self.dataset_path) as fh:
            self.assertEqual(len(arrivals) - 1, len(read_dataset(fh).records))
        sections = read_csv(os.path.join(run_dir, 'plots', 'cone_sections.csv'))
        self.assertEqual(sections[0], ['target_id', 'sample', 'v0', 'theta_1', 'theta_2'])
        self.assertEqual(len(sections) - 1, 2 * 64)
        for row in sections[1:]:
            self.assertAlmostEqual(float(row[2]), 1., delta=5e-2)
        histogram = read_csv(os.path.join(run_dir, 'plots', 'residual_histogram.csv'))
        self.assertEqual(sum(int(row[2]) for row in histogram[1:]), 2)
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'manifest.plots.json')))

    def test_foreign_dataset_is_refused(self):
        out = os.path.join(self.directory, 'foreign')
        self.assertEqual(run_command('reconstruct', self.config_path, out=out, seed=7, dataset=self.dataset_path),
                         EXIT_FAILURE)
        self.assertEqual(run_command('reconstruct', self.config_path, out=out, seed=7, dataset=self.dataset_path,
                                     force=True), EXIT_PASSED)

    def test_missing_dataset(self):
        out = os.path.join(self.directory, 'missing')
        self.assertEqual(run_command('reconstruct', self.config_path, out=out), EXIT_FAILURE)

    def test_withheld_truth(self):
        scenario = dict(FLAT_SCENARIO, name='hidden', withhold_truth=True,
                        sources=dict(targets=FLAT_SCENARIO['sources']['targets'][:1],
                                     companions=FLAT_SCENARIO['sources']['companions']))
        path = self.write_scenario('hidden.json', scenario)
        out = os.path.join(self.directory, 'hidden')
        self.assertEqual(run_command('all', path, out=out), EXIT_PASSED)
        with open(os.path.join(out, 'hidden', 'datasets', 'dataset.jsonl')) as fh:
            self.assertIsNone(json.loads(fh.readline())['truth'])
        with open(os.path.join(out, 'hidden', 'reports', 'reconstruction.json')) as fh:
            report = json.load(fh)
        self.assertEqual(report['summary']['reconstructed'], 1)
        self.assertIsNone(report['targets'][0]['distance'])
        self.assertNotIn('median_distance', report['gates'])

    def test_no_sources(self):
        scenario = dict(FLAT_SCENARIO, name='empty', sources=dict(targets=[]))
        path = self.write_scenario('empty.json', scenario)
        out = os.path.join(self.directory, 'empty')
        self.assertEqual(run_command('all', path, out=out), EXIT_PASSED)
        with open(os.path.join(out, 'empty', 'datasets', 'dataset.jsonl')) as fh:
            self.assertEqual(len([line for line in fh if line.strip()]), 1)
        with open(os.path.join(out, 'empty', 'reports', 'reconstruction.json')) as fh:
            self.assertEqual(json.load(fh)['targets'], [])

    def test_conformal_factor_tracks(self):
        x0 = [-0.8, -0.6, 0.2]
        factor = dict(geodesics=[dict(x0=x0, xi0=[1., 0., 1.], s_max=1.2), dict(x0=x0, xi0=[1., 0.6, -0.8], s_max=1.2)],
                      boundary='flattening', samples=21, gate_error=1e-3)
        scenario = dict(FLAT_SCENARIO, name='bump factor', sources=dict(targets=[]),
                        metric=dict(family='conformal_bump', dim=3, params=dict(amplitude=-0.3, width=0.6)),
                        reconstruction=dict(factor=factor))
        path = self.write_scenario('bump.json', scenario)
        out = os.path.join(self.directory, 'bump')
        self.assertEqual(run_command('all', path, out=out), EXIT_PASSED)
        run_dir = os.path.join(out, 'bump-factor')
        with open(os.path.join(run_dir, 'reports', 'reconstruction.json')) as fh:
            report = json.load(fh)
        self.assertTrue(report['gates']['factor_error'])
        self.assertEqual([track['status'] for track in report['factor']], ['integrated', 'integrated'])
        for track in report['factor']:
            self.assertLess(track['error'], 1e-3)
        rows = read_csv(os.path.join(run_dir, 'reports', 'conformal_factor.csv'))
        self.assertEqual(rows[0], ['track', 's', 'x0', 'x1', 'x2', 'f'])
        self.assertEqual(len(rows), 1 + 2 * 21)
        self.assertEqual(float(rows[-1][-1]), report['factor'][1]['f'][-1])
        with open(os.path.join(run_dir, 'manifest.reconstruct.json')) as fh:
            self.assertIn(os.path.join('reports', 'conformal_factor.csv'), json.load(fh)['outputs'])


class CommandTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def write_scenario(self, scenario):
        path = os.path.join(self.directory, 'scenario.json')
        with open(path, 'w') as fh:
            json.dump(scenario, fh)
        return path

    def test_validate_echoes_normalized_config(self):
        path = self.write_scenario(FLAT_SCENARIO)
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            self.assertEqual(run_command('validate', path), EXIT_PASSED)
        echoed = json.loads(buffer.getvalue())
        self.assertEqual(echoed['observers']['sequence'], 'halton')
        self.assertEqual(echoed['seed'], 11)

    def test_invalid_scenario(self):
        scenario = dict(FLAT_SCENARIO, metric=dict(family='kerr', dim=3))
        self.assertEqual(run_command('forward', self.write_scenario(scenario)), EXIT_CONFIG_ERROR)

    def test_command_needs_its_section(self):
        path = self.write_scenario(LINEAR_WAVE_SCENARIO)
        self.assertEqual(run_command('forward', path, out=self.directory), EXIT_CONFIG_ERROR)
        path = self.write_scenario(FLAT_SCENARIO)
        self.assertEqual(run_command('wave', path, out=self.directory), EXIT_CONFIG_ERROR)

    def test_cfl_violation(self):
        scenario = json.loads(json.dumps(LINEAR_WAVE_SCENARIO))
        scenario['wave']['cfl'] = 0.8
        self.assertEqual(run_command('wave', self.write_scenario(scenario), out=self.directory), EXIT_CONFIG_ERROR)

    def test_linear_wave_run(self):
        # with a ≡ 0 every higher order term and the interaction vanish
        path = self.write_scenario(LINEAR_WAVE_SCENARIO)
        self.assertEqual(run_command('all', path, out=self.directory), EXIT_PASSED)
        run_dir = os.path.join(self.directory, 'linear-wave')
        with open(os.path.join(run_dir, 'reports', 'wave.json')) as fh:
            report = json.load(fh)
        self.assertEqual(report['source_count'], 4)
        self.assertEqual(report['interaction_norm'], 0.)
        self.assertNotIn('slope', report['gates'])
        self.assertTrue(report['gates']['interaction_error'])
        self.assertIsNone(report['scan'])
        for norm in report['remainder_norms']:
            self.assertLess(norm, 1e-10)
        for name in ('w1', 'w2', 'w3', 'w4', 'm4'):
            self.assertTrue(os.path.exists(os.path.join(run_dir, 'waves', '{}.bin'.format(name))))
            slices = [f for f in os.listdir(os.path.join(run_dir, 'plots')) if f.startswith(name + '_step')]
            self.assertEqual(len(slices), 5)
        rows = read_csv(os.path.join(run_dir, 'plots', 'w1_step00000.csv'))
        self.assertEqual(rows[0], ['t', 'x', 'value'])
        self.assertEqual(len(rows) - 1, 351)

    def test_crossing_wave_run_passes_its_gates(self):
        path = self.write_scenario(crossing_wave_scenario())
        self.assertEqual(run_command('wave', path, out=self.directory), EXIT_PASSED)
        with open(os.path.join(self.directory, 'crossing-waves', 'reports', 'wave.json')) as fh:
            report = json.load(fh)
        self.assertEqual(set(report['gates']), {'slope', 'interaction_error', 'peak_offset', 'ratio_min'})
        self.assertTrue(report['passed'])
        self.assertTrue(report['scan']['intersecting'])
        np.testing.assert_allclose(report['scan']['q'], [0.17 + 0.36 * np.sqrt(2.), 0., 0.], atol=1e-6)
        rows = read_csv(os.path.join(self.directory, 'crossing-waves', 'waves', 'scan.csv'))
        self.assertEqual(rows[0], ['offset', 'amplitude', 'gradient', 'curvature', 'samples'])
        self.assertEqual(len(rows) - 1, 33)

    def test_missed_crossing_wave_run_passes_its_gates(self):
        path = self.write_scenario(crossing_wave_scenario(moved=[-0.5, -0.5]))
        self.assertEqual(run_command('wave', path, out=self.directory), EXIT_PASSED)
        with open(os.path.join(self.directory, 'crossing-waves', 'reports', 'wave.json')) as fh:
            report = json.load(fh)
        self.assertEqual(set(report['gates']), {'slope', 'interaction_error', 'ratio_min', 'ratio_max'})
        self.assertFalse(report['scan']['intersecting'])


class ScriptTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.namespace = runpy.run_path(SCRIPT, run_name='chronolens_run')

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_script_runs_from_a_shell(self):
        environment = dict(os.environ, PYTHONPATH=os.pathsep.join(
            [REPOSITORY] + [p for p in [os.environ.get('PYTHONPATH')] if p]))
        scenario = os.path.join(REPOSITORY, 'bin', 'scenarios', 'minkowski-1p2.json')
        done = subprocess.run([sys.executable, SCRIPT, 'validate', '--config', scenario], cwd=self.directory,
                              env=environment, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                              universal_newlines=True)
        self.assertEqual(done.returncode, EXIT_PASSED, done.stderr)
        self.assertEqual(json.loads(done.stdout)['metric']['family'], 'minkowski')

    def test_main_returns_exit_codes(self):
        main = self.namespace['main']
        path = os.path.join(self.directory, 'scenario.json')
        with open(path, 'w') as fh:
            json.dump(FLAT_SCENARIO, fh)
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            self.assertEqual(main(['validate', '--config', path]), EXIT_PASSED)
        self.assertEqual(json.loads(buffer.getvalue())['seed'], 11)
        with redirect_stdout(io.StringIO()):
            self.assertEqual(main(['validate', '--config', path, '--seed', '5']), EXIT_PASSED)
        self.assertEqual(main(['wave', '--config', path, '--out', self.directory]), EXIT_CONFIG_ERROR)
        with mock.patch.dict(os.environ, {'CHRONO_LENS_JOBS': 'many'}):
            self.assertEqual(main(['forward', '--config', path, '--out', self.directory]), EXIT_FAILURE)
        with self.assertRaises(SystemExit):
            main(['unknown', '--config', path])


def suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    suite.addTest(loader.loadTestsFromTestCase(ExperimentTestCase))
    suite.addTest(loader.loadTestsFromTestCase(CommandTestCase))
    suite.addTest(loader.loadTestsFromTestCase(ScriptTestCase))
    return suite


def run():
    runner = unittest.TextTestRunner(verbosity=2)
    runner.run(suite())


if __name__ == "__main__":
    run()
