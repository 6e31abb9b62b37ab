import io
import json
import os
import shutil
import tempfile
import unittest

from chronolens.exceptions import ConfigError
from chronolens.utils.config import normalize_config, validate_config, config_hash, forward_hash, \
    reconstruction_parameters, wave_parameters, write_normalized


def minkowski_scenario(**sections):
    scenario = dict(name='flat',
                    metric=dict(family='minkowski', dim=3),
                    observers=dict(z0=[0., 0., 0.], eta0=[1., 0., 0.], schedule=[-0.9, -0.5, 2.0, 2.8]))
    scenario.update(sections)
    return scenario


def wave_scenario(**overrides):
    wave = dict(dim=2, lower=[-2.], upper=[2.], h=0.02, t_end=1.,
                sources=[dict(kind='gaussian_bump', center=[0.3, 0.], width=0.05, amplitude=10.)])
    wave.update(overrides)
    return dict(name='wave', wave=wave)


class ConfigTestCase(unittest.TestCase):

    def pointers(self, scenario):
        with self.assertRaises(ConfigError) as context:
            normalize_config(scenario)
        return [pointer for pointer, _ in context.exception.errors]

    def test_minimal_scenario_gets_defaults(self):
        config = normalize_config(minkowski_scenario())
        self.assertEqual(config.observers.count, 8)
        self.assertEqual(config.observers.h_hat, 0.2)
        self.assertEqual(config.observers.sequence, 'halton')
        self.assertEqual(config.sources['count'], 0)
        self.assertEqual(config.sources.targets, [])
        self.assertEqual(config.forward.dir_count, 512)
        self.assertEqual(config.reconstruction.match_tol, 3e-8)
        self.assertEqual(config.metric.domain, [[-5., 5.]] * 3)
        self.assertEqual(config.seed, 1234)
        self.assertFalse(config.withhold_truth)
        self.assertNotIn('wave', config)
        with self.assertRaises(RuntimeError):
            config.seed = 7
        buffer = io.StringIO()
        write_normalized(config, buffer)
        again = normalize_config(json.loads(buffer.getvalue()))
        self.assertEqual(json.dumps(again.todict(), sort_keys=True), json.dumps(config.todict(), sort_keys=True))

    def test_overrides_survive_normalization(self):
        config = normalize_config(minkowski_scenario(forward=dict(dir_count=64),
                                                     reconstruction=dict(observer_tuples=[[0, 1, 2]])))
        self.assertEqual(config.forward.dir_count, 64)
        self.assertEqual(config.forward.s_max, 12.)
        self.assertEqual(reconstruction_parameters(config).observer_tuples, [(0, 1, 2)])

    def test_factor_tracks_are_normalized(self):
        factor = dict(geodesics=[dict(x0=[0., 0., 0.], xi0=[1., 0.6, 0.8], s_max=1.)], boundary='flattening',
                      region=dict(lower=[-1., -1., -1.], upper=[1., 1., 1.]))
        config = normalize_config(minkowski_scenario(reconstruction=dict(factor=factor)))
        self.assertEqual(config.reconstruction.factor.tol, 1e-10)
        self.assertEqual(config.reconstruction.factor.geodesics[0].f0, 0.)
        self.assertIsNone(config.reconstruction.factor.geodesics[0].df0)
        parameters = reconstruction_parameters(config).factor
        self.assertEqual(parameters.region, ((-1., -1., -1.), (1., 1., 1.)))
        self.assertEqual(parameters.geodesics[0].xi0, (1., 0.6, 0.8))
        self.assertIsNone(normalize_config(minkowski_scenario()).reconstruction.factor)

    def test_factor_geodesics_are_checked(self):
        def geodesic(**overrides):
            values = dict(x0=[0., 0., 0.], xi0=[1., 1., 0.], s_max=1.)
            values.update(overrides)
            return values
        factor = dict(geodesics=[geodesic(xi0=[1., 0.5, 0.]), geodesic(x0=[0., 0.]), geodesic(x0=[0., 7., 0.]),
                                 geodesic()])
        self.assertEqual(self.pointers(minkowski_scenario(reconstruction=dict(factor=factor))),
                         ['/reconstruction/factor/geodesics/0/xi0', '/reconstruction/factor/geodesics/1/x0',
                          '/reconstruction/factor/geodesics/2/x0'])
        self.assertEqual(self.pointers(minkowski_scenario(reconstruction=dict(factor=dict(geodesics=[])))),
                         ['/reconstruction/factor'])

    def test_flattening_needs_a_conformally_flat_family(self):
        factor = dict(geodesics=[dict(x0=[0., 0., 0.], xi0=[1., 1., 0.], s_max=1.)], boundary='flattening')
        scenario = minkowski_scenario(reconstruction=dict(factor=factor))
        scenario['metric'] = dict(family='product_spatial', dim=3)
        self.assertIn('/reconstruction/factor/boundary', self.pointers(scenario))
        scenario['metric'] = dict(family='minkowski', dim=2)
        scenario['observers'] = dict(z0=[0., 0.], eta0=[1., 0.], schedule=[-0.9, -0.5, 2.0, 2.8])
        self.assertIn('/reconstruction/factor', self.pointers(scenario))

    def test_unknown_family(self):
        scenario = minkowski_scenario(metric=dict(family='kerr', dim=4))
        self.assertEqual(self.pointers(scenario), ['/metric/family'])

    def test_all_schema_violations_are_reported(self):
        scenario = minkowski_scenario()
        scenario['observers'].update(count=0, eta0='up')
        scenario['forward'] = dict(ray_tol=-1.)
        self.assertEqual(self.pointers(scenario), ['/forward/ray_tol', '/observers/count', '/observers/eta0'])

    def test_unknown_key(self):
        self.assertEqual(self.pointers(minkowski_scenario(speed_of_light=1.)), [''])

    def test_dimension_mismatch(self):
        scenario = minkowski_scenario()
        scenario['observers']['z0'] = [0., 0.]
        self.assertEqual(self.pointers(scenario), ['/observers/z0'])

    def test_sampling_needs_a_region(self):
        self.assertEqual(self.pointers(minkowski_scenario(sources=dict(count=5))), ['/sources/region'])

    def test_region_meeting_the_past_of_p_minus(self):
        region = dict(center=[-1., 0.5, 0.], half_widths=[0.1, 0.1, 0.1])
        self.assertEqual(self.pointers(minkowski_scenario(sources=dict(region=region, count=3))),
                         ['/sources/region'])

    def test_region_inside_the_diamond(self):
        region = dict(center=[0.5, 0.5, 0.], half_widths=[0.1, 0.2, 0.2])
        config = normalize_config(minkowski_scenario(sources=dict(region=region, count=3)))
        self.assertEqual(config.sources.region.center, [0.5, 0.5, 0.])

    def test_schedule_must_increase(self):
        scenario = minkowski_scenario()
        scenario['observers']['schedule'] = [-0.9, 1., 0.5, 2.]
        self.assertEqual(self.pointers(scenario), ['/observers/schedule'])

    def test_empty_scenario(self):
        self.assertEqual(self.pointers(dict(name='nothing')), [''])

    def test_wave_defaults(self):
        config = normalize_config(wave_scenario())
        self.assertEqual(config.wave.cfl, 0.5)
        self.assertEqual(config.wave.epsilons, [1e-2, 5e-3, 2e-3, 1e-3])
        self.assertEqual(config.wave.gates.slope_min, 4.5)
        parameters = wave_parameters(config)
        self.assertEqual(parameters.a, 1.)
        self.assertIsNone(parameters.probe)
        self.assertNotIn('metric', config)

    def test_cfl_violation_is_refused(self):
        self.assertEqual(self.pointers(wave_scenario(cfl=0.8)), ['/wave/cfl'])

    def test_plane_wave_must_be_null(self):
        source = dict(kind='mollified_plane_wave', center=[0.3, 0.], covector=[1., -0.5], radius=0.2)
        self.assertEqual(self.pointers(wave_scenario(sources=[source])), ['/wave/sources/0'])

    def test_epsilons_span_a_decade(self):
        self.assertEqual(self.pointers(wave_scenario(epsilons=[1e-2, 8e-3, 6e-3, 4e-3])), ['/wave/epsilons'])
        self.assertEqual(self.pointers(wave_scenario(epsilons=[1e-2, 0., 2e-3, 1e-3])), ['/wave/epsilons/1'])

    def test_hash_ignores_output_and_jobs(self):
        first = normalize_config(minkowski_scenario(output='/tmp/a', jobs=1))
        second = normalize_config(minkowski_scenario(output='/tmp/b', jobs=4))
        self.assertEqual(config_hash(first), config_hash(second))
        self.assertEqual(len(config_hash(first)), 64)
        self.assertNotEqual(config_hash(first), config_hash(normalize_config(minkowski_scenario(seed=7))))

    def test_forward_hash_ignores_later_stages(self):
        first = normalize_config(minkowski_scenario())
        second = normalize_config(minkowski_scenario(reconstruction=dict(gate_median=0.5)))
        self.assertEqual(forward_hash(first), forward_hash(second))
        self.assertNotEqual(config_hash(first), config_hash(second))
        third = normalize_config(minkowski_scenario(withhold_truth=True))
        self.assertNotEqual(forward_hash(first), forward_hash(third))


class ConfigFileTestCase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def write(self, text):
        path = os.path.join(self.directory, 'scenario.json')
        with open(path, 'w') as fh:
            fh.write(text)
        return path

    def test_read_from_file(self):
        config = validate_config(self.write(json.dumps(minkowski_scenario())))
        self.assertEqual(config.name, 'flat')

    def test_seed_override(self):
        config = validate_config(self.write(json.dumps(minkowski_scenario())), dict(seed=99))
        self.assertEqual(config.seed, 99)

    def test_invalid_json(self):
        with self.assertRaises(ConfigError) as context:
            validate_config(self.write('{"name": '))
        self.assertEqual(context.exception.errors[0][0], '')
        self.assertIn('invalid JSON', context.exception.errors[0][1])

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            validate_config(os.path.join(self.directory, 'missing.json'))

    def test_shipped_scenarios_are_valid(self):
        directory = os.path.join(os.path.dirname(__file__), '..', '..', 'bin', 'scenarios')
        if not os.path.isdir(directory):
            self.skipTest("scenario directory not available")
        for name in sorted(os.listdir(directory)):
            with self.subTest(scenario=name):
                config = validate_config(os.path.join(directory, name))
                self.assertEqual(config.name, os.path.splitext(name)[0])


def suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    suite.addTest(loader.loadTestsFromTestCase(ConfigTestCase))
    suite.addTest(loader.loadTestsFromTestCase(ConfigFileTestCase))
    return suite


def run():
    runner = unittest.TextTestRunner(verbosity=2)
    runner.run(suite())


if __name__ == "__main__":
    run()
