import io
import unittest

import numpy as np

from chronolens.causal import observer_congruence, earliest_obs_time
from chronolens.exceptions import DuplicateSourceId
from chronolens.metrics import make_metric_spec
from chronolens.observations import ArrivalRecord, Source, SourceRegion, default_forward_parameters, \
    light_observation_set, earliest_observation_set, earliest_point_on_observer, arrival_direction_estimate, \
    assemble_dataset, dataset_view, companion_sources, sample_sources, region_violations, write_dataset, \
    read_dataset, read_dataset_view, celestial_directions


def single_observer_grid(spec, z, eta, s_range):
    return observer_congruence(spec, z, eta, 0., 1, s_range=s_range)


class LightObservationTestCase(unittest.TestCase):

    def setUp(self):
        self.minkowski = make_metric_spec('minkowski', 3)
        self.grid = single_observer_grid(self.minkowski, np.zeros(3), [1., 0., 0.], (-1., 2.))
        self.parameters = default_forward_parameters(3, dir_count=64)

    def test_celestial_directions(self):
        directions = celestial_directions(4, 100)
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.)
        self.assertLess(np.abs(directions.mean(axis=0)).max(), 0.02)
        self.assertEqual(celestial_directions(2, 10).shape, (2, 1))

    def test_single_arrival(self):
        records = light_observation_set(self.minkowski, self.grid, [0., 0.5, 0.], self.parameters, source_id=7)
        self.assertEqual(len(records), 1)
        record = records[0]
        self.assertEqual(record.source_id, 7)
        self.assertAlmostEqual(record.s, 0.5, delta=1e-9)
        np.testing.assert_allclose(record.xi, np.array([1., -1., 0.]) / np.sqrt(2.), atol=1e-8)
        self.assertAlmostEqual(record.affine_length, 0.5 * np.sqrt(2.), delta=1e-8)
        self.assertTrue(record.earliest_flag)
        self.assertFalse(record.on_worldline)

    def test_source_on_worldline(self):
        records = light_observation_set(self.minkowski, self.grid, [0., 0., 0.], self.parameters)
        self.assertEqual(len(records), 1)
        self.assertTrue(records[0].on_worldline)
        self.assertAlmostEqual(records[0].s, 0., delta=1e-7)
        self.assertTrue(np.all(np.isnan(records[0].xi)))

    def test_cylinder_windings(self):
        spec = make_metric_spec('einstein_cylinder', 2, dict(radius=1.))
        grid = single_observer_grid(spec, [0., np.pi], [1., 0.], (-1., 8.))
        q = np.array([0., np.pi - 0.5])
        records = light_observation_set(spec, grid, q, default_forward_parameters(2))
        self.assertEqual(len(records), 2)
        short, long = records
        self.assertAlmostEqual(short.s, 0.5, delta=1e-8)
        self.assertAlmostEqual(long.s, 2 * np.pi - 0.5, delta=1e-8)
        self.assertTrue(short.earliest_flag)
        self.assertFalse(long.earliest_flag)
        self.assertEqual(earliest_observation_set(records), [short])
        self.assertEqual(earliest_point_on_observer(records, 0), short)
        self.assertAlmostEqual(short.s, earliest_obs_time(spec, grid.center, q).s, delta=1e-4)

    def test_earliest_point_ties(self):
        first = ArrivalRecord(0, 3, 1., (1., 0., 0.), (1., 0., 0.), 1., True, False, None)
        tied = first._replace(s=1. + 1e-10)
        later = first._replace(s=1.5)
        self.assertIsNone(earliest_point_on_observer([first], 4))
        self.assertEqual(earliest_point_on_observer([later, first], 3), first)
        self.assertEqual(earliest_point_on_observer([later, tied, first], 3), (first, tied))
        self.assertEqual(earliest_observation_set([]), [])

    def test_arrival_direction_from_times(self):
        grid = observer_congruence(self.minkowski, np.zeros(3), [1., 0., 0.], 0.1, 16, s_range=(-1., 3.))
        parameters = default_forward_parameters(3, dir_count=256)
        records = light_observation_set(self.minkowski, grid, [0., 1.5, 0.5], parameters)
        estimate = arrival_direction_estimate(self.minkowski, grid, records)
        recorded = earliest_point_on_observer(records, 0).xi
        self.assertLess(np.arccos(np.clip(estimate @ np.array(recorded), -1., 1.)), 1e-2)


class DatasetTestCase(unittest.TestCase):

    def setUp(self):
        self.spec = make_metric_spec('minkowski', 3)
        self.grid = observer_congruence(self.spec, np.zeros(3), [1., 0., 0.], 0.1, 4, s_range=(-1., 3.))
        self.parameters = default_forward_parameters(3, dir_count=128)
        self.p_minus = np.array([-1., 0., 0.])
        self.p_plus = np.array([2.5, 0., 0.])

    def test_empty_and_duplicates(self):
        dataset = assemble_dataset(self.spec, self.grid, [], self.parameters)
        self.assertEqual(dataset.records, [])
        sources = [Source(1, (0., 0.5, 0.), None, None), Source(1, (0., 0.6, 0.), None, None)]
        with self.assertRaises(DuplicateSourceId):
            assemble_dataset(self.spec, self.grid, sources, self.parameters)

    def test_region_sampling(self):
        region = SourceRegion((0., 0.6, 0.), (0.2, 0.2, 0.2))
        self.assertEqual(region_violations(self.spec, region, self.p_minus, self.p_plus), [])
        self.assertNotEqual(region_violations(self.spec, SourceRegion((-0.9, 0., 0.), (0.2, 0.2, 0.2)),
                                              self.p_minus, self.p_plus), [])
        first = sample_sources(self.spec, region, 5, self.p_minus, self.p_plus, np.random.default_rng(4))
        second = sample_sources(self.spec, region, 5, self.p_minus, self.p_plus, np.random.default_rng(4))
        self.assertEqual(first, second)
        self.assertEqual([source.id for source in first], list(range(5)))

    def test_counts_tables_and_views(self):
        region = SourceRegion((0., 0.6, 0.), (0.3, 0.3, 0.3))
        sources = sample_sources(self.spec, region, 4, self.p_minus, self.p_plus, np.random.default_rng(1))
        dataset = assemble_dataset(self.spec, self.grid, sources, self.parameters, p_minus=self.p_minus,
                                   p_plus=self.p_plus)
        self.assertEqual(len(dataset.records), 4 * len(self.grid.members))
        keys = [(r.source_id, r.observer_id, r.s) for r in dataset.records]
        self.assertEqual(keys, sorted(keys))

        tables = {}
        for source in sources:
            own = [r for r in dataset.records if r.source_id == source.id]
            for member in self.grid.members:
                record = earliest_point_on_observer(own, member.id)
                self.assertAlmostEqual(record.s, earliest_obs_time(self.spec, member, source.x).s, delta=1e-4)
            tables[source.id] = np.array([earliest_point_on_observer(own, m.id).s for m in self.grid.members])
        for a in sources:
            for b in sources:
                if a.id < b.id:
                    self.assertGreater(np.abs(tables[a.id] - tables[b.id]).max(), 1e-4)

        view = dataset_view(dataset)
        self.assertFalse(hasattr(view, 'truth'))
        self.assertTrue(all(record.launch is None for record in view.records))

        buffer, again = io.StringIO(), io.StringIO()
        write_dataset(dataset, buffer)
        write_dataset(dataset, again)
        self.assertEqual(buffer.getvalue(), again.getvalue())
        buffer.seek(0)
        restored = read_dataset(buffer)
        self.assertEqual(restored.records, dataset.records)
        self.assertEqual(sorted(restored.truth), [source.id for source in sources])
        buffer.seek(0)
        view = read_dataset_view(buffer)
        self.assertNotIn('truth', view.metadata)
        self.assertEqual(len(view.records), len(dataset.records))

    def test_companions_share_arrivals(self):
        target = Source(0, (0., 0.6, 0.2), None, None)
        records = light_observation_set(self.spec, self.grid, target.x, self.parameters, source_id=0)
        companions = companion_sources(self.spec, target, records, (-0.04, -0.02, 0.02, 0.04), 2, first_id=1)
        self.assertEqual(len(companions), 8)
        self.assertTrue(all(c.parent == 0 for c in companions))
        companion = companions[2]
        observed = light_observation_set(self.spec, self.grid, companion.x, self.parameters, source_id=companion.id)
        matches = [(a, b) for a in records for b in observed
                   if a.observer_id == b.observer_id and abs(a.s - b.s) < 3e-8]
        self.assertTrue(matches)
        for a, b in matches:
            np.testing.assert_allclose(a.xi, b.xi, atol=1e-6)
            self.assertAlmostEqual(b.affine_length, a.affine_length - 0.02 * np.sqrt(2.), delta=1e-6)


def suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    suite.addTest(loader.loadTestsFromTestCase(LightObservationTestCase))
    suite.addTest(loader.loadTestsFromTestCase(DatasetTestCase))
    return suite


def run():
    runner = unittest.TextTestRunner(verbosity=2)
    runner.run(suite())


if __name__ == "__main__":
    run()
