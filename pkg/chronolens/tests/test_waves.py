import io
import unittest

import numpy as np

from chronolens.exceptions import CFLViolation, GridTooSmall, NaNDetected, NoIntersection, PicardDiverged, \
    SupportOverlap
from chronolens.metrics import make_metric_spec
from chronolens.waves import make_grid_spec, make_field, zero_field, gaussian_bump, mollified_plane_wave, \
    sample_source, lattice_events, write_snapshot, read_snapshot, causal_solve, nonlinear_solve, influence_mask, \
    discrete_energy, relative_error, oracle_field, expansion_terms, expansion_remainders, \
    fourth_interaction_formula, fourth_interaction_finite_difference, default_delta, front_residuals, \
    front_intersection, singularity_scan


def source_levels(source):
    return np.nonzero(source.values.reshape(source.values.shape[0], -1).any(axis=1))[0]


class GridTestCase(unittest.TestCase):

    def test_lattice_layout(self):
        grid = make_grid_spec(2, -1., 1., 0.01, 1.)
        self.assertEqual(grid.counts, (201,))
        self.assertAlmostEqual(grid.k, 0.005)
        self.assertEqual(grid.steps, 200)
        self.assertEqual(lattice_events(grid).shape, (201, 201, 2))

    def test_cfl_refused(self):
        with self.assertRaises(CFLViolation):
            make_grid_spec(2, -1., 1., 0.01, 1., cfl=0.6)
        # a negative exponent speeds waves up
        fast = make_metric_spec('product_spatial', 2, dict(amplitude=-0.3, width=0.5, center=[0.]))
        with self.assertRaises(CFLViolation):
            make_grid_spec(2, -1., 1., 0.01, 1., background=fast)
        make_grid_spec(2, -1., 1., 0.01, 1., cfl=0.35, background=fast)

    def test_plane_wave_covector_must_be_null(self):
        grid = make_grid_spec(3, (-1., -1.), (1., 1.), 0.05, 1.)
        mollified_plane_wave(grid, (0.3, 0., 0.), (1., -1., 0.), 0.2)
        with self.assertRaises(ValueError):
            mollified_plane_wave(grid, (0.3, 0., 0.), (1., -0.5, 0.), 0.2)
        with self.assertRaises(ValueError):
            mollified_plane_wave(grid, (0.3, 0., 0.), (1., -1., 0.), 0.2, power=1)

    def test_plane_wave_vanishes_ahead_of_its_front(self):
        grid = make_grid_spec(3, (-1., -1.), (1., 1.), 0.05, 1.)
        profile = mollified_plane_wave(grid, (0.5, 0., 0.), (1., -1., 0.), 0.4)
        source = sample_source(grid, profile)
        events = lattice_events(grid)
        phase = (events[..., 0] - 0.5) - events[..., 1]
        self.assertTrue(np.all(source.values[phase <= 0] == 0.))
        self.assertGreater(source.values.max(), 0.)

    def test_snapshot_round_trip(self):
        grid = make_grid_spec(2, -1., 1., 0.05, 0.5)
        field = sample_source(grid, gaussian_bump((0.25, 0.), 0.02))
        fh = io.BytesIO()
        write_snapshot(field, fh, config_hash='abc')
        fh.seek(0)
        header, values = read_snapshot(fh)
        self.assertEqual(header['config_hash'], 'abc')
        self.assertEqual(header['counts'], [41])
        np.testing.assert_array_equal(values, field.values)

    def test_nan_detected(self):
        grid = make_grid_spec(2, -1., 1., 0.05, 0.5)
        values = np.zeros((grid.steps + 1,) + grid.counts)
        values[3, 5] = np.nan
        with self.assertRaises(NaNDetected) as context:
            make_field(grid, values)
        self.assertEqual(context.exception.step, 3)


class CausalSolveTestCase(unittest.TestCase):

    def setUp(self):
        self.profile = gaussian_bump((0.7, 0.), 0.08)
        self.probe = ((0., -0.6), (1.3, 0.6))

    def oracle_error(self, h):
        grid = make_grid_spec(2, -2., 2., h, 1.3)
        u = causal_solve(sample_source(grid, self.profile), probe=self.probe)
        return relative_error(u, oracle_field(grid, self.profile))

    def test_zero_source(self):
        grid = make_grid_spec(2, -1., 1., 0.01, 1.)
        u = causal_solve(zero_field(grid))
        self.assertTrue(np.all(u.values == 0.))

    def test_dalembert_oracle(self):
        self.assertLess(self.oracle_error(0.005), 2e-3)

    def test_second_order_convergence(self):
        coarse, fine = self.oracle_error(0.02), self.oracle_error(0.01)
        self.assertGreater(coarse / fine, 3.)

    def test_reflections_reaching_probe_refused(self):
        grid = make_grid_spec(2, -1., 1., 0.01, 1.3)
        with self.assertRaises(GridTooSmall):
            causal_solve(sample_source(grid, self.profile), probe=self.probe)

    def test_discrete_causality(self):
        rng = np.random.default_rng(21)
        grid = make_grid_spec(3, (-1., -1.), (1., 1.), 0.05, 0.8)
        for _ in range(20):
            center = (rng.uniform(0.3, 0.4), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
            source = sample_source(grid, gaussian_bump(center, rng.uniform(0.02, 0.04), rng.uniform(-2., 2.)))
            self.assertTrue(np.any(source.values))
            u = causal_solve(source)
            mask = influence_mask(source)
            self.assertTrue(np.all(u.values[~mask] == 0.))
            self.assertTrue(np.any(u.values[mask] != 0.))

    def test_energy_conserved_after_source(self):
        grid = make_grid_spec(2, -1., 1., 0.01, 3.)
        source = sample_source(grid, gaussian_bump((0.3, 0.), 0.03))
        energy = discrete_energy(causal_solve(source))
        after = energy[source_levels(source)[-1] + 1:]
        self.assertGreater(after.mean(), 0.)
        self.assertLess((after.max() - after.min()) / after.mean(), 1e-10)

    def test_energy_conserved_on_frozen_background(self):
        spec = make_metric_spec('product_spatial', 3, dict(amplitude=0.2, width=0.3, center=[0., 0.]))
        grid = make_grid_spec(3, (-1., -1.), (1., 1.), 0.05, 2., background=spec)
        source = sample_source(grid, gaussian_bump((0.4, 0.2, 0.), 0.05))
        energy = discrete_energy(causal_solve(source))
        after = energy[source_levels(source)[-1] + 1:]
        self.assertLess((after.max() - after.min()) / after.mean(), 1e-10)


class NonlinearSolveTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid_spec(2, -2.5, 2.5, 0.02, 1.5)
        self.f = sample_source(self.grid, gaussian_bump((0.65, 0.), 0.08, amplitude=50.))

    def test_linear_without_coefficient(self):
        u = nonlinear_solve(self.grid, 0., self.f, 0.3)
        expected = 0.3 * causal_solve(self.f).values
        np.testing.assert_allclose(u.values, expected, rtol=1e-12, atol=1e-14 * np.abs(expected).max())

    def test_zero_amplitude(self):
        u = nonlinear_solve(self.grid, 2., self.f, 0.)
        self.assertTrue(np.all(u.values == 0.))

    def test_direct_and_picard_agree(self):
        direct = nonlinear_solve(self.grid, 2., self.f, 1.)
        picard = nonlinear_solve(self.grid, 2., self.f, 1., method='picard')
        self.assertGreater(np.abs(direct.values).max(), 0.5)
        self.assertLess(relative_error(picard, direct), 1e-8)

    def test_picard_history_on_failure(self):
        with self.assertRaises(PicardDiverged) as context:
            nonlinear_solve(self.grid, 2., self.f, 1., method='picard', max_iterations=2)
        self.assertEqual(len(context.exception.history), 2)


class ExpansionTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid_spec(2, -2.5, 2.5, 0.02, 1.5)
        self.f = sample_source(self.grid, gaussian_bump((0.65, 0.), 0.08, amplitude=50.))

    def test_first_term_is_linear_solve(self):
        terms = expansion_terms(self.grid, 2., self.f)
        np.testing.assert_array_equal(terms.w1.values, causal_solve(self.f).values)
        np.testing.assert_allclose(terms.w2.values, -causal_solve(make_field(self.grid, 2. * terms.w1.values ** 2))
                                   .values)

    def test_linear_equation_has_no_higher_terms(self):
        terms = expansion_terms(self.grid, 0., self.f)
        for w in terms[1:]:
            self.assertTrue(np.all(w.values == 0.))

    def test_remainder_is_fifth_order(self):
        remainders = expansion_remainders(self.grid, 2., self.f, (1e-2, 5e-3, 2e-3, 1e-3))
        self.assertGreaterEqual(remainders.slope, 4.5)
        self.assertTrue(all(a > b for a, b in zip(remainders.norms, remainders.norms[1:])))

    def test_slope_fit_needs_a_decade(self):
        with self.assertRaises(ValueError):
            expansion_remainders(self.grid, 2., self.f, (1e-2, 8e-3, 6e-3, 4e-3))
        with self.assertRaises(ValueError):
            expansion_remainders(self.grid, 2., self.f, (1e-2, 1e-3, 1e-4))


class FourthInteractionTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.grid = make_grid_spec(2, -3.5, 3.5, 0.01, 2.)
        cls.sources = [sample_source(cls.grid, gaussian_bump((0.3, x), 0.02, amplitude=800.))
                       for x in (-1.2, -0.4, 0.4, 1.2)]
        cls.formula = fourth_interaction_formula(cls.grid, 1., cls.sources)

    def test_interaction_is_nonzero(self):
        self.assertGreater(np.abs(self.formula.values).max(), 0.)

    def test_formula_matches_mixed_difference(self):
        difference = fourth_interaction_finite_difference(self.grid, 1., self.sources)
        self.assertLess(relative_error(difference, self.formula), 2e-2)

    def test_mixed_difference_step_consistency(self):
        delta = default_delta(self.sources)
        first = fourth_interaction_finite_difference(self.grid, 1., self.sources, delta)
        second = fourth_interaction_finite_difference(self.grid, 1., self.sources, 0.5 * delta)
        self.assertLess(relative_error(first, second), 1e-2)

    def test_permutation_symmetry(self):
        swapped = [self.sources[1], self.sources[0]] + self.sources[2:]
        self.assertLess(relative_error(fourth_interaction_formula(self.grid, 1., swapped), self.formula), 1e-12)

    def test_multilinearity(self):
        scaled = [make_field(self.grid, 3. * self.sources[0].values)] + self.sources[1:]
        m = fourth_interaction_formula(self.grid, 1., scaled)
        self.assertLess(relative_error(m.values, 3. * self.formula.values), 1e-12)

    def test_vanishing_source(self):
        m = fourth_interaction_formula(self.grid, 1., [zero_field(self.grid)] + self.sources[1:])
        self.assertTrue(np.all(m.values == 0.))

    def test_linear_equation_has_no_interaction(self):
        self.assertTrue(np.all(fourth_interaction_formula(self.grid, 0., self.sources).values == 0.))
        difference = fourth_interaction_finite_difference(self.grid, 0., self.sources)
        self.assertLess(np.abs(difference.values).max(), 1e-6)

    def test_overlapping_supports_refused(self):
        close = [sample_source(self.grid, gaussian_bump((0.3, x), 0.02, amplitude=800.))
                 for x in (-1.2, -0.1, 0.1, 1.2)]
        with self.assertRaises(SupportOverlap):
            fourth_interaction_formula(self.grid, 1., close)
        with self.assertRaises(ValueError):
            fourth_interaction_formula(self.grid, 1., self.sources[:3])


class SingularityScanTestCase(unittest.TestCase):

    def setUp(self):
        self.grid = make_grid_spec(3, (-1., -1.), (1., 1.), 0.02, 1.)
        self.q = np.array([0.2, 0., 0.])
        events = lattice_events(self.grid)
        self.cone = events[..., 0] - self.q[0] - np.linalg.norm(events[..., 1:] - self.q[1:], axis=-1)

    def test_field_on_the_cone(self):
        field = make_field(self.grid, np.exp(-0.5 * (self.cone / 0.03) ** 2))
        table = singularity_scan(field, self.q)
        self.assertLessEqual(abs(table.peak_offset), 3)
        self.assertGreater(table.ratio, 5.)
        self.assertTrue(np.all(table.samples > 0))

    def test_structureless_field(self):
        rng = np.random.default_rng(13)
        field = make_field(self.grid, rng.normal(size=self.cone.shape))
        table = singularity_scan(field, self.q, intersecting=False)
        self.assertGreaterEqual(table.ratio, 0.5)
        self.assertLessEqual(table.ratio, 2.)
        self.assertFalse(table.intersecting)

    def test_zero_field(self):
        table = singularity_scan(zero_field(self.grid), self.q)
        self.assertIsNone(table.ratio)
        self.assertIsNone(table.peak_offset)

    def plane_waves(self, shift=0.):
        travel = 0.5
        profiles = []
        for j, angle in enumerate(np.pi * np.array([0.1, 0.6, 1.1, 1.6])):
            nu = np.array([np.cos(angle), np.sin(angle)])
            center = np.concatenate([[self.q[0] - travel], self.q[1:] - (travel + (shift if j == 0 else 0.)) * nu])
            profiles.append(mollified_plane_wave(self.grid, center, np.concatenate([[1.], -nu]), 0.15))
        return profiles

    def test_fronts_meet_at_q(self):
        meeting = front_intersection(self.plane_waves(), tol=0.5 * self.grid.h)
        self.assertTrue(meeting.intersecting)
        np.testing.assert_allclose(meeting.q, self.q, atol=1e-10)

    def test_fronts_missing_each_other(self):
        missing = front_intersection(self.plane_waves(shift=0.3), tol=0.5 * self.grid.h)
        self.assertFalse(missing.intersecting)
        with self.assertRaises(NoIntersection):
            front_intersection(self.plane_waves(shift=0.3), tol=0.5 * self.grid.h, strict=True)

    def test_bump_cones_meet_at_q(self):
        travel = 0.5
        profiles = [gaussian_bump((self.q[0] - travel, travel * np.cos(angle), travel * np.sin(angle)), 0.02)
                    for angle in np.pi * np.array([0.1, 0.6, 1.1, 1.6])]
        meeting = front_intersection(profiles, tol=0.5 * self.grid.h)
        self.assertTrue(meeting.intersecting)
        np.testing.assert_allclose(meeting.q, self.q, atol=1e-8)
        np.testing.assert_allclose(front_residuals(profiles, self.q), 0., atol=1e-12)
        later = self.q + np.array([0.1, 0., 0.])
        np.testing.assert_allclose(front_residuals(profiles, later), 0.1 / np.sqrt(2.))

    def test_curvature_of_a_smooth_ramp_vanishes(self):
        events = lattice_events(self.grid)
        field = make_field(self.grid, events[..., 0] + 0.5 * events[..., 1])
        table = singularity_scan(field, self.q)
        np.testing.assert_allclose(table.curvature[table.samples > 0], 0., atol=1e-8)


class InteractionSingularityTestCase(unittest.TestCase):
    """
    Four Gaussian sources on the diagonals whose forward cones meet at one point q, on a lattice small enough for
    the whole chain from sources to scan
    """

    @classmethod
    def setUpClass(cls):
        cls.grid = make_grid_spec(3, (-0.9, -0.9), (0.9, 0.9), 0.02, 1.1)
        cls.q = np.array([0.17 + 0.36 * np.sqrt(2.), 0., 0.])

    def interaction(self, moved=None):
        corners = [(0.36, 0.36), (-0.36, 0.36), (-0.36, -0.36), (0.36, -0.36)]
        if moved is not None:
            corners[2] = moved
        profiles = [gaussian_bump((0.17,) + corner, 0.02, amplitude=60000.) for corner in corners]
        sources = [sample_source(self.grid, profile) for profile in profiles]
        return profiles, fourth_interaction_formula(self.grid, 1., sources)

    def test_meeting_fronts_focus_on_the_cone_of_q(self):
        profiles, field = self.interaction()
        front = front_intersection(profiles, tol=0.5 * self.grid.h)
        self.assertTrue(front.intersecting)
        np.testing.assert_allclose(front.q, self.q, atol=1e-6)
        table = singularity_scan(field, front.q, intersecting=front.intersecting)
        self.assertLessEqual(abs(table.peak_offset), 3)
        self.assertGreater(table.ratio, 5.)

    def test_moved_source_leaves_the_cone_of_q_flat(self):
        profiles, field = self.interaction(moved=(-0.5, -0.5))
        front = front_intersection(profiles, tol=0.5 * self.grid.h)
        self.assertFalse(front.intersecting)
        self.assertGreater(np.abs(front_residuals(profiles, self.q)).max(), 0.5 * self.grid.h)
        table = singularity_scan(field, self.q, intersecting=False)
        self.assertGreaterEqual(table.ratio, 0.5)
        self.assertLessEqual(table.ratio, 2.)


def suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    suite.addTest(loader.loadTestsFromTestCase(GridTestCase))
    suite.addTest(loader.loadTestsFromTestCase(CausalSolveTestCase))
    suite.addTest(loader.loadTestsFromTestCase(NonlinearSolveTestCase))
    suite.addTest(loader.loadTestsFromTestCase(ExpansionTestCase))
    suite.addTest(loader.loadTestsFromTestCase(FourthInteractionTestCase))
    suite.addTest(loader.loadTestsFromTestCase(SingularityScanTestCase))
    suite.addTest(loader.loadTestsFromTestCase(InteractionSingularityTestCase))
    return suite


def run():
    runner = unittest.TextTestRunner(verbosity=2)
    runner.run(suite())


if __name__ == "__main__":
    run()
