import unittest

import numpy as np

from chronolens.exceptions import OutOfDomain
from chronolens.metrics import make_metric_spec, metric_spec_from_dict, metric_family, spec_hash, eval_metric, \
    christoffel, ricci, riemannian_companion, causal_character, lorentz_frame, TangentVector, TIMELIKE, NULL, \
    SPACELIKE


def catalog_specs():
    return [make_metric_spec('minkowski', 4),
            make_metric_spec('minkowski', 3),
            make_metric_spec('conformal_bump', 3, dict(amplitude=0.3, width=0.7)),
            make_metric_spec('conformal_bump', 4, dict(profile='compact', amplitude=0.3, width=1.5)),
            make_metric_spec('product_spatial', 3, dict(amplitude=0.25, width=0.6)),
            make_metric_spec('product_spatial', 3, dict(profile='sphere', radius=1.0)),
            make_metric_spec('einstein_cylinder', 2, dict(radius=2.0)),
            make_metric_spec('einstein_cylinder', 3),
            make_metric_spec('schwarzschild_like', 4, dict(mass=1.0))]


def sample_points(spec, count, rng, margin=0.05):
    lower = spec.lower + margin * (spec.upper - spec.lower)
    upper = spec.upper - margin * (spec.upper - spec.lower)
    return rng.uniform(lower, upper, size=(count, spec.dim))


class MetricCatalogTestCase(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_minkowski_components(self):
        spec = make_metric_spec('minkowski', 4)
        m = eval_metric(spec, [0.3, -1., 2., 0.5])
        np.testing.assert_array_equal(m.g, np.diag([-1., 1., 1., 1.]))
        self.assertLess(m.det_g, 0)
        self.assertIsNone(m.partials)

    def test_zero_amplitude_bump_is_minkowski(self):
        spec = make_metric_spec('conformal_bump', 3, dict(amplitude=0.))
        flat = make_metric_spec('minkowski', 3)
        for x in sample_points(spec, 20, self.rng):
            np.testing.assert_array_equal(eval_metric(spec, x).g, eval_metric(flat, x).g)

    def test_cylinder_components(self):
        spec = make_metric_spec('einstein_cylinder', 2, dict(radius=2.))
        np.testing.assert_array_equal(eval_metric(spec, [0., 0.]).g, np.diag([-1., 4.]))

    def test_out_of_domain(self):
        spec = make_metric_spec('minkowski', 3)
        with self.assertRaises(OutOfDomain):
            eval_metric(spec, [0., 6., 0.])
        with self.assertRaises(OutOfDomain):
            christoffel(spec, [np.nan, 0., 0.])

    def test_periodic_axis_is_never_out_of_domain(self):
        spec = make_metric_spec('einstein_cylinder', 2)
        eval_metric(spec, [0., 7.5])
        np.testing.assert_allclose(metric_family(spec).wrap([0., 7.5]), [0., 7.5 - 2 * np.pi])

    def test_signature_and_inverse(self):
        for spec in catalog_specs():
            family = metric_family(spec)
            x = sample_points(spec, 1000, self.rng)
            g = family.components(x)
            np.testing.assert_array_equal(g, np.swapaxes(g, -1, -2))
            eigenvalues = np.linalg.eigvalsh(g)
            self.assertTrue(np.all(np.sum(eigenvalues < 0, axis=-1) == 1), spec.family)
            g_inv = np.linalg.inv(g)
            error = np.abs(g @ g_inv - np.eye(spec.dim)).max()
            self.assertLess(error, 1e-12, spec.family)
            # x⁰ is a time function
            self.assertTrue(np.all(g_inv[:, 0, 0] < 0), spec.family)

    def test_fd_christoffel_matches_analytic(self):
        for spec in catalog_specs():
            for x in sample_points(spec, 25, self.rng, margin=0.1):
                analytic = christoffel(spec, x, method='analytic')
                fd = christoffel(spec, x, method='fd')
                np.testing.assert_allclose(fd, analytic, rtol=0, atol=1e-7, err_msg=spec.family)
                np.testing.assert_array_equal(analytic, np.swapaxes(analytic, -1, -2))

    def test_conformal_christoffel_closed_form(self):
        spec = make_metric_spec('conformal_bump', 3, dict(amplitude=0.3, width=0.7))
        family = metric_family(spec)
        eta = np.diag([-1., 1., 1.])
        for x in sample_points(spec, 10, self.rng, margin=0.3):
            dphi = family.conformal_gradient(x)
            expected = (np.einsum('ki,j->kij', np.eye(3), dphi) + np.einsum('kj,i->kij', np.eye(3), dphi)
                        - np.einsum('ij,k->kij', eta, eta @ dphi))
            np.testing.assert_allclose(christoffel(spec, x, method='fd'), expected, atol=1e-7)

    def test_schwarzschild_christoffel(self):
        spec = make_metric_spec('schwarzschild_like', 4, dict(mass=1.0))
        for r in (2.5, 3., 6., 20.):
            gamma = christoffel(spec, [0., r, 1.2, 0.4])
            self.assertAlmostEqual(gamma[0, 0, 1], 1. / (r * (r - 2.)), places=12)
            self.assertAlmostEqual(gamma[0, 1, 0], 1. / (r * (r - 2.)), places=12)

    def test_ricci_flat_families(self):
        np.testing.assert_array_equal(ricci(make_metric_spec('minkowski', 4), [0., 1., 2., 3.]), np.zeros((4, 4)))
        np.testing.assert_array_equal(ricci(make_metric_spec('einstein_cylinder', 3), [0., 1., 2.]),
                                      np.zeros((3, 3)))

    def test_ricci_schwarzschild_vacuum(self):
        spec = make_metric_spec('schwarzschild_like', 4, dict(mass=1.0))
        for _ in range(20):
            x = np.array([self.rng.uniform(-10, 10), self.rng.uniform(2.5, 30.),
                          self.rng.uniform(0.5, 2.6), self.rng.uniform(0, 2 * np.pi)])
            self.assertLess(np.abs(ricci(spec, x)).max(), 1e-5)

    def test_ricci_conformal_transformation_law(self):
        spec = make_metric_spec('conformal_bump', 4, dict(amplitude=0.2, width=0.8, center=[0.1, 0., -0.2, 0.3]))
        family = metric_family(spec)
        n = 4
        eta = np.diag([-1., 1., 1., 1.])
        for x in sample_points(spec, 10, self.rng, margin=0.4):
            f = family.conformal_exponent(x)
            df = family.conformal_gradient(x)
            offset = x - family.center
            hessian = f * (np.outer(offset, offset) / family.width ** 4 - np.eye(n) / family.width ** 2)
            box = np.einsum('ab,ab->', eta, hessian)
            norm = df @ eta @ df
            expected = -(n - 2) * (hessian - np.outer(df, df)) - (box + (n - 2) * norm) * eta
            np.testing.assert_allclose(ricci(spec, x), expected, atol=1e-5)

    def test_riemannian_companion(self):
        np.testing.assert_allclose(riemannian_companion(make_metric_spec('minkowski', 4), np.zeros(4)), np.eye(4))
        np.testing.assert_allclose(riemannian_companion(make_metric_spec('einstein_cylinder', 2,
                                                                         dict(radius=2.)), [0., 1.]),
                                   np.diag([1., 4.]))
        spec = make_metric_spec('conformal_bump', 3)
        family = metric_family(spec)
        for x in sample_points(spec, 10, self.rng):
            np.testing.assert_allclose(riemannian_companion(spec, x),
                                       np.exp(2 * family.conformal_exponent(x)) * np.eye(3), atol=1e-13)
        for spec in catalog_specs():
            for x in sample_points(spec, 50, self.rng):
                np.linalg.cholesky(riemannian_companion(spec, x))

    def test_causal_character(self):
        spec = make_metric_spec('minkowski', 4)
        base = np.zeros(4)
        self.assertEqual(causal_character(spec, TangentVector(base, [1., 0., 0., 0.])), (TIMELIKE, -1.))
        self.assertEqual(causal_character(spec, TangentVector(base, [1., 1., 0., 0.])), (NULL, 0.))
        self.assertEqual(causal_character(spec, TangentVector(base, [0., 1., 0., 0.])), (SPACELIKE, 1.))
        self.assertEqual(causal_character(spec, TangentVector(base, [1., 1. + 1e-11, 0., 0.])).kind, NULL)

    def test_causal_character_outside_the_chart(self):
        spec = make_metric_spec('minkowski', 3)
        with self.assertRaises(OutOfDomain):
            causal_character(spec, TangentVector([0., 6., 0.], [1., 1., 0.]))
        with self.assertRaises(OutOfDomain):
            causal_character(spec, TangentVector([0., np.nan, 0.], [1., 0., 0.]))
        with self.assertRaises(OutOfDomain):
            causal_character(spec, TangentVector([0., 0.], [1., 0., 0.]))

    def test_lorentz_frame_is_orthonormal(self):
        for spec in catalog_specs():
            for x in sample_points(spec, 10, self.rng):
                frame = lorentz_frame(spec, x)
                g = metric_family(spec).components(x)
                eta = np.eye(spec.dim)
                eta[0, 0] = -1.
                np.testing.assert_allclose(frame @ g @ frame.T, eta, atol=1e-12)
                self.assertGreater(frame[0, 0], 0)


class MetricSpecTestCase(unittest.TestCase):

    def test_defaults_and_round_trip(self):
        spec = make_metric_spec('conformal_bump', 3)
        self.assertEqual(spec.param('profile'), 'gaussian')
        self.assertEqual(spec.param('center'), (0., 0., 0.))
        self.assertEqual(metric_spec_from_dict(spec.to_dict()), spec)
        self.assertEqual(spec_hash(metric_spec_from_dict(spec.to_dict())), spec_hash(spec))
        self.assertNotEqual(spec_hash(spec), spec_hash(make_metric_spec('conformal_bump', 3, dict(amplitude=0.1))))

    def test_invalid_specs(self):
        with self.assertRaises(ValueError):
            make_metric_spec('kerr', 4)
        with self.assertRaises(ValueError):
            make_metric_spec('schwarzschild_like', 3)
        with self.assertRaises(ValueError):
            make_metric_spec('minkowski', 5)
        with self.assertRaises(ValueError):
            make_metric_spec('einstein_cylinder', 2, dict(radius=-1.))
        with self.assertRaises(ValueError):
            make_metric_spec('schwarzschild_like', 4, domain=[[0, 1], [1.5, 10], [0.1, 3], [0, 6.28]])
        with self.assertRaises(ValueError):
            make_metric_spec('minkowski', 2, domain=[[0, 1], [2, 1]])

    def test_family_cache(self):
        spec = make_metric_spec('schwarzschild_like', 4)
        self.assertIs(metric_family(spec), metric_family(make_metric_spec('schwarzschild_like', 4)))


def suite():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    suite.addTest(loader.loadTestsFromTestCase(MetricCatalogTestCase))
    suite.addTest(loader.loadTestsFromTestCase(MetricSpecTestCase))
    return suite


def run():
    runner = unittest.TextTestRunner(verbosity=2)
    runner.run(suite())


if __name__ == "__main__":
    run()
