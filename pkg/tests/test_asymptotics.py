import math
import unittest

import numpy as np
from scipy.special import gammaln

from asymptotics import (
    clt_mean_via_psi,
    clt_mean_via_r,
    clt_prediction,
    clt_variance,
    clt_variance_via_psi,
    expansion_log_partition,
    fg_minus1,
    free_energy_correction_via_means,
    free_energy_expansion,
    gaussian_expansion_log_partition,
    gaussian_moments,
    kls_asymptotic_bound,
    kls_limit_moments,
    kls_ratio_finite_N,
    kls_ratio_limit,
    kls_variance_bound,
    kls_variance_limit,
    log_partition_quadrature,
    schatten_expansion,
    schatten_log_volume,
    schatten_volume_coeffs,
)
from master_op import get_test_function
from models import FreudModel, KlsMoments
from special_fn import c_p, mehta_log_partition, schatten_dim


def log_unit_ball(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - float(gammaln(1.0 + 0.5 * d))


class TestCltVariance(unittest.TestCase):
    def test_linear_and_quadratic(self):
        """Test σ²(x) = 1/(2β) and σ²(x²) = 1/(4β)"""
        for beta in (1.0, 2.0, 4.0):
            self.assertAlmostEqual(clt_variance(get_test_function("x"), beta), 1.0 / (2.0 * beta), places=10)
            self.assertAlmostEqual(clt_variance(get_test_function("x2"), beta), 1.0 / (4.0 * beta), places=10)

    def test_scaling_in_beta(self):
        """Test σ² scales as 1/β"""
        f = get_test_function("cos")
        self.assertAlmostEqual(clt_variance(f, 1.0), 4.0 * clt_variance(f, 4.0), places=12)

    def test_dual_route(self):
        """Test the ψ-based variance against the universal kernel"""
        for p in (2.5, 4.0):
            model = FreudModel(p=p, beta=1.0, alpha=1.0)
            for name in ("x", "x2", "cos"):
                f = get_test_function(name)
                self.assertAlmostEqual(clt_variance_via_psi(model, f), clt_variance(f, 1.0), delta=1e-5)

    def test_dual_route_semicircle(self):
        """Test the ψ-based variance for the semicircle is exact"""
        model = FreudModel(p=4.0, beta=2.0, alpha=0.0)
        self.assertAlmostEqual(clt_variance_via_psi(model, get_test_function("x2")), 0.125, places=9)


class TestCltMean(unittest.TestCase):
    def test_vanishes_at_beta_two(self):
        """Test the mean correction vanishes at β = 2"""
        model = FreudModel(p=3.0, beta=2.0)
        self.assertEqual(clt_mean_via_psi(model, get_test_function("x2")), 0.0)

    def test_semicircle_quadratic(self):
        """Test m(x²) = 1/4 for the semicircle at β = 1"""
        model = FreudModel(p=4.0, beta=1.0, alpha=0.0)
        self.assertAlmostEqual(clt_mean_via_psi(model, get_test_function("x2")), 0.25, places=9)
        self.assertAlmostEqual(clt_mean_via_r(model, get_test_function("x2")), 0.25, places=6)

    def test_odd_functions(self):
        """Test odd test functions have zero mean"""
        model = FreudModel(p=3.0, beta=1.0)
        for name in ("x", "x3"):
            self.assertAlmostEqual(clt_mean_via_psi(model, get_test_function(name)), 0.0, delta=1e-10)

    def test_two_routes_agree(self):
        """Test the ψ and r routes give the same mean"""
        for p in (3.0, 4.0):
            model = FreudModel(p=p, beta=1.0, alpha=1.0)
            f = get_test_function("x2")
            self.assertAlmostEqual(clt_mean_via_psi(model, f), clt_mean_via_r(model, f), delta=1e-5)


class TestGaussianMoments(unittest.TestCase):
    def test_standard_normal(self):
        """Test moments of N(0, 1)"""
        self.assertEqual(gaussian_moments(0.0, 1.0, 4), [0.0, 1.0, 0.0, 3.0])

    def test_shifted(self):
        """Test moments of N(m, v)"""
        m, v = 0.3, 0.5
        moments = gaussian_moments(m, v, 4)
        self.assertAlmostEqual(moments[1], m * m + v)
        self.assertAlmostEqual(moments[2], m ** 3 + 3 * m * v)
        self.assertAlmostEqual(moments[3], m ** 4 + 6 * m * m * v + 3 * v * v)

    def test_validation(self):
        """Test negative variance and too many moments are rejected"""
        with self.assertRaises(ValueError):
            gaussian_moments(0.0, -1.0, 2)
        with self.assertRaises(ValueError):
            gaussian_moments(0.0, 1.0, 9)

    def test_prediction(self):
        """Test the bundled prediction"""
        prediction = clt_prediction(FreudModel(p=2.5, beta=2.0), get_test_function("x2"))
        self.assertAlmostEqual(prediction.mean, 0.0)
        self.assertAlmostEqual(prediction.variance, 0.125, places=10)
        self.assertEqual(len(prediction.moments), 4)


class TestFreeEnergy(unittest.TestCase):
    def test_gaussian_constants(self):
        """Test the leading term and F_G^{−1} at p = 2, β = 2"""
        expansion = free_energy_expansion(2.0, 2.0)
        self.assertAlmostEqual(expansion.leading, -0.721574, delta=1e-6)
        self.assertAlmostEqual(expansion.fg_minus1, 0.418939, delta=1e-6)
        self.assertAlmostEqual(expansion.f_minus1, expansion.fg_minus1, delta=1e-8)
        self.assertAlmostEqual(fg_minus1(2.0), 0.5 * math.log(2.0 * math.pi) - 0.5, places=12)

    def test_validation(self):
        """Test p < 2 is rejected"""
        with self.assertRaises(ValueError):
            free_energy_expansion(1.5, 2.0)

    def test_entropy_term_vanishes_at_beta_two(self):
        """Test F^{−1} = F_G^{−1} at β = 2"""
        expansion = free_energy_expansion(4.0, 2.0)
        self.assertEqual(expansion.f_minus1, expansion.fg_minus1)

    def test_mehta_against_expansion(self):
        """Test the Gaussian expansion remainder is o(N)"""
        for beta in (1.0, 2.0, 4.0):
            scaled = [
                abs(mehta_log_partition(N, beta) - gaussian_expansion_log_partition(N, beta)) / N
                for N in (100, 400)
            ]
            self.assertLess(scaled[0], 0.05)
            self.assertLess(scaled[1], 0.02)

    def test_expansion_matches_gaussian_form(self):
        """Test the general expansion reduces to the Gaussian one at p = 2"""
        expansion = free_energy_expansion(2.0, 1.0)
        for N in (10, 100):
            self.assertAlmostEqual(
                expansion_log_partition(expansion, N), gaussian_expansion_log_partition(N, 1.0), delta=1e-6 * N
            )

    def test_thermodynamic_route(self):
        """Test F^{−1} − F_G^{−1} through integrated CLT means"""
        expansion = free_energy_expansion(4.0, 1.0)
        correction = free_energy_correction_via_means(4.0, 1.0)
        self.assertAlmostEqual(correction, expansion.f_minus1 - expansion.fg_minus1, delta=1e-5)
        self.assertEqual(free_energy_correction_via_means(3.0, 2.0, alpha_order=5), 0.0)


class TestPartitionQuadrature(unittest.TestCase):
    def test_gaussian_small_N(self):
        """Test direct quadrature against the Mehta product"""
        for beta in (1.0, 2.0):
            for N in (1, 2):
                model = FreudModel(p=2.0, beta=beta, N=N)
                self.assertAlmostEqual(log_partition_quadrature(model), mehta_log_partition(N, beta), delta=1e-8)

    def test_single_particle_freud(self):
        """Test Z_1 = 2Γ(1+1/p)(βc_p/2)^{−1/p}"""
        p, beta = 3.0, 1.0
        expected = math.log(2.0) + float(gammaln(1.0 + 1.0 / p)) - math.log(beta * c_p(p) / 2.0) / p
        self.assertAlmostEqual(log_partition_quadrature(FreudModel(p=p, beta=beta, N=1)), expected, delta=1e-10)

    def test_too_many_particles(self):
        """Test N > 2 is rejected"""
        with self.assertRaises(ValueError):
            log_partition_quadrature(FreudModel(p=3.0, beta=1.0, N=3))


class TestSchatten(unittest.TestCase):
    def test_interval(self):
        """Test the one-dimensional ball has length 2"""
        self.assertAlmostEqual(schatten_log_volume(2.0, 1, 1, 0.5 * math.log(math.pi)), math.log(2.0), places=12)
        for p in (2.5, 3.0, 6.0):
            log_Z = log_partition_quadrature(FreudModel(p=p, beta=1.0, N=1))
            self.assertAlmostEqual(schatten_log_volume(p, 1, 1, log_Z), math.log(2.0), delta=1e-10)

    def test_hilbert_schmidt_ball(self):
        """Test S_2 balls are Euclidean unit balls of dimension d_N"""
        for beta in (1, 2, 4):
            for N in (2, 3, 5):
                volume = schatten_log_volume(2.0, beta, N, mehta_log_partition(N, float(beta)))
                self.assertAlmostEqual(volume, log_unit_ball(schatten_dim(N, beta)), delta=1e-9)

    def test_coefficients_gaussian(self):
        """Test the volume coefficients at p = 2, β = 2"""
        coeffs = schatten_volume_coeffs(2.0, 2)
        self.assertAlmostEqual(coeffs.a, -1.0, places=14)
        self.assertAlmostEqual(coeffs.b, 0.5 * math.log(2.0 * math.pi) + 0.5, places=12)
        self.assertAlmostEqual(coeffs.c, 0.0, places=14)
        self.assertAlmostEqual(coeffs.d, 0.0, delta=1e-7)

    def test_expansion_remainder(self):
        """Test the volume expansion remainder is o(N) for Hilbert–Schmidt balls"""
        for beta in (1, 2, 4):
            coeffs = schatten_volume_coeffs(2.0, beta)
            scaled = [
                abs(log_unit_ball(schatten_dim(N, beta)) - schatten_expansion(coeffs, N)) / N
                for N in (200, 2000)
            ]
            self.assertLess(scaled[0], 0.05)
            self.assertLess(scaled[1], 0.01)

    def test_monte_carlo_volume(self):
        """Test 2x2 Hermitian S_p ball volumes by uniform sampling in Hilbert–Schmidt coordinates"""
        rng = np.random.default_rng(2024)
        n = 400_000
        half = np.array([1.0, 1.0, 1.5, 1.5])
        u = rng.uniform(-half, half, size=(n, 4))
        a, d = u[:, 0], u[:, 1]
        off = np.sqrt(0.5 * (u[:, 2] ** 2 + u[:, 3] ** 2))
        center, radius = 0.5 * (a + d), np.sqrt((0.5 * (a - d)) ** 2 + off ** 2)
        box = float(np.prod(2.0 * half))
        for p, log_Z in ((2.0, mehta_log_partition(2, 2.0)),
                         (4.0, log_partition_quadrature(FreudModel(p=4.0, beta=2.0, N=2)))):
            with self.subTest(p=p):
                inside = np.abs(center + radius) ** p + np.abs(center - radius) ** p <= 1.0
                fraction = float(np.mean(inside))
                estimate = box * fraction
                se = box * math.sqrt(fraction * (1.0 - fraction) / n)
                exact = math.exp(schatten_log_volume(p, 2, 2, log_Z))
                self.assertLessEqual(abs(estimate - exact), 4.0 * se)
        self.assertAlmostEqual(math.exp(schatten_log_volume(2.0, 2, 2, mehta_log_partition(2, 2.0))),
                               math.pi ** 2 / 2.0, delta=1e-9)

    def test_validation(self):
        """Test p < 2 is rejected"""
        with self.assertRaises(ValueError):
            schatten_volume_coeffs(1.5, 2)


class TestKls(unittest.TestCase):
    def test_asymptotic_bound(self):
        """Test the asymptotic bound and its domain"""
        self.assertAlmostEqual(kls_asymptotic_bound(4.0, 2), 2.25, places=14)
        self.assertAlmostEqual(kls_asymptotic_bound(2.0, 2), 4.0, places=14)
        with self.assertRaises(ValueError):
            kls_asymptotic_bound(4.0, 3)
        with self.assertRaises(ValueError):
            kls_asymptotic_bound(1.5, 2)

    def test_variance_limits(self):
        """Test the limiting variance and its bound for Tr X²"""
        self.assertAlmostEqual(kls_variance_bound(4.0, 2, 1), 1.0, places=14)
        for beta in (1.0, 2.0):
            self.assertAlmostEqual(kls_variance_limit(4.0, beta, 2, 1), 0.125, places=10)

    def test_ratio_limits(self):
        """Test the limit ratio at p = 2 and p = 4"""
        self.assertAlmostEqual(kls_ratio_limit(2.0, 2.0, 2, 1), 0.0, delta=1e-10)
        self.assertAlmostEqual(kls_ratio_limit(4.0, 2.0, 2, 1), 1.0 / 32.0, delta=1e-10)

    def test_limit_below_bound(self):
        """Test the limit stays below the asymptotic bound"""
        for p in (2.0, 2.5, 3.0, 4.0, 6.0):
            for r in (2, 4):
                self.assertLessEqual(kls_ratio_limit(p, 1.0, r, 1), kls_asymptotic_bound(p, r))

    def test_finite_N_approaches_limit(self):
        """Test the finite-N ratio with limiting moments approaches the limit"""
        p, beta, r, q, N = 4.0, 2, 2, 1, 1000
        limit = kls_limit_moments(p, r, q)
        d = schatten_dim(N, beta)
        moments = KlsMoments(
            G_r2q=limit.G_rq ** 2 + kls_variance_limit(p, beta, r, q) / d,
            G_rq=limit.G_rq,
            G_21=limit.G_21,
            E_mixed=limit.E_mixed,
        )
        result = kls_ratio_finite_N(moments, p, beta, r, q, N)
        self.assertAlmostEqual(result.ratio, kls_ratio_limit(p, float(beta), r, q), delta=1e-4)
        self.assertEqual(result.std_error, 0.0)

    def test_cancellation_flag(self):
        """Test the numerator cancellation flag and delta-method error"""
        moments = KlsMoments(G_r2q=0.25, G_rq=0.5, G_21=0.25, E_mixed=0.25, se_G_r2q=0.01, se_G_rq=0.01)
        result = kls_ratio_finite_N(moments, 4.0, 2, 2, 1, 50)
        self.assertTrue(result.cancellation)
        self.assertGreater(result.std_error, 0.0)

    def test_bootstrap(self):
        """Test bootstrap error from per-sample features"""
        rng = np.random.default_rng(11)
        base = np.array([1.0 / 9.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
        samples = base + 1e-3 * rng.normal(size=(200, 4))
        means = samples.mean(axis=0)
        moments = KlsMoments(G_r2q=means[0], G_rq=means[1], G_21=means[2], E_mixed=means[3])
        result = kls_ratio_finite_N(moments, 4.0, 2, 2, 1, 10, samples=samples, bootstrap=50, seed=3)
        self.assertIsNotNone(result.bootstrap_std_error)
        self.assertGreater(result.bootstrap_std_error, 0.0)


if __name__ == '__main__':
    unittest.main()
