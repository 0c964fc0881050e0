import math
import os
import unittest

import numpy as np

from harness import (
    MIN_SAMPLES,
    decide_interval,
    decide_upper_bound,
    decide_verdict,
    jackknife,
    kls_moments_quadrature,
    loop_identity_quadrature,
    make_blocks,
    replica_configs,
    run_clt_experiment,
    run_equilibrium_convergence,
    run_kls_experiment,
    run_local_law_experiment,
    run_local_law_y_scan,
    run_loop_equation_experiment,
    run_replicas,
    run_sampler_cross_validation,
    run_thermo_integration,
    _fit_slope,
)
from master_op import get_test_function
from models import Criteria, ExperimentReport, FreudModel, SamplerMethod, Verdict

SLOW = os.getenv("FREUDGAS_SLOW_TESTS")


class TestVerdicts(unittest.TestCase):
    def test_pass_within_error(self):
        """Test pass when the gap fits in k standard errors"""
        self.assertEqual(decide_verdict(1.0, 0.1, 1.2, Criteria(k=3.0)), Verdict.PASS)

    def test_pass_within_tolerance(self):
        """Test pass when the gap fits in the absolute tolerance"""
        self.assertEqual(decide_verdict(1.0, 0.0, 1.04, Criteria(abs_tolerance=0.05)), Verdict.PASS)
        self.assertEqual(decide_verdict(1.0, 0.0, 1.04, Criteria(rel_tolerance=0.05)), Verdict.PASS)

    def test_fail(self):
        """Test fail on a clear discrepancy with enough samples"""
        self.assertEqual(decide_verdict(2.0, 0.01, 1.0, Criteria(k=3.0), n_samples=500), Verdict.FAIL)

    def test_inconclusive(self):
        """Test inconclusive for few samples, overlapping tolerance or non-finite estimates"""
        self.assertEqual(decide_verdict(2.0, 0.01, 1.0, Criteria(k=3.0), n_samples=10), Verdict.INCONCLUSIVE)
        criteria = Criteria(k=3.0, abs_tolerance=0.5)
        self.assertEqual(decide_verdict(2.0, 0.3, 1.0, criteria, n_samples=500), Verdict.INCONCLUSIVE)
        self.assertEqual(decide_verdict(math.nan, 0.1, 1.0, Criteria()), Verdict.INCONCLUSIVE)

    def test_upper_bound(self):
        """Test one-sided bound verdicts"""
        self.assertEqual(decide_upper_bound(1.0, 0.1, 2.0), Verdict.PASS)
        self.assertEqual(decide_upper_bound(3.0, 0.1, 2.0), Verdict.FAIL)
        self.assertEqual(decide_upper_bound(1.9, 0.1, 2.0), Verdict.INCONCLUSIVE)

    def test_interval(self):
        """Test interval verdicts"""
        self.assertEqual(decide_interval(-1.0, 0.1, -1.25, -0.75), Verdict.PASS)
        self.assertEqual(decide_interval(-2.0, 0.1, -1.25, -0.75), Verdict.FAIL)
        self.assertEqual(decide_interval(-1.3, 0.1, -1.25, -0.75), Verdict.INCONCLUSIVE)

    def test_overall(self):
        """Test report aggregation"""
        report = ExperimentReport(name="demo", verdicts={"a": Verdict.PASS, "b": Verdict.PASS})
        self.assertEqual(report.overall(), Verdict.PASS)
        report.verdicts["c"] = Verdict.INCONCLUSIVE
        self.assertEqual(report.overall(), Verdict.INCONCLUSIVE)
        report.verdicts["d"] = Verdict.FAIL
        self.assertEqual(report.overall(), Verdict.FAIL)
        self.assertEqual(ExperimentReport(name="empty").overall(), Verdict.INCONCLUSIVE)


class TestStatistics(unittest.TestCase):
    def test_blocks_per_chain(self):
        """Test one block per chain when there are enough chains"""
        chains = [np.ones(5) * k for k in range(12)]
        self.assertEqual(len(make_blocks(chains)), 12)

    def test_blocks_batched(self):
        """Test contiguous batches when chains are few"""
        blocks = make_blocks([np.arange(100.0), np.arange(100.0), np.arange(100.0)])
        self.assertEqual(len(blocks), 20)
        self.assertEqual(sum(len(b) for b in blocks), 300)

    def test_jackknife_mean(self):
        """Test the jackknife error of a mean over equal blocks"""
        rng = np.random.default_rng(4)
        blocks = [rng.normal(size=50) for _ in range(16)]
        value, se = jackknife(blocks, lambda means: means[0])
        block_means = np.array([b.mean() for b in blocks])
        self.assertAlmostEqual(value, float(np.concatenate(blocks).mean()), places=12)
        self.assertAlmostEqual(se, float(np.std(block_means, ddof=1) / math.sqrt(16)), places=12)

    def test_jackknife_single_block(self):
        """Test a single block has no error estimate"""
        value, se = jackknife([np.arange(4.0)], lambda means: means[0])
        self.assertEqual(value, 1.5)
        self.assertTrue(math.isnan(se))

    def test_jackknife_nonlinear(self):
        """Test the jackknife of a variance is close to the sample variance"""
        rng = np.random.default_rng(8)
        samples = rng.normal(0.0, 2.0, size=4000)
        blocks = [np.column_stack([b, b ** 2]) for b in np.array_split(samples, 20)]
        value, se = jackknife(blocks, lambda means: means[1] - means[0] ** 2)
        self.assertAlmostEqual(value, float(np.var(samples)), places=10)
        self.assertLess(se, 0.5)

    def test_fit_slope(self):
        """Test the log-log slope of an exact power law"""
        N_list = [64, 128, 256, 512]
        values = [3.0 / N for N in N_list]
        errors = [0.01 * v for v in values]
        slope, se = _fit_slope(N_list, values, errors)
        self.assertAlmostEqual(slope, -1.0, places=10)
        self.assertTrue(se >= 0.0)


class TestReplicaFarm(unittest.TestCase):
    def test_replica_configs(self):
        """Test replica seeds and burn-in"""
        model = FreudModel(p=3.0, beta=1.0, N=4)
        configs = replica_configs(model, 5, seed=1, sweeps=500)
        self.assertEqual(len({c.seed for c in configs}), 5)
        self.assertTrue(all(c.burn_in == 100 and c.sweeps == 500 for c in configs))

    def test_run_replicas_reproducible(self):
        """Test inline replicas keep order and reproduce"""
        configs = replica_configs(FreudModel(p=2.0, beta=2.0, N=4), 3, seed=9, sweeps=200)
        first = run_replicas(configs, threads=1)
        second = run_replicas(configs, threads=1)
        self.assertEqual([c.seed for c in first], [c.seed for c in configs])
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.samples, b.samples)


class TestLoopEquation(unittest.TestCase):
    def test_single_particle_identity(self):
        """Test the loop bracket has zero expectation at N = 1"""
        for p, beta in ((3.0, 1.0), (2.5, 2.0), (4.0, 4.0)):
            model = FreudModel(p=p, beta=beta, N=1)
            for z in (0.3 + 0.2j, -0.7 + 0.5j):
                self.assertLess(abs(loop_identity_quadrature(model, z)), 1e-8)

    def test_quadrature_requires_single_particle(self):
        """Test the quadrature oracle only handles N = 1"""
        with self.assertRaises(ValueError):
            loop_identity_quadrature(FreudModel(p=3.0, beta=1.0, N=2), 0.3 + 0.2j)

    def test_gaussian_monte_carlo(self):
        """Test the Monte Carlo loop bracket is centered for the exact sampler"""
        model = FreudModel(p=2.0, beta=2.0, N=8)
        report = run_loop_equation_experiment(model, [0.5 + 0.5j], replicas=40, seed=3, sweeps=500, threads=1)
        for part in ("re", "im"):
            estimate = report.estimates[f"loop_{part}[z=0.5+0.5i]"]
            self.assertEqual(estimate.n_samples, 1600)
            self.assertLessEqual(abs(estimate.value), 5.0 * estimate.std_error)
        self.assertEqual(len(report.rows), 2)

    def test_single_particle_oracle_in_report(self):
        """Test the N = 1 report carries the quadrature oracle"""
        model = FreudModel(p=2.0, beta=1.0, N=1)
        report = run_loop_equation_experiment(model, [0.2 + 0.3j], replicas=10, seed=5, sweeps=300, threads=1)
        self.assertEqual(report.verdicts["loop_quadrature[z=0.2+0.3i]"], Verdict.PASS)
        self.assertNotIn("loop_quadrature[z=0.2+0.3i]", report.estimates)
        self.assertLess(report.theory["loop_quadrature[z=0.2+0.3i]"], 1e-8)

    def test_freud_monte_carlo(self):
        """Test the loop bracket is centered for Metropolis chains away from p = 2"""
        for p, beta, seed in ((2.5, 1.0, 13), (3.0, 2.0, 17)):
            with self.subTest(p=p, beta=beta):
                model = FreudModel(p=p, beta=beta, N=8)
                report = run_loop_equation_experiment(model, [0.5 + 0.5j], replicas=40, seed=seed, sweeps=1000,
                                                      threads=1)
                self.assertEqual(report.estimates["loop_re[z=0.5+0.5i]"].n_samples, 3200)
                self.assertEqual(report.verdicts["loop_re[z=0.5+0.5i]"], Verdict.PASS)
                self.assertEqual(report.verdicts["loop_im[z=0.5+0.5i]"], Verdict.PASS)

    def test_real_z_rejected(self):
        """Test real z is rejected"""
        with self.assertRaises(ValueError):
            run_loop_equation_experiment(FreudModel(p=2.0, beta=2.0, N=4), [0.5], replicas=2)


class TestClt(unittest.TestCase):
    def test_gaussian_clt(self):
        """Test the CLT experiment on the exact Gaussian sampler"""
        model = FreudModel(p=2.0, beta=2.0, N=16)
        report = run_clt_experiment(model, get_test_function("x2"), replicas=20, seed=11, sweeps=500, threads=1)
        self.assertEqual(set(report.verdicts), {"M1", "M2", "M3", "M4", "variance"})
        self.assertAlmostEqual(report.theory["variance"], 0.125, places=10)
        estimate = report.estimates["variance"]
        self.assertLessEqual(abs(estimate.value - 0.125), 5.0 * estimate.std_error)
        self.assertTrue(any("500" in note for note in report.notes))

    def test_moment_count_validation(self):
        """Test K_moments is limited to four"""
        with self.assertRaises(ValueError):
            run_clt_experiment(FreudModel(p=2.0, beta=2.0, N=4), get_test_function("x"), replicas=2, K_moments=5)


class TestLocalLaw(unittest.TestCase):
    def test_validation(self):
        """Test points below the axis and large q are rejected"""
        model = FreudModel(p=3.0, beta=1.0)
        with self.assertRaises(ValueError):
            run_local_law_experiment(model, z_points=[0.3 - 0.1j], N_list=[8], replicas=2)
        with self.assertRaises(ValueError):
            run_local_law_experiment(model, z_points=[0.3 + 0.1j], q_list=(3,), N_list=[8], replicas=2)

    def test_gaussian_rows(self):
        """Test local-law rows and slope keys"""
        model = FreudModel(p=2.0, beta=2.0)
        report = run_local_law_experiment(model, z_points=[0.3 + 0.1j], q_list=(1, 2), N_list=[16, 32, 64],
                                          replicas=10, seed=2, sweeps=300, threads=1)
        self.assertEqual(len(report.rows), 6)
        self.assertIn("slope[q=1,z=0.3+0.1i]", report.verdicts)
        self.assertAlmostEqual(report.rows[0].theory_bound, 1.0 / (16 * 0.1), places=12)


class TestKlsQuadrature(unittest.TestCase):
    def test_gaussian_two_particles(self):
        """Test exact N = 2 moments for the Gaussian unitary case"""
        moments = kls_moments_quadrature(2.0, 2, 2, 1)
        self.assertAlmostEqual(moments.G_21, 0.25, delta=1e-7)
        self.assertAlmostEqual(moments.G_rq, 0.25, delta=1e-7)
        self.assertAlmostEqual(moments.G_r2q, 0.09375, delta=1e-7)
        self.assertAlmostEqual(moments.E_mixed, 0.25, delta=1e-7)


class TestCrossValidation(unittest.TestCase):
    def test_small_run_never_fails(self):
        """Test the cross-validation verdicts with few replicas"""
        report = run_sampler_cross_validation(N=4, beta=2.0, replicas=30, seed=4, sweeps=300, threads=1)
        self.assertEqual(set(report.verdicts), {"trace_x2", "lambda_max"})
        self.assertNotIn(Verdict.FAIL, report.verdicts.values())


class TestEquilibriumConvergence(unittest.TestCase):
    def test_small_run(self):
        """Test KS distances are recorded per N"""
        model = FreudModel(p=2.0, beta=2.0)
        report = run_equilibrium_convergence(model, [16, 32], replicas=10, seed=6, sweeps=300, threads=1)
        for N in (16, 32):
            self.assertTrue(0.0 <= report.estimates[f"ks[N={N}]"].value <= 1.0)
        self.assertIn("monotone", report.verdicts)
        self.assertIn("ks_rate[N=16->32]", report.estimates)
        self.assertIn("ks_alpha0[N=16]", report.verdicts)
        self.assertEqual(report.theory["ks_alpha0[N=16]"], 0.02)
        for key, estimate in report.estimates.items():
            self.assertGreaterEqual(estimate.n_samples, MIN_SAMPLES, key)

    def test_no_gaussian_comparison_at_alpha_zero(self):
        """Test the α = 0 comparison only runs for p = 2 and α > 0"""
        model = FreudModel(p=2.0, beta=2.0, alpha=0.0)
        report = run_equilibrium_convergence(model, [8], replicas=10, seed=6, sweeps=300, threads=1)
        self.assertFalse(any(key.startswith("ks_alpha0") for key in report.estimates))

    def test_y_scan_sample_counts(self):
        """Test the spread carries the sample count of the scan"""
        model = FreudModel(p=2.0, beta=2.0, N=16)
        report = run_local_law_y_scan(model, 0.3, [0.05, 0.1, 0.2], replicas=10, seed=8, sweeps=300, threads=1)
        self.assertEqual(report.estimates["spread"].n_samples, 240)
        for key, estimate in report.estimates.items():
            self.assertGreaterEqual(estimate.n_samples, MIN_SAMPLES, key)
        self.assertIn(report.verdicts["spread"], (Verdict.PASS, Verdict.INCONCLUSIVE))


class TestThermoIntegration(unittest.TestCase):
    def test_alpha_order_validation(self):
        """Test at least nine α nodes are required"""
        with self.assertRaises(ValueError):
            run_thermo_integration(3.0, 1.0, [8], replicas=2, alpha_order=5)

    def test_gaussian_alpha_integral(self):
        """Test the α integral is zero with a verdict at p = 2"""
        report = run_thermo_integration(2.0, 2.0, [8, 16], replicas=10, alpha_order=9, seed=1, sweeps=200, threads=1)
        for N in (8, 16):
            key = f"alpha_integral[N={N}]"
            self.assertAlmostEqual(report.estimates[key].value, 0.0, delta=1e-12)
            self.assertEqual(report.estimates[key].n_samples, 160)
            self.assertEqual(report.verdicts[key], Verdict.PASS)
            self.assertEqual(report.estimates[f"leading[N={N}]"].n_samples, 160)


@unittest.skipUnless(SLOW, "FREUDGAS_SLOW_TESTS no definido")
class TestSlowExperiments(unittest.TestCase):
    def test_clt_freud(self):
        """Test the CLT mean and variance away from the Gaussian case"""
        for beta in (1.0, 2.0):
            with self.subTest(beta=beta):
                model = FreudModel(p=2.5, beta=beta, N=64)
                report = run_clt_experiment(model, get_test_function("x2"), replicas=200, seed=21, sweeps=2000)
                self.assertEqual(report.verdicts["M1"], Verdict.PASS)
                self.assertEqual(report.verdicts["variance"], Verdict.PASS)

    def test_local_law_slope(self):
        """Test the local-law slope is close to -1"""
        model = FreudModel(p=4.0, beta=2.0, alpha=0.0)
        report = run_local_law_experiment(model, z_points=[0.3 + 0.1j], N_list=[64, 128, 256, 512], replicas=100,
                                          seed=9, sweeps=1000)
        self.assertEqual(report.verdicts["slope[q=1,z=0.3+0.1i]"], Verdict.PASS)

    def test_thermo_integration_leading(self):
        """Test the leading free-energy term through the α integral"""
        for p in (3.0, 4.0):
            with self.subTest(p=p):
                report = run_thermo_integration(p, 2.0, [32], replicas=16, alpha_order=9, seed=5, sweeps=1200)
                self.assertEqual(report.verdicts["leading[N=32]"], Verdict.PASS)

    def test_kls_constant_p4(self):
        """Test the p = 4 KLS ratio against the constant, the bound and the limit"""
        report = run_kls_experiment(4.0, 2, 2, 1, N=32, replicas=100, seed=1, sweeps=2000)
        for key in ("constant", "asymptotic_bound", "limit"):
            self.assertEqual(report.verdicts[key], Verdict.PASS, key)

    def test_metropolis_matches_tridiagonal(self):
        """Test Metropolis against the exact sampler with many replicas"""
        report = run_sampler_cross_validation(N=16, beta=1.0, replicas=300, seed=7, sweeps=3000)
        self.assertEqual(report.verdicts["trace_x2"], Verdict.PASS)
        self.assertEqual(report.verdicts["lambda_max"], Verdict.PASS)

    def test_alpha_chain_matches_gaussian(self):
        """Test the α = 1 Metropolis chain reproduces the α = 0 sampler at p = 2"""
        model = FreudModel(p=2.0, beta=2.0, alpha=1.0)
        report = run_equilibrium_convergence(model, [16], replicas=100, seed=12, sweeps=2000)
        self.assertEqual(report.verdicts["ks_alpha0[N=16]"], Verdict.PASS)


if __name__ == '__main__':
    unittest.main()
