import math
import unittest

import numpy as np

from master_op import (
    InsufficientResolution,
    InteriorFunction,
    a_constant,
    constant,
    get_test_function,
    monomial,
    psi_derivative,
    round_trip_constant,
    tricomi_inverse,
    xi_forward,
)
from models import FreudModel

GAUSSIAN = FreudModel(p=4.0, beta=1.0, alpha=0.0)
X = np.linspace(-0.95, 0.95, 21)


class TestTestFunctions(unittest.TestCase):
    def test_registry(self):
        """Test named test functions and unknown names"""
        self.assertAlmostEqual(float(get_test_function("x2")(0.5)), 0.25)
        self.assertAlmostEqual(float(get_test_function("cos").df(0.3)), -math.sin(0.3))
        with self.assertRaises(KeyError):
            get_test_function("tanh")

    def test_monomial_derivatives(self):
        """Test x^k derivatives"""
        f = monomial(3)
        self.assertAlmostEqual(float(f.df(2.0)), 12.0)
        self.assertAlmostEqual(float(f.d2f(2.0)), 12.0)
        self.assertAlmostEqual(float(f.d3f(2.0)), 6.0)
        self.assertEqual(float(monomial(1).d2f(0.7)), 0.0)

    def test_combinations(self):
        """Test scaling and sums keep derivatives consistent"""
        f = monomial(2).scaled(3.0).plus(constant(1.0))
        self.assertAlmostEqual(float(f(2.0)), 13.0)
        self.assertAlmostEqual(float(f.df(2.0)), 12.0)
        self.assertAlmostEqual(float(f.d2f(2.0)), 6.0)


class TestInteriorFunction(unittest.TestCase):
    def test_smooth_function_resolved(self):
        """Test a smooth function is resolved and differentiated spectrally"""
        psi = InteriorFunction.from_callable(np.cos, 33, label="cos")
        self.assertTrue(psi.resolved)
        np.testing.assert_allclose(psi(X), np.cos(X), atol=1e-12)
        np.testing.assert_allclose(psi_derivative(psi)(X), -np.sin(X), atol=1e-9)

    def test_scalar_evaluation(self):
        """Test scalar input returns a float"""
        psi = InteriorFunction.from_callable(np.exp, 33)
        self.assertIsInstance(psi(0.25), float)
        self.assertAlmostEqual(psi(0.25), math.exp(0.25), places=12)

    def test_rough_function_rejected(self):
        """Test differentiation refuses slowly decaying coefficients"""
        psi = InteriorFunction.from_callable(lambda x: np.sqrt(np.abs(x)), 33)
        self.assertFalse(psi.resolved)
        with self.assertRaises(InsufficientResolution):
            psi_derivative(psi)


class TestTricomiInverse(unittest.TestCase):
    def test_a_constant(self):
        """Test a = ∫ f dt/σ"""
        self.assertAlmostEqual(a_constant(get_test_function("x2")), math.pi / 2, places=12)
        self.assertAlmostEqual(a_constant(constant(1.0)), math.pi, places=12)
        self.assertAlmostEqual(a_constant(get_test_function("x")), 0.0, places=12)

    def test_gaussian_closed_forms(self):
        """Test ψ = −1/2 for f = x and ψ = −λ/2 for f = x² when r = 2"""
        psi_x = tricomi_inverse(GAUSSIAN, get_test_function("x"))
        np.testing.assert_allclose(psi_x(X), -0.5, atol=1e-12)
        psi_x2 = tricomi_inverse(GAUSSIAN, get_test_function("x2"))
        np.testing.assert_allclose(psi_x2(X), -0.5 * X, atol=1e-12)
        np.testing.assert_allclose(psi_derivative(psi_x2)(X), -0.5, atol=1e-9)

    def test_parity(self):
        """Test even f gives odd ψ and odd f gives even ψ"""
        model = FreudModel(p=3.0, beta=1.0, alpha=1.0)
        x = np.linspace(0.05, 0.95, 10)
        even = tricomi_inverse(model, get_test_function("x2"))
        np.testing.assert_allclose(even(-x), -even(x), atol=1e-10)
        odd = tricomi_inverse(model, get_test_function("x3"))
        np.testing.assert_allclose(odd(-x), odd(x), atol=1e-10)

    def test_resolution(self):
        """Test the inverse of a smooth f is resolved"""
        psi = tricomi_inverse(FreudModel(p=4.0, beta=1.0, alpha=1.0), get_test_function("cos"))
        self.assertTrue(psi.resolved)


class TestRoundTrip(unittest.TestCase):
    def test_xi_forward_constant(self):
        """Test Ξ[1] = −V′/2"""
        model = FreudModel(p=3.0, beta=1.0, alpha=0.5)
        values = xi_forward(model, constant(1.0))(X)
        np.testing.assert_allclose(values, -0.5 * model.potential_derivative(X), atol=1e-12)

    def test_round_trip_gaussian(self):
        """Test Ξ[Ξ⁻¹f] − f equals −a/π for the semicircle"""
        f = get_test_function("x2")
        mean, std = round_trip_constant(GAUSSIAN, f)
        self.assertAlmostEqual(mean, -a_constant(f) / math.pi, delta=1e-9)
        self.assertLess(std, 1e-9)

    def test_round_trip_freud(self):
        """Test the round-trip constant for Freud weights"""
        for p, tol in ((4.0, 1e-6), (2.5, 1e-5)):
            model = FreudModel(p=p, beta=1.0, alpha=1.0)
            for name in ("x", "x2", "cos"):
                f = get_test_function(name)
                mean, std = round_trip_constant(model, f)
                self.assertAlmostEqual(mean, -a_constant(f) / math.pi, delta=tol)
                self.assertLess(std, tol)


if __name__ == '__main__':
    unittest.main()
