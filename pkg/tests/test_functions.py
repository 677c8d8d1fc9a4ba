import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from flowlab.functions import (
    ClippedPolynomial,
    Constant,
    Exponential,
    GaussianBump,
    HeatTranslationPotential,
    PiecewiseLinear,
    ShiftMixture,
    Sinusoid,
    TranslationResolvent,
    default_fleet,
)


class TestFleet:
    @pytest.mark.parametrize("f", default_fleet(), ids=lambda f: f.name)
    def test_bounded_with_bounded_gradient(self, f):
        x = np.linspace(-15, 15, 3001)
        assert np.all(np.isfinite(f(x)))
        assert np.abs(f(x)).max() <= f.sup_norm() + 1e-12
        assert np.abs(f.d1(x)).max() < 1e3

    @pytest.mark.parametrize("f", [GaussianBump(0.3, 0.7, 2.0), ClippedPolynomial([0, 0.5, -0.2, 0.03], 4), Sinusoid(1.3, 0.2)], ids=str)
    def test_closed_form_derivatives(self, f):
        x = np.linspace(-3, 3, 13)
        h = 1e-6
        np.testing.assert_allclose(f.d1(x), (f(x + h) - f(x - h)) / (2 * h), atol=1e-6)

    def test_bump_heat_is_gaussian_smoothing(self):
        b = GaussianBump(0.5, 0.8, 1.5)
        s = 0.6
        ref = quad(lambda z: b(np.array(1.2 + math.sqrt(s) * z)) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -12, 12)[0]
        assert float(b.heat(s)(1.2)) == pytest.approx(ref, abs=1e-10)

    def test_clipped_polynomial_constant_outside(self):
        p = ClippedPolynomial([0.0, 0.0, 1.0], 2.0)
        assert float(p(5.0)) == float(p(2.0)) == 4.0

    def test_piecewise_linear(self):
        f = PiecewiseLinear([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(f(np.array([-1.0, 0.5, 1.5, 3.0])), [0.0, 0.5, 0.5, 0.0])

    def test_arithmetic(self):
        f, g = Sinusoid(), Exponential(1.0)
        x = np.linspace(0, 2, 5)
        np.testing.assert_allclose((2 * f + g - 1)(x), 2 * np.sin(x) + np.exp(-x) - 1)
        np.testing.assert_allclose((f**2).d1(x), 2 * np.sin(x) * np.cos(x), atol=1e-12)
        np.testing.assert_allclose(Constant(3.0)(x), 3.0)


class TestPotentials:
    @pytest.mark.parametrize("beta, v", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
    def test_translation_resolvent(self, beta, v):
        b = GaussianBump(0.4, 0.6, 1.3)
        g = TranslationResolvent(b, beta, v)
        for x in (-2.0, 0.0, 0.7, 3.0):
            ref = quad(lambda s: math.exp(-beta * s) * float(b(np.array(x + v * s))), 0, np.inf)[0]
            assert float(g(x)) == pytest.approx(ref, abs=1e-10)

    def test_translation_resolvent_derivative_relation(self):
        b = GaussianBump(0.0, 0.5)
        g = TranslationResolvent(b, 1.5, 0.8)
        x = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(0.8 * g.d1(x), 1.5 * g(x) - b(x), atol=1e-13)
        h = 1e-5
        np.testing.assert_allclose(g.d2(x), (g.d1(x + h) - g.d1(x - h)) / (2 * h), atol=1e-6)

    def test_translation_resolvent_far_tail_finite(self):
        g = TranslationResolvent(GaussianBump(0.0, 0.1), 1.0)
        vals = g(np.array([-500.0, -50.0, 50.0, 500.0]))
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0)

    def test_heat_translation_potential(self):
        b = GaussianBump(0.0, 1.0)
        u = HeatTranslationPotential(b, 1.0, 1.0)
        x = 0.3

        def integrand(s, t):
            return math.exp(-t - s) * float(b.heat(t)(np.array(x + s)))

        ref = dblquad(integrand, 0, 40, 0, 40)[0]
        assert float(u(x)) == pytest.approx(ref, abs=1e-8)

    def test_shift_mixture(self):
        m = ShiftMixture(Sinusoid(), [0.0, 1.0], [0.5, 0.25])
        x = np.linspace(-1, 1, 5)
        np.testing.assert_allclose(m(x), 0.5 * np.sin(x) + 0.25 * np.sin(x + 1))
        np.testing.assert_allclose(m.d1(x), 0.5 * np.cos(x) + 0.25 * np.cos(x + 1))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.2, 3.0))
    def test_resolvent_bounded_by_sup(self, x, beta):
        g = TranslationResolvent(GaussianBump(0.0, 1.0), beta)
        assert 0.0 <= float(g(x)) <= 1.0 / beta + 1e-12
