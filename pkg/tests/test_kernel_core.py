import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlab.kernel_core import (
    ConeBudgetError,
    GeneratorMatrix,
    Kernel,
    NotDeterministicError,
    PreconditionError,
    check_excessive,
    check_multiplicative,
    excessive_regularization,
    extract_flow_map,
    laplace_quadrature,
    potential_integral,
    random_generator,
    ray_cone,
    resolvent,
    row_indicator,
    semigroup_at,
)

Q2 = np.array([[-1.0, 1.0], [1.0, -1.0]])


class TestTypes:
    def test_generator_rejects_negative_rates(self):
        with pytest.raises(ValueError):
            GeneratorMatrix(np.array([[-1.0, -0.5], [0.0, 0.0]]))

    def test_generator_rejects_positive_row_sum(self):
        with pytest.raises(ValueError):
            GeneratorMatrix(np.array([[-1.0, 2.0], [0.0, 0.0]]))

    def test_generator_json_round_trip(self):
        q = GeneratorMatrix(Q2)
        np.testing.assert_array_equal(GeneratorMatrix.from_json(q.to_json()).q, Q2)
        assert json.loads(q.to_json()) == Q2.tolist()

    def test_kernel_rejects_row_sum_above_one(self):
        with pytest.raises(ValueError):
            Kernel(np.array([[0.7, 0.7], [0.0, 1.0]]))

    def test_markovian_flag(self):
        assert Kernel(np.eye(2)).is_markovian
        assert not Kernel(np.diag([1.0, 0.5])).is_markovian


class TestSemigroup:
    def test_zero_generator_is_identity(self):
        np.testing.assert_array_equal(semigroup_at(np.zeros((2, 2)), 5.0).p, np.eye(2))

    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 4.0])
    def test_two_state_closed_form(self, t):
        e = math.exp(-2 * t)
        expected = 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])
        np.testing.assert_allclose(semigroup_at(Q2, t).p, expected, atol=1e-14)

    def test_killing_row_mass(self):
        p = semigroup_at(np.array([[-1.0, 0.0], [0.0, 0.0]]), 1.0)
        assert p.p[0].sum() == pytest.approx(math.exp(-1), abs=1e-14)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            semigroup_at(Q2, -0.1)

    def test_semigroup_law_random(self, rng):
        for _ in range(20):
            q = random_generator(rng, int(rng.integers(2, 9)))
            for t in (0.1, 0.7, 2.0):
                for s in (0.1, 0.7, 2.0):
                    lhs = semigroup_at(q, t + s).p
                    rhs = semigroup_at(q, t).p @ semigroup_at(q, s).p
                    assert np.abs(lhs - rhs).max() <= 1e-10


class TestResolvent:
    def test_frozen_motion(self):
        np.testing.assert_allclose(resolvent(np.zeros((2, 2)), 2.0), 0.5 * np.eye(2))

    def test_two_state(self):
        np.testing.assert_allclose(resolvent(Q2, 1.0), np.array([[2.0, 1.0], [1.0, 2.0]]) / 3, atol=1e-15)

    def test_resolvent_equation(self, rng):
        q = random_generator(rng, 6)
        u1, u3 = resolvent(q, 1.0), resolvent(q, 3.0)
        assert np.abs(u1 - u3 - 2.0 * u1 @ u3).max() <= 1e-10

    def test_alpha_times_resolvent_sub_markovian(self, rng):
        q = random_generator(rng, 5)
        p = 2.5 * resolvent(q, 2.5)
        assert p.min() >= -1e-15 and p.sum(axis=1).max() <= 1 + 1e-12

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(ValueError):
            resolvent(Q2, 0.0)

    def test_laplace_consistency(self, rng):
        qs = [random_generator(rng, int(rng.integers(2, 9))) for _ in range(5)]
        alphas = [0.7, 1.0, 2.0, 3.0, 0.5]
        for q, a, quad in zip(qs, alphas, laplace_quadrature(qs, alphas)):
            assert np.abs(quad - resolvent(q, a)).max() <= 1e-6

    def test_potential_integral_identity(self, rng):
        q = random_generator(rng, 5)
        f = rng.uniform(-1, 1, 5)
        lhs = q.q @ potential_integral(q, f, 1.3)
        np.testing.assert_allclose(lhs, semigroup_at(q, 1.3).p @ f - f, atol=1e-12)


class TestExcessive:
    def test_constant_one_markovian(self):
        assert check_excessive(Q2, np.ones(2)).verdict

    def test_potential_of_positive_function(self, rng):
        q = random_generator(rng, 5)
        u = resolvent(q, 1.5) @ rng.uniform(0, 1, 5)
        assert check_excessive(q, u, beta=1.5).verdict

    def test_indicator_not_excessive(self):
        rep = check_excessive(Q2, np.array([1.0, 0.0]))
        assert not rep.verdict
        assert rep.residual > 0

    def test_squared_excessive_for_deterministic_family(self):
        # frozen motion is deterministic for every t; v^2 stays 2 beta excessive
        q = np.zeros((3, 3))
        v = np.array([0.2, 1.0, 3.0])
        assert check_excessive(q, v, 1.0).verdict
        assert check_excessive(q, v * v, 2.0).verdict


class TestRegularization:
    def test_excessive_fixed(self):
        q = Q2
        w = np.ones(2)
        grid = np.logspace(-1, 6, 30)
        np.testing.assert_allclose(excessive_regularization(q, w, 0.0, grid), w, atol=1e-6)

    def test_zero(self):
        np.testing.assert_array_equal(excessive_regularization(Q2, np.zeros(2), 1.0, [1, 10]), np.zeros(2))

    def test_markovian_beta_one_limit(self):
        for a_max in (10.0, 1e3, 1e6):
            w_hat = excessive_regularization(Q2, np.ones(2), 1.0, [1.0, a_max])
            np.testing.assert_allclose(w_hat, a_max / (1 + a_max) * np.ones(2), atol=1e-12)

    def test_non_supermedian_rejected(self):
        with pytest.raises(PreconditionError):
            excessive_regularization(Q2, np.array([1.0, 0.0]), 0.0, [1.0])


class TestMultiplicativeAndExtraction:
    def test_identity_multiplicative(self, rng):
        assert check_multiplicative(np.eye(3), [rng.normal(size=3) for _ in range(3)]).verdict

    def test_row_indicator_multiplicative(self):
        p = row_indicator([1, 2, 2])
        assert check_multiplicative(p, list(np.eye(3))).verdict

    def test_mixing_row_residual(self):
        rep = check_multiplicative(np.array([[0.5, 0.5], [0.0, 1.0]]), [np.array([1.0, 0.0])])
        assert not rep.verdict
        assert rep.residual == pytest.approx(0.25)

    def test_extract_identity(self):
        np.testing.assert_array_equal(extract_flow_map(np.eye(4)), np.arange(4))

    def test_extract_merge(self):
        np.testing.assert_array_equal(extract_flow_map([[0, 1, 0], [0, 0, 1], [0, 0, 1]]), [1, 2, 2])

    def test_mixing_row_rejected_with_index(self):
        with pytest.raises(NotDeterministicError) as e:
            extract_flow_map([[0.5, 0.5], [0.0, 1.0]])
        assert e.value.row == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 9), min_size=1, max_size=10).filter(lambda m: max(m) < len(m)))
    def test_round_trip(self, phi):
        np.testing.assert_array_equal(extract_flow_map(row_indicator(phi)), phi)


class TestRayCone:
    def test_frozen_motion_constants(self):
        cone = ray_cone(np.zeros((2, 2)), [np.ones(2)], 1.0, 1)
        arr = cone.as_array()
        # frozen motion: every member is constant across states
        np.testing.assert_allclose(arr[:, 0], arr[:, 1], atol=1e-12)

    def test_depth_zero(self):
        cone = ray_cone(Q2, [np.array([1.0, 0.0])], 1.0, 0, rationals=[1])
        arr = cone.as_array()
        v = resolvent(Q2, 1.0) @ np.array([1.0, 0.0])
        assert any(np.allclose(m, v, atol=1e-12) for m in arr)

    def test_members_excessive(self):
        cone = ray_cone(Q2, list(np.eye(2)), 1.0, 2, budget=5000, on_budget="truncate")
        for m in cone.members:
            for a in (0.5, 1, 2, 3):
                assert np.all(a * resolvent(Q2, 1.0 + a) @ m <= m + 1e-10)

    def test_min_stable(self):
        cone = ray_cone(Q2, list(np.eye(2)), 1.0, 1, on_budget="truncate")
        for a in cone.members[:10]:
            for b in cone.members[:10]:
                assert check_excessive(Q2, np.minimum(a, b), 1.0, (0.5, 1, 2, 3)).verdict

    def test_budget_error(self):
        with pytest.raises(ConeBudgetError) as e:
            ray_cone(Q2, list(np.eye(2)), 1.0, 3, budget=20)
        assert len(e.value.cone.members) > 0
