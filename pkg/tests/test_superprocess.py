import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from flowlab.flows import translation_flow
from flowlab.functions import GaussianBump
from flowlab.generator_lab import BudgetError
from flowlab.superprocess import (
    BranchingMechanism,
    ParticleCloud,
    _birth_death_params,
    _branch_step,
    check_mean_mass,
    check_representation,
    cumulant_solve,
    eval_branching_mechanism,
    export_clouds_csv,
    pushforward_measure,
    simulate_moving_branching,
    simulate_pure_branching,
    total_mass_laplace,
)

FELLER = BranchingMechanism(0.0, 1.0)


def _init(eps=1e-3):
    return ParticleCloud.from_mass([0.0], [1.0], eps)


class TestMechanism:
    def test_values(self):
        psi = BranchingMechanism(0.5, 2.0, ((1.0, 3.0),))
        lam = 0.7
        expected = -0.5 * lam - 2.0 * lam**2 + 3.0 * (1 - math.exp(-lam) - lam)
        assert psi(lam) == pytest.approx(expected, abs=1e-14)
        assert psi.effective_b == pytest.approx(3.5)

    def test_worked_values(self):
        assert BranchingMechanism(0.0, 1.0)(2.0) == pytest.approx(-4.0)
        assert BranchingMechanism(1.0, 0.0, ((1.0, 1.0),))(1.0) == pytest.approx(-1.0 - math.exp(-1.0), abs=1e-12)
        assert FELLER(0.0) == 0.0
        assert cumulant_solve(FELLER, 1.0, 1.0) == pytest.approx(0.5, rel=1e-9)
        assert cumulant_solve(FELLER, 0.0, 3.0) == 0.0

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            eval_branching_mechanism(FELLER, -1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            BranchingMechanism(0.0, -1.0)
        with pytest.raises(ValueError):
            BranchingMechanism(0.0, 1.0, ((0.0, 1.0),))

    def test_round_trip(self):
        psi = BranchingMechanism(0.2, 1.0, ((0.5, 2.0),))
        assert BranchingMechanism.from_dict(psi.to_dict()) == psi

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 5.0), st.floats(0.0, 3.0), st.floats(0.1, 2.0))
    def test_feller_cumulant(self, lam, t, c):
        assert cumulant_solve(BranchingMechanism(0.0, c), lam, t) == pytest.approx(lam / (1 + c * lam * t), rel=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 5.0), st.floats(0.0, 3.0), st.floats(-1.0, 1.0))
    def test_linear_cumulant(self, lam, t, b):
        assert cumulant_solve(BranchingMechanism(b, 0.0), lam, t) == pytest.approx(lam * math.exp(-b * t), rel=1e-8)


class TestBirthDeath:
    @pytest.mark.parametrize("birth,death", [(2.0, 1.0), (1.0, 3.0), (1.5, 1.5)])
    def test_against_forward_equation(self, birth, death):
        # truncated generator of a single linear birth-death line started from one particle
        n, dt = 80, 0.3
        q = np.zeros((n, n))
        for k in range(1, n - 1):
            q[k, k + 1] = birth * k
            q[k, k - 1] = death * k
            q[k, k] = -(birth + death) * k
        p = expm(dt * q)[1]
        a, g = _birth_death_params(birth, death, dt)
        law = np.concatenate([[a], (1 - a) * (1 - g) * g ** np.arange(n - 1)])
        np.testing.assert_allclose(p[:30], law[:30], atol=1e-10)

    def test_mean_growth(self):
        psi = BranchingMechanism(-0.5, 1.0)
        rng = np.random.default_rng(0)
        out = _branch_step(np.full(20_000, 50), psi, 1e-2, 0.1, rng)
        assert out.mean() == pytest.approx(50 * math.exp(0.05), abs=3 * out.std() / math.sqrt(out.size))

    def test_no_branching(self):
        out = _branch_step(np.array([3, 4]), BranchingMechanism(), 1.0, 1.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out, [3, 4])


class TestCloud:
    def test_from_mass(self):
        c = ParticleCloud.from_mass([0.0, 1.0], [0.5, 0.25], 0.05)
        np.testing.assert_array_equal(c.counts, [10, 5])
        assert c.total_mass == pytest.approx(0.75)
        pos, mass = c.particles()
        assert pos.size == 15 and np.all(mass == 0.05)

    def test_integrate(self):
        c = ParticleCloud.from_mass([0.0, 1.0], [0.5, 0.25], 0.05)
        assert c.integrate(lambda x: x**2 + 1) == pytest.approx(0.5 + 0.5)

    def test_union_compact(self):
        a = ParticleCloud([0.0, 1.0], [0, 2], 0.1)
        b = ParticleCloud([2.0], [1], 0.1)
        u = a.union(b).compact()
        np.testing.assert_array_equal(u.positions, [1.0, 2.0])
        with pytest.raises(ValueError):
            a.union(ParticleCloud([0.0], [1], 0.2))

    def test_invalid(self):
        with pytest.raises(ValueError):
            ParticleCloud([0.0], [1], 0.0)
        with pytest.raises(ValueError):
            ParticleCloud([0.0], [-1], 1.0)

    def test_pushforward(self):
        c = ParticleCloud([0.0, 1.0], [2, 3], 0.1)
        p = pushforward_measure(translation_flow(2.0), c, 0.5)
        np.testing.assert_allclose(p.positions, [1.0, 2.0])
        np.testing.assert_array_equal(p.counts, c.counts)

    def test_pushforward_duality(self, rng):
        c = ParticleCloud(rng.normal(size=20), rng.integers(0, 5, 20), 0.01)
        f = GaussianBump(0.3, 0.6)
        flow = translation_flow(1.0)
        pushed = pushforward_measure(flow, c, 0.8)
        assert abs(pushed.integrate(f) - c.integrate(lambda x: f(x + 0.8))) <= 1e-12

    def test_pushforward_superposition(self, rng):
        a = ParticleCloud(rng.normal(size=5), rng.integers(0, 5, 5), 0.01)
        b = ParticleCloud(rng.normal(size=3), rng.integers(0, 5, 3), 0.01)
        flow = translation_flow(2.0)
        left = pushforward_measure(flow, a.union(b), 0.5)
        right = pushforward_measure(flow, a, 0.5).union(pushforward_measure(flow, b, 0.5))
        np.testing.assert_array_equal(left.positions, right.positions)
        np.testing.assert_array_equal(left.counts, right.counts)

    def test_export(self, tmp_path):
        out = tmp_path / "clouds.csv"
        export_clouds_csv([ParticleCloud([0.0], [2], 0.5), ParticleCloud([1.0], [1], 0.5)], out)
        assert out.read_text().splitlines() == ["replica,x1,mass", "0,0.0,0.5", "0,0.0,0.5", "1,1.0,0.5"]


class TestSimulation:
    def test_seeded(self):
        a = simulate_pure_branching(FELLER, _init(), 1.0, 5, replica=2)
        b = simulate_pure_branching(FELLER, _init(), 1.0, 5, replica=2)
        np.testing.assert_array_equal(a.counts, b.counts)
        assert a.time == 1.0

    def test_time_zero(self):
        c = simulate_pure_branching(FELLER, _init(), 0.0, 0)
        assert c.total_mass == 1.0

    def test_moving_positions(self):
        c = simulate_moving_branching(FELLER, translation_flow(1.0), _init(), 0.7, 1)
        np.testing.assert_allclose(c.positions, [0.7])

    def test_budget(self):
        with pytest.raises(BudgetError):
            simulate_pure_branching(BranchingMechanism(-20.0, 0.0), _init(), 1.0, 0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            simulate_pure_branching(FELLER, _init(), -1.0, 0)

    def test_feller_laplace(self):
        rep = total_mass_laplace(FELLER, _init(), 1.0, 1.0, 300, 3)
        assert rep.details["exact"] == pytest.approx(math.exp(-0.5))
        assert rep.verdict

    def test_mean_mass_decay(self):
        psi = BranchingMechanism(0.5, 1.0, ((0.05, 2.0),))
        init = ParticleCloud.from_mass([-1.0, 0.0, 1.0], [0.3, 0.4, 0.3], 1e-3)
        rep = check_mean_mass(psi, init, [0.5, 1.0], 100, 2)
        assert rep.verdict
        assert rep.details["psi_prime_0"] == pytest.approx(-0.5, abs=1e-4)

    def test_mean_mass_growth(self):
        rep = check_mean_mass(BranchingMechanism(-0.5, 0.0), _init(), [1.0], 40, 2)
        assert rep.verdict
        assert rep.details["rows"][0]["exact"] == pytest.approx(math.exp(0.5))
        assert rep.details["psi_prime_0"] == pytest.approx(0.5, abs=1e-4)


class TestRepresentation:
    def test_shared_seed_exact(self):
        rep = check_representation(FELLER, translation_flow(1.0), _init(), 1.0, GaussianBump(0.5, 0.7), 50, 4)
        assert rep.verdict
        # stepping the flow and jumping it in one go differ only by rounding
        assert rep.residual <= 1e-12
        assert rep.details["position_gap"] <= 1e-12
        assert rep.details["mass_gap"] == 0.0

    def test_identity_motion(self):
        from flowlab.flows import linear_flow

        rep = check_representation(FELLER, linear_flow([[0.0]]), _init(), 0.5, GaussianBump(0.0, 1.0), 20, 1)
        assert rep.residual == 0.0

    def test_independent_seeds(self):
        rep = check_representation(FELLER, translation_flow(1.0), _init(), 1.0, GaussianBump(0.5, 0.7), 200, 4, independent_seed=99)
        assert rep.verdict and rep.details["coupling"] == "independent"
