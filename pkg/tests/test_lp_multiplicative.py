import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlab.kernel_core import Kernel, row_indicator, semigroup_at
from flowlab.lp_multiplicative import (
    CEMETERY,
    ExtractionFailed,
    WeightedSpace,
    check_lp_derivation_equivalence,
    check_lp_multiplicative,
    check_subinvariance,
    extract_flow_on_support,
    random_fleet,
    shift_kernels,
    shift_with_absorption,
)

E2 = np.eye(2)


class TestSpace:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightedSpace(2, [0.0, 0.0])
        with pytest.raises(ValueError):
            WeightedSpace(2, [1.0, -1.0])
        with pytest.raises(ValueError):
            WeightedSpace(2, [1.0])
        with pytest.raises(ValueError):
            WeightedSpace(2, [1.0, 1.0], p=0.5)

    def test_norm_and_json(self):
        w = WeightedSpace(3, [1.0, 0.0, 2.0], p=3.0)
        assert w.norm([2.0, 5.0, 1.0]) == pytest.approx(10.0 ** (1 / 3))
        back = WeightedSpace.from_json(w.to_json())
        assert (back.n, back.p) == (w.n, w.p)
        np.testing.assert_array_equal(back.m, w.m)
        np.testing.assert_array_equal(w.support, [0, 2])


class TestSubinvariance:
    def test_doubly_stochastic(self):
        assert check_subinvariance(WeightedSpace(3, np.ones(3)), np.full((3, 3), 1 / 3)).verdict

    def test_permutation(self):
        assert check_subinvariance(WeightedSpace(3, [2.0, 2.0, 2.0]), row_indicator([1, 2, 0])).verdict

    def test_merging_map(self):
        rep = check_subinvariance(WeightedSpace(3, np.ones(3)), row_indicator([1, 2, 2]).p)
        assert not rep.verdict
        assert rep.residual == pytest.approx(1.0)
        assert rep.worst_case["state"] == 2


class TestMultiplicative:
    def test_deterministic_counting(self):
        assert check_lp_multiplicative(WeightedSpace(3, np.ones(3)), row_indicator([2, 0, 0]).p).verdict

    def test_null_state_mixing(self):
        rep = check_lp_multiplicative(WeightedSpace(2, [0.0, 1.0]), [[0.5, 0.5], [0.0, 1.0]], [E2[0], E2[1]])
        assert rep.verdict and rep.residual == 0.0
        assert rep.details["pointwise_residual"] == pytest.approx(0.25)

    def test_uniform_mixing(self):
        rep = check_lp_multiplicative(WeightedSpace(2, [1.0, 1.0]), np.full((2, 2), 0.5), [E2[0], E2[1]])
        assert not rep.verdict
        assert rep.residual == pytest.approx(0.25, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=5, max_size=5), st.sampled_from([1.0, 2.0, 3.0]))
    def test_any_map_is_multiplicative(self, phi, p):
        rep = check_lp_multiplicative(WeightedSpace(5, np.arange(1.0, 6.0), p), row_indicator(phi).p)
        assert rep.residual <= 1e-14

    def test_contraction_for_permutation(self):
        rep = check_lp_multiplicative(WeightedSpace(3, [1.0, 1.0, 1.0], 3.0), row_indicator([1, 2, 0]))
        assert rep.details["lp_contraction"] and rep.details["subinvariant"]


class TestEquivalence:
    def test_frozen(self):
        rep = check_lp_derivation_equivalence(WeightedSpace(2, [1.0, 1.0]), np.zeros((2, 2)))
        assert rep.verdict and rep.details["derivation"] and rep.details["multiplicative"]

    def test_mixing(self):
        q = np.array([[-1.0, 1.0], [1.0, -1.0]])
        rep = check_lp_derivation_equivalence(WeightedSpace(2, [1.0, 1.0]), q)
        assert rep.verdict and not rep.details["derivation"] and not rep.details["multiplicative"]

    def test_mixing_off_support(self):
        # state 0 jumps to 1 but carries no mass; state 1 is frozen
        q = np.array([[-1.0, 1.0], [0.0, 0.0]])
        rep = check_lp_derivation_equivalence(WeightedSpace(2, [0.0, 1.0]), q)
        assert rep.verdict and rep.details["derivation"] and rep.details["subinvariant"]

    def test_fleet_agreement(self):
        rng = np.random.default_rng(8)
        kinds = set()
        for _ in range(50):
            space, q = random_fleet(rng)
            rep = check_lp_derivation_equivalence(space, q)
            assert rep.verdict and rep.details["subinvariant"]
            kinds.add(rep.details["derivation"])
        assert kinds == {True, False}


class TestExtraction:
    def test_ring_shift(self):
        n = 6
        res = extract_flow_on_support(WeightedSpace(n, np.ones(n)), shift_kernels(n, [1, 2, 3], ring=True))
        np.testing.assert_array_equal(res.support, np.arange(n))
        for k in (1, 2, 3):
            np.testing.assert_array_equal(res.maps[float(k)], shift_with_absorption(n, k, True))
        assert all(d["mismatches"] == 0 for d in res.semigroup_defects)
        assert res.absorbing_leak == 0.0

    def test_line_shift_kills(self):
        n = 5
        res = extract_flow_on_support(WeightedSpace(n, np.ones(n)), shift_kernels(n, [1, 2], ring=False))
        np.testing.assert_array_equal(res.maps[2.0], [2, 3, 4, CEMETERY, CEMETERY])
        np.testing.assert_array_equal(res.synthesize(2.0, n), shift_kernels(n, [2], ring=False)[0][1].p)
        assert any(d["t"] == 1.0 and d["s"] == 1.0 and d["mismatches"] == 0 for d in res.semigroup_defects)

    def test_null_state(self):
        space = WeightedSpace(2, [0.0, 1.0])
        res = extract_flow_on_support(space, [(1.0, Kernel(np.array([[0.5, 0.5], [0.0, 1.0]])))])
        np.testing.assert_array_equal(res.support, [1])
        assert res.to_dict()["F"] == [1]

    def test_escape_removed(self):
        # state 0 is Dirac but lands on a mixing state
        p = np.array([[0.0, 1.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])
        res = extract_flow_on_support(WeightedSpace(3, np.ones(3)), [(1.0, p)])
        np.testing.assert_array_equal(res.support, [2])

    def test_failure_diagnostics(self):
        with pytest.raises(ExtractionFailed) as err:
            extract_flow_on_support(WeightedSpace(2, [1.0, 1.0]), [(1.0, np.full((2, 2), 0.5))])
        assert err.value.diagnostics["non_dirac_states"] == [0, 1]

    def test_needs_kernels(self):
        with pytest.raises(ValueError):
            extract_flow_on_support(WeightedSpace(2, [1.0, 1.0]), [])

    def test_frozen_semigroup_json(self):
        res = extract_flow_on_support(WeightedSpace(3, np.ones(3)), [(t, semigroup_at(np.zeros((3, 3)), t)) for t in (0.5, 1.0)])
        assert '"F": [0, 1, 2]' in res.to_json()
