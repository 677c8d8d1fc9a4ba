import numpy as np
import pytest
from scipy import stats

from flowlab.composition import (
    BrownianSampler,
    FiniteChainSampler,
    PreconditionUnverified,
    chapman_kolmogorov_mc,
    check_generator_sum,
    compose_process,
    composed_kernel,
    distributional_match,
    export_paths_csv,
    finite_chapman_kolmogorov,
    ks_statistic,
)
from flowlab.flows import translation_flow
from flowlab.functions import GaussianBump, HeatTranslationPotential
from flowlab.generator_lab import ComposedSemigroup, FlowSemigroup, HeatSemigroup, check_commutation

DRIFT = FlowSemigroup(translation_flow(1.0))
CYCLE = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])


class TestSamplers:
    def test_composed_marginal_is_shifted_gaussian(self):
        cs = compose_process(BrownianSampler(), translation_flow(1.0))
        y = cs.marginal(0.0, 1.0, 20_000, np.random.default_rng(0))
        assert distributional_match(y, lambda v: stats.norm.cdf(v - 1.0)).verdict

    def test_sample_paths_seeded(self):
        cs = compose_process(BrownianSampler(), translation_flow(2.0))
        a = cs.sample(0.0, [0.5, 1.0], 200, 3)
        b = cs.sample(0.0, [0.5, 1.0], 200, 3)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (200, 2)

    def test_chain_cemetery(self):
        q = np.array([[-2.0, 0.0], [0.0, 0.0]])
        s = FiniteChainSampler(q)
        y = s.marginal(0, 5.0, 4000, np.random.default_rng(1))
        dead = np.mean(s.is_dead(y))
        assert dead == pytest.approx(1 - np.exp(-10.0), abs=0.01)

    def test_dimension_mismatch(self):
        from flowlab.flows import linear_flow

        with pytest.raises(ValueError):
            compose_process(BrownianSampler(dim=2), linear_flow([[1.0]]))

    def test_export(self, tmp_path):
        cs = compose_process(BrownianSampler(), translation_flow(1.0))
        paths = cs.sample(0.0, [0.5, 1.0], 3, 0)
        out = tmp_path / "paths.csv"
        export_paths_csv(paths, [0.5, 1.0], 0, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "seed,path,t,x1"
        assert len(lines) == 7


class TestKS:
    def test_matches_scipy(self, rng):
        x = rng.standard_normal(500)
        assert ks_statistic(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)

    def test_atom_aware(self, rng):
        x = rng.poisson(2.0, 5000).astype(float)
        pois = stats.poisson(2.0)
        rep = distributional_match(x, (pois.cdf, lambda v: pois.cdf(v - 1)))
        assert rep.verdict

    def test_wrong_reference_rejected(self, rng):
        x = rng.standard_normal(5000) + 0.2
        assert not distributional_match(x, stats.norm.cdf).verdict

    def test_two_sample(self, rng):
        assert distributional_match(rng.standard_normal(3000), rng.standard_normal(3000)).details["kind"] == "two_sample"

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            distributional_match(np.zeros(10), stats.norm.cdf)


class TestGeneratorSum:
    def test_heat_drift_closed_form(self):
        LPhi = ComposedSemigroup(DRIFT, HeatSemigroup())
        u = HeatTranslationPotential(GaussianBump(0.0, 1.0), 1.0, 1.0)
        rep = check_generator_sum(lambda x: 0.5 * u.d2(x), lambda x: u.d1(x), LPhi, u, [0.0, 0.5, -1.0])
        assert rep.verdict and rep.residual <= 5e-3

    def test_missing_term_detected(self):
        LPhi = ComposedSemigroup(DRIFT, HeatSemigroup())
        u = GaussianBump(0.0, 1.0)
        rep = check_generator_sum(lambda x: 0.5 * u.d2(x), lambda x: 0 * x, LPhi, u, [0.5])
        assert not rep.verdict

    def test_composed_kernel_precondition(self):
        f = GaussianBump(0.0, 1.0)
        with pytest.raises(PreconditionUnverified):
            composed_kernel(DRIFT, HeatSemigroup(), 0.5, f, [0.0])
        comm = check_commutation(DRIFT, HeatSemigroup(), [f], [0.5], [0.0])
        v = composed_kernel(DRIFT, HeatSemigroup(), 0.5, f, [0.0], commutation=comm)
        # exp(-y^2/2) averaged over y ~ N(0.5, 0.5)
        assert v[0] == pytest.approx(np.sqrt(1 / 1.5) * np.exp(-0.25 / 3.0), abs=1e-10)


class TestChapmanKolmogorov:
    def test_commuting_permutation(self):
        rep = finite_chapman_kolmogorov(CYCLE, [1, 2, 0], 0.4, 0.9)
        assert rep.verdict and rep.details["commutator"] == 0.0

    def test_non_commuting_permutation(self):
        rep = finite_chapman_kolmogorov(CYCLE, [1, 0, 2], 0.4, 0.9)
        assert not rep.verdict and rep.details["commutator"] > 0

    def test_brownian_drift(self):
        rep = chapman_kolmogorov_mc(translation_flow(1.0), BrownianSampler(), GaussianBump(1.0, 0.5), 0.5, 0.5, 1.0, 50_000, 2)
        assert rep.verdict
