"""Named experiment suites built from the toolkit's checks.

A suite is an ordered list of ``(check name, callable)``.  Each callable gets
the run configuration and a seed derived from ``(run seed, check name)`` and
returns one :class:`Report`.  Reports therefore depend only on the seed and
the budgets, never on the order in which checks run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from . import _rng
from .composition import (
    BrownianSampler,
    EulerSDESampler,
    FiniteChainSampler,
    FlowSampler,
    chapman_kolmogorov_mc,
    check_generator_sum,
    compose_process,
    distributional_match,
    finite_chapman_kolmogorov,
)
from .flows import (
    OpenRegion,
    VectorField,
    check_flow_axioms,
    entry_time,
    flow_generator,
    linear_flow,
    rotation_flow,
    stopped_flow,
    translation_flow,
    ODEFlow,
    SolverConfig,
)
from .functions import FromCallable, GaussianBump, HeatTranslationPotential, Sinusoid, TranslationResolvent, default_fleet
from .generator_lab import (
    ComposedSemigroup,
    FlowSemigroup,
    HeatSemigroup,
    MatrixSemigroup,
    MonteCarloSemigroup,
    check_commutation,
    check_derivation,
    check_integral_identity,
    check_resolvent_identity,
    check_semigroup_ode,
    estimate_generator,
    martingale_residual_test,
)
from .kernel_core import (
    NotDeterministicError,
    extract_flow_map,
    laplace_quadrature,
    potential_integral,
    random_generator,
    resolvent,
    row_indicator,
    semigroup_at,
)
from .lp_multiplicative import (
    WeightedSpace,
    check_lp_derivation_equivalence,
    check_lp_multiplicative,
    check_subinvariance,
    extract_flow_on_support,
    random_fleet,
    shift_kernels,
    shift_with_absorption,
)
from .reports import Report, jsonable
from .subordination import (
    SubordinateSemigroup,
    SubordinatorSpec,
    check_bochner_semigroup,
    check_subordinate_generator_sum,
    poisson_generator,
    subordinate_potential,
)
from .superprocess import BranchingMechanism, ParticleCloud, check_mean_mass, check_representation, total_mass_laplace

SCHEMA = 1
EXACT_TOL = 1e-8


@dataclass
class RunConfig:
    suite: str
    seed: int = 0
    replicas: int = 1000
    paths: int = 100_000
    out: str | None = None
    fleet_size: int = 50

    def validate(self) -> None:
        if self.suite not in SUITES:
            raise KeyError(self.suite)
        if self.replicas < 2 or self.paths < 2 or self.fleet_size < 1:
            raise ValueError("budgets (replicas, paths, fleet_size) must be positive; replicas and paths need at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def budget(self) -> dict:
        return {"replicas": self.replicas, "paths": self.paths, "fleet_size": self.fleet_size}


def check_seed(seed: int, name: str) -> int:
    """Per-check seed keyed on the run seed and the check name."""
    return int(_rng.substream(seed, "check", name).integers(0, 2**63 - 1))


def _combine(name: str, reports: list[Report]) -> Report:
    worst = max(reports, key=lambda r: (not r.verdict, r.residual))
    return Report(
        name,
        all(r.verdict for r in reports),
        max(r.residual for r in reports),
        worst.tolerance,
        worst.worst_case,
        {"count": len(reports), "failures": sum(not r.verdict for r in reports)},
    )


def _negated(name: str, rep: Report, threshold: float | None = None) -> Report:
    """Negative control: passes when the underlying check fails."""
    d = dict(rep.details)
    d["underlying_verdict"] = rep.verdict
    d["underlying_tolerance"] = rep.tolerance
    ok = not rep.verdict if threshold is None else rep.residual >= threshold
    return Report(name, bool(ok), rep.residual, rep.tolerance if threshold is None else threshold, rep.worst_case, d)


def _generators(cfg: RunConfig, seed: int, n_max: int = 8):
    rng = np.random.default_rng(seed)
    return [random_generator(rng, int(rng.integers(2, n_max + 1))) for _ in range(cfg.fleet_size)], rng


# --- kernel identities ------------------------------------------------------------------


def kernel_semigroup_law(cfg, seed):
    qs, _ = _generators(cfg, seed)
    grid = (0.1, 0.7, 2.0)
    res = max(float(np.abs(semigroup_at(q, t + s).p - semigroup_at(q, t).p @ semigroup_at(q, s).p).max()) for q in qs for t in grid for s in grid)
    return Report("semigroup_law", res <= EXACT_TOL, res, EXACT_TOL, None, {"generators": len(qs), "times": list(grid)})


def kernel_laplace_consistency(cfg, seed):
    qs, rng = _generators(cfg, seed)
    alphas = rng.uniform(0.5, 3.0, size=len(qs))
    quads = laplace_quadrature(qs, alphas)
    res = max(float(np.abs(quad - resolvent(q, a)).max()) for q, a, quad in zip(qs, alphas, quads))
    return Report("laplace_consistency", res <= EXACT_TOL, res, EXACT_TOL, None, {"generators": len(qs), "horizon": "40/alpha", "rule": "simpson"})


def kernel_resolvent_equation(cfg, seed):
    qs, rng = _generators(cfg, seed)
    res = 0.0
    for q in qs:
        a, b = rng.uniform(0.3, 4.0, size=2)
        ua, ub = resolvent(q, a), resolvent(q, b)
        res = max(res, float(np.abs(ua - ub - (b - a) * ua @ ub).max()))
    return Report("resolvent_equation", res <= EXACT_TOL, res, EXACT_TOL, None, {"generators": len(qs)})


def kernel_resolvent_inversion(cfg, seed):
    qs, rng = _generators(cfg, seed)
    reps = []
    for q in qs:
        f = rng.uniform(-1.0, 1.0, q.n)
        reps.append(check_resolvent_identity(MatrixSemigroup(q), f, float(rng.uniform(0.3, 4.0)), np.arange(q.n)))
    return _combine("resolvent_inversion", reps)


def kernel_potential_identity(cfg, seed):
    qs, rng = _generators(cfg, seed)
    res = 0.0
    for q in qs:
        f = rng.uniform(-1.0, 1.0, q.n)
        t = float(rng.uniform(0.1, 3.0))
        res = max(res, float(np.abs(q.q @ potential_integral(q, f, t) - (semigroup_at(q, t).p @ f - f)).max()))
    return Report("potential_identity", res <= EXACT_TOL, res, EXACT_TOL, None, {"generators": len(qs)})


def kernel_beta_shift(cfg, seed):
    """Generator of ``e^{-beta t} T_t`` read off its resolvent equals ``q - beta``."""
    qs, rng = _generators(cfg, seed)
    res = 0.0
    for q in qs:
        a, beta = rng.uniform(0.3, 3.0, size=2)
        f = rng.uniform(-1.0, 1.0, q.n)
        u = resolvent(q, a + beta) @ f
        res = max(res, float(np.abs((a * u - f) - (q.q @ u - beta * u)).max()))
    return Report("beta_shift", res <= EXACT_TOL, res, EXACT_TOL, None, {"generators": len(qs)})


def kernel_dirac_round_trip(cfg, seed):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        phi = rng.integers(0, n, size=n)
        bad += int(not np.array_equal(extract_flow_map(row_indicator(phi, n)), phi))
    return Report("dirac_round_trip", bad == 0, float(bad), 0.0, None, {"maps": 100})


def kernel_dirac_rejection(cfg, seed):
    rng = np.random.default_rng(seed)
    n = 6
    phi = rng.integers(0, n, size=n)
    p = row_indicator(phi, n).p.copy()
    row = int(rng.integers(0, n))
    p[row] = 0.0
    p[row, [0, n - 1]] = 0.5
    try:
        extract_flow_map(p)
    except NotDeterministicError as e:
        return Report("dirac_rejection", e.row == row, 0.0, 0.0, {"row": e.row}, {"expected_row": row})
    return Report("dirac_rejection", False, 1.0, 0.0, None, {"expected_row": row})


# --- generator identities ---------------------------------------------------------------

_Q2 = np.array([[-1.0, 1.0], [1.0, -1.0]])


def gen_matrix_resolvent_example(cfg, seed):
    T = MatrixSemigroup(_Q2)
    rep = check_resolvent_identity(T, np.array([1.0, 0.0]), 1.0, [0, 1])
    u = T.resolvent_image(1.0, np.array([1.0, 0.0]))
    gap = float(np.abs(u - np.array([2 / 3, 1 / 3])).max())
    rep.details["u"] = u
    rep.details["u_gap"] = gap
    rep.verdict = rep.verdict and gap <= EXACT_TOL
    return rep


def gen_matrix_identities(cfg, seed):
    qs, rng = _generators(cfg, seed)
    reps = []
    for q in qs[:10]:
        T = MatrixSemigroup(q)
        u = rng.uniform(-1.0, 1.0, q.n)
        idx = np.arange(q.n)
        reps.append(check_integral_identity(T, u, q.q @ u, [0.5, 1.0], idx))
        reps.append(check_semigroup_ode(T, u, [0.0, 0.5, 1.5], idx))
    return _combine("matrix_generator_identities", reps)


def gen_flow_estimate(cfg, seed):
    T = FlowSemigroup(translation_flow(1.0))
    u = Sinusoid(1.0, radius=10.0)
    x = np.linspace(-2.0, 2.0, 9)
    est = estimate_generator(T, u, x)
    res = float(np.abs(est.value - np.cos(x)).max())
    return Report("flow_generator_estimate", res <= 1e-4, res, 1e-4, None, {"error_bar": est.error_bar, "points": x})


def gen_flow_resolvent(cfg, seed):
    return check_resolvent_identity(FlowSemigroup(translation_flow(1.0)), GaussianBump(0.0, 1.0), 2.0, [0.0, 0.5, -1.0])


def gen_flow_integral(cfg, seed):
    u, g = Sinusoid(1.0, radius=10.0), Sinusoid(1.0, phase=math.pi / 2, radius=10.0)
    return check_integral_identity(FlowSemigroup(translation_flow(1.0)), u, g, [0.5, 1.0], [0.0, 0.3])


def gen_flow_semigroup_ode(cfg, seed):
    return check_semigroup_ode(FlowSemigroup(translation_flow(1.0)), GaussianBump(0.0, 1.0), [0.5], [0.0, 0.4])


def _derivation_flows():
    field = VectorField.linear(np.array([[-1.0]]))
    return [
        ("translation", FlowSemigroup(translation_flow(1.0))),
        ("linear_ode", FlowSemigroup(ODEFlow(field, SolverConfig(rel_tol=1e-10)))),
        ("linear_expm", FlowSemigroup(linear_flow(np.array([[0.5]])))),
    ]


def gen_derivation_fleet(cfg, seed):
    pts = np.array([-1.0, 0.0, 0.5, 1.3])
    reps = [check_derivation(T, u, pts, tol=1e-4) for _, T in _derivation_flows() for u in default_fleet()]
    return _combine("derivation_fleet", reps)


def gen_martingale_chain(cfg, seed):
    q = np.array([[-1.0, 0.6, 0.2], [0.5, -0.5, 0.0], [0.3, 0.3, -0.9]])
    u = np.array([1.0, -0.5, 2.0])
    return martingale_residual_test(FiniteChainSampler(q), u, q @ u, 0.5, 1.0, 0, cfg.paths, seed, dt=1e-2)


def gen_martingale_flow(cfg, seed):
    fl = translation_flow(1.0)
    u = GaussianBump(0.3, 0.7)
    lu = FromCallable(lambda x: flow_generator(fl.field, u, x), name="Du")
    return martingale_residual_test(FlowSampler(fl), u, lu, 0.25, 0.5, 0.0, cfg.paths, seed)


def gen_heat_drift_commutation(cfg, seed):
    heat = MonteCarloSemigroup(BrownianSampler(), cfg.paths, seed, label="heat")
    return check_commutation(FlowSemigroup(translation_flow(1.0)), heat, [GaussianBump(1.0, 0.5)], [0.5], [0.0, 1.0])


# --- flows ----------------------------------------------------------------------------


def _axiom_points(dim):
    g = np.linspace(-2.0, 2.0, 5)
    return g if dim == 1 else np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)


def flow_axioms_linear(cfg, seed):
    a = np.array([[-0.5, 1.0], [-1.0, -0.3]])
    return check_flow_axioms(ODEFlow(VectorField.linear(a), SolverConfig(rel_tol=1e-10, abs_tol=1e-13)), _axiom_points(2), [0.3, 0.7, 1.1])


def flow_axioms_translation(cfg, seed):
    return check_flow_axioms(translation_flow(1.5), _axiom_points(1), [0.3, 0.7, 1.1])


def flow_axioms_rotation(cfg, seed):
    return check_flow_axioms(rotation_flow(1.0), _axiom_points(2), [0.3, 0.7, 1.1])


def flow_axioms_square_flagged(cfg, seed):
    field = VectorField.polynomial([0.0, 0.0, 1.0])
    rep = check_flow_axioms(ODEFlow(field), np.array([-1.0, -0.5, 0.0]), [0.2, 0.4])
    return _negated("square_field_flagged", rep)


def flow_derivation_identity(cfg, seed):
    field = VectorField.linear(np.array([[-1.0]]))
    x = np.linspace(-2.0, 2.0, 9)
    res = 0.0
    for u in default_fleet():
        sq = FromCallable(lambda y, u=u: u(y) ** 2, d1=lambda y, u=u: 2 * u(y) * u.d1(y))
        res = max(res, float(np.abs(flow_generator(field, sq, x) - 2 * u(x) * flow_generator(field, u, x)).max()))
    return Report("flow_generator_derivation", res <= 1e-6, res, 1e-6, None, {"field": "linear -x"})


# --- stopped flows ---------------------------------------------------------------------


def stopped_fixture(cfg, seed):
    fl = stopped_flow(translation_flow(1.0), OpenRegion.half_line_below(1.0))
    xs = np.array([-2.0, -0.5, 0.0, 0.9, 1.0, 1.5, 3.0])
    res = 0.0
    for t in (0.0, 0.05, 0.5, 1.0, 2.5):
        expected = np.where(xs <= 1.0, np.minimum(xs + t, 1.0), xs)
        res = max(res, float(np.abs(fl.evaluate(xs, t) - expected).max()))
    return Report("stopped_fixture", res <= EXACT_TOL, res, EXACT_TOL, None, {"region": "(-inf,1)", "velocity": 1.0})


def stopped_terminal_identity(cfg, seed):
    base, region = translation_flow(1.0), OpenRegion.half_line_below(1.0)
    t_max = 10.0
    res = 0.0
    for x in (-2.0, -0.5, 0.0, 0.7):
        T = entry_time(base, region, x, t_max)
        for t in (0.1, 0.4, 0.6):
            if t < T:
                res = max(res, abs(t + entry_time(base, region, base.evaluate(x, t), t_max) - T))
    return Report("terminal_time_identity", res <= EXACT_TOL, res, EXACT_TOL, None, {})


def stopped_boundary_hit(cfg, seed):
    base, region = VectorField.linear(np.array([[1.0]])), OpenRegion.interval(-2.0, 2.0)
    fl = stopped_flow(ODEFlow(base, SolverConfig(rel_tol=1e-10)), region)
    xs = np.array([0.5, 1.0, -0.3])
    dist = float(region.distance_to_boundary(fl.evaluate(xs, 5.0)).max())
    return Report("stopped_boundary_hit", dist <= 1e-8, dist, 1e-8, None, {"field": "x", "region": "(-2,2)"})


def stopped_no_entry(cfg, seed):
    fl = ODEFlow(VectorField.linear(np.array([[-1.0]])))
    T = entry_time(fl, OpenRegion.interval(-1.0, 1.0), 0.5, 20.0)
    return Report("stopped_no_entry", math.isinf(T), 0.0, 0.0, None, {"entry_time": T})


# --- composition -----------------------------------------------------------------------


def comp_ks(cfg, seed):
    cs = compose_process(BrownianSampler(), translation_flow(1.0))
    samples = _rng.map_chunks(cfg.paths, seed, ("ks",), lambda n, rng: cs.marginal(0.0, 1.0, n, rng))
    return distributional_match(samples, lambda y: norm.cdf(y - 1.0), 0.01)


def comp_generator_sum(cfg, seed):
    F, H = FlowSemigroup(translation_flow(1.0)), HeatSemigroup()
    LPhi = ComposedSemigroup(F, H)
    reps = []
    for b in (GaussianBump(0.0, 1.0), GaussianBump(0.7, 0.5, 2.0), GaussianBump(-1.0, 0.3)):
        u = HeatTranslationPotential(b, 1.0, 1.0)
        reps.append(check_generator_sum(lambda x, u=u: 0.5 * u.d2(x), lambda x, u=u: u.d1(x), LPhi, u, [0.0, 0.5, -1.0]))
    return _combine("generator_sum", reps)


def comp_finite_ck(cfg, seed):
    q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    return finite_chapman_kolmogorov(q, [1, 2, 0], 0.4, 0.9)


def comp_brownian_ck(cfg, seed):
    return chapman_kolmogorov_mc(translation_flow(1.0), BrownianSampler(), GaussianBump(1.0, 0.5), 0.5, 0.5, 1.0, cfg.paths, seed)


def _gbm():
    return EulerSDESampler(lambda x: 0.0 * x, lambda x: x, 1e-2)


# --- subordination --------------------------------------------------------------------


def _specs(seed):
    return [
        SubordinatorSpec("poisson", {"rate": 2.0, "jump": 0.5}, seed=seed),
        SubordinatorSpec("gamma", {"shape": 1.5, "scale": 0.4}, seed=seed),
        SubordinatorSpec("stable_half", {"scale": 0.8}, seed=seed),
    ]


def sub_self_tests(cfg, seed):
    return _combine("laplace_self_tests", [s.self_test_report for s in _specs(seed)])


def sub_quadrature_vs_mc(cfg, seed):
    S = FlowSemigroup(translation_flow(1.0))
    f = GaussianBump(1.0, 0.8)
    reps = []
    for spec in _specs(seed):
        q = SubordinateSemigroup(S, spec).evaluate(1.0, f, np.array([0.0]))[0][0]
        m, se = SubordinateSemigroup(S, spec, "mc", cfg.paths, seed).evaluate(1.0, f, np.array([0.0]))
        gap = abs(q - m[0])
        reps.append(Report(f"quadrature_vs_mc[{spec.kind}]", gap <= 3 * se[0], gap, 3 * se[0], None, {"quadrature": q, "mc": m[0], "se": se[0]}))
    return _combine("quadrature_vs_mc", reps)


def sub_poisson_generator_sum(cfg, seed):
    spec = SubordinatorSpec("poisson", {"rate": 2.0, "jump": 0.5}, seed=seed)
    S = FlowSemigroup(translation_flow(1.0))
    u = subordinate_potential(TranslationResolvent(GaussianBump(0.0, 1.0), 1.0), spec, 1.0)
    LPhi = SubordinateSemigroup(S, spec, shift=True)
    return check_subordinate_generator_sum(poisson_generator(u, spec), lambda x: u.d1(x), LPhi, u, [0.0, 0.5, -1.0])


def sub_bochner(cfg, seed):
    S = FlowSemigroup(translation_flow(1.0))
    return _combine("bochner_semigroup", [check_bochner_semigroup(S, spec, GaussianBump(1.0, 0.8), 0.5, 0.7, [0.0, 0.5]) for spec in _specs(seed)])


# --- superprocess ---------------------------------------------------------------------


def _feller_init():
    return ParticleCloud.from_mass([0.0], [1.0], 1e-3)


def sp_feller(cfg, seed):
    return total_mass_laplace(BranchingMechanism(0.0, 1.0), _feller_init(), 1.0, 1.0, cfg.replicas, seed)


def sp_shared(cfg, seed):
    return check_representation(BranchingMechanism(0.0, 1.0), translation_flow(1.0), _feller_init(), 1.0, GaussianBump(0.5, 0.7), cfg.replicas, seed)


def sp_independent(cfg, seed):
    other = check_seed(seed, "independent")
    return check_representation(BranchingMechanism(0.0, 1.0), translation_flow(1.0), _feller_init(), 1.0, GaussianBump(0.5, 0.7), cfg.replicas, seed, independent_seed=other)


def sp_mean_mass(cfg, seed):
    psi = BranchingMechanism(0.5, 1.0, ((0.05, 2.0),))
    init = ParticleCloud.from_mass([-1.0, 0.0, 1.0], [0.3, 0.4, 0.3], 1e-3)
    return check_mean_mass(psi, init, [0.5, 1.0], max(2, cfg.replicas // 4), seed)


# --- L^p ------------------------------------------------------------------------------


def lp_fixtures(cfg, seed):
    W = WeightedSpace
    e = np.eye(2)
    cases = [
        ("doubly_stochastic", check_subinvariance(W(3, np.ones(3)), np.full((3, 3), 1 / 3)).verdict, True),
        ("permutation_orbits", check_subinvariance(W(3, [2.0, 2.0, 2.0]), row_indicator([1, 2, 0]).p).verdict, True),
        ("merging_map", check_subinvariance(W(3, np.ones(3)), row_indicator([1, 2, 2]).p).verdict, False),
        ("deterministic_counting", check_lp_multiplicative(W(3, np.ones(3)), row_indicator([2, 0, 0]).p).verdict, True),
        ("null_state_mixing", check_lp_multiplicative(W(2, [0.0, 1.0]), [[0.5, 0.5], [0.0, 1.0]]).verdict, True),
        ("uniform_mixing", check_lp_multiplicative(W(2, [1.0, 1.0]), np.full((2, 2), 0.5), [e[0], e[1]]).verdict, False),
    ]
    resid = check_lp_multiplicative(W(2, [1.0, 1.0]), np.full((2, 2), 0.5), [e[0], e[1]]).residual
    mismatched = [name for name, got, want in cases if got != want]
    ok = not mismatched and abs(resid - 0.25) <= 1e-12
    return Report("lp_fixtures", ok, float(len(mismatched)), 0.0, None, {"cases": {n: g for n, g, _ in cases}, "mismatched": mismatched, "mixing_residual": resid})


def lp_agreement(cfg, seed):
    rng = np.random.default_rng(seed)
    reps = []
    for _ in range(cfg.fleet_size):
        space, q = random_fleet(rng)
        r = check_lp_derivation_equivalence(space, q)
        r.verdict = r.verdict and r.details["subinvariant"]
        reps.append(r)
    out = _combine("lp_derivation_agreement", reps)
    out.details["multiplicative_cases"] = sum(bool(r.details["derivation"]) for r in reps)
    return out


def lp_shift(cfg, seed):
    n, steps = 8, [1, 2, 3]
    mism = 0
    for ring in (True, False):
        res = extract_flow_on_support(WeightedSpace(n, np.ones(n)), shift_kernels(n, steps, ring))
        mism += int(len(res.support) != n) + sum(int(not np.array_equal(res.maps[float(k)], shift_with_absorption(n, k, ring))) for k in steps)
        mism += sum(d["mismatches"] for d in res.semigroup_defects)
    return Report("shift_extraction", mism == 0, float(mism), 0.0, None, {"sites": n, "steps": steps})


# --- negative controls -----------------------------------------------------------------


def neg_derivation_chain(cfg, seed):
    return _negated("derivation_chain_control", check_derivation(MatrixSemigroup(_Q2), np.array([1.0, 0.0]), [0, 1]), threshold=0.5)


def neg_martingale_bias(cfg, seed):
    q = np.array([[-1.0, 0.6, 0.2], [0.5, -0.5, 0.0], [0.3, 0.3, -0.9]])
    u = np.array([1.0, -0.5, 2.0])
    return _negated("martingale_bias_control", martingale_residual_test(FiniteChainSampler(q), u, q @ u + 1.0, 0.5, 1.0, 0, cfg.paths, seed, dt=1e-2))


def neg_ck_gbm(cfg, seed):
    rep = chapman_kolmogorov_mc(translation_flow(1.0), _gbm(), GaussianBump(1.0, 0.5), 0.5, 0.5, 1.0, cfg.paths, seed, sigmas=5.0)
    return _negated("chapman_kolmogorov_gbm_control", rep)


def neg_lp_mixing(cfg, seed):
    return _negated("lp_mixing_control", check_lp_multiplicative(WeightedSpace(2, [1.0, 1.0]), np.full((2, 2), 0.5)))


SUITES: dict[str, list[tuple[str, Callable]]] = {
    "kernel_identities": [
        ("semigroup_law", kernel_semigroup_law),
        ("laplace_consistency", kernel_laplace_consistency),
        ("resolvent_equation", kernel_resolvent_equation),
        ("resolvent_inversion", kernel_resolvent_inversion),
        ("potential_identity", kernel_potential_identity),
        ("beta_shift", kernel_beta_shift),
        ("dirac_round_trip", kernel_dirac_round_trip),
        ("dirac_rejection", kernel_dirac_rejection),
    ],
    "generator_identities": [
        ("matrix_resolvent_example", gen_matrix_resolvent_example),
        ("matrix_identities", gen_matrix_identities),
        ("flow_generator_estimate", gen_flow_estimate),
        ("flow_resolvent_identity", gen_flow_resolvent),
        ("flow_integral_identity", gen_flow_integral),
        ("flow_semigroup_ode", gen_flow_semigroup_ode),
        ("derivation_fleet", gen_derivation_fleet),
        ("martingale_chain", gen_martingale_chain),
        ("martingale_flow", gen_martingale_flow),
        ("heat_drift_commutation", gen_heat_drift_commutation),
    ],
    "flow_axioms": [
        ("axioms_linear", flow_axioms_linear),
        ("axioms_translation", flow_axioms_translation),
        ("axioms_rotation", flow_axioms_rotation),
        ("square_field_flagged", flow_axioms_square_flagged),
        ("flow_generator_derivation", flow_derivation_identity),
    ],
    "stopped_flows": [
        ("stopped_fixture", stopped_fixture),
        ("terminal_time_identity", stopped_terminal_identity),
        ("boundary_hit", stopped_boundary_hit),
        ("no_entry", stopped_no_entry),
    ],
    "composition": [
        ("ks_drifted_brownian", comp_ks),
        ("generator_sum", comp_generator_sum),
        ("finite_chapman_kolmogorov", comp_finite_ck),
        ("brownian_chapman_kolmogorov", comp_brownian_ck),
    ],
    "subordination": [
        ("laplace_self_tests", sub_self_tests),
        ("quadrature_vs_mc", sub_quadrature_vs_mc),
        ("poisson_generator_sum", sub_poisson_generator_sum),
        ("bochner_semigroup", sub_bochner),
    ],
    "superprocess_representation": [
        ("feller_total_mass", sp_feller),
        ("representation_shared_seed", sp_shared),
        ("representation_independent_seed", sp_independent),
        ("mean_mass", sp_mean_mass),
    ],
    "lp_multiplicative": [
        ("fixtures", lp_fixtures),
        ("derivation_agreement", lp_agreement),
        ("shift_extraction", lp_shift),
    ],
    "negative_controls": [
        ("derivation_chain", neg_derivation_chain),
        ("martingale_bias", neg_martingale_bias),
        ("chapman_kolmogorov_gbm", neg_ck_gbm),
        ("lp_mixing", neg_lp_mixing),
    ],
}
SUITES["all"] = [(f"{suite}/{name}", fn) for suite, checks in list(SUITES.items()) for name, fn in checks]


def run_suite(cfg: RunConfig) -> dict:
    """Run every check of ``cfg.suite`` and collect a versioned report."""
    cfg.validate()
    start = time.perf_counter()
    checks = []
    for name, fn in SUITES[cfg.suite]:
        seed = check_seed(cfg.seed, name.split("/")[-1])
        rep = fn(cfg, seed)
        entry = rep.to_dict()
        entry["check"] = name
        entry["seed"] = seed
        checks.append(entry)
    return {
        "schema": SCHEMA,
        "suite": cfg.suite,
        "seed": cfg.seed,
        "budget": cfg.budget(),
        "checks": checks,
        "verdict": all(c["verdict"] for c in checks),
        "wall_time": round(time.perf_counter() - start, 3),
    }


def deterministic_view(report: dict) -> dict:
    """The report without its wall time, for byte-level comparisons."""
    return jsonable({k: v for k, v in report.items() if k != "wall_time"})
