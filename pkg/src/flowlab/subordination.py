"""Subordinators, Bochner subordination of flow semigroups and the flow run at ``t + xi_t``.

A :class:`SubordinatorSpec` bundles the Laplace exponent ``phi`` (so that
``E exp(-lambda xi_t) = exp(-t phi(lambda))``), an exact sampler and, for
the shipped kinds, a quadrature rule for ``mu_t``.  Construction runs a Monte
Carlo self-test of the Laplace transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import _rng
from .composition import ProcessSampler, check_generator_sum
from .flows import FlowHandle, flow_at_times
from .functions import ShiftMixture, as_function
from .generator_lab import MC_SIGMAS, FlowSemigroup, SemigroupEvaluator
from .reports import Report

KINDS = ("poisson", "gamma", "stable_half")
QUAD_INTERVALS = 1000
TAIL_MASS = 1e-9
SELF_TEST_N = 100_000
SELF_TEST_LAMBDAS = (0.5, 1.0, 2.0)


class SelfTestError(ValueError):
    def __init__(self, report: Report):
        self.report = report
        super().__init__(f"Laplace self-test failed: {report.summary()}")


class QuadratureUnavailable(ValueError):
    pass


def _simpson_weights(n_intervals: int) -> np.ndarray:
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


@dataclass
class SubordinatorSpec:
    """Convolution semigroup ``mu_t`` on the half line.

    Kinds: ``poisson`` (params ``rate``, optional ``jump``), ``gamma``
    (``shape`` per unit time, ``scale``), ``stable_half`` (``scale`` k, so
    ``phi(lambda) = k sqrt(lambda)``) and ``custom`` (``laplace_exponent`` and
    ``sampler(t, n, rng)`` are then mandatory).
    """

    kind: str
    params: dict = field(default_factory=dict)
    laplace_exponent: Callable | None = None
    sampler: Callable | None = None
    seed: int = 0
    self_test: bool = True
    self_test_report: Report | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        p = self.params
        if self.kind == "poisson":
            rate, jump = float(p.get("rate", 1.0)), float(p.get("jump", 1.0))
            if rate < 0 or jump <= 0:
                raise ValueError("poisson needs rate >= 0 and jump > 0")
            self.laplace_exponent = lambda lam: rate * (1.0 - np.exp(-np.asarray(lam, dtype=float) * jump))
        elif self.kind == "gamma":
            shape, scale = float(p.get("shape", 1.0)), float(p.get("scale", 1.0))
            if shape <= 0 or scale <= 0:
                raise ValueError("gamma needs shape > 0 and scale > 0")
            self.laplace_exponent = lambda lam: shape * np.log1p(scale * np.asarray(lam, dtype=float))
        elif self.kind == "stable_half":
            k = float(p.get("scale", 1.0))
            if k <= 0:
                raise ValueError("stable_half needs scale > 0")
            self.laplace_exponent = lambda lam: k * np.sqrt(np.asarray(lam, dtype=float))
        elif self.kind == "custom":
            if self.laplace_exponent is None or self.sampler is None:
                raise ValueError("custom subordinators need a laplace_exponent and a sampler")
        else:
            raise ValueError(f"unknown subordinator kind {self.kind!r}; expected one of {KINDS + ('custom',)}")
        if self.self_test:
            rep = laplace_self_test(self, seed=self.seed)
            self.self_test_report = rep
            if not rep.verdict:
                raise SelfTestError(rep)

    # -- sampling --

    @property
    def is_zero(self) -> bool:
        return self.kind == "poisson" and float(self.params.get("rate", 1.0)) == 0.0

    def draw(self, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        if t == 0 or self.is_zero:
            return np.zeros(n)
        p = self.params
        if self.kind == "poisson":
            return float(p.get("jump", 1.0)) * rng.poisson(float(p.get("rate", 1.0)) * t, n)
        if self.kind == "gamma":
            return rng.gamma(float(p.get("shape", 1.0)) * t, float(p.get("scale", 1.0)), n)
        if self.kind == "stable_half":
            z = rng.standard_normal(n)
            return (float(p.get("scale", 1.0)) * t) ** 2 / (2.0 * z * z)
        return np.asarray(self.sampler(t, n, rng), dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    # -- quadrature --

    def _distribution(self, t):
        p = self.params
        if self.kind == "gamma":
            return stats.gamma(float(p.get("shape", 1.0)) * t, scale=float(p.get("scale", 1.0)))
        if self.kind == "stable_half":
            return stats.levy(scale=(float(p.get("scale", 1.0)) * t) ** 2 / 2.0)
        raise QuadratureUnavailable(f"no density for kind {self.kind!r}")

    def quadrature(self, t: float, intervals: int = QUAD_INTERVALS) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``int g dmu_t ~ sum_j w_j g(s_j)``.

        Poisson is exact on its atoms.  Densities use composite Simpson in
        ``log s`` on ``[s_lo, s_hi]``, where ``s_hi`` leaves tail mass
        ``TAIL_MASS`` and the mass below ``s_lo`` sits on an atom at 0.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        if t == 0 or self.is_zero:
            return np.zeros(1), np.ones(1)
        if self.kind == "poisson":
            rate, jump = float(self.params.get("rate", 1.0)), float(self.params.get("jump", 1.0))
            pois = stats.poisson(rate * t)
            k = np.arange(int(pois.ppf(1 - 1e-15)) + 6)
            return jump * k, pois.pmf(k)
        dist = self._distribution(t)
        s_hi = float(dist.isf(TAIL_MASS))
        s_lo = max(float(dist.ppf(TAIL_MASS)), 1e-12 * min(1.0, s_hi))
        y = np.linspace(math.log(s_lo), math.log(s_hi), intervals + 1)
        s = np.exp(y)
        w = _simpson_weights(intervals) * (y[1] - y[0]) * dist.pdf(s) * s
        atom = float(dist.cdf(s_lo))
        return np.concatenate([[0.0], s]), np.concatenate([[atom], w])


def laplace_self_test(spec: SubordinatorSpec, t: float = 1.0, n: int = SELF_TEST_N, lambdas=SELF_TEST_LAMBDAS, seed: int = 0) -> Report:
    """Empirical ``E exp(-lambda xi_t)`` against ``exp(-t phi(lambda))`` at three standard errors."""
    xi = _rng.map_chunks(n, seed, ("laplace_self_test", spec.kind), lambda size, rng: spec.draw(t, size, rng))
    rows = []
    for lam in lambdas:
        e = np.exp(-lam * xi)
        est, se = float(e.mean()), float(e.std(ddof=1) / math.sqrt(n))
        exact = float(np.exp(-t * spec.laplace_exponent(lam)))
        rows.append((lam, est, exact, se))
    gaps = np.array([abs(r[1] - r[2]) for r in rows])
    ses = np.array([r[3] for r in rows])
    ok = bool(np.all(gaps <= MC_SIGMAS * ses + 1e-12))
    k = int(np.argmax(gaps - MC_SIGMAS * ses))
    return Report(
        f"laplace_self_test[{spec.kind}]",
        ok,
        float(gaps.max()),
        float(MC_SIGMAS * ses.max()),
        {"lambda": rows[k][0]},
        {"rows": [{"lambda": r[0], "empirical": r[1], "exact": r[2], "se": r[3]} for r in rows], "n": n, "t": t, "seed": seed},
    )


def sample_subordinator(spec: SubordinatorSpec, t: float, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    return _rng.map_chunks(n, seed, ("subordinator", spec.kind, repr(float(t))), lambda size, rng: spec.draw(t, size, rng))


# --- subordinate semigroup ----------------------------------------------------------


class SubordinateSemigroup(SemigroupEvaluator):
    """``S^mu_t f(x) = int f(Phi_s(x)) mu_t(ds)``, optionally followed by the flow itself.

    With ``shift=True`` the evaluator is ``S_t S^mu_t``, the semigroup of
    ``Phi_{t + xi_t}(x)``.  ``mode`` is ``quadrature`` or ``mc``.
    """

    def __init__(self, S: FlowSemigroup, spec: SubordinatorSpec, mode: str = "quadrature", n: int = 100_000, seed: int = 0, shift: bool = False):
        if mode not in ("quadrature", "mc"):
            raise ValueError("mode must be 'quadrature' or 'mc'")
        if mode == "quadrature" and spec.kind == "custom":
            raise QuadratureUnavailable("custom subordinators support mc mode only")
        self.S, self.spec, self.mode, self.n, self.seed, self.shift = S, spec, mode, int(n), int(seed), shift
        self.backend = "quadrature" if mode == "quadrature" else "mc"
        self.deterministic = mode == "quadrature"

    def describe(self):
        pre = "S_t" if self.shift else ""
        return f"{pre}subordinate[{self.spec.kind},{self.mode}]"

    def evaluate(self, t, f, x):
        flow = self.S.flow
        f = as_function(f, flow.dim)
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1) if flow.dim == 1 else x.reshape(-1, flow.dim)
        offset = float(t) if self.shift else 0.0
        means, ses = [], []
        if self.mode == "quadrature":
            nodes, weights = self.spec.quadrature(t)
            for p in pts:
                means.append(float(weights @ f(flow_at_times(flow, p, nodes + offset))))
                ses.append(0.0)
        else:
            xi = _rng.map_chunks(self.n, self.seed, ("subordinate_mc", self.spec.kind), lambda size, rng: self.spec.draw(t, size, rng))
            for p in pts:
                v = f(flow_at_times(flow, p, xi + offset))
                means.append(float(v.mean()))
                ses.append(float(v.std(ddof=1) / math.sqrt(v.size)))
        shape = x.shape if flow.dim == 1 else x.shape[:-1]
        return np.asarray(means).reshape(shape), np.asarray(ses).reshape(shape)


def subordinate_semigroup_eval(S: FlowSemigroup, spec: SubordinatorSpec, t: float, f, x, mode: str = "quadrature", n: int = 100_000, seed: int = 0):
    """``(value, standard_error)`` of ``S^mu_t f(x)``."""
    return SubordinateSemigroup(S, spec, mode, n, seed).evaluate(t, f, x)


class SubordinatedFlowSampler(ProcessSampler):
    """``Y_t = Phi_{t + xi_t}(x)``."""

    kind = "subordinated_flow"

    def __init__(self, flow: FlowHandle, spec: SubordinatorSpec):
        self.flow, self.spec = flow, spec
        self.dim = flow.dim

    def marginal(self, x, t, n, rng, dt=None):
        xi = self.spec.draw(t, n, rng)
        return flow_at_times(self.flow, x, t + xi)


def compose_subordinate(flow: FlowHandle, spec: SubordinatorSpec) -> SubordinatedFlowSampler:
    return SubordinatedFlowSampler(flow, spec)


# --- potentials and generators -----------------------------------------------------------


def potential_measure(spec: SubordinatorSpec, alpha: float, t_intervals: int = 800, s_intervals: int = QUAD_INTERVALS, t_min: float = 1e-7):
    """Nodes and weights of ``nu_alpha = int_0^inf e^{-alpha t} mu_t dt``.

    Poisson atoms are exact: ``rate^k / (alpha + rate)^{k+1}`` at ``k * jump``.
    Density kinds integrate ``e^{-alpha t} p_t(s)`` over a log-spaced time grid
    on ``[t_min, 40/alpha]``; the time mass below ``t_min`` and the space mass
    below the lowest node are placed on an atom at 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if spec.is_zero:
        return np.zeros(1), np.array([1.0 / alpha])
    if spec.kind == "poisson":
        rate, jump = float(spec.params.get("rate", 1.0)), float(spec.params.get("jump", 1.0))
        r = rate / (alpha + rate)
        k = np.arange(int(math.ceil(math.log(1e-15) / math.log(r))) + 1) if r > 0 else np.zeros(1)
        return jump * k, r**k / (alpha + rate)
    if spec.kind == "custom":
        raise QuadratureUnavailable("custom subordinators have no potential quadrature")
    horizon = 40.0 / alpha
    ly = np.linspace(math.log(t_min), math.log(horizon), t_intervals + 1)
    ts = np.exp(ly)
    wt = _simpson_weights(t_intervals) * (ly[1] - ly[0]) * ts * np.exp(-alpha * ts)
    far = spec._distribution(horizon)
    s_hi = float(far.isf(TAIL_MASS))
    s_lo = 1e-12 * min(1.0, s_hi)
    ys = np.linspace(math.log(s_lo), math.log(s_hi), s_intervals + 1)
    s = np.exp(ys)
    ws = _simpson_weights(s_intervals) * (ys[1] - ys[0]) * s
    dens = np.zeros(s.size)
    atom = t_min
    for t, w in zip(ts, wt):
        dist = spec._distribution(t)
        dens += w * dist.pdf(s)
        atom += w * float(dist.cdf(s_lo))
    return np.concatenate([[0.0], s]), np.concatenate([[atom], ws * dens])


def subordinate_potential(g, spec: SubordinatorSpec, alpha: float, velocity: float = 1.0) -> ShiftMixture:
    """``V^mu_alpha g`` for the translation flow with the given velocity."""
    nodes, weights = potential_measure(spec, alpha)
    return ShiftMixture(as_function(g), velocity * nodes, weights, name=f"Vmu_{alpha:g}[{getattr(g, 'name', 'g')}]")


def poisson_generator(u, spec: SubordinatorSpec, velocity: float = 1.0) -> Callable:
    """Closed-form ``D^mu u(x) = rate (u(x + v jump) - u(x))`` for the translation flow."""
    if spec.kind != "poisson":
        raise ValueError("closed form available for poisson subordinators only")
    rate, jump = float(spec.params.get("rate", 1.0)), float(spec.params.get("jump", 1.0))
    u = as_function(u)
    return lambda x: rate * (u(np.asarray(x) + velocity * jump) - u(np.asarray(x)))


def check_subordinate_generator_sum(Dmu, D, LPhi, u, points, tol: float = 5e-3) -> Report:
    """``|L^Phi u - D^mu u - D u|`` with the same estimator conventions as the composition check."""
    return check_generator_sum(Dmu, D, LPhi, u, points, tol, name="subordinate_generator_sum")


def check_bochner_semigroup(S: FlowSemigroup, spec: SubordinatorSpec, f, t: float, s: float, x, tol: float = 1e-6) -> Report:
    """Quadrature check of ``S^mu_{t+s} f = S^mu_t S^mu_s f``."""
    ev = SubordinateSemigroup(S, spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    direct = ev.evaluate(t + s, f, x)[0]
    inner = ev.image(s, f)
    iterated = ev.evaluate(t, inner, x)[0]
    res = float(np.abs(direct - iterated).max())
    return Report("bochner_semigroup", res <= tol, res, tol, None, {"kind": spec.kind, "t": t, "s": s, "direct": direct, "iterated": iterated})


def check_subordinate_commutation(S: FlowSemigroup, spec: SubordinatorSpec, f, t_flow: float, t: float, x, tol: float = 1e-10) -> Report:
    """``S_{t'} S^mu_t f = S^mu_t S_{t'} f`` in quadrature."""
    ev = SubordinateSemigroup(S, spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = ev.evaluate(t, f, S.flow.evaluate(x, t_flow))[0]
    b = ev.evaluate(t, S.image(t_flow, f), x)[0]
    res = float(np.abs(a - b).max())
    return Report("subordinate_commutation", res <= tol, res, tol, None, {"kind": spec.kind})
