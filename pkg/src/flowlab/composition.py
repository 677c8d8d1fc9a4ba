"""Processes driven by a flow: ``X^Phi_t = Phi_t(X_t)``.

Samplers share a small protocol: ``init(x, n)`` returns ``n`` copies of the
starting state, ``step(state, dt, rng)`` advances by ``dt`` and
``marginal(x, t, n, rng)`` draws ``X_t`` directly.  Killed finite chains move
to the cemetery state ``-1``, where every function is taken to vanish.
"""

from __future__ import annotations

import csv
import math
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from . import _rng
from .flows import FlowHandle
from .functions import as_function
from .generator_lab import (
    MC_SIGMAS,
    ComposedSemigroup,
    FlowSemigroup,
    SemigroupEvaluator,
    estimate_generator,
)
from .kernel_core import GeneratorMatrix, row_indicator
from .reports import Report

CEMETERY = -1
MIN_KS_SAMPLES = 1000


class PreconditionUnverified(RuntimeError):
    pass


class ProcessSampler:
    kind = "abstract"
    dim = 1
    deterministic = False

    def init(self, x, n: int) -> np.ndarray:
        """``n`` starting states: a single point is repeated, a batch of ``n`` points is copied."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            if x.ndim == 1 and x.size == n:
                return x.copy()
            return np.full(n, float(x.reshape(-1)[0]))
        if x.ndim == 2 and x.shape == (n, self.dim):
            return x.copy()
        return np.tile(x.reshape(1, self.dim), (n, 1))

    def step(self, state, dt: float, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def marginal(self, x, t: float, n: int, rng: np.random.Generator, dt: float = 1e-3) -> np.ndarray:
        state = self.init(x, n)
        k = int(math.ceil(t / dt - 1e-9)) if t > 0 else 0
        for _ in range(k):
            state = self.step(state, t / k, rng)
        return state

    def sample(self, x, t_grid: Sequence[float], n: int, seed: int) -> np.ndarray:
        """Paths on ``t_grid`` (starting at ``t_grid[0]``), shape ``(n, len(t_grid)) [+ (dim,)]``."""
        grid = np.asarray(t_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("t_grid must be strictly increasing")

        def work(size, rng):
            state = self.init(x, size)
            out = [state]
            for dt in np.diff(grid):
                state = self.step(state, float(dt), rng)
                out.append(state)
            return np.stack(out, axis=1)

        return _rng.map_chunks(n, seed, ("paths", self.kind), work)

    def is_dead(self, state) -> np.ndarray:
        return np.zeros(np.shape(state)[:1], dtype=bool)


class FiniteChainSampler(ProcessSampler):
    """Continuous-time chain sampled through ``exp(q dt)`` transitions, with a cemetery column."""

    kind = "finite_chain"

    def __init__(self, q):
        self.q = q if isinstance(q, GeneratorMatrix) else GeneratorMatrix(q)
        self._cache: dict[float, np.ndarray] = {}

    def _cumulative(self, dt: float) -> np.ndarray:
        key = float(dt)
        if key not in self._cache:
            p = np.clip(scipy.linalg.expm(dt * self.q.q), 0.0, None)
            n = self.q.n
            aug = np.zeros((n + 1, n + 1))
            aug[:n, :n] = p
            aug[:n, n] = np.clip(1.0 - p.sum(axis=1), 0.0, None)
            aug[n, n] = 1.0
            cum = np.cumsum(aug, axis=1)
            cum[:, -1] = 1.0
            self._cache[key] = cum
        return self._cache[key]

    def init(self, x, n):
        x = np.asarray(x)
        if x.ndim == 1 and x.size == n:
            return x.astype(np.int64)
        return np.full(n, int(x.reshape(-1)[0]), dtype=np.int64)

    def step(self, state, dt, rng):
        cum = self._cumulative(dt)
        u = rng.random(state.shape[0])
        # row -1 of the augmented matrix is the cemetery row
        nxt = (u[:, None] > cum[state]).sum(axis=1)
        return np.where(nxt == self.q.n, CEMETERY, nxt)

    def marginal(self, x, t, n, rng, dt=None):
        state = self.init(x, n)
        return state if t == 0 else self.step(state, t, rng)

    def is_dead(self, state):
        return np.asarray(state) == CEMETERY


class BrownianSampler(ProcessSampler):
    """``x + drift t + sigma W_t`` with exact Gaussian increments."""

    kind = "brownian"

    def __init__(self, sigma: float = 1.0, dim: int = 1, drift=0.0):
        self.sigma, self.dim = float(sigma), int(dim)
        self.drift = np.asarray(drift, dtype=float) if dim > 1 else float(drift)

    def _noise(self, shape, rng):
        return rng.standard_normal(shape)

    def step(self, state, dt, rng):
        return state + self.drift * dt + self.sigma * math.sqrt(dt) * self._noise(state.shape, rng)

    def marginal(self, x, t, n, rng, dt=None):
        state = self.init(x, n)
        return state if t == 0 else self.step(state, t, rng)


class EulerSDESampler(ProcessSampler):
    """Euler-Maruyama for ``dX = b(X) dt + s(X) dW`` with internal step ``step`` (scalar noise per coordinate)."""

    kind = "euler_sde"

    def __init__(self, drift: Callable, dispersion: Callable, step: float = 1e-2, dim: int = 1):
        if step <= 0:
            raise ValueError("step must be positive")
        self.drift, self.dispersion, self.h, self.dim = drift, dispersion, float(step), int(dim)

    def step(self, state, dt, rng):
        k = max(1, int(math.ceil(dt / self.h - 1e-9)))
        h = dt / k
        for _ in range(k):
            dw = math.sqrt(h) * rng.standard_normal(state.shape)
            state = state + self.drift(state) * h + self.dispersion(state) * dw
        return state

    def marginal(self, x, t, n, rng, dt=None):
        state = self.init(x, n)
        return state if t == 0 else self.step(state, t, rng)


class FlowSampler(ProcessSampler):
    """Deterministic paths ``Phi_t(x)``."""

    kind = "flow"
    deterministic = True

    def __init__(self, flow: FlowHandle):
        self.flow = flow
        self.dim = flow.dim

    def step(self, state, dt, rng):
        return self.flow.evaluate(state, dt)

    def marginal(self, x, t, n, rng, dt=None):
        return self.flow.evaluate(self.init(x, n), t)


class ComposedSampler(ProcessSampler):
    """Pathwise ``Phi_t(X_t)``; dead chain states stay at the cemetery."""

    kind = "composed"

    def __init__(self, base: ProcessSampler, flow: FlowHandle):
        if base.dim != flow.dim:
            raise ValueError("flow and base process live on different spaces")
        self.base, self.flow = base, flow
        self.dim = base.dim
        self.kind = f"composed_{base.kind}"

    def _push(self, states, t):
        dead = self.base.is_dead(states)
        if not dead.any():
            return self.flow.evaluate(states, t)
        out = np.array(states, copy=True)
        out[~dead] = self.flow.evaluate(states[~dead], t)
        return out

    def marginal(self, x, t, n, rng, dt=None):
        return self._push(self.base.marginal(x, t, n, rng), t)

    def sample(self, x, t_grid, n, seed):
        paths = self.base.sample(x, t_grid, n, seed)
        out = np.empty_like(paths, dtype=float)
        for k, t in enumerate(t_grid):
            out[:, k] = self._push(paths[:, k], float(t))
        return out


def compose_process(base: ProcessSampler, flow: FlowHandle) -> ComposedSampler:
    return ComposedSampler(base, flow)


def composed_kernel(S: FlowSemigroup, T: SemigroupEvaluator, t: float, f, x, commutation: Report | None = None, force: bool = False):
    """``S_t T_t f(x)``; refuses unless a passing commutation report is supplied or ``force`` is set."""
    if not force and (commutation is None or not commutation.verdict):
        raise PreconditionUnverified("composition needs a passing check_commutation report (or force=True)")
    return ComposedSemigroup(S, T).evaluate(t, f, x)[0]


# --- distribution tests ---------------------------------------------------------


def ks_statistic(samples, cdf: Callable, cdf_left: Callable | None = None) -> float:
    """One-sample Kolmogorov-Smirnov distance, exact for references with atoms when ``cdf_left`` is given."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    Fl = np.asarray(cdf_left(x), dtype=float) if cdf_left is not None else F
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(Fl - (i - 1) / n), 0.0))


def distributional_match(samples, reference, alpha_level: float = 0.01) -> Report:
    """Kolmogorov-Smirnov test of ``samples`` against a cdf, an atom-aware cdf pair or a second sample.

    ``reference`` may be a callable cdf, a ``(cdf, cdf_left)`` tuple, or an
    array of reference draws (two-sample test).
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < MIN_KS_SAMPLES:
        raise ValueError(f"need at least {MIN_KS_SAMPLES} samples, got {samples.size}")
    if isinstance(reference, np.ndarray):
        res = stats.ks_2samp(samples, reference.ravel())
        d, p, kind = float(res.statistic), float(res.pvalue), "two_sample"
    else:
        cdf, left = reference if isinstance(reference, tuple) else (reference, None)
        d = ks_statistic(samples, cdf, left)
        p = float(stats.kstwo.sf(d, samples.size))
        kind = "one_sample"
    return Report(
        "distributional_match",
        p >= alpha_level,
        d,
        float(stats.kstwo.isf(alpha_level, samples.size)),
        None,
        {"statistic": d, "p_value": p, "alpha_level": alpha_level, "n": samples.size, "kind": kind},
    )


# --- generator sum ----------------------------------------------------------------


def _generator_values(est, u, x):
    if isinstance(est, SemigroupEvaluator):
        g = estimate_generator(est, u, x)
        return np.asarray(g.value), np.asarray(g.error_bar)
    vals = np.asarray(est(x), dtype=float)
    return vals, np.zeros_like(vals)


def check_generator_sum(L, D, LPhi, u, points, tol: float = 5e-3, name: str = "generator_sum") -> Report:
    """``|L^Phi u - L u - D u|`` at each point.

    Each estimator is either a semigroup evaluator (generator estimated from
    difference quotients) or a callable giving closed-form generator values.
    The verdict compares the residual with ``tol`` plus the combined error bars.
    """
    x = np.asarray(points, dtype=float)
    lp, ep = _generator_values(LPhi, u, x)
    l, el = _generator_values(L, u, x)
    d, ed = _generator_values(D, u, x)
    res = np.abs(lp - l - d)
    bars = ep + el + ed
    verdict = bool(np.all(res <= tol + bars))
    k = int(np.argmax(res))
    return Report(
        name,
        verdict,
        float(res.max()),
        tol,
        {"point": float(x.ravel()[k])},
        {"residuals": res, "error_bars": bars, "LPhi": lp, "L": l, "D": d, "points": x, "function": getattr(u, "name", "u")},
    )


# --- Chapman-Kolmogorov --------------------------------------------------------------


def finite_chapman_kolmogorov(q, state_map, t: float, s: float, tol: float = 1e-10) -> Report:
    """``(P e^{tq})(P e^{sq})`` against ``P^2 e^{(t+s)q}`` for a permutation ``P``; exact iff ``P`` commutes with ``q``."""
    q = q if isinstance(q, GeneratorMatrix) else GeneratorMatrix(q)
    P = row_indicator(state_map, q.n)
    et, es, ets = (scipy.linalg.expm(r * q.q) for r in (t, s, t + s))
    lhs = (P @ et) @ (P @ es)
    rhs = P @ P @ ets
    res = float(np.abs(lhs - rhs).max())
    comm = float(np.abs(P @ q.q - q.q @ P).max())
    return Report("finite_chapman_kolmogorov", res <= tol, res, tol, None, {"commutator": comm, "t": t, "s": s})


def chapman_kolmogorov_mc(flow: FlowHandle, base: ProcessSampler, f, t: float, s: float, x, n: int, seed: int, sigmas: float = MC_SIGMAS) -> Report:
    """Monte Carlo comparison of ``T^Phi_{t+s} f(x)`` with ``T^Phi_t T^Phi_s f(x)``, ``T^Phi_r = S_r T_r``.

    The iterated side is simulated by nesting one inner path per outer path,
    which is unbiased for the nested expectation.
    """
    f = as_function(f, flow.dim)

    def work(size, rng):
        direct = f(base.marginal(flow.evaluate(base.init(x, size), t + s), t + s, size, rng))
        y = base.marginal(flow.evaluate(base.init(x, size), t), t, size, rng)
        nested = f(base.marginal(flow.evaluate(y, s), s, size, rng))
        return np.stack([direct, nested], axis=1)

    data = _rng.map_chunks(n, seed, ("chapman_kolmogorov",), work)
    diff = data[:, 0] - data[:, 1]
    gap = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(n))
    return Report(
        "chapman_kolmogorov",
        abs(gap) <= sigmas * se,
        abs(gap),
        sigmas * se,
        None,
        {"direct": data[:, 0].mean(), "iterated": data[:, 1].mean(), "se": se, "gap_over_se": abs(gap) / se if se > 0 else math.inf, "n": n, "seed": seed},
    )


def export_paths_csv(paths, t_grid, seed: int, path) -> None:
    """Rows ``seed, path, t, value...``."""
    paths = np.asarray(paths)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = 1 if paths.ndim == 2 else paths.shape[2]
        w.writerow(["seed", "path", "t"] + [f"x{i + 1}" for i in range(d)])
        for j, row in enumerate(paths):
            for t, v in zip(t_grid, row):
                w.writerow([seed, j, repr(float(t))] + [repr(float(a)) for a in np.ravel(v)])
