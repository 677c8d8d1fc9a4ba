"""Semigroup evaluators, generator estimation and checks of the generator identities.

An evaluator answers ``evaluate(t, f, x) -> (values, standard_errors)``.  The
matrix backend is exact, flow and quadrature backends are deterministic but
carry discretization error, and Monte Carlo backends attach standard errors.
The tolerance schedule mirrors that split: 1e-8 for exact backends, 1e-3 for
deterministic approximations and three standard errors for Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from . import _rng
from .flows import FlowHandle
from .functions import FromCallable, Function, as_function
from .kernel_core import GeneratorMatrix, resolvent, semigroup_at
from .reports import Report

H_LADDER = (1e-2, 5e-3, 2.5e-3)
EXACT_TOL = 1e-8
DETERMINISTIC_TOL = 1e-3
MC_SIGMAS = 3.0


class NoLimitError(ArithmeticError):
    def __init__(self, quotients, where=None):
        self.quotients = quotients
        self.where = where
        super().__init__(f"difference quotients diverge as h decreases: {quotients}")


class TruncationError(ArithmeticError):
    pass


class BudgetError(RuntimeError):
    pass


# --- evaluators ---------------------------------------------------------------


class SemigroupEvaluator:
    backend = "abstract"
    exact = False
    deterministic = True

    def evaluate(self, t: float, f, x) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def evaluate_many(self, times: Sequence[float], f, x) -> np.ndarray:
        """Values at every time, shape ``(len(times),) + value shape``."""
        return np.stack([self.evaluate(float(t), f, x)[0] for t in times])

    def image(self, t: float, f) -> Function:
        """``T_t f`` as a function (values only)."""
        return FromCallable(lambda y: self.evaluate(t, f, y)[0], name=f"T_{t:g}f")

    def tolerance(self, se=0.0) -> float:
        if self.exact:
            return EXACT_TOL
        if self.deterministic:
            return DETERMINISTIC_TOL
        return MC_SIGMAS * float(np.max(se))

    def describe(self) -> str:
        return self.backend


def _zero_like(vals):
    return np.zeros(np.shape(vals))


class MatrixSemigroup(SemigroupEvaluator):
    """``T_t = exp(t q)`` on a finite state space; functions are vectors, points are state indices."""

    backend = "matrix"
    exact = True

    def __init__(self, q):
        self.q = q if isinstance(q, GeneratorMatrix) else GeneratorMatrix(q)

    def _vec(self, f) -> np.ndarray:
        if callable(f) and not isinstance(f, np.ndarray):
            return np.asarray(f(np.arange(self.q.n)), dtype=float)
        return np.asarray(f, dtype=float)

    def evaluate(self, t, f, x):
        vals = (semigroup_at(self.q, t).p @ self._vec(f))[np.asarray(x, dtype=int)]
        return vals, _zero_like(vals)

    def image(self, t, f):
        return semigroup_at(self.q, t).p @ self._vec(f)

    def generator(self, u) -> np.ndarray:
        return self.q.q @ self._vec(u)

    def resolvent_image(self, alpha, f) -> np.ndarray:
        return resolvent(self.q, alpha) @ self._vec(f)


class FlowSemigroup(SemigroupEvaluator):
    """``S_t f = f o Phi_t``."""

    backend = "flow"

    def __init__(self, flow: FlowHandle):
        self.flow = flow

    def evaluate(self, t, f, x):
        vals = as_function(f, self.flow.dim)(self.flow.evaluate(x, t))
        return vals, _zero_like(vals)

    def evaluate_many(self, times, f, x):
        return as_function(f, self.flow.dim)(self.flow.trajectory(x, times))

    def image(self, t, f):
        f = as_function(f, self.flow.dim)
        flow = self.flow
        return FromCallable(lambda y: f(flow.evaluate(y, t)), name=f"S_{t:g}[{f.name}]", dim=flow.dim)


class HeatSemigroup(SemigroupEvaluator):
    """``E f(x + sigma W_t)`` by Gauss-Hermite quadrature (tensor grid for ``dim > 1``)."""

    backend = "quadrature"

    def __init__(self, sigma: float = 1.0, dim: int = 1, nodes: int = 64):
        self.sigma, self.dim = float(sigma), int(dim)
        z, w = np.polynomial.hermite_e.hermegauss(nodes if dim == 1 else min(nodes, 32))
        w = w / w.sum()
        if self.dim == 1:
            self.z, self.w = z.reshape(-1, 1), w
        else:
            grids = np.meshgrid(*([z] * self.dim), indexing="ij")
            self.z = np.stack([g.ravel() for g in grids], axis=1)
            wg = np.meshgrid(*([w] * self.dim), indexing="ij")
            self.w = np.prod(np.stack([g.ravel() for g in wg]), axis=0)

    def evaluate(self, t, f, x):
        f = as_function(f, self.dim)
        x = np.asarray(x, dtype=float)
        scale = self.sigma * math.sqrt(t)
        if self.dim == 1:
            pts = x[None, ...] + scale * self.z.reshape((-1,) + (1,) * x.ndim)
        else:
            pts = x[None, ...] + scale * self.z.reshape((-1,) + (1,) * (x.ndim - 1) + (self.dim,))
        vals = np.tensordot(self.w, f(pts), axes=(0, 0))
        return vals, _zero_like(vals)


class ComposedSemigroup(SemigroupEvaluator):
    """``S_t T_t f(x) = (T_t f)(Phi_t(x))`` for a flow semigroup ``S`` and any ``T``."""

    def __init__(self, S: FlowSemigroup, T: SemigroupEvaluator):
        if not isinstance(S, FlowSemigroup):
            raise TypeError("the outer semigroup must be a flow semigroup")
        self.S, self.T = S, T
        self.backend = T.backend if T.backend != "matrix" else "quadrature"
        self.exact = False
        self.deterministic = T.deterministic

    def evaluate(self, t, f, x):
        return self.T.evaluate(t, f, self.S.flow.evaluate(x, t))

    def describe(self):
        return f"composed({self.S.describe()},{self.T.describe()})"


class MonteCarloSemigroup(SemigroupEvaluator):
    """Empirical ``E f(X_t^x)`` from a sampler's ``marginal(x, t, n, rng)``.

    All calls reuse one counter-based stream (common random numbers), so
    differences between evaluations carry less noise than independent runs.
    """

    backend = "mc"
    deterministic = False

    def __init__(self, sampler, n_paths: int, seed: int, label: str = "mc", workers: int = 1):
        self.sampler, self.n_paths, self.seed, self.label, self.workers = sampler, int(n_paths), int(seed), label, workers

    def _draws(self, point, t):
        return _rng.map_chunks(
            self.n_paths, self.seed, (self.label,), lambda size, rng: self.sampler.marginal(point, t, size, rng), self.workers
        )

    def evaluate(self, t, f, x):
        f = as_function(f, getattr(self.sampler, "dim", 1))
        dim = getattr(self.sampler, "dim", 1)
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1) if dim == 1 else x.reshape(-1, dim)
        means, ses = [], []
        for p in pts:
            vals = f(self._draws(p, t)) if t > 0 else f(np.asarray(p)[None])
            means.append(vals.mean())
            ses.append(vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0)
        shape = x.shape if dim == 1 else x.shape[:-1]
        return np.asarray(means).reshape(shape), np.asarray(ses).reshape(shape)

    def describe(self):
        return f"mc({getattr(self.sampler, 'kind', 'sampler')},n={self.n_paths},seed={self.seed})"


# --- potentials built by quadrature --------------------------------------------


class ResolventImage(Function):
    """``U_alpha f(y) ~ int_0^H e^{-alpha t} T_t f(y) dt`` by composite Simpson."""

    def __init__(self, T: SemigroupEvaluator, f, alpha: float, step: float = 1e-3, horizon: float | None = None):
        self.T, self.f, self.alpha = T, f, float(alpha)
        self.horizon = 20.0 / alpha if horizon is None else float(horizon)
        n = max(2, int(math.ceil(self.horizon / step)))
        n += n % 2
        self.times = np.linspace(0.0, self.horizon, n + 1)
        self.weight = np.exp(-self.alpha * self.times)
        self.dim = getattr(getattr(T, "flow", None), "dim", getattr(T, "dim", 1))
        self.name = f"U_{alpha:g}[{getattr(f, 'name', 'f')}]"

    def __call__(self, y):
        vals = self.T.evaluate_many(self.times, self.f, y)
        vals = vals * self.weight.reshape((-1,) + (1,) * (vals.ndim - 1))
        return simpson(vals, x=self.times, axis=0)


def truncation_bound(f, alpha: float, horizon: float) -> float:
    sup = as_function(f).sup_norm() if not isinstance(f, np.ndarray) else float(np.abs(f).max())
    return sup * math.exp(-alpha * horizon) / alpha


# --- generator estimation -------------------------------------------------------


@dataclass
class GeneratorEstimate:
    value: np.ndarray
    half_widths: list = field(default_factory=list)
    error_bar: np.ndarray | float = 0.0
    se: np.ndarray | float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.error_bar) < 0):
            raise ValueError("error bar must be nonnegative")


def _richardson(hs: np.ndarray, qs: np.ndarray):
    """Richardson table over the ladder, each step removing one power of ``h``.

    Returns the final extrapolant per column, its linear weights on the raw
    quotients, and the extrapolation defect ``|T[-1,-1] - T[-1,-2]|``.
    """
    n = len(hs)
    flat = qs.reshape(n, -1)

    def table(vals):
        rows = [[v] for v in vals]
        for i in range(1, n):
            for j in range(1, i + 1):
                prev, left = rows[i][j - 1], rows[i - 1][j - 1]
                rows[i].append(prev + (prev - left) * hs[i] / (hs[i - j] - hs[i]))
        return rows

    rows = table(list(flat))
    value = rows[-1][-1]
    defect = np.abs(rows[-1][-1] - rows[-1][-2]) if n > 1 else np.zeros_like(value)
    weights = np.array([table(list(np.eye(n)[k]))[-1][-1] for k in range(n)])
    return value, weights, defect


def _diverging(qs: np.ndarray, ses: np.ndarray) -> np.ndarray:
    """Quotients moving monotonically away with non-shrinking steps, above noise."""
    if len(qs) < 3:
        return np.zeros(qs.shape[1:], dtype=bool)
    d = np.diff(qs, axis=0)
    same = np.all(np.sign(d) == np.sign(d[0]), axis=0)
    growing = np.all(np.abs(d[1:]) >= np.abs(d[:-1]), axis=0)
    noise = MC_SIGMAS * ses.max(axis=0) + 1e-6 * (1 + np.abs(qs).max(axis=0))
    return same & growing & (np.abs(d).min(axis=0) > noise)


def estimate_generator(T: SemigroupEvaluator, u, x, h_ladder: Sequence[float] = H_LADDER) -> GeneratorEstimate:
    """Richardson-extrapolated one-sided quotient ``(T_h u - u)/h`` at the points ``x``.

    The matrix backend returns the exact ``q u`` (quotients are still
    recorded); others run a full Richardson table over the ladder and report
    the gap between its last two diagonal entries plus the propagated Monte
    Carlo error as the error bar.
    """
    hs = np.asarray(h_ladder, dtype=float)
    if hs.ndim != 1 or hs.size == 0 or np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValueError("h_ladder must be positive and strictly decreasing")
    if isinstance(T, MatrixSemigroup):
        idx = np.asarray(x, dtype=int)
        vec = T._vec(u)
        base = vec[idx]
        quot = [(float(h), (T.evaluate(h, vec, idx)[0] - base) / h) for h in hs]
        exact = T.generator(vec)[idx]
        return GeneratorEstimate(exact, quot, np.zeros_like(exact), np.zeros_like(exact))
    u = as_function(u, getattr(u, "dim", 1))
    base = u(np.asarray(x, dtype=float))
    qs, ses = [], []
    for h in hs:
        v, se = T.evaluate(float(h), u, x)
        qs.append((v - base) / h)
        ses.append(np.asarray(se) / h)
    qs, ses = np.array(qs), np.array(ses)
    diverging = _diverging(qs, ses)
    if np.any(diverging):
        k = int(np.argmax(diverging.ravel()))
        raise NoLimitError(qs.reshape(len(hs), -1)[:, k].tolist(), where=k)
    value, weights, resid = _richardson(hs, qs)
    mc = np.abs(weights) @ ses.reshape(len(hs), -1)
    shape = np.shape(base)
    return GeneratorEstimate(
        value.reshape(shape),
        [(float(h), q) for h, q in zip(hs, qs)],
        (resid + mc).reshape(shape),
        mc.reshape(shape),
    )


def _report(identity, T, points, residuals, tol, extra=None, seed=None, name=None):
    residuals = np.abs(np.asarray(residuals, dtype=float))
    worst = int(np.argmax(residuals.ravel())) if residuals.size else 0
    pts = np.asarray(points)
    details = {
        "identity": identity,
        "backend": T.describe() if hasattr(T, "describe") else str(T),
        "points": pts.tolist(),
        "residuals": residuals.tolist(),
        "tolerance": tol,
        "seed": seed,
    }
    if extra:
        details.update(extra)
    res = float(residuals.max()) if residuals.size else 0.0
    tol_arr = np.broadcast_to(np.asarray(tol, dtype=float), residuals.shape)
    verdict = bool(np.all(residuals <= tol_arr))
    n_pts = residuals.shape[-1] if residuals.ndim else 1
    point = pts.reshape(n_pts, -1)[worst % n_pts].tolist() if pts.size and pts.size % n_pts == 0 else None
    wc = {"index": worst, "point": point}
    return Report(name or identity, verdict, res, float(np.max(tol)), wc, details)


def check_resolvent_identity(
    T: SemigroupEvaluator,
    f,
    alpha: float,
    points,
    step: float = 1e-3,
    horizon: float | None = None,
    truncation_budget: float = 1e-6,
) -> Report:
    """Residual of ``alpha u - L u = f`` with ``u = U_alpha f``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if isinstance(T, MatrixSemigroup):
        idx = np.asarray(points, dtype=int)
        fv = T._vec(f)
        u = T.resolvent_image(alpha, fv)
        res = alpha * u[idx] - T.generator(u)[idx] - fv[idx]
        return _report("resolvent_generator", T, idx, res, EXACT_TOL, {"alpha": alpha})
    H = 20.0 / alpha if horizon is None else horizon
    tail = truncation_bound(f, alpha, H)
    if tail > truncation_budget:
        raise TruncationError(f"tail mass bound {tail:.3g} exceeds budget {truncation_budget:.3g} at horizon {H:g}")
    u = ResolventImage(T, f, alpha, step, H)
    x = np.asarray(points, dtype=float)
    est = estimate_generator(T, u, x)
    res = alpha * u(x) - est.value - as_function(f)(x)
    tol = T.tolerance(est.se) if T.deterministic else MC_SIGMAS * np.asarray(est.se) + np.asarray(est.error_bar)
    return _report("resolvent_generator", T, x, res, tol, {"alpha": alpha, "horizon": H, "step": step, "error_bar": est.error_bar})


def _simpson_nodes(t: float, intervals: int) -> np.ndarray:
    intervals += intervals % 2
    return np.linspace(0.0, t, intervals + 1)


def check_integral_identity(T: SemigroupEvaluator, u, g, t_grid, points, intervals: int = 200) -> Report:
    """Residual of ``T_t u = u + int_0^t T_s g ds`` by composite Simpson with ``intervals`` panels."""
    res = []
    is_matrix = isinstance(T, MatrixSemigroup)
    x = np.asarray(points, dtype=int if is_matrix else float)
    u0 = T._vec(u)[x] if is_matrix else as_function(u)(x)
    for t in t_grid:
        lhs = T.evaluate(float(t), u, x)[0] - u0
        if t == 0:
            res.append(lhs)
            continue
        s = _simpson_nodes(float(t), intervals)
        rhs = simpson(T.evaluate_many(s, g, x), x=s, axis=0)
        res.append(lhs - rhs)
    return _report("integral_identity", T, x, np.array(res), T.tolerance(), {"t_grid": list(map(float, t_grid)), "intervals": intervals})


def _time_derivative(T, u, t, x, delta):
    """Richardson central difference of ``t -> T_t u(x)`` (forward when ``t`` is too small)."""
    if t >= delta:
        d = lambda k: (T.evaluate(t + k, u, x)[0] - T.evaluate(t - k, u, x)[0]) / (2 * k)
        return (4 * d(delta / 2) - d(delta)) / 3
    base = T.evaluate(t, u, x)[0]
    d = lambda k: (T.evaluate(t + k, u, x)[0] - base) / k
    r1 = lambda k: 2 * d(k / 2) - d(k)
    return (4 * r1(delta / 2) - r1(delta)) / 3


def check_semigroup_ode(T: SemigroupEvaluator, u, t_grid, x, delta: float = 1e-3) -> Report:
    """``d/dt T_t u = L T_t u`` and the commuted form ``T_t L u`` at the point(s) ``x``."""
    is_matrix = isinstance(T, MatrixSemigroup)
    x = np.atleast_1d(np.asarray(x, dtype=int if is_matrix else float))
    ode, comm = [], []
    for t in map(float, t_grid):
        deriv = _time_derivative(T, u, t, x, delta)
        if is_matrix:
            Ttu = T.image(t, u)
            l_of_t = T.generator(Ttu)[x]
            t_of_l = T.evaluate(t, T.generator(u), x)[0]
        else:
            l_of_t = estimate_generator(T, T.image(t, u), x).value
            lu = FromCallable(lambda y: estimate_generator(T, u, y).value, name="Lu")
            t_of_l = T.evaluate(t, lu, x)[0]
        ode.append(deriv - l_of_t)
        comm.append(l_of_t - t_of_l)
    ode, comm = np.array(ode), np.array(comm)
    res = np.maximum(np.abs(ode), np.abs(comm))
    return _report(
        "semigroup_ode",
        T,
        x,
        res,
        T.tolerance(),
        {"t_grid": list(map(float, t_grid)), "ode_residual": np.abs(ode).max(), "commutation_residual": np.abs(comm).max()},
    )


def check_derivation(T: SemigroupEvaluator, u, points, tol: float | None = None) -> Report:
    """Residual ``|L(u^2) - 2 u L u|``; zero exactly when the semigroup is deterministic."""
    if isinstance(T, MatrixSemigroup):
        idx = np.asarray(points, dtype=int)
        v = T._vec(u)
        res = T.generator(v * v)[idx] - 2 * v[idx] * T.generator(v)[idx]
        return _report("derivation", T, idx, res, EXACT_TOL if tol is None else tol)
    u = as_function(u)
    x = np.asarray(points, dtype=float)
    sq = estimate_generator(T, u * u, x)
    lin = estimate_generator(T, u, x)
    res = sq.value - 2 * u(x) * lin.value
    if tol is None:
        tol = 1e-4 if T.deterministic else MC_SIGMAS * (np.asarray(sq.se) + 2 * np.abs(u(x)) * np.asarray(lin.se))
    return _report("derivation", T, x, res, tol, {"function": u.name})


def _nested(outer, t, inner, s, f, x):
    """``outer_t (inner_s f)(x)`` with standard error; flows are applied by pushing points or functions."""
    if isinstance(outer, FlowSemigroup):
        return inner.evaluate(s, f, outer.flow.evaluate(x, t))
    if isinstance(inner, FlowSemigroup):
        return outer.evaluate(t, inner.image(s, f), x)
    return outer.evaluate(t, inner.image(s, f), x)


def check_commutation(S: SemigroupEvaluator, T: SemigroupEvaluator, funcs, times, points) -> Report:
    """Max over the grid of ``|S_t T_s f(x) - T_s S_t f(x)|`` against the backend tolerance."""
    res, ses, where = [], [], []
    x = np.asarray(points, dtype=float)
    for f in funcs:
        for t in times:
            for s in times:
                a, sa = _nested(S, float(t), T, float(s), f, x)
                b, sb = _nested(T, float(s), S, float(t), f, x)
                res.append(np.abs(a - b))
                ses.append(np.sqrt(np.asarray(sa) ** 2 + np.asarray(sb) ** 2))
                where.append({"f": getattr(f, "name", "f"), "t": float(t), "s": float(s)})
    res, ses = np.array(res), np.array(ses)
    deterministic = S.deterministic and T.deterministic
    if S.exact and T.exact:
        tol = np.full(res.shape, EXACT_TOL)
    elif deterministic:
        tol = np.full(res.shape, DETERMINISTIC_TOL)
    else:
        tol = MC_SIGMAS * ses
    k = int(np.argmax((res - tol).ravel()))
    ratio = float(np.max(res / np.where(ses > 0, ses, np.inf))) if not deterministic else None
    rep = _report(
        "commutation",
        T,
        x,
        res,
        tol,
        {"outer": S.describe(), "inner": T.describe(), "se": ses, "max_residual_over_se": ratio},
    )
    rep.worst_case = where[k // max(1, x.size)]
    return rep


# --- martingale problem --------------------------------------------------------


def _as_state_function(u):
    """Vectors act on chain states with the cemetery (index -1) mapped to 0."""
    if isinstance(u, np.ndarray) or isinstance(u, (list, tuple)):
        vec = np.append(np.asarray(u, dtype=float), 0.0)
        return lambda s: vec[np.asarray(s, dtype=int)]
    return as_function(u)


def martingale_residual_test(
    sampler,
    u,
    Lu,
    s: float,
    t: float,
    x,
    n_paths: int,
    seed: int,
    dt: float = 1e-3,
    max_se: float | None = None,
    deterministic_tol: float = DETERMINISTIC_TOL,
    workers: int = 1,
) -> Report:
    """Orthogonality statistics ``E[(M_t - M_s) g(X_s)]`` for ``g`` in ``{1, u}``.

    ``M_r = u(X_r) - u(X_0) - int_0^r Lu(X_q) dq`` with the integral taken by
    the trapezoid rule on the simulation grid.  The sampler must provide
    ``init(x, n)`` and ``step(state, dt, rng)``.
    """
    if not 0 <= s < t:
        raise ValueError("need 0 <= s < t")
    n_steps = int(round(t / dt))
    k_s = int(round(s / dt))
    if abs(n_steps * dt - t) > 1e-9 * (1 + t) or abs(k_s * dt - s) > 1e-9 * (1 + s):
        raise ValueError("s and t must be multiples of dt")
    if n_paths * n_steps > 5e9:
        raise BudgetError(f"{n_paths} paths x {n_steps} steps exceeds the simulation budget")
    uf, lf = _as_state_function(u), _as_state_function(Lu)
    deterministic = bool(getattr(sampler, "deterministic", False))
    n_eff = 1 if deterministic else int(n_paths)

    def work(size, rng):
        state = sampler.init(x, size)
        u0 = uf(state)
        lprev = lf(state)
        integral = np.zeros(size)
        m_s = u_s = None
        for k in range(1, n_steps + 1):
            state = sampler.step(state, dt, rng)
            lcur = lf(state)
            integral += 0.5 * dt * (lprev + lcur)
            lprev = lcur
            if k == k_s:
                u_s = uf(state)
                m_s = u_s - u0 - integral
        if k_s == 0:
            u_s, m_s = u0, np.zeros(size)
        m_t = uf(state) - u0 - integral
        inc = m_t - m_s
        return np.stack([inc, inc * u_s], axis=1)

    data = _rng.map_chunks(n_eff, seed, ("martingale",), work, workers)
    stats = data.mean(axis=0)
    se = data.std(axis=0, ddof=1) / math.sqrt(n_eff) if n_eff > 1 else np.zeros(2)
    if max_se is not None and np.any(se > max_se):
        raise BudgetError(f"standard error {se.max():.3g} above requested {max_se:.3g}; increase n_paths")
    tol = np.full(2, deterministic_tol) if deterministic else MC_SIGMAS * se
    verdict = bool(np.all(np.abs(stats) <= tol))
    details = {
        "identity": "martingale_orthogonality",
        "backend": getattr(sampler, "kind", "sampler"),
        "dictionary": ["1", "u"],
        "statistics": stats,
        "standard_errors": se,
        "n_paths": n_eff,
        "dt": dt,
        "s": s,
        "t": t,
        "seed": seed,
    }
    k = int(np.argmax(np.abs(stats) - tol))
    return Report("martingale", verdict, float(np.abs(stats).max()), float(tol.max()), {"g": details["dictionary"][k]}, details)


def tolerance_schedule(backend: str, se=0.0) -> float:
    if backend == "matrix":
        return EXACT_TOL
    if backend in ("flow", "quadrature"):
        return DETERMINISTIC_TOL
    return MC_SIGMAS * float(np.max(se))


def linear_combination_check(T, u, v, a: float, b: float, x) -> tuple[float, float]:
    """Defect of linearity ``L(a u + b v) - a L u - b L v`` and the combined error bar."""
    if isinstance(T, MatrixSemigroup):
        uu, vv = T._vec(u), T._vec(v)
        comb = estimate_generator(T, a * uu + b * vv, x)
    else:
        uu, vv = as_function(u), as_function(v)
        comb = estimate_generator(T, a * uu + b * vv, x)
    eu, ev = estimate_generator(T, uu, x), estimate_generator(T, vv, x)
    defect = np.abs(comb.value - a * eu.value - b * ev.value).max()
    bar = np.max(np.asarray(comb.error_bar) + abs(a) * np.asarray(eu.error_bar) + abs(b) * np.asarray(ev.error_bar))
    return float(defect), float(bar)
