"""Exact finite-state transition functions.

A sub-Markovian generator ``q`` on ``n`` states yields the transition function
``T_t = exp(t q)`` and the resolvent ``U_a = (a I - q)^{-1}``.  Everything in
this module is dense linear algebra on small matrices (n <= 64).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .reports import Report

DIRAC_TOL = 1e-9
DEDUP_TOL = 1e-9
CONE_BUDGET = 5000
DEFAULT_RATIONALS = (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3))
LIMIT_ALPHA = 1e6


class NotDeterministicError(ValueError):
    """A kernel row is not a Dirac measure."""

    def __init__(self, row: int, values: np.ndarray):
        self.row = int(row)
        self.values = np.asarray(values)
        super().__init__(f"row {self.row} is not a Dirac measure: {self.values.tolist()}")


class ConeBudgetError(RuntimeError):
    def __init__(self, cone: "FunctionCone"):
        self.cone = cone
        super().__init__(f"cone exceeded member budget at depth {cone.depth} ({len(cone.members)} members)")


class PreconditionError(ValueError):
    def __init__(self, message: str, report: Report | None = None):
        self.report = report
        super().__init__(message)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sub-Markovian rate matrix: nonnegative off-diagonal, row sums <= 0."""

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("generator must be a square matrix")
        if not np.all(np.isfinite(q)):
            raise ValueError("generator has non-finite entries")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be nonnegative")
        scale = 1.0 + np.abs(q).max(initial=0.0)
        if np.any(q.sum(axis=1) > 1e-12 * scale):
            raise ValueError("row sums must be <= 0")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def conservative(self) -> np.ndarray:
        return np.abs(self.q.sum(axis=1)) <= 1e-12 * (1.0 + np.abs(self.q).max())

    def __array__(self, dtype=None, copy=None):
        return self.q if dtype is None else self.q.astype(dtype)

    def to_json(self) -> str:
        return json.dumps(self.q.tolist())

    @classmethod
    def from_json(cls, text: str) -> "GeneratorMatrix":
        return cls(np.array(json.loads(text), dtype=float))


@dataclass(frozen=True)
class Kernel:
    """Sub-Markovian kernel on a finite state space."""

    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("kernel must be a square matrix")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("kernel entries must lie in [0, 1]")
        if np.any(p.sum(axis=1) > 1 + 1e-9):
            raise ValueError("kernel row sums must be <= 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def is_markovian(self) -> bool:
        return bool(np.allclose(self.p.sum(axis=1), 1.0, atol=1e-9))

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, Kernel):
            return Kernel(self.p @ other.p)
        return self.p @ np.asarray(other)

    def to_json(self) -> str:
        return json.dumps(self.p.tolist())


@dataclass
class FunctionCone:
    members: list[np.ndarray]
    depth: int
    beta: float
    rationals: tuple
    complete: bool = True
    level_sizes: list[int] = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array(self.members)


def _q(q) -> np.ndarray:
    return q.q if isinstance(q, GeneratorMatrix) else np.asarray(q, dtype=float)


def _p(p) -> np.ndarray:
    return p.p if isinstance(p, Kernel) else np.asarray(p, dtype=float)


def semigroup_at(q, t: float) -> Kernel:
    """``exp(t q)`` by scaling-and-squaring Pade(13)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    p = scipy.linalg.expm(float(t) * _q(q))
    # expm leaves O(eps) negative dust on zero entries
    return Kernel(np.clip(p, 0.0, None))


def resolvent(q, alpha: float) -> np.ndarray:
    """``(alpha I - q)^{-1}``; alpha times the result is sub-Markovian."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    qm = _q(q)
    a = alpha * np.eye(qm.shape[0]) - qm
    if np.linalg.cond(a) > 1e12:
        raise np.linalg.LinAlgError(f"resolvent system ill-conditioned at alpha={alpha}")
    return np.linalg.solve(a, np.eye(qm.shape[0]))


def potential_integral(q, f, t: float) -> np.ndarray:
    """``int_0^t exp(s q) f ds`` via the augmented-matrix exponential."""
    qm = _q(q)
    n = qm.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = qm
    aug[:n, n] = np.asarray(f, dtype=float)
    return scipy.linalg.expm(t * aug)[:n, n]


def row_indicator(phi: Sequence[int], n: int | None = None) -> Kernel:
    phi = np.asarray(phi, dtype=int)
    n = len(phi) if n is None else n
    if np.any(phi < 0) or np.any(phi >= n):
        raise ValueError("state map images must lie in [0, n)")
    p = np.zeros((len(phi), n))
    p[np.arange(len(phi)), phi] = 1.0
    return Kernel(p)


def _alpha_grid(alpha_grid) -> np.ndarray:
    grid = np.sort(np.asarray(list(alpha_grid), dtype=float))
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("alpha grid must be nonempty and positive")
    return grid


def check_excessive(q, u, beta: float = 0.0, alpha_grid: Iterable[float] = (0.5, 1, 2, 3, 10, 100)) -> Report:
    """Supermedian inequality on the grid plus the alpha -> infinity limit."""
    u = np.asarray(u, dtype=float)
    grid = _alpha_grid(alpha_grid)
    scale = 1.0 + np.abs(u).max(initial=0.0)
    tol = 1e-10 * scale

    values = np.array([a * resolvent(q, beta + a) @ u for a in grid])
    excess = values - u
    k, i = np.unravel_index(np.argmax(excess), excess.shape)
    violation = max(float(excess[k, i]), 0.0)
    monotone_defect = float(np.max(values[:-1] - values[1:], initial=0.0))

    limit = LIMIT_ALPHA * resolvent(q, beta + LIMIT_ALPHA) @ u
    limit_gap = float(np.abs(limit - u).max())
    limit_tol = 1e-5 * scale

    nonneg = bool(np.all(u >= -tol))
    verdict = nonneg and violation <= tol and monotone_defect <= tol and limit_gap <= limit_tol
    return Report(
        name="excessive",
        verdict=verdict,
        residual=violation,
        tolerance=tol,
        worst_case={"alpha": float(grid[k]), "state": int(i)},
        details={
            "beta": beta,
            "nonnegative": nonneg,
            "monotone_defect": monotone_defect,
            "limit_gap": limit_gap,
            "limit_tolerance": limit_tol,
        },
    )


def excessive_regularization(q, w, beta: float, alpha_grid: Iterable[float]) -> np.ndarray:
    """Entrywise supremum of ``a U_{beta+a} w`` over the grid."""
    w = np.asarray(w, dtype=float)
    grid = _alpha_grid(alpha_grid)
    if np.any(w < 0):
        raise PreconditionError("w must be nonnegative")
    values = np.array([a * resolvent(q, beta + a) @ w for a in grid])
    tol = 1e-10 * (1.0 + np.abs(w).max(initial=0.0))
    excess = values - w
    if np.any(excess > tol):
        k, i = np.unravel_index(np.argmax(excess), excess.shape)
        rep = Report("supermedian", False, float(excess[k, i]), tol, {"alpha": float(grid[k]), "state": int(i)})
        raise PreconditionError(f"w is not supermedian at alpha={grid[k]}", rep)
    return values.max(axis=0)


def check_multiplicative(p, funcs: Sequence, tol: float = 1e-12) -> Report:
    """max over pairs of ``|p(fg) - (pf)(pg)|``."""
    pm = _p(p)
    fs = [np.asarray(f, dtype=float) for f in funcs]
    images = [pm @ f for f in fs]
    worst, where = 0.0, None
    for i in range(len(fs)):
        for j in range(i, len(fs)):
            r = np.abs(pm @ (fs[i] * fs[j]) - images[i] * images[j])
            k = int(np.argmax(r))
            if r[k] > worst or where is None:
                worst, where = float(r[k]), {"pair": (i, j), "state": k}
    return Report("multiplicative", worst <= tol, worst, tol, where)


def extract_flow_map(p) -> np.ndarray:
    """Recover the state map of a deterministic (row-indicator) kernel."""
    pm = _p(p)
    phi = np.argmax(pm, axis=1)
    for i, j in enumerate(phi):
        row = pm[i]
        off = np.delete(row, j)
        if row[j] < 1.0 - DIRAC_TOL or np.any(np.abs(off) > DIRAC_TOL):
            raise NotDeterministicError(i, row)
    return phi


class _Dedup:
    def __init__(self, tol: float):
        self.tol = tol
        self.keys: set = set()
        self.members: list[np.ndarray] = []

    def add(self, v: np.ndarray) -> bool:
        key = tuple(np.round(v / self.tol).astype(np.int64))
        if key in self.keys:
            return False
        self.keys.add(key)
        self.members.append(v)
        return True


def ray_cone(
    q,
    c0: Sequence,
    beta: float,
    depth: int,
    rationals: Iterable = DEFAULT_RATIONALS,
    budget: int = CONE_BUDGET,
    on_budget: str = "raise",
) -> FunctionCone:
    """Truncated Ray cone of bounded beta-excessive functions.

    Level 0 is ``V_beta(c0)`` together with the rational constants; each further
    level closes under rational scaling, pairwise sums and minima, the shifted
    resolvents ``V_{beta+a}``, the kernels ``S_t`` and ``V_beta((u - v)^+)``
    with ``a, t`` ranging over ``rationals``.
    """
    if not 0 <= depth <= 3:
        raise ValueError("depth must be between 0 and 3")
    if on_budget not in ("raise", "truncate"):
        raise ValueError("on_budget must be 'raise' or 'truncate'")
    qm = _q(q)
    n = qm.shape[0]
    rats = tuple(sorted(Fraction(r) for r in rationals))
    c0 = [np.asarray(c, dtype=float) for c in c0]
    if not c0 or any(np.any(c < 0) for c in c0):
        raise ValueError("c0 must be nonempty and nonnegative")

    v_beta = resolvent(qm, beta)
    shifted = {r: resolvent(qm, beta + float(r)) for r in rats}
    kernels = {r: semigroup_at(qm, float(r)).p for r in rats}

    pool = _Dedup(DEDUP_TOL)
    sizes: list[int] = []

    def cone(d: int, complete: bool) -> FunctionCone:
        return FunctionCone(list(pool.members), d, beta, rats, complete, sizes + [len(pool.members)])

    def push(v: np.ndarray, d: int):
        if pool.add(v) and len(pool.members) > budget:
            pool.members.pop()
            partial = cone(d, False)
            if on_budget == "raise":
                raise ConeBudgetError(partial)
            raise _Truncated(partial)

    try:
        push(np.zeros(n), 0)
        for c in c0:
            push(v_beta @ c, 0)
        for r in rats:
            push(np.full(n, float(r)), 0)
        for d in range(1, depth + 1):
            sizes.append(len(pool.members))
            level = list(pool.members)
            for r in rats:
                for u in level:
                    push(float(r) * u, d)
            for i, u in enumerate(level):
                for v in level[i:]:
                    push(u + v, d)
                    push(np.minimum(u, v), d)
            for r in rats:
                for u in level:
                    push(shifted[r] @ u, d)
                    push(kernels[r] @ u, d)
            for u in level:
                for v in level:
                    push(v_beta @ np.maximum(u - v, 0.0), d)
    except _Truncated as t:
        return t.cone
    return cone(depth, True)


class _Truncated(Exception):
    def __init__(self, cone: FunctionCone):
        self.cone = cone


def random_generator(
    rng: np.random.Generator, n: int, density: float = 0.6, rate: float = 1.0, killing: float = 0.3
) -> GeneratorMatrix:
    """Random sub-Markovian generator; roughly ``killing`` of the rows lose mass."""
    off = rng.uniform(0.0, rate, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    np.fill_diagonal(off, 0.0)
    kill = rng.uniform(0.0, rate, size=n) * (rng.uniform(size=n) < killing)
    q = off - np.diag(off.sum(axis=1) + kill)
    return GeneratorMatrix(q)


def laplace_quadrature(qs: Sequence, alphas: Sequence[float], intervals: int = 8192) -> list[np.ndarray]:
    """Composite Simpson for ``int_0^{40/a} e^{-a t} exp(t q) dt``, batched.

    Independent of :func:`resolvent`: the integrand is stepped as powers of a
    single small-step exponential, so the only shared primitive is ``expm``.
    """
    if intervals % 2:
        raise ValueError("Simpson needs an even number of intervals")
    qs = [_q(q) for q in qs]
    m = max(q.shape[0] for q in qs)
    steps = np.zeros((len(qs), m, m))
    hs = np.empty(len(qs))
    for b, (q, a) in enumerate(zip(qs, alphas)):
        n = q.shape[0]
        hs[b] = 40.0 / a / intervals
        steps[b, :n, :n] = scipy.linalg.expm(hs[b] * (q - a * np.eye(n)))
    power = np.broadcast_to(np.eye(m), steps.shape).copy()
    acc = power.copy()
    for k in range(1, intervals + 1):
        power = power @ steps
        acc += (1.0 if k == intervals else (4.0 if k % 2 else 2.0)) * power
    acc *= (hs / 3.0)[:, None, None]
    return [acc[b, : q.shape[0], : q.shape[0]] for b, q in enumerate(qs)]
