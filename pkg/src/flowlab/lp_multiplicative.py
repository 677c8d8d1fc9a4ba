"""Finite weighted spaces: subinvariance, L^p multiplicativity and flow extraction.

Almost-everywhere statements with respect to a weight vector ``m`` are
evaluated only at states with ``m > 0``.  A kernel row that carries no mass at
all (a killed row) is read as the Dirac measure at the cemetery, written
``CEMETERY``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernel_core import DIRAC_TOL, Kernel, row_indicator, semigroup_at
from .reports import Report

CEMETERY = -1
SUBINVARIANCE_TOL = 1e-12
EXACT_TOL = 1e-8


class ExtractionFailed(ValueError):
    """No nonempty absorbing set of Dirac rows carries the measure."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class WeightedSpace:
    """States ``0..n-1`` carrying the measure ``m``; ``p`` is the L^p exponent."""

    n: int
    m: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (self.n,):
            raise ValueError("m must have one weight per state")
        if np.any(m < 0) or not np.any(m > 0):
            raise ValueError("m must be nonnegative with at least one positive weight")
        if not 1 <= self.p < np.inf:
            raise ValueError("p must lie in [1, inf)")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.m > 0)

    def norm(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(np.dot(self.m, np.abs(f) ** self.p) ** (1.0 / self.p))

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "m": self.m.tolist(), "p": self.p})

    @classmethod
    def from_json(cls, text: str) -> "WeightedSpace":
        d = json.loads(text)
        return cls(int(d["n"]), np.asarray(d["m"], dtype=float), float(d.get("p", 2.0)))


def _mat(p) -> np.ndarray:
    return np.asarray(p.p if isinstance(p, Kernel) else p, dtype=float)


def check_subinvariance(space: WeightedSpace, p_t, tol: float = SUBINVARIANCE_TOL) -> Report:
    """``m^T p_t <= m^T`` entrywise."""
    excess = space.m @ _mat(p_t) - space.m
    k = int(np.argmax(excess))
    return Report("subinvariance", bool(excess[k] <= tol), max(float(excess[k]), 0.0), tol, {"state": k, "image_mass": float((space.m @ _mat(p_t))[k])})


def _default_funcs(n: int) -> list[np.ndarray]:
    return [np.eye(n)[i] for i in range(n)] + [np.linspace(-1.0, 1.0, n), np.cos(np.arange(n))]


def check_lp_multiplicative(space: WeightedSpace, p_t, funcs: Sequence | None = None, tol: float = EXACT_TOL) -> Report:
    """``p(fg) = (pf)(pg)`` at states with ``m > 0``, plus the L^p contraction."""
    pm = _mat(p_t)
    fs = [np.asarray(f, dtype=float) for f in (funcs if funcs is not None else _default_funcs(space.n))]
    sub = check_subinvariance(space, pm)
    supp = space.support
    images = [pm @ f for f in fs]
    worst, where, pointwise = 0.0, None, 0.0
    for i in range(len(fs)):
        for j in range(i, len(fs)):
            r = np.abs(pm @ (fs[i] * fs[j]) - images[i] * images[j])
            pointwise = max(pointwise, float(r.max()))
            k = int(supp[np.argmax(r[supp])])
            if where is None or r[k] > worst:
                worst, where = float(r[k]), {"pair": [i, j], "state": k}
    contraction = [(space.norm(img), space.norm(f)) for img, f in zip(images, fs)]
    contracts = all(a <= b * (1 + 1e-12) + 1e-15 for a, b in contraction)
    return Report(
        "lp_multiplicative",
        worst <= tol,
        worst,
        tol,
        where,
        {"subinvariant": sub.verdict, "pointwise_residual": pointwise, "lp_contraction": contracts, "p": space.p},
    )


def check_lp_derivation_equivalence(space: WeightedSpace, q, funcs: Sequence | None = None, t_grid: Sequence[float] = (0.25, 1.0, 2.0), tol: float = EXACT_TOL) -> Report:
    """Derivation law (A) against multiplicativity of ``exp(tq)`` (B), both on ``m > 0``.

    The verdict is the agreement of (A) and (B); each one is in ``details``.
    """
    qm = _mat(q)
    fs = [np.asarray(f, dtype=float) for f in (funcs if funcs is not None else _default_funcs(space.n))]
    supp = space.support
    kernels = [(float(t), semigroup_at(qm, float(t))) for t in t_grid]
    subinv = all(check_subinvariance(space, k, tol=1e-10).verdict for _, k in kernels)
    res_a = max(float(np.abs(qm @ (u * u) - 2 * u * (qm @ u))[supp].max()) for u in fs)
    mult = [check_lp_multiplicative(space, k, fs, tol) for _, k in kernels]
    res_b = max(r.residual for r in mult)
    a, b = res_a <= tol, res_b <= tol
    return Report(
        "lp_derivation_equivalence",
        a == b,
        abs(float(a) - float(b)),
        0.0,
        None,
        {"derivation": a, "derivation_residual": res_a, "multiplicative": b, "multiplicative_residual": res_b, "subinvariant": subinv, "t_grid": list(map(float, t_grid))},
    )


def _dirac_image(row: np.ndarray) -> int | None:
    """Index of the Dirac mass of ``row``, ``CEMETERY`` for a killed row, else None."""
    if np.all(np.abs(row) <= DIRAC_TOL):
        return CEMETERY
    j = int(np.argmax(row))
    if row[j] >= 1 - DIRAC_TOL and np.all(np.abs(np.delete(row, j)) <= DIRAC_TOL):
        return j
    return None


@dataclass
class ExtractionResult:
    support: np.ndarray
    maps: dict
    semigroup_defects: list
    absorbing_leak: float

    def to_dict(self) -> dict:
        return {"F": self.support.tolist(), "maps": {repr(t): phi.tolist() for t, phi in self.maps.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def synthesize(self, t: float, n: int) -> np.ndarray:
        """Kernel rows on ``F`` rebuilt from the extracted map (killed rows are zero)."""
        out = np.zeros((n, n))
        for i in self.support:
            j = self.maps[t][i]
            if j != CEMETERY:
                out[i, j] = 1.0
        return out


def extract_flow_on_support(space: WeightedSpace, kernels: Sequence[tuple[float, object]]) -> ExtractionResult:
    """Greatest absorbing subset ``F`` of ``{m > 0}`` on which every kernel is Dirac.

    Starts from the massive states whose rows are all Dirac and repeatedly
    drops states sent outside the current set.  Maps take the value
    ``CEMETERY`` off ``F`` and on killed rows.
    """
    mats = [(float(t), _mat(k)) for t, k in kernels]
    if not mats:
        raise ValueError("at least one kernel is required")
    images = {t: np.array([_dirac_image(p[i]) if _dirac_image(p[i]) is not None else -2 for i in range(space.n)]) for t, p in mats}
    non_dirac = sorted({int(i) for t in images for i in np.flatnonzero(images[t] == -2)})
    current = {int(i) for i in space.support if int(i) not in non_dirac}
    removed = []
    changed = True
    while changed:
        changed = False
        for i in sorted(current):
            if any(images[t][i] != CEMETERY and int(images[t][i]) not in current for t in images):
                current.discard(i)
                removed.append(i)
                changed = True
    if not current:
        raise ExtractionFailed("no nonempty absorbing Dirac set", {"non_dirac_states": non_dirac, "escaped_states": removed, "support": space.support.tolist()})
    F = np.array(sorted(current))
    maps = {}
    for t, img in images.items():
        phi = np.full(space.n, CEMETERY)
        phi[F] = img[F]
        maps[t] = phi
    leak = max(float(p[F][:, [j for j in range(space.n) if j not in current]].sum(axis=1).max(initial=0.0)) for _, p in mats)
    defects = []
    times = sorted(maps)
    for t in times:
        for s in times:
            u = t + s
            match = [v for v in times if abs(v - u) <= 1e-12 * max(1.0, u)]
            if not match:
                continue
            composed = np.array([CEMETERY if maps[t][i] == CEMETERY else maps[s][maps[t][i]] for i in F])
            defects.append({"t": t, "s": s, "mismatches": int(np.sum(composed != maps[match[0]][F]))})
    return ExtractionResult(F, maps, defects, leak)


def shift_kernels(n: int, steps: Sequence[int], ring: bool) -> list[tuple[float, Kernel]]:
    """Uniform motion to the right by ``k`` sites over time ``k``.

    On a ring the motion wraps around.  On a line a particle pushed past the
    last site is killed, so its row is empty.
    """
    out = []
    for k in steps:
        if ring:
            out.append((float(k), row_indicator((np.arange(n) + k) % n, n)))
        else:
            p = np.zeros((n, n))
            idx = np.arange(n - k) if k < n else np.arange(0)
            p[idx, idx + k] = 1.0
            out.append((float(k), Kernel(p)))
    return out


def shift_with_absorption(n: int, k: int, ring: bool) -> np.ndarray:
    """Closed form of the shift map on ``n`` sites."""
    i = np.arange(n)
    if ring:
        return (i + k) % n
    return np.where(i + k < n, i + k, CEMETERY)


def random_fleet(rng: np.random.Generator, n_max: int = 8) -> tuple[WeightedSpace, np.ndarray]:
    """Random generator with a subinvariant measure supported on a closed set ``S``.

    Inside ``S`` the generator is either zero (frozen, hence multiplicative) or
    symmetric with optional killing (mixing, hence not); outside ``S`` it is
    arbitrary.  ``S`` has no transitions leaving it, which keeps ``m`` subinvariant.
    """
    n = int(rng.integers(2, n_max + 1))
    size = int(rng.integers(1, n + 1))
    S = np.sort(rng.choice(n, size=size, replace=False))
    outside = np.setdiff1d(np.arange(n), S)
    off = np.zeros((n, n))
    kill = np.zeros(n)
    if outside.size:
        off[outside] = rng.uniform(0.2, 1.0, size=(outside.size, n)) * (rng.uniform(size=(outside.size, n)) < 0.6)
    if rng.uniform() < 0.5:
        a = rng.uniform(0.2, 1.0, size=(size, size))
        off[np.ix_(S, S)] = (a + a.T) / 2
        if rng.uniform() < 0.5:
            kill[S] = rng.uniform(0.2, 1.0, size=size) * (rng.uniform(size=size) < 0.5)
    np.fill_diagonal(off, 0.0)
    q = off - np.diag(off.sum(axis=1) + kill)
    m = np.zeros(n)
    m[S] = rng.uniform(0.5, 2.0)
    return WeightedSpace(n, m, float(rng.choice([1.0, 2.0, 3.0]))), q
