"""Branching particle approximation of superprocesses driven by a flow.

A cloud is stored as atoms: distinct positions with particle counts, each
particle carrying mass ``epsilon``.  Offspring start at the parent's current
position, so particles never separate from their atom and the flow moves
whole atoms.  Per time step the binary branching and the linear part of the
mechanism are applied through the exact law of a linear birth-death process;
the finitely many jump atoms of ``N`` are added by Poisson (tau-leap) events.

Sign convention: the total-mass Laplace transform is
``E exp(-lambda <1, X_t>) = exp(-m_0 v_t(lambda))`` with ``v' = Psi(v)``, so
the mean mass evolves as ``m_0 exp(-b t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import _rng
from .flows import FlowHandle
from .functions import as_function
from .generator_lab import MC_SIGMAS, BudgetError
from .reports import Report

PARTICLE_BUDGET = 1_000_000
DEFAULT_STEP = 1e-2


@dataclass(frozen=True)
class BranchingMechanism:
    """``Psi(l) = -b l - c l^2 + sum_i w_i (1 - exp(-l s_i) - l s_i)``."""

    b: float = 0.0
    c: float = 0.0
    atoms: tuple = ()

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        atoms = tuple((float(s), float(w)) for s, w in self.atoms)
        for s, w in atoms:
            if s <= 0 or w < 0:
                raise ValueError("atoms need jump size s > 0 and weight w >= 0")
        object.__setattr__(self, "atoms", atoms)

    def __call__(self, lam):
        return eval_branching_mechanism(self, lam)

    @property
    def effective_b(self) -> float:
        """Linear coefficient once the compensator of the jump atoms is absorbed."""
        return self.b + sum(w * s for s, w in self.atoms)

    def to_dict(self) -> dict:
        return {"b": self.b, "c": self.c, "atoms": [list(a) for a in self.atoms]}

    @classmethod
    def from_dict(cls, d: dict) -> "BranchingMechanism":
        return cls(float(d.get("b", 0.0)), float(d.get("c", 0.0)), tuple(tuple(a) for a in d.get("atoms", ())))


def eval_branching_mechanism(psi: BranchingMechanism, lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    out = -psi.b * lam - psi.c * lam**2
    for s, w in psi.atoms:
        out = out + w * (-np.expm1(-lam * s) - lam * s)
    return out if out.ndim else float(out)


def cumulant_solve(psi: BranchingMechanism, lambda0: float, t: float, rel_tol: float = 1e-10) -> float:
    """``v_t`` solving ``v' = Psi(v)``, ``v_0 = lambda0``."""
    if lambda0 < 0 or t < 0:
        raise ValueError("lambda0 and t must be nonnegative")
    if lambda0 == 0 or t == 0:
        return float(lambda0)
    sol = solve_ivp(lambda _t, v: [eval_branching_mechanism(psi, max(v[0], 0.0))], (0.0, t), [lambda0], rtol=rel_tol, atol=1e-14, method="RK45")
    return max(float(sol.y[0, -1]), 0.0)


# --- clouds ------------------------------------------------------------------------------


@dataclass
class ParticleCloud:
    """Atoms ``(position, count)`` of particles of mass ``epsilon`` at ``time``."""

    positions: np.ndarray
    counts: np.ndarray
    epsilon: float
    time: float = 0.0
    dim: int = 1

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @classmethod
    def from_mass(cls, positions, masses, epsilon: float, dim: int = 1) -> "ParticleCloud":
        """Split each mass into ``round(mass / epsilon)`` particles at its position."""
        counts = np.rint(np.asarray(masses, dtype=float) / epsilon).astype(np.int64)
        return cls(np.asarray(positions, dtype=float), counts, epsilon, 0.0, dim)

    @property
    def n_particles(self) -> int:
        return int(self.counts.sum())

    @property
    def total_mass(self) -> float:
        return self.epsilon * self.n_particles

    def particles(self) -> tuple[np.ndarray, np.ndarray]:
        """Expanded view: one row per particle with mass ``epsilon``."""
        pos = np.repeat(self.positions, self.counts, axis=0)
        return pos, np.full(len(pos), self.epsilon)

    def integrate(self, f) -> float:
        """``<f, X> = sum epsilon * count * f(position)``."""
        if self.counts.size == 0:
            return 0.0
        return float(self.epsilon * np.dot(self.counts, as_function(f, self.dim)(self.positions)))

    def compact(self) -> "ParticleCloud":
        keep = self.counts > 0
        return ParticleCloud(self.positions[keep], self.counts[keep], self.epsilon, self.time, self.dim)

    def union(self, other: "ParticleCloud") -> "ParticleCloud":
        if other.epsilon != self.epsilon:
            raise ValueError("clouds with different mass units")
        return ParticleCloud(
            np.concatenate([self.positions, other.positions]), np.concatenate([self.counts, other.counts]), self.epsilon, self.time, self.dim
        )


def pushforward_measure(flow: FlowHandle, cloud: ParticleCloud, t: float) -> ParticleCloud:
    """Move every atom to ``Phi_t(position)``; masses unchanged."""
    pos = flow.evaluate(cloud.positions, t) if cloud.counts.size else cloud.positions.copy()
    return ParticleCloud(pos, cloud.counts.copy(), cloud.epsilon, cloud.time, cloud.dim)


# --- branching dynamics -----------------------------------------------------------------


def _birth_death_params(birth: float, death: float, dt: float) -> tuple[float, float]:
    """Extinction probability ``a`` and geometric parameter ``g`` of a linear birth-death line after ``dt``."""
    if birth == 0 and death == 0:
        return 0.0, 0.0
    if abs(birth - death) <= 1e-12 * max(birth, death):
        r = birth * dt / (1 + birth * dt)
        return r, r
    e = math.exp((birth - death) * dt)
    den = birth * e - death
    return death * (e - 1) / den, birth * (e - 1) / den


def _branch_step(counts: np.ndarray, psi: BranchingMechanism, epsilon: float, dt: float, rng: np.random.Generator) -> np.ndarray:
    b_eff = psi.effective_b
    birth = psi.c / epsilon + max(-b_eff, 0.0)
    death = psi.c / epsilon + max(b_eff, 0.0)
    a, g = _birth_death_params(birth, death, dt)
    if a == 0 and g == 0:
        out = counts.copy()
    else:
        surv = rng.binomial(counts, 1.0 - a)
        extra = rng.negative_binomial(np.maximum(surv, 1), 1.0 - g) if g > 0 else np.zeros_like(surv)
        out = surv + np.where(surv > 0, extra, 0)
    for s, w in psi.atoms:
        k = max(1, int(round(s / epsilon)))
        events = rng.poisson(w * epsilon * out * dt)
        out = out + k * events
    return out


def _step_grid(t: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    return np.full(n, t / n)


def _simulate(psi, flow, init: ParticleCloud, t: float, rng, dt: float) -> ParticleCloud:
    counts = init.counts.copy()
    pos = init.positions.copy()
    steps = _step_grid(t, dt) if t > 0 else np.zeros(0)
    for h in steps:
        counts = _branch_step(counts, psi, init.epsilon, h, rng)
        if flow is not None:
            pos = flow.evaluate(pos, h)
        if counts.sum() > PARTICLE_BUDGET:
            raise BudgetError(f"population exceeded {PARTICLE_BUDGET} particles")
    return ParticleCloud(pos, counts, init.epsilon, init.time + t, init.dim)


def simulate_pure_branching(psi: BranchingMechanism, init: ParticleCloud, t: float, seed: int, dt: float = DEFAULT_STEP, replica: int = 0) -> ParticleCloud:
    """Branching without motion: positions stay where they started."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return _simulate(psi, None, init, t, _rng.substream(seed, "replica", replica), dt)


def simulate_moving_branching(psi: BranchingMechanism, flow: FlowHandle, init: ParticleCloud, t: float, seed: int, dt: float = DEFAULT_STEP, replica: int = 0) -> ParticleCloud:
    """Branching while every particle moves along ``flow``; offspring start at the parent's position."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return _simulate(psi, flow, init, t, _rng.substream(seed, "replica", replica), dt)


def total_mass_laplace(psi: BranchingMechanism, init: ParticleCloud, t: float, lam: float, replicas: int, seed: int, dt: float = DEFAULT_STEP) -> Report:
    """Replica mean of ``exp(-lam <1, X_t>)`` against ``exp(-m_0 v_t(lam))``."""
    vals = np.array([math.exp(-lam * simulate_pure_branching(psi, init, t, seed, dt, r).total_mass) for r in range(replicas)])
    est, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))
    exact = math.exp(-init.total_mass * cumulant_solve(psi, lam, t))
    gap = abs(est - exact)
    return Report(
        "total_mass_laplace",
        gap <= MC_SIGMAS * se,
        gap,
        MC_SIGMAS * se,
        None,
        {"empirical": est, "exact": exact, "se": se, "replicas": replicas, "epsilon": init.epsilon, "lambda": lam, "t": t, "seed": seed},
    )


def check_mean_mass(psi: BranchingMechanism, init: ParticleCloud, t_grid: Sequence[float], replicas: int, seed: int, dt: float = DEFAULT_STEP) -> Report:
    """Replica mean mass against ``m_0 exp(-b t)`` on a time grid, plus the sign of ``Psi'(0)``."""
    rows, ok = [], True
    for t in t_grid:
        m = np.array([simulate_pure_branching(psi, init, float(t), seed, dt, r).total_mass for r in range(replicas)])
        est, se = float(m.mean()), float(m.std(ddof=1) / math.sqrt(replicas))
        exact = init.total_mass * math.exp(-psi.b * float(t))
        ok &= abs(est - exact) <= MC_SIGMAS * se + 1e-12
        rows.append({"t": float(t), "empirical": est, "exact": exact, "se": se})
    h = 1e-6
    dpsi = (eval_branching_mechanism(psi, 2 * h) - eval_branching_mechanism(psi, 0.0)) / (2 * h)
    gaps = [abs(r["empirical"] - r["exact"]) for r in rows]
    return Report("mean_mass", bool(ok), max(gaps), MC_SIGMAS * max(r["se"] for r in rows), None, {"rows": rows, "psi_prime_0": dpsi, "b": psi.b})


def _clouds_equal(a: ParticleCloud, b: ParticleCloud) -> tuple[float, float]:
    pa, ma = a.particles()
    pb, mb = b.particles()
    if pa.shape != pb.shape:
        return math.inf, math.inf
    return float(np.abs(pa - pb).max(initial=0.0)), float(np.abs(ma - mb).max(initial=0.0))


def check_representation(
    psi: BranchingMechanism,
    flow: FlowHandle,
    init: ParticleCloud,
    t: float,
    f,
    replicas: int,
    seed: int,
    dt: float = DEFAULT_STEP,
    independent_seed: int | None = None,
    atom_tol: float = 1e-12,
) -> Report:
    """Moving branching against the pushforward of pure branching.

    With shared seeds the two clouds must agree atom by atom.  Laplace
    functionals ``E exp(-<f, X_t>)`` are compared at three standard errors;
    when ``independent_seed`` is given the pure-branching side uses it, which
    turns the comparison into a genuine two-sample test.
    """
    other = seed if independent_seed is None else independent_seed
    f = as_function(f, init.dim)
    moving, pushed, pos_gap, mass_gap = [], [], 0.0, 0.0
    for r in range(replicas):
        a = simulate_moving_branching(psi, flow, init, t, seed, dt, r)
        b = pushforward_measure(flow, simulate_pure_branching(psi, init, t, other, dt, r), t)
        if independent_seed is None:
            dp, dm = _clouds_equal(a, b)
            pos_gap, mass_gap = max(pos_gap, dp), max(mass_gap, dm)
        moving.append(math.exp(-a.integrate(f)))
        pushed.append(math.exp(-b.integrate(f)))
    moving, pushed = np.array(moving), np.array(pushed)
    gap = abs(moving.mean() - pushed.mean())
    if independent_seed is None:
        se = float((moving - pushed).std(ddof=1) / math.sqrt(replicas))
    else:
        se = float(math.sqrt(moving.var(ddof=1) / replicas + pushed.var(ddof=1) / replicas))
    # shared seeds give identical clouds, so the Laplace gap is pure rounding
    tol = MC_SIGMAS * se + (atom_tol if independent_seed is None else 0.0)
    ok = gap <= tol
    if independent_seed is None:
        ok = ok and pos_gap <= atom_tol and mass_gap <= atom_tol
    return Report(
        "representation",
        bool(ok),
        float(gap),
        tol,
        None,
        {
            "coupling": "shared" if independent_seed is None else "independent",
            "position_gap": pos_gap if independent_seed is None else None,
            "mass_gap": mass_gap if independent_seed is None else None,
            "laplace_moving": moving.mean(),
            "laplace_pushforward": pushed.mean(),
            "se": se,
            "replicas": replicas,
            "seeds": [seed, other],
        },
    )


def export_clouds_csv(clouds: Sequence[ParticleCloud], path) -> None:
    """Rows ``replica, position..., mass`` (one row per particle)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = clouds[0].dim if clouds else 1
        w.writerow(["replica"] + [f"x{i + 1}" for i in range(d)] + ["mass"])
        for r, c in enumerate(clouds):
            pos, mass = c.particles()
            for p, m in zip(pos, mass):
                w.writerow([r] + [repr(float(v)) for v in np.ravel(p)] + [repr(float(m))])
