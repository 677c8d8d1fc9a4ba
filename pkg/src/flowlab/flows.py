"""Continuous flows on R^d.

Flows are evaluated either in closed form or by adaptive Dormand-Prince
RK4(5) integration of a vector field.  Derived flows (stopped at the first
entry into the complement of an open region, restricted to its closure, or
the autonomization of a two-parameter family) wrap a base flow.

Points are passed as arrays whose last axis has length ``dim``; for ``dim == 1``
any array shape is accepted and treated as a batch of scalars.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .reports import Report

OVERFLOW_GUARD = 1e12
INFINITY = math.inf


class BlowUpError(ArithmeticError):
    def __init__(self, escape_time: float, point=None):
        self.escape_time = float(escape_time)
        self.point = point
        super().__init__(f"trajectory left every bounded set near t={self.escape_time:.6g}")


class OutsideDomainError(ValueError):
    pass


class CocycleViolation(ValueError):
    def __init__(self, defect: float, worst: dict):
        self.defect = float(defect)
        self.worst = worst
        super().__init__(f"cocycle defect {self.defect:.3g} at {worst}")


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = np.inf

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ValueError("solver tolerances and max_step must be positive")


def as_points(x, dim: int) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Flatten ``x`` to an ``(n, dim)`` batch and return the inverse reshape."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        shape = x.shape
        return x.reshape(-1, 1), lambda y: y.reshape(shape)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    shape = x.shape
    return x.reshape(-1, dim), lambda y: y.reshape(shape)


class VectorField:
    """Velocity field ``B`` on R^dim, evaluated on ``(n, dim)`` batches."""

    def __init__(self, dim: int, func: Callable, jacobian: Callable | None = None, name: str = "custom"):
        self.dim = int(dim)
        self.func = func
        self.jacobian = jacobian
        self.name = name

    def __call__(self, x) -> np.ndarray:
        pts, back = as_points(x, self.dim)
        return back(np.asarray(self.func(pts), dtype=float).reshape(pts.shape))

    def __repr__(self):
        return f"VectorField({self.name}, dim={self.dim})"

    @classmethod
    def linear(cls, matrix) -> "VectorField":
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(a.shape[0], lambda x: x @ a.T, lambda x: a, name="linear")

    @classmethod
    def translation(cls, velocity) -> "VectorField":
        v = np.atleast_1d(np.asarray(velocity, dtype=float))
        return cls(v.size, lambda x: np.broadcast_to(v, x.shape), lambda x: np.zeros((v.size, v.size)), "translation")

    @classmethod
    def rotation(cls, omega: float = 1.0) -> "VectorField":
        a = np.array([[0.0, -omega], [omega, 0.0]])
        f = cls.linear(a)
        f.name = "rotation"
        return f

    @classmethod
    def polynomial(cls, coeffs) -> "VectorField":
        """Componentwise polynomial ``B_i(x) = sum_k c[i, k] x_i^k`` (1-d: flat coefficients)."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        powers = np.arange(c.shape[1])

        def func(x):
            return np.einsum("ik,nik->ni", c, x[..., None] ** powers)

        def jac(x):
            dc = c[:, 1:] * powers[1:]
            return np.diag(np.einsum("ik,ik->i", dc, x.reshape(1, -1).T ** powers[:-1]))

        return cls(c.shape[0], func, jac, "polynomial")


def field_from_config(cfg: dict) -> VectorField:
    """Named fields: linear, translation, rotation, polynomial."""
    name = cfg.get("name")
    if name == "linear":
        return VectorField.linear(cfg["matrix"])
    if name == "translation":
        return VectorField.translation(cfg.get("velocity", 1.0))
    if name == "rotation":
        return VectorField.rotation(cfg.get("omega", 1.0))
    if name in ("polynomial", "custom polynomial"):
        return VectorField.polynomial(cfg["coeffs"])
    raise ValueError(f"unknown vector field {name!r}; expected linear, translation, rotation or polynomial")


class FlowHandle:
    """Base class: ``flow(x, t)`` evaluates ``Phi_t(x)`` for ``t >= 0``."""

    kind = "abstract"
    dim: int
    field: VectorField | None = None

    def __call__(self, x, t: float) -> np.ndarray:
        return self.evaluate(x, t)

    def evaluate(self, x, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"flow time must be nonnegative, got {t}")
        pts, back = as_points(x, self.dim)
        if t == 0:
            return back(pts.copy())
        return back(self._evaluate(pts, float(t)))

    def trajectory(self, x, times: Sequence[float]) -> np.ndarray:
        """States at each time, shape ``(len(times),) + x.shape``."""
        times = np.asarray(times, dtype=float)
        return np.stack([self.evaluate(x, t) for t in times])

    def _evaluate(self, pts: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError


class ClosedFormFlow(FlowHandle):
    kind = "closed_form"

    def __init__(self, dim: int, func: Callable[[np.ndarray, float], np.ndarray], field: VectorField | None = None, name="", vectorized=False):
        self.dim = int(dim)
        self.func = func
        self.field = field
        self.name = name
        # vectorized formulas accept times shaped (m, 1, 1) against points (1, n, dim)
        self.vectorized = vectorized

    def _evaluate(self, pts, t):
        out = np.asarray(self.func(pts, t), dtype=float).reshape(pts.shape)
        # closed forms are exact, so only non-finite output counts as blow-up
        if not np.all(np.isfinite(out)):
            raise BlowUpError(t)
        return out

    def trajectory(self, x, times):
        times = np.asarray(times, dtype=float)
        if np.any(times < 0):
            raise ValueError("flow time must be nonnegative")
        pts, back = as_points(x, self.dim)
        if self.vectorized:
            out = np.asarray(self.func(pts[None], times.reshape(-1, 1, 1)), dtype=float)
            if not np.all(np.isfinite(out)):
                raise BlowUpError(float(times.max()))
            return out.reshape((times.size,) + np.shape(back(pts)))
        return np.stack([back(pts.copy()) if t == 0 else back(self._evaluate(pts, float(t))) for t in times])

    def __repr__(self):
        return f"ClosedFormFlow({self.name or 'custom'}, dim={self.dim})"


def translation_flow(velocity=1.0) -> ClosedFormFlow:
    v = np.atleast_1d(np.asarray(velocity, dtype=float))
    return ClosedFormFlow(v.size, lambda x, t: x + t * v, VectorField.translation(v), "translation", vectorized=True)


def linear_flow(matrix) -> ClosedFormFlow:
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    return ClosedFormFlow(a.shape[0], lambda x, t: x @ scipy.linalg.expm(t * a).T, VectorField.linear(a), "linear")


def rotation_flow(omega: float = 1.0) -> ClosedFormFlow:
    def rot(x, t):
        c, s = math.cos(omega * t), math.sin(omega * t)
        return x @ np.array([[c, -s], [s, c]]).T

    return ClosedFormFlow(2, rot, VectorField.rotation(omega), "rotation")


def identity_flow(dim: int = 1) -> ClosedFormFlow:
    return ClosedFormFlow(dim, lambda x, t: x + 0.0 * t, VectorField.translation(np.zeros(dim)), "identity", vectorized=True)


class ODEFlow(FlowHandle):
    """Flow of ``dx/dt = B(x)`` by RK45 with a blow-up guard.

    Each point is integrated on its own so per-point accuracy follows the
    solver tolerances exactly.
    """

    kind = "ode"

    def __init__(self, field: VectorField, solver: SolverConfig | None = None):
        self.field = field
        self.dim = field.dim
        self.solver = solver or SolverConfig()

    def __repr__(self):
        return f"ODEFlow({self.field.name}, rel_tol={self.solver.rel_tol:g})"

    def _solve(self, x0: np.ndarray, t_end: float, t_eval=None):
        field = self.field

        def rhs(_t, y):
            return field.func(y.reshape(1, -1)).reshape(-1)

        def guard(_t, y):
            return OVERFLOW_GUARD - np.abs(y).max()

        guard.terminal = True
        sol = solve_ivp(
            rhs,
            (0.0, t_end),
            x0,
            method="RK45",
            t_eval=t_eval,
            rtol=self.solver.rel_tol,
            atol=self.solver.abs_tol,
            max_step=self.solver.max_step,
            events=guard,
        )
        if sol.status == 1:
            raise BlowUpError(sol.t_events[0][0], x0)
        if sol.status != 0 or not np.all(np.isfinite(sol.y)):
            raise BlowUpError(sol.t[-1] if sol.t.size else 0.0, x0)
        return sol

    def _evaluate(self, pts, t):
        return np.stack([self._solve(p, t).y[:, -1] for p in pts])

    def trajectory(self, x, times):
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) < 0) or np.any(times < 0):
            return super().trajectory(x, times)
        pts, back = as_points(x, self.dim)
        out = np.empty((times.size,) + pts.shape)
        t_end = times[-1] if times.size else 0.0
        for k, p in enumerate(pts):
            if t_end == 0:
                out[:, k] = p
                continue
            sol = self._solve(p, t_end, t_eval=times)
            out[:, k] = sol.y.T
        return np.stack([back(o) for o in out])


def integrate_flow(flow: FlowHandle, x, t: float) -> np.ndarray:
    return flow.evaluate(x, t)


# --- regions and entry times -------------------------------------------------


@dataclass(frozen=True)
class OpenRegion:
    """Open set O given by an indicator; ``signed_distance`` is > 0 in O, <= 0 off O."""

    indicator: Callable[[np.ndarray], np.ndarray]
    signed_distance: Callable[[np.ndarray], np.ndarray] | None = None
    dim: int = 1
    name: str = "region"

    def inside(self, x) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        return np.asarray(self.indicator(pts), dtype=bool).reshape(len(pts))

    def in_closure(self, x, tol: float = 1e-9) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        if self.signed_distance is None:
            return self.inside(pts)
        return np.asarray(self.signed_distance(pts)).reshape(len(pts)) >= -tol

    def distance_to_boundary(self, x) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        if self.signed_distance is None:
            raise ValueError("region has no signed distance")
        return np.abs(np.asarray(self.signed_distance(pts)).reshape(len(pts)))

    def consistent(self, x) -> bool:
        """Indicator agrees with the sign of the signed distance on the samples."""
        if self.signed_distance is None:
            return True
        pts, _ = as_points(x, self.dim)
        sd = np.asarray(self.signed_distance(pts)).reshape(len(pts))
        return bool(np.all(self.inside(pts) == (sd > 0)))

    @classmethod
    def half_line_below(cls, b: float) -> "OpenRegion":
        """O = (-inf, b)."""
        return cls(lambda x: x[:, 0] < b, lambda x: b - x[:, 0], 1, f"(-inf,{b})")

    @classmethod
    def interval(cls, a: float, b: float) -> "OpenRegion":
        return cls(lambda x: (x[:, 0] > a) & (x[:, 0] < b), lambda x: np.minimum(x[:, 0] - a, b - x[:, 0]), 1, f"({a},{b})")

    @classmethod
    def ball(cls, center, radius: float) -> "OpenRegion":
        c = np.atleast_1d(np.asarray(center, dtype=float))

        def sd(x):
            return radius - np.linalg.norm(x - c, axis=1)

        return cls(lambda x: sd(x) > 0, sd, c.size, f"ball({c.tolist()},{radius})")


def _default_tol(t_max: float) -> float:
    return 1e-10 * (1.0 + t_max)


def _first_entry(flow: FlowHandle, region: OpenRegion, p: np.ndarray, t_max: float, tol: float, n_scan: int = 256):
    """Entry time into O^c of a single point and the state there."""
    if not region.inside(p)[0]:
        return 0.0, p.copy()
    times = np.linspace(0.0, t_max, n_scan + 1)
    traj = flow.trajectory(p.reshape(1, -1), times)[:, 0]
    outside = ~region.inside(traj)
    if not outside.any():
        return INFINITY, traj[-1]
    k = int(np.argmax(outside))
    lo_t, hi_t = times[k - 1], times[k]
    base, hi_state = traj[k - 1], traj[k]
    while hi_t - lo_t > tol:
        mid = 0.5 * (lo_t + hi_t)
        y = flow.evaluate(base.reshape(1, -1), mid - times[k - 1])[0]
        if region.inside(y.reshape(1, -1))[0]:
            lo_t = mid
        else:
            hi_t, hi_state = mid, y
    return hi_t, hi_state


def entry_time(flow: FlowHandle, region: OpenRegion, x, t_max: float, tol: float | None = None):
    """First time the trajectory from ``x`` lies in the closed set O^c.

    Returns ``math.inf`` when no entry happens by ``t_max``; batched input
    returns an array.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    tol = _default_tol(t_max) if tol is None else tol
    pts, _ = as_points(x, flow.dim)
    out = np.array([_first_entry(flow, region, p, t_max, tol)[0] for p in pts])
    return float(out[0]) if np.ndim(x) == 0 or (flow.dim > 1 and np.ndim(x) == 1) else out


class StoppedFlow(FlowHandle):
    """``Phi_t(x)`` before the entry time ``T(x)`` into O^c, ``Phi_T(x)`` afterwards."""

    kind = "stopped"

    def __init__(self, base: FlowHandle, region: OpenRegion, tol: float | None = None):
        self.base = base
        self.region = region
        self.dim = base.dim
        self.field = base.field
        self.tol = tol

    def _evaluate(self, pts, t):
        tol = _default_tol(t) if self.tol is None else self.tol
        out = np.empty_like(pts)
        for k, p in enumerate(pts):
            hit, state = _first_entry(self.base, self.region, p, t, tol)
            out[k] = self.base.evaluate(p.reshape(1, -1), t)[0] if hit == INFINITY else state
        return out

    def entry_time(self, x, t_max: float):
        return entry_time(self.base, self.region, x, t_max, self.tol)


class RestrictedFlow(StoppedFlow):
    """Stopped flow with its domain cut down to the closure of O."""

    kind = "restricted"

    def _evaluate(self, pts, t):
        bad = ~self.region.in_closure(pts)
        if bad.any():
            raise OutsideDomainError(f"point {pts[np.argmax(bad)].tolist()} is outside the closure of {self.region.name}")
        return super()._evaluate(pts, t)

    def evaluate(self, x, t):
        pts, _ = as_points(x, self.dim)
        if t == 0:
            bad = ~self.region.in_closure(pts)
            if bad.any():
                raise OutsideDomainError(f"point {pts[np.argmax(bad)].tolist()} is outside the closure of {self.region.name}")
        return super().evaluate(x, t)


def stopped_flow(flow: FlowHandle, region: OpenRegion) -> StoppedFlow:
    return StoppedFlow(flow, region)


def restricted_flow(flow: FlowHandle, region: OpenRegion) -> RestrictedFlow:
    return RestrictedFlow(flow, region)


# --- axioms ------------------------------------------------------------------


def _ball_samples(dim: int, radius: float, n: int, seed: int = 0) -> np.ndarray:
    if dim == 1:
        return np.linspace(-radius, radius, n).reshape(-1, 1)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(n, 1)) ** (1.0 / dim)
    return dirs * radii


def field_constants(field: VectorField, radius: float = 10.0, n: int = 401, slack: float = 0.1) -> dict:
    """Sampled constants for local weak monotonicity and weak coercivity.

    ``c_r`` is the sampled sup of <B(x)-B(y), x-y>/|x-y|^2 over the ball; the
    coercivity candidate ``c0`` is the sup of <B(x),x>/(1+|x|^2) over the inner
    half ball, and the witness is the same ratio on the outer shell.  A
    witness above ``c0 * (1 + slack)`` means the ratio keeps growing with the
    radius, so no constant works.
    """
    pts = _ball_samples(field.dim, radius, n)
    b = field(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    db = b[:, None, :] - b[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    mask = d2 > 1e-14
    c_r = float(np.max(np.einsum("ijk,ijk->ij", db, diff)[mask] / d2[mask]))

    ratio = np.einsum("ij,ij->i", b, pts) / (1.0 + np.einsum("ij,ij->i", pts, pts))
    norms = np.linalg.norm(pts, axis=1)
    inner = ratio[norms <= radius / 2]
    outer = ratio[norms > radius / 2]
    c0 = float(inner.max())
    witness = float(outer.max())
    ok = witness <= max(c0, 0.0) * (1.0 + slack) + 1e-9
    return {"c_r": c_r, "radius": radius, "c0": c0, "coercivity_witness": witness, "coercivity_ok": bool(ok)}


def check_flow_axioms(
    flow: FlowHandle,
    sample_points,
    sample_times: Iterable[float],
    tol: float = 1e-8,
    h_grid: Sequence[float] = (1e-2, 1e-4, 1e-6),
    field_radius: float = 10.0,
) -> Report:
    """Semigroup, identity and right-continuity defects plus field diagnostics."""
    pts, _ = as_points(sample_points, flow.dim)
    if len(pts) == 0:
        raise ValueError("need at least one sample point")
    times = list(sample_times)
    if not times:
        raise ValueError("need at least one sample time")
    details: dict = {"blowups": []}
    semigroup, worst = 0.0, None
    identity = float(np.abs(flow.evaluate(pts, 0.0) - pts).max())
    for t in times:
        for s in times:
            try:
                lhs = flow.evaluate(pts, t + s)
                rhs = flow.evaluate(flow.evaluate(pts, s), t)
            except BlowUpError as e:
                details["blowups"].append({"t": t, "s": s, "escape_time": e.escape_time})
                continue
            d = np.linalg.norm(lhs - rhs, axis=1)
            k = int(np.argmax(d))
            if worst is None or d[k] > semigroup:
                semigroup, worst = float(d[k]), {"t": t, "s": s, "x": pts[k].tolist()}
    continuity = []
    for h in h_grid:
        try:
            continuity.append(float(np.linalg.norm(flow.evaluate(pts, h) - pts, axis=1).max()))
        except BlowUpError as e:
            details["blowups"].append({"h": h, "escape_time": e.escape_time})
            continuity.append(math.inf)
    scale = 1.0 + float(np.linalg.norm(pts, axis=1).max())
    right_continuous = bool(np.all(np.diff(continuity) <= 1e-15 * scale) and continuity[-1] <= 1e-4 * scale)

    details.update(
        identity_defect=identity,
        semigroup_defect=semigroup,
        right_continuity=dict(zip(map(str, h_grid), continuity)),
        right_continuous=right_continuous,
    )
    ok = semigroup <= tol and identity <= tol and right_continuous and not details["blowups"]
    if flow.field is not None:
        consts = field_constants(flow.field, field_radius)
        details.update(consts)
        ok = ok and consts["coercivity_ok"]
    return Report("flow_axioms", bool(ok), max(semigroup, identity), tol, worst, details)


# --- generator of a flow -----------------------------------------------------


def gradient(v, x, h: float = 1e-5) -> np.ndarray:
    """Closed-form gradient when ``v`` provides one, else central differences."""
    if hasattr(v, "gradient"):
        return np.asarray(v.gradient(x), dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1 and not hasattr(v, "dim"):
        return (v(x + h) - v(x - h)) / (2 * h)
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        g[..., i] = (v(x + e) - v(x - e)) / (2 * h)
    return g


def flow_generator(field: VectorField, v, x) -> np.ndarray:
    """``<B(x), grad v(x)>``."""
    b = field(x)
    g = gradient(v, x)
    if field.dim == 1:
        return b * g
    return np.einsum("...i,...i->...", b, g)


# --- non-autonomous families -------------------------------------------------


class AutonomizedFlow(ClosedFormFlow):
    """``(s, x) -> (s + t, Phi_{s, s+t}(x))`` on R^{1+d}."""

    kind = "autonomized"

    def __init__(self, family: Callable, dim: int):
        self.family = family
        self.base_dim = int(dim)

        def func(y, t):
            s = y[:, :1]
            x = y[:, 1:]
            return np.hstack([s + t, np.asarray(family(s, s + t, x), dtype=float).reshape(x.shape)])

        super().__init__(dim + 1, func, None, "autonomized")


def cocycle_defect(family: Callable, dim: int, sample_points, sample_times) -> tuple[float, dict, float]:
    """Worst (Nsd1) defect over s <= r <= t drawn from the sample times, and the (Nsd2) defect."""
    pts, _ = as_points(sample_points, dim)
    n = len(pts)
    times = sorted(set(float(t) for t in sample_times))
    worst, where = 0.0, {}
    ident = 0.0
    for s in times:
        col = np.full((n, 1), s)
        ident = max(ident, float(np.abs(np.asarray(family(col, col, pts)).reshape(pts.shape) - pts).max()))
        for r in times:
            if r < s:
                continue
            for t in times:
                if t < r:
                    continue
                rcol, tcol = np.full((n, 1), r), np.full((n, 1), t)
                direct = np.asarray(family(col, tcol, pts)).reshape(pts.shape)
                mid = np.asarray(family(col, rcol, pts)).reshape(pts.shape)
                via = np.asarray(family(rcol, tcol, mid)).reshape(pts.shape)
                d = np.linalg.norm(direct - via, axis=1)
                k = int(np.argmax(d))
                if d[k] > worst:
                    worst, where = float(d[k]), {"s": s, "r": r, "t": t, "x": pts[k].tolist()}
    return worst, where, ident


def autonomize(family: Callable, dim: int, sample_points, sample_times, tol: float = 1e-8) -> AutonomizedFlow:
    """Wrap a two-parameter family ``family(s, t, x) = Phi_{s,t}(x)``.

    ``s`` and ``t`` arrive as ``(n, 1)`` columns alongside ``(n, dim)`` points.
    """
    defect, where, ident = cocycle_defect(family, dim, sample_points, sample_times)
    if ident > tol:
        raise CocycleViolation(ident, {"identity": True})
    if defect > tol:
        raise CocycleViolation(defect, where)
    return AutonomizedFlow(family, dim)


def export_trajectory_csv(flow: FlowHandle, x, times: Sequence[float], path) -> None:
    """Write ``t, x1..xd`` rows for a single starting point."""
    traj = flow.trajectory(np.asarray(x, dtype=float).reshape(1, -1) if flow.dim > 1 else [x], times)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(flow.dim)])
        for t, row in zip(times, traj):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in np.ravel(row)])


def flow_at_times(flow: FlowHandle, x, times) -> np.ndarray:
    """``Phi_{times[i]}(x)`` for one starting point and arbitrary (unsorted) nonnegative times."""
    times = np.asarray(times, dtype=float).ravel()
    if np.any(times < 0):
        raise ValueError("flow time must be nonnegative")
    order = np.argsort(times, kind="stable")
    uniq, inverse = np.unique(times[order], return_inverse=True)
    pts, _ = as_points(x, flow.dim)
    traj = flow.trajectory(pts[:1], uniq)[:, 0] if flow.dim > 1 else flow.trajectory(pts[:1, 0], uniq)[:, 0]
    out = np.empty((times.size,) + traj.shape[1:])
    out[order] = traj[inverse]
    return out
