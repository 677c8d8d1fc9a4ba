"""Bounded test functions with closed-form derivatives.

Every function exposes ``f(x)``, the first derivative ``f.d1(x)`` (the
gradient, last axis ``dim``, when ``dim > 1``) and ``f.d2(x)`` (the Laplacian
when ``dim > 1``).  Sums, scalar multiples and products combine derivatives
by the usual rules, so squares of fleet members keep closed forms.

The potentials at the bottom are the quadrature-built functions used by the
generator-sum checks: translation resolvents of Gaussian bumps (closed form
through ``erfcx``), their heat-kernel resolvents (one Simpson integral over
time), and shift mixtures ``sum_k w_k g(x + s_k)``.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.special import erfc, erfcx

FD_STEP = 1e-5


class Function:
    dim = 1
    name = "function"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def d1(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return (self(x + FD_STEP) - self(x - FD_STEP)) / (2 * FD_STEP)
        out = np.empty_like(x)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = FD_STEP
            out[..., i] = (self(x + e) - self(x - e)) / (2 * FD_STEP)
        return out

    def d2(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = 1e-4
        if self.dim == 1:
            return (self(x + h) - 2 * self(x) + self(x - h)) / h**2
        out = np.zeros(x.shape[:-1])
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            out += (self(x + e) - 2 * self(x) + self(x - e)) / h**2
        return out

    def gradient(self, x) -> np.ndarray:
        return self.d1(x)

    def sup_norm(self) -> float:
        """Upper bound on ``|f|``; subclasses override when known."""
        return math.inf

    def __add__(self, other):
        return Sum(self, as_function(other, self.dim))

    __radd__ = __add__

    def __sub__(self, other):
        return Sum(self, Scaled(as_function(other, self.dim), -1.0))

    def __rsub__(self, other):
        return Sum(as_function(other, self.dim), Scaled(self, -1.0))

    def __neg__(self):
        return Scaled(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return Scaled(self, float(other))
        return Product(self, as_function(other, self.dim))

    __rmul__ = __mul__

    def __pow__(self, k):
        if k != 2:
            raise ValueError("only squares are supported")
        return Product(self, self)

    def __repr__(self):
        return f"{type(self).__name__}({self.name})"


def as_function(obj, dim: int = 1) -> Function:
    if isinstance(obj, Function):
        return obj
    if np.isscalar(obj):
        return Constant(float(obj), dim)
    if callable(obj):
        return FromCallable(obj, dim=dim)
    raise TypeError(f"cannot treat {type(obj).__name__} as a function")


def _pointwise_dot(a, b, dim):
    return a * b if dim == 1 else np.einsum("...i,...i->...", a, b)


def _scalar_shape(x, dim):
    x = np.asarray(x, dtype=float)
    return x.shape if dim == 1 else x.shape[:-1]


class Constant(Function):
    def __init__(self, c: float, dim: int = 1):
        self.c = float(c)
        self.dim = dim
        self.name = f"{c:g}"

    def __call__(self, x):
        return np.full(_scalar_shape(x, self.dim), self.c)

    def d1(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def d2(self, x):
        return np.zeros(_scalar_shape(x, self.dim))

    def sup_norm(self):
        return abs(self.c)


class FromCallable(Function):
    """Wrap plain callables; missing derivatives fall back to central differences."""

    def __init__(self, f: Callable, d1: Callable | None = None, d2: Callable | None = None, dim: int = 1, name="callable", sup=math.inf):
        self.f, self._d1, self._d2 = f, d1, d2
        self.dim = dim
        self.name = name
        self._sup = sup

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def d1(self, x):
        return np.asarray(self._d1(np.asarray(x, dtype=float)), dtype=float) if self._d1 else super().d1(x)

    def d2(self, x):
        return np.asarray(self._d2(np.asarray(x, dtype=float)), dtype=float) if self._d2 else super().d2(x)

    def sup_norm(self):
        return self._sup


class Sum(Function):
    def __init__(self, a: Function, b: Function):
        self.a, self.b = a, b
        self.dim = a.dim
        self.name = f"{a.name}+{b.name}"

    def __call__(self, x):
        return self.a(x) + self.b(x)

    def d1(self, x):
        return self.a.d1(x) + self.b.d1(x)

    def d2(self, x):
        return self.a.d2(x) + self.b.d2(x)

    def sup_norm(self):
        return self.a.sup_norm() + self.b.sup_norm()


class Scaled(Function):
    def __init__(self, a: Function, c: float):
        self.a, self.c = a, float(c)
        self.dim = a.dim
        self.name = f"{c:g}*{a.name}"

    def __call__(self, x):
        return self.c * self.a(x)

    def d1(self, x):
        return self.c * self.a.d1(x)

    def d2(self, x):
        return self.c * self.a.d2(x)

    def sup_norm(self):
        return abs(self.c) * self.a.sup_norm()


class Product(Function):
    def __init__(self, a: Function, b: Function):
        self.a, self.b = a, b
        self.dim = a.dim
        self.name = f"({a.name})*({b.name})"

    def __call__(self, x):
        return self.a(x) * self.b(x)

    def d1(self, x):
        fa, fb = self.a(x), self.b(x)
        if self.dim == 1:
            return self.a.d1(x) * fb + fa * self.b.d1(x)
        return self.a.d1(x) * fb[..., None] + fa[..., None] * self.b.d1(x)

    def d2(self, x):
        cross = _pointwise_dot(self.a.d1(x), self.b.d1(x), self.dim)
        return self.a.d2(x) * self.b(x) + 2 * cross + self.a(x) * self.b.d2(x)

    def sup_norm(self):
        return self.a.sup_norm() * self.b.sup_norm()


# --- the fleet ----------------------------------------------------------------


class GaussianBump(Function):
    """``height * exp(-|x - center|^2 / (2 width^2))``."""

    def __init__(self, center=0.0, width: float = 1.0, height: float = 1.0):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        self.center = c
        self.dim = c.size
        self.width = float(width)
        self.height = float(height)
        if self.width <= 0:
            raise ValueError("width must be positive")
        where = f"{c[0]:g}" if c.size == 1 else str(c.tolist())
        self.name = f"bump(c={where},w={width:g})"

    def _r2(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return (x - self.center[0]) ** 2
        return np.sum((x - self.center) ** 2, axis=-1)

    def __call__(self, x):
        return self.height * np.exp(-self._r2(x) / (2 * self.width**2))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        v = self(x)
        if self.dim == 1:
            return -(x - self.center[0]) / self.width**2 * v
        return -(x - self.center) / self.width**2 * v[..., None]

    def d2(self, x):
        w2 = self.width**2
        return (self._r2(x) / w2**2 - self.dim / w2) * self(x)

    def sup_norm(self):
        return abs(self.height)

    def heat(self, s: float) -> "GaussianBump":
        """``E f(x + sqrt(s) Z)``: again a bump, wider and lower."""
        if s < 0:
            raise ValueError("variance must be nonnegative")
        w2 = self.width**2
        h = self.height * (w2 / (w2 + s)) ** (self.dim / 2)
        return GaussianBump(self.center if self.dim > 1 else self.center[0], math.sqrt(w2 + s), h)

    def shifted(self, v) -> "GaussianBump":
        """``x -> f(x + v)``."""
        c = self.center - np.atleast_1d(v)
        return GaussianBump(c if self.dim > 1 else c[0], self.width, self.height)


class ClippedPolynomial(Function):
    """``p(clip(x, -radius, radius))`` for a 1-d polynomial with ascending ``coeffs``."""

    def __init__(self, coeffs: Sequence[float], radius: float = 10.0):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.radius = float(radius)
        self.poly = np.polynomial.Polynomial(self.coeffs)
        self.name = f"clippoly({self.coeffs.tolist()},R={radius:g})"

    def __call__(self, x):
        return self.poly(np.clip(np.asarray(x, dtype=float), -self.radius, self.radius))

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < self.radius, self.poly.deriv(1)(x), 0.0)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < self.radius, self.poly.deriv(2)(x), 0.0)

    def sup_norm(self):
        grid = np.linspace(-self.radius, self.radius, 2001)
        return float(np.abs(self.poly(grid)).max())


class PiecewiseLinear(Function):
    """Linear interpolation through ``(knots, values)``, constant outside; ``d1`` is the right derivative."""

    def __init__(self, knots: Sequence[float], values: Sequence[float]):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.knots.ndim != 1 or self.knots.size < 2 or np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing with at least two entries")
        if self.values.shape != self.knots.shape:
            raise ValueError("values must match knots")
        self.slopes = np.diff(self.values) / np.diff(self.knots)
        self.name = f"pwlin({len(self.knots)} knots)"

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.knots, x, side="right") - 1
        inside = (k >= 0) & (k < len(self.slopes))
        return np.where(inside, self.slopes[np.clip(k, 0, len(self.slopes) - 1)], 0.0)

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sup_norm(self):
        return float(np.abs(self.values).max())


class Sinusoid(Function):
    """``amplitude * sin(freq * clip(x) + phase)`` with clipping at ``radius``."""

    def __init__(self, freq: float = 1.0, phase: float = 0.0, amplitude: float = 1.0, radius: float = math.inf):
        self.freq, self.phase, self.amplitude, self.radius = float(freq), float(phase), float(amplitude), float(radius)
        self.name = f"sin({freq:g}x+{phase:g})"

    def _inside(self, x):
        return np.abs(x) < self.radius

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), -self.radius, self.radius)
        return self.amplitude * np.sin(self.freq * x + self.phase)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self._inside(x), self.amplitude * self.freq * np.cos(self.freq * x + self.phase), 0.0)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(self._inside(x), -self.amplitude * self.freq**2 * np.sin(self.freq * x + self.phase), 0.0)

    def sup_norm(self):
        return abs(self.amplitude)


class Exponential(Function):
    """``exp(-rate * x)``; bounded on the half line the subordination checks use."""

    def __init__(self, rate: float = 1.0):
        self.rate = float(rate)
        self.name = f"exp(-{rate:g}x)"

    def __call__(self, x):
        return np.exp(-self.rate * np.asarray(x, dtype=float))

    def d1(self, x):
        return -self.rate * self(x)

    def d2(self, x):
        return self.rate**2 * self(x)

    def sup_norm(self):
        return 1.0


def default_fleet() -> list[Function]:
    """The 1-d fleet used by the acceptance suites."""
    return [
        GaussianBump(0.0, 1.0),
        GaussianBump(0.7, 0.5, 2.0),
        ClippedPolynomial([0.0, 0.5, -0.2, 0.03], radius=4.0),
        PiecewiseLinear([-2.0, -0.5, 0.5, 2.0], [0.0, 1.0, -0.5, 0.0]),
        Sinusoid(1.0, radius=10.0),
    ]


# --- closed-form and quadrature-built potentials -------------------------------


def _translation_resolvent_bump(x, center, width, height, beta, v):
    """Values and first two derivatives of the bump translation resolvent; broadcasts over all arguments."""
    a = v / (math.sqrt(2.0) * width)
    b = (x - center) / (math.sqrt(2.0) * width)
    k = beta / (2 * a)
    f = height * np.exp(-(b**2))
    z = b + k
    # left of the bump exp(-b^2) underflows while erfcx(z) overflows; there
    # exp(-b^2) erfcx(z) = exp(2 b k + k^2) erfc(z) with a negative exponent
    left = np.exp(np.minimum(2 * b * k + k**2, 0.0)) * erfc(np.minimum(z, 0.0))
    right = np.exp(-(b**2)) * erfcx(np.maximum(z, 0.0))
    g = height * math.sqrt(math.pi) / (2 * a) * np.where(z < 0, left, right)
    g1 = (beta * g - f) / v
    f1 = -(x - center) / width**2 * f
    g2 = (beta * g1 - f1) / v
    return g, g1, g2


class TranslationResolvent(Function):
    """``g(x) = int_0^inf e^{-beta s} f(x + v s) ds`` for a 1-d Gaussian bump ``f``, ``v > 0``.

    Closed form through the scaled complementary error function; the
    derivatives follow from ``v g' = beta g - f``.
    """

    def __init__(self, bump: GaussianBump, beta: float, velocity: float = 1.0):
        if bump.dim != 1:
            raise ValueError("translation resolvent is implemented for 1-d bumps")
        if velocity <= 0 or beta <= 0:
            raise ValueError("need beta > 0 and velocity > 0")
        self.bump, self.beta, self.v = bump, float(beta), float(velocity)
        self.name = f"V_{beta:g}[{bump.name}]"

    def _eval(self, x):
        b = self.bump
        return _translation_resolvent_bump(np.asarray(x, dtype=float), b.center[0], b.width, b.height, self.beta, self.v)

    def __call__(self, x):
        return self._eval(x)[0]

    def d1(self, x):
        return self._eval(x)[1]

    def d2(self, x):
        return self._eval(x)[2]

    def sup_norm(self):
        return abs(self.bump.height) / self.beta


class HeatTranslationPotential(Function):
    """``u(x) = int_0^inf e^{-alpha t} E[V_beta f(x + sigma sqrt(t) Z)] dt`` for a 1-d bump ``f``.

    The Gaussian average of the translation resolvent of a bump is the
    translation resolvent of the heat-smoothed bump, so only the outer time
    integral needs quadrature (composite Simpson on ``[0, 40/alpha]``).
    ``offset`` adds a fixed extra variance, which gives the heat semigroup
    applied to ``u`` in closed form.
    """

    def __init__(self, bump: GaussianBump, alpha: float, beta: float, velocity: float = 1.0, sigma: float = 1.0, intervals: int = 4000, offset: float = 0.0):
        if alpha <= 0 or beta <= 0 or velocity <= 0:
            raise ValueError("alpha, beta and velocity must be positive")
        if bump.dim != 1:
            raise ValueError("heat potential is implemented for 1-d bumps")
        self.bump, self.alpha, self.beta, self.v, self.sigma = bump, float(alpha), float(beta), float(velocity), float(sigma)
        self.intervals, self.offset = int(intervals), float(offset)
        self.t = np.linspace(0.0, 40.0 / alpha, self.intervals + 1)
        w2 = bump.width**2 + self.sigma**2 * self.t + self.offset
        self._widths = np.sqrt(w2)
        self._heights = bump.height * bump.width / self._widths
        self._weight = np.exp(-self.alpha * self.t)
        self.name = f"U_{alpha:g}V_{beta:g}[{bump.name}]"

    def _eval(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(1, -1)
        col = (-1, 1)
        parts = _translation_resolvent_bump(
            flat, self.bump.center[0], self._widths.reshape(col), self._heights.reshape(col), self.beta, self.v
        )
        return [simpson(p * self._weight.reshape(col), x=self.t, axis=0).reshape(x.shape) for p in parts]

    def __call__(self, x):
        return self._eval(x)[0]

    def d1(self, x):
        return self._eval(x)[1]

    def d2(self, x):
        return self._eval(x)[2]

    def heat(self, s: float) -> "HeatTranslationPotential":
        return HeatTranslationPotential(self.bump, self.alpha, self.beta, self.v, self.sigma, self.intervals, self.offset + s)

    def sup_norm(self):
        return abs(self.bump.height) / (self.alpha * self.beta)


class ShiftMixture(Function):
    """``u(x) = sum_k w_k g(x + s_k)``: a function integrated against a discrete measure on shifts."""

    def __init__(self, g: Function, shifts, weights, name: str | None = None):
        self.g = g
        self.shifts = np.asarray(shifts, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if self.shifts.shape != self.weights.shape:
            raise ValueError("shifts and weights must have the same shape")
        self.name = name or f"mix[{g.name}]"

    def _apply(self, fn, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for s, w in zip(self.shifts, self.weights):
            if w != 0.0:
                out += w * fn(x + s)
        return out

    def __call__(self, x):
        return self._apply(self.g, x)

    def d1(self, x):
        return self._apply(self.g.d1, x)

    def d2(self, x):
        return self._apply(self.g.d2, x)

    def sup_norm(self):
        return float(np.abs(self.weights).sum()) * self.g.sup_norm()
