"""Utility functions, convex conjugates, inverses, and adjoint functions.

A utility function here is strictly increasing, strictly concave and
continuously differentiable on (0, inf), normalized to U(0+) = 0, and
satisfies the Inada conditions U'(0+) = inf, U'(inf) = 0. The module
provides

* the conjugate V(y) = sup_x [U(x) - x y] and its derivative,
* the inverse U^-1 and its derivative [U^-1]' = 1 / U'(U^-1),
* the adjoint pair gamma*_y(z) = z V(y/z) (with 0/0 = 0, so
  gamma*_y(0) = 0 and gamma*_0(z) = z lim U) and gamma_y(x) = y U^-1(|x|),
  which are convex conjugates of each other in (z, x),
* doubling-growth diagnostics: V(y/2) <= a V(y) + b(y+1) and
  U^-1(2y) <= k U^-1(y) + d, plus the asymptotic elasticity
  limsup x U'(x) / U(x).

The Power(alpha) family U(x) = x^alpha / alpha, alpha in (0, 1), uses exact
closed forms everywhere; Custom utilities supply U and U' as callables and
all derived quantities fall back to bracketed root solves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._errors import ConvergenceError, DomainError, ValidationError

__all__ = [
    "UtilityFunction",
    "Delta2Constants",
    "Delta2Report",
    "conjugate_v",
    "conjugate_v_prime",
    "conjugate_v_inverse",
    "u_inverse",
    "u_inverse_prime",
    "gamma_star",
    "gamma",
    "check_delta2",
    "asymptotic_elasticity",
]

_XMIN = 1e-300
_XMAX = 1e300


class UtilityFunction:
    """Immutable utility specification.

    Use :meth:`power` for the closed-form family or :meth:`custom` for
    user-supplied callables. Custom utilities bounded below with
    U(0+) != 0 are normalized by subtracting U(0+), so that U(0+) = 0
    holds for every instance; the shift is recorded in ``u_shift``.
    """

    __slots__ = ("family", "alpha", "_u", "_up", "delta", "u_shift")

    def __init__(self, family: str, alpha: float | None = None,
                 u: Callable[[float], float] | None = None,
                 u_prime: Callable[[float], float] | None = None,
                 delta: float = math.inf,
                 u_shift: float = 0.0) -> None:
        if family not in ("power", "custom"):
            raise ValidationError(f"unknown utility family {family!r}")
        if family == "power":
            if alpha is None or not (0.0 < alpha < 1.0):
                raise ValidationError("power utility requires alpha in (0, 1)")
            delta = math.inf
        else:
            if u is None or u_prime is None:
                raise ValidationError("custom utility requires U and U'")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_up", u_prime)
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "u_shift", float(u_shift))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("UtilityFunction is immutable")

    @classmethod
    def power(cls, alpha: float) -> "UtilityFunction":
        """U(x) = x^alpha / alpha with alpha in (0, 1)."""
        return cls("power", alpha=float(alpha))

    @classmethod
    def custom(cls, u: Callable[[float], float],
               u_prime: Callable[[float], float],
               delta: float = math.inf) -> "UtilityFunction":
        """Utility from callables U, U' on (0, inf).

        ``delta`` declares lim_{x->inf} U(x) (the upper end of the monotone
        range); leave it at inf for unbounded utilities. U(0+) is probed at
        1e-12 and subtracted if nonzero, normalizing to U(0+) = 0. A
        vanishing limit is recognized either by |U(1e-12)| < 1e-9 or by
        power-like decay, U growing by a factor >= 1.5 from 1e-12 to 1e-10
        (true for x^alpha with alpha >= 0.09; slower-vanishing utilities
        would be misread as bounded below).
        """
        shift = float(u(1e-12))
        if not math.isfinite(shift):
            raise ValidationError("U(0+) must be finite (bounded below)")
        if abs(shift) < 1e-9 or abs(float(u(1e-10))) >= 1.5 * abs(shift):
            shift = 0.0
        base_u = u
        if shift != 0.0:
            def u_norm(x: float, _u=u, _s=shift) -> float:
                return _u(x) - _s
            base_u = u_norm
        return cls("custom", u=base_u, u_prime=u_prime,
                   delta=float(delta) - shift, u_shift=shift)

    # -- pointwise evaluations ------------------------------------------

    def u(self, x):
        """U(x), elementwise on arrays."""
        if self.family == "power":
            a = self.alpha
            return np.power(x, a) / a
        if np.ndim(x) == 0:
            return self._u(float(x))
        return np.array([self._u(float(v)) for v in np.ravel(x)]).reshape(
            np.shape(x))

    def u_prime(self, x):
        """U'(x), elementwise on arrays."""
        if self.family == "power":
            a = self.alpha
            return np.power(x, a - 1.0)
        if np.ndim(x) == 0:
            return self._up(float(x))
        return np.array([self._up(float(v)) for v in np.ravel(x)]).reshape(
            np.shape(x))

    def marginal_inverse(self, y):
        """(U')^-1(y), the Merton-type wealth map, elementwise."""
        if self.family == "power":
            return np.power(y, 1.0 / (self.alpha - 1.0))
        if np.ndim(y) == 0:
            return _solve_increasing(lambda t: -self._up(t), -float(y),
                                     "marginal utility")
        return np.array([
            _solve_increasing(lambda t: -self._up(t), -float(v),
                              "marginal utility")
            for v in np.ravel(y)]).reshape(np.shape(y))

    def __repr__(self) -> str:
        if self.family == "power":
            return f"UtilityFunction.power({self.alpha})"
        return f"UtilityFunction.custom(delta={self.delta})"


@dataclass(frozen=True)
class Delta2Constants:
    """Constants (a, b) for V(y/2) <= a V(y) + b(y+1) and (k, d) for
    U^-1(2y) <= k U^-1(y) + d; all strictly positive (b, d may be 0)."""

    a: float
    b: float
    k: float
    d: float

    def __post_init__(self) -> None:
        if self.a <= 0.0 or self.k <= 0.0:
            raise ValidationError("doubling constants a, k must be positive")
        if self.b < 0.0 or self.d < 0.0:
            raise ValidationError("additive constants b, d must be >= 0")


@dataclass(frozen=True)
class Delta2Report:
    """Outcome of :func:`check_delta2`; worst_slack is the minimum of
    rhs - lhs over the grid and both inequalities."""

    holds_V: bool
    holds_Uinv: bool
    worst_slack: float
    fitted_a: float | None = None
    fitted_k: float | None = None


def _solve_increasing(f: Callable[[float], float], target: float,
                      what: str) -> float:
    """Root of f(x) = target for continuous increasing f on (0, inf).

    Brackets by doubling from x = 1 in both directions, runs 80 bisection
    steps, then polishes with 5 secant-Newton steps (numerical slope).
    """
    lo = hi = 1.0
    flo = fhi = f(1.0)
    while flo > target:
        lo *= 0.5
        if lo < _XMIN:
            raise ConvergenceError(
                f"could not bracket {what} below x=1 (target {target:g})")
        flo = f(lo)
    while fhi < target:
        hi *= 2.0
        if hi > _XMAX:
            raise ConvergenceError(
                f"could not bracket {what} above x=1 (target {target:g})")
        fhi = f(hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(5):
        h = max(abs(x) * 1e-7, 1e-12)
        slope = (f(x + h) - f(x - h)) / (2.0 * h)
        if slope <= 0.0 or not math.isfinite(slope):
            break
        step = (target - f(x)) / slope
        cand = x + step
        if cand <= lo or cand >= hi:
            break
        x = cand
        if abs(step) <= 1e-12 * max(abs(x), 1.0):
            break
    return x


def conjugate_v(uf: UtilityFunction, y: float) -> float:
    """V(y) = sup_{x>0} [U(x) - x y]; strictly decreasing, positive.

    Power family: V(y) = ((1-alpha)/alpha) y^(-alpha/(1-alpha)). Custom:
    solves U'(x) = y by bracketed bisection with Newton polish and returns
    U(x*) - x* y.
    """
    y = float(y)
    if y <= 0.0:
        raise DomainError("conjugate_v requires y > 0")
    if uf.family == "power":
        a = uf.alpha
        return (1.0 - a) / a * y ** (-a / (1.0 - a))
    xstar = _solve_increasing(lambda t: -uf._up(t), -y, "marginal utility")
    return uf._u(xstar) - xstar * y


def conjugate_v_prime(uf: UtilityFunction, y: float) -> float:
    """V'(y) = -(U')^-1(y)."""
    y = float(y)
    if y <= 0.0:
        raise DomainError("conjugate_v_prime requires y > 0")
    return -float(uf.marginal_inverse(y))


def conjugate_v_inverse(uf: UtilityFunction, c: float) -> float:
    """Solve V(y) = c for y > 0 (V is strictly decreasing)."""
    c = float(c)
    if c <= 0.0:
        raise DomainError("conjugate_v_inverse requires c > 0")
    if uf.family == "power":
        a = uf.alpha
        return ((1.0 - a) / (a * c)) ** ((1.0 - a) / a)
    return _solve_increasing(lambda t: -conjugate_v(uf, t), -c,
                             "conjugate value")


def u_inverse(uf: UtilityFunction, u: float) -> float:
    """U^-1(u) for u >= 0; +inf when u >= lim U for bounded utilities."""
    u = float(u)
    if u < 0.0:
        raise DomainError("u_inverse requires u >= 0")
    if u == 0.0:
        return 0.0
    if u >= uf.delta:
        return math.inf
    if uf.family == "power":
        a = uf.alpha
        return (a * u) ** (1.0 / a)
    return _solve_increasing(uf._u, u, "utility value")


def u_inverse_prime(uf: UtilityFunction, u: float) -> float:
    """[U^-1]'(u) = 1 / U'(U^-1(u)); 0 at u = 0, +inf beyond lim U."""
    u = float(u)
    if u < 0.0:
        raise DomainError("u_inverse_prime requires u >= 0")
    if u == 0.0:
        return 0.0
    if u >= uf.delta:
        return math.inf
    if uf.family == "power":
        a = uf.alpha
        return (a * u) ** (1.0 / a - 1.0)
    x = u_inverse(uf, u)
    return 1.0 / uf._up(x)


def gamma_star(uf: UtilityFunction, y: float, z: float) -> float:
    """Adjoint function gamma*_y(z): +inf for z < 0, 0 at z = 0, else
    z V(y/z) with the 0/0 = 0 convention at y = 0 (giving z lim U)."""
    y = float(y)
    z = float(z)
    if y < 0.0:
        raise DomainError("gamma_star requires y >= 0")
    if z < 0.0:
        return math.inf
    if z == 0.0:
        return 0.0
    if y == 0.0:
        # V(0+) = lim U = delta
        return z * uf.delta if math.isfinite(uf.delta) else math.inf
    if uf.family == "power":
        a = uf.alpha
        return (1.0 - a) / a * y ** (-a / (1.0 - a)) * z ** (1.0 / (1.0 - a))
    if z < 1e-12:
        # limit branch: z V(y/z) -> 0 as z -> 0+ since V(inf) = U(0+) = 0
        return 0.0
    return z * conjugate_v(uf, y / z)


def gamma(uf: UtilityFunction, y: float, x: float) -> float:
    """gamma_y(x) = y U^-1(|x|); the convex conjugate of gamma*_y(|.|)."""
    y = float(y)
    if y < 0.0:
        raise DomainError("gamma requires y >= 0")
    ax = abs(float(x))
    if y == 0.0:
        return 0.0 if ax <= uf.delta else math.inf
    val = u_inverse(uf, ax)
    return y * val if math.isfinite(val) else math.inf


def check_delta2(uf: UtilityFunction, c: Delta2Constants | None,
                 grid) -> Delta2Report:
    """Verify the doubling inequalities on a grid, or fit tight constants.

    With ``c`` given, checks V(y/2) <= a V(y) + b(y+1) and
    U^-1(2y) <= k U^-1(y) + d at every grid point and reports the minimum
    slack. With ``c=None`` (search mode), returns the fitted multiplicative
    constants a = max V(y/2)/V(y) and k = max U^-1(2y)/U^-1(y) over the
    grid (b = d = 0); for the power family both ratios are constant.
    """
    pts = np.asarray(grid, dtype=float).ravel()
    if pts.size == 0:
        raise DomainError("check_delta2 requires a nonempty grid")
    if (pts <= 0.0).any():
        raise DomainError("check_delta2 grid must be positive")
    v_half = np.array([conjugate_v(uf, y / 2.0) for y in pts])
    v_full = np.array([conjugate_v(uf, y) for y in pts])
    ui_two = np.array([u_inverse(uf, y) for y in 2.0 * pts])
    ui_one = np.array([u_inverse(uf, y) for y in pts])
    if c is None:
        fitted_a = float(np.max(v_half / v_full))
        finite = np.isfinite(ui_two) & (ui_one > 0.0)
        fitted_k = float(np.max(ui_two[finite] / ui_one[finite]))
        return Delta2Report(holds_V=True, holds_Uinv=True, worst_slack=0.0,
                            fitted_a=fitted_a, fitted_k=fitted_k)
    slack_v = c.a * v_full + c.b * (pts + 1.0) - v_half
    slack_u = c.k * ui_one + c.d - ui_two
    slack_u = np.where(np.isinf(ui_two) & np.isinf(ui_one), 0.0, slack_u)
    worst = float(min(slack_v.min(), slack_u.min()))
    return Delta2Report(holds_V=bool((slack_v >= 0.0).all()),
                        holds_Uinv=bool((slack_u >= 0.0).all()),
                        worst_slack=worst)


def asymptotic_elasticity(uf: UtilityFunction, x_probe) -> float:
    """max over the probe tail of x U'(x) / U(x); equals alpha for the
    power family. Probes must be increasing with max >= 1e6."""
    pts = np.asarray(x_probe, dtype=float).ravel()
    if pts.size == 0 or (np.diff(pts) <= 0.0).any():
        raise DomainError("probes must be strictly increasing")
    if pts[-1] < 1e6:
        raise DomainError("largest probe must reach 1e6")
    tail = pts[pts.size // 2:]
    uvals = np.asarray(uf.u(tail), dtype=float)
    if (uvals <= 0.0).any():
        raise DomainError("U(x) <= 0 at a probe point")
    ratios = tail * np.asarray(uf.u_prime(tail), dtype=float) / uvals
    return float(ratios.max())
