"""Independent verification oracles.

Three families of checks, all external to the solver path they certify:

* closed forms for the lognormal (Black-Scholes) market under Power(1/2)
  utility with the single mean constraint E[Z S_T] >= A, valid in the
  regime e^{sigma^2 T} > A > 1: value, minimizing y, dual optimizer,
  worst-case density, and optimal wealth, all as explicit formulas;
* a brute-force minimax check on finite instances: sup over budgeted
  wealths of the worst generating density versus inf over the density
  hull of the classical value, computed by two independent procedures;
* the sandwich inequality (1+x) ||Z||^l >= u_Q(x) >= (1 and x) ||Z||^a
  linking the classical value to the Orlicz norms of the density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._errors import DomainError, ValidationError
from .market import (Constraint, ConstraintSet, FiniteMarket, LognormalSpec,
                     gauss_hermite_market)
from .orlicz_modular import Modular, amemiya_norm, luxemburg_norm
from .robust_solver import classical_u_Q, solve_robust
from .utility import UtilityFunction

__all__ = [
    "BSOracle",
    "SandwichReport",
    "bs_closed_form",
    "bs_instance",
    "minimax_check",
    "sandwich_check",
    "conditioned_density",
]


@dataclass(frozen=True)
class BSOracle:
    """Lognormal-market instance with the explicit solution.

    Requires the regime e^{sigma^2 T} > A > 1 (mean constraint active but
    attainable) and x > 0; fixed to Power(1/2) utility.
    """

    sigma: float
    T: float
    A: float
    x: float
    s0: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma <= 0.0 or self.T <= 0.0 or self.s0 <= 0.0:
            raise DomainError("sigma, T, s0 must be positive")
        if self.x <= 0.0:
            raise DomainError("x must be positive")
        e = math.exp(self.sigma ** 2 * self.T)
        if not (e > self.A > 1.0):
            raise DomainError(
                f"outside explicit-solution regime: need "
                f"e^(sigma^2 T) = {e:.6g} > A = {self.A:g} > 1")


def bs_closed_form(o: BSOracle) -> dict:
    """Explicit solution of the constrained lognormal instance.

    Returns {u, y_hat, K, g_y_at, Z_hat, X_hat}: the robust value
    u = 2 sqrt(x K) with K = 1 + (A-1)^2/(e^{sigma^2 T}-1), the
    minimizing y_hat = sqrt(K/x), the dual optimizer
    g_y_at(y) = (beta, g) at any level y, and the worst-case density /
    optimal wealth as functions of the terminal price s. The density is
    the unique convex combination of the reference measure and the
    price-tilted measure meeting the mean constraint with equality.
    """
    e = math.exp(o.sigma ** 2 * o.T)
    k_const = 1.0 + (o.A - 1.0) ** 2 / (e - 1.0)
    u = 2.0 * math.sqrt(o.x * k_const)
    y_hat = math.sqrt(k_const / o.x)

    def g_y_at(y: float):
        beta = 2.0 * (e - o.A) / (y * (e - 1.0))
        g = 2.0 * (o.A - 1.0) / (y * (e - 1.0))
        return beta, g

    def z_hat(s):
        s_rel = np.asarray(s, dtype=float) / o.s0
        return (e - o.A + s_rel * (o.A - 1.0)) / (e - 1.0)

    def x_hat(s):
        s_rel = np.asarray(s, dtype=float) / o.s0
        num = (e - o.A + s_rel * (o.A - 1.0)) ** 2
        return o.x * num / ((e - 1.0 + (o.A - 1.0) ** 2) * (e - 1.0))

    return {"u": u, "y_hat": y_hat, "K": k_const, "g_y_at": g_y_at,
            "Z_hat": z_hat, "X_hat": x_hat}


def bs_instance(o: BSOracle, nodes: int = 64):
    """Quadrature market and mean constraint matching the oracle."""
    market = gauss_hermite_market(
        LognormalSpec(sigma=o.sigma, T=o.T, s0=o.s0, nodes=nodes))
    cset = ConstraintSet([Constraint("S_T", "ge", o.A * o.s0)])
    return market, cset


# -- minimax ---------------------------------------------------------------

def _u_mat(uf: UtilityFunction, x: np.ndarray) -> np.ndarray:
    if uf.family == "power":
        return np.power(x, uf.alpha) / uf.alpha
    flat = np.array([uf.u(float(v)) for v in x.ravel()])
    return flat.reshape(x.shape)


def _uprime_mat(uf: UtilityFunction, x: np.ndarray) -> np.ndarray:
    if uf.family == "power":
        return np.power(x, uf.alpha - 1.0)
    flat = np.array([uf.u_prime(float(v)) for v in x.ravel()])
    return flat.reshape(x.shape)


def _project_budget(X: np.ndarray, p: np.ndarray, x: float) -> np.ndarray:
    """Project rows of X onto {X >= 0, p.X <= x} (clip, then weighted
    simplex shift only for rows over budget)."""
    clip = np.maximum(X, 0.0)
    mass = clip @ p
    over = mass > x
    if not over.any():
        return clip
    W = X[over]
    pnorm2 = float(p @ p)
    lo = (W @ p - x) / pnorm2
    hi = (W / p).max(axis=1)
    lo = np.minimum(lo, hi - 1.0)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        s = np.maximum(0.0, W - mid[:, None] * p) @ p
        gt = s > x
        lo = np.where(gt, mid, lo)
        hi = np.where(gt, hi, mid)
    proj = np.maximum(0.0, W - (0.5 * (lo + hi))[:, None] * p)
    clip[over] = proj
    return clip


def _sup_inf_ascent(p, zmat, uf, x, multistarts, iters, rng, target=None,
                    extra_starts=()):
    """Vectorized projected supergradient ascent of min_j E[Z_j U(X)].

    Starts: the uniform wealth, any supplied candidate rows (classical
    optima from the dual route, whose primal values are evaluated
    exactly here), and random budget-saturating draws.
    """
    k, n = zmat.shape
    W = zmat * p[None, :]
    rows = [np.full(n, float(x))]
    rows += [np.asarray(e, dtype=float) for e in extra_starts]
    n_rand = max(multistarts - len(rows), 1)
    D = rng.gamma(1.0, 1.0, (n_rand, n)) + 1e-3
    X = np.vstack([np.array(rows), x * D / (D @ p)[:, None]])
    X = _project_budget(X, p, x)
    floor = 1e-12 * x
    best_f = -math.inf
    best_x = X[0].copy()
    for it in range(iters):
        U = _u_mat(uf, np.maximum(X, floor))
        F = U @ W.T
        f = F.min(axis=1)
        jstar = F.argmin(axis=1)
        imax = int(f.argmax())
        if f[imax] > best_f:
            best_f = float(f[imax])
            best_x = X[imax].copy()
        G = W[jstar] * _uprime_mat(uf, np.maximum(X, floor))
        gnorm2 = (G * G).sum(axis=1)
        if target is not None:
            t = np.maximum(target - f, 1e-12) / np.maximum(gnorm2, 1e-300)
            t = np.minimum(t, 10.0 * x)
        else:
            t = 0.5 * x / ((it + 10.0) * np.sqrt(
                np.maximum(gnorm2, 1e-300)))
        X = _project_budget(X + t[:, None] * G, p, x)
    U = _u_mat(uf, np.maximum(np.vstack([X, best_x[None, :]]), floor))
    F = U @ W.T
    f = F.min(axis=1)
    imax = int(f.argmax())
    if f[imax] > best_f:
        best_f = float(f[imax])
        best_x = np.vstack([X, best_x[None, :]])[imax].copy()
    jstar = int((_u_mat(uf, np.maximum(best_x, floor))[None, :]
                 @ W.T).argmin())
    return best_f, best_x, jstar


def _hull_transfer_polish(p, zmat, uf, x, mu, value_of, rounds=4):
    """Coordinate-pair golden refinement of hull weights on the simplex."""
    k = mu.shape[0]
    inv_golden = (math.sqrt(5.0) - 1.0) / 2.0
    best = value_of(mu)
    for _ in range(rounds):
        improved = False
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                span = mu[i]
                if span <= 1e-15:
                    continue
                lo, hi = 0.0, span

                def fval(t):
                    cand = mu.copy()
                    cand[i] -= t
                    cand[j] += t
                    return value_of(cand)

                c = hi - inv_golden * (hi - lo)
                d = lo + inv_golden * (hi - lo)
                fc, fd = fval(c), fval(d)
                for _ in range(60):
                    if hi - lo <= 1e-12 * (1.0 + span):
                        break
                    if fc <= fd:
                        hi, d, fd = d, c, fc
                        c = hi - inv_golden * (hi - lo)
                        fc = fval(c)
                    else:
                        lo, c, fc = c, d, fd
                        d = lo + inv_golden * (hi - lo)
                        fd = fval(d)
                t = 0.5 * (lo + hi)
                cand_val = fval(t)
                if cand_val < best - 1e-15:
                    mu[i] -= t
                    mu[j] += t
                    best = cand_val
                    improved = True
        if not improved:
            break
    return mu, best


def minimax_check(market: FiniteMarket, Q_densities, uf: UtilityFunction,
                  x: float, tol: float = 1e-4, seed: int = 42,
                  multistarts: int = 200, grid_step: float = 1e-3) -> dict:
    """Two-sided minimax verification on a finite instance.

    inf_sup minimizes the classical value over the convex hull of the
    generating densities (the value is convex in the density, so the
    minimum may be interior): a mixture-weight lattice scan (closed-form
    core for the power family, golden coordinate descent otherwise)
    polished by pairwise golden transfers, with the final value
    recomputed through the budget-equation path of classical_u_Q.
    sup_inf maximizes min_j E[Z_j U(X)] over {X >= 0, E[X] <= x} by
    vectorized projected supergradient ascent (Polyak steps towards the
    lattice optimum when the n <= 3 dense X-grid cross-check is active,
    Polyak steps towards inf_sup otherwise, which is a valid upper bound
    by weak duality and tight at the saddle). Returns {sup_inf, inf_sup,
    gap, saddle}; the saddle pair (X*, j*) is reported when gap <= tol.
    Guards: at least one density; n <= 8 when k >= 2 (with a single
    density both sides reduce to the classical value, so any n is
    allowed).
    """
    x = float(x)
    if x <= 0.0:
        raise DomainError("minimax_check requires x > 0")
    zmat = np.asarray([np.asarray(z, dtype=float) for z in Q_densities])
    if zmat.ndim != 2 or zmat.shape[0] < 1:
        raise DomainError("need at least one generating density")
    if market.n > 8 and zmat.shape[0] >= 2:
        raise DomainError(
            "minimax check with several densities is guarded to n <= 8 "
            "states")
    if zmat.shape[1] != market.n:
        raise ValidationError(f"densities must have length {market.n}")
    p = market.probs
    for z in zmat:
        if (z < -1e-12).any():
            raise ValidationError("densities must be nonnegative")
        if abs(_kernels.kahan_dot(p, np.maximum(z, 0.0)) - 1.0) > 1e-9:
            raise ValidationError("densities must have expectation 1")
    zmat = np.maximum(zmat, 0.0)
    k = zmat.shape[0]
    rng = np.random.default_rng(seed)
    big_n = int(round(1.0 / grid_step))

    # inf_sup over the density hull
    if k == 1:
        mu = np.ones(1)
    elif uf.family == "power":
        q = 1.0 / (1.0 - uf.alpha)
        _, mu = _kernels.power_core_scan(zmat, p, q, big_n)

        def core_of(m):
            return float(p @ np.power(m @ zmat, q))

        mu, _ = _hull_transfer_polish(p, zmat, uf, x, mu.copy(), core_of)
    else:
        def uq_of(m):
            return classical_u_Q(market, uf, m @ zmat, x)[0]

        mu = np.full(k, 1.0 / k)
        mu, _ = _hull_transfer_polish(p, zmat, uf, x, mu, uq_of, rounds=8)
    inf_sup, x_mu = classical_u_Q(market, uf, mu @ zmat, x)
    candidate_rows = [x_mu]
    candidate_rows += [classical_u_Q(market, uf, zmat[j], x)[1]
                       for j in range(k)]

    # sup_inf over budgeted wealths, with dense-grid cross-check for n <= 3
    target = inf_sup
    grid_val = None
    if market.n <= 3:
        kk = np.arange(big_n + 1)
        zu_tbl = np.empty((k, market.n, big_n + 1))
        for i in range(market.n):
            wealth = x * kk / (big_n * p[i])
            uvals = _u_mat(uf, wealth)
            for j in range(k):
                zu_tbl[j, i] = p[i] * zmat[j, i] * uvals
        grid_val, _ = _kernels.minimax_x_grid(zu_tbl, big_n)
        grid_val = float(grid_val)
    sup_inf, x_star, j_star = _sup_inf_ascent(
        p, zmat, uf, x, multistarts, 300, rng, target=target,
        extra_starts=candidate_rows)
    if grid_val is not None and grid_val > sup_inf:
        sup_inf = grid_val
    gap = inf_sup - sup_inf
    saddle = (x_star, j_star) if gap <= tol else None
    return {"sup_inf": sup_inf, "inf_sup": inf_sup, "gap": gap,
            "saddle": saddle}


# -- sandwich --------------------------------------------------------------

@dataclass(frozen=True)
class SandwichReport:
    """Margins of (1+x) ||Z||^l >= u_Q(x) >= min(1,x) ||Z||^a per tested
    density; violations counted at slack 1e-8."""

    count: int
    violations: int
    worst_upper_margin: float
    worst_lower_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def sandwich_check(market: FiniteMarket, constraints_or_density,
                   uf: UtilityFunction, x: float) -> SandwichReport:
    """Check the norm sandwich of the classical value for one or many
    densities.

    Accepts a single density vector, a list of density vectors, or a
    ConstraintSet (in which case the worst-case density of the robust
    problem at wealth x is tested). For each density Z the classical
    value u_Q(x) must lie between min(1,x) amemiya(Z) and
    (1+x) luxemburg(Z) in the EtaStar modular, with slack 1e-8.
    """
    x = float(x)
    if x <= 0.0:
        raise DomainError("sandwich_check requires x > 0")
    if isinstance(constraints_or_density, ConstraintSet):
        sol = solve_robust(market, constraints_or_density, uf, x)
        densities = [sol.Z_hat]
    else:
        arr = np.asarray(constraints_or_density, dtype=float)
        densities = [arr] if arr.ndim == 1 else list(arr)
    mod = Modular(market, uf, "EtaStar")
    worst_up = worst_lo = math.inf
    violations = 0
    for z in densities:
        z = np.asarray(z, dtype=float)
        u_q, _ = classical_u_Q(market, uf, z, x)
        lux = luxemburg_norm(mod, z)
        am = amemiya_norm(mod, z)
        up = (1.0 + x) * lux - u_q
        lo = u_q - min(1.0, x) * am
        worst_up = min(worst_up, up)
        worst_lo = min(worst_lo, lo)
        if up < -1e-8 * (1.0 + abs(u_q)):
            violations += 1
        if lo < -1e-8 * (1.0 + abs(u_q)):
            violations += 1
    return SandwichReport(count=len(densities), violations=violations,
                          worst_upper_margin=worst_up,
                          worst_lower_margin=worst_lo)


def conditioned_density(market: FiniteMarket, h, c: float) -> np.ndarray:
    """Density of P(. | h >= c): the normalized indicator 1{h >= c}.

    Used by the non-attainment regression: conditioning on ever-rarer
    tail events yields densities that converge to 0 in probability while
    their classical values stay bounded away from the unconstrained one.
    """
    hv = np.asarray(h, dtype=float)
    if hv.shape != (market.n,):
        raise ValidationError(f"observable must have length {market.n}")
    mask = hv >= c
    mass = float(market.probs[mask].sum())
    if mass <= 0.0:
        raise DomainError(f"event {{h >= {c:g}}} has probability 0")
    z = np.zeros(market.n)
    z[mask] = 1.0 / mass
    return z
