"""Concave dual-of-dual solver for the worst-case density at fixed y > 0.

For a finite market with moment constraints E[Z h_l] >= a_l (GE) or = a_l
(EQ), the dual value v(y) solves the finite-dimensional concave program

    maximize  sum_l g_l a_l + beta - y E[U^-1((beta + sum_l g_l h_l)_+)]

over multipliers g (GE components >= 0, EQ free) and a free scalar beta.
The maximizer reconstructs the worst-case density pointwise through
Z_i = y [U^-1]'((w_i)_+) with w = beta + g.h, and the optimal terminal
wealth through U^-1(w_+). Stationarity in beta is exactly E[Z] = 1 and
stationarity in g_l is constraint feasibility / complementarity, which is
what the stored KKT block re-checks.

Algorithms: projected gradient ascent with Armijo backtracking plus an
active-set Newton refinement (multistarted); an independent brute-force
primal oracle minimizing E[gamma*_y(Z)] over the density polytope
(projected-gradient multistart, nullspace Newton polish, and for n <= 4 a
dense lattice sweep); and a three-bullet optimality verifier.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from . import _kernels
from ._errors import (DomainError, InfeasibleModel, NonConvergence,
                      UnboundedDual, ValidationError)
from .market import ConstraintSet, FiniteMarket, feasibility_check
from .utility import (UtilityFunction, _solve_increasing, gamma_star,
                      u_inverse, u_inverse_prime)

__all__ = [
    "DualPoint",
    "DualSolution",
    "OptimalityReport",
    "dual_objective",
    "solve_dual",
    "primal_brute_force",
    "verify_optimality",
]

_ARMIJO_C = 1e-4
_ACTIVE_EPS = 1e-12


@dataclass(frozen=True)
class DualPoint:
    """Multiplier vector g (one entry per constraint) and intercept beta."""

    g: np.ndarray
    beta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class DualSolution:
    """Converged dual optimizer, its value v(y), the recovered density Z,
    and the KKT residual block."""

    point: DualPoint
    value: float
    Z: np.ndarray
    kkt: dict = field(repr=False)
    iterations: int = 0


@dataclass(frozen=True)
class OptimalityReport:
    """Max residual per optimality bullet: (i) primal feasibility of Z,
    (ii) variational inequality via complementary slackness, (iii)
    pointwise recovery Z_i = y [U^-1]'((w_i)_+)."""

    feasibility_residual: float
    variational_residual: float
    recovery_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.feasibility_residual, self.variational_residual,
                   self.recovery_residual)


# -- objective ------------------------------------------------------------

def _objective_closure(p, hmat, a, uf, y):
    """(g, beta) -> (value, gradient), gradient layout (dg_1..dg_m, dbeta).

    Power family dispatches to the compiled kernel; other families use a
    per-state evaluation. Domain exits of bounded utilities (w_i >= lim U)
    yield the -inf sentinel with a NaN gradient.
    """
    if uf.family == "power":
        alpha = uf.alpha

        def obj(g, beta):
            return _kernels.power_dual_objective(p, hmat, a, g, beta, y,
                                                 alpha)
        return obj

    m = hmat.shape[0]

    def obj(g, beta):
        w = beta + g @ hmat
        pos = w > 0.0
        acc_val = acc_b = 0.0
        acc_g = np.zeros(m)
        for i in np.nonzero(pos)[0]:
            ui = u_inverse(uf, w[i])
            if math.isinf(ui):
                return -math.inf, np.full(m + 1, math.nan)
            uip = u_inverse_prime(uf, w[i])
            acc_val += p[i] * ui
            acc_b += p[i] * uip
            acc_g += (p[i] * uip) * hmat[:, i]
        value = float(g @ a) + beta - y * acc_val
        grad = np.empty(m + 1)
        grad[:m] = a - y * acc_g
        grad[m] = 1.0 - y * acc_b
        return value, grad

    return obj


def dual_objective(market: FiniteMarket, constraints: ConstraintSet,
                   uf: UtilityFunction, y: float, point: DualPoint):
    """Evaluate the dual-of-dual objective and its gradient at a point.

    The gradient is the (m+1)-vector (d/dg_1, ..., d/dg_m, d/dbeta); at
    g = 0, beta = 0 it equals (a_1, ..., a_m, 1) since U^-1 and its
    derivative vanish at 0.
    """
    y = float(y)
    if y <= 0.0:
        raise DomainError("dual_objective requires y > 0")
    hmat, a, is_eq = constraints.matrix(market)
    g = np.asarray(point.g, dtype=float)
    if g.shape != (hmat.shape[0],):
        raise ValidationError(
            f"multiplier vector must have length {hmat.shape[0]}")
    if (g[~is_eq] < 0.0).any():
        raise ValidationError("GE multipliers must be nonnegative")
    obj = _objective_closure(market.probs, hmat, a, uf, y)
    return obj(g, float(point.beta))


# -- constraint preprocessing ----------------------------------------------

def _merge_duplicates(hmat, a, is_eq):
    """Merge constraints whose rows are positive scalar multiples.

    Same-kind duplicates collapse onto one merged row carrying the
    tightest rescaled bound; rank deficiency of the merged matrix is
    reported as a warning. Returns (hmat', a', is_eq', owner, c_of,
    tight, tight_c): owner[j] is the merged index of original constraint
    j (-1 for a vacuous zero row) and h_j = c_of[j] * h'_{owner[j]};
    tight[idx] is the original constraint holding the binding bound of
    merged row idx and tight_c[idx] its scale, so the merged multiplier
    expands as g_tight = g' / tight_c (all other group members get 0,
    which preserves w, the objective value, and complementarity).
    """
    m = hmat.shape[0]
    owner = np.full(m, -1, dtype=int)
    c_of = np.ones(m)
    reps: list[int] = []
    bound: list[float] = []
    tight: list[int] = []
    tight_c: list[float] = []
    kinds: list[bool] = []
    for j in range(m):
        norm_j = float(np.linalg.norm(hmat[j]))
        if norm_j == 0.0:
            # vacuous row; feasibility of 0 >= a_j is the LP's business
            continue
        merged = False
        for idx, rep in enumerate(reps):
            if bool(is_eq[j]) != kinds[idx]:
                continue
            c = norm_j / float(np.linalg.norm(hmat[rep]))
            if np.max(np.abs(hmat[j] - c * hmat[rep])) <= 1e-12 * norm_j:
                if kinds[idx]:
                    # equalities merge only when the bounds agree
                    if abs(a[j] / c - bound[idx]) \
                            > 1e-9 * (1.0 + abs(bound[idx])):
                        continue
                elif a[j] / c > bound[idx]:
                    bound[idx] = a[j] / c
                    tight[idx] = j
                    tight_c[idx] = c
                owner[j] = idx
                c_of[j] = c
                merged = True
                break
        if not merged:
            owner[j] = len(reps)
            reps.append(j)
            bound.append(float(a[j]))
            tight.append(j)
            tight_c.append(1.0)
            kinds.append(bool(is_eq[j]))
    hm = hmat[reps]
    if len(reps) and np.linalg.matrix_rank(hm) < len(reps):
        warnings.warn("constraint matrix is rank-deficient after merging "
                      "exact duplicates", RuntimeWarning, stacklevel=3)
    return (hm, np.array(bound), np.array(kinds, dtype=bool), owner, c_of,
            np.array(tight, dtype=int), np.array(tight_c))


def _beta_init(uf: UtilityFunction, y: float) -> float:
    """beta solving y E[[U^-1]'(beta)] = 1, the unconstrained optimum."""
    if uf.family == "power":
        alpha = uf.alpha
        return y ** (-alpha / (1.0 - alpha)) / alpha
    return _solve_increasing(lambda b: u_inverse_prime(uf, b), 1.0 / y,
                             "dual intercept")


def _projected_grad(g, grad, ge_mask):
    pg = grad[:-1].copy()
    clamp = ge_mask & (g <= _ACTIVE_EPS) & (pg < 0.0)
    pg[clamp] = 0.0
    return pg, grad[-1]


def _density_from_point(p, hmat, uf, y, g, beta):
    w = beta + g @ hmat
    if uf.family == "power":
        alpha = uf.alpha
        z = np.zeros_like(w)
        pos = w > 0.0
        z[pos] = y * (alpha * w[pos]) ** (1.0 / alpha - 1.0)
        return z
    return np.array([y * u_inverse_prime(uf, wi) if wi > 0.0 else 0.0
                     for wi in w])


def _hessian(p, hmat, uf, y, g, beta, obj):
    """Hessian of the dual objective; analytic for power, finite-difference
    of the gradient otherwise."""
    m = hmat.shape[0]
    if uf.family == "power":
        alpha = uf.alpha
        w = beta + g @ hmat
        pos = w > 0.0
        if not pos.any():
            return np.zeros((m + 1, m + 1))
        uinvpp = (alpha * (1.0 / alpha - 1.0)
                  * (alpha * w[pos]) ** (1.0 / alpha - 2.0))
        htil = np.vstack([hmat[:, pos], np.ones(int(pos.sum()))])
        c = y * p[pos] * uinvpp
        return -(htil * c) @ htil.T
    hess = np.zeros((m + 1, m + 1))
    for j in range(m + 1):
        h = 1e-6 * (1.0 + abs(beta) + float(np.abs(g).sum()))
        gp, bp = g.copy(), beta
        gm, bm = g.copy(), beta
        if j < m:
            gp[j] += h
            gm[j] -= h
        else:
            bp += h
            bm -= h
        _, grad_p = obj(gp, bp)
        _, grad_m = obj(gm, bm)
        hess[:, j] = (grad_p - grad_m) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _ascend(obj, g0, beta0, ge_mask, tol, max_iter, value_cap):
    """Projected gradient ascent with Armijo backtracking."""
    g, beta = g0.copy(), float(beta0)
    val, grad = obj(g, beta)
    shrink = 0
    while not math.isfinite(val) and shrink < 200:
        beta *= 0.5
        g *= 0.5
        val, grad = obj(g, beta)
        shrink += 1
    if not math.isfinite(val):
        return g, beta, val, grad, False, 0
    t = 1.0
    converged = False
    it = 0
    stall = 0
    for it in range(1, max_iter + 1):
        pg_g, pg_b = _projected_grad(g, grad, ge_mask)
        pgnorm = math.sqrt(float(pg_g @ pg_g) + pg_b * pg_b)
        if pgnorm <= tol * (1.0 + abs(val)):
            converged = True
            break
        accepted = False
        tt = t
        for _ in range(60):
            g_new = g + tt * grad[:-1]
            g_new[ge_mask] = np.maximum(g_new[ge_mask], 0.0)
            b_new = beta + tt * grad[-1]
            val_new, grad_new = obj(g_new, b_new)
            if math.isfinite(val_new):
                ascent = float(grad[:-1] @ (g_new - g)) \
                    + grad[-1] * (b_new - beta)
                if val_new >= val + _ARMIJO_C * ascent:
                    accepted = True
                    break
            tt *= 0.5
        if not accepted:
            break
        # once improvements fall below float resolution, hand over to the
        # Newton refinement instead of burning the iteration budget
        stall = stall + 1 if val_new <= val else 0
        g, beta, val, grad = g_new, b_new, val_new, grad_new
        if val > value_cap:
            raise UnboundedDual(
                f"dual value exceeded {value_cap:g} along an ascent ray; "
                "possible qualification failure")
        if stall >= 25:
            break
        t = min(tt * 2.0, 1e8)
    return g, beta, val, grad, converged, it


def _refine(obj, p, hmat, uf, y, g, beta, ge_mask, tol, value_cap,
            max_iter=40):
    """Active-set Newton refinement of an ascent iterate."""
    val, grad = obj(g, beta)
    it = 0
    for it in range(1, max_iter + 1):
        pg_g, pg_b = _projected_grad(g, grad, ge_mask)
        pgnorm = math.sqrt(float(pg_g @ pg_g) + pg_b * pg_b)
        if pgnorm <= tol * (1.0 + abs(val)):
            break
        active = ge_mask & (g <= _ACTIVE_EPS) & (grad[:-1] < 0.0)
        free = np.append(~active, True)
        hess = _hessian(p, hmat, uf, y, g, beta, obj)
        hff = hess[np.ix_(free, free)]
        gradf = grad[free]
        try:
            step_f = np.linalg.solve(
                hff - 1e-14 * np.eye(hff.shape[0]), -gradf)
        except np.linalg.LinAlgError:
            step_f = gradf
        if float(step_f @ gradf) <= 0.0:
            step_f = gradf  # not an ascent direction; fall back
        step = np.zeros(grad.shape[0])
        step[free] = step_f
        accepted = False
        tt = 1.0
        for _ in range(60):
            g_new = g + tt * step[:-1]
            g_new[ge_mask] = np.maximum(g_new[ge_mask], 0.0)
            b_new = beta + tt * step[-1]
            val_new, grad_new = obj(g_new, b_new)
            if math.isfinite(val_new) \
                    and val_new >= val - 1e-12 * (1.0 + abs(val)):
                # near the optimum value gains round to zero; accept on
                # projected-gradient decrease instead
                pg2_g, pg2_b = _projected_grad(g_new, grad_new, ge_mask)
                pg2 = math.sqrt(float(pg2_g @ pg2_g) + pg2_b * pg2_b)
                if val_new > val or pg2 < 0.9 * pgnorm:
                    accepted = True
                    break
            tt *= 0.5
        if not accepted:
            break
        g, beta, val, grad = g_new, b_new, val_new, grad_new
        if val > value_cap:
            raise UnboundedDual(
                f"dual value exceeded {value_cap:g} along an ascent ray; "
                "possible qualification failure")
    return g, beta, val, grad, it


def solve_dual(market: FiniteMarket, constraints: ConstraintSet,
               uf: UtilityFunction, y: float, tol: float = 1e-9,
               max_iter: int = 2000, multistarts: int = 4, seed: int = 42,
               init: DualPoint | None = None,
               feas_report=None) -> DualSolution:
    """Maximize the dual-of-dual objective at level y and recover Z.

    Multistarted projected gradient ascent (Armijo backtracking, GE
    multipliers clamped at 0) with an active-set Newton refinement;
    terminates when the projected-gradient norm falls below
    tol (1 + |value|). Start 0 is (g = 0, beta) with beta solving
    y E[[U^-1]'(beta)] = 1 (the exact unconstrained optimum), or ``init``
    when given (warm starts); the rest perturb it with seeded noise.

    Exact duplicate constraint rows are merged onto the tightest bound
    before solving and their multipliers restored as 0. Strict
    feasibility of the density polytope is re-verified: outright
    infeasibility raises InfeasibleModel, a nonstrict polytope only warns
    (the qualification surrogate). A value exceeding 1/tol raises
    UnboundedDual. Failure of every start to converge, or a KKT residual
    beyond 10 tol, raises NonConvergence carrying the residual report.
    """
    y = float(y)
    if y <= 0.0:
        raise DomainError("solve_dual requires y > 0")
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    p = market.probs
    hmat_raw, a_raw, is_eq_raw = constraints.matrix(market)
    # feas_report lets a caller that sweeps y reuse one LP verification;
    # the polytope does not depend on y
    feas = feas_report if feas_report is not None \
        else feasibility_check(market, constraints, strict=True)
    if not feas.feasible:
        raise InfeasibleModel(
            "constraint polytope is empty; no candidate density exists")
    if not feas.strictly_feasible:
        warnings.warn(
            "constraint polytope has no strictly positive interior "
            "witness; dual attainment is not guaranteed "
            "(qualification surrogate failed)", RuntimeWarning,
            stacklevel=2)

    hmat, a, is_eq, owner, c_of, tight, tight_c = _merge_duplicates(
        hmat_raw, a_raw.copy(), is_eq_raw)
    m = hmat.shape[0]
    ge_mask = ~is_eq
    obj = _objective_closure(p, hmat, a, uf, y)
    value_cap = 1.0 / tol

    beta0 = _beta_init(uf, y)
    rng = np.random.default_rng(seed)
    best = None
    for s in range(max(1, multistarts)):
        if s == 0:
            if init is not None:
                g_s = np.zeros(m)
                init_g = np.asarray(init.g, dtype=float)
                if init_g.shape == (len(owner),):
                    for j, o in enumerate(owner):
                        if o >= 0:
                            g_s[o] += init_g[j] * c_of[j]
                elif init_g.shape == (m,):
                    g_s = init_g.copy()
                g_s[ge_mask] = np.maximum(g_s[ge_mask], 0.0)
                b_s = float(init.beta)
            else:
                g_s, b_s = np.zeros(m), beta0
        else:
            g_s = 0.2 * beta0 * np.abs(rng.standard_normal(m))
            g_s[is_eq] *= rng.choice([-1.0, 1.0], size=int(is_eq.sum()))
            b_s = beta0 * math.exp(rng.uniform(-0.5, 0.5))
        g_c, b_c, val, grad, conv, it1 = _ascend(
            obj, g_s, b_s, ge_mask, tol, max_iter, value_cap)
        it2 = 0
        if math.isfinite(val):
            g_c, b_c, val, grad, it2 = _refine(
                obj, p, hmat, uf, y, g_c, b_c, ge_mask, tol, value_cap)
            pg_g, pg_b = _projected_grad(g_c, grad, ge_mask)
            pgnorm = math.sqrt(float(pg_g @ pg_g) + pg_b * pg_b)
            conv = pgnorm <= tol * (1.0 + abs(val))
        else:
            pgnorm = math.inf
        cand = (val, conv, g_c, b_c, grad, pgnorm, it1 + it2)
        if best is None or (cand[1], cand[0]) > (best[1], best[0]):
            best = cand
    val, conv, g_c, b_c, grad, pgnorm, iters = best
    if not conv:
        report = {"value": val, "grad_norm": pgnorm,
                  "iterations": iters, "tol": tol}
        exc = NonConvergence(
            f"dual ascent stalled at projected-gradient norm {pgnorm:.3e} "
            f"(tol {tol:g})")
        exc.report = report
        raise exc
    if val > value_cap:
        # ascent steps check the cap, but a start point that is already
        # stationary (e.g. tiny y blowing v(y) up) reaches here directly
        raise UnboundedDual(
            f"dual value {val:.3e} exceeds the cap {value_cap:g}; "
            "possible qualification failure")

    def _assemble(g_c, b_c, pgnorm):
        z = _density_from_point(p, hmat, uf, y, g_c, b_c)
        # expand multipliers back onto the original constraint holding
        # the binding bound of each merged group (others get 0)
        g_full = np.zeros(len(owner))
        for idx in range(m):
            g_full[tight[idx]] = g_c[idx] / tight_c[idx]
        ez = _kernels.kahan_dot(p, z)
        moments = np.array([_kernels.kahan_dot(p, z * hmat_raw[l])
                            for l in range(hmat_raw.shape[0])])
        cres = np.where(is_eq_raw, np.abs(moments - a_raw),
                        np.maximum(0.0, a_raw - moments))
        comp = np.where(is_eq_raw, 0.0,
                        np.abs(g_full * (moments - a_raw)))
        kkt = {
            "grad_norm": pgnorm,
            "normalization_residual": abs(ez - 1.0),
            "constraint_residuals": cres,
            "complementarity_residuals": comp,
        }
        worst = max(kkt["normalization_residual"],
                    float(cres.max(initial=0.0)),
                    float(comp.max(initial=0.0)))
        return z, g_full, kkt, worst

    z, g_full, kkt, worst = _assemble(g_c, b_c, pgnorm)
    if worst > 10.0 * tol:
        # complementarity carries a factor g, so a gradient converged to
        # tol can still miss the 10*tol residual gate when multipliers
        # are large; one tighter Newton pass closes the scale mismatch
        gscale = max(1.0, float(np.abs(g_full).max(initial=0.0)))
        g_c, b_c, val, grad, extra = _refine(
            obj, p, hmat, uf, y, g_c, b_c, ge_mask,
            tol / (10.0 * gscale), value_cap)
        iters += extra
        pg_g, pg_b = _projected_grad(g_c, grad, ge_mask)
        pgnorm = math.sqrt(float(pg_g @ pg_g) + pg_b * pg_b)
        z, g_full, kkt, worst = _assemble(g_c, b_c, pgnorm)
    if worst > 10.0 * tol:
        exc = NonConvergence(
            f"KKT residual {worst:.3e} exceeds 10*tol = {10 * tol:g}")
        exc.report = kkt
        raise exc
    return DualSolution(point=DualPoint(g=g_full, beta=b_c), value=val,
                        Z=z, kkt=kkt, iterations=iters)


# -- brute-force primal oracle ---------------------------------------------

def _gamma_star_states(uf, y, z):
    if uf.family == "power":
        alpha = uf.alpha
        r = 1.0 / (1.0 - alpha)
        cy = (1.0 - alpha) / alpha * y ** (-alpha / (1.0 - alpha))
        return cy * np.power(z, r)
    return np.array([gamma_star(uf, y, float(zi)) for zi in z])


def _gamma_star_grad(uf, y, z):
    if uf.family == "power":
        alpha = uf.alpha
        r = 1.0 / (1.0 - alpha)
        cy = (1.0 - alpha) / alpha * y ** (-alpha / (1.0 - alpha))
        return cy * r * np.power(z, r - 1.0)
    g = np.empty_like(z)
    for i, zi in enumerate(z):
        h = 1e-7 * (1.0 + zi)
        g[i] = (gamma_star(uf, y, zi + h)
                - gamma_star(uf, y, max(zi - h, 0.0))) / (
                    h + min(h, zi))
    return g


def _gamma_star_hess_diag(uf, y, z):
    if uf.family == "power":
        alpha = uf.alpha
        r = 1.0 / (1.0 - alpha)
        cy = (1.0 - alpha) / alpha * y ** (-alpha / (1.0 - alpha))
        with np.errstate(divide="ignore"):
            return cy * r * (r - 1.0) * np.power(z, r - 2.0)
    d = np.empty_like(z)
    for i, zi in enumerate(z):
        h = 1e-5 * (1.0 + zi)
        lo = max(zi - h, 0.0)
        d[i] = (gamma_star(uf, y, zi + h) - gamma_star(uf, y, zi)
                - gamma_star(uf, y, zi) + gamma_star(uf, y, lo)) / h ** 2
    return d


def _dykstra_np(W, rows, a, is_eq, p, iters=200):
    """Project points (rows of W) onto the density polytope; the weighted
    simplex comes last so results satisfy Z >= 0, p.Z = 1 exactly."""
    m = rows.shape[0]
    rnorm2 = (rows * rows).sum(axis=1)
    pnorm2 = float(p @ p)
    inc_l = np.zeros((m,) + W.shape)
    inc_a = np.zeros_like(W)
    X = W.copy()
    for _ in range(iters):
        for l in range(m):
            yv = X + inc_l[l]
            viol = a[l] - yv @ rows[l]
            act = is_eq[l] | (viol > 0.0)
            pl = np.where(act[:, None],
                          yv + np.outer(viol / rnorm2[l], rows[l]), yv)
            inc_l[l] = yv - pl
            X = pl
        yv = X + inc_a
        lo = (yv @ p - 1.0) / pnorm2
        hi = (yv / p).max(axis=1)
        lo = np.minimum(lo, hi - 1.0)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            s = np.maximum(0.0, yv - mid[:, None] * p) @ p
            gt = s > 1.0
            lo = np.where(gt, mid, lo)
            hi = np.where(gt, hi, mid)
        pa = np.maximum(0.0, yv - (0.5 * (lo + hi))[:, None] * p)
        snap = pa @ p
        pa = pa / np.where(snap > 0.0, snap, 1.0)[:, None]
        inc_a = yv - pa
        X = pa
    return X


def _pg_generic(p, hmat, a, is_eq, uf, y, starts, pg_iters, dyk_iters):
    """Per-start projected gradient for non-power utilities."""
    rows = p[None, :] * hmat
    vals = np.empty(starts.shape[0])
    zs = np.empty_like(starts)
    for s in range(starts.shape[0]):
        z = starts[s].copy()
        fz = float(p @ _gamma_star_states(uf, y, z))
        g0 = p * _gamma_star_grad(uf, y, z)
        t = 0.5 / (1.0 + float(np.sqrt(g0 @ g0)))
        for _ in range(pg_iters):
            w = z - t * p * _gamma_star_grad(uf, y, z)
            cand = _dykstra_np(w[None, :], rows, a, is_eq, p,
                               iters=dyk_iters)[0]
            fc = float(p @ _gamma_star_states(uf, y, cand))
            if fc <= fz:
                z, fz = cand, fc
                t *= 1.3
            else:
                t *= 0.5
            if t < 1e-16:
                break
        vals[s] = fz
        zs[s] = z
    return vals, zs


def _nullspace_polish(p, hmat, a, is_eq, uf, y, z, iters=60):
    """Newton steps inside the nullspace of the active constraint rows."""
    rows = p[None, :] * hmat
    m = hmat.shape[0]

    def fval(zz):
        return float(p @ _gamma_star_states(uf, y, zz))

    best_z, best_f = z.copy(), fval(z)
    z = best_z.copy()
    for _ in range(iters):
        active_z = z <= 1e-10
        slack = rows @ z - a
        active_c = is_eq | (slack <= 1e-10 * (1.0 + np.abs(a)))
        eq_rows = [p] + [rows[l] for l in range(m) if active_c[l]]
        for i in np.nonzero(active_z)[0]:
            e = np.zeros(z.shape[0])
            e[i] = 1.0
            eq_rows.append(e)
        nsp = null_space(np.vstack(eq_rows))
        if nsp.shape[1] == 0:
            break
        grad = p * _gamma_star_grad(uf, y, z)
        hdiag = p * _gamma_star_hess_diag(uf, y, z)
        grad[active_z] = 0.0
        hdiag[active_z] = 0.0
        gr = nsp.T @ grad
        hr = nsp.T @ (hdiag[:, None] * nsp)
        try:
            delta = np.linalg.solve(
                hr + 1e-14 * np.eye(hr.shape[0]), -gr)
        except np.linalg.LinAlgError:
            break
        direction = nsp @ delta
        tt = 1.0
        moved = False
        for _ in range(50):
            cand = z + tt * direction
            if (cand >= -1e-15).all():
                cand = np.maximum(cand, 0.0)
                cand = cand / float(p @ cand)
                # feasibility is rechecked after the renormalization: a
                # mass drift would otherwise scale the constraint rows
                # and let the descent trade violation for objective
                resid = rows @ cand - a
                if np.all(np.where(is_eq, np.abs(resid) <= 1e-11,
                                   resid >= -1e-11)):
                    fc = fval(cand)
                    if fc < best_f:
                        z, best_z, best_f = cand, cand, fc
                        moved = True
                        break
            tt *= 0.5
        if not moved or float(np.abs(tt * direction).max()) \
                <= 1e-13 * (1.0 + float(np.abs(z).max())):
            break
    return best_z, best_f


def _restore_feasible(p: np.ndarray, hmat: np.ndarray, a: np.ndarray,
                      is_eq: np.ndarray, z: np.ndarray,
                      witness: np.ndarray) -> np.ndarray:
    """Map a near-feasible candidate exactly onto the polytope.

    Clip and renormalize, correct the equality rows (normalization and
    EQ constraints) by a minimum-norm least-squares step, repairing any
    negativity that step introduces by blending toward the strictly
    positive witness (equality rows are affine and the witness satisfies
    them, so the blend keeps the correction; clipping instead would
    silently reintroduce the residual). A final blend clears GE
    violations the same way. Candidate values must only ever be
    evaluated at points that went through here, otherwise residual
    projection error can be traded for objective decrease.
    """
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    mass = float(p @ z)
    z = z / mass if mass > 0.0 else witness.copy()
    rows = p[None, :] * hmat
    eq_idx = np.flatnonzero(is_eq)
    if eq_idx.size:
        bmat = np.vstack([p[None, :], rows[eq_idx]])
        tgt = np.concatenate([[1.0], a[eq_idx]])
        for _ in range(8):
            resid = bmat @ z - tgt
            if np.max(np.abs(resid)) <= 1e-13 and z.min() >= 0.0:
                break
            z = z - np.linalg.lstsq(bmat, resid, rcond=None)[0]
            neg = z < 0.0
            if neg.any():
                lam = float(np.max(-z[neg] / (witness[neg] - z[neg])))
                z = (1.0 - min(lam, 1.0)) * z + min(lam, 1.0) * witness
    ge_idx = np.flatnonzero(~is_eq)
    if ge_idx.size:
        viol = a[ge_idx] - rows[ge_idx] @ z
        if viol.size and viol.max() > 0.0:
            slack_w = rows[ge_idx] @ witness - a[ge_idx]
            lam = 0.0
            for v, s in zip(viol, slack_w):
                if v > 0.0:
                    lam = max(lam, 1.0 if v + s <= 0.0 else v / (v + s))
            z = (1.0 - min(lam, 1.0)) * z + min(lam, 1.0) * witness
    return z


def primal_brute_force(market: FiniteMarket, constraints: ConstraintSet,
                       uf: UtilityFunction, y: float, seed: int = 0,
                       starts: int = 100, grid_step: float = 1e-3) -> float:
    """Independent oracle: minimize E[gamma*_y(Z)] over the density
    polytope {Z >= 0, E[Z] = 1, constraints}.

    Projected gradient from ``starts`` random interior points (nullspace
    dithering around the strict LP witness, Dykstra projection with
    violation-penalized acceptance), exact feasibility restoration and a
    nullspace Newton polish of the leading candidates, plus for n <= 4
    without equality constraints a dense lattice sweep at ``grid_step``
    over the measure simplex (its winner polished too). Returns the best
    value found. Guarded to n <= 12; infeasible constraint sets raise
    InfeasibleModel.
    """
    y = float(y)
    if y <= 0.0:
        raise DomainError("primal_brute_force requires y > 0")
    n = market.n
    if n > 12:
        raise DomainError(f"brute-force oracle is guarded to n <= 12 "
                          f"states, got {n}")
    p = market.probs
    hmat, a, is_eq = constraints.matrix(market)
    feas = feasibility_check(market, constraints, strict=True)
    if not feas.feasible:
        raise InfeasibleModel(
            "constraint polytope is empty; no candidate density exists")
    witness = feas.witness
    if witness is None:
        witness = np.ones(n)

    # interior starts: dither the witness inside the equality nullspace
    eq_rows = [p] + [p * hmat[l] for l in range(hmat.shape[0]) if is_eq[l]]
    nsp = null_space(np.vstack(eq_rows))
    rng = np.random.default_rng(seed)
    raw = np.empty((starts, n))
    raw[0] = witness
    for s in range(1, starts):
        sigma = math.exp(rng.uniform(-3.0, 0.5))
        cand = witness + nsp @ (sigma * rng.standard_normal(nsp.shape[1])) \
            if nsp.shape[1] else witness.copy()
        cand = np.maximum(cand, 0.0)
        mass = float(p @ cand)
        raw[s] = cand / mass if mass > 1e-9 else witness
    rows = p[None, :] * hmat
    starts_proj = _dykstra_np(raw, rows, a, is_eq, p, iters=60)

    if uf.family == "power":
        vals, zs = _kernels.primal_pg_power(
            p, hmat, a, is_eq, y, uf.alpha, starts_proj, 150, 12)
    else:
        vals, zs = _pg_generic(p, hmat, a, is_eq, uf, y, starts_proj,
                               150, 12)
    best = math.inf
    for s in np.argsort(vals)[:5]:
        z0 = _restore_feasible(p, hmat, a, is_eq, zs[s], witness)
        _, v1 = _nullspace_polish(p, hmat, a, is_eq, uf, y, z0)
        best = min(best, v1)

    if n <= 4 and not is_eq.any():
        big_n = int(round(1.0 / grid_step))
        q = np.arange(big_n + 1) / big_n
        obj_tbl = np.empty((n, big_n + 1))
        for i in range(n):
            obj_tbl[i] = p[i] * _gamma_star_states(uf, y, q / p[i])
        ctbl = hmat[:, :, None] * q[None, None, :]
        athresh = a - 1e-12 * (1.0 + np.abs(a))
        gval, bk = _kernels.primal_grid_min(obj_tbl, ctbl, athresh, big_n)
        if np.all(bk >= 0):
            zg = _restore_feasible(p, hmat, a, is_eq,
                                   bk.astype(float) / (big_n * p), witness)
            _, vg = _nullspace_polish(p, hmat, a, is_eq, uf, y, zg)
            best = min(best, vg, float(gval))
    return best


def verify_optimality(market: FiniteMarket, constraints: ConstraintSet,
                      uf: UtilityFunction, y: float,
                      sol: DualSolution) -> OptimalityReport:
    """Re-check the three-bullet optimality system of a dual solution.

    (i) primal feasibility of Z (nonnegativity, normalization, every
    constraint); (ii) the variational inequality, certified through
    complementary slackness and multiplier signs for the GE/EQ structure;
    (iii) pointwise recovery Z_i = y [U^-1]'((w_i)_+). Residuals are
    maxima per bullet; nothing is thrown.
    """
    y = float(y)
    if y <= 0.0:
        raise DomainError("verify_optimality requires y > 0")
    p = market.probs
    hmat, a, is_eq = constraints.matrix(market)
    z = np.asarray(sol.Z, dtype=float)
    g = np.asarray(sol.point.g, dtype=float)
    beta = float(sol.point.beta)

    moments = np.array([_kernels.kahan_dot(p, z * hmat[l])
                        for l in range(hmat.shape[0])])
    feas = max(abs(_kernels.kahan_dot(p, z) - 1.0),
               float(np.maximum(0.0, -z).max(initial=0.0)),
               float(np.where(is_eq, np.abs(moments - a),
                              np.maximum(0.0, a - moments)).max(initial=0.0)))
    comp = np.where(is_eq, 0.0, np.abs(g * (moments - a)))
    sign = np.where(is_eq, 0.0, np.maximum(0.0, -g))
    variational = max(float(comp.max(initial=0.0)),
                      float(sign.max(initial=0.0)))
    z_rec = _density_from_point(p, hmat, uf, y, g, beta)
    recovery = float(np.abs(z - z_rec).max(initial=0.0))
    return OptimalityReport(feasibility_residual=feas,
                            variational_residual=variational,
                            recovery_residual=recovery)
