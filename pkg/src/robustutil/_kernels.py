"""Hot numerical kernels with numba and pure-numpy implementations.

Every kernel ships in two variants: a loop implementation compiled with
``numba.njit`` (suffix ``_nb``) and a vectorized numpy twin (suffix ``_np``).
The unsuffixed name is the dispatcher actually used by the package. The
backend is chosen once at import time:

* default: numba, when importable;
* ``ROBUSTUTIL_NO_NUMBA=1`` in the environment forces the numpy path;
* numba missing: numpy path, silently.

The twins are kept arithmetically aligned (same per-point operation
order), so the table-lookup lattice kernels agree bit for bit; kernels
that evaluate powers inline (dual objective, core scan, projected
gradient) agree to a few ulp because scalar and vectorized ``**`` take
different libm paths. ``benchmarks/bench_kernels.py`` times one twin
against the other.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("ROBUSTUTIL_NO_NUMBA", "").strip().lower()
NUMBA_ENABLED = _flag not in ("1", "true", "yes", "on")

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def _njit(*args, **kwargs):
        # identity decorator; keeps the _nb names importable without numba
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# compensated expectation
# ---------------------------------------------------------------------------

def kahan_dot_np(p: np.ndarray, v: np.ndarray) -> float:
    """Kahan-compensated sum of p[i]*v[i] in fixed state order."""
    total = 0.0
    carry = 0.0
    for i in range(p.shape[0]):
        term = p[i] * v[i] - carry
        fresh = total + term
        carry = (fresh - total) - term
        total = fresh
    return total


kahan_dot_nb = _njit(cache=True)(kahan_dot_np)


# ---------------------------------------------------------------------------
# dual-of-dual objective for the power family
# ---------------------------------------------------------------------------

@_njit(cache=True)
def power_dual_objective_nb(p, hmat, a, g, beta, y, alpha):
    """Value and gradient of g.a + beta - y E[Uinv((beta + g.h)+)].

    Power-family closed forms: Uinv(u) = (alpha u)^(1/alpha) and
    Uinv'(u) = (alpha u)^(1/alpha - 1); both vanish at u = 0.
    Returns (value, gradient) with gradient layout (dg_1..dg_m, dbeta).
    """
    n = p.shape[0]
    m = g.shape[0]
    inv_alpha = 1.0 / alpha
    acc_val = 0.0
    acc_beta = 0.0
    acc_g = np.zeros(m)
    for i in range(n):
        w = beta
        for l in range(m):
            w += g[l] * hmat[l, i]
        if w > 0.0:
            au = alpha * w
            uinv = au ** inv_alpha
            uinvp = au ** (inv_alpha - 1.0)
            acc_val += p[i] * uinv
            acc_beta += p[i] * uinvp
            for l in range(m):
                acc_g[l] += p[i] * uinvp * hmat[l, i]
    value = beta - y * acc_val
    for l in range(m):
        value += g[l] * a[l]
    grad = np.empty(m + 1)
    for l in range(m):
        grad[l] = a[l] - y * acc_g[l]
    grad[m] = 1.0 - y * acc_beta
    return value, grad


def power_dual_objective_np(p, hmat, a, g, beta, y, alpha):
    """Vectorized twin of :func:`power_dual_objective_nb`."""
    w = beta + g @ hmat
    pos = w > 0.0
    au = alpha * w[pos]
    uinv = au ** (1.0 / alpha)
    uinvp = au ** (1.0 / alpha - 1.0)
    pp = p[pos]
    value = float(g @ a) + beta - y * float(pp @ uinv)
    grad = np.empty(g.shape[0] + 1)
    grad[:-1] = a - y * (hmat[:, pos] @ (pp * uinvp))
    grad[-1] = 1.0 - y * float(pp @ uinvp)
    return value, grad


# ---------------------------------------------------------------------------
# dense lattice sweep over {Z >= 0, E[Z] = 1, E[Z h] >= a}
#
# Coordinates are lattice masses q_i = k_i / N with sum k_i = N, so
# Z_i = q_i / p_i. obj_tbl[i, k] = p_i * gamma*_y(k / (N p_i)) and
# ctbl[l, i, k] = h[l, i] * k / N; athresh carries the GE bounds minus a
# lattice rounding tolerance. Tables are increasing in k (gamma* is
# increasing on [0, inf)), which the pruning below relies on.
# ---------------------------------------------------------------------------

@_njit(cache=True)
def primal_grid_min_n2_nb(obj_tbl, ctbl, athresh, N):
    m = ctbl.shape[0]
    best = np.inf
    bk = np.full(2, -1, dtype=np.int64)
    for k0 in range(N + 1):
        k1 = N - k0
        v = obj_tbl[0, k0] + obj_tbl[1, k1]
        if v >= best:
            continue
        ok = True
        for l in range(m):
            if ctbl[l, 0, k0] + ctbl[l, 1, k1] < athresh[l]:
                ok = False
                break
        if ok:
            best = v
            bk[0] = k0
            bk[1] = k1
    return best, bk


def primal_grid_min_n2_np(obj_tbl, ctbl, athresh, N):
    k0 = np.arange(N + 1)
    k1 = N - k0
    v = obj_tbl[0, k0] + obj_tbl[1, k1]
    ok = np.ones(N + 1, dtype=bool)
    for l in range(ctbl.shape[0]):
        ok &= ctbl[l, 0, k0] + ctbl[l, 1, k1] >= athresh[l]
    if not ok.any():
        return np.inf, np.full(2, -1, dtype=np.int64)
    vm = np.where(ok, v, np.inf)
    j = int(np.argmin(vm))
    return float(vm[j]), np.array([j, N - j], dtype=np.int64)


@_njit(cache=True)
def primal_grid_min_n3_nb(obj_tbl, ctbl, athresh, N):
    m = ctbl.shape[0]
    best = np.inf
    bk = np.full(3, -1, dtype=np.int64)
    for k0 in range(N + 1):
        t0 = obj_tbl[0, k0]
        if t0 >= best:
            break
        for k1 in range(N + 1 - k0):
            v01 = t0 + obj_tbl[1, k1]
            if v01 >= best:
                break
            k2 = N - k0 - k1
            v = v01 + obj_tbl[2, k2]
            if v >= best:
                continue
            ok = True
            for l in range(m):
                c = ctbl[l, 0, k0] + ctbl[l, 1, k1] + ctbl[l, 2, k2]
                if c < athresh[l]:
                    ok = False
                    break
            if ok:
                best = v
                bk[0] = k0
                bk[1] = k1
                bk[2] = k2
    return best, bk


def primal_grid_min_n3_np(obj_tbl, ctbl, athresh, N):
    m = ctbl.shape[0]
    best = np.inf
    bk = np.full(3, -1, dtype=np.int64)
    for k0 in range(N + 1):
        t0 = obj_tbl[0, k0]
        if t0 >= best:
            break
        k1 = np.arange(N + 1 - k0)
        k2 = (N - k0) - k1
        v = (t0 + obj_tbl[1, k1]) + obj_tbl[2, k2]
        ok = np.ones(k1.shape[0], dtype=bool)
        for l in range(m):
            c = (ctbl[l, 0, k0] + ctbl[l, 1, k1]) + ctbl[l, 2, k2]
            ok &= c >= athresh[l]
        vm = np.where(ok, v, np.inf)
        j = int(np.argmin(vm))
        if vm[j] < best:
            best = float(vm[j])
            bk[0] = k0
            bk[1] = j
            bk[2] = N - k0 - j
    return best, bk


@_njit(cache=True)
def primal_grid_min_n4_nb(obj_tbl, ctbl, athresh, N):
    m = ctbl.shape[0]
    best = np.inf
    bk = np.full(4, -1, dtype=np.int64)
    # per-unit-k slope of the last two coordinates; ctbl[l, i, 1] = h[l, i]/N
    hmax23 = np.empty(m)
    for l in range(m):
        hmax23[l] = max(ctbl[l, 2, 1], ctbl[l, 3, 1])
    for k0 in range(N + 1):
        t0 = obj_tbl[0, k0]
        if t0 >= best:
            break
        for k1 in range(N + 1 - k0):
            v01 = t0 + obj_tbl[1, k1]
            if v01 >= best:
                break
            rem = N - k0 - k1
            reachable = True
            for l in range(m):
                c01 = ctbl[l, 0, k0] + ctbl[l, 1, k1]
                if c01 + rem * hmax23[l] < athresh[l]:
                    reachable = False
                    break
            if not reachable:
                continue
            for k2 in range(rem + 1):
                v012 = v01 + obj_tbl[2, k2]
                if v012 >= best:
                    break
                k3 = rem - k2
                v = v012 + obj_tbl[3, k3]
                if v >= best:
                    continue
                ok = True
                for l in range(m):
                    c = ((ctbl[l, 0, k0] + ctbl[l, 1, k1])
                         + ctbl[l, 2, k2]) + ctbl[l, 3, k3]
                    if c < athresh[l]:
                        ok = False
                        break
                if ok:
                    best = v
                    bk[0] = k0
                    bk[1] = k1
                    bk[2] = k2
                    bk[3] = k3
    return best, bk


def primal_grid_min_n4_np(obj_tbl, ctbl, athresh, N):
    m = ctbl.shape[0]
    best = np.inf
    bk = np.full(4, -1, dtype=np.int64)
    hmax23 = np.array([max(ctbl[l, 2, 1], ctbl[l, 3, 1]) for l in range(m)])
    for k0 in range(N + 1):
        t0 = obj_tbl[0, k0]
        if t0 >= best:
            break
        for k1 in range(N + 1 - k0):
            v01 = t0 + obj_tbl[1, k1]
            if v01 >= best:
                break
            rem = N - k0 - k1
            skip = False
            c01 = np.empty(m)
            for l in range(m):
                c01[l] = ctbl[l, 0, k0] + ctbl[l, 1, k1]
                if c01[l] + rem * hmax23[l] < athresh[l]:
                    skip = True
                    break
            if skip:
                continue
            k2 = np.arange(rem + 1)
            k3 = rem - k2
            v = (v01 + obj_tbl[2, k2]) + obj_tbl[3, k3]
            ok = np.ones(rem + 1, dtype=bool)
            for l in range(m):
                c = (c01[l] + ctbl[l, 2, k2]) + ctbl[l, 3, k3]
                ok &= c >= athresh[l]
            vm = np.where(ok, v, np.inf)
            j = int(np.argmin(vm))
            if vm[j] < best:
                best = float(vm[j])
                bk[0] = k0
                bk[1] = k1
                bk[2] = j
                bk[3] = rem - j
    return best, bk


# ---------------------------------------------------------------------------
# budget-simplex sweep for the minimax lower value
#
# zu_tbl[j, i, k] = p_i * Z[j, i] * U(k * x / (N p_i)); the sweep maximizes
# min_j sum_i zu_tbl[j, i, k_i] over lattice allocations sum k_i = N.
# ---------------------------------------------------------------------------

@_njit(cache=True)
def minimax_x_grid_n2_nb(zu_tbl, N):
    kq = zu_tbl.shape[0]
    best = -np.inf
    bk = np.full(2, -1, dtype=np.int64)
    for k0 in range(N + 1):
        k1 = N - k0
        phi = np.inf
        for j in range(kq):
            vj = zu_tbl[j, 0, k0] + zu_tbl[j, 1, k1]
            if vj < phi:
                phi = vj
        if phi > best:
            best = phi
            bk[0] = k0
            bk[1] = k1
    return best, bk


def minimax_x_grid_n2_np(zu_tbl, N):
    k0 = np.arange(N + 1)
    k1 = N - k0
    vals = zu_tbl[:, 0, k0] + zu_tbl[:, 1, k1]
    phi = vals.min(axis=0)
    j = int(np.argmax(phi))
    return float(phi[j]), np.array([j, N - j], dtype=np.int64)


@_njit(cache=True)
def minimax_x_grid_n3_nb(zu_tbl, N):
    kq = zu_tbl.shape[0]
    best = -np.inf
    bk = np.full(3, -1, dtype=np.int64)
    for k0 in range(N + 1):
        for k1 in range(N + 1 - k0):
            k2 = N - k0 - k1
            phi = np.inf
            for j in range(kq):
                vj = (zu_tbl[j, 0, k0] + zu_tbl[j, 1, k1]) + zu_tbl[j, 2, k2]
                if vj < phi:
                    phi = vj
            if phi > best:
                best = phi
                bk[0] = k0
                bk[1] = k1
                bk[2] = k2
    return best, bk


def minimax_x_grid_n3_np(zu_tbl, N):
    best = -np.inf
    bk = np.full(3, -1, dtype=np.int64)
    for k0 in range(N + 1):
        k1 = np.arange(N + 1 - k0)
        k2 = (N - k0) - k1
        vals = (zu_tbl[:, 0, k0][:, None] + zu_tbl[:, 1, k1]) \
            + zu_tbl[:, 2, k2]
        phi = vals.min(axis=0)
        j = int(np.argmax(phi))
        if phi[j] > best:
            best = float(phi[j])
            bk[0] = k0
            bk[1] = j
            bk[2] = N - k0 - j
    return best, bk


# ---------------------------------------------------------------------------
# mixture sweep over the density hull: minimize E[(mu . Z)^q]
# ---------------------------------------------------------------------------

@_njit(cache=True)
def power_core_scan_k2_nb(zmat, p, q, N):
    n = p.shape[0]
    best = np.inf
    bmu = np.zeros(2)
    for c0 in range(N + 1):
        mu0 = c0 / N
        mu1 = 1.0 - mu0
        core = 0.0
        for i in range(n):
            s = mu0 * zmat[0, i] + mu1 * zmat[1, i]
            core += p[i] * s ** q
        if core < best:
            best = core
            bmu[0] = mu0
            bmu[1] = mu1
    return best, bmu


def power_core_scan_k2_np(zmat, p, q, N):
    mu0 = np.arange(N + 1) / N
    mu1 = 1.0 - mu0
    core = np.zeros(N + 1)
    for i in range(p.shape[0]):
        s = mu0 * zmat[0, i] + mu1 * zmat[1, i]
        core = core + p[i] * s ** q
    j = int(np.argmin(core))
    return float(core[j]), np.array([mu0[j], mu1[j]])


@_njit(cache=True)
def power_core_scan_k3_nb(zmat, p, q, N):
    n = p.shape[0]
    best = np.inf
    bmu = np.zeros(3)
    for c0 in range(N + 1):
        mu0 = c0 / N
        for c1 in range(N + 1 - c0):
            mu1 = c1 / N
            mu2 = 1.0 - mu0 - mu1
            core = 0.0
            for i in range(n):
                s = (mu0 * zmat[0, i] + mu1 * zmat[1, i]) + mu2 * zmat[2, i]
                core += p[i] * s ** q
            if core < best:
                best = core
                bmu[0] = mu0
                bmu[1] = mu1
                bmu[2] = mu2
    return best, bmu


def power_core_scan_k3_np(zmat, p, q, N):
    best = np.inf
    bmu = np.zeros(3)
    for c0 in range(N + 1):
        mu0 = c0 / N
        c1 = np.arange(N + 1 - c0)
        mu1 = c1 / N
        mu2 = 1.0 - mu0 - mu1
        core = np.zeros(c1.shape[0])
        for i in range(p.shape[0]):
            s = (mu0 * zmat[0, i] + mu1 * zmat[1, i]) + mu2 * zmat[2, i]
            core = core + p[i] * s ** q
        j = int(np.argmin(core))
        if core[j] < best:
            best = float(core[j])
            bmu[0] = mu0
            bmu[1] = float(mu1[j])
            bmu[2] = float(mu2[j])
    return best, bmu


# ---------------------------------------------------------------------------
# projected-gradient multistart for the primal oracle (power family)
#
# Minimizes sum_i p_i gamma*_y(Z_i) = Cy sum_i p_i Z_i^r over the polytope
# {Z >= 0, p.Z = 1, (p h_l).Z >= a_l (EQ: =)}. Projection is Dykstra's
# alternating scheme over the halfspaces and the weighted simplex, ending
# on the simplex so iterates satisfy Z >= 0, p.Z = 1 exactly.
# ---------------------------------------------------------------------------

@_njit(cache=True)
def _wsimplex_tau_nb(W, p, target):
    # bisection for tau in p . max(0, W - tau p) = target
    lo = (np.dot(p, W) - target) / np.dot(p, p)
    hi = W[0] / p[0]
    for i in range(1, W.shape[0]):
        c = W[i] / p[i]
        if c > hi:
            hi = c
    if lo > hi:
        lo = hi - 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        s = 0.0
        for i in range(W.shape[0]):
            zi = W[i] - mid * p[i]
            if zi > 0.0:
                s += p[i] * zi
        if s > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@_njit(cache=True)
def primal_pg_power_nb(p, hmat, a, is_eq, y, alpha, starts, pg_iters,
                       dyk_iters):
    S, n = starts.shape
    m = hmat.shape[0]
    r = 1.0 / (1.0 - alpha)
    Cy = (1.0 - alpha) / alpha * y ** (-alpha / (1.0 - alpha))
    rows = np.empty((m, n))
    rnorm2 = np.empty(m)
    for l in range(m):
        for i in range(n):
            rows[l, i] = p[i] * hmat[l, i]
        rnorm2[l] = np.dot(rows[l], rows[l])
    vals = np.empty(S)
    zs = np.empty((S, n))
    incL = np.empty((m, n))
    for s in range(S):
        Z = starts[s].copy()
        fz = 0.0
        for i in range(n):
            fz += p[i] * Z[i] ** r
        fz *= Cy
        # acceptance is penalized by residual constraint violation so the
        # iteration cannot profit from the inexact Dykstra projection
        pen = 1e8 * (1.0 + abs(fz))
        vz = 0.0
        for l in range(m):
            c = np.dot(rows[l], Z) - a[l]
            if is_eq[l]:
                vz += abs(c)
            elif c < 0.0:
                vz -= c
        fz_pen = fz + pen * vz
        grad0 = 0.0
        for i in range(n):
            gi = p[i] * Cy * r * Z[i] ** (r - 1.0)
            grad0 += gi * gi
        t = 0.5 / (1.0 + np.sqrt(grad0))
        for it in range(pg_iters):
            W = np.empty(n)
            for i in range(n):
                W[i] = Z[i] - t * p[i] * Cy * r * Z[i] ** (r - 1.0)
            # Dykstra projection onto the polytope
            incA = np.zeros(n)
            for l in range(m):
                for i in range(n):
                    incL[l, i] = 0.0
            X = W.copy()
            for _ in range(dyk_iters):
                for l in range(m):
                    Yv = X + incL[l]
                    viol = a[l] - np.dot(rows[l], Yv)
                    if is_eq[l] or viol > 0.0:
                        PL = Yv + rows[l] * (viol / rnorm2[l])
                    else:
                        PL = Yv.copy()
                    incL[l] = Yv - PL
                    X = PL
                Yv = X + incA
                tau = _wsimplex_tau_nb(Yv, p, 1.0)
                PA = np.empty(n)
                for i in range(n):
                    zi = Yv[i] - tau * p[i]
                    PA[i] = zi if zi > 0.0 else 0.0
                snap = np.dot(p, PA)
                if snap > 0.0:
                    PA = PA / snap
                incA = Yv - PA
                X = PA
            fc = 0.0
            for i in range(n):
                fc += p[i] * X[i] ** r
            fc *= Cy
            vc = 0.0
            for l in range(m):
                c = np.dot(rows[l], X) - a[l]
                if is_eq[l]:
                    vc += abs(c)
                elif c < 0.0:
                    vc -= c
            fc_pen = fc + pen * vc
            if fc_pen <= fz_pen:
                Z = X
                fz = fc
                fz_pen = fc_pen
                t *= 1.3
            else:
                t *= 0.5
            if t < 1e-16:
                break
        vals[s] = fz
        zs[s] = Z
    return vals, zs


def primal_pg_power_np(p, hmat, a, is_eq, y, alpha, starts, pg_iters,
                       dyk_iters):
    """Vectorized-over-starts twin of :func:`primal_pg_power_nb`."""
    S, n = starts.shape
    m = hmat.shape[0]
    r = 1.0 / (1.0 - alpha)
    Cy = (1.0 - alpha) / alpha * y ** (-alpha / (1.0 - alpha))
    rows = p[None, :] * hmat
    rnorm2 = (rows * rows).sum(axis=1)
    pnorm2 = float(p @ p)

    def objective(Z):
        return Cy * ((Z ** r) @ p)

    def wsimplex(W):
        lo = (W @ p - 1.0) / pnorm2
        hi = (W / p).max(axis=1)
        lo = np.minimum(lo, hi - 1.0)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            Zc = np.maximum(0.0, W - mid[:, None] * p)
            s = Zc @ p
            gt = s > 1.0
            lo = np.where(gt, mid, lo)
            hi = np.where(gt, hi, mid)
        tau = 0.5 * (lo + hi)
        PA = np.maximum(0.0, W - tau[:, None] * p)
        snap = PA @ p
        snap = np.where(snap > 0.0, snap, 1.0)
        return PA / snap[:, None]

    def dykstra(W):
        incA = np.zeros_like(W)
        incL = np.zeros((m, S, n))
        X = W.copy()
        for _ in range(dyk_iters):
            for l in range(m):
                Yv = X + incL[l]
                viol = a[l] - Yv @ rows[l]
                act = is_eq[l] | (viol > 0.0)
                PL = np.where(act[:, None],
                              Yv + np.outer(viol / rnorm2[l], rows[l]), Yv)
                incL[l] = Yv - PL
                X = PL
            Yv = X + incA
            PA = wsimplex(Yv)
            incA = Yv - PA
            X = PA
        return X

    def violation(Z):
        if m == 0:
            return np.zeros(Z.shape[0])
        C = Z @ rows.T - a[None, :]
        V = np.where(is_eq[None, :], np.abs(C), np.maximum(0.0, -C))
        return V.sum(axis=1)

    Z = starts.copy()
    fz = objective(Z)
    # same violation-penalized acceptance as the numba twin
    pen = 1e8 * (1.0 + np.abs(fz))
    fz_pen = fz + pen * violation(Z)
    g0 = p * (Cy * r) * Z ** (r - 1.0)
    t = 0.5 / (1.0 + np.sqrt((g0 * g0).sum(axis=1)))
    for it in range(pg_iters):
        G = p * (Cy * r) * Z ** (r - 1.0)
        cand = dykstra(Z - t[:, None] * G)
        fc = objective(cand)
        fc_pen = fc + pen * violation(cand)
        acc = fc_pen <= fz_pen
        Z = np.where(acc[:, None], cand, Z)
        fz = np.where(acc, fc, fz)
        fz_pen = np.where(acc, fc_pen, fz_pen)
        t = np.where(acc, t * 1.3, t * 0.5)
        if (t < 1e-16).all():
            break
    return fz, Z


# ---------------------------------------------------------------------------
# backend dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    kahan_dot = kahan_dot_nb
    power_dual_objective = power_dual_objective_nb
    _GRID_MIN = {2: primal_grid_min_n2_nb, 3: primal_grid_min_n3_nb,
                 4: primal_grid_min_n4_nb}
    _X_GRID = {2: minimax_x_grid_n2_nb, 3: minimax_x_grid_n3_nb}
    _CORE_SCAN = {2: power_core_scan_k2_nb, 3: power_core_scan_k3_nb}
    primal_pg_power = primal_pg_power_nb
else:
    kahan_dot = kahan_dot_np
    power_dual_objective = power_dual_objective_np
    _GRID_MIN = {2: primal_grid_min_n2_np, 3: primal_grid_min_n3_np,
                 4: primal_grid_min_n4_np}
    _X_GRID = {2: minimax_x_grid_n2_np, 3: minimax_x_grid_n3_np}
    _CORE_SCAN = {2: power_core_scan_k2_np, 3: power_core_scan_k3_np}
    primal_pg_power = primal_pg_power_np


def primal_grid_min(obj_tbl, ctbl, athresh, N):
    """Lattice minimum of the primal objective, n in {2, 3, 4}."""
    return _GRID_MIN[obj_tbl.shape[0]](obj_tbl, ctbl, athresh, N)


def minimax_x_grid(zu_tbl, N):
    """Lattice maximum of min_j E[Z_j U(X)] over the budget simplex."""
    return _X_GRID[zu_tbl.shape[1]](zu_tbl, N)


def power_core_scan(zmat, p, q, N):
    """Lattice minimum of E[(mu . Z)^q] over mixture weights mu."""
    k = zmat.shape[0]
    if k == 1:
        core = float(p @ (zmat[0] ** q))
        return core, np.ones(1)
    return _CORE_SCAN[k](zmat, p, q, N)


def warm_up() -> None:
    """Trigger JIT compilation of every kernel on toy inputs."""
    p = np.array([0.5, 0.5])
    h = np.array([[0.0, 2.0]])
    a = np.array([0.5])
    kahan_dot(p, p)
    power_dual_objective(p, h, a, np.array([0.1]), 1.0, 1.0, 0.5)
    obj_tbl = np.arange(12.0).reshape(2, 6)
    ctbl = np.arange(12.0).reshape(1, 2, 6)
    primal_grid_min(obj_tbl, ctbl, np.array([-1e9]), 5)
    obj3 = np.arange(18.0).reshape(3, 6)
    ctbl3 = np.arange(18.0).reshape(1, 3, 6)
    _GRID_MIN[3](obj3, ctbl3, np.array([-1e9]), 5)
    obj4 = np.arange(24.0).reshape(4, 6)
    ctbl4 = np.arange(24.0).reshape(1, 4, 6)
    _GRID_MIN[4](obj4, ctbl4, np.array([-1e9]), 5)
    zu = np.ones((2, 2, 6))
    minimax_x_grid(zu, 5)
    _X_GRID[3](np.ones((2, 3, 6)), 5)
    zmat = np.array([[1.0, 1.0], [0.5, 1.5]])
    power_core_scan(zmat, p, 2.0, 5)
    _CORE_SCAN[3](np.vstack([zmat, [[1.2, 0.8]]]), p, 2.0, 5)
    starts = np.array([[1.0, 1.0], [0.4, 1.6]])
    primal_pg_power(p, h, np.array([0.9]), np.array([False]), 1.0, 0.5,
                    starts, 3, 3)
