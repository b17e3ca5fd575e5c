"""Modular functionals and Orlicz norms on a finite market.

Two convex modulars are built from a utility U and a deflator vector Y
(terminal value of a supermartingale deflator; Y >= 0 with E[Y] <= 1,
identically 1 in the complete case):

* EtaStar: I(Z) = E[|Z| V(Y/|Z|)], the density-side modular,
* Eta:     J(X) = E[Y U^-1(|X|)], the wealth-side modular,

each normed two ways: Luxemburg ||Z||^l = inf{beta > 0 : I(Z/beta) <= 1}
and Amemiya ||Z||^a = inf_k (1 + I(kZ))/k. The pair is linked by the
Young-type bound I(Z) + J(X) >= E[XZ] and the Hoelder bound
|E[XZ]| <= 2 ||Z||^l ||X||^l, both exercised by the inequality battery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._errors import DomainError, ValidationError
from .market import FiniteMarket
from .utility import UtilityFunction, conjugate_v, conjugate_v_prime, \
    gamma_star, u_inverse

__all__ = [
    "Modular",
    "BatteryReport",
    "modular_value",
    "luxemburg_norm",
    "amemiya_norm",
    "modular_I_incomplete",
    "inequality_battery",
]

_BETA_MIN = 1e-300
_BETA_MAX = 1e300
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Modular:
    """Convex modular on density (EtaStar) or wealth (Eta) vectors.

    The deflator defaults to the complete-case Y ≡ 1; any supplied vector
    must be componentwise >= 0 with E[Y] <= 1. Instances are immutable.
    """

    __slots__ = ("market", "uf", "kind", "deflator", "_frozen")

    def __init__(self, market: FiniteMarket, uf: UtilityFunction,
                 kind: str, deflator=None) -> None:
        if kind not in ("EtaStar", "Eta"):
            raise ValidationError("kind must be 'EtaStar' or 'Eta'")
        if deflator is None:
            y = np.ones(market.n)
        else:
            y = np.asarray(deflator, dtype=float).copy()
            if y.shape != (market.n,):
                raise ValidationError(
                    f"deflator must have length {market.n}")
            if not np.isfinite(y).all() or (y < 0.0).any():
                raise ValidationError("deflator must be finite and >= 0")
            if float(market.probs @ y) > 1.0 + 1e-12:
                raise ValidationError("deflator expectation must be <= 1")
        y.setflags(write=False)
        object.__setattr__(self, "market", market)
        object.__setattr__(self, "uf", uf)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "deflator", y)
        object.__setattr__(self, "_frozen", True)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("Modular is immutable")

    def value(self, Z) -> float:
        return modular_value(self, Z)

    def luxemburg(self, Z) -> float:
        return luxemburg_norm(self, Z)

    def amemiya(self, Z) -> float:
        return amemiya_norm(self, Z)

    def __repr__(self) -> str:
        return f"Modular(kind={self.kind}, n={self.market.n})"


def _eta_star_states(uf: UtilityFunction, y: np.ndarray,
                     zabs: np.ndarray) -> np.ndarray:
    """Per-state gamma*_{Y_i}(|Z_i|) without probability weights."""
    if uf.family == "power":
        a = uf.alpha
        out = np.zeros_like(zabs)
        pos = zabs > 0.0
        ypos = pos & (y > 0.0)
        out[ypos] = ((1.0 - a) / a * y[ypos] ** (-a / (1.0 - a))
                     * zabs[ypos] ** (1.0 / (1.0 - a)))
        out[pos & (y == 0.0)] = math.inf  # z * lim U with lim U = inf
        return out
    return np.array([gamma_star(uf, float(yi), float(zi))
                     for yi, zi in zip(y, zabs)])


def _eta_states(uf: UtilityFunction, y: np.ndarray,
                zabs: np.ndarray) -> np.ndarray:
    """Per-state Y_i U^-1(|X_i|) without probability weights."""
    if uf.family == "power":
        a = uf.alpha
        return y * (a * zabs) ** (1.0 / a)
    out = np.zeros_like(zabs)
    pos = y > 0.0
    out[pos] = y[pos] * np.array([u_inverse(uf, float(zi))
                                  for zi in zabs[pos]])
    return out


def modular_value(mod: Modular, Z) -> float:
    """Evaluate the modular at a vector; extended-real (+inf possible).

    EtaStar: E[|Z| V(Y/|Z|)] with the 0-convention at Z_i = 0. Eta:
    E[Y U^-1(|X|)], +inf as soon as some |X_i| reaches lim U for bounded
    utilities on a state with positive weight and deflator.
    """
    z = np.asarray(Z, dtype=float)
    if z.shape != (mod.market.n,):
        raise ValidationError(f"vector must have length {mod.market.n}")
    if not np.isfinite(z).all():
        raise ValidationError("modular argument must be finite")
    zabs = np.abs(z)
    if mod.kind == "EtaStar":
        states = _eta_star_states(mod.uf, mod.deflator, zabs)
    else:
        states = _eta_states(mod.uf, mod.deflator, zabs)
    weighted = mod.market.probs * states
    if np.isinf(weighted).any():
        return math.inf
    return float(np.sum(weighted))


def luxemburg_norm(mod: Modular, Z) -> float:
    """inf{beta > 0 : modular(Z/beta) <= 1} by bisection on log beta.

    Runs until the bracket's relative width falls below 1e-12 (200
    iteration cap) and returns the feasible upper end. Returns 0 for
    Z = 0 and the +inf sentinel if no beta in [1e-300, 1e300] works.
    """
    z = np.asarray(Z, dtype=float)
    if not np.any(z != 0.0):
        return 0.0
    hi = 1.0
    if modular_value(mod, z / hi) <= 1.0:
        lo = hi
        while modular_value(mod, z / (lo * 0.5)) <= 1.0:
            lo *= 0.5
            if lo < _BETA_MIN:
                return 0.0
        lo *= 0.5
    else:
        lo = hi
        hi = 2.0
        while modular_value(mod, z / hi) > 1.0:
            hi *= 2.0
            if hi > _BETA_MAX:
                return math.inf
    for _ in range(200):
        if hi - lo <= 1e-12 * hi:
            break
        mid = math.sqrt(lo * hi)
        if modular_value(mod, z / mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def amemiya_norm(mod: Modular, Z) -> float:
    """inf_{k>0} (1 + modular(kZ))/k by golden section on log k.

    The objective is unimodal in k for a convex modular; infinite probes
    (modular = +inf) rank as +inf and the bracket expansion skips past
    them. Returns 0 for Z = 0.
    """
    z = np.asarray(Z, dtype=float)
    if not np.any(z != 0.0):
        return 0.0

    def f(k: float) -> float:
        m = modular_value(mod, k * z)
        return math.inf if math.isinf(m) else (1.0 + m) / k

    klo, k, khi = 0.5, 1.0, 2.0
    flo, fk, fhi = f(klo), f(k), f(khi)
    while flo < fk:
        khi, fhi = k, fk
        k, fk = klo, flo
        klo *= 0.5
        if klo < _BETA_MIN:
            return math.inf
        flo = f(klo)
    while fhi < fk:
        klo, flo = k, fk
        k, fk = khi, fhi
        khi *= 2.0
        if khi > _BETA_MAX:
            return math.inf
        fhi = f(khi)
    # golden section on log k over [klo, khi]
    a, b = math.log(klo), math.log(khi)
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(math.exp(c)), f(math.exp(d))
    for _ in range(300):
        if (b - a) <= 1e-10:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(math.exp(d))
    kstar = math.exp(0.5 * (a + b))
    return min(f(kstar), fc, fd)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {mu >= 0, sum mu = 1} (sort method)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0.0
    rho = int(idx[cond][-1])
    tau = css[rho - 1] / rho
    return np.maximum(v - tau, 0.0)


def _vprime_states(uf: UtilityFunction, y_over_z: np.ndarray) -> np.ndarray:
    if uf.family == "power":
        return -np.power(y_over_z, 1.0 / (uf.alpha - 1.0))
    return np.array([conjugate_v_prime(uf, float(t)) for t in y_over_z])


def modular_I_incomplete(market: FiniteMarket, uf: UtilityFunction,
                         deflator_set, Z, seed: int = 0,
                         multistarts: int = 50):
    """Infimum of E[|Z| V(Y/|Z|)] over a deflator family; returns
    (value, attaining Y).

    ``deflator_set`` is either a nonempty list of deflator vectors (the
    infimum is taken over the finite family) or {"vertices": [...]}
    describing the convex hull of the listed vectors, minimized by
    projected gradient on the hull weights with 50 multistarts. The
    singleton {1-vector} case reduces to modular_value. Demo-grade: the
    polytope path targets one-period incomplete-market illustrations.
    """
    if isinstance(deflator_set, dict):
        vertices = [np.asarray(v, dtype=float) for v in
                    deflator_set.get("vertices", [])]
        hull = True
    else:
        vertices = [np.asarray(v, dtype=float) for v in deflator_set]
        hull = False
    if not vertices:
        raise DomainError("deflator set must be nonempty")
    for v in vertices:
        Modular(market, uf, "EtaStar", deflator=v)  # invariant check

    if not hull:
        best_val, best_y = math.inf, vertices[0]
        for v in vertices:
            val = modular_value(Modular(market, uf, "EtaStar", deflator=v), Z)
            if val < best_val:
                best_val, best_y = val, v
        return best_val, best_y

    z = np.asarray(Z, dtype=float)
    zabs = np.abs(z)
    sup = zabs > 0.0
    p = market.probs
    vmat = np.stack(vertices)  # (k, n)
    k = vmat.shape[0]

    def value_at(mu: np.ndarray) -> float:
        y = mu @ vmat
        return modular_value(Modular(market, uf, "EtaStar", deflator=y), z)

    def grad_at(mu: np.ndarray) -> np.ndarray:
        # d/dY_i of |z| V(Y/|z|) is V'(Y_i/|z_i|) on the support of z
        y = mu @ vmat
        g_y = np.zeros_like(y)
        ratio = y[sup] / zabs[sup]
        if (ratio <= 0.0).any():
            # V'(0+) = -inf; nudge handled by caller via backtracking
            ratio = np.maximum(ratio, 1e-300)
        g_y[sup] = _vprime_states(uf, ratio)
        return vmat @ (p * g_y)

    rng = np.random.default_rng(seed)
    best_val, best_mu = math.inf, np.full(k, 1.0 / k)
    for s in range(multistarts):
        mu = np.full(k, 1.0 / k) if s == 0 else rng.dirichlet(np.ones(k))
        val = value_at(mu)
        for _ in range(300):
            g = grad_at(mu)
            t = 1.0
            improved = False
            for _ in range(40):
                cand = _project_simplex(mu - t * g)
                cval = value_at(cand)
                if cval < val - 1e-15:
                    mu, val = cand, cval
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
        if val < best_val:
            best_val, best_mu = val, mu
    return best_val, best_mu @ vmat


@dataclass(frozen=True)
class BatteryReport:
    """Worst margins (rhs - lhs, so >= 0 means the inequality held) over
    all samples, and the count of violations beyond slack 1e-9."""

    samples: int
    violations: int
    worst_holder_margin: float
    worst_young_margin: float
    worst_sandwich_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def inequality_battery(market: FiniteMarket, uf: UtilityFunction,
                       samples: int, seed: int = 0) -> BatteryReport:
    """Random-vector stress test of the norm and pairing inequalities.

    Per sample draws lognormal-scale positive vectors Z (density side,
    EtaStar modular I) and X (wealth side, Eta modular J) and checks
    (i) |E[XZ]| <= 2 ||Z||^l_I ||X||^l_J, (ii) I(Z) + J(X) >= E[XZ],
    (iii) ||.||^l <= ||.||^a <= 2 ||.||^l for both modulars. Sample 0 is
    the zero pair (both sides 0). Violations are counted at slack
    1e-9 (1 + |rhs|); margins are reported raw.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    mod_i = Modular(market, uf, "EtaStar")
    mod_j = Modular(market, uf, "Eta")
    rng = np.random.default_rng(seed)
    p = market.probs
    n = market.n

    worst_h = worst_y = worst_s = math.inf
    violations = 0

    def slacked(lhs: float, rhs: float) -> bool:
        return lhs > rhs + 1e-9 * (1.0 + abs(rhs))

    for s in range(samples):
        if s == 0:
            z = np.zeros(n)
            x = np.zeros(n)
        else:
            scale_z = math.exp(rng.uniform(-2.0, 2.0))
            scale_x = math.exp(rng.uniform(-2.0, 2.0))
            z = scale_z * np.exp(rng.normal(0.0, 1.0, n))
            x = scale_x * np.exp(rng.normal(0.0, 1.0, n))
        exz = float(np.dot(p, x * z))

        lux_z = luxemburg_norm(mod_i, z)
        lux_x = luxemburg_norm(mod_j, x)
        rhs_h = 2.0 * lux_z * lux_x
        worst_h = min(worst_h, rhs_h - abs(exz))
        if slacked(abs(exz), rhs_h):
            violations += 1

        rhs_y = modular_value(mod_i, z) + modular_value(mod_j, x)
        worst_y = min(worst_y, rhs_y - exz)
        if slacked(exz, rhs_y):
            violations += 1

        for mod, v, lux in ((mod_i, z, lux_z), (mod_j, x, lux_x)):
            am = amemiya_norm(mod, v)
            worst_s = min(worst_s, am - lux, 2.0 * lux - am)
            if slacked(lux, am) or slacked(am, 2.0 * lux):
                violations += 1

    return BatteryReport(samples=samples, violations=violations,
                         worst_holder_margin=worst_h,
                         worst_young_margin=worst_y,
                         worst_sandwich_margin=worst_s)
