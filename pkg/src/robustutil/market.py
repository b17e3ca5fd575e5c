"""Finite probability-space market model and moment-constraint sets.

The reference measure is taken to be the (unique) martingale measure of a
complete market, so pricing is plain expectation and every candidate model
is a density vector Z >= 0 with E[Z] = 1. Uncertainty sets are polytopes
cut out by moment constraints E[Z h] >= a or E[Z h] = a on named
observables h.

Provides scenario-file ingestion (JSON), Gauss-Hermite discretization of a
lognormal terminal price, LP feasibility / strict-feasibility checks for
the constraint polytope, and deterministic compensated expectations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from ._errors import ScenarioError, ValidationError

__all__ = [
    "FiniteMarket",
    "Constraint",
    "ConstraintSet",
    "LognormalSpec",
    "FeasibilityReport",
    "load_scenario",
    "gauss_hermite_market",
    "feasibility_check",
    "expectation",
]

_PROB_FLOOR = 1e-14
_PROB_SUM_TOL = 1e-12
_STRICT_SLACK = 1e-9


class FiniteMarket:
    """n-state market: reference probabilities and named observables.

    probs must be strictly positive (entries below 1e-14 are rejected, not
    renormalized, so equivalence of measures stays meaningful) and sum to 1
    within 1e-12. Observables declared in ``price_observables`` must price
    back to their initial value under the reference measure within
    ``price_tol`` relative (martingale consistency); pass
    ``price_tol=math.inf`` to skip the check for coarse discretizations.
    Immutable after construction.
    """

    __slots__ = ("probs", "observables", "price_observables", "price_tol",
                 "n", "_frozen")

    def __init__(self, probs, observables: dict[str, np.ndarray] | None = None,
                 price_observables: dict[str, float] | None = None,
                 price_tol: float = 1e-8) -> None:
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("probs must be a nonempty 1-d vector")
        if not np.isfinite(p).all():
            raise ValidationError("probs must be finite")
        if (p < _PROB_FLOOR).any():
            raise ValidationError(
                f"probs must be strictly positive (floor {_PROB_FLOOR:g})")
        if abs(float(p.sum()) - 1.0) > _PROB_SUM_TOL:
            raise ValidationError("probs must sum to 1")
        obs: dict[str, np.ndarray] = {}
        for name, vals in (observables or {}).items():
            v = np.asarray(vals, dtype=float)
            if v.shape != p.shape:
                raise ValidationError(
                    f"observable {name!r} must have length {p.size}")
            if not np.isfinite(v).all():
                raise ValidationError(f"observable {name!r} must be finite")
            v.setflags(write=False)
            obs[name] = v
        prices = dict(price_observables or {})
        for name, s0 in prices.items():
            if name not in obs:
                raise ValidationError(
                    f"price observable {name!r} is not a declared observable")
            if math.isfinite(price_tol):
                ev = _kernels.kahan_dot(p, obs[name])
                if abs(ev - float(s0)) > price_tol * max(1.0, abs(float(s0))):
                    raise ValidationError(
                        f"price observable {name!r} misprices: "
                        f"E[h]={ev:.12g} vs declared {float(s0):.12g}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "price_observables", prices)
        object.__setattr__(self, "price_tol", float(price_tol))
        object.__setattr__(self, "n", int(p.size))
        object.__setattr__(self, "_frozen", True)

    def __setattr__(self, name: str, value: object) -> None:
        if getattr(self, "_frozen", False):
            raise AttributeError("FiniteMarket is immutable")
        object.__setattr__(self, name, value)

    def observable(self, name: str) -> np.ndarray:
        try:
            return self.observables[name]
        except KeyError:
            raise ValidationError(f"unknown observable {name!r}") from None

    def __repr__(self) -> str:
        return (f"FiniteMarket(n={self.n}, "
                f"observables={sorted(self.observables)})")


@dataclass(frozen=True)
class Constraint:
    """One moment constraint E[Z h] >= bound (kind 'ge') or = bound ('eq')."""

    observable: str
    kind: str
    bound: float

    def __post_init__(self) -> None:
        if self.kind not in ("ge", "eq"):
            raise ValidationError(f"constraint kind must be 'ge' or 'eq', "
                                  f"got {self.kind!r}")
        if not math.isfinite(self.bound):
            raise ValidationError("constraint bound must be finite")


class ConstraintSet:
    """Ordered collection of moment constraints.

    Observable ids are resolved against a market by :meth:`matrix`; the
    EQ count cap (at most n-1 equality constraints) is checked there since
    it depends on the state count.
    """

    __slots__ = ("constraints",)

    def __init__(self, constraints=()) -> None:
        items = []
        for c in constraints:
            if isinstance(c, Constraint):
                items.append(c)
            elif isinstance(c, dict):
                items.append(Constraint(c["observable"], c["kind"],
                                        float(c["bound"])))
            else:
                raise ValidationError(
                    "constraints must be Constraint instances or dicts")
        object.__setattr__(self, "constraints", tuple(items))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("ConstraintSet is immutable")

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def matrix(self, market: FiniteMarket):
        """Stack constraint rows against a market.

        Returns (hmat, a, is_eq): hmat[l] is the observable vector of
        constraint l, a[l] its bound, is_eq[l] its kind flag. Validates
        that every id resolves and that #EQ <= n-1.
        """
        m = len(self.constraints)
        hmat = np.zeros((m, market.n))
        a = np.zeros(m)
        is_eq = np.zeros(m, dtype=bool)
        for l, c in enumerate(self.constraints):
            hmat[l] = market.observable(c.observable)
            a[l] = c.bound
            is_eq[l] = c.kind == "eq"
        if int(is_eq.sum()) > market.n - 1:
            raise ValidationError(
                f"at most {market.n - 1} equality constraints allowed "
                f"on an n={market.n} market")
        return hmat, a, is_eq

    def __repr__(self) -> str:
        return f"ConstraintSet({list(self.constraints)!r})"


@dataclass(frozen=True)
class LognormalSpec:
    """Risk-neutral lognormal terminal price S_T = s0 exp(-sigma^2 T/2 +
    sigma sqrt(T) W) to be discretized by Gauss-Hermite quadrature."""

    sigma: float
    T: float
    s0: float = 1.0
    nodes: int = 64

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValidationError("sigma must be positive")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValidationError("T must be positive")
        if not (self.s0 > 0.0 and math.isfinite(self.s0)):
            raise ValidationError("s0 must be positive")
        if int(self.nodes) < 2:
            raise ValidationError("nodes must be >= 2")


@dataclass(frozen=True)
class FeasibilityReport:
    """LP outcome for the density polytope {Z >= 0, E[Z]=1, constraints}.

    max_min_slack is the optimal shared slack s of the strict phase:
    Z_i >= s and every GE constraint holds with margin s (1+|a|);
    strictly_feasible means s > 1e-9.
    """

    feasible: bool
    strictly_feasible: bool
    witness: np.ndarray | None
    max_min_slack: float = 0.0


# -- scenario ingestion ---------------------------------------------------

def _scenario_doc(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"scenario parse error in {path} at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"scenario root must be a JSON object in {path}")
    return doc


def _constraints_from_doc(doc: dict, path: str) -> ConstraintSet:
    raw = doc.get("constraints", [])
    if not isinstance(raw, list):
        raise ScenarioError(f"field 'constraints' must be a list in {path}")
    items = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ScenarioError(
                f"constraints[{i}] must be an object in {path}")
        for key in ("observable", "kind", "bound"):
            if key not in entry:
                raise ScenarioError(
                    f"constraints[{i}] missing field '{key}' in {path}")
        items.append(Constraint(str(entry["observable"]),
                                str(entry["kind"]),
                                float(entry["bound"])))
    return ConstraintSet(items)


def load_scenario(path: str,
                  default_nodes: int = 64) -> tuple[FiniteMarket,
                                                    ConstraintSet]:
    """Read a scenario JSON file into (market, constraints).

    Two forms are accepted. The explicit form lists "probs",
    "observables" (id to n-vector), optional "price_observables"
    (id to initial value), and "constraints". The generator form replaces
    the market fields with {"generator": {"type": "lognormal", "sigma",
    "T", "s0", "nodes"}} and produces the observable "S_T"; when the
    generator omits "nodes", default_nodes is used.

    Raises ScenarioError with line/field context on malformed input and
    ValidationError naming the violated invariant on inconsistent data.
    """
    doc = _scenario_doc(path)
    cset = _constraints_from_doc(doc, path)
    if "generator" in doc:
        gen = doc["generator"]
        if not isinstance(gen, dict) or gen.get("type") != "lognormal":
            raise ScenarioError(
                f"field 'generator.type' must be 'lognormal' in {path}")
        for key in ("sigma", "T"):
            if key not in gen:
                raise ScenarioError(
                    f"generator missing field '{key}' in {path}")
        spec = LognormalSpec(sigma=float(gen["sigma"]), T=float(gen["T"]),
                             s0=float(gen.get("s0", 1.0)),
                             nodes=int(gen.get("nodes", default_nodes)))
        market = gauss_hermite_market(spec)
    else:
        if "probs" not in doc:
            raise ScenarioError(f"field 'probs' is required in {path}")
        observables = doc.get("observables", {})
        if not isinstance(observables, dict):
            raise ScenarioError(
                f"field 'observables' must be an object in {path}")
        prices = doc.get("price_observables", {})
        if not isinstance(prices, dict):
            raise ScenarioError(
                f"field 'price_observables' must be an object in {path}")
        market = FiniteMarket(
            doc["probs"],
            observables={str(k): v for k, v in observables.items()},
            price_observables={str(k): float(v) for k, v in prices.items()})
    for c in cset:
        market.observable(c.observable)
    cset.matrix(market)
    return market, cset


# -- quadrature market ----------------------------------------------------

def gauss_hermite_market(spec: LognormalSpec) -> FiniteMarket:
    """Discretize the lognormal terminal price by Gauss-Hermite quadrature.

    State i carries S_T = s0 exp(-sigma^2 T/2 + sigma sqrt(T) x_i) with
    x_i = sqrt(2) t_i for Hermite abscissa t_i, and weight w_i / sqrt(pi)
    renormalized to sum exactly 1. Nodes whose normalized weight falls
    below 1e-13 are pruned before renormalizing (Hermite tail weights
    decay super-exponentially past ~20 nodes and would violate the
    probability floor; the discarded mass is below 1e-12 and the pruned
    rule retains spectral accuracy). "S_T" is registered as a price
    observable; the martingale check E[S_T] = s0 is enforced at 1e-10
    relative for nodes >= 16 and skipped below (too coarse to price).
    """
    t, w = np.polynomial.hermite.hermgauss(int(spec.nodes))
    p = w / w.sum()
    keep = p >= 1e-13
    t = t[keep]
    p = p[keep]
    p = p / p.sum()
    x = math.sqrt(2.0) * t
    s = spec.s0 * np.exp(-0.5 * spec.sigma ** 2 * spec.T
                         + spec.sigma * math.sqrt(spec.T) * x)
    tol = 1e-10 if int(spec.nodes) >= 16 else math.inf
    return FiniteMarket(p, observables={"S_T": s},
                        price_observables={"S_T": spec.s0}, price_tol=tol)


# -- feasibility ----------------------------------------------------------

def feasibility_check(market: FiniteMarket, cset: ConstraintSet,
                      strict: bool = True) -> FeasibilityReport:
    """Decide (strict) feasibility of the constrained density polytope.

    Plain phase: LP feasibility of {Z >= 0, p.Z = 1, constraints}. Strict
    phase (strict=True): maximize a shared slack s subject to Z_i >= s and
    GE margin >= s (1+|a_l|); strictly feasible iff the optimum exceeds
    1e-9. Equality constraints carry no strictness requirement. The
    returned witness is the strict-phase interior point when one exists,
    else any feasible point.

    Both LPs run in measure coordinates q_i = p_i Z_i, so every variable
    lives in [0, 1]; solving in Z coordinates lets low-probability states
    carry huge Z_i, and at that column scale the solver's relative
    feasibility tolerance can silently break E[Z] = 1.
    """
    p = market.probs
    n = market.n
    hmat, a, is_eq = cset.matrix(market)

    a_ub, b_ub, a_eq_rows, b_eq = [], [], [np.ones(n)], [1.0]
    for l in range(len(cset)):
        if is_eq[l]:
            a_eq_rows.append(hmat[l])
            b_eq.append(a[l])
        else:
            a_ub.append(-hmat[l])
            b_ub.append(-a[l])
    res = linprog(c=np.zeros(n),
                  A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(a_eq_rows), b_eq=np.array(b_eq),
                  bounds=[(0.0, 1.0)] * n, method="highs")
    if not res.success:
        return FeasibilityReport(feasible=False, strictly_feasible=False,
                                 witness=None, max_min_slack=-math.inf)
    witness = np.asarray(res.x, dtype=float) / p
    if not strict:
        return FeasibilityReport(feasible=True, strictly_feasible=False,
                                 witness=witness)

    # variables (q_1..q_n, s); maximize s
    c_obj = np.zeros(n + 1)
    c_obj[-1] = -1.0
    a_ub2, b_ub2 = [], []
    for i in range(n):  # q_i >= p_i s, i.e. Z_i >= s
        row = np.zeros(n + 1)
        row[i] = -1.0
        row[-1] = p[i]
        a_ub2.append(row)
        b_ub2.append(0.0)
    for l in range(len(cset)):
        if is_eq[l]:
            continue
        row = np.zeros(n + 1)
        row[:n] = -hmat[l]
        row[-1] = 1.0 + abs(a[l])
        a_ub2.append(row)
        b_ub2.append(-a[l])
    a_eq2 = [np.append(r, 0.0) for r in a_eq_rows]
    res2 = linprog(c=c_obj, A_ub=np.array(a_ub2), b_ub=np.array(b_ub2),
                   A_eq=np.array(a_eq2), b_eq=np.array(b_eq),
                   bounds=[(0.0, 1.0)] * n + [(None, None)],
                   method="highs")
    if not res2.success:
        # plain phase passed, so this is a numerical failure of the
        # strict phase; report weak feasibility only
        return FeasibilityReport(feasible=True, strictly_feasible=False,
                                 witness=witness)
    slack = float(res2.x[-1])
    if slack > _STRICT_SLACK:
        # the solver may undercut q_i >= p_i s by its absolute row
        # tolerance, which at p_i ~ 1e-13 zeroes a state; lift those
        # entries to the claimed floor, renormalize, and report the
        # slack the repaired witness actually achieves
        q = np.maximum(np.asarray(res2.x[:n], dtype=float), p * slack)
        q = q / q.sum()
        witness = q / p
        achieved = float(witness.min())
        for l in range(len(cset)):
            if not is_eq[l]:
                achieved = min(achieved,
                               (_kernels.kahan_dot(q, hmat[l]) - a[l])
                               / (1.0 + abs(a[l])))
        slack = min(slack, achieved)
        if slack > _STRICT_SLACK:
            return FeasibilityReport(feasible=True, strictly_feasible=True,
                                     witness=witness, max_min_slack=slack)
    return FeasibilityReport(feasible=True, strictly_feasible=False,
                             witness=witness, max_min_slack=slack)


def expectation(market: FiniteMarket, values) -> float:
    """E[values] under the reference measure, by compensated summation in
    fixed state order (deterministic across runs)."""
    v = np.asarray(values, dtype=float)
    if v.shape != (market.n,):
        raise ValidationError(
            f"expectation needs a length-{market.n} vector, got {v.shape}")
    if not np.isfinite(v).all():
        raise ValidationError("non-finite value in expectation")
    return _kernels.kahan_dot(market.probs, v)
