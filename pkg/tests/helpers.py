"""Shared test utilities: random instance generation and lognormal anchors."""
import math

import numpy as np

from robustutil.market import (Constraint, ConstraintSet, FiniteMarket,
                               feasibility_check)

# lognormal anchor instance: sigma=0.5, T=1, A=1.1, x=1, Power(1/2)
E_SIG = math.exp(0.25)
K_CONST = 1.0 + (1.1 - 1.0) ** 2 / (E_SIG - 1.0)
U_STAR = 2.0 * math.sqrt(K_CONST)
Y_STAR = math.sqrt(K_CONST)


def random_feasible_instance(rng, n, m):
    """Strictly feasible (market, constraints) with n states, m constraints.

    Probabilities are Dirichlet(2) draws (floored at 1e-6 by rejection),
    observables standard normal. Bounds: 80% GE at mean + 0.3 span U(0,1)
    (binding with positive probability), 20% EQ at mean +- 0.05 span.
    Rejection-samples until the strict LP phase certifies an interior
    witness.
    """
    while True:
        p = rng.dirichlet(np.full(n, 2.0))
        if p.min() < 1e-6:
            continue
        obs = {}
        cons = []
        degenerate = False
        for l in range(m):
            h = rng.normal(0.0, 1.0, n)
            mean = float(p @ h)
            span = float(h.max() - h.min())
            if span < 1e-6:
                degenerate = True
                break
            if rng.random() < 0.8:
                kind, a = "ge", mean + 0.3 * span * rng.random()
            else:
                kind, a = "eq", mean + 0.05 * span * (2.0 * rng.random() - 1.0)
            obs[f"h{l}"] = h
            cons.append(Constraint(f"h{l}", kind, a))
        if degenerate:
            continue
        market = FiniteMarket(p, observables=obs)
        cset = ConstraintSet(cons)
        if feasibility_check(market, cset, strict=True).strictly_feasible:
            return market, cset


def random_density(rng, market, scale=1.0):
    """Strictly positive density: normalized lognormal draw."""
    z = np.exp(scale * rng.normal(0.0, 1.0, market.n))
    return z / float(market.probs @ z)
