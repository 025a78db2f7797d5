"""Bound-dominance checks shared by the unit and acceptance suites.

Each check draws random feasible points around an anchor and returns
``(worst_violation, tangency_error)``: the largest amount by which the
surrogate falls on the wrong side of its exact function (relative), and the
relative gap at the anchor. Dominance holds when the first is ≤ 0 (up to
roundoff) and tangency when the second is ≤ 1e-9.
"""

import math

import numpy as np

from risxl.power import (
    ScaledModel, bilinear_upper_bound, feasible_init, interference_surrogate, neg_bilinear_upper_bound,
    product_surrogate, qol_lower_bound, surrogate_value,
)


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def scalar_bounds(rng, n=10_000):
    x, y = rng.uniform(0.01, 5, n), rng.uniform(0.01, 5, n)
    x0, y0 = rng.uniform(0.01, 5, n), rng.uniform(0.01, 5, n)
    out = {}
    exact = x**2 / y
    lb = qol_lower_bound(x, y, x0, y0)
    out["quadratic-over-linear"] = (float(np.max((lb - exact) / np.maximum(1, exact))),
                                    float(np.max(_rel(qol_lower_bound(x0, y0, x0, y0), x0**2 / y0))))
    ub = bilinear_upper_bound(x, y, x0, y0)
    out["bilinear"] = (float(np.max((4 * x * y - ub) / np.maximum(1, ub))),
                       float(np.max(_rel(bilinear_upper_bound(x0, y0, x0, y0), 4 * x0 * y0))))
    ub = neg_bilinear_upper_bound(x, y, x0, y0)
    out["negative bilinear"] = (float(np.max((-4 * x * y - ub) / np.maximum(1, np.abs(ub)))),
                                float(np.max(_rel(neg_bilinear_upper_bound(x0, y0, x0, y0), -4 * x0 * y0))))
    return out


def _points(rng, sm, z0, n):
    """Random budget-feasible points (and τ) spread around the anchor."""
    scale = rng.uniform(0.0, 2.0, (n, z0.size)) * z0 + rng.uniform(0, 1, (n, z0.size)) * z0.max()
    used = np.array([sm.power(z) for z in scale])
    fix = np.where(used > 1, 1 / (used if sm.shared else np.sqrt(used)), 1.0)
    return scale * fix[:, None], rng.uniform(0.05, 3.0, n)


def model_bounds(rng, model, P, n=10_000):
    """Interference, product and restricted-constraint bounds of one SINR model."""
    sm = ScaledModel.build(model, P)
    z0 = feasible_init(sm) * rng.uniform(0.5, 1.0, sm.n)
    Z, taus = _points(rng, sm, z0, n)
    T_anchor = sm.sinr(z0)
    worst, tangent = -math.inf, 0.0
    worst_c, tangent_c = -math.inf, 0.0
    for u in range(sm.model.K):
        F = np.array([sm.interference(u, z) for z in Z])
        F0 = sm.interference(u, z0)
        sig = sm.signal(u)
        T_ref = T_anchor[u]
        if sm.shared:
            # T·F(η) ≤ product surrogate, and the restricted constraint implies SINR ≥ T
            G = sm.G[u]
            ub = np.array([product_surrogate(G, z, t, z0, 1.0, T_ref) for z, t in zip(Z, taus)])
            exact = T_ref * taus * F
            worst = max(worst, float(np.max((exact - ub) / np.maximum(1, ub))))
            tangent = max(tangent, float(_rel(product_surrogate(G, z0, 1.0, z0, 1.0, T_ref), T_ref * F0)))
            slack_exact = Z @ sig - exact
            slack_restr = Z @ sig - ub
        else:
            L, g, f0 = interference_surrogate(sm.G[u], z0)
            ub = np.array([surrogate_value(L, g, f0, z) for z in Z])
            worst = max(worst, float(np.max((F - ub) / ub)))
            tangent = max(tangent, float(_rel(surrogate_value(L, g, f0, z0), F0)))
            y0 = float(sig @ z0)
            r0 = y0 / T_ref
            lower = r0 * (2 * (Z @ sig) - r0 * T_ref * taus)
            slack_exact = (Z @ sig) ** 2 / (T_ref * taus) - F
            slack_restr = lower - ub
            anchor_restr = r0 * (2 * y0 - r0 * T_ref) - surrogate_value(L, g, f0, z0)
            tangent_c = max(tangent_c, abs(anchor_restr - (y0**2 / T_ref - F0)) / max(1.0, F0))
        worst_c = max(worst_c, float(np.max((slack_restr - slack_exact) / np.maximum(1, np.abs(slack_exact)))))
    kind = model.scheme
    name = "CZF product" if sm.shared else f"{kind} interference"
    return {name: (worst, tangent), f"{kind} restricted SINR constraint": (worst_c, tangent_c)}
