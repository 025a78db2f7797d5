"""Max-min power control by successive convex approximation.

All three precoders share the quadratic SINR form of :class:`SinrModel`.
MRT and LZF optimize per-subarray amplitudes ``x = sqrt(η)``; CZF optimizes
one power ``η`` per user. Internally the variables are scaled so that the
power budget reads ``≤ 1``: ``x_u = σ_u z_u`` (``η_u = σ_u² e_u`` for CZF)
with ``σ_u² = P / (p_u Σ_s c_us)``, and each group target ``T = T_ref τ``
is measured against the anchor value ``T_ref``.

Per iteration the nonconvex SINR constraints are replaced by convex
restrictions that are tangent at the anchor:

* the quadratic-over-linear desired term is bounded below by its
  linearization, ``x²/y ≥ (x0/y0)(2x − (x0/y0) y)``;
* every bilinear interference product ``4xy`` is bounded above by
  ``(x+y)² − 2(x0−y0)(x−y) + (x0−y0)²`` (and ``−4xy`` by
  ``(x−y)² − 2(x0+y0)(x+y) + (x0+y0)²`` for negative coefficients);
* CZF uses the same bound on the products ``η_v T``.

The coupling ``T ≥ 2^t − 1`` is an exponential-cone constraint.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import conic
from .analytics import SeReport, SinrModel, se_report
from .precoding import PowerAllocation

LN2 = math.log(2.0)


class PowerControlError(RuntimeError):
    """Invalid anchors, zero power constants or solver failures."""


# ---------------------------------------------------------------------------
# scalar bounds


def qol_lower_bound(x, y, x0, y0):
    """Tangent lower bound of the quadratic-over-linear function x²/y (y > 0)."""
    r = np.asarray(x0) / np.asarray(y0)
    return r * (2 * np.asarray(x) - r * np.asarray(y))


def bilinear_upper_bound(x, y, x0, y0):
    """Convex upper bound of 4xy, tangent at (x0, y0)."""
    x, y, x0, y0 = map(np.asarray, (x, y, x0, y0))
    return (x + y) ** 2 - 2 * (x0 - y0) * (x - y) + (x0 - y0) ** 2


def neg_bilinear_upper_bound(x, y, x0, y0):
    """Convex upper bound of −4xy, tangent at (x0, y0)."""
    x, y, x0, y0 = map(np.asarray, (x, y, x0, y0))
    return (x - y) ** 2 - 2 * (x0 + y0) * (x + y) + (x0 + y0) ** 2


# ---------------------------------------------------------------------------
# scaled problem data


@dataclass
class ScaledModel:
    """A :class:`SinrModel` in budget-normalized coordinates."""

    model: SinrModel
    P: float
    sigma: np.ndarray  # (K,) amplitude (or power, CZF) scale per user
    offsets: np.ndarray  # start of each user's block in the flat vector
    dims: np.ndarray
    G: list  # per user u: (n, n) PSD interference kernel on the flat vector
    power_w: np.ndarray  # budget weights: Σ power_w * z² ≤ 1 (or Σ power_w * e ≤ 1)

    @classmethod
    def build(cls, model: SinrModel, P: float) -> "ScaledModel":
        K = model.K
        dims = np.array([model.dim(u) for u in range(K)])
        offsets = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(int)
        tot = np.array([float(np.sum(model.c[u])) for u in range(K)])
        if np.any(~(tot > 0)):
            raise PowerControlError("a user has zero precoder power on its VR")
        sigma = np.sqrt(P / (model.p * tot))
        n = int(dims.sum())
        w = np.zeros(n)
        for u in range(K):
            w[offsets[u] : offsets[u] + dims[u]] = np.asarray(model.c[u]) / tot[u]
        G = []
        for u in range(K):
            Gu = np.zeros((n, n))
            for v in range(K):
                sl = slice(offsets[v], offsets[v] + dims[v])
                Gu[sl, sl] = model.p[v] * sigma[v] ** 2 * np.asarray(model.Q[u][v])
            G.append(Gu)
        return cls(model, P, sigma, offsets, dims, G, w)

    @property
    def n(self) -> int:
        return int(self.dims.sum())

    @property
    def shared(self) -> bool:
        return self.model.shared

    def block(self, z: np.ndarray, u: int) -> np.ndarray:
        return z[self.offsets[u] : self.offsets[u] + self.dims[u]]

    def signal(self, u: int) -> np.ndarray:
        """Flat-vector coefficients of sqrt(p_u)·a_u·x_u (amplitude mode)
        or p_u a_u² η_u (CZF power mode)."""
        m = self.model
        g = np.zeros(self.n)
        sl = slice(self.offsets[u], self.offsets[u] + self.dims[u])
        if self.shared:
            g[sl] = m.p[u] * np.asarray(m.a[u]) ** 2 * self.sigma[u] ** 2
        else:
            g[sl] = math.sqrt(m.p[u]) * np.asarray(m.a[u]) * self.sigma[u]
        return g

    # conversions ----------------------------------------------------------
    def to_amplitudes(self, z: np.ndarray) -> list:
        out = []
        for u in range(self.model.K):
            zu = np.maximum(self.block(z, u), 0.0)
            out.append(np.sqrt(zu) * self.sigma[u] if self.shared else zu * self.sigma[u])
        return out

    def from_amplitudes(self, x: Sequence[np.ndarray]) -> np.ndarray:
        z = np.zeros(self.n)
        for u in range(self.model.K):
            xu = np.asarray(x[u], dtype=float)
            val = xu**2 / self.sigma[u] ** 2 if self.shared else xu / self.sigma[u]
            z[self.offsets[u] : self.offsets[u] + self.dims[u]] = val
        return z

    # exact functions -------------------------------------------------------
    def interference(self, u: int, z: np.ndarray) -> float:
        """F_u (noise included) at the flat point ``z``."""
        if self.shared:
            return 1.0 + float(np.sum(np.diag(self.G[u]) * z))
        return 1.0 + float(z @ self.G[u] @ z)

    def sinr(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(self.model.K)
        for u in range(self.model.K):
            g = self.signal(u)
            num = float(g @ z) if self.shared else float(g @ z) ** 2
            out[u] = num / self.interference(u, z)
        return out

    def power(self, z: np.ndarray) -> float:
        """Budget usage as a fraction of P."""
        return float(self.power_w @ z) if self.shared else float(self.power_w @ z**2)

    def objective(self, z: np.ndarray, weights) -> float:
        s = self.sinr(z)
        n = self.model.n_near
        rep = se_report(s[:n], s[n:], weights)
        return rep.objective


# ---------------------------------------------------------------------------
# convex surrogates (shared by numeric evaluation and program assembly)


def interference_surrogate(G: np.ndarray, z0: np.ndarray):
    """F^ub(z) = 1 + ‖L z‖² + g·z + f0 bounding 1 + zᵀGz, tangent at ``z0``.

    Diagonal terms are kept exactly; each off-diagonal product uses the
    bilinear bound on the side its sign requires.
    """
    n = G.shape[0]
    rows, g, f0 = [], np.zeros(n), 0.0
    for i in range(n):
        if G[i, i] > 0:
            r = np.zeros(n)
            r[i] = math.sqrt(G[i, i])
            rows.append(r)
    iu, ju = np.triu_indices(n, 1)
    for i, j in zip(iu, ju):
        gij = G[i, j]
        if gij == 0:
            continue
        # 2 G_ij z_i z_j = (|G_ij| / 2) * (±4 z_i z_j)
        w = abs(gij) / 2
        sgn = 1.0 if gij > 0 else -1.0
        r = np.zeros(n)
        r[i], r[j] = math.sqrt(w), sgn * math.sqrt(w)
        rows.append(r)
        d0 = z0[i] - sgn * z0[j]
        g[i] += -2 * w * d0
        g[j] += 2 * w * sgn * d0
        f0 += w * d0**2
    L = np.array(rows).reshape(-1, n)
    return L, g, f0


def surrogate_value(L: np.ndarray, g: np.ndarray, f0: float, z: np.ndarray) -> float:
    return 1.0 + float(np.sum((L @ z) ** 2)) + float(g @ z) + f0


def product_surrogate(G: np.ndarray, e: np.ndarray, tau: float, e0: np.ndarray, tau0: float, T_ref: float) -> float:
    """Upper bound of T·F(η) in scaled CZF coordinates (T = T_ref τ)."""
    q = np.diag(G)
    prod = 0.25 * bilinear_upper_bound(e, tau, e0, tau0)
    return T_ref * tau + T_ref * float(np.sum(q * prod))


# ---------------------------------------------------------------------------
# subproblem


@dataclass
class ScaState:
    """Anchor of one SCA iteration."""

    z: np.ndarray
    T: np.ndarray  # (2,) group anchors (near, far); zero for empty groups
    floors: np.ndarray  # per-user SINR floors (0 = none)


@dataclass
class SubproblemSpec:
    program: conic.ConicProgram
    state: ScaState
    builder_sense: float
    groups: list  # per group: list of users


def _groups(model: SinrModel) -> list:
    n = model.n_near
    return [list(range(n)), list(range(n, model.K))]


def build_subproblem(sm: ScaledModel, state: ScaState, weights) -> SubproblemSpec:
    """Assemble the convex restriction around ``state``."""
    n = sm.n
    groups = _groups(sm.model)
    b = conic.ProgramBuilder()
    z = b.var("z", n)
    t = b.var("t", 2)
    tau = b.var("tau", 2)
    b.add_nonneg(z)
    if sm.shared:
        b.add_nonneg(1.0 - z.dot(sm.power_w))
    else:
        b.add_sum_squares_le(z * np.sqrt(sm.power_w), conic.AffineExpr.constant(1.0))
    objective = conic.AffineExpr.constant(0.0)
    z0 = state.z
    for gi, users in enumerate(groups):
        if not users:
            b.add_zero(t[gi])
            b.add_zero(tau[gi])
            continue
        T_ref = float(state.T[gi])
        if not T_ref > 0:
            raise PowerControlError("nonpositive anchor T")
        b.add_nonneg(tau[gi])
        # T = T_ref τ ≥ 2^t − 1, written relative to the anchor value 1 + T_ref
        b.add_exp(t[gi] * LN2 - math.log1p(T_ref), conic.AffineExpr.constant(1.0),
                  (tau[gi] * T_ref + 1.0) / (1.0 + T_ref))
        objective = objective + t[gi] * float(weights[gi])
        for u in users:
            sig = sm.signal(u)
            f_anchor = sm.interference(u, z0)
            if sm.shared:
                # p a² η_u ≥ T F_u(η), RHS bounded through the η_v T products
                q = np.diag(sm.G[u])
                lhs = z.dot(sig)
                rows, lin, const = [], np.zeros(n), 0.0
                tau_lin = 1.0
                for v in np.flatnonzero(q > 0):
                    w = T_ref * q[v] / 4
                    d0 = z0[v] - 1.0
                    r = np.zeros(n + 1)
                    r[v], r[n] = math.sqrt(w), math.sqrt(w)
                    rows.append(r)
                    lin[v] += -2 * w * d0
                    tau_lin += 2 * w * d0 / T_ref
                    const += w * d0**2
                scale = T_ref * f_anchor
                bound = (lhs - z.dot(lin) - tau[gi] * (T_ref * tau_lin) - const) / scale
                if rows:
                    Lz = np.array(rows)
                    terms = conic.AffineExpr(Lz[:, :n], np.zeros(len(rows)))
                    terms = terms + _tau_column(Lz[:, n], tau[gi])
                    b.add_sum_squares_le(terms / math.sqrt(scale), bound)
                else:
                    b.add_nonneg(bound)
            else:
                y0 = float(sig @ z0)
                if not y0 > 0:
                    raise PowerControlError("anchor desired signal is zero")
                r0 = y0 / T_ref  # anchor ratio with τ0 = 1
                L, g, f0 = interference_surrogate(sm.G[u], z0)
                lower = (z.dot(sig) * 2.0 - tau[gi] * (r0 * T_ref)) * r0
                bound = (lower - 1.0 - z.dot(g) - f0) / f_anchor
                if L.shape[0]:
                    b.add_sum_squares_le(conic.AffineExpr(L, np.zeros(L.shape[0])) / math.sqrt(f_anchor), bound)
                else:
                    b.add_nonneg(bound)
            floor = float(state.floors[u])
            if floor > 0:
                _add_floor(b, sm, z, u, floor)
    b.maximize(objective)
    return SubproblemSpec(b.build(), state, b.sense, groups)


def _tau_column(coef: np.ndarray, tau: conic.AffineExpr) -> conic.AffineExpr:
    return conic.AffineExpr(np.outer(coef, tau.coef[0]), np.zeros(coef.size))


def _add_floor(b: conic.ProgramBuilder, sm: ScaledModel, z: conic.AffineExpr, u: int, gamma: float) -> None:
    """Exact convex constraint SINR_u ≥ γ."""
    sig = sm.signal(u)
    if sm.shared:
        q = np.diag(sm.G[u])
        b.add_nonneg((z.dot(sig) - z.dot(q) * gamma - gamma) / max(gamma, 1.0))
        return
    w, V = np.linalg.eigh(sm.G[u])
    keep = w > 1e-14 * max(1.0, w.max(initial=0.0))
    M = (V[:, keep] * np.sqrt(w[keep])).T
    head = z.dot(sig) / math.sqrt(gamma)
    tail = conic.vstack([conic.AffineExpr.constant(1.0), conic.AffineExpr(M, np.zeros(M.shape[0]))]) if M.size \
        else conic.AffineExpr.constant(1.0)
    b.add_soc(head, tail)


def build_mrt_subproblem(sm: ScaledModel, state: ScaState, weights) -> SubproblemSpec:
    if sm.model.scheme != "MRT":
        raise PowerControlError("expected an MRT model")
    return build_subproblem(sm, state, weights)


def build_czf_subproblem(sm: ScaledModel, state: ScaState, weights) -> SubproblemSpec:
    if sm.model.scheme != "CZF":
        raise PowerControlError("expected a CZF model")
    return build_subproblem(sm, state, weights)


def build_lzf_subproblem(sm: ScaledModel, state: ScaState, weights) -> SubproblemSpec:
    if sm.model.scheme != "LZF":
        raise PowerControlError("expected an LZF model")
    return build_subproblem(sm, state, weights)


# ---------------------------------------------------------------------------
# driver


@dataclass
class ScaResult:
    alloc: PowerAllocation
    amplitudes: list
    report: SeReport
    sinr: np.ndarray
    iterations: int
    converged: bool
    declared_T: np.ndarray  # (2,) targets certified by the last accepted subproblem
    power_fraction: float
    qos_violation: float  # max over users of (γ − SINR)/γ, 0 when met
    qos_met: bool
    trace: list = field(default_factory=list)
    stop_reason: str = ""


def feasible_init(sm: ScaledModel, scale: float = 0.9) -> np.ndarray:
    """Equal-power point using a fraction ``scale`` of the budget."""
    return sm.from_amplitudes(sm.model.equal_amplitudes(sm.P, scale))


def _group_T(sm: ScaledModel, z: np.ndarray) -> np.ndarray:
    s = sm.sinr(z)
    return np.array([float(s[g].min()) if g else 0.0 for g in _groups(sm.model)])


def objective_upper_bound(model: SinrModel, P: float, weights) -> float:
    """(w_n + w_f)·log2(1 + max_u P Σ_s a_us² / c_us), a bound no allocation can exceed."""
    caps = [P * float(np.sum(np.asarray(model.a[u]) ** 2 / np.asarray(model.c[u]))) for u in range(model.K)]
    return float((weights[0] + weights[1]) * math.log2(1 + max(caps)))


def sca_solve(
    model: SinrModel,
    P: float,
    weights=(0.5, 0.5),
    qos: Optional[np.ndarray] = None,
    eps: float = 1e-3,
    max_iter: int = 30,
    x0: Optional[Sequence[np.ndarray]] = None,
    backend: str = "clarabel",
) -> ScaResult:
    """Successive convex approximation of the weighted max-min SE problem.

    ``qos`` holds per-user SE floors in bit/s/Hz (near-field first). Floors
    that the current iterate does not meet are relaxed to its SINR, so each
    subproblem stays feasible; the final violation is reported.
    """
    sm = ScaledModel.build(model, P)
    gamma = np.zeros(model.K) if qos is None else 2.0 ** np.asarray(qos, dtype=float) - 1.0
    if x0 is not None:
        z = sm.from_amplitudes(x0)
    else:
        z = feasible_init(sm)
        if np.any(sm.sinr(z) < gamma):
            # floors taken from the full-budget equal split need the whole budget
            z = feasible_init(sm, 1.0)
    obj = sm.objective(z, weights)
    cap = objective_upper_bound(model, P, weights)
    trace = [_trace_row(sm, 0, z, obj, _group_T(sm, z), gamma)]
    declared = _group_T(sm, z)
    converged, reason, it = False, "max-iter", 0
    for it in range(1, max_iter + 1):
        T = _group_T(sm, z)
        floors = np.minimum(gamma, sm.sinr(z))
        spec = build_subproblem(sm, ScaState(z.copy(), T, floors), weights)
        res = conic.solve(spec.program, backend)
        inexact = not res.ok
        if inexact and not (res.primal_residual <= 1e-6 and np.all(np.isfinite(res.x))):
            reason = f"solver-{res.status}"
            it -= 1
            break
        z_new = np.maximum(res.x[spec.program.variables["z"]], 0.0)
        used = sm.power(z_new)
        if used > 1.0:
            z_new = z_new / used if sm.shared else z_new / math.sqrt(used)
        obj_new = sm.objective(z_new, weights)
        if obj_new > cap + 1e-9:
            raise PowerControlError("objective exceeds its analytic upper bound")
        if obj_new < obj - 1e-12 * max(1.0, abs(obj)):
            # a drop at solver precision means the anchor already solves the restriction
            stationary = obj - obj_new <= 1e-7 * max(1.0, abs(obj))
            converged, reason = stationary, "stationary" if stationary else "no-improvement"
            it -= 1
            break
        tau = res.x[spec.program.variables["tau"]]
        declared = T * tau
        if inexact:
            # a primal point without optimality certificate only certifies what it achieves
            declared = np.minimum(declared, _group_T(sm, z_new))
        gain = (obj_new - obj) / max(abs(obj), 1e-12)
        z, obj = z_new, obj_new
        trace.append(_trace_row(sm, it, z, obj, declared, gamma))
        if gain < eps:
            converged, reason = True, "tolerance"
            break
    x = sm.to_amplitudes(z)
    s = sm.sinr(z)
    n = model.n_near
    viol = np.where(gamma > 0, (gamma - s) / np.where(gamma > 0, gamma, 1.0), 0.0)
    max_viol = float(max(0.0, viol.max(initial=0.0)))
    return ScaResult(
        alloc=model.allocation(x),
        amplitudes=x,
        report=se_report(s[:n], s[n:], weights, method="closed-form" if model.scheme == "MRT" else "statistical"),
        sinr=s,
        iterations=it,
        converged=converged,
        declared_T=declared,
        power_fraction=sm.power(z),
        qos_violation=max_viol,
        qos_met=max_viol <= 1e-6,
        trace=trace,
        stop_reason=reason,
    )


def _trace_row(sm: ScaledModel, it: int, z: np.ndarray, obj: float, T: np.ndarray, gamma: np.ndarray) -> dict:
    s = sm.sinr(z)
    viol = float(np.max(np.where(gamma > 0, gamma - s, 0.0), initial=0.0))
    return {
        "iter": it,
        "objective": obj,
        "t_near": math.log2(1 + max(T[0], 0.0)),
        "t_far": math.log2(1 + max(T[1], 0.0)),
        "power_margin": 1.0 - sm.power(z),
        "max_violation": max(viol, 0.0),
    }


def dump_trace_csv(result: ScaResult, path) -> None:
    cols = ["iter", "objective", "t_near", "t_far", "power_margin", "max_violation"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in result.trace:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# ---------------------------------------------------------------------------
# exp-cone-free fallback


def target_margin(sm: ScaledModel, targets: np.ndarray, backend: str = "admm") -> tuple[float, np.ndarray]:
    """Largest normalized margin μ ≤ 1 with SINR_u ≥ targets[u] at budget ≤ 1.

    ``targets`` holds one SINR target per user. The program is always
    feasible; the targets are achievable iff μ ≥ 0. Only nonnegative,
    second-order and zero cones are used.
    """
    n = sm.n
    b = conic.ProgramBuilder()
    z = b.var("z", n)
    mu = b.var("mu")
    b.add_nonneg(z)
    b.add_nonneg(1.0 - mu)
    if sm.shared:
        b.add_nonneg(1.0 - z.dot(sm.power_w))
    else:
        b.add_sum_squares_le(z * np.sqrt(sm.power_w), conic.AffineExpr.constant(1.0))
    for u in range(sm.model.K):
        T = float(targets[u])
        if T <= 0:
            continue
        sig = sm.signal(u)
        if sm.shared:
            q = np.diag(sm.G[u])
            b.add_nonneg(z.dot(sig) / T - z.dot(q) - 1.0 - mu)
        else:
            w, V = np.linalg.eigh(sm.G[u])
            keep = w > 1e-14 * max(1.0, w.max(initial=0.0))
            M = (V[:, keep] * np.sqrt(w[keep])).T
            tail = conic.vstack([conic.AffineExpr.constant(1.0), conic.AffineExpr(M, np.zeros(M.shape[0]))]) \
                if M.size else conic.AffineExpr.constant(1.0)
            b.add_soc(z.dot(sig) / math.sqrt(T) - mu, tail)
    b.maximize(mu)
    program = b.build()
    res = conic.solve(program, backend)
    if res.status not in ("optimal", "near-optimal", "cap-reached"):
        raise PowerControlError(f"margin program failed: {res.status}")
    return float(res.x[program.variables["mu"]][0]), np.maximum(res.x[program.variables["z"]], 0.0)


def bisection_solve(
    model: SinrModel,
    P: float,
    weights=(0.5, 0.5),
    qos: Optional[np.ndarray] = None,
    tol: float = 1e-3,
    backend: str = "admm",
) -> tuple[float, np.ndarray, list]:
    """Search over SE targets without exponential cones.

    For a fixed near-field target the largest feasible far-field target is
    found by bisection on the SE scale; the near-field target is chosen by
    golden-section search. Per-user ``qos`` floors (bit/s/Hz) are added to
    every feasibility test. Returns (objective, SINRs, amplitudes).
    """
    sm = ScaledModel.build(model, P)
    groups = _groups(model)
    gamma = np.zeros(model.K) if qos is None else 2.0 ** np.asarray(qos, dtype=float) - 1.0
    group_of = np.array([0] * model.n_near + [1] * (model.K - model.n_near))
    caps = [P * float(np.sum(np.asarray(model.a[u]) ** 2 / np.asarray(model.c[u]))) for u in range(model.K)]
    se_cap = [math.log2(1 + max((caps[u] for u in g), default=0.0)) for g in groups]

    def feasible(se_n: float, se_f: float):
        T = np.array([2**se_n - 1, 2**se_f - 1])[group_of]
        mu, z = target_margin(sm, np.maximum(T, gamma), backend)
        return mu >= -1e-7, z

    def best_far(se_n: float):
        if not groups[1]:
            ok, z = feasible(se_n, 0.0)
            return (0.0 if ok else -1.0), z
        lo, hi = 0.0, se_cap[1]
        ok, z_lo = feasible(se_n, lo)
        if not ok:
            return -1.0, z_lo
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            ok, z = feasible(se_n, mid)
            if ok:
                lo, z_lo = mid, z
            else:
                hi = mid
        return lo, z_lo

    def value(se_n: float):
        far, z = best_far(se_n)
        if far < 0:
            return -math.inf, z
        return weights[0] * se_n + weights[1] * far, z

    if not groups[0] or weights[0] == 0:
        v, z = value(0.0)
    else:
        # highest achievable near-field target bounds the search interval
        lo, hi = 0.0, se_cap[0]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if feasible(mid, 0.0)[0]:
                lo = mid
            else:
                hi = mid
        a, c = 0.0, lo
        gr = (math.sqrt(5) - 1) / 2
        x1, x2 = c - gr * (c - a), a + gr * (c - a)
        f1, f2 = value(x1)[0], value(x2)[0]
        while c - a > tol:
            if f1 < f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + gr * (c - a)
                f2 = value(x2)[0]
            else:
                c, x2, f2 = x2, x1, f1
                x1 = c - gr * (c - a)
                f1 = value(x1)[0]
        v, z = value(0.5 * (a + c))
    x = sm.to_amplitudes(z)
    return float(sm.objective(z, weights)), sm.sinr(z), x
