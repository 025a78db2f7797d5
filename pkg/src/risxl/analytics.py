"""SINR and SE evaluation.

Every precoder reduces to one representation, :class:`SinrModel`: user ``u``
has an amplitude vector ``x_u`` (square roots of its power coefficients), a
nonnegative desired-signal coefficient vector ``a_u`` and, for every user
``v``, a symmetric PSD matrix ``Q[u][v]`` so that::

    SINR_u = p_u (a_u . x_u)^2 / (sum_v p_v x_v^T Q[u][v] x_v + 1)

``Q[u][u]`` is the beam-uncertainty variance (far-field users only). MRT uses
per-subarray amplitudes with closed-form coefficients; CZF uses one shared
amplitude per user; LZF uses per-subarray amplitudes. CZF/LZF coefficients
that involve the random NLoS channel come from an :class:`ExpectationCache`.

A direct Monte-Carlo evaluation of the signal-model definitions
(:func:`oracle_sinr`) is kept independent of all of the above.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channels import ChannelSet, NlosSampler, array_response_ris
from .precoding import (
    PowerAllocation,
    PowerConstants,
    VrAssignment,
    build_precoders,
    subarray_power,
)


class AnalyticsError(ValueError):
    """Inconsistent inputs, e.g. a cache built for different VRs."""


# ---------------------------------------------------------------------------
# containers


@dataclass
class SinrTerms:
    """Received power terms per user (near-field users first).

    ``ui[u, v]`` is the interference power user ``u`` receives from the
    signal intended for ``v``; the diagonal is zero. Standard errors are
    present for Monte-Carlo estimates only.
    """

    n_near: int
    ds: np.ndarray
    bu: np.ndarray
    ui: np.ndarray
    ds_se: Optional[np.ndarray] = None
    bu_se: Optional[np.ndarray] = None
    ui_se: Optional[np.ndarray] = None
    noise: float = 1.0

    @property
    def intra(self) -> np.ndarray:
        K, n = self.ds.shape[0], self.n_near
        same = np.zeros((K, K), bool)
        same[:n, :n] = True
        same[n:, n:] = True
        np.fill_diagonal(same, False)
        return np.sum(np.where(same, self.ui, 0.0), axis=1)

    @property
    def inter(self) -> np.ndarray:
        K, n = self.ds.shape[0], self.n_near
        other = np.zeros((K, K), bool)
        other[:n, n:] = True
        other[n:, :n] = True
        return np.sum(np.where(other, self.ui, 0.0), axis=1)

    @property
    def sinr(self) -> np.ndarray:
        return self.ds / (self.bu + self.ui.sum(axis=1) + self.noise)

    @property
    def near(self) -> np.ndarray:
        return self.sinr[: self.n_near]

    @property
    def far(self) -> np.ndarray:
        return self.sinr[self.n_near :]


@dataclass
class SeReport:
    se_near: np.ndarray
    se_far: np.ndarray
    min_near: float
    min_far: float
    objective: float
    method: str

    def per_user(self) -> np.ndarray:
        return np.concatenate([self.se_near, self.se_far])


def se_report(sinr_near, sinr_far, weights=(0.5, 0.5), method: str = "closed-form") -> SeReport:
    """SE = log2(1 + SINR) and the weighted sum of the per-group minima.

    An empty group contributes zero to the objective.
    """
    se_n = np.log2(1.0 + np.maximum(np.asarray(sinr_near, dtype=float), 0.0))
    se_f = np.log2(1.0 + np.maximum(np.asarray(sinr_far, dtype=float), 0.0))
    min_n = float(se_n.min()) if se_n.size else 0.0
    min_f = float(se_f.min()) if se_f.size else 0.0
    w_n, w_f = weights
    return SeReport(se_n, se_f, min_n, min_f, w_n * min_n + w_f * min_f, method)


def se_from_mins(min_near: float, min_far: float, weights=(0.5, 0.5)) -> float:
    return weights[0] * min_near + weights[1] * min_far


# ---------------------------------------------------------------------------
# generic quadratic SINR model


@dataclass
class SinrModel:
    scheme: str
    n_near: int
    S: int
    p: np.ndarray  # (K,) transmit power scale P_n or P_f
    support: list  # per user: active subarray indices
    shared: bool  # one amplitude per user (CZF)
    a: list  # per user desired coefficients (dim_u,)
    Q: list  # Q[u][v]: (dim_v, dim_v)
    c: list  # per user precoder power constants (dim_u,)

    @property
    def K(self) -> int:
        return len(self.support)

    def dim(self, u: int) -> int:
        return 1 if self.shared else len(self.support[u])

    def amplitudes(self, alloc: PowerAllocation) -> list:
        eta = np.vstack([alloc.near.reshape(-1, self.S), alloc.far.reshape(-1, self.S)])
        out = []
        for u, sup in enumerate(self.support):
            vals = eta[u, list(sup)]
            out.append(np.sqrt(vals[:1]) if self.shared else np.sqrt(vals))
        return out

    def allocation(self, x: Sequence[np.ndarray]) -> PowerAllocation:
        eta = np.zeros((self.K, self.S))
        for u, sup in enumerate(self.support):
            eta[u, list(sup)] = np.asarray(x[u]) ** 2
        return PowerAllocation(self.scheme, eta[: self.n_near], eta[self.n_near :])

    def terms(self, x: Sequence[np.ndarray]) -> SinrTerms:
        K = self.K
        ds, bu, ui = np.zeros(K), np.zeros(K), np.zeros((K, K))
        for u in range(K):
            ds[u] = self.p[u] * float(self.a[u] @ x[u]) ** 2
            for v in range(K):
                val = self.p[v] * float(x[v] @ self.Q[u][v] @ x[v])
                if u == v:
                    bu[u] = val
                else:
                    ui[u, v] = val
        return SinrTerms(self.n_near, ds, bu, ui)

    def sinr(self, x: Sequence[np.ndarray]) -> np.ndarray:
        return self.terms(x).sinr

    def interference(self, u: int, x: Sequence[np.ndarray]) -> float:
        """Exact denominator F_u(x) (noise included)."""
        return 1.0 + sum(self.p[v] * float(x[v] @ self.Q[u][v] @ x[v]) for v in range(self.K))

    def power(self, x: Sequence[np.ndarray]) -> float:
        return float(sum(self.p[u] * np.sum(self.c[u] * np.asarray(x[u]) ** 2) for u in range(self.K)))

    def equal_amplitudes(self, P: float, scale: float = 1.0) -> list:
        """Each user spends P/K, spread with equal η over its active subarrays."""
        out = []
        for u in range(self.K):
            eta = scale * P / (self.K * self.p[u] * np.sum(self.c[u]))
            out.append(np.full(self.dim(u), np.sqrt(eta)))
        return out


def _sym(m: np.ndarray) -> np.ndarray:
    m = np.real(m)
    return 0.5 * (m + m.T)


# ---------------------------------------------------------------------------
# MRT closed forms


def cascade_form(x: np.ndarray, v: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Matrix F[s, s'] = v_s'^H B^{ss'} v_s with B^{ss'} = E{g̃_s' g̃_s^H} for g̃ = H₂^H x.

    ``v`` is a full-length (M,) deterministic precoder. Returns a complex
    Hermitian (S, S) matrix; its real part is the quadratic-form kernel of
    E|sum_s ξ_s g̃_s^H v_s|^2.
    """
    S, Ms = channels.S, channels.M_star
    Hb = channels.H2_los.reshape(-1, S, Ms)  # (N, S, M*)
    vs = v.reshape(S, Ms)
    q = np.einsum("n,nsm,sm->s", x.conj(), Hb, vs)
    F = channels.alpha2**2 * np.outer(q, q.conj())
    F += np.diag(channels.beta2**2 * np.vdot(x, x).real * np.sum(np.abs(vs) ** 2, axis=1))
    return F


def cascade_second_moment(channels: ChannelSet, j: int, s: int, s2: int) -> np.ndarray:
    """Closed form of E{g̃_sj g̃_s'j^H} (M* x M*)."""
    x = channels.ff_vectors()[j]
    Ms = channels.M_star
    Hs = channels.H2_los[:, s * Ms : (s + 1) * Ms]
    Hs2 = channels.H2_los[:, s2 * Ms : (s2 + 1) * Ms]
    out = channels.alpha2**2 * np.outer(Hs.conj().T @ x, x.conj() @ Hs2)
    if s == s2:
        out = out + channels.beta2**2 * np.vdot(x, x).real * np.eye(Ms)
    return out


def fourth_moment_C(channels: ChannelSet, j: int, s: int) -> np.ndarray:
    """C_sj = E{H_s H_s^H M_jj H_s H_s^H} in closed form (N x N)."""
    a2, b2 = channels.alpha2**2, channels.beta2**2
    Ms = channels.M_star
    Hs = channels.H2_los[:, s * Ms : (s + 1) * Ms]
    x = channels.ff_vectors()[j]
    Mjj = np.outer(x, x.conj())
    A = Hs @ Hs.conj().T
    N = A.shape[0]
    trM = np.trace(Mjj)
    trHMH = np.trace(Hs.conj().T @ Mjj @ Hs)
    I = np.eye(N)
    return a2**2 * A @ Mjj @ A + b2 * (
        a2 * Ms * A @ Mjj
        + a2 * trM * A
        + a2 * trHMH * I
        + a2 * Ms * Mjj @ A
        + b2 * Ms**2 * Mjj
        + b2 * Ms * trM * I
    )


@dataclass
class MrtStatistics:
    """All per-subarray closed-form MRT quantities for one phase vector."""

    channels: ChannelSet
    psi_near: np.ndarray  # (K_n, K_n, S) ḡ_sk^H ḡ_si
    xi_tilde: np.ndarray  # (K_n, K_f, S, S)
    psi_tilde: np.ndarray  # (K_f, S)
    a_tilde: np.ndarray  # (K_f, S)
    b_tilde: np.ndarray  # (K_f, K_f, S, S), diagonal pairs unused
    xi_bar: np.ndarray  # (K_f, K_n, S, S)

    @classmethod
    def compute(cls, channels: ChannelSet) -> "MrtStatistics":
        cfg = channels.cfg
        S, Ms, K_n, K_f = cfg.S, cfg.M_star, cfg.K_n, cfg.K_f
        a2, b2 = channels.alpha2**2, channels.beta2**2
        gb = channels.g_near.reshape(K_n, S, Ms)
        psi_near = np.einsum("ksm,ism->kis", gb.conj(), gb)
        X = channels.ff_vectors()
        Hb = channels.H2_los.reshape(-1, S, Ms)
        # A_s = H̄_s H̄_s^H, E_s = α²A_s + β²M* I
        A = np.einsum("nsm,psm->snp", Hb, Hb.conj())
        N = A.shape[1]
        E = a2 * A + b2 * Ms * np.eye(N)[None]
        xi_tilde = np.zeros((K_n, K_f, S, S))
        for k in range(K_n):
            for j in range(K_f):
                xi_tilde[k, j] = _sym(cascade_form(X[j], channels.g_near[k], channels))
        xi_bar = np.zeros((K_f, K_n, S, S))
        for k in range(K_f):
            for i in range(K_n):
                xi_bar[k, i] = _sym(cascade_form(X[k], channels.g_near[i], channels))
        psi_tilde = np.real(np.einsum("kn,snp,kp->ks", X.conj(), E, X))
        b_vec = array_response_ris(*channels.geometry.ris_aoa, cfg.N_1, cfg.N_2)
        a_tilde = np.zeros((K_f, S))
        for k in range(K_f):
            x = X[k]
            hnorm = np.vdot(x, x).real  # ς_k N
            bMb = abs(np.vdot(b_vec, x)) ** 2
            for s in range(S):
                quad = np.vdot(x, A[s] @ x).real
                a_tilde[k, s] = hnorm * a2 * b2 * quad + (a2 * b2 * Ms * bMb + hnorm * b2**2 * Ms) * hnorm
        b_tilde = np.zeros((K_f, K_f, S, S))
        for j in range(K_f):
            Cs = [fourth_moment_C(channels, j, s) for s in range(S)]
            Ex = np.einsum("snp,p->sn", E, X[j])  # E_s x_j
            for k in range(K_f):
                if k == j:
                    continue
                e = X[k].conj() @ Ex.T  # x_k^H E_s x_j per s
                Dm = np.real(np.outer(e, e.conj()))
                for s in range(S):
                    Dm[s, s] = np.vdot(X[k], Cs[s] @ X[k]).real
                b_tilde[k, j] = _sym(Dm)
        return cls(channels, psi_near, xi_tilde, psi_tilde, a_tilde, b_tilde, xi_bar)

    def constants(self) -> PowerConstants:
        c_near = np.real(np.einsum("kks->ks", self.psi_near))
        return PowerConstants(c_near, self.psi_tilde.copy(), np.zeros_like(self.psi_tilde))

    def model(self, vr: VrAssignment) -> SinrModel:
        cfg = self.channels.cfg
        K_n, K_f = cfg.K_n, cfg.K_f
        K = K_n + K_f
        sup = [np.flatnonzero(m) for m in vr.all_masks()]
        c_near = np.real(np.einsum("kks->ks", self.psi_near))
        a, c, Q = [], [], [[None] * K for _ in range(K)]
        for k in range(K_n):
            a.append(c_near[k, sup[k]])
            c.append(c_near[k, sup[k]])
            for v in range(K):
                sv = sup[v]
                if v == k:
                    Q[k][v] = np.zeros((len(sv), len(sv)))
                elif v < K_n:
                    p = self.psi_near[k, v, sv]
                    Q[k][v] = _sym(np.outer(p, p.conj()))
                else:
                    Q[k][v] = self.xi_tilde[k, v - K_n][np.ix_(sv, sv)]
        for k in range(K_f):
            u = K_n + k
            su = sup[u]
            a.append(self.psi_tilde[k, su])
            c.append(self.psi_tilde[k, su])
            for v in range(K):
                sv = sup[v]
                if v == u:
                    Q[u][v] = np.diag(self.a_tilde[k, su])
                elif v < K_n:
                    Q[u][v] = self.xi_bar[k, v][np.ix_(sv, sv)]
                else:
                    Q[u][v] = self.b_tilde[k, v - K_n][np.ix_(sv, sv)]
        p = np.array([cfg.P_n] * K_n + [cfg.P_f] * K_f)
        return SinrModel("MRT", K_n, cfg.S, p, sup, False, a, Q, c)


def mrt_nf_sinr(channels: ChannelSet, vr: VrAssignment, alloc: PowerAllocation,
                stats: Optional[MrtStatistics] = None) -> np.ndarray:
    """Closed-form near-field SINRs under MRT."""
    model = (stats or MrtStatistics.compute(channels)).model(vr)
    return model.sinr(model.amplitudes(alloc))[: model.n_near]


def mrt_ff_sinr(channels: ChannelSet, vr: VrAssignment, alloc: PowerAllocation,
                stats: Optional[MrtStatistics] = None) -> np.ndarray:
    """Closed-form far-field SINRs under MRT."""
    model = (stats or MrtStatistics.compute(channels)).model(vr)
    return model.sinr(model.amplitudes(alloc))[model.n_near :]


# ---------------------------------------------------------------------------
# statistical (Monte-Carlo) expectations for CZF / LZF


def _mean_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, np.full(np.shape(mean), np.inf)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(n)


def _complex_se(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    return np.sqrt(samples.real.var(axis=0, ddof=1) + samples.imag.var(axis=0, ddof=1)) / np.sqrt(n)


@dataclass
class ExpectationCache:
    """Per-draw, per-subarray inner products of one precoder family.

    ``Z[b, k, j, s] = g̃_sk^H w̃_sj``, ``Y[b, k, j, s] = ḡ_sk^H w̃_sj``,
    ``C[b, j, s] = ‖w̃_sj‖²`` for draw ``b``. Near-field precoders are
    deterministic. For MRT and CZF the precoders do not depend on the VRs
    (masking only restricts subarray sums), so ``vr`` is None; LZF caches
    are tied to the VRs they were built with.
    """

    kind: str
    n_samples: int
    W_near: np.ndarray  # (K_n, M)
    Z: np.ndarray
    Y: np.ndarray
    C: np.ndarray
    tbar: np.ndarray  # (K_f, K_n, S, S) real kernels of E|sum g̃^H w̄_i|^2
    vr: Optional[VrAssignment] = None
    seed: object = None

    @property
    def S(self) -> int:
        return self.C.shape[-1]

    def check_vr(self, vr: VrAssignment) -> None:
        if self.vr is None:
            return
        if not (np.array_equal(self.vr.near, vr.near) and np.array_equal(self.vr.far, vr.far)):
            raise AnalyticsError(f"{self.kind} cache was built for different VRs")

    # summary statistics ---------------------------------------------------
    def terms(self, vr: VrAssignment) -> dict:
        """Statistical symbols (value, standard error) restricted to ``vr``.

        Keys: ``r`` (K_n, K_f) and ``eps`` (K_f,) and ``t`` (K_f, K_n) for the
        CZF view; ``tau_tilde`` (K_n, K_f) and ``tau_bar`` (K_f, K_n) lists of
        (S_j x S_j) matrices for the LZF view; ``c_far`` (K_f, S).
        """
        self.check_vr(vr)
        K_f, K_n = self.Z.shape[1], self.Y.shape[1]
        out: dict = {}
        cf, cf_se = _mean_se(self.C)
        out["c_far"] = (cf * vr.far, cf_se * vr.far)
        r = np.zeros((K_n, K_f)), np.zeros((K_n, K_f))
        tau_t = [[None] * K_f for _ in range(K_n)]
        for j in range(K_f):
            sj = vr.far[j]
            for k in range(K_n):
                y = self.Y[:, k, j, sj]
                m, se = _mean_se(np.abs(y.sum(axis=1)) ** 2)
                r[0][k, j], r[1][k, j] = m, se
                tau_t[k][j] = _mean_se(np.real(y[:, :, None] * y[:, None, :].conj()))
        out["r"] = r
        eps = np.zeros(K_f), np.zeros(K_f)
        for k in range(K_f):
            z = self.Z[:, k, k, vr.far[k]].sum(axis=1)
            dev = np.abs(z - z.mean()) ** 2
            m, se = _mean_se(dev)
            eps[0][k], eps[1][k] = m * self.n_samples / max(self.n_samples - 1, 1), se
        out["eps"] = eps
        t = np.zeros((K_f, K_n)), np.zeros((K_f, K_n))
        tau_b = [[None] * K_n for _ in range(K_f)]
        for k in range(K_f):
            for i in range(K_n):
                si = vr.near[i]
                sub = self.tbar[k, i][np.ix_(si, si)]
                t[0][k, i] = sub.sum()
                tau_b[k][i] = (sub, np.zeros_like(sub))
        out["t"] = t
        out["tau_tilde"] = tau_t
        out["tau_bar"] = tau_b
        return out


def _ff_products(g_rows_far: np.ndarray, g_near: np.ndarray, W_far: np.ndarray, S: int):
    B, K_f, M = W_far.shape
    Ms = M // S
    Wr = W_far.reshape(B, K_f, S, Ms)
    Z = np.einsum("bksm,bjsm->bkjs", g_rows_far.reshape(B, -1, S, Ms), Wr)
    Y = np.einsum("ksm,bjsm->bkjs", g_near.conj().reshape(-1, S, Ms), Wr)
    C = np.sum(np.abs(Wr) ** 2, axis=-1)
    return Z, Y, C


def estimate_expectations(
    channels: ChannelSet,
    kind: str,
    vr: Optional[VrAssignment],
    n_mc: int,
    seed=None,
    chunk: int = 500,
) -> ExpectationCache:
    """Monte-Carlo cache of the precoder-channel products for ``kind``.

    ``seed`` fixes the NLoS stream, so caches built with the same seed share
    common random numbers across precoders and phase vectors.
    """
    cfg = channels.cfg
    S, Ms = cfg.S, cfg.M_star
    if kind not in ("MRT", "CZF", "LZF"):
        raise AnalyticsError(f"unknown precoder {kind!r}")
    if kind == "LZF" and vr is None:
        raise AnalyticsError("LZF expectations need the VR assignment")
    full = VrAssignment.full(cfg.K_n, cfg.K_f, S)
    build_vr = vr if kind == "LZF" else full
    sampler = NlosSampler(seed, n_mc, cfg.N, cfg.M, chunk)
    Zs, Ys, Cs = [], [], []
    W_near = None
    for nlos in sampler:
        g_far = channels.cascaded(nlos)  # (b, K_f, M) rows g̃_k^H
        pre = build_precoders(kind, channels.g_near, g_far, build_vr, Ms)
        W_near = pre.near
        Z, Y, C = _ff_products(g_far, channels.g_near, pre.far, S)
        Zs.append(Z)
        Ys.append(Y)
        Cs.append(C)
    X = channels.ff_vectors()
    tbar = np.zeros((cfg.K_f, cfg.K_n, S, S))
    for k in range(cfg.K_f):
        for i in range(cfg.K_n):
            tbar[k, i] = _sym(cascade_form(X[k], W_near[i], channels))
    return ExpectationCache(
        kind=kind,
        n_samples=n_mc,
        W_near=W_near,
        Z=np.concatenate(Zs),
        Y=np.concatenate(Ys),
        C=np.concatenate(Cs),
        tbar=tbar,
        vr=vr if kind == "LZF" else None,
        seed=seed,
    )


def zf_model(channels: ChannelSet, cache: ExpectationCache, vr: VrAssignment) -> SinrModel:
    """Statistical SINR model for CZF (shared amplitudes) or LZF (per subarray)."""
    cache.check_vr(vr)
    cfg = channels.cfg
    K_n, K_f, S, Ms = cfg.K_n, cfg.K_f, cfg.S, cfg.M_star
    K = K_n + K_f
    shared = cache.kind == "CZF"
    sup = [np.flatnonzero(m) for m in vr.all_masks()]
    gb = channels.g_near.reshape(K_n, S, Ms)
    Wn = cache.W_near.reshape(K_n, S, Ms)
    P = np.einsum("ksm,ism->kis", gb.conj(), Wn)  # ḡ_sk^H w̄_si
    c_near = np.sum(np.abs(Wn) ** 2, axis=-1)
    c_far = cache.C.mean(axis=0)
    a, c, Q = [], [], [[None] * K for _ in range(K)]

    def kernel(samples):  # samples (B, d) -> Re E{z z^H} or E|sum z|^2
        if shared:
            return np.array([[np.mean(np.abs(samples.sum(axis=1)) ** 2)]])
        return _sym(np.einsum("bs,bt->st", samples, samples.conj()) / samples.shape[0])

    for k in range(K_n):
        su = sup[k]
        if shared:
            a.append(np.array([abs(P[k, k, su].sum())]))
            c.append(np.array([c_near[k, su].sum()]))
        else:
            a.append(np.ones(len(su)))
            c.append(c_near[k, su])
        for v in range(K):
            sv = sup[v]
            if v == k:
                Q[k][v] = np.zeros((a[-1].size, a[-1].size))
            elif v < K_n:
                p = P[k, v, sv]
                Q[k][v] = np.array([[abs(p.sum()) ** 2]]) if shared else _sym(np.outer(p, p.conj()))
            else:
                Q[k][v] = kernel(cache.Y[:, k, v - K_n, sv])
    for k in range(K_f):
        u = K_n + k
        su = sup[u]
        z_own = cache.Z[:, k, k, su]
        if shared:
            zs = z_own.sum(axis=1)
            m = zs.mean()
            a.append(np.array([abs(m)]))
            c.append(np.array([c_far[k, su].sum()]))
            n = zs.shape[0]
            bu = np.sum(np.abs(zs - m) ** 2) / max(n - 1, 1)
        else:
            a.append(np.ones(len(su)))
            c.append(c_far[k, su])
        for v in range(K):
            sv = sup[v]
            if v == u:
                Q[u][v] = np.array([[bu]]) if shared else np.zeros((len(su), len(su)))
            elif v < K_n:
                sub = cache.tbar[k, v][np.ix_(sv, sv)]
                Q[u][v] = np.array([[sub.sum()]]) if shared else sub
            else:
                Q[u][v] = kernel(cache.Z[:, k, v - K_n, sv])
    p = np.array([cfg.P_n] * K_n + [cfg.P_f] * K_f)
    return SinrModel(cache.kind, K_n, S, p, sup, shared, a, Q, c)


def zf_constants(channels: ChannelSet, cache: ExpectationCache, vr: VrAssignment) -> PowerConstants:
    cfg = channels.cfg
    c_near = subarray_power(cache.W_near, cfg.S) * vr.near
    c_far, se = _mean_se(cache.C)
    return PowerConstants(c_near, c_far * vr.far, se * vr.far)


def czf_sinrs(channels: ChannelSet, vr: VrAssignment, alloc: PowerAllocation, cache: ExpectationCache):
    """(near, far) SINRs of VR-based CZF in statistical form."""
    if cache.kind != "CZF":
        raise AnalyticsError("a CZF cache is required")
    model = zf_model(channels, cache, vr)
    s = model.sinr(model.amplitudes(alloc))
    return s[: model.n_near], s[model.n_near :]


def lzf_sinrs(channels: ChannelSet, vr: VrAssignment, alloc: PowerAllocation, cache: ExpectationCache):
    """(near, far) SINRs of VR-based LZF in statistical form."""
    if cache.kind != "LZF":
        raise AnalyticsError("an LZF cache is required")
    model = zf_model(channels, cache, vr)
    s = model.sinr(model.amplitudes(alloc))
    return s[: model.n_near], s[model.n_near :]


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


def _weighted(W: np.ndarray, eta: np.ndarray, S: int) -> np.ndarray:
    """sum_s sqrt(η_s) D_s w_s as one full-length vector per user."""
    shape = W.shape[:-1] + (S, W.shape[-1] // S)
    return (W.reshape(shape) * np.sqrt(eta)[..., None]).reshape(W.shape)


def oracle_sinr(
    channels: ChannelSet,
    scheme: str,
    vr: VrAssignment,
    alloc: PowerAllocation,
    n_mc: int,
    seed=None,
    chunk: int = 500,
) -> SinrTerms:
    """Average the signal-model definitions over fresh NLoS draws.

    Precoders are rebuilt for every draw; near-field desired and intra-group
    terms are deterministic and computed once.
    """
    cfg = channels.cfg
    S, K_n, K_f = cfg.S, cfg.K_n, cfg.K_f
    K = K_n + K_f
    Pn, Pf = cfg.P_n, cfg.P_f
    sampler = NlosSampler(seed, n_mc, cfg.N, cfg.M, chunk)
    e_own, ui_sum, ui_sq = [], np.zeros((K, K)), np.zeros((K, K))
    for nlos in sampler:
        g_far = channels.cascaded(nlos)  # rows g̃_k^H
        pre = build_precoders(scheme, channels.g_near, g_far, vr, cfg.M_star)
        Vn = _weighted(pre.near, alloc.near, S)  # (K_n, M)
        Vf = _weighted(pre.far, alloc.far[None], S)  # (b, K_f, M)
        # received amplitude of user u's channel against user v's precoder
        nn = channels.g_near.conj() @ Vn.T * np.sqrt(Pn)  # (K_n, K_n)
        nf = np.einsum("km,bjm->bkj", channels.g_near.conj(), Vf) * np.sqrt(Pf)  # (b, K_n, K_f)
        fn = np.einsum("bkm,im->bki", g_far, Vn) * np.sqrt(Pn)  # (b, K_f, K_n)
        ff = np.einsum("bkm,bjm->bkj", g_far, Vf) * np.sqrt(Pf)  # (b, K_f, K_f)
        blk = np.zeros((g_far.shape[0], K, K), complex)
        blk[:, :K_n, :K_n] = nn[None]
        blk[:, :K_n, K_n:] = nf
        blk[:, K_n:, :K_n] = fn
        blk[:, K_n:, K_n:] = ff
        p2 = np.abs(blk) ** 2
        ui_sum += p2.sum(axis=0)
        ui_sq += (p2**2).sum(axis=0)
        e_own.append(np.einsum("bkk->bk", blk))
    e_own = np.concatenate(e_own)  # (n, K)
    n = e_own.shape[0]
    ui = ui_sum / n
    ui_se = np.sqrt(np.maximum(ui_sq / n - ui**2, 0.0) * n / max(n - 1, 1) / n)
    mean_e = e_own.mean(axis=0)
    se_e = _complex_se(e_own) if n > 1 else np.zeros(K)
    ds = np.abs(mean_e) ** 2
    ds_se = 2 * np.abs(mean_e) * se_e
    dev = np.abs(e_own - mean_e) ** 2
    bu = dev.sum(axis=0) / max(n - 1, 1)
    bu_se = dev.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(K)
    # near-field users: no expectation in the desired term, no beam uncertainty
    bu[:K_n] = 0.0
    bu_se[:K_n] = 0.0
    ds_se[:K_n] = 0.0
    np.fill_diagonal(ui, 0.0)
    np.fill_diagonal(ui_se, 0.0)
    ui_se[:K_n, :K_n] = 0.0
    return SinrTerms(K_n, ds, bu, ui, ds_se, bu_se, ui_se)


def model_terms(model: SinrModel, alloc: PowerAllocation) -> SinrTerms:
    return model.terms(model.amplitudes(alloc))


def dump_terms_csv(terms: SinrTerms, path) -> None:
    """Per-user term dump (debugging aid)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "group", "ds", "bu", "intra", "inter", "sinr"])
        for u in range(terms.ds.shape[0]):
            group = "near" if u < terms.n_near else "far"
            w.writerow([u, group, repr(float(terms.ds[u])), repr(float(terms.bu[u])),
                        repr(float(terms.intra[u])), repr(float(terms.inter[u])), repr(float(terms.sinr[u]))])


def term_agreement(model: SinrTerms, oracle: SinrTerms, rel: float = 0.02, n_se: float = 3.0,
                   atol: float = 1e-9) -> dict:
    """Worst ratio |model − oracle| / max(rel·|oracle|, n_se·SE, atol·DS) per term family.

    Values ≤ 1 mean every entry agrees within the tolerance. ``atol`` is
    relative to the user's desired power and absorbs roundoff in terms that
    zero-forcing cancels. Entries that are zero in both are skipped.
    """
    out = {}
    floor = atol * np.abs(oracle.ds)
    for name in ("ds", "bu", "ui"):
        a, b = getattr(model, name), getattr(oracle, name)
        se = getattr(oracle, f"{name}_se")
        se = np.zeros_like(b) if se is None else se
        fl = floor if b.ndim == 1 else floor[:, None]
        tol = np.maximum(np.maximum(rel * np.abs(b), n_se * se), fl)
        active = (np.abs(a) > 0) | (np.abs(b) > 0)
        if not active.any():
            out[name] = 0.0
            continue
        ratio = np.abs(a - b)[active] / np.where(tol[active] > 0, tol[active], np.inf)
        ratio = np.where(np.isnan(ratio), np.inf, ratio)
        out[name] = float(ratio.max())
    return out
