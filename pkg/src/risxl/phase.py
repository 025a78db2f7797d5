"""RIS phase design: max-min far-field channel gain via a rank-one penalized SDP.

The complex Hermitian variable ``V`` (``V ≈ v v^H`` with ``v = e^{-jθ}``) is
carried as real parameters: the strict upper triangles of ``Re V`` and
``Im V``; the unit diagonal is substituted, so it holds exactly at every
iterate. Positive semidefiniteness is imposed on the real embedding
``[[Re V, -Im V], [Im V, Re V]]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import conic
from .channels import ChannelSet, array_response_ris, random_phases
from .precoding import VrAssignment

__all__ = [
    "PhaseError",
    "PhaseProblem",
    "PhaseSolution",
    "build_Rk",
    "phase_problem",
    "solve_inner",
    "run_penalty",
    "heuristic_phases",
    "random_phases",
    "channel_gains",
    "phases_from_matrix",
    "dump_trace_csv",
]


class PhaseError(RuntimeError):
    """Solver failure inside the penalty loop."""

    def __init__(self, message: str, iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.iterate = iterate


def build_Rk(channels: ChannelSet, k: int, mask: np.ndarray) -> np.ndarray:
    """R_k = diag(h_k)^H A_k diag(h_k) with A_k the masked second moment of H₂.

    ``mask`` is the (S,) subarray mask of far-field user ``k``; then
    E‖D_k^H H₂^H Θ^H h_k‖² = v^H R_k v for v = e^{-jθ}.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise PhaseError("far-field user has an empty VR")
    cfg = channels.cfg
    cols = np.repeat(mask, cfg.M_star)
    Hm = channels.H2_los[:, cols]
    A = channels.alpha2**2 * Hm @ Hm.conj().T + channels.beta2**2 * cols.sum() * np.eye(cfg.N)
    h = channels.h[k]
    R = h.conj()[:, None] * A * h[None, :]
    return 0.5 * (R + R.conj().T)


def channel_gains(R: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """v^H R_k v for every k, with v = e^{-jθ}."""
    v = np.exp(-1j * np.asarray(theta, dtype=float))
    return np.real(np.einsum("n,knm,m->k", v.conj(), R, v))


@dataclass
class PhaseProblem:
    """Max-min of v^H R_k v over unit-modulus v, with penalty-loop settings."""

    R: np.ndarray  # (K_f, N, N) Hermitian PSD
    penalty0: float = 1e-6
    penalty_scale: float = 10.0
    eps: float = 1e-4
    I1: int = 30
    I2: int = 30
    stall_tol: float = 1e-7
    backend: str = "clarabel"

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=complex)
        if self.R.ndim == 2:
            self.R = self.R[None]
        herm = np.max(np.abs(self.R - np.conj(np.swapaxes(self.R, 1, 2))), initial=0.0)
        if herm > 1e-12 * max(1.0, float(np.max(np.abs(self.R)))):
            raise PhaseError("R_k must be Hermitian")
        # one common scale keeps the max-min ordering and conditions the SDP
        diag = np.real(np.einsum("knn->k", self.R)) / self.N
        self.scale = float(np.mean(diag)) if np.mean(diag) > 0 else 1.0

    @property
    def N(self) -> int:
        return self.R.shape[-1]

    @property
    def K(self) -> int:
        return self.R.shape[0]

    @property
    def R_scaled(self) -> np.ndarray:
        return self.R / self.scale


def phase_problem(channels: ChannelSet, vr: VrAssignment, **settings) -> PhaseProblem:
    cfg = channels.cfg
    R = np.array([build_Rk(channels, k, vr.far[k]) for k in range(cfg.K_f)]).reshape(cfg.K_f, cfg.N, cfg.N)
    opts = dict(penalty0=cfg.penalty0, penalty_scale=cfg.penalty_scale, eps=cfg.eps_rank, I1=cfg.I1, I2=cfg.I2)
    opts.update(settings)
    return PhaseProblem(R, **opts)


@dataclass
class PhaseSolution:
    V: np.ndarray
    theta: np.ndarray
    residual: float  # ‖V‖_* − ‖V‖_2
    t: float  # min_k v^H R_k v at the extracted phases (unscaled)
    t_sdp: float  # relaxation value min_k tr(R_k V) (unscaled)
    converged: bool
    outer: int  # number of penalty increases
    inner: int  # total SDP solves
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# realified parametrization


def _pairs(N: int):
    return np.triu_indices(N, 1)


def _linear_trace(R: np.ndarray) -> tuple[np.ndarray, float]:
    """Coefficients (on [vr, vi]) and constant of tr(R V) for Hermitian R."""
    iu = _pairs(R.shape[0])
    coef = np.concatenate([2 * R.real[iu], 2 * R.imag[iu]])
    return coef, float(np.trace(R).real)


def _to_matrix(x: np.ndarray, N: int) -> np.ndarray:
    iu = _pairs(N)
    p = iu[0].size
    V = np.eye(N, dtype=complex)
    V[iu] = x[:p] + 1j * x[p : 2 * p]
    V[(iu[1], iu[0])] = x[:p] - 1j * x[p : 2 * p]
    return V


def _to_params(V: np.ndarray) -> np.ndarray:
    iu = _pairs(V.shape[0])
    return np.concatenate([V.real[iu], V.imag[iu]])


def _embedding_map(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major entries of the 2N x 2N embedding as (coef @ params + const)."""
    iu = _pairs(N)
    p = iu[0].size
    n2 = 2 * N
    coef = np.zeros((n2 * n2, 2 * p))
    const = np.zeros(n2 * n2)

    def put(r, c, col, sign):
        coef[r * n2 + c, col] += sign

    for idx, (i, j) in enumerate(zip(*iu)):
        for off in (0, N):  # Re V blocks
            put(i + off, j + off, idx, 1.0)
            put(j + off, i + off, idx, 1.0)
        # Im V in the lower-left block, -Im V in the upper-right block
        put(N + i, j, p + idx, 1.0)
        put(N + j, i, p + idx, -1.0)
        put(i, N + j, p + idx, -1.0)
        put(j, N + i, p + idx, 1.0)
    for i in range(n2):
        const[i * n2 + i] = 1.0
    return coef, const


def leading(V: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    w, U = np.linalg.eigh(V)
    return float(w[-1]), U[:, -1], w


def rank_residual(V: np.ndarray) -> float:
    w = np.linalg.eigvalsh(V)
    return float(np.sum(np.abs(w)) - np.max(np.abs(w)))


def solve_inner(problem: PhaseProblem, V0: np.ndarray, penalty: float, max_iter: Optional[int] = None,
                trace: Optional[list] = None, outer: int = 0) -> tuple[np.ndarray, float, int]:
    """Repeat the linearized penalty SDP from ``V0``; returns (V, scaled t, solves).

    Each solve maximizes t + ϱ·ū^H V ū over unit-diagonal PSD V with
    t ≤ tr(R_k V), where ū is the leading eigenvector of the previous
    iterate. Stops on rank-one residual ≤ ε, stagnation of the penalized
    objective or ``max_iter`` solves.
    """
    N, R = problem.N, problem.R_scaled
    max_iter = problem.I2 if max_iter is None else max_iter
    emb_coef, emb_const = _embedding_map(N)
    trace_coefs = [_linear_trace(Rk) for Rk in R]
    V = np.array(V0, dtype=complex)
    t_val = float(min(np.real(np.einsum("nm,mn->", Rk, V)) for Rk in R))
    prev = t_val - penalty * rank_residual(V)
    solves = 0
    for it in range(max_iter):
        lam, u, _ = leading(V)
        U = np.outer(u, u.conj())
        b = conic.ProgramBuilder()
        b.var("V", 2 * _pairs(N)[0].size)
        t = b.var("t")
        # variable vector is [params, t]
        for coef, const in trace_coefs:
            tr_expr = conic.AffineExpr(np.concatenate([coef, [0.0]])[None, :], [const])
            b.add_nonneg(tr_expr - t)
        entries = conic.AffineExpr(np.hstack([emb_coef, np.zeros((emb_coef.shape[0], 1))]), emb_const)
        b.add_psd(entries, 2 * N)
        pen_coef, pen_const = _linear_trace(U)
        pen = conic.AffineExpr(np.concatenate([pen_coef, [0.0]])[None, :], [pen_const])
        b.maximize(t + pen * penalty)
        program = b.build()
        res = conic.solve(program, problem.backend)
        solves += 1
        if not res.ok:
            raise PhaseError(f"phase SDP failed with status {res.status}", iterate=V)
        V_new = _to_matrix(res.x[program.variables["V"]], N)
        # exact penalized objective; the solver's own t is only accurate to its gap
        t_new = float(min(np.real(np.einsum("nm,mn->", Rk, V_new)) for Rk in R))
        resid = rank_residual(V_new)
        obj = t_new - penalty * resid
        if obj < prev:
            # no ascent at solver precision: keep the previous iterate
            break
        V, t_val = V_new, t_new
        min_eig = float(np.linalg.eigvalsh(V)[0])
        if trace is not None:
            trace.append({"outer": outer, "inner": it + 1, "penalty": penalty, "t": t_val,
                          "objective": obj, "residual": resid, "min_eig": min_eig})
        if resid <= problem.eps:
            break
        if abs(obj - prev) <= problem.stall_tol * max(1.0, abs(obj)):
            break
        prev = obj
    return V, t_val, solves


def phases_from_matrix(V: np.ndarray) -> np.ndarray:
    """θ_n = −∠u_n for the leading eigenvector u, wrapped into [0, 2π)."""
    _, u, _ = leading(V)
    return np.mod(-np.angle(u), 2 * math.pi)


def run_penalty(problem: PhaseProblem, rng: Optional[np.random.Generator] = None,
                V0: Optional[np.ndarray] = None) -> PhaseSolution:
    """Outer loop: scale the penalty ϱ ← lϱ until the rank-one residual is ≤ ε."""
    N = problem.N
    if V0 is None:
        rng = rng or np.random.default_rng(0)
        v0 = np.exp(-1j * random_phases(rng, N))
        V0 = np.outer(v0, v0.conj())
    V = np.array(V0, dtype=complex)
    if not np.allclose(np.diag(V), 1.0):
        raise PhaseError("initial V must have a unit diagonal")
    penalty, trace = problem.penalty0, []
    outer = solves = 0
    best = None
    while True:
        V, _, n = solve_inner(problem, V, penalty, trace=trace, outer=outer)
        solves += n
        resid = rank_residual(V)
        if best is None or resid < best[1]:
            best = (V, resid)
        if resid <= problem.eps or outer + 1 >= problem.I1:
            break
        penalty *= problem.penalty_scale
        outer += 1
    converged = resid <= problem.eps
    if not converged:
        V = best[0]
        resid = best[1]
    theta = phases_from_matrix(V)
    t = float(np.min(channel_gains(problem.R, theta)))
    t_sdp = float(min(np.real(np.einsum("nm,mn->", Rk, V)) for Rk in problem.R))
    return PhaseSolution(V, theta, resid, t, t_sdp, converged, outer, solves, trace)


def heuristic_phases(channels: ChannelSet, k: int = 0) -> np.ndarray:
    """Align the RIS to far-field user ``k`` along the line-of-sight RIS direction.

    θ_n = −∠(conj(h_kn) b_n) so every term of h_k^H Θ b adds coherently.
    """
    cfg = channels.cfg
    b = array_response_ris(*channels.geometry.ris_aoa, cfg.N_1, cfg.N_2)
    return np.mod(-np.angle(channels.h[k].conj() * b), 2 * math.pi)


def dump_trace_csv(solution: PhaseSolution, path) -> None:
    cols = ["outer", "inner", "penalty", "t", "objective", "residual", "min_eig"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in solution.trace:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
