"""Solver-agnostic conic programs.

A program is ``minimize c^T x  s.t.  b - A x in K`` where ``K`` is a product of
zero, nonnegative, second-order, PSD (scaled upper-triangle vectorization) and
exponential cones. Programs are assembled with :class:`ProgramBuilder` from
affine expressions and solved by :func:`solve`, which dispatches to Clarabel
(default) or a small built-in ADMM splitting method (no exponential cone).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, sparse

CONE_KINDS = ("zero", "nonneg", "soc", "psd", "exp")
SQRT2 = np.sqrt(2.0)


class ConicError(RuntimeError):
    """Raised for malformed programs or unsupported cone/backend combinations."""


# ---------------------------------------------------------------------------
# affine expressions


class AffineExpr:
    """Vector-valued affine expression ``coef @ x + const``.

    The coefficient matrix may be narrower than the final variable count;
    missing columns are implicitly zero.
    """

    __slots__ = ("coef", "const")
    # make numpy defer to the reflected operators (e.g. ``A @ expr``)
    __array_ufunc__ = None

    def __init__(self, coef: np.ndarray, const: np.ndarray):
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))
        self.const = np.atleast_1d(np.asarray(const, dtype=float))
        if self.coef.shape[0] != self.const.shape[0]:
            raise ConicError("coefficient rows and constant length differ")

    @property
    def size(self) -> int:
        return self.const.shape[0]

    def _width(self, n: int) -> np.ndarray:
        if self.coef.shape[1] == n:
            return self.coef
        out = np.zeros((self.coef.shape[0], n))
        out[:, : self.coef.shape[1]] = self.coef
        return out

    @staticmethod
    def constant(values) -> "AffineExpr":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return AffineExpr(np.zeros((values.size, 0)), values)

    def _coerce(self, other) -> "AffineExpr":
        if isinstance(other, AffineExpr):
            return other
        other = np.broadcast_to(np.asarray(other, dtype=float), (self.size,))
        return AffineExpr.constant(other)

    def __add__(self, other) -> "AffineExpr":
        other = self._coerce(other)
        if other.size != self.size:
            if other.size == 1:
                other = other.repeat(self.size)
            elif self.size == 1:
                return self.repeat(other.size) + other
            else:
                raise ConicError("size mismatch in affine addition")
        n = max(self.coef.shape[1], other.coef.shape[1])
        return AffineExpr(self._width(n) + other._width(n), self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.coef, -self.const)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, scalar) -> "AffineExpr":
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim == 0:
            return AffineExpr(self.coef * scalar, self.const * scalar)
        scalar = np.broadcast_to(scalar, (self.size,))
        return AffineExpr(self.coef * scalar[:, None], self.const * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "AffineExpr":
        return self * (1.0 / np.asarray(scalar, dtype=float))

    def __rmatmul__(self, matrix) -> "AffineExpr":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return AffineExpr(matrix @ self.coef, matrix @ self.const)

    def __getitem__(self, idx) -> "AffineExpr":
        idx = np.atleast_1d(np.arange(self.size)[idx])
        return AffineExpr(self.coef[idx], self.const[idx])

    def repeat(self, k: int) -> "AffineExpr":
        if self.size != 1:
            raise ConicError("only scalar expressions can be repeated")
        return AffineExpr(np.repeat(self.coef, k, axis=0), np.repeat(self.const, k))

    def sum(self) -> "AffineExpr":
        return AffineExpr(self.coef.sum(axis=0, keepdims=True), [self.const.sum()])

    def dot(self, weights) -> "AffineExpr":
        weights = np.asarray(weights, dtype=float)
        return AffineExpr((weights @ self.coef)[None, :], [weights @ self.const])

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._width(x.size) @ x + self.const


def vstack(exprs: Sequence[AffineExpr]) -> AffineExpr:
    """Concatenate affine expressions row-wise."""
    n = max(e.coef.shape[1] for e in exprs)
    return AffineExpr(
        np.vstack([e._width(n) for e in exprs]), np.concatenate([e.const for e in exprs])
    )


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class ConeBlock:
    """Rows ``b - A x`` constrained to one cone.

    ``dim`` is the matrix order for ``psd`` blocks and the row count otherwise.
    """

    kind: str
    A: np.ndarray
    b: np.ndarray
    dim: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ConicError(f"unknown cone {self.kind!r}")
        rows = self.A.shape[0]
        if rows != self.b.shape[0]:
            raise ConicError("block rows and offset length differ")
        if self.kind == "psd" and rows != self.dim * (self.dim + 1) // 2:
            raise ConicError("psd block size does not match its order")
        if self.kind == "exp" and rows != 3:
            raise ConicError("exponential cone blocks have three rows")
        if self.kind == "soc" and rows < 1:
            raise ConicError("empty second-order cone")


@dataclass
class ConicProgram:
    """Value object for ``minimize c^T x  s.t.  b - A x in K``."""

    c: np.ndarray
    blocks: list[ConeBlock]
    variables: dict[str, slice] = field(default_factory=dict)
    warm_start: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def cone_kinds(self) -> set[str]:
        return {b.kind for b in self.blocks}

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.blocks:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.vstack([b.A for b in self.blocks]), np.concatenate([b.b for b in self.blocks])

    def validate(self) -> None:
        if not np.all(np.isfinite(self.c)):
            raise ConicError("objective is not finite")
        for blk in self.blocks:
            if blk.A.shape[1] != self.n:
                raise ConicError("block width does not match variable count")
            if not (np.all(np.isfinite(blk.A)) and np.all(np.isfinite(blk.b))):
                raise ConicError(f"non-finite data in {blk.kind} block")


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram`."""

    def __init__(self):
        self.n = 0
        self.variables: dict[str, slice] = {}
        self._blocks: list[tuple[str, AffineExpr, int]] = []
        self._objective: Optional[AffineExpr] = None
        self._sense = 1.0

    def var(self, name: str, size: int = 1) -> AffineExpr:
        if name in self.variables:
            raise ConicError(f"duplicate variable {name!r}")
        sl = slice(self.n, self.n + size)
        self.variables[name] = sl
        self.n += size
        coef = np.zeros((size, self.n))
        coef[np.arange(size), np.arange(sl.start, sl.stop)] = 1.0
        return AffineExpr(coef, np.zeros(size))

    # each add_* registers ``expr in cone``; stored as (kind, expr, dim)
    def add_zero(self, expr: AffineExpr) -> None:
        self._blocks.append(("zero", expr, expr.size))

    def add_nonneg(self, expr: AffineExpr) -> None:
        self._blocks.append(("nonneg", expr, expr.size))

    def add_soc(self, head: AffineExpr, tail: AffineExpr) -> None:
        """``head >= ||tail||``."""
        expr = vstack([head, tail])
        self._blocks.append(("soc", expr, expr.size))

    def add_sum_squares_le(self, terms: AffineExpr, bound: AffineExpr) -> None:
        """``||terms||^2 <= bound`` as a rotated cone ``||(2 terms, bound-1)|| <= bound+1``."""
        self.add_soc(bound + 1.0, vstack([terms * 2.0, bound - 1.0]))

    def add_exp(self, x: AffineExpr, y: AffineExpr, z: AffineExpr) -> None:
        """``y exp(x / y) <= z`` with ``y > 0``."""
        self._blocks.append(("exp", vstack([x, y, z]), 3))

    def add_psd(self, entries: AffineExpr, order: int) -> None:
        """Symmetric matrix given row-major as ``order**2`` affine entries is PSD."""
        if entries.size != order * order:
            raise ConicError("psd entries do not form a square matrix")
        self._blocks.append(("psd", svec_expr(entries, order), order))

    def minimize(self, expr: AffineExpr) -> None:
        self._objective, self._sense = expr, 1.0

    def maximize(self, expr: AffineExpr) -> None:
        self._objective, self._sense = -expr, -1.0

    @property
    def sense(self) -> float:
        return self._sense

    def build(self) -> ConicProgram:
        if self._objective is None or self._objective.size != 1:
            raise ConicError("a scalar objective is required")
        c = self._objective._width(self.n)[0].copy()
        blocks = [ConeBlock(kind, -e._width(self.n), e.const.copy(), dim) for kind, e, dim in self._blocks]
        program = ConicProgram(c=c, blocks=blocks, variables=dict(self.variables))
        program.validate()
        return program

    def objective_offset(self) -> float:
        """Constant part of the user objective (sign as given to minimize/maximize)."""
        return float(self._sense * self._objective.const[0])


def svec_indices(order: int) -> list[tuple[int, int]]:
    """Upper triangle in column-major order, the convention of the PSD cone."""
    return [(i, j) for j in range(order) for i in range(j + 1)]


def svec(matrix: np.ndarray) -> np.ndarray:
    order = matrix.shape[0]
    return np.array([matrix[i, j] * (1.0 if i == j else SQRT2) for i, j in svec_indices(order)])


def smat(vec: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((order, order))
    for value, (i, j) in zip(vec, svec_indices(order)):
        if i == j:
            out[i, i] = value
        else:
            out[i, j] = out[j, i] = value / SQRT2
    return out


def svec_expr(entries: AffineExpr, order: int) -> AffineExpr:
    rows, scale = [], []
    for i, j in svec_indices(order):
        rows.append(i * order + j)
        scale.append(1.0 if i == j else SQRT2)
    # symmetrize so that asymmetric input is read through its symmetric part
    sym_rows = [j * order + i for i, j in svec_indices(order)]
    upper = entries[np.array(rows)]
    lower = entries[np.array(sym_rows)]
    return (upper + lower) * (0.5 * np.array(scale))


def realify_hermitian_psd(block: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Real symmetric embedding ``[[X_re, -X_im], [X_im, X_re]]`` of a Hermitian matrix."""
    block = np.asarray(block)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise ConicError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(block)))) if block.size else 1.0
    if np.max(np.abs(block - block.conj().T), initial=0.0) > tol * scale:
        raise ConicError("matrix is not Hermitian")
    re, im = block.real, block.imag
    return np.block([[re, -im], [im, re]])


# ---------------------------------------------------------------------------
# solving


@dataclass
class SolveResult:
    """Outcome of a conic solve; residuals are relative and always populated."""

    status: str  # optimal | near-optimal | infeasible | cap-reached | failed
    x: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    backend: str
    s: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def _residuals(program: ConicProgram, x, s, z) -> tuple[float, float, float]:
    A, b = program.stacked()
    c = program.c
    if A.shape[0] == 0:
        return 0.0, float(np.max(np.abs(c), initial=0.0)), 0.0
    Ax = A @ x
    rp = np.max(np.abs(Ax + s - b)) / (1.0 + max(np.max(np.abs(b)), np.max(np.abs(Ax))))
    rd = np.max(np.abs(c + A.T @ z), initial=0.0) / (1.0 + np.max(np.abs(c), initial=0.0))
    pobj, dobj = c @ x, -b @ z
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return float(rp), float(rd), float(gap)


def solve(program: ConicProgram, backend: str = "clarabel", **settings) -> SolveResult:
    """Solve ``program`` with the named backend (``clarabel`` or ``admm``)."""
    program.validate()
    if backend == "clarabel":
        return _solve_clarabel(program, **settings)
    if backend == "admm":
        return _solve_admm(program, **settings)
    raise ConicError(f"unknown backend {backend!r}")


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "near-optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "AlmostDualInfeasible": "infeasible",
    "MaxIterations": "cap-reached",
    "MaxTime": "cap-reached",
}


def _solve_clarabel(program: ConicProgram, **settings) -> SolveResult:
    import clarabel

    A, b = program.stacked()
    cones = []
    for blk in program.blocks:
        if blk.kind == "zero":
            cones.append(clarabel.ZeroConeT(blk.dim))
        elif blk.kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(blk.dim))
        elif blk.kind == "soc":
            cones.append(clarabel.SecondOrderConeT(blk.dim))
        elif blk.kind == "psd":
            cones.append(clarabel.PSDTriangleConeT(blk.dim))
        else:
            cones.append(clarabel.ExponentialConeT())
    opts = clarabel.DefaultSettings()
    opts.verbose = False
    opts.max_threads = 1
    opts.presolve_enable = False  # keep s and z aligned with the block layout
    for key, value in settings.items():
        setattr(opts, key, value)
    n = program.n
    P = sparse.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, program.c, sparse.csc_matrix(A), b, cones, opts).solve()
    x, s, z = np.array(sol.x), np.array(sol.s), np.array(sol.z)
    rp, rd, gap = _residuals(program, x, s, z)
    status = _CLARABEL_STATUS.get(str(sol.status))
    if status is None:
        status = "near-optimal" if max(rp, rd, gap) <= 1e-5 else "failed"
    return SolveResult(
        status=status,
        x=x,
        objective=float(program.c @ x),
        dual_objective=float(-b @ z),
        primal_residual=rp,
        dual_residual=rd,
        gap=gap,
        iterations=int(sol.iterations),
        backend="clarabel",
        s=s,
        z=z,
    )


def _project_block(kind: str, dim: int, v: np.ndarray) -> np.ndarray:
    if kind == "zero":
        return np.zeros_like(v)
    if kind == "nonneg":
        return np.maximum(v, 0.0)
    if kind == "soc":
        t, u = v[0], v[1:]
        nu = np.linalg.norm(u)
        if nu <= t:
            return v
        if nu <= -t:
            return np.zeros_like(v)
        a = 0.5 * (t + nu)
        return np.concatenate([[a], a * u / nu])
    if kind == "psd":
        w, q = np.linalg.eigh(smat(v, dim))
        return svec((q * np.maximum(w, 0.0)) @ q.T)
    raise ConicError("the ADMM backend does not support exponential cones")


def _solve_admm(
    program: ConicProgram,
    eps_abs: float = 1e-8,
    eps_rel: float = 1e-8,
    max_iter: int = 50000,
    rho: float = 0.1,
    sigma: float = 1e-6,
    alpha: float = 1.6,
) -> SolveResult:
    if "exp" in program.cone_kinds:
        raise ConicError("the ADMM backend does not support exponential cones")
    A, b = program.stacked()
    c = program.c.copy()
    m, n = A.shape
    # Ruiz equilibration; cone blocks other than zero/nonneg share one row scale
    D, E = np.ones(m), np.ones(n)
    As = A.copy()
    groups = []
    row = 0
    for blk in program.blocks:
        rows = blk.A.shape[0]
        groups.append((blk.kind, slice(row, row + rows)))
        row += rows
    for _ in range(15):
        rnorm = np.sqrt(np.max(np.abs(As), axis=1, initial=0.0))
        for kind, sl in groups:
            if kind not in ("zero", "nonneg"):
                rnorm[sl] = np.mean(rnorm[sl])
        rnorm[rnorm < 1e-8] = 1.0
        cnorm = np.sqrt(np.max(np.abs(As), axis=0, initial=0.0))
        cnorm[cnorm < 1e-8] = 1.0
        As = As / rnorm[:, None] / cnorm[None, :]
        D /= rnorm
        E /= cnorm
    bs, cs = D * b, E * c
    sb = 1.0 / max(1.0, np.max(np.abs(bs), initial=0.0))
    sc = 1.0 / max(1.0, np.max(np.abs(cs), initial=0.0))
    bs, cs = bs * sb, cs * sc

    def project(v):
        out = np.empty_like(v)
        for blk, (kind, sl) in zip(program.blocks, groups):
            out[sl] = _project_block(kind, blk.dim, v[sl])
        return out

    x = np.zeros(n)
    s = project(bs.copy())
    y = np.zeros(m)
    AtA = As.T @ As

    def factor(r):
        return linalg.cho_factor(sigma * np.eye(n) + r * AtA)

    chol = factor(rho)
    status = "cap-reached"
    it = 0
    for it in range(1, max_iter + 1):
        rhs = sigma * x - cs + As.T @ (rho * (bs - s) - y)
        x = linalg.cho_solve(chol, rhs)
        Ax = As @ x
        Axr = alpha * Ax + (1 - alpha) * (bs - s)
        s = project(bs - Axr - y / rho)
        y = y + rho * (Axr + s - bs)
        if it % 25 == 0 or it == max_iter:
            Aty = As.T @ y
            rp = np.max(np.abs(Ax + s - bs), initial=0.0)
            rd = np.max(np.abs(cs + Aty), initial=0.0)
            pobj, dobj = cs @ x, -bs @ y
            tol_p = eps_abs + eps_rel * max(np.max(np.abs(Ax), initial=0), np.max(np.abs(s), initial=0), np.max(np.abs(bs), initial=0))
            tol_d = eps_abs + eps_rel * max(np.max(np.abs(Aty), initial=0), np.max(np.abs(cs), initial=0))
            tol_g = eps_abs + eps_rel * max(abs(pobj), abs(dobj))
            if rp <= tol_p and rd <= tol_d and abs(pobj - dobj) <= tol_g:
                status = "optimal"
                break
            ratio = np.sqrt((rp / max(tol_p, 1e-300)) / max(rd / max(tol_d, 1e-300), 1e-300))
            if it % 100 == 0 and (ratio > 5 or ratio < 0.2):
                rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                chol = factor(rho)
    x_out = E * x / sb
    s_out = s / D / sb
    z_out = D * y / sc
    rp, rd, gap = _residuals(program, x_out, s_out, z_out)
    if status == "cap-reached" and max(rp, rd, gap) <= 1e-5:
        status = "near-optimal"
    return SolveResult(
        status=status,
        x=x_out,
        objective=float(program.c @ x_out),
        dual_objective=float(-b @ z_out),
        primal_residual=rp,
        dual_residual=rd,
        gap=gap,
        iterations=it,
        backend="admm",
        s=s_out,
        z=z_out,
    )


def dump_program(program: ConicProgram, path) -> None:
    """Write ``program`` in a plain-text format.

    Layout::

        CONIC <n> <m>
        OBJ <c_0> ... <c_{n-1}>
        BLOCK <kind> <dim> <rows>
        B <b_0> ... <b_{rows-1}>
        A <i> <j> <value>        (one line per nonzero, row index local to the block)
        END
    """
    A, _ = program.stacked()
    lines = [f"CONIC {program.n} {A.shape[0]}", "OBJ " + " ".join(repr(float(v)) for v in program.c)]
    for blk in program.blocks:
        lines.append(f"BLOCK {blk.kind} {blk.dim} {blk.A.shape[0]}")
        lines.append("B " + " ".join(repr(float(v)) for v in blk.b))
        for i, j in zip(*np.nonzero(blk.A)):
            lines.append(f"A {i} {j} {float(blk.A[i, j])!r}")
    lines.append("END")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_program(path) -> ConicProgram:
    """Inverse of :func:`dump_program`."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.split() for line in fh if line.strip()]
    n = int(tokens[0][1])
    c = np.array([float(v) for v in tokens[1][1:]])
    blocks = []
    i = 2
    while tokens[i][0] != "END":
        _, kind, dim, rows = tokens[i]
        dim, rows = int(dim), int(rows)
        b = np.array([float(v) for v in tokens[i + 1][1:]])
        A = np.zeros((rows, n))
        i += 2
        while tokens[i][0] == "A":
            A[int(tokens[i][1]), int(tokens[i][2])] = float(tokens[i][3])
            i += 1
        blocks.append(ConeBlock(kind, A, b, dim))
    return ConicProgram(c=c, blocks=blocks)
