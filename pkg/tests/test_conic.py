import numpy as np
import pytest

from risxl import conic
from risxl.conic import AffineExpr, ConicError, ProgramBuilder, realify_hermitian_psd, smat, solve, svec


def _min_x_ge_1():
    b = ProgramBuilder()
    x = b.var("x")
    b.add_nonneg(x - 1.0)
    b.minimize(x)
    return b.build()


def _scalar_sdp(r):
    b = ProgramBuilder()
    t = b.var("t")
    v = b.var("v")
    b.add_nonneg(v * r - t)
    b.add_zero(v - 1.0)
    b.add_psd(v, 1)
    b.maximize(t)
    return b.build()


@pytest.mark.parametrize("backend", ["clarabel", "admm"])
def test_linear_lower_bound(backend):
    res = solve(_min_x_ge_1(), backend)
    assert res.ok
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)
    assert res.objective == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("backend", ["clarabel", "admm"])
@pytest.mark.parametrize("r", [0.5, 2.0, 7.0])
def test_scalar_sdp(backend, r):
    p = _scalar_sdp(r)
    res = solve(p, backend)
    assert res.ok
    assert res.x[p.variables["t"]][0] == pytest.approx(r, rel=1e-5)


def test_exp_cone_log_target():
    # max t s.t. 2^t - 1 <= 3, written as t ln2 <= log(1 + T), T <= 3
    b = ProgramBuilder()
    t = b.var("t")
    T = b.var("T")
    b.add_nonneg(3.0 - T)
    b.add_exp(t * np.log(2.0), AffineExpr.constant(1.0), T + 1.0)
    b.maximize(t)
    p = b.build()
    res = solve(p)
    assert res.ok
    assert res.x[p.variables["t"]][0] == pytest.approx(2.0, abs=1e-6)


def test_admm_rejects_exp_cone():
    b = ProgramBuilder()
    t = b.var("t")
    b.add_exp(t, AffineExpr.constant(1.0), AffineExpr.constant(2.0))
    b.maximize(t)
    with pytest.raises(ConicError):
        solve(b.build(), "admm")


def test_socp_backends_agree():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 3))
    c = rng.standard_normal(3)
    b = ProgramBuilder()
    x = b.var("x", 3)
    b.add_soc(AffineExpr.constant(1.0), A @ x)
    b.minimize(x.dot(c))
    p = b.build()
    r1, r2 = solve(p, "clarabel"), solve(p, "admm")
    assert r1.ok and r2.ok
    assert r1.objective == pytest.approx(r2.objective, abs=1e-5)
    # weak duality and a tight gap
    assert r1.dual_objective <= r1.objective + 1e-7
    assert abs(r1.objective - r1.dual_objective) <= 1e-6


def test_resolve_is_idempotent():
    p = _scalar_sdp(3.0)
    a, b = solve(p), solve(p)
    np.testing.assert_array_equal(a.x, b.x)


def test_infeasible_status():
    b = ProgramBuilder()
    x = b.var("x")
    b.add_nonneg(x - 2.0)
    b.add_nonneg(1.0 - x)
    b.minimize(x)
    res = solve(b.build())
    assert res.status == "infeasible"
    assert not res.ok


def test_unknown_backend():
    with pytest.raises(ConicError):
        solve(_min_x_ge_1(), "nope")


def test_builder_errors():
    b = ProgramBuilder()
    b.var("x")
    with pytest.raises(ConicError):
        b.var("x")
    with pytest.raises(ConicError):
        b.build()
    with pytest.raises(ConicError):
        b.add_psd(b.var("y", 3), 2)


def test_dump_load_roundtrip(tmp_path):
    p = _scalar_sdp(1.5)
    path = tmp_path / "prog.txt"
    conic.dump_program(p, path)
    q = conic.load_program(path)
    np.testing.assert_array_equal(p.c, q.c)
    for a, b in zip(p.blocks, q.blocks):
        assert a.kind == b.kind and a.dim == b.dim
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.b, b.b)
    assert solve(q).objective == pytest.approx(solve(p).objective, abs=1e-9)


def test_svec_smat_inverse():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 4))
    X = X + X.T
    np.testing.assert_allclose(smat(svec(X), 4), X)
    # svec preserves the Frobenius inner product
    Y = rng.standard_normal((4, 4))
    Y = Y + Y.T
    assert svec(X) @ svec(Y) == pytest.approx(np.trace(X @ Y))


def test_realify_identity():
    np.testing.assert_array_equal(realify_hermitian_psd(np.eye(3, dtype=complex)), np.eye(6))


def test_realify_spectrum_and_trace():
    rng = np.random.default_rng(5)
    G = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = G @ G.conj().T
    E = realify_hermitian_psd(H)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(E)), np.sort(np.repeat(np.linalg.eigvalsh(H), 2)),
                               atol=1e-10)
    assert np.trace(E) == pytest.approx(2 * np.trace(H).real)


def test_realify_rejects_non_hermitian():
    with pytest.raises(ConicError):
        realify_hermitian_psd(np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex))
