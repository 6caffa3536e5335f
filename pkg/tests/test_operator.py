import numpy as np
import pytest

from conftest import DenseOracle, make_toy

from morozov.operator import (
    AssimilationOperator,
    NoisyData,
    Projector,
    constant_observation_projector,
)


def test_shape_validation():
    rng = np.random.default_rng(0)
    gv = np.eye(4)
    gm = np.eye(3)
    go = np.eye(2)
    b = rng.standard_normal((3, 4))
    c = rng.standard_normal((2, 4))
    AssimilationOperator(gv, gm, go, b, c)  # consistent shapes pass
    with pytest.raises(ValueError):
        AssimilationOperator(gv, gm, go, b.T, c)
    with pytest.raises(ValueError):
        AssimilationOperator(gv, gm, go, b, c[:, :3])
    with pytest.raises(ValueError):
        AssimilationOperator(np.eye(5), gm, go, b, c)


def test_apply_matches_dense():
    op = make_toy(1, n_v=5, n_m=4, n_o=3)
    oracle = DenseOracle(op)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(5)
    au = op.apply_a(u)
    assert np.allclose(au, oracle.a @ u)
    assert np.allclose(op.apply_b(u), (oracle.a @ u)[:4])
    assert np.allclose(op.apply_c(u), (oracle.a @ u)[4:])
    # normal action A A* on an H vector
    assert np.allclose(op.apply_gram_normal(au),
                       oracle.a @ np.linalg.solve(
                           oracle.gv, oracle.a.T @ oracle.gh @ au))


def test_adjoint_identity():
    op = make_toy(3, n_v=6, n_m=4, n_o=5)
    rng = np.random.default_rng(4)
    for _ in range(5):
        u = rng.standard_normal(6)
        q = rng.standard_normal(9)
        lhs = op.hdot(op.apply_a(u), q)
        rhs = op.vdot(u, op.apply_adjoint(q))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_diagonal_observation_fast_path():
    op = make_toy(5, n_o=4, diag_o=True)
    assert op._go_diag is not None
    op_full = make_toy(5, n_o=4, diag_o=False)
    assert op_full._go_diag is None
    rng = np.random.default_rng(6)
    f = rng.standard_normal(4)
    dense = f @ op.gram_o.toarray() @ f
    assert np.isclose(op.odot(f, f), dense)


def test_split_stack_roundtrip():
    op = make_toy(7)
    rng = np.random.default_rng(7)
    q = rng.standard_normal(op.n_h)
    lam, f = op.split(q)
    assert lam.shape == (op.n_m,) and f.shape == (op.n_o,)
    assert np.array_equal(op.stack(lam, f), q)
    padded = op.stack(None, f)
    assert np.all(padded[: op.n_m] == 0.0)
    assert np.array_equal(padded[op.n_m:], f)


def test_norms_match_dense():
    op = make_toy(8, n_v=5, n_m=3, n_o=4)
    oracle = DenseOracle(op)
    rng = np.random.default_rng(9)
    q = rng.standard_normal(op.n_h)
    u = rng.standard_normal(5)
    assert np.isclose(op.norm_h(q), oracle.g_norm(q))
    assert np.isclose(op.norm_v(u) ** 2, u @ oracle.gv @ u)
    lam, f = op.split(q)
    assert np.isclose(op.norm_m(lam) ** 2, lam @ oracle.gm @ lam)
    assert np.isclose(op.norm_o(f) ** 2, f @ oracle.go @ f)
    assert np.isclose(op.hdot(q, q), op.norm_h(q) ** 2)


def test_mixed_matrix_blocks():
    op = make_toy(10, n_v=5, n_m=3, n_o=4)
    eps = 0.37
    m = op.mixed_matrix(eps).toarray()
    assert m.shape == (8, 8)
    assert np.allclose(m, m.T)
    gv = op.gram_v.toarray()
    go = op.gram_o.toarray()
    c = op.c_form.toarray()
    top_left = eps * gv + c.T @ np.linalg.solve(go, c)
    assert np.allclose(m[:5, :5], top_left)
    assert np.allclose(m[5:, :5], op.b_form.toarray())
    assert np.allclose(m[5:, 5:], -op.gram_m.toarray())


def test_mixed_solver_memoized():
    op = make_toy(11)
    s1 = op.mixed_solver(0.5)
    s2 = op.mixed_solver(0.5)
    assert s1 is s2
    assert op.mixed_solver(0.25) is not s1


def test_dense_adjoint_and_normal_form():
    op = make_toy(12, n_v=5, n_m=4, n_o=3)
    oracle = DenseOracle(op)
    astar = op.dense_adjoint()
    rng = np.random.default_rng(13)
    q = rng.standard_normal(7)
    assert np.allclose(astar @ q, op.apply_adjoint(q))
    s = op.dense_normal_form()
    assert np.allclose(s, s.T)
    # S = G_H A A*
    ref = oracle.gh @ oracle.a @ np.linalg.solve(
        oracle.gv, oracle.a.T @ oracle.gh)
    assert np.allclose(s, ref)
    assert op.use_dense_normal()


def test_noisy_data_helpers():
    op = make_toy(14)
    rng = np.random.default_rng(15)
    f = rng.standard_normal(op.n_o)
    data = NoisyData(f=f, delta=0.1)
    g = data.stacked(op)
    assert np.all(g[: op.n_m] == 0.0)
    assert np.isclose(data.g_norm(op), op.norm_o(f))
    lam = rng.standard_normal(op.n_m)
    both = NoisyData(f=f, delta=0.1, ell=lam)
    assert np.isclose(both.g_norm(op), op.norm_h(op.stack(lam, f)))


def test_projector_zero_and_rank():
    p = Projector.zero()
    assert p.is_zero
    assert p.rank == 0
    op = make_toy(16)
    q = np.random.default_rng(17).standard_normal(op.n_h)
    assert np.all(p.apply(op, q) == 0.0)
    assert np.array_equal(p.complement(op, q), q)


def test_projector_apply_idempotent():
    op = make_toy(18, n_m=4, n_o=5)
    oracle = DenseOracle(op)
    rng = np.random.default_rng(19)
    # one-dimensional factor in each component, G-orthonormalized
    bm = rng.standard_normal((4, 1))
    bm /= np.sqrt(bm[:, 0] @ oracle.gm @ bm[:, 0])
    bo = rng.standard_normal((5, 2))
    # Gram-Schmidt in the O inner product
    bo[:, 0] /= np.sqrt(bo[:, 0] @ oracle.go @ bo[:, 0])
    bo[:, 1] -= (bo[:, 0] @ oracle.go @ bo[:, 1]) * bo[:, 0]
    bo[:, 1] /= np.sqrt(bo[:, 1] @ oracle.go @ bo[:, 1])
    p = Projector(basis_m=bm, basis_o=bo).validate(op)
    assert p.rank == 3
    q = rng.standard_normal(op.n_h)
    pq = p.apply(op, q)
    assert np.allclose(p.apply(op, pq), pq)
    # P and I - P are H-orthogonal
    assert abs(op.hdot(pq, p.complement(op, q))) < 1e-12
    # projection is H-symmetric
    r = rng.standard_normal(op.n_h)
    assert np.isclose(op.hdot(pq, r), op.hdot(q, p.apply(op, r)))


def test_projector_validate_rejects_bad_basis():
    op = make_toy(20)
    bad = np.ones((op.n_m, 1)) * 17.3
    with pytest.raises(ValueError):
        Projector(basis_m=bad).validate(op)


def test_constant_observation_projector():
    op = make_toy(21, n_o=6, diag_o=True)
    p = constant_observation_projector(op)
    p.validate(op)
    assert p.rank == 1 and p.basis_m is None
    rng = np.random.default_rng(22)
    f = rng.standard_normal(op.n_o)
    q = op.stack(None, f)
    pf = op.split(p.apply(op, q))[1]
    # projection onto constants preserves the weighted mean
    ones = np.ones(op.n_o)
    assert np.isclose(op.odot(ones, pf), op.odot(ones, f))
    assert np.allclose(pf, pf[0])
