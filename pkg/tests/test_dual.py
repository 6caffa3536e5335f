import numpy as np
import pytest

from conftest import DenseOracle, admissible_toy_data, make_toy

from morozov.backends import algebraic_perp
from morozov.dual import (
    DualOptions,
    demeestere_iterate,
    dual_gradient,
    dual_objective,
    minimize_dual,
    morozov_from_dual,
)
from morozov.mixed import morozov_find_epsilon, solve_mixed
from morozov.noise import make_inadmissible_data
from morozov.operator import (
    InadmissibleDataError,
    NoisyData,
    NonsmoothPointError,
    Projector,
)


def toy_with_data(seed, **kw):
    op = make_toy(seed, **kw)
    oracle = DenseOracle(op)
    data = admissible_toy_data(op, oracle, seed + 500)
    return op, oracle, data


def fd_gradient(op, data, projector, q, h=1e-6):
    g = np.zeros_like(q)
    gram = np.zeros((len(q), len(q)))
    for i in range(len(q)):
        e = np.zeros_like(q)
        e[i] = 1.0
        gram[:, i] = op.gram_h(e)
        fp = dual_objective(op, data, projector, q + h * e)
        fm = dual_objective(op, data, projector, q - h * e)
        g[i] = (fp - fm) / (2 * h)
    # convert the coordinate gradient to the H-Riesz representative
    return np.linalg.solve(gram, g)


def test_dual_gradient_matches_fd():
    op, oracle, data = toy_with_data(0)
    rng = np.random.default_rng(1)
    for _ in range(4):
        q = rng.standard_normal(op.n_h)
        grad = dual_gradient(op, data, None, q)
        ref = fd_gradient(op, data, None, q)
        assert np.allclose(grad, ref, rtol=1e-5, atol=1e-7)


def test_dual_gradient_nonsmooth_guard():
    op, _, data = toy_with_data(2)
    with pytest.raises(NonsmoothPointError):
        dual_gradient(op, data, None, np.zeros(op.n_h))


def test_minimize_dual_matches_primal():
    for seed in range(4):
        op, oracle, data = toy_with_data(10 + seed)
        res = minimize_dual(op, data)
        assert res.converged and res.branch == "smooth"
        eps = morozov_from_dual(op, res.p, data.delta)
        eps_ref, sol = morozov_find_epsilon(op, data, tol=1e-10)
        assert abs(eps - eps_ref) <= 1e-6 * eps_ref
        # u from the dual equals the Tikhonov minimizer at eps(delta)
        ref = solve_mixed(op, data, eps).u
        num = op.norm_v(res.u - ref)
        assert num <= 1e-7 * max(op.norm_v(ref), 1e-12)


def test_identity_on_converged_runs():
    for seed in range(4):
        op, _, data = toy_with_data(20 + seed)
        res = minimize_dual(op, data)
        scale = max(op.vdot(res.u, res.u), 1e-300)
        assert res.checks["identity"] <= 1e-8 * scale
        assert res.checks["discrepancy_gap"] <= 1e-6


def test_minimize_dual_rejects_inadmissible():
    op, oracle, data = toy_with_data(30)
    # delta above the data norm
    bad = NoisyData(f=data.f, delta=2.0 * data.g_norm(op), ell=data.ell)
    with pytest.raises(InadmissibleDataError) as err:
        minimize_dual(op, bad)
    assert "delta < |g|" in str(err.value)
    # delta below the range-perpendicular norm
    g = data.stacked(op)
    perp = oracle.perp_norm(g)
    small = NoisyData(f=data.f, delta=0.5 * perp, ell=data.ell, perp_norm=perp)
    with pytest.raises(InadmissibleDataError) as err2:
        minimize_dual(op, small)
    assert "|g_perp| < delta" in str(err2.value)


def test_objective_linear_along_perp_direction():
    # on g = alpha * g_perp with ||g_perp|| > delta the objective along
    # the ray q = alpha g_perp decreases linearly: no minimizer exists
    op, oracle, _ = toy_with_data(40, n_v=3, n_m=3, n_o=3)
    rng = np.random.default_rng(41)
    p = oracle.perp(rng.standard_normal(op.n_h))
    pn = oracle.g_norm(p)
    assert pn > 1e-10
    delta = pn / 1.5  # ||g_perp|| = 1.5 delta
    lam, f = op.split(p)
    data = NoisyData(f=f, delta=delta, ell=lam)
    alphas = np.linspace(0.0, 5.0, 11)
    vals = [dual_objective(op, data, None, a * p) for a in alphas]
    assert np.all(np.diff(vals) < 0)
    # slope is delta ||g_perp|| - ||g_perp||^2 exactly (A* g_perp = 0)
    slope = (vals[1] - vals[0]) / (alphas[1] - alphas[0])
    assert np.isclose(slope, delta * pn - pn * pn, rtol=1e-9)


def test_projected_dual_enforces_constraint():
    op, oracle, data = toy_with_data(50, n_m=4, n_o=5)
    rng = np.random.default_rng(51)
    b = rng.standard_normal((op.n_o, 1))
    b /= np.sqrt(b[:, 0] @ oracle.go @ b[:, 0])
    pr = Projector(basis_o=b, admissibility="unknown").validate(op)
    res = minimize_dual(op, data, projector=pr)
    assert res.converged
    # the projected residual must vanish at the constrained optimum
    resid = op.apply_a(res.u) - data.stacked(op)
    assert op.norm_h(pr.apply(op, resid)) <= 1e-7 * data.delta
    assert res.checks["projected_residual"] <= 1e-7 * data.delta
    scale = max(op.vdot(res.u, res.u), 1e-300)
    assert res.checks["identity"] <= 1e-7 * scale


def test_matrix_free_agrees_with_dense():
    op, _, data = toy_with_data(60)
    res_d = minimize_dual(op, data)
    res_mf = minimize_dual(op, data,
                           options=DualOptions(force_matrix_free=True))
    assert op.norm_v(res_d.u - res_mf.u) <= 1e-6 * max(op.norm_v(res_d.u), 1e-12)


def test_demeestere_matches_newton():
    op, _, data = toy_with_data(70)
    p, u, trace = demeestere_iterate(op, data, eps_tol=1e-12)
    assert len(trace) >= 2
    eps_ref, sol = morozov_find_epsilon(op, data, tol=1e-10)
    assert abs(trace[-1] - eps_ref) <= 1e-6 * eps_ref
    assert op.norm_v(u - sol.u) <= 1e-6 * max(op.norm_v(sol.u), 1e-12)
    # first eps in the trace is delta by construction of q_0
    assert np.isclose(trace[0], data.delta)


def test_demeestere_rejects_inadmissible():
    op = make_toy(80)
    rng = np.random.default_rng(81)
    f0 = rng.standard_normal(op.n_o)
    data = make_inadmissible_data(op, algebraic_perp(op), f0, delta=0.3)
    assert np.isclose(data.perp_norm, 1.5 * data.delta)
    with pytest.raises(InadmissibleDataError):
        demeestere_iterate(op, data)


def test_morozov_from_dual_guard():
    op = make_toy(90)
    with pytest.raises(ValueError):
        morozov_from_dual(op, np.zeros(op.n_h), 0.1)


def test_eps_from_dual_equals_delta_over_norm():
    op, _, data = toy_with_data(100)
    res = minimize_dual(op, data)
    q = res.p.stacked(op)
    assert np.isclose(morozov_from_dual(op, res.p, data.delta),
                      data.delta / op.norm_h(q), rtol=1e-12)
