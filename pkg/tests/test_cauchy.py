import numpy as np
import pytest

from morozov import cauchy, laplace
from morozov.estimator import build_problem
from morozov.mesh import GAMMA_TILDE, OmegaSpec, generate_mesh
from morozov.mixed import check_admissible, morozov_find_epsilon, solve_mixed
from morozov.noise import synth_noise_pointwise
from morozov.operator import NoisyData


def test_exact_solution_matches_cauchy_conditions():
    sol = cauchy.exact_solution()
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 0.95, 20)
    # harmonic
    h = 1e-4
    y = rng.uniform(0.05, 0.95, 20)
    lap = (sol.u(x + h, y) + sol.u(x - h, y) + sol.u(x, y + h)
           + sol.u(x, y - h) - 4 * sol.u(x, y)) / h ** 2
    assert np.max(np.abs(lap)) < 1e-3
    # zero Neumann data on the accessible side y = 0
    assert np.allclose(sol.grad(x, 0.0 * x)[1], 0.0)
    assert np.max(np.abs(sol.u(x, y))) <= 1.0
    with pytest.raises(ValueError):
        cauchy.exact_solution("sinh")


def test_build_operator_structure():
    mesh = generate_mesh(8, OmegaSpec.boundary_partition(0.25))
    op = cauchy.build_cauchy(mesh)
    gamma = op.meta["gamma"]
    assert op.n_o == len(gamma) == 9
    assert np.all(mesh.verts[gamma, 1] == 0.0)
    # test space vanishes on the inaccessible boundary only
    blocked = mesh.boundary_vertex_mask(markers={GAMMA_TILDE})
    assert op.n_m == mesh.n_vertices - blocked.sum()
    # the observation of a vertex field is its trace at the Gamma vertices
    rng = np.random.default_rng(1)
    u = rng.standard_normal(op.n_v)
    assert np.allclose(op.apply_c(u), u[gamma])


def test_trace_values():
    op, _ = build_problem("cauchy", 6)
    sol = cauchy.exact_solution()
    f = cauchy.trace_values(op, sol)
    pts = op.meta["mesh"].verts[op.meta["gamma"]]
    assert np.allclose(f, np.cos(np.pi * pts[:, 0]) / np.cosh(np.pi))


def test_dense_range_backend():
    op, backend = build_problem("cauchy", 6)
    proj = backend.project(None, np.ones(op.n_o))
    assert proj.norm_h == 0.0
    data = NoisyData(f=cauchy.trace_values(op, cauchy.exact_solution()),
                     delta=0.01)
    report = check_admissible(op, data, backend=backend)
    assert report.admissible
    assert report.perp_norm == 0.0


def test_projector_po():
    op, _ = build_problem("cauchy", 6)
    p = cauchy.make_projector_PO(op).validate(op)
    assert p.rank == 1
    f = np.random.default_rng(2).standard_normal(op.n_o)
    pf = op.split(p.apply(op, op.stack(None, f)))[1]
    assert np.allclose(pf, pf[0])


def test_exact_data_reconstruction():
    op, _ = build_problem("cauchy", 12)
    mesh = op.meta["mesh"]
    sol = cauchy.exact_solution()
    f0 = cauchy.trace_values(op, sol)
    s = solve_mixed(op, NoisyData(f=f0, delta=0.0), 1e-8)
    # trace is matched tightly
    assert op.norm_o(op.apply_c(s.u) - f0) <= 1e-3 * op.norm_o(f0)
    # the field is accurate near the accessible side and degrades away
    # from it (conditional stability of the continuation problem)
    near = mesh.barycenters[:, 1] < 0.25
    l2_near = laplace.p1_error(mesh, s.u, sol, tri_mask=near,
                               gradient=False)[1]
    assert l2_near < 0.10
    h1_rel = laplace.h1_error(mesh, s.u, sol)[1]
    assert h1_rel < 1.0
    # more regularization means worse data fit
    s_coarse = solve_mixed(op, NoisyData(f=f0, delta=0.0), 1e-2)
    assert s_coarse.discrepancy > s.discrepancy


def test_morozov_with_trace_noise():
    op, _ = build_problem("cauchy", 8)
    sol = cauchy.exact_solution()
    f0 = cauchy.trace_values(op, sol)
    data = synth_noise_pointwise(op, f0, delta_r=0.05, seed=0)
    eps, s = morozov_find_epsilon(op, data, tol=1e-8)
    assert abs(s.discrepancy - data.delta) <= 1e-8 * data.delta
    assert eps > 0
