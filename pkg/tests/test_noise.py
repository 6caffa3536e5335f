import numpy as np
import pytest

from morozov import laplace
from morozov.backends import algebraic_perp
from morozov.cauchy import build_cauchy, exact_solution as cauchy_exact, trace_values
from morozov.estimator import build_problem
from morozov.mesh import OmegaSpec, generate_mesh
from morozov.noise import (
    make_inadmissible_data,
    synth_noise_pointwise,
    synth_noise_structured,
)


def laplace_setup(n=10):
    op, backend = build_problem("laplace", n, "exterior-of-disk", 0.4)
    sol = laplace.exact_solution("poly")
    mesh = op.meta["mesh"]
    return op, backend, sol.cell_averages(mesh)


def test_structured_noise_split():
    op, backend, f0 = laplace_setup()
    delta = 0.1
    data = synth_noise_structured(op, backend, f0, delta)
    # exact split on the algebraic route
    assert data.perp_norm == 0.5 * delta
    alg = algebraic_perp(op)
    g = data.stacked(op)
    assert np.isclose(op.norm_h(alg.perp(g)), 0.5 * delta, rtol=1e-10)
    # total perturbation has H-norm delta against the cleaned base data
    base = op.stack(None, f0)
    base_clean = base - alg.perp(base)
    assert np.isclose(op.norm_h(g - base_clean), delta, rtol=1e-10)


def test_structured_noise_deterministic():
    op, backend, f0 = laplace_setup(8)
    d1 = synth_noise_structured(op, backend, f0, 0.05)
    d2 = synth_noise_structured(op, backend, f0, 0.05)
    assert np.array_equal(d1.f, d2.f)
    assert np.array_equal(d1.ell, d2.ell)


def test_structured_noise_rejects_delta_above_data():
    # observation anti-parallel to the range noise direction makes the
    # perturbed data smaller than delta, breaking delta < ||g||
    op, backend, _ = laplace_setup(8)
    mesh = op.meta["mesh"]
    w = (mesh.verts[:, 0] ** 2 + mesh.verts[:, 1] ** 2) / 4.0
    par = op.stack(op.apply_b(w), op.apply_c(w))
    delta = 0.1
    f_anti = -delta * op.apply_c(w) / op.norm_h(par)
    with pytest.raises(ValueError):
        synth_noise_structured(op, backend, f_anti, delta=delta)


def test_pointwise_noise_norm_and_determinism():
    op, backend, f0 = laplace_setup(8)
    data = synth_noise_pointwise(op, f0, delta=0.07, seed=4)
    assert np.isclose(op.norm_o(data.f - f0), 0.07, rtol=1e-12)
    again = synth_noise_pointwise(op, f0, delta=0.07, seed=4)
    assert np.array_equal(data.f, again.f)
    other = synth_noise_pointwise(op, f0, delta=0.07, seed=5)
    assert not np.array_equal(data.f, other.f)


def test_pointwise_relative_level():
    op, backend, f0 = laplace_setup(8)
    data = synth_noise_pointwise(op, f0, delta_r=0.1, seed=0)
    target = 0.1 * op.norm_o(f0)
    assert np.isclose(data.delta, target)
    assert np.isclose(op.norm_o(data.f - f0), target, rtol=1e-12)


def test_pointwise_requires_exactly_one_level():
    op, backend, f0 = laplace_setup(8)
    with pytest.raises(ValueError):
        synth_noise_pointwise(op, f0)
    with pytest.raises(ValueError):
        synth_noise_pointwise(op, f0, delta=0.1, delta_r=0.1)


def test_pointwise_noise_observes_vertex_field():
    # the perturbation is the cell average of a vertex field, so it must
    # be constructible from one value per vertex
    op, backend, f0 = laplace_setup(6)
    mesh = op.meta["mesh"]
    data = synth_noise_pointwise(op, f0, delta=0.05, seed=11)
    theta_v = np.random.default_rng(11).uniform(0.0, 1.0, mesh.n_vertices)
    theta = theta_v[mesh.tris[mesh.in_omega]].mean(axis=1)
    scale = 0.05 / op.norm_o(theta)
    assert np.allclose(data.f - f0, scale * theta)


def test_pointwise_noise_cauchy_trace():
    mesh = generate_mesh(8, OmegaSpec.boundary_partition(0.25))
    op = build_cauchy(mesh)
    sol = cauchy_exact("cosh")
    f0 = trace_values(op, sol)
    data = synth_noise_pointwise(op, f0, delta_r=0.05, seed=2)
    gamma = op.meta["gamma"]
    theta_v = np.random.default_rng(2).uniform(0.0, 1.0, mesh.n_vertices)
    theta = theta_v[gamma]
    scale = data.delta / op.norm_o(theta)
    assert np.allclose(data.f - f0, scale * theta)


def test_make_inadmissible_data_ratio():
    op, backend, f0 = laplace_setup(8)
    data = make_inadmissible_data(op, algebraic_perp(op), f0, delta=0.08)
    assert np.isclose(data.perp_norm, 1.5 * 0.08)
    alg = algebraic_perp(op)
    assert np.isclose(op.norm_h(alg.perp(data.stacked(op))), 0.12, rtol=1e-9)
    with pytest.raises(ValueError):
        make_inadmissible_data(op, algebraic_perp(op), f0, delta=0.08,
                               ratio=0.9)
