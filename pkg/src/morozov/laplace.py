"""Interior-data assimilation for the Laplace equation.

Find u harmonic on the unit square given a noisy observation of u on an
open subset omega.  Spaces: V = P1 on the square with the full H1 inner
product, M = P1 with zero boundary values carrying the H1_0 (gradient)
inner product, O = P0 on the omega triangles with the L2(omega) inner
product.  The weak constraint is b(u, mu) = integral of grad u . grad mu
and the observation is the cell-average map.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assemble import MorleySpace, assemble_p1, assemble_subdomain_mass, \
    p1_gradients, p1_zero_boundary
from .backends import PerpProjection, algebraic_perp
from .numerics import smallest_eigenpairs
from .operator import AssimilationOperator, Projector, \
    constant_observation_projector


def build_laplace_da(mesh):
    """Assemble the interior-data operator on a mesh with omega flags."""
    stiffness, mass = assemble_p1(mesh)
    dof_m = p1_zero_boundary(mesh)
    gram_v = stiffness + mass
    gram_m = dof_m.restrict(stiffness)
    b_form = dof_m.restrict(stiffness, cols=False)
    c_form, go_diag, omega_tris = assemble_subdomain_mass(mesh)
    gram_o = sp.diags(go_diag)
    meta = {
        "application": "laplace",
        "mesh": mesh,
        "dof_m": dof_m,
        "omega_tris": omega_tris,
    }
    return AssimilationOperator(gram_v, gram_m, gram_o, b_form, c_form, meta)


# --- exact solutions --------------------------------------------------------


@dataclass
class BenchmarkSolution:
    """A closed-form benchmark solution with its gradient."""

    name: str
    u: callable
    grad: callable

    def vertex_values(self, mesh):
        return self.u(mesh.verts[:, 0], mesh.verts[:, 1])

    def cell_averages(self, mesh):
        """P0(omega) observation of the solution (mid-edge quadrature)."""
        omega = np.flatnonzero(mesh.in_omega)
        p = mesh.corners()[omega]
        acc = np.zeros(len(omega))
        for k in range(3):
            mid = 0.5 * (p[:, (k + 1) % 3] + p[:, (k + 2) % 3])
            acc += self.u(mid[:, 0], mid[:, 1])
        return acc / 3.0


def exact_solution(name):
    """Named harmonic benchmarks on the unit square, scaled to max 1.

    'poly': (1 - x^3 + 3 x y^2) / 3.
    'exp-sin': sin(4(1 - y)) exp(4(x - 1)).
    """
    if name == "poly":
        return BenchmarkSolution(
            "poly",
            u=lambda x, y: (1.0 - x ** 3 + 3.0 * x * y * y) / 3.0,
            grad=lambda x, y: (y * y - x * x, 2.0 * x * y),
        )
    if name == "exp-sin":
        def u(x, y):
            return np.sin(4.0 * (1.0 - y)) * np.exp(4.0 * (x - 1.0))

        def grad(x, y):
            e = np.exp(4.0 * (x - 1.0))
            return (4.0 * np.sin(4.0 * (1.0 - y)) * e,
                    -4.0 * np.cos(4.0 * (1.0 - y)) * e)

        return BenchmarkSolution("exp-sin", u=u, grad=grad)
    raise ValueError(f"unknown exact solution {name!r}")


def p1_error(mesh, u_vec, sol, tri_mask=None, gradient=True):
    """Quadrature error of a vertex field against an exact solution.

    Mid-edge rule per triangle; with `gradient` the H1 norm, without it
    the L2 norm, optionally restricted to flagged triangles.  Returns
    (absolute, relative).
    """
    tri_ids = np.arange(mesh.n_triangles) if tri_mask is None \
        else np.flatnonzero(tri_mask)
    tris = mesh.tris[tri_ids]
    areas = mesh.areas[tri_ids]
    p = mesh.corners()[tri_ids]
    u_vec = np.asarray(u_vec, float)

    err2 = np.zeros(len(tri_ids))
    ref2 = np.zeros(len(tri_ids))
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        mid = 0.5 * (p[:, a] + p[:, b])
        uh = 0.5 * (u_vec[tris[:, a]] + u_vec[tris[:, b]])
        ue = sol.u(mid[:, 0], mid[:, 1])
        err2 += (uh - ue) ** 2
        ref2 += ue ** 2
    err2 *= areas / 3.0
    ref2 *= areas / 3.0

    if gradient:
        grads = p1_gradients(mesh)[tri_ids]
        gh = np.einsum("tid,ti->td", grads, u_vec[tris])
        gerr = np.zeros(len(tri_ids))
        gref = np.zeros(len(tri_ids))
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            mid = 0.5 * (p[:, a] + p[:, b])
            gx, gy = sol.grad(mid[:, 0], mid[:, 1])
            gerr += (gh[:, 0] - gx) ** 2 + (gh[:, 1] - gy) ** 2
            gref += gx ** 2 + gy ** 2
        err2 += areas / 3.0 * gerr
        ref2 += areas / 3.0 * gref

    abs_err = float(np.sqrt(err2.sum()))
    ref = float(np.sqrt(ref2.sum()))
    return abs_err, abs_err / ref if ref > 0 else np.inf


def h1_error(mesh, u_vec, sol):
    return p1_error(mesh, u_vec, sol, gradient=True)


def l2_omega_error(mesh, u_vec, sol):
    return p1_error(mesh, u_vec, sol, tri_mask=mesh.in_omega, gradient=False)


# --- range-complement backend ----------------------------------------------


class LaplaceRangePerpBackend:
    """Projections onto the orthogonal complement of the operator range.

    The native route exploits the characterization of the complement as
    pairs (lambda, Delta lambda) with lambda a clamped plate function on
    omega, discretized with Morley elements on the omega sub-mesh; it
    scales to any mesh and its two-sided identity holds exactly in the
    broken norms.  The algebraic route projects directly against an
    orthonormalized basis of the discrete range and is exact for the
    assembled operator; it is the default when the dense factorization
    is affordable.
    """

    def __init__(self, op, mode="auto"):
        self.op = op
        self.mesh = op.meta["mesh"]
        self.dof_m = op.meta["dof_m"]
        self.mode = mode
        self._morley = None

    @property
    def morley(self):
        if self._morley is None:
            self._morley = MorleySpace(self.mesh)
        return self._morley

    def _resolve(self, mode):
        mode = mode or self.mode
        if mode == "auto":
            mode = "algebraic" if self.op.use_dense_normal() else "native"
        return mode

    def project(self, ell, f, mode=None):
        if self._resolve(mode) == "algebraic":
            return algebraic_perp(self.op).project(ell, f)
        return self.project_native(ell, f)

    def project_native(self, ell, f):
        """Stabilized Morley solve with broken-norm diagnostics.

        The identity pair reports (g, g_perp) against the stabilized
        energy of the minimizer (they agree by construction); norm_h is
        the plain pair norm, gradient part plus Laplacian part.
        """
        op, ms = self.op, self.morley
        f = np.zeros(op.n_o) if f is None else np.asarray(f, float)
        rhs = ms.load.T @ f
        if ell is not None:
            rhs = rhs + ms.cross @ self.dof_m.expand(np.asarray(ell, float))
        coeffs = ms.solve(rhs)
        f_perp = ms.cell_laplacian(coeffs)
        lam = ms.vertex_values(coeffs)[self.dof_m.free_vertices]
        norm2 = float(coeffs @ (ms.k_grad @ coeffs)
                      + coeffs @ (ms.k_lap @ coeffs))
        stab2 = norm2 + float(coeffs @ (ms.jump_penalty() @ coeffs))
        return PerpProjection(
            lam=lam, f=f_perp,
            norm_h=float(np.sqrt(max(norm2, 0.0))),
            identity_lhs=float(rhs @ coeffs), identity_rhs=stab2,
            mode="native", native={"coeffs": coeffs},
        )


def make_backend(op):
    return LaplaceRangePerpBackend(op)


# --- constraint projectors --------------------------------------------------


def _gram_orthonormalize(op, basis, part):
    """Exact G-orthonormalization of a small column basis."""
    gram = op.gram_m if part == "m" else op.gram_o
    overlap = basis.T @ (gram @ basis)
    r = np.linalg.cholesky(overlap).T
    return basis @ np.linalg.inv(r)


def _laplacian_modes(mesh, tri_mask, count):
    """Dirichlet Laplacian eigenpairs on the flagged sub-triangulation.

    Dofs are vertices interior to the sub-mesh (not on the square's
    boundary and not touching any excluded triangle).  Returns (values,
    full-vertex vectors) with mass-orthonormal columns, zero-extended.
    """
    stiffness, mass = assemble_p1(mesh, tri_mask)
    touched = np.zeros(mesh.n_vertices, bool)
    touched[np.unique(mesh.tris[tri_mask])] = True
    blocked = mesh.boundary_vertex_mask().copy()
    excluded = ~tri_mask
    if excluded.any():
        blocked[np.unique(mesh.tris[excluded])] = True
    free = np.flatnonzero(touched & ~blocked)
    if len(free) < count:
        raise ValueError(
            f"sub-mesh has only {len(free)} interior vertices, "
            f"cannot extract {count} modes"
        )
    k_ff = stiffness[free][:, free]
    m_ff = mass[free][:, free]
    pairs = smallest_eigenpairs(k_ff, m_ff, count)
    full = np.zeros((mesh.n_vertices, count))
    full[free] = pairs.vectors
    return pairs.values, full


def make_projector_PO(op):
    """Rank-one projector onto the constant observation, (0, 1_omega)."""
    return constant_observation_projector(op)


def make_projector_PM0(op, n_modes=5):
    """Projector onto constants in O and the first constraint modes.

    The modes are the `n_modes` lowest Dirichlet Laplacian
    eigenfunctions of the complement of omega, extended by zero; they
    vanish on omega, which keeps the span inside the closure of the
    operator range.
    """
    mesh = op.meta["mesh"]
    values, full = _laplacian_modes(mesh, ~mesh.in_omega, n_modes)
    basis_m = full[op.meta["dof_m"].free_vertices] / np.sqrt(values)
    basis_m = _gram_orthonormalize(op, basis_m, "m")
    basis_o = make_projector_PO(op).basis_o
    return Projector(basis_m=basis_m, basis_o=basis_o,
                     admissibility="admissible", label="pm0")


def make_projector_PM_nonadmissible(op, n_modes=5):
    """Like the constraint projector but with whole-square eigenmodes.

    Those modes do not vanish on omega, so their span leaves the closure
    of the operator range: the projector violates the admissibility
    assumption and is kept for comparison runs.
    """
    mesh = op.meta["mesh"]
    all_tris = np.ones(mesh.n_triangles, bool)
    values, full = _laplacian_modes(mesh, all_tris, n_modes)
    basis_m = full[op.meta["dof_m"].free_vertices] / np.sqrt(values)
    basis_m = _gram_orthonormalize(op, basis_m, "m")
    basis_o = make_projector_PO(op).basis_o
    return Projector(basis_m=basis_m, basis_o=basis_o,
                     admissibility="violated", label="pm")
