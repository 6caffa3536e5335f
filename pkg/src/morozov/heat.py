"""Interior-data assimilation for the 1D heat equation.

Space-time formulation on Q = (0,1) x (0,T): find u with
du/dt - d2u/dx2 = 0 given a noisy observation of u on a vertical strip
omega x (0,T).  Spaces: V carries the L2 + x-derivative inner product
(no time derivative), M = H1_0(Q) with the full space-time gradient
inner product, O = P0 on the strip triangles with L2.  The constraint
is written with the time derivative moved onto the test function:
b(u, mu) = -integral u dmu/dt + integral du/dx dmu/dx.

The range complement consists of pairs (lam, dlam/dt + d2lam/dx2) with
lam supported on the closed strip, vanishing on its whole boundary and
with zero x-derivative on the lateral sides.  The native backend
discretizes that class with finite differences on the strip grid.
"""

import numpy as np
import scipy.sparse as sp

from .assemble import assemble_p1, assemble_p1_heat, assemble_subdomain_mass, \
    p1_zero_boundary
from .backends import PerpProjection, algebraic_perp
from .laplace import BenchmarkSolution
from .mesh import OmegaSpec, generate_mesh
from .numerics import factorize_spd
from .operator import AssimilationOperator, constant_observation_projector


def heat_mesh(n_x, n_t=None, horizon=1.0, omega=(0.25, 0.75)):
    """Crossed space-time mesh of (0,1) x (0,horizon) with a strip omega."""
    return generate_mesh(n_x, OmegaSpec.strip(*omega), ny=n_t, height=horizon)


def build_heat_da(mesh):
    """Assemble the heat interior-data operator on a strip mesh."""
    stiffness, mass = assemble_p1(mesh)
    k_xx, conv = assemble_p1_heat(mesh)
    dof_m = p1_zero_boundary(mesh)
    gram_v = mass + k_xx
    gram_m = dof_m.restrict(stiffness)
    b_form = dof_m.restrict(k_xx - conv, cols=False)
    c_form, go_diag, omega_tris = assemble_subdomain_mass(mesh)
    gram_o = sp.diags(go_diag)
    meta = {
        "application": "heat",
        "mesh": mesh,
        "dof_m": dof_m,
        "omega_tris": omega_tris,
    }
    return AssimilationOperator(gram_v, gram_m, gram_o, b_form, c_form, meta)


def exact_solution(kind="separated", horizon=1.0):
    """Closed-form heat solutions on the space-time domain.

    'separated': sin(pi x) exp(-pi^2 t).
    'poly': (x^2 + 2t) / (1 + 2T), linear growth instead of decay.
    """
    if kind == "separated":
        def u(x, t):
            return np.sin(np.pi * x) * np.exp(-np.pi ** 2 * t)

        def grad(x, t):
            e = np.exp(-np.pi ** 2 * t)
            return (np.pi * np.cos(np.pi * x) * e,
                    -np.pi ** 2 * np.sin(np.pi * x) * e)

        return BenchmarkSolution("heat-separated", u=u, grad=grad)
    if kind == "poly":
        s = 1.0 + 2.0 * horizon
        return BenchmarkSolution(
            "heat-poly",
            u=lambda x, t: (x * x + 2.0 * t) / s,
            grad=lambda x, t: (2.0 * x / s, np.full_like(np.asarray(t, float), 2.0 / s)),
        )
    raise ValueError(f"unknown heat solution {kind!r}")


def v_error(op, u_vec, sol):
    """Discrete V-norm error against the vertex interpolant of `sol`.

    Returns (absolute, relative).
    """
    mesh = op.meta["mesh"]
    exact = sol.u(mesh.verts[:, 0], mesh.verts[:, 1])
    diff = np.asarray(u_vec, float) - exact
    abs_err = float(np.sqrt(diff @ (op.gram_v @ diff)))
    ref = float(np.sqrt(exact @ (op.gram_v @ exact)))
    return abs_err, abs_err / ref if ref > 0 else np.inf


class HeatRangePerpBackend:
    """Range-complement projections for the heat strip observation.

    The native route minimizes the misfit over finite-difference fields
    lam on the strip grid (nodes aligned with the mesh columns), with
    the heat operator L = d/dt + d2/dx2 applied through ghost reflection
    at the lateral sides, so the returned pair is (lam, L lam).  The
    algebraic route is exact for the assembled operator and is the
    default when affordable.
    """

    def __init__(self, op, mode="auto"):
        self.op = op
        self.mesh = op.meta["mesh"]
        self.dof_m = op.meta["dof_m"]
        self.mode = mode
        self._fd = None

    def _resolve(self, mode):
        mode = mode or self.mode
        if mode == "auto":
            mode = "algebraic" if self.op.use_dense_normal() else "native"
        return mode

    @property
    def fd(self):
        if self._fd is None:
            self._fd = _StripGrid(self.mesh)
        return self._fd

    def project(self, ell, f, mode=None):
        if self._resolve(mode) == "algebraic":
            return algebraic_perp(self.op).project(ell, f)
        return self.project_native(ell, f)

    def project_native(self, ell, f):
        op, fd = self.op, self.fd
        f = np.zeros(op.n_o) if f is None else np.asarray(f, float)
        f_nodes = fd.cells_to_nodes(f, op.meta["omega_tris"])
        rhs = fd.lop.T @ (fd.weights * f_nodes)
        if ell is not None:
            ell_nodes = fd.vertex_to_nodes(self.dof_m.expand(np.asarray(ell, float)))
            rhs = rhs + fd.grad_full @ ell_nodes
        lam_u = fd.solve(rhs)
        l_lam = fd.lop @ lam_u

        lam_field = fd.nodes_to_vertex(fd.expand(lam_u))
        lam = lam_field[self.dof_m.free_vertices]
        f_field = fd.nodes_to_vertex(l_lam)
        f_perp = f_field[self.mesh.tris[op.meta["omega_tris"]]].mean(axis=1)

        norm2 = float(lam_u @ (fd.grad_uu @ lam_u)
                      + l_lam @ (fd.weights * l_lam))
        return PerpProjection(
            lam=lam, f=f_perp,
            norm_h=float(np.sqrt(max(norm2, 0.0))),
            identity_lhs=float(rhs @ lam_u), identity_rhs=norm2,
            mode="native", native={"lam_nodes": fd.expand(lam_u)},
        )


class _StripGrid:
    """Finite-difference machinery on the strip-aligned node grid."""

    def __init__(self, mesh):
        nx, nt, _, height = mesh.grid
        xs = np.linspace(0.0, 1.0, nx + 1)
        in_omega = mesh.in_omega
        bary = mesh.barycenters[in_omega]
        lo, hi = bary[:, 0].min(), bary[:, 0].max()
        cols = np.flatnonzero((xs > lo - 1.0 / nx) & (xs < hi + 1.0 / nx))
        if len(cols) < 5:
            raise ValueError(
                f"strip covers only {len(cols)} mesh columns; the "
                f"finite-difference route needs at least 5"
            )
        self.mesh = mesh
        self.cols = cols
        self.nxs = len(cols) - 1
        self.nt = nt
        self.hx = 1.0 / nx
        self.ht = height / nt
        self.n_nodes = (self.nxs + 1) * (nt + 1)

        # unknowns: nodes strictly inside the strip rectangle
        ii, jj = np.meshgrid(np.arange(self.nxs + 1), np.arange(nt + 1),
                             indexing="ij")
        interior = (ii > 0) & (ii < self.nxs) & (jj > 0) & (jj < nt)
        self.unknown = np.flatnonzero(interior.ravel())
        self.n_unknown = len(self.unknown)
        node_id = np.full(self.n_nodes, -1, dtype=int)
        node_id[self.unknown] = np.arange(self.n_unknown)

        def nid(i, j):
            return i * (nt + 1) + j

        # heat operator rows at every node, columns at unknowns;
        # references to boundary nodes drop out (they hold zero), and
        # the lateral rows use the ghost reflection lam(-1) = lam(1)
        rows, colz, vals = [], [], []

        def add(r, i, j, w):
            k = node_id[nid(i, j)]
            if k >= 0:
                rows.append(r)
                colz.append(k)
                vals.append(w)

        hx2 = self.hx ** 2
        for i in range(self.nxs + 1):
            for j in range(nt + 1):
                r = nid(i, j)
                if i == 0:
                    add(r, 1, j, 2.0 / hx2)
                elif i == self.nxs:
                    add(r, self.nxs - 1, j, 2.0 / hx2)
                else:
                    add(r, i - 1, j, 1.0 / hx2)
                    add(r, i, j, -2.0 / hx2)
                    add(r, i + 1, j, 1.0 / hx2)
                    if j == 0:
                        add(r, i, 1, 1.0 / self.ht)
                        add(r, i, 0, -1.0 / self.ht)
                    elif j == nt:
                        add(r, i, nt, 1.0 / self.ht)
                        add(r, i, nt - 1, -1.0 / self.ht)
                    else:
                        add(r, i, j + 1, 0.5 / self.ht)
                        add(r, i, j - 1, -0.5 / self.ht)
        self.lop = sp.csr_matrix(
            (vals, (rows, colz)), shape=(self.n_nodes, self.n_unknown)
        )

        # trapezoid quadrature weights per node
        wx = np.full(self.nxs + 1, self.hx)
        wx[[0, -1]] *= 0.5
        wt = np.full(nt + 1, self.ht)
        wt[[0, -1]] *= 0.5
        self.weights = np.outer(wx, wt).ravel()

        # gradient Gram over grid edges (full nodes x full nodes)
        er, ec, ev = [], [], []

        def edge(a, b, w):
            for (p, q, s) in ((a, a, w), (b, b, w), (a, b, -w), (b, a, -w)):
                er.append(p)
                ec.append(q)
                ev.append(s)

        for i in range(self.nxs):
            for j in range(nt + 1):
                w = (wt[j] / self.hx)
                edge(nid(i, j), nid(i + 1, j), w)
        for i in range(self.nxs + 1):
            for j in range(nt):
                w = (wx[i] / self.ht)
                edge(nid(i, j), nid(i, j + 1), w)
        self.grad_full = sp.csr_matrix(
            (ev, (er, ec)), shape=(self.n_nodes, self.n_nodes)
        )[self.unknown]
        self.grad_uu = self.grad_full[:, self.unknown]

        self._solve = None
        self._cell_map = None
        self._vertex_map = None

    def solve(self, rhs):
        if self._solve is None:
            normal = self.grad_uu + self.lop.T @ sp.diags(self.weights) @ self.lop
            self._solve = factorize_spd(normal.tocsr())
        return self._solve(rhs)

    def expand(self, lam_u):
        full = np.zeros(self.n_nodes)
        full[self.unknown] = lam_u
        return full

    # --- transfers between the node grid and the mesh -------------------

    def _node_vertex_ids(self):
        nx, nt = self.mesh.grid[0], self.nt
        ids = np.empty(self.n_nodes, dtype=int)
        k = 0
        for i in self.cols:
            for j in range(nt + 1):
                ids[k] = j * (nx + 1) + i
                k += 1
        return ids

    def vertex_to_nodes(self, field):
        if self._vertex_map is None:
            self._vertex_map = self._node_vertex_ids()
        return np.asarray(field, float)[self._vertex_map]

    def nodes_to_vertex(self, nodal):
        """Zero-extended vertex field; cell centers get the corner mean."""
        if self._vertex_map is None:
            self._vertex_map = self._node_vertex_ids()
        mesh = self.mesh
        nx = mesh.grid[0]
        full = np.zeros(mesh.n_vertices)
        full[self._vertex_map] = nodal
        n_grid = (nx + 1) * (self.nt + 1)
        for i in self.cols[:-1]:
            for j in range(self.nt):
                corners = [j * (nx + 1) + i, j * (nx + 1) + i + 1,
                           (j + 1) * (nx + 1) + i + 1, (j + 1) * (nx + 1) + i]
                full[n_grid + j * nx + i] = full[corners].mean()
        return full

    def cells_to_nodes(self, f, omega_tris):
        """P0 strip values -> nodal values (mean of incident cells)."""
        if self._cell_map is None:
            mesh = self.mesh
            ids = self._node_vertex_ids()
            lookup = np.full(mesh.n_vertices, -1, dtype=int)
            lookup[ids] = np.arange(self.n_nodes)
            rows, cols = [], []
            for e, t in enumerate(omega_tris):
                for v in mesh.tris[t]:
                    k = lookup[v]
                    if k >= 0:
                        rows.append(k)
                        cols.append(e)
            mat = sp.csr_matrix(
                (np.ones(len(rows)), (rows, cols)),
                shape=(self.n_nodes, len(omega_tris)),
            )
            counts = np.asarray(mat.sum(axis=1)).ravel()
            counts[counts == 0] = 1.0
            self._cell_map = (mat, counts)
        mat, counts = self._cell_map
        return (mat @ np.asarray(f, float)) / counts


def make_backend(op):
    return HeatRangePerpBackend(op)


def make_projector_PO(op):
    """Rank-one projector onto the constant observation, (0, 1_q)."""
    return constant_observation_projector(op)
