"""P1 / P0 / boundary-trace assembly and a clamped Morley plate space.

All element integrals are exact: P1 products use the analytic formulas,
quadratic integrands use the mid-edge 3-point Gauss rule.  Matrices come
back as CSR on the full vertex set; DofMap slices them to constrained
subspaces.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import as_csr, factorize_spd


@dataclass
class DofMap:
    """Map from mesh vertices to free dofs (-1 means constrained)."""

    tag: str
    vertex_dofs: np.ndarray
    n_free: int

    @property
    def free_vertices(self):
        return np.flatnonzero(self.vertex_dofs >= 0)

    def restrict(self, a, rows=True, cols=True):
        """Slice a full-vertex matrix to the free dofs."""
        a = as_csr(a)
        idx = self.free_vertices
        if rows:
            a = a[idx]
        if cols:
            a = a[:, idx]
        return as_csr(a)

    def expand(self, u_free):
        """Free-dof vector -> full vertex vector (zeros on constraints)."""
        full = np.zeros(len(self.vertex_dofs))
        full[self.free_vertices] = u_free
        return full


def _make_map(tag, nv, constrained_mask):
    dofs = np.full(nv, -1, dtype=int)
    free = np.flatnonzero(~constrained_mask)
    dofs[free] = np.arange(len(free))
    return DofMap(tag, dofs, len(free))


def p1_all(mesh):
    return _make_map("p1", mesh.n_vertices, np.zeros(mesh.n_vertices, bool))


def p1_zero_boundary(mesh):
    return _make_map("p1-zero-boundary", mesh.n_vertices, mesh.boundary_vertex_mask())


def p1_zero_on(mesh, markers):
    """P1 with zeros on boundary edges carrying the given markers."""
    return _make_map(
        f"p1-zero-{sorted(markers)}", mesh.n_vertices,
        mesh.boundary_vertex_mask(markers=set(markers)),
    )


def p1_gradients(mesh):
    """(nt, 3, 2) constant gradients of the barycentric basis."""
    p = mesh.corners()
    g = np.empty_like(p)
    two_a = (2.0 * mesh.areas)[:, None]
    for i in range(3):
        a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        g[:, i, 0] = (a[:, 1] - b[:, 1])
        g[:, i, 1] = (b[:, 0] - a[:, 0])
    return g / two_a[:, :, None]


def _scatter(local, tris, nv):
    """Assemble (nt, 3, 3) local blocks into an nv x nv CSR matrix."""
    nt = len(tris)
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return as_csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(nv, nv)))


def assemble_p1(mesh, tri_mask=None):
    """Full-vertex stiffness and mass matrices.

    With `tri_mask`, only the flagged triangles contribute (used for the
    L2(omega) error norm and the eigenproblem on the complement).
    Returns (stiffness, mass), both symmetric CSR.
    """
    grads = p1_gradients(mesh)
    areas = mesh.areas
    tris = mesh.tris
    if tri_mask is not None:
        grads, areas, tris = grads[tri_mask], areas[tri_mask], tris[tri_mask]
    kloc = areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    mloc = (areas / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    nv = mesh.n_vertices
    return _scatter(kloc, tris, nv), _scatter(mloc, tris, nv)


def assemble_p1_heat(mesh):
    """Anisotropic pieces for the space-time heat constraint.

    Treats the second coordinate as time.  Returns (k_xx, conv) on the
    full vertex set: k_xx[i, j] = integral of dx(phi_i) dx(phi_j) and
    conv[i, j] = integral of phi_j dt(phi_i).
    """
    grads = p1_gradients(mesh)
    areas = mesh.areas
    gx = grads[:, :, 0]
    kloc = areas[:, None, None] * gx[:, :, None] * gx[:, None, :]
    gt = grads[:, :, 1]
    cloc = (areas / 3.0)[:, None, None] * np.broadcast_to(
        gt[:, :, None], (mesh.n_triangles, 3, 3)
    )
    nv = mesh.n_vertices
    return _scatter(kloc, mesh.tris, nv), _scatter(cloc, mesh.tris, nv)


def assemble_subdomain_mass(mesh):
    """P0-on-omega observation coupling.

    Returns (c_form, gram_o_diag, omega_tris): c_form[e, j] = integral of
    the vertex basis phi_j over omega triangle e (so the cell-average
    operator is diag(1/areas) @ c_form), gram_o_diag = triangle areas,
    and the triangle indices fixing the O-dof order.
    """
    omega = np.flatnonzero(mesh.in_omega)
    if len(omega) == 0:
        raise ValueError("mesh has no omega triangles")
    areas = mesh.areas[omega]
    rows = np.repeat(np.arange(len(omega)), 3)
    cols = mesh.tris[omega].ravel()
    vals = np.repeat(areas / 3.0, 3)
    c_form = sp.coo_matrix(
        (vals, (rows, cols)), shape=(len(omega), mesh.n_vertices)
    )
    return as_csr(c_form), areas.copy(), omega


def assemble_boundary_mass(mesh, markers):
    """1D P1 mass on the marked boundary part.

    Returns (gram, trace_rows, gamma_vertices): gram is the ng x ng mass
    matrix of the trace space, trace_rows is the ng x nv form whose rows
    satisfy trace_rows = gram @ S with S the vertex-selection operator.
    """
    sel = [i for i, m in enumerate(mesh.bmarkers) if m in set(markers)]
    if not sel:
        raise ValueError(f"no boundary edges with markers {markers}")
    edges = mesh.bedges[sel]
    gamma = np.unique(edges)
    pos = {v: k for k, v in enumerate(gamma)}
    ng = len(gamma)
    rows, cols, vals = [], [], []
    for a, b in edges:
        length = np.linalg.norm(mesh.verts[a] - mesh.verts[b])
        ia, ib = pos[a], pos[b]
        for (i, j, v) in [(ia, ia, length / 3), (ib, ib, length / 3),
                          (ia, ib, length / 6), (ib, ia, length / 6)]:
            rows.append(i)
            cols.append(j)
            vals.append(v)
    gram = as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(ng, ng)))
    sel_mat = sp.coo_matrix(
        (np.ones(ng), (np.arange(ng), gamma)), shape=(ng, mesh.n_vertices)
    )
    trace_rows = as_csr(gram @ sel_mat.tocsr())
    return gram, trace_rows, gamma


class MorleySpace:
    """Clamped Morley (nonconforming P2) space on a sub-triangulation.

    Dofs are vertex values plus edge-midpoint normal derivatives; both
    are clamped on the boundary of the sub-triangulation.  Normals use
    the global edge orientation (low vertex index to high), so shared
    edges see one consistent sign.

    Exposes the broken gradient matrix k_grad, the piecewise-Laplacian
    product k_lap, the cell-Laplacian map `load` (row e = |T_e| * Delta
    psi_j on triangle e), and the P1 coupling `cross` with
    cross[j, v] = integral over the sub-mesh of grad(phi_v) . grad(psi_j).
    """

    def __init__(self, mesh, tri_mask=None):
        if tri_mask is None:
            tri_mask = mesh.in_omega
        self.mesh = mesh
        self.tri_ids = np.flatnonzero(tri_mask)
        if len(self.tri_ids) == 0:
            raise ValueError("empty sub-triangulation")
        tris = mesh.tris[self.tri_ids]
        areas = mesh.areas[self.tri_ids]
        nt = len(tris)

        edge_verts, tri_edges_all, _ = mesh.edges()
        tri_edges = tri_edges_all[self.tri_ids]
        sub_count = np.bincount(tri_edges.ravel(), minlength=len(edge_verts))
        used_edges = np.flatnonzero(sub_count > 0)
        interior_edges = np.flatnonzero(sub_count == 2)
        boundary_edges = used_edges[sub_count[used_edges] == 1]

        used_verts = np.unique(tris)
        bnd_vert = np.unique(edge_verts[boundary_edges])
        free_verts = np.setdiff1d(used_verts, bnd_vert)

        vdof = np.full(mesh.n_vertices, -1, dtype=int)
        vdof[free_verts] = np.arange(len(free_verts))
        edof = np.full(len(edge_verts), -1, dtype=int)
        edof[interior_edges] = len(free_verts) + np.arange(len(interior_edges))
        self.free_verts = free_verts
        self.n_dofs = len(free_verts) + len(interior_edges)
        self.vdof, self.edof = vdof, edof

        p = mesh.corners()[self.tri_ids]
        centroid = p.mean(axis=1)
        scale = np.sqrt(areas)

        # global-orientation unit normals per local edge (edge k opposite vertex k)
        normals = np.empty((nt, 3, 2))
        mids = np.empty((nt, 3, 2))
        for k in range(3):
            a = tris[:, (k + 1) % 3]
            b = tris[:, (k + 2) % 3]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            tang = mesh.verts[hi] - mesh.verts[lo]
            tang /= np.linalg.norm(tang, axis=1)[:, None]
            normals[:, k, 0] = tang[:, 1]
            normals[:, k, 1] = -tang[:, 0]
            mids[:, k] = 0.5 * (mesh.verts[a] + mesh.verts[b])

        xi_v = (p - centroid[:, None, :]) / scale[:, None, None]
        xi_m = (mids - centroid[:, None, :]) / scale[:, None, None]

        def monomials(xi):
            x, y = xi[..., 0], xi[..., 1]
            return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)

        def mono_grad(xi):
            x, y = xi[..., 0], xi[..., 1]
            zero = np.zeros_like(x)
            one = np.ones_like(x)
            gx = np.stack([zero, one, zero, 2 * x, y, zero], axis=-1)
            gy = np.stack([zero, zero, one, zero, x, 2 * y], axis=-1)
            return np.stack([gx, gy], axis=-1)  # (..., 6, 2)

        z = np.empty((nt, 6, 6))
        z[:, 0:3, :] = monomials(xi_v)
        gm = mono_grad(xi_m)  # (nt, 3, 6, 2)
        z[:, 3:6, :] = np.einsum("tke,tkme->tkm", normals, gm) / scale[:, None, None]
        coeff = np.linalg.inv(z)  # coeff[t, :, j] = xi-monomial coeffs of psi_j

        # residual check of the local Vandermonde inversions
        resid = np.abs(np.einsum("tim,tmj->tij", z, coeff) - np.eye(6)).max()
        if resid > 1e-8:
            raise ValueError(f"Morley local basis ill-conditioned: {resid:.3e}")

        lap = 2.0 * (coeff[:, 3, :] + coeff[:, 5, :]) / (scale ** 2)[:, None]
        grads = (
            np.einsum("tkme,tmj->tkje", mono_grad(xi_m), coeff)
            / scale[:, None, None, None]
        )  # (nt, 3 pts, 6 basis, 2)

        # traces used by the jump penalty: basis values at edge midpoints
        # and normal derivatives at the edge endpoint with the higher
        # global vertex index (the jump is linear and odd about the
        # midpoint, so one endpoint determines it)
        self._val_mid = np.einsum("tkm,tmj->tkj", monomials(xi_m), coeff)
        gvert = (
            np.einsum("tvme,tmj->tvje", mono_grad(xi_v), coeff)
            / scale[:, None, None, None]
        )  # (nt, 3 verts, 6 basis, 2)
        dn_hi = np.empty((nt, 3, 6))
        for k in range(3):
            a = tris[:, (k + 1) % 3]
            b = tris[:, (k + 2) % 3]
            vloc = np.where(a > b, (k + 1) % 3, (k + 2) % 3)
            gv = gvert[np.arange(nt), vloc]  # (nt, 6, 2)
            dn_hi[:, k] = np.einsum("te,tje->tj", normals[:, k], gv)
        self._dn_hi = dn_hi
        self._tri_edges = tri_edges
        self._edge_verts = edge_verts

        k1 = (areas / 3.0)[:, None, None] * np.einsum("tkie,tkje->tij", grads, grads)
        k2 = areas[:, None, None] * lap[:, :, None] * lap[:, None, :]

        # local -> global dof indices; -1 on clamped dofs
        gdof = np.empty((nt, 6), dtype=int)
        gdof[:, 0:3] = vdof[tris]
        gdof[:, 3:6] = edof[tri_edges]
        self._gdof = gdof

        nd = self.n_dofs
        mask = (gdof[:, :, None] >= 0) & (gdof[:, None, :] >= 0)
        rows = np.where(gdof[:, :, None] >= 0, gdof[:, :, None], 0)
        rows = np.broadcast_to(rows, (nt, 6, 6))[mask]
        cols = np.where(gdof[:, None, :] >= 0, gdof[:, None, :], 0)
        cols = np.broadcast_to(cols, (nt, 6, 6))[mask]
        self.k_grad = as_csr(
            sp.coo_matrix((k1[mask], (rows, cols)), shape=(nd, nd))
        )
        self.k_lap = as_csr(
            sp.coo_matrix((k2[mask], (rows, cols)), shape=(nd, nd))
        )

        lmask = gdof >= 0
        lrows = np.broadcast_to(np.arange(nt)[:, None], (nt, 6))[lmask]
        lvals = (areas[:, None] * lap)[lmask]
        self.load = as_csr(
            sp.coo_matrix((lvals, (lrows, gdof[lmask])), shape=(nt, nd))
        )

        # coupling with P1 gradients: integral over T of grad phi_v . grad psi_j;
        # grad psi_j is linear so its element mean is the mid-edge average
        p1g = p1_gradients(mesh)[self.tri_ids]  # (nt, 3, 2)
        mean_grads = grads.mean(axis=1)  # (nt, 6, 2)
        xr, xc, xv = [], [], []
        for jloc in range(6):
            for vloc in range(3):
                vals = areas * np.einsum("te,te->t", mean_grads[:, jloc], p1g[:, vloc])
                ok = lmask[:, jloc]
                xr.append(gdof[ok, jloc])
                xc.append(tris[ok, vloc])
                xv.append(vals[ok])
        self.cross = as_csr(
            sp.coo_matrix(
                (np.concatenate(xv), (np.concatenate(xr), np.concatenate(xc))),
                shape=(nd, mesh.n_vertices),
            )
        )
        self.areas = areas
        self._solve = None
        self._penalty = None

    def jump_penalty(self):
        """Inter-element and boundary jump stabilization matrix.

        Morley fields are continuous only at vertices (values) and edge
        midpoints (normal derivatives), which leaves low-energy fields
        with O(1) trace jumps; penalizing the jumps restores consistency
        of the fourth-order solve.  Per edge the value jump is a bubble
        (one midpoint sample) and the normal-derivative jump is linear
        and odd (one endpoint sample), so each edge contributes two
        rank-one terms:

            (8/15) / |e|^2 * [value at midpoint]^2  +  (1/3) * [dn at hi end]^2

        which equal (1/|e|^3) int [lam]^2 and (1/|e|) int [dn lam]^2.
        Boundary edges penalize the trace itself (full clamping).
        """
        if self._penalty is not None:
            return self._penalty
        mesh = self.mesh
        nd = self.n_dofs
        n_edges = len(self._edge_verts)
        sides = [[] for _ in range(n_edges)]
        for t in range(len(self.tri_ids)):
            for k in range(3):
                sides[self._tri_edges[t, k]].append((t, k))

        lengths = np.linalg.norm(
            mesh.verts[self._edge_verts[:, 0]] - mesh.verts[self._edge_verts[:, 1]],
            axis=1,
        )
        rows, cols, vals = [], [], []

        def add_rank_one(coefs, dofs, weight):
            keep = dofs >= 0
            c = coefs[keep]
            d = dofs[keep]
            block = weight * np.outer(c, c)
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(block.ravel())

        for e, owners in enumerate(sides):
            if not owners:
                continue
            (t1, k1) = owners[0]
            vjump = self._val_mid[t1, k1].copy()
            djump = self._dn_hi[t1, k1].copy()
            dofs = self._gdof[t1].copy()
            if len(owners) == 2:
                (t2, k2) = owners[1]
                vjump = np.concatenate([vjump, -self._val_mid[t2, k2]])
                djump = np.concatenate([djump, -self._dn_hi[t2, k2]])
                dofs = np.concatenate([dofs, self._gdof[t2]])
            add_rank_one(vjump, dofs, (8.0 / 15.0) / lengths[e] ** 2)
            add_rank_one(djump, dofs, 1.0 / 3.0)

        self._penalty = as_csr(sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nd, nd),
        ))
        return self._penalty

    def solve(self, rhs):
        """Solve the stabilized clamped system (SPD)."""
        if self._solve is None:
            self._solve = factorize_spd(
                self.k_grad + self.k_lap + self.jump_penalty()
            )
        return self._solve(rhs)

    def cell_laplacian(self, coeffs):
        """Piecewise Laplacian of a Morley field, one value per triangle."""
        return (self.load @ coeffs) / self.areas

    def vertex_values(self, coeffs):
        """Morley vertex dofs as a full mesh-vertex field (zeros elsewhere)."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.free_verts] = coeffs[: len(self.free_verts)]
        return full


def assemble_morley(mesh, tri_mask=None):
    """Build the clamped Morley space on the flagged sub-triangulation."""
    return MorleySpace(mesh, tri_mask)
