"""Crossed-pattern triangulations of rectangles with flagged subdomains.

The unit square (or a rectangle (0,1) x (0,height) for space-time
problems) is split into n x n cells, each cut into four triangles
meeting at the cell center.  Triangles are flagged as belonging to the
observation subdomain by their barycenter; boundary edges carry an
integer marker used by the Cauchy application to split the boundary.
"""

import numpy as np

# boundary edge markers
PLAIN, GAMMA, GAMMA_TILDE = 0, 1, 2

_SIDES = ("bottom", "right", "top", "left")


class OmegaSpec:
    """Recipe for the observation region omega (and boundary splits).

    Use the constructors: disk, exterior_of_disk, five_disks, custom,
    interior, strip, boundary_partition, none.  Disk-type variants take
    the target area fraction |omega|/|Omega|; the realized fraction on a
    given mesh is whatever the barycenter classification produces.
    """

    def __init__(self, variant, area_fraction=None, centers=None, radii=None,
                 gamma_fraction=None, bounds=None, margin=None):
        self.variant = variant
        self.area_fraction = area_fraction
        self.centers = None if centers is None else np.atleast_2d(centers).astype(float)
        self.radii = None if radii is None else np.atleast_1d(radii).astype(float)
        self.gamma_fraction = gamma_fraction
        self.bounds = bounds
        self.margin = margin

    @classmethod
    def disk(cls, area_fraction=0.4, center=(0.5, 0.5)):
        r = np.sqrt(area_fraction / np.pi)
        return cls("disk", area_fraction, centers=[center], radii=[r])

    @classmethod
    def exterior_of_disk(cls, area_fraction=0.4, center=(0.0, 0.0)):
        # quarter disk of area (1 - fraction) sits at the given corner
        r = np.sqrt(4.0 * (1.0 - area_fraction) / np.pi)
        return cls("exterior-of-disk", area_fraction, centers=[center], radii=[r])

    @classmethod
    def five_disks(cls, area_fraction=0.4):
        r = np.sqrt(area_fraction / (5.0 * np.pi))
        centers = [(0.5, 0.5), (0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
        return cls("five-disks", area_fraction, centers=centers, radii=[r] * 5)

    @classmethod
    def custom(cls, centers, radii):
        return cls("custom", centers=centers, radii=radii)

    @classmethod
    def interior(cls, margin=0.1):
        """omega = the concentric square at the given margin from the boundary."""
        return cls("interior", margin=margin)

    @classmethod
    def strip(cls, a, b):
        """omega = {a < x < b}, for the space-time heat problem."""
        return cls("strip", bounds=(float(a), float(b)))

    @classmethod
    def boundary_partition(cls, gamma_fraction=0.25):
        """No omega; mark a fraction of the boundary (whole sides) as Gamma."""
        return cls("boundary-partition", gamma_fraction=gamma_fraction)

    @classmethod
    def none(cls):
        return cls("none")

    def gamma_sides(self):
        if self.variant != "boundary-partition":
            return ()
        k = int(round(4 * self.gamma_fraction))
        if not 1 <= k <= 4 or abs(4 * self.gamma_fraction - k) > 1e-12:
            raise ValueError(
                f"gamma_fraction={self.gamma_fraction} must select whole sides"
            )
        return _SIDES[:k]

    def flag(self, barycenters):
        """Boolean mask over barycenters: which triangles are in omega."""
        x, y = barycenters[:, 0], barycenters[:, 1]
        if self.variant in ("none", "boundary-partition"):
            return np.zeros(len(barycenters), dtype=bool)
        if self.variant == "exterior-of-disk":
            cx, cy = self.centers[0]
            return (x - cx) ** 2 + (y - cy) ** 2 > self.radii[0] ** 2
        if self.variant == "interior":
            m = self.margin
            return (x > m) & (x < 1 - m) & (y > m) & (y < 1 - m)
        if self.variant == "strip":
            a, b = self.bounds
            return (x > a) & (x < b)
        # disk, five-disks, custom: union of disks
        mask = np.zeros(len(barycenters), dtype=bool)
        for (cx, cy), r in zip(self.centers, self.radii):
            mask |= (x - cx) ** 2 + (y - cy) ** 2 < r ** 2
        return mask


class TriMesh:
    """Triangulation with omega flags and marked boundary edges.

    Attributes
    ----------
    verts : (nv, 2) float array
    tris : (nt, 3) int array, counterclockwise
    in_omega : (nt,) bool array
    bedges : (ne, 2) int array of boundary edges
    bmarkers : (ne,) int array (PLAIN / GAMMA / GAMMA_TILDE)
    grid : tuple (nx, ny, width, height) when structured, else None
    """

    def __init__(self, verts, tris, in_omega, bedges, bmarkers, grid=None):
        self.verts = np.asarray(verts, dtype=float)
        self.tris = np.asarray(tris, dtype=int)
        self.in_omega = np.asarray(in_omega, dtype=bool)
        self.bedges = np.asarray(bedges, dtype=int).reshape(-1, 2)
        self.bmarkers = np.asarray(bmarkers, dtype=int)
        self.grid = grid
        self._cache = {}

    @property
    def n_vertices(self):
        return len(self.verts)

    @property
    def n_triangles(self):
        return len(self.tris)

    def corners(self):
        """(nt, 3, 2) array of triangle vertex coordinates."""
        return self.verts[self.tris]

    @property
    def areas(self):
        if "areas" not in self._cache:
            p = self.corners()
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    @property
    def barycenters(self):
        if "bary" not in self._cache:
            self._cache["bary"] = self.corners().mean(axis=1)
        return self._cache["bary"]

    @property
    def omega_fraction(self):
        return self.areas[self.in_omega].sum() / self.areas.sum()

    def boundary_vertex_mask(self, markers=None):
        """Vertices lying on boundary edges (optionally only given markers)."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        for (a, b), m in zip(self.bedges, self.bmarkers):
            if markers is None or m in markers:
                mask[a] = mask[b] = True
        return mask

    def edges(self):
        """Unique undirected edges and per-triangle edge indices.

        Returns (edge_verts (ne,2) with a<b, tri_edges (nt,3) where local
        edge k is opposite local vertex k, edge_count (ne,) triangle
        incidence count).  Cached.
        """
        if "edges" not in self._cache:
            t = self.tris
            pairs = np.concatenate(
                [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=0
            )
            pairs = np.sort(pairs, axis=1)
            edge_verts, inverse, counts = np.unique(
                pairs, axis=0, return_inverse=True, return_counts=True
            )
            tri_edges = inverse.reshape(3, -1).T
            self._cache["edges"] = (edge_verts, tri_edges, counts)
        return self._cache["edges"]

    def midedge_points(self):
        """(nt, 3, 2) mid-edge quadrature points (edge k opposite vertex k)."""
        p = self.corners()
        return 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])

    def locate(self, points):
        """Triangle index containing each point (structured fast path)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grid is None:
            return self._locate_generic(points)
        nx, ny, width, height = self.grid
        hx, hy = width / nx, height / ny
        ix = np.clip((points[:, 0] / hx).astype(int), 0, nx - 1)
        iy = np.clip((points[:, 1] / hy).astype(int), 0, ny - 1)
        s = points[:, 0] / hx - ix
        t = points[:, 1] / hy - iy
        # cell triangles in order: bottom, right, top, left
        local = np.zeros(len(points), dtype=int)
        local[(s >= t) & (s >= 1 - t)] = 1
        local[(t >= s) & (t >= 1 - s)] = 2
        local[(s <= t) & (s <= 1 - t)] = 3
        local[(t <= s) & (t <= 1 - s)] = 0
        return 4 * (iy * nx + ix) + local

    def _locate_generic(self, points):
        p = self.corners()
        out = np.full(len(points), -1, dtype=int)
        for i, q in enumerate(points):
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            r = q - p[:, 0]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            a = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
            b = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
            ok = (a >= -1e-12) & (b >= -1e-12) & (a + b <= 1 + 1e-12)
            idx = np.flatnonzero(ok)
            if len(idx) == 0:
                raise ValueError(f"point {q} outside the mesh")
            out[i] = idx[0]
        return out

    def interpolate_vertex_field(self, u, points):
        """Evaluate a P1 vertex field at arbitrary points."""
        u = np.asarray(u, dtype=float)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tri = self.locate(points)
        p = self.verts[self.tris[tri]]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        r = points - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        a = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        b = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        w = np.stack([1 - a - b, a, b], axis=1)
        return (u[self.tris[tri]] * w).sum(axis=1)

    def dump(self, path):
        """ASCII dump: 'nv nt ne' header, vertices, triangles+flag, edges."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_vertices} {self.n_triangles} {len(self.bedges)}\n")
            for x, y in self.verts:
                fh.write(f"{x:.17g} {y:.17g}\n")
            for (a, b, c), flag in zip(self.tris, self.in_omega.astype(int)):
                fh.write(f"{a} {b} {c} {flag}\n")
            for (a, b), m in zip(self.bedges, self.bmarkers):
                fh.write(f"{a} {b} {m}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            nv, nt, ne = (int(s) for s in fh.readline().split())
            verts = np.array(
                [[float(s) for s in fh.readline().split()] for _ in range(nv)]
            )
            rows = [[int(s) for s in fh.readline().split()] for _ in range(nt)]
            tris = np.array([r[:3] for r in rows])
            flags = np.array([r[3] for r in rows], dtype=bool)
            erows = [[int(s) for s in fh.readline().split()] for _ in range(ne)]
        bedges = np.array([r[:2] for r in erows]) if erows else np.zeros((0, 2), int)
        bmark = np.array([r[2] for r in erows], int) if erows else np.zeros(0, int)
        return cls(verts, tris, flags, bedges, bmark, grid=None)


def generate_mesh(n, omega_spec=None, ny=None, height=1.0):
    """Crossed-pattern mesh of (0,1) x (0,height) with omega flags.

    Parameters
    ----------
    n : int
        Cells per unit length in x (mesh size h = 1/n along x).
    omega_spec : OmegaSpec or None
        Subdomain recipe; None means no omega (all flags False).
    ny, height : vertical resolution and extent, for space-time meshes.

    Raises ValueError when the spec asks for a region and no triangle
    is flagged.
    """
    if n < 1:
        raise ValueError("n must be positive")
    nx = n
    ny = n if ny is None else ny
    hx, hy = 1.0 / nx, height / ny

    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    grid_verts = np.column_stack([gx.ravel(), gy.ravel()])
    cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]))
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    verts = np.vstack([grid_verts, centers])

    def v(i, j):
        return j * (nx + 1) + i

    n_grid = (nx + 1) * (ny + 1)
    tris = np.empty((4 * nx * ny, 3), dtype=int)
    k = 0
    for j in range(ny):
        for i in range(nx):
            a, b = v(i, j), v(i + 1, j)
            c, d = v(i + 1, j + 1), v(i, j + 1)
            m = n_grid + j * nx + i
            tris[k + 0] = (a, b, m)  # bottom
            tris[k + 1] = (b, c, m)  # right
            tris[k + 2] = (c, d, m)  # top
            tris[k + 3] = (d, a, m)  # left
            k += 4

    side_edges = {
        "bottom": [(v(i, 0), v(i + 1, 0)) for i in range(nx)],
        "right": [(v(nx, j), v(nx, j + 1)) for j in range(ny)],
        "top": [(v(i + 1, ny), v(i, ny)) for i in range(nx)],
        "left": [(v(0, j + 1), v(0, j)) for j in range(ny)],
    }
    spec = omega_spec if omega_spec is not None else OmegaSpec.none()
    gamma = set(spec.gamma_sides())
    bedges, bmark = [], []
    for side in _SIDES:
        for e in side_edges[side]:
            bedges.append(e)
            if spec.variant == "boundary-partition":
                bmark.append(GAMMA if side in gamma else GAMMA_TILDE)
            else:
                bmark.append(PLAIN)

    mesh = TriMesh(verts, tris, np.zeros(len(tris), bool),
                   bedges, bmark, grid=(nx, ny, 1.0, height))
    flags = spec.flag(mesh.barycenters)
    needs_omega = spec.variant not in ("none", "boundary-partition")
    if needs_omega and not flags.any():
        raise ValueError(f"omega spec '{spec.variant}' flags no triangle at n={n}")
    mesh.in_omega = flags
    return mesh
