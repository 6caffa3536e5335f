"""Sparse symmetric linear algebra used by the assembly and solver layers.

Everything here is a thin, checked wrapper around scipy: matrices are
scipy.sparse CSR with sorted indices, factorizations are SuperLU, and the
eigenvalue routine is ARPACK shift-invert Lanczos.  Each solve verifies its
residual a posteriori and raises :class:`SolverFailure` with the measured
residual instead of returning silently wrong vectors.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverFailure(RuntimeError):
    """A linear or eigenvalue solve missed its tolerance.

    Attributes
    ----------
    residual : float or None
        The measured relative residual (or Ritz residual) that triggered
        the failure, when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenPairs:
    """Generalized eigenpairs K x = value * G x, values ascending."""

    values: np.ndarray
    vectors: np.ndarray  # columns, G-orthonormal

    def __len__(self):
        return len(self.values)


def as_csr(a):
    """Return `a` as CSR with sorted indices and no duplicates."""
    m = sp.csr_matrix(a)
    m.sum_duplicates()
    m.sort_indices()
    return m


def is_symmetric(a, tol=1e-12):
    """True if max |a - a^T| <= tol * max |a|."""
    a = as_csr(a)
    d = a - a.T
    if d.nnz == 0:
        return True
    scale = max(abs(a.data).max(), 1e-300)
    return abs(d.data).max() <= tol * scale


def _rel_residual(a, x, b):
    r = a @ x - b
    nb = np.linalg.norm(b)
    return np.linalg.norm(r) / (nb if nb > 0 else 1.0)


def factorize_spd(a, tol=1e-10):
    """Factorize a sparse SPD matrix; returns a solve(b) closure.

    The closure accepts a vector or a matrix of right-hand sides and
    checks the relative residual of every solve.
    """
    a = as_csr(a)
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as err:  # singular
        raise SolverFailure(f"SPD factorization failed: {err}") from err

    def solve(b):
        b = np.asarray(b, dtype=float)
        x = lu.solve(b)
        res = _rel_residual(a, x, b)
        if not np.isfinite(res) or res > tol:
            raise SolverFailure(
                f"SPD solve residual {res:.3e} exceeds {tol:.1e}", residual=res
            )
        return x

    return solve


def solve_spd(a, b, tol=1e-10):
    """Solve a x = b for SPD a, with a residual check."""
    return factorize_spd(a, tol=tol)(b)


def factorize_symmetric(a, tol=1e-10):
    """Factorize a sparse symmetric (possibly indefinite) matrix.

    Used for the saddle-point systems of the mixed formulation; the
    returned closure verifies each solve's relative residual.
    """
    a = as_csr(a)
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as err:
        raise SolverFailure(f"symmetric factorization failed: {err}") from err

    def solve(b):
        b = np.asarray(b, dtype=float)
        x = lu.solve(b)
        res = _rel_residual(a, x, b)
        if not np.isfinite(res) or res > tol:
            raise SolverFailure(
                f"symmetric solve residual {res:.3e} exceeds {tol:.1e}",
                residual=res,
            )
        return x

    return solve


def solve_symmetric_indefinite(a, b, tol=1e-10):
    """Solve a x = b for symmetric indefinite a, with a residual check."""
    return factorize_symmetric(a, tol=tol)(b)


def smallest_eigenpairs(stiffness, gram, count, tol=1e-8, maxiter=200):
    """Smallest `count` eigenpairs of K x = value G x, G-orthonormalized.

    Shift-invert Lanczos at sigma=0 with a deterministic start vector;
    falls back to a dense solve when the problem is too small for ARPACK.
    Verifies Ritz residuals ||K x - value G x|| <= tol * ||K x|| and
    G-orthonormality before returning.
    """
    k = as_csr(stiffness)
    g = as_csr(gram)
    n = k.shape[0]
    if count < 1 or count > n:
        raise ValueError(f"count={count} out of range for n={n}")

    if count >= n - 1 or n < 8:
        w, v = scipy.linalg.eigh(k.toarray(), g.toarray())
        vals, vecs = w[:count], v[:, :count]
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            vals, vecs = spla.eigsh(
                k, k=count, M=g, sigma=0.0, which="LM", v0=v0, maxiter=maxiter
            )
        except (spla.ArpackNoConvergence, RuntimeError) as err:
            raise SolverFailure(f"eigensolver did not converge: {err}") from err
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    # a posteriori Ritz residual and G-orthonormality checks
    kv = k @ vecs
    gv = g @ vecs
    for i in range(count):
        num = np.linalg.norm(kv[:, i] - vals[i] * gv[:, i])
        den = max(np.linalg.norm(kv[:, i]), 1e-300)
        if num / den > tol:
            raise SolverFailure(
                f"Ritz residual {num / den:.3e} exceeds {tol:.1e} "
                f"for eigenvalue {vals[i]:.6e}",
                residual=num / den,
            )
    ortho = vecs.T @ gv - np.eye(count)
    if abs(ortho).max() > 1e-8:
        # re-orthonormalize in the G inner product, then re-check
        r = scipy.linalg.cholesky(vecs.T @ gv)
        vecs = scipy.linalg.solve_triangular(r.T, vecs.T, lower=True).T
        ortho = vecs.T @ (g @ vecs) - np.eye(count)
        if abs(ortho).max() > 1e-8:
            raise SolverFailure(
                f"eigenvectors not G-orthonormal: {abs(ortho).max():.3e}"
            )
    return EigenPairs(values=vals, vectors=vecs)


def conjugate_gradient(apply_op, rhs, inner, tol=1e-12, maxiter=None, x0=None):
    """CG for an operator SPD in the given inner product.

    Parameters
    ----------
    apply_op : callable
        x -> A x.
    inner : callable
        (x, y) -> scalar inner product in which A is self-adjoint SPD.
    tol : float
        Relative residual target, measured in the `inner` norm.
    maxiter : int
        Iteration cap; defaults to 10 * len(rhs).  Exceeding it raises
        SolverFailure carrying the last relative residual.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    if maxiter is None:
        maxiter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - apply_op(x)
    rr = inner(r, r)
    nb = np.sqrt(inner(rhs, rhs))
    if nb == 0.0:
        return np.zeros(n)
    p = r.copy()
    for _ in range(maxiter):
        if np.sqrt(rr) <= tol * nb:
            return x
        ap = apply_op(p)
        alpha = rr / inner(p, ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = inner(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = np.sqrt(rr) / nb
    if res <= tol:
        return x
    raise SolverFailure(
        f"CG stalled at relative residual {res:.3e} after {maxiter} iterations",
        residual=res,
    )


def write_matrix(a, path, symmetric=None):
    """Write a sparse matrix as ASCII triplets.

    Header line: 'symmetric|general nrows ncols nnz'; then one
    'i j value' triplet per line (0-based, %.17g).  Symmetric matrices
    store the lower triangle only.
    """
    a = as_csr(a)
    if symmetric is None:
        symmetric = a.shape[0] == a.shape[1] and is_symmetric(a)
    coo = sp.tril(a).tocoo() if symmetric else a.tocoo()
    kind = "symmetric" if symmetric else "general"
    with open(path, "w") as fh:
        fh.write(f"{kind} {a.shape[0]} {a.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] not in ("symmetric", "general"):
            raise ValueError(f"bad matrix header in {path}: {head}")
        kind, nr, nc, nnz = head[0], int(head[1]), int(head[2]), int(head[3])
        rows, cols, vals = [], [], []
        for _ in range(nnz):
            i, j, v = fh.readline().split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    a = sp.coo_matrix((vals, (rows, cols)), shape=(nr, nc))
    if kind == "symmetric":
        d = sp.coo_matrix((a.diagonal(), (range(nr), range(nr))), shape=a.shape)
        a = a + a.T - d
    return as_csr(a)
