"""Discrete assimilation operators A = (B, C) : V -> M x O and friends.

All spaces carry Gram matrices.  The operator is held in form
representation: b_form[i, j] = b(phi_j, mu_i) and c_form[e, j] =
(C phi_j, chi_e)_O, so that B u = G_M^-1 b_form u, C u = G_O^-1 c_form u
and A*(lam, f) = G_V^-1 (b_form^T lam + c_form^T f).  Elements of the
data space H = M x O are stacked vectors [lam; f].
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .numerics import as_csr, factorize_spd, factorize_symmetric

DENSE_NORMAL_CAP = 4000  # largest n_H for which AA* is densified


class InadmissibleDataError(ValueError):
    """Noise level delta violates the admissibility inequalities."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonsmoothPointError(RuntimeError):
    """Dual gradient requested where the objective is not differentiable."""


class ConvergenceError(RuntimeError):
    """An iteration diverged or hit its cap; carries the trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AssimilationOperator:
    """Gram matrices plus the two bilinear forms defining A = (B, C)."""

    def __init__(self, gram_v, gram_m, gram_o, b_form, c_form, meta=None):
        self.gram_v = as_csr(gram_v)
        self.gram_m = as_csr(gram_m)
        self.gram_o = as_csr(gram_o)
        self.b_form = as_csr(b_form)
        self.c_form = as_csr(c_form)
        self.meta = meta or {}
        self.n_v = self.gram_v.shape[0]
        self.n_m = self.gram_m.shape[0]
        self.n_o = self.gram_o.shape[0]
        if self.b_form.shape != (self.n_m, self.n_v):
            raise ValueError("b_form shape mismatch")
        if self.c_form.shape != (self.n_o, self.n_v):
            raise ValueError("c_form shape mismatch")
        # diagonal O Gram (P0 observation space) gets a fast path
        od = self.gram_o - sp.diags(self.gram_o.diagonal())
        self._go_diag = self.gram_o.diagonal() if od.nnz == 0 else None
        self._cache = {}

    @property
    def n_h(self):
        return self.n_m + self.n_o

    # --- factorizations -------------------------------------------------
    def _solver(self, name, matrix):
        if name not in self._cache:
            self._cache[name] = factorize_spd(matrix)
        return self._cache[name]

    def solve_v(self, b):
        return self._solver("gv", self.gram_v)(b)

    def solve_m(self, b):
        return self._solver("gm", self.gram_m)(b)

    def solve_o(self, b):
        if self._go_diag is not None:
            return np.asarray(b, float) / self._go_diag \
                if np.ndim(b) == 1 else np.asarray(b, float) / self._go_diag[:, None]
        return self._solver("go", self.gram_o)(b)

    # --- operator actions -----------------------------------------------
    def apply_b(self, u):
        return self.solve_m(self.b_form @ u)

    def apply_c(self, u):
        return self.solve_o(self.c_form @ u)

    def apply_a(self, u):
        return np.concatenate([self.apply_b(u), self.apply_c(u)])

    def apply_adjoint(self, q):
        lam, f = self.split(q)
        return self.solve_v(self.b_form.T @ lam + self.c_form.T @ f)

    def apply_gram_normal(self, q):
        """q -> A A* q, self-adjoint PSD in the H inner product."""
        return self.apply_a(self.apply_adjoint(q))

    # --- inner products ---------------------------------------------------
    def split(self, q):
        return q[: self.n_m], q[self.n_m:]

    def stack(self, lam, f):
        if lam is None:
            lam = np.zeros(self.n_m)
        return np.concatenate([np.asarray(lam, float), np.asarray(f, float)])

    def vdot(self, u1, u2):
        return float(u1 @ (self.gram_v @ u2))

    def norm_v(self, u):
        return np.sqrt(max(self.vdot(u, u), 0.0))

    def mdot(self, a, b):
        return float(a @ (self.gram_m @ b))

    def norm_m(self, a):
        return np.sqrt(max(self.mdot(a, a), 0.0))

    def odot(self, a, b):
        if self._go_diag is not None:
            return float(a @ (self._go_diag * b))
        return float(a @ (self.gram_o @ b))

    def norm_o(self, a):
        return np.sqrt(max(self.odot(a, a), 0.0))

    def gram_h(self, q):
        lam, f = self.split(q)
        gf = self._go_diag * f if self._go_diag is not None else self.gram_o @ f
        return np.concatenate([self.gram_m @ lam, gf])

    def hdot(self, qa, qb):
        return float(qa @ self.gram_h(qb))

    def norm_h(self, q):
        return np.sqrt(max(self.hdot(q, q), 0.0))

    # --- mixed saddle systems ---------------------------------------------
    def _c_block(self):
        if "c_oo" not in self._cache:
            if self._go_diag is not None:
                inv = sp.diags(1.0 / self._go_diag)
            else:
                inv = np.linalg.inv(self.gram_o.toarray())
            self._cache["c_oo"] = as_csr(self.c_form.T @ inv @ self.c_form)
        return self._cache["c_oo"]

    def mixed_matrix(self, eps):
        """[[eps G_V + c^T G_O^-1 c, b^T], [b, -G_M]], symmetric indefinite."""
        return as_csr(sp.bmat(
            [[eps * self.gram_v + self._c_block(), self.b_form.T],
             [self.b_form, -self.gram_m]], format="csr",
        ))

    def mixed_solver(self, eps):
        """Factorized saddle solve at this eps, memoized (small FIFO)."""
        key = ("mixed", float(eps))
        if key not in self._cache:
            stale = [k for k in self._cache if k[0] == "mixed"]
            if len(stale) > 60:
                for k in stale[:30]:
                    del self._cache[k]
            self._cache[key] = factorize_symmetric(self.mixed_matrix(eps))
        return self._cache[key]

    # --- dense normal representation (for the dual solvers) ---------------
    def dense_adjoint(self):
        """A* as a dense n_V x n_H matrix (cached)."""
        if "astar" not in self._cache:
            rhs = sp.hstack([self.b_form.T, self.c_form.T]).toarray()
            self._cache["astar"] = self._solver("gv", self.gram_v)(rhs)
        return self._cache["astar"]

    def dense_normal_form(self):
        """S = G_H A A* as a dense symmetric PSD n_H x n_H matrix (cached)."""
        if "normal" not in self._cache:
            x = self.dense_adjoint()
            s = np.vstack([self.b_form @ x, self.c_form @ x])
            self._cache["normal"] = 0.5 * (s + s.T)
        return self._cache["normal"]

    def use_dense_normal(self):
        return self.n_h <= DENSE_NORMAL_CAP


@dataclass
class NoisyData:
    """Observed data g^delta = (ell, f) with its noise level.

    `perp_norm` caches ||g_perp^delta||_H once a range-complement
    backend has measured it; admissibility checks use it when present.
    """

    f: np.ndarray
    delta: float
    ell: np.ndarray = None
    perp_norm: float = None

    def stacked(self, op):
        return op.stack(self.ell, self.f)

    def g_norm(self, op):
        return op.norm_h(self.stacked(op))


@dataclass
class MixedSolution:
    """Tikhonov minimizer at one eps, from the saddle-point system."""

    u: np.ndarray
    lam: np.ndarray
    epsilon: float
    discrepancy: float  # ||A u - g^delta||_H


@dataclass
class DualIterate:
    """Point of the dual space H = M x O with objective/gradient info."""

    lambda_star: np.ndarray
    f_star: np.ndarray
    objective: float = None
    grad_lambda: np.ndarray = None
    grad_f: np.ndarray = None

    def stacked(self, op):
        return op.stack(self.lambda_star, self.f_star)


class Projector:
    """Orthogonal projector P = P_M x P_O onto spans of G-orthonormal bases.

    basis_m / basis_o hold the orthonormal columns (or None for a zero
    factor).  `admissibility` records whether Range(A)^perp-invariance
    was verified ('admissible'), knowingly violated ('violated'), or not
    assessed ('unknown').
    """

    def __init__(self, basis_m=None, basis_o=None, admissibility="unknown",
                 label="P"):
        self.basis_m = basis_m
        self.basis_o = basis_o
        self.admissibility = admissibility
        self.label = label

    @classmethod
    def zero(cls):
        return cls(None, None, admissibility="admissible", label="0")

    @property
    def is_zero(self):
        return self.basis_m is None and self.basis_o is None

    @property
    def rank(self):
        r = 0
        if self.basis_m is not None:
            r += self.basis_m.shape[1]
        if self.basis_o is not None:
            r += self.basis_o.shape[1]
        return r

    def validate(self, op, tol=1e-10):
        """Check G-orthonormality of the stored bases."""
        for basis, gram in ((self.basis_m, op.gram_m), (self.basis_o, op.gram_o)):
            if basis is None:
                continue
            gap = np.abs(basis.T @ (gram @ basis) - np.eye(basis.shape[1])).max()
            if gap > tol:
                raise ValueError(f"projector basis not G-orthonormal: {gap:.3e}")
        return self

    def apply(self, op, q):
        lam, f = op.split(q)
        plam = np.zeros_like(lam)
        pf = np.zeros_like(f)
        if self.basis_m is not None:
            plam = self.basis_m @ (self.basis_m.T @ (op.gram_m @ lam))
        if self.basis_o is not None:
            gf = op._go_diag * f if op._go_diag is not None else op.gram_o @ f
            pf = self.basis_o @ (self.basis_o.T @ gf)
        return np.concatenate([plam, pf])

    def complement(self, op, q):
        return q - self.apply(op, q)


def constant_observation_projector(op, label="po"):
    """Rank-one projector onto constants in the observation space.

    The pair (0, 1) is the operator applied to the constant function for
    the interior-data applications, and any direction is admissible when
    the range is dense, so this projector is admissible everywhere it is
    used.
    """
    ones = np.ones(op.n_o)
    area = float(ones @ (op.gram_o @ ones))
    basis_o = np.full((op.n_o, 1), 1.0 / np.sqrt(area))
    return Projector(basis_o=basis_o, admissibility="admissible", label=label)


@dataclass
class AdmissibilityReport:
    """Outcome of the generalized discrepancy admissibility check.

    The admissible window is ||g_perp^delta||_H < delta < ||g^delta||_H;
    `failed` lists which inequality broke ('lower' and/or 'upper').
    identity_lhs/rhs report the weak-form identity of the
    range-complement construction, (f, f_perp)_O = ||g_perp||^2 in the
    construction's native norms, when a backend supplied it.
    """

    delta: float
    g_norm: float
    perp_norm: float = None
    admissible: bool = False
    failed: list = field(default_factory=list)
    identity_lhs: float = None
    identity_rhs: float = None

    @property
    def margin_lower(self):
        return None if self.perp_norm is None else self.delta - self.perp_norm

    @property
    def margin_upper(self):
        return self.g_norm - self.delta

    def message(self):
        bits = [f"delta={self.delta:.6g}", f"|g|={self.g_norm:.6g}"]
        if self.perp_norm is not None:
            bits.append(f"|g_perp|={self.perp_norm:.6g}")
        if self.admissible:
            return "admissible: " + ", ".join(bits)
        reasons = []
        if "lower" in self.failed:
            reasons.append("needs |g_perp| < delta")
        if "upper" in self.failed:
            reasons.append("needs delta < |g|")
        return "inadmissible (" + "; ".join(reasons) + "): " + ", ".join(bits)
