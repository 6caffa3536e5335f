"""Range-complement projection backends.

Two routes to the H-orthogonal component of data against Range(A):

* application backends (Morley fourth-order solve for the Laplace case,
  finite differences for the heat case) approximate the continuum
  characterization of (Range A)^perp and scale to any mesh;
* the algebraic route below works with the discrete operator directly,
  orthonormalizing Range(A_h) in the H inner product, and is exact for
  the discrete problem at desk scale.

Application backends refine their output through the algebraic route
when the operator is small enough, so reported perpendicular components
are exactly H-orthogonal to the discrete range; the native construction
stays available for large problems and as an independent cross-check.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operator import DENSE_NORMAL_CAP


@dataclass
class PerpProjection:
    """Perpendicular component of one data pair.

    lam / f: the returned pair (M- and O-vectors); norm_h: its H-norm in
    the measure the backend uses (exact discrete H-norm on the algebraic
    route, native broken norms on application routes); identity_lhs/rhs:
    both sides of the weak-form identity (g, g_perp) = ||g_perp||^2,
    which reduces to the (f, f_perp)_O form when ell = 0.
    """

    lam: np.ndarray
    f: np.ndarray
    norm_h: float
    identity_lhs: float
    identity_rhs: float
    mode: str
    native: dict = field(default_factory=dict)

    def stacked(self, op):
        return op.stack(self.lam, self.f)


class ZeroPerpBackend:
    """Dense-range applications: the perpendicular component vanishes."""

    mode = "zero"

    def __init__(self, op):
        self.op = op

    def project(self, ell, f):
        op = self.op
        return PerpProjection(
            lam=np.zeros(op.n_m), f=np.zeros(op.n_o), norm_h=0.0,
            identity_lhs=0.0, identity_rhs=0.0, mode="zero",
        )


class AlgebraicPerp:
    """Exact H-orthogonal projector onto (Range A_h)^perp, densified.

    Builds an H-orthonormal basis Q of Range(A_h) via Cholesky factors
    of the block Gram and a pivoted QR; cached on first use.  Intended
    for n_H <= DENSE_NORMAL_CAP.
    """

    def __init__(self, op):
        if op.n_h > DENSE_NORMAL_CAP:
            raise ValueError(
                f"operator too large for the dense algebraic route "
                f"(n_H={op.n_h} > {DENSE_NORMAL_CAP})"
            )
        self.op = op
        # Euclideanizing factors: x_hat = L^T x with G = L L^T
        self._lm = scipy.linalg.cholesky(op.gram_m.toarray(), lower=True)
        if op._go_diag is not None:
            self._lo_diag = np.sqrt(op._go_diag)
        else:
            self._lo = scipy.linalg.cholesky(op.gram_o.toarray(), lower=True)
            self._lo_diag = None
        a_cols = np.vstack([
            op.solve_m(op.b_form.toarray()),
            op.solve_o(op.c_form.toarray()),
        ])
        a_hat = self._to_hat(a_cols)
        q, r, _ = scipy.linalg.qr(a_hat, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int((diag > diag[0] * 1e-12).sum()) if diag.size else 0
        self.q = q[:, :rank]
        self.rank = rank

    def _to_hat(self, x):
        lam, f = x[: self.op.n_m], x[self.op.n_m:]
        top = self._lm.T @ lam
        if self._lo_diag is not None:
            bot = f * (self._lo_diag[:, None] if f.ndim > 1 else self._lo_diag)
        else:
            bot = self._lo.T @ f
        return np.concatenate([top, bot])

    def _from_hat(self, xh):
        lam, f = xh[: self.op.n_m], xh[self.op.n_m:]
        top = scipy.linalg.solve_triangular(self._lm.T, lam, lower=False)
        if self._lo_diag is not None:
            bot = f / (self._lo_diag[:, None] if f.ndim > 1 else self._lo_diag)
        else:
            bot = scipy.linalg.solve_triangular(self._lo.T, f, lower=False)
        return np.concatenate([top, bot])

    def perp(self, q_stacked):
        """H-orthogonal projection onto (Range A_h)^perp."""
        xh = self._to_hat(q_stacked)
        return self._from_hat(xh - self.q @ (self.q.T @ xh))

    def project(self, ell, f):
        op = self.op
        g = op.stack(ell, f)
        perp = self.perp(g)
        lam_p, f_p = op.split(perp)
        nh = op.norm_h(perp)
        return PerpProjection(
            lam=lam_p, f=f_p, norm_h=nh,
            identity_lhs=op.hdot(g, perp), identity_rhs=nh * nh,
            mode="algebraic",
        )


def algebraic_perp(op):
    """The cached AlgebraicPerp of an operator (built on first call)."""
    if "alg_perp" not in op._cache:
        op._cache["alg_perp"] = AlgebraicPerp(op)
    return op._cache["alg_perp"]
