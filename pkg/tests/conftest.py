"""Shared fixtures and independent dense oracles for the test suite.

The toy problems are small random injective operators whose Tikhonov
solutions, discrepancies and range decompositions are recomputed here
by dense linear algebra (normal equations, eigen-factorizations),
independently of the saddle-point and dual code paths under test.
"""

import numpy as np
import pytest
import scipy.linalg

from morozov.estimator import build_problem
from morozov.operator import AssimilationOperator, NoisyData


def random_spd(rng, n, diag=False):
    if diag:
        return np.diag(rng.uniform(0.5, 2.0, n))
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(0.5, 2.0, n)) @ q.T


def make_toy(seed, n_v=4, n_m=3, n_o=4, diag_o=False):
    """Random injective operator with dense SPD Gram matrices."""
    rng = np.random.default_rng(seed)
    gv = random_spd(rng, n_v)
    gm = random_spd(rng, n_m)
    go = random_spd(rng, n_o, diag=diag_o)
    while True:
        b = rng.standard_normal((n_m, n_v))
        c = rng.standard_normal((n_o, n_v))
        if np.linalg.matrix_rank(np.vstack([b, c])) == n_v:
            break
    return AssimilationOperator(gv, gm, go, b, c)


class DenseOracle:
    """Dense reference computations for a toy operator."""

    def __init__(self, op):
        self.op = op
        self.gv = op.gram_v.toarray()
        self.gm = op.gram_m.toarray()
        self.go = op.gram_o.toarray()
        self.gh = scipy.linalg.block_diag(self.gm, self.go)
        # coordinate matrix of A: stack of solve(G_M, b) and solve(G_O, c)
        self.a = np.vstack([
            np.linalg.solve(self.gm, op.b_form.toarray()),
            np.linalg.solve(self.go, op.c_form.toarray()),
        ])

    def tikhonov(self, g, eps):
        lhs = eps * self.gv + self.a.T @ self.gh @ self.a
        rhs = self.a.T @ self.gh @ g
        return np.linalg.solve(lhs, rhs)

    def discrepancy(self, g, eps):
        r = self.a @ self.tikhonov(g, eps) - g
        return float(np.sqrt(r @ self.gh @ r))

    def range_basis(self):
        """G_H-orthonormal basis of Range(A)."""
        l = np.linalg.cholesky(self.gh)
        q, _ = np.linalg.qr(l.T @ self.a)
        return np.linalg.solve(l.T, q)

    def perp(self, g):
        """Projection of g onto the orthogonal complement of Range(A)."""
        basis = self.range_basis()
        return g - basis @ (basis.T @ (self.gh @ g))

    def perp_norm(self, g):
        p = self.perp(g)
        return float(np.sqrt(p @ self.gh @ p))

    def g_norm(self, g):
        return float(np.sqrt(g @ self.gh @ g))

    def morozov_eps(self, g, delta, lo=1e-12, hi=1e6):
        from scipy.optimize import brentq
        return brentq(lambda s: self.discrepancy(g, np.exp(s)) - delta,
                      np.log(lo), np.log(hi), xtol=1e-14), None

    def grid_scan_eps(self, g, delta, n_points=10 ** 6, lo=1e-12, hi=1e6):
        """Morozov eps from a log grid scan with local interpolation.

        Coarse pass locates the bracketing pair on the full grid without
        evaluating all of it (the discrepancy is monotone), then the
        crossing is interpolated log-linearly between the two points.
        """
        s_grid = np.linspace(np.log(lo), np.log(hi), n_points)
        lo_i, hi_i = 0, n_points - 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) // 2
            if self.discrepancy(g, np.exp(s_grid[mid])) < delta:
                lo_i = mid
            else:
                hi_i = mid
        e0, e1 = (self.discrepancy(g, np.exp(s_grid[i])) for i in (lo_i, hi_i))
        t = (delta - e0) / (e1 - e0)
        return float(np.exp(s_grid[lo_i] + t * (s_grid[hi_i] - s_grid[lo_i])))


def admissible_toy_data(op, oracle, seed, margin=2.0):
    """Noisy data with ||g_perp|| < delta < ||g|| by construction."""
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal(op.n_v)
    g = oracle.a @ u0
    p = oracle.perp(rng.standard_normal(op.n_h))
    pn = oracle.g_norm(p)
    if pn > 1e-12 * oracle.g_norm(g):
        g = g + (0.05 * oracle.g_norm(g) / pn) * p
    perp_norm = oracle.perp_norm(g)
    # dense-range toys leave only rounding in the complement; fall back
    # to a plain noise level instead of a meaningless 1e-16 delta
    if perp_norm > 1e-12 * oracle.g_norm(g):
        delta = margin * perp_norm
    else:
        delta = 0.1 * oracle.g_norm(g)
    if delta >= oracle.g_norm(g):
        delta = 0.5 * (perp_norm + oracle.g_norm(g))
    lam, f = op.split(g)
    return NoisyData(f=f, delta=float(delta), ell=lam)


@pytest.fixture(scope="session")
def laplace_d2():
    """Domain-2 Laplace problem at the benchmark resolution."""
    op, backend = build_problem("laplace", 20, "exterior-of-disk", 0.4)
    return op, backend


@pytest.fixture(scope="session")
def laplace_small():
    op, backend = build_problem("laplace", 8, "exterior-of-disk", 0.4)
    return op, backend


@pytest.fixture(scope="session")
def cauchy_small():
    op, backend = build_problem("cauchy", 8)
    return op, backend


@pytest.fixture(scope="session")
def heat_small():
    op, backend = build_problem("heat", 8)
    return op, backend
