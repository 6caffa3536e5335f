"""Tikhonov solves in mixed form and the discrepancy root-finder.

The regularized problem min_u ||A u - g^delta||_H^2 + eps ||u||_V^2 is
solved through the equivalent saddle-point system

    [eps G_V + c^T G_O^-1 c   b^T] [u  ]   [c^T f^delta ]
    [b                       -G_M] [lam] = [G_M ell^delta],

whose second row enforces lam = B u - ell^delta.  The discrepancy
E(eps) = ||A u_eps - g^delta||^2 is strictly increasing in eps; its
derivative comes from a second solve with the same factorization, and
epsilon(delta) with E(eps) = delta^2 is found by a safeguarded Newton
iteration in log(eps).
"""

import numpy as np

from .numerics import conjugate_gradient
from .operator import AdmissibilityReport, ConvergenceError, \
    InadmissibleDataError, MixedSolution


def _rhs(op, data):
    ell = data.ell if data.ell is not None else np.zeros(op.n_m)
    return np.concatenate([op.c_form.T @ data.f, op.gram_m @ ell])


def solve_mixed(op, data, eps):
    """Solve the mixed system at one eps; returns a MixedSolution.

    Postcondition lam = B u - ell^delta is verified against the b_form
    residual of the block solve (it holds to solver precision).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    sol = op.mixed_solver(eps)(_rhs(op, data))
    u, lam = sol[: op.n_v], sol[op.n_v:]
    return MixedSolution(u=u, lam=lam, epsilon=eps,
                         discrepancy=np.sqrt(discrepancy_squared(op, data, u, lam)))


def discrepancy_squared(op, data, u, lam):
    """E = ||lam||_M^2 + ||C u - f^delta||_O^2 (lam = B u - ell^delta)."""
    r_o = op.apply_c(u) - data.f
    return op.mdot(lam, lam) + op.odot(r_o, r_o)


def discrepancy_derivative(op, data, sol):
    """dE/deps at a mixed solution, by one extra solve of the same system.

    With v solving the saddle system with right-hand side (-G_V u, 0),
    dE/deps = 2 eps (||B v||_M^2 + ||C v||_O^2 + eps ||v||_V^2) >= 0.
    """
    rhs = np.concatenate([-(op.gram_v @ sol.u), np.zeros(op.n_m)])
    w = op.mixed_solver(sol.epsilon)(rhs)
    v, m = w[: op.n_v], w[op.n_v:]
    cv = op.apply_c(v)
    return 2.0 * sol.epsilon * (
        op.mdot(m, m) + op.odot(cv, cv) + sol.epsilon * op.vdot(v, v)
    )


def solve_tikhonov_normal(op, data, eps, tol=1e-12):
    """Independent route: solve (A*A + eps I) u = A* g^delta by CG in V.

    Kept alongside the mixed solve as a cross-check; the two agree to
    solver precision.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    g = data.stacked(op)
    rhs = op.apply_adjoint(g)

    def apply(u):
        return op.apply_adjoint(op.apply_a(u)) + eps * u

    return conjugate_gradient(apply, rhs, op.vdot, tol=tol)


def discrepancy_curve(op, data, eps_grid):
    """E(eps)^(1/2) over a grid; returns (discrepancies, solutions)."""
    sols = [solve_mixed(op, data, e) for e in np.asarray(eps_grid, float)]
    return np.array([s.discrepancy for s in sols]), sols


def check_admissible(op, data, backend=None):
    """Assemble the admissibility report for the generalized principle.

    When a range-complement backend is given (or data.perp_norm is
    already cached), the lower inequality ||g_perp|| < delta is checked;
    otherwise only delta < ||g|| is.  Never raises: callers that must
    refuse (the root-finder, the dual solvers) inspect the report.
    """
    g_norm = data.g_norm(op)
    perp = data.perp_norm
    identity = (None, None)
    if backend is not None:
        proj = backend.project(data.ell, data.f)
        perp = proj.norm_h
        identity = (proj.identity_lhs, proj.identity_rhs)
        data.perp_norm = perp
    failed = []
    if data.delta >= g_norm:
        failed.append("upper")
    if perp is not None and perp >= data.delta:
        failed.append("lower")
    return AdmissibilityReport(
        delta=data.delta, g_norm=g_norm, perp_norm=perp,
        admissible=not failed, failed=failed,
        identity_lhs=identity[0], identity_rhs=identity[1],
    )


def require_admissible(op, data, backend=None):
    report = check_admissible(op, data, backend)
    if not report.admissible:
        raise InadmissibleDataError(report.message(), report=report)
    return report


def morozov_find_epsilon(op, data, tol=1e-6, bracket=(1e-12, 1e6), maxiter=100):
    """Solve E(eps) = delta^2 by safeguarded Newton in s = log(eps).

    Requires admissible data (the lower inequality is enforced whenever
    ||g_perp|| is known).  Returns (eps, MixedSolution at eps).  The
    Newton step on phi(s) = E(e^s) - delta^2 uses phi'(s) = eps E'(eps);
    steps leaving the bracket, or not shrinking it, fall back to
    bisection.  Convergence: |sqrt(E) - delta| <= tol * delta.
    """
    require_admissible(op, data)
    delta = data.delta
    lo, hi = np.log(bracket[0]), np.log(bracket[1])

    g_norm = data.g_norm(op)
    s = np.log(min(max(delta ** 2 / g_norm ** 2, bracket[0] * 10), bracket[1] / 10))
    best = None
    for _ in range(maxiter):
        eps = np.exp(s)
        sol = solve_mixed(op, data, eps)
        best = sol
        phi = sol.discrepancy ** 2 - delta ** 2
        if abs(sol.discrepancy - delta) <= tol * delta:
            return eps, sol
        if phi > 0:
            hi = s
        else:
            lo = s
        dphi = eps * discrepancy_derivative(op, data, sol)
        if dphi > 0:
            s_new = s - phi / dphi
        else:
            s_new = 0.5 * (lo + hi)
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        s = s_new
        if hi - lo < 1e-15:
            break
    raise ConvergenceError(
        f"Morozov root-finder did not reach |E^1/2 - delta| <= {tol:g}*delta "
        f"in {maxiter} iterations; bracket [{np.exp(lo):.3e}, {np.exp(hi):.3e}], "
        f"last discrepancy {best.discrepancy:.6e} vs delta {delta:.6e}"
    )
