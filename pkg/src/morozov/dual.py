"""Convex-dual route to the Morozov solution.

For admissible data (||g_perp^delta|| < delta < ||g^delta||) the
functional

    G_P(q) = 1/2 ||A* q||_V^2 + delta ||(I - P) q||_H - (g^delta, q)_H

is coercive and strictly convex on H; its minimizer p gives the
regularized solution u = A* p directly, with ||A u - g^delta|| = delta
whenever (I - P) p != 0, and eps(delta) = delta / ||(I - P) p||_H.

Minimization runs in two phases: a fixed-point warm start that solves
the smooth-branch stationarity (A A* + eps_n (I - P)) q = g with
eps_n = delta / ||(I - P) q_{n-1}||, then Barzilai-Borwein gradient
descent with a nonmonotone line search down to the gradient tolerance.
The P = 0 fixed point, with its eps trace and divergence monitoring, is
exposed as `demeestere_iterate`.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .numerics import conjugate_gradient, SolverFailure
from .mixed import require_admissible
from .operator import ConvergenceError, DualIterate, InadmissibleDataError, \
    NonsmoothPointError, Projector

NONSMOOTH_EPS = 1e-14  # absolute ||(I-P)q||_H below which the gradient is refused


@dataclass
class DualOptions:
    gtol_rel: float = 1e-8      # stop when ||grad||_H <= gtol_rel * ||g||_H
    eps_tol: float = 1e-8       # fixed point stops on relative eps change
    max_outer: int = 200        # fixed-point iteration cap
    max_bb: int = 5000          # BB iteration cap
    bb_memory: int = 10         # nonmonotone line-search window
    method: str = "auto"        # auto | fixed-point | bb
    cg_tol: float = 1e-12       # matrix-free shifted-solve tolerance
    force_matrix_free: bool = False
    nonsmooth_switch: float = 1e-10  # relative ||(I-P)q|| triggering branch switch


@dataclass
class DualResult:
    p: DualIterate
    u: np.ndarray
    objective: float
    grad_norm: float
    iterations: dict
    converged: bool
    branch: str                 # smooth | nonsmooth
    checks: dict = field(default_factory=dict)


def dual_objective(op, data, projector, q):
    """G_P(q); projector=None means P = 0."""
    g = data.stacked(op)
    u = op.apply_adjoint(q)
    w = q if projector is None or projector.is_zero else projector.complement(op, q)
    return 0.5 * op.vdot(u, u) + data.delta * op.norm_h(w) - op.hdot(g, q)


def dual_gradient(op, data, projector, q):
    """H-Riesz gradient of G_P at q, on the smooth branch.

    Raises NonsmoothPointError when ||(I-P)q||_H < 1e-14, where the
    second term is not differentiable.
    """
    g = data.stacked(op)
    w = q if projector is None or projector.is_zero else projector.complement(op, q)
    nw = op.norm_h(w)
    if nw < NONSMOOTH_EPS:
        raise NonsmoothPointError(
            f"||(I-P)q||_H = {nw:.3e} < {NONSMOOTH_EPS:g}: G_P is not "
            "differentiable here"
        )
    return op.apply_gram_normal(q) + (data.delta / nw) * w - g


class _ShiftedSolver:
    """Solves (A A* + eps (I - P)) q = rhs, densely when affordable."""

    def __init__(self, op, projector, force_matrix_free=False, cg_tol=1e-12):
        self.op = op
        self.projector = projector or Projector.zero()
        self.dense = op.use_dense_normal() and not force_matrix_free
        self.cg_tol = cg_tol
        if self.dense:
            self.s = op.dense_normal_form()          # G_H A A*, symmetric PSD
            if "gh_dense" not in op._cache:
                gh = sp.block_diag([op.gram_m, op.gram_o]).toarray()
                op._cache["gh_dense"] = gh
            self.gh = op._cache["gh_dense"]
            self.gh_phi = None
            pr = self.projector
            if not pr.is_zero:
                cols = []
                if pr.basis_m is not None:
                    z = np.zeros((op.n_o, pr.basis_m.shape[1]))
                    cols.append(np.vstack([op.gram_m @ pr.basis_m, z]))
                if pr.basis_o is not None:
                    go = op.gram_o @ pr.basis_o
                    cols.append(
                        np.vstack([np.zeros((op.n_m, pr.basis_o.shape[1])), go])
                    )
                self.gh_phi = np.hstack(cols)

    def solve(self, eps, rhs, x0=None):
        op, pr = self.op, self.projector
        if self.dense:
            w = self.s + eps * self.gh
            if self.gh_phi is not None:
                w = w - eps * (self.gh_phi @ self.gh_phi.T)
            try:
                c = scipy.linalg.cho_factor(w)
            except scipy.linalg.LinAlgError as err:
                raise ConvergenceError(
                    f"shifted dual system singular at eps={eps:.3e}: the "
                    "projector range meets the range complement of A"
                ) from err
            return scipy.linalg.cho_solve(c, op.gram_h(rhs))

        def apply(q):
            out = op.apply_gram_normal(q) + eps * q
            if not pr.is_zero:
                out -= eps * pr.apply(op, q)
            return out

        try:
            return conjugate_gradient(apply, rhs, op.hdot, tol=self.cg_tol, x0=x0)
        except SolverFailure as err:
            raise ConvergenceError(
                f"shifted dual solve failed at eps={eps:.3e}: {err}"
            ) from err


def _initial_iterate(op, data):
    if op.norm_o(data.f) > 0:
        return op.stack(None, data.f / op.norm_o(data.f))
    if data.ell is not None and op.norm_m(data.ell) > 0:
        return op.stack(data.ell / op.norm_m(data.ell), np.zeros(op.n_o))
    raise InadmissibleDataError("zero data: nothing to fit")


def _fixed_point(op, data, projector, opts, solver, eps_window=(1e-14, 1e8)):
    """Iterate (A A* + eps_n (I-P)) q = g, eps_n = delta / ||(I-P)q||_H.

    Returns (q, eps_trace, status) with status in converged | capped |
    nonsmooth.  Raises ConvergenceError when eps leaves eps_window.
    """
    pr = projector or Projector.zero()
    g = data.stacked(op)
    q = _initial_iterate(op, data)
    trace = []
    for n in range(opts.max_outer):
        w = q if pr.is_zero else pr.complement(op, q)
        nw = op.norm_h(w)
        if nw < opts.nonsmooth_switch * max(1.0, op.norm_h(q)):
            return q, trace, "nonsmooth"
        eps = data.delta / nw
        trace.append(eps)
        if not eps_window[0] <= eps <= eps_window[1]:
            raise ConvergenceError(
                f"fixed-point eps diverged to {eps:.3e} at iteration {n}",
                trace=trace,
            )
        q = solver.solve(eps, g, x0=q)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= opts.eps_tol * trace[-1]:
            return q, trace, "converged"
    return q, trace, "capped"


def _range_p_minimizer(op, data, projector):
    """Minimize G_P restricted to Range P (the nonsmooth branch).

    There G_P is the quadratic c -> 1/2 ||A* Phi c||^2 - (g, Phi c) in
    the basis coefficients, a small dense system.
    """
    pr = projector
    cols = []
    if pr.basis_m is not None:
        for j in range(pr.basis_m.shape[1]):
            cols.append(op.stack(pr.basis_m[:, j], np.zeros(op.n_o)))
    if pr.basis_o is not None:
        for j in range(pr.basis_o.shape[1]):
            cols.append(op.stack(None, pr.basis_o[:, j]))
    phi = np.column_stack(cols)
    imgs = np.column_stack(
        [op.apply_adjoint(phi[:, j]) for j in range(phi.shape[1])]
    )
    m = np.array(
        [[op.vdot(imgs[:, i], imgs[:, j]) for j in range(phi.shape[1])]
         for i in range(phi.shape[1])]
    )
    g = data.stacked(op)
    rhs = np.array([op.hdot(g, phi[:, j]) for j in range(phi.shape[1])])
    c, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return phi @ c


def _bb_descent(op, data, projector, opts, q0, gtol):
    """Nonmonotone Barzilai-Borwein descent on G_P from q0."""
    pr = projector or Projector.zero()
    q = q0.copy()
    fval = dual_objective(op, data, pr, q)
    grad = dual_gradient(op, data, pr, q)
    gn = op.norm_h(grad)
    history = [fval]
    w = q if pr.is_zero else pr.complement(op, q)
    lip = op.norm_h(op.apply_gram_normal(grad)) / max(gn, 1e-300) \
        + data.delta / max(op.norm_h(w), 1e-300)
    t = 1.0 / max(lip, 1e-300)
    for k in range(opts.max_bb):
        if gn <= gtol:
            return q, fval, gn, k, True
        step = t
        accepted = False
        fmax = max(history[-opts.bb_memory:])
        for _ in range(60):
            q_new = q - step * grad
            w_new = q_new if pr.is_zero else pr.complement(op, q_new)
            if op.norm_h(w_new) < opts.nonsmooth_switch * max(1.0, op.norm_h(q_new)):
                step *= 0.5  # stepped onto the nonsmooth set
                continue
            f_new = dual_objective(op, data, pr, q_new)
            if f_new <= fmax - 1e-4 * step * gn * gn:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return q, fval, gn, k, gn <= 10 * gtol
        grad_new = dual_gradient(op, data, pr, q_new)
        s = q_new - q
        y = grad_new - grad
        sy = op.hdot(s, y)
        t = op.hdot(s, s) / sy if sy > 0 else step * 2.0
        t = min(max(t, 1e-16), 1e16)
        q, fval, grad = q_new, f_new, grad_new
        gn = op.norm_h(grad)
        history.append(fval)
    return q, fval, gn, opts.max_bb, gn <= gtol


def _package(op, data, projector, q, grad_norm, iterations, converged, branch):
    pr = projector or Projector.zero()
    u = op.apply_adjoint(q)
    fval = dual_objective(op, data, pr, q)
    lam, f = op.split(q)
    res = op.apply_a(u) - data.stacked(op)
    checks = {
        "identity": abs(op.vdot(u, u) + 2.0 * fval),
        "projected_residual": op.norm_h(pr.apply(op, res)) if not pr.is_zero else 0.0,
    }
    if branch == "smooth":
        checks["discrepancy_gap"] = abs(op.norm_h(res) - data.delta) / data.delta
    grad = None
    try:
        grad = dual_gradient(op, data, pr, q)
    except NonsmoothPointError:
        pass
    p = DualIterate(
        lambda_star=lam, f_star=f, objective=fval,
        grad_lambda=None if grad is None else op.split(grad)[0],
        grad_f=None if grad is None else op.split(grad)[1],
    )
    return DualResult(
        p=p, u=u, objective=fval, grad_norm=grad_norm,
        iterations=iterations, converged=converged, branch=branch, checks=checks,
    )


def minimize_dual(op, data, projector=None, options=None):
    """Minimize G_P; returns a DualResult with u = A* p.

    Refuses inadmissible data (the functional would not be coercive),
    naming the violated admissibility inequality.  Postconditions are
    measured into result.checks: the discrepancy gap
    | ||Au - g|| - delta | / delta on the smooth branch, ||P(Au - g)||_H,
    and the primal-dual identity ||u||_V^2 + 2 G_P(p) = 0.
    """
    opts = options or DualOptions()
    pr = projector or Projector.zero()
    require_admissible(op, data)
    g_norm = data.g_norm(op)
    gtol = opts.gtol_rel * g_norm
    solver = _ShiftedSolver(op, pr, opts.force_matrix_free, opts.cg_tol)

    iterations = {"fixed_point": 0, "bb": 0}
    branch = "smooth"
    if opts.method in ("auto", "fixed-point"):
        q, trace, status = _fixed_point(op, data, pr, opts, solver)
        iterations["fixed_point"] = len(trace)
        if status == "nonsmooth":
            branch = "nonsmooth"
        elif status == "capped" and opts.method == "fixed-point":
            raise ConvergenceError(
                f"fixed-point did not converge in {opts.max_outer} iterations",
                trace=trace,
            )
    else:
        q = _initial_iterate(op, data)

    converged = True
    grad_norm = np.nan
    if branch == "smooth" and opts.method in ("auto", "bb"):
        q, _, grad_norm, n_bb, converged = _bb_descent(op, data, pr, opts, q, gtol)
        iterations["bb"] = n_bb
        w = q if pr.is_zero else pr.complement(op, q)
        if op.norm_h(w) < opts.nonsmooth_switch * max(1.0, op.norm_h(q)):
            branch = "nonsmooth"
    elif branch == "smooth":
        grad_norm = op.norm_h(dual_gradient(op, data, pr, q))
        converged = grad_norm <= gtol

    if branch == "nonsmooth":
        if pr.is_zero:
            raise ConvergenceError(
                "iterates collapsed to q = 0 with P = 0; data should have "
                "been inadmissible"
            )
        q_ns = _range_p_minimizer(op, data, pr)
        z = data.stacked(op) - op.apply_gram_normal(q_ns)
        d = pr.complement(op, z)
        nd = op.norm_h(d)
        if nd <= data.delta * (1 + 1e-8):
            # subgradient optimality holds at the nonsmooth point
            return _package(op, data, pr, q_ns, 0.0, iterations, True, "nonsmooth")
        # nonsmooth point is not optimal: step off along the descent ray
        aad = op.apply_gram_normal(d)
        tau = (nd * nd - data.delta * nd) / max(op.hdot(d, aad), 1e-300)
        q, _, grad_norm, n_bb, converged = _bb_descent(
            op, data, pr, opts, q_ns + tau * d, gtol
        )
        iterations["bb"] += n_bb
        branch = "smooth"

    return _package(op, data, pr, q, grad_norm, iterations, converged, branch)


def demeestere_iterate(op, data, eps_tol=1e-8, max_iter=1000,
                       eps_window=(1e-14, 1e8), force_matrix_free=False):
    """P = 0 fixed point: (A A* + eps_n) q_n = g, eps_n = delta/||q_{n-1}||.

    Starts from q_0 = (0, f^delta / ||f^delta||_O), so eps_1 = delta.
    Returns (DualIterate p, u, eps_trace).  Divergence (eps leaving
    eps_window, or no convergence within max_iter) raises
    ConvergenceError carrying the trace; convergence of this iteration
    is not guaranteed by theory when A lacks dense range, hence the
    monitoring.
    """
    require_admissible(op, data)
    opts = DualOptions(eps_tol=eps_tol, max_outer=max_iter,
                       force_matrix_free=force_matrix_free)
    solver = _ShiftedSolver(op, Projector.zero(), force_matrix_free, opts.cg_tol)
    q, trace, status = _fixed_point(op, data, Projector.zero(), opts, solver)
    if status == "capped":
        raise ConvergenceError(
            f"fixed point did not settle within {max_iter} iterations "
            f"(last eps {trace[-1]:.6e})", trace=trace,
        )
    if status == "nonsmooth":
        raise ConvergenceError("iterates collapsed toward q = 0", trace=trace)
    u = op.apply_adjoint(q)
    lam, f = op.split(q)
    p = DualIterate(lambda_star=lam, f_star=f,
                    objective=dual_objective(op, data, None, q))
    return p, u, np.array(trace)


def morozov_from_dual(op, p, delta, projector=None):
    """eps(delta) = delta / ||(I - P) p||_H from the dual minimizer."""
    q = p.stacked(op) if isinstance(p, DualIterate) else np.asarray(p, float)
    pr = projector or Projector.zero()
    w = q if pr.is_zero else pr.complement(op, q)
    nw = op.norm_h(w)
    if nw < 1e-14:
        raise ValueError(
            "||(I-P)p||_H is numerically zero: the Morozov equation has no "
            "finite eps (nonsmooth-branch minimizer)"
        )
    return delta / nw
