"""Scikit-learn style front end for the Morozov-regularized solvers.

MorozovEstimator wraps mesh generation, operator assembly, the
admissibility check and one of the three parameter-choice solvers
behind fit/predict.  The observation vector plays the role of the
training data; predict evaluates the reconstructed field at arbitrary
points of the computational domain.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import cauchy, heat, laplace
from .dual import demeestere_iterate, minimize_dual, morozov_from_dual
from .mesh import OmegaSpec, generate_mesh
from .mixed import check_admissible, morozov_find_epsilon, solve_mixed
from .operator import NoisyData

_APPLICATIONS = ("laplace", "cauchy", "heat")
_SOLVERS = ("newton-morozov", "dual-gradient", "demeestere")
_PROJECTORS = ("none", "po", "pm0", "pm")
_OMEGAS = ("disk", "exterior-of-disk", "five-disks", "interior")


def build_problem(application, n, omega="exterior-of-disk", area_fraction=0.4,
                  gamma_fraction=0.25, strip=(0.25, 0.75), horizon=1.0):
    """Mesh and assemble one application; returns (op, backend)."""
    if application == "laplace":
        if omega not in _OMEGAS:
            raise ValueError(f"unknown omega variant '{omega}'")
        spec = (OmegaSpec.interior() if omega == "interior"
                else getattr(OmegaSpec, omega.replace("-", "_"))(area_fraction))
        mesh = generate_mesh(n, spec)
        op = laplace.build_laplace_da(mesh)
        return op, laplace.make_backend(op)
    if application == "cauchy":
        mesh = generate_mesh(n, OmegaSpec.boundary_partition(gamma_fraction))
        op = cauchy.build_cauchy(mesh)
        return op, cauchy.make_backend(op)
    if application == "heat":
        mesh = heat.heat_mesh(n, horizon=horizon, omega=strip)
        op = heat.build_heat_da(mesh)
        return op, heat.make_backend(op)
    raise ValueError(f"unknown application '{application}'")


def build_projector(op, application, projector, n_modes=5):
    if projector == "none":
        return None
    if projector == "po":
        mod = {"laplace": laplace, "cauchy": cauchy, "heat": heat}[application]
        return mod.make_projector_PO(op)
    if application != "laplace":
        raise ValueError(
            f"projector '{projector}' needs the eigenmode construction, "
            "which only the laplace application provides"
        )
    if projector == "pm0":
        return laplace.make_projector_PM0(op, n_modes=n_modes)
    if projector == "pm":
        return laplace.make_projector_PM_nonadmissible(op, n_modes=n_modes)
    raise ValueError(f"unknown projector '{projector}'")


class MorozovEstimator(BaseEstimator):
    """Morozov-principle reconstruction as a fit/predict estimator.

    Parameters
    ----------
    application : str
        'laplace' (interior data), 'cauchy' (boundary data) or 'heat'
        (space-time interior data).
    n : int
        Mesh subdivisions per unit side; h = 1/n.
    omega : str
        Observation region variant for the laplace application.
    area_fraction : float
        Target |omega|/|Omega| for the disk-type variants.
    gamma_fraction : float
        Fraction of the boundary carrying data (cauchy).
    strip : tuple of float
        Observation strip (a, b) in x (heat).
    horizon : float
        Final time T (heat).
    solver : str
        'newton-morozov' (root of the discrepancy equation),
        'dual-gradient' (minimize G_P, supports projectors) or
        'demeestere' (fixed-point iteration).
    projector : str
        'none', 'po', 'pm0' or 'pm'; only 'dual-gradient' accepts a
        projector other than 'none'.
    n_modes : int
        N + 1 eigenmodes span the M-factor of 'pm0' / 'pm'.
    tol : float
        Solver tolerance (relative, on epsilon or the dual gradient).

    Attributes
    ----------
    u_ : ndarray
        Reconstructed field at mesh vertices.
    epsilon_ : float
        Regularization parameter selected by the discrepancy principle.
    report_ : AdmissibilityReport
        Outcome of the admissibility check on the fitted data.
    discrepancy_ : float
        ||A u - g||_H recomputed from the final vectors.
    """

    def __init__(self, application="laplace", n=20, omega="exterior-of-disk",
                 area_fraction=0.4, gamma_fraction=0.25, strip=(0.25, 0.75),
                 horizon=1.0, solver="newton-morozov", projector="none",
                 n_modes=5, tol=1e-8):
        self.application = application
        self.n = n
        self.omega = omega
        self.area_fraction = area_fraction
        self.gamma_fraction = gamma_fraction
        self.strip = strip
        self.horizon = horizon
        self.solver = solver
        self.projector = projector
        self.n_modes = n_modes
        self.tol = tol

    def _validate_params(self):
        if self.application not in _APPLICATIONS:
            raise ValueError(f"application must be one of {_APPLICATIONS}")
        if self.solver not in _SOLVERS:
            raise ValueError(f"solver must be one of {_SOLVERS}")
        if self.projector not in _PROJECTORS:
            raise ValueError(f"projector must be one of {_PROJECTORS}")
        if self.projector != "none" and self.solver != "dual-gradient":
            raise ValueError(
                "constraint projectors are enforced through the dual "
                "formulation; use solver='dual-gradient'"
            )
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 4):
            raise ValueError("n must be an integer >= 4")

    def fit(self, f, delta=None, ell=None):
        """Fit the reconstruction to an observation vector.

        Parameters
        ----------
        f : array-like
            Observation values (one per omega cell, or per Gamma vertex
            for the cauchy application).
        delta : float
            Noise amplitude for the discrepancy principle; must satisfy
            ||g_perp|| < delta < ||g||.
        ell : array-like, optional
            Model-source data paired with f, one entry per M dof.
        """
        self._validate_params()
        if delta is None or not np.isfinite(delta) or delta <= 0:
            raise ValueError("delta must be a positive noise amplitude")
        op, backend = build_problem(
            self.application, self.n, self.omega, self.area_fraction,
            self.gamma_fraction, self.strip, self.horizon,
        )
        f = np.asarray(f, dtype=float).ravel()
        if f.shape[0] != op.n_o:
            raise ValueError(
                f"f has {f.shape[0]} entries, expected {op.n_o} for "
                f"application '{self.application}' at n={self.n}"
            )
        if not np.all(np.isfinite(f)):
            raise ValueError("f contains non-finite entries")
        if ell is not None:
            ell = np.asarray(ell, dtype=float).ravel()
            if ell.shape[0] != op.n_m:
                raise ValueError(f"ell has {ell.shape[0]} entries, "
                                 f"expected {op.n_m}")
        data = NoisyData(f=f, delta=float(delta), ell=ell)
        pr = build_projector(op, self.application, self.projector, self.n_modes)

        self.operator_ = op
        self.backend_ = backend
        self.report_ = check_admissible(op, data, backend=backend)
        self.lambda_ = None
        self.result_ = None
        if self.solver == "newton-morozov":
            eps, sol = morozov_find_epsilon(op, data, tol=self.tol)
            self.u_, self.lambda_, self.epsilon_ = sol.u, sol.lam, eps
        elif self.solver == "demeestere":
            p, u, trace = demeestere_iterate(op, data, eps_tol=self.tol)
            self.u_, self.epsilon_ = u, float(trace[-1])
            self.result_ = p
        else:
            res = minimize_dual(op, data, projector=pr)
            self.u_ = res.u
            self.result_ = res
            self.epsilon_ = (morozov_from_dual(op, res.p, data.delta, pr)
                             if res.branch == "smooth" else np.inf)
        resid = op.apply_a(self.u_) - data.stacked(op)
        self.discrepancy_ = op.norm_h(resid)
        self.projector_ = pr
        return self

    def predict(self, points):
        """Evaluate the reconstruction at (x, y) points (P1 interpolation)."""
        if not hasattr(self, "u_"):
            raise NotFittedError("call fit before predict")
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError("points must have shape (k, 2)")
        mesh = self.operator_.meta["mesh"]
        return mesh.interpolate_vertex_field(self.u_, points)
