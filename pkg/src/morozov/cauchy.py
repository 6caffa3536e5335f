"""Cauchy data completion for the Laplace equation.

Recover u harmonic on the unit square from its Dirichlet trace on the
accessible boundary part Gamma, with a homogeneous Neumann condition on
Gamma built into the weak constraint: the test space M consists of H1
functions vanishing on the rest of the boundary, so b(u, mu) = integral
of grad u . grad mu enforces both.  The observation space O is the P1
trace space on Gamma with the L2(Gamma) inner product; the operator has
dense range, so the range complement is trivial.
"""

import numpy as np

from .assemble import assemble_boundary_mass, assemble_p1, p1_zero_on
from .backends import ZeroPerpBackend
from .laplace import BenchmarkSolution
from .mesh import GAMMA, GAMMA_TILDE
from .operator import AssimilationOperator, constant_observation_projector


def build_cauchy(mesh):
    """Assemble the data completion operator on a boundary-partition mesh."""
    stiffness, mass = assemble_p1(mesh)
    dof_m = p1_zero_on(mesh, {GAMMA_TILDE})
    gram_v = stiffness + mass
    gram_m = dof_m.restrict(stiffness)
    b_form = dof_m.restrict(stiffness, cols=False)
    gram_o, trace_rows, gamma = assemble_boundary_mass(mesh, {GAMMA})
    meta = {
        "application": "cauchy",
        "mesh": mesh,
        "dof_m": dof_m,
        "gamma": gamma,
    }
    return AssimilationOperator(gram_v, gram_m, gram_o, b_form, trace_rows, meta)


def make_backend(op):
    return ZeroPerpBackend(op)


def make_projector_PO(op):
    """Rank-one projector onto the constant trace on Gamma."""
    return constant_observation_projector(op)


def exact_solution(name="cosh"):
    """Harmonic benchmark with zero normal derivative on the bottom side."""
    if name != "cosh":
        raise ValueError(f"unknown cauchy benchmark '{name}'")
    c = np.cosh(np.pi)

    def u(x, y):
        return np.cos(np.pi * x) * np.cosh(np.pi * y) / c

    def grad(x, y):
        return (-np.pi * np.sin(np.pi * x) * np.cosh(np.pi * y) / c,
                np.pi * np.cos(np.pi * x) * np.sinh(np.pi * y) / c)

    return BenchmarkSolution("cauchy-cos", u=u, grad=grad)


def trace_values(op, sol):
    """Exact observation: the solution at the Gamma vertices."""
    pts = op.meta["mesh"].verts[op.meta["gamma"]]
    return sol.u(pts[:, 0], pts[:, 1])
