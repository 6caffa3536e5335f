"""Noisy-data synthesis for the assimilation experiments.

Two recipes:

* structured: a fixed range-direction perturbation (the operator applied
  to the interpolant of w = (x^2 + y^2)/4) plus a fixed perpendicular
  direction (the range-complement projection of an indicator supported
  where x^2 + y^2 > 1), split so the perpendicular part carries half the
  noise amplitude: ||g_perp^delta|| = delta / 2 while ||g^delta - g|| =
  delta.  Deterministic; on the exact (algebraic) projection route the
  split holds to machine precision.
* pointwise: one uniform [0, 1] draw per mesh vertex, observed the same
  way as the data and rescaled so the O-norm of the perturbation
  matches the requested absolute or relative level.  The draws keep
  their positive mean and neighboring cells share vertices, so a
  sizeable part of the perturbation is smooth and lies along the
  operator range; reconstructions follow that part, which sets the
  error levels of the benchmark runs.
"""

import numpy as np

from .operator import NoisyData


def synth_noise_structured(op, backend, f_exact, delta, ell_exact=None,
                           indicator=None):
    """Two-direction noise with an exact range/perpendicular split.

    Returns NoisyData with `perp_norm` filled in when the backend
    projection is exact (algebraic mode); the base data is cleaned of
    its own perpendicular component first in that case, so the noisy
    data's perpendicular norm is exactly delta / 2.
    """
    mesh = op.meta["mesh"]
    if indicator is None:
        indicator = lambda x, y: x * x + y * y > 1.0

    ell0 = np.zeros(op.n_m) if ell_exact is None else np.asarray(ell_exact, float)
    f0 = np.asarray(f_exact, float)

    # range direction: A applied to the interpolant of w = (x^2 + y^2) / 4
    w = (mesh.verts[:, 0] ** 2 + mesh.verts[:, 1] ** 2) / 4.0
    par = op.stack(op.apply_b(w), op.apply_c(w))
    par_norm = op.norm_h(par)
    if par_norm <= 0:
        raise ValueError("degenerate range direction")
    par /= par_norm

    # perpendicular direction: projection of an indicator observation
    bary = mesh.barycenters[op.meta["omega_tris"]]
    f_ind = indicator(bary[:, 0], bary[:, 1]).astype(float)
    if not f_ind.any():
        raise ValueError(
            "indicator region misses omega; structured noise is set up "
            "for the exterior-of-disk domain"
        )
    proj = backend.project(None, f_ind)
    if proj.norm_h <= 0:
        raise ValueError("perpendicular direction vanished")
    perp = proj.stacked(op) / proj.norm_h

    g0 = op.stack(ell0, f0)
    exact_split = proj.mode == "algebraic"
    if exact_split:
        base_perp = backend.project(*op.split(g0))
        g0 = g0 - base_perp.stacked(op)

    g = g0 + (np.sqrt(3.0) / 2.0) * delta * par + 0.5 * delta * perp
    g_norm = op.norm_h(g)
    if g_norm <= delta:
        raise ValueError(
            f"noise level delta={delta:g} is not admissible for this data: "
            f"||g|| = {g_norm:g}"
        )
    ell, f = op.split(g)
    return NoisyData(f=f, delta=float(delta), ell=ell,
                     perp_norm=0.5 * delta if exact_split else None)


def synth_noise_pointwise(op, f_exact, delta=None, delta_r=None, seed=0,
                          ell_exact=None):
    """Vertex-pointwise uniform noise, rescaled to an exact O-norm.

    Draws one uniform [0, 1] value per mesh vertex, reads the resulting
    continuous field through the observation (cell averages over the
    omega triangles, or the trace at the Gamma vertices) and rescales
    the perturbation to O-norm delta.  Give either `delta` (absolute)
    or `delta_r` (relative to the exact observation norm).  The
    returned data carries the achieved absolute delta.
    """
    if (delta is None) == (delta_r is None):
        raise ValueError("give exactly one of delta, delta_r")
    f0 = np.asarray(f_exact, float)
    mesh = op.meta["mesh"]
    rng = np.random.default_rng(seed)
    theta_v = rng.uniform(0.0, 1.0, size=mesh.n_vertices)
    if "gamma" in op.meta:
        theta = theta_v[op.meta["gamma"]]
    else:
        theta = theta_v[mesh.tris[mesh.in_omega]].mean(axis=1)
    theta_norm = op.norm_o(theta)
    if delta is None:
        delta = float(delta_r) * op.norm_o(f0)
    f = f0 + (delta / theta_norm) * theta
    ell = None if ell_exact is None else np.asarray(ell_exact, float)
    return NoisyData(f=f, delta=float(delta), ell=ell)


def make_inadmissible_data(op, backend, f_exact, delta, ratio=1.5,
                           ell_exact=None):
    """Data whose perpendicular component exceeds delta (ratio > 1).

    Violates the lower admissibility inequality on purpose; used to
    exercise the refusal paths.  Needs a backend with a nontrivial
    range complement.
    """
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1 to violate admissibility")
    ell0 = np.zeros(op.n_m) if ell_exact is None else np.asarray(ell_exact, float)
    f0 = np.asarray(f_exact, float)
    g0 = op.stack(ell0, f0)
    base = backend.project(ell0, f0)
    if base.mode != "algebraic":
        g_try = g0
    else:
        g_try = g0 - base.stacked(op)

    probe = np.random.default_rng(7).uniform(-1.0, 1.0, size=op.n_o)
    proj = backend.project(None, probe)
    if proj.norm_h <= 1e-12 * op.norm_o(probe):
        raise ValueError("operator range complement is trivial")
    perp = proj.stacked(op) / proj.norm_h

    g = g_try + ratio * delta * perp
    ell, f = op.split(g)
    return NoisyData(f=f, delta=float(delta), ell=ell,
                     perp_norm=ratio * delta if base.mode == "algebraic" else None)
