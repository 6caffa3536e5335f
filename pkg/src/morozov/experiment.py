"""Config-driven experiment runs with reproducible CSV output.

A run is described by a flat key = value config (unknown keys are
errors).  Every CSV starts with comment lines that embed the command
name and the complete config, so any output file can be regenerated
bitwise from its own header; volatile quantities such as wall-clock
time are therefore reported on stdout only, never written into the
files.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import cauchy, heat, laplace
from .dual import demeestere_iterate, minimize_dual, morozov_from_dual
from .estimator import build_problem, build_projector
from .mixed import check_admissible, discrepancy_curve, morozov_find_epsilon, \
    solve_mixed
from .noise import synth_noise_pointwise, synth_noise_structured
from .operator import NoisyData

EPS_GRID = np.logspace(-10.0, 4.0, 50)

_ENUMS = {
    "application": ("laplace", "cauchy", "heat"),
    "omega": ("disk", "exterior-of-disk", "five-disks", "interior"),
    "noise": ("structured", "pointwise", "none"),
    "projector": ("none", "po", "pm0", "pm"),
    "solver": ("newton-morozov", "dual-gradient", "demeestere"),
    "sweep_param": ("", "alpha", "delta_r", "projector"),
}

_EXACT_IDS = {
    "laplace": ("poly", "exp-sin"),
    "cauchy": ("cosh",),
    "heat": ("separated", "poly"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of one experiment; all fields serialize as text."""

    application: str = "laplace"
    n: int = 20
    omega: str = "exterior-of-disk"
    area_fraction: float = 0.4
    gamma_fraction: float = 0.25
    strip_lo: float = 0.25
    strip_hi: float = 0.75
    horizon: float = 1.0
    exact: str = "poly"
    noise: str = "pointwise"
    delta: float = 0.0
    delta_r: float = 0.0
    seed: int = 0
    projector: str = "none"
    n_modes: int = 5
    solver: str = "newton-morozov"
    sweep_param: str = ""
    sweep_values: str = ""

    def validate(self):
        for name, allowed in _ENUMS.items():
            if getattr(self, name) not in allowed:
                raise ValueError(
                    f"config {name} = '{getattr(self, name)}' not in {allowed}"
                )
        if self.exact not in _EXACT_IDS[self.application]:
            raise ValueError(
                f"exact = '{self.exact}' unknown for {self.application}; "
                f"choose from {_EXACT_IDS[self.application]}"
            )
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.noise == "structured":
            if self.delta <= 0:
                raise ValueError("structured noise needs delta > 0")
            if self.application == "cauchy":
                raise ValueError(
                    "structured noise needs a nontrivial range complement; "
                    "the cauchy operator has dense range"
                )
        if self.noise == "pointwise" and (self.delta > 0) == (self.delta_r > 0):
            raise ValueError("pointwise noise needs exactly one of "
                             "delta, delta_r positive")
        if self.noise == "none" and (self.delta > 0 or self.delta_r > 0):
            raise ValueError("noise = none contradicts a positive amplitude")
        if self.projector != "none" and self.solver != "dual-gradient":
            raise ValueError("projectors require solver = dual-gradient")
        if self.sweep_param and not self.sweep_values:
            raise ValueError("sweep_param set but sweep_values empty")
        return self

    def to_text(self):
        return "\n".join(
            f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)
        ) + "\n"

    @classmethod
    def from_text(cls, text):
        known = {f.name: f.type for f in fields(cls)}
        seen = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {ln}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"config line {ln}: unknown key '{key}'")
            if key in seen:
                raise ValueError(f"config line {ln}: duplicate key '{key}'")
            caster = known[key] if callable(known[key]) else \
                {"int": int, "float": float, "str": str}[known[key]]
            try:
                seen[key] = caster(value)
            except ValueError as err:
                raise ValueError(
                    f"config line {ln}: cannot read {key} = '{value}'"
                ) from err
        return cls(**seen).validate()

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class RunReport:
    """All table quantities for one solve, recomputed from final vectors."""

    status: str = "ok"
    message: str = ""
    delta: float = np.nan
    g_norm: float = np.nan
    perp_norm: float = np.nan
    margin_lower: float = np.nan
    margin_upper: float = np.nan
    epsilon: float = np.nan
    discrepancy: float = np.nan
    h1_abs: float = np.nan
    h1_rel: float = np.nan
    l2_abs: float = np.nan
    l2_rel: float = np.nan
    int_u: float = np.nan
    int_f: float = np.nan
    pm_residual: float = np.nan
    identity_gap: float = np.nan
    wall_seconds: float = np.nan

    # wall_seconds is volatile and stays out of the CSVs
    csv_fields = ("status", "message", "delta", "g_norm", "perp_norm",
                  "margin_lower", "margin_upper", "epsilon", "discrepancy",
                  "h1_abs", "h1_rel", "l2_abs", "l2_rel", "int_u", "int_f",
                  "pm_residual", "identity_gap")

    def row(self):
        out = []
        for name in self.csv_fields:
            v = getattr(self, name)
            out.append(v.replace(",", ";") if isinstance(v, str) else v)
        return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_csv(path, command, cfg, meta, columns, rows):
    lines = [f"# morozov {command}"]
    for f in fields(cfg):
        lines.append(f"# config.{f.name} = {_fmt(getattr(cfg, f.name))}")
    for key, value in meta:
        lines.append(f"# {key} = {_fmt(value)}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv_header(path):
    """Parse (command, config, meta dict) back out of a CSV header."""
    command, items, meta = None, {}, {}
    with open(path) as fh:
        for raw in fh:
            if not raw.startswith("#"):
                break
            body = raw[1:].strip()
            if command is None and body.startswith("morozov "):
                command = body.split(" ", 1)[1]
            elif body.startswith("config.") and "=" in body:
                key, value = (s.strip() for s in body.split("=", 1))
                items[key[len("config."):]] = value
            elif "=" in body:
                key, value = (s.strip() for s in body.split("=", 1))
                meta[key] = value
    if command is None:
        raise ValueError(f"{path}: not a morozov CSV (no command line)")
    text = "\n".join(f"{k} = {v}" for k, v in items.items())
    return command, ExperimentConfig.from_text(text), meta


def rerun_csv(path, out_dir):
    """Re-execute the run recorded in a CSV header.

    Returns the runner's own result tuple; the first entry lists the
    regenerated files, which reproduce the originals bitwise.
    """
    command, cfg, _ = read_csv_header(path)
    runner = {
        "curve": run_curve,
        "solve": run_solve,
        "sweep": run_sweep,
        "error-vs-eps": run_error_vs_eps,
        "project": run_project,
    }[command]
    return runner(cfg, out_dir)


def build_experiment(cfg):
    """Assemble (op, backend, mesh, benchmark solution, exact observation)."""
    cfg.validate()
    op, backend = build_problem(
        cfg.application, cfg.n, cfg.omega, cfg.area_fraction,
        cfg.gamma_fraction, (cfg.strip_lo, cfg.strip_hi), cfg.horizon,
    )
    mesh = op.meta["mesh"]
    if cfg.application == "laplace":
        sol = laplace.exact_solution(cfg.exact)
        f_exact = sol.cell_averages(mesh)
    elif cfg.application == "cauchy":
        sol = cauchy.exact_solution(cfg.exact)
        f_exact = cauchy.trace_values(op, sol)
    else:
        sol = heat.exact_solution(cfg.exact, horizon=cfg.horizon)
        f_exact = sol.cell_averages(mesh)
    return op, backend, mesh, sol, f_exact


def synth_data(cfg, op, backend, f_exact):
    if cfg.noise == "none":
        return NoisyData(f=np.asarray(f_exact, float), delta=0.0, ell=None)
    if cfg.noise == "structured":
        return synth_noise_structured(op, backend, f_exact, delta=cfg.delta)
    return synth_noise_pointwise(
        op, f_exact,
        delta=cfg.delta if cfg.delta > 0 else None,
        delta_r=cfg.delta_r if cfg.delta_r > 0 else None,
        seed=cfg.seed,
    )


def _admissibility_meta(report):
    return [
        ("delta", report.delta),
        ("g_norm", report.g_norm),
        ("g_perp_norm", np.nan if report.perp_norm is None else report.perp_norm),
        ("admissible", report.admissible),
    ]


def run_curve(cfg, out_dir):
    """Discrepancy curve over EPS_GRID; returns (paths, ok, message)."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "curve.csv")
    op, backend, mesh, sol, f_exact = build_experiment(cfg)
    data = synth_data(cfg, op, backend, f_exact)
    report = check_admissible(op, data, backend=backend)
    meta = _admissibility_meta(report)
    columns = ("epsilon", "discrepancy")
    if data.delta > 0 and not report.admissible:
        _write_csv(path, "curve", cfg, meta, columns, [])
        return [path], False, report.message()
    values, _ = discrepancy_curve(op, data, EPS_GRID)
    rows = list(zip(EPS_GRID, values))
    _write_csv(path, "curve", cfg, meta, columns, rows)
    drops = np.diff(values) < -1e-9 * np.maximum(values[1:], 1e-300)
    ok = not drops.any()
    msg = "" if ok else f"curve decreased at {int(drops.sum())} grid steps"
    return [path], ok, msg


def _solve_core(cfg, op, backend, mesh, sol, f_exact):
    """Run the configured solver; returns (RunReport, u, ok)."""
    t0 = time.perf_counter()
    data = synth_data(cfg, op, backend, f_exact)
    report = check_admissible(op, data, backend=backend)
    rr = RunReport(
        delta=data.delta, g_norm=report.g_norm,
        perp_norm=np.nan if report.perp_norm is None else report.perp_norm,
        margin_lower=np.nan if report.margin_lower is None else report.margin_lower,
        margin_upper=report.margin_upper,
    )
    if not report.admissible:
        rr.status, rr.message = "failed", report.message()
        rr.wall_seconds = time.perf_counter() - t0
        return rr, None, False
    pr = build_projector(op, cfg.application, cfg.projector, cfg.n_modes)
    checks = []
    if cfg.solver == "newton-morozov":
        eps, ms = morozov_find_epsilon(op, data, tol=1e-10)
        u = ms.u
        rr.epsilon = eps
    elif cfg.solver == "demeestere":
        p, u, trace = demeestere_iterate(op, data)
        rr.epsilon = float(trace[-1])
    else:
        res = minimize_dual(op, data, projector=pr)
        u = res.u
        rr.epsilon = (morozov_from_dual(op, res.p, data.delta, pr)
                      if res.branch == "smooth" else np.inf)
        nu2 = op.vdot(u, u)
        rr.identity_gap = res.checks["identity"] / max(nu2, 1e-300)
        checks.append(("duality identity", rr.identity_gap <= 1e-8))
        if pr is not None and not pr.is_zero:
            checks.append(("projected residual",
                           res.checks["projected_residual"]
                           <= 1e-8 * max(data.delta, 1e-300)))

    resid = op.apply_a(u) - data.stacked(op)
    rr.discrepancy = op.norm_h(resid)
    if np.isfinite(rr.epsilon):
        checks.append(("discrepancy = delta",
                       abs(rr.discrepancy - data.delta) <= 1e-4 * data.delta))
    else:
        checks.append(("discrepancy <= delta",
                       rr.discrepancy <= data.delta * (1 + 1e-8)))

    if cfg.application == "heat":
        rr.h1_abs, rr.h1_rel = heat.v_error(op, u, sol)
        rr.l2_abs, rr.l2_rel = laplace.l2_omega_error(mesh, u, sol)
    elif cfg.application == "cauchy":
        rr.h1_abs, rr.h1_rel = laplace.p1_error(mesh, u, sol)
        r = op.apply_c(u) - np.asarray(f_exact, float)
        rr.l2_abs = op.norm_o(r)
        rr.l2_rel = rr.l2_abs / op.norm_o(f_exact)
    else:
        rr.h1_abs, rr.h1_rel = laplace.h1_error(mesh, u, sol)
        rr.l2_abs, rr.l2_rel = laplace.l2_omega_error(mesh, u, sol)

    ones_o = np.ones(op.n_o)
    rr.int_u = op.odot(ones_o, op.apply_c(u))
    rr.int_f = op.odot(ones_o, data.f)
    basis_m = pr.basis_m if pr is not None else None
    if basis_m is None and cfg.application == "laplace":
        basis_m = laplace.make_projector_PM0(op, n_modes=cfg.n_modes).basis_m
    if basis_m is not None:
        bu = op.gram_m @ op.apply_b(u)
        rr.pm_residual = float(np.linalg.norm(basis_m.T @ bu))

    rr.status = "ok" if all(flag for _, flag in checks) else "failed"
    rr.message = "; ".join(name for name, flag in checks if not flag)
    rr.wall_seconds = time.perf_counter() - t0
    return rr, u, rr.status == "ok"


def run_solve(cfg, out_dir):
    """Single Morozov solve; writes report and solution CSVs."""
    cfg.validate()
    if cfg.noise == "none":
        raise ValueError("solve needs noisy data; use error-vs-eps for "
                         "exact-data studies")
    os.makedirs(out_dir, exist_ok=True)
    op, backend, mesh, sol, f_exact = build_experiment(cfg)
    rr, u, ok = _solve_core(cfg, op, backend, mesh, sol, f_exact)
    report_path = os.path.join(out_dir, "solve.csv")
    _write_csv(report_path, "solve", cfg, [], RunReport.csv_fields, [rr.row()])
    paths = [report_path]
    if u is not None:
        exact = sol.vertex_values(mesh)
        rows = [
            (x, y, ui, ei, ei - ui)
            for (x, y), ui, ei in zip(mesh.verts, u, exact)
        ]
        sol_path = os.path.join(out_dir, "solve_solution.csv")
        _write_csv(sol_path, "solve", cfg, [("part", "solution")],
                   ("x", "y", "u", "u_exact", "diff"), rows)
        paths.append(sol_path)
    return paths, ok, rr.message, rr


def _sweep_points(cfg):
    values = [s.strip() for s in cfg.sweep_values.split(",") if s.strip()]
    if not values:
        raise ValueError("sweep_values is empty")
    points = []
    for v in values:
        if cfg.sweep_param == "alpha":
            points.append((v, replace(cfg, area_fraction=float(v))))
        elif cfg.sweep_param == "delta_r":
            points.append((v, replace(cfg, delta_r=float(v))))
        elif cfg.sweep_param == "projector":
            solver = "dual-gradient" if v != "none" else cfg.solver
            points.append((v, replace(cfg, projector=v, solver=solver)))
        else:
            raise ValueError("sweep_param must be alpha, delta_r or projector")
    return points


def run_sweep(cfg, out_dir, threads=1):
    """One solve per sweep value; rows stay in sweep order."""
    cfg.validate()
    points = _sweep_points(cfg)
    os.makedirs(out_dir, exist_ok=True)

    def one(point):
        label, sub = point
        try:
            sub.validate()
            op, backend, mesh, sol, f_exact = build_experiment(sub)
            rr, _, ok = _solve_core(sub, op, backend, mesh, sol, f_exact)
        except Exception as err:
            rr, ok = RunReport(status="failed", message=str(err)), False
        return label, rr, ok

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(p) for p in points]

    columns = (cfg.sweep_param,) + RunReport.csv_fields
    rows = [(label,) + tuple(rr.row()) for label, rr, _ in results]
    path = os.path.join(out_dir, "sweep.csv")
    _write_csv(path, "sweep", cfg, [], columns, rows)
    ok = all(flag for _, _, flag in results)
    failed = [label for label, _, flag in results if not flag]
    msg = "" if ok else f"failed rows: {', '.join(failed)}"
    return [path], ok, msg, [rr for _, rr, _ in results]


def run_error_vs_eps(cfg, out_dir):
    """Reconstruction error along EPS_GRID, Morozov point in metadata."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "error_vs_eps.csv")
    op, backend, mesh, sol, f_exact = build_experiment(cfg)
    data = synth_data(cfg, op, backend, f_exact)
    report = check_admissible(op, data, backend=backend)
    meta = _admissibility_meta(report)
    columns = ("epsilon", "error_abs", "error_rel")
    if data.delta > 0 and not report.admissible:
        _write_csv(path, "error-vs-eps", cfg, meta, columns, [])
        return [path], False, report.message()
    if data.delta > 0:
        eps_star, _ = morozov_find_epsilon(op, data, tol=1e-10)
        meta.append(("morozov_epsilon", eps_star))

    def err(u):
        if cfg.application == "heat":
            return heat.v_error(op, u, sol)
        return laplace.p1_error(mesh, u, sol)

    rows = []
    for eps in EPS_GRID:
        s = solve_mixed(op, data, eps)
        ea, er = err(s.u)
        rows.append((eps, ea, er))
    _write_csv(path, "error-vs-eps", cfg, meta, columns, rows)
    return [path], True, ""


def run_project(cfg, out_dir):
    """Range-complement projection of the configured data pair."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    op, backend, mesh, sol, f_exact = build_experiment(cfg)
    data = synth_data(cfg, op, backend, f_exact)
    proj = backend.project(*op.split(data.stacked(op)))
    scale = max(abs(proj.identity_lhs), abs(proj.identity_rhs), 1e-300)
    gap = abs(proj.identity_lhs - proj.identity_rhs) / scale
    meta = [
        ("perp_norm", proj.norm_h),
        ("identity_lhs", proj.identity_lhs),
        ("identity_rhs", proj.identity_rhs),
        ("identity_gap", gap),
        ("mode", proj.mode),
    ]
    rows = [("lam", i, v) for i, v in enumerate(proj.lam)]
    rows += [("f_perp", i, v) for i, v in enumerate(proj.f)]
    path = os.path.join(out_dir, "project.csv")
    _write_csv(path, "project", cfg, meta, ("kind", "index", "value"), rows)
    ok = proj.mode == "zero" or gap <= 1e-8
    return [path], ok, "" if ok else f"projection identity gap {gap:.3e}"


def run_mesh_dump(cfg, out_dir):
    """Write the configured mesh in the plain-text mesh format."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    op, _, mesh, _, _ = build_experiment(cfg)
    path = os.path.join(out_dir, "mesh.txt")
    mesh.dump(path)
    return [path], True, ""
