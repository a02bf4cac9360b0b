"""End-to-end orchestration: metric to embedded mesh with verified isometry.

Stage order: geometry of the input metric, seed polynomial, sector
decomposition of the curvature zero set, per-sector iteration (elliptic
regions first, hyperbolic regions consuming their boundary data), patching,
development, and the mesh with its isometry audit.  Every stage writes its
artifacts before any later stage can fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .catalog import AnalyticMetric
from .config import RunConfig, config_hash
from .embed import assemble_embedding, develop, export_mesh, flat_metric
from .errors import DarbouxError, UnsupportedTopologyError
from .frames import build_xframe, rotation_matrix
from .grid import Grid, ScalarField, bilinear_sample, d1, d2, d11, dump_field
from .iteration import (SectorContext, init_schedule, patch_solutions,
                        run_region, transfer_cauchy_data)
from .metric import MetricField, gauss_curvature, vanishing_order
from .regions import decompose_regions, sector_normalize
from .seed import build_z0, residual_decay_order, taylor_metric
from .smoothing import sup_norm

__all__ = ["RunReport", "run_pipeline", "build_metric"]


@dataclass
class RunReport:
    label: str = ""
    confighash: str = ""
    topology: str = ""
    vanishing_order: int = -2
    transversality: float = 0.0
    rotation: float = 0.0
    seed_decay_slope: float = 0.0
    schedule_flags: list = field(default_factory=list)
    sectors: list = field(default_factory=list)
    interfaces: list = field(default_factory=list)
    isometry_error: float = float("nan")
    flatness: float = float("nan")
    loop_defect: float = float("nan")
    tolerances: dict = field(default_factory=dict)
    stage_reached: str = "none"
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_text(self, include_timings=False):
        lines = [
            f"label: {self.label}",
            f"config: {self.confighash}",
            f"stage reached: {self.stage_reached}",
            f"topology: {self.topology}",
            f"curvature vanishing order: {self.vanishing_order}",
            f"transversality angle: {self.transversality!r}",
            f"chart rotation: {self.rotation!r}",
            f"seed residual decay slope: {self.seed_decay_slope!r}",
            "schedule flags:",
        ]
        lines += [f"  - {f}" for f in self.schedule_flags]
        lines.append("sectors:")
        for s in self.sectors:
            lines.append(
                f"  - {s['name']}: converged={s['converged']} "
                f"residual {s['phi0']!r} -> {s['phi_final']!r} "
                f"steps={s['steps']}{' [' + s['note'] + ']' if s.get('note') else ''}"
            )
        lines.append("interfaces:")
        for r in self.interfaces:
            lines.append(
                f"  - {r['interface']}: value jump {r['value_jump']!r} "
                f"grad jump {r['grad_jump']!r}"
            )
        lines += [
            f"flatness (max |K| of flattened metric): {self.flatness!r}",
            f"development loop defect: {self.loop_defect!r}",
            f"isometry error (relative, cellwise max): {self.isometry_error!r}",
            "tolerances:",
        ]
        lines += [f"  {k} = {v!r}" for k, v in sorted(self.tolerances.items())]
        if self.failures:
            lines.append("failures:")
            lines += [f"  - {f}" for f in self.failures]
        if include_timings:
            lines.append("timings (s):")
            lines += [f"  {k} = {v:.2f}" for k, v in self.timings.items()]
        return "\n".join(lines) + "\n"


def build_metric(spec):
    """Analytic metric from expressions, or a spline-backed one from a table."""
    if spec.table:
        from scipy.interpolate import RectBivariateSpline

        data = np.load(spec.table)
        bounds = tuple(data["bounds"])
        g = Grid(bounds, data["g11"].shape)
        ax0, ax1 = g.axes()

        class _Tabulated(AnalyticMetric):
            def __init__(self):
                self.name = f"table:{spec.table}"
                self._gamma_fn = None
                self._curvature_fn = None
                self._spl = [
                    RectBivariateSpline(ax0, ax1, data[k], kx=5, ky=5, s=0)
                    for k in ("g11", "g12", "g22")
                ]

            def comps(self, u, v):
                return tuple(s.ev(u, v) for s in self._spl)

            def dcomps(self, u, v, du, dv):
                return tuple(s.ev(u, v, dx=du, dy=dv) for s in self._spl)

            def jets(self, cap, center=(0.0, 0.0)):
                from .seed import taylor_metric as _tm

                grid = Grid(bounds, data["g11"].shape)
                mf = MetricField(grid, data["g11"], data["g12"], data["g22"])
                mj = _tm(mf, cap)
                return mj.g11, mj.g12, mj.g22

        return _Tabulated()
    return AnalyticMetric(spec.g11, spec.g12, spec.g22, name="config")


def _branch_points(decomp):
    """Map from branch angle to traced points, original chart frame."""
    out = []
    for c in decomp.curves:
        th = math.atan2(c.tangent[1], c.tangent[0])
        out.append((th % (2 * math.pi), c.branch(True)))
        out.append(((th + math.pi) % (2 * math.pi), c.branch(False)))
    return out


def _nearest_branch(branches, angle):
    def dist(a, b):
        d = abs(a - b) % (2 * math.pi)
        return min(d, 2 * math.pi - d)

    return min(branches, key=lambda t: dist(t[0], angle))[1]


def run_pipeline(config: RunConfig, out_dir=None, progress=None):
    """Execute the full pipeline; returns (RunReport, artifacts dict)."""
    t_start = time.time()
    report = RunReport(label=config.label or config.metric.g22,
                       confighash=config_hash(config))
    report.tolerances = {
        "flatness_tol": config.flatness_tol,
        "zero_set_tol": config.zero_set_tol,
        "min_transversality": config.min_transversality,
        "eps": config.eps,
        "residual_target": config.residual_target,
    }
    artifacts = {}
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    def note(stage):
        report.stage_reached = stage
        if progress:
            progress(stage)
        report.timings[stage] = time.time() - t_start

    # ---- metric and curvature ------------------------------------------
    metric = build_metric(config.metric)
    chart_grid = Grid.centered((config.metric.half_width,) * 2,
                               (config.metric.resolution,) * 2)
    gfield = metric.sample(chart_grid) if hasattr(metric, "sample") else None
    K = gauss_curvature(gfield)
    N = vanishing_order(K) if config.n_override < 0 else config.n_override
    report.vanishing_order = int(N)
    artifacts["curvature"] = K
    if out:
        dump_field(out / "curvature.bin", K.values, chart_grid)
    note("curvature")

    # ---- topology -------------------------------------------------------
    kscale = float(np.max(np.abs(K.values)))
    if kscale < 1e-13:
        report.topology = "flat"
    else:
        try:
            decomp = decompose_regions(K, tol=config.zero_set_tol,
                                       min_angle=config.min_transversality)
            report.topology = "mixed"
            report.transversality = decomp.angle
            report.rotation = decomp.rotation
            artifacts["decomposition"] = decomp
            if out:
                (out / "regions.json").write_text(decomp.to_json())
        except UnsupportedTopologyError as exc:
            if float(np.min(K.values)) > 0:
                report.topology = "positive"
            else:
                report.failures.append(str(exc))
                if out:
                    (out / "report.txt").write_text(report.to_text())
                raise
    note("regions")

    # ---- seed ------------------------------------------------------------
    if report.topology == "mixed":
        rot = metric.transformed(rotation_matrix(-decomp.rotation), name="rotated")
    else:
        rot = metric
        decomp = None
    z0 = build_z0(taylor_metric(rot, config.m_star), config.m_star)
    slope, _, _ = residual_decay_order(
        rot, z0, 4 * chart_grid.h[0], config.metric.half_width / 2
    )
    report.seed_decay_slope = float(slope)
    artifacts["seed"] = z0
    if out:
        (out / "seed.txt").write_text(z0.to_table())
    note("seed")

    # ---- solve -----------------------------------------------------------
    sched = init_schedule(
        config.m_star, max(N, 0), config.m0, config.eps, delta=config.delta,
        s0=config.s0, lam=config.lam,
        gamma=None if config.gamma <= 0 else config.gamma,
        max_iter=config.max_iter, residual_target=config.residual_target,
        rho_fallback=config.rho_fallback, smoothing_base=config.smoothing_base,
    )
    report.schedule_flags = list(sched.flags)
    if report.topology == "flat":
        w_patch, patch_grid = _trivial_solution(config)
        rot_for_embed = rot
    elif report.topology == "positive":
        w_patch, patch_grid, newton_rows = _combined_elliptic(rot, z0, config, sched)
        report.sectors.append(newton_rows)
        rot_for_embed = rot
    else:
        w_patch, patch_grid = _solve_mixed(rot, z0, decomp, config, sched,
                                           report, artifacts, out)
        rot_for_embed = rot
    artifacts["w_patch"] = (patch_grid, w_patch)
    note("solve")

    # ---- develop + mesh ---------------------------------------------------
    gpatch = rot_for_embed.sample(patch_grid)
    X1, X2 = patch_grid.mesh()
    z_vals = z0.eval(X1, X2) + config.eps**5 * w_patch
    z_field = ScalarField(patch_grid, z_vals)
    check = flat_metric(gpatch, z_field)
    report.flatness = check.max_curvature()
    x, y, info = develop(check, flatness_tol=config.flatness_tol)
    report.loop_defect = info["loop_defect"]
    mesh = assemble_embedding(x, y, z_vals, gpatch)
    report.isometry_error = mesh.max_error()
    artifacts["mesh"] = mesh
    note("verify")
    if out:
        export_mesh(mesh, out / "embedding.obj")
        np.savetxt(out / "isometry_error.csv", mesh.metric_error, delimiter=",")
        (out / "report.txt").write_text(report.to_text())
        (out / "timings.txt").write_text(
            "".join(f"{k} {v:.3f}\n" for k, v in report.timings.items())
        )
    return report, artifacts


def _trivial_solution(config):
    r_patch = 0.5 * config.eps**2 * config.sigma
    patch_grid = Grid.centered((r_patch, r_patch), (129, 129))
    return np.zeros(patch_grid.shape), patch_grid


def _solve_mixed(rot, z0, decomp, config, sched, report, artifacts, out):
    branches = _branch_points(decomp)
    omega = decomp.rotation
    Q = rotation_matrix(omega)
    contexts = []
    for s in decomp.sectors:
        phi1 = s.phi1 + omega
        phi2 = s.phi2 + omega
        T = sector_normalize(phi1, phi2, s.kind)
        pts = None
        if s.kind == "hyperbolic":
            b1 = _nearest_branch(branches, s.phi1 % (2 * math.pi))
            b2 = _nearest_branch(branches, s.phi2 % (2 * math.pi))
            pts = [(Q @ b1.T).T, (Q @ b2.T).T]
        ctx = SectorContext(
            s.kind, s.index, rot, z0, sched, T,
            n_nodes=config.sector_resolution, sigma=config.sigma,
            curve_points_rot=pts, sector_angles=(phi1, phi2),
        )
        contexts.append(ctx)
    solutions = [None] * len(contexts)
    # elliptic sectors first
    for pass_kind in ("elliptic", "hyperbolic"):
        for i, ctx in enumerate(contexts):
            if ctx.kind != pass_kind:
                continue
            data = None
            if ctx.kind == "hyperbolic":
                data = _gather_boundary_data(contexts, solutions, i)
            w, log = run_region(ctx, boundary_data=data)
            solutions[i] = w
            entry = {
                "name": f"{ctx.kind}{ctx.index}",
                "converged": bool(log.converged),
                "phi0": log.rows[0]["phi0_sup"] if log.rows else 0.0,
                "phi_final": log.rows[-1]["phi_sup"] if log.rows else 0.0,
                "steps": len(log.rows),
            }
            if log.failure:
                entry["note"] = log.failure
            if getattr(ctx, "data_warning", None):
                entry["note"] = entry.get("note", "") + " " + ctx.data_warning
            report.sectors.append(entry)
            if out:
                log.write_csv(out / f"convergence_{ctx.kind}{ctx.index}.csv")
            artifacts[f"log_{ctx.kind}{ctx.index}"] = log
    r_patch = 0.5 * config.eps**2 * config.sigma
    patch_grid, w_patch, interface_report = patch_solutions(
        contexts, solutions, decomp, r_patch,
        n_nodes=config.sector_resolution,
    )
    report.interfaces = interface_report
    artifacts["contexts"] = contexts
    artifacts["solutions"] = solutions
    return w_patch, patch_grid


def _gather_boundary_data(contexts, solutions, i):
    """Value and slope rows for a hyperbolic sector from its elliptic
    neighbors, assembled per bottom half."""
    hyp = contexts[i]
    n = hyp.x_grid.shape[0]
    phi = np.zeros(n)
    psi = np.zeros(n)
    x1_axis = hyp.x_grid.axes()[0]
    for side in (-1, 1):
        sel = np.sign(x1_axis) == side if side < 0 else x1_axis >= 0
        best = None
        for j, other in enumerate(contexts):
            if other.kind != "elliptic" or solutions[j] is None:
                continue
            ph, ps = transfer_cauchy_data(other, hyp, solutions[j])
            score = np.sum(np.abs(ps[sel]) > 0)
            if best is None or score > best[0]:
                best = (score, ph, ps)
        if best is not None:
            phi[sel] = best[1][sel]
            psi[sel] = best[2][sel]
    return phi, psi


def _combined_elliptic(metric, z0, config, sched, n_newton=6):
    """Strictly elliptic chart: damped Newton on the full square.

    Covers decompositions with no curvature sign change (single combined
    elliptic region); the linearized operator is uniformly elliptic, so a
    direct sparse solve with zero boundary updates suffices.
    """
    eps = sched.eps
    n = config.sector_resolution
    half = 0.45 * config.metric.half_width / eps**2
    grid = Grid.centered((half, half), (n, n))
    frame = build_xframe(metric, z0, eps, grid)
    h1, h2 = grid.h
    w = np.zeros(grid.shape)
    phi = frame.phi(w)
    # the zero-boundary constraint pins the residual in an outer ring, so
    # convergence is judged on the interior that gets reported
    interior = np.zeros(grid.shape, dtype=bool)
    q1, q2 = grid.shape[0] // 4, grid.shape[1] // 4
    interior[q1:-q1, q2:-q2] = True
    hist = [sup_norm(phi, interior)]
    from .metric import linearization_coeffs

    for it in range(n_newton):
        (a11, a12, a22), (b1, b2) = linearization_coeffs(frame, w)
        mat, idx = _assemble_full_grid(grid, a11, a12, a22, b1, b2)
        rhs = (-phi / eps)[idx >= 0]
        du = np.zeros(grid.shape)
        du[idx >= 0] = spla.spsolve(mat.tocsc(), rhs)
        w = w + du
        phi = frame.phi(w)
        hist.append(sup_norm(phi, interior))
        if hist[-1] < 1e-14 or hist[-1] < 1e-10 * hist[0]:
            break
    entry = {
        "name": "elliptic-combined",
        "converged": bool(hist[-1] <= 0.1 * max(hist[0], 1e-300)),
        "phi0": hist[0],
        "phi_final": hist[-1],
        "steps": len(hist) - 1,
    }
    # report the interior on the chart-scale grid (y = eps^2 x); the zero
    # boundary constraint leaves the seed residual in an outer ring that is
    # not part of the solved neighborhood
    n1, n2 = grid.shape
    c1, c2 = n1 // 4, n2 // 4
    x1, x2 = grid.axes()
    wc = w[c1 : n1 - c1, c2 : n2 - c2]
    ygrid = Grid(
        (eps**2 * x1[c1], eps**2 * x1[n1 - c1 - 1],
         eps**2 * x2[c2], eps**2 * x2[n2 - c2 - 1]),
        wc.shape,
    )
    return wc, ygrid, entry


def _assemble_full_grid(grid, a11, a12, a22, b1, b2):
    """Nine-point sparse operator with zero Dirichlet boundary."""
    n1, n2 = grid.shape
    h1, h2 = grid.h
    idx = -np.ones(grid.shape, dtype=int)
    idx[1:-1, 1:-1] = np.arange((n1 - 2) * (n2 - 2)).reshape(n1 - 2, n2 - 2)
    I, J = np.meshgrid(np.arange(1, n1 - 1), np.arange(1, n2 - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    rows, cols, vals = [], [], []

    def add(ci, cj, value):
        c = idx[ci, cj]
        keep = c >= 0
        rows.append(idx[I, J][keep])
        cols.append(c[keep])
        vals.append(np.broadcast_to(value, I.shape)[keep])

    A11 = a11[I, J] / h1**2
    A22 = a22[I, J] / h2**2
    A12 = a12[I, J] / (2 * h1 * h2)
    B1 = b1[I, J] / (2 * h1)
    B2 = b2[I, J] / (2 * h2)
    add(I + 1, J, A11 + B1)
    add(I - 1, J, A11 - B1)
    add(I, J + 1, A22 + B2)
    add(I, J - 1, A22 - B2)
    add(I, J, -2 * A11 - 2 * A22)
    add(I + 1, J + 1, A12)
    add(I - 1, J - 1, A12)
    add(I + 1, J - 1, -A12)
    add(I - 1, J + 1, -A12)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(int(idx.max()) + 1,) * 2,
    ).tocsr()
    return mat, idx
