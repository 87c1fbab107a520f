"""Dyadic cascade of auxiliary Dirichlet problems and its decay measurements.

Level k solves det(H(phi_k)) = rhs on the ball of radius d*t_k around the
probe center, with boundary data the mollification of the source at scale
d*t_k^mu.  Successive differences v_k = phi_{k-1} - phi_k are measured in
sup and gradient-Holder norms on shrunken balls and their decay rates
fitted against t_k.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import (CmaLabError, DomainError, GeometryError, ResolutionError)
from .exponents import ExponentParams
from .field import (BallDomain, GridField, INTERIOR, interp_cubic)
from .mollify import Kernel, make_kernel, mollify_at
from .norms import SeminormSpec, fit_decay_rate, holder_seminorm
from .solver import (DirichletProblem, NewtonOpts, RhsModel, SolveReport,
                     C_CMP, KERNEL_CELLS, solve_dirichlet)

#: ball radius must span at least this many cells at the deepest level
MIN_CELLS_PER_RADIUS = 16

#: refuse levels whose mollifier resolution would need more cells than this
MAX_CELLS_PER_RADIUS = 4096


@dataclass(frozen=True)
class CascadeConfig:
    """Geometry, exponents and right-hand-side mode of one cascade run."""

    center: tuple
    d: float
    t: float
    depth: int
    params: ExponentParams
    rhs_mode: str = "CONST"
    cells_per_radius: int = MIN_CELLS_PER_RADIUS
    rhs_eps: Optional[float] = None        # FULL_MOLLIFIED scale (times d)
    newton: NewtonOpts = NewtonOpts()
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.t <= 0.5:
            raise DomainError(f"t must lie in (0, 1/2], got {self.t}")
        if self.d <= 0.0:
            raise DomainError(f"d must be positive, got {self.d}")
        if self.depth < 0:
            raise DomainError("depth must be >= 0")
        if self.cells_per_radius < MIN_CELLS_PER_RADIUS:
            raise DomainError(
                f"cells_per_radius must be >= {MIN_CELLS_PER_RADIUS}")

    @property
    def n(self) -> int:
        return len(self.center) // 2

    def t_level(self, k: int) -> float:
        return self.t * 2.0 ** (-k)

    def level_geometry(self, k: int):
        """(ball radius, mollification radius, cells per radius) at level k."""
        tk = self.t_level(k)
        if self.rhs_mode in ("FULL", "FULL_MOLLIFIED"):
            radius = self.d            # fixed ball, t only in the mollifier
            eps = self.d * tk
            q_moll = 4.0 / tk
        else:
            radius = self.d * tk
            eps = self.d * tk ** self.params.mu
            q_moll = 4.0 * tk ** (1.0 - self.params.mu)
        q = max(self.cells_per_radius, int(math.ceil(q_moll)))
        if q > MAX_CELLS_PER_RADIUS:
            raise ResolutionError(
                f"level {k} needs {q} cells per radius "
                f"(mollifier radius {eps:.3g} vs ball {radius:.3g})")
        return radius, eps, q


@dataclass
class LevelRecord:
    k: int
    t_k: float
    radius: float
    h: float
    eps: float
    iterations: int
    residual: float
    min_eig: float
    sup_diff_u: float
    grad_center: tuple
    lip_grad_half: float     # [phi]_{1,1} over the half-radius ball


@dataclass
class VRecord:
    k: int
    t_k: float
    sup: float               # |v_k|_0 over the half-radius ball
    grad_sup: float          # [v_k]_1 over the quarter-radius ball
    holder: float            # [v_k]_{1,delta} over the quarter-radius ball


@dataclass
class CascadeReport:
    config: CascadeConfig
    levels: list = dc_field(default_factory=list)
    v_records: list = dc_field(default_factory=list)
    fits: dict = dc_field(default_factory=dict)
    errors: list = dc_field(default_factory=list)
    fields: list = dc_field(default_factory=list)   # solution GridFields per level


def _level_kernel(eps: float, dim: int) -> Kernel:
    # the boundary-data kernel lives on its own eps-proportional lattice, so
    # all levels share one normalized weight table (no lattice drift in m2)
    return make_kernel(dim, eps, eps / KERNEL_CELLS)


def build_auxiliary(u_source: Callable, f_source: Callable,
                    config: CascadeConfig, k: int,
                    return_report: bool = False):
    """Solve one auxiliary Dirichlet problem of the cascade.

    Boundary data is the discrete mollification of ``u_source`` at the
    level's scale; the right-hand side follows the configured mode anchored
    at the cascade center.
    """
    radius, eps, q = config.level_geometry(k)
    h = radius / q
    dom = BallDomain(config.n, tuple(config.center), radius)
    kern = _level_kernel(eps, 2 * config.n)
    rhs = RhsModel(mode=config.rhs_mode, f=f_source, x0=tuple(config.center),
                   eps=(None if config.rhs_mode != "FULL_MOLLIFIED"
                        else config.d * config.rhs_eps))
    problem = DirichletProblem(
        domain=dom, rhs=rhs,
        boundary=lambda p: mollify_at(u_source, p, kern),
        h=h)
    try:
        report = solve_dirichlet(problem, config.newton)
    except CmaLabError as exc:
        raise type(exc)(f"level {k}: {exc}") from exc
    if return_report:
        return report.solution, report, eps
    return report.solution


def _center_gradient(fld: GridField, center) -> np.ndarray:
    grid = fld.grid
    idx = np.rint((np.asarray(center) - np.asarray(grid.lo)) / grid.h).astype(int)
    if not np.allclose(np.asarray(grid.lo) + idx * grid.h, center, atol=1e-12):
        raise GeometryError("cascade center is not a grid point")
    g = np.empty(grid.dim)
    for a in range(grid.dim):
        up = idx.copy(); up[a] += 1
        dn = idx.copy(); dn[a] -= 1
        g[a] = (fld.values[tuple(up)] - fld.values[tuple(dn)]) / (2 * grid.h)
    return g


def _sub_ball(config: CascadeConfig, radius: float) -> BallDomain:
    return BallDomain(config.n, tuple(config.center), radius)


def _sup_on(fld: GridField, ball: BallDomain, other: np.ndarray) -> float:
    pts = fld.grid.points()
    inside = (ball.distance_to_boundary(pts) > 0).reshape(fld.grid.shape)
    inside &= fld.mask == INTERIOR
    return float(np.abs(fld.values[inside] - other.reshape(fld.grid.shape)[inside]).max())


def run_cascade(u_source: Callable, f_source: Callable,
                config: CascadeConfig) -> CascadeReport:
    """Build levels 0..depth, form the telescoping increments, fit decays.

    Per-level failures are recorded and the report covers the completed
    prefix; nothing is silently extrapolated.
    """
    report = CascadeReport(config=config)

    def one_level(k):
        fld, solve_rep, eps = build_auxiliary(u_source, f_source, config, k,
                                              return_report=True)
        return k, fld, solve_rep, eps

    results = {}
    try:
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                for k, fld, rep, eps in pool.map(one_level,
                                                 range(config.depth + 1)):
                    results[k] = (fld, rep, eps)
        else:
            for k in range(config.depth + 1):
                results[k] = one_level(k)[1:]
    except CmaLabError as exc:
        report.errors.append(str(exc))

    for k in sorted(results):
        fld, solve_rep, eps = results[k]
        if k - 1 in results or k == 0:
            pass
        else:   # a gap means an earlier level failed; keep the prefix only
            break
        tk = config.t_level(k)
        radius = fld.domain.radius
        pts = fld.grid.points()
        u_vals = np.asarray(u_source(pts))
        half = _sub_ball(config, radius / 2.0)
        sup_diff = _sup_on(fld, half, u_vals)
        lip = holder_seminorm(fld, SeminormSpec(k=1, alpha=1.0, domain=half))
        report.levels.append(LevelRecord(
            k=k, t_k=tk, radius=radius, h=fld.grid.h, eps=eps,
            iterations=solve_rep.iterations, residual=solve_rep.residual,
            min_eig=solve_rep.min_eig, sup_diff_u=sup_diff,
            grad_center=tuple(_center_gradient(fld, config.center)),
            lip_grad_half=lip))
        report.fields.append(fld)

    # telescoping increments on the finer grid of each consecutive pair
    for rec in report.levels[1:]:
        k = rec.k
        fine = report.fields[k]
        coarse = report.fields[k - 1]
        if fine.grid == coarse.grid:
            v_vals = coarse.values - fine.values
        else:
            pts = fine.grid.points()
            v_vals = (interp_cubic(coarse, pts).reshape(fine.grid.shape)
                      - fine.values)
        v_fld = GridField(fine.grid, v_vals, fine.mask, fine.domain)
        half = _sub_ball(config, rec.radius / 2.0)
        quarter = _sub_ball(config, rec.radius / 4.0)
        sup = _sup_on(v_fld, half, np.zeros(fine.grid.size))
        grad_sup = holder_seminorm(v_fld, SeminormSpec(k=1, alpha=0.0,
                                                       domain=quarter))
        holder = holder_seminorm(v_fld, SeminormSpec(k=1, alpha=config.params.delta,
                                                     domain=quarter))
        report.v_records.append(VRecord(k=k, t_k=rec.t_k, sup=sup,
                                        grad_sup=grad_sup, holder=holder))

    report.fits = _fit_columns(report)
    return report


def _fit_columns(report: CascadeReport) -> dict:
    fits = {}

    def try_fit(name, samples):
        samples = [(t, v) for t, v in samples if v > 0.0]
        if len(samples) >= 4:
            try:
                fits[name] = fit_decay_rate(samples)
                return
            except CmaLabError:
                pass
        fits[name] = None

    try_fit("sup_diff_u", [(r.t_k, r.sup_diff_u) for r in report.levels])
    try_fit("lip_grad_half", [(r.t_k, r.lip_grad_half) for r in report.levels])
    try_fit("v_sup", [(r.t_k, r.sup) for r in report.v_records])
    try_fit("v_grad", [(r.t_k, r.grad_sup) for r in report.v_records])
    try_fit("v_holder", [(r.t_k, r.holder) for r in report.v_records])
    return fits


# ---------------------------------------------------------------------------

def fd_gradient(fn: Callable, x0, step: float) -> np.ndarray:
    """Central-difference gradient of a pointwise evaluator."""
    x0 = np.asarray(x0, dtype=float)
    g = np.empty(x0.size)
    for a in range(x0.size):
        e = np.zeros(x0.size)
        e[a] = step
        g[a] = (float(fn((x0 + e)[None])[0])
                - float(fn((x0 - e)[None])[0])) / (2 * step)
    return g


def gradient_telescope(report: CascadeReport, u_source: Callable,
                       config: CascadeConfig) -> dict:
    """Center-gradient convergence and the exact telescoping identity.

    Per-level gradients are central differences on each level's own grid, so
    the partial sums of grad(v_k) telescope to grad(phi_0) - grad(phi_K)
    exactly (round-off only).
    """
    if not report.levels:
        raise DomainError("cascade report has no completed levels")
    step = report.levels[-1].h
    gu = fd_gradient(u_source, config.center, step)
    grads = [np.asarray(r.grad_center) for r in report.levels]
    errors = [float(np.sqrt(((g - gu) ** 2).sum())) for g in grads]
    samples = [(r.t_k, e) for r, e in zip(report.levels, errors) if e > 0.0]
    fit = fit_decay_rate(samples) if len(samples) >= 4 else None
    partial = np.zeros(2 * config.n)
    max_resid = 0.0
    for k in range(1, len(grads)):
        partial = partial + (grads[k - 1] - grads[k])
        resid = np.abs(partial - (grads[0] - grads[k])).max()
        max_resid = max(max_resid, float(resid))
    return {"gradient_errors": errors, "fit": fit,
            "telescope_residual": max_resid, "grad_u": tuple(gu)}


def rescaled_profiles(u_source: Callable, phi: GridField,
                      config: CascadeConfig, t: float) -> dict:
    """Blow-up profiles of the auxiliary and the source around the center.

    W(x) = (phi(x0 + t x) - phi(x0)) / t and V likewise for the source, both
    on the quarter ball; returns the sups of |W - <grad phi(x0), x>|,
    |V - <grad u(x0), x>| and |W - V|.
    """
    center = np.asarray(config.center)
    grid = phi.grid
    pts = grid.points()
    rel = pts - center
    inside = ((rel ** 2).sum(axis=1) < (config.d * t / 4.0) ** 2)
    inside &= (phi.mask == INTERIOR).ravel()
    p_in = pts[inside]
    x = (p_in - center) / t
    idx0 = np.rint((center - np.asarray(grid.lo)) / grid.h).astype(int)
    phi0 = float(phi.values[tuple(idx0)])
    W = (phi.values.ravel()[inside.nonzero()[0]] - phi0) / t
    u0 = float(u_source(center[None])[0])
    V = (np.asarray(u_source(p_in)) - u0) / t
    gphi = _center_gradient(phi, config.center)
    gu = fd_gradient(u_source, config.center, grid.h)
    lin_phi = x @ gphi
    lin_u = x @ gu
    return {
        "sup_W_lin": float(np.abs(W - lin_phi).max()),
        "sup_V_lin": float(np.abs(V - lin_u).max()),
        "sup_W_V": float(np.abs(W - V).max()),
        "n_points": int(inside.sum()),
    }


def cross_center_compare(u_source: Callable, f_source: Callable,
                         x0, y0, config: CascadeConfig) -> dict:
    """Gradient agreement of auxiliaries centered at two nearby probes.

    For each level t_k both problems are solved and sup |grad phi_{t,x0} -
    grad phi_{t,y0}| is taken over the ball of radius d t_k / 8 around the
    midpoint; the list is returned with its decay fit against d t_k.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    sep = float(np.sqrt(((x0 - y0) ** 2).sum()))
    rows = []
    for k in range(config.depth + 1):
        tk = config.t_level(k)
        dt = config.d * tk
        if sep > dt / 8.0 + 1e-15:
            raise GeometryError(
                f"centers are {sep:.3g} apart, need <= d t / 8 = {dt / 8:.3g}")
        z = 0.5 * (x0 + y0)
        if sep / 2.0 + dt / 4.0 > dt / 2.0 + 1e-15:
            raise GeometryError("midpoint ball is not contained in both halves")
        cfg_x = _recenter(config, x0)
        cfg_y = _recenter(config, y0)
        fx = build_auxiliary(u_source, f_source, cfg_x, k)
        fy = build_auxiliary(u_source, f_source, cfg_y, k)
        pts = fx.grid.points()
        inside = ((pts - z) ** 2).sum(axis=1) < (dt / 8.0) ** 2
        inside &= (fx.mask == INTERIOR).ravel()
        p_in = pts[inside]
        gdiff = np.zeros((p_in.shape[0], fx.grid.dim))
        h = fx.grid.h
        for a in range(fx.grid.dim):
            e = np.zeros(fx.grid.dim)
            e[a] = h
            gx = (interp_cubic(fx, p_in + e) - interp_cubic(fx, p_in - e)) / (2 * h)
            gy = (interp_cubic(fy, p_in + e) - interp_cubic(fy, p_in - e)) / (2 * h)
            gdiff[:, a] = gx - gy
        sup = float(np.sqrt((gdiff ** 2).sum(axis=1)).max()) if p_in.size else 0.0
        rows.append({"k": k, "t_k": tk, "dt": dt, "sup_grad_diff": sup})
    samples = [(r["dt"], r["sup_grad_diff"]) for r in rows
               if r["sup_grad_diff"] > 0.0]
    fit = fit_decay_rate(samples) if len(samples) >= 4 else None
    return {"rows": rows, "fit": fit}


def _recenter(config: CascadeConfig, center) -> CascadeConfig:
    return CascadeConfig(center=tuple(float(c) for c in center), d=config.d,
                         t=config.t, depth=config.depth, params=config.params,
                         rhs_mode=config.rhs_mode,
                         cells_per_radius=config.cells_per_radius,
                         rhs_eps=config.rhs_eps, newton=config.newton,
                         threads=config.threads)


def verify_sandwich(u_source: Callable, f_source: Callable,
                    config: CascadeConfig, phi: GridField, k: int) -> dict:
    """Smallest constant making both barrier inequalities hold discretely.

    Lower barrier: mollified source plus C t^alpha (|z - x0|^2 - (dt)^2);
    upper barrier: source plus C t^{mu(1+beta)} minus the same quadratic.
    Bisection against the comparison tolerance C_CMP h^2 scale.
    """
    radius, eps, _ = config.level_geometry(k)
    tk = config.t_level(k)
    kern = _level_kernel(eps, 2 * config.n)
    interior = (phi.mask == INTERIOR).ravel()
    pts = phi.grid.points()[interior]
    moll_u = mollify_at(u_source, pts, kern)
    u_vals = np.asarray(u_source(pts))
    phi_vals = phi.values.ravel()[interior]
    qshape = ((pts - np.asarray(config.center)) ** 2).sum(axis=1) - radius ** 2
    t_alpha = tk ** config.params.alpha
    shift_up = tk ** (config.params.mu * (1.0 + config.params.beta))
    scale = max(1.0, float(np.abs(phi_vals).max()), float(np.abs(u_vals).max()))
    tol = C_CMP * phi.grid.h ** 2 * scale

    def violation(c):
        low = moll_u + c * t_alpha * qshape - phi_vals
        up = phi_vals - (u_vals + c * shift_up - c * t_alpha * qshape)
        return max(float(low.max()), float(up.max()))

    c_hi = 1.0
    for _ in range(60):
        if violation(c_hi) <= tol:
            break
        c_hi *= 2.0
    else:
        return {"k": k, "C_hat": math.inf, "tol": tol,
                "violation": violation(c_hi), "passed": False}
    c_lo = 0.0
    for _ in range(60):
        mid = 0.5 * (c_lo + c_hi)
        if violation(mid) <= tol:
            c_hi = mid
        else:
            c_lo = mid
    return {"k": k, "C_hat": c_hi, "tol": tol,
            "violation": violation(c_hi), "passed": True}
