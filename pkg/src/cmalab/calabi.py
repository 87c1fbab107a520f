"""Third-order quantities for Monge-Ampere solutions: the Calabi-type
scalar S, its maximum-principle ledger, and the mixed-derivative bound.

S is the metric-contracted square norm of the pure holomorphic third
derivatives; everything here is pointwise tensor algebra over discrete
Wirtinger derivatives, so it runs on small box grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_erosion

from .errors import DegenerateDataError, DomainError
from .field import (BallDomain, COLLAR, GridField, INTERIOR,
                    antiholo_derivative, complex_hessian, hermitian_maxeig,
                    hermitian_mineig, holo_derivative, third_derivatives,
                    _d1, _d2, _require_valid)


@dataclass(frozen=True)
class HessianBounds:
    """Measured hypothesis constants for the third-order estimates."""

    lam: float     # smallest complex-Hessian eigenvalue over the ball
    Lam: float     # largest
    M: float       # scaled second-derivative bound of log f
    N: float       # scaled third-derivative bound of log f
    r: float       # ball radius
    K: float = 1.0     # Laplacian bound (mixed-derivative variant)
    m: float = 1.0     # lower bound of f
    L: float = 0.0     # weighted log f derivative bound

    def __post_init__(self):
        if not 0.0 < self.lam <= self.Lam:
            raise DomainError("need 0 < lam <= Lam")
        if self.M < 0 or self.N < 0 or self.L < 0:
            raise DomainError("M, N, L must be nonnegative")
        if self.m <= 0:
            raise DomainError("m must be positive")


def _inverse_on(H: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Pointwise inverse of the Hessian at valid points; PD is enforced."""
    Hv = H[valid]
    if hermitian_mineig(Hv).min() <= 0.0:
        raise DegenerateDataError("complex Hessian lost positive-definiteness")
    return np.linalg.inv(Hv)


def compute_S(field: GridField) -> GridField:
    """Calabi's scalar S = |u_{ijk}|^2 contracted with three inverse metrics.

    Real and nonnegative for positive-definite Hessians; vanishes exactly on
    quadratics and on pluriharmonic perturbations with constant third
    derivatives only through their genuinely holomorphic part.
    """
    T, valid_t = third_derivatives(field)
    ch = complex_hessian(field)
    valid = valid_t & ch.valid
    A = _inverse_on(ch.values, valid)
    Tv = T[valid]
    S = np.einsum("xijk,xpqr,xpi,xqj,xrk->x",
                  Tv, np.conj(Tv), A, A, A, optimize=True).real
    out = np.zeros(field.grid.shape)
    out[valid] = S
    mask = np.where(valid, INTERIOR, 0).astype(np.uint8)
    return GridField(field.grid, out, mask, field.domain)


def mixed_third(field: GridField):
    """u_{i jbar l} = d/dz_l of the complex Hessian entries.

    Shape grid.shape + (n, n, n) with slots (holo i, anti j, holo l);
    symmetric in (i, l) to round-off.
    """
    ch = complex_hessian(field)
    n, h = field.n, field.h
    MX = np.zeros(field.grid.shape + (n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for l in range(n):
                MX[..., i, j, l] = holo_derivative(ch.values[..., i, j], l, h)
    valid = _shrink(ch.valid, 1)
    return MX, valid


def _shrink(valid: np.ndarray, cells: int) -> np.ndarray:
    struct = np.ones((3,) * valid.ndim, dtype=bool)
    return binary_erosion(valid, structure=struct, iterations=cells,
                          border_value=0)


def _complex_laplacian(field: GridField):
    ch = complex_hessian(field)
    lap = np.einsum("...ii->...", ch.values).real
    return lap, ch.valid


def _log_field(field: GridField) -> GridField:
    if field.values[field.mask >= COLLAR].min() <= 0.0:
        raise DegenerateDataError("f is not bounded below by a positive constant")
    vals = np.zeros(field.grid.shape)
    keep = field.mask >= COLLAR
    vals[keep] = np.log(field.values[keep])
    return GridField(field.grid, vals, field.mask, field.domain)


def _derived_field(src: GridField, values: np.ndarray, valid: np.ndarray) -> GridField:
    """Wrap derived values so another derivative pass sees a proper collar."""
    interior = _shrink(valid, 1)
    mask = np.zeros(src.grid.shape, dtype=np.uint8)
    mask[valid] = COLLAR
    mask[interior] = INTERIOR
    vals = np.where(valid, values, 0.0)
    return GridField(src.grid, vals, mask, src.domain)


def theorem61_ledger(u: GridField, f: GridField, domain: BallDomain,
                     C_n: float, C1: float = 1.0) -> dict:
    """Measured two-sided ledger for the interior third-order bound.

    LHS is the max of sum |u_{i jbar k}|^2 over the half ball; RHS evaluates
    C_n lam^-1 Lam^3 ((1+M)^-2 N^2 + lam^-1 Lam (1+M)) r^-2 with every
    hypothesis constant measured on the sampled data.  The cutoff diagnostic
    G = eta S + A lam^-1 (complex Laplacian) is reported with its maximizer;
    the constants C_n, C1 are fitted inputs, never asserted.
    """
    if f.values[f.mask >= COLLAR].min() <= 0.0:
        return {"hypothesis_ok": False,
                "reason": "f is not bounded below by a positive constant"}
    r = domain.radius
    center = np.asarray(domain.center)
    pts = u.grid.points().reshape(u.grid.shape + (2 * u.n,))
    rad2 = ((pts - center) ** 2).sum(axis=-1)
    in_ball = rad2 < r ** 2
    in_half = rad2 < (r / 2.0) ** 2

    ch = complex_hessian(u)
    ball_valid = ch.valid & in_ball
    lam = float(hermitian_mineig(ch.values[ball_valid]).min())
    Lam = float(hermitian_maxeig(ch.values[ball_valid]).max())
    if lam <= 0.0:
        return {"hypothesis_ok": False, "reason": "Hessian not PD on the ball"}

    phi = _log_field(f)
    ch_phi = complex_hessian(phi)
    pv = ch_phi.valid & in_ball
    M = float(r ** 2 * np.maximum(np.abs(hermitian_mineig(ch_phi.values[pv])),
                                  np.abs(hermitian_maxeig(ch_phi.values[pv]))).max())
    MXp, mv = mixed_third(phi)
    mv = mv & in_ball
    N = float(r ** 3 * np.sqrt((np.abs(MXp[mv]) ** 2).sum(axis=(1, 2, 3))).max())

    MXu, uv = mixed_third(u)
    hv = uv & in_half
    lhs = float((np.abs(MXu[hv]) ** 2).sum(axis=(1, 2, 3)).max())
    rhs = float(C_n / lam * Lam ** 3
                * ((1.0 + M) ** -2 * N ** 2 + Lam * (1.0 + M) / lam) / r ** 2)

    S = compute_S(u)
    lap, lap_valid = _complex_laplacian(u)
    r0 = 0.75 * r
    xi = np.maximum(r0 ** 2 - rad2, 0.0) ** 2
    eta = xi ** 2
    A = 2.0 * C1 * (1.0 + M) / lam * r0 ** 2
    g_valid = (S.mask == INTERIOR) & lap_valid & (rad2 < r0 ** 2)
    G = np.where(g_valid, eta * S.values + A / lam * lap, -np.inf)
    gmax_flat = int(np.argmax(G))
    return {
        "hypothesis_ok": True,
        "lam": lam, "Lam": Lam, "M": M, "N": N, "r": r,
        "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else float("inf"),
        "C_n": C_n,
        "G_max": float(G.ravel()[gmax_flat]),
        "G_argmax": tuple(float(c) for c in
                          u.grid.index_points([gmax_flat])[0]),
        "n_half": int(hv.sum()),
    }


def prop24_bound(bounds: HessianBounds, n: int, C_n: float) -> float:
    """C_n K^{n+1} m^-1 (1 + sqrt(L)), the mixed-derivative bound scale."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return float(C_n * bounds.K ** (n + 1) / bounds.m * (1.0 + np.sqrt(bounds.L)))


def hessian_weighted_grad_sup(field: GridField) -> float:
    """Interior-weighted sup of the Hessian-entry gradients.

    sup_x d_x |grad u_{i jbar}(x)| with the Frobenius norm over all entries
    and gradient components; the distance weight makes it dimension-free
    under rescaling.
    """
    ch = complex_hessian(field)
    valid = _shrink(ch.valid, 1)
    h = field.h
    acc = np.zeros(field.grid.shape)
    n = field.n
    for i in range(n):
        for j in range(n):
            comp = ch.values[..., i, j]
            for a in range(field.grid.dim):
                acc += _d1(comp.real, a, h) ** 2 + _d1(comp.imag, a, h) ** 2
    if field.domain is None:
        raise DomainError("weighted seminorm needs a ball domain")
    pts = field.grid.points()
    d_x = np.maximum(field.domain.distance_to_boundary(pts), 0.0)
    d_x = d_x.reshape(field.grid.shape)
    return float((d_x[valid] * np.sqrt(acc[valid])).max())


# ---------------------------------------------------------------------------
# structural identities used by the maximum-principle argument

def _pure_second(field: GridField):
    """Pure holomorphic second derivatives u_{ij} (not the complex Hessian)."""
    valid = _require_valid(field, 1)
    n, h, u = field.n, field.h, field.values
    T2 = np.zeros(field.grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            val = 0.25 * (_d2(u, xi, xj, h) - _d2(u, yi, yj, h)
                          - 1j * (_d2(u, xi, yj, h) + _d2(u, yi, xj, h)))
            T2[..., i, j] = val
            T2[..., j, i] = val
    return T2, valid


def identity_second_order_residual(u: GridField, f: GridField) -> dict:
    """Residual of the Laplacian commutation identity.

    Checks Delta_g(Delta u) = Q + Delta(log f) where Q is the metric
    contraction of the mixed third derivatives; the three pieces are
    discretized independently, so the sup residual decays at the stencil
    order O(h^2) on smooth data.
    """
    ch = complex_hessian(u)
    lap, lap_valid = _complex_laplacian(u)
    lap_f = _derived_field(u, lap, lap_valid)
    ch_lap = complex_hessian(lap_f)
    MX, mx_valid = mixed_third(u)
    phi = _log_field(f)
    lap_phi, phi_valid = _complex_laplacian(phi)

    valid = ch.valid & ch_lap.valid & mx_valid & phi_valid
    if not valid.any():
        raise DomainError("no points support the full identity stencil")
    A = _inverse_on(ch.values, valid)
    raise_ = np.conj(A)
    lhs = np.einsum("xij,xij->x", raise_, ch_lap.values[valid]).real
    MXv = MX[valid]
    Q = np.einsum("xis,xkj,xskl,xijl->x",
                  raise_, raise_, np.conj(MXv), MXv, optimize=True).real
    resid = np.abs(lhs - Q - lap_phi[valid])
    return {"sup_residual": float(resid.max()),
            "n_points": int(valid.sum()),
            "sup_lhs": float(np.abs(lhs).max())}


def gradient_inequality_report(u: GridField) -> dict:
    """Pointwise check of |dS|_g^2 = 2 S_i S^i <= 4 S T.

    T is assembled from the two covariant-derivative quadratic forms of the
    third-derivative tensor (each nonnegative); the inequality is
    Cauchy-Schwarz and holds up to discretization error.
    """
    ch = complex_hessian(u)
    T3, v3 = third_derivatives(u)
    MX, vmx = mixed_third(u)
    T2, _ = _pure_second(u)
    n, h = u.n, u.h

    # T31[l,m,i,q] = d/dzbar_q of u_{lmi}
    T31 = np.zeros(u.grid.shape + (n, n, n, n), dtype=complex)
    for l in range(n):
        for m in range(n):
            for i in range(n):
                for q in range(n):
                    T31[..., l, m, i, q] = antiholo_derivative(
                        T3[..., l, m, i], q, h)
    # T22[k,i,q,r] = d/dzbar_q d/dzbar_r of u_{ki}
    T22 = np.zeros(u.grid.shape + (n, n, n, n), dtype=complex)
    for k in range(n):
        for i in range(k, n):
            for q in range(n):
                for r in range(q, n):
                    val = antiholo_derivative(
                        antiholo_derivative(T2[..., k, i], q, h), r, h)
                    for (a, b) in {(k, i), (i, k)}:
                        for (c, d) in {(q, r), (r, q)}:
                            T22[..., a, b, c, d] = val

    # deepest composed stencil reaches 3 cells; the S gradient additionally
    # needs S itself to be defined one cell around each sample point
    from .field import stencil_valid
    S_field = compute_S(u)
    valid = stencil_valid(u, 3) & _shrink(S_field.mask == INTERIOR, 1)
    A = _inverse_on(ch.values, valid)
    raise_ = np.conj(A)
    T3v, MXv, T31v, T22v = T3[valid], MX[valid], T31[valid], T22[valid]

    S = np.einsum("xijk,xpqr,xpi,xqj,xrk->x",
                  T3v, np.conj(T3v), A, A, A, optimize=True).real

    # S_i = d/dz_i of the S field sampled on the grid
    S_grad = np.zeros(u.grid.shape + (n,), dtype=complex)
    for i in range(n):
        S_grad[..., i] = holo_derivative(S_field.values, i, h)
    Si = S_grad[valid]
    lhs = 2.0 * np.einsum("xij,xi,xj->x", raise_, Si, np.conj(Si)).real

    # group 2: covariant holomorphic derivative of the third-derivative tensor
    corr2 = np.einsum("xps,xpqi,xlsm->xlmiq", raise_, MXv, MXv, optimize=True)
    G2 = T31v - corr2
    group2 = np.einsum("xlmiq,xLMIQ,xlL,xmM,xiI,xqQ->x",
                       G2, np.conj(G2), raise_, raise_, raise_, A,
                       optimize=True).real

    # group 1: covariant derivative of the conjugate-type tensor
    corr1a = np.einsum("xpqi,xps,xskr->xkiqr", MXv, raise_, np.conj(MXv),
                       optimize=True)
    corr1b = np.einsum("xpri,xps,xqks->xkiqr", MXv, raise_, np.conj(MXv),
                       optimize=True)
    G1 = T22v - corr1a - corr1b
    group1 = np.einsum("xkiqr,xKIQR,xkK,xiI,xqQ,xrR->x",
                       G1, np.conj(G1), raise_, raise_, A, A,
                       optimize=True).real

    T = group1 + group2
    return {"lhs": lhs, "rhs": 4.0 * S * T, "S": S, "T": T,
            "group1": group1, "group2": group2,
            "valid": valid, "h": h}
