"""Discrete Holder seminorm estimators and log-log decay-rate fitting.

The pair scan is a documented lower bound for the continuum sup: it takes
all point pairs at dyadic separations along axis and diagonal directions,
plus a seeded batch of random pairs drawn once on the full lattice and then
filtered to the admissible set (so a sub-domain scans a subset of the pairs
its parent scans).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, DomainError, ResolutionError
from .field import (BallDomain, GridField, INTERIOR, complex_hessian, gradient,
                    real_hessian, _shift)

DEFAULT_RANDOM_PAIRS = 100_000


@dataclass(frozen=True)
class SeminormSpec:
    """Which discrete seminorm to measure.

    k is the derivative order (0, 1 or 2), alpha the Holder exponent,
    ``weighted`` selects the interior (distance-weighted) variant, and
    ``domain`` restricts the scan to a sub-ball (default: the field's own
    domain).  For k = 2, ``deriv`` picks the real-Hessian or
    complex-Hessian entries; both are reported by the CLI.
    """

    k: int
    alpha: float
    weighted: bool = False
    domain: Optional[BallDomain] = None
    deriv: str = "real"

    def __post_init__(self):
        if self.k not in (0, 1, 2):
            raise DomainError(f"k must be 0, 1 or 2, got {self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0,1], got {self.alpha}")
        if self.k + self.alpha <= 0:
            raise DomainError("k + alpha must be positive for a Holder quotient")
        if self.deriv not in ("real", "complex"):
            raise DomainError("deriv must be 'real' or 'complex'")


@dataclass(frozen=True)
class DecayFit:
    """Least-squares slope of log(value) against log(scale)."""

    pairs: tuple
    slope: float
    residual: float
    n_used: int


# ---------------------------------------------------------------------------

def _derivative_stack(field: GridField, k: int, deriv: str):
    """Per-point derivative components (grid.shape + (m,)) and validity."""
    if k == 0:
        return field.values[..., None], field.mask == INTERIOR
    if k == 1:
        return gradient(field)
    if deriv == "complex":
        ch = complex_hessian(field)
        comps = ch.values.reshape(field.grid.shape + (-1,))
        stack = np.concatenate([comps.real, comps.imag], axis=-1)
        return stack, ch.valid
    H, valid = real_hessian(field)
    return H.reshape(field.grid.shape + (-1,)), valid


def _boundary_distance(field: GridField, domain: Optional[BallDomain]):
    """d_x to the boundary of the measuring domain, over the whole grid."""
    pts = field.grid.points()
    if domain is not None:
        d = domain.distance_to_boundary(pts)
    elif field.domain is not None:
        d = field.domain.distance_to_boundary(pts)
    else:
        lo = np.asarray(field.grid.lo)
        hi = np.asarray(field.grid.hi)
        d = np.minimum(pts - lo, hi - pts).min(axis=-1)
    return np.maximum(d, 0.0).reshape(field.grid.shape)


def _admissible(field: GridField, valid: np.ndarray,
                domain: Optional[BallDomain]) -> np.ndarray:
    adm = valid.copy()
    if domain is not None:
        pts = field.grid.points()
        inside = domain.distance_to_boundary(pts) > 0
        adm &= inside.reshape(field.grid.shape)
    if not adm.any():
        raise ResolutionError("no admissible points in the requested domain")
    return adm


def _crop(adm: np.ndarray, arrays):
    """Restrict everything to the bounding box of the admissible set."""
    idx = np.nonzero(adm)
    sl = tuple(slice(int(i.min()), int(i.max()) + 1) for i in idx)
    return adm[sl], [a[sl] for a in arrays]


def _directions(dim: int):
    from itertools import product
    dirs = []
    for v in product((-1, 0, 1), repeat=dim):
        if all(c == 0 for c in v):
            continue
        first = next(c for c in v if c != 0)
        if first > 0:
            dirs.append(np.array(v, dtype=int))
    return dirs


def _pair_scan_max(D, adm, dist_w, h, alpha, wexp, seed, n_random):
    """Max Holder quotient over dyadic-offset pairs plus seeded random pairs."""
    best = 0.0
    dim = adm.ndim
    shape = adm.shape
    for v in _directions(dim):
        m = 1
        while True:
            off = m * v
            if (np.abs(off) >= shape).any():
                break
            adm_o = _shift(adm, off)
            both = adm & adm_o
            if not both.any():
                m *= 2
                continue
            diff = np.zeros(shape)
            for c in range(D.shape[-1]):
                diff += (_shift(D[..., c], off) - D[..., c]) ** 2
            sep = m * h * float(np.sqrt((v ** 2).sum()))
            q = np.sqrt(diff[both]) / sep ** alpha
            if wexp is not None:
                w = np.minimum(dist_w, _shift(dist_w, off))
                q = q * w[both] ** wexp
            qmax = float(q.max())
            if qmax > best:
                best = qmax
            m *= 2
    # random pairs, drawn on the full lattice and filtered (nested by design)
    rng = np.random.default_rng(seed)
    size = int(np.prod(shape))
    ia = rng.integers(0, size, n_random)
    ib = rng.integers(0, size, n_random)
    admf = adm.ravel()
    keep = admf[ia] & admf[ib] & (ia != ib)
    if keep.any():
        ia, ib = ia[keep], ib[keep]
        Df = D.reshape(size, -1)
        diff = np.sqrt(((Df[ia] - Df[ib]) ** 2).sum(axis=-1))
        idx_a = np.unravel_index(ia, shape)
        idx_b = np.unravel_index(ib, shape)
        sep = h * np.sqrt(sum((np.asarray(a, dtype=float) - b) ** 2
                              for a, b in zip(idx_a, idx_b)))
        q = diff / sep ** alpha
        if wexp is not None:
            dwf = dist_w.ravel()
            q = q * np.minimum(dwf[ia], dwf[ib]) ** wexp
        qmax = float(q.max())
        if qmax > best:
            best = qmax
    return best


def holder_seminorm(field: GridField, spec: SeminormSpec,
                    n_random: int = DEFAULT_RANDOM_PAIRS, seed: int = 0) -> float:
    """Discrete [u]_{k,alpha} over the spec's domain (weighted variant optional).

    Lower bound for the continuum seminorm; the gap is bounded in the test
    suite against a dense pair-enumeration oracle.
    """
    D, valid = _derivative_stack(field, spec.k, spec.deriv)
    adm = _admissible(field, valid, spec.domain)
    dist = _boundary_distance(field, spec.domain)
    adm, (D, dist) = _crop(adm, [D, dist])
    wexp = (spec.k + spec.alpha) if spec.weighted else None
    return _pair_scan_max(D, adm, dist, field.h, spec.alpha, wexp, seed, n_random)


def sup_norm(field: GridField, domain: Optional[BallDomain] = None) -> float:
    """Plain sup |u| over the admissible interior of ``domain``."""
    adm = _admissible(field, field.mask == INTERIOR, domain)
    return float(np.abs(field.values[adm]).max())


def weighted_f_norm(field: GridField, k: int, alpha: float,
                    n_random: int = DEFAULT_RANDOM_PAIRS, seed: int = 0) -> float:
    """sup d_x^k |f|  +  sup d_{x,y}^{k+alpha} |f(x)-f(y)| / |x-y|^alpha."""
    if k < 0 or not 0.0 < alpha <= 1.0:
        raise DomainError("need k >= 0 and alpha in (0,1]")
    adm = _admissible(field, field.mask == INTERIOR, None)
    dist = _boundary_distance(field, None)
    zeroth = float((dist[adm] ** k * np.abs(field.values[adm])).max())
    D = field.values[..., None]
    adm_c, (D, dist) = _crop(adm, [D, dist])
    quot = _pair_scan_max(D, adm_c, dist, field.h, alpha, k + alpha, seed, n_random)
    return zeroth + quot


def fit_decay_rate(samples) -> DecayFit:
    """Fit v ~ C t^slope, discarding the first and last sample.

    The first scale carries pre-asymptotic error and the last is
    resolution-limited.  Residual is the max absolute log-space deviation
    of the kept points; it is always reported.
    """
    samples = [(float(t), float(v)) for t, v in samples]
    if len(samples) < 4:
        raise DomainError(f"need at least 4 samples to fit, got {len(samples)}")
    ts = np.array([s[0] for s in samples])
    vs = np.array([s[1] for s in samples])
    if (vs <= 0).any():
        raise DegenerateDataError("decay fit needs strictly positive values")
    if not (np.diff(ts) < 0).all():
        raise DomainError("scales must be strictly decreasing")
    lt, lv = np.log(ts[1:-1]), np.log(vs[1:-1])
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = float(np.abs(slope * lt + intercept - lv).max())
    return DecayFit(pairs=tuple(samples), slope=float(slope),
                    residual=resid, n_used=len(lt))
