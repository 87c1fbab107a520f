"""Grid-sampled scalar fields on boxes and balls in C^n (n = 1, 2).

Complex coordinates z_j = x_j + i y_j are flattened to real axes in the
interleaved order (x_1, y_1, ..., x_n, y_n).  All finite differences are
second-order central stencils; complex derivatives are assembled from them
through the Wirtinger identities d/dz = (d/dx - i d/dy)/2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from .errors import (CollarError, DomainError, GeometryError, ResolutionError,
                     UnknownNameError)

EXTERIOR, COLLAR, INTERIOR = 0, 1, 2

#: a ball must span at least this many grid points per axis
MIN_POINTS_ACROSS = 9


@dataclass(frozen=True)
class BallDomain:
    """Euclidean ball in R^{2n} carrying the complex dimension."""

    n: int
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")
        if len(self.center) != 2 * self.n:
            raise DomainError("center must have 2n real coordinates")

    def distance_to_boundary(self, pts):
        d = self.radius - np.sqrt(((pts - np.asarray(self.center)) ** 2).sum(axis=-1))
        return d


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over an axis-aligned box in R^{2n}."""

    n: int
    lo: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        if self.h <= 0:
            raise DomainError(f"grid spacing must be positive, got {self.h}")
        if len(self.lo) != 2 * self.n or len(self.shape) != 2 * self.n:
            raise DomainError("lo/shape must have 2n entries")

    @property
    def dim(self):
        return 2 * self.n

    @property
    def hi(self):
        return tuple(l + self.h * (s - 1) for l, s in zip(self.lo, self.shape))

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def strides(self):
        out = np.empty(self.dim, dtype=np.int64)
        acc = 1
        for k in range(self.dim - 1, -1, -1):
            out[k] = acc
            acc *= self.shape[k]
        return out

    def axes(self):
        return [self.lo[k] + self.h * np.arange(self.shape[k]) for k in range(self.dim)]

    def points(self):
        """All lattice points, shape (size, 2n), C-order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def index_points(self, flat_idx):
        """Coordinates of the given flat indices, shape (m, 2n)."""
        idx = np.unravel_index(np.asarray(flat_idx), self.shape)
        return np.stack([self.lo[k] + self.h * idx[k] for k in range(self.dim)],
                        axis=-1)


@dataclass
class GridField:
    """Sampled scalar field with an interior / collar / exterior mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray
    domain: Optional[BallDomain] = None

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise DomainError("values shape does not match grid")
        if self.mask.shape != self.grid.shape:
            raise DomainError("mask shape does not match grid")
        if not np.all(np.isfinite(self.values[self.mask > EXTERIOR])):
            raise DomainError("field has non-finite values on interior/collar")

    @property
    def n(self):
        return self.grid.n

    @property
    def h(self):
        return self.grid.h

    def interior_flat(self):
        return np.nonzero(self.mask.ravel() == INTERIOR)[0]

    def copy_with(self, values=None, mask=None):
        return GridField(self.grid,
                         self.values if values is None else values,
                         self.mask if mask is None else mask,
                         self.domain)


@dataclass
class HermitianField:
    """Pointwise n x n complex Hermitian matrices (a discrete complex Hessian)."""

    grid: Grid
    values: np.ndarray   # shape grid.shape + (n, n), complex
    valid: np.ndarray    # boolean, where the stencil was fully supported


# ---------------------------------------------------------------------------
# construction helpers

def ball_grid(domain: BallDomain, h: float, collar: int = 1, pad: int = 0) -> Grid:
    """Grid centered exactly on the ball center, covering ball + collar + pad."""
    cells = int(np.ceil(domain.radius / h)) + collar + pad
    m = 2 * cells + 1
    lo = tuple(c - cells * h for c in domain.center)
    return Grid(domain.n, lo, h, (m,) * (2 * domain.n))


def ball_mask(grid: Grid, domain: BallDomain, collar: int = 1) -> np.ndarray:
    """Interior = strictly inside the ball, collar = Chebyshev dilation."""
    pts = grid.points()
    r = np.sqrt(((pts - np.asarray(domain.center)) ** 2).sum(axis=-1))
    interior = (r < domain.radius).reshape(grid.shape)
    across = interior.any(axis=tuple(range(1, grid.dim))).sum()
    if across < MIN_POINTS_ACROSS:
        raise ResolutionError(
            f"ball spans {across} grid points per axis, need >= {MIN_POINTS_ACROSS}")
    struct = np.ones((3,) * grid.dim, dtype=bool)
    reach = binary_dilation(interior, structure=struct, iterations=collar)
    # ball + collar must fit strictly inside the box
    border = np.ones(grid.shape, dtype=bool)
    border[tuple(slice(1, -1) for _ in range(grid.dim))] = False
    if (reach & border).any():
        raise GeometryError("ball plus collar does not fit inside the grid box")
    mask = np.zeros(grid.shape, dtype=np.uint8)
    mask[reach & ~interior] = COLLAR
    mask[interior] = INTERIOR
    return mask


def ball_field(fn: Callable, domain: BallDomain, h: float,
               collar: int = 1, fill_exterior: bool = True) -> GridField:
    """Sample ``fn`` on a ball-centered grid.

    With ``fill_exterior`` the whole box is evaluated (keeps interpolation
    stencils anchored to smooth data); otherwise exterior points are zero.
    """
    grid = ball_grid(domain, h, collar=collar)
    mask = ball_mask(grid, domain, collar=collar)
    pts = grid.points()
    if fill_exterior:
        vals = np.asarray(fn(pts), dtype=float).reshape(grid.shape)
    else:
        vals = np.zeros(grid.shape)
        keep = mask.ravel() > EXTERIOR
        vals.ravel()[keep] = fn(pts[keep])
    return GridField(grid, vals, mask, domain)


def box_field(fn: Callable, n: int, lo, hi, points_per_axis,
              interior_margin: int = 1) -> GridField:
    """Sample ``fn`` on a box; interior = margin cells away from the faces."""
    lo = tuple(float(x) for x in np.atleast_1d(lo) * np.ones(2 * n))
    hi = tuple(float(x) for x in np.atleast_1d(hi) * np.ones(2 * n))
    m = int(points_per_axis)
    h = (hi[0] - lo[0]) / (m - 1)
    for a, b in zip(lo, hi):
        if not np.isclose((b - a) / (m - 1), h):
            raise DomainError("box must have identical spacing on every axis")
    grid = Grid(n, lo, h, (m,) * (2 * n))
    return _mask_box(grid, fn, interior_margin)


def box_field_h(fn: Callable, n: int, lo, hi, h: float,
                interior_margin: int = 1) -> GridField:
    """Sample ``fn`` on a (possibly anisotropic) box at spacing ``h``.

    Extents are rounded up to whole cells, so the box may overshoot ``hi``
    slightly; spacing stays identical on every axis.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float)) * np.ones(2 * n)
    hi = np.atleast_1d(np.asarray(hi, dtype=float)) * np.ones(2 * n)
    shape = tuple(int(np.ceil((b - a) / h)) + 1 for a, b in zip(lo, hi))
    grid = Grid(n, tuple(lo), h, shape)
    return _mask_box(grid, fn, interior_margin)


def _mask_box(grid: Grid, fn: Callable, interior_margin: int) -> GridField:
    vals = np.asarray(fn(grid.points()), dtype=float).reshape(grid.shape)
    mask = np.full(grid.shape, COLLAR, dtype=np.uint8)
    if 2 * interior_margin >= min(grid.shape):
        raise ResolutionError("interior margin eats the whole box")
    sl = tuple(slice(interior_margin, -interior_margin)
               for _ in range(grid.dim))
    mask[sl] = INTERIOR
    return GridField(grid, vals, mask)


# ---------------------------------------------------------------------------
# central finite differences (full-array slicing, validity tracked by mask)

def _shift(a: np.ndarray, off) -> np.ndarray:
    """Array shifted so that out[p] = a[p + off]; zeros where undefined."""
    out = np.zeros_like(a)
    src, dst = [], []
    for k, o in enumerate(off):
        nk = a.shape[k]
        if abs(o) >= nk:
            return out
        if o >= 0:
            src.append(slice(o, nk))
            dst.append(slice(0, nk - o))
        else:
            src.append(slice(0, nk + o))
            dst.append(slice(-o, nk))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _unit(dim, axis):
    e = np.zeros(dim, dtype=int)
    e[axis] = 1
    return e


def _d1(a, axis, h):
    dim = a.ndim
    e = _unit(dim, axis)
    return (_shift(a, e) - _shift(a, -e)) / (2.0 * h)


def _d2(a, ax1, ax2, h):
    dim = a.ndim
    if ax1 == ax2:
        e = _unit(dim, ax1)
        return (_shift(a, e) - 2.0 * a + _shift(a, -e)) / h ** 2
    e1, e2 = _unit(dim, ax1), _unit(dim, ax2)
    return (_shift(a, e1 + e2) - _shift(a, e1 - e2)
            - _shift(a, -e1 + e2) + _shift(a, -e1 - e2)) / (4.0 * h ** 2)


def stencil_valid(field: GridField, reach: int) -> np.ndarray:
    """Interior points whose Chebyshev-``reach`` neighborhood carries data."""
    has_data = field.mask >= COLLAR
    struct = np.ones((3,) * field.grid.dim, dtype=bool)
    supported = binary_erosion(has_data, structure=struct, iterations=reach,
                               border_value=0)
    return (field.mask == INTERIOR) & supported


def _require_valid(field: GridField, reach: int) -> np.ndarray:
    valid = stencil_valid(field, reach)
    missing = (field.mask == INTERIOR) & ~valid
    if missing.any():
        raise CollarError(
            f"{int(missing.sum())} interior points lack a {reach}-cell collar")
    return valid


def gradient(field: GridField) -> tuple:
    """Central gradient, shape grid.shape + (2n,), with validity mask."""
    valid = _require_valid(field, 1)
    g = np.stack([_d1(field.values, k, field.h) for k in range(field.grid.dim)],
                 axis=-1)
    return g, valid


def real_hessian(field: GridField) -> tuple:
    """All second central differences, shape grid.shape + (2n, 2n)."""
    valid = _require_valid(field, 1)
    d = field.grid.dim
    H = np.empty(field.grid.shape + (d, d))
    for a in range(d):
        for b in range(a, d):
            H[..., a, b] = _d2(field.values, a, b, field.h)
            if b > a:
                H[..., b, a] = H[..., a, b]
    return H, valid


def complex_hessian(field: GridField) -> HermitianField:
    """Discrete complex Hessian u_{i jbar} via the Wirtinger identity.

    Entry (i, j) is ((Dx_i x_j + Dy_i y_j) + i (Dx_i y_j - Dy_i x_j)) / 4;
    Hermitian by construction of the central stencils.
    """
    valid = _require_valid(field, 1)
    n = field.n
    u, h = field.values, field.h
    H = np.zeros(field.grid.shape + (n, n), dtype=complex)
    for i in range(n):
        xi, yi = 2 * i, 2 * i + 1
        H[..., i, i] = 0.25 * (_d2(u, xi, xi, h) + _d2(u, yi, yi, h))
        for j in range(i + 1, n):
            xj, yj = 2 * j, 2 * j + 1
            re = _d2(u, xi, xj, h) + _d2(u, yi, yj, h)
            im = _d2(u, xi, yj, h) - _d2(u, yi, xj, h)
            H[..., i, j] = 0.25 * (re + 1j * im)
            H[..., j, i] = np.conj(H[..., i, j])
    return HermitianField(field.grid, H, valid)


def hermitian_det(H: np.ndarray) -> np.ndarray:
    """Determinant of pointwise Hermitian matrices (closed form for n <= 2)."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0].real
    if n == 2:
        return (H[..., 0, 0].real * H[..., 1, 1].real
                - (H[..., 0, 1].real ** 2 + H[..., 0, 1].imag ** 2))
    return np.linalg.det(H).real


def hermitian_mineig(H: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of pointwise Hermitian matrices (n <= 2 closed form)."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0].real
    if n == 2:
        a, c = H[..., 0, 0].real, H[..., 1, 1].real
        b2 = H[..., 0, 1].real ** 2 + H[..., 0, 1].imag ** 2
        return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b2)
    return np.linalg.eigvalsh(H)[..., 0]


def hermitian_maxeig(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0].real
    if n == 2:
        a, c = H[..., 0, 0].real, H[..., 1, 1].real
        b2 = H[..., 0, 1].real ** 2 + H[..., 0, 1].imag ** 2
        return 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b2)
    return np.linalg.eigvalsh(H)[..., -1]


def ma_determinant(field: GridField) -> GridField:
    """det of the discrete complex Hessian; for n = 1 this is Lap(u)/4."""
    ch = complex_hessian(field)
    det = hermitian_det(ch.values)
    mask = np.where(ch.valid, INTERIOR, EXTERIOR).astype(np.uint8)
    det = np.where(ch.valid, det, 0.0)
    return GridField(field.grid, det, mask, field.domain)


def third_derivatives(field: GridField) -> tuple:
    """Pure holomorphic third derivatives u_{ijk}, shape grid.shape + (n,n,n).

    Assembled from composed real central differences (width two on each
    axis), hence exactly symmetric in (i, j, k).  Requires a two-cell collar.
    """
    valid = _require_valid(field, 2)
    n, h, u = field.n, field.h, field.values
    dim = field.grid.dim
    # real third differences, memoized per sorted axis triple
    cache = {}

    def d3(axes):
        key = tuple(sorted(axes))
        if key in cache:
            return cache[key]
        a, b, c = key
        if a == b == c:
            e = _unit(dim, a)
            out = (_shift(u, 2 * e) - 2.0 * _shift(u, e)
                   + 2.0 * _shift(u, -e) - _shift(u, -2 * e)) / (2.0 * h ** 3)
        elif a == b:
            out = _d1(_d2(u, a, a, h), c, h)
        elif b == c:
            out = _d1(_d2(u, b, b, h), a, h)
        else:
            out = _d1(_d1(_d1(u, a, h), b, h), c, h)
        cache[key] = out
        return out

    T = np.zeros(field.grid.shape + (n, n, n), dtype=complex)
    from itertools import combinations_with_replacement, product
    for (i, j, k) in combinations_with_replacement(range(n), 3):
        acc = np.zeros(field.grid.shape, dtype=complex)
        for parts in product((0, 1), repeat=3):
            axes = (2 * i + parts[0], 2 * j + parts[1], 2 * k + parts[2])
            coef = 0.125 * (-1j) ** sum(parts)
            acc = acc + coef * d3(axes)
        for perm in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
            T[(..., *perm)] = acc
    return T, valid


def holo_derivative(arr: np.ndarray, k: int, h: float) -> np.ndarray:
    """Wirtinger d/dz_k of a (possibly complex) array sampled on the grid."""
    return 0.5 * (_d1(arr, 2 * k, h) - 1j * _d1(arr, 2 * k + 1, h))


def antiholo_derivative(arr: np.ndarray, k: int, h: float) -> np.ndarray:
    """Wirtinger d/dzbar_k of an array sampled on the grid."""
    return 0.5 * (_d1(arr, 2 * k, h) + 1j * _d1(arr, 2 * k + 1, h))


# ---------------------------------------------------------------------------
# closed-form catalog

@dataclass(frozen=True)
class CatalogEntry:
    """Closed-form pair (u, f) with det(complex Hessian of u) = f."""

    name: str
    n: int
    u: Callable
    f: Callable
    smooth: bool
    beta_eff: float       # declared gradient-Holder exponent (1 = smooth)
    params: dict = dc_field(default_factory=dict)


def _r2(pts):
    return (np.asarray(pts) ** 2).sum(axis=-1)


def test_solution(name: str, n: int, **params) -> CatalogEntry:
    """Catalog lookup.  Known names: QUAD, EXP, PLURI3 (param t), POGO (n = 2).

    Every pair is certified against symbolic differentiation in the test
    suite; POGO is the rough member, valid away from its singular set
    {z_1 = 0} where f = 1/4.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if name == "QUAD":
        return CatalogEntry("QUAD", n,
                            u=lambda p: _r2(p),
                            f=lambda p: np.ones(np.asarray(p).shape[:-1]),
                            smooth=True, beta_eff=1.0)
    if name == "EXP":
        return CatalogEntry("EXP", n,
                            u=lambda p: np.exp(_r2(p)),
                            f=lambda p: np.exp(n * _r2(p)) * (1.0 + _r2(p)),
                            smooth=True, beta_eff=1.0)
    if name == "PLURI3":
        t = float(params.get("t", 0.1))

        def u_pluri(p):
            p = np.asarray(p)
            x, y = p[..., 0], p[..., 1]
            return _r2(p) + t * (x ** 3 - 3.0 * x * y ** 2)

        return CatalogEntry("PLURI3", n, u=u_pluri,
                            f=lambda p: np.ones(np.asarray(p).shape[:-1]),
                            smooth=True, beta_eff=1.0, params={"t": t})
    if name == "POGO":
        if n != 2:
            raise DomainError("POGO requires n = 2")

        def u_pogo(p):
            p = np.asarray(p)
            z1 = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2)
            return (1.0 + p[..., 2] ** 2 + p[..., 3] ** 2) * z1

        return CatalogEntry("POGO", 2, u=u_pogo,
                            f=lambda p: np.full(np.asarray(p).shape[:-1], 0.25),
                            smooth=False, beta_eff=0.0)
    raise UnknownNameError(name)


# ---------------------------------------------------------------------------
# interpolation and i/o

_CUBIC_NODES = np.array([-1.0, 0.0, 1.0, 2.0])


def _cubic_weights(s):
    """Lagrange weights on nodes {-1,0,1,2} for fractional position s in [0,1]."""
    w = np.empty(s.shape + (4,))
    w[..., 0] = -s * (s - 1.0) * (s - 2.0) / 6.0
    w[..., 1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w[..., 2] = -(s + 1.0) * s * (s - 2.0) / 2.0
    w[..., 3] = (s + 1.0) * s * (s - 1.0) / 6.0
    return w


def interp_cubic(field: GridField, pts: np.ndarray) -> np.ndarray:
    """Local tensor-product cubic (Lagrange) interpolation at ``pts``.

    Exact on polynomials of degree <= 3 per axis; touches a 4^{2n} point
    neighborhood and never runs a global prefilter, so values far from the
    queries cannot leak in.
    """
    grid = field.grid
    pts = np.asarray(pts, dtype=float)
    rel = (pts - np.asarray(grid.lo)) / grid.h
    i1 = np.floor(rel).astype(np.int64)        # node "0" of the 4-point stencil
    s = rel - i1
    if (i1 < 1).any() or (i1 + 2 > np.asarray(grid.shape) - 1).any():
        raise GeometryError("cubic interpolation stencil leaves the grid")
    w = _cubic_weights(s)                       # (m, 2n, 4)
    strides = grid.strides
    base = ((i1 - 1) * strides).sum(axis=-1)
    flat = field.values.ravel()
    out = np.zeros(pts.shape[:-1])
    dim = grid.dim
    from itertools import product
    for combo in product(range(4), repeat=dim):
        off = int(sum(c * strides[k] for k, c in enumerate(combo)))
        wc = np.ones(pts.shape[:-1])
        for k, c in enumerate(combo):
            wc = wc * w[..., k, c]
        out += wc * flat[base + off]
    return out


def save_field(field: GridField, path) -> None:
    """One JSON header line, then raw little-endian float64 values and uint8 mask."""
    header = {
        "n": field.n,
        "box": [list(field.grid.lo), list(field.grid.hi)],
        "h": field.grid.h,
        "shape": list(field.grid.shape),
        "mask_encoding": "uint8-raw",
        "values_encoding": "float64-le-raw",
    }
    if field.domain is not None:
        header["domain"] = {"center": list(field.domain.center),
                            "radius": field.domain.radius}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(field.values.astype("<f8").tobytes(order="C"))
        fh.write(field.mask.astype(np.uint8).tobytes(order="C"))


def load_field(path) -> GridField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        shape = tuple(header["shape"])
        count = int(np.prod(shape))
        vals = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
        mask = np.frombuffer(fh.read(count), dtype=np.uint8).reshape(shape).copy()
    grid = Grid(header["n"], tuple(header["box"][0]), header["h"], shape)
    domain = None
    if "domain" in header:
        dom = header["domain"]
        domain = BallDomain(header["n"], tuple(dom["center"]), dom["radius"])
    return GridField(grid, vals, mask, domain)
