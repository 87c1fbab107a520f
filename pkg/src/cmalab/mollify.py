"""Radial smoothing kernel and discrete convolution for boundary data.

The profile is the standard bump exp(-1/(1-r^2)) on r < 1, sampled on a
lattice and renormalized to exact discrete unit mass: constants are then
preserved to round-off, and lattice reflection symmetry cancels all odd
moments (linear functions are preserved too).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np
from scipy.ndimage import binary_erosion

from .errors import ResolutionError, SupportError
from .field import COLLAR, EXTERIOR, GridField, INTERIOR, _shift, gradient, real_hessian

#: fewest lattice shells the kernel may span (below this it degenerates)
MIN_CELLS = 4


@dataclass(frozen=True)
class Kernel:
    """Nonnegative radial kernel sampled on a lattice of spacing ``h``.

    ``offsets`` lie strictly inside the radius (support in {|w| < radius});
    ``weights`` are nonnegative, reflection-symmetric and sum to one in
    floating point.
    """

    dim: int
    radius: float
    h: float
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def cells(self) -> int:
        return int(np.ceil(self.radius / self.h)) - 1

    def second_moment(self) -> float:
        """sum_o w_o |o h|^2, the pure radial second moment."""
        return float((self.weights * ((self.offsets * self.h) ** 2).sum(axis=1)).sum())


def _bump(r):
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def make_kernel(dim: int, radius: float, h: float) -> Kernel:
    """Discretize the bump profile at scale ``radius`` on spacing ``h``."""
    if radius < MIN_CELLS * h:
        raise ResolutionError(
            f"kernel radius {radius} spans fewer than {MIN_CELLS} cells at h={h}")
    reach = int(np.ceil(radius / h))
    rng = np.arange(-reach, reach + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1)
    r = np.sqrt((offs ** 2).sum(axis=1)) * h / radius
    w = _bump(r)
    keep = w > 0.0
    offs, w = offs[keep], w[keep]
    w = w / w.sum()
    return Kernel(dim=dim, radius=radius, h=h, offsets=offs, weights=w)


def mollify_at(fn: Callable, pts: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Discrete convolution of a pointwise evaluator at arbitrary points."""
    pts = np.asarray(pts, dtype=float)
    out = np.zeros(pts.shape[:-1])
    for o, w in zip(kernel.offsets, kernel.weights):
        out += w * np.asarray(fn(pts + o * kernel.h))
    return out


def mollify(field: GridField, epsilon: float) -> GridField:
    """Convolve a sampled field with the kernel at scale ``epsilon``.

    The kernel lives on the field's own lattice.  The output domain is the
    data-carrying region shrunk by the kernel reach (truncating the kernel
    would silently break mass normalization, so under-covered points are
    dropped instead).
    """
    kern = make_kernel(field.grid.dim, epsilon, field.h)
    reach = int(np.ceil(epsilon / field.h))
    has_data = field.mask >= COLLAR
    struct = np.ones((3,) * field.grid.dim, dtype=bool)
    supported = binary_erosion(has_data, structure=struct, iterations=reach,
                               border_value=0)
    if not supported.any():
        raise SupportError(
            f"field domain too small to mollify at epsilon = {epsilon}")
    out = np.zeros(field.grid.shape)
    shape = field.grid.shape
    for o, w in zip(kern.offsets, kern.weights):
        src, dst = [], []
        for k, ok in enumerate(o):
            ok = int(ok)
            if ok >= 0:
                src.append(slice(ok, shape[k]))
                dst.append(slice(0, shape[k] - ok))
            else:
                src.append(slice(0, shape[k] + ok))
                dst.append(slice(-ok, shape[k]))
        out[tuple(dst)] += w * field.values[tuple(src)]
    interior = binary_erosion(supported, structure=struct, border_value=0)
    mask = np.zeros(field.grid.shape, dtype=np.uint8)
    mask[supported] = COLLAR
    mask[interior] = INTERIOR
    out[~supported] = 0.0
    return GridField(field.grid, out, mask, None)


def smoothness_report(field: GridField, epsilon: float) -> dict:
    """Sup of |grad^2 (mollified)| and of |mollified - original|.

    The two sups are the raw material for fitting the regularity trade-off
    of mollification at scale epsilon against the smoothness of the input.
    """
    sm = mollify(field, epsilon)
    H, valid = real_hessian(sm)
    if not valid.any():
        raise ResolutionError("mollified region too thin for second differences")
    frob = np.sqrt((H[valid] ** 2).sum(axis=(-2, -1)))
    region = sm.mask >= COLLAR
    diff = np.abs(sm.values[region] - field.values[region])
    g, gvalid = gradient(sm)
    gnorm = np.sqrt((g[gvalid] ** 2).sum(axis=-1))
    return {
        "epsilon": float(epsilon),
        "sup_hessian": float(frob.max()),
        "sup_gradient": float(gnorm.max()),
        "sup_diff": float(diff.max()),
        "n_points": int(valid.sum()),
    }
