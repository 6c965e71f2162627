"""Discrete convolution kernels and the coefficient fields they induce.

A :class:`KernelStencil` stores kernel samples on grid offsets in an odd-sized
array centred on the zero offset. Convolutions follow the midpoint rule

    (J * f)(x_i) = sum_j J(x_i - x_j) f(x_j) |cell|

with values outside the box replaced by a constant ``exterior``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError
from .geometry import Grid, MaskedField

FAMILIES = ("bump", "tent", "truncated_gaussian")


@dataclass(frozen=True, eq=False)
class KernelStencil:
    """Kernel samples on grid offsets.

    ``weights`` has shape ``(2 r_1 + 1, ..., 2 r_dim + 1)``; entry ``r`` (the
    centre) is J(0). Once normalised, ``sum(weights) * cell_volume == 1``.
    """

    grid: Grid
    support_radius: float
    weights: np.ndarray
    family: str = "custom"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != self.grid.dim or any(s % 2 == 0 for s in w.shape):
            raise ConfigurationError("stencil weights must be odd-sized, one axis per dim")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def radius_cells(self) -> tuple:
        return tuple(s // 2 for s in self.weights.shape)

    @property
    def j0(self) -> float:
        return float(self.weights[self.radius_cells])

    @property
    def mass(self) -> float:
        return float(self.weights.sum() * self.grid.cell_volume)

    @property
    def measure(self) -> float:
        """Same as ``mass``; reads better for indicator stencils."""
        return self.mass

    def offsets(self) -> list:
        """Physical offset arrays (``indexing='ij'``) matching ``weights``."""
        axes = [np.arange(-r, r + 1) * h for r, h in zip(self.radius_cells, self.grid.h)]
        return np.meshgrid(*axes, indexing="ij")

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.weights, self.weights[(slice(None, None, -1),) * self.weights.ndim]))

    def profile_rows(self):
        """(offset..., weight) rows for CSV export."""
        offs = self.offsets()
        cols = [o.ravel() for o in offs] + [self.weights.ravel()]
        return np.stack(cols, axis=1)


def _profile(family: str, r: np.ndarray, R: float, sigma: Optional[float]) -> np.ndarray:
    inside = r < R
    if family == "tent":
        vals = 1.0 - r / R
    elif family == "bump":
        q = np.where(inside, (r / R) ** 2, 0.0)
        vals = np.exp(-1.0 / np.where(inside, 1.0 - q, 1.0))
    elif family == "truncated_gaussian":
        s = R / 3.0 if sigma is None else sigma
        vals = np.exp(-0.5 * (r / s) ** 2)
    else:
        raise ConfigurationError(f"unknown kernel family {family!r}; choose from {FAMILIES}")
    return np.where(inside, vals, 0.0)


def build_kernel(grid: Grid, family: str, support_radius: float,
                 sigma: Optional[float] = None, margin: Optional[float] = None) -> KernelStencil:
    """Sample, symmetrise and normalise a compactly supported kernel.

    The profile is sampled at offsets with |offset| < support_radius, replaced
    by the average of J(x) and J(-x), then rescaled to unit discrete mass.
    """
    h_max = max(grid.h)
    if support_radius < 2 * h_max:
        raise ConfigurationError(
            f"support_radius {support_radius:g} must span at least 2 cells ({2 * h_max:g})")
    if margin is not None and support_radius > margin:
        raise ConfigurationError(
            f"support_radius {support_radius:g} exceeds the padding margin {margin:g}")
    rc = tuple(int(math.ceil(support_radius / h)) for h in grid.h)
    axes = [np.arange(-r, r + 1) * h for r, h in zip(rc, grid.h)]
    offs = np.meshgrid(*axes, indexing="ij")
    dist = np.sqrt(sum(o ** 2 for o in offs))
    w = _profile(family, dist, support_radius, sigma)
    w = 0.5 * (w + w[(slice(None, None, -1),) * grid.dim])
    total = w.sum() * grid.cell_volume
    if not total > 0:
        raise ConfigurationError("kernel sampling is identically zero; support too small")
    w = w / total
    return KernelStencil(grid, float(support_radius), w, family)


def stencil_from_weights(grid: Grid, weights, normalize: bool = True,
                         family: str = "custom") -> KernelStencil:
    """Wrap hand-built weights; optionally rescale to unit discrete mass."""
    w = np.asarray(weights, dtype=float)
    if normalize:
        w = w / (w.sum() * grid.cell_volume)
    r = max(s // 2 * h for s, h in zip(w.shape, grid.h))
    return KernelStencil(grid, float(r), w, family)


# --------------------------------------------------------------------------
# convolution


class FFTConvolver:
    """Linear (zero-padded) convolution with one stencil on a fixed grid shape.

    The transform of the stencil is computed once; each call costs one forward
    and one inverse real FFT.
    """

    def __init__(self, weights: np.ndarray, shape: Sequence[int]):
        self.shape = tuple(shape)
        self.kshape = weights.shape
        self.fshape = tuple(sfft.next_fast_len(n + k - 1, real=True)
                            for n, k in zip(self.shape, self.kshape))
        self._wf = sfft.rfftn(weights, self.fshape)
        self._crop = tuple(slice(k // 2, k // 2 + n) for n, k in zip(self.shape, self.kshape))

    def __call__(self, f: np.ndarray) -> np.ndarray:
        ff = sfft.rfftn(f, self.fshape)
        return sfft.irfftn(ff * self._wf, self.fshape)[self._crop]


_CACHE: dict = {}


def _convolver(weights: np.ndarray, shape) -> FFTConvolver:
    key = (id(weights), weights.shape, tuple(shape))
    hit = _CACHE.get(key)
    if hit is None or hit[0] is not weights:
        if len(_CACHE) > 64:
            _CACHE.clear()
        hit = (weights, FFTConvolver(weights, shape))
        _CACHE[key] = hit
    return hit[1]


def convolve_array(stencil: KernelStencil, f: np.ndarray, exterior: float = 0.0) -> np.ndarray:
    """FFT path on raw arrays: sum_y w(x - y) f(y), no cell-volume factor.

    A constant exterior adds ``exterior * (sum(w) - (w * box_indicator)(x))``.
    """
    conv = _convolver(stencil.weights, f.shape)
    out = conv(f)
    if exterior != 0.0:
        inner = conv(np.ones(f.shape))
        out = out + exterior * (stencil.weights.sum() - inner)
    return out


def _check_grid(J: KernelStencil, f: MaskedField):
    if J.grid != f.grid:
        raise ConfigurationError("kernel and field live on different grids")


def convolve(J: KernelStencil, f: MaskedField, exterior: float = 0.0) -> MaskedField:
    """(J * f)(x) on every grid point, with ``f = exterior`` outside the box."""
    _check_grid(J, f)
    vals = convolve_array(J, f.values, exterior) * J.grid.cell_volume
    return MaskedField.full(J.grid, vals)


def convolve_direct(J: KernelStencil, f: MaskedField, exterior: float = 0.0) -> MaskedField:
    """Reference convolution: explicit sum over stencil offsets on a padded copy."""
    _check_grid(J, f)
    rc = J.radius_cells
    padded = np.pad(np.asarray(f.values, dtype=float), [(r, r) for r in rc],
                    mode="constant", constant_values=exterior)
    out = np.zeros(J.grid.shape)
    n = J.grid.shape
    for idx in np.ndindex(*J.weights.shape):
        w = J.weights[idx]
        if w == 0.0:
            continue
        # offset k = idx - r contributes w[k] * f[x - k]
        sl = tuple(slice(2 * r - i, 2 * r - i + m) for i, r, m in zip(idx, rc, n))
        out += w * padded[sl]
    return MaskedField.full(J.grid, out * J.grid.cell_volume)


# --------------------------------------------------------------------------
# coefficient fields


def coefficient_h_eps(J: KernelStencil, omega: MaskedField, chi_eps: MaskedField,
                      bc: str) -> MaskedField:
    """h_eps: 1 for Dirichlet; integral of J over R^N minus the holes for Neumann."""
    if bc == "dirichlet":
        return MaskedField.full(J.grid, 1.0)
    if bc != "neumann":
        raise ConfigurationError(f"unknown boundary condition {bc!r}")
    holes = omega.values - chi_eps.values
    return MaskedField.full(J.grid, 1.0 - convolve(J, MaskedField.full(J.grid, holes)).values)


def coefficient_h0(J: KernelStencil, omega: MaskedField, density: MaskedField) -> MaskedField:
    """h_0(x) = integral of J(x-y) (1 - chi_Omega(y) + X(y)) dy."""
    deficit = MaskedField.full(J.grid, omega.values - density.values)
    return MaskedField.full(J.grid, 1.0 - convolve(J, deficit).values)


def coefficient_lambda(h0: MaskedField, density: MaskedField) -> MaskedField:
    """Lambda = h_0 - X."""
    return MaskedField.full(h0.grid, h0.values - density.values)


def smoothing_check(J: KernelStencil, chis: Sequence[MaskedField], density: MaskedField,
                    window=None) -> list:
    """max over ``window`` of |J * chi_eps - J * X| for each chi_eps."""
    ref = convolve(J, density).values
    if window is None:
        window = density.mask
    out = []
    for chi in chis:
        diff = np.abs(convolve(J, chi).values - ref)
        out.append(float(diff[window].max()) if np.any(window) else 0.0)
    return out
