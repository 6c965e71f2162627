"""Grids, domain masks, perforations and the effective density field.

All geometry lives on a uniform cell-centred lattice. Indicator fields are
stored as 0/1 float arrays inside a :class:`MaskedField` whose boolean mask
records membership in the set the field lives on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, CoverageError


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian lattice with points at cell centres."""

    dim: int
    n_per_dim: tuple
    box: tuple  # ((low, high), ...) per axis

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.n_per_dim) != self.dim or len(self.box) != self.dim:
            raise ConfigurationError("n_per_dim and box must have one entry per axis")
        for n, (lo, hi) in zip(self.n_per_dim, self.box):
            if n < 4:
                raise ConfigurationError(f"need at least 4 points per axis, got {n}")
            if not hi > lo:
                raise ConfigurationError(f"degenerate box axis [{lo}, {hi}]")

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / n for n, (lo, hi) in zip(self.n_per_dim, self.box))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    @property
    def shape(self) -> tuple:
        return tuple(self.n_per_dim)

    @property
    def size(self) -> int:
        return math.prod(self.n_per_dim)

    @property
    def memory_estimate(self) -> int:
        """Bytes needed for one float64 field on this grid."""
        return 8 * self.size

    def axes(self) -> list:
        return [lo + (np.arange(n) + 0.5) * hh
                for n, (lo, _), hh in zip(self.n_per_dim, self.box, self.h)]

    def coords(self) -> list:
        """Cell-centre coordinate arrays, one per axis, ``indexing='ij'``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "n_per_dim": list(self.n_per_dim),
            "box": [list(b) for b in self.box],
            "h": list(self.h),
            "cell_volume": self.cell_volume,
            "points": self.size,
            "memory_bytes_per_field": self.memory_estimate,
        }


def build_grid(dim: int, n_per_dim, box, kernel_radius: Optional[float] = None) -> Grid:
    """Build a cell-centred grid.

    ``n_per_dim`` and ``box`` may be scalars / a single interval, in which case
    they are repeated on every axis. If ``kernel_radius`` is given the grid is
    rejected when the kernel support would be smaller than one cell.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if np.isscalar(n_per_dim):
        n_per_dim = (int(n_per_dim),) * dim
    n_per_dim = tuple(int(n) for n in n_per_dim)
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (dim, 1))
    if box.shape != (dim, 2):
        raise ConfigurationError(f"box must be [low, high] per axis, got shape {box.shape}")
    grid = Grid(dim, n_per_dim, tuple((float(lo), float(hi)) for lo, hi in box))
    if kernel_radius is not None and kernel_radius < max(grid.h):
        raise ConfigurationError(
            f"kernel support radius {kernel_radius} is smaller than one cell ({max(grid.h)})")
    return grid


@dataclass(frozen=True, eq=False)
class MaskedField:
    """Grid values plus a membership mask; values off the mask are exactly 0."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != self.grid.shape or mask.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {values.shape} / mask shape {mask.shape} "
                f"do not match grid {self.grid.shape}")
        values = np.where(mask, values, 0.0)
        values.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, grid: Grid, values) -> "MaskedField":
        values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
        return cls(grid, values, np.ones(grid.shape, dtype=bool))

    @classmethod
    def indicator(cls, grid: Grid, mask) -> "MaskedField":
        mask = np.asarray(mask, dtype=bool)
        return cls(grid, mask.astype(float), mask)

    def restrict(self, mask) -> "MaskedField":
        return MaskedField(self.grid, self.values, np.asarray(mask, bool) & self.mask)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def l2_norm(self) -> float:
        return float(math.sqrt((self.values ** 2).sum() * self.grid.cell_volume))


# --------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """Square (interval in 1D) or disk-shaped bounded domain."""

    shape: str = "square"
    center: Optional[tuple] = None
    half_width: float = 0.25  # square: half side; disk: radius

    def resolved_center(self, grid: Grid) -> tuple:
        if self.center is None:
            return tuple(0.5 * (lo + hi) for lo, hi in grid.box)
        return tuple(float(c) for c in self.center)

    def bounding_box(self, grid: Grid) -> tuple:
        c = self.resolved_center(grid)
        return tuple((ci - self.half_width, ci + self.half_width) for ci in c)


def domain_mask(grid: Grid, shape: str = "square", margin: float = 0.0,
                center=None, half_width: float = 0.25) -> MaskedField:
    """Indicator of the domain, as a 0/1 field with mask = membership.

    The shape has to sit inside the box with at least ``margin`` (the kernel
    support radius) of padding on every side, and may never touch the box.
    """
    dom = Domain(shape, None if center is None else tuple(center), half_width)
    return domain_mask_from(grid, dom, margin)


def domain_mask_from(grid: Grid, dom: Domain, margin: float = 0.0) -> MaskedField:
    if dom.shape not in ("square", "disk"):
        raise ConfigurationError(f"unknown domain shape {dom.shape!r}")
    if dom.half_width <= 0:
        raise ConfigurationError("domain half_width must be positive")
    c = dom.resolved_center(grid)
    if len(c) != grid.dim:
        raise ConfigurationError("domain center has wrong dimension")
    for ci, (lo, hi) in zip(c, grid.box):
        gap = min(ci - dom.half_width - lo, hi - ci - dom.half_width)
        if gap <= 0 or gap < margin:
            raise ConfigurationError(
                f"domain needs a padding margin of at least {margin:g} "
                f"(kernel support) to the box boundary, found {gap:g}")
    X = grid.coords()
    if dom.shape == "square" or grid.dim == 1:
        inside = np.ones(grid.shape, dtype=bool)
        for xi, ci in zip(X, c):
            inside &= np.abs(xi - ci) < dom.half_width
    else:
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(X, c))
        inside = r2 < dom.half_width ** 2
    if not inside.any():
        raise ConfigurationError("domain contains no grid points")
    return MaskedField.indicator(grid, inside)


def distance_inside(grid: Grid, omega: MaskedField) -> np.ndarray:
    """Euclidean distance (physical units) from each cell to the complement of Omega."""
    return ndimage.distance_transform_edt(omega.mask, sampling=grid.h)


# --------------------------------------------------------------------------
# perforations


@dataclass(frozen=True)
class PerforationSpec:
    """Holes removed from Omega.

    periodic_balls: balls of radius ``radius_ratio * eps`` centred on the
    lattice ``2 eps Z^N``. random_balls: ``count`` balls of radius ``radius``
    with centres drawn uniformly in the bounding box of Omega.
    """

    kind: str = "none"
    eps: Optional[float] = None
    radius_ratio: Optional[float] = None
    count: Optional[int] = None
    radius: Optional[float] = None
    rng_seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("none", "periodic_balls", "random_balls"):
            raise ConfigurationError(f"unknown perforation kind {self.kind!r}")
        if self.kind == "periodic_balls":
            if self.eps is None or not self.eps > 0:
                raise ConfigurationError("periodic perforation needs eps > 0")
            if self.radius_ratio is None or not 0 < self.radius_ratio < 1:
                raise ConfigurationError("periodic perforation needs 0 < radius_ratio < 1")
        if self.kind == "random_balls":
            if self.count is None or self.count < 0:
                raise ConfigurationError("random perforation needs count >= 0")
            if self.radius is None or not self.radius > 0:
                raise ConfigurationError("random perforation needs radius > 0")

    def with_eps(self, eps: float) -> "PerforationSpec":
        return PerforationSpec(self.kind, eps, self.radius_ratio, self.count,
                               self.radius, self.rng_seed)

    def analytic_density(self, dim: int) -> float:
        """|Q \\ B| / |Q| for the periodic cell Q of side 2 eps."""
        if self.kind == "none":
            return 1.0
        if self.kind != "periodic_balls":
            raise ConfigurationError("analytic density only exists for none/periodic_balls")
        r = self.radius_ratio * self.eps
        ball = 2 * r if dim == 1 else math.pi * r ** 2
        return 1.0 - ball / (2 * self.eps) ** dim


def ball_centres(grid: Grid, omega: MaskedField, spec: PerforationSpec) -> np.ndarray:
    """Hole centres as an (m, dim) array.

    Periodic centres include every lattice point whose ball can meet Omega.
    """
    if spec.kind == "none":
        return np.zeros((0, grid.dim))
    pts = np.stack([x[omega.mask] for x in grid.coords()], axis=1)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if spec.kind == "periodic_balls":
        pitch = 2 * spec.eps
        r = spec.radius_ratio * spec.eps
        ranges = [np.arange(math.floor((a - r) / pitch), math.ceil((b + r) / pitch) + 1) * pitch
                  for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*ranges, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    rng = np.random.default_rng(spec.rng_seed)
    return rng.uniform(lo, hi, size=(spec.count, grid.dim))


def perforate(grid: Grid, omega: MaskedField, spec: PerforationSpec,
              delta: Optional[float] = None, coverage_floor: Optional[float] = None):
    """Remove balls from Omega.

    Returns ``(chi_eps, holes)`` as 0/1 fields with ``holes + chi_eps == omega``.
    A cell is removed iff its centre lies strictly inside some ball. When
    ``delta`` is given the coverage bound |B_delta(x) & Omega_eps| >= C0 is
    verified for every x in Omega (``coverage_floor`` = C0, default 5% of the
    discrete ball measure).
    """
    X = grid.coords()
    removed = np.zeros(grid.shape, dtype=bool)
    if spec.kind == "periodic_balls":
        pitch = 2 * spec.eps
        r = spec.radius_ratio * spec.eps
        # distance to the nearest lattice point of 2 eps Z^N
        d2 = sum((x - pitch * np.round(x / pitch)) ** 2 for x in X)
        removed = d2 < r ** 2
    elif spec.kind == "random_balls":
        for c in ball_centres(grid, omega, spec):
            removed |= sum((x - ci) ** 2 for x, ci in zip(X, c)) < spec.radius ** 2
    removed &= omega.mask
    chi = MaskedField.indicator(grid, omega.mask & ~removed)
    holes = MaskedField.indicator(grid, removed)
    if delta is not None:
        check_coverage(grid, omega, chi, delta, coverage_floor)
    return chi, holes


def coverage_measure(grid: Grid, weight: np.ndarray, delta: float) -> np.ndarray:
    """x -> integral of ``weight`` over B_delta(x), computed by direct ball sums."""
    from .nonlinearity import ball_stencil
    from .kernel import convolve_array

    ball = ball_stencil(grid, delta)
    return convolve_array(ball, weight) * grid.cell_volume


def default_coverage_floor(grid: Grid, delta: float) -> float:
    from .nonlinearity import ball_stencil

    return 0.05 * ball_stencil(grid, delta).measure


def check_coverage(grid: Grid, omega: MaskedField, chi: MaskedField, delta: float,
                   floor: Optional[float] = None) -> float:
    """Return min over Omega of |B_delta(x) & Omega_eps|; raise below ``floor``."""
    if floor is None:
        floor = default_coverage_floor(grid, delta)
    meas = coverage_measure(grid, chi.values, delta)
    inner = np.where(omega.mask, meas, np.inf)
    idx = np.unravel_index(int(np.argmin(inner)), grid.shape)
    worst = float(inner[idx])
    if worst < floor:
        raise CoverageError(
            f"coverage bound violated: min |B_delta(x) & Omega_eps| = {worst:.3e} "
            f"< C0 = {floor:.3e} at grid index {idx}", worst, idx)
    return worst


# --------------------------------------------------------------------------
# effective density


def effective_density(grid: Grid, omega: MaskedField, spec: PerforationSpec,
                      mode: str = "analytic", chi_eps: Optional[MaskedField] = None,
                      window: Optional[float] = None, floor: float = 1e-3) -> MaskedField:
    """Effective density X: weak-* limit of the perforated indicators.

    ``analytic`` uses the periodic cell fraction |Q \\ B|/|Q|. ``cell_average``
    is the moving average of chi_eps over a window of side one period (2 eps)
    or ``window``, normalised by the part of the window lying in Omega.
    """
    if mode == "analytic":
        value = spec.analytic_density(grid.dim)
        X = MaskedField(grid, np.full(grid.shape, value), omega.mask)
    elif mode == "cell_average":
        if window is None:
            if spec.kind == "periodic_balls":
                window = 2 * spec.eps
            elif spec.kind == "none":
                window = 2 * max(grid.h)
            else:
                raise ConfigurationError("cell_average for random perforations needs a window")
        if chi_eps is None:
            chi_eps, _ = perforate(grid, omega, spec)
        size = [max(1, int(round(window / hh))) for hh in grid.h]
        num = ndimage.uniform_filter(chi_eps.values, size=size, mode="constant", cval=0.0)
        den = ndimage.uniform_filter(omega.values, size=size, mode="constant", cval=0.0)
        vals = np.where(omega.mask, num / np.where(den > 0, den, 1.0), 0.0)
        X = MaskedField(grid, np.clip(vals, 0.0, 1.0), omega.mask)
    else:
        raise ConfigurationError(f"unknown density mode {mode!r}")
    low = X.values[omega.mask].min()
    if low < floor:
        raise ConfigurationError(
            f"effective density drops to {low:.3e} below the floor c = {floor:g}")
    return X


def is_constant_on(field_: MaskedField, mask=None, atol: float = 0.0) -> bool:
    mask = field_.mask if mask is None else mask
    vals = field_.values[mask]
    return vals.size == 0 or float(vals.max() - vals.min()) <= atol
