"""Nonlocal reaction terms f = g o m and the ball-integral derivative check.

Three averaging modes are supported:

* ``perforated``: m(x, u) = mean of u over B_delta(x) & Omega_eps,
* ``density``:    m(x, u) = int_{B_delta(x)} u / int_{B_delta(x)} X,
* ``local``:      the delta -> 0 form, g(u(x) / X(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, CoverageError
from .geometry import Grid, MaskedField, default_coverage_floor
from .kernel import KernelStencil, convolve_array

G_FAMILIES = ("linear", "tanh_scale", "clamped_logistic")
MODES = ("perforated", "density", "local")


@dataclass(frozen=True)
class GSpec:
    """Globally Lipschitz scalar nonlinearity g.

    linear:           g(s) = a s + b
    tanh_scale:       g(s) = tanh(a s)
    clamped_logistic: g(s) = s (1 - s) on [-M, M], continued linearly with the
                      matching slope outside
    """

    family: str = "linear"
    a: float = 0.0
    b: float = 0.0
    M: float = 1.0

    def __post_init__(self):
        if self.family not in G_FAMILIES:
            raise ConfigurationError(f"unknown g family {self.family!r}; choose from {G_FAMILIES}")
        if self.family == "clamped_logistic" and not self.M > 0:
            raise ConfigurationError("clamped_logistic needs M > 0")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "linear":
            return self.a * s + self.b
        if self.family == "tanh_scale":
            return np.tanh(self.a * s)
        M = self.M
        inner = s * (1.0 - s)
        hi = M * (1 - M) + (1 - 2 * M) * (s - M)
        lo = -M * (1 + M) + (1 + 2 * M) * (s + M)
        return np.where(s > M, hi, np.where(s < -M, lo, inner))

    @property
    def lipschitz_constant(self) -> float:
        if self.family in ("linear", "tanh_scale"):
            return abs(self.a)
        return 1.0 + 2.0 * self.M

    @property
    def g0(self) -> float:
        return float(self(0.0))


@dataclass(frozen=True)
class AveragingSpec:
    """Ball radius, averaging mode and the denominator floor C0 (None: 5% of |B_delta|)."""

    delta: float = 0.1
    mode: str = "perforated"
    denominator_floor: Optional[float] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown averaging mode {self.mode!r}; choose from {MODES}")
        if not self.delta > 0:
            raise ConfigurationError("delta must be positive")

    def floor(self, grid: Grid) -> float:
        if self.denominator_floor is not None:
            return float(self.denominator_floor)
        return default_coverage_floor(grid, self.delta)


def ball_stencil(grid: Grid, delta: float) -> KernelStencil:
    """Unnormalised indicator of B_delta(0): weight 1 per offset with |offset| < delta."""
    if delta < 2 * max(grid.h):
        raise ConfigurationError(
            f"delta = {delta:g} must span at least 2 cells ({2 * max(grid.h):g})")
    rc = tuple(int(math.ceil(delta / h)) for h in grid.h)
    axes = [np.arange(-r, r + 1) * h for r, h in zip(rc, grid.h)]
    offs = np.meshgrid(*axes, indexing="ij")
    w = (sum(o ** 2 for o in offs) < delta ** 2).astype(float)
    return KernelStencil(grid, float(delta), w, "ball")


def _denominator(ball: KernelStencil, weight: np.ndarray, omega_mask, floor: float,
                 cell_volume: float) -> np.ndarray:
    den = convolve_array(ball, weight)
    meas = np.where(omega_mask, den * cell_volume, np.inf)
    idx = np.unravel_index(int(np.argmin(meas)), den.shape)
    if meas[idx] < floor:
        raise CoverageError(
            f"averaging denominator {meas[idx]:.3e} at grid index {idx} is below the "
            f"floor C0 = {floor:.3e}", float(meas[idx]), idx)
    return den


def average_m(u: MaskedField, weight_field: MaskedField, spec: AveragingSpec,
              omega: Optional[MaskedField] = None) -> MaskedField:
    """m(x) = (1_B * u)(x) / (1_B * weight)(x) on Omega (exterior 0 for both).

    perforated mode: ``weight_field`` is chi_eps and u is first multiplied by it.
    density mode: ``weight_field`` is X.
    """
    if spec.mode == "local":
        raise ConfigurationError("average_m is undefined in local mode")
    grid = u.grid
    omega_mask = weight_field.mask if omega is None else omega.mask
    ball = ball_stencil(grid, spec.delta)
    den = _denominator(ball, weight_field.values, omega_mask, spec.floor(grid), grid.cell_volume)
    vals = u.values * weight_field.values if spec.mode == "perforated" else u.values
    num = convolve_array(ball, vals)
    m = np.where(omega_mask, num / np.where(omega_mask, den, 1.0), 0.0)
    return MaskedField(grid, m, omega_mask)


class Reaction:
    """Reaction F(u) on raw arrays, with the ball denominator computed once.

    The result is zero off Omega.
    """

    def __init__(self, grid: Grid, g: GSpec, spec: AveragingSpec, omega: MaskedField,
                 density: Optional[MaskedField] = None, chi_eps: Optional[MaskedField] = None,
                 density_floor: float = 1e-3):
        self.grid = grid
        self.g = g
        self.spec = spec
        self.omega = omega.mask
        self.mode = spec.mode
        if self.mode == "perforated":
            if chi_eps is None:
                raise ConfigurationError("perforated averaging needs chi_eps")
            self.weight = chi_eps.values
        elif self.mode == "density":
            if density is None:
                raise ConfigurationError("density averaging needs X")
            self.weight = None
        if self.mode in ("perforated", "density"):
            self.ball = ball_stencil(grid, spec.delta)
            weight = chi_eps.values if self.mode == "perforated" else density.values
            self.C0 = spec.floor(grid)
            self.den = _denominator(self.ball, weight, self.omega, self.C0, grid.cell_volume)
            self._inv_den = np.where(self.omega, 1.0 / np.where(self.omega, self.den, 1.0), 0.0)
            self.min_denominator = float(self.den[self.omega].min() * grid.cell_volume)
        else:
            if density is None:
                raise ConfigurationError("local reaction needs X")
            xmin = float(density.values[self.omega].min())
            if xmin < density_floor:
                raise ConfigurationError(f"local reaction needs X >= {density_floor:g}, min is {xmin:.3e}")
            self._inv_x = np.where(self.omega, 1.0 / np.where(self.omega, density.values, 1.0), 0.0)
            self.x_min = xmin
            self.x_max = float(density.values[self.omega].max())

    def average(self, u: np.ndarray) -> np.ndarray:
        if self.mode == "local":
            return u * self._inv_x
        vals = u * self.weight if self.mode == "perforated" else u
        return convolve_array(self.ball, vals) * self._inv_den

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.where(self.omega, self.g(self.average(u)), 0.0)

    @property
    def lipschitz_l2(self) -> float:
        """An L2 -> L2 Lipschitz bound for u -> F(u).

        Ball modes: L_g |B_delta| / C0. Local mode: L_g / min X.
        """
        Lg = self.g.lipschitz_constant
        if self.mode == "local":
            return Lg / self.x_min
        return Lg * self.ball.measure / self.C0


def reaction_F(u: MaskedField, spec: AveragingSpec, g: GSpec, density: Optional[MaskedField] = None,
               chi_eps: Optional[MaskedField] = None, omega: Optional[MaskedField] = None) -> MaskedField:
    """F(u) = g(m(x, u)) on Omega, zero elsewhere."""
    if omega is None:
        omega = density if density is not None else chi_eps
    R = Reaction(u.grid, g, spec, omega, density=density, chi_eps=chi_eps)
    return MaskedField(u.grid, R(u.values), omega.mask)


# --------------------------------------------------------------------------
# derivative of a ball integral


def _ball_integral(u: Callable, x: np.ndarray, R: float, n_radial: int, n_angle: int) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(n_radial)
    if x.size == 1:
        y = x[0] + R * nodes
        return float(R * np.sum(weights * u(y)))
    r = 0.5 * R * (nodes + 1.0)
    wr = 0.5 * R * weights
    theta = 2 * np.pi * np.arange(n_angle) / n_angle
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    vals = u(x[0] + rr * np.cos(tt), x[1] + rr * np.sin(tt))
    return float(np.sum(wr[:, None] * rr * vals) * (2 * np.pi / n_angle))


def appendix_gradient_check(u: Callable, x, R: float, direction=None, n_boundary: int = 512,
                            n_radial: int = 48, fd_step: Optional[float] = None,
                            grid: Optional[Grid] = None):
    """Compare d/dv of Phi(x) = int_{B_R(x)} u with the boundary flux int u (v.N) dS.

    ``u`` takes one coordinate array per axis. Returns ``(lhs, rhs, rel_err)``
    where lhs is a central finite difference of the ball integral and rhs the
    boundary quadrature (equal-angle samples in 2D, the two endpoints in 1D).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = x.size
    if dim not in (1, 2):
        raise ConfigurationError("gradient check supports 1D and 2D")
    if n_boundary < 256:
        raise ConfigurationError("use at least 256 boundary samples")
    if not R > 0 or (grid is not None and R < 2 * max(grid.h)):
        raise ConfigurationError(f"radius {R:g} is too small for the grid")
    v = np.zeros(dim) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        v[0] = 1.0
    s = 1e-3 * R if fd_step is None else fd_step
    n_angle = n_boundary
    phi_p = _ball_integral(u, x + s * v, R, n_radial, n_angle)
    phi_m = _ball_integral(u, x - s * v, R, n_radial, n_angle)
    lhs = (phi_p - phi_m) / (2 * s)
    if dim == 1:
        rhs = float(u(np.array([x[0] + R]))[0] * v[0] - u(np.array([x[0] - R]))[0] * v[0])
    else:
        theta = 2 * np.pi * np.arange(n_boundary) / n_boundary
        nx, ny = np.cos(theta), np.sin(theta)
        vals = u(x[0] + R * nx, x[1] + R * ny)
        rhs = float(np.sum(vals * (v[0] * nx + v[1] * ny)) * R * 2 * np.pi / n_boundary)
    # flux scale int |u| dS: below roundoff of it both sides count as zero
    if dim == 1:
        flux = float(abs(u(np.array([x[0] + R]))[0]) + abs(u(np.array([x[0] - R]))[0]))
    else:
        flux = float(np.sum(np.abs(vals)) * R * 2 * np.pi / n_boundary)
    scale = max(abs(lhs), abs(rhs))
    if scale <= 1e-12 * flux:
        return lhs, rhs, 0.0
    return lhs, rhs, abs(lhs - rhs) / scale
