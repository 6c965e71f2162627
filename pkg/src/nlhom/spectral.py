"""First eigenvalue of the linear nonlocal operator.

On fields supported by a mask S the operator is

    A u = h u - J * u          (restricted to S),

symmetric for the cell-volume inner product. Its smallest eigenvalue is the
minimum of the Rayleigh quotient <u, A u> / <u, u>; when h = J * 1_D for an
admissible region D containing S this quotient equals

    1/2 sum_{x,y in D} J(x - y) (u(y) - u(x))^2 cv^2 / sum u^2 cv.

A variable coefficient ``a`` in front of the convolution is handled through
the symmetric part h - (a K + K a) / 2, which has the same quadratic form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError
from .geometry import Grid, MaskedField
from .kernel import KernelStencil, convolve_array

__all__ = ["EigenResult", "lambda1", "rayleigh_quotient", "quadratic_form_direct",
           "quadratic_form_offsets", "gershgorin_lower_bound", "apply_operator",
           "ConvergenceError"]


@dataclass
class EigenResult:
    lambda1: float
    iterations: int
    residual: float
    eigenfield: MaskedField
    shift: float

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "iterations": self.iterations,
                "residual": self.residual, "shift": self.shift}


def _as_array(grid: Grid, f) -> np.ndarray:
    if isinstance(f, MaskedField):
        return f.values
    return np.broadcast_to(np.asarray(f, dtype=float), grid.shape)


def apply_operator(J: KernelStencil, h: np.ndarray, support: np.ndarray, u: np.ndarray,
                   a: Optional[np.ndarray] = None) -> np.ndarray:
    """A u on the support, zero elsewhere (u is assumed zero off the support)."""
    cv = J.grid.cell_volume
    if a is None:
        Ku = convolve_array(J, u) * cv
    else:
        Ku = 0.5 * (a * convolve_array(J, u) + convolve_array(J, a * u)) * cv
    return np.where(support, h * u - Ku, 0.0)


def lambda1(J: KernelStencil, h_field, support_mask, tol: float = 1e-10,
            max_iter: int = 10000, a=None) -> EigenResult:
    """Smallest eigenvalue of A by power iteration on sigma I - A.

    The shift sigma = max h + max(1, max a) bounds the spectrum of A from
    above, so sigma - lambda_1 is the dominant eigenvalue of the shifted
    operator. Stops when the relative change of the estimate is at most
    ``tol`` and the residual ||A v - lambda v|| / ||v|| is at most 10 tol.
    """
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    grid = J.grid
    S = support_mask.mask if isinstance(support_mask, MaskedField) else np.asarray(support_mask, bool)
    if not S.any():
        raise ConfigurationError("support mask is empty")
    h = np.where(S, _as_array(grid, h_field), 0.0)
    av = None if a is None else np.where(S, _as_array(grid, a), 0.0)
    amax = 1.0 if av is None else max(1.0, float(np.abs(av).max()))
    sigma = float(h[S].max()) + amax

    v = np.where(S, 1.0, 0.0)
    v /= math.sqrt(float((v * v).sum()))
    lam_old = math.inf
    res = math.inf
    for it in range(1, max_iter + 1):
        Av = apply_operator(J, h, S, v, av)
        lam = float((v * Av).sum())          # v has unit norm
        res = math.sqrt(float(((Av - lam * v) ** 2).sum()))
        change = abs(lam - lam_old) / max(abs(lam), 1.0)
        if change <= tol and res <= 10 * tol:
            return EigenResult(lam, it, res, MaskedField(grid, v, S), sigma)
        lam_old = lam
        w = sigma * v - Av
        nrm = math.sqrt(float((w * w).sum()))
        if nrm == 0.0:
            break
        v = w / nrm
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res, iterations=max_iter)


def gershgorin_lower_bound(J: KernelStencil, h_field, support_mask, a=None) -> float:
    """min_i [h_i - (a_i (K 1_S)_i + (K a)_i) / 2] over the support, a lower bound for lambda_1.

    Kernel weights are nonnegative, so row i of the symmetric part of the
    convolution sums to that expression.
    """
    grid = J.grid
    S = support_mask.mask if isinstance(support_mask, MaskedField) else np.asarray(support_mask, bool)
    h = _as_array(grid, h_field)
    cv = grid.cell_volume
    one = S.astype(float)
    if a is None:
        row = convolve_array(J, one) * cv
    else:
        av = np.where(S, _as_array(grid, a), 0.0)
        row = 0.5 * (np.abs(av) * convolve_array(J, one) + convolve_array(J, np.abs(av))) * cv
    return float((h - row)[S].min())


def _admissible_h(J: KernelStencil, admissible) -> np.ndarray:
    grid = J.grid
    if admissible is None:
        return np.ones(grid.shape)
    D = admissible.mask if isinstance(admissible, MaskedField) else np.asarray(admissible, bool)
    return convolve_array(J, D.astype(float)) * grid.cell_volume


def rayleigh_quotient(J: KernelStencil, u: MaskedField, admissible=None, h=None) -> float:
    """<u, h u - J * u> / <u, u> for u supported in the admissible region.

    ``h`` defaults to J * 1_D for the admissible mask D; with no mask the
    region is all of R^N and h = 1.
    """
    vals = u.values
    nn = float((vals * vals).sum())
    if nn == 0.0:
        raise ConfigurationError("Rayleigh quotient of the zero field")
    hh = _admissible_h(J, admissible) if h is None else _as_array(J.grid, h)
    cv = J.grid.cell_volume
    Ku = convolve_array(J, vals) * cv
    return float((vals * (hh * vals - Ku)).sum() / nn)


def quadratic_form_direct(J: KernelStencil, u: MaskedField, admissible=None) -> float:
    """1/2 sum_{x,y in D} J(x - y) (u(y) - u(x))^2 cv^2 by explicit loops over point pairs.

    D defaults to the whole grid. Quadratic cost; meant for small grids.
    """
    grid = J.grid
    D = np.ones(grid.shape, bool) if admissible is None else (
        admissible.mask if isinstance(admissible, MaskedField) else np.asarray(admissible, bool))
    pts = np.argwhere(D)
    vals = u.values[D]
    rc = np.array(J.radius_cells)
    total = 0.0
    for i, p in enumerate(pts):
        d = p - pts                       # x - y in index units
        inside = np.all(np.abs(d) <= rc, axis=1)
        idx = tuple((d[inside] + rc).T)
        w = J.weights[idx]
        total += float(np.sum(w * (vals[inside] - vals[i]) ** 2))
    return 0.5 * total * grid.cell_volume ** 2


def quadratic_form_offsets(J: KernelStencil, u: MaskedField, admissible=None) -> float:
    """Same double sum as :func:`quadratic_form_direct`, grouped by stencil offset.

    For each offset k, pairs (x, x + k) with both points in D contribute
    J(k) (u(x + k) - u(x))^2. Linear cost in the grid size.
    """
    grid = J.grid
    D = np.ones(grid.shape, bool) if admissible is None else (
        admissible.mask if isinstance(admissible, MaskedField) else np.asarray(admissible, bool))
    rc = J.radius_cells
    pad = [(r, r) for r in rc]
    up = np.pad(u.values, pad)
    Dp = np.pad(D, pad)
    n = grid.shape
    total = 0.0
    for idx in np.ndindex(*J.weights.shape):
        w = J.weights[idx]
        if w == 0.0:
            continue
        sl = tuple(slice(i, i + m) for i, m in zip(idx, n))
        pair = D & Dp[sl]
        total += w * float(np.sum(np.where(pair, (up[sl] - u.values) ** 2, 0.0)))
    return 0.5 * total * grid.cell_volume ** 2
