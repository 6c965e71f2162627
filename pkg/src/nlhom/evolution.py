"""Time integration of the perforated problems and their limits.

Every equation is brought to the unified pointwise form

    u_t = a(x) (J * u)(x) - h(x) u(x) + a(x) F(u)(x)     on the support,
    u   = 0                                               off the support,

with (a, h, F) chosen per equation:

==================  =========  ======  ===========  ======================
equation            support    a       h            F
==================  =========  ======  ===========  ======================
eps (dirichlet)     Omega_eps  1       1            g o m_{Omega_eps}
eps (neumann)       Omega_eps  1       h_eps        g o m_{Omega_eps}
limit_dirichlet     Omega      X       1            g o m_X
limit_neumann       Omega      X       h_0          g o m_X
limit_delta_zero    Omega      X       1 or h_0     g(u / X)
==================  =========  ======  ===========  ======================

In the Neumann perforated problem the state is stored as its zero extension
over the holes, so ``J * u`` integrates over R^N minus the holes exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, IntegrationError
from .geometry import Domain, Grid, MaskedField, is_constant_on
from .kernel import (KernelStencil, coefficient_h0, coefficient_h_eps, convolve_array)
from .nonlinearity import AveragingSpec, GSpec, Reaction

EQUATIONS = ("eps_problem", "limit_dirichlet", "limit_neumann", "limit_delta_zero")
SCHEMES = ("etd1", "rk4", "euler")
PRESETS = ("gaussian_bump", "constant", "sine_product")


@dataclass(frozen=True)
class InitialData:
    """Named initial-data preset, evaluated on the grid and cut to the support later."""

    preset: str = "gaussian_bump"
    value: float = 1.0        # constant level / bump amplitude
    width: float = 0.1        # gaussian standard deviation
    center: Optional[tuple] = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown u0 preset {self.preset!r}; choose from {PRESETS}")

    def evaluate(self, grid: Grid, domain: Domain) -> np.ndarray:
        X = grid.coords()
        if self.preset == "constant":
            return np.full(grid.shape, float(self.value))
        if self.preset == "gaussian_bump":
            c = domain.resolved_center(grid) if self.center is None else self.center
            r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
            return self.value * np.exp(-0.5 * r2 / self.width ** 2)
        out = np.full(grid.shape, float(self.value))
        for x, (lo, hi) in zip(X, domain.bounding_box(grid)):
            out = out * np.sin(np.pi * np.clip((x - lo) / (hi - lo), 0.0, 1.0))
        return out


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One evolution problem: geometry, kernel, equation, reaction and time grid."""

    grid: Grid
    domain: Domain
    omega: MaskedField
    chi_eps: MaskedField
    density: MaskedField
    kernel: KernelStencil
    equation: str = "eps_problem"
    bc: str = "dirichlet"
    g: GSpec = field(default_factory=GSpec)
    averaging: AveragingSpec = field(default_factory=AveragingSpec)
    u0: InitialData = field(default_factory=InitialData)
    T: float = 1.0
    dt: float = 0.01
    scheme: str = "etd1"
    sample_stride: int = 10
    density_floor: float = 1e-3

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigurationError(f"unknown equation {self.equation!r}; choose from {EQUATIONS}")
        if self.bc not in ("dirichlet", "neumann"):
            raise ConfigurationError(f"unknown boundary condition {self.bc!r}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")
        if self.sample_stride < 1:
            raise ConfigurationError("sample_stride must be >= 1")

    @property
    def effective_bc(self) -> str:
        if self.equation == "limit_dirichlet":
            return "dirichlet"
        if self.equation == "limit_neumann":
            return "neumann"
        return self.bc

    @property
    def reaction_mode(self) -> str:
        return {"eps_problem": "perforated", "limit_dirichlet": "density",
                "limit_neumann": "density", "limit_delta_zero": "local"}[self.equation]

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(eq=False)
class System:
    """Resolved pointwise operator u -> a (J * u) - h u + a F(u) on ``support``."""

    grid: Grid
    kernel: KernelStencil
    support: np.ndarray
    a: np.ndarray
    h: np.ndarray
    reaction: Optional[Reaction] = None
    u_init: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None

    def __post_init__(self):
        shape = self.grid.shape
        self.support = np.asarray(self.support, dtype=bool)
        self.a = np.where(self.support, np.broadcast_to(np.asarray(self.a, float), shape), 0.0)
        self.h = np.where(self.support, np.broadcast_to(np.asarray(self.h, float), shape), 0.0)
        if self.omega is None:
            self.omega = self.support

    def conv(self, u: np.ndarray) -> np.ndarray:
        return convolve_array(self.kernel, u) * self.grid.cell_volume

    def forcing(self, u: np.ndarray) -> np.ndarray:
        """The non-decay part a (J * u) + a F(u)."""
        n = self.conv(u)
        if self.reaction is not None:
            n = n + self.reaction(u)
        return np.where(self.support, self.a * n, 0.0)

    def rhs(self, u: np.ndarray) -> np.ndarray:
        return self.forcing(u) - self.h * u

    def check_support(self, u: np.ndarray):
        if np.any(u[~self.support] != 0.0):
            raise ConfigurationError("state is nonzero outside the support of the problem")

    @property
    def lipschitz_forcing(self) -> float:
        """L2 Lipschitz constant of u -> a F(u)."""
        if self.reaction is None:
            return 0.0
        return float(np.abs(self.a).max()) * self.reaction.lipschitz_l2


def build_system(spec: ProblemSpec) -> System:
    """Resolve (support, a, h, F, initial state) for ``spec``."""
    grid, J = spec.grid, spec.kernel
    omega, chi, X = spec.omega, spec.chi_eps, spec.density
    u0 = spec.u0.evaluate(grid, spec.domain)
    if spec.equation == "eps_problem":
        support = chi.mask
        a = 1.0
        h = coefficient_h_eps(J, omega, chi, spec.bc).values
        avg = replace(spec.averaging, mode="perforated")
        reaction = Reaction(grid, spec.g, avg, omega, chi_eps=chi)
        init = np.where(support, u0, 0.0)
    else:
        support = omega.mask
        a = X.values
        if spec.effective_bc == "dirichlet":
            h = 1.0
        else:
            h = coefficient_h0(J, omega, X).values
        avg = replace(spec.averaging, mode=spec.reaction_mode)
        reaction = Reaction(grid, spec.g, avg, omega, density=X, density_floor=spec.density_floor)
        init = np.where(support, X.values * u0, 0.0)
    return System(grid, J, support, a, h, reaction, init, omega.mask)


def rhs(spec_or_system, u) -> MaskedField:
    """Right-hand side of the evolution equation as a field on the support."""
    system = spec_or_system if isinstance(spec_or_system, System) else build_system(spec_or_system)
    vals = u.values if isinstance(u, MaskedField) else np.asarray(u, dtype=float)
    system.check_support(vals)
    return MaskedField(system.grid, system.rhs(vals), system.support)


# --------------------------------------------------------------------------
# one-step schemes


def phi1(z: np.ndarray) -> np.ndarray:
    """(1 - exp(-z)) / z with the series branch near 0 (phi1(0) = 1)."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z / 2.0 + z * z / 6.0, -np.expm1(-zs) / zs)


class Stepper:
    """Fixed-step integrator for a resolved system."""

    def __init__(self, system: System, dt: float, scheme: str = "etd1"):
        if not dt > 0:
            raise ConfigurationError("dt must be positive")
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}")
        self.system = system
        self.dt = float(dt)
        self.scheme = scheme
        if scheme == "etd1":
            hdt = system.h * self.dt
            self._decay = np.exp(-hdt)
            self._gain = phi1(hdt) * self.dt

    def __call__(self, u: np.ndarray) -> np.ndarray:
        s, dt = self.system, self.dt
        if self.scheme == "etd1":
            out = self._decay * u + self._gain * s.forcing(u)
        elif self.scheme == "euler":
            out = u + dt * s.rhs(u)
        else:
            k1 = s.rhs(u)
            k2 = s.rhs(u + 0.5 * dt * k1)
            k3 = s.rhs(u + 0.5 * dt * k2)
            k4 = s.rhs(u + dt * k3)
            out = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return np.where(s.support, out, 0.0)


def step_etd1(spec_or_system, u, dt: float) -> MaskedField:
    """One exponential Euler step of the variation-of-constants formula."""
    system = spec_or_system if isinstance(spec_or_system, System) else build_system(spec_or_system)
    vals = u.values if isinstance(u, MaskedField) else np.asarray(u, dtype=float)
    return MaskedField(system.grid, Stepper(system, dt, "etd1")(vals), system.support)


def stability_limit(system: System) -> float:
    hmax = float(system.h.max()) if system.h.size else 0.0
    return math.inf if hmax <= 0 else 1.0 / (2.0 * hmax)


@dataclass
class Trajectory:
    """Sampled solution: ``states[k]`` is the field at ``times[k]``."""

    grid: Grid
    times: list
    states: list
    norm_log: np.ndarray       # L2 norm after every step, entry 0 is t = 0
    step_times: np.ndarray

    def at(self, t: float, tol: float = 1e-9) -> MaskedField:
        for ti, s in zip(self.times, self.states):
            if abs(ti - t) <= tol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no sample at t = {t}")

    @property
    def final(self) -> MaskedField:
        return self.states[-1]


def _sample_steps(n_steps: int, dt: float, stride: int, sample_times) -> set:
    steps = set(range(0, n_steps + 1, stride)) | {n_steps}
    for t in sample_times or ():
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, t) or not 0 <= k <= n_steps:
            raise ConfigurationError(f"sample time {t} is not a step of dt = {dt} within [0, T]")
        steps.add(k)
    return steps


def integrate_system(system: System, T: float, dt: float, scheme: str = "etd1",
                     sample_stride: int = 10, sample_times: Optional[Sequence[float]] = None,
                     u_init: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate ``system`` on [0, T] with fixed steps, masking after every step."""
    if scheme in ("rk4", "euler") and dt > stability_limit(system) * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {dt:g} exceeds the explicit stability bound 1/(2 max h) = {stability_limit(system):g}")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"T = {T} is not an integer multiple of dt = {dt}")
    u = np.array(system.u_init if u_init is None else u_init, dtype=float)
    u = np.where(system.support, u, 0.0)
    keep = _sample_steps(n_steps, dt, sample_stride, sample_times)
    stepper = Stepper(system, dt, scheme)
    cv = system.grid.cell_volume
    norms = np.empty(n_steps + 1)
    norms[0] = math.sqrt(float((u * u).sum()) * cv)
    times, states = [0.0], [MaskedField(system.grid, u, system.support)]
    for k in range(1, n_steps + 1):
        u = stepper(u)
        if not np.isfinite(u).all():
            raise IntegrationError(f"non-finite state at step {k} (t = {k * dt:g})", step=k)
        norms[k] = math.sqrt(float((u * u).sum()) * cv)
        if k in keep:
            times.append(k * dt)
            states.append(MaskedField(system.grid, u, system.support))
    return Trajectory(system.grid, times, states, norms, np.arange(n_steps + 1) * dt)


def integrate(spec: ProblemSpec, sample_times: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate ``spec`` on [0, T]."""
    system = build_system(spec)
    return integrate_system(system, spec.T, spec.dt, spec.scheme, spec.sample_stride, sample_times)


# --------------------------------------------------------------------------
# a priori bound


@dataclass
class BoundReport:
    times: list
    norms: list
    bounds: list
    margins: list
    worst_margin: float
    violations: int
    lambda1: float
    lambda1_source: str       # "power_iteration" or "gershgorin" fallback
    lipschitz_C: float
    eta: float

    def to_dict(self) -> dict:
        return {
            "worst_margin": self.worst_margin, "violations": self.violations,
            "lambda1": self.lambda1, "lambda1_source": self.lambda1_source,
            "lipschitz_C": self.lipschitz_C, "eta": self.eta,
            "times": list(self.times), "norms": list(self.norms),
            "bounds": list(self.bounds), "margins": list(self.margins),
        }


def norm_bound(t, u0_norm: float, lam1: float, C: float, omega_measure: float,
               g0: float, eta: float = 1.0):
    """e^{2(eta^2 - lambda1 + C / eta^2) t} (||u0|| + |Omega| |g(0)| t)."""
    t = np.asarray(t, dtype=float)
    rate = 2.0 * (eta ** 2 - lam1 + C / eta ** 2)
    pref = u0_norm + omega_measure * abs(g0) * t
    with np.errstate(over="ignore"):
        growth = np.exp(rate * t)
    # a zero prefactor bounds the norm by zero even when the exponential overflows
    with np.errstate(invalid="ignore"):
        return np.where(pref == 0.0, 0.0, growth * pref)


def bound_monitor(traj: Trajectory, spec_or_system, eta: float = 1.0,
                  lambda1: Optional[float] = None, eigen_tol: float = 1e-8,
                  eigen_max_iter: int = 10000) -> BoundReport:
    """Check the sampled L2 norms against the a priori exponential bound.

    lambda1 is computed for the symmetric part of u -> h u - a (J * u) on the
    support; if the power iteration does not converge within its budget the
    Gershgorin lower bound is used instead. C is the squared L2 Lipschitz
    constant of the forcing u -> a F(u). Violations are counted, not raised.
    """
    from . import spectral

    system = spec_or_system if isinstance(spec_or_system, System) else build_system(spec_or_system)
    g0 = system.reaction.g.g0 if system.reaction is not None else 0.0
    source = "given"
    if lambda1 is None:
        a = None if np.all(system.a[system.support] == 1.0) else system.a
        try:
            res = spectral.lambda1(system.kernel, system.h, system.support, tol=eigen_tol,
                                   max_iter=eigen_max_iter, a=a)
            lambda1, source = res.lambda1, "power_iteration"
        except spectral.ConvergenceError:
            lambda1 = spectral.gershgorin_lower_bound(system.kernel, system.h, system.support, a=a)
            source = "gershgorin"
    C = system.lipschitz_forcing ** 2
    omega_measure = float(system.omega.sum() * system.grid.cell_volume)
    u0_norm = traj.states[0].l2_norm()
    times = np.asarray(traj.times)
    norms = np.array([s.l2_norm() for s in traj.states])
    bounds = norm_bound(times, u0_norm, lambda1, C, omega_measure, g0, eta)
    margins = bounds - norms
    # relative slack for rounding in the norm computation
    viol = int(np.sum(margins < -1e-12 * np.maximum(bounds, 1.0)))
    # at t = 0 the margin is zero by construction
    later = margins[times > 0]
    worst = float(later.min()) if later.size else float(margins.min())
    return BoundReport(times.tolist(), norms.tolist(), bounds.tolist(), margins.tolist(),
                       worst, viol, float(lambda1), source, float(C), float(eta))


# --------------------------------------------------------------------------
# time rescaling for constant X


def rescaled_system(system: System, density: MaskedField) -> System:
    """w(x, tau) = u(x, tau / X): same kernel, a = 1, h = h / X, same F."""
    X = density.values[system.support]
    if not is_constant_on(density, system.support, atol=0.0):
        raise ConfigurationError("time rescaling is only a grid trajectory for constant X")
    c = float(X[0])
    return System(system.grid, system.kernel, system.support, 1.0, system.h / c,
                  system.reaction, system.u_init, system.omega)


def rescaled_equivalence_check(spec_limit: ProblemSpec,
                               samples: Optional[Sequence[float]] = None) -> float:
    """Max L-infinity deviation between u(., t) and w(., X t) at sample times.

    Only constant X is supported: then w solves w_tau = J*w - (h/X) w + F(w)
    and is integrated with step X dt so sample instants line up.
    """
    if spec_limit.equation == "eps_problem":
        raise ConfigurationError("rescaling applies to the limit problems only")
    system = build_system(spec_limit)
    wsys = rescaled_system(system, spec_limit.density)
    c = float(spec_limit.density.values[system.support][0])
    samples = list(samples) if samples is not None else None
    traj_u = integrate_system(system, spec_limit.T, spec_limit.dt, spec_limit.scheme,
                              spec_limit.sample_stride, samples)
    traj_w = integrate_system(wsys, c * spec_limit.T, c * spec_limit.dt, spec_limit.scheme,
                              spec_limit.sample_stride,
                              None if samples is None else [c * t for t in samples])
    dev = 0.0
    for t, s in zip(traj_u.times, traj_u.states):
        w = traj_w.at(c * t)
        dev = max(dev, float(np.abs(s.values - w.values).max()))
    return dev
