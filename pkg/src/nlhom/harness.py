"""epsilon- and delta-sweeps against the limit problems, with weak-error metrics."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, build_problem, build_setup
from .errors import ConfigurationError
from .evolution import ProblemSpec, Trajectory, bound_monitor, build_system, integrate_system
from .geometry import Domain, Grid, MaskedField, distance_inside, is_constant_on
from .kernel import convolve_array
from .nonlinearity import ball_stencil


# --------------------------------------------------------------------------
# weak-error metric


def test_functions(grid: Grid, domain: Domain) -> dict:
    """The fixed test-function dictionary: 1, x1, x2, x1^2 and five gaussian probes.

    Probes sit at the domain centre and at the four points (+-0.4 w, +-0.4 w)
    around it (w the domain half width); their width is w / 5. In 1D the
    probes are spread along the line and x2 is absent.
    """
    X = grid.coords()
    out = {"one": np.ones(grid.shape), "x1": X[0].copy()}
    if grid.dim == 2:
        out["x2"] = X[1].copy()
    out["x1^2"] = X[0] ** 2
    c = np.array(domain.resolved_center(grid))
    w = domain.half_width
    if grid.dim == 2:
        shifts = [(0, 0), (-0.4, -0.4), (0.4, -0.4), (-0.4, 0.4), (0.4, 0.4)]
    else:
        shifts = [(0,), (-0.6,), (-0.3,), (0.3,), (0.6,)]
    s = w / 5.0
    for k, sh in enumerate(shifts):
        p = c + w * np.array(sh)
        r2 = sum((x - pi) ** 2 for x, pi in zip(X, p))
        out[f"gauss{k}"] = np.exp(-0.5 * r2 / s ** 2)
    return out


def weak_error(u: MaskedField, v: MaskedField, phi, omega=None) -> float:
    """|sum phi (u - v) cv| over Omega (the whole grid when ``omega`` is None)."""
    if u.grid != v.grid:
        raise ConfigurationError("weak_error: fields live on different grids")
    phi = np.broadcast_to(np.asarray(phi, dtype=float), u.grid.shape)
    diff = phi * (u.values - v.values)
    if omega is not None:
        m = omega.mask if isinstance(omega, MaskedField) else np.asarray(omega, bool)
        diff = np.where(m, diff, 0.0)
    return float(abs(diff.sum()) * u.grid.cell_volume)


def l2_distance(u: MaskedField, v: MaskedField) -> float:
    return float(math.sqrt(((u.values - v.values) ** 2).sum() * u.grid.cell_volume))


# --------------------------------------------------------------------------
# rho-form of the periodic homogenized equations


def rho_form_rhs(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    """rho u_t for constant X, rho = 1 / X, with the reaction g(rho m_B(u)).

    Dirichlet: J*u - u + (1 - rho) u + g(rho m_B u)
    Neumann:   J*u - u - (rho - 1) E u + g(rho m_B u),  E = int_{R^N \\ Omega} J
    m_B is the plain ball mean |B|^-1 int_{B_delta(x)} u.
    """
    grid, J = spec.grid, spec.kernel
    om = spec.omega.mask
    if not is_constant_on(spec.density, om):
        raise ConfigurationError("the rho-form needs a constant X")
    rho = 1.0 / float(spec.density.values[om][0])
    cv = grid.cell_volume
    Ju = convolve_array(J, u) * cv
    ball = ball_stencil(grid, spec.averaging.delta)
    mB = convolve_array(ball, u) / ball.weights.sum()
    F = spec.g(rho * mB)
    if spec.effective_bc == "dirichlet":
        out = Ju - u + (1.0 - rho) * u + F
    else:
        E = 1.0 - convolve_array(J, spec.omega.values) * cv
        out = Ju - u - (rho - 1.0) * E * u + F
    return np.where(om, out, 0.0)


def rho_residual(spec: ProblemSpec, states: Sequence[MaskedField]) -> float:
    """max |rho * (unified rhs) - (rho-form rhs)| over points whose delta-ball lies in Omega."""
    system = build_system(spec)
    rho = 1.0 / float(spec.density.values[spec.omega.mask][0])
    inner = distance_inside(spec.grid, spec.omega) > spec.averaging.delta + max(spec.grid.h)
    if not inner.any():
        raise ConfigurationError("no point of Omega is a delta-ball away from its boundary")
    worst = 0.0
    for s in states:
        diff = rho * system.rhs(s.values) - rho_form_rhs(spec, s.values)
        worst = max(worst, float(np.abs(diff[inner]).max()))
    return worst


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepConfig:
    """A sweep over eps or delta around the problem described by ``config``."""

    config: RunConfig
    sweep_kind: str = "eps"
    values: tuple = (0.125, 0.0625, 0.03125)
    sample_times: Optional[tuple] = None
    eta: float = 1.0
    bound: bool = True
    eigen_tol: float = 1e-8
    eigen_max_iter: int = 2000
    threads: Optional[int] = None

    def __post_init__(self):
        if self.sweep_kind not in ("eps", "delta"):
            raise ConfigurationError(f"unknown sweep kind {self.sweep_kind!r}")
        vals = [float(v) for v in self.values]
        if len(vals) < 1 or any(b >= a for a, b in zip(vals, vals[1:])) or min(vals) <= 0:
            raise ConfigurationError("sweep values must be positive and strictly decreasing")
        self.values = tuple(vals)
        T = self.config.problem.T
        if self.sample_times is None:
            dt = self.config.problem.dt
            n = int(round(T / dt))
            self.sample_times = tuple(sorted({round(k * n / 4) * dt for k in range(1, 5)}))
        else:
            self.sample_times = tuple(float(t) for t in self.sample_times)
        if any(not 0 < t <= T * (1 + 1e-12) for t in self.sample_times):
            raise ConfigurationError("sample times must lie in (0, T]")

    @classmethod
    def from_run_config(cls, cfg: RunConfig, threads: Optional[int] = None) -> "SweepConfig":
        S = cfg.sweep
        return cls(cfg, S.sweep_kind, tuple(S.values),
                   None if S.sample_times is None else tuple(S.sample_times),
                   S.eta, S.bound, S.eigen_tol, S.eigen_max_iter, threads)


@dataclass
class SweepReport:
    config_hash: str
    sweep_kind: str
    values: list
    sample_times: list
    test_functions: list
    records: list                   # one dict per (value, test function, sample time)
    summary: list                   # one dict per value
    reference: dict                 # the limit run
    metadata: dict = field(default_factory=dict)

    def max_weak_errors(self) -> list:
        return [s["max_weak_error"] for s in self.summary]

    def l2_at_T(self) -> list:
        return [s["l2_distance_T"] for s in self.summary]

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash, "sweep_kind": self.sweep_kind,
            "values": list(self.values), "sample_times": list(self.sample_times),
            "test_functions": list(self.test_functions), "summary": self.summary,
            "reference": self.reference, "records": self.records, "metadata": self.metadata,
        }


def thread_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("NLHOM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"NLHOM_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


@dataclass
class _Member:
    value: float
    spec: ProblemSpec
    traj: Optional[Trajectory] = None
    wall_ms: float = 0.0
    bound: Optional[dict] = None
    error: Optional[str] = None


def _run_member(m: _Member, samples, sweep: SweepConfig) -> _Member:
    t0 = time.perf_counter()
    try:
        system = build_system(m.spec)
        m.traj = integrate_system(system, m.spec.T, m.spec.dt, m.spec.scheme,
                                  m.spec.sample_stride, samples)
        if sweep.bound:
            rep = bound_monitor(m.traj, system, eta=sweep.eta, eigen_tol=sweep.eigen_tol,
                                eigen_max_iter=sweep.eigen_max_iter)
            m.bound = rep.to_dict()
    except Exception as exc:  # reported with the member's parameters below
        m.error = f"{type(exc).__name__}: {exc}"
    m.wall_ms = (time.perf_counter() - t0) * 1e3
    return m


def _members(sweep: SweepConfig):
    cfg = sweep.config
    bc = cfg.problem.bc
    limit_eq = "limit_dirichlet" if bc == "dirichlet" else "limit_neumann"
    base_setup = build_setup(cfg)
    if sweep.sweep_kind == "eps":
        if cfg.perforation.kind not in ("none", "periodic_balls"):
            raise ConfigurationError("the eps sweep needs a periodic (or empty) perforation family")
        if cfg.perforation.density_mode != "analytic":
            raise ConfigurationError("the eps sweep compares against the common analytic X")
        members = []
        for eps in sweep.values:
            setup = build_setup(cfg, eps=eps)
            members.append(_Member(eps, build_problem(cfg, setup, equation="eps_problem")))
        ref = build_problem(cfg, base_setup, equation=limit_eq)
    else:
        members = []
        for d in sweep.values:
            avg = replace(base_setup.averaging, delta=d)
            members.append(_Member(d, build_problem(cfg, base_setup, equation=limit_eq, averaging=avg)))
        ref = build_problem(cfg, base_setup, equation="limit_delta_zero")
    return members, ref, base_setup


def run_sweep(sweep: SweepConfig) -> SweepReport:
    members, ref_spec, setup = _members(sweep)
    samples = list(sweep.sample_times)
    ref = _Member(0.0, ref_spec)
    todo = members + [ref]
    with ThreadPoolExecutor(max_workers=min(thread_count(sweep.threads), len(todo))) as pool:
        done = list(pool.map(lambda m: _run_member(m, samples, sweep), todo))
    for m in done:
        if m.error is not None:
            label = "reference" if m is ref else f"{sweep.sweep_kind} = {m.value:g}"
            raise RuntimeError(f"sweep member {label} ({m.spec.equation}, bc={m.spec.bc}) "
                               f"failed: {m.error}")

    grid = setup.grid
    phis = test_functions(grid, setup.domain)
    omega = setup.omega.mask
    records, summary = [], []
    for m in members:
        worst, worst_key = 0.0, None
        margin = m.bound["worst_margin"] if m.bound else float("nan")
        for t in samples:
            u = m.traj.at(t)
            if sweep.sweep_kind == "eps":
                # zero extension over the holes; the state already vanishes there
                u = MaskedField(grid, np.where(m.spec.chi_eps.mask, u.values, 0.0), omega)
            v = ref.traj.at(t)
            dist = l2_distance(u, v)
            for name, phi in phis.items():
                e = weak_error(u, v, phi, omega)
                records.append({"sweep_value": m.value, "test_function": name, "sample_time": t,
                                "weak_error": e, "l2_distance": dist, "bound_margin": margin,
                                "wall_ms": m.wall_ms})
                if e > worst:
                    worst, worst_key = e, (name, t)
        row = {"sweep_value": m.value, "max_weak_error": worst,
               "argmax": None if worst_key is None else {"test_function": worst_key[0],
                                                         "sample_time": worst_key[1]},
               "l2_distance_T": l2_distance(m.traj.final, ref.traj.final),
               "bound": m.bound, "wall_ms": m.wall_ms}
        if sweep.sweep_kind == "delta" and is_constant_on(setup.density, omega):
            row["rho_residual"] = rho_residual(m.spec, m.traj.states)
        summary.append(row)

    cfg = sweep.config
    meta = {
        "grid": grid.describe(),
        "kernel": {"family": setup.kernel.family, "support_radius": setup.kernel.support_radius,
                   "j0": setup.kernel.j0, "mass": setup.kernel.mass},
        "density_mode": cfg.perforation.density_mode,
        "density_note": ("X from the periodic cell fraction" if cfg.perforation.density_mode == "analytic"
                         else "X from a moving average of chi_eps (not prescribed by the model)"),
        "bc": cfg.problem.bc, "scheme": cfg.problem.scheme, "dt": cfg.problem.dt, "T": cfg.problem.T,
        "config": cfg.to_dict(),
    }
    reference = {"equation": ref_spec.equation, "wall_ms": ref.wall_ms, "bound": ref.bound}
    return SweepReport(cfg.hash, sweep.sweep_kind, list(sweep.values), samples, list(phis),
                       records, summary, reference, meta)


def run_eps_sweep(sweep: SweepConfig) -> SweepReport:
    if sweep.sweep_kind != "eps":
        sweep = replace(sweep, sweep_kind="eps")
    return run_sweep(sweep)


def run_delta_sweep(sweep: SweepConfig) -> SweepReport:
    if sweep.sweep_kind != "delta":
        sweep = replace(sweep, sweep_kind="delta")
    return run_sweep(sweep)
