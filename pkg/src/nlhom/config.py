"""JSON run configuration: parsing, validation, hashing and problem assembly.

A config is one JSON object with the sections grid, domain, perforation,
kernel, g, averaging, problem, sweep and output. Every section is optional
and falls back to the defaults below; unknown sections or keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .geometry import (Domain, PerforationSpec, build_grid, domain_mask_from,
                       effective_density, perforate)
from .kernel import build_kernel
from .nonlinearity import AveragingSpec, GSpec


@dataclass
class GridSection:
    dim: int = 2
    n_per_dim: object = 128
    box: object = (0.0, 1.0)


@dataclass
class DomainSection:
    shape: str = "square"
    center: Optional[list] = None
    half_width: float = 0.25


@dataclass
class PerforationSection:
    kind: str = "periodic_balls"
    eps: Optional[float] = 0.0625
    radius_ratio: Optional[float] = 0.5
    count: Optional[int] = None
    radius: Optional[float] = None
    rng_seed: Optional[int] = None
    density_mode: str = "analytic"
    window: Optional[float] = None
    density_floor: float = 1e-3


@dataclass
class KernelSection:
    family: str = "bump"
    support_radius: float = 0.1
    sigma: Optional[float] = None


@dataclass
class GSection:
    family: str = "tanh_scale"
    a: float = 1.0
    b: float = 0.0
    M: float = 1.0


@dataclass
class AveragingSection:
    delta: float = 0.1
    mode: str = "perforated"
    denominator_floor: Optional[float] = None


@dataclass
class InitialSection:
    preset: str = "gaussian_bump"
    value: float = 1.0
    width: float = 0.1
    center: Optional[list] = None


@dataclass
class ProblemSection:
    equation: str = "eps_problem"
    bc: str = "dirichlet"
    u0: InitialSection = field(default_factory=InitialSection)
    T: float = 1.0
    dt: float = 0.01
    scheme: str = "etd1"
    sample_stride: int = 10


@dataclass
class SweepSection:
    sweep_kind: str = "eps"
    values: list = field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    sample_times: Optional[list] = None
    eta: float = 1.0
    bound: bool = True
    eigen_tol: float = 1e-8
    eigen_max_iter: int = 2000


@dataclass
class OutputSection:
    dir: str = "results"
    timing: bool = False
    export_fields: bool = True


SECTIONS = {
    "grid": GridSection, "domain": DomainSection, "perforation": PerforationSection,
    "kernel": KernelSection, "g": GSection, "averaging": AveragingSection,
    "problem": ProblemSection, "sweep": SweepSection, "output": OutputSection,
}


def _section(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"section {where!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where!r}: {', '.join(unknown)}")
    kw = {}
    for k, v in data.items():
        if cls is ProblemSection and k == "u0":
            v = _section(InitialSection, v, f"{where}.u0")
        kw[k] = v
    return cls(**kw)


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    domain: DomainSection = field(default_factory=DomainSection)
    perforation: PerforationSection = field(default_factory=PerforationSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    g: GSection = field(default_factory=GSection)
    averaging: AveragingSection = field(default_factory=AveragingSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigurationError(f"unknown config section(s): {', '.join(unknown)}")
        try:
            return cls(**{k: _section(c, data.get(k), k) for k, c in SECTIONS.items()})
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


# --------------------------------------------------------------------------
# assembly


@dataclass(eq=False)
class Setup:
    """Geometry, kernel and coefficient ingredients resolved from a config."""

    config: RunConfig
    grid: object
    domain: Domain
    omega: object
    perforation: PerforationSpec
    chi_eps: object
    holes: object
    density: object
    kernel: object
    g: GSpec
    averaging: AveragingSpec


def perforation_spec(cfg: RunConfig, eps: Optional[float] = None) -> PerforationSpec:
    p = cfg.perforation
    return PerforationSpec(p.kind, p.eps if eps is None else eps, p.radius_ratio,
                           p.count, p.radius, p.rng_seed)


def build_setup(cfg: RunConfig, eps: Optional[float] = None, check_coverage: bool = True) -> Setup:
    """Resolve grid, domain, perforation, density and kernel.

    With ``check_coverage`` the delta-ball coverage bound is enforced while
    perforating (CoverageError on failure).
    """
    G = cfg.grid
    R = cfg.kernel.support_radius
    grid = build_grid(G.dim, G.n_per_dim, G.box, kernel_radius=R)
    D = cfg.domain
    dom = Domain(D.shape, None if D.center is None else tuple(D.center), D.half_width)
    omega = domain_mask_from(grid, dom, margin=R)
    pspec = perforation_spec(cfg, eps)
    averaging = AveragingSpec(cfg.averaging.delta, cfg.averaging.mode, cfg.averaging.denominator_floor)
    chi, holes = perforate(grid, omega, pspec, delta=averaging.delta if check_coverage else None,
                           coverage_floor=averaging.denominator_floor)
    P = cfg.perforation
    density = effective_density(grid, omega, pspec, P.density_mode, chi, P.window, P.density_floor)
    J = build_kernel(grid, cfg.kernel.family, R, cfg.kernel.sigma)
    g = GSpec(cfg.g.family, cfg.g.a, cfg.g.b, cfg.g.M)
    return Setup(cfg, grid, dom, omega, pspec, chi, holes, density, J, g, averaging)


def build_problem(cfg: RunConfig, setup: Optional[Setup] = None, **overrides):
    """ProblemSpec for the ``problem`` section (``overrides`` replace spec fields)."""
    from .evolution import InitialData, ProblemSpec

    s = build_setup(cfg) if setup is None else setup
    P = cfg.problem
    u0 = P.u0
    init = InitialData(u0.preset, u0.value, u0.width, None if u0.center is None else tuple(u0.center))
    spec = ProblemSpec(s.grid, s.domain, s.omega, s.chi_eps, s.density, s.kernel, P.equation, P.bc,
                       s.g, s.averaging, init, P.T, P.dt, P.scheme, P.sample_stride,
                       cfg.perforation.density_floor)
    return spec.with_(**overrides) if overrides else spec
