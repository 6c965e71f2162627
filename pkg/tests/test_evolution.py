import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from nlhom.config import RunConfig, build_problem
from nlhom.errors import ConfigurationError, IntegrationError
from nlhom.evolution import (InitialData, ProblemSpec, Stepper, System, bound_monitor,
                             build_system, integrate, integrate_system, phi1,
                             rescaled_equivalence_check, rhs, step_etd1)
from nlhom.geometry import Domain, MaskedField, build_grid, domain_mask
from nlhom.kernel import convolve_array, stencil_from_weights
from nlhom.nonlinearity import AveragingSpec, GSpec


def small_problem(n=32, **sections):
    base = {"grid": {"n_per_dim": n},
            "perforation": {"kind": "periodic_balls", "eps": 0.125, "radius_ratio": 0.5},
            "kernel": {"family": "bump", "support_radius": 0.125},
            "averaging": {"delta": 0.125}}
    for k, v in sections.items():
        base.setdefault(k, {}).update(v)
    return build_problem(RunConfig.from_dict(base))


def dense_operator(spec):
    """Dense matrix of u -> a (J * u) - h u on the support, built from the stencil by index offsets."""
    grid, J = spec.grid, spec.kernel
    system = build_system(spec)
    idx = np.argwhere(system.support)
    rc = np.array(J.radius_cells)
    n = len(idx)
    A = np.zeros((n, n))
    cv = grid.cell_volume
    for i, p in enumerate(idx):
        for j, q in enumerate(idx):
            d = p - q
            if np.all(np.abs(d) <= rc):
                A[i, j] = J.weights[tuple(d + rc)] * cv
    a = system.a[system.support]
    return a[:, None] * A - np.diag(system.h[system.support]), idx


# --------------------------------------------------------------------------
# rhs


def test_rhs_zero():
    p = small_problem(g={"family": "tanh_scale", "a": 1.0})
    z = MaskedField.full(p.grid, 0.0)
    assert not rhs(p, z).values.any()


def test_rhs_no_holes_matches_unit_density_limit(rng):
    p = small_problem(perforation={"kind": "none"})
    u = np.where(p.omega.mask, rng.standard_normal(p.grid.shape), 0.0)
    a = rhs(p.with_(equation="eps_problem", bc="dirichlet"), u).values
    b = rhs(p.with_(equation="limit_dirichlet"), u).values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_rhs_support_violation():
    p = small_problem()
    with pytest.raises(ConfigurationError):
        rhs(p, np.ones(p.grid.shape))


def _hand_problem(bc, hole=False):
    # 8 cells of width 1/8; Omega = cells 2..5; kernel weights (2, 4, 2) have unit discrete mass
    grid = build_grid(1, 8, (0, 1))
    dom = Domain("square", None, 0.25)
    omega = domain_mask(grid, "square", margin=0.125)
    assert np.array_equal(np.flatnonzero(omega.mask), [2, 3, 4, 5])
    chi_mask = omega.mask.copy()
    if hole:
        chi_mask[3] = False
    chi = MaskedField.indicator(grid, chi_mask)
    J = stencil_from_weights(grid, [2.0, 4.0, 2.0], normalize=False)
    return ProblemSpec(grid, dom, omega, chi, omega, J, "eps_problem", bc,
                       GSpec("linear", 0.5, 0.1), AveragingSpec(0.25))


def test_rhs_hand_table_dirichlet():
    p = _hand_problem("dirichlet")
    u = np.array([0, 0, 1, 2, 3, 4, 0, 0], float)
    # J*u = (u_{i-1} + 2 u_i + u_{i+1}) / 4; m = mean over the three-cell ball inside Omega
    expected = [0, 0, 0.85, 1.1, 1.6, 0.6, 0, 0]
    np.testing.assert_allclose(rhs(p, u).values, expected, rtol=0, atol=1e-14)


def test_rhs_hand_table_neumann_with_hole():
    p = _hand_problem("neumann", hole=True)
    u = np.array([0, 0, 1, 0, 3, 4, 0, 0], float)
    # h_eps = 1 - J * 1_hole = (0.75, -, 0.75, 1) on cells 2, 4, 5
    expected = [0, 0, 0.35, 0, 2.1, 0.6, 0, 0]
    np.testing.assert_allclose(rhs(p, u).values, expected, rtol=0, atol=1e-14)


@given(seed=st.integers(0, 10 ** 6))
def test_limit_regroupings(seed):
    p = small_problem()
    X = p.density.values
    u = np.where(p.omega.mask, np.random.default_rng(seed).standard_normal(p.grid.shape), 0.0)
    sysD = build_system(p.with_(equation="limit_dirichlet"))
    sysN = build_system(p.with_(equation="limit_neumann"))
    Ju = convolve_array(p.kernel, u) * p.grid.cell_volume
    om = p.omega.mask
    F = sysD.reaction(u)
    stated_D = X * (Ju - u) + X * F + (X - 1) * u
    assert np.max(np.abs(np.where(om, stated_D, 0) - sysD.rhs(u))) <= 1e-12
    lam = sysN.h - X
    stated_N = X * (Ju - u) + X * F - lam * u
    assert np.max(np.abs(np.where(om, stated_N, 0) - sysN.rhs(u))) <= 1e-12


# --------------------------------------------------------------------------
# steps


def test_phi1_branches():
    assert phi1(np.array(0.0)) == 1.0
    z = np.array([1e-8, 1e-3, 1.0, 30.0])
    ref = np.array([1 - 5e-9, -math.expm1(-1e-3) / 1e-3, 1 - math.exp(-1), (1 - math.exp(-30)) / 30])
    np.testing.assert_allclose(phi1(z), ref, rtol=1e-15)


def test_pure_decay_step():
    grid = build_grid(2, 16, (0, 1))
    J = stencil_from_weights(grid, np.zeros((3, 3)), normalize=False)
    support = np.ones(grid.shape, bool)
    s = System(grid, J, support, 1.0, 1.0, None)
    u = np.random.default_rng(1).standard_normal(grid.shape)
    out = step_etd1(s, u, 0.1).values
    assert np.array_equal(out, np.exp(-0.1) * u)


def test_zero_decay_gain_is_dt():
    grid = build_grid(1, 16, (0, 1))
    J = stencil_from_weights(grid, [1.0, 2.0, 1.0])
    s = System(grid, J, np.ones(grid.shape, bool), 1.0, 0.0, None)
    u = np.random.default_rng(2).standard_normal(grid.shape)
    out = step_etd1(s, u, 0.05).values
    np.testing.assert_allclose(out, u + 0.05 * convolve_array(J, u) * grid.cell_volume, rtol=0, atol=1e-15)


def test_step_rejects_nonpositive_dt():
    p = small_problem()
    with pytest.raises(ConfigurationError):
        step_etd1(p, build_system(p).u_init, 0.0)


def _euler_micro(system, u, dt, n=100):
    e = Stepper(system, dt / n, "euler")
    for _ in range(n):
        u = e(u)
    return u


@pytest.mark.parametrize("equation,bc", [("eps_problem", "dirichlet"), ("eps_problem", "neumann"),
                                         ("limit_neumann", "neumann")])
def test_etd1_first_order_against_euler(equation, bc):
    p = small_problem(16, kernel={"support_radius": 0.15}, averaging={"delta": 0.15},
                      problem={"equation": equation, "bc": bc})
    s = build_system(p)
    u = np.where(s.support, np.random.default_rng(0).standard_normal(p.grid.shape), 0.0)
    rel = []
    for dt in (1e-3, 1e-4):
        a = Stepper(s, dt, "etd1")(u)
        b = _euler_micro(s, u, dt)
        rel.append(np.linalg.norm(a - b) / np.linalg.norm(b - u))
    assert rel[0] <= 1e-3
    assert 5 <= rel[0] / rel[1] <= 20


# --------------------------------------------------------------------------
# integrate


def test_zero_trajectory():
    p = small_problem(g={"family": "linear", "a": 0.5, "b": 0.0},
                      problem={"u0": {"preset": "constant", "value": 0.0}})
    tr = integrate(p)
    assert all(not s.values.any() for s in tr.states)
    assert not tr.norm_log.any()


@pytest.mark.parametrize("equation,bc", [("eps_problem", "dirichlet"), ("eps_problem", "neumann"),
                                         ("limit_neumann", "neumann")])
def test_linear_flow_matches_expm(equation, bc):
    p = small_problem(16, kernel={"support_radius": 0.15}, averaging={"delta": 0.15},
                      perforation={"eps": 0.125, "radius_ratio": 0.6},
                      g={"family": "linear", "a": 0.0, "b": 0.0},
                      problem={"equation": equation, "bc": bc, "scheme": "rk4", "dt": 0.01, "T": 1.0})
    A, idx = dense_operator(p)
    assert A.shape[0] <= 64
    tr = integrate(p)
    u0 = tr.states[0].values[tuple(idx.T)]
    ref = expm(A * 1.0) @ u0
    assert np.max(np.abs(tr.final.values[tuple(idx.T)] - ref)) <= 1e-8


def test_etd1_vs_rk4_smooth_run():
    p = small_problem(32, problem={"dt": 2e-4, "T": 1.0, "sample_stride": 5000})
    a = integrate(p).final
    b = integrate(p.with_(scheme="rk4")).final
    assert math.sqrt(np.sum((a.values - b.values) ** 2) * p.grid.cell_volume) <= 1e-4


def test_explicit_stability_bound():
    p = small_problem(problem={"scheme": "euler", "dt": 0.6})
    with pytest.raises(ConfigurationError, match="stability"):
        integrate(p.with_(T=1.2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_guard_reports_step():
    p = small_problem(g={"family": "linear", "a": 1e200, "b": 0.0}, problem={"dt": 0.1})
    with pytest.raises(IntegrationError) as err:
        integrate(p)
    assert err.value.step is not None and err.value.step >= 1


def test_sample_time_must_be_on_grid():
    p = small_problem()
    with pytest.raises(ConfigurationError):
        integrate(p, sample_times=[0.123])


@pytest.mark.parametrize("scheme", ["etd1", "rk4", "euler"])
@pytest.mark.parametrize("equation,bc", [("eps_problem", "dirichlet"), ("eps_problem", "neumann"),
                                         ("limit_dirichlet", "dirichlet"), ("limit_delta_zero", "neumann")])
def test_support_preserved(scheme, equation, bc):
    p = small_problem(problem={"equation": equation, "bc": bc, "scheme": scheme, "T": 0.2, "dt": 0.02,
                               "sample_stride": 1})
    s = build_system(p)
    tr = integrate(p)
    for st_ in tr.states:
        assert not st_.values[~s.support].any()


def test_limit_starts_from_density_times_u0():
    p = small_problem(problem={"equation": "limit_dirichlet"})
    tr = integrate(p.with_(T=0.01, dt=0.01))
    u0 = p.u0.evaluate(p.grid, p.domain)
    np.testing.assert_allclose(tr.states[0].values, np.where(p.omega.mask, p.density.values * u0, 0))


@given(seed=st.integers(0, 10 ** 6))
def test_linearity_without_reaction(seed):
    p = small_problem(g={"family": "linear", "a": 0.0, "b": 0.0}, problem={"T": 0.5, "dt": 0.05})
    s = build_system(p)
    r = np.random.default_rng(seed)
    u1 = np.where(s.support, r.standard_normal(p.grid.shape), 0)
    u2 = np.where(s.support, r.standard_normal(p.grid.shape), 0)
    f = lambda u: integrate_system(s, p.T, p.dt, u_init=u).final.values
    assert np.max(np.abs(f(u1 + u2) - f(u1) - f(u2))) <= 1e-10


def test_rk4_fourth_order():
    p = small_problem(16, kernel={"support_radius": 0.15}, averaging={"delta": 0.15},
                      g={"family": "linear", "a": 0.0, "b": 0.0},
                      problem={"scheme": "rk4", "T": 1.0, "bc": "neumann"})
    s = build_system(p)
    sol = {dt: integrate_system(s, 1.0, dt, "rk4").final.values for dt in (0.2, 0.1, 0.05)}
    e1 = np.abs(sol[0.2] - sol[0.05]).max()
    e2 = np.abs(sol[0.1] - sol[0.05]).max()
    # order 4 against the dt = 0.05 reference: ratio (0.2^4 - 0.05^4) / (0.1^4 - 0.05^4) = 17
    assert math.log2(e1 / e2) >= 3.9 or e1 < 1e-13


# --------------------------------------------------------------------------
# bound and rescaling


def test_bound_zero_trajectory():
    p = small_problem(g={"family": "tanh_scale", "a": 1.0}, problem={"u0": {"preset": "constant", "value": 0.0}})
    tr = integrate(p)
    rep = bound_monitor(tr, p)
    assert rep.violations == 0
    assert np.all(np.isfinite(rep.bounds))
    np.testing.assert_array_equal(rep.margins, rep.bounds)


def test_bound_pure_decay():
    grid = build_grid(2, 16, (0, 1))
    J = stencil_from_weights(grid, np.zeros((3, 3)), normalize=False)
    s = System(grid, J, np.ones(grid.shape, bool), 1.0, 1.0, None,
               np.random.default_rng(3).standard_normal(grid.shape))
    tr = integrate_system(s, 1.0, 0.01, sample_stride=10)
    norms = [st_.l2_norm() for st_ in tr.states]
    np.testing.assert_allclose(norms, np.exp(-np.array(tr.times)) * norms[0], rtol=1e-12)
    rep = bound_monitor(tr, s)
    assert rep.violations == 0 and rep.lambda1 == pytest.approx(1.0, abs=1e-9)


def test_bound_falls_back_to_gershgorin():
    p = small_problem(problem={"T": 0.2, "dt": 0.02})
    tr = integrate(p)
    rep = bound_monitor(tr, p, eigen_max_iter=2)
    assert rep.lambda1_source == "gershgorin" and rep.violations == 0


def test_rescaled_unit_density():
    p = small_problem(perforation={"kind": "none"}, problem={"equation": "limit_dirichlet"})
    assert rescaled_equivalence_check(p) <= 1e-12


@pytest.mark.parametrize("equation", ["limit_dirichlet", "limit_neumann", "limit_delta_zero"])
def test_rescaled_constant_density(equation):
    p = small_problem(g={"family": "linear", "a": 0.7, "b": 0.2},
                      problem={"equation": equation, "bc": "neumann"})
    assert p.density.values[p.omega.mask][0] == pytest.approx(1 - math.pi / 16)
    assert rescaled_equivalence_check(p, samples=[0.5, 1.0]) <= 1e-4


def test_rescaled_rejects_variable_density():
    p = small_problem(perforation={"density_mode": "cell_average"}, problem={"equation": "limit_dirichlet"})
    with pytest.raises(ConfigurationError):
        rescaled_equivalence_check(p)


def test_initial_presets():
    grid = build_grid(2, 32, (0, 1))
    dom = Domain("square", None, 0.25)
    assert np.all(InitialData("constant", 2.0).evaluate(grid, dom) == 2.0)
    s = InitialData("sine_product", 1.0).evaluate(grid, dom)
    assert s.max() <= 1.0 and s.min() >= 0.0
    b = InitialData("gaussian_bump", 1.0, 0.1).evaluate(grid, dom)
    assert b.max() == pytest.approx(np.exp(-0.5 * 2 * (0.5 / 32) ** 2 / 0.01))
    with pytest.raises(ConfigurationError):
        InitialData("spike")
