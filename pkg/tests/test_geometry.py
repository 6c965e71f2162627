import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlhom.errors import ConfigurationError, CoverageError
from nlhom.geometry import (MaskedField, PerforationSpec, build_grid, check_coverage,
                            domain_mask, effective_density, perforate)


def test_grid_1d_cell_centres():
    g = build_grid(1, 8, (0.0, 1.0))
    assert g.h == (0.125,)
    np.testing.assert_allclose(g.axes()[0], 0.0625 + 0.125 * np.arange(8), rtol=0, atol=1e-15)


def test_grid_2d_cell_volume():
    g = build_grid(2, 32, (0.0, 1.0))
    assert g.cell_volume == (1 / 32) ** 2


def test_grid_256_size_and_memory():
    g = build_grid(2, 256, (0.0, 1.0))
    assert g.size == 65536
    assert g.memory_estimate == 8 * 65536
    assert g.describe()["points"] == 65536


def test_grid_anisotropic_box():
    g = build_grid(2, (8, 16), ((0.0, 2.0), (0.0, 1.0)))
    assert g.h == (0.25, 1 / 16)
    assert g.cell_volume == 0.25 * (1 / 16)


@pytest.mark.parametrize("kwargs", [
    dict(dim=3, n_per_dim=8, box=(0, 1)),
    dict(dim=1, n_per_dim=3, box=(0, 1)),
    dict(dim=2, n_per_dim=8, box=(1, 1)),
    dict(dim=1, n_per_dim=8, box=(0, 1), kernel_radius=0.05),
])
def test_grid_rejects(kwargs):
    with pytest.raises(ConfigurationError):
        build_grid(**kwargs)


def test_masked_field_zero_off_mask():
    g = build_grid(1, 8, (0, 1))
    mask = np.arange(8) < 4
    f = MaskedField(g, np.ones(8), mask)
    assert np.all(f.values[~mask] == 0.0)
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_square_domain_area():
    g = build_grid(2, 64, (0, 1))
    om = domain_mask(g, "square", margin=0.1, half_width=0.25)
    area = om.integral()
    # one layer of cells around the perimeter
    assert abs(area - 0.25) <= 4 * 0.5 * g.h[0]


def test_disk_domain_area():
    g = build_grid(2, 128, (0, 1))
    om = domain_mask(g, "disk", margin=0.1, half_width=0.25)
    assert abs(om.integral() - math.pi * 0.25 ** 2) <= 2 * math.pi * 0.25 * g.h[0]


def test_domain_touching_box_rejected():
    g = build_grid(2, 32, (0, 1))
    with pytest.raises(ConfigurationError):
        domain_mask(g, "square", half_width=0.5)


def test_domain_margin_named_in_error():
    g = build_grid(2, 32, (0, 1))
    with pytest.raises(ConfigurationError, match="0.3"):
        domain_mask(g, "square", margin=0.3, half_width=0.25)


def test_perforate_none():
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    chi, holes = perforate(g, om, PerforationSpec("none"))
    assert np.array_equal(chi.values, om.values)
    assert not holes.values.any()


def test_periodic_hole_fraction():
    g = build_grid(2, 256, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    eps = 1 / 8
    chi, holes = perforate(g, om, PerforationSpec("periodic_balls", eps, 0.5))
    frac = holes.values.sum() / om.values.sum()
    # O(h): hole perimeter per unit area times one cell width
    tol = math.pi / (4 * eps) * g.h[0]
    assert abs(frac - math.pi / 16) <= tol


def test_random_balls_deterministic():
    g = build_grid(2, 64, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    spec = PerforationSpec("random_balls", count=10, radius=0.03, rng_seed=3)
    a, _ = perforate(g, om, spec)
    b, _ = perforate(g, om, spec)
    assert np.array_equal(a.values, b.values)
    c, _ = perforate(g, om, PerforationSpec("random_balls", count=10, radius=0.03, rng_seed=4))
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("kwargs", [
    dict(kind="periodic_balls", eps=0.1, radius_ratio=1.0),
    dict(kind="periodic_balls", eps=0.1, radius_ratio=0.0),
    dict(kind="periodic_balls", eps=-1.0, radius_ratio=0.5),
    dict(kind="random_balls", count=3),
    dict(kind="hexagons"),
])
def test_perforation_spec_rejects(kwargs):
    with pytest.raises(ConfigurationError):
        PerforationSpec(**kwargs)


def test_coverage_failure_reports_worst_point():
    g = build_grid(2, 64, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    spec = PerforationSpec("periodic_balls", 1 / 8, 0.95)
    with pytest.raises(CoverageError) as err:
        perforate(g, om, spec, delta=2.5 / 64, coverage_floor=0.5 * math.pi * (2.5 / 64) ** 2)
    assert err.value.worst_value is not None
    assert om.mask[err.value.worst_index]


def test_coverage_passes_for_moderate_holes(periodic_setup):
    grid, omega, spec, chi, holes, X = periodic_setup
    worst = check_coverage(grid, omega, chi, 0.1)
    assert worst > 0


@given(eps=st.sampled_from([1 / 4, 1 / 8, 1 / 16]), ratio=st.floats(0.05, 0.95),
       n=st.sampled_from([32, 48, 64]))
def test_mask_partition(eps, ratio, n):
    g = build_grid(2, n, (0, 1))
    om = domain_mask(g, "disk", margin=0.1, half_width=0.3)
    chi, holes = perforate(g, om, PerforationSpec("periodic_balls", eps, ratio))
    assert np.array_equal(holes.values + chi.values, om.values)
    assert np.all((0 <= chi.values) & (chi.values <= om.values) & (om.values <= 1))


@given(seed=st.integers(0, 2 ** 31 - 1), count=st.integers(0, 30))
def test_random_mask_partition(seed, count):
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    chi, holes = perforate(g, om, PerforationSpec("random_balls", count=count, radius=0.05, rng_seed=seed))
    assert np.array_equal(holes.values + chi.values, om.values)


def test_density_none_is_indicator():
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    for mode in ("analytic", "cell_average"):
        X = effective_density(g, om, PerforationSpec("none"), mode)
        assert np.array_equal(X.values, om.values)


def test_density_analytic_periodic():
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    X = effective_density(g, om, PerforationSpec("periodic_balls", 1 / 8, 0.5))
    np.testing.assert_allclose(X.values[om.mask], 1 - math.pi / 16, rtol=0, atol=1e-15)
    assert np.all(X.values[~om.mask] == 0)


def test_density_bounds(periodic_setup):
    grid, omega, spec, chi, holes, _ = periodic_setup
    X = effective_density(grid, omega, spec, "cell_average", chi)
    assert X.values[omega.mask].min() >= 1e-3 and X.values.max() <= 1
    assert np.all(X.values[~omega.mask] == 0)


def test_density_floor_violation():
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    with pytest.raises(ConfigurationError, match="floor"):
        effective_density(g, om, PerforationSpec("periodic_balls", 1 / 8, 0.5), floor=0.9)


def test_analytic_mode_rejects_random():
    g = build_grid(2, 32, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    with pytest.raises(ConfigurationError):
        effective_density(g, om, PerforationSpec("random_balls", count=2, radius=0.05, rng_seed=1))


@pytest.mark.parametrize("phi_name", ["x1sq", "broad_gaussian", "affine"])
def test_weak_convergence_1d(phi_name):
    # in 1D with ratio 1/2 every hole covers a whole number of cells, so only the oscillation remains
    g = build_grid(1, 256, (0, 1))
    om = domain_mask(g, "square", margin=0.1)
    x = g.axes()[0]
    phi = {"x1sq": x ** 2, "broad_gaussian": np.exp(-(x - 0.45) ** 2 / 0.2), "affine": 1 + 2 * x}[phi_name]
    spec = PerforationSpec("periodic_balls", 1 / 8, 0.5)
    X = effective_density(g, om, spec)
    errs = []
    for eps in (1 / 8, 1 / 16, 1 / 32):
        chi, _ = perforate(g, om, spec.with_eps(eps))
        errs.append(abs(np.sum(phi * (chi.values - X.values))) * g.cell_volume)
    assert errs[0] > errs[1] > errs[2] or max(errs) < 1e-14
