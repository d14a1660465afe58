from __future__ import annotations

import math

import numpy as np
import pytest

from conflap.eigensolver import solve_lowest
from conflap.errors import GeometryRangeError, InvalidProfileError, SingularProfileError
from conflap.metric_field import MetricField, PeriodicGrid, scalar_curvature
from conflap.neck_surgery import (
    annulus_mass_ratio,
    cap_profile,
    cutoff_chi,
    cylinder_profile,
    invariant_sphere_values,
    make_dumbbell,
    neck_sweep,
    reduce_to_sturm_liouville,
    smooth_step,
    smooth_step_derivative,
    sphere_area,
    warped_product_scal,
    warped_scal,
)


@pytest.fixture(scope="module")
def neck01():
    return make_dumbbell(3, 0.1, samples=2048)


def test_sphere_area():
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2)


def test_smooth_step():
    x = np.linspace(-0.5, 1.5, 2001)
    s = smooth_step(x)
    assert np.all(s[x <= 0] == 0) and np.all(s[x >= 1] == 1)
    assert np.all(np.diff(s) >= 0)
    ds = smooth_step_derivative(x)
    assert ds.max() == pytest.approx(2.0, rel=1e-6)
    mid = (x > 0.01) & (x < 0.99)
    assert np.allclose(np.gradient(s, x)[mid], ds[mid], atol=2e-3)


# ---------------------------------------------------------------- profiles


def test_dumbbell_neck_radius_and_symmetry(neck01):
    p = neck01
    middle = p.distance_to_neck() < p.T / 6
    assert p.phi[middle].min() == pytest.approx(0.1, rel=1e-3)
    j = int(np.argmin(np.where(middle, p.phi, np.inf)))
    assert abs(p.t[j] - p.centre) <= p.h
    assert np.allclose(p.phi, p.phi[::-1], rtol=1e-12)
    assert np.all(p.phi > 0)


def test_dumbbell_has_smooth_poles(neck01):
    p = neck01
    assert p.dphi[0] == pytest.approx(1.0, abs=1e-4)
    assert p.dphi[-1] == pytest.approx(-1.0, abs=1e-4)
    # starts as the round cap
    near_pole = p.t < math.pi / 4
    assert np.allclose(p.phi[near_pole], np.sin(p.t[near_pole]), atol=1e-9)


def test_dumbbell_neck_is_in_the_middle_third(neck01):
    # away from the poles the smallest cross-section is the neck
    p = neck01
    inner = (p.t > 0.5) & (p.t < p.T - 0.5)
    j = int(np.argmin(np.where(inner, p.phi, np.inf)))
    assert p.T / 3 < p.t[j] < 2 * p.T / 3


def test_dumbbell_scal_positive(neck01):
    scal = warped_scal(neck01)
    assert scal.min() > 0


def test_dumbbell_with_cylinder_insert():
    p0 = make_dumbbell(3, 0.1, samples=2048)
    p = make_dumbbell(3, 0.1, T=p0.T + 0.5, samples=2048)
    assert np.allclose(p.phi, p.phi[::-1], rtol=1e-12)
    mid = p.distance_to_neck() < 0.2
    assert np.allclose(p.phi[mid], 0.1)
    assert np.allclose(warped_scal(p)[mid], 2 / 0.1**2)


def test_dumbbell_errors():
    with pytest.raises(InvalidProfileError):
        make_dumbbell(3, 0.6)
    with pytest.raises(InvalidProfileError):
        make_dumbbell(2, 0.1)
    with pytest.raises(InvalidProfileError):
        make_dumbbell(3, 0.1, T=1.0)


# ---------------------------------------------------------------- scalar curvature


def test_cap_scal_is_round():
    errs = []
    for N in (512, 1024):
        errs.append(np.abs(warped_scal(cap_profile(3, N)) - 6).max())
    assert errs[1] < 1e-8


def test_cylinder_scal():
    assert np.allclose(warped_scal(cylinder_profile(3, 0.25, 1.0)), 2 / 0.25**2)


def test_singular_profile():
    with pytest.raises(SingularProfileError):
        warped_product_scal(3, np.array([1.0, 0.0, 1.0]), np.zeros(3), np.zeros(3))


def test_warped_formula_matches_grid_curvature():
    # dt^2 + phi(t)^2 (dx^2 + dy^2) is a periodic 3-metric with a flat fiber
    errs = []
    for N in (16, 32):
        grid = PeriodicGrid((N, 8, 8), (1.0, 1.0, 1.0))
        t = grid.coordinates()[0]
        w = 2 * np.pi
        phi, dphi, ddphi = 1 + 0.2 * np.cos(w * t), -0.2 * w * np.sin(w * t), -0.2 * w**2 * np.cos(w * t)
        g = np.zeros(grid.shape + (3, 3))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = g[..., 2, 2] = phi**2
        numeric = scalar_curvature(MetricField(grid, g)).values
        exact = warped_product_scal(3, phi, dphi, ddphi, fiber_scal=0.0)
        errs.append(np.abs(numeric - exact).max())
    assert errs[1] < errs[0] / 3.5


# ---------------------------------------------------------------- 1-D reduction


def test_cap_reduction_spectrum():
    res = solve_lowest(reduce_to_sturm_liouville(cap_profile(3, 4096), 0.125), 3)
    assert res.eigenvalues == pytest.approx([0.75, 3.75, 8.75], rel=5e-3)
    assert invariant_sphere_values(3, 0.125, 3) == pytest.approx([0.75, 3.75, 8.75])


def test_reduction_constants_in_kernel(neck01):
    res = solve_lowest(reduce_to_sturm_liouville(neck01, 0.0), 1)
    assert abs(res.eigenvalues[0]) < 1e-8


def test_cylinder_neumann_spectrum():
    L = 2.0
    res = solve_lowest(reduce_to_sturm_liouville(cylinder_profile(3, 0.3, L, 1024), 0.0), 4)
    exact = [(k * math.pi / L) ** 2 for k in range(4)]
    assert res.eigenvalues == pytest.approx(exact, rel=1e-5, abs=1e-8)


# ---------------------------------------------------------------- proof quantities


def test_cutoff_properties(neck01):
    r = 0.2
    chi, dchi = cutoff_chi(neck01, r)
    d = neck01.distance_to_neck()
    assert np.all(chi[d < r] == 0)
    assert np.all(chi[d > 2 * r] == 1)
    assert np.abs(dchi).max() <= 2 / r * (1 + 1e-12)
    assert np.all((chi >= 0) & (chi <= 1))


def test_cutoff_range(neck01):
    with pytest.raises(GeometryRangeError):
        cutoff_chi(neck01, 1.8)
    with pytest.raises(GeometryRangeError):
        cutoff_chi(neck01, 0.0)


def test_annulus_constant_function(neck01):
    r = 0.05
    res = annulus_mass_ratio(neck01, np.ones(neck01.samples), r)
    d = neck01.distance_to_neck()
    vol = neck01.cell_volumes()
    outer = (2 * r) ** (1 / 11)
    oracle = vol[(d >= r) & (d <= 2 * r)].sum() / vol[(d >= r) & (d <= outer)].sum()
    assert res.ratio == pytest.approx(oracle, rel=1e-12)
    assert res.flux_ok
    assert res.bound == pytest.approx(10 * r**2.5)


def test_annulus_ground_state_small_neck():
    p = make_dumbbell(3, 0.01, samples=4096)
    u = solve_lowest(reduce_to_sturm_liouville(p, 0.125), 1).eigenvectors[:, 0]
    res = annulus_mass_ratio(p, u, 0.01)
    if res.flux_ok:
        assert res.ratio <= 1e-4
    assert res.holds


def test_annulus_range(neck01):
    with pytest.raises(GeometryRangeError):
        annulus_mass_ratio(neck01, np.ones(neck01.samples), 0.0)
    # a short cylinder has its centre at 0.5, inside (2r)^(1/11) for r = 0.2
    short = cylinder_profile(3, 0.3, 1.0)
    with pytest.raises(GeometryRangeError):
        annulus_mass_ratio(short, np.ones(short.samples), 0.2)


# ---------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def sweep():
    return neck_sweep(3, 0.125, [0.3, 0.1, 0.05], 1, samples=2048)


def test_sweep_converges_to_doubled_sphere(sweep):
    assert np.allclose(sweep.baseline, [0.75, 0.75])
    last = sweep.rows[-1]
    assert np.all(last.gaps / 0.75 <= 0.05)
    gaps = np.array([row.gaps for row in sweep.rows])
    assert np.all(np.diff(gaps, axis=0) < 0)
    assert all(row.localization_ok for row in sweep.rows)
    # the fat neck has S1 = S0 at the throat but is still checked at higher levels
    assert all(row.localization_checks >= 2 for row in sweep.rows)
    assert sweep.monotone_threshold() == 0.3


def test_sweep_fat_neck_separates_levels(sweep):
    # regression values from the first run at 2048 samples
    fat, thin = sweep.rows[0].mu, sweep.rows[-1].mu
    assert fat == pytest.approx([0.58939927, 0.69038669], rel=1e-6)
    assert fat[1] - fat[0] > 5 * (thin[1] - thin[0])


def test_sweep_ground_state_below_sphere_value(sweep):
    # a test function living on one bulb keeps mu_0 at or below 0.75 up to slack
    for row in sweep.rows:
        assert row.mu[0] <= 0.75 + 1e-3


def test_sweep_diagnostics(sweep):
    for row in sweep.rows:
        d = row.diag
        assert d.S1 >= d.S0 > 0
        assert d.C1 > 0 and d.C2 > 0 and d.h_sweep > 0


def test_sweep_csv_layout(sweep):
    lines = sweep.to_csv().splitlines()
    assert lines[0] == "r,j,mu_j,gap_j,S0,S1,C1,C2,h_sweep"
    assert len(lines) == 1 + 3 * 2
    assert lines[1].startswith("0.29999999999999999,0,")


def test_sweep_argument_checks():
    with pytest.raises(ValueError):
        neck_sweep(3, 0.125, [0.1, 0.2], 1)
    with pytest.raises(ValueError):
        neck_sweep(3, 0.125, [0.2], 7)
