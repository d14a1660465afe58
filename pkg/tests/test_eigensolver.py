from __future__ import annotations

import json
import warnings

import numpy as np
import pytest

from conflap.eigensolver import (
    CountResult,
    cheeger_sweep,
    counting,
    localization_bound,
    localization_check,
    solve_lowest,
)
from conflap.errors import DisconnectedError, RayleighExceedsError, ScalBelowS0Error, SolverError
from conflap.experiments import c1_perturbation
from conflap.metric_field import MetricField, PeriodicGrid, bump_metric
from conflap.neck_surgery import cap_profile, make_dumbbell, reduce_to_sturm_liouville
from conflap.operator_assembly import assemble


def cube(N):
    return PeriodicGrid((N, N, N), (1.0, 1.0, 1.0))


def discrete_cos_level(N):
    """Exact eigenvalue of the periodic 3-point Laplacian for the first Fourier mode."""
    return (2 * N * np.sin(np.pi / N)) ** 2


@pytest.fixture(scope="module")
def flat16():
    return assemble(MetricField.flat(cube(16)), 0.125)


@pytest.fixture(scope="module")
def flat16_result(flat16):
    return solve_lowest(flat16, 7)


def test_flat_torus_cluster(flat16_result):
    res = flat16_result
    assert res.meta["mode"] == "iterative"
    assert abs(res.eigenvalues[0]) < 1e-8
    assert np.allclose(res.eigenvalues[1:], discrete_cos_level(16), rtol=1e-9)
    clusters = res.clusters()
    assert [m for _, m in clusters] == [1, 6]


def test_result_invariants(flat16, flat16_result):
    res = flat16_result
    V = res.eigenvectors
    gram = V.T @ (flat16.M[:, None] * V)
    assert np.allclose(gram, np.eye(7), atol=1e-10)
    assert np.all(np.diff(res.eigenvalues) >= 0)
    assert np.all(res.residuals <= 1e-8 * (1 + np.abs(res.eigenvalues)))


def test_solver_is_bitwise_repeatable(flat16, flat16_result):
    again = solve_lowest(flat16, 7)
    assert np.array_equal(again.eigenvalues, flat16_result.eigenvalues)
    assert np.array_equal(again.eigenvectors, flat16_result.eigenvectors)


def test_json(flat16_result):
    data = json.loads(flat16_result.to_json())
    assert set(data) == {"eigenvalues", "residuals", "meta"}
    assert len(data["eigenvalues"]) == 7


def test_dense_matches_exact_discrete_level():
    res = solve_lowest(assemble(MetricField.flat(cube(8)), 0.0), 7)
    assert res.meta["mode"] == "dense"
    assert np.allclose(res.eigenvalues[1:], discrete_cos_level(8), rtol=1e-12)


@pytest.mark.parametrize("N", [8, 16])
def test_homothety_scaling(N):
    grid = cube(N)
    g = bump_metric(grid, 0.2)
    lam = 1.5
    a = solve_lowest(assemble(g, 0.125), 4).eigenvalues
    b = solve_lowest(assemble(MetricField(grid, lam**2 * g.g), 0.125), 4).eigenvalues
    assert np.allclose(b, a / lam**2, rtol=1e-8, atol=1e-10)


def test_sphere_cap_reduction():
    res = solve_lowest(reduce_to_sturm_liouville(cap_profile(3, 4096), 0.125), 3)
    assert res.eigenvalues[:2] == pytest.approx([0.75, 3.75], rel=5e-3)
    assert res.eigenvalues[2] == pytest.approx(8.75, rel=5e-3)


def test_solver_error_carries_residuals():
    op = assemble(MetricField.flat(cube(8)), 0.0)
    with pytest.raises(SolverError) as info:
        solve_lowest(op, 3, tol=1e-300)
    assert info.value.residuals is not None
    assert len(info.value.eigenvalues) == 3


def test_bad_arguments():
    op = assemble(MetricField.flat(cube(8)), 0.0)
    with pytest.raises(ValueError):
        solve_lowest(op, 0)
    with pytest.raises(ValueError):
        solve_lowest(op, 2, tol=0.0)


# ---------------------------------------------------------------- counting


def test_counting_examples(flat16):
    assert counting(flat16, -1.0) == 0
    assert counting(flat16, 1.0) == 1
    assert counting(flat16, 45.0) == 7


def test_counting_matches_solver(flat16, flat16_result):
    for lam in (-5.0, 0.5, 20.0, 38.0, 39.5):
        expected = int(np.sum(flat16_result.eigenvalues <= lam))
        assert counting(flat16, lam).count == expected


def test_counting_dense_path():
    op = assemble(bump_metric(cube(8), 0.2), 0.125)
    vals = solve_lowest(op, 20).eigenvalues
    for lam in np.linspace(vals[0] - 1, vals[-1] - 1e-3, 7):
        assert counting(op, float(lam)).count == int(np.sum(vals <= lam))


def test_counting_ambiguous_warns(flat16):
    with pytest.warns(RuntimeWarning):
        res = counting(flat16, 0.0)
    assert isinstance(res, CountResult)
    assert res.ambiguous
    assert res.count == 1


def test_counting_rejects_nonfinite(flat16):
    with pytest.raises(ValueError):
        counting(flat16, float("inf"))


# ---------------------------------------------------------------- mass localization


def test_localization_formula():
    assert localization_bound(0.0, 10.0, 0.5, 0.125) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        localization_bound(1.0, 1.0, 0.125, 0.5)


def test_localization_empty_region():
    grid = cube(8)
    op = assemble(MetricField.flat(grid), 0.125)
    res = solve_lowest(op, 2)
    chk = localization_check(op, np.zeros(op.N), res.eigenvectors[:, 1], 0.0, 1.0, res.eigenvalues[1] + 1e-9, 0.125)
    assert chk.measured == 0
    assert chk.holds


def test_localization_precondition_errors():
    op = assemble(MetricField.flat(cube(8)), 0.125)
    u = np.ones(op.N)
    with pytest.raises(ScalBelowS0Error):
        localization_check(op, -np.ones(op.N), u, 0.0, 1.0, 1.0, 0.125)
    v = np.cos(2 * np.pi * cube(8).coordinates()[0]).reshape(-1)
    with pytest.raises(RayleighExceedsError):
        localization_check(op, np.zeros(op.N), v, 0.0, 1.0, 1.0, 0.125)


def test_localization_on_dumbbell():
    p = make_dumbbell(3, 0.1, samples=2048)
    op = reduce_to_sturm_liouville(p, 0.125)
    from conflap.neck_surgery import warped_scal

    scal = warped_scal(p)
    near = p.distance_to_neck() <= 2 * p.r
    S0, S1 = scal.min(), scal[near].min()
    res = solve_lowest(op, 2)
    for j in range(2):
        chk = localization_check(op, scal, res.eigenvectors[:, j], S0, S1, res.eigenvalues[j] * (1 + 1e-10), 0.125)
        assert chk.holds


# ---------------------------------------------------------------- Cheeger


def test_cheeger_round_sphere():
    cap = cap_profile(3, 4096)
    h = cheeger_sweep(cap.cell_volumes(), cap.face_areas())
    assert h == pytest.approx(4 / np.pi, abs=1e-5)


def test_cheeger_symmetric_cut_at_neck():
    p = make_dumbbell(3, 0.1, samples=1024)
    _, j = cheeger_sweep(p.cell_volumes(), p.face_areas(), return_index=True)
    assert j == 511


def test_cheeger_disconnected():
    with pytest.raises(DisconnectedError):
        cheeger_sweep([1.0, 1.0, 1.0], [1.0, 0.0])


def test_cheeger_shape_check():
    with pytest.raises(ValueError):
        cheeger_sweep([1.0, 1.0], [1.0, 1.0])


# ---------------------------------------------------------------- C1 sandwich


def test_sandwich_epsilon_shrinks():
    grid = cube(8)
    g = MetricField.flat(grid)
    base = solve_lowest(assemble(g, 0.125), 7).eigenvalues
    eps = []
    for delta in (1e-1, 1e-2, 1e-3):
        mu = solve_lowest(assemble(c1_perturbation(grid, delta), 0.125), 7).eigenvalues
        # smallest eps with (1-eps) mu - eps <= mu' <= (1+eps) mu + eps
        eps.append(float(np.max(np.abs(mu - base) / (1 + np.abs(base)))))
    assert eps[0] > eps[1] > eps[2]
    assert eps[2] < 1e-3


def test_warnings_are_quiet_for_iterative_solve(flat16):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_lowest(flat16, 2)
