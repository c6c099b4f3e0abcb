import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaquant.core import (
    Dataset,
    DegenerateFitError,
    QuantileLevel,
    basis_eval,
    multi_index_set,
)
from gaquant.lpq import (
    fit_local,
    local_partial,
    local_window,
    pinball_objective,
    solve_exact_lp,
    solve_pinball,
)

from conftest import uniform_data


def test_intercept_only_weighted_median():
    beta, obj, _ = solve_pinball(np.ones((2, 1)), np.array([0.0, 1.0]), np.array([1.0, 3.0]), 0.5)
    assert beta[0] == pytest.approx(1.0)
    assert obj == pytest.approx(0.5)


def test_objective_helper():
    r = np.array([-1.0, 2.0])
    assert pinball_objective(r, np.ones(2), 0.25) == pytest.approx(0.75 + 0.5)


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
def test_noiseless_linear_recovered(tau):
    data = uniform_data(500, lambda x: 2 + 3 * x[:, 0] - x[:, 1])
    x, h = np.array([0.4, 0.6]), 0.3
    fit = fit_local(data, x, h, multi_index_set(2, 2), QuantileLevel.from_tau(tau))
    assert np.allclose(fit.beta, [2 + 3 * 0.4 - 0.6, 3 * h, -h], atol=1e-6)
    assert local_partial(fit, multi_index_set(2, 2), 1, h) == pytest.approx(3.0, abs=1e-6)
    assert local_partial(fit, multi_index_set(2, 2), 2, h) == pytest.approx(-1.0, abs=1e-6)


def _instance(seed):
    rng = np.random.default_rng(seed)
    d, p = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    basis = multi_index_set(d, p)
    n = int(rng.integers(len(basis) + 2, 41))
    x = rng.uniform(-1, 1, (n, d))
    y = np.sin(3 * x[:, 0]) + 0.3 * rng.standard_t(3, n)
    if seed % 4 == 0:
        y = np.round(y, 1)  # ties
    tau = float(rng.integers(1, 10)) / 10.0
    return basis_eval(basis, x), y, rng.uniform(0, 1, n), tau


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_exact_lp(seed):
    z, y, w, tau = _instance(seed)
    _, obj, _ = solve_pinball(z, y, w, tau)
    exact = pinball_objective(y - z @ solve_exact_lp(w, y, z, tau), w, tau)
    assert obj - exact <= 1e-8 * (1 + abs(exact))


def test_vertex_solution_interpolates_k_points():
    z, y, w, tau = _instance(3)
    beta, _, _ = solve_pinball(z, y, w, tau)
    assert np.sum(np.abs(y - z @ beta) < 1e-9) >= z.shape[1]


def test_too_few_points():
    with pytest.raises(DegenerateFitError):
        solve_pinball(np.ones((2, 3)), np.zeros(2), np.ones(2), 0.5)


def test_identical_rows_are_degenerate():
    data = Dataset(np.full((30, 2), 0.5), np.arange(30.0))
    with pytest.raises(DegenerateFitError):
        fit_local(data, np.array([0.5, 0.5]), 0.2, multi_index_set(2, 2),
                  QuantileLevel.from_tau(0.5))


def test_empty_window():
    data = uniform_data(50, lambda x: x[:, 0])
    with pytest.raises(DegenerateFitError):
        fit_local(data, np.array([5.0, 5.0]), 0.1, multi_index_set(2, 2),
                  QuantileLevel.from_tau(0.5))


def test_leave_one_out_drops_the_row():
    data = uniform_data(200, lambda x: x[:, 0])
    x = data.x[7]
    idx, _, _ = local_window(data, x, 0.3)
    idx_loo, _, _ = local_window(data, x, 0.3, exclude=7)
    assert 7 in idx and 7 not in idx_loo and idx_loo.size == idx.size - 1


def test_deterministic():
    data = uniform_data(300, lambda x: np.sin(4 * x[:, 0]) + x[:, 1] ** 2, seed=4)
    args = (data, np.array([0.3, 0.7]), 0.25, multi_index_set(2, 3), QuantileLevel.from_tau(0.3))
    assert np.array_equal(fit_local(*args).beta, fit_local(*args).beta)
