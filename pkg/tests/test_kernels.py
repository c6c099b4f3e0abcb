import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaquant.core import multi_index_set
from gaquant.kernels import (
    ScalarKernel,
    SphericalKernel,
    ball_rule,
    f_k_eval,
    f_k_table,
    kernel_eval,
    kernel_g_eval,
    moment_matrices,
    scalar_moment,
)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_kernel_integrates_to_one(d):
    nodes, w = ball_rule(d, 24)
    assert np.sum(w * kernel_eval(SphericalKernel(d), nodes)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ball_volume(d):
    _, w = ball_rule(d, 16)
    exact = {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}[d]
    assert w.sum() == pytest.approx(exact, rel=1e-12)


def test_kernel_vanishes_outside_ball():
    k = SphericalKernel(2)
    assert kernel_eval(k, np.array([1.0, 0.0])) == 0.0
    assert kernel_eval(k, np.array([0.8, 0.8])) == 0.0
    assert kernel_eval(k, np.zeros(2)) == pytest.approx(3.0 / np.pi)


def test_scalar_kernel_moments():
    kg = ScalarKernel()
    assert scalar_moment(kg, 0) == pytest.approx(1.0, abs=1e-12)
    assert scalar_moment(kg, 1) == pytest.approx(0.0, abs=1e-14)
    assert scalar_moment(kg, 2) == pytest.approx(1.0 / 7.0, abs=1e-12)


def test_scalar_kernel_derivatives_match_differences():
    kg = ScalarKernel()
    t, eps = np.linspace(-0.9, 0.9, 7), 1e-6
    val, d1, d2 = kernel_g_eval(kg, t)
    up, down = kernel_g_eval(kg, t + eps)[0], kernel_g_eval(kg, t - eps)[0]
    assert np.allclose(d1, (up - down) / (2 * eps), atol=1e-6)
    assert np.allclose(d2, (up - 2 * val + down) / eps**2, atol=1e-3)
    assert kernel_g_eval(kg, 1.5) == (0.0, 0.0, 0.0)


def test_moment_matrix_d1_p2():
    mm = moment_matrices(multi_index_set(1, 2), SphericalKernel(1))
    assert np.allclose(mm.q_mat, [[1.0, 0.0], [0.0, 1.0 / 7.0]], atol=1e-12)


def test_moment_matrix_matches_oracle(frozen):
    mm = moment_matrices(multi_index_set(2, 2), SphericalKernel(2))
    assert np.allclose(mm.q_mat, frozen["kernel"]["moment_matrix"], atol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_moment_matrix_positive_definite(d, p):
    mm = moment_matrices(multi_index_set(d, p), SphericalKernel(d))
    assert np.linalg.eigvalsh(mm.q_mat).min() > 0
    assert np.allclose(mm.q_mat @ mm.q_inv, np.eye(len(mm.q_mat)), atol=1e-9)


def test_f_k_total_is_zero_multi_index_moment():
    b = multi_index_set(2, 2)
    full = f_k_eval(b, SphericalKernel(2), 1, 1.0)
    assert full[0] == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(full[1:], 0.0, atol=1e-12)


@given(st.floats(1.0001, 50.0), st.sampled_from([1, 2]))
def test_f_k_zero_outside(y, k):
    b = multi_index_set(2, 3)
    assert np.all(f_k_eval(b, SphericalKernel(2), k, y) == 0.0)
    assert np.all(f_k_eval(b, SphericalKernel(2), k, -y) == 0.0)


def test_f_k_is_monotone_in_its_constant_entry():
    b = multi_index_set(2, 2)
    tab = f_k_table(b, SphericalKernel(2), 2, np.linspace(-1, 1, 21))
    assert np.all(np.diff(tab[:, 0]) >= -1e-14)
    # half the mass lies below zero by symmetry
    assert f_k_eval(b, SphericalKernel(2), 2, 0.0)[0] == pytest.approx(0.5, abs=1e-12)


def test_f_k_rejects_bad_axis():
    with pytest.raises(ValueError):
        f_k_eval(multi_index_set(2, 2), SphericalKernel(2), 3, 0.0)
