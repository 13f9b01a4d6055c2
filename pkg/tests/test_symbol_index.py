from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swdim.sw_system import build_case
from swdim.symbol_index import (classical_4d_index, elliptic_check, index_4m, index_4m2, index_odd,
                                principal_symbol)


def test_zero_covector_gives_zero_symbol():
    assert np.abs(principal_symbol(build_case(8), np.zeros(8)).matrix).max() == 0


def test_symbol_dim3_along_axis():
    s = principal_symbol(build_case(3), [1, 0, 0])
    assert s.matrix.shape == (6, 6)
    assert abs(abs(np.linalg.det(s.matrix)) - 16) < 1e-12
    with pytest.raises(ValueError):
        principal_symbol(build_case(3), [1, 0])


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_symbol_homogeneous_of_degree_one(n):
    rng = np.random.default_rng(n)
    xi = rng.standard_normal(n)
    case = build_case(n)
    assert np.allclose(principal_symbol(case, 2.5 * xi).matrix, 2.5 * principal_symbol(case, xi).matrix)


@pytest.mark.parametrize("n", range(3, 11))
def test_elliptic_small_sample(n):
    r = elliptic_check(build_case(n), samples=10, seed=n)
    assert r["square"] and r["pass"] and r["min_singular_value"] >= 1e-6
    if n % 4 != 0:
        assert r["form_block_identity_defect"] <= 1e-9


def test_spinor_blocks_are_unitary_multiples():
    # i c(xi) squares to |xi|^2 on spinors
    xi = np.array([0.6, 0.0, 0.8, 0.0, 0.0, 0.0])
    s = principal_symbol(build_case(6), xi)
    assert len(s.spinor_blocks) == 2
    for b in s.spinor_blocks:
        assert np.allclose(b.conj().T @ b, np.eye(b.shape[1]))


def test_elliptic_check_rejects_no_samples():
    with pytest.raises(ValueError):
        elliptic_check(build_case(3), samples=0)


def test_index_odd():
    assert index_odd() == 0


@pytest.mark.parametrize("b1,bplus,chi,sigma,c1sq", [
    (4, 3, 0, 0, 0),  # T^4
    (0, 0, 2, 0, 0),  # S^4
    (0, 1, 3, 1, 9),  # CP^2 with the anticanonical class
    (0, 3, 24, -16, 0),  # K3
])
def test_index_4m_matches_classical(b1, bplus, chi, sigma, c1sq):
    # in dimension 4 the twist term is (c_1^2 - sigma) / 4
    twist = Fraction(c1sq - sigma, 4)
    assert index_4m([b1], bplus, twist) == classical_4d_index(c1sq, chi, sigma)


def test_index_4m_named_values():
    assert index_4m([4], 3) == 0 and index_4m([0], 0) == -1


def test_index_4m_twist_and_errors():
    assert index_4m([0, 0, 0], 0, twist=Fraction(4, 2)) == 1
    assert index_4m([1, 2, 1], 1) == -1 + 1 - 2 + 1 - 1
    with pytest.raises(ValueError):
        index_4m([0, 0], 0)
    with pytest.raises(ValueError):
        index_4m([1, -1, 1], 0)
    with pytest.raises(ValueError):
        index_4m([0, 0, 0], 0, twist=Fraction(1, 2))
    with pytest.raises(ValueError):
        index_4m2(1.5)


@given(chi=st.integers(-10**6, 10**6))
def test_index_4m2_is_minus_chi(chi):
    assert index_4m2(chi) == -chi
