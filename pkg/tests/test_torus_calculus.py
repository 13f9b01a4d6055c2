from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import convolve

from swdim.clifford_core import build_rep
from swdim.sw_system import SWState, build_case, dirac_grid, random_state
from swdim.torus_calculus import (Torus, codiff, dirac_adjoint_apply, dirac_apply, ext_d, form_inner, green,
                                  harmonic_part, hodge_field, hodge_laplacian, realify, self_dual_part,
                                  spin_covariant)


def _rand_form(T, k, rng, real=False):
    return {k: T.random_coeffs(rng, (comb(T.n, k),), real=real)}


def _maxabs(f):
    return max((float(np.abs(v).max()) for v in f.values()), default=0.0)


def test_constant_forms():
    T = Torus(4, 1)
    f = {2: np.zeros(T.mode_shape + (6,), complex)}
    f[2][(1,) * 4] = np.arange(1, 7)
    assert _maxabs(ext_d(T, f)) == 0 and _maxabs(codiff(T, f)) == 0
    assert _maxabs(hodge_laplacian(T, f)) == 0 and _maxabs(green(T, f)) == 0
    assert np.array_equal(harmonic_part(T, f)[2], f[2])


def test_single_mode_derivative():
    # f = exp(i k.x) e_1  ->  d f = i (sum_j k_j e_j) ^ e_1 exp(i k.x)
    T = Torus(3, 1)
    k = (1, -1, 1)
    f = {1: np.zeros(T.mode_shape + (3,), complex)}
    idx = tuple(kj + 1 for kj in k)
    f[1][idx + (0,)] = 1.0
    df = ext_d(T, f)[2][idx]
    # basis order e12, e13, e23: i k_2 e_2^e_1 = -i k_2 e_12 and -i k_3 e_13
    assert np.allclose(df, [-1j * k[1], -1j * k[2], 0])


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 5), k=st.integers(0, 5), seed=st.integers(0, 2**32 - 1))
def test_cochain_identities(n, k, seed):
    k = min(k, n)
    T = Torus(n, 1)
    rng = np.random.default_rng(seed)
    f = _rand_form(T, k, rng)
    # d d f is a sum of cancelling products k_i k_j c; only rounding survives
    scale = _maxabs(f) * n ** 2
    assert _maxabs(ext_d(T, ext_d(T, f))) <= 1e-15 * scale
    assert _maxabs(codiff(T, codiff(T, f))) <= 1e-15 * scale


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 5), k=st.integers(0, 4), seed=st.integers(0, 2**32 - 1))
def test_codiff_is_adjoint(n, k, seed):
    k = min(k, n - 1)
    T = Torus(n, 1)
    rng = np.random.default_rng(seed)
    f, g = _rand_form(T, k, rng), _rand_form(T, k + 1, rng)
    lhs, rhs = form_inner(T, ext_d(T, f), g), form_inner(T, f, codiff(T, g))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_codiff_via_hodge(n):
    # d* = (-1)^k * d * on k-forms in odd dimension, d* = - * d * in even dimension
    T = Torus(n, 1)
    rng = np.random.default_rng(n)
    for k in range(1, n + 1):
        f = _rand_form(T, k, rng)
        sign = (-1) ** k if n % 2 else -1
        other = hodge_field(n, ext_d(T, hodge_field(n, f)))
        assert np.allclose(codiff(T, f)[k - 1], sign * other[k - 1])


def test_green_and_harmonic():
    T = Torus(3, 2)
    rng = np.random.default_rng(0)
    f = _rand_form(T, 1, rng)
    back = hodge_laplacian(T, green(T, f))[1] + harmonic_part(T, f)[1]
    assert np.abs(back - f[1]).max() <= 1e-12
    g = green(T, f)[1]
    idx = (3, 2, 4)
    assert np.allclose(g[idx], f[1][idx] / (1 + 0 + 4))


def test_stokes_and_orthogonality_8d():
    T = Torus(8, 1)
    rng = np.random.default_rng(1)
    b = _rand_form(T, 3, rng, real=True)
    db = ext_d(T, b)
    dplus = self_dual_part(8, db)
    n2 = form_inner(T, dplus, dplus).real
    assert abs(n2 - 0.5 * form_inner(T, db, db).real) <= 1e-9 * n2
    a = {1: 1j * T.random_coeffs(rng, (8,), real=True)}
    F = ext_d(T, a)
    c = form_inner(T, F, {2: 1j * codiff(T, b)[2]})
    assert abs(c) <= 1e-9 * np.sqrt(form_inner(T, F, F).real * n2)


@pytest.mark.parametrize("n,K", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_products_match_convolution(n, K):
    T = Torus(n, K)
    rng = np.random.default_rng(K)
    u, v = T.random_coeffs(rng), T.random_coeffs(rng)
    prod = T.from_grid(T.to_grid(u) * T.to_grid(v), 2 * K)
    assert np.abs(prod - convolve(u, v)).max() <= 1e-11


def test_realify_and_grid_roundtrip():
    T = Torus(3, 1)
    rng = np.random.default_rng(2)
    c = realify(T.random_coeffs(rng), 3)
    assert np.abs(T.to_grid(c).imag).max() < 1e-12
    assert np.allclose(T.from_grid(T.to_grid(c)), c)
    with pytest.raises(ValueError):
        Torus(3, 2, 4)


def _state(n, seed=0, amp=0.3):
    T = Torus(n, 1)
    return random_state(build_case(n), T, np.random.default_rng(seed), amplitude=amp)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_dirac_adjointness(n):
    st_ = _state(n)
    T = st_.torus
    rng = np.random.default_rng(7)
    rep = build_rep(n)
    for side in st_.case.sides:
        ch = st_.case.chirality[side]
        ri = list(rep.chiral_indices(ch))
        ro = list(rep.chiral_indices({"plus": "minus", "minus": "plus", "full": "full"}[ch]))
        phi = np.zeros(T.mode_shape + (rep.rank,), complex)
        psi = np.zeros_like(phi)
        phi[..., ri] = T.random_coeffs(rng, (len(ri),))
        psi[..., ro] = T.random_coeffs(rng, (len(ro),))
        Dphi = dirac_apply(st_.case, st_, phi, side)
        Dpsi = dirac_adjoint_apply(st_.case, st_, psi, side)
        lhs = np.vdot(T.embed(psi, 2), Dphi)
        rhs = np.vdot(Dpsi, T.embed(phi, 2))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)
        if n % 2 == 0:
            assert np.abs(Dphi[..., ri]).max() <= 1e-12  # chirality swap


def test_flat_dirac_kills_constants():
    T = Torus(4, 1)
    case = build_case(4)
    z = SWState.zero(case, T)
    phi = np.zeros(T.mode_shape + (4,), complex)
    phi[(1,) * 4 + (0,)] = 1.0
    assert np.abs(dirac_apply(case, z, phi)).max() < 1e-14
    assert max(np.abs(c).max() for c in spin_covariant(case, z, phi)) < 1e-14
    with pytest.raises(ValueError):
        dirac_apply(build_case(5), z, phi)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_covariant_unitarity_and_laplacian_nabla(n):
    st_ = _state(n, seed=3)
    T = st_.torus
    side = st_.case.sides[0]
    op = dirac_grid(st_, side)
    phi = T.to_grid(st_.spinor(side))[..., op.rows_in]
    cov = op.covariant(phi)
    p2 = np.sum(np.abs(phi) ** 2, axis=-1)
    for j in range(n):
        lhs = T.grid_deriv(p2, j).real
        rhs = 2 * np.sum(cov[j] * np.conj(phi), axis=-1).real
        assert np.abs(lhs - rhs).max() <= 1e-10
    lap = -sum(T.grid_deriv(T.grid_deriv(p2, j), j) for j in range(n)).real
    rough = op.covariant_adjoint(cov)
    rhs = np.sum(rough * np.conj(phi), axis=-1).real - sum(np.sum(np.abs(c) ** 2, axis=-1) for c in cov)
    assert np.abs(0.5 * lap - rhs).max() <= 1e-8
