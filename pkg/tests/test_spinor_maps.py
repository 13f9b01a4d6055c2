from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swdim.clifford_core import FormValue, act, build_rep, form_inner, self_dual_basis
from swdim.spinor_maps import (SpinorValue, e_phi, hs_constants, iso_rank_check, iso_spec, q_of_phi)
from swdim.sw_system import build_case

SIDES = [(3, "plus"), (4, "plus"), (5, "plus"), (6, "plus"), (6, "minus"), (7, "plus"), (8, "plus"),
         (9, "plus"), (10, "plus"), (10, "minus")]


def _chirality(n, side):
    return iso_spec(n, side)[1]


def test_e_phi_basics():
    assert np.array_equal(e_phi(np.zeros(4), 4), np.zeros((4, 4)))
    rng = np.random.default_rng(1)
    phi = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    E = e_phi(phi, 8)
    assert abs(np.trace(E)) < 1e-12
    assert np.allclose(E, E.conj().T)
    p2 = np.vdot(phi, phi).real
    assert np.isclose(np.vdot(phi, E @ phi).real, 7 / 8 * p2 ** 2)
    with pytest.raises(ValueError):
        e_phi(phi, 0)


def test_spinor_value_chirality():
    rep = build_rep(4)
    v = np.zeros(4, complex)
    v[rep.minus[0]] = 1
    with pytest.raises(ValueError):
        SpinorValue(4, v, "plus")
    s = SpinorValue.random(4, "plus", np.random.default_rng(0))
    assert np.all(s.components[list(rep.minus)] == 0)


@pytest.mark.parametrize("n,side", SIDES)
def test_iso_rank(n, side):
    r = iso_rank_check(build_rep(n), n, side)
    assert r["pass"], r


def test_iso_rank_values():
    assert iso_rank_check(build_rep(6), 6, "plus")["rank"] == 15
    assert iso_rank_check(build_rep(3), 3)["rank"] == 3
    r8 = iso_rank_check(build_rep(8), 8)
    assert r8["rank"] == 63 == comb(8, 2) + comb(8, 4) // 2


@pytest.mark.parametrize("n,side", SIDES[:9])
def test_q_inverts_clifford(n, side):
    rng = np.random.default_rng(n)
    rep = build_rep(n)
    ch = _chirality(n, side)
    s = SpinorValue.random(n, ch, rng)
    q = q_of_phi(rep, build_case(n), s, side)
    idx = list(rep.chiral_indices(ch))
    M = act(rep, q)[np.ix_(idx, idx)]
    assert np.abs(M - e_phi(s.components[idx], len(idx))).max() <= 1e-10
    assert set(q.degrees()) <= set(iso_spec(n, side)[0])


def test_q_zero_and_wrong_chirality():
    rep = build_rep(8)
    assert q_of_phi(rep, 8, np.zeros(16)) == FormValue(8)
    v = np.zeros(16, complex)
    v[rep.minus[0]] = 1
    with pytest.raises(ValueError):
        q_of_phi(rep, 8, v)
    with pytest.raises(ValueError):
        q_of_phi(rep, 6, np.zeros(16))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(-3, 3), theta=st.floats(0, 6.3))
def test_q_quadratic_and_phase_invariant(seed, t, theta):
    rng = np.random.default_rng(seed)
    rep = build_rep(5)
    phi = SpinorValue.random(5, "full", rng).components
    q = q_of_phi(rep, 5, phi)
    assert q_of_phi(rep, 5, t * phi).max_abs_diff(q * t ** 2) <= 1e-10 * (1 + t ** 2)
    assert q_of_phi(rep, 5, np.exp(1j * theta) * phi).max_abs_diff(q) <= 1e-10


def test_inner_product_relation_8d():
    # 16 <theta, q(phi)_4> = <c(theta) phi, phi> for self-dual theta
    rng = np.random.default_rng(3)
    rep = build_rep(8)
    phi = SpinorValue.random(8, "plus", rng).components
    q = q_of_phi(rep, 8, phi)
    theta = FormValue(8)
    for b, c in zip(self_dual_basis(8), rng.standard_normal(35)):
        theta = theta + b * c
    lhs = 16 * form_inner(q.degree_part(4), theta).real
    rhs = np.vdot(phi, act(rep, theta) @ phi).real
    assert np.isclose(lhs, rhs, rtol=1e-12)
    # and 8 <i w, q_2> = <c(i w) phi, phi> for real 2-forms w
    w = FormValue.from_vector(8, 2, rng.standard_normal(28))
    lhs2 = 8 * form_inner(q.degree_part(2), w * 1j).real
    assert np.isclose(lhs2, np.vdot(phi, act(rep, w * 1j) @ phi).real, rtol=1e-12)


def test_hs_constants():
    a1, a2, spread = hs_constants(build_rep(8), np.random.default_rng(0), samples=4)
    assert abs(a1 - 8) < 1e-10 and abs(a2 - 16) < 1e-10 and spread < 1e-10
    with pytest.raises(ValueError):
        hs_constants(build_rep(6))
