import numpy as np
import pytest

from swdim.clifford_core import act, hodge, wedge
from swdim.example5d import (HYPOTHESES, _betas, build_model, check_curvature_identity, check_dirac_solution,
                             check_model, check_q_tau, run_all)
from swdim.spinor_maps import q_of_phi


@pytest.fixture(scope="module")
def model():
    return build_model()


@pytest.mark.parametrize("fn", [check_model, check_q_tau, check_dirac_solution, check_curvature_identity])
def test_groups_pass(model, fn):
    recs = fn(model)
    assert recs and all(r["pass"] for r in recs), [r for r in recs if not r["pass"]]


def test_tau_in_line_summand(model):
    # c(alpha) acts as -i on L and c(i omega) as 2 there
    assert np.allclose(act(model.rep, model.alpha) @ model.tau, -1j * model.tau)
    assert np.allclose(act(model.rep, model.omega * 1j) @ model.tau, 2 * model.tau)


def test_q_tau_value(model):
    # q(tau) = (2i omega - omega^2) / 8 for |tau| = 1
    q = q_of_phi(model.rep, 5, model.tau)
    expected = (model.omega * 2j - wedge(model.omega, model.omega)) * 0.125
    assert q.max_abs_diff(expected) <= 1e-15


def test_perturbation_values(model):
    b3, b5 = _betas(model)
    phi = 2 * np.sqrt(2) * model.tau
    assert np.allclose(act(model.rep, b3) @ phi, -phi)
    assert np.allclose(act(model.rep, hodge(b5)) @ phi, -phi)
    assert complex(hodge(b5).coeffs[()]) == -1


def test_unnormalised_five_form_doubles(model):
    rec = {r["check"]: r for r in check_dirac_solution(model)}["beta5_is_half_of_alpha_omega2"]
    assert rec["unnormalised_action"] == pytest.approx(-2.0)


def test_run_all_groups():
    recs = run_all()
    assert {r["group"] for r in recs} == {"model", "q_tau", "dirac", "curvature"}
    assert all(r["pass"] for r in recs)
    assert len(HYPOTHESES) == 4
