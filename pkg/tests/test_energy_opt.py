import json
from math import comb

import numpy as np
import pytest

from swdim import energy_opt as eo
from swdim.sw_system import SWState, _crop, build_case, gauge_apply, random_state
from swdim.torus_calculus import Torus, harmonic_part

CASE = build_case(8)
AMP = 1 / 81  # unit RMS on the 3^8 modes of K = 1


def _state(seed, N=None, amp=AMP):
    T = Torus(8, 1) if N is None else Torus(8, 1, N)
    return random_state(CASE, T, np.random.default_rng(seed), amplitude=amp)


@pytest.fixture(scope="module")
def state():
    return _state(0)


def test_zero_state_energy():
    eb = eo.energy(SWState.zero(CASE, Torus(8, 1, 3)))
    assert eb.total == 0 and all(v == 0 for v in eb.terms.values())
    assert eb.residual_total() == 0


def test_energy_identity(state):
    eb = eo.energy(state)
    assert set(eb.terms) == set(eo.TERM_NAMES) and set(eb.residual_norms) == set(eo.RESIDUAL_NAMES)
    scale = sum(abs(v) for v in eb.terms.values())
    assert abs(eb.total - eb.residual_total()) <= 1e-8 * scale
    assert eo.energy_identity_defect(state) <= 1e-8


def test_energy_gauge_invariance():
    # spinor on modes k_1 in {0, 1}; u = exp(i x_1) shifts them to {-1, 0} and a by a constant
    st = _state(1)
    st.phi[:1] = 0
    g = gauge_apply((1.0, np.array([1] + [0] * 7)), st, torus_out=Torus(8, 2, 5))
    back = st.copy()
    back.a = _crop(g.a, 1, 8)
    back.phi = _crop(g.phi, 1, 8)
    assert np.abs(g.phi).sum() == pytest.approx(np.abs(back.phi).sum())
    e0, e1 = eo.energy(st).total, eo.energy(back).total
    assert abs(e0 - e1) <= 1e-10 * max(1.0, e0)


def test_residual_scaling():
    # with a = beta = 0: Dirac residual is quadratic and the q terms quartic in phi
    st = _state(2, N=3)
    st.a[:] = 0
    st.beta[3][:] = 0
    obj = eo.Objective(st.torus)
    c1 = obj.components(st)
    st2 = st.copy()
    st2.phi = 2 * st.phi
    c2 = obj.components(st2)
    assert c2["dirac"] == pytest.approx(4 * c1["dirac"], rel=1e-12)
    for k in ("curvature_2", "curvature_4"):
        assert c2[k] == pytest.approx(16 * c1[k], rel=1e-12)


def test_gradient_matches_finite_differences():
    st = _state(3, N=3, amp=0.05)
    r = eo.gradient_check(st, np.random.default_rng(0), directions=4)
    assert r["max_relative_error"] <= 1e-5


def test_grad_energy_layout():
    st = _state(4, N=3)
    g = eo.grad_energy(st, exact_grid=False)
    assert g.a.shape == st.a.shape and g.phi.shape == st.phi.shape
    alg = eo._algebra()
    minus = [i for i in range(16) if i not in alg.plus]
    assert np.abs(g.phi[..., minus]).max() == 0


def test_minimize_from_zero_stays_zero():
    cfg = eo.SolveConfig(grid=3, noise=0.0)
    r = eo.minimize(cfg)
    assert r.converged and r.iterations == 0 and r.energy == 0


def test_minimize_trace_monotone():
    cfg = eo.SolveConfig(grid=3, max_iter=6, tol=0.0)
    seen = []
    r = eo.minimize(cfg, callback=lambda it, E: seen.append(E))
    energies = [row["energy"] for row in r.trace]
    assert not r.converged and r.reason == "max_iter" and r.iterations == 6
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0] and seen == energies[1:]


def test_solve_config_validation(tmp_path):
    for bad in ({"n": 5}, {"grid": 2}, {"shrink": 1.5}, {"metric": "h2"}, {"step_rule": "x"},
                {"zero_mode_scale": 0}, {"max_iter": -1}, {"bogus": 1}):
        with pytest.raises(ValueError):
            eo.SolveConfig.from_dict(bad)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"max_iter": 7, "seed": 3}))
    cfg = eo.SolveConfig.from_json(p)
    assert cfg.max_iter == 7 and cfg.seed == 3 and cfg.grid == 4


def test_perturbed_zero():
    cfg = eo.SolveConfig(grid=3)
    a, b = eo.perturbed_zero(cfg), eo.perturbed_zero(cfg)
    assert np.array_equal(a.phi, b.phi) and np.array_equal(a.beta[3], b.beta[3])
    assert np.abs(a.phi).max() <= cfg.noise * np.sqrt(2)
    # real beta and imaginary a on the grid: c_{-k} = conj(c_k) resp. -conj(c_k)
    flip = (slice(None, None, -1),) * 8
    assert np.allclose(a.beta[3][flip], np.conj(a.beta[3]))
    assert np.allclose(a.a[flip], -np.conj(a.a))
    assert not np.array_equal(eo.perturbed_zero(eo.SolveConfig(grid=3, seed=1)).phi, a.phi)


def test_beta_from_phi_zero_spinor():
    st = SWState.zero(CASE, Torus(8, 1, 3))
    h = np.arange(comb(8, 3), dtype=float)
    out = eo.beta_from_phi(st, h)[3]
    assert np.array_equal(out[(2,) * 8], h)
    out[(2,) * 8] = 0
    assert np.abs(out).max() == 0


def test_beta_from_phi_equation(state):
    h = harmonic_part(state.torus, {3: state.beta[3]})[3]
    beta = eo.beta_from_phi(state, h)
    assert eo.delta_beta_defect(state, beta) <= 1e-9
    # the zero mode is exactly the harmonic input
    assert np.array_equal(beta[3][(2,) * 8], h[(1,) * 8])


def test_pointwise_identities(state):
    r = eo.pointwise_identities(state)
    assert r["laplacian_nabla_defect"] <= 1e-8 and r["bochner_defect"] <= 1e-8
    assert np.isfinite(r["diagnostic_constant"])


def test_wrong_dimension():
    st = random_state(build_case(5), Torus(5, 1), np.random.default_rng(0))
    with pytest.raises(ValueError):
        eo.energy(st)
    with pytest.raises(ValueError):
        eo.Objective(Torus(5, 1))
