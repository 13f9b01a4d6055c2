"""Frame-level algebra of the 5D circle-bundle solution.

At a point of the circle bundle we use the oriented orthonormal coframe
``(alpha, e_1, e_2, e_3, e_4)`` (form index 0 is ``alpha``) and the spinor
splitting ``L + Lambda^{0,1} L + Lambda^{0,2} L`` with basis order
``[1, dzbar_1, dzbar_2, dzbar_1 ^ dzbar_2]``.  Horizontal covectors act through
creation/annihilation operators on ``Lambda^{0,*}``, ``alpha`` acts by
``diag(-i, i, i, -i)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .clifford_core import CliffordRep, FormValue, act, build_rep, hodge, subsets, wedge
from .spinor_maps import q_of_phi
from .sw_system import build_case, dirac_perturbation

# recorded geometric input: D_A tau = tau, d alpha = -omega, F_B = -i omega, F_K = -4i omega, d omega = 0
HYPOTHESES = (
    "nabla^A tau = i alpha (x) tau (tautological section, horizontal parallelism)",
    "d alpha = -omega (connection form of B with F_B = -i omega)",
    "F_K = -4i omega (Kaehler-Einstein with c_1(X) = -4 c_1(L))",
    "d omega = 0 (Kaehler form closed)",
)


@dataclass
class FrameModel5D:
    rep: CliffordRep
    alpha: FormValue
    omega: FormValue
    tau: np.ndarray


def _fermion_ops():
    """Annihilation operators a_1, a_2 on the basis [1, z1, z2, z1 z2]."""
    a1 = np.zeros((4, 4), complex)
    a2 = np.zeros((4, 4), complex)
    # a_1^dag: 1 -> z1, z2 -> z1 z2 ; a_2^dag: 1 -> z2, z1 -> -z1 z2
    a1[0, 1] = 1
    a1[2, 3] = 1
    a2[0, 2] = 1
    a2[1, 3] = -1
    return a1, a2


def build_model() -> FrameModel5D:
    a1, a2 = _fermion_ops()
    gens = [np.diag([-1j, 1j, 1j, -1j])]
    for a in (a1, a2):
        ad = a.conj().T
        gens.append(ad - a)  # c(dx_k)
        gens.append(1j * (ad + a))  # c(dy_k); omega then acts as -2i on L
    vol = np.eye(4, dtype=complex)
    for g in gens:
        vol = vol @ g
        g.setflags(write=False)
    rep = CliffordRep(n=5, rank=4, generators=tuple(gens), volume=vol)
    alpha = FormValue(5, {(0,): 1.0})
    omega = FormValue(5, {(1, 2): 1.0, (3, 4): 1.0})
    tau = np.array([1, 0, 0, 0], complex)
    return FrameModel5D(rep, alpha, omega, tau)


def _record(name, defect, tol=0.0, **extra):
    return {"check": name, "defect": float(defect), "tolerance": tol, "pass": bool(defect <= tol), **extra}


def _exact(M: np.ndarray) -> sp.Matrix:
    return sp.Matrix(M.shape[0], M.shape[1],
                     lambda a, b: sp.nsimplify(M[a, b].real) + sp.I * sp.nsimplify(M[a, b].imag))


def check_model(model: FrameModel5D | None = None) -> list:
    """Clifford relations, c(alpha), c(dvol), horizontal swap and equivalence with build_rep(5)."""
    model = model or build_model()
    rep = model.rep
    I4 = np.eye(4)
    out = []
    anti = max(float(np.abs(g @ h + h @ g + 2 * (j == k) * I4).max())
               for j, g in enumerate(rep.generators) for k, h in enumerate(rep.generators))
    out.append(_record("clifford_relations", anti))
    skew = max(float(np.abs(g + g.conj().T).max()) for g in rep.generators)
    out.append(_record("generators_skew_hermitian", skew))
    ca = act(rep, model.alpha)
    out.append(_record("c_alpha_squared", np.abs(ca @ ca + I4).max()))
    out.append(_record("c_alpha_diagonal", np.abs(ca - np.diag([-1j, 1j, 1j, -1j])).max()))
    out.append(_record("c_dvol_is_i", np.abs(rep.volume - 1j * I4).max()))
    even, odd = [0, 3], [1, 2]
    swap = max(float(np.abs(g[np.ix_(even, even)]).max() + np.abs(g[np.ix_(odd, odd)]).max())
               for g in rep.generators[1:])
    out.append(_record("horizontal_swap_summands", swap))
    ciw = act(rep, model.omega * 1j)
    out.append(_record("c_i_omega", np.abs(ciw - np.diag([2, 0, 0, -2])).max()))
    w2 = wedge(model.omega, model.omega)
    out.append(_record("c_omega_squared", np.abs(act(rep, w2) - np.diag([-2, 2, 2, -2])).max()))
    ref = build_rep(5)
    tr = max(abs(np.trace(rep.basis_matrix(J)) - np.trace(ref.basis_matrix(J)))
             for k in range(6) for J in subsets(5, k))
    out.append(_record("equivalent_to_standard_rep", tr, products=32))
    return out


def check_q_tau(model: FrameModel5D | None = None) -> list:
    model = model or build_model()
    rep = model.rep
    q = q_of_phi(rep, 5, model.tau)
    expected = (model.omega * 2j - wedge(model.omega, model.omega)) * (1 / 8)
    out = [_record("q_tau_form", q.max_abs_diff(expected))]
    cq = act(rep, q)
    out.append(_record("c_q_tau_matrix", np.abs(cq - np.diag([0.75, -0.25, -0.25, -0.25])).max()))
    out.append(_record("c_q_tau_trace", abs(np.trace(cq))))
    q8 = q_of_phi(rep, 5, 2 * np.sqrt(2) * model.tau)
    target = model.omega * 2j - wedge(model.omega, model.omega)
    out.append(_record("q_scaled_tau", q8.max_abs_diff(target), tol=1e-14))
    # exact version: tau tau^* - |tau|^2/4 and the closed form agree symbolically
    Eq = _exact(np.outer(model.tau, model.tau.conj())) - sp.Rational(1, 4) * sp.eye(4)
    cexp = _exact(act(rep, model.omega * 2j)) - _exact(act(rep, wedge(model.omega, model.omega)))
    diff = (Eq - cexp / 8).applyfunc(sp.simplify)
    out.append(_record("q_tau_exact", 0.0 if diff == sp.zeros(4, 4) else 1.0))
    return out


def _betas(model: FrameModel5D):
    """``beta_3 = alpha ^ omega / 2`` and ``beta_5 = -dvol = -alpha ^ omega^2 / 2``.

    With ``omega^2 = 2 e_1234`` the 5-form must be ``-dvol`` for ``c(*beta_5)``
    to act as -1, which is what the Dirac equation needs.
    """
    b3 = wedge(model.alpha, model.omega) * 0.5
    b5 = wedge(model.alpha, wedge(model.omega, model.omega)) * -0.5
    return b3, b5


def check_dirac_solution(model: FrameModel5D | None = None) -> list:
    model = model or build_model()
    rep = model.rep
    b3, b5 = _betas(model)
    phi = 2 * np.sqrt(2) * model.tau
    out = []
    out.append(_record("c_beta3_phi", np.abs(act(rep, b3) @ phi + phi).max()))
    out.append(_record("c_star_beta3_phi", np.abs(act(rep, hodge(b3)) @ phi + 1j * phi).max()))
    out.append(_record("c_star_beta5_phi", np.abs(act(rep, hodge(b5)) @ phi + phi).max()))
    # -alpha ^ omega^2 without the 1/2 is twice this form and would act as -2
    literal = wedge(model.alpha, wedge(model.omega, model.omega)) * -1.0
    out.append(_record("beta5_is_half_of_alpha_omega2", literal.max_abs_diff(b5 * 2),
                       unnormalised_action=complex(act(rep, hodge(literal))[0, 0]).real))
    # D_A tau = i c(alpha) tau from nabla^A tau = i alpha (x) tau
    da_phi = 1j * act(rep, model.alpha) @ phi
    out.append(_record("dirac_a_phi_equals_phi", np.abs(da_phi - phi).max()))
    pert = dirac_perturbation(build_case(5), {3: b3, 5: b5})
    total = da_phi + act(rep, pert) @ phi
    out.append(_record("dirac_residual", np.abs(total).max(), tol=1e-14))
    # exact: phi = 2 sqrt 2 tau with sympy's sqrt(2)
    ph = sp.Matrix([2 * sp.sqrt(2), 0, 0, 0])
    res = _exact(1j * act(rep, model.alpha)) * ph + _exact(act(rep, pert)) * ph
    out.append(_record("dirac_residual_exact", 0.0 if res.applyfunc(sp.simplify) == sp.zeros(4, 1) else 1.0))
    return out


def check_curvature_identity(model: FrameModel5D | None = None) -> list:
    """Both parts of the curvature equation as exterior algebra at a point."""
    model = model or build_model()
    w = model.omega
    w2 = wedge(w, w)
    F_B = w * -1j
    F_K = w * -4j
    d_alpha = w * -1.0
    two_part = F_B * 2 - F_K
    four_part = wedge(d_alpha, w)
    rhs = q_of_phi(model.rep, 5, 2 * np.sqrt(2) * model.tau)
    b3, b5 = _betas(model)
    out = []
    out.append(_record("two_form_part", two_part.max_abs_diff(w * 2j)))
    out.append(_record("four_form_part", four_part.max_abs_diff(w2 * -1.0)))
    out.append(_record("curvature_equation", (two_part + four_part).max_abs_diff(rhs), tol=1e-14))
    # d beta_3 = d(alpha) ^ omega / 2 because d omega = 0; 2 d beta_3 = d alpha ^ omega
    out.append(_record("two_d_beta3", (wedge(d_alpha, w) * 0.5 * 2).max_abs_diff(four_part)))
    # *beta_3 = omega / 2 is closed, so d* beta_3 = -+ * d * beta_3 = 0; *beta_5 is a constant function
    out.append(_record("star_beta3_half_omega", hodge(b3).max_abs_diff(w * 0.5),
                       hypothesis="d omega = 0"))
    s5 = hodge(b5)
    out.append(_record("star_beta5_constant", 0.0 if s5.degrees() == [0] else 1.0,
                       value=complex(s5.coeffs.get((), 0)).real))
    return out


def run_all() -> list:
    model = build_model()
    recs = []
    for group, fn in (("model", check_model), ("q_tau", check_q_tau), ("dirac", check_dirac_solution),
                      ("curvature", check_curvature_identity)):
        for r in fn(model):
            r["group"] = group
            recs.append(r)
    return recs
