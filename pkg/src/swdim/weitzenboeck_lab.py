"""Weitzenboeck remainders: the B term, Q(beta), closed forms and both-sides checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clifford_core import (CliffordRep, FormValue, act, act_exact, build_rep, contract,
                            exact_generators, hodge, wedge)
from .sw_system import DimCase, SWState, curvature_lhs_field, dirac_grid, dirac_perturbation_field
from .torus_calculus import apply_field, clifford_matrix_field, form_to_grid


@dataclass
class ConnectionPerturbation:
    n: int
    Bj: list

    def skew_defect(self) -> float:
        return max(float(np.abs(B + B.conj().T).max()) for B in self.Bj)


def b_term(rep: CliffordRep, beta_total: FormValue) -> ConnectionPerturbation:
    """``B_j = -(c(e_j) c(beta) + c(beta)^dagger c(e_j)) / 2``."""
    if beta_total.n != rep.n:
        raise ValueError("dimension mismatch")
    cb = act(rep, beta_total)
    cbH = cb.conj().T
    return ConnectionPerturbation(rep.n, [-0.5 * (g @ cb + cbH @ g) for g in rep.generators])


def q_beta(rep: CliffordRep, beta_total: FormValue) -> np.ndarray:
    """``Q = c(beta)^dagger c(beta) + (1/4) sum_j (c(e_j) c(beta) + c(beta)^dagger c(e_j))^2``."""
    cb = act(rep, beta_total)
    out = cb.conj().T @ cb
    for B in b_term(rep, beta_total).Bj:
        out = out + B @ B
    return out


def total_beta(n: int, beta: dict) -> FormValue:
    """Total perturbation form for the single-side families (dims 3, 5, 8 etc.)."""
    from .sw_system import build_case, dirac_perturbation

    return dirac_perturbation(build_case(n), beta)


def q_beta_closed(n: int, beta: dict) -> np.ndarray:
    """Closed forms of Q for n = 3, 5, 6 (both sides) and 8.

    ``beta`` maps degrees to FormValues; n=3 uses beta_3, n=5 uses beta_3 and
    beta_5, n=6 and n=8 use beta_3.
    """
    rep = build_rep(n)
    I = np.eye(rep.rank)
    b3 = beta.get(3, FormValue(n))
    if n == 3:
        return b3.norm2() * I
    if n == 5:
        b5 = beta.get(5, FormValue(n))
        c = act(rep, b3 - hodge(b5))
        return c @ c - 4 * b3.norm2() * I
    if n == 6:
        return -2 * b3.norm2() * I
    if n == 8:
        c = act(rep, b3)
        return -2 * c @ c - 4 * b3.norm2() * I
    raise ValueError(f"no closed form stated for n={n}")


def conj_sum(rep: CliffordRep, f: FormValue, power: int = 1, exact: bool = False):
    """``sum_j c(e_j) c(f)^power c(e_j)`` for a 3-form f.

    With ``exact=True`` the coefficients of f are taken as rationals and the
    result is a sympy matrix over the Gaussian rationals.
    """
    if f.degrees() not in ([3], []):
        raise ValueError("conj_sum expects a homogeneous 3-form")
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if exact:
        import sympy as sp

        C = act_exact(rep, f.coeffs)
        Cp = C if power == 1 else C * C
        out = sp.zeros(rep.rank, rep.rank)
        for g in exact_generators(rep.n):
            out += g * Cp * g
        return out.expand()
    C = act(rep, f)
    Cp = C if power == 1 else C @ C
    return sum(g @ Cp @ g for g in rep.generators)


# pointwise principal-part checks ----------------------------------------------------

def exterior_derivative_identity(rep: CliffordRep, grads: list, k: int) -> tuple:
    """Pointwise check of the Clifford formulas for d and d*.

    ``grads[j]`` plays the role of ``nabla_j gamma`` for a k-form gamma; the
    returned defects compare ``c(sum e_j ^ g_j)`` and ``c(-sum e_j -| g_j)`` with
    the symmetrised Clifford sums.
    """
    n = rep.n
    e = [FormValue(n, {(j,): 1.0}) for j in range(n)]
    dg = FormValue(n)
    dsg = FormValue(n)
    lhs_d = 0
    lhs_ds = 0
    for j in range(n):
        dg = dg + wedge(e[j], grads[j])
        dsg = dsg - contract(e[j], grads[j])
        C = act(rep, grads[j])
        g = rep.generators[j]
        lhs_d = lhs_d + 0.5 * (g @ C + (-1) ** k * C @ g)
        lhs_ds = lhs_ds + 0.5 * (g @ C - (-1) ** k * C @ g)
    return (float(np.abs(lhs_d - act(rep, dg)).max()), float(np.abs(lhs_ds - act(rep, dsg)).max()))


def principal_part_defect(case: DimCase, rng: np.random.Generator, table: str = "effective") -> dict:
    """Compare the curvature table with ``sum_j (c(e_j) c(nabla_j b) - c(nabla_j b)^dagger c(e_j))``.

    The derivatives of each beta_k are replaced by random k-forms, which is
    enough because both sides are linear in the first jet of beta.  Returns the
    defect per side on the side's spinors.
    """
    from .clifford_core import random_form, subsets
    from .sw_system import dirac_perturbation

    n = case.n
    rep = build_rep(n)
    grads = [{k: random_form(n, k, rng) for k in case.beta_degrees} for _ in range(n)]
    e = [FormValue(n, {(j,): 1.0}) for j in range(n)]
    out = {}
    for side in case.sides:
        lhs = 0
        for j in range(n):
            C = act(rep, dirac_perturbation(case, grads[j], side))
            g = rep.generators[j]
            lhs = lhs + g @ C - C.conj().T @ g
        curv = FormValue(n)
        for t in case.curvature_terms(side, table):
            dg = FormValue(n)
            dsg = FormValue(n)
            for j in range(n):
                dg = dg + wedge(e[j], grads[j][t.degree])
                dsg = dsg - contract(e[j], grads[j][t.degree])
            if t.op == "d":
                term = dg
            elif t.op == "d_plus":
                term = (dg + hodge(dg)) * 0.5
            elif t.op == "codiff":
                term = dsg
            else:
                term = hodge(dsg)
            curv = curv + term * t.coeff
        P = rep.projector(case.chirality[side])
        out[side] = float(np.abs((lhs - act(rep, curv)) @ P).max())
    del subsets
    return out


# both-sides evaluation on the torus ---------------------------------------------------

def weitz_defect(case: DimCase, state: SWState, side: str | None = None, table: str = "effective",
                 engine: bool = False) -> float:
    """Sup over grid points of ``D^*D phi - nabla^*nabla phi - (c(curv)/2 + Q) phi``.

    The curvature form is ``F_A + F_beta + C_beta`` assembled from the case
    tables (s = 0 on the flat torus).  With ``engine=True`` the principal part
    is instead ``c(F_A)/2 + (1/2) sum_j (c(e_j) c(d_j b) - c(d_j b)^dagger c(e_j))``,
    the dimension-independent form of the identity.
    """
    side = side or case.sides[0]
    torus = state.torus
    rep = build_rep(case.n)
    op = dirac_grid(state, side)
    phi = torus.to_grid(state.spinor(side))[..., op.rows_in]
    grads = op.ext_gradient(phi)
    lhs = op.adjoint(op.apply(phi, grads)) - op.rough_laplacian(phi, grads)
    rhs = op.q_apply(phi)
    if not engine:
        curv = form_to_grid(torus, curvature_lhs_field(state, side, table))
        if curv:
            Mc = clifford_matrix_field(rep, curv, op.rows_in, op.rows_in)
            rhs = rhs + 0.5 * apply_field(Mc, phi)
    else:
        from .torus_calculus import ext_d

        conn = {1: state.connection(side)}
        F = form_to_grid(torus, ext_d(torus, conn))
        rhs = rhs + 0.5 * apply_field(clifford_matrix_field(rep, F, op.rows_in, op.rows_in), phi)
        pert = dirac_perturbation_field(case, state.beta, side)
        ri, ro = op.rows_in, op.rows_out
        for j in range(case.n):
            dj = form_to_grid(torus, {k: torus.deriv(v, j) for k, v in pert.items()})
            if not dj:
                continue
            Mj = clifford_matrix_field(rep, dj, ro, ri)
            MjH = np.conj(np.swapaxes(Mj, 1, 2))
            g_io = rep.generators[j][np.ix_(ri, ro)]
            g_oi = rep.generators[j][np.ix_(ro, ri)]
            t = apply_field(Mj, phi) @ g_io.T - apply_field(MjH, phi @ g_oi.T)
            rhs = rhs + 0.5 * t
    return float(np.abs(lhs - rhs).max())


def change_laplacian_defect(case: DimCase, state: SWState, side: str | None = None) -> float:
    """``(nabla + B)^*(nabla + B) - nabla^*nabla + 2 sum B_j nabla_j + sum (nabla_j B_j + B_j^2)``.

    ``nabla_j B_j`` is the derivative of the pointwise operator, evaluated by
    the product rule as ``nabla_j(B_j phi) - B_j nabla_j phi``.
    """
    side = side or case.sides[0]
    torus = state.torus
    op = dirac_grid(state, side)
    phi = torus.to_grid(state.spinor(side))[..., op.rows_in]
    n = case.n
    plain = [op._ext(phi, j) for j in range(n)]
    rough_plain = sum(-op._ext(p, j) for j, p in enumerate(plain))
    full = op.rough_laplacian(phi)
    corr = 0
    for j in range(n):
        Bphi = op.b_apply(phi, j)
        dB = torus.grid_deriv(Bphi, j) - op.b_apply(torus.grid_deriv(phi, j), j)
        corr = corr - 2 * op.b_apply(plain[j], j) - (dB + op.b_apply(Bphi, j))
    return float(np.abs(full - (rough_plain + corr)).max())


def verification_records(case: DimCase, state: SWState, tol: float = 1e-8) -> list:
    out = []
    for side in case.sides:
        d = weitz_defect(case, state, side)
        e = weitz_defect(case, state, side, engine=True)
        out.append({"identity": f"weitzenboeck_{side}", "n": case.n, "defect": d, "tolerance": tol,
                    "pass": d <= tol})
        out.append({"identity": f"weitzenboeck_engine_{side}", "n": case.n, "defect": e, "tolerance": tol,
                    "pass": e <= tol})
    return out
