"""The 8D energy, its identity with the residual norms, a descent solver and pointwise identities.

Everything here works on the flat torus T^8 with the plus-side system

    D_{A,beta} phi = 0,   F_A + 2i d*beta = q(phi)_2,   2 d^+ beta = q(phi)_4,

where ``beta`` is a real 3-form and ``phi`` a positive spinor.  The scalar
curvature ``s`` vanishes on flat tori, so the energy floor ``(1/14) int s^2`` is
carried as a zero field.

Grid fields are stored flat as ``(P, components)`` with ``P`` grid points.  The
pointwise algebra is done in chunks so that the 5^8 quadrature grid fits in a
few hundred megabytes.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .clifford_core import FormValue, act, build_rep, hodge, subsets
from .spinor_maps import iso_basis
from .sw_system import SWState, _position, build_case, curvature_lhs_field, residual_norms
from .torus_calculus import Torus, codiff, ext_d, green, harmonic_part, hodge_field, realify

DIM = 8
CHUNK = 1 << 15
QUARTIC = 7.0 / 32.0
TERM_NAMES = ("nabla_phi", "curvature_A", "codiff_beta", "d_beta", "quartic_phi", "c_beta_phi",
              "beta_phi")
RESIDUAL_NAMES = ("dirac", "curvature_2", "curvature_4")


class SolverDivergence(RuntimeError):
    """Raised when the energy becomes non-finite."""


def _require8(state) -> None:
    n = state.case.n if isinstance(state, SWState) else int(state)
    if n != DIM:
        raise ValueError(f"the energy functional is implemented for n = 8 only, got n = {n}")


# fast transforms --------------------------------------------------------------------

class _Transform:
    """Separable DFT between ``(2K+1,)*n`` coefficients and the ``N^n`` grid.

    Same conventions as :class:`Torus` (``to_grid`` sums ``c_k exp(i k.x)``), but
    implemented as small dense matrices per axis, which beats an FFT for
    N = 4, 5.  Real fields are packed two per complex transform.
    """

    def __init__(self, torus: Torus):
        self.torus = torus
        self.n = torus.n
        x = np.arange(torus.N) * (2 * np.pi / torus.N)
        self._mats = {}
        self._x = x

    def _E(self, K: int) -> np.ndarray:
        if K not in self._mats:
            self._mats[K] = np.exp(1j * np.outer(self._x, np.arange(-K, K + 1)))
        return self._mats[K]

    def _contract(self, arr: np.ndarray, mat: np.ndarray) -> np.ndarray:
        """Apply ``mat`` (new x old) along every spatial axis of ``(c, L, ..., L)``.

        Each step contracts the leading spatial axis and appends the new one at
        the end, so after n steps the axis order is restored.
        """
        c, L = arr.shape[0], mat.shape[1]
        out = arr.reshape(c, -1)
        for _ in range(self.n):
            out = np.matmul(out.reshape(c, L, -1).transpose(0, 2, 1), mat.T).reshape(c, -1)
        return out.reshape((c,) + (mat.shape[0],) * self.n)

    def to_grid(self, c: np.ndarray) -> np.ndarray:
        """Coefficients ``(M,)*n + (k,)`` -> flat grid ``(P, k)``."""
        K = (c.shape[0] - 1) // 2
        comps = np.moveaxis(c.reshape(c.shape[:self.n] + (-1,)), -1, 0)
        g = self._contract(comps, self._E(K))
        return _c(g.reshape(g.shape[0], -1).T)

    def from_grid(self, v: np.ndarray, K: int) -> np.ndarray:
        """Flat grid ``(P, k)`` -> coefficients ``(2K+1,)*n + (k,)``."""
        N = self.torus.N
        comps = v.T.reshape((v.shape[1],) + (N,) * self.n)
        c = self._contract(comps, self._E(K).conj().T / N)
        return np.moveaxis(c, 0, -1)

    def real_to_grid(self, c: np.ndarray) -> np.ndarray:
        """Grid values of real fields (coefficients conjugate-symmetric)."""
        k = c.shape[-1]
        h = (k + 1) // 2
        packed = c[..., :h].copy()
        packed[..., :k - h] += 1j * c[..., h:]
        g = self.to_grid(packed)
        return np.concatenate([g.real, g[:, :k - h].imag], axis=1)

    def real_from_grid(self, v: np.ndarray, K: int) -> np.ndarray:
        """Coefficients of real grid fields ``(P, k)``."""
        k = v.shape[1]
        h = (k + 1) // 2
        packed = v[:, :h].astype(complex)
        packed[:, :k - h] += 1j * v[:, h:]
        H = self.from_grid(packed, K)
        Hf = np.conj(H[(slice(None, None, -1),) * self.n])
        first = 0.5 * (H + Hf)
        second = (0.5 / 1j) * (H - Hf)[..., :k - h]
        return np.concatenate([first, second], axis=-1)


# the 8D algebra -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Algebra8:
    """Constant matrices of the plus-side algebra, stored contiguously for BLAS."""

    plus: list
    minus: list
    gen_oi: np.ndarray      # (8, 8o, 8i) c(e_j): S+ -> S-
    gen_io: np.ndarray      # (8, 8i, 8o)
    gen_phi: np.ndarray     # (8i, 8j*8o): phi -> c(e_j) phi for all j
    gen_r: np.ndarray       # (8o, 8j*8i): r -> c(e_j) r for all j
    # complex tables are also kept as interleaved (re, im) float views so that
    # real x complex products run as a single real GEMM
    pert: np.ndarray        # (56, 128) c(b) per beta component, S+ -> S-
    pert_t: np.ndarray      # (128, 56)
    cbeta: np.ndarray       # (56, 128) c(e_I) from S+ to S-
    qflat: np.ndarray       # (63, 128) Hermitian basis c(s_b b) on S+
    qcols: np.ndarray       # interleaved columns of conj(phi_a) phi_b kept for a <= b (real), a < b (imag)
    qreal_t: np.ndarray     # (64, 63) <M_b phi, phi> from those 64 real numbers
    qnorm: np.ndarray       # (63,) tr(M_b^2)
    q2: np.ndarray          # (63, 28) imaginary parts of the degree-2 coefficients of s_b b
    q4: np.ndarray          # (63, 70) degree-4 coefficients (real)
    coup: np.ndarray        # (64, 128) c(b) for the 56 beta components, then i c(e_j) / 2 for alpha_j
    coup_t: np.ndarray      # (128, 64)
    q_forms: np.ndarray     # (64, 98) real Hermitian data of phi -> [Im q_2 | q_4]
    q_back: np.ndarray      # (98, 128) [R_2 | R_4] -> sum_b (2 R_2.q2_b + 4 R_4.q4_b) M_b / tr(M_b^2)


def _c(x):
    return np.ascontiguousarray(x)


@lru_cache(maxsize=1)
def _algebra() -> _Algebra8:
    case = build_case(DIM)
    rep = build_rep(DIM)
    ri = list(rep.chiral_indices("plus"))
    ro = list(rep.chiral_indices("minus"))
    gens = np.array(rep.generators)
    gen_oi = gens[:, ro][:, :, ri]
    gen_io = gens[:, ri][:, :, ro]
    threes = subsets(DIM, 3)
    pert = np.zeros((len(threes), len(ro), len(ri)), complex)
    cbeta = np.zeros_like(pert)
    for a, I in enumerate(threes):
        e = FormValue(DIM, {I: 1.0})
        cbeta[a] = rep.basis_matrix(I)[np.ix_(ro, ri)]
        for t in case.dirac_terms("plus"):
            f = hodge(e) if t.star else e
            pert[a] += t.coeff * act(rep, f)[np.ix_(ro, ri)]
    basis, _ = iso_basis(DIM, "plus")
    qmat, qnorm = [], []
    q2 = np.zeros((len(basis), comb(DIM, 2)), complex)
    q4 = np.zeros((len(basis), comb(DIM, 4)), complex)
    for b_i, (b, s) in enumerate(basis):
        M = act(rep, b * s)[np.ix_(ri, ri)]
        qmat.append(M)
        qnorm.append(np.trace(M @ M).real)
        for I, cI in b.coeffs.items():
            tgt = q2 if len(I) == 2 else q4
            tgt[b_i, _position(DIM, I)] += s * cI
    if np.abs(q2.real).max() > 0 or np.abs(q4.imag).max() > 0:
        raise ArithmeticError("unexpected prefactors in the 8D identification")
    pf = pert.reshape(len(pert), -1)
    cf = cbeta.reshape(len(cbeta), -1)
    qf = np.array(qmat).reshape(len(qmat), -1)
    # <M phi, phi> = sum_a M_aa |phi_a|^2 + 2 sum_{a<b} Re(M_ab conj(phi_a) phi_b)
    cols, rows = [], []
    Mt = np.array(qmat)
    for x in range(8):
        for y in range(x, 8):
            cols.append(2 * (8 * x + y))
            rows.append(Mt[:, x, y].real * (1 if x == y else 2))
            if y > x:
                cols.append(2 * (8 * x + y) + 1)
                rows.append(-2 * Mt[:, x, y].imag)
    qcols = np.array(cols)
    qreal = _c(np.array(rows))
    qnorm = np.array(qnorm)
    coup = np.concatenate([pf, 0.5j * gen_oi.reshape(DIM, -1)])
    qforms = np.concatenate([q2.imag, q4.real], axis=1)
    weights = np.array([2.0] * q2.shape[1] + [4.0] * q4.shape[1])
    q_back = (weights[:, None] * qforms.T / qnorm) @ qf
    return _Algebra8(ri, ro, gen_oi, gen_io, _c(gen_oi.transpose(2, 0, 1).reshape(8, -1)),
                     _c(gen_io.transpose(2, 0, 1).reshape(8, -1)), _ri(pf), _c(_ri(pf).T), _ri(cf),
                     _ri(qf), qcols, qreal, qnorm, _c(q2.imag), _c(q4.real), _ri(coup),
                     _c(_ri(coup).T), _c((qreal / qnorm) @ qforms), _ri(q_back))


def _ri(M: np.ndarray) -> np.ndarray:
    """Interleaved float view ``(rows, 2 * cols)`` of a complex matrix."""
    return _c(M.astype(complex)).view(np.float64)


def _cx(X: np.ndarray) -> np.ndarray:
    """Complex view of an interleaved float result."""
    return X.view(np.complex128)


def _chunks(P: int):
    for s in range(0, P, CHUNK):
        yield slice(s, min(P, s + CHUNK))


def _q_values(alg: _Algebra8, phi: np.ndarray) -> np.ndarray:
    """Hilbert-Schmidt coordinates ``<M_b phi, phi> / tr(M_b^2)`` of ``E_phi`` (P, 63)."""
    outer = (np.conj(phi)[:, :, None] * phi[:, None, :]).reshape(len(phi), -1)
    return (np.take(outer.view(np.float64), alg.qcols, axis=1) @ alg.qreal_t) / alg.qnorm


def _pert_matrices(alg: _Algebra8, beta: np.ndarray) -> np.ndarray:
    """Pointwise ``c(b)`` (P, 8o, 8i) from real beta components."""
    return _cx(beta @ alg.pert).reshape(len(beta), 8, 8)


def _mv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.matmul(M, v[:, :, None])[:, :, 0]


def _mhv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``M^dagger v`` pointwise."""
    return np.matmul(v.conj()[:, None, :], M)[:, 0, :].conj()


# linear grid data -------------------------------------------------------------------

N2, N3 = comb(DIM, 2), comb(DIM, 3)


@dataclass
class _Linear:
    """Grid quantities that depend linearly on the fields (so line searches are cheap)."""

    phi: np.ndarray     # (P, 8)  S+ components
    dphi: np.ndarray    # (P, 8)  flat Dirac sum_j c(e_j) d_j phi, S- components
    coup: np.ndarray    # (P, 64) beta (56 real components) then alpha with a = i alpha
    forms: np.ndarray   # (P, 98) Im(F_A + 2i d*beta) (the field is imaginary), then 2 d^+ beta

    def axpy(self, t: float, other: "_Linear") -> "_Linear":
        return _Linear(self.phi + t * other.phi, self.dphi + t * other.dphi,
                       self.coup + t * other.coup, self.forms + t * other.forms)

    @property
    def beta(self):
        return self.coup[:, :N3]

    @property
    def alpha(self):
        return self.coup[:, N3:]


def _flat_dirac(torus: Torus, alg: _Algebra8, phi_plus: np.ndarray) -> np.ndarray:
    """``sum_j c(e_j) d_j`` in coefficient space, S+ -> S-."""
    out = 0
    for j in range(DIM):
        out = out + torus.deriv(phi_plus, j) @ alg.gen_oi[j].T
    return out


def _flat_dirac_adjoint(torus: Torus, alg: _Algebra8, psi_minus: np.ndarray) -> np.ndarray:
    out = 0
    for j in range(DIM):
        out = out + torus.deriv(psi_minus, j) @ alg.gen_io[j].T
    return out


def _linear(state: SWState, tr: _Transform) -> _Linear:
    alg = _algebra()
    torus = state.torus
    phi_c = state.phi[..., alg.plus]
    lhs = curvature_lhs_field(state, "plus")
    coup = np.concatenate([state.beta[3], -1j * state.a], axis=-1)
    forms = np.concatenate([-1j * lhs[2], lhs[4]], axis=-1)
    return _Linear(phi=tr.to_grid(phi_c), dphi=tr.to_grid(_flat_dirac(torus, alg, phi_c)),
                   coup=tr.real_to_grid(coup), forms=tr.real_to_grid(forms))


@dataclass
class _Pointwise:
    energy: np.ndarray                    # (3,) weighted residual norms
    grads: dict | None = None


def _evaluate(lin: _Linear, volume: float, with_grad: bool = False) -> _Pointwise:
    """Residual norms ``(|D phi|^2, 2|R_2|^2, 4|R_4|^2)`` and pointwise gradient data.

    ``D phi = D_0 phi + c(b + i alpha / 2) phi`` with ``c`` acting from S+ to S-.
    """
    alg = _algebra()
    P = len(lin.phi)
    acc = np.zeros(3)
    if with_grad:
        g = {"r": np.empty((P, 8), complex), "phi": np.empty((P, 8), complex),
             "coup": np.empty((P, 64)), "R": np.empty((P, N2 + comb(DIM, 4)))}
    for sl in _chunks(P):
        phi = lin.phi[sl]
        Mc = _cx(lin.coup[sl] @ alg.coup).reshape(-1, 8, 8)
        r = lin.dphi[sl] + _mv(Mc, phi)
        outer = (np.conj(phi)[:, :, None] * phi[:, None, :]).reshape(len(phi), -1)
        R = lin.forms[sl] - np.take(outer.view(np.float64), alg.qcols, axis=1) @ alg.q_forms
        R2, R4 = R[:, :N2], R[:, N2:]
        acc += [np.vdot(r, r).real, 2 * np.vdot(R2, R2), 4 * np.vdot(R4, R4)]
        if not with_grad:
            continue
        g["r"][sl] = r
        g["R"][sl] = R
        W = (r[:, :, None] * np.conj(phi)[:, None, :]).reshape(len(r), -1)
        g["coup"][sl] = 2 * (W.view(np.float64) @ alg.coup_t)
        Mq = _cx(R @ alg.q_back).reshape(-1, 8, 8)
        g["phi"][sl] = 2 * _mhv(Mc, r) - 4 * _mv(Mq, phi)
    return _Pointwise(acc * volume / P, g if with_grad else None)


def _im_field(c: np.ndarray, n: int) -> np.ndarray:
    """Coefficients of the pointwise imaginary part of a field."""
    flip = np.conj(c[(slice(None, None, -1),) * n])
    return (c - flip) / 2j


def _gradient(state: SWState, pw: _Pointwise, tr: _Transform) -> SWState:
    """L^2 gradient: pointwise parts by projection, derivative parts in coefficient space."""
    alg = _algebra()
    torus = state.torus
    K = torus.K
    g = pw.grads
    r_hat = tr.from_grid(g["r"], K)
    R = tr.real_from_grid(g["R"], K)
    R2, R4 = 1j * R[..., :N2], R[..., N2:]
    coup = tr.real_from_grid(g["coup"], K)
    G_alpha = coup[..., N3:] + 4 * _im_field(codiff(torus, {2: R2})[1], DIM)
    G_beta = (coup[..., :N3] + 8 * _im_field(ext_d(torus, {2: R2})[3], DIM)
              + 16 * realify(codiff(torus, {4: R4})[3], DIM))
    G_phi = 2 * _flat_dirac_adjoint(torus, alg, r_hat) + tr.from_grid(g["phi"], K)
    out = SWState.zero(state.case, torus)
    out.a = 1j * realify(G_alpha, DIM)
    out.beta[3] = realify(G_beta, DIM)
    out.phi[..., alg.plus] = G_phi
    return out


# public API ---------------------------------------------------------------------------

@dataclass
class EnergyBreakdown:
    """Energy split into its defining terms, plus the three weighted residual norms.

    ``total`` is the sum of ``terms``; ``residual_norms`` holds ``int |D phi|^2``,
    ``2 int |F_A + 2i d*beta - q_2|^2`` and ``4 int |2 d^+beta - q_4|^2``.
    """

    total: float
    terms: dict
    residual_norms: dict
    scalar_floor: float = 0.0

    def residual_total(self) -> float:
        return float(sum(self.residual_norms.values()))


def quadrature_torus(torus: Torus) -> Torus:
    """Grid on which every energy integrand (degree four in K-band fields) is integrated exactly."""
    return Torus(torus.n, torus.K, max(torus.N, 4 * torus.K + 1))


def on_torus(state: SWState, torus: Torus) -> SWState:
    """Same coefficients viewed on another grid with the same mode cutoff."""
    if torus.K != state.torus.K or torus.n != state.torus.n:
        raise ValueError("grids must share dimension and cutoff")
    st = state.copy()
    st.torus = torus
    return st


def energy(state: SWState, exact_grid: bool = True) -> EnergyBreakdown:
    """Term-by-term energy by quadrature (on the 4K+1 grid unless ``exact_grid=False``).

    ``nabla`` is the perturbed spin connection ``d + a/2 + B_j``; the terms are
    computed independently of the residuals, so comparing the two sides is a
    real test of the completing-the-square identity.
    """
    _require8(state)
    if exact_grid:
        state = on_torus(state, quadrature_torus(state.torus))
    torus = state.torus
    tr = _Transform(torus)
    alg = _algebra()
    vol = torus.volume
    P = torus.points
    lin = _linear(state, tr)
    res = _evaluate(lin, vol).energy
    phi_c = state.phi[..., alg.plus]
    F = tr.real_to_grid(-1j * ext_d(torus, {1: state.a})[2])        # imaginary part of F_A
    dsb = tr.real_to_grid(codiff(torus, {3: state.beta[3]})[2])
    db = tr.real_to_grid(ext_d(torus, {3: state.beta[3]})[4])
    terms = dict.fromkeys(TERM_NAMES, 0.0)
    terms["curvature_A"] = 2 * np.sum(F ** 2)
    terms["codiff_beta"] = 8 * np.sum(dsb ** 2)
    terms["d_beta"] = 8 * np.sum(db ** 2)
    del F, dsb, db
    phi = lin.phi
    beta = lin.beta
    p2 = np.sum(np.abs(phi) ** 2, axis=1)
    terms["quartic_phi"] = QUARTIC * np.sum(p2 ** 2)
    terms["beta_phi"] = -4 * np.sum(np.sum(beta ** 2, axis=1) * p2)
    dphi = [tr.to_grid(torus.deriv(phi_c, j)) for j in range(DIM)]
    cb = nab = 0.0
    for sl in _chunks(P):
        ph, bt = phi[sl], _c(beta[sl])
        Cb = _cx(bt @ alg.cbeta).reshape(-1, 8, 8)
        cb += np.sum(np.abs(_mv(Cb, ph)) ** 2)
        Mb = _pert_matrices(alg, bt)
        Mbphi = _mv(Mb, ph)
        for j in range(DIM):
            # B_j = -(c_j c(b) + c(b)^dagger c_j) / 2 on S+
            Bphi = -0.5 * (Mbphi @ alg.gen_io[j].T + _mhv(Mb, ph @ alg.gen_oi[j].T))
            v = dphi[j][sl] + 0.5j * lin.alpha[sl, j:j + 1] * ph + Bphi
            nab += np.sum(np.abs(v) ** 2)
    del dphi
    terms["c_beta_phi"] = -2 * cb
    terms["nabla_phi"] = nab
    terms = {k: float(v * vol / P) for k, v in terms.items()}
    rn = dict(zip(RESIDUAL_NAMES, (float(x) for x in res)))
    return EnergyBreakdown(float(sum(terms.values())), terms, rn)


def energy_identity_defect(state: SWState, relative: bool = True) -> float:
    """``|E - (1/14) int s^2 - sum of residual norms|`` (s = 0 on flat tori).

    The relative version divides by the sum of the absolute values of the energy
    terms, the natural scale of the cancellation.
    """
    eb = energy(state)
    d = abs(eb.total - eb.scalar_floor - eb.residual_total())
    if not relative:
        return d
    scale = sum(abs(v) for v in eb.terms.values())
    return d / scale if scale > 0 else d


class Objective:
    """Weighted residual energy on a fixed grid, with its analytic gradient.

    On the 4K+1 grid it equals :func:`energy`; on coarser grids it is the
    collocation version used by the solver.  Gradients are with respect to the
    L^2 inner product of the coefficients (see :func:`tangent_inner`).
    """

    def __init__(self, torus: Torus):
        _require8(torus.n)
        self.torus = torus
        self.tr = _Transform(torus)

    def linear(self, state: SWState) -> _Linear:
        return _linear(state, self.tr)

    def value_linear(self, lin: _Linear) -> float:
        return float(_evaluate(lin, self.torus.volume).energy.sum())

    def components(self, state: SWState) -> dict:
        e = _evaluate(self.linear(state), self.torus.volume).energy
        return dict(zip(RESIDUAL_NAMES, (float(x) for x in e)))

    def value(self, state: SWState) -> float:
        return self.value_linear(self.linear(state))

    def value_and_grad(self, state: SWState, lin: _Linear | None = None):
        lin = self.linear(state) if lin is None else lin
        pw = _evaluate(lin, self.torus.volume, with_grad=True)
        return float(pw.energy.sum()), _gradient(state, pw, self.tr), pw.energy


def _fields(state: SWState):
    return [state.a, state.beta[3], state.phi]


def tangent_inner(torus: Torus, u: SWState, v: SWState) -> float:
    """Real L^2 inner product of two tangent states (Parseval)."""
    return float(sum(np.vdot(x, y).real for x, y in zip(_fields(u), _fields(v))) * torus.volume)


def state_axpy(state: SWState, t: float, direction: SWState) -> SWState:
    out = state.copy()
    out.a = state.a + t * direction.a
    out.beta = {3: state.beta[3] + t * direction.beta[3]}
    out.phi = state.phi + t * direction.phi
    return out


def grad_energy(state: SWState, exact_grid: bool = True) -> SWState:
    """Gradient of the residual energy as a tangent state (same field layout as the state)."""
    _require8(state)
    torus = quadrature_torus(state.torus) if exact_grid else state.torus
    obj = Objective(torus)
    _, g, _ = obj.value_and_grad(on_torus(state, torus))
    return on_torus(g, state.torus)


def random_direction(state: SWState, rng: np.random.Generator) -> SWState:
    """Unit tangent direction with real beta, imaginary a and positive spinor."""
    alg = _algebra()
    torus = state.torus
    d = SWState.zero(state.case, torus)
    d.a = 1j * torus.random_coeffs(rng, (DIM,), real=True)
    d.beta[3] = torus.random_coeffs(rng, (comb(DIM, 3),), real=True)
    d.phi[..., alg.plus] = torus.random_coeffs(rng, (len(alg.plus),))
    nrm = math.sqrt(tangent_inner(torus, d, d))
    d.a, d.beta[3], d.phi = d.a / nrm, d.beta[3] / nrm, d.phi / nrm
    return d


def gradient_check(state: SWState, rng: np.random.Generator, directions: int = 10,
                   h: float = 1e-2, exact_grid: bool = False) -> dict:
    """Analytic directional derivatives against central differences of the objective."""
    _require8(state)
    torus = quadrature_torus(state.torus) if exact_grid else state.torus
    st = on_torus(state, torus)
    obj = Objective(torus)
    _, g, _ = obj.value_and_grad(st)
    errs = []
    for _ in range(directions):
        d = random_direction(st, rng)
        fd = (obj.value(state_axpy(st, h, d)) - obj.value(state_axpy(st, -h, d))) / (2 * h)
        an = tangent_inner(torus, g, d)
        errs.append(abs(fd - an) / max(abs(fd), abs(an), 1e-300))
    return {"directions": directions, "step": h, "max_relative_error": float(max(errs)),
            "errors": [float(e) for e in errs]}


# solver ----------------------------------------------------------------------------------

# Curvature of the quadratic part of the energy at the zero state, per field:
# |D phi|^2 -> |k|^2, 2|da|^2 -> 2|k|^2 (transverse a), 8|d*beta|^2 + 8|d beta|^2 -> 8|k|^2.
SOBOLEV_WEIGHTS = {"a": 4.0, "beta": 16.0, "phi": 2.0}
METRICS = ("l2", "sobolev")


def precondition(grad: SWState, metric: str = "sobolev", zero_mode_scale: float = 1.0) -> SWState:
    """Gradient for the descent metric: L^2, or the H^1-type metric ``w_f |k|^2``.

    In the Sobolev metric the constant modes get weight ``w_f * zero_mode_scale``.
    The metric is fixed (state independent), so descent in it is still a
    first-order method; it equalises the curvature of the non-constant modes.
    """
    if metric == "l2":
        return grad
    torus = grad.torus
    out = grad.copy()
    scale = 1.0 / np.where(torus.k2 > 0, torus.k2, zero_mode_scale)[..., None]
    out.a = grad.a * scale / SOBOLEV_WEIGHTS["a"]
    out.beta = {3: grad.beta[3] * scale / SOBOLEV_WEIGHTS["beta"]}
    out.phi = grad.phi * scale / SOBOLEV_WEIGHTS["phi"]
    return out


@dataclass
class SolveConfig:
    n: int = DIM
    modes: int = 1
    grid: int = 4
    step: float = 0.5
    armijo: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    max_step: float = 1e12
    min_step: float = 1e-20
    tol: float = 1e-6
    max_iter: int = 5000
    seed: int = 0
    noise: float = 1e-2
    metric: str = "sobolev"
    step_rule: str = "bb"
    zero_mode_scale: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "SolveConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "SolveConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.n != DIM:
            raise ValueError("the solver runs in dimension 8 only")
        if self.modes < 1 or self.grid < 2 * self.modes + 1:
            raise ValueError("grid must resolve the mode cutoff")
        if not (0 < self.shrink < 1) or self.grow < 1 or self.step <= 0 or not (0 < self.armijo < 1):
            raise ValueError("invalid step rule parameters")
        if self.zero_mode_scale <= 0:
            raise ValueError("zero_mode_scale must be positive")
        if self.step_rule not in ("bb", "grow"):
            raise ValueError("step_rule must be 'bb' or 'grow'")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {sorted(METRICS)}")
        if self.max_iter < 0 or self.tol < 0:
            raise ValueError("max_iter and tol must be non-negative")


@dataclass
class SolveResult:
    state: SWState
    trace: list
    converged: bool
    iterations: int
    reason: str
    energy: float
    runtime_s: float = 0.0
    final: dict = field(default_factory=dict)


def perturbed_zero(config: SolveConfig) -> SWState:
    """Zero state plus uniform noise of amplitude ``noise`` on every coefficient with |k|_inf <= 1."""
    alg = _algebra()
    torus = Torus(DIM, config.modes, config.grid)
    rng = np.random.default_rng(config.seed)
    st = SWState.zero(build_case(DIM), torus)
    K = torus.K
    low = (slice(K - 1, K + 2),) * DIM if K >= 1 else (slice(None),) * DIM

    def noise(shape):
        return config.noise * (rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape))

    a = np.zeros_like(st.a)
    a[low] = noise(a[low].shape)
    st.a = 1j * realify(a, DIM)
    b = np.zeros_like(st.beta[3])
    b[low] = noise(b[low].shape)
    st.beta[3] = realify(b, DIM)
    p = np.zeros(torus.mode_shape + (len(alg.plus),), complex)
    p[low] = noise(p[low].shape)
    st.phi[..., alg.plus] = p
    return st


def minimize(config: SolveConfig, state: SWState | None = None, callback=None) -> SolveResult:
    """Gradient descent with Armijo backtracking on the residual energy.

    The descent direction is the gradient in the configured metric.  Each line
    search starts from a trial step (Barzilai-Borwein estimate from the last two
    gradients, or ``grow`` times the last accepted step) and halves until the
    sufficient-decrease test holds.  The trace records every accepted iterate,
    so its energies never increase.  Hitting ``max_iter`` returns the last (and
    lowest) iterate with ``converged=False``.
    """
    config.validate()
    t0 = time.time()
    state = perturbed_zero(config) if state is None else state.copy()
    _require8(state)
    obj = Objective(state.torus)
    vol = state.torus.volume
    lin = obj.linear(state)
    pw = _evaluate(lin, vol, with_grad=True)
    E = float(pw.energy.sum())
    if not math.isfinite(E):
        raise SolverDivergence("initial energy is not finite")
    g = _gradient(state, pw, obj.tr)
    trace = [_trace_row(0, E, pw.energy, 0.0)]
    t_next = config.step
    reason = "max_iter"
    it = 0
    while True:
        if E <= config.tol:
            reason = "converged"
            break
        if it >= config.max_iter:
            break
        p = precondition(g, config.metric, config.zero_mode_scale)
        gp = tangent_inner(state.torus, g, p)
        if gp <= 0.0:
            reason = "stationary"
            break
        glin = obj.linear(p)
        t = min(max(t_next, config.min_step), config.max_step)
        finite_seen = False
        while t >= config.min_step:
            trial = lin.axpy(-t, glin)
            pw = _evaluate(trial, vol, with_grad=True)
            Et = float(pw.energy.sum())
            finite_seen |= math.isfinite(Et)
            if math.isfinite(Et) and Et <= E - config.armijo * t * gp:
                break
            t *= config.shrink
        else:
            if not finite_seen:
                raise SolverDivergence(f"energy is not finite along the search direction at iteration {it + 1}")
            reason = "line_search_failed"
            break
        it += 1
        state = state_axpy(state, -t, p)
        lin, E = trial, Et
        g = _gradient(state, pw, obj.tr)
        t_next = t * config.grow
        if config.step_rule == "bb":
            # s = -t p, y = g_new - g_old:  <s, M s> / <s, y> in the descent metric
            denom = gp - tangent_inner(state.torus, p, g)
            if denom > 0:
                t_next = t * gp / denom
        trace.append(_trace_row(it, E, pw.energy, t))
        if callback is not None:
            callback(it, E)
    return SolveResult(state, trace, E <= config.tol, it, reason, E, time.time() - t0)


def _trace_row(it, E, parts, step):
    return {"iteration": it, "energy": E, "dirac": float(parts[0]), "curvature_2": float(parts[1]),
            "curvature_4": float(parts[2]), "step": step}


def final_report(result: SolveResult) -> dict:
    """Exact-quadrature energy and the system's residual norms of a solver output."""
    st = result.state
    qt = quadrature_torus(st.torus)
    eb = energy(on_torus(st, qt))
    rn = residual_norms(on_torus(st, qt))
    rec = beta_from_phi(on_torus(st, qt), harmonic_part(st.torus, {3: st.beta[3]})[3])[3]
    K_out = (rec.shape[0] - 1) // 2
    diff = float(np.abs(rec - st.torus.embed(st.beta[3], K_out)).max())
    out = {"energy": eb.total, "energy_terms": eb.terms, "residual_norms": rn,
           "beta_reconstruction_defect": diff}
    result.final = out
    return out


# Green operator reconstruction -----------------------------------------------------------

def q_form_coefficients(state: SWState, K_out: int | None = None) -> dict:
    """Coefficients of ``q(phi)_2`` and ``q(phi)_4`` (exact for ``K_out <= 2K`` on the 4K+1 grid)."""
    _require8(state)
    torus = quadrature_torus(state.torus)
    K_out = 2 * torus.K if K_out is None else K_out
    tr = _Transform(torus)
    alg = _algebra()
    phi = tr.to_grid(state.phi[..., alg.plus])
    vals = np.concatenate([_q_values(alg, phi[sl]) for sl in _chunks(len(phi))])
    q2 = 1j * tr.real_from_grid(_c(vals @ alg.q2), K_out)
    q4 = tr.real_from_grid(_c(vals @ alg.q4), K_out)
    return {2: q2, 4: q4}


def beta_from_phi(state: SWState, beta_h: np.ndarray | None = None) -> dict:
    """``beta_h - (i/2) d G q(phi)_2 - * d G q(phi)_4`` on the cutoff ``2K``.

    ``beta_h`` is a constant (harmonic) 3-form given as 56 components or as a
    coefficient array whose zero mode is used.
    """
    _require8(state)
    q = q_form_coefficients(state)
    K_out = 2 * state.torus.K
    big = Torus(DIM, K_out, 4 * K_out + 1)
    out = {3: -0.5j * ext_d(big, green(big, {2: q[2]}))[3]
              - hodge_field(DIM, ext_d(big, green(big, {4: q[4]})))[3]}
    h = np.zeros(comb(DIM, 3), complex) if beta_h is None else np.asarray(beta_h, complex)
    if h.ndim > 1:
        h = h[(h.shape[0] // 2,) * DIM]
    out[3][(K_out,) * DIM] += h
    return out


def delta_beta_defect(state: SWState, beta: dict) -> float:
    """``max |Delta beta + (i/2) d q_2 + *(d q_4)|`` over coefficients."""
    q = q_form_coefficients(state)
    K_out = (beta[3].shape[0] - 1) // 2
    big = Torus(DIM, K_out, 4 * K_out + 1)
    lap = big.k2_tail(beta[3].ndim) * beta[3]
    rhs = -0.5j * ext_d(big, {2: q[2]})[3] - hodge_field(DIM, ext_d(big, {4: q[4]}))[3]
    return float(np.abs(lap - rhs).max())


# pointwise identities ---------------------------------------------------------------------

def pointwise_identities(state: SWState) -> dict:
    """Pointwise Laplacian identities on the exact grid.

    * ``(1/2) Lap |phi|^2 = Re <nabla^* nabla phi, phi> - |nabla phi|^2``
    * ``(1/2) Lap |beta|^2 = <Delta beta, beta> - |nabla beta|^2`` (flat Bochner)

    with ``Lap = -sum_j d_j^2``.  Also reports the smallest constant ``C`` with
    ``Lap(|beta|^2 + |phi|^2) <= C (|beta|^2 + |phi|^2 + |phi|^2 |beta|^2) - (7/8) |phi|^4``
    at every grid point (points where the weight vanishes are skipped).
    """
    _require8(state)
    from .sw_system import dirac_grid

    st = on_torus(state, quadrature_torus(state.torus))
    torus = st.torus
    alg = _algebra()
    tr = _Transform(torus)
    op = dirac_grid(st, "plus")
    gshape = torus.grid_shape
    phi = torus.to_grid(st.phi)[..., alg.plus]
    cov = op.covariant(phi)
    rough = op.covariant_adjoint(cov)
    del op
    p2 = np.sum(np.abs(phi) ** 2, axis=-1)
    nab2 = sum(np.sum(np.abs(c) ** 2, axis=-1) for c in cov)
    del cov
    lap_p2 = _neg_laplacian(torus, p2)
    lhs = 0.5 * lap_p2
    rhs = np.sum(rough * np.conj(phi), axis=-1).real - nab2
    spin_defect = float(np.abs(lhs - rhs).max())
    b = st.beta[3]
    bg = tr.real_to_grid(b).reshape(gshape + (-1,))
    b2 = np.sum(bg ** 2, axis=-1)
    lapb = tr.real_to_grid(torus.k2_tail(b.ndim) * b).reshape(gshape + (-1,))
    grad2 = 0
    for j in range(DIM):
        grad2 = grad2 + np.sum(tr.real_to_grid(torus.deriv(b, j)).reshape(gshape + (-1,)) ** 2, axis=-1)
    lap_b2 = _neg_laplacian(torus, b2)
    bochner = float(np.abs(0.5 * lap_b2 - (np.sum(lapb * bg, axis=-1) - grad2)).max())
    weight = b2 + p2 + p2 * b2
    num = lap_b2 + lap_p2 + (7.0 / 8.0) * p2 ** 2
    mask = weight > 1e-300
    C = float(np.max(num[mask] / weight[mask])) if np.any(mask) else 0.0
    scale = max(float(np.abs(lhs).max()), float(np.abs(nab2).max()), 1.0)
    bscale = max(float(np.abs(lap_b2).max()), float(np.abs(grad2).max()), 1.0)
    return {"laplacian_nabla_defect": spin_defect, "laplacian_nabla_scale": scale,
            "bochner_defect": bochner, "bochner_scale": bscale, "diagnostic_constant": C}


def _neg_laplacian(torus: Torus, v: np.ndarray) -> np.ndarray:
    """``-sum_j d_j^2`` of real grid data (spectral; exact for resolved bands)."""
    from scipy import fft as spfft

    axes = tuple(range(torus.n))
    c = spfft.fftn(v, axes=axes)
    k2 = sum(torus._freq(j, v.ndim) ** 2 for j in range(torus.n))
    return spfft.ifftn(k2 * c, axes=axes).real


def breakdown_dict(eb: EnergyBreakdown) -> dict:
    return asdict(eb)
