"""Dimension-family coefficient tables, residual map and gauge action."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Dict, List

import numpy as np

from .clifford_core import FormValue, act, build_rep, clifford_hodge_factor, hodge, sk, subsets
from .spinor_maps import family_of, iso_basis, iso_spec
from .torus_calculus import (DiracGrid, Torus, codiff, ext_d, form_add, form_from_grid,
                             form_to_grid, hodge_field, self_dual_part)


@dataclass(frozen=True)
class DiracTerm:
    """``coeff * c(beta_k)`` (or ``coeff * c(*beta_k)`` when ``star``) in one Dirac operator."""

    side: str
    degree: int
    coeff: complex
    star: bool


@dataclass(frozen=True)
class CurvatureTerm:
    """``coeff * op(beta_k)`` in one curvature equation.

    ``op`` is one of ``d``, ``d_plus`` (self-dual part of d), ``codiff`` or
    ``star_codiff`` (Hodge star of the codifferential).
    """

    side: str
    degree: int
    coeff: complex
    op: str


@dataclass(frozen=True)
class DimCase:
    family: str
    n: int
    m: int
    beta_degrees: tuple
    sides: tuple
    chirality: Dict[str, str]
    dirac_table: tuple
    curvature_table: tuple
    printed_curvature_table: tuple
    connection_coeff: Dict[str, complex]

    def dirac_terms(self, side: str) -> List[DiracTerm]:
        return [t for t in self.dirac_table if t.side == side]

    def curvature_terms(self, side: str, table: str = "effective") -> List[CurvatureTerm]:
        src = self.curvature_table if table == "effective" else self.printed_curvature_table
        return [t for t in src if t.side == side]


def build_case(n: int) -> DimCase:
    """Coefficient tables of the n-dimensional system, selected by n mod 4."""
    if n < 3:
        raise ValueError("the systems are defined for n >= 3")
    fam = family_of(n)
    s = sk
    dirac, curv = [], []
    conn = {}
    if fam == "odd":
        m = (n - 1) // 2
        degrees = tuple(2 * k + 1 for k in range(1, m + 1))
        for k in range(1, m):
            dirac.append(DiracTerm("full", 2 * k + 1, s(2 * k + 1), False))
        for k in range(1, m + 1):
            dirac.append(DiracTerm("full", 2 * k + 1, 1j * s(2 * m - 2 * k), True))
        for k in range(1, m):
            curv.append(CurvatureTerm("full", 2 * k + 1, 2 * s(2 * k + 2), "d"))
        for k in range(1, m + 1):
            e = k * m + m + k + 1 + m * (m + 1) // 2
            curv.append(CurvatureTerm("full", 2 * k + 1, 2 * (-1) ** e * s(2 * k), "codiff"))
        sides = ("full",)
        chir = {"full": "full"}
        conn = {"full": 1.0}
        printed = list(curv)
    elif fam == "four_m":
        m = n // 4
        degrees = tuple(2 * k + 1 for k in range(1, m))
        for k in range(1, m):
            dirac.append(DiracTerm("plus", 2 * k + 1, s(2 * k + 1), False))
            dirac.append(DiracTerm("plus", 2 * k + 1, s(4 * m - 2 * k - 1), True))
        if m >= 2:
            curv.append(CurvatureTerm("plus", 2 * m - 1, 2 * s(2 * m), "d_plus"))
        for k in range(1, m - 1):
            curv.append(CurvatureTerm("plus", 2 * k + 1, 2 * s(2 * k + 2), "d"))
        for k in range(1, m):
            curv.append(CurvatureTerm("plus", 2 * k + 1, 2 * (-1) ** (m + k + 1) * s(2 * k), "codiff"))
        sides = ("plus",)
        chir = {"plus": "plus"}
        conn = {"plus": 1.0}
        printed = list(curv)
    else:
        m = (n + 2) // 4
        degrees = tuple(2 * k + 1 for k in range(1, 2 * m - 2))
        for k in range(1, m - 1):
            dirac.append(DiracTerm("plus", 2 * k + 1, s(2 * k + 1), False))
            dirac.append(DiracTerm("plus", 2 * k + 1, s(4 * m - 2 * k - 3), True))
        if m >= 2:
            dirac.append(DiracTerm("plus", 2 * m - 1, s(2 * m - 1), False))
            dirac.append(DiracTerm("minus", 2 * m - 1, s(2 * m - 1), True))
        for k in range(m, 2 * m - 2):
            dirac.append(DiracTerm("minus", 2 * k + 1, s(2 * k + 1), False))
            dirac.append(DiracTerm("minus", 2 * k + 1, s(4 * m - 2 * k - 3), True))
        printed = []
        for k in range(1, m - 1):
            printed.append(CurvatureTerm("plus", 2 * k + 1, 2 * s(2 * k + 2), "d"))
        for k in range(1, m):
            printed.append(CurvatureTerm("plus", 2 * k + 1, (-1) ** m * 2 * s(2 * k), "codiff"))
        minus_terms = []
        for k in range(m, 2 * m - 2):
            minus_terms.append(CurvatureTerm("minus", 2 * k + 1, 2 * s(4 * m - 2 * k - 4), "d"))
        for k in range(m - 1, 2 * m - 2):
            minus_terms.append(CurvatureTerm("minus", 2 * k + 1, (-1) ** (m + 1) * 2 * s(4 * m - 2 * k - 2),
                                             "star_codiff"))
        printed += minus_terms
        # The plus operator carries c(beta_{2m-1}) rather than c(*beta_{2m-1}), so the
        # principal part of its remainder contains d beta_{2m-1} instead of d* beta_{2m-1}.
        for k in range(1, m):
            curv.append(CurvatureTerm("plus", 2 * k + 1, 2 * s(2 * k + 2), "d"))
        for k in range(1, m - 1):
            curv.append(CurvatureTerm("plus", 2 * k + 1, (-1) ** m * 2 * s(2 * k), "codiff"))
        # Minus side: prefactors fixed by the principal part of the Weitzenboeck remainder
        # (they agree with the printed ones for m = 2 and differ from m = 3 on).
        for k in range(m, 2 * m - 2):
            curv.append(CurvatureTerm("minus", 2 * k + 1, 2 * s(2 * k + 2), "d"))
        for k in range(m - 1, 2 * m - 2):
            curv.append(CurvatureTerm("minus", 2 * k + 1, -2 * s(4 * m - 2 * k - 2), "star_codiff"))
        sides = ("plus", "minus")
        chir = {"plus": "plus", "minus": "minus"}
        conn = {"plus": 1.0, "minus": (-1) ** (m + 1) * 1j}
    return DimCase(family=fam, n=n, m=m, beta_degrees=degrees, sides=sides, chirality=chir,
                   dirac_table=tuple(dirac), curvature_table=tuple(curv),
                   printed_curvature_table=tuple(printed), connection_coeff=conn)


def _other(chirality: str) -> str:
    return {"plus": "minus", "minus": "plus", "full": "full"}[chirality]


def dirac_perturbation(case: DimCase, beta: Dict[int, FormValue], side: str | None = None) -> FormValue:
    """Total form ``b`` with ``D_{A,beta} = D_A + c(b)`` on the given side."""
    side = side or case.sides[0]
    out = FormValue(case.n)
    for t in case.dirac_terms(side):
        bk = beta.get(t.degree)
        if bk is None:
            continue
        if bk.degrees() not in ([t.degree], []):
            raise ValueError(f"beta_{t.degree} has the wrong degree")
        out = out + (hodge(bk) if t.star else bk) * t.coeff
    return out


def dirac_perturbation_field(case: DimCase, beta: Dict[int, np.ndarray], side: str) -> dict:
    """Field version of :func:`dirac_perturbation` on coefficient dicts."""
    out = {}
    for t in case.dirac_terms(side):
        if t.degree not in beta:
            continue
        term = hodge_field(case.n, {t.degree: beta[t.degree]}) if t.star else {t.degree: beta[t.degree]}
        out = form_add(out, term, coeffs=[1, t.coeff])
    return out


def curvature_form_field(case: DimCase, torus: Torus, beta: dict, side: str,
                         table: str = "effective") -> dict:
    """Assemble ``F_beta + C_beta`` (coefficient space) for one equation."""
    n = case.n
    out = {}
    for t in case.curvature_terms(side, table):
        if t.degree not in beta:
            continue
        b = {t.degree: beta[t.degree]}
        if t.op == "d":
            term = ext_d(torus, b)
        elif t.op == "d_plus":
            term = self_dual_part(n, ext_d(torus, b))
        elif t.op == "codiff":
            term = codiff(torus, b)
        elif t.op == "star_codiff":
            term = hodge_field(n, codiff(torus, b))
        else:
            raise ValueError(t.op)
        out = form_add(out, term, coeffs=[1, t.coeff])
    return out


def fold_to_target(case: DimCase, f: dict, side: str) -> dict:
    """Rewrite a form so its degrees lie in the identified space of the side.

    Components outside the target degrees are replaced by the Hodge dual with
    the scalar that preserves their Clifford action on the side's spinors;
    middle-degree parts in dimension 4m are replaced by their self-dual part.
    """
    n = case.n
    degrees, chirality, sd_top = iso_spec(n, side)
    out = {}
    for k, arr in f.items():
        if sd_top and k == n // 2:
            out = form_add(out, self_dual_part(n, {k: arr}))
        elif k in degrees:
            out = form_add(out, {k: arr})
        elif (n - k) in degrees or k == 0 or k == n:
            lam = clifford_hodge_factor(n, n - k, chirality)
            # c(arr) = c(*(*arr)) / (**) and c(* g) = lam c(g) for g of degree n - k
            star2 = (-1) ** (k * (n - k))
            out = form_add(out, hodge_field(n, {k: arr}), coeffs=[1, lam * star2])
        else:
            raise ValueError(f"degree {k} cannot be identified on side {side}")
    return out


# state --------------------------------------------------------------------------

@dataclass
class SWState:
    """Fields on the torus, all in coefficient space.

    ``a``/``b`` are imaginary 1-form offsets ``(..., n)`` of the connections,
    ``beta`` maps odd degrees to real form coefficients, ``phi``/``psi`` are
    spinor coefficients ``(..., rank)``.
    """

    case: DimCase
    torus: Torus
    a: np.ndarray
    beta: Dict[int, np.ndarray]
    phi: np.ndarray
    b: np.ndarray | None = None
    psi: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, case: DimCase, torus: Torus) -> "SWState":
        rep = build_rep(case.n)
        shp = torus.mode_shape
        beta = {k: np.zeros(shp + (comb(case.n, k),), dtype=complex) for k in case.beta_degrees}
        two = case.family == "four_m_minus_2"
        return cls(case, torus, np.zeros(shp + (case.n,), complex), beta,
                   np.zeros(shp + (rep.rank,), complex),
                   np.zeros(shp + (case.n,), complex) if two else None,
                   np.zeros(shp + (rep.rank,), complex) if two else None)

    def copy(self) -> "SWState":
        return replace(self, a=self.a.copy(), beta={k: v.copy() for k, v in self.beta.items()},
                       phi=self.phi.copy(), b=None if self.b is None else self.b.copy(),
                       psi=None if self.psi is None else self.psi.copy(), meta=dict(self.meta))

    def connection(self, side: str) -> np.ndarray:
        return self.b if side == "minus" else self.a

    def spinor(self, side: str) -> np.ndarray:
        return self.psi if side == "minus" else self.phi


def random_state(case: DimCase, torus: Torus, rng: np.random.Generator, amplitude: float = 1.0,
                 decay: float = 0.0) -> SWState:
    """Random fields: real beta, imaginary connection offsets, chiral spinors."""
    rep = build_rep(case.n)
    st = SWState.zero(case, torus)
    st.a = 1j * torus.random_coeffs(rng, (case.n,), real=True, amplitude=amplitude, decay=decay)
    for k in case.beta_degrees:
        st.beta[k] = torus.random_coeffs(rng, (comb(case.n, k),), real=True, amplitude=amplitude, decay=decay)
    for side in case.sides:
        idx = list(rep.chiral_indices(case.chirality[side]))
        sp = np.zeros(torus.mode_shape + (rep.rank,), complex)
        sp[..., idx] = torus.random_coeffs(rng, (len(idx),), amplitude=amplitude, decay=decay)
        if side == "minus":
            st.psi = sp
            st.b = 1j * torus.random_coeffs(rng, (case.n,), real=True, amplitude=amplitude, decay=decay)
        else:
            st.phi = sp
    return st


def dirac_grid(state: SWState, side: str, grid_cache: dict | None = None) -> DiracGrid:
    case, torus = state.case, state.torus
    rep = build_rep(case.n)
    ch = case.chirality[side]
    rows_in = list(rep.chiral_indices(ch))
    rows_out = list(rep.chiral_indices(_other(ch)))
    a_grid = torus.to_grid(state.connection(side))
    pert = dirac_perturbation_field(case, state.beta, side)
    return DiracGrid(rep, torus, a_grid, form_to_grid(torus, pert), rows_in, rows_out)


def curvature_lhs_field(state: SWState, side: str, table: str = "effective") -> dict:
    """Left-hand side of the curvature equation in coefficient space (before folding)."""
    case, torus = state.case, state.torus
    conn = {1: state.connection(side)}
    F = ext_d(torus, conn)
    if side == "minus":
        F = hodge_field(case.n, F)
    F = {k: v * case.connection_coeff[side] for k, v in F.items()}
    if case.family == "four_m":
        F = self_dual_part(case.n, F)
    return form_add(F, curvature_form_field(case, torus, state.beta, side, table))


def q_field_grid(state: SWState, side: str) -> dict:
    """``q`` of the spinor field evaluated pointwise on the grid (form grid dict)."""
    case, torus = state.case, state.torus
    rep = build_rep(case.n)
    basis, chirality = iso_basis(case.n, side)
    idx = list(rep.chiral_indices(chirality))
    v = torus.to_grid(state.spinor(side))[..., idx]
    out = {}
    for b, s in basis:
        M = act(rep, b * s)[np.ix_(idx, idx)]
        norm = np.trace(M @ M).real
        # tr(M E_phi) = <M phi, phi> because M is trace-free
        val = np.einsum("...a,ab,...b->...", np.conj(v), M, v).real / norm
        for I, cI in b.coeffs.items():
            k = len(I)
            if k not in out:
                out[k] = np.zeros(torus.grid_shape + (comb(case.n, k),), complex)
            out[k][..., _position(case.n, I)] += val * s * cI
    return out


@lru_cache(maxsize=None)
def _positions(n: int, k: int) -> dict:
    return {I: a for a, I in enumerate(subsets(n, k))}


def _position(n: int, I) -> int:
    return _positions(n, len(I))[tuple(I)]


def sw_residual(state: SWState, K_out: int | None = None):
    """Residuals of every equation of the case.

    Returns ``(curvature, dirac)`` dicts keyed by side: curvature residuals are
    coefficient-space form dicts folded into the identified space, Dirac
    residuals are spinor coefficient arrays.  ``K_out`` defaults to ``2K`` (exact
    for quadratic terms when the grid resolves it).
    """
    torus = state.torus
    K_out = min(2 * torus.K, (torus.N - 1) // 2) if K_out is None else K_out
    curv, dirac = {}, {}
    for side in state.case.sides:
        lhs = curvature_lhs_field(state, side)
        lhs = {k: torus.embed(v, K_out) for k, v in lhs.items()}
        q = form_from_grid(torus, q_field_grid(state, side), K_out)
        curv[side] = fold_to_target(state.case, form_add(lhs, q, coeffs=[1, -1]), side)
        op = dirac_grid(state, side)
        phi_grid = torus.to_grid(state.spinor(side))
        out = np.zeros(torus.grid_shape + (build_rep(state.case.n).rank,), complex)
        out[..., op.rows_out] = op.apply(phi_grid[..., op.rows_in])
        dirac[side] = torus.from_grid(out, K_out)
    return curv, dirac


def residual_norms(state: SWState) -> dict:
    """L^2 norms squared of every residual (Parseval in coefficient space)."""
    curv, dirac = sw_residual(state)
    vol = state.torus.volume
    out = {}
    for side in state.case.sides:
        out[f"curvature_{side}"] = float(sum(np.sum(np.abs(v) ** 2) for v in curv[side].values()) * vol)
        out[f"dirac_{side}"] = float(np.sum(np.abs(dirac[side]) ** 2) * vol)
    return out


# gauge ----------------------------------------------------------------------------

def _shift_modes(c: np.ndarray, shift, n: int) -> np.ndarray:
    """Multiply a coefficient field by ``exp(i shift.x)`` (cutoff grows by max|shift|)."""
    grow = int(np.max(np.abs(shift))) if len(shift) else 0
    K = (c.shape[0] - 1) // 2
    out = np.pad(c, [(grow, grow)] * n + [(0, 0)] * (c.ndim - n))
    for j, sj in enumerate(shift):
        out = np.roll(out, int(sj), axis=j)
    return out, K + grow


def gauge_apply(u, state: SWState, torus_out: Torus | None = None) -> SWState:
    """Act by ``u = phase * exp(i w.x)`` (``w`` integer) on ``(A, phi)``.

    ``u`` is ``(phase, w)`` or, in the two-factor case, a pair of those acting
    on ``(A, phi)`` and ``(B, psi)``.  ``phi -> u^-1 phi`` and ``A -> A + 2 u^-1 du``;
    beta is unchanged.  The returned state lives on a torus whose cutoff covers
    the shifted modes.
    """
    case, torus = state.case, state.torus
    n = case.n
    two = case.family == "four_m_minus_2"
    if two and isinstance(u, tuple) and len(u) == 2 and isinstance(u[0], tuple):
        u1, u2 = u
    else:
        u1, u2 = u, (1.0, np.zeros(n, int))
    for ph, _ in (u1, u2):
        if abs(abs(ph) - 1.0) > 1e-12:
            raise ValueError("gauge transformations must have unit modulus")
    grow = max(int(np.max(np.abs(u1[1]))), int(np.max(np.abs(u2[1]))))
    K_new = torus.K + grow
    torus_out = torus_out or Torus(n, K_new, max(torus.N, 2 * K_new + 1))
    if torus_out.K < K_new:
        raise ValueError("output torus cutoff too small")

    def fit(c):
        return torus.embed(c, torus_out.K) if c.shape[0] < torus_out.M else c

    def transform(conn, spin, ph, w):
        w = np.asarray(w, int)
        spin_new, _ = _shift_modes(spin, -w, n)
        spin_new = np.conj(ph) * _crop(spin_new, torus_out.K, n)
        conn_new = fit(conn).copy()
        conn_new[(torus_out.K,) * n] += 2j * w
        return conn_new, spin_new

    a_new, phi_new = transform(state.a, state.phi, *u1)
    new = SWState(case, torus_out, a_new, {k: fit(v) for k, v in state.beta.items()}, phi_new,
                  meta=dict(state.meta))
    if two:
        new.b, new.psi = transform(state.b, state.psi, *u2)
    return new


def _crop(c: np.ndarray, K: int, n: int) -> np.ndarray:
    Kc = (c.shape[0] - 1) // 2
    if Kc == K:
        return c
    if Kc < K:
        pad = [(K - Kc, K - Kc)] * n + [(0, 0)] * (c.ndim - n)
        return np.pad(c, pad)
    sl = (slice(Kc - K, Kc + K + 1),) * n
    return c[sl]


# snapshots -------------------------------------------------------------------------

def _field_list(state: SWState):
    items = [("a", state.a)]
    items += [(f"beta{k}", state.beta[k]) for k in sorted(state.beta)]
    items.append(("phi", state.phi))
    if state.b is not None:
        items += [("b", state.b), ("psi", state.psi)]
    return items


def save_snapshot(state: SWState, path) -> None:
    """Write ``path.json`` metadata and ``path.bin`` field data.

    Binary layout: for each field in metadata order, component-major
    (component, then modes in C order over ``(2K+1,)*n``), each complex entry
    stored as interleaved little-endian float64 ``(re, im)``.
    """
    path = Path(path)
    fields = []
    chunks = []
    offset = 0
    for name, arr in _field_list(state):
        comp_major = np.moveaxis(arr, -1, 0)
        flat = np.empty(comp_major.size * 2, dtype="<f8")
        flat[0::2] = comp_major.real.ravel()
        flat[1::2] = comp_major.imag.ravel()
        fields.append({"name": name, "components": int(arr.shape[-1]), "offset": offset,
                       "count": int(flat.size)})
        offset += flat.size
        chunks.append(flat)
    meta = {"n": state.case.n, "family": state.case.family, "modes": state.torus.K,
            "grid": state.torus.N, "dtype": "<f8", "layout": "component-major, interleaved re/im",
            "fields": fields, "meta": state.meta}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    np.concatenate(chunks).tofile(path.with_suffix(".bin"))


def load_snapshot(path) -> SWState:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    case = build_case(meta["n"])
    torus = Torus(meta["n"], meta["modes"], meta["grid"])
    st = SWState.zero(case, torus)
    for f in meta["fields"]:
        flat = data[f["offset"]:f["offset"] + f["count"]]
        vals = (flat[0::2] + 1j * flat[1::2]).reshape((f["components"],) + torus.mode_shape)
        arr = np.moveaxis(vals, 0, -1)
        name = f["name"]
        if name.startswith("beta"):
            st.beta[int(name[4:])] = arr
        else:
            setattr(st, name, arr)
    st.meta = meta.get("meta", {})
    return st
