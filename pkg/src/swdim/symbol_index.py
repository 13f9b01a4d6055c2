"""Principal symbols of the gauge-fixed linearisations, ellipticity sampling and index arithmetic."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .clifford_core import build_rep, self_dual_basis
from .spinor_maps import iso_spec
from .sw_system import DimCase, SWState, build_case, curvature_lhs_field, fold_to_target
from .torus_calculus import codiff, ext_d, hodge_field


class _SymbolTorus:
    """Stand-in for a torus where ``d/dx_j`` acts as multiplication by ``i xi_j``."""

    def __init__(self, xi):
        self.xi = np.asarray(xi, dtype=float)
        self.n = len(self.xi)
        self.k = [np.asarray(x) for x in self.xi]

    def deriv(self, c, j):
        return 1j * self.xi[j] * c


@dataclass
class SymbolMatrix:
    case: DimCase
    xi: np.ndarray
    matrix: np.ndarray
    form_block: np.ndarray
    spinor_blocks: list

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)


def _input_layout(case: DimCase):
    """(name, degree) blocks of the odd-form unknowns: a, the beta_k, and the second connection."""
    layout = [("a", 1)] + [(f"beta{k}", k) for k in case.beta_degrees]
    if case.family == "four_m_minus_2":
        layout.append(("a_tilde", case.n - 1))
    return layout


def _target_coords(case: DimCase, side: str, f: dict) -> np.ndarray:
    """Coordinates of a folded form in the identified space (self-dual basis on top in 4m)."""
    n = case.n
    degrees, _, sd_top = iso_spec(n, side)
    parts = []
    for k in degrees:
        v = f.get(k, np.zeros(comb(n, k), complex))
        if sd_top and k == degrees[-1]:
            basis = np.array([b.to_vector(k) for b in self_dual_basis(n)])
            parts.append(basis @ v)
        else:
            parts.append(v)
    return np.concatenate(parts)


def _form_column(case: DimCase, xi, name: str, vec: np.ndarray) -> np.ndarray:
    """Symbol of the form part applied to one unknown block with value ``vec``."""
    n = case.n
    torus = _SymbolTorus(xi)
    zero1 = np.zeros(n, complex)
    two = case.family == "four_m_minus_2"
    st = SWState(case, torus, zero1.copy(), {k: np.zeros(comb(n, k), complex) for k in case.beta_degrees},
                 phi=np.zeros(0, complex), b=zero1.copy() if two else None)
    a = zero1.copy()
    at = np.zeros(n, complex)
    if name == "a":
        a = vec
        st.a = 2j * vec
    elif name == "a_tilde":
        at = vec
        st.b = 2j * hodge_field(n, {n - 1: vec})[1]
    else:
        st.beta[int(name[4:])] = vec.astype(complex)
    rows = [2 * codiff(torus, {1: a}).get(0, np.zeros(1, complex))]
    for side in case.sides:
        f = curvature_lhs_field(st, side)
        rows.append(_target_coords(case, side, fold_to_target(case, f, side)))
    if case.family == "four_m_minus_2":
        rows.append(-2 * ext_d(torus, {n - 1: at}).get(n, np.zeros(1, complex)))
    return np.concatenate(rows)


@lru_cache(maxsize=None)
def _form_generators(n: int):
    """``S_j`` with form-block symbol ``sum_j xi_j S_j``."""
    case = build_case(n)
    layout = _input_layout(case)
    gens = []
    for j in range(n):
        xi = np.zeros(n)
        xi[j] = 1.0
        cols = []
        for name, k in layout:
            dim = comb(n, k)
            for c in range(dim):
                e = np.zeros(dim, complex)
                e[c] = 1.0
                cols.append(_form_column(case, xi, name, e))
        gens.append(np.array(cols).T)
    return np.array(gens)


def _spinor_blocks(case: DimCase, xi) -> list:
    """``i c(xi)`` from each spinor domain to its target chirality."""
    rep = build_rep(case.n)
    cxi = sum(x * g for x, g in zip(xi, rep.generators))
    out = []
    for side in case.sides:
        ch = case.chirality[side]
        ri = list(rep.chiral_indices(ch))
        ro = list(rep.chiral_indices({"plus": "minus", "minus": "plus", "full": "full"}[ch]))
        out.append(1j * cxi[np.ix_(ro, ri)])
    return out


def principal_symbol(case: DimCase, xi) -> SymbolMatrix:
    """Symbol of the gauge-fixed linearisation at the covector ``xi``.

    The unknowns are the odd forms ``a`` (connection, with ``delta A = 2i a``),
    the ``beta_k`` and, for n = 4m-2, the second connection parametrised by a
    (4m-3)-form through the Hodge star.  The targets are the Coulomb conditions
    and the curvature equations folded into the identified form spaces, followed
    by one Dirac block per spinor.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (case.n,):
        raise ValueError(f"covector must have {case.n} components")
    F = np.tensordot(xi, _form_generators(case.n), axes=1)
    blocks = _spinor_blocks(case, xi)
    size_r = F.shape[0] + sum(b.shape[0] for b in blocks)
    size_c = F.shape[1] + sum(b.shape[1] for b in blocks)
    M = np.zeros((size_r, size_c), complex)
    M[:F.shape[0], :F.shape[1]] = F
    r, c = F.shape
    for b in blocks:
        M[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return SymbolMatrix(case, xi, M, F, blocks)


def elliptic_check(case: DimCase, samples: int = 1000, seed: int = 0, threshold: float = 1e-6) -> dict:
    """Sample random unit covectors; report the worst smallest singular value.

    Also reports the defect of ``F^dagger F = 4|xi|^2`` for the form block, the
    identity that holds in the odd and 4m-2 families.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    worst = np.inf
    lb_defect = 0.0
    square = True
    for _ in range(samples):
        xi = rng.standard_normal(case.n)
        xi /= np.linalg.norm(xi)
        sym = principal_symbol(case, xi)
        if sym.matrix.shape[0] != sym.matrix.shape[1]:
            square = False
            break
        worst = min(worst, float(np.linalg.svd(sym.matrix, compute_uv=False).min()))
        F = sym.form_block
        lb_defect = max(lb_defect, float(np.abs(F.conj().T @ F - 4 * np.eye(F.shape[1])).max()))
    worst = worst if square else 0.0
    return {"case": case.family, "n": case.n, "samples": samples, "seed": seed,
            "min_singular_value": worst, "form_block_identity_defect": lb_defect,
            "square": square, "pass": bool(square and worst >= threshold)}


# index arithmetic ------------------------------------------------------------------

def _integral(x) -> int:
    q = Fraction(x)
    if q.denominator != 1:
        raise ValueError(f"index contribution {x} is not an integer")
    return int(q)


def index_odd() -> int:
    return 0


def index_4m(betti, b_plus: int, twist=0) -> int:
    """``sum_{k=0}^{2m-1} (-1)^{k+1} b_k - b^+_{2m} + twist`` with ``b_0 = 1``.

    ``betti`` lists ``b_1 .. b_{2m-1}``; ``twist`` is ``2 int c_1(L) ^ Td(M)``
    (rational input that must combine to an integer).
    """
    betti = list(betti)
    if len(betti) % 2 == 0:
        raise ValueError("expected b_1 .. b_{2m-1}, an odd number of entries")
    if any(int(b) != b or b < 0 for b in betti) or int(b_plus) != b_plus or b_plus < 0:
        raise ValueError("Betti numbers must be non-negative integers")
    bs = [1] + [int(b) for b in betti]
    total = sum((-1) ** (k + 1) * b for k, b in enumerate(bs)) - int(b_plus)
    return _integral(Fraction(total) + Fraction(twist))


def index_4m2(chi: int) -> int:
    if int(chi) != chi:
        raise ValueError("Euler characteristic must be an integer")
    return -int(chi)


def classical_4d_index(c1_squared, chi: int, signature: int):
    """``(c_1^2 - 2 chi - 3 sigma) / 4``, the virtual dimension in dimension 4."""
    return Fraction(c1_squared - 2 * chi - 3 * signature, 4)
