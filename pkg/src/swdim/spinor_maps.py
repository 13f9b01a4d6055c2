"""The quadratic map phi -> E_phi and its inverse under Clifford multiplication."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .clifford_core import (CliffordRep, FormValue, act, build_rep, self_dual_basis, sk,
                            subsets)


def family_of(n: int) -> str:
    if n % 2 == 1:
        return "odd"
    return "four_m" if n % 4 == 0 else "four_m_minus_2"


@dataclass
class SpinorValue:
    """A spinor at a point; ``components`` always has full length ``rank``."""

    n: int
    components: np.ndarray
    chirality: str = "full"

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=complex)
        rep = build_rep(self.n)
        if self.components.shape != (rep.rank,):
            raise ValueError(f"expected {rep.rank} components, got {self.components.shape}")
        if self.chirality != "full":
            off = [a for a in range(rep.rank) if a not in rep.chiral_indices(self.chirality)]
            if np.any(self.components[off] != 0):
                raise ValueError(f"spinor is not in S_{self.chirality}")

    @classmethod
    def random(cls, n: int, chirality: str, rng: np.random.Generator) -> "SpinorValue":
        rep = build_rep(n)
        v = np.zeros(rep.rank, dtype=complex)
        idx = list(rep.chiral_indices(chirality))
        v[idx] = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
        return cls(n, v, chirality)


def e_phi(phi, r: int, projector: np.ndarray | None = None) -> np.ndarray:
    """``E_phi(psi) = <psi, phi> phi - |phi|^2 psi / r`` on the chiral subspace of phi."""
    if r <= 0:
        raise ValueError("r must be positive")
    if isinstance(phi, SpinorValue):
        if projector is None:
            projector = build_rep(phi.n).projector(phi.chirality)
        phi = phi.components
    phi = np.asarray(phi, dtype=complex)
    if projector is None:
        projector = np.eye(len(phi))
    return np.outer(phi, phi.conj()) - (np.vdot(phi, phi).real / r) * projector


def iso_spec(n: int, side: str = "plus"):
    """Degrees and chirality of the form space identified with ``i su`` of the spinors.

    Returns ``(degrees, chirality, self_dual_top)``; ``self_dual_top`` means the
    last degree contributes only its self-dual part.
    """
    fam = family_of(n)
    if fam == "odd":
        m = (n - 1) // 2
        return list(range(2, 2 * m + 1, 2)), "full", False
    if fam == "four_m":
        m = n // 4
        return list(range(2, 2 * m + 1, 2)), "plus", True
    m = (n + 2) // 4
    if side == "plus":
        return list(range(2, 2 * m - 1, 2)), "plus", False
    if side == "minus":
        # degrees 2m .. 4m-4; for m = 2 this is the single degree 4
        return list(range(2 * m, 4 * m - 3, 2)), "minus", False
    raise ValueError(f"unknown side {side!r}")


def iso_basis(n: int, side: str = "plus"):
    """Real basis forms ``b`` together with their prefactors ``s`` (so ``c(s b)`` is Hermitian)."""
    degrees, chirality, sd_top = iso_spec(n, side)
    out = []
    for k in degrees:
        if sd_top and k == degrees[-1]:
            forms = self_dual_basis(n)
        else:
            forms = [FormValue(n, {I: 1.0}) for I in subsets(n, k)]
        out.extend((b, sk(k)) for b in forms)
    return out, chirality


def _case_n(case) -> int:
    return int(case) if isinstance(case, (int, np.integer)) else int(case.n)


def _restricted(rep: CliffordRep, M: np.ndarray, chirality: str) -> np.ndarray:
    idx = list(rep.chiral_indices(chirality))
    return M[np.ix_(idx, idx)]


def q_of_phi(rep: CliffordRep, case, phi, side: str = "plus") -> FormValue:
    """Form in the identified space whose Clifford action equals ``E_phi``.

    Inversion is a Hilbert-Schmidt projection onto the trace-orthogonal basis
    ``c(s_I e_I)`` restricted to the relevant chiral subspace.
    """
    n = _case_n(case)
    if n != rep.n:
        raise ValueError("case and representation dimensions differ")
    basis, chirality = iso_basis(n, side)
    vec = phi.components if isinstance(phi, SpinorValue) else np.asarray(phi, dtype=complex)
    idx = list(rep.chiral_indices(chirality))
    if chirality != "full":
        off = np.ones(rep.rank, bool)
        off[idx] = False
        if np.any(np.abs(vec[off]) > 0):
            raise ValueError(f"spinor must lie in S_{chirality}")
    v = vec[idx]
    r = len(idx)
    E = e_phi(v, r)
    out = FormValue(n)
    coeffs = {}
    for b, s in basis:
        M = _restricted(rep, act(rep, b * s), chirality)
        norm = np.trace(M @ M).real
        if norm <= 0:
            raise ArithmeticError("degenerate basis element; Clifford conventions are broken")
        coef = np.trace(M @ E).real / norm
        for I, val in b.coeffs.items():
            coeffs[I] = coeffs.get(I, 0) + coef * s * val
    out = FormValue(n, coeffs)
    return out


def iso_rank_check(rep: CliffordRep, case, side: str = "plus") -> dict:
    """Real rank of ``{c(s_I e_I)}`` restricted to the chiral subspace vs ``dim i su``."""
    n = _case_n(case)
    basis, chirality = iso_basis(n, side)
    r = len(rep.chiral_indices(chirality))
    rows = []
    herm_defect = 0.0
    trace_defect = 0.0
    for b, s in basis:
        M = _restricted(rep, act(rep, b * s), chirality)
        herm_defect = max(herm_defect, float(np.abs(M - M.conj().T).max()))
        trace_defect = max(trace_defect, abs(np.trace(M)))
        rows.append(np.concatenate([M.real.ravel(), M.imag.ravel()]))
    expected = r * r - 1
    rank = int(np.linalg.matrix_rank(np.array(rows))) if rows else 0
    return {
        "n": n,
        "side": side,
        "chirality": chirality,
        "basis_size": len(basis),
        "rank": rank,
        "expected": expected,
        "hermitian_defect": herm_defect,
        "trace_defect": float(trace_defect),
        "pass": rank == expected == len(basis) and herm_defect == 0 and trace_defect == 0,
    }


def hs_constants(rep: CliffordRep, rng: np.random.Generator | None = None, samples: int = 5):
    """Ratios ``tr(c(i w)^2)/|w|^2`` and ``tr(c(theta)^2)/|theta|^2`` on ``S_+`` in dimension 8.

    Returns ``(a1, a2, spread)`` where spread is the largest deviation across samples.
    """
    if rep.n != 8:
        raise ValueError("the constants are defined for n = 8")
    rng = rng or np.random.default_rng(0)
    sd = self_dual_basis(8)
    r1, r2 = [], []
    for _ in range(samples):
        w = FormValue.from_vector(8, 2, rng.standard_normal(comb(8, 2)))
        M = _restricted(rep, act(rep, w * 1j), "plus")
        r1.append(np.trace(M @ M).real / w.norm2())
        theta = FormValue(8)
        for b, c in zip(sd, rng.standard_normal(len(sd))):
            theta = theta + b * c
        M = _restricted(rep, act(rep, theta), "plus")
        r2.append(np.trace(M @ M).real / theta.norm2())
    spread = max(np.ptp(r1), np.ptp(r2))
    return float(np.mean(r1)), float(np.mean(r2)), float(spread)
