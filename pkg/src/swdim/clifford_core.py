"""Clifford algebra representations and pointwise exterior algebra.

Conventions: ``c(e_i) c(e_j) + c(e_j) c(e_i) = -2 delta_ij``, every generator is
skew-Hermitian, and the volume element is normalised so that
``i^m c(dvol) = +-1`` on ``S_+-`` when ``n = 2m`` and ``i^m c(dvol) = 1`` when
``n = 2m - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

MAX_DIM = 12

_S1 = np.array([[0, 1], [1, 0]], dtype=complex)
_S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_S3 = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for mat in mats:
        out = np.kron(out, mat)
    return out


def subsets(n: int, k: int) -> list:
    """Strictly increasing index tuples of length k drawn from range(n)."""
    return list(combinations(range(n), k))


def all_subsets(n: int) -> list:
    return [I for k in range(n + 1) for I in combinations(range(n), k)]


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if an index repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def sk(k: int) -> complex:
    """Prefactor making ``c(sk(k) beta)`` Hermitian for a real k-form beta."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    return 1.0 + 0j if k % 4 in (0, 3) else 1j


@dataclass(frozen=True, eq=False)
class CliffordRep:
    """Complex spinor representation of Cl(n).

    ``generators[j]`` is the action of ``e_{j+1}``.  For even ``n`` the chiral
    index sets ``plus``/``minus`` list the basis vectors spanning ``S_+``/``S_-``
    (the volume element is diagonal in this basis).
    """

    n: int
    rank: int
    generators: Tuple[np.ndarray, ...]
    volume: np.ndarray
    plus: Tuple[int, ...] | None = None
    minus: Tuple[int, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def even(self) -> bool:
        return self.n % 2 == 0

    def projector(self, chirality: str = "full") -> np.ndarray:
        if chirality == "full":
            return np.eye(self.rank, dtype=complex)
        if not self.even:
            raise ValueError("chirality is only defined in even dimensions")
        idx = self.plus if chirality == "plus" else self.minus
        P = np.zeros((self.rank, self.rank), dtype=complex)
        P[list(idx), list(idx)] = 1.0
        return P

    def chiral_indices(self, chirality: str) -> Tuple[int, ...]:
        if chirality == "full":
            return tuple(range(self.rank))
        if not self.even:
            raise ValueError("chirality is only defined in even dimensions")
        return self.plus if chirality == "plus" else self.minus

    def basis_matrix(self, I: Tuple[int, ...]) -> np.ndarray:
        """``c(e_I)`` as the ordered product of generators (cached)."""
        key = ("mat", tuple(I))
        if key not in self._cache:
            M = np.eye(self.rank, dtype=complex)
            for j in I:
                M = M @ self.generators[j]
            self._cache[key] = M
        return self._cache[key]

    def monomial(self, I: Tuple[int, ...]):
        """Return ``(perm, phase)`` with ``(c(e_I) v)[a] = phase[a] * v[perm[a]]``.

        Every ``c(e_I)`` is a monomial matrix in the tensor-product basis, which
        keeps field-level Clifford multiplication cheap.
        """
        key = ("mono", tuple(I))
        if key not in self._cache:
            M = self.basis_matrix(I)
            perm = np.argmax(np.abs(M), axis=1)
            phase = M[np.arange(self.rank), perm]
            self._cache[key] = (perm, phase)
        return self._cache[key]


@lru_cache(maxsize=None)
def build_rep(n: int) -> CliffordRep:
    """Build the Cl(n) representation on C^(2^floor(n/2))."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_DIM:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIM}], got {n!r}")
    n = int(n)
    m = n // 2
    rank = 2 ** m
    hermitian = []
    for j in range(m):
        left = [_S3] * j
        right = [_I2] * (m - j - 1)
        hermitian.append(_kron_all(left + [_S1] + right))
        hermitian.append(_kron_all(left + [_S2] + right))
    if n % 2 == 1:
        hermitian.append(_kron_all([_S3] * m))
    gens = [1j * g for g in hermitian]

    vol = np.eye(rank, dtype=complex)
    for g in gens:
        vol = vol @ g
    plus = minus = None
    if n % 2 == 1:
        # fix orientation of the last generator so that i^m c(dvol) = 1, n = 2m - 1
        mm = (n + 1) // 2
        if not np.allclose((1j ** mm) * vol, np.eye(rank)):
            gens[-1] = -gens[-1]
            vol = -vol
    else:
        chir = np.real(np.diag((1j ** m) * vol))
        plus = tuple(int(a) for a in np.flatnonzero(chir > 0))
        minus = tuple(int(a) for a in np.flatnonzero(chir < 0))
    for g in gens:
        g.setflags(write=False)
    vol.setflags(write=False)
    return CliffordRep(n=n, rank=rank, generators=tuple(gens), volume=vol,
                       plus=plus, minus=minus)


class FormValue:
    """Inhomogeneous complex exterior form at a point.

    Coefficients are keyed by strictly increasing index tuples (0-based);
    zero coefficients are dropped.
    """

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs: Mapping[Tuple[int, ...], complex] | None = None):
        self.n = int(n)
        clean: Dict[Tuple[int, ...], complex] = {}
        for key, val in (coeffs or {}).items():
            key = tuple(int(i) for i in key)
            if any(i < 0 or i >= self.n for i in key):
                raise ValueError(f"index out of range in {key} for n={self.n}")
            s = perm_sign(key)
            if s == 0:
                continue
            key_sorted = tuple(sorted(key))
            val = s * val
            clean[key_sorted] = clean.get(key_sorted, 0) + val
        self.coeffs = {k: v for k, v in clean.items() if v != 0}

    @classmethod
    def basis(cls, n: int, *idx, coeff=1.0) -> "FormValue":
        """``coeff * e_{i1} ^ ... ^ e_{ik}`` with 1-based indices."""
        return cls(n, {tuple(i - 1 for i in idx): coeff})

    @classmethod
    def scalar(cls, n: int, value=1.0) -> "FormValue":
        return cls(n, {(): value})

    @classmethod
    def volume(cls, n: int) -> "FormValue":
        return cls(n, {tuple(range(n)): 1.0})

    @classmethod
    def from_vector(cls, n: int, k: int, vec) -> "FormValue":
        """Homogeneous k-form from coefficients in ``subsets(n, k)`` order."""
        return cls(n, dict(zip(subsets(n, k), np.asarray(vec).tolist())))

    def to_vector(self, k: int) -> np.ndarray:
        return np.array([self.coeffs.get(I, 0) for I in subsets(self.n, k)], dtype=complex)

    def degree_part(self, k: int) -> "FormValue":
        return FormValue(self.n, {I: v for I, v in self.coeffs.items() if len(I) == k})

    def degrees(self) -> list:
        return sorted({len(I) for I in self.coeffs})

    def conj(self) -> "FormValue":
        return FormValue(self.n, {I: np.conj(v) for I, v in self.coeffs.items()})

    def _check(self, other):
        if not isinstance(other, FormValue):
            raise TypeError("expected a FormValue")
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.coeffs)
        for I, v in other.coeffs.items():
            out[I] = out.get(I, 0) + v
        return FormValue(self.n, out)

    def __neg__(self):
        return FormValue(self.n, {I: -v for I, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return FormValue(self.n, {I: scalar * v for I, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __xor__(self, other):
        return wedge(self, other)

    def norm2(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.coeffs.values()))

    def max_abs_diff(self, other) -> float:
        self._check(other)
        keys = set(self.coeffs) | set(other.coeffs)
        if not keys:
            return 0.0
        return float(max(abs(self.coeffs.get(I, 0) - other.coeffs.get(I, 0)) for I in keys))

    def __eq__(self, other):
        return isinstance(other, FormValue) and other.n == self.n and self.coeffs == other.coeffs

    def __repr__(self):
        if not self.coeffs:
            return f"FormValue(n={self.n}, 0)"
        terms = []
        for I in sorted(self.coeffs, key=lambda t: (len(t), t)):
            name = "e" + "".join(str(i + 1) for i in I) if I else "1"
            terms.append(f"{self.coeffs[I]}*{name}")
        return f"FormValue(n={self.n}, " + " + ".join(terms) + ")"


def act(rep: CliffordRep, f: FormValue) -> np.ndarray:
    """Clifford action ``c(f)``, extended linearly from ``c(e_I) = c(e_i1)...c(e_ik)``."""
    if f.n != rep.n:
        raise ValueError(f"form dimension {f.n} does not match representation {rep.n}")
    out = np.zeros((rep.rank, rep.rank), dtype=complex)
    for I, v in f.coeffs.items():
        out = out + v * rep.basis_matrix(I)
    return out


def wedge(f: FormValue, g: FormValue) -> FormValue:
    f._check(g)
    out: Dict[Tuple[int, ...], complex] = {}
    for I, a in f.coeffs.items():
        for J, b in g.coeffs.items():
            s = perm_sign(I + J)
            if s == 0:
                continue
            K = tuple(sorted(I + J))
            out[K] = out.get(K, 0) + s * a * b
    return FormValue(f.n, out)


def contract(eta: FormValue, f: FormValue) -> FormValue:
    """Interior product of the metric dual of the 1-form ``eta`` with ``f``."""
    eta._check(f)
    if eta.degrees() not in ([1], []):
        raise ValueError("contraction needs a homogeneous 1-form")
    out: Dict[Tuple[int, ...], complex] = {}
    for (j,), a in eta.coeffs.items():
        for I, b in f.coeffs.items():
            if j not in I:
                continue
            pos = I.index(j)
            K = I[:pos] + I[pos + 1:]
            out[K] = out.get(K, 0) + (-1) ** pos * a * b
    return FormValue(f.n, out)


def hodge_sign(n: int, I: Tuple[int, ...]) -> int:
    """Sign s with ``*e_I = s e_{I^c}``, fixed by ``e_I ^ *e_I = dvol``."""
    comp = tuple(i for i in range(n) if i not in I)
    return perm_sign(tuple(I) + comp)


def hodge(*args) -> FormValue:
    """Hodge star against the standard orientation ``e_1 ^ ... ^ e_n``.

    Accepts ``hodge(f)`` or ``hodge(rep, f)``; the star only depends on the
    dimension, the representation is checked for consistency.
    """
    if len(args) == 2:
        rep, f = args
        if rep.n != f.n:
            raise ValueError("dimension mismatch")
    elif len(args) == 1:
        (f,) = args
    else:
        raise TypeError("hodge expects (f) or (rep, f)")
    n = f.n
    out = {}
    for I, v in f.coeffs.items():
        comp = tuple(i for i in range(n) if i not in I)
        out[comp] = hodge_sign(n, I) * v
    return FormValue(n, out)


def form_inner(f: FormValue, g: FormValue) -> complex:
    """``<f, g>`` with orthonormal ``e_I``; linear in f, conjugate-linear in g."""
    f._check(g)
    return complex(sum(v * np.conj(g.coeffs[I]) for I, v in f.coeffs.items() if I in g.coeffs))


def clifford_hodge_factor(n: int, k: int, chirality: str = "full") -> complex:
    """Scalar lambda with ``c(*gamma) = lambda c(gamma)`` for k-forms.

    Applies on ``S_+``/``S_-`` in even dimension and on all of S in odd
    dimension.
    """
    kk = k * (k + 1) // 2
    if n % 2 == 0:
        m = n // 2
        sign = {"plus": 1, "minus": -1}[chirality]
        return sign * (-1) ** (m + kk) * (1j ** m)
    m = (n - 1) // 2
    return (-1) ** (m + 1 + kk) * (1j ** (m + 1))


def random_form(n: int, k: int, rng: np.random.Generator, complex_coeffs: bool = False) -> FormValue:
    vals = rng.standard_normal(comb(n, k))
    if complex_coeffs:
        vals = vals + 1j * rng.standard_normal(comb(n, k))
    return FormValue.from_vector(n, k, vals)


def self_dual_basis(n: int) -> list:
    """Orthonormal real basis ``(e_I + *e_I)/sqrt 2`` of middle-degree self-dual forms (n = 4m)."""
    if n % 4 != 0:
        raise ValueError("self-duality in middle degree needs n divisible by 4")
    k = n // 2
    out = []
    for I in subsets(n, k):
        if 0 in I:
            e = FormValue(n, {I: 1.0})
            out.append((e + hodge(e)) * (1 / np.sqrt(2)))
    return out


# exact Gaussian-rational arithmetic --------------------------------------------------

def act_exact(rep: CliffordRep, coeffs: Mapping[Tuple[int, ...], object]):
    """``c(f)`` as a sympy matrix for rational/Gaussian-rational coefficients."""
    import sympy as sp

    out = sp.zeros(rep.rank, rep.rank)
    for I, v in coeffs.items():
        out += sp.nsimplify(v) * _exact_basis(rep.n, tuple(I))
    return out


@lru_cache(maxsize=None)
def _exact_basis(n: int, I: Tuple[int, ...]):
    import sympy as sp

    rep = build_rep(n)
    M = rep.basis_matrix(I)
    return sp.Matrix(rep.rank, rep.rank,
                     lambda a, b: sp.Integer(int(M[a, b].real)) + sp.I * sp.Integer(int(M[a, b].imag)))


def exact_generators(n: int) -> list:
    return [_exact_basis(n, (j,)) for j in range(n)]


def iter_basis_forms(n: int, degrees: Iterable[int]):
    for k in degrees:
        for I in subsets(n, k):
            yield FormValue(n, {I: 1.0})
