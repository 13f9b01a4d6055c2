"""Spectral calculus on the flat torus (R / 2 pi Z)^n.

Fields are truncated Fourier series ``f(x) = sum_k f_k exp(i k.x)`` with
``|k_i| <= K``.  Coefficient arrays have shape ``(2K+1,)*n + tail`` with mode
``k`` stored at index ``k + K``; grid arrays have shape ``(N,)*n + tail``.
Form fields are dicts ``{degree: array(..., C(n, degree))}`` with components
in ``subsets(n, degree)`` order; spinor fields carry a trailing axis of length
``rank`` (chiral fields are zero off their chiral indices).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import fft as spfft

from .clifford_core import CliffordRep, hodge_sign, subsets

TWO_PI = 2 * np.pi


class Torus:
    """Mode cutoff ``K`` and collocation size ``N`` on the flat n-torus."""

    def __init__(self, n: int, K: int = 1, N: int | None = None):
        if n < 1 or K < 0:
            raise ValueError("need n >= 1 and K >= 0")
        self.n, self.K = int(n), int(K)
        self.N = int(N) if N is not None else 4 * self.K + 1
        if self.N < 2 * self.K + 1:
            raise ValueError(f"grid {self.N} cannot resolve modes up to {self.K}")
        self.M = 2 * self.K + 1
        self.mode_shape = (self.M,) * self.n
        self.grid_shape = (self.N,) * self.n
        self.points = self.N ** self.n
        self.volume = TWO_PI ** self.n
        kk = np.arange(-self.K, self.K + 1)
        self.k = [kk.reshape([-1 if a == j else 1 for a in range(self.n)]) for j in range(self.n)]
        self.k2 = sum(kj.astype(float) ** 2 for kj in self.k)
        freq = np.fft.fftfreq(self.N, 1.0 / self.N)
        if self.N % 2 == 0:
            freq[self.N // 2] = 0.0
        self._gfreq = [freq.reshape([-1 if a == j else 1 for a in range(self.n)]) for j in range(self.n)]
        self._idx = np.arange(-self.K, self.K + 1) % self.N

    def same(self, other: "Torus") -> bool:
        return (self.n, self.K, self.N) == (other.n, other.K, other.N)

    def __repr__(self):
        return f"Torus(n={self.n}, K={self.K}, N={self.N})"

    # coefficient <-> grid ---------------------------------------------------------
    def _axes(self):
        return tuple(range(self.n))

    def to_grid(self, c: np.ndarray) -> np.ndarray:
        """Evaluate coefficients ``(M,)*n + tail`` at the grid points."""
        c = np.asarray(c)
        tail = c.shape[self.n:]
        full = np.zeros(self.grid_shape + tail, dtype=complex)
        full[np.ix_(*([self._idx] * self.n))] = c
        return spfft.ifftn(full, axes=self._axes(), overwrite_x=True) * self.points

    def from_grid(self, v: np.ndarray, K: int | None = None) -> np.ndarray:
        """Fourier coefficients of grid data, truncated to ``|k_i| <= K``."""
        K = self.K if K is None else int(K)
        if 2 * K + 1 > self.N:
            raise ValueError("requested cutoff is not resolved by the grid")
        c = spfft.fftn(v, axes=self._axes()) / self.points
        idx = np.arange(-K, K + 1) % self.N
        return c[np.ix_(*([idx] * self.n))]

    def _freq(self, j: int, ndim: int) -> np.ndarray:
        return self._gfreq[j].reshape(self._gfreq[j].shape + (1,) * (ndim - self.n))

    def grid_deriv(self, v: np.ndarray, j: int) -> np.ndarray:
        """Spectral derivative ``d/dx_j`` of grid data (exact for resolved bands)."""
        c = spfft.fftn(v, axes=self._axes())
        return spfft.ifftn(1j * self._freq(j, v.ndim) * c, axes=self._axes(), overwrite_x=True)

    def grid_gradient(self, v: np.ndarray) -> list:
        """All n partial derivatives from a single forward transform."""
        c = spfft.fftn(v, axes=self._axes())
        return [spfft.ifftn(1j * self._freq(j, v.ndim) * c, axes=self._axes(), overwrite_x=True)
                for j in range(self.n)]

    def grid_divergence(self, comps) -> np.ndarray:
        """``sum_j d/dx_j comps[j]`` with a single inverse transform."""
        acc = 0
        for j, v in enumerate(comps):
            acc = acc + 1j * self._freq(j, v.ndim) * spfft.fftn(v, axes=self._axes())
        return spfft.ifftn(acc, axes=self._axes(), overwrite_x=True)

    def deriv(self, c: np.ndarray, j: int) -> np.ndarray:
        kj = self.k[j].reshape(self.k[j].shape + (1,) * (c.ndim - self.n))
        return 1j * kj * c

    def integrate(self, v: np.ndarray) -> np.ndarray:
        """Trapezoidal quadrature over the torus (exact for bands below N)."""
        return v.mean(axis=self._axes()) * self.volume

    def coef_inner(self, c1: np.ndarray, c2: np.ndarray) -> complex:
        """L^2 inner product from coefficients (Parseval)."""
        return complex(np.vdot(c2, c1)) * self.volume

    def zero_mode(self, c: np.ndarray) -> np.ndarray:
        return c[(self.K,) * self.n]

    def k2_tail(self, ndim: int) -> np.ndarray:
        return self.k2.reshape(self.k2.shape + (1,) * (ndim - self.n))

    def random_coeffs(self, rng: np.random.Generator, tail=(), real: bool = False,
                      amplitude: float = 1.0, decay: float = 0.0) -> np.ndarray:
        """Random coefficients; ``real=True`` enforces ``c_{-k} = conj(c_k)``."""
        shape = self.mode_shape + tuple(tail)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        if decay:
            c = c / (1.0 + self.k2_tail(c.ndim)) ** decay
        c = amplitude * c
        if real:
            c = realify(c, self.n)
        return c

    def embed(self, c: np.ndarray, K_new: int) -> np.ndarray:
        """Zero-pad coefficients to a larger cutoff."""
        K_old = (c.shape[0] - 1) // 2
        if K_new < K_old:
            raise ValueError("embed only enlarges the cutoff")
        pad = [(K_new - K_old, K_new - K_old)] * self.n + [(0, 0)] * (c.ndim - self.n)
        return np.pad(c, pad)


def realify(c: np.ndarray, n: int) -> np.ndarray:
    """Project coefficients onto real-valued fields."""
    flip = c[(slice(None, None, -1),) * n]
    return 0.5 * (c + np.conj(flip))


# exterior calculus on coefficient dicts ---------------------------------------------

@lru_cache(maxsize=None)
def _d_table(n: int, k: int):
    """For each (k+1)-subset J: list of (position sign, j, index of J minus j)."""
    src = {I: a for a, I in enumerate(subsets(n, k))}
    table = []
    for J in subsets(n, k + 1):
        table.append([((-1) ** p, j, src[J[:p] + J[p + 1:]]) for p, j in enumerate(J)])
    return table


@lru_cache(maxsize=None)
def _hodge_table(n: int, k: int):
    src = subsets(n, k)
    dst = {I: a for a, I in enumerate(subsets(n, n - k))}
    perm = np.empty(len(src), dtype=int)
    sign = np.empty(len(src))
    for a, I in enumerate(src):
        comp = tuple(i for i in range(n) if i not in I)
        perm[a] = dst[comp]
        sign[a] = hodge_sign(n, I)
    return perm, sign


def form_zero(shape, n: int, k: int) -> np.ndarray:
    return np.zeros(tuple(shape) + (comb(n, k),), dtype=complex)


def _ik(torus: Torus, ndim: int) -> list:
    """``i k_j`` broadcast against one form component (no full derivative copies)."""
    return [1j * kj.reshape(kj.shape + (1,) * (ndim - torus.n)) for kj in torus.k]


def ext_d(torus: Torus, f: dict) -> dict:
    """Exterior derivative ``d f = sum_j e_j ^ d_j f`` on coefficient dicts."""
    n = torus.n
    out = {}
    for k, arr in f.items():
        if k >= n:
            continue
        ik = _ik(torus, arr.ndim - 1)
        res = form_zero(arr.shape[:-1], n, k + 1)
        for b, terms in enumerate(_d_table(n, k)):
            for s, j, a in terms:
                res[..., b] += (s * ik[j]) * arr[..., a]
        out[k + 1] = out.get(k + 1, 0) + res
    return out


def codiff(torus: Torus, f: dict) -> dict:
    """Codifferential ``d* f = - sum_j e_j -| d_j f``; the L^2 adjoint of ext_d."""
    n = torus.n
    out = {}
    for k, arr in f.items():
        if k == 0:
            continue
        ik = _ik(torus, arr.ndim - 1)
        res = form_zero(arr.shape[:-1], n, k - 1)
        for b, terms in enumerate(_d_table(n, k - 1)):
            for s, j, a in terms:
                # e_j -| e_J = s e_{J \ j}
                res[..., a] -= (s * ik[j]) * arr[..., b]
        out[k - 1] = out.get(k - 1, 0) + res
    return out


def hodge_field(n: int, f: dict) -> dict:
    out = {}
    for k, arr in f.items():
        perm, sign = _hodge_table(n, k)
        res = np.zeros_like(arr)
        res[..., perm] = arr * sign
        out[n - k] = out.get(n - k, 0) + res
    return out


def self_dual_part(n: int, f: dict) -> dict:
    """Projection ``(1 + *)/2`` in middle degree; other degrees untouched."""
    k = n // 2
    if n % 4 != 0 or k not in f:
        return dict(f)
    out = dict(f)
    out[k] = 0.5 * (f[k] + hodge_field(n, {k: f[k]})[k])
    return out


def form_add(*fs, coeffs=None) -> dict:
    coeffs = coeffs or [1] * len(fs)
    out = {}
    for c, f in zip(coeffs, fs):
        for k, arr in f.items():
            out[k] = out.get(k, 0) + c * arr
    return out


def form_scale(f: dict, c) -> dict:
    return {k: c * v for k, v in f.items()}


def form_conj(f: dict) -> dict:
    return {k: np.conj(v) for k, v in f.items()}


def hodge_laplacian(torus: Torus, f: dict) -> dict:
    """``Delta = d d* + d* d``; on the flat torus it multiplies mode k by |k|^2."""
    return form_add(ext_d(torus, codiff(torus, f)), codiff(torus, ext_d(torus, f)))


def green(torus: Torus, f: dict) -> dict:
    """Inverse of the Hodge Laplacian on the complement of the harmonic forms."""
    out = {}
    for k, arr in f.items():
        k2 = torus.k2_tail(arr.ndim)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(k2 > 0, arr / np.where(k2 > 0, k2, 1.0), 0.0)
        out[k] = g
    return out


def harmonic_part(torus: Torus, f: dict) -> dict:
    """Harmonic forms on the flat torus are the constant (zero-mode) ones."""
    out = {}
    for k, arr in f.items():
        h = np.zeros_like(arr)
        h[(torus.K,) * torus.n] = arr[(torus.K,) * torus.n]
        out[k] = h
    return out


def form_inner(torus: Torus, f: dict, g: dict) -> complex:
    """L^2 inner product of two coefficient-space form fields."""
    total = 0j
    for k in set(f) & set(g):
        total += torus.coef_inner(f[k], g[k])
    return total


def form_to_grid(torus: Torus, f: dict) -> dict:
    return {k: torus.to_grid(v) for k, v in f.items()}


def form_from_grid(torus: Torus, f: dict, K: int | None = None) -> dict:
    return {k: torus.from_grid(v, K) for k, v in f.items()}


def form_grid_norm2(torus: Torus, f: dict) -> float:
    return float(sum(torus.integrate(np.abs(v) ** 2).sum() for v in f.values()))


# Clifford multiplication on grid fields --------------------------------------------

def clifford_matrix_field(rep: CliffordRep, f: dict, rows, cols, dagger: bool = False) -> np.ndarray:
    """Pointwise matrices of ``c(f)`` (or ``c(f)^dagger``) restricted to rows x cols.

    ``f`` holds grid arrays; the result has shape ``(P, len(rows), len(cols))``.
    """
    rows, cols = list(rows), list(cols)
    mats, vals = [], []
    P = None
    for k, arr in f.items():
        P = int(np.prod(arr.shape[:-1]))
        vals.append(arr.reshape(P, -1))
        for I in subsets(rep.n, k):
            M = rep.basis_matrix(I)
            if dagger:
                M = M.conj().T
            mats.append(M[np.ix_(rows, cols)].ravel())
    if P is None:
        raise ValueError("empty form")
    V = np.concatenate(vals, axis=1)
    if dagger:
        V = np.conj(V)
    out = V @ np.array(mats)
    return out.reshape(P, len(rows), len(cols))


def apply_field(Mf: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply pointwise matrices ``(P, a, b)`` to a spinor grid array ``(..., b)``."""
    shape = v.shape[:-1]
    w = v.reshape(-1, v.shape[-1])
    out = np.einsum("pab,pb->pa", Mf, w)
    return out.reshape(shape + (Mf.shape[1],))


@dataclass
class DiracGrid:
    """Grid realisation of ``D = sum_j c(e_j)(d_j + a_j/2) + c(beta)`` on one chirality.

    ``a`` is the imaginary connection offset (grid array ``(..., n)``) and
    ``beta`` the total perturbation form as grid arrays.  ``rows_in``/``rows_out``
    are the spinor indices of the domain and the target.  The connection on
    spinors is ``d + a/2``, matching the charge-2 action on ``A``.
    """

    rep: CliffordRep
    torus: Torus
    a: np.ndarray
    beta: dict
    rows_in: list
    rows_out: list

    def __post_init__(self):
        n = self.rep.n
        ri, ro = self.rows_in, self.rows_out
        self.gen_oi = [self.rep.generators[j][np.ix_(ro, ri)] for j in range(n)]
        self.gen_io = [self.rep.generators[j][np.ix_(ri, ro)] for j in range(n)]
        if self.beta:
            self.Mb = clifford_matrix_field(self.rep, self.beta, ro, ri)
        else:
            self.Mb = np.zeros((self.torus.points, len(ro), len(ri)), dtype=complex)
        self.MbH = np.conj(np.swapaxes(self.Mb, 1, 2))

    def _ext(self, v, j):
        return self.torus.grid_deriv(v, j) + 0.5 * self.a[..., j:j + 1] * v

    def ext_gradient(self, v) -> list:
        """Components ``d_j v + a_j v / 2`` of the unperturbed connection."""
        return [g + 0.5 * self.a[..., j:j + 1] * v for j, g in enumerate(self.torus.grid_gradient(v))]

    def dirac_a(self, phi, grads=None):
        """``D_A phi`` (domain -> target); ``grads`` may carry ``ext_gradient(phi)``."""
        grads = self.ext_gradient(phi) if grads is None else grads
        out = 0
        for j, g in enumerate(grads):
            out = out + g @ self.gen_oi[j].T
        return out

    def apply(self, phi, grads=None):
        return self.dirac_a(phi, grads) + apply_field(self.Mb, phi)

    def adjoint(self, psi):
        """``D^* psi = D_A psi + c(beta)^dagger psi`` (target -> domain)."""
        out = 0
        for j, g in enumerate(self.ext_gradient(psi)):
            out = out + g @ self.gen_io[j].T
        return out + apply_field(self.MbH, psi)

    def b_apply(self, phi, j):
        """``B_j phi = -(c(e_j) c(beta) + c(beta)^dagger c(e_j)) phi / 2`` on the domain."""
        t1 = apply_field(self.Mb, phi) @ self.gen_io[j].T
        t2 = apply_field(self.MbH, phi @ self.gen_oi[j].T)
        return -0.5 * (t1 + t2)

    def covariant(self, phi, grads=None):
        """Components ``nabla_j phi = d_j phi + a_j phi / 2 + B_j phi``."""
        grads = self.ext_gradient(phi) if grads is None else grads
        return [g + self.b_apply(phi, j) for j, g in enumerate(grads)]

    def covariant_adjoint(self, comps):
        """Adjoint of :meth:`covariant`: ``sum_j -(d_j + a_j/2 + B_j) psi_j``."""
        out = -self.torus.grid_divergence(comps)
        for j, psi in enumerate(comps):
            out = out - 0.5 * self.a[..., j:j + 1] * psi - self.b_apply(psi, j)
        return out

    def rough_laplacian(self, phi, grads=None):
        return self.covariant_adjoint(self.covariant(phi, grads))

    def q_apply(self, phi):
        """Zeroth-order remainder ``c(beta)^dagger c(beta) + sum_j B_j^2``."""
        out = apply_field(self.MbH, apply_field(self.Mb, phi))
        for j in range(self.rep.n):
            out = out + self.b_apply(self.b_apply(phi, j), j)
        return out


def grid_inner(torus: Torus, u: np.ndarray, v: np.ndarray) -> complex:
    """L^2 inner product of grid data by quadrature (linear in u)."""
    return complex(torus.integrate(np.sum(u * np.conj(v), axis=-1)))


# coefficient-level wrappers -------------------------------------------------------

def _operator(state, side):
    from .sw_system import dirac_grid

    side = side or state.case.sides[0]
    return dirac_grid(state, side)


def _out_cutoff(torus: Torus, K_out):
    return min(2 * torus.K, (torus.N - 1) // 2) if K_out is None else K_out


def dirac_apply(case, state, phi: np.ndarray, side: str | None = None, K_out: int | None = None) -> np.ndarray:
    """``D_{A,beta} phi`` for full-rank spinor coefficients; returns coefficients.

    ``K_out`` defaults to ``2K``, which holds the product ``c(beta) phi`` exactly
    when the grid resolves it.
    """
    if case.n != state.torus.n:
        raise ValueError("case and torus dimensions differ")
    torus = state.torus
    op = _operator(state, side)
    g = torus.to_grid(phi)
    out = np.zeros(g.shape, complex)
    out[..., op.rows_out] = op.apply(g[..., op.rows_in])
    return torus.from_grid(out, _out_cutoff(torus, K_out))


def dirac_adjoint_apply(case, state, psi: np.ndarray, side: str | None = None,
                        K_out: int | None = None) -> np.ndarray:
    """Formal adjoint of :func:`dirac_apply` (target chirality -> domain chirality)."""
    if case.n != state.torus.n:
        raise ValueError("case and torus dimensions differ")
    torus = state.torus
    op = _operator(state, side)
    g = torus.to_grid(psi)
    out = np.zeros(g.shape, complex)
    out[..., op.rows_in] = op.adjoint(g[..., op.rows_out])
    return torus.from_grid(out, _out_cutoff(torus, K_out))


def spin_covariant(case, state, phi: np.ndarray, side: str | None = None, K_out: int | None = None) -> list:
    """Components ``nabla_j phi`` of the perturbed connection, as coefficients."""
    if case.n != state.torus.n:
        raise ValueError("case and torus dimensions differ")
    torus = state.torus
    op = _operator(state, side)
    g = torus.to_grid(phi)
    out = []
    for comp in op.covariant(g[..., op.rows_in]):
        full = np.zeros(g.shape, complex)
        full[..., op.rows_in] = comp
        out.append(torus.from_grid(full, _out_cutoff(torus, K_out)))
    return out
