"""Brute-force exterior algebra of constant (p,q)-forms on C^n.

This is the slow, independent path that pins every combinatorial constant of
the psi-matrix machinery.  A basis monomial is ``dz^I ^ dzbar^J`` with ``I``
and ``J`` increasing tuples of zero-based indices, all holomorphic factors
first.  Products are formed by concatenating generator lists and sorting
them with an explicit permutation sign.

The flat background form is ``omega = sqrt(-1) sum_a dz^a ^ dzbar^a``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class DegreeError(ValueError):
    pass


def _sort_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    if len(set(seq)) != len(seq):
        return 0, None
    seq = list(seq)
    sign = 1
    # bubble sort keeps the transposition count explicit
    for i in range(len(seq)):
        for j in range(len(seq) - 1 - i):
            if seq[j] > seq[j + 1]:
                seq[j], seq[j + 1] = seq[j + 1], seq[j]
                sign = -sign
    return sign, tuple(seq)


def _generators(n, I, J):
    return list(I) + [n + j for j in J]


def _split(n, gens):
    return tuple(g for g in gens if g < n), tuple(g - n for g in gens if g >= n)


def merge_monomials(n: int, first: tuple, second: tuple):
    """(dz^I1 ^ dzbar^J1) ^ (dz^I2 ^ dzbar^J2) = sign * dz^I ^ dzbar^J.

    Returns (sign, (I, J)); sign is 0 when a generator repeats.
    """
    gens = _generators(n, *first) + _generators(n, *second)
    sign, srt = _sort_sign(gens)
    if sign == 0:
        return 0, None
    return sign, _split(n, srt)


@dataclass
class PQForm:
    n: int
    p: int
    q: int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        for (I, J) in self.coeffs:
            if len(I) != self.p or len(J) != self.q:
                raise DegreeError(f"monomial {(I, J)} is not of bidegree ({self.p},{self.q})")

    @classmethod
    def zero(cls, n, p, q):
        return cls(n, p, q, {})

    @classmethod
    def one(cls, n):
        return cls(n, 0, 0, {((), ()): 1.0 + 0j})

    def basis(self):
        return [(I, J) for I in itertools.combinations(range(self.n), self.p)
                for J in itertools.combinations(range(self.n), self.q)]

    def coeff(self, I, J) -> complex:
        return self.coeffs.get((tuple(I), tuple(J)), 0.0)

    def __add__(self, other):
        self._check_same(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return PQForm(self.n, self.p, self.q, out)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, c):
        return PQForm(self.n, self.p, self.q, {k: c * v for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def _check_same(self, other):
        if (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise DegreeError("bidegree mismatch")

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)


def wedge(A: PQForm, B: PQForm) -> PQForm:
    if A.n != B.n:
        raise DegreeError("forms live on different C^n")
    n = A.n
    if A.p + B.p > n or A.q + B.q > n:
        raise DegreeError(f"degree overflow: ({A.p}+{B.p}, {A.q}+{B.q}) on C^{n}")
    out = {}
    for (IA, JA), ca in A.coeffs.items():
        if ca == 0:
            continue
        for (IB, JB), cb in B.coeffs.items():
            if cb == 0:
                continue
            gens = _generators(n, IA, JA) + _generators(n, IB, JB)
            sign, srt = _sort_sign(gens)
            if sign == 0:
                continue
            key = _split(n, srt)
            out[key] = out.get(key, 0.0) + sign * ca * cb
    return PQForm(n, A.p + B.p, A.q + B.q, out)


def dz(n: int, a: int) -> PQForm:
    return PQForm(n, 1, 0, {((a,), ()): 1.0 + 0j})


def dzbar(n: int, a: int) -> PQForm:
    return PQForm(n, 0, 1, {((), (a,)): 1.0 + 0j})


def form_of_matrix(M) -> PQForm:
    """sqrt(-1) sum_{a,b} M[a,b] dz^a ^ dzbar^b."""
    M = np.asarray(M)
    n = M.shape[0]
    return PQForm(n, 1, 1, {((a,), (b,)): 1j * complex(M[a, b])
                            for a in range(n) for b in range(n)})


def kahler_form(n: int) -> PQForm:
    return form_of_matrix(np.eye(n))


def power(A: PQForm, k: int) -> PQForm:
    out = PQForm.one(A.n)
    for _ in range(k):
        out = wedge(out, A)
    return out


@dataclass(frozen=True)
class ScalarJet2:
    """Value, first and mixed second complex derivatives of a function at a point."""

    value: float
    d: np.ndarray
    dbar: np.ndarray
    hess: np.ndarray  # hess[a, b] = d_{z_a} d_{zbar_b} v

    @classmethod
    def from_hessian(cls, H, value=0.0):
        H = np.asarray(H, dtype=complex)
        n = H.shape[0]
        return cls(value, np.zeros(n, complex), np.zeros(n, complex), H)


def i_ddbar_times_form(jet: ScalarJet2, B: PQForm) -> PQForm:
    """sqrt(-1) d dbar(v B) for a constant-coefficient form B.

    Derivatives of B vanish, so only the Hessian part of the jet survives.
    """
    return wedge(form_of_matrix(jet.hess), B)


# -- psi-matrix basis ---------------------------------------------------------

def omitted_pair_sign(n: int, i: int, j: int) -> tuple[int, tuple, tuple]:
    """Rewrite the omitted-pair monomial in canonical order.

    The monomial is dz^1 ^ dzbar^1 ^ ... ^ dz^n ^ dzbar^n with dz^i and
    dzbar^j removed.  Returns (sign, I, J) with the monomial equal to
    sign * dz^I ^ dzbar^J.
    """
    gens = []
    for a in range(n):
        if a != i:
            gens.append(a)
        if a != j:
            gens.append(n + a)
    sign, srt = _sort_sign(gens)
    I, J = _split(n, srt)
    return sign, I, J


def epsilon(i: int, j: int) -> int:
    return 1 if i <= j else -1


def psi_prefactor(n: int) -> complex:
    return (1j) ** (n - 1) * math.factorial(n - 1)


def psi_of(Phi: PQForm, strict: bool = True) -> np.ndarray:
    """Extract psi from an (n-1,n-1)-form written as
    prefactor * sum psi_ij eps_ij (omitted-pair monomial).

    With ``strict`` a non-Hermitian result (a non-real form) is an error.
    """
    n = Phi.n
    if Phi.p != n - 1 or Phi.q != n - 1:
        raise DegreeError("psi_of needs an (n-1, n-1)-form")
    P = psi_prefactor(n)
    psi = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            s, I, J = omitted_pair_sign(n, i, j)
            psi[i, j] = Phi.coeff(I, J) * s * epsilon(i, j) / P
    scale = max(1.0, float(np.max(np.abs(psi))))
    if strict and np.max(np.abs(psi - psi.conj().T)) > 1e-12 * scale:
        raise ValueError("psi_of produced a non-Hermitian matrix: malformed form")
    return psi


def form_of_psi(psi) -> PQForm:
    psi = np.asarray(psi, dtype=complex)
    n = psi.shape[0]
    P = psi_prefactor(n)
    coeffs = {}
    for i in range(n):
        for j in range(n):
            s, I, J = omitted_pair_sign(n, i, j)
            coeffs[(I, J)] = coeffs.get((I, J), 0.0) + P * epsilon(i, j) * s * psi[i, j]
    return PQForm(n, n - 1, n - 1, coeffs)


def psi_of_metric(g) -> np.ndarray:
    """psi of omega_g^{n-1} by brute-force wedge powers."""
    g = np.asarray(g, dtype=complex)
    n = g.shape[0]
    return psi_of(power(form_of_matrix(g), n - 1))


def psi_of_potential_jet(jet: ScalarJet2, n: int) -> np.ndarray:
    """psi of omega^{n-1} + sqrt(-1) d dbar(v omega^{n-2}) on the flat background."""
    w = kahler_form(n)
    Phi = power(w, n - 1) + i_ddbar_times_form(jet, power(w, n - 2))
    return psi_of(Phi)


def delta_psi(H, n: int | None = None, strict: bool = True) -> np.ndarray:
    """Brute-force linear map H -> psi(omega^{n-1} + i ddbar(v) ^ omega^{n-2}) - I."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0] if n is None else n
    Phi = i_ddbar_times_form(ScalarJet2.from_hessian(H), power(kahler_form(n), n - 2))
    return psi_of(Phi, strict=strict)


@dataclass(frozen=True)
class PsiConvention:
    """Closed form delta_psi(H) = c_n * (tr(H) I - H^T) (or with H if not transposed)."""

    n: int
    c_n: float
    transpose: bool
    prefactor: complex
    flat_psi_is_identity: bool

    def apply(self, H: np.ndarray) -> np.ndarray:
        """Vectorised over leading axes of ``H[..., a, b]``."""
        n = self.n
        tr = np.trace(H, axis1=-2, axis2=-1)
        Ht = np.swapaxes(H, -1, -2) if self.transpose else H
        return self.c_n * (tr[..., None, None] * np.eye(n) - Ht)

    def to_dict(self) -> dict:
        return {"n": self.n, "c_n": self.c_n, "transpose": self.transpose,
                "prefactor": {"re": self.prefactor.real, "im": self.prefactor.imag},
                "flat_psi_is_identity": self.flat_psi_is_identity}


def psi_update_constant(n: int) -> PsiConvention:
    """Determine c_n and the transpose choice by evaluating the oracle."""
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    flat = psi_of(power(kahler_form(n), n - 1))
    flat_ok = bool(np.allclose(flat, np.eye(n), rtol=0, atol=1e-14))

    d_identity = delta_psi(np.eye(n))
    c_n = float(d_identity[0, 0].real) / (n - 1)

    # antisymmetric Hermitian probe: H^T = -H, so the sign fixes the choice
    A = np.zeros((n, n), dtype=complex)
    A[0, 1], A[1, 0] = 1j, -1j
    transpose = bool(delta_psi(A)[0, 1].imag * c_n > 0)
    conv = PsiConvention(n, c_n, transpose, psi_prefactor(n), flat_ok)

    for a in range(n):
        for b in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[a, b] = 1.0
            if not np.allclose(conv.apply(E), delta_psi(E, strict=False), rtol=0, atol=1e-14):
                raise AssertionError(f"closed form disagrees with oracle on E[{a},{b}]")
    return conv


_CACHE: dict[int, PsiConvention] = {}


def frozen_convention(n: int) -> PsiConvention:
    """The oracle-derived convention, computed once per n and reused everywhere."""
    if n not in _CACHE:
        _CACHE[n] = psi_update_constant(n)
    return _CACHE[n]


def convention_report() -> dict:
    return {str(n): frozen_convention(n).to_dict() for n in (2, 3)}
