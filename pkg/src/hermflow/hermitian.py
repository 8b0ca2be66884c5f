"""Batched n x n Hermitian matrix algebra (n <= 3) over grid points.

Arrays carry the matrix in the last two axes, ``A[..., i, j]``.  The psi
matrix of a metric is its cofactor matrix, ``psi = det(g) g^{-T}``, as fixed
by the exterior-algebra oracle; the inverse map is
``g = det(psi)^{1/(n-1)} psi^{-T}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERACY_RATIO = 1e-10


class PositivityLost(ArithmeticError):
    """A point left the positive cone."""

    def __init__(self, index, min_eig: float):
        self.index = index
        self.min_eig = float(min_eig)
        super().__init__(f"matrix not positive definite at point {index} "
                         f"(min eigenvalue {self.min_eig:.6e})")

    def __reduce__(self):
        return type(self), (self.index, self.min_eig)


@dataclass(frozen=True)
class HermitianField:
    grid: object
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def hermitian_defect(self) -> float:
        d = np.abs(self.values - np.conj(np.swapaxes(self.values, -1, -2)))
        return float(d.max() / max(np.abs(self.values).max(), 1e-300))


def _arr(A):
    return A.values if isinstance(A, HermitianField) else np.asarray(A)


def _wrap(like, values):
    return HermitianField(like.grid, values) if isinstance(like, HermitianField) else values


def det(A):
    a = _arr(A)
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0]
    if n == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if n == 3:
        return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
                - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
                + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))
    raise ValueError("n > 3 is not supported")


def adjugate(A):
    a = _arr(A)
    n = a.shape[-1]
    out = np.empty_like(a)
    if n == 2:
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
        return out
    if n == 3:
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != j]
                c = [k for k in range(3) if k != i]
                minor = (a[..., r[0], c[0]] * a[..., r[1], c[1]]
                         - a[..., r[0], c[1]] * a[..., r[1], c[0]])
                out[..., i, j] = (-1) ** (i + j) * minor
        return out
    raise ValueError("n must be 2 or 3")


def eigvalsh(A) -> np.ndarray:
    """Ascending eigenvalues; closed form for 2 x 2, LAPACK otherwise."""
    a = _arr(A)
    if a.shape[-1] != 2:
        return np.linalg.eigvalsh(a)
    p = a[..., 0, 0].real
    q = a[..., 1, 1].real
    mid = 0.5 * (p + q)
    rad = np.hypot(0.5 * (p - q), np.abs(a[..., 0, 1]))
    lo = mid - rad
    hi = mid + rad
    # the smaller root loses digits when mid ~ rad; det / hi restores them
    lo = np.where(mid > 0, (p * q - np.abs(a[..., 0, 1]) ** 2) / np.where(hi != 0, hi, 1.0), lo)
    return np.stack([lo, hi], axis=-1)


def min_eig(A) -> np.ndarray:
    return eigvalsh(A)[..., 0]


def check_positive(A, ratio: float = DEGENERACY_RATIO) -> np.ndarray:
    """Raise PositivityLost at the worst point, else return the eigenvalues."""
    a = _arr(A)
    if not np.all(np.isfinite(a)):
        raise PositivityLost(None, float("nan"))
    ev = eigvalsh(a)
    bad = ev[..., 0] <= ratio * np.abs(ev[..., -1])
    if np.any(bad):
        flat = np.argmin(np.where(bad, ev[..., 0], np.inf))
        idx = np.unravel_index(flat, ev.shape[:-1])
        raise PositivityLost(tuple(int(i) for i in idx), ev[..., 0][idx])
    return ev


def inv(A, check: bool = True):
    a = _arr(A)
    if check:
        check_positive(a)
    return _wrap(A, adjugate(a) / det(a)[..., None, None])


def logdet(A, check: bool = True) -> np.ndarray:
    a = _arr(A)
    if check:
        check_positive(a)
    return np.log(det(a).real)


def psi_from_metric(g, check: bool = True):
    a = _arr(g)
    if check:
        check_positive(a)
    return _wrap(g, np.swapaxes(adjugate(a), -1, -2))


def metric_from_psi(psi, check: bool = True):
    a = _arr(psi)
    n = a.shape[-1]
    if check:
        check_positive(a)
    d = det(a).real
    scale = d ** (1.0 / (n - 1)) / d
    return _wrap(psi, scale[..., None, None] * np.swapaxes(adjugate(a), -1, -2))


def inverse_metric_from_psi(psi) -> np.ndarray:
    """g^{-1} = det(psi)^{-1/(n-1)} psi^T, without forming g."""
    a = _arr(psi)
    n = a.shape[-1]
    d = det(a).real
    return (d ** (-1.0 / (n - 1)))[..., None, None] * np.swapaxes(a, -1, -2)
