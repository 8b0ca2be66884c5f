"""Linearization of Q, hypothesis checks, spectra and the T-bounded lower bound."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chern
from .torus import ScalarField, TorusGrid, complex_hessian

KERNEL_THRESHOLD = 1e-9
MAX_DENSE_POINTS = 4096


@dataclass
class LinearOperatorHandle:
    """Either a Fourier multiplier (``multiplier[k]``) or a dense matrix acting
    on ``values.ravel()`` of a reduced grid."""

    grid: TorusGrid
    multiplier: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def apply(self, v: ScalarField) -> ScalarField:
        if self.multiplier is not None:
            return ScalarField.from_spectral(self.grid, v.spectral * self.multiplier)
        return ScalarField(self.grid, (self.matrix @ v.values.ravel()).reshape(self.grid.shape))

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return dense_from_multiplier(self.grid, self.multiplier)


def L_flat(grid: TorusGrid) -> LinearOperatorHandle:
    """L = -(1/(n-1)) Delta_C^2, symbol -(|kappa|^2/4)^2/(n-1) with kappa = 2 pi k / period."""
    mult = -(grid.laplacian_multiplier ** 2) / (grid.n - 1)
    return LinearOperatorHandle(grid, multiplier=mult)


def dense_from_multiplier(grid: TorusGrid, mult: np.ndarray) -> np.ndarray:
    N = grid.size
    if N > MAX_DENSE_POINTS:
        raise ValueError(f"dense operators are limited to {MAX_DENSE_POINTS} points")
    eye = np.eye(N).reshape((N,) + grid.shape)
    axes = tuple(range(1, 1 + len(grid.shape)))
    cols = np.fft.ifftn(np.fft.fftn(eye, axes=axes) * mult, axes=axes).real
    return cols.reshape(N, N).T


def fourier_basis(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal real Fourier basis of R^N (columns) and |kappa|^2 per column."""
    N = grid.size
    if N > MAX_DENSE_POINTS:
        raise ValueError(f"dense operators are limited to {MAX_DENSE_POINTS} points")
    shape = grid.shape
    xs = grid.coordinates()
    cols, ksq = [], []
    seen = set()
    for idx in np.ndindex(*shape):
        conj = tuple((-i) % m for i, m in zip(idx, shape))
        if conj in seen:
            continue
        seen.add(idx)
        kvec = [((i + m // 2) % m) - m // 2 for i, m in zip(idx, shape)]
        phase = sum(2 * np.pi * k * x / p for k, x, p in zip(kvec, xs, grid.periods))
        phase = np.broadcast_to(phase, shape).ravel()
        kk = sum((2 * np.pi * k / p) ** 2 for k, p in zip(kvec, grid.periods))
        c = np.cos(phase)
        cols.append(c / np.linalg.norm(c))
        ksq.append(kk)
        if conj != idx:
            s = np.sin(phase)
            cols.append(s / np.linalg.norm(s))
            ksq.append(kk)
    return np.array(cols).T, np.array(ksq)


def jacobian_fd(u: ScalarField, probe="fourier", eps: float | None = None,
                richardson: bool = False, mean_subtract: bool = False) -> np.ndarray:
    """Dense central-difference Jacobian of Q at u, in the grid-point basis.

    ``probe`` is "fourier" (orthonormal real Fourier vectors), "delta" (grid
    point indicators) or an (N, m) array of probe columns; for explicit
    arrays the returned matrix is J @ probes.  The step per probe is
    ``eps (1 + |u|_inf)`` divided by the sup norm of the probe's complex
    Hessian, so every probe perturbs psi by the same relative amount.
    """
    grid = u.grid
    N = grid.size
    if N > MAX_DENSE_POINTS:
        raise ValueError(f"jacobian_fd is limited to {MAX_DENSE_POINTS} points")
    base = (1e-5 if eps is None else eps) * (1.0 + float(np.max(np.abs(u.values))))
    explicit = not isinstance(probe, str)
    if explicit:
        B = np.asarray(probe, dtype=float).reshape(N, -1)
    elif probe == "fourier":
        B, _ = fourier_basis(grid)
    elif probe == "delta":
        B = np.eye(N)
    else:
        raise ValueError(f"unknown probe basis {probe!r}")
    ws = chern.CurvatureWorkspace(grid)

    def column(b, h):
        vp = ScalarField(grid, spectral=u.spectral + h * _spec(grid, b))
        vm = ScalarField(grid, spectral=u.spectral - h * _spec(grid, b))
        qp = chern.Q(vp, ws, mean_subtract).values.ravel()
        qm = chern.Q(vm, ws, mean_subtract).values.ravel()
        return (qp - qm) / (2 * h)

    cols = np.empty((N, B.shape[1]))
    for j in range(B.shape[1]):
        b = B[:, j]
        hb = float(np.max(np.abs(complex_hessian(ScalarField(grid, b.reshape(grid.shape))))))
        h = base / max(hb, 1.0)
        col = column(b, h)
        if richardson:
            col = (4.0 * column(b, h / 2) - col) / 3.0
        cols[:, j] = col
    if explicit:
        return cols
    return cols @ B.T


def _spec(grid, b):
    return np.fft.fftn(b.reshape(grid.shape)) / grid.size


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray  # of -L, ascending
    lambda1: float
    kernel_dim: int
    grid: dict

    def to_dict(self, max_eigs: int = 32) -> dict:
        return {"lambda1": self.lambda1, "kernel_dim": self.kernel_dim,
                "num_eigenvalues": int(self.eigenvalues.size),
                "eigenvalues_head": [float(x) for x in self.eigenvalues[:max_eigs]],
                "grid": self.grid}


def spectrum(handle: LinearOperatorHandle) -> SpectrumReport:
    """Eigenvalues of -L over the resolved (non-Nyquist) modes or of the
    symmetrized dense matrix."""
    if handle.multiplier is not None:
        ev = np.sort(-handle.multiplier[~handle.grid.nyquist_mask].ravel())
    else:
        M = handle.matrix
        ev = np.linalg.eigvalsh(-(M + M.T) / 2)
    kernel = ev <= KERNEL_THRESHOLD
    pos = ev[~kernel]
    lam1 = float(pos[0]) if pos.size else float("nan")
    return SpectrumReport(ev, lam1, int(np.count_nonzero(np.abs(ev) <= KERNEL_THRESHOLD)),
                          handle.grid.to_dict())


# -- hypothesis checks on a dense Jacobian -------------------------------------

def symmetry_defect(J: np.ndarray) -> float:
    return float(np.linalg.norm(J - J.T, 2) / np.linalg.norm(J, 2))


def row_sum_defect(J: np.ndarray) -> float:
    return float(np.max(np.abs(J.sum(axis=1))) / np.linalg.norm(J, 2))


def max_symmetric_eigenvalue(J: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((J + J.T) / 2)[-1])


def inner(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> float:
    return float(grid.volume * np.mean(np.ravel(f) * np.ravel(g)))


@dataclass
class CoercivityReport:
    eps: float
    margins: list = field(default_factory=list)

    @property
    def worst_margin(self) -> float:
        return min(self.margins) if self.margins else float("inf")

    @property
    def passed(self) -> bool:
        return self.worst_margin >= 0.0

    def to_dict(self) -> dict:
        return {"eps": self.eps, "samples": len(self.margins),
                "worst_margin": self.worst_margin, "pass": self.passed}


def coercivity_probe(u: ScalarField, samples, eps: float, J_u: np.ndarray | None = None,
                     L: np.ndarray | None = None) -> CoercivityReport:
    """Margins of -<L_u z, z> - (1-eps) <-L z, z> + eps |z|^2 over samples z."""
    grid = u.grid
    if J_u is None:
        J_u = jacobian_fd(u)
    if L is None:
        L = L_flat(grid).dense()
    rep = CoercivityReport(eps)
    for z in samples:
        zv = z.values.ravel() if isinstance(z, ScalarField) else np.ravel(z)
        lhs = -inner(grid, J_u @ zv, zv)
        rhs = (1 - eps) * -inner(grid, L @ zv, zv) - eps * inner(grid, zv, zv)
        rep.margins.append(lhs - rhs)
    return rep


# -- symmetric T-bounded perturbations ------------------------------------------

class TBoundError(ValueError):
    pass


@dataclass
class TBoundProblem:
    """T self-adjoint with lower bound gamma_T, V symmetric with
    |V h| <= a |h| + b |T h|, b < 1 (dense truncations)."""

    T: np.ndarray
    V: np.ndarray
    a: float
    b: float
    gamma_T: float

    def __post_init__(self):
        if not 0 <= self.b < 1:
            raise TBoundError(f"relative bound b must lie in [0, 1), got {self.b}")
        if self.a < 0:
            raise TBoundError("a must be non-negative")

    def bound_holds_on(self, probes: np.ndarray, slack: float = 1e-12) -> bool:
        for h in np.atleast_2d(probes):
            lhs = np.linalg.norm(self.V @ h)
            rhs = self.a * np.linalg.norm(h) + self.b * np.linalg.norm(self.T @ h)
            if lhs > rhs * (1 + slack) + slack:
                return False
        return True

    def min_eig_sum(self) -> float:
        S = self.T + self.V
        return float(np.linalg.eigvalsh((S + S.T) / 2)[0])


def tbound_gamma(p: TBoundProblem) -> float:
    if p.b >= 1:
        raise TBoundError("b must be < 1")
    return p.gamma_T - max(p.a / (1 - p.b), p.a + p.b * abs(p.gamma_T))


def relative_bound_a(T: np.ndarray, V: np.ndarray, b: float) -> float:
    """Smallest a with |Vh|^2 <= a^2 |h|^2 + b^2 |Th|^2 for all h.

    That quadratic bound implies |Vh| <= a|h| + b|Th|.
    """
    M = V.T @ V - b * b * (T.T @ T)
    lam = float(np.linalg.eigvalsh((M + M.T) / 2)[-1])
    return float(np.sqrt(max(lam, 0.0)))


def coercivity_problem(u: ScalarField, eps: float, b: float = 0.5) -> TBoundProblem:
    """T = -eps L, V = L - (L_u + L_u^T)/2 on the dense truncation."""
    L = L_flat(u.grid).dense()
    J = jacobian_fd(u)
    T = -eps * L
    V = L - 0.5 * (J + J.T)
    return TBoundProblem(T, V, relative_bound_a(T, V, b), b, 0.0)
