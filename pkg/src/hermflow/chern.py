"""Chern scalar curvature of potential metrics and the flow operator Q.

For a potential u the (n-1,n-1)-form omega^{n-1} + sqrt(-1) ddbar(u omega^{n-2})
has psi-matrix ``psi(u) = I + c_n (tr(H) I - H^T)`` with ``H`` the complex
Hessian of u and ``c_n`` frozen by :mod:`hermflow.exterior`.  The curvature is
evaluated in the logdet form

    s_u = -1/(n-1) * g_u^{kbar r} d_r d_kbar log det psi(u),

with every pointwise nonlinear stage run on the 3/2-padded grid.
"""
from __future__ import annotations

import numpy as np

from . import hermitian as hf
from .exterior import frozen_convention
from .torus import ScalarField, TorusGrid

IMAG_TOL = 1e-10


def psi_from_hessian(H: np.ndarray, n: int) -> np.ndarray:
    return np.eye(n) + frozen_convention(n).apply(H)


def _mixed(coeffs, dz, dzbar, to_physical, n):
    """d_{z_a} d_{zbar_b} of a real field, for all a, b (Hermitian by symmetry)."""
    shape = coeffs.shape
    out = np.zeros(shape + (n, n), dtype=complex)
    for a in range(n):
        for b in range(a, n):
            m = dz[a] * dzbar[b]
            if not np.any(m):
                continue
            out[..., a, b] = to_physical(coeffs * m)
            if b != a:
                out[..., b, a] = np.conj(out[..., a, b])
    return out


class _Ops:
    """Multiplier tables on the padded grid, built once per TorusGrid."""

    _cache: dict = {}

    def __init__(self, grid: TorusGrid):
        d = grid.dealiaser
        self.grid = grid
        self.deal = d
        self.n = grid.n
        self.dz = [np.broadcast_to(d.dz_multiplier(a), d.shape) for a in range(grid.n)]
        self.dzbar = [np.broadcast_to(d.dzbar_multiplier(a), d.shape) for a in range(grid.n)]

    @classmethod
    def of(cls, grid):
        ops = cls._cache.get(grid)
        if ops is None:
            ops = cls._cache[grid] = cls(grid)
        return ops

    def hessian(self, native_coeffs):
        P = self.deal.pad(native_coeffs)
        return _mixed(P, self.dz, self.dzbar, self.deal.to_physical, self.n)

    def truncate_real(self, values):
        return self.deal.truncate(self.deal.to_spectral(values))


def assemble_psi(u: ScalarField) -> hf.HermitianField:
    """psi(u) on the native grid (no positivity check)."""
    from .torus import complex_hessian
    return hf.HermitianField(u.grid, psi_from_hessian(complex_hessian(u), u.grid.n))


def _real(z, what):
    scale = max(1.0, float(np.max(np.abs(z.real))))
    if float(np.max(np.abs(z.imag))) > IMAG_TOL * scale:
        raise FloatingPointError(f"{what}: imaginary residue {np.max(np.abs(z.imag)):.3e}")
    return z.real


class CurvatureWorkspace:
    """Caches of the last evaluation: padded psi, g^{-1}, log det psi, s.

    One workspace per flow thread.  ``valid_for`` is the spectral bytes of the
    source potential; all caches are replaced together.
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.ops = _Ops.of(grid)
        self.valid_for = None
        self.psi = self.ginv = self.logdet = self.s = None

    def evaluate(self, u: ScalarField) -> ScalarField:
        key = u.spectral.tobytes()
        if key == self.valid_for:
            return self.s
        self.valid_for = None
        ops = self.ops
        n = self.grid.n
        psi = psi_from_hessian(ops.hessian(u.spectral), n)
        hf.check_positive(psi)
        ell_hat = ops.truncate_real(hf.logdet(psi, check=False))
        A = ops.hessian(ell_hat)
        ginv = hf.inverse_metric_from_psi(psi)
        contr = np.einsum("...kr,...rk->...", ginv, A)
        s_pad = _real(-contr / (n - 1), "chern_scalar")
        s_hat = ops.truncate_real(s_pad)
        self.psi, self.ginv, self.logdet = psi, ginv, ell_hat
        self.s = ScalarField.from_spectral(self.grid, s_hat)
        self.valid_for = key
        return self.s


def chern_scalar(u: ScalarField, workspace: CurvatureWorkspace | None = None) -> ScalarField:
    ws = workspace if workspace is not None else CurvatureWorkspace(u.grid)
    return ws.evaluate(u)


def Q(u: ScalarField, workspace: CurvatureWorkspace | None = None,
      mean_subtract: bool = False) -> ScalarField:
    """Flow operator s_u - R with R = 0 on the flat background.

    ``mean_subtract`` switches to s_u - mean(s_u); it changes the operator and
    is off unless explicitly requested.
    """
    s = chern_scalar(u, workspace)
    if mean_subtract:
        return s - s.mean()
    return s


def kahler_scalar(u: ScalarField) -> ScalarField:
    """Scalar curvature of the Kahler metric omega + sqrt(-1) ddbar u (n = 2 only).

    Independent of the psi machinery: det g and g^{-1} come straight from
    g = I + H via closed-form 2 x 2 algebra.
    """
    grid = u.grid
    if grid.n != 2:
        raise ValueError("the Kahler cross-check path is defined for n = 2")
    ops = _Ops.of(grid)
    g = np.eye(2) + ops.hessian(u.spectral)
    hf.check_positive(g)
    detg = (g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]).real
    ell_hat = ops.truncate_real(np.log(detg))
    A = ops.hessian(ell_hat)
    # g^{-1} = adj(g) / det g for 2 x 2
    tr = (g[..., 1, 1] * A[..., 0, 0] - g[..., 0, 1] * A[..., 1, 0]
          - g[..., 1, 0] * A[..., 0, 1] + g[..., 0, 0] * A[..., 1, 1]) / detg
    return ScalarField.from_spectral(grid, ops.truncate_real(_real(-tr, "kahler_scalar")))


def chern_scalar_expanded(u: ScalarField) -> ScalarField:
    """Second path through the product expansion of d_r d_kbar log det psi.

    s = -1/(n-1) g^{kbar r} [ tr(psi^{-1} d_r d_kbar psi)
                              - tr(psi^{-1} d_r psi psi^{-1} d_kbar psi) ].
    Derivatives of the entries of psi are spectral (psi is linear in u).
    """
    grid = u.grid
    n = grid.n
    ops = _Ops.of(grid)
    d = ops.deal
    conv = frozen_convention(n)
    P = d.pad(u.spectral)

    def entries(mult):
        Hd = np.zeros(d.shape + (n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                m = ops.dz[a] * ops.dzbar[b] * mult
                if np.any(m):
                    Hd[..., a, b] = d.to_physical(P * m)
        return conv.apply(Hd)

    ones = np.ones(d.shape)
    psi = np.eye(n) + entries(ones)
    hf.check_positive(psi)
    pinv = hf.adjugate(psi) / hf.det(psi)[..., None, None]
    ginv = hf.inverse_metric_from_psi(psi)
    dpsi = [entries(ops.dz[r]) for r in range(n)]
    dbpsi = [entries(ops.dzbar[k]) for k in range(n)]
    total = np.zeros(d.shape, dtype=complex)
    for r in range(n):
        for k in range(n):
            w = ginv[..., k, r]
            if not np.any(w):
                continue
            second = entries(ops.dz[r] * ops.dzbar[k])
            t1 = np.einsum("...ba,...ab->...", pinv, second)
            t2 = np.einsum("...bl,...lm,...ma,...ab->...", pinv, dpsi[r], pinv, dbpsi[k])
            total += w * (t1 - t2)
    s_pad = _real(-total / (n - 1), "chern_scalar_expanded")
    return ScalarField.from_spectral(grid, ops.truncate_real(s_pad))
