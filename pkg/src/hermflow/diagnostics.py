"""Norms, decay fits, structural residuals and the conserved functional."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import chern
from . import exterior as ex
from . import hermitian as hf
from .torus import ScalarField, TorusGrid

EPS = np.finfo(float).eps
MIN_FIT_SAMPLES = 10
MIN_R2 = 0.999


class FitUnreliable(ValueError):
    pass


def l2_norm(f: ScalarField) -> float:
    return math.sqrt(f.grid.volume * float(np.mean(np.square(f.values))))


def sobolev_norm(f: ScalarField, k: int) -> float:
    """W^{k,2} norm through the multiplier (1 + |kappa|^2)^{k/2}."""
    if not 0 <= k <= 8:
        raise ValueError("Sobolev order must be in 0..8")
    if k == 0:
        return l2_norm(f)
    w = (1.0 + f.grid.k_squared) ** k
    return math.sqrt(f.grid.volume * float(np.sum(w * np.abs(f.spectral) ** 2)))


def _trapezoid(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def parabolic_norm(run, k: int) -> float:
    """Discrete parabolic norm over the stored snapshots of a run.

    k = 0: (int |u|_{L2}^2 dt)^{1/2}.  k = 1 adds |Q(u)|_{L2}^2 (standing in
    for the time derivative along a trajectory) and spatial derivatives up to
    order four.
    """
    if k not in (0, 1):
        raise ValueError("parabolic_norm supports k in {0, 1}")
    snaps = run.snapshots if hasattr(run, "snapshots") else run
    if len(snaps) < 2:
        raise ValueError("need at least two samples")
    t = [s[0] for s in snaps]
    if k == 0:
        dens = [l2_norm(u) ** 2 for _, u in snaps]
    else:
        curv = getattr(getattr(run, "params", None), "curvature", "chern")
        qf = chern.kahler_scalar if curv == "kahler" else chern.Q
        dens = [sobolev_norm(u, 4) ** 2 + l2_norm(qf(u)) ** 2 for _, u in snaps]
    return math.sqrt(_trapezoid(dens, t))


@dataclass
class DecayFit:
    rate: float
    intercept: float
    t_a: float
    t_b: float
    r2: float
    lambda1: float | None = None
    samples: int = 0

    @property
    def decay_bound_ok(self) -> bool:
        """rate >= lambda_1 (1 - 0.02)."""
        return self.lambda1 is not None and self.rate >= self.lambda1 * (1 - 0.02)

    @property
    def linear_rate_ok(self) -> bool:
        """|rate - 2 lambda_1| <= 5% of 2 lambda_1."""
        if self.lambda1 is None:
            return False
        return abs(self.rate - 2 * self.lambda1) <= 0.05 * 2 * self.lambda1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_bound_ok"] = self.decay_bound_ok
        d["linear_rate_ok"] = self.linear_rate_ok
        return d


def default_window(t, q2) -> tuple[float, float]:
    """Skip the first 10% of the time range; stop once |Q|^2 < 1e4 eps."""
    t = np.asarray(t, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    t_a = t[0] + 0.1 * (t[-1] - t[0])
    below = np.nonzero(q2 < 1e4 * EPS)[0]
    t_b = t[below[0]] if below.size else t[-1]
    return float(t_a), float(t_b)


def decay_fit(t, q2, window=None, lambda1: float | None = None) -> DecayFit:
    """Least-squares slope of log |Q|^2 against t; rate is minus the slope."""
    t = np.asarray(t, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    t_a, t_b = window if window is not None else default_window(t, q2)
    sel = (t >= t_a) & (t <= t_b) & (q2 > 1e2 * EPS)
    if np.count_nonzero(sel) < MIN_FIT_SAMPLES:
        raise FitUnreliable(f"only {np.count_nonzero(sel)} samples in window [{t_a}, {t_b}]")
    ts, ys = t[sel], np.log(q2[sel])
    A = np.vstack([ts, np.ones_like(ts)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - (slope * ts + icept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    fit = DecayFit(-float(slope), float(icept), float(ts[0]), float(ts[-1]), r2, lambda1,
                   int(ts.size))
    if r2 < MIN_R2:
        raise FitUnreliable(f"log-linear fit R^2 = {r2:.6f} < {MIN_R2}")
    return fit


# -- structure residuals ----------------------------------------------------------

def _deriv(grid: TorusGrid, f: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(np.fft.fftn(f) * mult)


def _form_from_psi(psi: np.ndarray, n: int) -> dict:
    """Coefficient fields of prefactor * sum psi_ij eps_ij (omitted-pair monomial)."""
    P = ex.psi_prefactor(n)
    out = {}
    for i in range(n):
        for j in range(n):
            s, I, J = ex.omitted_pair_sign(n, i, j)
            out[(I, J)] = out.get((I, J), 0.0) + P * ex.epsilon(i, j) * s * psi[..., i, j]
    return out


def _apply_d(grid: TorusGrid, form: dict, holomorphic: bool) -> dict:
    """del (holomorphic) or delbar of a form with field-valued coefficients."""
    n = grid.n
    out = {}
    for (I, J), coef in form.items():
        for a in range(n):
            gen = ((a,), ()) if holomorphic else ((), (a,))
            sign, key = ex.merge_monomials(n, gen, (I, J))
            if sign == 0:
                continue
            mult = grid.dz_multiplier(a) if holomorphic else grid.dzbar_multiplier(a)
            out[key] = out.get(key, 0.0) + sign * _deriv(grid, coef, mult)
    return out


def _sup(form: dict) -> float:
    return max((float(np.max(np.abs(c))) for c in form.values()), default=0.0)


def _roundtrip_form(u: ScalarField) -> dict:
    psi = chern.assemble_psi(u).values
    g = hf.metric_from_psi(psi)
    psi2 = hf.psi_from_metric(g)
    return _form_from_psi(psi2, u.grid.n)


def balanced_residual(u: ScalarField) -> float:
    """sup of the coefficients of d(omega_u^{n-1}) after the psi -> g -> psi roundtrip."""
    form = _roundtrip_form(u)
    return max(_sup(_apply_d(u.grid, form, True)), _sup(_apply_d(u.grid, form, False)))


def gauduchon_residual(u: ScalarField) -> float:
    """sup of the coefficients of del delbar(omega_u^{n-1})."""
    form = _roundtrip_form(u)
    return _sup(_apply_d(u.grid, _apply_d(u.grid, form, False), True))


def conservation_functional(u: ScalarField) -> float:
    """Grid mean of tr psi(u), the omega-trace of omega_u^{n-1}; equals n at u = 0."""
    psi = chern.assemble_psi(u).values
    return float(np.mean(np.trace(psi, axis1=-2, axis2=-1).real))


def min_eig_psi(u: ScalarField) -> float:
    return float(np.min(hf.min_eig(chern.assemble_psi(u).values)))
