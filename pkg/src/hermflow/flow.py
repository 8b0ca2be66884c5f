"""Time integration of du/dt = Q(u).

The state lives in spectral space.  The stiff part is the flat linearization
L (a diagonal multiplier) and the remainder N(u) = Q(u) - L u is explicit.
ETDRK4 and RK4 are adaptive through step doubling; IMEX-BDF2 runs at a fixed
step.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import chern
from . import hermitian as hf
from .hermitian import PositivityLost
from .linearized import L_flat
from .torus import ScalarField, TorusGrid

DIVERGENCE_LIMIT = 1e6
MAX_REJECTIONS = 20
CONTOUR_POINTS = 32


class Status(str, enum.Enum):
    RUNNING = "Running"
    CONVERGED = "Converged"
    POSITIVITY_LOST = "PositivityLost"
    DIVERGED = "Diverged"
    MAX_TIME = "MaxTime"


SCHEMES = ("ETDRK4", "IMEX-BDF2", "RK4-explicit")


@dataclass
class FlowParams:
    scheme: str = "ETDRK4"
    dt_init: float = 1e-4
    dt_min: float = 1e-10
    dt_max: float = 1e-3
    safety: float = 0.9
    tol_Q: float = 1e-9
    T_max: float = 1.0
    snapshot_every: int = 0
    err_rtol: float = 1e-7
    err_atol: float = 1e-15
    adaptive: bool = True
    max_steps: int = 1_000_000
    curvature: str = "chern"
    mean_subtract: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not self.tol_Q > 0:
            raise ValueError("tol_Q must be positive")
        if self.curvature not in ("chern", "kahler"):
            raise ValueError("curvature must be 'chern' or 'kahler'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FlowState:
    t: float
    u: ScalarField
    step: int = 0
    dt: float = 0.0
    status: Status = Status.RUNNING


SERIES_COLUMNS = ("t", "dt", "norm_Q_L2", "norm_u_L2", "norm_u_inf", "min_eig_psi",
                  "conservation")


@dataclass
class FlowRun:
    grid: TorusGrid
    params: FlowParams
    status: Status
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, ScalarField)
    final: FlowState | None = None
    message: str = ""
    rejections: int = 0

    def series(self, name: str) -> np.ndarray:
        j = SERIES_COLUMNS.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)


# -- ETDRK4 coefficients ----------------------------------------------------------

def etdrk4_coefficients(mult: np.ndarray, h: float, points: int = CONTOUR_POINTS):
    """exp(hL), exp(hL/2) and the phi-combinations, averaged on a unit circle
    around each h*L to avoid cancellation near zero.

    The symbol depends on |k| only, so the contour sums run over its
    distinct values and are scattered back to the grid.
    """
    vals, inverse = np.unique(h * np.asarray(mult, dtype=float), return_inverse=True)
    out = _etdrk4_on_values(vals, h, points)
    shape = np.shape(mult)
    return tuple(c[inverse].reshape(shape) for c in out)


def _etdrk4_on_values(z0: np.ndarray, h: float, points: int):
    r = np.exp(1j * np.pi * (np.arange(1, points + 1) - 0.5) / points)
    z = z0[..., None] + r
    ez, ez2 = np.exp(z), np.exp(z / 2)
    q = h * np.real(np.mean((ez2 - 1) / z, axis=-1))
    f1 = h * np.real(np.mean((-4 - z + ez * (4 - 3 * z + z * z)) / z ** 3, axis=-1))
    f2 = h * np.real(np.mean((2 + z + ez * (z - 2)) / z ** 3, axis=-1))
    f3 = h * np.real(np.mean((-4 - 3 * z - z * z + ez * (4 - z)) / z ** 3, axis=-1))
    return np.exp(z0), np.exp(z0 / 2), q, f1, f2, f3


@dataclass
class StepDecision:
    accepted: bool
    dt: float


def dt_controller(err_ratio: float, dt: float, params: FlowParams) -> StepDecision:
    """Step-doubling controller for a fourth-order scheme.

    Growth is capped at 2x per acceptance; a rejection shrinks by at least 2x.
    """
    if not math.isfinite(err_ratio):
        return StepDecision(False, max(dt / 2, params.dt_min))
    if err_ratio <= 1.0:
        factor = 2.0 if err_ratio == 0 else min(2.0, params.safety * err_ratio ** -0.2)
        factor = max(factor, 0.2)
        return StepDecision(True, min(max(dt * factor, params.dt_min), params.dt_max))
    factor = min(0.5, params.safety * err_ratio ** -0.2)
    return StepDecision(False, max(dt * factor, params.dt_min))


class Integrator:
    """Advances du/dt = Q(u) on one grid; holds the workspace and coefficient caches."""

    def __init__(self, grid: TorusGrid, params: FlowParams):
        self.grid = grid
        self.params = params
        self.mult = L_flat(grid).multiplier
        self.ws = chern.CurvatureWorkspace(grid)
        self._coeffs = {}
        self._bdf_prev = None
        self._pending_bdf = None
        self.evaluations = 0
        self.rejected = 0

    # operator evaluations ----------------------------------------------------
    def q_hat(self, v_hat: np.ndarray) -> np.ndarray:
        self.evaluations += 1
        u = ScalarField.from_spectral(self.grid, v_hat)
        if self.params.curvature == "kahler":
            q = chern.kahler_scalar(u)
        else:
            q = chern.Q(u, self.ws, self.params.mean_subtract)
        return np.asarray(q.spectral)

    def n_hat(self, v_hat):
        return self.q_hat(v_hat) - self.mult * v_hat

    # single steps --------------------------------------------------------------
    def _etd(self, h):
        c = self._coeffs.get(h)
        if c is None:
            if len(self._coeffs) > 64:
                self._coeffs.clear()
            c = self._coeffs[h] = etdrk4_coefficients(self.mult, h)
        return c

    def etdrk4(self, v, h, Nv=None):
        E, E2, q, f1, f2, f3 = self._etd(h)
        Nv = self.n_hat(v) if Nv is None else Nv
        a = E2 * v + q * Nv
        Na = self.n_hat(a)
        b = E2 * v + q * Na
        Nb = self.n_hat(b)
        c = E2 * a + q * (2 * Nb - Nv)
        Nc = self.n_hat(c)
        return E * v + f1 * Nv + 2 * f2 * (Na + Nb) + f3 * Nc

    def rk4(self, v, h, Qv=None):
        k1 = self.q_hat(v) if Qv is None else Qv
        k2 = self.q_hat(v + 0.5 * h * k1)
        k3 = self.q_hat(v + 0.5 * h * k2)
        k4 = self.q_hat(v + h * k3)
        return v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def imex_bdf2(self, v, h):
        Nv = self.n_hat(v)
        prev = self._bdf_prev
        if prev is None or prev[2] != h:
            new = (v + h * Nv) / (1 - h * self.mult)
        else:
            v_old, N_old, _ = prev
            new = (4 * v - v_old + 2 * h * (2 * Nv - N_old)) / (3 - 2 * h * self.mult)
        return new, (v, Nv, h)

    # one accepted step ---------------------------------------------------------
    def _sup(self, v_hat):
        return float(np.max(np.abs(np.fft.ifftn(v_hat).real * self.grid.size)))

    def attempt(self, v, h):
        """Returns (candidate, error ratio) for a step of size h."""
        p = self.params
        if p.scheme == "IMEX-BDF2" or not p.adaptive:
            if p.scheme == "IMEX-BDF2":
                new, self._pending_bdf = self.imex_bdf2(v, h)
            elif p.scheme == "ETDRK4":
                new = self.etdrk4(v, h)
            else:
                new = self.rk4(v, h)
            return new, 0.0
        if p.scheme == "ETDRK4":
            Nv = self.n_hat(v)
            full = self.etdrk4(v, h, Nv)
            half = self.etdrk4(self.etdrk4(v, h / 2, Nv), h / 2)
        else:
            Qv = self.q_hat(v)
            full = self.rk4(v, h, Qv)
            half = self.rk4(self.rk4(v, h / 2, Qv), h / 2)
        diff = half - full
        diff.flat[0] = diff.flat[0].real
        err = self._sup(diff)
        dev = half.copy()
        dev.flat[0] = 0.0
        scale = p.err_atol + p.err_rtol * self._sup(dev)
        return half, err / scale

    def step(self, state: FlowState) -> FlowState:
        """Advance one accepted step (or set a terminal status)."""
        if state.status != Status.RUNNING:
            raise ValueError("step requires a running state")
        p = self.params
        v = np.asarray(state.u.spectral)
        h = state.dt if state.dt > 0 else p.dt_init
        h = min(h, p.dt_max)
        rejections = 0
        while True:
            h_try = min(h, p.T_max - state.t) if p.T_max > state.t else h
            try:
                cand, ratio = self.attempt(v, h_try)
                finite = bool(np.all(np.isfinite(cand)))
                if finite:
                    # positivity of the candidate itself
                    self.q_hat(cand)
            except PositivityLost:
                if h_try <= p.dt_min:
                    return FlowState(state.t, state.u, state.step, h_try, Status.POSITIVITY_LOST)
                self.rejected += 1
                h = max(h_try / 2, p.dt_min)
                continue
            if not finite or self._sup(cand) > DIVERGENCE_LIMIT:
                return FlowState(state.t, state.u, state.step, h_try, Status.DIVERGED)
            dec = dt_controller(ratio, h_try, p)
            if dec.accepted:
                if p.scheme == "IMEX-BDF2":
                    self._bdf_prev = self._pending_bdf
                    next_dt = h_try
                else:
                    next_dt = dec.dt if p.adaptive else h_try
                t_new = state.t + h_try
                if p.T_max - t_new <= 1e-14 * max(1.0, p.T_max):
                    t_new = p.T_max
                u_new = ScalarField.from_spectral(self.grid, cand)
                return FlowState(t_new, u_new, state.step + 1, next_dt, Status.RUNNING)
            rejections += 1
            self.rejected += 1
            if rejections >= MAX_REJECTIONS:
                return FlowState(state.t, state.u, state.step, h_try, Status.DIVERGED)
            h = dec.dt

    # diagnostics ---------------------------------------------------------------
    def diagnostics(self, state: FlowState) -> tuple:
        from .diagnostics import conservation_functional, l2_norm
        u = state.u
        if self.params.curvature == "kahler":
            q = chern.kahler_scalar(u)
            min_eig = float("nan")
        else:
            q = chern.Q(u, self.ws, self.params.mean_subtract)
            min_eig = float(np.min(hf.min_eig(self.ws.psi)))
        return (state.t, state.dt, l2_norm(q), l2_norm(u), float(np.max(np.abs(u.values))),
                min_eig, conservation_functional(u))

    def run(self, u0: ScalarField) -> FlowRun:
        p = self.params
        run = FlowRun(self.grid, p, Status.RUNNING)
        state = FlowState(0.0, u0, 0, p.dt_init, Status.RUNNING)
        try:
            row = self.diagnostics(state)
        except PositivityLost as exc:
            run.status = Status.POSITIVITY_LOST
            run.message = f"initial datum outside the positive cone: {exc}"
            run.final = FlowState(0.0, u0, 0, 0.0, Status.POSITIVITY_LOST)
            run.snapshots.append((0.0, u0))
            return run
        run.rows.append(row)
        run.snapshots.append((0.0, u0))
        while True:
            if row[2] <= p.tol_Q:
                state.status = Status.CONVERGED
                break
            if state.t >= p.T_max:
                state.status = Status.MAX_TIME
                break
            if state.step >= p.max_steps:
                state.status = Status.MAX_TIME
                run.message = "max_steps reached"
                break
            new = self.step(state)
            if new.status != Status.RUNNING:
                state = FlowState(state.t, state.u, state.step, new.dt, new.status)
                break
            state = new
            row = self.diagnostics(state)
            run.rows.append(row)
            if p.snapshot_every and state.step % p.snapshot_every == 0:
                run.snapshots.append((state.t, state.u))
        if run.snapshots[-1][0] != state.t or run.snapshots[-1][1] is not state.u:
            run.snapshots.append((state.t, state.u))
        run.status = state.status
        run.final = state
        run.rejections = self.rejected
        return run


def step(state: FlowState, params: FlowParams, integrator: Integrator | None = None) -> FlowState:
    integ = integrator or Integrator(state.u.grid, params)
    return integ.step(state)


def run(u0: ScalarField, params: FlowParams) -> FlowRun:
    return Integrator(u0.grid, params).run(u0)
