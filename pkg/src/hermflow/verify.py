"""The verification suite behind ``hermflow verify``.

Every check records its tolerance, the measured value and the comparison
used, so the JSON report stands on its own.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import chern
from . import exterior as ex
from . import hermitian as hf
from . import linearized as lin
from .config import random_bandlimited
from .torus import ScalarField, complex_hessian, d_z, d_zbar, make_grid

REPORT_VERSION = 1
VERIFY_SEED = 20240611


@dataclass
class Check:
    name: str
    tolerance: float
    measured: float
    comparison: str = "<="  # measured <= tolerance, or ">=" for margins
    detail: str = ""

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.measured):
            return False
        if self.comparison == "<=":
            return self.measured <= self.tolerance
        return self.measured >= self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def _rng(offset: int = 0):
    return np.random.Generator(np.random.Philox(VERIFY_SEED + offset))


# -- oracle ------------------------------------------------------------------------

def flat_identity_error(n: int) -> float:
    psi = ex.psi_of(ex.power(ex.kahler_form(n), n - 1))
    return float(np.max(np.abs(psi - np.eye(n))))


def oracle_equivalence_error(n: int, fields: int = 20, points: int = 100, seed: int = 0) -> float:
    """sup |assemble_psi(u)(x) - oracle(jet of u at x)| over random potentials
    and random grid points."""
    grid = make_grid(n, [8] * 4 if n == 2 else [4] * 6)
    kmax = 3 if n == 2 else 1.5
    rng = _rng(seed + n)
    worst = 0.0
    for j in range(fields):
        u = random_bandlimited(grid, amplitude=0.05, max_k=kmax, seed=int(rng.integers(2**31)))
        psi = chern.assemble_psi(u).values
        H = complex_hessian(u)
        dz = [d_z(u, a).values for a in range(n)]
        dzb = [d_zbar(u, a).values for a in range(n)]
        flat_idx = rng.choice(grid.size, size=min(points, grid.size), replace=False)
        for flat in flat_idx:
            idx = np.unravel_index(flat, grid.shape)
            jet = ex.ScalarJet2(float(u.values[idx]), np.array([d[idx] for d in dz]),
                                np.array([d[idx] for d in dzb]), H[idx])
            ref = ex.psi_of_potential_jet(jet, n)
            worst = max(worst, float(np.max(np.abs(psi[idx] - ref))))
    return worst


def det_identity_error(n: int, samples: int = 1000, seed: int = 0) -> float:
    """Relative error of det g = det(psi)^{1/(n-1)} with psi built from g."""
    rng = _rng(100 + seed + n)
    A = rng.standard_normal((samples, n, n)) + 1j * rng.standard_normal((samples, n, n))
    g = A @ np.conj(np.swapaxes(A, -1, -2)) + 0.1 * np.eye(n)
    psi = hf.psi_from_metric(g)
    lhs = hf.det(g).real
    rhs = hf.det(psi).real ** (1.0 / (n - 1))
    back = hf.metric_from_psi(psi)
    rel = np.abs(lhs - rhs) / np.abs(lhs)
    rt = np.max(np.abs(back - g)) / np.max(np.abs(g))
    return float(max(rel.max(), rt))


# -- T-bounded perturbations ----------------------------------------------------------

def example_tbound_problems(seed: int = 0) -> dict[str, lin.TBoundProblem]:
    """Three constructed instances; ``diagonal_tight`` attains the bound."""
    rng = _rng(200 + seed)
    m = 24
    # diagonal tight: V = -a I with b = 0 shifts the bottom of T by exactly a
    d = np.sort(rng.uniform(1.0, 5.0, m))
    T0 = np.diag(d)
    tight = lin.TBoundProblem(T0, -0.75 * np.eye(m), 0.75, 0.0, float(d[0]))

    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    T1 = Q @ np.diag(np.linspace(-1.0, 9.0, m)) @ Q.T
    W = rng.standard_normal((m, m))
    V1 = 0.2 * (W + W.T) + 0.3 * T1
    b1 = 0.45
    rnd = lin.TBoundProblem(T1, V1, lin.relative_bound_a(T1, V1, b1), b1, -1.0)

    grid = make_grid(2, [8, 8, 1, 1])
    L = lin.L_flat(grid).dense()
    ev = np.linalg.eigvalsh(-L)
    T2 = -L
    V2 = 0.3 * L + np.diag(rng.uniform(-0.5, 0.5, grid.size))
    b2 = 0.35
    flat = lin.TBoundProblem(T2, V2, lin.relative_bound_a(T2, V2, b2), b2, float(ev[0]))
    return {"diagonal_tight": tight, "random_dense": rnd, "flat_symbol": flat}


# -- the suite -------------------------------------------------------------------

def run_checks(fast: bool = False) -> list[Check]:
    checks: list[Check] = []
    for n in (2, 3):
        checks.append(Check(f"oracle_flat_identity_n{n}", 1e-14, flat_identity_error(n)))
        fields = 4 if fast else 20
        checks.append(Check(f"oracle_equivalence_n{n}", 1e-12,
                            oracle_equivalence_error(n, fields=fields),
                            detail=f"{fields} potentials x 100 points vs brute-force wedge"))
        checks.append(Check(f"det_identity_n{n}", 1e-10, det_identity_error(n),
                            detail="1000 random SPD metrics"))

    grid = make_grid(2, [16, 16, 1, 1])
    u0 = ScalarField.constant(grid, 0.0)
    J = lin.jacobian_fd(u0)
    checks.append(Check("jacobian_symmetry", 1e-8, lin.symmetry_defect(J),
                        detail="|J - J^T|_2 / |J|_2 at u = 0, 256 points"))
    checks.append(Check("jacobian_row_sum", 1e-8, lin.row_sum_defect(J),
                        detail="max |J 1| / |J|_2 (constants in the kernel)"))
    checks.append(Check("jacobian_semi_negative", 1e-8, lin.max_symmetric_eigenvalue(J),
                        detail="largest eigenvalue of (J + J^T)/2"))
    L = lin.L_flat(grid).dense()
    checks.append(Check("jacobian_matches_flat_symbol", 1e-7,
                        float(np.linalg.norm(J - L, 2) / np.linalg.norm(L, 2))))
    ev = np.linalg.eigvalsh(-(J + J.T) / 2)
    # Nyquist modes are outside the state space and Q annihilates them
    nyq = int(np.count_nonzero(grid.nyquist_mask))
    kernel = int(np.count_nonzero(np.abs(ev) <= 1e-6 * ev[-1])) - nyq
    checks.append(Check("kernel_dimension_defect", 0.0, float(abs(kernel - 1)),
                        detail=f"kernel dimension {kernel} on resolved modes, expected 1"))
    lam1 = float(ev[ev > 1e-6 * ev[-1]][0])
    checks.append(Check("lambda1_relative_error", 1e-6, abs(lam1 - math.pi ** 4) / math.pi ** 4,
                        detail=f"lambda1 = {lam1:.12g}"))

    u = random_bandlimited(grid, 1e-2, 3, seed=VERIFY_SEED)
    ws = chern.CurvatureWorkspace(grid)
    q = chern.Q(u, ws).values.copy()
    q_shift = chern.Q(u + 5.0, chern.CurvatureWorkspace(grid)).values
    checks.append(Check("shift_invariance", 1e-13, float(np.max(np.abs(q_shift - q)))))

    small = random_bandlimited(grid, 1e-4, 3, seed=VERIFY_SEED + 1)
    samples = [random_bandlimited(grid, 1.0, 5, seed=VERIFY_SEED + 10 + i)
               for i in range(20 if fast else 100)]
    rep = lin.coercivity_probe(small, samples, eps=0.1, L=L)
    checks.append(Check("coercivity_margin", 0.0, rep.worst_margin, ">=",
                        detail=f"|u|_inf = 1e-4, eps = 0.1, {len(samples)} samples"))

    for name, p in example_tbound_problems().items():
        gap = p.min_eig_sum() - lin.tbound_gamma(p)
        checks.append(Check(f"tbound_{name}", -1e-10, gap, ">=",
                            detail="min eig(T + V) - gamma"))
        if name == "diagonal_tight":
            checks.append(Check("tbound_tight_equality", 1e-10, abs(gap)))
    return checks


def report(checks: list[Check]) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "passed": all(c.passed for c in checks),
        "conventions": ex.convention_report(),
        "checks": [c.to_dict() for c in checks],
    }


def report_schema() -> dict:
    text = resources.files("hermflow").joinpath("schemas/verify_report.schema.json").read_text()
    return json.loads(text)
