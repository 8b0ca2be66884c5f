"""Flat complex tori, scalar fields and spectral complex derivatives.

Real axes are interleaved per complex coordinate: axis ``2a`` is
``x_a = Re z_a`` and axis ``2a + 1`` is ``y_a = Im z_a`` (``a`` zero-based).
Fields are stored as ``numpy`` arrays whose shape is the grid resolution,
size-1 axes included, so that ``values.ravel()`` is row-major axis order.

Spectral coefficients use the normalization ``coeffs = fftn(values) / size``,
so the zero mode is the field mean.  Nyquist modes are never populated: the
derivative multipliers vanish there, and every operator in the package maps
the Nyquist-free subspace into itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

ROUNDTRIP_TOL = 1e-12
IMAG_TOL = 1e-10


class GridError(ValueError):
    pass


def _is_pow2(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


def _wave_tables(shape, periods, zero_nyquist=True):
    """Integer and angular wave numbers per axis, broadcast-ready."""
    ints, angs = [], []
    nd = len(shape)
    for ax, (m, p) in enumerate(zip(shape, periods)):
        k = np.fft.fftfreq(m, d=1.0 / m) if m > 1 else np.zeros(1)
        if zero_nyquist and m > 1 and m % 2 == 0:
            k = k.copy()
            k[m // 2] = 0.0
        bshape = [1] * nd
        bshape[ax] = m
        ints.append(k.reshape(bshape))
        angs.append((2 * np.pi * k / p).reshape(bshape))
    return ints, angs


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the flat torus C^n / Z^{2n} (scaled by ``periods``).

    Inactive axes carry resolution 1; fields are constant along them.
    """

    n: int
    resolution: tuple[int, ...]
    periods: tuple[float, ...]

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridError(f"complex dimension must be 2 or 3, got {self.n}")
        if len(self.resolution) != 2 * self.n or len(self.periods) != 2 * self.n:
            raise GridError(f"need {2 * self.n} real axes")
        for ax, (m, p) in enumerate(zip(self.resolution, self.periods)):
            if not p > 0:
                raise GridError(f"period on axis {ax} must be positive")
            if m != 1 and (m < 4 or not _is_pow2(m)):
                raise GridError(
                    f"resolution on active axis {ax} must be a power of two >= 4, got {m}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(ax for ax, m in enumerate(self.resolution) if m > 1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    def to_dict(self) -> dict:
        return {"n": self.n, "resolution": list(self.resolution),
                "periods": list(self.periods), "active_axes": list(self.active_axes)}

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per real axis."""
        out = []
        for ax, (m, p) in enumerate(zip(self.resolution, self.periods)):
            bshape = [1] * len(self.resolution)
            bshape[ax] = m
            out.append((np.arange(m) * (p / m)).reshape(bshape))
        return out

    @cached_property
    def _tables(self):
        return _wave_tables(self.resolution, self.periods)

    @property
    def wave_ints(self) -> list[np.ndarray]:
        return self._tables[0]

    @property
    def wave_angular(self) -> list[np.ndarray]:
        return self._tables[1]

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes that sit at the Nyquist index of some active axis."""
        mask = np.zeros(self.resolution, dtype=bool)
        for ax in self.active_axes:
            m = self.resolution[ax]
            idx = [slice(None)] * len(self.resolution)
            idx[ax] = m // 2
            mask[tuple(idx)] = True
        return mask

    @cached_property
    def _keep(self) -> np.ndarray:
        return (~self.nyquist_mask).astype(float)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|kappa|^2 with kappa = 2 pi k / period (zero on Nyquist modes)."""
        return sum(np.broadcast_to(k * k, self.resolution) for k in self.wave_angular) * self._keep

    def dz_multiplier(self, a: int) -> np.ndarray:
        kx, ky = self.wave_angular[2 * a], self.wave_angular[2 * a + 1]
        return 0.5 * (1j * kx + ky) * self._keep

    def dzbar_multiplier(self, a: int) -> np.ndarray:
        kx, ky = self.wave_angular[2 * a], self.wave_angular[2 * a + 1]
        return 0.5 * (1j * kx - ky) * self._keep

    @cached_property
    def laplacian_multiplier(self) -> np.ndarray:
        """Symbol of the complex Laplacian sum_a d_{z_a} d_{zbar_a}."""
        return -0.25 * self.k_squared

    @cached_property
    def dealiaser(self) -> "Dealiaser":
        return Dealiaser(self)


def make_grid(n: int, resolution, periods=None) -> TorusGrid:
    resolution = tuple(int(m) for m in resolution)
    if periods is None:
        periods = (1.0,) * len(resolution)
    return TorusGrid(n, resolution, tuple(float(p) for p in periods))


class Dealiaser:
    """3/2-rule zero padding for pointwise nonlinear stages.

    Coefficients are copied into a grid with ``3N/2`` points per active axis,
    the nonlinear map is evaluated there, and the result is truncated back to
    the native band.  Linear terms pass through unchanged.
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.shape = tuple(m if m == 1 else 3 * m // 2 for m in grid.resolution)
        self.size = int(np.prod(self.shape))
        _, self.wave_angular = _wave_tables(self.shape, grid.periods)
        self._index = []
        for m, big in zip(grid.resolution, self.shape):
            if m == 1:
                self._index.append(np.zeros(1, dtype=int))
                continue
            k = np.fft.fftfreq(m, d=1.0 / m).astype(int)
            self._index.append(np.where(k >= 0, k, big + k))
        self._native_keep = ~grid.nyquist_mask

    def pad(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        out[np.ix_(*self._index)] = np.where(self._native_keep, coeffs, 0.0)
        return out

    def truncate(self, padded: np.ndarray) -> np.ndarray:
        out = padded[np.ix_(*self._index)]
        return np.where(self._native_keep, out, 0.0)

    def to_physical(self, padded: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(padded) * self.size

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values) / self.size

    def dz_multiplier(self, a: int) -> np.ndarray:
        kx, ky = self.wave_angular[2 * a], self.wave_angular[2 * a + 1]
        return 0.5 * (1j * kx + ky)

    def dzbar_multiplier(self, a: int) -> np.ndarray:
        kx, ky = self.wave_angular[2 * a], self.wave_angular[2 * a + 1]
        return 0.5 * (1j * kx - ky)


def to_spectral(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values) / values.size


def to_physical(coeffs: np.ndarray, *, check_real: bool = True) -> np.ndarray:
    z = np.fft.ifftn(coeffs) * coeffs.size
    if check_real:
        scale = max(1.0, float(np.max(np.abs(z.real)))) if z.size else 1.0
        resid = float(np.max(np.abs(z.imag))) if z.size else 0.0
        if resid > IMAG_TOL * scale:
            raise FloatingPointError(f"imaginary residue {resid:.3e} in real field")
    return z.real.copy()


class ScalarField:
    """Real scalar field on a torus grid, immutable.

    Holds physical values and, lazily, spectral coefficients.  Adding a
    constant touches only the zero mode of the spectral representation, so
    operators that read ``spectral`` see exactly the same non-constant modes.
    """

    __slots__ = ("grid", "_values", "_spectral")

    def __init__(self, grid: TorusGrid, values=None, spectral=None):
        if values is None and spectral is None:
            raise ValueError("need values or spectral coefficients")
        self.grid = grid
        if values is not None:
            values = np.asarray(values, dtype=float).reshape(grid.shape)
            if not np.all(np.isfinite(values)):
                raise FloatingPointError("non-finite field values")
            values = values.copy()
            values.flags.writeable = False
        if spectral is not None:
            spectral = np.asarray(spectral, dtype=complex).reshape(grid.shape).copy()
            spectral.flags.writeable = False
        self._values = values
        self._spectral = spectral

    @classmethod
    def from_spectral(cls, grid: TorusGrid, coeffs) -> "ScalarField":
        return cls(grid, spectral=coeffs)

    @classmethod
    def constant(cls, grid: TorusGrid, c: float = 0.0) -> "ScalarField":
        coeffs = np.zeros(grid.shape, dtype=complex)
        coeffs.flat[0] = c
        return cls(grid, values=np.full(grid.shape, float(c)), spectral=coeffs)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        vals = np.broadcast_to(fn(*grid.coordinates()), grid.shape)
        return cls(grid, values=vals)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            v = to_physical(self._spectral)
            if not np.all(np.isfinite(v)):
                raise FloatingPointError("non-finite field values")
            v.flags.writeable = False
            self._values = v
        return self._values

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            s = to_spectral(self._values)
            s.flags.writeable = False
            self._spectral = s
        return self._spectral

    def mean(self) -> float:
        return float(self.spectral.flat[0].real)

    def _scalar_shift(self, a: float) -> "ScalarField":
        vals = None if self._values is None else self._values + a
        spec = None
        if self._spectral is not None:
            spec = self._spectral.copy()
            spec.flat[0] += a
        return ScalarField(self.grid, values=vals, spectral=spec)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, spectral=self.spectral + other.spectral)
        return self._scalar_shift(float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, spectral=self.spectral - other.spectral)
        return self._scalar_shift(-float(other))

    def __mul__(self, c):
        c = float(c)
        vals = None if self._values is None else self._values * c
        spec = None if self._spectral is None else self._spectral * c
        return ScalarField(self.grid, values=vals, spectral=spec)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"ScalarField(grid={self.grid.resolution}, mean={self.mean():.3e})"


@dataclass(frozen=True)
class ComplexField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)


def _apply(f: ScalarField, mult: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(f.spectral * mult) * f.grid.size


def d_z(f: ScalarField, a: int) -> ComplexField:
    """d/dz_a = (d/dx_a - i d/dy_a) / 2, with ``a`` zero-based."""
    return ComplexField(f.grid, _apply(f, f.grid.dz_multiplier(a)))


def d_zbar(f: ScalarField, a: int) -> ComplexField:
    return ComplexField(f.grid, _apply(f, f.grid.dzbar_multiplier(a)))


def complex_hessian(f: ScalarField) -> np.ndarray:
    """H[..., a, b] = d_{z_a} d_{zbar_b} f, Hermitian per point."""
    g = f.grid
    H = np.empty(g.shape + (g.n, g.n), dtype=complex)
    for a in range(g.n):
        for b in range(g.n):
            H[..., a, b] = _apply(f, g.dz_multiplier(a) * g.dzbar_multiplier(b))
    return H


def complex_laplacian(f: ScalarField) -> ScalarField:
    z = _apply(f, f.grid.laplacian_multiplier)
    scale = max(1.0, float(np.max(np.abs(z.real))))
    if float(np.max(np.abs(z.imag))) > IMAG_TOL * scale:
        raise FloatingPointError("complex Laplacian produced an imaginary residue")
    return ScalarField(f.grid, spectral=f.spectral * f.grid.laplacian_multiplier)


# -- snapshot files -----------------------------------------------------------

def write_snapshot(path, f: ScalarField, field_name: str = "u", time: float = 0.0) -> None:
    """JSON header line, then little-endian float64 values in row-major order."""
    header = dict(f.grid.to_dict(), field_name=field_name, time=float(time))
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[dict, ScalarField]:
    raw = Path(path).read_bytes()
    line, _, body = raw.partition(b"\n")
    header = json.loads(line)
    grid = make_grid(header["n"], header["resolution"], header["periods"])
    vals = np.frombuffer(body, dtype="<f8")
    if vals.size != grid.size:
        raise ValueError(f"snapshot {path}: expected {grid.size} values, got {vals.size}")
    return header, ScalarField(grid, values=vals.reshape(grid.shape))
