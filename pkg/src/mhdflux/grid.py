"""Periodic 3D gridded fields with spectrally accurate operators.

Fields live on a uniform lattice of ``n`` points per axis over a cubic box
of edge ``length``. Arrays are indexed ``[ix, iy, iz]``; derivatives are
computed with real FFTs, so they are exact (to roundoff) for band-limited
fields. The Nyquist wavenumber is dropped from odd-derivative multipliers,
which keeps div(curl) and curl(grad) identically zero on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField3",
    "curl",
    "divergence",
    "gradient",
    "laplacian",
    "leray_project",
    "integrate",
    "volume_integral",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice: ``n`` cells per axis on a box of edge ``length``."""

    n: int
    length: float

    def __post_init__(self) -> None:
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError("n must be even and >= 8 (dealiasing needs a Nyquist band)")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.axis_coords()
        return np.meshgrid(x, x, x, indexing="ij")

    def wrap_displacement(self, delta: np.ndarray) -> np.ndarray:
        """Minimum-image displacement for periodic distances."""
        half = 0.5 * self.length
        return (delta + half) % self.length - half


@lru_cache(maxsize=16)
def _spectra(n: int, length: float):
    dx = length / n
    k_full = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    k_half = 2.0 * np.pi * np.fft.rfftfreq(n, d=dx)

    # Odd-derivative multipliers: zero the Nyquist mode so the discrete
    # operators commute exactly (div o curl = 0, curl o grad = 0).
    kd_full = k_full.copy()
    kd_full[n // 2] = 0.0
    kd_half = k_half.copy()
    kd_half[-1] = 0.0

    kx = kd_full[:, None, None]
    ky = kd_full[None, :, None]
    kz = kd_half[None, None, :]

    k2_true = (k_full**2)[:, None, None] + (k_full**2)[None, :, None] + (k_half**2)[None, None, :]
    k2_d = kx**2 + ky**2 + kz**2
    inv_k2_d = np.zeros_like(k2_d)
    nonzero = k2_d > 0
    inv_k2_d[nonzero] = 1.0 / k2_d[nonzero]
    return kx, ky, kz, k2_true, inv_k2_d


def _fft(values: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(values)


def _ifft(spec: np.ndarray, n: int) -> np.ndarray:
    return np.fft.irfftn(spec, s=(n, n, n), axes=(0, 1, 2))


@dataclass(frozen=True)
class ScalarField:
    """Real scalar samples on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class VectorField3:
    """Three scalar components sharing one grid."""

    x: ScalarField
    y: ScalarField
    z: ScalarField

    def __post_init__(self) -> None:
        if not (self.x.grid == self.y.grid == self.z.grid):
            raise ValueError("vector components must share a grid")

    @property
    def grid(self) -> GridSpec:
        return self.x.grid

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.x.values, self.y.values, self.z.values)

    @classmethod
    def from_arrays(cls, grid: GridSpec, vx: np.ndarray, vy: np.ndarray, vz: np.ndarray) -> "VectorField3":
        return cls(ScalarField(grid, vx), ScalarField(grid, vy), ScalarField(grid, vz))


def curl(v: VectorField3) -> VectorField3:
    grid = v.grid
    kx, ky, kz, _, _ = _spectra(grid.n, grid.length)
    vx, vy, vz = (_fft(c) for c in v.components)
    wx = _ifft(1j * (ky * vz - kz * vy), grid.n)
    wy = _ifft(1j * (kz * vx - kx * vz), grid.n)
    wz = _ifft(1j * (kx * vy - ky * vx), grid.n)
    return VectorField3.from_arrays(grid, wx, wy, wz)


def divergence(v: VectorField3) -> ScalarField:
    grid = v.grid
    kx, ky, kz, _, _ = _spectra(grid.n, grid.length)
    vx, vy, vz = (_fft(c) for c in v.components)
    d = _ifft(1j * (kx * vx + ky * vy + kz * vz), grid.n)
    return ScalarField(grid, d)


def gradient(s: ScalarField) -> VectorField3:
    grid = s.grid
    kx, ky, kz, _, _ = _spectra(grid.n, grid.length)
    spec = _fft(s.values)
    gx = _ifft(1j * kx * spec, grid.n)
    gy = _ifft(1j * ky * spec, grid.n)
    gz = _ifft(1j * kz * spec, grid.n)
    return VectorField3.from_arrays(grid, gx, gy, gz)


def laplacian(s: ScalarField) -> ScalarField:
    grid = s.grid
    _, _, _, k2, _ = _spectra(grid.n, grid.length)
    return ScalarField(grid, _ifft(-k2 * _fft(s.values), grid.n))


def leray_project(v: VectorField3) -> VectorField3:
    """Remove the gradient part of ``v``; the mean (k=0) mode is preserved."""
    grid = v.grid
    kx, ky, kz, _, inv_k2 = _spectra(grid.n, grid.length)
    vx, vy, vz = (_fft(c) for c in v.components)
    div = kx * vx + ky * vy + kz * vz
    px = _ifft(vx - kx * div * inv_k2, grid.n)
    py = _ifft(vy - ky * div * inv_k2, grid.n)
    pz = _ifft(vz - kz * div * inv_k2, grid.n)
    return VectorField3.from_arrays(grid, px, py, pz)


def integrate(s: ScalarField) -> float:
    """Quadrature dx^3 * sum(values); exact for trig polynomials below Nyquist.

    numpy's pairwise summation over the C-contiguous array gives a fixed
    reduction order, so results are bitwise reproducible.
    """
    return float(s.grid.dx**3 * np.sum(s.values))


def volume_integral(grid: GridSpec, values: np.ndarray) -> float:
    """Same quadrature as :func:`integrate`, for raw arrays."""
    return float(grid.dx**3 * np.sum(values))
