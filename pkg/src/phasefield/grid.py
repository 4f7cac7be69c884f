"""Periodic uniform grids, Fourier transforms and discrete differential operators.

Fields are plain ``float64`` arrays of shape ``(ny, nx)``; the flattened
C-order index is ``iy * nx + ix``. Forward transforms are unnormalized and
inverse transforms carry the ``1/(nx*ny)`` factor (the numpy convention).

Two spatial discretizations are provided:

* ``"spectral"`` -- Fourier pseudo-spectral differentiation, exact on every
  resolved mode.
* ``"fd2"`` -- second order centered differences with periodic wrap.

Both are diagonal in Fourier space, which the time integrators exploit: the
5-point Laplacian has the symbol ``-(2 - 2 cos(k h)) / h**2`` per axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

from .errors import GridMismatch, NonHermitianInput, NonZeroMean

__all__ = [
    "GridSpec",
    "METHODS",
    "dft_forward",
    "dft_inverse",
    "laplacian",
    "laplacian_symbol",
    "gradient",
    "hessian",
    "apply_symbol",
    "dealias",
    "inner_product_l2",
    "inner_product_hm1",
    "save_snapshot",
    "load_snapshot",
]

METHODS = ("spectral", "fd2")

Field = NDArray[np.float64]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on the torus ``[0, Lx) x [0, Ly)``."""

    nx: int
    ny: int
    Lx: float = 2 * math.pi
    Ly: float = 2 * math.pi

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n!r}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError("domain lengths must be positive")

    @classmethod
    def square(cls, n: int, length: float = 2 * math.pi) -> GridSpec:
        return cls(n, n, length, length)

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def coords(self) -> tuple[Field, Field]:
        """Sample coordinates ``(X, Y)``, each of shape ``(ny, nx)``."""
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        return np.meshgrid(x, y)

    def check(self, f: NDArray) -> None:
        if np.shape(f) != self.shape:
            raise GridMismatch(f"field of shape {np.shape(f)} does not live on grid {self.shape}")

    # -- wavenumbers on the real-to-complex layout ------------------------

    @cached_property
    def kx(self) -> NDArray[np.float64]:
        """x wavenumbers for the half-spectrum layout, shape ``(1, nx//2+1)``."""
        k = 2 * np.pi * sfft.rfftfreq(self.nx, d=self.hx)
        return _frozen(k[None, :])

    @cached_property
    def ky(self) -> NDArray[np.float64]:
        """y wavenumbers (centered integer indices), shape ``(ny, 1)``."""
        k = 2 * np.pi * sfft.fftfreq(self.ny, d=self.hy)
        return _frozen(k[:, None])

    @cached_property
    def k2(self) -> NDArray[np.float64]:
        return _frozen(self.kx**2 + self.ky**2)

    @cached_property
    def k2_fd2(self) -> NDArray[np.float64]:
        sx = (2 - 2 * np.cos(self.kx * self.hx)) / self.hx**2
        sy = (2 - 2 * np.cos(self.ky * self.hy)) / self.hy**2
        return _frozen(sx + sy)

    @cached_property
    def ikx(self) -> NDArray[np.complex128]:
        k = self.kx.copy()
        k[:, self.nx // 2] = 0.0  # unpaired Nyquist mode
        return _frozen(1j * k)

    @cached_property
    def iky(self) -> NDArray[np.complex128]:
        k = self.ky.copy()
        k[self.ny // 2, :] = 0.0
        return _frozen(1j * k)

    @cached_property
    def dealias_mask(self) -> NDArray[np.bool_]:
        jx = np.abs(sfft.rfftfreq(self.nx, d=1.0 / self.nx))[None, :]
        jy = np.abs(sfft.fftfreq(self.ny, d=1.0 / self.ny))[:, None]
        return _frozen((jx <= self.nx / 3) & (jy <= self.ny / 3))

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "Lx": self.Lx, "Ly": self.Ly}


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"unknown differentiation method {method!r}; expected one of {METHODS}")


# -- transforms ---------------------------------------------------------------


def dft_forward(f: Field) -> NDArray[np.complex128]:
    """Full (unnormalized) 2D DFT of a real field."""
    return sfft.fft2(np.asarray(f, dtype=np.float64))


def dft_inverse(c: NDArray[np.complex128], rtol: float = 1e-10) -> Field:
    """Inverse DFT; rejects coefficients whose inverse is not real to ``rtol``."""
    z = sfft.ifft2(c)
    scale = np.max(np.abs(z.real), initial=0.0)
    residue = np.max(np.abs(z.imag), initial=0.0)
    if residue > rtol * max(scale, np.finfo(float).tiny):
        raise NonHermitianInput(f"imaginary residue {residue:.3e} exceeds {rtol:g} relative")
    return np.ascontiguousarray(z.real)


def apply_symbol(f: Field, symbol: NDArray, grid: GridSpec) -> Field:
    """Multiply the half-spectrum of ``f`` by ``symbol`` and transform back."""
    return sfft.irfft2(sfft.rfft2(f) * symbol, s=grid.shape)


def laplacian_symbol(grid: GridSpec, method: str = "spectral") -> NDArray[np.float64]:
    _check_method(method)
    return -(grid.k2 if method == "spectral" else grid.k2_fd2)


def dealias(f: Field, grid: GridSpec) -> Field:
    """2/3-rule filter: zero every mode above a third of the grid index range."""
    return apply_symbol(f, grid.dealias_mask, grid)


# -- differential operators -------------------------------------------------------


def laplacian(f: Field, grid: GridSpec, method: str = "spectral") -> Field:
    grid.check(f)
    _check_method(method)
    if method == "spectral":
        return apply_symbol(f, -grid.k2, grid)
    return (
        (np.roll(f, -1, axis=1) + np.roll(f, 1, axis=1) - 2 * f) / grid.hx**2
        + (np.roll(f, -1, axis=0) + np.roll(f, 1, axis=0) - 2 * f) / grid.hy**2
    )


def gradient(f: Field, grid: GridSpec, method: str = "spectral") -> tuple[Field, Field]:
    grid.check(f)
    _check_method(method)
    if method == "spectral":
        fh = sfft.rfft2(f)
        return (
            sfft.irfft2(fh * grid.ikx, s=grid.shape),
            sfft.irfft2(fh * grid.iky, s=grid.shape),
        )
    fx = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * grid.hx)
    fy = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * grid.hy)
    return fx, fy


def hessian(f: Field, grid: GridSpec) -> tuple[Field, Field, Field]:
    """Spectral second derivatives ``(f_xx, f_xy, f_yy)``."""
    grid.check(f)
    fh = sfft.rfft2(f)
    kx, ky = grid.kx, grid.ky
    fxx = sfft.irfft2(-(kx**2) * fh, s=grid.shape)
    fyy = sfft.irfft2(-(ky**2) * fh, s=grid.shape)
    fxy = sfft.irfft2(grid.ikx * grid.iky * fh, s=grid.shape)
    return fxx, fxy, fyy


# -- inner products -----------------------------------------------------------


def inner_product_l2(f: Field, g: Field, grid: GridSpec) -> float:
    grid.check(f)
    grid.check(g)
    return float(np.vdot(f, g).real * grid.cell_area)


def inner_product_hm1(f: Field, g: Field, grid: GridSpec, rtol: float = 1e-10) -> float:
    """``((-Lap)^{-1} f, g)`` on mean-zero fields, evaluated spectrally."""
    grid.check(f)
    grid.check(g)
    for h in (f, g):
        scale = max(float(np.max(np.abs(h), initial=0.0)), np.finfo(float).tiny)
        if abs(float(np.mean(h))) > rtol * scale:
            raise NonZeroMean(f"H^-1 inner product needs mean-zero input (mean {np.mean(h):.3e})")
    fh = sfft.fft2(f)
    gh = sfft.fft2(g)
    k2 = (2 * np.pi * sfft.fftfreq(grid.nx, d=grid.hx))[None, :] ** 2 + (
        2 * np.pi * sfft.fftfreq(grid.ny, d=grid.hy)
    )[:, None] ** 2
    k2[0, 0] = np.inf
    # Parseval: sum f g dA = cell_area / (nx ny) * sum fh conj(gh)
    s = np.sum(fh * np.conj(gh) / k2).real
    return float(s * grid.cell_area / (grid.nx * grid.ny))


# -- snapshots ------------------------------------------------------------------

SNAPSHOT_KEYS = ("nx", "ny", "Lx", "Ly", "time", "step", "epsilon", "model", "scheme")


def save_snapshot(path: str | Path, u: Field, grid: GridSpec, **meta) -> tuple[Path, Path]:
    """Write ``u`` as raw little-endian float64 plus a JSON sidecar.

    ``path`` may carry the ``.f64`` suffix or none; the sidecar is the same
    stem with ``.json``.
    """
    grid.check(u)
    path = Path(path)
    data = path if path.suffix == ".f64" else path.with_suffix(".f64")
    side = data.with_suffix(".json")
    data.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(u, dtype="<f8").tofile(data)
    record = {**grid.to_dict()}
    for key in ("time", "step", "epsilon", "model", "scheme"):
        record[key] = meta.pop(key, None)
    record.update(meta)
    side.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return data, side


def load_snapshot(path: str | Path) -> tuple[Field, GridSpec, dict]:
    path = Path(path)
    data = path if path.suffix == ".f64" else path.with_suffix(".f64")
    meta = json.loads(data.with_suffix(".json").read_text())
    grid = GridSpec(int(meta["nx"]), int(meta["ny"]), float(meta["Lx"]), float(meta["Ly"]))
    u = np.fromfile(data, dtype="<f8")
    if u.size != grid.nx * grid.ny:
        raise GridMismatch(f"{data}: {u.size} values, expected {grid.nx * grid.ny}")
    return u.reshape(grid.shape).astype(np.float64), grid, meta
