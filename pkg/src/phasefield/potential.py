"""Quartic double-well potential and the free energies built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .grid import GridSpec, inner_product_l2, laplacian

__all__ = [
    "SIGMA0",
    "F",
    "f",
    "fprime",
    "potential",
    "difference_quotient",
    "difference_quotient_dw",
    "EnergyReport",
    "energy",
    "willmore_energy",
    "ieq_energy",
    "sav_energy",
]

#: Interfacial tension of the 1D equilibrium profile, int (eps/2 U'^2 + F(U)/eps) ds.
SIGMA0 = 2 * math.sqrt(2) / 3


def F(u: ArrayLike) -> NDArray:
    """Double-well potential ``(u^2 - 1)^2 / 4``."""
    u = np.asarray(u, dtype=float)
    return 0.25 * (u * u - 1.0) ** 2


def f(u: ArrayLike) -> NDArray:
    """``F'(u) = u^3 - u``."""
    u = np.asarray(u, dtype=float)
    return u * u * u - u


def fprime(u: ArrayLike) -> NDArray:
    """``F''(u) = 3u^2 - 1``; bounded below by -1."""
    u = np.asarray(u, dtype=float)
    return 3.0 * u * u - 1.0


def potential(u: ArrayLike) -> tuple[NDArray, NDArray, NDArray]:
    return F(u), f(u), fprime(u)


def difference_quotient(v: ArrayLike, w: ArrayLike) -> NDArray:
    """Pointwise ``(F(w) - F(v)) / (w - v)``.

    For the quartic well the quotient is the polynomial
    ``(v + w)(v^2 + w^2 - 2) / 4``, which reduces to ``f(v)`` when ``w == v``;
    no cancellation-prone division is needed.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return 0.25 * (v + w) * (v * v + w * w - 2.0)


def difference_quotient_dw(v: ArrayLike, w: ArrayLike) -> NDArray:
    """Partial derivative of :func:`difference_quotient` in its second argument."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return 0.25 * (v * v + w * w - 2.0) + 0.5 * w * (v + w)


@dataclass(frozen=True)
class EnergyReport:
    gradient_part: float
    potential_part: float
    scaled: bool

    @property
    def total(self) -> float:
        return self.gradient_part + self.potential_part


def _dirichlet(u: NDArray, grid: GridSpec) -> float:
    """``||grad u||^2`` as the spectral quadratic form ``(-Lap u, u)``.

    This equals the sum of squared spectral derivatives except that the
    unpaired Nyquist modes keep their ``k^2`` weight, matching the Laplacian
    the time integrators use.
    """
    return -inner_product_l2(u, laplacian(u, grid, "spectral"), grid)


def energy(u: NDArray, grid: GridSpec, eps: float, scaled: bool = False) -> EnergyReport:
    """Cahn-Hilliard free energy.

    Unscaled: ``J = int |grad u|^2 / 2 + F(u) / eps^2``.
    Scaled:   ``eps * J = int eps |grad u|^2 / 2 + F(u) / eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid.check(u)
    grad = 0.5 * _dirichlet(u, grid)
    pot = float(np.sum(F(u)) * grid.cell_area) / eps**2
    if scaled:
        grad, pot = eps * grad, eps * pot
    return EnergyReport(grad, pot, scaled)


def willmore_energy(u: NDArray, grid: GridSpec, eps: float) -> float:
    """Phase-field Willmore energy ``(1/2eps) int (eps Lap u - f(u)/eps)^2``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    w = eps * laplacian(u, grid, "spectral") - f(u) / eps
    return inner_product_l2(w, w, grid) / (2 * eps)


# The modified energies below use the weights that the IEQ/SAV schemes actually
# dissipate: the gradient term matches the free energy and the auxiliary term
# carries the potential's 1/eps (scaled) or 1/eps^2 (unscaled) weight.


def ieq_energy(u: NDArray, q: NDArray, grid: GridSpec, eps: float, scaled: bool = True) -> float:
    """IEQ modified energy ``kappa/2 ||grad u||^2 + beta ||q||^2``.

    ``scaled=True`` (Cahn-Hilliard): ``kappa = eps, beta = 1/eps``;
    ``scaled=False`` (Allen-Cahn): ``kappa = 1, beta = 1/eps^2``.
    """
    kappa, beta = _weights(eps, scaled)
    grid.check(q)
    return 0.5 * kappa * _dirichlet(u, grid) + beta * inner_product_l2(q, q, grid)


def sav_energy(u: NDArray, r: float, grid: GridSpec, eps: float, scaled: bool = True) -> float:
    """SAV modified energy ``kappa/2 ||grad u||^2 + beta r^2``."""
    kappa, beta = _weights(eps, scaled)
    return 0.5 * kappa * _dirichlet(u, grid) + beta * float(r) ** 2


def _weights(eps: float, scaled: bool) -> tuple[float, float]:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (eps, 1.0 / eps) if scaled else (1.0, 1.0 / eps**2)
