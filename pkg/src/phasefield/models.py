"""Phase-field PDEs written as gradient flows ``u_t = -M mu``.

Every model shares one structure::

    mu  = kappa * (-Lap) u + beta * f(u)
    u_t = -M mu  (+ explicit transport/forcing for convective Allen-Cahn)

with

=====================  ========  ==========  ===========
model                  M         kappa       beta
=====================  ========  ==========  ===========
Allen-Cahn             I         1           1/eps^2
Cahn-Hilliard          -Lap      eps         1/eps
=====================  ========  ==========  ===========

Allen-Cahn runs in fast time, so its zero level set moves with normal velocity
equal to the mean curvature. The stiff linear part used by the linearly
implicit and exponential schemes is ``A = -M (kappa (-Lap) + beta alpha)`` and
the remainder is ``N(u) = -M beta (f(u) - alpha u)``, so ``A u + N(u) = u_t``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

from . import potential
from .errors import MissingAdvection, WrongKind
from .grid import GridSpec, METHODS, laplacian_symbol

__all__ = ["ModelKind", "ModelSpec", "Model", "MixedState", "linear_symbol"]


class ModelKind(str, enum.Enum):
    ALLEN_CAHN = "allen_cahn"
    CAHN_HILLIARD = "cahn_hilliard"
    CONVECTIVE_ALLEN_CAHN = "convective_allen_cahn"


@dataclass(frozen=True)
class ModelSpec:
    """PDE choice and its parameters.

    ``nonlinear=False`` replaces the double well by ``f = 0``; together with
    ``alpha=0`` this gives the pure diffusion (or biharmonic) surrogate used to
    check exactness of exponential integrators.
    """

    kind: ModelKind = ModelKind.ALLEN_CAHN
    epsilon: float = 0.05
    alpha: float = 2.0
    method: str = "spectral"
    advection: tuple[NDArray, NDArray] | None = field(default=None, compare=False, repr=False)
    forcing: NDArray | None = field(default=None, compare=False, repr=False)
    nonlinear: bool = True
    dealias: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.kind is not ModelKind.CONVECTIVE_ALLEN_CAHN and (
            self.advection is not None or self.forcing is not None
        ):
            raise ValueError("advection and forcing are only valid for convective_allen_cahn")

    @property
    def is_cahn_hilliard(self) -> bool:
        return self.kind is ModelKind.CAHN_HILLIARD

    @property
    def kappa(self) -> float:
        return self.epsilon if self.is_cahn_hilliard else 1.0

    @property
    def beta(self) -> float:
        return 1.0 / self.epsilon if self.is_cahn_hilliard else 1.0 / self.epsilon**2


def linear_symbol(spec: ModelSpec, k: Sequence[float]) -> float:
    """Spectral symbol of the stabilized linear part ``A`` at wavevector ``k``."""
    k2 = float(np.dot(k, k))
    mob = k2 if spec.is_cahn_hilliard else 1.0
    return -mob * (spec.kappa * k2 + spec.beta * spec.alpha)


@dataclass
class MixedState:
    u: NDArray
    mu: NDArray


class Model:
    """A :class:`ModelSpec` bound to a grid: operators, splittings, energies."""

    def __init__(self, spec: ModelSpec, grid: GridSpec):
        self.spec = spec
        self.grid = grid
        if spec.kind is ModelKind.CONVECTIVE_ALLEN_CAHN:
            if spec.advection is None:
                raise MissingAdvection("convective Allen-Cahn needs an advection field")
            for comp in spec.advection:
                grid.check(comp)
        if spec.forcing is not None:
            grid.check(spec.forcing)

    # -- symbols (half-spectrum layout) -----------------------------------------

    @cached_property
    def lam(self) -> NDArray:
        """Symbol of ``-Lap`` (nonnegative)."""
        return -laplacian_symbol(self.grid, self.spec.method)

    @cached_property
    def mobility(self) -> NDArray | float:
        return self.lam if self.spec.is_cahn_hilliard else 1.0

    @cached_property
    def linear_symbol(self) -> NDArray:
        s = self.spec
        return -self.mobility * (s.kappa * self.lam + s.beta * s.alpha)

    @cached_property
    def _grad_symbols(self) -> tuple[NDArray, NDArray]:
        g = self.grid
        if self.spec.method == "spectral":
            return g.ikx, g.iky
        return 1j * np.sin(g.kx * g.hx) / g.hx, 1j * np.sin(g.ky * g.hy) / g.hy

    # -- building blocks ----------------------------------------------------------

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    @property
    def is_cahn_hilliard(self) -> bool:
        return self.spec.is_cahn_hilliard

    @property
    def has_explicit_terms(self) -> bool:
        return self.spec.kind is ModelKind.CONVECTIVE_ALLEN_CAHN

    def fft(self, u: NDArray) -> NDArray:
        return sfft.rfft2(u)

    def ifft(self, uh: NDArray) -> NDArray:
        return sfft.irfft2(uh, s=self.grid.shape)

    def apply(self, symbol, u: NDArray) -> NDArray:
        return self.ifft(symbol * self.fft(u))

    def nl(self, u: NDArray) -> NDArray:
        """Pointwise nonlinearity ``f(u)`` (collocation; optionally 2/3-dealiased)."""
        if not self.spec.nonlinear:
            return np.zeros_like(u)
        if self.spec.dealias:
            mask = self.grid.dealias_mask
            return self.apply(mask, potential.f(self.apply(mask, u)))
        return potential.f(u)

    def nl_prime(self, u: NDArray) -> NDArray:
        if not self.spec.nonlinear:
            return np.zeros_like(u)
        return potential.fprime(u)

    def explicit_terms(self, u: NDArray) -> NDArray | float:
        """Transport and forcing contribution to ``u_t``: ``-v.grad u + g``."""
        if not self.has_explicit_terms:
            return 0.0
        vx, vy = self.spec.advection
        sx, sy = self._grad_symbols
        uh = self.fft(u)
        out = -(vx * self.ifft(sx * uh) + vy * self.ifft(sy * uh))
        if self.spec.forcing is not None:
            out = out + self.spec.forcing
        return out

    def mu(self, u: NDArray) -> NDArray:
        """``kappa (-Lap) u + beta f(u)``; the chemical potential for Cahn-Hilliard."""
        return self.spec.kappa * self.apply(self.lam, u) + self.spec.beta * self.nl(u)

    # -- public operations ------------------------------------------------------------

    def variational_derivative(self, u: NDArray) -> NDArray:
        """``J'(u)`` in the flow's topology, i.e. ``-du/dt``."""
        self.grid.check(u)
        if self.is_cahn_hilliard:
            out = self.apply(self.lam, self.mu(u))
        else:
            out = self.mu(u)
        return out - self.explicit_terms(u)

    def tendency(self, u: NDArray) -> NDArray:
        return -self.variational_derivative(u)

    def apply_linear(self, u: NDArray) -> NDArray:
        return self.apply(self.linear_symbol, u)

    def nonlinear_remainder(self, u: NDArray) -> NDArray:
        """``N(u) = u_t - A u``."""
        self.grid.check(u)
        s = self.spec
        w = s.beta * (self.nl(u) - s.alpha * u)
        if self.is_cahn_hilliard:
            w = self.apply(self.lam, w)
        return -w + self.explicit_terms(u)

    def chemical_potential(self, u: NDArray) -> NDArray:
        if not self.is_cahn_hilliard:
            raise WrongKind("chemical potential is defined for the Cahn-Hilliard model only")
        self.grid.check(u)
        return self.mu(u)

    def mixed_state(self, u: NDArray) -> MixedState:
        return MixedState(u, self.chemical_potential(u))

    def energy(self, u: NDArray) -> float:
        """The free energy this flow dissipates (``J`` for AC, ``eps J`` for CH)."""
        return potential.energy(u, self.grid, self.epsilon, scaled=self.is_cahn_hilliard).total

    def dirichlet(self, u: NDArray) -> float:
        """``||grad u||^2`` with the model's own discrete Laplacian."""
        return float(np.vdot(u, self.apply(self.lam, u)) * self.grid.cell_area)

    def norm2(self, v: NDArray) -> float:
        """Squared norm of the flow's topology (L2 for AC, H^-1 for CH)."""
        if not self.is_cahn_hilliard:
            return float(np.vdot(v, v) * self.grid.cell_area)
        inv = np.zeros_like(self.lam)
        np.divide(1.0, self.lam, out=inv, where=self.lam > 0)
        return float(np.vdot(v, self.apply(inv, v)) * self.grid.cell_area)
