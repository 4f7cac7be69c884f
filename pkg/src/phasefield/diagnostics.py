"""Per-step monitors and the principal eigenvalue of the linearized Allen-Cahn operator."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from . import potential
from .errors import EmptyContour, IterationStalled
from .grid import GridSpec
from .integrators import SchemeSpec, SimState, modified_energy
from .models import Model

__all__ = [
    "mass",
    "principal_eigenvalue",
    "EigenResult",
    "SeriesRecord",
    "SERIES_HEADER",
    "record_step",
    "SeriesWriter",
    "write_series",
    "read_series",
    "singularity_flag",
]


def mass(u: NDArray, grid: GridSpec) -> float:
    """``int u dA`` by the rectangle rule (exact for trigonometric polynomials)."""
    grid.check(u)
    return float(np.sum(u) * grid.cell_area)


# -- principal eigenvalue -------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: NDArray
    iterations: int
    shift: float


def _seed_vector(grid: GridSpec, center: Sequence[float] | None, rng_seed: int) -> NDArray:
    if center is not None:
        X, Y = grid.coords()
        dx = X - center[0]
        dy = Y - center[1]
        dx -= grid.Lx * np.round(dx / grid.Lx)
        dy -= grid.Ly * np.round(dy / grid.Ly)
        return np.exp(-(dx * dx + dy * dy))
    return np.random.default_rng(rng_seed).standard_normal(grid.shape)


def principal_eigenvalue(
    u: NDArray,
    grid: GridSpec,
    eps: float,
    tol: float = 1e-8,
    *,
    method: str = "inverse_power",
    shift: str | float = "bound",
    potential_shift: float = 0.0,
    center: Sequence[float] | None = None,
    seed: int = 0,
    max_iter: int = 500,
    inner_rtol: float = 1e-12,
    return_details: bool = False,
) -> float | EigenResult:
    """Smallest eigenvalue of ``L = -Lap + (f'(u) + c) / eps^2`` (spectral Laplacian).

    The shifted operator ``L + sigma`` is symmetric positive definite and is
    inverted by conjugate gradients preconditioned with the constant-coefficient
    operator ``(-Lap + sigma + mean(pot))^-1``.

    ``shift``:
        ``"fixed"``: ``sigma = 1 + 2/eps^2`` (valid because ``f' >= -1``);
        ``"bound"``: ``sigma = 1 - min(f'(u) + c)/eps^2``, the tightest shift that
        keeps ``L + sigma >= 1`` pointwise, which speeds up convergence;
        a number: used as is (must make ``L + sigma`` positive definite).

    ``method``:
        ``"inverse_power"``: power iteration on ``(L + sigma)^-1`` until successive
        Rayleigh quotients differ by less than ``tol * max(1, |rho|)``;
        ``"lanczos"``: implicitly restarted Lanczos on the same inverse.

    The start vector is the bump ``exp(-|x - center|^2)`` when ``center`` is
    given, else seeded Gaussian noise. Raises :class:`IterationStalled` when
    ``max_iter`` outer iterations do not reach ``tol``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid.check(u)
    pot = (potential.fprime(u) + potential_shift) / eps**2
    if shift == "fixed":
        sigma = 1.0 + (2.0 + max(-potential_shift, 0.0)) / eps**2
    elif shift == "bound":
        sigma = 1.0 - float(pot.min())
    else:
        sigma = float(shift)
    k2 = grid.k2
    shape = grid.shape
    n = grid.nx * grid.ny

    def L(v: NDArray) -> NDArray:
        return sfft.irfft2(k2 * sfft.rfft2(v), s=shape) + pot * v

    def shifted(x: NDArray) -> NDArray:
        v = x.reshape(shape)
        return (L(v) + sigma * v).ravel()

    # constant-coefficient part of L + sigma; positive since sigma + min(pot) > 0
    prec_symbol = 1.0 / (k2 + sigma + float(pot.mean()))

    def prec(x: NDArray) -> NDArray:
        return sfft.irfft2(prec_symbol * sfft.rfft2(x.reshape(shape)), s=shape).ravel()

    A = LinearOperator((n, n), matvec=shifted, dtype=np.float64)
    M = LinearOperator((n, n), matvec=prec, dtype=np.float64)

    def solve(b: NDArray, x0: NDArray | None = None) -> NDArray:
        x, info = cg(A, b.ravel(), x0=None if x0 is None else x0.ravel(), rtol=inner_rtol, atol=0.0, M=M, maxiter=10 * n)
        if info > 0:
            raise IterationStalled(f"inner CG solve did not converge ({info} iterations)")
        return x.reshape(shape)

    def rayleigh(v: NDArray) -> float:
        return float(np.vdot(v, L(v)) / np.vdot(v, v))

    v = _seed_vector(grid, center, seed)
    v /= np.linalg.norm(v)

    if method == "lanczos":
        B = LinearOperator((n, n), matvec=lambda x: solve(x.reshape(shape)).ravel(), dtype=np.float64)
        try:
            vals, vecs = eigsh(B, k=1, which="LA", v0=v.ravel(), tol=tol * 1e-2, maxiter=max_iter)
        except Exception as exc:  # ArpackNoConvergence
            raise IterationStalled(f"Lanczos did not converge: {exc}") from exc
        vec = vecs[:, 0].reshape(shape)
        value = rayleigh(vec)
        out = EigenResult(value, vec, max_iter, sigma)
        return out if return_details else out.value
    if method != "inverse_power":
        raise ValueError(f"unknown eigen method {method!r}")

    rho = rayleigh(v)
    w = None
    for it in range(1, max_iter + 1):
        w = solve(v, w)
        v = w / np.linalg.norm(w)
        new = rayleigh(v)
        if abs(new - rho) < tol * max(1.0, abs(new)):
            out = EigenResult(new, v, it, sigma)
            return out if return_details else out.value
        rho = new
    raise IterationStalled(f"inverse power iteration did not converge in {max_iter} iterations (last {rho!r})")


def singularity_flag(history: Sequence[float], eps: float, factor: float | None = None) -> bool:
    """True when the latest ``lambda_min`` drops below ``-(2 + |ln eps|)`` times the
    running median of ``|lambda_min|`` over the earlier entries."""
    vals = [float(x) for x in history if x is not None and math.isfinite(x)]
    if len(vals) < 2:
        return False
    c = factor if factor is not None else 2.0 + abs(math.log(eps))
    ref = statistics.median(abs(x) for x in vals[:-1])
    return vals[-1] < -c * ref


# -- series records --------------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesRecord:
    step: int
    t: float
    energy_J: float
    energy_scaled: float
    modified_energy: float | None = None
    mass: float = 0.0
    radius: float | None = None
    lambda_min: float | None = None
    newton_iters: int | None = None

    def __post_init__(self) -> None:
        for fld in fields(self):
            val = getattr(self, fld.name)
            if isinstance(val, float) and not math.isfinite(val):
                raise ValueError(f"non-finite {fld.name} in series record")

    def row(self) -> list[str]:
        return [_fmt(x) for x in astuple(self)]


SERIES_HEADER = tuple(f.name for f in fields(SeriesRecord))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def record_step(
    state: SimState,
    model: Model,
    scheme: SchemeSpec | None = None,
    *,
    radius_center: Sequence[float] | None = None,
    eigenvalue: bool = False,
    eigen_tol: float = 1e-8,
) -> SeriesRecord:
    """Monitor values for one state; radius and ``lambda_min`` only on request."""
    from .geometry import circle_radius_estimate, extract_zero_contour

    u, grid, eps = state.u, model.grid, model.epsilon
    e = potential.energy(u, grid, eps)
    radius = None
    if radius_center is not None:
        try:
            radius = circle_radius_estimate(extract_zero_contour(u, grid), radius_center)[0]
        except EmptyContour:
            radius = None
    lam = None
    if eigenvalue:
        lam = principal_eigenvalue(u, grid, eps, eigen_tol, center=radius_center)
    return SeriesRecord(
        step=state.n,
        t=state.t,
        energy_J=e.total,
        energy_scaled=eps * e.total,
        modified_energy=modified_energy(model, state),
        mass=mass(u, grid),
        radius=radius,
        lambda_min=lam,
        newton_iters=state.report.newton_iters if state.n > 0 else None,
    )


class SeriesWriter:
    """Appends records to a CSV file one line at a time, flushing each row.

    Rows already written survive an exception raised later in the run.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(SERIES_HEADER)
        self._last_step: int | None = None

    def write(self, rec: SeriesRecord) -> None:
        if self._last_step is not None and rec.step <= self._last_step:
            raise ValueError("series steps must be strictly increasing")
        self._last_step = rec.step
        self._w.writerow(rec.row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> SeriesWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_series(path: str | Path, records: Iterable[SeriesRecord]) -> Path:
    with SeriesWriter(path) as w:
        for rec in records:
            w.write(rec)
    return Path(path)


def read_series(path: str | Path) -> list[SeriesRecord]:
    text = Path(path).read_text()
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        vals = {}
        for name in SERIES_HEADER:
            s = row[name]
            if s == "":
                vals[name] = None
            elif name in ("step", "newton_iters"):
                vals[name] = int(s)
            else:
                vals[name] = float(s)
        out.append(SeriesRecord(**vals))
    return out
