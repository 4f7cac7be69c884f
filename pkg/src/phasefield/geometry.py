"""Interface geometry from a phase field.

Sign convention: ``u > 0`` inside the enclosed region (signed distance
``d > 0`` inside). Curvature densities are oriented so that a disk has
positive total mean curvature ``2*pi``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from . import potential
from .errors import ClearanceViolation, EmptyContour, EmptyInput
from .grid import GridSpec, gradient, hessian, laplacian

__all__ = [
    "Circle",
    "Stripe",
    "CircleUnion",
    "Annulus",
    "signed_distance",
    "tanh_profile",
    "mean_curvature_density",
    "gauss_curvature_density",
    "euler_characteristic_2d",
    "euler_integral",
    "calibrate_euler_prefactor",
    "EULER_PREFACTOR",
    "Contour",
    "extract_zero_contour",
    "circle_contour",
    "hausdorff_distance",
    "perimeter_estimate",
    "volume_fraction",
    "circle_radius_estimate",
]


# -- shapes -------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class Stripe:
    """Band ``|x_axis - offset| < width/2`` (periodic); it has two flat interfaces."""

    axis: int = 0
    offset: float = math.pi
    width: float = math.pi

    def __post_init__(self) -> None:
        if self.axis not in (0, 1):
            raise ValueError("axis must be 0 (x) or 1 (y)")
        if not self.width > 0:
            raise ValueError("width must be positive")


@dataclass(frozen=True)
class CircleUnion:
    circles: tuple[Circle, ...]


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, float]
    outer: float
    inner: float

    def __post_init__(self) -> None:
        if not 0 < self.inner < self.outer:
            raise ValueError("annulus needs 0 < inner < outer")


Shape = Union[Circle, Stripe, CircleUnion, Annulus]


def _wrap(delta: NDArray, length: float) -> NDArray:
    """Minimum-image displacement on a circle of circumference ``length``."""
    return delta - length * np.round(delta / length)


def _radius_field(grid: GridSpec, center: Sequence[float]) -> NDArray:
    X, Y = grid.coords()
    dx = _wrap(X - center[0], grid.Lx)
    dy = _wrap(Y - center[1], grid.Ly)
    return np.hypot(dx, dy)


def signed_distance(grid: GridSpec, shape: Shape) -> NDArray:
    """Signed distance to the shape boundary, positive inside."""
    if isinstance(shape, Circle):
        return shape.radius - _radius_field(grid, shape.center)
    if isinstance(shape, Annulus):
        r = _radius_field(grid, shape.center)
        return np.minimum(shape.outer - r, r - shape.inner)
    if isinstance(shape, CircleUnion):
        if not shape.circles:
            raise ValueError("empty circle union")
        return np.max([signed_distance(grid, c) for c in shape.circles], axis=0)
    if isinstance(shape, Stripe):
        X, Y = grid.coords()
        coord, length = (X, grid.Lx) if shape.axis == 0 else (Y, grid.Ly)
        return 0.5 * shape.width - np.abs(_wrap(coord - shape.offset, length))
    raise TypeError(f"unsupported shape {shape!r}")


def _clearance_ok(grid: GridSpec, shape: Shape, eps: float) -> bool:
    gap = 8 * eps
    half = 0.5 * min(grid.Lx, grid.Ly)
    if isinstance(shape, Circle):
        return shape.radius + gap <= half
    if isinstance(shape, Annulus):
        return shape.outer + gap <= half and shape.inner >= gap
    if isinstance(shape, CircleUnion):
        cs = shape.circles
        for i, a in enumerate(cs):
            if not _clearance_ok(grid, a, eps):
                return False
            for b in cs[i + 1:]:
                dx = _wrap(a.center[0] - b.center[0], grid.Lx)
                dy = _wrap(a.center[1] - b.center[1], grid.Ly)
                if math.hypot(dx, dy) < a.radius + b.radius + gap:
                    return False
        return True
    if isinstance(shape, Stripe):
        length = grid.Lx if shape.axis == 0 else grid.Ly
        return shape.width >= gap and length - shape.width >= gap
    return True


def tanh_profile(grid: GridSpec, shape: Shape, eps: float) -> NDArray:
    """``tanh(d / (sqrt(2) eps))`` for the signed distance ``d`` of ``shape``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not _clearance_ok(grid, shape, eps):
        warnings.warn(
            f"{shape!r} violates the 8*eps clearance on this cell", ClearanceViolation, stacklevel=2
        )
    return np.tanh(signed_distance(grid, shape) / (math.sqrt(2) * eps))


# -- curvature densities -----------------------------------------------------------------


def mean_curvature_density(u: NDArray, grid: GridSpec, eps: float) -> NDArray:
    """Phase-field mean curvature density ``-(Lap u - f(u)/eps^2) / 2``.

    The minus sign orients the density for ``u > 0`` inside, so its integral
    over a disk is ``+2*pi`` (the total curvature of the boundary).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return -0.5 * (laplacian(u, grid, "spectral") - potential.f(u) / eps**2)


def gauss_curvature_density(u: NDArray, grid: GridSpec, eps: float, rtol: float = 1e-8) -> NDArray:
    """``(1/2eps) [(eps Lap u - f/eps)^2 - |eps Hess u - (f/eps) n (x) n|^2]``.

    ``n = grad u / |grad u|`` is undefined where ``|grad u|`` falls below
    ``rtol`` times its maximum; the density is set to zero there (any unit
    ``n`` makes the bracket vanish on flat constant regions). The Frobenius
    norm is used for the tensor.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    fxx, fxy, fyy = hessian(u, grid)
    ux, uy = gradient(u, grid, "spectral")
    mag = np.hypot(ux, uy)
    live = mag > rtol * max(float(mag.max()), np.finfo(float).tiny)
    safe = np.where(live, mag, 1.0)
    nx = np.where(live, ux / safe, 0.0)
    ny = np.where(live, uy / safe, 0.0)
    fe = potential.f(u) / eps
    a = eps * (fxx + fyy) - fe
    bxx = eps * fxx - fe * nx * nx
    byy = eps * fyy - fe * ny * ny
    bxy = eps * fxy - fe * nx * ny
    return np.where(live, (a * a - (bxx * bxx + byy * byy + 2 * bxy * bxy)) / (2 * eps), 0.0)


# -- Euler characteristic ---------------------------------------------------------------------


def euler_integral(u: NDArray, grid: GridSpec, eps: float) -> float:
    """``int (Lap u - f(u)/eps^2) dA`` (the integrand of the 2D Euler formula)."""
    w = laplacian(u, grid, "spectral") - potential.f(u) / eps**2
    return float(np.sum(w) * grid.cell_area)


def calibrate_euler_prefactor(eps: float = 0.05, n: int = 256, radius: float = 1.0) -> float:
    """Prefactor making a single tanh disk count as Euler characteristic one."""
    grid = GridSpec.square(n)
    u = tanh_profile(grid, Circle((math.pi, math.pi), radius), eps)
    return 1.0 / euler_integral(u, grid, eps)


# Frozen output of calibrate_euler_prefactor() with its defaults (disk R=1,
# eps=0.05, 256^2 on the 2*pi torus). Asymptotically -1/(4*pi) = -0.0795775.
EULER_PREFACTOR = -0.07957747147181042


def euler_characteristic_2d(u: NDArray, grid: GridSpec, eps: float, prefactor: float = EULER_PREFACTOR) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return prefactor * euler_integral(u, grid, eps)


# -- contours ------------------------------------------------------------------------------------


@dataclass
class Contour:
    """Zero level set as polylines of edge-crossing points.

    Coordinates are unwrapped along each polyline, so a closed curve that
    crosses the cell seam stays continuous; distances use the minimum image
    when ``period`` is set.
    """

    polylines: list[NDArray] = field(default_factory=list)
    period: tuple[float, float] | None = None
    closed: list[bool] = field(default_factory=list)

    @property
    def points(self) -> NDArray:
        if not self.polylines:
            return np.empty((0, 2))
        return np.concatenate(self.polylines, axis=0)

    def __len__(self) -> int:
        return sum(len(p) for p in self.polylines)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["polyline_id", "x", "y"])
            for pid, line in enumerate(self.polylines):
                for x, y in line:
                    w.writerow([pid, repr(float(x)), repr(float(y))])

    @classmethod
    def from_points(cls, points: NDArray, period: tuple[float, float] | None = None) -> Contour:
        """Unconnected point cloud: every point is its own polyline."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls([p[None, :] for p in pts], period, [False] * len(pts))

    def segment_lengths(self) -> NDArray:
        parts = [np.hypot(*np.diff(_closed(p, c), axis=0).T) for p, c in zip(self.polylines, self.closed)]
        return np.concatenate(parts) if parts else np.empty(0)

    def densified(self, spacing: float) -> Contour:
        """Copy with every segment subdivided to pieces no longer than ``spacing``."""
        lines = []
        for p, c in zip(self.polylines, self.closed):
            q = _closed(p, c)
            if len(q) < 2:
                lines.append(p)
                continue
            seg = np.hypot(*np.diff(q, axis=0).T)
            n = np.maximum(1, np.ceil(seg / spacing).astype(int))
            out = [q[k] + np.outer(np.arange(n[k]) / n[k], q[k + 1] - q[k]) for k in range(len(seg))]
            if not c:
                out.append(q[-1:])
            lines.append(np.concatenate(out, axis=0))
        return Contour(lines, self.period, list(self.closed))


def _closed(p: NDArray, closed: bool) -> NDArray:
    return np.vstack([p, p[:1]]) if closed and len(p) > 1 else p


def extract_zero_contour(u: NDArray, grid: GridSpec) -> Contour:
    """Marching squares on the periodic grid with linear edge interpolation.

    Samples with ``u > 0`` count as inside. Saddle cells are resolved by the
    sign of the cell average. Raises :class:`EmptyContour` when ``u`` has no
    sign change.
    """
    grid.check(u)
    ny, nx = grid.shape
    hx, hy = grid.hx, grid.hy
    pos = u > 0
    if pos.all() or not pos.any():
        raise EmptyContour("field has no sign change")

    ur = np.roll(u, -1, axis=1)  # u[j, i+1]
    uu = np.roll(u, -1, axis=0)  # u[j+1, i]
    pr = np.roll(pos, -1, axis=1)
    pu = np.roll(pos, -1, axis=0)

    jj, ii = np.indices((ny, nx))
    # horizontal edges (i,j)-(i+1,j): id j*nx+i ; vertical (i,j)-(i,j+1): id nx*ny + j*nx+i
    hmask = pos != pr
    vmask = pos != pu
    with np.errstate(divide="ignore", invalid="ignore"):
        th = np.where(hmask, u / (u - ur), 0.0)
        tv = np.where(vmask, u / (u - uu), 0.0)
    nedge = 2 * nx * ny
    ex = np.full(nedge, np.nan)
    ey = np.full(nedge, np.nan)
    hid = (jj * nx + ii)[hmask]
    ex[hid] = (ii[hmask] + th[hmask]) * hx
    ey[hid] = jj[hmask] * hy
    vid = (nx * ny + jj * nx + ii)[vmask]
    ex[vid] = ii[vmask] * hx
    ey[vid] = (jj[vmask] + tv[vmask]) * hy

    # cell (i,j) corners: c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1)
    c0, c1, c3 = pos, pr, pu
    c2 = np.roll(pr, -1, axis=0)
    code = c0.astype(int) | (c1.astype(int) << 1) | (c2.astype(int) << 2) | (c3.astype(int) << 3)
    cell_id = jj * nx + ii
    e0 = cell_id  # bottom: H(i,j)
    e2 = np.roll(cell_id, -1, axis=0)  # top: H(i,j+1)
    e3 = nx * ny + cell_id  # left: V(i,j)
    e1 = nx * ny + np.roll(cell_id, -1, axis=1)  # right: V(i+1,j)
    edges = (e0, e1, e2, e3)

    avg_pos = (u + ur + uu + np.roll(ur, -1, axis=0)) / 4 > 0
    segments: list[tuple[NDArray, NDArray]] = []
    # Each corner configuration cuts the cell between two edges; corner k is
    # flanked by edges (k-1) and k in the order bottom, right, top, left.
    single = {
        1: (3, 0), 2: (0, 1), 4: (1, 2), 8: (2, 3),
        3: (3, 1), 6: (0, 2), 9: (0, 2), 12: (3, 1),
        7: (3, 2), 11: (1, 2), 13: (0, 1), 14: (3, 0),
    }
    for c, (a, b) in single.items():
        m = code == c
        if m.any():
            segments.append((edges[a][m], edges[b][m]))
    for c in (5, 10):
        m = code == c
        if not m.any():
            continue
        # code 5: c0, c2 positive; code 10: c1, c3 positive
        joined = avg_pos[m] if c == 5 else ~avg_pos[m]  # c0 and c2 connected through the centre
        for flag, pairs in ((joined, ((0, 1), (2, 3))), (~joined, ((3, 0), (1, 2)))):
            if flag.any():
                for a, b in pairs:
                    segments.append((edges[a][m][flag], edges[b][m][flag]))

    a_ids = np.concatenate([s[0] for s in segments])
    b_ids = np.concatenate([s[1] for s in segments])
    return _chain(a_ids, b_ids, ex, ey, grid)


def _chain(a_ids: NDArray, b_ids: NDArray, ex: NDArray, ey: NDArray, grid: GridSpec) -> Contour:
    adj: dict[int, list[int]] = {}
    for a, b in zip(a_ids.tolist(), b_ids.tolist()):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    visited: set[int] = set()
    lines: list[NDArray] = []
    closed: list[bool] = []
    Lx, Ly = grid.Lx, grid.Ly
    # open chains first (only possible for degenerate inputs), then loops
    starts = [k for k, v in adj.items() if len(v) == 1] + list(adj)
    for start in starts:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxt = [k for k in adj[cur] if k != prev and k not in visited]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            visited.add(cur)
        is_closed = len(chain) > 2 and start in adj[cur]
        pts = np.column_stack([ex[chain], ey[chain]])
        # unwrap along the chain so it never jumps across the seam
        d = np.diff(pts, axis=0)
        d[:, 0] = _wrap(d[:, 0], Lx)
        d[:, 1] = _wrap(d[:, 1], Ly)
        pts = np.vstack([pts[:1], pts[:1] + np.cumsum(d, axis=0)])
        lines.append(pts)
        closed.append(is_closed)
    return Contour(lines, (Lx, Ly), closed)


def circle_contour(
    center: Sequence[float], radius: float, n: int = 4096, period: tuple[float, float] | None = None
) -> Contour:
    """Densely sampled analytic circle."""
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])
    return Contour([pts], period, [True])


def _tree_points(pts: NDArray, period: tuple[float, float] | None) -> tuple[NDArray, NDArray | None]:
    if period is None:
        return pts, None
    box = np.asarray(period, dtype=float)
    p = np.mod(pts, box)
    p[p >= box] = 0.0
    return p, box


def hausdorff_distance(a: Contour, b: Contour, spacing: float | None = None) -> float:
    """Symmetric Hausdorff distance between two contours (minimum image if periodic).

    Polylines are measured along their segments, not just at vertices: both
    contours are resampled to ``spacing`` (default: an eighth of the smallest
    median segment length) before the nearest-point queries.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("Hausdorff distance needs two nonempty contours")
    if spacing is None:
        meds = [float(np.median(s)) for s in (a.segment_lengths(), b.segment_lengths()) if s.size]
        meds = [m for m in meds if m > 0]
        spacing = min(meds) / 8 if meds else None
    if spacing is not None:
        a, b = a.densified(spacing), b.densified(spacing)
    pa, pb = a.points, b.points
    period = a.period if a.period is not None else b.period
    pa, box = _tree_points(pa, period)
    pb, _ = _tree_points(pb, period)
    da, _ = cKDTree(pb, boxsize=box).query(pa)
    db, _ = cKDTree(pa, boxsize=box).query(pb)
    return float(max(da.max(), db.max()))


# -- integral estimates ----------------------------------------------------------------------------


def perimeter_estimate(u: NDArray, grid: GridSpec, eps: float) -> float:
    """Interface length from the scaled free energy divided by ``2*sqrt(2)/3``."""
    return potential.energy(u, grid, eps, scaled=True).total / potential.SIGMA0


def volume_fraction(u: NDArray, grid: GridSpec) -> float:
    grid.check(u)
    return float(np.mean(0.5 * (1.0 + u)))


def circle_radius_estimate(c: Contour, center: Sequence[float]) -> tuple[float, float]:
    """Mean distance of contour points to ``center`` and the max deviation from it."""
    pts = c.points
    if len(pts) == 0:
        raise EmptyInput("radius estimate needs a nonempty contour")
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    if c.period is not None:
        dx = _wrap(dx, c.period[0])
        dy = _wrap(dy, c.period[1])
    r = np.hypot(dx, dy)
    mean = float(r.mean())
    return mean, float(np.max(np.abs(r - mean)))
