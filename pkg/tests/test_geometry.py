from __future__ import annotations

import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasefield.errors import ClearanceViolation, EmptyContour, EmptyInput
from phasefield.geometry import (
    EULER_PREFACTOR,
    Annulus,
    Circle,
    CircleUnion,
    Contour,
    Stripe,
    calibrate_euler_prefactor,
    circle_contour,
    circle_radius_estimate,
    euler_characteristic_2d,
    extract_zero_contour,
    gauss_curvature_density,
    hausdorff_distance,
    mean_curvature_density,
    perimeter_estimate,
    signed_distance,
    tanh_profile,
    volume_fraction,
)
from phasefield.grid import GridSpec

PI = math.pi
CENTER = (PI, PI)


@pytest.fixture(scope="module")
def g256() -> GridSpec:
    return GridSpec.square(256)


def bilinear(u: np.ndarray, grid: GridSpec, pts: np.ndarray) -> np.ndarray:
    ny, nx = grid.shape
    fx = np.mod(pts[:, 0], grid.Lx) / grid.hx
    fy = np.mod(pts[:, 1], grid.Ly) / grid.hy
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    # points on the upper cell edge may round to the next cell; both are valid
    ax, ay = fx - i0, fy - j0
    i1, j1 = (i0 + 1) % nx, (j0 + 1) % ny
    i0, j0 = i0 % nx, j0 % ny
    return (
        u[j0, i0] * (1 - ax) * (1 - ay) + u[j0, i1] * ax * (1 - ay)
        + u[j1, i0] * (1 - ax) * ay + u[j1, i1] * ax * ay
    )


# -- profiles ---------------------------------------------------------------------------------


def test_tanh_profile_values():
    g = GridSpec.square(64)
    eps = 0.1
    sd = signed_distance(g, Circle(CENTER, 1.0))
    u = tanh_profile(g, Circle(CENTER, 1.0), eps)
    assert np.allclose(u, np.tanh(sd / (math.sqrt(2) * eps)))
    assert math.tanh(1.0) == pytest.approx(0.76159, abs=1e-5)
    assert np.all(np.abs(u) <= 1)
    assert np.all(np.abs(u[np.abs(sd) < 0.5]) < 1)
    assert u[32, 32] > 0.999  # inside is positive


def test_tanh_profile_warns_on_clearance():
    g = GridSpec.square(32)
    with pytest.warns(ClearanceViolation):
        u = tanh_profile(g, Circle(CENTER, 3.0), 0.1)
    assert u.shape == g.shape
    with pytest.raises(ValueError):
        tanh_profile(g, Circle(CENTER, 1.0), 0.0)


def test_stripe_profile_gradient_identity():
    eps = 0.1
    g = GridSpec(512, 8)
    u = tanh_profile(g, Stripe(axis=0, offset=PI, width=PI), eps)
    from phasefield.grid import gradient

    gx, gy = gradient(u, g)
    lhs = gx**2 + gy**2
    rhs = (1 - u**2) ** 2 / (2 * eps**2)
    X, _ = g.coords()
    # exclude the neighbourhood of the far-away fold of the periodic distance
    away = np.abs(X - PI) < 0.9 * PI
    layer = away & (rhs > 1e-3 * rhs.max())
    assert np.abs(lhs[layer] - rhs[layer]).max() <= 0.01 * rhs.max()


# -- curvature ---------------------------------------------------------------------------------


def test_mean_curvature_trivial_cases():
    g = GridSpec(1024, 8)
    eps = 0.05
    assert np.all(mean_curvature_density(np.zeros(g.shape), g, eps) == 0)
    u = tanh_profile(g, Stripe(axis=0, offset=PI, width=PI), eps)
    assert np.abs(mean_curvature_density(u, g, eps)).max() < 1e-3 / eps


@pytest.mark.parametrize("radius", [0.6, 0.8, 1.0])
def test_mean_curvature_integral_is_two_pi(g256, radius):
    eps = 0.05
    u = tanh_profile(g256, Circle(CENTER, radius), eps)
    total = np.sum(mean_curvature_density(u, g256, eps)) * g256.cell_area
    assert total == pytest.approx(2 * PI, rel=0.1)


def test_mean_curvature_integral_error_shrinks_with_eps():
    errs = []
    for eps, n in ((0.1, 256), (0.05, 256), (0.025, 512)):
        g = GridSpec.square(n)
        u = tanh_profile(g, Circle(CENTER, 0.6), eps)
        errs.append(abs(np.sum(mean_curvature_density(u, g, eps)) * g.cell_area - 2 * PI))
    assert errs[0] > errs[1] > errs[2]


def test_gauss_curvature_trivial_cases():
    g = GridSpec(1024, 8)
    eps = 0.05
    assert np.all(gauss_curvature_density(np.full(g.shape, 0.3), g, eps) == 0)
    u = tanh_profile(g, Stripe(axis=0, offset=PI, width=PI), eps)
    k = gauss_curvature_density(u, g, eps)
    assert np.abs(k).max() < 1e-3 / eps**2


def _gauss_fd(u: np.ndarray, g: GridSpec, eps: float) -> np.ndarray:
    """Independent second-order finite-difference evaluation of the same density."""
    h = g.hx

    def dx(a):
        return (np.roll(a, -1, 1) - np.roll(a, 1, 1)) / (2 * h)

    def dy(a):
        return (np.roll(a, -1, 0) - np.roll(a, 1, 0)) / (2 * h)

    uxx = (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / h**2
    uyy = (np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / h**2
    uxy = dy(dx(u))
    ux, uy = dx(u), dy(u)
    fu = u**3 - u
    norm = np.hypot(ux, uy)
    safe = np.where(norm > 1e-8 * norm.max(), norm, 1.0)
    nx_, ny_ = np.where(norm > 1e-8 * norm.max(), ux / safe, 0), np.where(norm > 1e-8 * norm.max(), uy / safe, 0)
    trace = eps * (uxx + uyy) - fu / eps
    m11 = eps * uxx - fu / eps * nx_ * nx_
    m22 = eps * uyy - fu / eps * ny_ * ny_
    m12 = eps * uxy - fu / eps * nx_ * ny_
    return (trace**2 - (m11**2 + m22**2 + 2 * m12**2)) / (2 * eps)


def test_gauss_curvature_vanishes_on_equilibrium_circle():
    # on the radial equilibrium profile both bracket terms equal (eps u'/r)^2
    eps = 0.05
    fd_errs = []
    for n in (256, 512, 1024):
        g = GridSpec.square(n)
        u = tanh_profile(g, Circle(CENTER, 1.0), eps)
        assert np.abs(gauss_curvature_density(u, g, eps)).max() < 1e-2
        fd_errs.append(np.abs(_gauss_fd(u, g, eps)).max())
    for a, b in zip(fd_errs, fd_errs[1:]):
        assert a / b == pytest.approx(4, rel=0.25)


def test_gauss_curvature_matches_finite_difference_reimplementation():
    # a profile twice as wide as eps is off equilibrium, so the density is O(1)
    eps = 0.05
    g = GridSpec.square(512)
    u = tanh_profile(g, Circle(CENTER, 1.0), 2 * eps)
    spec = gauss_curvature_density(u, g, eps)
    fd = _gauss_fd(u, g, eps)
    big = np.abs(spec) > 0.05 * np.abs(spec).max()
    assert np.mean(np.sign(spec[big]) == np.sign(fd[big])) > 0.99
    assert np.linalg.norm(spec - fd) <= 0.05 * np.linalg.norm(spec)
    # concentrated in the layer
    assert np.abs(spec[np.abs(u) > 0.99]).max() < 0.01 * np.abs(spec).max()


# -- Euler characteristic --------------------------------------------------------------------------


def test_euler_prefactor_is_frozen_calibration():
    assert calibrate_euler_prefactor() == pytest.approx(EULER_PREFACTOR, rel=1e-9)
    assert abs(EULER_PREFACTOR) == pytest.approx(1 / (4 * PI), rel=0.2)


def _two_disks(g):
    a = Circle((PI / 2, PI / 2), 0.8)
    b = Circle((3 * PI / 2, 3 * PI / 2), 0.8)
    return a, b, CircleUnion((a, b))


def test_euler_characteristic_examples(g256):
    eps = 0.05
    disk = tanh_profile(g256, Circle(CENTER, 1.0), eps)
    assert euler_characteristic_2d(disk, g256, eps) == pytest.approx(1, abs=0.2)
    _, _, both = _two_disks(g256)
    assert euler_characteristic_2d(tanh_profile(g256, both, eps), g256, eps) == pytest.approx(2, abs=0.2)
    ring = tanh_profile(g256, Annulus(CENTER, 1.5, 0.7), eps)
    assert euler_characteristic_2d(ring, g256, eps) == pytest.approx(0, abs=0.2)


def test_euler_characteristic_additive(g256):
    eps = 0.05
    a, b, both = _two_disks(g256)
    parts = sum(euler_characteristic_2d(tanh_profile(g256, s, eps), g256, eps) for s in (a, b))
    assert euler_characteristic_2d(tanh_profile(g256, both, eps), g256, eps) == pytest.approx(parts, abs=0.05)


# -- contours ---------------------------------------------------------------------------------


def test_empty_contour():
    g = GridSpec.square(16)
    with pytest.raises(EmptyContour):
        extract_zero_contour(np.ones(g.shape), g)


def test_circle_contour_within_one_cell(g256):
    u = tanh_profile(g256, Circle(CENTER, 1.0), 0.05)
    c = extract_zero_contour(u, g256)
    r = np.hypot(c.points[:, 0] - PI, c.points[:, 1] - PI)
    assert np.abs(r - 1).max() <= g256.hx
    assert len(c.polylines) == 1 and c.closed == [True]


def test_linear_field_contour_is_exact():
    g = GridSpec.square(64)
    X, _ = g.coords()
    c = extract_zero_contour(X - PI, g)
    # the interior crossing; the periodic wrap adds a second one at the seam
    mid = [p for p in c.polylines if abs(p[:, 0].mean() - PI) < 1]
    assert len(mid) == 1
    assert np.abs(mid[0][:, 0] - PI).max() < 1e-12


def test_contour_points_are_interpolated_zeros():
    g = GridSpec.square(64)
    X, Y = g.coords()
    u = np.sin(X) * np.cos(2 * Y) + 0.3 * np.cos(X + Y)
    c = extract_zero_contour(u, g)
    assert np.abs(bilinear(u, g, c.points)).max() <= 1e-10


def test_contour_crossing_seam_stays_continuous():
    g = GridSpec.square(128)
    u = tanh_profile(g, Circle((0.2, 0.3), 1.0), 0.1)
    c = extract_zero_contour(u, g)
    assert len(c.polylines) == 1
    steps = np.hypot(*np.diff(c.polylines[0], axis=0).T)
    assert steps.max() < 2 * g.hx
    assert circle_radius_estimate(c, (0.2, 0.3))[1] <= g.hx


@pytest.mark.parametrize("eps_cells", [2, 3, 4])
def test_profile_then_contour_recovers_boundary(eps_cells):
    g = GridSpec.square(128)
    eps = eps_cells * g.hx
    for shape in (Circle(CENTER, 1.3), Annulus(CENTER, 2.0, 0.9)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClearanceViolation)
            c = extract_zero_contour(tanh_profile(g, shape, eps), g)
        r = np.hypot(c.points[:, 0] - PI, c.points[:, 1] - PI)
        targets = np.array([1.3] if isinstance(shape, Circle) else [2.0, 0.9])
        assert np.min(np.abs(r[:, None] - targets[None, :]), axis=1).max() <= g.hx


def test_contour_csv(tmp_path):
    g = GridSpec.square(64)
    c = extract_zero_contour(tanh_profile(g, Circle(CENTER, 1.0), 0.1), g)
    c.to_csv(tmp_path / "c.csv")
    rows = list(csv.reader((tmp_path / "c.csv").open()))
    assert rows[0] == ["polyline_id", "x", "y"]
    assert len(rows) - 1 == len(c)
    assert np.allclose(np.array([[float(x), float(y)] for _, x, y in rows[1:]]), c.points)


# -- Hausdorff ---------------------------------------------------------------------------------


def test_hausdorff_examples():
    a = circle_contour(CENTER, 1.0)
    assert hausdorff_distance(a, a) == 0
    assert hausdorff_distance(a, circle_contour(CENTER, 0.9)) == pytest.approx(0.1, abs=1e-6)
    p = Contour.from_points(np.array([[0.0, 0.0]]))
    q = Contour.from_points(np.array([[3.0, 4.0]]))
    assert hausdorff_distance(p, q) == pytest.approx(5.0)
    with pytest.raises(EmptyInput):
        hausdorff_distance(Contour(), a)


def test_hausdorff_uses_periodic_metric():
    period = (2 * PI, 2 * PI)
    p = Contour.from_points(np.array([[0.1, 1.0]]), period)
    q = Contour.from_points(np.array([[2 * PI - 0.1, 1.0]]), period)
    assert hausdorff_distance(p, q) == pytest.approx(0.2)


def test_extracted_circle_hausdorff_to_exact(g256):
    c = extract_zero_contour(tanh_profile(g256, Circle(CENTER, 1.0), 0.05), g256)
    assert hausdorff_distance(c, circle_contour(CENTER, 1.0, period=c.period)) < 1e-3


point_sets = st.lists(st.tuples(st.floats(0, 6), st.floats(0, 6)), min_size=1, max_size=8)


@settings(max_examples=40, deadline=None)
@given(a=point_sets, b=point_sets, c=point_sets)
def test_hausdorff_is_a_metric(a, b, c):
    A, B, C = (Contour.from_points(np.array(x)) for x in (a, b, c))
    ab = hausdorff_distance(A, B)
    assert ab == hausdorff_distance(B, A)
    assert ab <= hausdorff_distance(A, C) + hausdorff_distance(C, B) + 1e-12
    assert hausdorff_distance(A, A) == 0


# -- integral estimates ---------------------------------------------------------------------------


def test_perimeter_examples(g256):
    eps = 0.05
    assert perimeter_estimate(np.ones(g256.shape), g256, eps) == 0
    u = tanh_profile(g256, Circle(CENTER, 1.0), eps)
    assert perimeter_estimate(u, g256, eps) == pytest.approx(2 * PI, rel=0.05)


def test_perimeter_of_stripe_counts_both_interfaces():
    eps = 0.05
    g = GridSpec(1024, 16)
    u = tanh_profile(g, Stripe(axis=0, offset=PI, width=PI), eps)
    # a band on the torus has two straight interfaces of length Ly = 2 pi each
    assert perimeter_estimate(u, g, eps) / 2 == pytest.approx(2 * PI, rel=0.05)


@settings(max_examples=10, deadline=None)
@given(cx=st.floats(0, 2 * PI), cy=st.floats(0, 2 * PI))
def test_perimeter_translation_invariant(cx, cy):
    eps = 0.1
    g = GridSpec.square(128)
    base = perimeter_estimate(tanh_profile(g, Circle(CENTER, 1.0), eps), g, eps)
    moved = perimeter_estimate(tanh_profile(g, Circle((cx, cy), 1.0), eps), g, eps)
    assert moved == pytest.approx(base, rel=1e-6)


def test_volume_fraction_examples(g256):
    for c, v in ((1.0, 1.0), (-1.0, 0.0), (0.0, 0.5)):
        assert volume_fraction(np.full(g256.shape, c), g256) == v
    u = tanh_profile(g256, Circle(CENTER, 1.0), 0.05)
    assert volume_fraction(u, g256) == pytest.approx(PI / (4 * PI**2), rel=0.01)


def test_circle_radius_estimate_examples():
    mean, spread = circle_radius_estimate(circle_contour(CENTER, 1.0), CENTER)
    assert mean == pytest.approx(1.0, abs=1e-12) and spread < 1e-12
    th = np.linspace(0, 2 * PI, 2000, endpoint=False)
    ellipse = Contour([np.column_stack([PI + np.cos(th), PI + 0.5 * np.sin(th)])], None, [True])
    mean, spread = circle_radius_estimate(ellipse, CENTER)
    assert 0.5 < mean < 1 and spread >= 0.25
    with pytest.raises(EmptyInput):
        circle_radius_estimate(Contour(), CENTER)


def test_shapes_validate():
    with pytest.raises(ValueError):
        Circle(CENTER, -1.0)
    with pytest.raises(ValueError):
        Annulus(CENTER, 0.5, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tanh_profile(GridSpec.square(64), Circle(CENTER, 1.0), 0.1)
