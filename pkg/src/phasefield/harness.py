"""Reproducible experiments: single runs, the shrinking-circle benchmark and
convergence studies in time, space and the interface width."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

from . import geometry
from .config import ExperimentConfig
from .diagnostics import SeriesWriter, record_step
from .errors import ConfigError, Diverged, NewtonDiverged
from .grid import GridSpec, save_snapshot
from .integrators import SchemeKind, SchemeSpec, SimState, init_aux, step
from .models import Model, ModelKind, ModelSpec

__all__ = [
    "build_grid",
    "build_model",
    "build_scheme",
    "initial_field",
    "RunResult",
    "run_simulation",
    "evolve",
    "BenchmarkResult",
    "benchmark_mcf_circle",
    "ConvergenceRow",
    "ConvergenceTable",
    "temporal_convergence",
    "epsilon_sweep",
    "spectral_vs_fd_study",
    "resolution_for",
    "error_ratios",
    "write_summary",
    "run_cells",
]


# -- config -> objects ------------------------------------------------------------------


def build_grid(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec(cfg.nx, cfg.ny, cfg.Lx, cfg.Ly)


def build_model(cfg: ExperimentConfig, grid: GridSpec | None = None) -> Model:
    grid = grid or build_grid(cfg)
    kind = ModelKind(cfg.model)
    extra: dict[str, Any] = {}
    if kind is ModelKind.CONVECTIVE_ALLEN_CAHN:
        extra["advection"] = (np.full(grid.shape, cfg.advection_vx), np.full(grid.shape, cfg.advection_vy))
        if cfg.forcing:
            extra["forcing"] = np.full(grid.shape, cfg.forcing)
    spec = ModelSpec(
        kind, cfg.epsilon, cfg.alpha, cfg.method, nonlinear=cfg.nonlinear, dealias=cfg.dealias, **extra
    )
    return Model(spec, grid)


def build_scheme(cfg: ExperimentConfig) -> SchemeSpec:
    return SchemeSpec(
        SchemeKind(cfg.scheme),
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
        linear_tol=cfg.linear_tol,
        C0=cfg.C0,
        C1=cfg.C1,
    )


def initial_shape(cfg: ExperimentConfig) -> geometry.Shape | None:
    c = (cfg.center_x, cfg.center_y)
    if cfg.shape == "circle":
        return geometry.Circle(c, cfg.radius)
    if cfg.shape == "annulus":
        return geometry.Annulus(c, cfg.radius, cfg.inner_radius)
    if cfg.shape == "stripe":
        return geometry.Stripe(cfg.axis, cfg.center_x if cfg.axis == 0 else cfg.center_y, cfg.width)
    if cfg.shape == "circles":
        # two equal disks on the diagonal through the centre
        off = 0.25 * min(cfg.Lx, cfg.Ly)
        return geometry.CircleUnion(
            (geometry.Circle((c[0] - off, c[1] - off), cfg.radius), geometry.Circle((c[0] + off, c[1] + off), cfg.radius))
        )
    return None


def initial_field(cfg: ExperimentConfig, grid: GridSpec | None = None) -> NDArray:
    """``u0`` for the configured initial condition (seeded when random)."""
    grid = grid or build_grid(cfg)
    if cfg.shape == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.uniform(-cfg.amplitude, cfg.amplitude, grid.shape)
    if cfg.shape == "constant":
        return np.full(grid.shape, cfg.value)
    return geometry.tanh_profile(grid, initial_shape(cfg), cfg.epsilon)


def step_count(T: float, tau: float) -> int:
    """Number of steps reaching ``T``; a ratio within 1e-9 of an integer is rounded."""
    r = T / tau
    n = round(r)
    return int(n) if abs(r - n) <= 1e-9 * max(1.0, r) else int(math.ceil(r))


def evolve(
    model: Model,
    scheme: SchemeSpec,
    u0: NDArray,
    tau: float,
    T: float,
    callback: Callable[[SimState], None] | None = None,
    every: int = 1,
) -> SimState:
    """Integrate from ``u0`` to time ``T``; the last step is shortened if needed.

    ``callback`` sees the initial state, every ``every``-th state and the final one.
    """
    state = init_aux(scheme, u0, model)
    n = step_count(T, tau)
    if callback is not None:
        callback(state)
    for k in range(1, n + 1):
        h = tau if k < n else T - (n - 1) * tau
        if h <= 0:
            break
        state = step(model, scheme, state, h)
        if k == n:
            state.t = T
        if callback is not None and (k % every == 0 or k == n):
            callback(state)
    return state


# -- single run -----------------------------------------------------------------------------


@dataclass
class RunResult:
    state: SimState
    series: Path
    snapshots: list[Path]
    meta: Path
    status: str = "ok"
    diverged_step: int | None = None


def cell_dir(out: str | Path, experiment: str, cell: str) -> Path:
    return Path(out) / experiment / cell


def run_simulation(cfg: ExperimentConfig, out: str | Path | None = None, cell: str = "cell-0000") -> RunResult:
    """Run one configured simulation, writing series, snapshots and metadata.

    Files go to ``<out>/<experiment>/<cell>/``. On divergence the series written
    so far and ``meta.json`` (with ``status = "diverged"`` and the step index)
    are kept and :class:`Diverged` is re-raised.
    """
    grid = build_grid(cfg)
    model = build_model(cfg, grid)
    scheme = build_scheme(cfg)
    d = cell_dir(out if out is not None else cfg.out, cfg.experiment, cell)
    d.mkdir(parents=True, exist_ok=True)
    for old in d.glob("step_*"):
        old.unlink()
    center = (cfg.center_x, cfg.center_y) if cfg.diag_radius or cfg.diag_eigenvalue else None
    u0 = initial_field(cfg, grid)
    snaps: list[Path] = []
    meta_path = d / "meta.json"
    meta: dict[str, Any] = {
        "experiment": cfg.experiment,
        "cell": cell,
        "config": cfg.as_dict(),
        "defaulted_keys": list(cfg.defaulted),
    }

    def snapshot(state: SimState) -> None:
        path, _ = save_snapshot(
            d / f"step_{state.n:08d}", state.u, grid,
            time=state.t, step=state.n, epsilon=cfg.epsilon, model=cfg.model, scheme=cfg.scheme,
        )
        snaps.append(path)

    writer = SeriesWriter(d / "series.csv")
    state = init_aux(scheme, u0, model)
    nsteps = step_count(cfg.T, cfg.tau)
    status, bad_step = "ok", None
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            writer.write(_record(state, model, scheme, center, cfg))
        snapshot(state)
        for k in range(1, nsteps + 1):
            h = cfg.tau if k < nsteps else cfg.T - (nsteps - 1) * cfg.tau
            try:
                state = step(model, scheme, state, h)
            except NewtonDiverged as exc:
                raise Diverged(state.n + 1, str(exc)) from exc
            if k == nsteps:
                state.t = cfg.T
            last = k == nsteps
            if k % cfg.record_every == 0 or last:
                writer.write(_record(state, model, scheme, center, cfg))
            if k % cfg.snapshot_every == 0 or last:
                snapshot(state)
    except Diverged as exc:
        status, bad_step = "diverged", exc.step
        raise
    finally:
        writer.close()
        meta.update(status=status, diverged_step=bad_step, final_step=state.n, final_time=state.t,
                    snapshots=[p.name for p in snaps])
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return RunResult(state, d / "series.csv", snaps, meta_path, status, bad_step)


def _record(state: SimState, model: Model, scheme: SchemeSpec, center, cfg: ExperimentConfig):
    eig = cfg.diag_eigenvalue and state.n % cfg.eigen_every == 0
    try:
        return record_step(
            state, model, scheme,
            radius_center=center if cfg.diag_radius else None,
            eigenvalue=eig,
        )
    except ValueError as exc:  # non-finite monitor value
        raise Diverged(state.n, str(exc)) from exc


# -- convergence tables -------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    parameter: float
    error: float | None
    order: float | None = None
    note: str = ""

    @property
    def usable(self) -> bool:
        return self.error is not None and not self.note


@dataclass
class ConvergenceTable:
    """Errors against a refinement parameter with observed orders.

    ``order`` of row ``i`` compares it with the previous usable row:
    ``log(e_prev / e_i) / log(p_prev / p_i)``. Rows carrying a ``note``
    (diverged, under-resolved, at the noise floor) are excluded.
    """

    parameter_name: str
    metric: str
    rows: list[ConvergenceRow] = field(default_factory=list)

    @classmethod
    def build(cls, name: str, metric: str, params: Sequence[float], errors: Sequence[float | None],
              notes: Sequence[str] | None = None) -> ConvergenceTable:
        notes = list(notes) if notes is not None else [""] * len(params)
        rows: list[ConvergenceRow] = []
        prev: tuple[float, float] | None = None
        for p, e, note in zip(params, errors, notes):
            if e is None and not note:
                note = "failed"
            order = None
            if not note and prev is not None and e > 0 and prev[1] > 0:
                order = math.log(prev[1] / e) / math.log(prev[0] / p)
            rows.append(ConvergenceRow(float(p), None if e is None else float(e), order, note))
            if not note:
                prev = (p, e)
        return cls(name, metric, rows)

    @property
    def orders(self) -> list[float]:
        return [r.order for r in self.rows if r.order is not None]

    @property
    def errors(self) -> list[float | None]:
        return [r.error for r in self.rows]

    def fitted_order(self) -> float | None:
        """Least-squares slope of ``log e`` against ``log p`` over usable rows."""
        pts = [(math.log(r.parameter), math.log(r.error)) for r in self.rows if r.usable and r.error > 0]
        if len(pts) < 2:
            return None
        x, y = np.array(pts).T
        return float(np.polyfit(x, y, 1)[0])

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.parameter_name, self.metric, "order", "note"])
            for r in self.rows:
                w.writerow([repr(r.parameter), "" if r.error is None else repr(r.error),
                            "" if r.order is None else repr(r.order), r.note])
        return path

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter_name,
            "metric": self.metric,
            "rows": [r.__dict__ for r in self.rows],
            "fitted_order": self.fitted_order(),
        }


def run_cells(fn: Callable, args: Sequence[tuple], jobs: int = 1) -> list:
    """Evaluate ``fn(*a)`` for every cell; results come back in cell order."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def _l2(u: NDArray, grid: GridSpec) -> float:
    return float(math.sqrt(np.sum(u * u) * grid.cell_area))


# -- circle benchmark ---------------------------------------------------------------------------


@dataclass
class BenchmarkResult:
    times: NDArray
    radii: NDArray
    exact: NDArray
    max_error: float
    hausdorff: float
    final_time: float
    epsilon: float
    stopped_at_guard: bool = False

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "radius", "exact_radius", "error"])
            for t, r, e in zip(self.times, self.radii, self.exact):
                w.writerow([repr(float(t)), repr(float(r)), repr(float(e)), repr(float(abs(r - e)))])
        return path


def _check_resolution(grid: GridSpec, eps: float) -> None:
    if max(grid.hx, grid.hy) > eps / 2 * (1 + 1e-12):
        raise ConfigError(f"grid spacing {max(grid.hx, grid.hy):.4g} exceeds eps/2 = {eps / 2:.4g}")


def benchmark_mcf_circle(
    scheme: SchemeSpec | str = "etd_rk2",
    eps: float = 0.05,
    grid: GridSpec | None = None,
    tau: float = 1e-4,
    T: float = 0.125,
    R0: float = 1.0,
    center: tuple[float, float] | None = None,
    samples: int = 50,
    method: str = "spectral",
) -> BenchmarkResult:
    """Allen-Cahn from a tanh disk against the curve-shortening law ``R(t)^2 = R0^2 - 2t``.

    The run is cut at ``0.8 * R0^2 / 2`` (extinction guard). ``max_error`` is
    the largest ``|R_num - R_exact|`` over about ``samples`` equally spaced
    times, with ``R_num`` the mean contour distance to the centre;
    ``hausdorff`` compares the final contour with the exact circle.
    """
    if isinstance(scheme, str):
        scheme = SchemeSpec(SchemeKind(scheme))
    grid = grid or GridSpec.square(256)
    center = center or (grid.Lx / 2, grid.Ly / 2)
    _check_resolution(grid, eps)
    shape = geometry.Circle(center, R0)
    if not geometry._clearance_ok(grid, shape, eps):
        raise ConfigError("circle does not fit the cell with 8*eps clearance")
    guard = 0.8 * R0**2 / 2
    T_run = min(T, guard)
    model = Model(ModelSpec(ModelKind.ALLEN_CAHN, eps, method=method), grid)
    u0 = geometry.tanh_profile(grid, shape, eps)
    every = max(1, step_count(T_run, tau) // samples)
    ts, rs = [], []

    def cb(state: SimState) -> None:
        r, _ = geometry.circle_radius_estimate(geometry.extract_zero_contour(state.u, grid), center)
        ts.append(state.t)
        rs.append(r)

    final = evolve(model, scheme, u0, tau, T_run, cb, every)
    times = np.array(ts)
    radii = np.array(rs)
    exact = np.sqrt(R0**2 - 2 * times)
    contour = geometry.extract_zero_contour(final.u, grid)
    ref = geometry.circle_contour(center, float(exact[-1]), 4096, (grid.Lx, grid.Ly))
    return BenchmarkResult(
        times, radii, exact, float(np.max(np.abs(radii - exact))),
        geometry.hausdorff_distance(contour, ref), float(times[-1]), eps, T > guard,
    )


# -- temporal self-convergence ----------------------------------------------------------------------


def _halving(values: Sequence[float], what: str, min_len: int = 1) -> None:
    if len(values) < min_len:
        raise ConfigError(f"{what} needs at least {min_len} values")
    for a, b in zip(values, values[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise ConfigError(f"{what} must halve at every step, got {a!r} -> {b!r}")


def temporal_convergence(
    model: Model,
    scheme: SchemeSpec | str,
    u0: NDArray,
    taus: Sequence[float],
    T: float,
    reference_factor: int = 16,
    noise_floor: float = 1e-12,
) -> ConvergenceTable:
    """Self-convergence in ``tau``: L2 errors at ``T`` against a run with
    ``min(taus) / reference_factor``.

    Rows whose relative error is below ``noise_floor`` are marked
    ``"noise floor"`` (order undefined); diverged rows are marked ``"diverged"``.
    """
    if isinstance(scheme, str):
        scheme = SchemeSpec(SchemeKind(scheme))
    taus = [float(t) for t in taus]
    _halving(taus, "tau list", 4)
    ref = evolve(model, scheme, u0, taus[-1] / reference_factor, T).u
    scale = _l2(ref, model.grid)
    errs: list[float | None] = []
    notes: list[str] = []
    for tau in taus:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                u = evolve(model, scheme, u0, tau, T).u
        except (Diverged, NewtonDiverged):
            errs.append(None)
            notes.append("diverged")
            continue
        e = _l2(u - ref, model.grid)
        errs.append(e)
        notes.append("noise floor" if e <= noise_floor * max(scale, 1e-300) else "")
    return ConvergenceTable.build("tau", "l2_error", taus, errs, notes)


# -- sharp-interface sweep ---------------------------------------------------------------------------


def resolution_for(eps: float, h_factor: float = 0.25, length: float = 2 * math.pi) -> int:
    """Smallest even FFT-friendly point count with ``h <= h_factor * eps``."""
    n = int(math.ceil(length / (h_factor * eps) - 1e-9))
    n = sfft.next_fast_len(n, real=True)
    while n % 2:
        n = sfft.next_fast_len(n + 1, real=True)
    return n


def _sweep_cell(eps: float, scheme: str, h_factor: float, tau_factor: float, T: float, R0: float) -> tuple[float, float]:
    n = resolution_for(eps, h_factor)
    res = benchmark_mcf_circle(scheme, eps, GridSpec.square(n), tau_factor * eps**2, T, R0)
    return res.hausdorff, res.max_error


def epsilon_sweep(
    scheme: str = "etd_rk2",
    eps_list: Sequence[float] = (0.1, 0.05, 0.025),
    h_factor: float = 0.25,
    tau_factor: float = 0.125,
    T: float = 0.125,
    R0: float = 1.0,
    jobs: int = 1,
) -> ConvergenceTable:
    """Hausdorff distance of the final contour to the exact circle for halving ``eps``,
    with ``h = h_factor * eps`` and ``tau = tau_factor * eps^2``."""
    eps_list = [float(e) for e in eps_list]
    _halving(eps_list, "epsilon list", 1)
    if h_factor > 0.5:
        raise ConfigError("h_factor above 1/2 under-resolves the interface")
    results = run_cells(_sweep_cell, [(e, scheme, h_factor, tau_factor, T, R0) for e in eps_list], jobs)
    return ConvergenceTable.build("epsilon", "hausdorff", eps_list, [r[0] for r in results])


# -- spectral versus finite differences -------------------------------------------------------------


def _restrict(u_fine: NDArray, n: int) -> NDArray:
    s = u_fine.shape[0] // n
    return u_fine[::s, ::s]


def _space_cell(eps: float, n: int, method: str, tau: float, T: float, R0: float) -> NDArray:
    grid = GridSpec.square(n)
    model = Model(ModelSpec(ModelKind.ALLEN_CAHN, eps, method=method), grid)
    u0 = geometry.tanh_profile(grid, geometry.Circle((math.pi, math.pi), R0), eps)
    return evolve(model, SchemeSpec(SchemeKind.ETD_RK2), u0, tau, T).u


def spectral_vs_fd_study(
    eps: float = 0.1,
    sizes: Sequence[int] = (32, 64, 128),
    method: str = "spectral",
    tau: float = 1e-4,
    T: float = 0.01,
    reference_n: int = 512,
    R0: float = 1.0,
    jobs: int = 1,
    reference: NDArray | None = None,
) -> ConvergenceTable:
    """Max-norm errors at ``T`` on each grid against a fine spectral reference,
    compared at the coarse sample points. Grids with ``N < 2/eps`` are marked
    ``"under-resolved"``. The parameter column is the spacing ``h``."""
    sizes = [int(n) for n in sizes]
    for n in sizes:
        if reference_n % n:
            raise ConfigError(f"reference size {reference_n} is not a multiple of {n}")
    if reference is None:
        reference = _space_cell(eps, reference_n, "spectral", tau, T, R0)
    sols = run_cells(_space_cell, [(eps, n, method, tau, T, R0) for n in sizes], jobs)
    errs = [float(np.max(np.abs(u - _restrict(reference, n)))) for u, n in zip(sols, sizes)]
    notes = ["under-resolved" if n < 2 / eps else "" for n in sizes]
    hs = [2 * math.pi / n for n in sizes]
    return ConvergenceTable.build("h", "max_error", hs, errs, notes)


def error_ratios(table: ConvergenceTable) -> list[float]:
    """``e_i / e_{i+1}`` over consecutive usable rows."""
    es = [r.error for r in table.rows if r.usable]
    return [a / b for a, b in zip(es, es[1:])]


# -- reports ------------------------------------------------------------------------------------


def write_summary(
    path: str | Path,
    experiment: str,
    parameters: dict,
    fitted_orders: dict | None = None,
    rules: dict[str, bool] | None = None,
    extra: dict | None = None,
) -> Path:
    """JSON summary with keys experiment, parameters, fitted_orders, rules (pass/fail)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "experiment": experiment,
        "parameters": parameters,
        "fitted_orders": fitted_orders or {},
        "rules": {k: ("pass" if v else "fail") for k, v in (rules or {}).items()},
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
