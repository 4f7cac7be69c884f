"""``phasefield`` command line: run, bench, sweep, converge, eig, report.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 acceptance-rule failure (bench, sweep).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness
from .config import ExperimentConfig, format_config, parse_config, parse_overrides
from .diagnostics import principal_eigenvalue
from .errors import ConfigError, Diverged, IterationStalled, NewtonDiverged
from .grid import load_snapshot

__all__ = ["main", "build_parser", "parse_config", "EXIT_OK", "EXIT_CONFIG", "EXIT_DIVERGED", "EXIT_FAILED"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file (key = value with [sections])")
    common.add_argument("--out", help="output root directory (overrides output.dir)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable")
    common.add_argument("--jobs", type=int, default=1, help="parallel cells for sweeps")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = argparse.ArgumentParser(prog="phasefield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run one configured simulation")

    b = sub.add_parser("bench", parents=[common], help="shrinking-circle benchmark")
    b.add_argument("name", choices=["mcf-circle"])

    s = sub.add_parser("sweep", parents=[common], help="sharp-interface epsilon sweep")
    s.add_argument("--eps", default="0.1,0.05,0.025", help="comma-separated halving list")
    s.add_argument("--h-factor", type=float, default=0.25)
    s.add_argument("--tau-factor", type=float, default=0.125)

    c = sub.add_parser("converge", parents=[common], help="temporal or spatial convergence study")
    c.add_argument("--kind", choices=["time", "space"], default="time")
    c.add_argument("--taus", help="comma-separated halving step sizes (default: tau, tau/2, tau/4, tau/8)")
    c.add_argument("--sizes", default="32,64,128", help="grid sizes for --kind space")

    e = sub.add_parser("eig", parents=[common], help="principal eigenvalue of the linearized operator")
    e.add_argument("--snapshot", type=Path, help="evaluate at a saved snapshot instead of the initial field")
    e.add_argument("--tol", type=float, default=1e-8)

    r = sub.add_parser("report", parents=[common], help="show the resolved config or a run summary")
    r.add_argument("--show-config", action="store_true")
    r.add_argument("--run", type=Path, help="cell directory to summarize")
    return p


def _config(args) -> ExperimentConfig:
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["output.dir"] = args.out
    return parse_config(args.config, overrides)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *msg) -> None:
        if not self.quiet:
            print(*msg)


def cmd_run(args, cfg: ExperimentConfig, say: _Out) -> int:
    base = Path(cfg.out) / cfg.experiment
    try:
        res = harness.run_simulation(cfg)
    except Diverged as exc:
        harness.write_summary(base / "summary.json", cfg.experiment, cfg.as_dict(),
                              extra={"status": "diverged", "diverged_step": exc.step})
        print(f"diverged at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    harness.write_summary(base / "summary.json", cfg.experiment, cfg.as_dict(),
                          extra={"status": "ok", "final_step": res.state.n, "final_time": res.state.t})
    say(f"finished {res.state.n} steps at t = {res.state.t:g}; series in {res.series}")
    return EXIT_OK


def cmd_bench(args, cfg: ExperimentConfig, say: _Out) -> int:
    base = Path(cfg.out) / "bench-mcf-circle"
    grid = harness.build_grid(cfg)
    res = harness.benchmark_mcf_circle(
        cfg.scheme, cfg.epsilon, grid, cfg.tau, cfg.T, cfg.radius, (cfg.center_x, cfg.center_y), method=cfg.method
    )
    res.to_csv(base / "radius.csv")
    ok = res.max_error <= 2 * cfg.epsilon
    harness.write_summary(
        base / "summary.json", "bench-mcf-circle",
        {"epsilon": cfg.epsilon, "nx": cfg.nx, "tau": cfg.tau, "T": cfg.T, "scheme": cfg.scheme, "R0": cfg.radius},
        rules={"radius_error_within_2eps": ok},
        extra={"max_radius_error": res.max_error, "hausdorff_final": res.hausdorff, "final_time": res.final_time},
    )
    say(f"max radius error {res.max_error:.3e} (limit {2 * cfg.epsilon:g}): {'pass' if ok else 'fail'}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_sweep(args, cfg: ExperimentConfig, say: _Out) -> int:
    base = Path(cfg.out) / "sweep-epsilon"
    eps = _floats(args.eps)
    tab = harness.epsilon_sweep(cfg.scheme, eps, args.h_factor, args.tau_factor, cfg.T, cfg.radius, jobs=args.jobs)
    tab.to_csv(base / "table.csv")
    errs = tab.errors
    decreasing = all(a is not None and b is not None and b < a for a, b in zip(errs, errs[1:]))
    order = tab.fitted_order()
    rules = {"distances_strictly_decreasing": decreasing}
    if order is not None:
        rules["order_in_0.7_1.5"] = 0.7 <= order <= 1.5
    harness.write_summary(
        base / "summary.json", "sweep-epsilon",
        {"epsilon": eps, "h_factor": args.h_factor, "tau_factor": args.tau_factor, "T": cfg.T, "scheme": cfg.scheme},
        {"epsilon": order}, rules, extra={"table": tab.to_dict()},
    )
    for r in tab.rows:
        say(f"eps={r.parameter:g} hausdorff={r.error:.3e} order={'' if r.order is None else f'{r.order:.2f}'}")
    return EXIT_OK if all(rules.values()) else EXIT_FAILED


def cmd_converge(args, cfg: ExperimentConfig, say: _Out) -> int:
    if args.kind == "space":
        base = Path(cfg.out) / "converge-space"
        sizes = [int(x) for x in _floats(args.sizes)]
        tab = harness.spectral_vs_fd_study(cfg.epsilon, sizes, cfg.method, cfg.tau, cfg.T, R0=cfg.radius, jobs=args.jobs)
    else:
        base = Path(cfg.out) / "converge-time"
        taus = _floats(args.taus) if args.taus else [cfg.tau / 2**k for k in range(4)]
        grid = harness.build_grid(cfg)
        tab = harness.temporal_convergence(
            harness.build_model(cfg, grid), harness.build_scheme(cfg), harness.initial_field(cfg, grid), taus, cfg.T
        )
    tab.to_csv(base / "table.csv")
    harness.write_summary(base / "summary.json", base.name, cfg.as_dict(), {tab.parameter_name: tab.fitted_order()},
                          extra={"table": tab.to_dict()})
    for r in tab.rows:
        err = "" if r.error is None else f"{r.error:.3e}"
        order = "" if r.order is None else f"{r.order:.2f}"
        say(f"{tab.parameter_name}={r.parameter:.4g} error={err} order={order} {r.note}")
    return EXIT_OK


def cmd_eig(args, cfg: ExperimentConfig, say: _Out) -> int:
    if args.snapshot is not None:
        u, grid, meta = load_snapshot(args.snapshot)
        eps = float(meta.get("epsilon") or cfg.epsilon)
    else:
        grid = harness.build_grid(cfg)
        u, eps = harness.initial_field(cfg, grid), cfg.epsilon
    center = (cfg.center_x, cfg.center_y) if cfg.shape in ("circle", "annulus") else None
    lam = principal_eigenvalue(u, grid, eps, args.tol, center=center)
    base = Path(cfg.out) / "eig"
    harness.write_summary(base / "summary.json", "eig", {"epsilon": eps, "nx": grid.nx, "ny": grid.ny},
                          extra={"lambda_min": lam, "lambda_min_eps2": lam * eps**2})
    say(f"lambda_min = {lam!r}")
    return EXIT_OK


def cmd_report(args, cfg: ExperimentConfig, say: _Out) -> int:
    if args.run is not None:
        meta = json.loads((args.run / "meta.json").read_text())
        print(json.dumps({k: meta[k] for k in ("experiment", "status", "final_step", "final_time", "diverged_step")},
                         indent=2))
    if args.show_config or args.run is None:
        sys.stdout.write(format_config(cfg))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "converge": cmd_converge,
    "eig": cmd_eig,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    say = _Out(args.quiet)
    try:
        cfg = _config(args)
        with np.errstate(over="ignore", invalid="ignore"):
            return COMMANDS[args.command](args, cfg, say)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Diverged, NewtonDiverged) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except IterationStalled as exc:
        print(f"solver stalled: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
