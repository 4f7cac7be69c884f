"""Experiment configuration and its plain-text key/value format.

The format is line based::

    # comment
    model = allen_cahn
    epsilon = 0.05

    [grid]
    nx = 128          # becomes key grid.nx

Keys inside a ``[section]`` are prefixed with ``section.``; dotted keys may
also be written at top level. Unknown keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import ParseError, UnknownKey, ValidationError
from .grid import METHODS
from .integrators import SchemeKind
from .models import ModelKind

__all__ = ["ExperimentConfig", "KEYS", "parse_config", "parse_text", "format_config", "SHAPES"]

SHAPES = ("circle", "stripe", "circles", "annulus", "random", "constant")


def _positive(x: float) -> str | None:
    return None if x > 0 and math.isfinite(x) else "must be positive"


def _nonnegative(x: float) -> str | None:
    return None if x >= 0 and math.isfinite(x) else "must be nonnegative"


def _finite(x: float) -> str | None:
    return None if math.isfinite(x) else "must be finite"


def _at_least_one(x: int) -> str | None:
    return None if x >= 1 else "must be >= 1"


def _even_grid(x: int) -> str | None:
    return None if x >= 4 and x % 2 == 0 else "must be an even integer >= 4"


def _one_of(options: Iterable[str]) -> Callable[[str], str | None]:
    opts = tuple(options)
    return lambda x: None if x in opts else f"must be one of {', '.join(opts)}"


def _axis(x: int) -> str | None:
    return None if x in (0, 1) else "must be 0 or 1"


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int(s: str) -> int:
    v = float(s) if any(c in s for c in ".eE") else int(s)
    if float(v) != int(v):
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


_PARSERS: dict[type, Callable[[str], Any]] = {
    float: lambda s: float(s.strip()),
    int: lambda s: _parse_int(s.strip()),
    bool: _parse_bool,
    str: lambda s: s.strip(),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``defaulted`` lists the keys that were not given explicitly; it is
    reporting metadata and does not take part in equality.
    """

    model: str = "allen_cahn"
    epsilon: float = 0.05
    tau: float = 1e-4
    T: float = 0.125
    scheme: str = "etd_rk2"
    seed: int = 0
    alpha: float = 2.0
    method: str = "spectral"
    dealias: bool = False
    nonlinear: bool = True
    advection_vx: float = 0.0
    advection_vy: float = 0.0
    forcing: float = 0.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    linear_tol: float = 1e-10
    C0: float = 1.0
    C1: float = 1.0
    nx: int = 256
    ny: int = 256
    Lx: float = 2 * math.pi
    Ly: float = 2 * math.pi
    shape: str = "circle"
    radius: float = 1.0
    inner_radius: float = 0.5
    center_x: float = math.pi
    center_y: float = math.pi
    amplitude: float = 0.05
    value: float = 1.0
    width: float = math.pi
    axis: int = 0
    out: str = "runs"
    experiment: str = "run"
    snapshot_every: int = 100
    record_every: int = 1
    diag_radius: bool = False
    diag_eigenvalue: bool = False
    eigen_every: int = 100
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for key, spec in KEYS.items():
            val = getattr(self, spec.attr)
            if spec.check is not None:
                reason = spec.check(val)
                if reason:
                    raise ValidationError(key, reason)
        if self.T < 0:
            raise ValidationError("T", "must be nonnegative")

    def with_overrides(self, overrides: Mapping[str, str]) -> ExperimentConfig:
        return build_config({**self.explicit_items(), **overrides})

    def explicit_items(self) -> dict[str, str]:
        return {k: _format_value(getattr(self, s.attr)) for k, s in KEYS.items() if k not in self.defaulted}

    def as_dict(self) -> dict[str, Any]:
        return {k: getattr(self, s.attr) for k, s in KEYS.items()}

    def replace(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class _Key:
    attr: str
    type: type
    check: Callable[[Any], str | None] | None = None


KEYS: dict[str, _Key] = {
    "model": _Key("model", str, _one_of(k.value for k in ModelKind)),
    "epsilon": _Key("epsilon", float, _positive),
    "tau": _Key("tau", float, _positive),
    "T": _Key("T", float, _nonnegative),
    "scheme": _Key("scheme", str, _one_of(k.value for k in SchemeKind)),
    "seed": _Key("seed", int, _nonnegative),
    "model.alpha": _Key("alpha", float, _nonnegative),
    "model.method": _Key("method", str, _one_of(METHODS)),
    "model.dealias": _Key("dealias", bool),
    "model.nonlinear": _Key("nonlinear", bool),
    "model.advection_vx": _Key("advection_vx", float, _finite),
    "model.advection_vy": _Key("advection_vy", float, _finite),
    "model.forcing": _Key("forcing", float, _finite),
    "scheme.newton_tol": _Key("newton_tol", float, _positive),
    "scheme.newton_max_iter": _Key("newton_max_iter", int, _at_least_one),
    "scheme.linear_tol": _Key("linear_tol", float, _positive),
    "scheme.C0": _Key("C0", float, _positive),
    "scheme.C1": _Key("C1", float, _positive),
    "grid.nx": _Key("nx", int, _even_grid),
    "grid.ny": _Key("ny", int, _even_grid),
    "grid.Lx": _Key("Lx", float, _positive),
    "grid.Ly": _Key("Ly", float, _positive),
    "initial.shape": _Key("shape", str, _one_of(SHAPES)),
    "initial.radius": _Key("radius", float, _positive),
    "initial.inner_radius": _Key("inner_radius", float, _positive),
    "initial.center_x": _Key("center_x", float, _finite),
    "initial.center_y": _Key("center_y", float, _finite),
    "initial.amplitude": _Key("amplitude", float, _nonnegative),
    "initial.value": _Key("value", float, _finite),
    "initial.width": _Key("width", float, _positive),
    "initial.axis": _Key("axis", int, _axis),
    "output.dir": _Key("out", str),
    "output.experiment": _Key("experiment", str, lambda s: None if s and "/" not in s else "must be a plain name"),
    "output.snapshot_every": _Key("snapshot_every", int, _at_least_one),
    "output.record_every": _Key("record_every", int, _at_least_one),
    "diagnostics.radius": _Key("diag_radius", bool),
    "diagnostics.eigenvalue": _Key("diag_eigenvalue", bool),
    "diagnostics.eigen_every": _Key("eigen_every", int, _at_least_one),
}


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def build_config(items: Mapping[str, str]) -> ExperimentConfig:
    """Typed, validated config from raw string values keyed by dotted names."""
    values: dict[str, Any] = {}
    for key, raw in items.items():
        spec = KEYS.get(key)
        if spec is None:
            raise UnknownKey(key)
        try:
            values[spec.attr] = _PARSERS[spec.type](raw) if isinstance(raw, str) else spec.type(raw)
        except (TypeError, ValueError) as exc:
            raise ValidationError(key, f"cannot parse {raw!r} as {spec.type.__name__}") from exc
    defaulted = tuple(k for k in KEYS if k not in items)
    return ExperimentConfig(**values, defaulted=defaulted)


def parse_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings from the config text format."""
    out: dict[str, str] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ParseError(lineno, f"malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(lineno, "empty key")
        full = f"{section}.{key}" if section else key
        if full in out:
            raise ParseError(lineno, f"duplicate key {full!r}")
        out[full] = value
    return out


def parse_overrides(pairs: Iterable[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ParseError(0, f"override {p!r} is not key=value")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_config(path: str | Path | None, overrides: Mapping[str, str] | Iterable[str] = ()) -> ExperimentConfig:
    """Read ``path`` (``None`` for all defaults), apply overrides, validate.

    Raises ``FileNotFoundError``, :class:`ParseError`, :class:`UnknownKey` or
    :class:`ValidationError`.
    """
    items = parse_text(Path(path).read_text()) if path is not None else {}
    if not isinstance(overrides, Mapping):
        overrides = parse_overrides(overrides)
    items.update(overrides)
    return build_config(items)


def format_config(cfg: ExperimentConfig) -> str:
    """Full config text (every key) that :func:`parse_config` reads back identically."""
    lines: list[str] = []
    section = None
    for key, spec in KEYS.items():
        sec, _, name = key.rpartition(".")
        if sec != section:
            if lines:
                lines.append("")
            if sec:
                lines.append(f"[{sec}]")
            section = sec
        lines.append(f"{name} = {_format_value(getattr(cfg, spec.attr))}")
    return "\n".join(lines) + "\n"
