"""Time-stepping schemes for phase-field gradient flows.

Every scheme advances a :class:`SimState` by one step ``tau`` for any
:class:`~phasefield.models.Model`:

=======================  =====  ==========================================
scheme                   order  per-step work
=======================  =====  ==========================================
forward_euler            1      explicit
backward_euler           1      Newton-Krylov, fully implicit
crank_nicolson_mid       2      Newton-Krylov, implicit midpoint
cn_discrete_variation    2      Newton-Krylov, exact discrete energy law
convex_splitting         1      Newton-Krylov, convex part implicit
stabilized_imex          1      one diagonal Fourier solve
etd_rk1                  1      exponential, diagonal
etd_rk2                  2      exponential, two stages
ieq                      1      PCG on a variable-coefficient SPD system
sav                      1      two diagonal solves plus scalar algebra
=======================  =====  ==========================================

Implicit schemes are written as ``u1 - u0 + tau * M mu1 = tau * explicit(u0)``
with ``mu1 = kappa (-Lap)(theta u1 + (1-theta) u0) + beta s(u0, u1)``. The
Newton linear systems are solved by GMRES preconditioned with the inverse of
the constant-coefficient operator ``I - tau A``, which is diagonal in Fourier
space. When a full Newton step fails to reduce the residual (large steps in
the non-convex regime) the proximal objective is minimized from ``u0`` by a
trust-region Newton-Krylov method and the result is polished by Newton.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import minimize
from numpy.typing import NDArray

from . import potential
from .errors import Diverged, LinearSolveDiverged, NewtonDiverged
from .models import Model

__all__ = [
    "SchemeKind",
    "SchemeSpec",
    "SimState",
    "StepReport",
    "init_aux",
    "step",
    "step_forward_euler",
    "step_backward_euler",
    "step_cn_mid",
    "step_cn_discrete_variation",
    "step_convex_splitting",
    "step_stabilized_imex",
    "step_etd_rk1",
    "step_etd_rk2",
    "step_ieq",
    "step_sav",
    "phi1",
    "phi2",
    "modified_energy",
]


class SchemeKind(str, enum.Enum):
    FORWARD_EULER = "forward_euler"
    BACKWARD_EULER = "backward_euler"
    CN_MID = "crank_nicolson_mid"
    CN_DISCRETE_VARIATION = "cn_discrete_variation"
    CONVEX_SPLITTING = "convex_splitting"
    STABILIZED_IMEX = "stabilized_imex"
    ETD_RK1 = "etd_rk1"
    ETD_RK2 = "etd_rk2"
    IEQ = "ieq"
    SAV = "sav"

    @property
    def order(self) -> int:
        second = {SchemeKind.CN_MID, SchemeKind.CN_DISCRETE_VARIATION, SchemeKind.ETD_RK2}
        return 2 if self in second else 1


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind = SchemeKind.ETD_RK2
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    linear_tol: float = 1e-10
    C0: float = 1.0
    C1: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if not (self.newton_tol > 0 and self.linear_tol > 0 and self.newton_max_iter > 0):
            raise ValueError("solver tolerances and iteration caps must be positive")
        if self.C0 <= 0 or self.C1 <= 0:
            raise ValueError("auxiliary shifts C0, C1 must be positive")


@dataclass
class StepReport:
    newton_iters: int | None = None
    residual: float | None = None
    linear_iters: int | None = None
    non_convex_regime: bool = False


@dataclass
class SimState:
    u: NDArray
    t: float = 0.0
    n: int = 0
    q: NDArray | None = None
    r: float | None = None
    report: StepReport = field(default_factory=StepReport, compare=False)


def init_aux(scheme: SchemeSpec, u: NDArray, model: Model, t: float = 0.0) -> SimState:
    """Initial state with the auxiliary variable the scheme needs."""
    u = np.array(u, dtype=np.float64)
    model.grid.check(u)
    if scheme.kind is SchemeKind.IEQ:
        return SimState(u, t, 0, q=np.sqrt(potential.F(u) + scheme.C0))
    if scheme.kind is SchemeKind.SAV:
        return SimState(u, t, 0, r=math.sqrt(_E1(u, model) + scheme.C1))
    return SimState(u, t, 0)


def modified_energy(model: Model, state: SimState) -> float | None:
    """The auxiliary-variable energy a state carries (IEQ: q, SAV: r), else None."""
    if state.q is not None:
        return potential.ieq_energy(state.u, state.q, model.grid, model.epsilon, model.is_cahn_hilliard)
    if state.r is not None:
        return potential.sav_energy(state.u, state.r, model.grid, model.epsilon, model.is_cahn_hilliard)
    return None


def _E1(u: NDArray, model: Model) -> float:
    if not model.spec.nonlinear:
        return 0.0
    return float(np.sum(potential.F(u)) * model.grid.cell_area)


def _finish(state: SimState, u: NDArray, tau: float, report: StepReport, **aux) -> SimState:
    if not np.all(np.isfinite(u)):
        raise Diverged(state.n + 1)
    return SimState(u, state.t + tau, state.n + 1, aux.get("q"), aux.get("r"), report)


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError("time step must be positive")


# -- explicit -------------------------------------------------------------------


def step_forward_euler(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    _check_tau(tau)
    with np.errstate(over="ignore", invalid="ignore"):
        u = state.u + tau * model.tendency(state.u)
    return _finish(state, u, tau, StepReport())


def step_stabilized_imex(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """``(I - tau A) u1 = u0 + tau N(u0)``, a single diagonal solve."""
    _check_tau(tau)
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = model.fft(state.u + tau * model.nonlinear_remainder(state.u))
        u = model.ifft(rhs / (1.0 - tau * model.linear_symbol))
    return _finish(state, u, tau, StepReport())


# -- exponential ------------------------------------------------------------------

_TAYLOR_CUTOFF = 1e-4


def phi1(z: NDArray) -> NDArray:
    """``(e^z - 1) / z`` with a Taylor branch near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _TAYLOR_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = np.expm1(zs) / zs
    series = 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120 + z**5 / 720
    return np.where(small, series, direct)


def phi2(z: NDArray) -> NDArray:
    """``(e^z - 1 - z) / z^2`` with a Taylor branch near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _TAYLOR_CUTOFF
    zs = np.where(small, 1.0, z)
    direct = (np.expm1(zs) - zs) / zs**2
    series = 0.5 + z / 6 + z**2 / 24 + z**3 / 120 + z**4 / 720 + z**5 / 5040
    return np.where(small, series, direct)


def _etd_coefficients(model: Model, tau: float) -> tuple[NDArray, NDArray, NDArray]:
    cache = model.__dict__.setdefault("_etd_cache", {})
    if tau not in cache:
        if len(cache) >= 4:
            cache.clear()
        z = tau * model.linear_symbol
        cache[tau] = (np.exp(z), tau * phi1(z), tau * phi2(z))
    return cache[tau]


def step_etd_rk1(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    _check_tau(tau)
    E, p1, _ = _etd_coefficients(model, float(tau))
    with np.errstate(over="ignore", invalid="ignore"):
        uh = E * model.fft(state.u) + p1 * model.fft(model.nonlinear_remainder(state.u))
        u = model.ifft(uh)
    return _finish(state, u, tau, StepReport())


def step_etd_rk2(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Two-stage exponential Runge-Kutta (ETD-RK1 predictor, phi2 corrector)."""
    _check_tau(tau)
    E, p1, p2 = _etd_coefficients(model, float(tau))
    with np.errstate(over="ignore", invalid="ignore"):
        n0 = model.fft(model.nonlinear_remainder(state.u))
        pred = E * model.fft(state.u) + p1 * n0
        n1 = model.fft(model.nonlinear_remainder(model.ifft(pred)))
        u = model.ifft(pred + p2 * (n1 - n0))
    return _finish(state, u, tau, StepReport())


# -- Newton-Krylov implicit schemes -------------------------------------------------

# Each implicit scheme is described by pointwise functions of (u0, u1): the
# nonlinear term s, its derivative ds/du1 and an antiderivative S in u1, plus
# the weight theta of u1 inside the Laplacian term. The residual is then the
# gradient of the proximal objective
#     Phi(u) = 1/2 |u - u0|^2_{M^-1} + tau [theta kappa/2 (-Lap u, u) + (r0, u) + beta sum S(u0, u)]
# which the trust-region fallback minimizes.
_Pointwise = Callable[[NDArray, NDArray], NDArray]

# inexact Newton: linear solves only need to track the current nonlinear residual
_FORCING = 1e-2

def _implicit_step(
    model: Model,
    state: SimState,
    tau: float,
    scheme: SchemeSpec,
    theta: float,
    s: _Pointwise,
    ds: _Pointwise,
    S: _Pointwise,
    convex: bool,
) -> SimState:
    _check_tau(tau)
    spec = model.spec
    shape = model.grid.shape
    n = shape[0] * shape[1]
    u0 = state.u
    kappa, beta = spec.kappa, spec.beta
    ch = model.is_cahn_hilliard
    lam = model.lam
    mob = model.mobility
    nonlinear = spec.nonlinear
    # linear part of mu fixed by u0 (old Laplacian share) and explicit transport
    explicit = model.explicit_terms(u0)
    lap_old = (1.0 - theta) * kappa * model.apply(lam, u0) if theta < 1 else 0.0
    lam_inv = np.zeros_like(lam)
    if ch:
        np.divide(1.0, lam, out=lam_inv, where=lam > 0)

    def outer(w: NDArray) -> NDArray:
        return model.apply(mob, w) if ch else w

    def residual(u: NDArray) -> NDArray:
        mu = theta * kappa * model.apply(lam, u) + lap_old
        if nonlinear:
            mu = mu + beta * s(u0, u)
        return u - u0 + tau * outer(mu) - tau * explicit

    stiff = tau * mob * theta * kappa * lam
    tau_mob = tau * mob

    def newton_direction(coef: NDArray, R: NDArray, rn: float) -> tuple[NDArray, int]:
        c_bar = max(float(np.mean(coef)), 0.0)
        pre = 1.0 / (1.0 + stiff + tau_mob * c_bar)

        def jvp(v: NDArray) -> NDArray:
            v = v.reshape(shape)
            if ch:
                return (v + model.ifft(stiff * model.fft(v) + tau_mob * model.fft(coef * v))).ravel()
            return (v + model.apply(stiff, v) + tau * coef * v).ravel()

        def prec(v: NDArray) -> NDArray:
            return model.apply(pre, v.reshape(shape)).ravel()

        counter = _Counter()
        J = spla.LinearOperator((n, n), matvec=jvp, dtype=np.float64)
        M = spla.LinearOperator((n, n), matvec=prec, dtype=np.float64)
        delta, _ = spla.gmres(
            J, -R.ravel(), M=M, rtol=max(scheme.linear_tol, min(_FORCING, rn)), atol=0.01 * scheme.newton_tol,
            restart=40, maxiter=20, callback=counter, callback_type="pr_norm",
        )
        return delta.reshape(shape), counter.count

    def newton(u: NDArray, iters: int, lin_iters: int) -> tuple[NDArray, float, int, int]:
        """Plain Newton while every full step shrinks the residual max-norm."""
        R = residual(u)
        rn = float(np.max(np.abs(R)))
        cap = iters + scheme.newton_max_iter
        while rn > scheme.newton_tol:
            if iters >= cap or not math.isfinite(rn):
                raise NewtonDiverged(iters, rn)
            coef = beta * ds(u0, u) if nonlinear else np.zeros(shape)
            delta, li = newton_direction(coef, R, rn)
            lin_iters += li
            trial = u + delta
            R_trial = residual(trial)
            rn_trial = float(np.max(np.abs(R_trial)))
            iters += 1
            if not rn_trial < rn:
                raise _NoProgress(iters, rn)
            u, R, rn = trial, R_trial, rn_trial
        return u, rn, iters, lin_iters

    non_convex = False
    if not convex:
        # proximal objective loses convexity past these step sizes (f' >= -1)
        limit = 4 * spec.epsilon**3 if ch else spec.epsilon**2
        non_convex = nonlinear and theta * tau > limit

    try:
        u, rn, iters, lin_iters = newton(u0.copy(), 0, 0)
    except _NoProgress as stuck:
        if not nonlinear:
            raise NewtonDiverged(stuck.iters, stuck.residual) from None
        u, iters, lin_iters = _minimize_proximal(
            model, u0, tau, theta, s, ds, S, lap_old, explicit, lam_inv, scheme, stuck.iters
        )
        try:
            u, rn, iters, lin_iters = newton(u, iters, lin_iters)
        except _NoProgress as again:
            raise NewtonDiverged(again.iters, again.residual) from None
    report = StepReport(newton_iters=iters, residual=rn, linear_iters=lin_iters, non_convex_regime=non_convex)
    return _finish(state, u, tau, report)


class _NoProgress(Exception):
    def __init__(self, iters: int, residual: float):
        self.iters = iters
        self.residual = residual


def _minimize_proximal(
    model: Model,
    u0: NDArray,
    tau: float,
    theta: float,
    s: _Pointwise,
    ds: _Pointwise,
    S: _Pointwise,
    lap_old: NDArray | float,
    explicit: NDArray | float,
    lam_inv: NDArray,
    scheme: SchemeSpec,
    iters: int,
) -> tuple[NDArray, int, int]:
    """Descend the proximal objective Phi from u0 by a trust-region Newton-Krylov method.

    Works in preconditioned coordinates ``u = u0 + P^(1/2) y`` with ``P`` the
    inverse of the constant-coefficient Hessian, diagonal in Fourier space;
    for Cahn-Hilliard ``P`` vanishes on the mean so mass is untouched.
    """
    spec = model.spec
    shape = model.grid.shape
    kappa, beta = spec.kappa, spec.beta
    lam = model.lam
    ch = model.is_cahn_hilliard
    metric = lam_inv if ch else np.ones_like(lam)
    c_bar = max(float(np.mean(beta * ds(u0, u0))), 0.0)
    hess_sym = metric + tau * (theta * kappa * lam + c_bar)
    root_p = np.zeros_like(lam)
    ok = (lam > 0) if ch else np.ones(lam.shape, dtype=bool)
    root_p[ok] = 1.0 / np.sqrt(hess_sym[ok])

    def to_u(y: NDArray) -> NDArray:
        return u0 + model.apply(root_p, y.reshape(shape))

    def phi(y: NDArray) -> float:
        u = to_u(y)
        d = u - u0
        prox = float(np.vdot(d, model.apply(metric, d)))
        lin = 0.5 * theta * kappa * float(np.vdot(u, model.apply(lam, u))) + float(np.sum((lap_old - explicit) * u))
        return 0.5 * prox + tau * (lin + beta * float(np.sum(S(u0, u))))

    def grad(y: NDArray) -> NDArray:
        u = to_u(y)
        g = model.apply(metric, u - u0) + tau * (
            theta * kappa * model.apply(lam, u) + lap_old - explicit + beta * s(u0, u)
        )
        return model.apply(root_p, g).ravel()

    def hessp(y: NDArray, v: NDArray) -> NDArray:
        u = to_u(y)
        w = model.apply(root_p, v.reshape(shape))
        hw = model.apply(metric, w) + tau * (theta * kappa * model.apply(lam, w) + beta * ds(u0, u) * w)
        return model.apply(root_p, hw).ravel()

    budget = _TRUST_REGION_FACTOR * scheme.newton_max_iter
    with np.errstate(invalid="ignore", over="ignore"):
        res = minimize(
            phi, np.zeros(shape[0] * shape[1]), jac=grad, hessp=hessp, method="trust-krylov",
            options={"gtol": _GTOL, "maxiter": budget},
        )
    return to_u(res.x), iters + int(res.nit), int(res.get("nhev", 0))


_GTOL = 1e-6
_TRUST_REGION_FACTOR = 4


class _Counter:
    def __init__(self) -> None:
        self.count = 0

    def __call__(self, *_):
        self.count += 1


def _default(scheme: SchemeSpec | None, kind: SchemeKind) -> SchemeSpec:
    return SchemeSpec(kind) if scheme is None else scheme


def _dv_antiderivative(v: NDArray, w: NDArray) -> NDArray:
    # integral in w of (v + w)(v^2 + w^2 - 2)/4
    a = v * v - 2.0
    return 0.25 * (v * a * w + v * w**3 / 3.0 + 0.5 * a * w * w + 0.25 * w**4)


def step_backward_euler(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Solve ``u1 = u0 - tau J'(u1)``.

    Uniqueness of the proximal minimizer is only guaranteed for small steps
    (``tau <= eps^2`` for Allen-Cahn); beyond that ``report.non_convex_regime``
    is set and, when plain Newton from ``u0`` stalls, the root reached by
    trust-region descent of the proximal objective from ``u0`` is returned.
    """
    scheme = _default(scheme, SchemeKind.BACKWARD_EULER)
    return _implicit_step(
        model, state, tau, scheme, 1.0,
        lambda u0, u: potential.f(u),
        lambda u0, u: potential.fprime(u),
        lambda u0, u: potential.F(u),
        convex=False,
    )


def step_cn_mid(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Implicit midpoint: ``u1 = u0 - tau J'((u0 + u1)/2)``."""
    scheme = _default(scheme, SchemeKind.CN_MID)
    return _implicit_step(
        model, state, tau, scheme, 0.5,
        lambda u0, u: potential.f(0.5 * (u0 + u)),
        lambda u0, u: 0.5 * potential.fprime(0.5 * (u0 + u)),
        lambda u0, u: 2.0 * potential.F(0.5 * (u0 + u)),
        convex=False,
    )


def step_cn_discrete_variation(
    model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None
) -> SimState:
    """Discrete-variation Crank-Nicolson.

    Uses the potential difference quotient ``(F(u1) - F(u0)) / (u1 - u0)`` so
    that ``J(u1) - J(u0) = -||u1 - u0||^2 / tau`` holds exactly (in the flow's
    norm) up to the Newton tolerance.
    """
    scheme = _default(scheme, SchemeKind.CN_DISCRETE_VARIATION)
    return _implicit_step(
        model, state, tau, scheme, 0.5,
        potential.difference_quotient,
        potential.difference_quotient_dw,
        _dv_antiderivative,
        convex=False,
    )


def step_convex_splitting(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Eyre splitting of ``F = (u^4 + 1)/4 - u^2/2``: cubic implicit, linear explicit."""
    scheme = _default(scheme, SchemeKind.CONVEX_SPLITTING)
    return _implicit_step(
        model, state, tau, scheme, 1.0,
        lambda u0, u: u**3 - u0,
        lambda u0, u: 3.0 * u**2,
        lambda u0, u: 0.25 * u**4 - u0 * u,
        convex=True,
    )


# -- auxiliary-variable schemes ---------------------------------------------------


def step_ieq(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Invariant energy quadratization with frozen ``G(u0) = f(u0)/sqrt(F(u0)+C0)``.

    Eliminating ``q1 = q0 + G (u1 - u0)/2`` leaves, for ``delta = u1 - u0``::

        AC:  delta + tau [kappa (-Lap) delta + beta/2 G^2 delta] = rhs
        CH:  (-Lap)^-1 delta + tau [kappa (-Lap) delta + beta/2 P(G^2 delta)] = rhs

    (``P`` removes the mean; the CH unknown is mean-free). Both operators are
    symmetric positive definite and are solved by CG preconditioned with the
    constant-coefficient version of the operator.
    """
    _check_tau(tau)
    scheme = _default(scheme, SchemeKind.IEQ)
    if state.q is None:
        raise ValueError("IEQ step needs the auxiliary field q; build the state with init_aux")
    spec = model.spec
    shape = model.grid.shape
    n = shape[0] * shape[1]
    kappa, beta = spec.kappa, spec.beta
    u0, q0 = state.u, state.q
    lam = model.lam
    g = model.nl(u0) / np.sqrt(potential.F(u0) + scheme.C0)
    g2 = g * g
    g2_bar = float(np.mean(g2))
    lap_u0 = kappa * model.apply(lam, u0)
    ch = model.is_cahn_hilliard

    if ch:
        lam_inv = np.zeros_like(lam)
        np.divide(1.0, lam, out=lam_inv, where=lam > 0)
        pre = np.zeros_like(lam)
        np.divide(1.0, lam_inv + tau * (kappa * lam + 0.5 * beta * g2_bar), out=pre, where=lam > 0)

        def op(v: NDArray) -> NDArray:
            v = v.reshape(shape)
            w = g2 * v
            w = w - np.mean(w)
            return (model.apply(lam_inv + tau * kappa * lam, v) + 0.5 * tau * beta * w).ravel()

        gq = g * q0
        rhs = -tau * (lap_u0 + beta * (gq - np.mean(gq)))
    else:
        pre = 1.0 / (1.0 + tau * (kappa * lam + 0.5 * beta * g2_bar))

        def op(v: NDArray) -> NDArray:
            v = v.reshape(shape)
            return (v + tau * (kappa * model.apply(lam, v) + 0.5 * beta * g2 * v)).ravel()

        rhs = -tau * (lap_u0 + beta * g * q0) + tau * model.explicit_terms(u0)

    def prec(v: NDArray) -> NDArray:
        return model.apply(pre, v.reshape(shape)).ravel()

    counter = _Counter()
    A = spla.LinearOperator((n, n), matvec=op, dtype=np.float64)
    M = spla.LinearOperator((n, n), matvec=prec, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        delta = np.zeros(shape)
    else:
        x, info = spla.cg(A, rhs.ravel(), M=M, rtol=scheme.linear_tol, maxiter=1000, callback=counter)
        if info != 0:
            raise LinearSolveDiverged(f"IEQ conjugate gradient stopped with info={info}")
        delta = x.reshape(shape)
        if ch:
            delta = delta - np.mean(delta)
    u = u0 + delta
    q = q0 + 0.5 * g * delta
    return _finish(state, u, tau, StepReport(linear_iters=counter.count), q=q)


def step_sav(model: Model, state: SimState, tau: float, scheme: SchemeSpec | None = None) -> SimState:
    """Scalar auxiliary variable step with ``r1`` eliminated analytically.

    ``u1 = p + r1 w`` with ``p = P(u0)``, ``w = -tau beta P(M H)`` and
    ``P = (I + tau kappa M (-Lap))^-1``; the scalar update then reads
    ``r1 (1 - (H, w)/2) = r0 + (H, p - u0)/2``.
    """
    _check_tau(tau)
    scheme = _default(scheme, SchemeKind.SAV)
    if state.r is None:
        raise ValueError("SAV step needs the auxiliary scalar r; build the state with init_aux")
    spec = model.spec
    cell = model.grid.cell_area
    u0 = state.u
    H = model.nl(u0) / math.sqrt(_E1(u0, model) + scheme.C1)
    P = 1.0 / (1.0 + tau * spec.kappa * model.mobility * model.lam)
    p = model.apply(P, u0 + tau * model.explicit_terms(u0))
    w = -tau * spec.beta * model.apply(P * model.mobility, H)
    Hw = float(np.vdot(H, w)) * cell
    Hp = float(np.vdot(H, p - u0)) * cell
    r = (state.r + 0.5 * Hp) / (1.0 - 0.5 * Hw)
    u = p + r * w
    return _finish(state, u, tau, StepReport(), r=r)


# -- dispatch ------------------------------------------------------------------------

STEPPERS = {
    SchemeKind.FORWARD_EULER: step_forward_euler,
    SchemeKind.BACKWARD_EULER: step_backward_euler,
    SchemeKind.CN_MID: step_cn_mid,
    SchemeKind.CN_DISCRETE_VARIATION: step_cn_discrete_variation,
    SchemeKind.CONVEX_SPLITTING: step_convex_splitting,
    SchemeKind.STABILIZED_IMEX: step_stabilized_imex,
    SchemeKind.ETD_RK1: step_etd_rk1,
    SchemeKind.ETD_RK2: step_etd_rk2,
    SchemeKind.IEQ: step_ieq,
    SchemeKind.SAV: step_sav,
}


def step(model: Model, scheme: SchemeSpec, state: SimState, tau: float) -> SimState:
    return STEPPERS[scheme.kind](model, state, tau, scheme)


def integrate(
    model: Model,
    scheme: SchemeSpec,
    state: SimState,
    tau: float,
    nsteps: int,
    callback: Callable[[SimState], None] | None = None,
) -> SimState:
    """Take ``nsteps`` steps of size ``tau``; ``callback`` sees every new state."""
    for _ in range(nsteps):
        state = step(model, scheme, state, tau)
        if callback is not None:
            callback(state)
    return state


def with_time(state: SimState, t: float) -> SimState:
    return replace(state, t=t)
