"""Log-conformal curvature flow on two-dimensional manifolds.

Here the unknown is the conformal exponent: the metric weight is e^{2u}
and u may take any real sign.  The flow

    u_t = e^{-2u} (Lap(u) - psi) + r,      r = \\int psi dv / \\int e^{2u} dv,

drives the curvature-like quantity K = e^{-2u} (-Lap(u) + psi) toward the
constant r.  With this r the total weighted area \\int e^{2u} dv is a
first integral of the exact dynamics (the Laplacian integrates to zero),
so no projection is applied: the recorded area drift is itself the
consistency signal.  Trace rows reuse the flow schema with norm_err
holding the relative area drift and the R columns holding K extrema.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import CurvFlowError, DimensionMismatch, SizeMismatch
from .flow import (
    STOP_CONVERGED,
    STOP_MAX_STEPS,
    STOP_TMAX,
    FlowConfig,
    FlowResult,
    TraceRecord,
)
from .manifold import DiscreteManifold, integrate, laplacian_apply

__all__ = ["GaussState", "k_psi", "gauss_r", "run_gauss_flow"]

log = logging.getLogger("curvflow.gauss")


@dataclass(frozen=True)
class GaussState:
    u: np.ndarray
    t: float
    step: int
    r: float


def _check_2d(man: DiscreteManifold) -> None:
    if man.dim != 2:
        raise DimensionMismatch(f"defined for 2-dimensional manifolds, got dim {man.dim}")


def _check_field(man: DiscreteManifold, f: np.ndarray, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (man.node_count,):
        raise SizeMismatch(f"{name} has shape {f.shape}, expected ({man.node_count},)")
    return f


def k_psi(man: DiscreteManifold, u: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """K = e^{-2u} (-Lap(u) + psi); reduces to psi itself at u = 0."""
    _check_2d(man)
    u = _check_field(man, u, "u")
    psi = _check_field(man, psi, "psi")
    return np.exp(-2.0 * u) * (-laplacian_apply(man, u) + psi)


def gauss_r(man: DiscreteManifold, u: np.ndarray, psi: np.ndarray) -> float:
    """\\int psi dv / \\int e^{2u} dv, the area-preserving choice of constant."""
    _check_2d(man)
    u = _check_field(man, u, "u")
    psi = _check_field(man, psi, "psi")
    return integrate(man, psi) / integrate(man, np.exp(2.0 * u))


def run_gauss_flow(
    man: DiscreteManifold,
    psi: np.ndarray,
    u0: np.ndarray,
    cfg: FlowConfig,
) -> FlowResult:
    """Explicit flow of the conformal exponent; any real u0 is accepted.

    Steps at min(dt0, safety * min(mass) * e^{2 min u} / max S_ii), stops
    when f = \\int (K - r)^2 e^{2u} dv falls below tol_f or a budget runs
    out.  The area integral is never renormalized.
    """
    cfg.validate()
    _check_2d(man)
    u = _check_field(man, u0, "u0").copy()
    psi = _check_field(man, psi, "psi")
    psi_total = integrate(man, psi)
    area0 = integrate(man, np.exp(2.0 * u))
    log.info(
        "normalizing term r = (total psi %.6e) / evolving area; this choice "
        "conserves the area integral (start %.6e)", psi_total, area0,
    )
    smax = man._max_stiffness_diagonal
    mmin = float(man.mass.min())

    def diagnostics(u):
        w = np.exp(2.0 * u)
        area = integrate(man, w)
        r = psi_total / area
        lap = laplacian_apply(man, u)
        K = (-lap + psi) / w
        dev = K - r
        f = float(np.dot(man.mass, dev * dev * w))
        res = float(np.max(np.abs(lap - psi + r * w)))
        return w, area, r, K, f, res

    w, area, r, K, f, res = diagnostics(u)

    def record(step, t, dt):
        return TraceRecord(
            step=step, t=t, dt=dt, r=r,
            norm_err=(area - area0) / area0,
            u_min=float(u.min()), u_max=float(u.max()),
            f=f, R_min=float(K.min()), R_max=float(K.max()), res_linf=res,
        )

    t = 0.0
    step = 0
    trace = [record(0, 0.0, 0.0)]
    stop = None
    last_dt = 0.0
    while True:
        if f <= cfg.tol_f:
            stop = STOP_CONVERGED
            break
        if step >= cfg.max_steps:
            stop = STOP_MAX_STEPS
            break
        remaining = cfg.t_max - t
        if remaining <= 1e-14 * cfg.t_max:
            stop = STOP_TMAX
            break
        dt = min(cfg.dt0, cfg.safety * mmin * float(np.exp(2.0 * u.min())) / smax, remaining)
        # e^{-2u} (Lap u - psi) + r = r - K
        u = u + dt * (r - K)
        step += 1
        t += dt
        last_dt = dt
        if not np.all(np.isfinite(u)):
            raise CurvFlowError(f"flow blew up at step {step}")
        w, area, r, K, f, res = diagnostics(u)
        if step % cfg.trace_every == 0:
            trace.append(record(step, t, dt))

    if trace[-1].step != step:
        trace.append(record(step, t, last_dt))

    final = GaussState(u=u, t=t, step=step, r=r)
    return FlowResult(final=final, trace=trace, stop=stop,
                      r_infinity=r, decay_rate=None)
