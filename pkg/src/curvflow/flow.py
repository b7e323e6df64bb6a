"""Norm-preserving curvature-driven flow on a discrete manifold.

The evolving positive node field u obeys

    u_t = u^{1-p} (c Lap(u) - psi u) + r(t) u,
    r(t) = (c \\int |grad u|^2 + \\int psi u^2) / \\int u^{p+1},

which keeps \\int u^{p+1} dv = 1 along exact trajectories and drives the
scalar invariant R = u^{-p} (-c Lap(u) + psi u) toward the constant r.
Two steppers are provided: an explicit Euler update (with an adaptive
stability-based dt) and a semi-implicit update of the fast-diffusion form
w = u^p (Newton inner solves, stable at much larger dt).  Every accepted
step is followed by projection back onto the unit-constraint manifold; the
pre-projection drift is recorded per step as `norm_err` since its size is
a direct consistency check of the scheme.

Quantities logged per trace row: r, the drift, u and R extrema, the decay
functional f = \\int (R - r)^2 u^{p+1} dv (which satisfies dr/dt = -2 f
along exact trajectories) and the stationarity residual in max norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import (
    CurvFlowError,
    IllConditionedInitialData,
    NewtonNoConvergence,
    NonPositiveField,
    SizeMismatch,
    StepRejectedPositivity,
    ZeroDenominator,
)
from .manifold import DiscreteManifold, dirichlet_energy, integrate, laplacian_apply

__all__ = [
    "FlowState",
    "FlowConfig",
    "TraceRecord",
    "FlowResult",
    "pseudo_scalar_curvature",
    "rayleigh_r",
    "normalize",
    "make_flow_state",
    "step_explicit",
    "step_imex",
    "adaptive_dt",
    "sigma_shift",
    "f_diagnostic",
    "run_flow",
    "write_trace_csv",
    "read_trace_csv",
    "trace_column",
    "default_c",
]

log = logging.getLogger("curvflow.flow")

STOP_CONVERGED = "Converged"
STOP_MAX_STEPS = "MaxSteps"
STOP_TMAX = "TmaxReached"
STOP_POSITIVITY = "PositivityFailure"


def default_c(n: int) -> float:
    """Dimension-dependent diffusion constant 4(n-1)/(n-2), defined for n >= 3."""
    if n < 3:
        raise ValueError(f"default coefficient requires dimension >= 3, got {n}")
    return 4.0 * (n - 1) / (n - 2)


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow: field, clock, exponents and the cached r.

    norm_err is the pre-projection constraint drift of the step that
    produced this state (0 for initial states); it is carried here so the
    run loop can log it without re-deriving the un-projected field.
    """

    u: np.ndarray
    t: float
    step: int
    p: float
    c: float
    r: float
    norm_err: float = 0.0


@dataclass
class FlowConfig:
    """Run parameters.

    p and c live here as well: run_flow builds its own states and has no
    other channel for them.  For explicit stepping dt0 caps the adaptive
    step; for imex it is the actual step size.
    """

    scheme: str = "explicit"
    dt0: float = 1e-2
    safety: float = 0.25
    tol_f: float = 1e-10
    tol_res: float = 1e-8
    t_max: float = 100.0
    max_steps: int = 1_000_000
    max_halvings: int = 40
    trace_every: int = 1
    seed: int = 0
    p: float = 3.0
    c: float = 1.0

    def validate(self) -> "FlowConfig":
        if self.scheme not in ("explicit", "imex"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for name in ("dt0", "safety", "tol_f", "tol_res", "t_max"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 0 or self.max_halvings < 0:
            raise ValueError("max_steps and max_halvings must be nonnegative")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if not (self.p > 1):
            raise ValueError("p must exceed 1")
        if not (self.c > 0):
            raise ValueError("c must be positive")
        return self


@dataclass(frozen=True)
class TraceRecord:
    step: int
    t: float
    dt: float
    r: float
    norm_err: float
    u_min: float
    u_max: float
    f: float
    R_min: float
    R_max: float
    res_linf: float


TRACE_HEADER = "step,t,dt,r,norm_err,u_min,u_max,f,R_min,R_max,res_linf"
_TRACE_FIELDS = TRACE_HEADER.split(",")


@dataclass
class FlowResult:
    final: FlowState
    trace: list[TraceRecord]
    stop: str
    r_infinity: float
    decay_rate: float | None = None


def _positive_field(man: DiscreteManifold, u: np.ndarray, name: str = "u") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (man.node_count,):
        raise SizeMismatch(f"{name} has shape {u.shape}, expected ({man.node_count},)")
    if not np.all(u > 0):
        raise NonPositiveField(f"{name} must be strictly positive everywhere")
    return u


def pseudo_scalar_curvature(
    man: DiscreteManifold, u: np.ndarray, psi: np.ndarray, c: float, p: float
) -> np.ndarray:
    """R = u^{-p} (-c Lap(u) + psi u), the scalar invariant the flow equalizes."""
    u = _positive_field(man, u)
    psi = np.asarray(psi, dtype=float)
    lap = laplacian_apply(man, u)
    return u ** (-p) * (-c * lap + psi * u)


def rayleigh_r(
    man: DiscreteManifold, u: np.ndarray, psi: np.ndarray, c: float, p: float
) -> float:
    """(c u^T S u + \\int psi u^2) / \\int u^{p+1}.

    Equals the u^{p+1}-weighted mean of R; the Dirichlet part is evaluated
    edge-wise so the value stays accurate (and nonnegative for psi >= 0)
    even when u is within roundoff of a constant.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (man.node_count,):
        raise SizeMismatch(f"u has shape {u.shape}, expected ({man.node_count},)")
    psi = np.asarray(psi, dtype=float)
    denom = integrate(man, u ** (p + 1.0))
    if denom == 0 or not math.isfinite(denom):
        raise ZeroDenominator(f"constraint integral is {denom}")
    num = c * dirichlet_energy(man, u) + integrate(man, psi * u * u)
    return num / denom


def normalize(man: DiscreteManifold, u: np.ndarray, p: float) -> np.ndarray:
    """Scale u so the constraint integral \\int u^{p+1} dv equals 1.

    Two correction passes: the second removes the O(eps) residue the
    rounded (p+1)-th root leaves behind, putting the result within a few
    ulps of the constraint surface.
    """
    u = _positive_field(man, u)
    for _ in range(2):
        s = integrate(man, u ** (p + 1.0))
        if s == 0 or not math.isfinite(s):
            raise ZeroDenominator(f"constraint integral is {s}")
        u = u / s ** (1.0 / (p + 1.0))
    return u


def make_flow_state(
    man: DiscreteManifold,
    psi: np.ndarray,
    u: np.ndarray,
    t: float = 0.0,
    step: int = 0,
    p: float = 3.0,
    c: float = 1.0,
    norm_err: float = 0.0,
) -> FlowState:
    """Bundle a field into a FlowState with its Rayleigh quotient cached."""
    u = _positive_field(man, u)
    r = rayleigh_r(man, u, psi, c, p)
    return FlowState(u=u, t=float(t), step=int(step), p=float(p), c=float(c), r=r,
                     norm_err=float(norm_err))


def _project(man: DiscreteManifold, u: np.ndarray, p: float) -> np.ndarray:
    """Projection used after every accepted step, with a hard drift guarantee."""
    u = normalize(man, u, p)
    drift = integrate(man, u ** (p + 1.0)) - 1.0
    if abs(drift) > 1e-13:
        raise CurvFlowError(f"projection left constraint drift {drift:.3e}")
    return u


def _explicit_update(
    man: DiscreteManifold,
    psi: np.ndarray,
    state: FlowState,
    dt: float,
    R: np.ndarray,
) -> FlowState:
    # u^{1-p}(c Lap u - psi u) = -R u, so the update is u (1 + dt (r - R))
    unew = state.u * (1.0 + dt * (state.r - R))
    if unew.min() <= 0.0:
        raise StepRejectedPositivity(f"explicit step dt={dt:.3e} lost positivity")
    norm_err = integrate(man, unew ** (state.p + 1.0)) - 1.0
    u = _project(man, unew, state.p)
    return make_flow_state(man, psi, u, state.t + dt, state.step + 1,
                           state.p, state.c, norm_err=norm_err)


def step_explicit(
    man: DiscreteManifold, psi: np.ndarray, state: FlowState, dt: float
) -> FlowState:
    """One explicit Euler step followed by projection onto the constraint."""
    psi = np.asarray(psi, dtype=float)
    R = pseudo_scalar_curvature(man, state.u, psi, state.c, state.p)
    return _explicit_update(man, psi, state, dt, R)


def _imex_operator(man: DiscreteManifold, psi: np.ndarray, c: float) -> sparse.csr_matrix:
    # A u = -(c Lap u - psi u) * mass  (weak form of the stiff part)
    return (c * man.stiffness + sparse.diags(man.mass * psi)).tocsr()


def _imex_update(
    man: DiscreteManifold,
    psi: np.ndarray,
    state: FlowState,
    dt: float,
    A: sparse.csr_matrix,
    newton_tol: float = 1e-12,
    newton_max_iter: int = 50,
) -> FlowState:
    p, c = state.p, state.c
    mass = man.mass
    w_old = state.u**p
    # (w+ - w)/dt = p (c Lap u+ - psi u+ + r w)  with u+ = (w+)^{1/p}, r
    # frozen; the chain-rule factor p keeps this on the same clock as the
    # u-form of the flow, so both schemes discretize one ODE
    pdt = p * dt
    target = w_old * (1.0 + pdt * state.r)
    scale = max(1.0, float(np.max(np.abs(target))))
    w = w_old.copy()
    for _ in range(newton_max_iter):
        u = w ** (1.0 / p)
        F = w + pdt * (A @ u) / mass - target
        if float(np.max(np.abs(F))) <= newton_tol * scale:
            break
        dudw = (1.0 / p) * w ** (1.0 / p - 1.0)
        B = sparse.diags(mass) + pdt * (A @ sparse.diags(dudw))
        delta = spsolve(B.tocsc(), -mass * F)
        w = w + delta
        if w.min() <= 0.0:
            raise StepRejectedPositivity(f"imex Newton iterate lost positivity at dt={dt:.3e}")
    else:
        raise NewtonNoConvergence(
            f"imex inner Newton did not reach {newton_tol:.1e} in {newton_max_iter} iterations"
        )
    unew = w ** (1.0 / p)
    norm_err = integrate(man, unew ** (p + 1.0)) - 1.0
    u = _project(man, unew, p)
    return make_flow_state(man, psi, u, state.t + dt, state.step + 1, p, c,
                           norm_err=norm_err)


def step_imex(
    man: DiscreteManifold, psi: np.ndarray, state: FlowState, dt: float
) -> FlowState:
    """One semi-implicit step of the fast-diffusion form w = u^p.

    The diffusion/potential part is treated implicitly in u+ (Newton on
    w+), the constraint-coupling term r w explicitly with r frozen at the
    step start; projection as in step_explicit.
    """
    psi = np.asarray(psi, dtype=float)
    _positive_field(man, state.u)
    A = _imex_operator(man, psi, state.c)
    return _imex_update(man, psi, state, dt, A)


def adaptive_dt(
    man: DiscreteManifold,
    state: FlowState,
    safety: float,
    dt_max: float | None = None,
) -> float:
    """Stability-limited explicit step: safety * min(u^{p-1}) * min(mass) / (c max S_ii).

    Clamped to [1e-12, dt_max]; dt_max is the configured dt0 when called
    from the run loop.
    """
    umin = float(state.u.min())
    if umin <= 0:
        raise NonPositiveField("state field must be positive")
    dt = safety * umin ** (state.p - 1.0) * float(man.mass.min()) / (
        state.c * man._max_stiffness_diagonal
    )
    if dt_max is not None:
        dt = min(dt, dt_max)
    return max(dt, 1e-12)


def sigma_shift(R0: np.ndarray) -> float:
    """max(1 - min R(0), 1): shifting R(t) by this keeps it >= 1 initially."""
    R0 = np.asarray(R0, dtype=float)
    return float(max(1.0 - R0.min(), 1.0))


def f_diagnostic(
    man: DiscreteManifold, u: np.ndarray, psi: np.ndarray, c: float, p: float
) -> float:
    """Decay functional f = \\int (R - r)^2 u^{p+1} dv; zero exactly at stationary states."""
    psi = np.asarray(psi, dtype=float)
    R = pseudo_scalar_curvature(man, u, psi, c, p)
    r = rayleigh_r(man, u, psi, c, p)
    return integrate(man, (R - r) ** 2 * np.asarray(u, dtype=float) ** (p + 1.0))


def _diagnostics(
    man: DiscreteManifold, psi: np.ndarray, state: FlowState
) -> tuple[np.ndarray, float, float]:
    """R, f and the stationarity residual for one state (single stiffness pass)."""
    R = pseudo_scalar_curvature(man, state.u, psi, state.c, state.p)
    upw = state.u ** (state.p + 1.0)
    dev = R - state.r
    f = float(np.dot(man.mass, dev * dev * upw))
    res = float(np.max(np.abs(upw / state.u * dev)))  # u^p (R - r)
    return R, f, res


def _record(state: FlowState, dt: float, R: np.ndarray, f: float, res: float) -> TraceRecord:
    return TraceRecord(
        step=state.step,
        t=state.t,
        dt=dt,
        r=state.r,
        norm_err=state.norm_err,
        u_min=float(state.u.min()),
        u_max=float(state.u.max()),
        f=f,
        R_min=float(R.min()),
        R_max=float(R.max()),
        res_linf=res,
    )


def _fit_decay_rate(trace: Sequence[TraceRecord], psi: np.ndarray) -> float | None:
    """Least-squares slope of log r over the trailing half of the trace.

    Only meaningful for the zero-potential flow, where r is the (positive)
    Dirichlet energy and decays exponentially; returns None whenever the
    fit is not defined.
    """
    if np.any(np.asarray(psi) != 0.0):
        return None
    tail = trace[len(trace) // 2 :]
    if len(tail) < 5:
        return None
    rs = np.array([rec.r for rec in tail])
    ts = np.array([rec.t for rec in tail])
    if np.any(rs <= 0) or ts[-1] <= ts[0]:
        return None
    slope = np.polyfit(ts, np.log(rs), 1)[0]
    return float(-slope)


def run_flow(
    man: DiscreteManifold,
    psi: np.ndarray,
    u0: np.ndarray,
    cfg: FlowConfig,
) -> FlowResult:
    """Drive the flow from u0 until stationarity, a time/step budget, or failure.

    Convergence means f <= tol_f and res_linf <= tol_res simultaneously.
    Steps that lose positivity are retried with halved dt up to
    cfg.max_halvings times; exhausting the halvings ends the run with
    stop = "PositivityFailure" (the partial trace is still returned).
    """
    cfg.validate()
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (man.node_count,):
        raise SizeMismatch(f"psi has shape {psi.shape}, expected ({man.node_count},)")
    u = normalize(man, u0, cfg.p)
    if u.min() < 1e-10:
        raise IllConditionedInitialData(
            f"normalized initial field has min {u.min():.3e} < 1e-10"
        )
    state = make_flow_state(man, psi, u, 0.0, 0, cfg.p, cfg.c)
    R, f, res = _diagnostics(man, psi, state)
    sigma = sigma_shift(R)
    trace = [_record(state, 0.0, R, f, res)]
    A = _imex_operator(man, psi, cfg.c) if cfg.scheme == "imex" else None

    stop = None
    last_dt = 0.0
    while True:
        if f <= cfg.tol_f and res <= cfg.tol_res:
            stop = STOP_CONVERGED
            break
        if state.step >= cfg.max_steps:
            stop = STOP_MAX_STEPS
            break
        remaining = cfg.t_max - state.t
        if remaining <= 1e-14 * cfg.t_max:
            stop = STOP_TMAX
            break

        if cfg.scheme == "explicit":
            dt = adaptive_dt(man, state, cfg.safety, dt_max=cfg.dt0)
        else:
            dt = cfg.dt0
        dt = min(dt, remaining)

        new_state = None
        for _ in range(cfg.max_halvings + 1):
            try:
                if cfg.scheme == "explicit":
                    new_state = _explicit_update(man, psi, state, dt, R)
                else:
                    new_state = _imex_update(man, psi, state, dt, A)
                break
            except StepRejectedPositivity:
                dt *= 0.5
        if new_state is None:
            stop = STOP_POSITIVITY
            break

        state = new_state
        last_dt = dt
        R, f, res = _diagnostics(man, psi, state)
        if float(R.min()) + sigma < 1.0 - 1e-6 * sigma:
            log.warning(
                "shifted-curvature bound grazed at step %d: min R + sigma = %.6e",
                state.step, float(R.min()) + sigma,
            )
        if state.step % cfg.trace_every == 0:
            trace.append(_record(state, dt, R, f, res))

    if trace[-1].step != state.step:
        trace.append(_record(state, last_dt, R, f, res))

    return FlowResult(
        final=state,
        trace=trace,
        stop=stop,
        r_infinity=state.r,
        decay_rate=_fit_decay_rate(trace, psi),
    )


def write_trace_csv(trace: Iterable[TraceRecord], fh: IO[str]) -> None:
    """Emit the trace with the fixed header, %.16e reals and LF line endings."""
    fh.write(TRACE_HEADER + "\n")
    for rec in trace:
        vals = [str(rec.step)] + [
            format(getattr(rec, name), ".16e") for name in _TRACE_FIELDS[1:]
        ]
        fh.write(",".join(vals) + "\n")


def read_trace_csv(fh: IO[str]) -> list[TraceRecord]:
    header = fh.readline().strip()
    if header != TRACE_HEADER:
        raise ValueError(f"unexpected trace header {header!r}")
    out = []
    for line in fh:
        parts = line.strip().split(",")
        out.append(
            TraceRecord(int(parts[0]), *[float(x) for x in parts[1:]])
        )
    return out


def trace_column(trace: Sequence[TraceRecord], name: str) -> np.ndarray:
    """Extract one trace field as an array (handy for tests and scripts)."""
    return np.array([getattr(rec, name) for rec in trace], dtype=float)
