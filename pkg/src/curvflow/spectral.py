"""Spectral quantities attached to the potential: ground eigenpair, the
scale-invariant energy, and a flow-based upper estimate of its infimum.

lambda1 solves the generalized symmetric problem

    (c S + M diag(psi)) v = lambda M v

for its smallest eigenvalue by inverse iteration with the fixed shift
min(psi) - 1 (which makes the shifted operator positive definite).  Inner
solves use conjugate gradients with a Jacobi preconditioner and warm
starts.  The energy

    E(u) = (c \\int |grad u|^2 + \\int psi u^2) / (\\int |u|^{p+1})^{2/(p+1)}

is zero-homogeneous; its infimum over positive fields shares the sign of
lambda1, and estimate_Y brackets it from above by relaxing a batch of
seeded log-normal random fields with the flow and taking the best final
energy.  The estimate is an upper bound by construction, which is why the
CLI labels it Y_psi_upper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import flow as flowmod
from .errors import (
    CurvFlowError,
    EigenNoConvergence,
    InnerSolverFailure,
    InvalidDimension,
    SizeMismatch,
    ZeroDenominator,
)
from .manifold import DiscreteManifold, dirichlet_energy, integrate

__all__ = [
    "EigenResult",
    "lambda1",
    "energy_E",
    "estimate_Y",
    "y_sphere_constant",
    "lognormal_field",
]


@dataclass
class EigenResult:
    lambda1: float
    eigenfunction: np.ndarray
    iterations: int
    residual: float


def _pcg(
    A: sparse.csr_matrix,
    b: np.ndarray,
    x0: np.ndarray,
    rtol: float = 1e-13,
    max_iter: int = 20000,
) -> np.ndarray:
    """Conjugate gradients with a Jacobi (diagonal) preconditioner."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise InnerSolverFailure("operator diagonal is not positive")
    x = x0.copy()
    r = b - A @ x
    z = r / diag
    p = z.copy()
    rz = float(np.dot(r, z))
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        Ap = A @ p
        alpha = rz / float(np.dot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        z = r / diag
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= 10 * rtol * bnorm:
        return x
    raise InnerSolverFailure(
        f"PCG stalled at relative residual {np.linalg.norm(r)/bnorm:.3e}"
    )


def lambda1(
    man: DiscreteManifold,
    psi: np.ndarray,
    c: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> EigenResult:
    """Smallest eigenvalue and positive normalized eigenfunction.

    Residual reported (and tested against tol) is the strong form
    |(-c Lap + psi) u1 - lambda u1|_inf / max(1, |lambda|) with u1
    normalized to \\int u1^2 dv = 1.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (man.node_count,):
        raise SizeMismatch(f"psi has shape {psi.shape}, expected ({man.node_count},)")
    mass = man.mass
    A = (c * man.stiffness + sparse.diags(mass * psi)).tocsr()
    shift = float(psi.min()) - 1.0
    B = (A - shift * sparse.diags(mass)).tocsr()  # PD: c S + M (psi - shift), psi - shift >= 1

    v = np.full(man.node_count, 1.0 / math.sqrt(man.volume))
    lam = float(np.dot(v, A @ v))
    for it in range(1, max_iter + 1):
        x = _pcg(B, mass * v, x0=v / max(lam - shift, 1e-3))
        nrm = math.sqrt(float(np.dot(x, mass * x)))
        if nrm == 0.0 or not math.isfinite(nrm):
            raise EigenNoConvergence("inverse iteration collapsed to zero")
        v = x / nrm
        lam = float(np.dot(v, A @ v))  # Rayleigh quotient, M-normalized v
        strong = (A @ v) / mass - lam * v
        res = float(np.max(np.abs(strong))) / max(1.0, abs(lam))
        if res <= tol:
            if integrate(man, v) < 0:
                v = -v
            if v.min() <= 0:
                raise EigenNoConvergence("ground eigenfunction is not positive")
            return EigenResult(lambda1=lam, eigenfunction=v, iterations=it, residual=res)
    raise EigenNoConvergence(
        f"residual {res:.3e} after {max_iter} inverse iterations (tol {tol:.1e})"
    )


def energy_E(
    man: DiscreteManifold, u: np.ndarray, psi: np.ndarray, c: float, p: float
) -> float:
    """Scale-invariant energy; equals the Rayleigh r on the constraint surface."""
    u = np.asarray(u, dtype=float)
    if u.shape != (man.node_count,):
        raise SizeMismatch(f"u has shape {u.shape}, expected ({man.node_count},)")
    psi = np.asarray(psi, dtype=float)
    denom = integrate(man, np.abs(u) ** (p + 1.0)) ** (2.0 / (p + 1.0))
    if denom == 0:
        raise ZeroDenominator("energy of the zero field")
    return (c * dirichlet_energy(man, u) + integrate(man, psi * u * u)) / denom


def lognormal_field(
    man: DiscreteManifold,
    seed,
    amplitude: float = 0.4,
    corr_fraction: float = 0.125,
) -> np.ndarray:
    """Positive random field exp(a g) with g a smooth unit-variance Gaussian.

    g is white noise pushed twice through the screened-Poisson smoother
    (M + ell^2 S)^{-1} M with correlation length ell = corr_fraction times
    the bounding-box diameter, then standardized against the mass
    weighting.  Deterministic in the seed (tuples make substreams).
    """
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(man.node_count)
    ell = corr_fraction * man.bbox_diameter
    helm = (sparse.diags(man.mass) + ell * ell * man.stiffness).tocsc()
    g = white
    for _ in range(2):
        g = spsolve(helm, man.mass * g)
    vol = man.volume
    g = g - integrate(man, g) / vol
    std = math.sqrt(max(integrate(man, g * g) / vol, 1e-300))
    return np.exp(amplitude * (g / std))


def estimate_Y(
    man: DiscreteManifold,
    psi: np.ndarray,
    c: float,
    p: float,
    n_starts: int = 8,
    seed: int = 0,
    cfg: flowmod.FlowConfig | None = None,
    scale: float = 1.0,
) -> float:
    """Upper estimate of inf E over positive fields: best flow limit energy
    over n_starts seeded log-normal initial fields.

    Each start i draws from substream (seed, i), so results are
    reproducible and independent of batch order.  scale multiplies every
    starting field by a common positive factor; since E is zero-homogeneous
    and the flow renormalizes at t = 0 the estimate does not depend on it.
    Runs that merely hit the time or step budget still contribute (any
    positive field gives an upper bound); a positivity failure aborts,
    since it leaves no field to evaluate.
    """
    psi = np.asarray(psi, dtype=float)
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    if scale <= 0:
        raise ValueError("scale must be positive")
    if cfg is None:
        cfg = flowmod.FlowConfig(scheme="imex", dt0=1e-3, t_max=200.0, p=p, c=c)
    best = math.inf
    for i in range(n_starts):
        u0 = scale * lognormal_field(man, (seed, i))
        result = flowmod.run_flow(man, psi, u0, cfg)
        if result.stop == flowmod.STOP_POSITIVITY:
            raise CurvFlowError(f"relaxation from start {i} lost positivity")
        best = min(best, energy_E(man, result.final.u, psi, c, p))
    return best


def y_sphere_constant(n: int) -> float:
    """n(n-1) omega_n^{2/n} with omega_n the volume of the unit n-sphere."""
    if n < 3:
        raise InvalidDimension(f"sphere constant defined for n >= 3, got {n}")
    omega = 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)
    return n * (n - 1) * omega ** (2.0 / n)
