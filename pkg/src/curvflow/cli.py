"""Command-line front end.

Subcommands:
    run     evolve the constrained flow, print a summary, optionally dump the trace
    eigen   ground eigenvalue of the potential's Schroedinger-type operator
    oracle  flow limit cross-checked against the constrained Newton solver
    gauss   two-dimensional log-conformal flow
    sweep   multistart relaxation; per-start CSV rows and the best energy

Exit codes: 0 on a completed run (Converged / TmaxReached / MaxSteps),
2 when a flow dies of positivity failure, 1 on usage, parse or input
errors.  The CURVFLOW_LOG environment variable (quiet|info|debug) sets
log verbosity.  Identical command line + seed gives byte-identical trace
files.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import elliptic, flow, gauss, spectral
from .errors import CurvFlowError
from .manifold import DiscreteManifold, build_torus_grid, load_off_mesh
from .psiexpr import evaluate, parse

__all__ = ["main", "RunSpec", "PRESETS"]

log = logging.getLogger("curvflow.cli")


class CliUsageError(CurvFlowError):
    pass


@dataclass
class RunSpec:
    """Fully resolved description of one run (manifold + potential + config)."""

    man: DiscreteManifold
    psi: np.ndarray
    psi_text: str
    u0: np.ndarray
    cfg: flow.FlowConfig


# Frozen presets.  thm2: strictly negative constant potential, where the
# flow settles at the constant field with r_inf = -sqrt(volume) for p = 3.
# thm3: zero potential, where r decays exponentially to zero.  Both live
# on the circle of circumference 2*pi with 128 nodes.
PRESETS = {
    "thm2": {
        "counts": [128],
        "lengths": [2.0 * math.pi],
        "psi": "-1",
        "p": 3.0,
        "c": 1.0,
        "u0": "random",
    },
    "thm3": {
        "counts": [128],
        "lengths": [2.0 * math.pi],
        "psi": "0",
        "p": 3.0,
        "c": 1.0,
        "u0": "bump",
    },
}


def preset_manifold(name: str) -> DiscreteManifold:
    spec = PRESETS[name]
    return build_torus_grid(spec["counts"], spec["lengths"])


def preset_u0(name: str, man: DiscreteManifold, seed: int) -> np.ndarray:
    kind = PRESETS[name]["u0"]
    if kind == "random":
        return spectral.lognormal_field(man, seed)
    x = man.coordinates[:, 0]
    return 1.0 + 0.5 * np.cos(x)


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("CURVFLOW_LOG", "quiet").lower()
    if name not in level:
        raise CliUsageError(f"CURVFLOW_LOG must be quiet|info|debug, got {name!r}")
    logging.basicConfig(level=level[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise CliUsageError(message)


def _add_manifold_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--torus", help="periodic grid as N:L[,N:L...]")
    p.add_argument("--off", help="path to an OFF surface mesh")
    p.add_argument("--preset", choices=sorted(PRESETS), help="frozen named setup")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    _add_manifold_args(p)
    p.add_argument("--psi", help="potential expression over x1..xn")
    p.add_argument("--p", type=float, default=None, help="nonlinearity exponent (> 1)")
    p.add_argument("--c", default=None,
                   help="diffusion coefficient, or 'auto' for 4(n-1)/(n-2) (n >= 3)")
    p.add_argument("--scheme", choices=["explicit", "imex"], default="explicit")
    p.add_argument("--dt0", type=float, default=1e-2)
    p.add_argument("--safety", type=float, default=0.25)
    p.add_argument("--tmax", type=float, default=100.0)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.add_argument("--tol-f", type=float, default=1e-10)
    p.add_argument("--tol-res", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the trace CSV here")
    p.add_argument("--trace-every", type=int, default=1)


def build_manifold(args) -> DiscreteManifold:
    sources = [s for s in (args.torus, args.off, getattr(args, "preset", None)) if s]
    if len(sources) != 1 and not (args.torus or args.off or getattr(args, "preset", None)):
        raise CliUsageError("specify a manifold via --torus, --off or --preset")
    if args.preset and (args.torus or args.off):
        raise CliUsageError("--preset already fixes the manifold")
    if args.torus and args.off:
        raise CliUsageError("--torus and --off are mutually exclusive")
    if args.preset:
        return preset_manifold(args.preset)
    if args.off:
        return load_off_mesh(args.off)
    pairs = []
    for item in args.torus.split(","):
        bits = item.split(":")
        if len(bits) != 2:
            raise CliUsageError(f"bad --torus component {item!r}, expected N:L")
        try:
            pairs.append((int(bits[0]), float(bits[1])))
        except ValueError as exc:
            raise CliUsageError(f"bad --torus component {item!r}: {exc}") from exc
    return build_torus_grid([n for n, _ in pairs], [L for _, L in pairs])


def resolve_c(raw, man: DiscreteManifold) -> float:
    if raw is None:
        return 1.0
    if isinstance(raw, str) and raw.strip().lower() == "auto":
        if man.dim < 3:
            raise CliUsageError(
                f"--c auto needs manifold dimension >= 3, got {man.dim}"
            )
        return flow.default_c(man.dim)
    try:
        value = float(raw)
    except ValueError as exc:
        raise CliUsageError(f"bad --c value {raw!r}") from exc
    if value <= 0:
        raise CliUsageError("--c must be positive")
    return value


def build_runspec(args) -> RunSpec:
    man = build_manifold(args)
    preset = PRESETS.get(getattr(args, "preset", None) or "", None)
    psi_text = args.psi if args.psi is not None else (preset["psi"] if preset else None)
    if psi_text is None:
        raise CliUsageError("specify --psi (or a --preset that fixes it)")
    psi = evaluate(parse(psi_text), man)
    p = args.p if args.p is not None else (preset["p"] if preset else 3.0)
    if args.c is not None:
        c = resolve_c(args.c, man)
    else:
        c = preset["c"] if preset else 1.0
    cfg = flow.FlowConfig(
        scheme=args.scheme,
        dt0=args.dt0,
        safety=args.safety,
        tol_f=args.tol_f,
        tol_res=args.tol_res,
        t_max=args.tmax,
        max_steps=args.max_steps,
        trace_every=args.trace_every,
        seed=args.seed,
        p=p,
        c=c,
    )
    if getattr(args, "preset", None):
        u0 = preset_u0(args.preset, man, args.seed)
    else:
        u0 = spectral.lognormal_field(man, args.seed)
    return RunSpec(man=man, psi=psi, psi_text=psi_text, u0=u0, cfg=cfg)


def _write_trace(result: flow.FlowResult, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            flow.write_trace_csv(result.trace, fh)


def _summary(result: flow.FlowResult) -> str:
    last = result.trace[-1]
    line = (
        f"stop={result.stop} r_inf={result.r_infinity:.10g} "
        f"f={last.f:.6g} res={last.res_linf:.6g} steps={result.final.step}"
    )
    if result.decay_rate is not None:
        line += f" decay_rate={result.decay_rate:.10g}"
    return line


def cmd_run(args) -> int:
    spec = build_runspec(args)
    result = flow.run_flow(spec.man, spec.psi, spec.u0, spec.cfg)
    _write_trace(result, args.out)
    print(_summary(result))
    return 2 if result.stop == flow.STOP_POSITIVITY else 0


def cmd_eigen(args) -> int:
    man = build_manifold(args)
    preset = PRESETS.get(getattr(args, "preset", None) or "", None)
    psi_text = args.psi if args.psi is not None else (preset["psi"] if preset else None)
    if psi_text is None:
        raise CliUsageError("specify --psi (or a --preset that fixes it)")
    psi = evaluate(parse(psi_text), man)
    c = resolve_c(args.c, man) if args.c is not None else (preset["c"] if preset else 1.0)
    res = spectral.lambda1(man, psi, c=c)
    print(f"lambda1={res.lambda1:.12g} residual={res.residual:.3e} "
          f"iterations={res.iterations}")
    return 0


def cmd_oracle(args) -> int:
    spec = build_runspec(args)
    result = flow.run_flow(spec.man, spec.psi, spec.u0, spec.cfg)
    if result.stop == flow.STOP_POSITIVITY:
        print(_summary(result))
        return 2
    newt = elliptic.newton_constrained(
        spec.man, spec.psi, spec.cfg.c, spec.cfg.p, result.final.u
    )
    u_gap = float(np.max(np.abs(newt.u - result.final.u)))
    r_gap = abs(newt.r - result.final.r)
    print(f"stop={result.stop} r_flow={result.r_infinity:.10g} "
          f"r_newton={newt.r:.10g} u_gap={u_gap:.3e} r_gap={r_gap:.3e} "
          f"newton_iterations={newt.iterations}")
    return 0


def cmd_gauss(args) -> int:
    man = build_manifold(args)
    if args.psi is None:
        raise CliUsageError("specify --psi")
    psi = evaluate(parse(args.psi), man)
    cfg = flow.FlowConfig(
        scheme="explicit", dt0=args.dt0, safety=args.safety,
        tol_f=args.tol_f, tol_res=args.tol_res, t_max=args.tmax,
        max_steps=args.max_steps, trace_every=args.trace_every, seed=args.seed,
    )
    u0 = np.zeros(man.node_count)
    result = gauss.run_gauss_flow(man, psi, u0, cfg)
    _write_trace(result, args.out)
    last = result.trace[-1]
    print(f"stop={result.stop} r={result.r_infinity:.10g} f={last.f:.6g} "
          f"area_drift={last.norm_err:.3e} steps={last.step}")
    return 0


def cmd_sweep(args) -> int:
    man = build_manifold(args)
    preset = PRESETS.get(getattr(args, "preset", None) or "", None)
    psi_text = args.psi if args.psi is not None else (preset["psi"] if preset else None)
    if psi_text is None:
        raise CliUsageError("specify --psi (or a --preset that fixes it)")
    psi = evaluate(parse(psi_text), man)
    p = args.p if args.p is not None else (preset["p"] if preset else 3.0)
    c = resolve_c(args.c, man) if args.c is not None else (preset["c"] if preset else 1.0)
    cfg = flow.FlowConfig(
        scheme=args.scheme, dt0=args.dt0, safety=args.safety,
        tol_f=args.tol_f, tol_res=args.tol_res, t_max=args.tmax,
        max_steps=args.max_steps, trace_every=args.trace_every, seed=args.seed,
        p=p, c=c,
    )
    rows = []
    best = math.inf
    for i in range(args.starts):
        u0 = spectral.lognormal_field(man, (args.seed, i))
        result = flow.run_flow(man, psi, u0, cfg)
        E = spectral.energy_E(man, result.final.u, psi, c, p)
        best = min(best, E)
        rows.append((i, result.final.r, E, result.stop))
    lines = ["start,r_final,E_final,stop"]
    lines += [f"{i},{r:.16e},{E:.16e},{stop}" for i, r, E, stop in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"Y_psi_upper={best:.12g}")
    return 0


def _build_parser() -> _Parser:
    top = _Parser(prog="curvflow", description=__doc__,
                  formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evolve the constrained flow")
    _add_run_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eigen = sub.add_parser("eigen", help="ground eigenvalue of the potential")
    _add_manifold_args(p_eigen)
    p_eigen.add_argument("--psi")
    p_eigen.add_argument("--c", default=None)
    p_eigen.set_defaults(func=cmd_eigen)

    p_oracle = sub.add_parser("oracle", help="flow limit vs constrained Newton")
    _add_run_args(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_gauss = sub.add_parser("gauss", help="two-dimensional log-conformal flow")
    _add_manifold_args(p_gauss)
    p_gauss.add_argument("--psi")
    p_gauss.add_argument("--dt0", type=float, default=1e-3)
    p_gauss.add_argument("--safety", type=float, default=0.25)
    p_gauss.add_argument("--tmax", type=float, default=100.0)
    p_gauss.add_argument("--max-steps", type=int, default=1_000_000)
    p_gauss.add_argument("--tol-f", type=float, default=1e-10)
    p_gauss.add_argument("--tol-res", type=float, default=1e-8)
    p_gauss.add_argument("--seed", type=int, default=0)
    p_gauss.add_argument("--out")
    p_gauss.add_argument("--trace-every", type=int, default=1)
    p_gauss.set_defaults(func=cmd_gauss)

    p_sweep = sub.add_parser("sweep", help="multistart relaxation sweep")
    _add_run_args(p_sweep)
    p_sweep.add_argument("--starts", type=int, default=8)
    p_sweep.set_defaults(func=cmd_sweep)

    return top


def main(argv: list[str] | None = None) -> int:
    try:
        _setup_logging()
        parser = _build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except CliUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CurvFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
