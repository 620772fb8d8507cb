"""Command-line entry point.

    hopfield-flows descend  [--config FILE] [--method natural|mirror|prox|rk4] ...
    hopfield-flows geodesic [--config FILE] --x 0.25,0.5 --y 0.75,0.5
    hopfield-flows dispatch [--config FILE] [--restarts 100] ...
    hopfield-flows diffuse  [--config FILE] [--steps 3000] ...

Every config key is also a flag (``--key value``) and overrides the file.
Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .activation import make_activation
from .config import SCHEMAS, load_config
from .errors import ConfigError, DomainError, NumericError
from .io import export_trace

log = logging.getLogger("hopfield_flows")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _objective(cfg):
    from .objectives import make_objective

    dim = cfg.dim
    params = {"scale": cfg.scale}
    if cfg.center is not None:
        params["center"] = cfg.center
    if cfg.p is not None:
        params["p"] = cfg.p
    return make_objective(cfg.objective, dim, **params)


def _out(cfg, name):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def run_descend(cfg):
    from .flows import hnn_ode_integrate, mirror_descent, natural_gradient_descent, prox_descent
    from .mirror import BitEntropyPair

    act = make_activation(cfg.activation, cfg.dim, cfg.beta)
    obj = _objective(cfg)
    x0 = np.full(cfg.dim, 0.5) if cfg.x0 is None else np.asarray(cfg.x0)
    timing = cfg.record_timing
    if cfg.method == "natural":
        trace = natural_gradient_descent(act, obj, x0, cfg.h, cfg.steps, timing)
    elif cfg.method == "mirror":
        # the bit-entropy pair with steepness beta matches sigma = expit(2 beta u)
        pair_beta = cfg.beta if cfg.activation == "soft_projection" else 0.5 * cfg.beta
        trace = mirror_descent(BitEntropyPair(pair_beta, cfg.dim), obj, x0, cfg.h, cfg.steps, timing)
    elif cfg.method == "prox":
        trace = prox_descent(act, obj, x0, cfg.h, cfg.steps, timing)
    else:
        trace = hnn_ode_integrate(act, obj, x0, cfg.h, cfg.steps, "primal", timing)
    trace.set_reference(act, trace.final)
    path = export_trace(trace.header, trace.rows(), _out(cfg, f"descend_{cfg.method}.csv"))
    print(f"final x = {np.array2string(trace.final, precision=10)}  f = {trace.f[-1]:.6e}")
    return [path]


def run_geodesic(cfg):
    from .geometry import fast_distance, geodesic_distance, geodesic_residual, geodesic_solve

    act = make_activation(cfg.activation, cfg.dim, cfg.beta)
    x, y = np.asarray(cfg.x), np.asarray(cfg.y)
    curve = geodesic_solve(act, x, y, cfg.samples, cfg.method)
    res = geodesic_residual(act, curve, curve.t[1:-1]) if cfg.samples > 2 else np.zeros(0)
    header = ("t",) + tuple(f"x_{i + 1}" for i in range(cfg.dim))
    rows = [(t, *p) for t, p in zip(curve.t, curve.points)]
    path = export_trace(header, rows, _out(cfg, "geodesic.csv"))
    d = geodesic_distance(act, x, y)
    print(f"d_G = {d:.15g}  (arc-coordinate {float(fast_distance(act, x, y)):.15g})")
    if res.size:
        print(f"max ODE residual = {np.max(np.abs(res)):.3e}")
    return [path]


def run_dispatch(cfg):
    from .dispatch import generate_problem, monte_carlo

    prob = generate_problem(
        cfg.seed,
        n_G=cfg.n_G,
        r=cfg.r,
        h_hopfield=cfg.h_hopfield,
        h_dual=cfg.h_dual,
        tol=cfg.tol,
        max_subiters=cfg.max_subiters,
        residual_tol=cfg.residual_tol,
        max_outer=cfg.max_outer,
        beta=cfg.beta,
    )
    results = monte_carlo(prob, cfg.restarts, cfg.seed, record_timing=cfg.record_timing)
    paths = []
    width = max(3, len(str(cfg.restarts - 1)))
    for i, res in enumerate(results):
        paths.append(export_trace(res.header, res.rows(), _out(cfg, f"dispatch_restart_{i:0{width}d}.csv")))
    header = (
        "restart", "lambda1_init", "lambda2_init", "converged", "outer_iters", "r1", "r2",
        "cost", "monotone_fraction", "binary_fraction", "wall_s",
    )
    rows = [
        (
            i, r.lambda_init[0], r.lambda_init[1], r.converged, r.outer_iters, r.r1[-1], r.r2[-1],
            r.cost(prob), r.monotone_fraction(), r.binary_fraction(prob), r.wall_s,
        )
        for i, r in enumerate(results)
    ]
    paths.append(export_trace(header, rows, _out(cfg, "dispatch_summary.csv")))
    conv = sum(r.converged for r in results)
    mono = float(np.mean([r.monotone_fraction() for r in results]))
    print(f"{conv}/{len(results)} restarts converged; mean monotone d_G fraction {mono:.4f}")
    if conv < len(results):
        raise NumericError("some restarts did not reach the residual tolerance", converged=conv)
    return paths


def run_diffuse(cfg):
    from .diffusion import DiffusionParams
    from .wasserstein import ProxParams, diffuse_run

    act = make_activation(cfg.activation, cfg.dim, cfg.beta)
    obj = _objective(cfg)
    dp = DiffusionParams(act, obj, cfg.T, cfg.h, cfg.N, cfg.seed)
    pp = ProxParams(cfg.eps, cfg.h, cfg.T, cfg.max_fixed_point_iters, cfg.fp_tol, cfg.volume_correction)
    every = cfg.snapshot_every or cfg.steps or 1
    res = diffuse_run(dp, pp, cfg.steps, snapshot_every=every, record_timing=cfg.record_timing, knn_k=cfg.knn_k)
    p1 = export_trace(res.snapshot_header(cfg.dim), res.snapshot_rows(), _out(cfg, "diffuse_snapshots.csv"))
    p2 = export_trace(res.runtime_header, res.runtime_rows(), _out(cfg, "diffuse_runtime.csv"))
    print(f"free energy {res.free_energy[0]:.6g} -> {res.free_energy[-1]:.6g} over {cfg.steps} steps")
    return [p1, p2]


RUNNERS = {"descend": run_descend, "geodesic": run_geodesic, "dispatch": run_dispatch, "diffuse": run_diffuse}


def build_parser():
    parser = argparse.ArgumentParser(prog="hopfield-flows", description="Hopfield dynamics as geometric flows.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with a [%s] section" % name)
        p.add_argument("--no-timing", action="store_true", help="write zeros in wall-clock columns")
        for key, spec in schema.items():
            p.add_argument(f"--{key}", dest=f"opt_{key}", default=None, metavar="VALUE", help=spec.help)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    if args.no_timing:
        overrides["record_timing"] = "false"
    try:
        cfg = load_config(args.config, args.subcommand, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = RUNNERS[cfg.subcommand](cfg)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in paths[:5]:
        print(f"wrote {p}")
    if len(paths) > 5:
        print(f"... and {len(paths) - 5} more files")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
