"""Command-line entry points.

Subcommands: solve (single NPBE solve at a parameter point), study (the
sparse-grid convergence study), bounds (the closed-form perturbation bound
ledger), region (analyticity-region radii and sparse-grid error constants).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import yaml

from . import bounds as bounds_mod
from . import harness, pde, region, smolyak
from .errors import ConfigError, NpbeUqError


def _load_raw(path: str) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} is not a mapping")
    return raw


def cmd_solve(args) -> int:
    config = harness.load_config(args.config)
    domain = config.domain
    grid = config.grid()
    charges = harness.ingest_charges(config, grid)
    if args.y:
        y = np.array([float(t) for t in args.y.split(",")])
        if len(y) != config.N:
            raise ConfigError(f"--y needs {config.N} components")
        charges = harness.shifted_charges(charges, config.alpha,
                                          harness.SQRT3 * y, domain)
    coeffs = pde.PBECoefficients(np.array(config.eps), np.array(config.kappa2),
                                 charges, config.boundary_value)
    from .geometry import DomainMap
    dmap = DomainMap([])
    u, info = pde.newton_solve_npbe(domain, dmap, coeffs, None, grid,
                                    tol=config.newton_tol, cg_tol=config.cg_tol,
                                    max_iter=config.max_newton)
    print(f"grid {grid.shape[0]}^3, h = {grid.h:.4f}")
    print(f"newton iterations: {info.iterations}")
    print(f"final residual: {info.residual_history[-1]:.3e}")
    print(f"qoi integral: {pde.qoi_integral(u):.12g}")
    print(f"potential range: [{u.values.min():.6g}, {u.values.max():.6g}]")
    return 0


def cmd_study(args) -> int:
    config = harness.load_config(args.config)

    def progress(done, total):
        print(f"\rknot solves: {done}/{total}", end="", file=sys.stderr, flush=True)

    result = harness.run_study(config, progress=progress)
    print(file=sys.stderr)
    print(result.csv_text, end="")
    ok = [r for r in result.records if not r.failed]
    if len(ok) >= 2:
        fit = harness.fit_rate(ok)
        print(f"# slope {fit.slope:.4f}, r^2 {fit.r_squared:.4f}")
    if config.csv_path:
        print(f"# csv written to {config.csv_path}")
    if config.svg_path:
        print(f"# svg written to {config.svg_path}")
    return 0


def cmd_bounds(args) -> int:
    raw = _load_raw(args.config)
    blk = raw.get("bounds")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'bounds' block")
    inp = bounds_mod.BoundsInput(**blk)
    rows = [("b1", inp.b1), ("binf", inp.binf),
            ("y0_inf", inp.y0_inf), ("y_inf", inp.y_inf)]
    rows += list(bounds_mod.prop_a_bounds(inp).as_dict().items())
    rows += [("a_coeff", bounds_mod.a_coeff(inp)),
             ("b_coeff", bounds_mod.b_coeff(inp)),
             ("nonlinear_term", bounds_mod.nonlinear_term_bound(inp)),
             ("forcing_term", bounds_mod.forcing_term_bound(inp)),
             ("m_estimate_l2", bounds_mod.m_estimate(inp))]
    print("name,value")
    for name, value in rows:
        print(f"{name},{value:.12g}")
    return 0


def cmd_region(args) -> int:
    raw = _load_raw(args.config)
    blk = raw.get("region")
    if not isinstance(blk, dict):
        raise ConfigError("config needs a 'region' block")
    M, a, R = (float(blk[k]) for k in ("M", "a", "R"))
    est = region.region_estimate(M, a, R)
    print(f"theta,{est.theta:.12g}")
    print(f"xi,{est.xi:.12g}")
    print(f"sigma_star,{est.sigma_star:.12g}")
    N = int(blk.get("N", 1))
    # the solution-norm bound doubles as the polyellipse sup estimate
    m_tilde = float(blk.get("M_tilde", est.xi))
    c = region.error_constants(est.sigma_star, N, m_tilde)
    for name in ("sigma", "c2_tilde", "delta_star", "mu1", "mu2", "mu3",
                 "a_delta_sigma", "C1", "Q"):
        print(f"{name},{getattr(c, name):.12g}")
    levels = blk.get("levels", [1, 2, 3, 4, 5])
    rule = blk.get("rule", "SM")
    print("w,eta,regime,bound")
    for w in levels:
        eta = smolyak.build_plan(rule, int(w), N).n_knots
        eb = region.error_bound(est.sigma_star, N, m_tilde, int(w), eta)
        print(f"{w},{eta},{eb.regime},{eb.bound:.6g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="npbe-uq",
        description="Nonlinear Poisson-Boltzmann solver with sparse-grid "
                    "uncertainty quantification under random domain shifts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the NPBE at one parameter point")
    p.add_argument("--config", required=True)
    p.add_argument("--y", default=None, help="comma-separated parameter point on [-1,1]^N")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="run the sparse-grid convergence study")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("bounds", help="print the perturbation bound ledger")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("region", help="analyticity region and error constants")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_region)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NpbeUqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
