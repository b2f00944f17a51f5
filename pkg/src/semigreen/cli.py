"""Command-line front end.

Subcommands: solve, exhaust, thin-check, criterion, green, verify.
All outputs are CSV files without timestamps; identical configs and seeds
produce byte-identical bodies. Exit codes: 0 success, 2 validation
failure, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .operator import assemble
from .potential import factorize, green_potential, halfplane_green
from .solver import NonConvergence, solve_U
from .exhaustion import run_exhaustion
from .thinness import ThinnessCertificate, criterion_integral, verify_certificate
from .verification import run_suites

__all__ = ["main"]


def _write_csv(path: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _out(args, cfg: RunConfig, suffix: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, f"{cfg.basename}{suffix}")


def _position_header(dim: int):
    return ["x"] if dim == 1 else ["x", "y"]


def _cmd_solve(args, cfg: RunConfig) -> int:
    grid = cfg.grid()
    op = assemble(grid, cfg.coeffs)
    gop = factorize(op)
    f = cfg.experiment_opts["boundary_f"](grid.nodes[grid.boundary_nodes])
    scheme = args.scheme or cfg.scheme
    tol = args.tol if args.tol is not None else cfg.tol
    max_iter = args.max_iter if args.max_iter is not None else cfg.max_iter
    u, rep = solve_U(op, gop, f, cfg.phi, tol=tol, max_iter=max_iter,
                     scheme=scheme, omega=cfg.omega)

    rows = [[cfg.fmt(c) for c in pt] + [cfg.fmt(v)] for pt, v in zip(grid.nodes, u)]
    _write_csv(_out(args, cfg, ".csv"), _position_header(grid.dim) + ["u"], rows)
    gaps = rep.sandwich_gap_history
    log_rows = [
        [str(i), cfg.fmt(gaps[i]) if i < len(gaps) else "", cfg.fmt(r)]
        for i, r in enumerate(rep.residual_history)
    ]
    _write_csv(_out(args, cfg, "_log.csv"),
               ["iteration", "envelope_gap", "identity_residual"], log_rows)
    print(f"status={rep.status} iterations={rep.iterations} "
          f"identity_residual={cfg.fmt(rep.final_identity_residual)}")
    return 0 if rep.status == "converged" else 3


def _cmd_exhaust(args, cfg: RunConfig) -> int:
    exh = cfg.build_exhaustion()
    run = run_exhaustion(exh, cfg.coeffs, cfg.phi, cfg.experiment_opts["super_s"],
                         tol=cfg.tol, max_iter=cfg.max_iter, scheme=cfg.scheme)
    rows = [
        [str(n), cfg.fmt(run.anchor_values[n]), cfg.fmt(run.tail_metrics[n]),
         cfg.fmt(float(np.min(u))), cfg.fmt(float(np.max(u)))]
        for n, (_, u, _) in enumerate(run.stages)
    ]
    _write_csv(_out(args, cfg, ".csv"),
               ["stage", "anchor_value", "identity_residual", "min_u", "max_u"], rows)
    verdict = f"verdict={run.triviality_verdict}"
    with open(_out(args, cfg, "_verdict.txt"), "w", encoding="utf-8") as fh:
        fh.write(verdict + "\n")
    print(verdict)
    return 0


def _cmd_thin_check(args, cfg: RunConfig) -> int:
    grid = cfg.grid()
    opts = cfg.experiment_opts
    cert = ThinnessCertificate(set_A=opts["set_A"], witness_s=opts["witness_s"],
                               margin=opts["margin"])
    verdict = verify_certificate(grid, cfg.coeffs, cert)
    rows = [
        ["passed", str(verdict.passed).lower()],
        ["margin", cfg.fmt(opts["margin"])],
        ["min_over_grid", cfg.fmt(verdict.min_over_grid)],
        ["min_on_A", cfg.fmt(verdict.min_on_A)],
        ["superharmonic_residual", cfg.fmt(verdict.superharmonic_residual)],
    ]
    _write_csv(_out(args, cfg, ".csv"), ["field", "value"], rows)
    tail = "" if verdict.passed else " " + "; ".join(verdict.reasons)
    print(f"verdict={'pass' if verdict.passed else 'fail'}{tail}")
    return 0


def _cmd_criterion(args, cfg: RunConfig) -> int:
    opts = cfg.experiment_opts
    rep = criterion_integral(opts["kernel"], cfg.phi, opts["c0"], opts["set_A"],
                             opts["truncations"], x0=opts["x0"], cell=opts["cell"])
    rows = []
    for k, (r, v) in enumerate(zip(rep.radii, rep.values)):
        inc = cfg.fmt(rep.increments[k - 1]) if k >= 1 else ""
        rat = cfg.fmt(rep.ratios[k - 2]) if k >= 2 else ""
        rows.append([cfg.fmt(r), cfg.fmt(v), inc, rat])
    _write_csv(_out(args, cfg, ".csv"), ["radius", "value", "increment", "ratio"], rows)
    print(f"verdict={rep.verdict}")
    return 0


def _cmd_green(args, cfg: RunConfig) -> int:
    grid = cfg.grid()
    oracle = args.oracle or cfg.experiment_opts.get("oracle", "interval")
    compare = args.compare or cfg.experiment_opts.get("compare", False)
    op = assemble(grid, cfg.coeffs)
    gop = factorize(op)
    header = _position_header(grid.dim) + ["discrete"]
    if oracle == "interval":
        if grid.dim != 1:
            raise ConfigError("[experiment] oracle", "interval oracle needs a 1D grid")
        a, b = grid.bbox[0]
        g = green_potential(gop, 1.0)
        analytic = (grid.nodes[:, 0] - a) * (b - grid.nodes[:, 0]) / 2.0
        keep = np.arange(grid.n_nodes)
    else:
        if grid.dim != 2:
            raise ConfigError("[experiment] oracle", "halfplane oracle needs a 2D grid")
        source = cfg.experiment_opts.get("source") or (0.0, 1.0)
        try:
            j = grid.index_of(source)
        except ValueError as exc:
            raise ConfigError("[experiment] source", str(exc)) from exc
        if not grid.interior_mask[j]:
            raise ConfigError("[experiment] source", f"source {source} is not interior")
        e = np.zeros(grid.n_interior)
        e[np.searchsorted(grid.interior_nodes, j)] = 1.0 / (grid.spacing[0] * grid.spacing[1])
        g = np.zeros(grid.n_nodes)
        g[grid.interior_nodes] = gop.solve(e)
        analytic = np.array([
            halfplane_green(tuple(z), source) if k != j else np.nan
            for k, z in enumerate(grid.nodes)
        ])
        keep = np.flatnonzero(np.arange(grid.n_nodes) != j)  # kernel is singular at the source
    rows = []
    for k in keep:
        row = [cfg.fmt(c) for c in grid.nodes[k]] + [cfg.fmt(g[k])]
        if compare:
            row += [cfg.fmt(analytic[k]), cfg.fmt(abs(g[k] - analytic[k]))]
        rows.append(row)
    if compare:
        header += ["analytic", "abs_error"]
    _write_csv(_out(args, cfg, ".csv"), header, rows)
    if compare:
        errs = np.abs(g[keep] - analytic[keep])
        print(f"max_abs_error={cfg.fmt(float(np.max(errs)))}")
    return 0


def _cmd_verify(args, cfg: RunConfig) -> int:
    opts = cfg.experiment_opts
    results = run_suites(names=opts.get("suites"), seed=args.seed,
                         trials=opts.get("trials", 25))
    rows = [[r.name, str(r.trials), str(r.failures),
             "pass" if r.passed else "fail"] for r in results]
    _write_csv(_out(args, cfg, ".csv"), ["suite", "trials", "failures", "status"], rows)
    width = max(len(r.name) for r in results)
    for r in results:
        line = f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL'} ({r.failures}/{r.trials} failures)"
        if r.detail and not r.passed:
            line += f"  {r.detail}"
        print(line)
    return 0 if all(r.passed for r in results) else 3


_COMMANDS = {
    "solve": _cmd_solve,
    "exhaust": _cmd_exhaust,
    "thin-check": _cmd_thin_check,
    "criterion": _cmd_criterion,
    "green": _cmd_green,
    "verify": _cmd_verify,
}


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to the run-config file")
    common.add_argument("--out-dir", default=".", help="directory for CSV outputs")
    common.add_argument("--seed", type=int, default=0,
                        help="RNG seed for randomized suites")
    p = argparse.ArgumentParser(prog="semigreen",
                                description="semilinear potential-theory toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", parents=[common], help="single fixed-point solve")
    sp.add_argument("--scheme", choices=("sandwich", "damped_picard", "newton"))
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sub.add_parser("exhaust", parents=[common], help="staged exhaustion run")
    sub.add_parser("thin-check", parents=[common], help="verify a thinness certificate")
    sub.add_parser("criterion", parents=[common], help="existence-criterion integral trend")
    gp = sub.add_parser("green", parents=[common], help="Green solve vs analytic oracle")
    gp.add_argument("--oracle", choices=("interval", "halfplane"))
    gp.add_argument("--compare", action="store_true",
                    help="add analytic and abs_error columns")
    sub.add_parser("verify", parents=[common], help="run the invariant suites")
    return p


def _default_verify_config() -> RunConfig:
    from .solver import Nonlinearity

    cfg = RunConfig(dim=1, spacing=0.125, bbox=((0.0, 1.0),),
                    coeffs=None, phi=Nonlinearity(phi=lambda p, t: np.zeros(p.shape[0])),
                    experiment="verify", experiment_opts={"suites": None, "trials": 25})
    cfg.basename = "verify"
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.experiment != args.command and args.command != "verify":
                raise ConfigError("[experiment] type",
                                  f"config declares {cfg.experiment!r} but the "
                                  f"{args.command!r} subcommand was invoked")
        elif args.command == "verify":
            cfg = _default_verify_config()
        else:
            raise ConfigError("--config", f"the {args.command} subcommand needs a config file")
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
