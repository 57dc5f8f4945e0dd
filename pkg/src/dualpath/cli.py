"""Command-line front end.

Subcommands: solve (run either algorithm on an instance file), gen-rpc
(write a random routing instance), params (print the derived constants
table), verify (oracle cross-checks on a built-in small instance).

Exit codes: 0 converged, 2 iteration cap, 3 invalid instance,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import master, oracle, pathfollow, problem as problem_mod, rpc
from .scfun import omega_star

CSV_HEADER = "phase,k,t,lambda_bar,d_delta,feas_gap,inner_iters_total,elapsed_ms"

EXIT_OK = 0
EXIT_ITER_CAP = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4


def _fmt(v):
    return f"{v:.17g}"


def _csv_row(row, suppress_timing):
    ms = 0.0 if suppress_timing else row.elapsed_ms
    return (f"{row.phase},{row.k},{_fmt(row.t)},{_fmt(row.lambda_bar)},"
            f"{_fmt(row.d_delta)},{_fmt(row.feas_gap)},{row.inner_iters},"
            f"{_fmt(ms)}")


def _load_any_instance(path):
    with open(path) as fh:
        doc = json.load(fh)
    if rpc.is_rpc_document(doc):
        return rpc.to_problem(rpc.instance_from_dict(doc))
    return problem_mod.problem_from_dict(doc)


def cmd_solve(args):
    try:
        prob = _load_any_instance(args.instance)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: cannot load instance: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report_v = problem_mod.validate(prob)
    if not report_v.ok:
        print(f"error: invalid instance: {report_v}", file=sys.stderr)
        return EXIT_INVALID
    prob.prepare()
    mode = args.mode
    try:
        if mode == "exact":
            params = pathfollow.derive_params(0.0, nu=prob.nu_total, mode="exact")
            if args.beta_frac != 0.25:
                params = pathfollow.derive_params(
                    0.0, beta=args.beta_frac * pathfollow.BETA_STAR_EXACT,
                    nu=prob.nu_total, mode="exact")
        else:
            lo, hi, _ = pathfollow.beta_roots(args.delta_bar)
            params = pathfollow.derive_params(args.delta_bar,
                                              beta=args.beta_frac * hi,
                                              nu=prob.nu_total)
    except pathfollow.ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    suppress_timing = args.threads == 1
    log_fh = open(args.log, "w") if args.log else None
    if log_fh:
        log_fh.write(CSV_HEADER + "\n")

    def log_cb(row):
        if log_fh:
            log_fh.write(_csv_row(row, suppress_timing) + "\n")

    t_begin = time.perf_counter()
    try:
        report = pathfollow.solve(prob, params, t0=args.t0, eps_d=args.eps_d,
                                  threads=args.threads,
                                  adaptive=args.adaptive_t, log=log_cb)
    except (master.BlockFailure, pathfollow.NumericalFailure) as exc:
        if log_fh:
            log_fh.close()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        if log_fh:
            log_fh.close()
    wall_ms = 1e3 * (time.perf_counter() - t_begin)

    result = {
        "status": report.status,
        "phi_estimate": report.d_final,
        "feas_gap": report.feas_final,
        "lambda_bar": report.lambda_final,
        "t_final": report.t_final,
        "k": report.phase2_iters,
        "k_max": report.k_max,
        "phase1_iters": report.phase1_iters,
        "guard_events": report.guard_events,
        "wall_ms": wall_ms,
        "y": report.y.tolist(),
        "params": report.params.as_dict(),
        "flags": {"mode": mode, "t0": args.t0, "eps_d": args.eps_d,
                  "delta_bar": args.delta_bar, "beta_frac": args.beta_frac,
                  "threads": args.threads, "adaptive_t": bool(args.adaptive_t)},
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=1)
            fh.write("\n")
    print(f"status={report.status} d={report.d_final:.10g} "
          f"feas={report.feas_final:.3e} t={report.t_final:.3e} "
          f"k={report.phase2_iters}/{report.k_max} "
          f"phase1={report.phase1_iters}")
    if report.status == "converged":
        return EXIT_OK
    if report.status in ("phase1_cap", "phase2_cap"):
        return EXIT_ITER_CAP
    return EXIT_NUMERICAL


def cmd_gen_rpc(args):
    inst = rpc.generate(args.seed, args.nodes, args.links, args.commodities)
    rpc.save_instance(inst, args.out)
    dims = inst.model_dims()
    print(f"wrote {args.out}: M={dims['M']} blocks, n={dims['n']} variables, "
          f"m={dims['m']} conservation rows ({dims['m_reduced']} independent)")
    return EXIT_OK


def cmd_params(args):
    try:
        lo, hi, b3 = pathfollow.beta_roots(args.delta_bar)
        params = pathfollow.derive_params(args.delta_bar,
                                          beta=args.beta_frac * hi,
                                          nu=args.nu)
    except pathfollow.ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = [
        ("delta_bar", params.delta_bar),
        ("beta_lo", params.beta_lo),
        ("beta_hi", params.beta_hi),
        ("beta", params.beta),
        ("beta_3", b3),
        ("theta", params.theta),
        ("Delta_bar", params.Delta_bar),
        ("Delta_bar_star", params.Delta_bar_star),
        ("sigma", params.sigma),
        ("gamma", params.gamma),
        ("vartheta", params.vartheta),
        ("omega_star(vartheta)", omega_star(params.vartheta)),
        ("delta_hat_star", params.delta_hat_star),
        ("delta_hat_bar", params.delta_hat_bar),
        ("eta_lower", params.eta_lower),
        ("nu", params.nu),
    ]
    width = max(len(name) for name, _ in rows)
    for name, val in rows:
        print(f"{name:<{width}}  {val:.9f}")
    return EXIT_OK


def cmd_verify(args):
    """Small-instance cross-checks of the solver against the oracle."""
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] {name}" + (f"  ({detail})" if detail else ""))
        if not ok:
            failures += 1

    inst = rpc.generate(seed=3, n_nodes=5, n_links=7, n_commodities=2)
    prob = rpc.to_problem(inst).prepare()
    check("instance validates", problem_mod.validate(prob).ok)
    ora = oracle.solve_coupled(prob, tol=1e-6)
    eps_d = 1e-4
    params = pathfollow.derive_params(0.01, nu=prob.nu_total)
    report = pathfollow.solve(prob, params, t0=0.25, eps_d=eps_d)
    check("inexact solve converged", report.converged,
          f"k={report.phase2_iters}/{report.k_max}")
    from .scfun import omega_star as ws_
    tol = 2.0 * (1.0 + omega_star(params.delta_bar) / ws_(params.beta)) * eps_d
    gap = abs(report.d_final - ora.phi_star)
    check("dual value matches oracle optimum", gap <= tol + ora.gap,
          f"|d - phi*| = {gap:.3e} <= {tol:.3e}")
    check("feasibility gap within beta * t",
          report.feas_final <= params.beta * report.t_final * (1 + 1e-9))
    check("phase-2 iterations within bound",
          report.phase2_iters <= report.k_max)
    exact = pathfollow.solve_exact(prob, t0=0.25, eps_d=eps_d)
    check("exact solve converged", exact.converged)
    check("exact value matches oracle optimum",
          abs(exact.d_final - ora.phi_star) <= 2 * eps_d + ora.gap,
          f"|d - phi*| = {abs(exact.d_final - ora.phi_star):.3e}")
    print("verify:", "OK" if failures == 0 else f"{failures} failures")
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def build_parser():
    ap = argparse.ArgumentParser(prog="dualpath",
                                 description="Barrier-smoothed dual decomposition "
                                             "solver for block-separable programs")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve an instance file")
    sp.add_argument("--instance", required=True,
                    help="problem JSON or routing-instance JSON")
    sp.add_argument("--mode", choices=["inexact", "exact"], default="inexact")
    sp.add_argument("--delta-bar", type=float, default=0.01,
                    help="subproblem accuracy of the path-following phase")
    sp.add_argument("--beta-frac", type=float, default=0.25,
                    help="beta as a fraction of the largest admissible radius")
    sp.add_argument("--t0", type=float, default=0.25)
    sp.add_argument("--eps-d", type=float, default=1e-4)
    sp.add_argument("--adaptive-t", action="store_true",
                    help="measured-norm barrier decrease instead of sqrt(nu)")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--log", help="CSV iteration log path")
    sp.add_argument("--out", help="result JSON path")
    sp.set_defaults(func=cmd_solve)

    gp = sub.add_parser("gen-rpc", help="generate a routing instance")
    gp.add_argument("--seed", type=int, required=True)
    gp.add_argument("--nodes", type=int, required=True)
    gp.add_argument("--links", type=int, required=True)
    gp.add_argument("--commodities", type=int, required=True)
    gp.add_argument("--out", required=True)
    gp.set_defaults(func=cmd_gen_rpc)

    pp = sub.add_parser("params", help="print derived algorithm constants")
    pp.add_argument("--delta-bar", type=float, required=True)
    pp.add_argument("--beta-frac", type=float, default=0.25)
    pp.add_argument("--nu", type=float, default=2.0)
    pp.set_defaults(func=cmd_params)

    vp = sub.add_parser("verify", help="oracle cross-checks on a small instance")
    vp.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
