"""Batch experiment runner.

Subcommands build networks, sweep them against oracles, and write CSV
reports plus a JSON summary (schema 1).  The exit code is 0 exactly when
every certified bound held.  Runs are deterministic for a fixed seed;
RELU_RB_THREADS caps worker parallelism in sweeps.
"""

import argparse
import sys
import time

import numpy as np

from . import backend, verify
from .approx import inversion_net, vec
from .linalg import random_matrix_with_norm
from .network import realize_batch, size_metrics


def _parse_floats(text):
    return [float(part) for part in text.split(",") if part]


def _parse_ints(text):
    return [int(part) for part in text.split(",") if part]


def _cmd_calculus(args):
    rows, summary = verify.run_calculus_suite(
        seed=args.seed, pairs=args.pairs, out_dir=args.out)
    for row in rows:
        state = "ok" if row["passed"] else "FAIL"
        print(f"{state:4s} {row['check']:36s} trials={row['trials']} "
              f"failures={row['failures']}")
    print(f"calculus suite: {'ok' if summary['ok'] else 'FAILED'}")
    return 0 if summary["ok"] else 1


def _cmd_inversion(args):
    rows, summary = verify.run_inversion_sweep(
        args.dims, args.deltas, args.eps_list,
        samples=args.samples, seed=args.seed, out_dir=args.out)
    for row in rows:
        state = "ok" if row["passed"] else "FAIL"
        print(f"{state:4s} d={row['d']} delta={row['delta']} "
              f"eps={row['eps']} m={row['m']} M={row['weights']} "
              f"err={row['max_error']:.3e}")
    print(f"shape-ratio spread: {summary['shape_ratio_spread']:.2f}")
    print(f"inversion sweep: {'ok' if summary['ok'] else 'FAILED'}")
    return 0 if summary["ok"] else 1


def _cmd_pipeline(args):
    result = verify.run_pde_pipeline(
        args.problem, eps=args.eps, eps_tilde=args.eps_tilde,
        samples=args.samples, seed=args.seed, out_dir=args.out,
        pod_tol=args.pod_tol, max_dim=args.max_dim,
        snapshots=args.snapshots)
    summary = result["summary"]
    for key in ("rb_dim", "eps", "eps_tilde", "sup_err_rb",
                "sup_err_h_gram", "sup_err_h_seminorm", "weights_rb_net",
                "weights_h_net", "seconds"):
        print(f"{key} = {summary[key]}")
    print(f"pipeline: {'ok' if summary['ok'] else 'FAILED'}")
    return 0 if summary["ok"] else 1


def _cmd_bench(args):
    """Compare the compiled and python kernels on one inversion net."""
    net = inversion_net(args.d, args.delta, args.eps)
    report = size_metrics(net)
    rng = np.random.default_rng(args.seed)
    batch = np.column_stack([
        vec(random_matrix_with_norm(rng, (args.d, args.d),
                                    1.0 - args.delta))
        for _ in range(args.batch)])
    print(f"net: depth={report.depth} weights={report.total_weights} "
          f"batch={args.batch}")
    results = {}
    previous = backend.active_backend()
    try:
        for name in backend.available_backends():
            backend.set_backend(name)
            realize_batch(net, batch)  # warm up
            best = np.inf
            for _ in range(args.repeat):
                start = time.perf_counter()
                out = realize_batch(net, batch)
                best = min(best, time.perf_counter() - start)
            results[name] = (best, out)
            print(f"{name:9s} {best * 1e3:9.1f} ms per batch")
    finally:
        backend.set_backend(previous)
    if len(results) == 2:
        (fast, out_a), (slow, out_b) = (results["compiled"],
                                        results["python"])
        identical = np.array_equal(out_a, out_b)
        print(f"speedup: {slow / fast:.1f}x  bit-identical: {identical}")
        return 0 if identical else 1
    print("only one backend available; nothing to compare")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relu-rb",
        description="Assemble ReLU solver networks and verify their "
                    "certified error and size bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_calc = sub.add_parser("calculus",
                            help="randomized structural checks")
    p_calc.add_argument("--pairs", type=int, default=500)
    p_calc.add_argument("--seed", type=int, default=0)
    p_calc.add_argument("--out", type=str, default=None)
    p_calc.set_defaults(func=_cmd_calculus)

    p_inv = sub.add_parser("inversion", help="inversion error/size sweep")
    p_inv.add_argument("--dims", type=_parse_ints, default=[2, 4, 8])
    p_inv.add_argument("--deltas", type=_parse_floats,
                       default=[0.25, 0.5])
    p_inv.add_argument("--eps-list", type=_parse_floats,
                       default=[0.2, 0.1, 0.05])
    p_inv.add_argument("--samples", type=int, default=100)
    p_inv.add_argument("--seed", type=int, default=0)
    p_inv.add_argument("--out", type=str, default=None)
    p_inv.set_defaults(func=_cmd_inversion)

    p_pde = sub.add_parser("pipeline",
                           help="full PDE pipeline verification")
    p_pde.add_argument("--problem", type=str, required=True)
    p_pde.add_argument("--eps", type=float, default=None)
    p_pde.add_argument("--eps-tilde", type=float, default=None)
    p_pde.add_argument("--samples", type=int, default=200)
    p_pde.add_argument("--seed", type=int, default=0)
    p_pde.add_argument("--out", type=str, default=None)
    p_pde.add_argument("--pod-tol", type=float, default=1e-8)
    p_pde.add_argument("--max-dim", type=int, default=15)
    p_pde.add_argument("--snapshots", type=int, default=200)
    p_pde.set_defaults(func=_cmd_pipeline)

    p_bench = sub.add_parser("bench",
                             help="compare compiled and python kernels")
    p_bench.add_argument("--d", type=int, default=4)
    p_bench.add_argument("--delta", type=float, default=0.5)
    p_bench.add_argument("--eps", type=float, default=0.1)
    p_bench.add_argument("--batch", type=int, default=64)
    p_bench.add_argument("--repeat", type=int, default=3)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
