"""Batch front-end: generate or load instances, run solver comparisons,
emit traces, plans, gap certificates and convergence plots.

Exit codes: 0 success (for ``certify``: gap within epsilon), 1 failed
certification, 2 configuration error, 3 non-finite solver state.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

ALGORITHMS = ("pam", "pame", "apga")


def _configure_threads() -> None:
    # Must happen before numpy initializes its thread pools.
    threads = os.environ.get("EQOT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqot",
        description="equitable optimal transport solvers and certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve an instance with one or more algorithms")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance JSON file")
    src.add_argument("--dataset", choices=["fragmented_hypercube", "gaussian",
                                           "metric_suite"],
                     help="generate the instance instead of loading it")
    run.add_argument("--n", type=int, default=100)
    run.add_argument("--agents", type=int, default=5)
    run.add_argument("--d", type=int, default=10)
    run.add_argument("--m-star", type=int, default=2)
    run.add_argument("--noise", type=float, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--algorithms", default="pam",
                     help="comma-separated subset of pam,pame,apga")
    run.add_argument("--epsilon", type=float, default=0.05)
    run.add_argument("--eta", type=float, default=None,
                     help="override the scheduled regularization")
    run.add_argument("--tau", type=float, default=None,
                     help="override the weight step (default with --eta: 5*eta/c_inf^2)")
    run.add_argument("--theta", type=float, default=0.1)
    run.add_argument("--lipschitz", type=float, default=None,
                     help="gradient Lipschitz estimate for apga")
    run.add_argument("--max-iters", type=int, default=2000)
    run.add_argument("--no-stop", action="store_true",
                     help="disable residual stopping; run max-iters out")
    run.add_argument("--record-every", type=int, default=1)
    run.add_argument("--out", default=None,
                     help="output directory (default: EQOT_OUTPUT_DIR or .)")
    run.add_argument("--no-csv", action="store_true")
    run.add_argument("--svg", action="store_true",
                     help="emit a log-error-vs-time plot (runs a reference solve)")
    run.add_argument("--plan", action="store_true", help="emit rounded plans")
    run.add_argument("--gap", action="store_true", help="emit gap certificates")
    run.add_argument("--ref-iters", type=int, default=20000,
                     help="reference run length for the error plot")
    run.add_argument("--parallel", action="store_true",
                     help="run algorithms concurrently (timings not comparable)")
    run.set_defaults(func=cmd_run)

    cert = sub.add_parser("certify", help="check feasibility and duality gap")
    cert.add_argument("--instance", required=True)
    cert.add_argument("--plan", required=True, help="plan tensor JSON file")
    cert.add_argument("--weights", required=True, help="agent weights JSON file")
    cert.add_argument("--epsilon", type=float, default=0.05)
    cert.add_argument("--method", choices=["exact", "entropic"], default="exact")
    cert.set_defaults(func=cmd_certify)

    gen = sub.add_parser("gen", help="write a synthetic instance to a file")
    gen.add_argument("--dataset", choices=["fragmented_hypercube", "gaussian",
                                           "metric_suite"], required=True)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--agents", type=int, default=5)
    gen.add_argument("--d", type=int, default=10)
    gen.add_argument("--m-star", type=int, default=2)
    gen.add_argument("--noise", type=float, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    orc = sub.add_parser("oracle", help="brute-force value for a tiny instance")
    orc.add_argument("--instance", required=True)
    orc.add_argument("--resolution", type=int, default=21)
    orc.add_argument("--out", default=None, help="write the oracle plans here")
    orc.set_defaults(func=cmd_oracle)
    return parser


def _build_problem(args):
    from . import datasets, fileio

    if args.instance:
        return fileio.load_problem(args.instance)
    if args.dataset == "metric_suite":
        return datasets.gen_metric_suite(n=args.n, seed=args.seed)
    spec = datasets.DatasetSpec(kind=args.dataset, n=args.n,
                                n_agents=args.agents, d=args.d,
                                m_star=args.m_star, noise=args.noise,
                                seed=args.seed)
    return datasets.generate(spec)


def _run_config(args, problem, algorithm):
    from .core import default_schedule

    schedule_alg = "pame" if algorithm == "pame" else "pam"
    config = default_schedule(problem, args.epsilon, algorithm=schedule_alg,
                              theta=args.theta, max_iters=args.max_iters)
    overrides = {"record_every": args.record_every}
    if args.eta is not None:
        overrides["eta"] = args.eta
        overrides["tau"] = (args.tau if args.tau is not None
                            else 5.0 * args.eta / problem.c_inf ** 2)
    elif args.tau is not None:
        overrides["tau"] = args.tau
    if args.no_stop:
        overrides.update(col_residual_tol=None, lambda_step_tol=None,
                         lambda_y_tol=None, stagnation_tol=0.0)
    if algorithm == "apga" and args.lipschitz is not None:
        overrides["apga_lipschitz"] = args.lipschitz
    return dataclasses.replace(config, **overrides)


def _solver(algorithm):
    from . import solvers

    return {"pam": solvers.solve_pam, "pame": solvers.solve_pame,
            "apga": solvers.solve_apga}[algorithm]


def cmd_run(args) -> int:
    from . import fileio
    from .diagnostics import duality_gap, eot_error

    algorithms = [s.strip() for s in args.algorithms.split(",") if s.strip()]
    if not algorithms:
        print("error: no algorithms requested", file=sys.stderr)
        return 2
    for name in algorithms:
        if name not in ALGORITHMS:
            print(f"error: unknown algorithm {name!r}", file=sys.stderr)
            return 2

    problem = _build_problem(args)
    out = fileio.output_dir(args.out)

    def one(name):
        return name, _solver(name)(problem, _run_config(args, problem, name))

    if args.parallel and len(algorithms) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=len(algorithms)) as pool:
            results = dict(pool.map(one, algorithms))
    else:
        results = dict(one(name) for name in algorithms)

    ell_star = None
    if args.svg:
        ref_config = dataclasses.replace(
            _run_config(args, problem, "pam"), max_iters=args.ref_iters,
            col_residual_tol=None, lambda_step_tol=None, lambda_y_tol=None,
            record_every=max(1, args.ref_iters // 100),
        )
        ref = _solver("pam")(problem, ref_config)
        ell_star = ref.trace[-1].primal

    curves = {}
    for name, result in results.items():
        if not args.no_csv:
            fileio.write_trace_csv(result.trace, problem.n_agents,
                                   os.path.join(out, f"{name}_trace.csv"))
        if args.plan:
            fileio.save_plans(result.plan.pi,
                              os.path.join(out, f"{name}_plan.json"))
            fileio.save_lambda(result.lam_hat,
                               os.path.join(out, f"{name}_lambda.json"))
        if args.gap:
            method = "exact" if problem.n <= 512 else "entropic"
            report = duality_gap(result.plan, result.lam_hat, problem,
                                 method=method, epsilon=args.epsilon)
            doc = {
                "upper": report.upper, "lower": report.lower,
                "gap": report.gap, "spread": report.spread,
                "argmax_agent": report.argmax_agent,
                "agent_costs": report.agent_costs.tolist(),
                "method": report.method, "epsilon": args.epsilon,
                "certified": bool(report.gap <= args.epsilon),
            }
            with open(os.path.join(out, f"{name}_gap.json"), "w") as fh:
                json.dump(doc, fh, indent=1)
                fh.write("\n")
        if ell_star is not None:
            times = [rec.time_ms for rec in result.trace]
            errors = [abs(rec.primal - ell_star) for rec in result.trace]
            curves[name] = (times, errors)
        print(f"{name}: {result.reason} after {result.iterations} iterations, "
              f"F = {result.trace[-1].objective:.6g}")

    if curves:
        fileio.svg_error_plot(curves, os.path.join(out, "error_vs_time.svg"))
    return 0


def cmd_certify(args) -> int:
    import numpy as np

    from . import fileio
    from .core import PlanTensor, plan_feasibility_residual
    from .diagnostics import duality_gap

    problem = fileio.load_problem(args.instance)
    pi = fileio.load_plans(args.plan)
    lam = fileio.load_lambda(args.weights)
    if pi.shape != problem.costs.shape or lam.shape != (problem.n_agents,):
        print("error: artifact shapes do not match the instance",
              file=sys.stderr)
        return 2
    residual = plan_feasibility_residual(pi, problem.a, problem.b)
    if np.any(pi < -1e-12) or residual > 1e-8:
        print(f"infeasible plan: coupling residual {residual:.3g} (L1), "
              f"min entry {pi.min():.3g}", file=sys.stderr)
        return 2
    if abs(lam.sum() - 1.0) > 1e-9 or np.any(lam < -1e-12):
        print("error: weights are not a probability vector", file=sys.stderr)
        return 2
    lam = np.maximum(lam, 0.0)
    lam = lam / lam.sum()
    plans = PlanTensor(pi=np.maximum(pi, 0.0), feasible=residual <= 1e-10)
    report = duality_gap(plans, lam, problem, method=args.method,
                         epsilon=args.epsilon)
    print(f"upper = {report.upper:.12g}")
    print(f"lower = {report.lower:.12g} ({report.method})")
    print(f"gap = {report.gap:.12g}")
    print(f"spread = {report.spread:.12g}")
    print(f"certified at epsilon = {args.epsilon:g}: "
          f"{'yes' if report.gap <= args.epsilon else 'no'}")
    return 0 if report.gap <= args.epsilon else 1


def cmd_gen(args) -> int:
    from . import datasets, fileio

    if args.dataset == "metric_suite":
        problem = datasets.gen_metric_suite(n=args.n, seed=args.seed)
    else:
        spec = datasets.DatasetSpec(kind=args.dataset, n=args.n,
                                    n_agents=args.agents, d=args.d,
                                    m_star=args.m_star, noise=args.noise,
                                    seed=args.seed)
        problem = datasets.generate(spec)
    fileio.save_problem(problem, args.out)
    print(f"wrote {args.dataset} instance (n={problem.n}, "
          f"N={problem.n_agents}) to {args.out}")
    return 0


def cmd_oracle(args) -> int:
    from . import fileio
    from .oracle import GridSpec, brute_saddle

    problem = fileio.load_problem(args.instance)
    result = brute_saddle(problem, GridSpec(resolution=args.resolution))
    print(f"value = {result.value:.12g}")
    print(f"error_bound = {result.error_bound:.12g}")
    print(f"lambda = {result.lam.tolist()}")
    if args.out:
        fileio.save_plans(result.plans.pi, args.out)
    return 0


def main(argv=None) -> int:
    _configure_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    from .core import EotError, NonFinite

    try:
        return args.func(args)
    except NonFinite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (EotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
