"""Command-line front end.

Exit status: 0 converged/success, 1 input or usage error, 2 iteration
budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import SolveReport, hellinger_imbalance
from .instances import (
    ProblemInstance,
    gen_euclidean_ot,
    gen_uniform_cost,
    parse_instance,
    read_csv_matrix,
    write_report,
)
from .kernel import logsumexp, materialize
from .oracles import exact_ot, karp_mmc
from .osborne import OsborneConfig, offdiagonal_sums, parse_strategy, run_osborne, solve_mmc
from .sinkhorn import SinkhornConfig, run_sinkhorn, solve_ot

log = logging.getLogger("ot_mmc")

EXIT_OK, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2
VERIFY_OT_MAX_N = 64
VERIFY_MMC_MAX_N = 512
MATRIX_MAX_N = 64

GENERATORS = {
    "uniform": {"n": int, "seed": int, "lo": float, "hi": float},
    "euclidean": {"n": int, "d": int, "p": float, "seed": int},
}
SUITES = {
    "uniform-ot": ("ot", "uniform"),
    "euclidean-ot": ("ot", "euclidean"),
    "uniform-mmc": ("mmc", "uniform"),
}


class UsageError(Exception):
    pass


def parse_gen_spec(spec: str, kind: str) -> ProblemInstance:
    """Build an instance from ``name:key=val,key=val``; unknown keys are errors."""
    name, _, body = spec.partition(":")
    if name not in GENERATORS:
        raise UsageError(f"unknown generator {name!r}; expected one of {sorted(GENERATORS)}")
    types = GENERATORS[name]
    params = {}
    for item in filter(None, body.split(",")):
        key, eq, val = item.partition("=")
        key = key.strip()
        if not eq:
            raise UsageError(f"generator parameter {item!r} is not key=value")
        if key not in types:
            raise UsageError(f"unknown key {key!r} for generator {name!r}; allowed: {sorted(types)}")
        try:
            params[key] = types[key](val)
        except ValueError:
            raise UsageError(f"bad value for {key!r}: {val!r}") from None
    required = {"uniform": ("n", "seed"), "euclidean": ("n", "d", "p", "seed")}[name]
    missing = [k for k in required if k not in params]
    if missing:
        raise UsageError(f"generator {name!r} needs {', '.join(missing)}")
    try:
        if name == "uniform":
            return gen_uniform_cost(kind=kind, **params)
        return gen_euclidean_ot(kind=kind, **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_instance(path: str, kind: str) -> ProblemInstance:
    text = Path(path).read_text()
    if path.endswith(".csv"):
        C = read_csv_matrix(text)
        n = C.shape[0]
        marg = np.full(n, 1.0 / n) if kind in ("ot", "scale") else None
        return ProblemInstance(kind, C, marg, marg, {"source": "csv"})
    inst = parse_instance(text)
    if inst.kind != kind:
        raise UsageError(f"instance kind {inst.kind!r} does not match command {kind!r}")
    return inst


def _get_instance(args, kind) -> ProblemInstance:
    if getattr(args, "gen", None):
        return parse_gen_spec(args.gen, kind)
    return load_instance(args.input, kind)


def _write(path, text):
    Path(path).write_text(text)


def _write_trace(path, report: SolveReport, with_kl: bool):
    cols = ["iter", "dual", "imbalance"] + (["kl_row", "kl_col"] if with_kl else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in report.trace:
            row = [rec.iteration, repr(rec.dual), repr(rec.imbalance)]
            if with_kl:
                row += [repr(rec.extra.get("kl_row", float("nan"))),
                        repr(rec.extra.get("kl_col", float("nan")))]
            w.writerow(row)


def verify_ot(inst: ProblemInstance, report: SolveReport) -> None:
    if inst.n > VERIFY_OT_MAX_N:
        report.extra["verify_skipped"] = f"n={inst.n} exceeds {VERIFY_OT_MAX_N}"
        return
    try:
        value, _ = exact_ot(inst.cost, inst.mu, inst.nu)
    except ValueError as exc:
        report.extra["verify_skipped"] = str(exc)
        return
    report.extra["oracle_value"] = value
    report.extra["abs_gap"] = abs(report.value - value)


def verify_mmc(inst: ProblemInstance, report: SolveReport) -> None:
    if inst.n > VERIFY_MMC_MAX_N:
        report.extra["verify_skipped"] = f"n={inst.n} exceeds {VERIFY_MMC_MAX_N}"
        return
    value, cycle = karp_mmc(inst.cost)
    report.extra["oracle_value"] = value
    report.extra["oracle_cycle"] = list(cycle.vertices)
    report.extra["abs_gap"] = abs(report.value - value)


def _solve(kind, inst, epsilon, strategy="greedy", seed=None, verify=False) -> SolveReport:
    if kind == "ot":
        report = solve_ot(inst.cost, inst.mu, inst.nu, epsilon)
        if verify:
            verify_ot(inst, report)
    else:
        report = solve_mmc(inst.cost, epsilon, strategy=strategy, seed=seed)
        if verify:
            verify_mmc(inst, report)
    return report


def cmd_solve(args, kind) -> int:
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    inst = _get_instance(args, kind)
    strategy, seed = parse_strategy(getattr(args, "strategy", "greedy"))
    report = _solve(kind, inst, args.epsilon, strategy, seed, args.verify)
    _write(args.out, write_report(report))
    if args.trace:
        _write_trace(args.trace, report, with_kl=(kind == "ot"))
    return EXIT_OK if report.converged else EXIT_BUDGET


def cmd_scale(args) -> int:
    inst = load_instance(args.input, "scale")
    cfg = SinkhornConfig(eta=args.eta, marginal_tolerance=args.tol, max_iterations=args.max_iter)
    M, report = run_sinkhorn(inst.cost, inst.mu, inst.nu, cfg)
    report.extra["x"] = M.x.tolist()
    report.extra["y"] = M.y.tolist()
    if inst.n <= MATRIX_MAX_N:
        try:
            report.certificate = materialize(M)
        except OverflowError as exc:
            report.extra["matrix_skipped"] = str(exc)
    _write(args.out, write_report(report))
    return EXIT_OK if report.converged else EXIT_BUDGET


def cmd_balance(args) -> int:
    inst = load_instance(args.input, "balance")
    strategy, seed = parse_strategy(args.strategy)
    cfg = OsborneConfig(eta=args.eta, imbalance_tolerance=args.tol,
                        max_updates=args.max_updates, strategy=strategy, seed=seed)
    M, report = run_osborne(inst.cost, cfg)
    report.extra["x"] = M.x.tolist()
    rho, gamma = offdiagonal_sums(M)
    report.extra["hellinger_imbalance"] = hellinger_imbalance(rho, gamma)
    if inst.n <= MATRIX_MAX_N:
        # normalized to unit mass
        L = M.log_entries()
        report.certificate = np.exp(L - logsumexp(L))
    _write(args.out, write_report(report))
    return EXIT_OK if report.converged else EXIT_BUDGET


def _bench_cell(suite, n, seed, epsilon, out_dir):
    kind, gen = SUITES[suite]
    if gen == "uniform":
        inst = gen_uniform_cost(n, seed, kind=kind)
    else:
        inst = gen_euclidean_ot(n, 2, 2.0, seed, kind=kind)
    t0 = time.perf_counter()
    report = _solve(kind, inst, epsilon)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    if kind == "ot":
        verify_ot(inst, report)
    else:
        verify_mmc(inst, report)
    _write(Path(out_dir) / f"{suite}_n{n}_seed{seed}.json", write_report(report))
    return n, seed, report, wall_ms


def cmd_bench(args) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; expected one of {sorted(SUITES)}")
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
        seeds = [int(s) for s in args.seeds.split(",") if s]
    except ValueError:
        raise UsageError("--sizes and --seeds take comma-separated integers") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(n, s) for n in sizes for s in seeds]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda c: _bench_cell(args.suite, c[0], c[1], args.epsilon, out), cells))
    ok = True
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "seed", "value", "gap", "iterations", "wall_time_ms"])
        for n, seed, report, wall_ms in results:
            gap = report.extra.get("abs_gap")
            w.writerow([n, seed, repr(report.value), "" if gap is None else repr(gap),
                        report.iterations, f"{wall_ms:.3f}"])
            ok = ok and report.converged
    with open(out / "bench.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} suite={args.suite} "
                 f"cells={len(cells)} total_ms={sum(r[3] for r in results):.1f}\n")
    return EXIT_OK if ok else EXIT_BUDGET


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ot-mmc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in ("ot", "mmc"):
        p = sub.add_parser(kind, help=f"solve {kind.upper()} to +-epsilon")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--input", help="instance JSON or CSV cost matrix")
        src.add_argument("--gen", help='generator spec, e.g. "uniform:n=12,seed=3"')
        p.add_argument("--epsilon", type=float, required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--trace")
        p.add_argument("--verify", action="store_true")
        if kind == "mmc":
            p.add_argument("--strategy", default="greedy", help="cyclic, greedy or random:SEED")
        p.set_defaults(func=lambda a, k=kind: cmd_solve(a, k))

    p = sub.add_parser("scale", help="matrix scaling of exp(-eta C)")
    p.add_argument("--input", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("balance", help="matrix balancing of exp(-eta C)")
    p.add_argument("--input", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-updates", type=int, default=200_000)
    p.add_argument("--strategy", default="greedy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--sizes", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
