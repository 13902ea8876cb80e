"""Command-line entry points: route queries, benchmarking, instance generation.

Exit codes: 0 success, 1 input/configuration error, 2 no route.  The env var
PRIME_LOG selects the log level (DEBUG/INFO/WARNING/...).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence

from .allocation import AsgmParams, asgm, objective
from .baselines import best_single_path, prime_flow
from .engine import RouteQuery, ShortcutConfig, prepare_routing, prime
from .errors import NoRouteError, RoutingError
from . import io as pio

log = logging.getLogger("prime_router.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_ROUTE = 2


def _setup_logging() -> None:
    level = os.environ.get("PRIME_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_amount(text: str) -> int:
    if not text.isdigit():
        raise ValueError(f"amount must be a decimal integer string, got {text!r}")
    value = int(text)
    if value <= 0:
        raise ValueError("amount must be positive")
    return value


def _parse_hubs(text: Optional[str]):
    """Either a hub count or an explicit comma-separated token-id list."""
    if text is None:
        return 50, None
    if text.isdigit():
        return int(text), None
    hubs = tuple(h.strip() for h in text.split(",") if h.strip())
    if not hubs:
        raise ValueError("empty hub list")
    return len(hubs), hubs


def _build_query(args, source: str, target: str, amount: int) -> RouteQuery:
    hub_count, explicit = _parse_hubs(args.hubs)
    params = AsgmParams(alpha=args.alpha, beta=args.beta)
    return RouteQuery(
        source=source, target=target, amount=amount,
        max_hops=args.max_hops, hub_count=hub_count, explicit_hubs=explicit,
        asgm_params=params,
        shortcuts=ShortcutConfig(enabled=not args.no_shortcuts),
    )


def cmd_route(args) -> int:
    snapshot = pio.load_snapshot(args.snapshot)
    graph = snapshot.build_graph()
    if not graph.has_token(args.source):
        print(f"error: unknown token id {args.source!r}", file=sys.stderr)
        return EXIT_ERROR
    if not graph.has_token(args.target):
        print(f"error: unknown token id {args.target!r}", file=sys.stderr)
        return EXIT_ERROR
    query = _build_query(args, args.source, args.target,
                         _parse_amount(args.amount))
    try:
        if args.algo == "prime":
            solution = prime(graph, query)
        elif args.algo == "osp":
            solution = best_single_path(graph, query)
        else:
            solution = prime_flow(graph, query)
    except NoRouteError as exc:
        print(f"no route: {exc}", file=sys.stderr)
        return EXIT_NO_ROUTE
    sys.stdout.write(pio.dumps_solution(solution))
    if args.trace and solution.trace:
        pio.write_trace_csv(solution.trace, args.trace)
    return EXIT_OK


def _run_case(graph, prepared, args, source, target, amount, algo):
    query = _build_query(args, source, target, amount)
    started = time.perf_counter()
    try:
        if algo == "prime":
            sol = prime(graph, query, prepared)
        elif algo == "osp":
            sol = best_single_path(graph, query)
        else:
            sol = prime_flow(graph, query)
    except NoRouteError:
        return None
    elapsed_ms = (time.perf_counter() - started) * 1e3
    return sol, elapsed_ms


def _bench_amounts(args, snapshot) -> List[int]:
    """Raw amounts for the ladder; --unit-amounts scales by source decimals."""
    if args.amounts is not None:
        return [_parse_amount(a.strip()) for a in args.amounts.split(",")]
    decimals = next((t.decimals for t in snapshot.tokens
                     if t.id == args.source), 18)
    return [_parse_amount(a.strip()) * 10**decimals
            for a in args.unit_amounts.split(",")]


def cmd_bench(args) -> int:
    if args.ablate:
        return _cmd_ablate(args)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ("prime", "osp", "flow"):
            print(f"error: unknown algorithm {a!r}", file=sys.stderr)
            return EXIT_ERROR
    rows: List[dict] = []
    for snap_path in args.snapshot:
        snapshot = pio.load_snapshot(snap_path)
        graph = snapshot.build_graph()
        amounts = _bench_amounts(args, snapshot)
        base_query = _build_query(args, args.source, args.target, amounts[0])
        prepared = prepare_routing(graph, base_query)
        cases = [(amount, algo, rep)
                 for amount in amounts for algo in algos
                 for rep in range(args.repetitions)]

        def run(case):
            amount, algo, rep = case
            result = _run_case(graph, prepared, args, args.source,
                               args.target, amount, algo)
            return case, result

        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(run, cases))
        else:
            results = [run(c) for c in cases]

        baseline: dict = {}
        for (amount, algo, rep), result in results:
            if algo == "osp" and result is not None and rep == 0:
                baseline[amount] = result[0].total_output
        for (amount, algo, rep), result in results:
            if result is None:
                continue
            sol, elapsed = result
            base = baseline.get(amount)
            bp = (1e4 * (sol.total_output - base) / base) if base else 0.0
            rows.append({
                "snapshot": snap_path,
                "source": args.source,
                "target": args.target,
                "amount": str(amount),
                "algorithm": algo,
                "repetition": rep,
                "output": str(sol.total_output),
                "bp_vs_baseline": f"{bp:.2f}",
                "wall_time_ms": f"{elapsed:.3f}",
                "iterations": sol.stats.asgm_iterations,
                "queue_pushes": sol.stats.queue_pushes,
            })
            if args.trace_dir and sol.trace:
                name = f"trace_{os.path.basename(snap_path)}_{algo}_{amount}_{rep}.csv"
                pio.write_trace_csv(sol.trace, os.path.join(args.trace_dir, name))
    _write_csv(rows, args.out,
               ["snapshot", "source", "target", "amount", "algorithm",
                "repetition", "output", "bp_vs_baseline", "wall_time_ms",
                "iterations", "queue_pushes"])
    return EXIT_OK


def _cmd_ablate(args) -> int:
    """Sweep the optimizer's (alpha, beta) grid on one fixed query.

    The path set is discovered once; each sweep point re-runs the allocator
    cold from the uniform start, isolating its latency/quality trade-off.
    """
    snapshot = pio.load_snapshot(args.snapshot[0])
    graph = snapshot.build_graph()
    amount = _bench_amounts(args, snapshot)[0]
    query = _build_query(args, args.source, args.target, amount)
    prepared = prepare_routing(graph, query)
    solution = prime(graph, query, prepared)
    paths = list(solution.paths)

    alphas = [float(a) for a in args.alphas.split(",")]
    betas = [float(b) for b in args.betas.split(",")]
    rows = []
    outputs = []
    for alpha in alphas:
        for beta in betas:
            params = replace(query.asgm_params, alpha=alpha, beta=beta)
            best_ms = None
            result = None
            for _ in range(max(1, args.repetitions)):
                started = time.perf_counter()
                result = asgm(paths, amount, params)
                elapsed = (time.perf_counter() - started) * 1e3
                best_ms = elapsed if best_ms is None else min(best_ms, elapsed)
            out = objective(paths, result.allocation.path_weights,
                            result.allocation.edge_weights, amount)
            outputs.append(out)
            rows.append({
                "alpha": alpha,
                "beta": beta,
                "output": str(out),
                "wall_time_ms": f"{best_ms:.3f}",
                "iterations": result.iterations,
                "converged": result.converged,
            })
    best = max(outputs)
    for row, out in zip(rows, outputs):
        row["gap_bp"] = f"{1e4 * (best - out) / best:.2f}" if best else "0.00"
    _write_csv(rows, args.out,
               ["alpha", "beta", "output", "gap_bp", "wall_time_ms",
                "iterations", "converged"])
    return EXIT_OK


def _write_csv(rows: List[dict], out_path: Optional[str],
               fields: List[str]) -> None:
    if out_path:
        fh = open(out_path, "w", newline="", encoding="utf-8")
    else:
        fh = sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if out_path:
            fh.close()


def cmd_gen(args) -> int:
    snapshot = pio.generate_synthetic(args.seed, args.tokens, args.pools,
                                      args.hub_fraction, args.spread_orders)
    pio.save_snapshot(snapshot, args.out)
    print(f"wrote {args.out} ({args.tokens} tokens, {args.pools} pools, "
          f"hash {pio.snapshot_hash(snapshot)[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prime-router")
    sub = parser.add_subparsers(dest="command", required=True)

    route = sub.add_parser("route", help="solve one routing query")
    route.add_argument("--snapshot", required=True)
    route.add_argument("--from", dest="source", required=True)
    route.add_argument("--to", dest="target", required=True)
    route.add_argument("--amount", required=True)
    route.add_argument("--algo", choices=("prime", "osp", "flow"),
                       default="prime")
    route.add_argument("--max-hops", type=int, default=3)
    route.add_argument("--hubs", default=None,
                       help="hub count or explicit comma-separated token ids")
    route.add_argument("--alpha", type=float, default=1e-4)
    route.add_argument("--beta", type=float, default=0.5)
    route.add_argument("--trace", default=None,
                       help="write the allocator trace CSV here")
    route.add_argument("--no-shortcuts", action="store_true")
    route.set_defaults(func=cmd_route)

    bench = sub.add_parser("bench", help="benchmark algorithms on snapshots")
    bench.add_argument("--snapshot", action="append", required=True)
    bench.add_argument("--from", dest="source", required=True)
    bench.add_argument("--to", dest="target", required=True)
    bench.add_argument("--amounts", default=None,
                       help="comma-separated raw amounts (overrides the "
                            "unit ladder)")
    bench.add_argument("--unit-amounts", default="1,10,100,1000",
                       help="ladder in whole source tokens, scaled by its "
                            "decimals")
    bench.add_argument("--algos", default="prime,osp")
    bench.add_argument("--repetitions", type=int, default=1)
    bench.add_argument("--max-hops", type=int, default=3)
    bench.add_argument("--hubs", default=None)
    bench.add_argument("--alpha", type=float, default=1e-4)
    bench.add_argument("--beta", type=float, default=0.5)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default=None, help="CSV path (default stdout)")
    bench.add_argument("--trace-dir", default=None)
    bench.add_argument("--no-shortcuts", action="store_true")
    bench.add_argument("--ablate", action="store_true",
                       help="sweep (alpha, beta) on a fixed path set")
    bench.add_argument("--alphas", default="0.0001")
    bench.add_argument("--betas", default="0.5")
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen", help="generate a synthetic snapshot")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--tokens", type=int, required=True)
    gen.add_argument("--pools", type=int, required=True)
    gen.add_argument("--hub-fraction", type=float, default=0.1)
    gen.add_argument("--spread-orders", type=int, default=6)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RoutingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
