#!/usr/bin/env python3
"""Latency experiment: routing queries against a large synthetic market.

Builds a 10,000-token / 25,000-pool snapshot, prepares the stage-0 artifacts
once, then times realistic trades (about 1% of a direct pool's depth) for
each algorithm.  Mirrors the scale regime of mainnet-wide routing with a
50-hub core.
"""

import argparse
import random
import statistics
import time

from prime_router.baselines import best_single_path
from prime_router.engine import RouteQuery, prepare_routing, prime, verify_solution
from prime_router.errors import NoRouteError
from prime_router.io import generate_synthetic


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0xC7)
    ap.add_argument("--tokens", type=int, default=10_000)
    ap.add_argument("--pools", type=int, default=25_000)
    ap.add_argument("--hubs", type=int, default=50)
    ap.add_argument("--queries", type=int, default=20)
    args = ap.parse_args()

    t0 = time.perf_counter()
    snap = generate_synthetic(args.seed, args.tokens, args.pools,
                              hub_fraction=args.hubs / args.tokens,
                              reserve_spread_orders=11)
    graph = snap.build_graph()
    print(f"market: {args.tokens} tokens, {args.pools} pools "
          f"({time.perf_counter() - t0:.1f}s to build)")

    base = RouteQuery(source=snap.tokens[0].id, target=snap.tokens[1].id,
                      amount=10**18, hub_count=args.hubs)
    t0 = time.perf_counter()
    prepared = prepare_routing(graph, base)
    print(f"stage-0 (hubs, pruning, shortcut index): "
          f"{time.perf_counter() - t0:.1f}s, cached for all queries")

    rng = random.Random(args.seed)
    cp_pools = [p for p in snap.pools if p.kind == "constant_product"]
    rows = []
    while len(rows) < args.queries:
        p = cp_pools[rng.randrange(len(cp_pools))]
        q = RouteQuery(source=p.tokens[0], target=p.tokens[1],
                       amount=max(1, p.reserves[0] // 100),
                       hub_count=args.hubs)
        started = time.perf_counter()
        try:
            sol = prime(graph, q, prepared)
        except NoRouteError:
            continue
        prime_ms = (time.perf_counter() - started) * 1e3
        started = time.perf_counter()
        osp = best_single_path(graph, q)
        osp_ms = (time.perf_counter() - started) * 1e3
        bp = 1e4 * (sol.total_output - osp.total_output) / osp.total_output
        audit = verify_solution(sol, graph).ok
        rows.append((prime_ms, osp_ms, bp, sol.stats.paths_discovered, audit))
        print(f"  prime {prime_ms:7.1f} ms ({sol.stats.paths_discovered} paths, "
              f"+{bp:.2f} bp vs single path, audit={'ok' if audit else 'FAIL'})"
              f"  single-path {osp_ms:7.1f} ms")

    prime_times = [r[0] for r in rows]
    print(f"\nprime latency over {len(rows)} queries: "
          f"median {statistics.median(prime_times):.1f} ms, "
          f"max {max(prime_times):.1f} ms")
    assert all(r[4] for r in rows), "audit failures"


if __name__ == "__main__":
    main()
