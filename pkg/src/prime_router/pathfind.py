"""Threshold-gated best-path search with dominance pruning, plus an oracle.

``find_path`` runs a queue-based traversal (SPFA flavour): states carry the
exact integer amount produced so far, and a successor is enqueued only when it
beats the best amount already recorded at that token.  The recorded best is a
small per-hop-count frontier rather than one scalar: pruning a state is only
sound when some earlier state reached the same token with at least as much
output in at most as many hops, otherwise hop-budget interactions can hide
the optimum.  With that refinement the search is exact against exhaustive
enumeration on two-token-pool graphs (see tests).

Paths are vertex-simple and pool-distinct.  The traversal never expands the
target, so every arrival there is terminal; the best arrival whose average
rate clears the threshold is returned after the queue drains.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .errors import CapacityExceededError, GraphTooLargeError
from .graph import Edge, SwapGraph

ORACLE_MAX_TOKENS = 16


@dataclass(frozen=True)
class SinglePath:
    """A discovered source->target path with its probe-time economics."""

    edges: Tuple[Edge, ...]
    output: int
    average_rate: float
    spot_rate: float

    @property
    def tokens(self) -> Tuple[str, ...]:
        return (self.edges[0].token_in,) + tuple(e.token_out for e in self.edges)

    @property
    def pool_ids(self) -> Tuple[str, ...]:
        ids: List[str] = []
        for e in self.edges:
            ids.extend(e.pool_ids)
        return tuple(ids)


@dataclass
class SearchStats:
    pushes: int = 0
    pops: int = 0
    swap_evals: int = 0


def _best_candidate(candidates: Sequence[Edge], amount: int,
                    masked: FrozenSet[str], visited: Tuple[str, ...],
                    path_pools: Tuple[str, ...],
                    stats: Optional[SearchStats]) -> Tuple[Optional[Edge], int]:
    """Best usable parallel edge at this amount.

    Candidates arrive sorted by descending spot rate, so once the concavity
    bound spot*amount falls at or below the best exact output seen, no later
    candidate can win or tie and the scan stops.
    """
    best_edge = None
    best_out = 0
    for e in candidates:
        if e.output_bound(amount) <= best_out:
            break
        if any(p in masked or p in path_pools for p in e.pool_ids):
            continue
        if e.legs and any(leg.token_in in visited for leg in e.legs[1:]):
            continue
        try:
            out = e.fn.swap_out(amount)
        except CapacityExceededError:
            continue
        if stats is not None:
            stats.swap_evals += 1
        if out > best_out or (out == best_out and best_edge is not None
                              and e.pool_id < best_edge.pool_id):
            best_edge, best_out = e, out
    return best_edge, best_out


def find_path(view, source: str, target: str, amount: int, tau: float,
              max_hops: int, masked_pools: FrozenSet[str] = frozenset(),
              stats: Optional[SearchStats] = None) -> Optional[SinglePath]:
    """Best simple pool-distinct path by exact simulated output.

    ``view`` is anything exposing ``out_items(u)`` (a SwapGraph or an engine
    overlay).  Returns None when no arrival at the target has average rate
    output/amount strictly above ``tau``.  Amounts compare as exact integers;
    among equal outputs the first arrival in queue order wins.
    """
    if source == target:
        raise ValueError("source and target must differ")
    if amount <= 0:
        raise ValueError("probe amount must be positive")
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")

    # frontier[v][h] = best amount recorded at v with at most h hops
    frontier = {}
    best_target = 0
    best_state = None
    queue = deque()
    queue.append((source, amount, (), (source,), ()))
    while queue:
        token, cur, edges, visited, pools = queue.popleft()
        if stats is not None:
            stats.pops += 1
        if token == target:
            if cur / amount > tau and (best_state is None or cur > best_state[1]):
                best_state = (edges, cur)
            continue
        hops = len(edges)
        if hops >= max_hops:
            continue
        for v, candidates in view.out_items(token):
            if v in visited:
                continue
            # the first candidate has the best spot rate, so its concavity
            # bound caps the whole pair; skip without any exact evaluation
            # when even that cannot beat the recorded frontier
            if v == target:
                gate = best_target
            else:
                levels = frontier.get(v)
                gate = levels[hops + 1] if levels is not None else 0
            if candidates[0].output_bound(cur) <= gate:
                continue
            edge, out = _best_candidate(candidates, cur, masked_pools,
                                        visited, pools, stats)
            if edge is None or out == 0:
                continue
            if v == target:
                if out <= best_target:
                    continue
                best_target = out
            else:
                if levels is None:
                    levels = [0] * (max_hops + 1)
                    frontier[v] = levels
                if out <= levels[hops + 1]:
                    continue
                for h in range(hops + 1, max_hops + 1):
                    if out > levels[h]:
                        levels[h] = out
            queue.append((v, out, edges + (edge,), visited + (v,),
                          pools + edge.pool_ids))
            if stats is not None:
                stats.pushes += 1
    if best_state is None:
        return None
    edges, out = best_state
    spot = 1.0
    for e in edges:
        spot *= e.spot
    return SinglePath(edges=edges, output=out, average_rate=out / amount,
                      spot_rate=spot)


def simulate_chain(edges: Sequence[Edge], amount: int) -> Optional[int]:
    """Exact output of pushing the full amount through an edge sequence."""
    cur = amount
    for e in edges:
        try:
            cur = e.fn.swap_out(cur)
        except CapacityExceededError:
            return None
    return cur


def enumerate_paths_oracle(g: SwapGraph, source: str, target: str,
                           max_hops: int) -> Tuple[Tuple[Edge, ...], ...]:
    """All simple pool-distinct paths up to max_hops, deterministic order.

    Test oracle only; guarded to tiny graphs because the count explodes.
    """
    if len(g.tokens) > ORACLE_MAX_TOKENS:
        raise GraphTooLargeError(
            f"oracle limited to {ORACLE_MAX_TOKENS} tokens, got {len(g.tokens)}")
    if source == target:
        raise ValueError("source and target must differ")
    out: List[Tuple[Edge, ...]] = []

    def walk(token, edges, visited, pools):
        if token == target:
            out.append(edges)
            return
        if len(edges) >= max_hops:
            return
        for v, _ in g.out_items(token):
            if v in visited:
                continue
            for e in g.edges_between(token, v):
                if e.pool_id in pools:
                    continue
                walk(v, edges + (e,), visited | {v}, pools | {e.pool_id})

    walk(source, (), {source}, frozenset())
    return tuple(out)
