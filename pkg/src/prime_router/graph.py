"""Directed token multigraph built from a pool snapshot.

Every pool expands into one directed edge per ordered token pair it serves, so
an n-token pool contributes exactly n*(n-1) edges.  The graph is immutable
after construction and safe for concurrent read-only queries.

Two adjacency views are kept: ``edges_between`` returns parallel edges in
pool-id order (the reproducibility contract), while ``out_items`` yields
per-neighbour candidate lists sorted by descending spot rate, which is what
the path search wants for its early-stop scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Tuple

from .cfmm import (
    BPS_DENOM,
    ConstantProduct,
    PiecewiseLiquidity,
    Segment,
    SwapFunction,
    check_amount,
)
from .errors import MalformedSnapshotError

KIND_CONSTANT_PRODUCT = "constant_product"
KIND_PIECEWISE = "piecewise_liquidity"


@dataclass(frozen=True)
class Token:
    id: str
    symbol: str
    decimals: int


@dataclass(frozen=True)
class PoolDirection:
    """Per-direction curve parameters for a piecewise pool."""

    token_in: str
    token_out: str
    segments: Tuple[Segment, ...]


@dataclass(frozen=True)
class Pool:
    id: str
    kind: str
    tokens: Tuple[str, ...]
    fee_bps: int
    reserves: Tuple[int, ...] = ()
    directions: Tuple[PoolDirection, ...] = ()

    def reserve_of(self, token_id: str) -> int:
        """Liquidity mass attributed to one side; a ranking proxy only."""
        if self.kind == KIND_CONSTANT_PRODUCT:
            try:
                return self.reserves[self.tokens.index(token_id)]
            except ValueError:
                return 0
        total = 0
        for d in self.directions:
            if d.token_in == token_id:
                total += sum(s.virtual_reserve_in for s in d.segments)
        return total


@dataclass(frozen=True)
class Edge:
    pool_id: str
    token_in: str
    token_out: str
    fn: SwapFunction
    legs: Tuple["Edge", ...] = ()
    # derived, precomputed once: the search scans these in tight loops
    pool_ids: Tuple[str, ...] = field(init=False, compare=False, repr=False)
    rate_num: int = field(init=False, compare=False, repr=False)
    rate_den: int = field(init=False, compare=False, repr=False)
    spot: float = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        ids = tuple(leg.pool_id for leg in self.legs) if self.legs \
            else (self.pool_id,)
        num, den = self.fn.spot_ratio()
        object.__setattr__(self, "pool_ids", ids)
        object.__setattr__(self, "rate_num", num)
        object.__setattr__(self, "rate_den", den)
        object.__setattr__(self, "spot", num / den)

    def output_bound(self, amount: int) -> int:
        """Concavity bound: f(amount) < floor(spot * amount) + 1, exactly."""
        return amount * self.rate_num // self.rate_den + 1


class SwapGraph:
    """Immutable directed multigraph; vertices are tokens, edges swap legs."""

    def __init__(self, tokens: Dict[str, Token], pools: Dict[str, Pool],
                 edges: Iterable[Edge]):
        self._tokens = dict(tokens)
        self._pools = dict(pools)
        by_pair: Dict[str, Dict[str, List[Edge]]] = {}
        n_edges = 0
        for e in edges:
            by_pair.setdefault(e.token_in, {}).setdefault(e.token_out, []).append(e)
            n_edges += 1
        self._edge_count = n_edges
        self._adj: Dict[str, Dict[str, Tuple[Edge, ...]]] = {}
        self._search: Dict[str, Tuple[Tuple[str, Tuple[Edge, ...]], ...]] = {}
        for u in sorted(by_pair):
            pair_map = {}
            search_items = []
            for v in sorted(by_pair[u]):
                es = by_pair[u][v]
                pair_map[v] = tuple(sorted(es, key=lambda e: e.pool_id))
                search_items.append(
                    (v, tuple(sorted(es, key=lambda e: (-e.spot, e.pool_id)))))
            self._adj[u] = pair_map
            self._search[u] = tuple(search_items)

    @property
    def tokens(self) -> Dict[str, Token]:
        return self._tokens

    @property
    def pools(self) -> Dict[str, Pool]:
        return self._pools

    def token_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self._tokens))

    def has_token(self, token_id: str) -> bool:
        return token_id in self._tokens

    @property
    def edge_count(self) -> int:
        return self._edge_count

    def edges_between(self, u: str, v: str) -> Tuple[Edge, ...]:
        """All directed edges u -> v, in pool-id order."""
        return self._adj.get(u, {}).get(v, ())

    def out_items(self, u: str) -> Tuple[Tuple[str, Tuple[Edge, ...]], ...]:
        """(neighbour, candidates sorted by spot desc) pairs, neighbour-sorted."""
        return self._search.get(u, ())

    def out_edges(self, u: str) -> Iterable[Edge]:
        for _, candidates in self.out_items(u):
            yield from candidates

    def neighbor_tokens(self, u: str) -> Tuple[str, ...]:
        return tuple(v for v, _ in self._search.get(u, ()))


def _expand_pool(pool: Pool) -> List[Edge]:
    edges = []
    if pool.kind == KIND_CONSTANT_PRODUCT:
        for i, tin in enumerate(pool.tokens):
            for j, tout in enumerate(pool.tokens):
                if i == j:
                    continue
                fn = ConstantProduct(pool.reserves[i], pool.reserves[j], pool.fee_bps)
                edges.append(Edge(pool.id, tin, tout, fn))
    else:
        for d in pool.directions:
            fn = PiecewiseLiquidity(d.segments, pool.fee_bps)
            edges.append(Edge(pool.id, d.token_in, d.token_out, fn))
    return edges


def _validate_pool(pool: Pool, token_ids) -> None:
    ctx = f"pool {pool.id!r}"
    if len(pool.tokens) < 2:
        raise MalformedSnapshotError(f"{ctx}: needs at least two tokens")
    if len(set(pool.tokens)) != len(pool.tokens):
        raise MalformedSnapshotError(f"{ctx}: duplicate token in pool")
    for t in pool.tokens:
        if t not in token_ids:
            raise MalformedSnapshotError(f"{ctx}: dangling token id {t!r}")
    if not (0 <= pool.fee_bps < BPS_DENOM):
        raise MalformedSnapshotError(f"{ctx}: fee_bps out of range")
    if pool.kind == KIND_CONSTANT_PRODUCT:
        if len(pool.reserves) != len(pool.tokens):
            raise MalformedSnapshotError(f"{ctx}: reserves/tokens length mismatch")
        for r in pool.reserves:
            check_amount(r, f"{ctx} reserve")
            if r == 0:
                raise MalformedSnapshotError(f"{ctx}: zero reserve")
    elif pool.kind == KIND_PIECEWISE:
        if len(pool.tokens) != 2:
            raise MalformedSnapshotError(f"{ctx}: piecewise pools are two-token")
        pairs = {(d.token_in, d.token_out) for d in pool.directions}
        a, b = pool.tokens
        if pairs != {(a, b), (b, a)}:
            raise MalformedSnapshotError(f"{ctx}: needs both directions exactly once")
        for d in pool.directions:
            try:
                PiecewiseLiquidity(d.segments, pool.fee_bps)
            except (ValueError, TypeError) as exc:
                raise MalformedSnapshotError(f"{ctx}: {exc}") from exc
    else:
        raise MalformedSnapshotError(f"{ctx}: unknown pool kind {pool.kind!r}")


def build_graph(tokens: Iterable[Token], pools: Iterable[Pool]) -> SwapGraph:
    """Expand a snapshot into the directed multigraph.

    Raises MalformedSnapshotError on dangling token ids, zero reserves or
    duplicate pool/token ids.  Deterministic: identical snapshots produce
    identical adjacency orderings.
    """
    token_map: Dict[str, Token] = {}
    for t in tokens:
        if t.id in token_map:
            raise MalformedSnapshotError(f"duplicate token id {t.id!r}")
        if not (0 <= t.decimals <= 30):
            raise MalformedSnapshotError(f"token {t.id!r}: decimals out of range")
        token_map[t.id] = t
    pool_map: Dict[str, Pool] = {}
    edges: List[Edge] = []
    for p in pools:
        if p.id in pool_map:
            raise MalformedSnapshotError(f"duplicate pool id {p.id!r}")
        _validate_pool(p, token_map)
        pool_map[p.id] = p
        edges.extend(_expand_pool(p))
    return SwapGraph(token_map, pool_map, edges)


def prune_leaf_tokens(g: SwapGraph, protected: Iterable[str]) -> SwapGraph:
    """Drop tokens whose pools touch at most one other token, to a fixpoint.

    Protected tokens (query endpoints, hubs) survive regardless.  Pools lose
    all edges once any of their tokens is dropped, which is safe: a token in
    a multi-token pool always sees >= 2 neighbours through it.
    """
    protected = set(protected)
    alive = set(g.tokens)
    pools = list(g.pools.values())
    while True:
        neighbors: Dict[str, set] = {t: set() for t in alive}
        for p in pools:
            if all(t in alive for t in p.tokens):
                for t in p.tokens:
                    neighbors[t].update(u for u in p.tokens if u != t)
        drop = {t for t in alive
                if t not in protected and len(neighbors[t]) <= 1}
        if not drop:
            break
        alive -= drop
    kept_tokens = [g.tokens[t] for t in sorted(alive)]
    kept_pools = [p for p in pools if all(t in alive for t in p.tokens)]
    return build_graph(kept_tokens, kept_pools)
