import random

import pytest

from prime_router.cfmm import Segment
from prime_router.errors import MalformedSnapshotError
from prime_router.graph import (
    KIND_CONSTANT_PRODUCT,
    KIND_PIECEWISE,
    Pool,
    PoolDirection,
    Token,
    build_graph,
    prune_leaf_tokens,
)

from instances import cp_pool, random_cp_graph, tokens


def test_two_token_pool_expands_bidirectionally():
    g = build_graph(tokens(2), [cp_pool("P0", "T0", "T1", 100, 200)])
    assert g.edge_count == 2
    (e,) = g.edges_between("T0", "T1")
    assert e.fn.reserve_in == 100 and e.fn.reserve_out == 200
    (back,) = g.edges_between("T1", "T0")
    assert back.fn.reserve_in == 200 and back.fn.reserve_out == 100


def test_three_token_pool_expands_to_six_edges():
    pool = Pool("P0", KIND_CONSTANT_PRODUCT, ("T0", "T1", "T2"), 4,
                (100, 200, 300))
    g = build_graph(tokens(3), [pool])
    assert g.edge_count == 6
    assert len(g.edges_between("T2", "T0")) == 1


def test_parallel_pools_make_parallel_edges():
    pools = [cp_pool("P0", "T0", "T1", 100, 100),
             cp_pool("P1", "T0", "T1", 50, 50)]
    g = build_graph(tokens(2), pools)
    assert g.edge_count == 4
    assert [e.pool_id for e in g.edges_between("T0", "T1")] == ["P0", "P1"]


def test_edge_count_matches_pool_arities():
    rng = random.Random(3)
    g = random_cp_graph(rng, 8, 15)
    expected = sum(len(p.tokens) * (len(p.tokens) - 1) for p in g.pools.values())
    assert g.edge_count == expected


def test_build_is_deterministic():
    rng = random.Random(5)
    toks = tokens(6)
    pools = [cp_pool(f"P{i}", *rng.sample([t.id for t in toks], 2),
                     rng.randint(10**6, 10**9), rng.randint(10**6, 10**9))
             for i in range(12)]
    g1 = build_graph(toks, pools)
    g2 = build_graph(list(toks), list(pools))
    for u in g1.token_ids():
        assert [(v, [e.pool_id for e in es]) for v, es in g1.out_items(u)] == \
               [(v, [e.pool_id for e in es]) for v, es in g2.out_items(u)]


def test_edges_between_unconnected_pair_is_empty():
    g = build_graph(tokens(3), [cp_pool("P0", "T0", "T1", 10, 10)])
    assert g.edges_between("T0", "T2") == ()


class TestValidation:
    def test_dangling_token(self):
        with pytest.raises(MalformedSnapshotError):
            build_graph(tokens(2), [cp_pool("P0", "T0", "T9", 10, 10)])

    def test_zero_reserve(self):
        with pytest.raises(MalformedSnapshotError):
            build_graph(tokens(2), [cp_pool("P0", "T0", "T1", 0, 10)])

    def test_duplicate_pool_id(self):
        with pytest.raises(MalformedSnapshotError):
            build_graph(tokens(2), [cp_pool("P0", "T0", "T1", 10, 10),
                                    cp_pool("P0", "T1", "T0", 10, 10)])

    def test_duplicate_token_in_pool(self):
        pool = Pool("P0", KIND_CONSTANT_PRODUCT, ("T0", "T0"), 0, (10, 10))
        with pytest.raises(MalformedSnapshotError):
            build_graph(tokens(1), [pool])

    def test_piecewise_needs_both_directions(self):
        seg = (Segment(10, 100, 100),)
        pool = Pool("P0", KIND_PIECEWISE, ("T0", "T1"), 0,
                    directions=(PoolDirection("T0", "T1", seg),))
        with pytest.raises(MalformedSnapshotError):
            build_graph(tokens(2), [pool])


class TestPrune:
    def test_star_collapses_to_protected_hub(self):
        toks = tokens(6)
        pools = [cp_pool(f"P{i}", "T0", f"T{i}", 10, 10) for i in range(1, 6)]
        g = build_graph(toks, pools)
        pruned = prune_leaf_tokens(g, protected={"T0"})
        assert pruned.token_ids() == ("T0",)
        assert pruned.edge_count == 0

    def test_triangle_unchanged(self):
        pools = [cp_pool("P0", "T0", "T1", 10, 10),
                 cp_pool("P1", "T1", "T2", 10, 10),
                 cp_pool("P2", "T2", "T0", 10, 10)]
        g = build_graph(tokens(3), pools)
        pruned = prune_leaf_tokens(g, protected=set())
        assert pruned.token_ids() == ("T0", "T1", "T2")
        assert pruned.edge_count == 6

    def test_protected_leaf_survives_with_its_pool(self):
        toks = tokens(6)
        pools = [cp_pool(f"P{i}", "T0", f"T{i}", 10, 10) for i in range(1, 6)]
        g = build_graph(toks, pools)
        pruned = prune_leaf_tokens(g, protected={"T0", "T3"})
        assert pruned.token_ids() == ("T0", "T3")
        assert len(pruned.edges_between("T0", "T3")) == 1
        assert pruned.edges_between("T0", "T1") == ()

    def test_multi_pool_leaf_pruned(self):
        # several pools, all to the same counterparty: still a leaf
        toks = tokens(3)
        pools = [cp_pool("P0", "T0", "T1", 10, 10),
                 cp_pool("P1", "T0", "T1", 20, 20),
                 cp_pool("P2", "T0", "T2", 10, 10),
                 cp_pool("P3", "T1", "T2", 10, 10)]
        g = build_graph(toks, pools)
        pruned = prune_leaf_tokens(g, protected=set())
        assert pruned.token_ids() == ("T0", "T1", "T2")
        g2 = build_graph(toks, pools[:2] + [cp_pool("P9", "T1", "T2", 5, 5)])
        pruned2 = prune_leaf_tokens(g2, protected={"T1", "T2"})
        assert "T0" not in pruned2.token_ids()

    def test_never_removes_short_paths_between_protected(self):
        # enumerate: any token on a <=2-hop simple path between two protected
        # tokens keeps >= 2 neighbours, so pruning must spare it
        rng = random.Random(13)
        for trial in range(30):
            n = rng.randint(4, 10)
            g = random_cp_graph(rng, n, rng.randint(n - 1, 16))
            ids = sorted(g.tokens)
            s, t = rng.sample(ids, 2)
            pruned = prune_leaf_tokens(g, protected={s, t})
            via = set()
            for mid in ids:
                if mid in (s, t):
                    continue
                if g.edges_between(s, mid) and g.edges_between(mid, t):
                    via.add(mid)
            for mid in via:
                assert pruned.has_token(mid)
