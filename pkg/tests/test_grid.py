import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpeel.grid import (BoxId, GridSpec, box_points, box_slice, diagonal_sets,
                        interaction_list, il_pairs, morton, neighbor_list, nl_pairs,
                        peeling_sets, tree_order)


def test_box_points_examples():
    assert list(box_points(8, BoxId(3, 1, 1))) == [0]
    assert len(box_points(GridSpec(64, 3), BoxId(3, 2, 5))) == 64
    assert sorted(box_points(GridSpec(16, 3), BoxId(0, 1, 1))) == list(range(256))


def test_box_points_ordering():
    g = GridSpec(16, 3)
    pts = box_points(g, BoxId(2, 2, 1))
    # k1 fastest within the box: first row is k1 = 4..7 at k2 = 0
    assert list(pts[:4]) == [4, 5, 6, 7]
    assert pts[4] == 4 + 16


def test_box_points_out_of_range():
    with pytest.raises(ValueError, match="box out of range"):
        box_points(GridSpec(16, 3), BoxId(3, 9, 1))


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(24, 3)
    with pytest.raises(ValueError):
        GridSpec(32, 5)
    with pytest.raises(ValueError):
        GridSpec(32, 2)


def test_neighbor_list_examples():
    g = GridSpec(64, 4)
    nl = neighbor_list(g, BoxId(3, 1, 1))
    assert len(nl) == 9 and BoxId(3, 1, 1) in nl and BoxId(3, 8, 8) in nl
    nl = neighbor_list(g, BoxId(4, 5, 5))
    assert set(nl) == {BoxId(4, i, j) for i in (4, 5, 6) for j in (4, 5, 6)}


def test_lists_need_level_three():
    g = GridSpec(32, 4)
    with pytest.raises(ValueError, match="level 3"):
        neighbor_list(g, BoxId(2, 1, 1))
    with pytest.raises(ValueError, match="level 3"):
        interaction_list(g, BoxId(2, 1, 1))


@pytest.mark.parametrize("N,L", [(32, 4), (64, 5)])
def test_list_sizes_by_enumeration(N, L):
    g = GridSpec(N, L)
    for l in range(3, L + 1):
        for b in g.boxes(l):
            assert len(set(neighbor_list(g, b))) == 9
            assert len(interaction_list(g, b)) == (55 if l == 3 else 27)


@pytest.mark.parametrize("N,L", [(32, 4), (64, 5)])
def test_il_symmetric_and_disjoint_from_nl(N, L):
    g = GridSpec(N, L)
    for l in range(3, L + 1):
        for b in g.boxes(l):
            il = interaction_list(g, b)
            assert not set(il) & set(neighbor_list(g, b))
            for c in il:
                assert b in interaction_list(g, c)


def test_levels_tile_every_pair():
    # each leaf-point pair is covered by exactly one IL level or the leaf NL
    g = GridSpec(32, 4)
    cover = np.zeros((g.n, g.n), dtype=int)
    P = tree_order(g)
    for l in range(3, g.L + 1):
        for I, J in il_pairs(g, l):
            si, sj = P[box_slice(g, I)], P[box_slice(g, J)]
            cover[np.ix_(si, sj)] += 1
            cover[np.ix_(sj, si)] += 1
    for I, J in nl_pairs(g, g.L):
        si, sj = P[box_slice(g, I)], P[box_slice(g, J)]
        cover[np.ix_(si, sj)] += 1
        if I != J:
            cover[np.ix_(sj, si)] += 1
    assert (cover == 1).all()


@pytest.mark.parametrize("l,size", [(3, 1), (4, 4), (6, 64)])
def test_peeling_set_sizes(l, size):
    g = GridSpec(128, 6)
    sets = peeling_sets(g, l)
    assert len(sets) == 64
    assert all(len(s) == size for s in sets)
    assert sorted(itertools.chain(*sets)) == sorted(g.boxes(l))


def test_peeling_sets_do_not_collide():
    # within one set, IL and NL regions of different members never overlap
    g = GridSpec(64, 5)
    for l in (4, 5):
        for S in peeling_sets(g, l):
            seen = set()
            for J in S:
                region = set(interaction_list(g, J)) | set(neighbor_list(g, J))
                assert not region & seen
                seen |= region


def test_diagonal_sets():
    g = GridSpec(32, 4)
    sets = diagonal_sets(g)
    assert len(sets) == 16 and all(len(s) == 16 for s in sets)
    assert sorted(itertools.chain(*sets)) == sorted(g.boxes(4))
    for S in sets:
        for a, b in itertools.combinations(S, 2):
            assert not set(neighbor_list(g, a)) & set(neighbor_list(g, b))


def test_tree_order_contiguous_boxes():
    g = GridSpec(32, 4)
    P = tree_order(g)
    assert sorted(P) == list(range(g.n))
    for l in range(0, g.L + 1):
        for b in g.boxes(l):
            assert sorted(P[box_slice(g, b)]) == sorted(box_points(g, b))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 6), st.data())
def test_children_partition_parent(level, data):
    m = 1 << level
    i = data.draw(st.integers(1, m))
    j = data.draw(st.integers(1, m))
    b = BoxId(level, i, j)
    g = GridSpec(128, 6)
    kids = b.children()
    assert all(k.parent() == b for k in kids)
    assert sorted(np.concatenate([box_points(g, k) for k in kids])) == sorted(box_points(g, b))
    assert [morton(k) for k in kids] == [4 * morton(b) + q for q in range(4)]
