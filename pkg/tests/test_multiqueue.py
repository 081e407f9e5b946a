"""Hand-traced block scenarios at toy block sizes.

With 144-byte blocks and 12-byte elements a block holds 12 elements; at
beta = 3 a queue turns heavy above 4 elements, at gamma = 4 a block is
deficient below 3 elements, and the merge ceiling is 8 elements.
"""
import random

import pytest

from exmm import BASIC, DEAMORTIZED, NULL, Multimap
from exmm import multiqueue
from exmm.multiqueue import MultiQueue, Thresholds, pair_key

VARIANTS = [BASIC, DEAMORTIZED]


def toy(variant, block=144, **kw):
    kw.setdefault("gamma", 4.0)
    mm = Multimap(variant, block_bytes=block, cache_bytes=4 * block,
                  header_capacity=4, pair_capacity=4096, **kw)
    assert len(mm.T.side[0]) == 1, "all test keys should share one header page"
    return mm


def fill(mm, k, n, start=0):
    for v in range(start, start + n):
        mm.insert(k, v)
    return start + n


def block_of(mm, k):
    hdr = mm.T.lookup(k)
    return mm.S.resolve(k, hdr)


def blk(mm, ref):
    return mm.store.peek(ref).payload


def d_y(mm, k):
    return mm.T.meta(mm.T.find(k)[0])


def test_threshold_arithmetic():
    th = Thresholds(144, 12, 3, 4, BASIC)
    assert th.slots == 12 and th.heavy_bytes == 48 and th.deficient_bytes == 36
    assert th.merge_ceiling == 96 and th.third == 48
    assert th.heavy_to_light_bytes == 36
    assert Thresholds(144, 12, 3, 4, DEAMORTIZED).heavy_to_light_bytes == 24


@pytest.mark.parametrize("bad", [dict(beta=0.5), dict(gamma=1), dict(variant="x"),
                                 dict(block_bytes=20)])
def test_threshold_validation(bad):
    with pytest.raises(ValueError):
        Thresholds(**{**dict(block_bytes=144, element_bytes=12), **bad})


@pytest.mark.parametrize("variant", VARIANTS)
def test_fresh_structure(variant):
    mm = toy(variant)
    assert mm.S.live_block_count() == 0 and mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_first_enqueue_allocates_designated_block(variant):
    mm = toy(variant)
    assert all(mm.T.meta(r) == NULL for side in mm.T.side for r in side)
    mm.insert(1, 0)
    ref = block_of(mm, 1)
    assert d_y(mm, 1) == ref and mm.T.lookup(1).p == ref
    assert mm.D.lookup(pair_key(1, 0)) == ref


def test_basic_light_to_heavy_on_fifth_enqueue():
    mm = toy(BASIC)
    fill(mm, 1, 4)
    first = block_of(mm, 1)
    assert not mm.T.lookup(1).heavy
    mm.insert(1, 4)
    hdr = mm.T.lookup(1)
    assert hdr.heavy and hdr.p != first and hdr.dq == hdr.p
    b = blk(mm, hdr.p)
    assert b.heavy and list(b.queues) == [1] and b.n == 5
    assert mm.S.actions["light_to_heavy"] == 1
    # the emptied shared block went back to the free list
    assert first not in mm.S.live
    assert all(mm.D.lookup(pair_key(1, v)) == hdr.p for v in range(5))
    assert mm.audit() == []


def test_deamortized_has_no_standalone_light_to_heavy(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("standalone light-to-heavy")
    monkeypatch.setattr(MultiQueue, "_light_to_heavy", boom)
    mm = Multimap(DEAMORTIZED, block_bytes=144, cache_bytes=576, header_capacity=64,
                  pair_capacity=4096)
    rng = random.Random(3)
    live = []
    for i in range(3000):
        if live and rng.random() < 0.45:
            mm.remove(*live.pop(rng.randrange(len(live))))
        else:
            k = min(int(rng.paretovariate(1.0)), 30)
            mm.insert(k, i)
            live.append((k, i))
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_heavy_split_moves_nothing(variant):
    mm = toy(variant)
    n = fill(mm, 1, 12)
    hdr = mm.T.lookup(1)
    while not (hdr.heavy and blk(mm, hdr.dq).n == 12):
        n = fill(mm, 1, 1, n)
        hdr = mm.T.lookup(1)
    old_head = hdr.p
    moves = mm.S.moves
    fill(mm, 1, 1, n)
    hdr = mm.T.lookup(1)
    new = blk(mm, hdr.p)
    assert hdr.p != old_head and hdr.dq == hdr.p
    assert new.n == 1 and new.heavy and new.next == old_head
    assert blk(mm, old_head).prev == hdr.p
    assert mm.S.moves == moves
    assert mm.audit() == []


def _split_3333(mm):
    for k in (1, 2, 3, 4):
        fill(mm, k, 3)
    x = block_of(mm, 1)
    assert blk(mm, x).n == 12
    return x


@pytest.mark.parametrize("variant", VARIANTS)
def test_greedy_light_split(variant):
    mm = toy(variant)
    x = _split_3333(mm)
    mm.insert(1, 3)
    sink = block_of(mm, 1)
    assert sink != x
    assert sorted(blk(mm, sink).queues) == [1, 2]
    assert sorted(blk(mm, x).queues) == [3, 4]
    # before the new element landed both halves held 6 elements (72 bytes)
    assert blk(mm, sink).n == 7 and blk(mm, x).n == 6
    assert d_y(mm, 1) == x
    if variant == BASIC:
        assert all(mm.D.lookup(pair_key(2, v)) == sink for v in range(3))
        assert mm.T.lookup(2).p == sink
    assert mm.audit() == []


def _two_light_blocks(mm, dy_size):
    """Designated block holding ``dy_size`` elements plus a second block X of 7."""
    x_dy = _split_3333(mm)
    mm.insert(1, 3)
    x = block_of(mm, 1)
    # resize d(Y) = {3: 3, 4: 3} to the wanted size
    if dy_size > 6:
        fill(mm, 5, dy_size - 6)
    else:
        for v in range(6 - dy_size):
            mm.remove(4, v)
    assert blk(mm, x_dy).n == dy_size and d_y(mm, 1) == x_dy
    return x_dy, x


@pytest.mark.parametrize("variant", VARIANTS)
def test_d_alteration(variant):
    mm = toy(variant)
    dy, x = _two_light_blocks(mm, 9)
    for v in range(4):
        mm.remove(1, v)
    moves = mm.S.moves
    mm.remove(2, 0)  # X drops to 2 elements (24 < 36 bytes)
    assert blk(mm, x).n == 2
    assert d_y(mm, 2) == x
    assert blk(mm, dy).n == 9 and blk(mm, dy).owner == NULL
    assert mm.S.moves == moves and mm.S.actions["d_alteration"] == 1
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_merge_into_designated_block(variant):
    mm = toy(variant)
    dy, x = _two_light_blocks(mm, 5)
    for v in range(4):
        mm.remove(1, v)
    mm.remove(2, 0)
    assert x not in mm.S.live and mm.store.is_free(x)
    assert blk(mm, dy).n == 7 and 2 in blk(mm, dy).queues
    assert mm.S.actions["merge"] == 1
    assert mm.S.max_merge_sink <= 11 * 144 / 12
    if variant == BASIC:
        assert mm.T.lookup(2).p == dy
        assert all(mm.D.lookup(pair_key(2, v)) == dy for v in (1, 2))
    assert mm.audit() == []


def test_forward_resolves_moved_elements(monkeypatch):
    mm = toy(DEAMORTIZED)
    dy, x = _two_light_blocks(mm, 5)
    for v in range(4):
        mm.remove(1, v)
    monkeypatch.setattr(multiqueue, "FIXUP_BUDGET", 0)
    mm.remove(2, 0)
    assert mm.store.is_free(x)
    # the dictionary still names the old block; p(X) leads to the new one
    assert mm.D.lookup(pair_key(2, 1)) == x
    assert blk(mm, x).forward == dy
    assert set(blk(mm, dy).stale) == {(2, 1), (2, 2)}
    mm.store.flush()
    mm.op_boundary()
    assert mm.is_member(2, 1)
    assert mm.op_boundary() <= 4
    assert mm.audit() == []
    monkeypatch.setattr(multiqueue, "FIXUP_BUDGET", 12)
    mm.S.fixup(dy)
    assert not blk(mm, dy).stale
    assert mm.D.lookup(pair_key(2, 1)) == dy


def test_big_queue_split_into_small_designated_block():
    mm = toy(DEAMORTIZED)
    x0 = _split_3333(mm)
    mm.insert(5, 0)  # new queue lands in d(Y) = x0 and forces the split
    x = block_of(mm, 1)
    assert x != x0 and sorted(blk(mm, x).queues) == [1, 2]
    fill(mm, 1, 6, 3)  # X = {1: 9, 2: 3}, full
    assert blk(mm, x).n == 12
    for k, vs in ((3, range(3)), (5, range(1)), (4, range(1))):
        for v in vs:
            mm.remove(k, v)
    assert blk(mm, x0).n == 2 and d_y(mm, 1) == x0
    mm.insert(1, 9)
    bx = blk(mm, x)
    assert bx.heavy and list(bx.queues) == [1] and bx.n == 10
    assert mm.T.lookup(1).heavy
    assert blk(mm, x0).n == 5 and sorted(blk(mm, x0).queues) == [2, 4]
    assert mm.audit() == []


def test_heavy_to_light_at_one_element():
    mm = toy(DEAMORTIZED)
    fill(mm, 1, 12)
    mm.insert(2, 0)  # split: queue 1 fills the block alone and turns heavy in place
    x = block_of(mm, 1)
    assert mm.T.lookup(1).heavy and blk(mm, x).prev == NULL and blk(mm, x).next == NULL
    other = block_of(mm, 2)
    for v in range(10):
        mm.remove(1, v)
    assert mm.T.lookup(1).heavy  # 2 elements: not below B/6
    mm.remove(1, 10)
    assert not mm.T.lookup(1).heavy
    assert mm.S.actions["heavy_to_light"] == 1
    # processed under the light rules: merged into d(Y)
    assert block_of(mm, 1) == other and mm.store.is_free(x)
    assert mm.audit() == []


def test_lazy_fixup_budget(monkeypatch):
    # 1488-byte blocks: 124 slots, deficient below 31 elements at gamma = 4
    mm = toy(DEAMORTIZED, block=1488)
    for k in (1, 2, 3, 4):
        fill(mm, k, 31)
    x0 = block_of(mm, 1)
    mm.insert(5, 0)
    x = block_of(mm, 1)
    assert sorted(blk(mm, x).queues) == [1, 2] and d_y(mm, 1) == x0
    for v in range(31):
        mm.remove(1, v)
    assert not blk(mm, x).stale
    monkeypatch.setattr(multiqueue, "FIXUP_BUDGET", 0)
    mm.remove(2, 0)
    assert mm.store.is_free(x)
    b0 = blk(mm, x0)
    assert len(b0.stale) == 30
    monkeypatch.setattr(multiqueue, "FIXUP_BUDGET", 12)
    left = []
    for _ in range(3):
        mm.S.fixup(x0)
        left.append(len(b0.stale))
    assert left == [18, 6, 0]
    assert mm.S.forced_fixups == 0
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_remove_all_everything_frees_all_blocks(variant):
    mm = Multimap(variant, block_bytes=144, cache_bytes=576, header_capacity=64,
                  pair_capacity=4096)
    rng = random.Random(8)
    for i in range(1500):
        mm.insert(rng.randrange(40), i)
    for k in range(40):
        mm.remove_all(k)
    assert mm.S.live_block_count() == 0
    assert mm.audit() == []


@pytest.mark.parametrize("seed", range(3))
def test_deamortized_separation_at_toy_scale(seed):
    mm = Multimap(DEAMORTIZED, block_bytes=144, cache_bytes=576, header_capacity=64,
                  pair_capacity=4096)
    rng = random.Random(seed)
    live = []
    for i in range(10000):
        u = rng.random()
        if live and u < 0.45:
            mm.remove(*live.pop(rng.randrange(len(live))))
        elif u < 0.47:
            k = rng.randrange(60)
            mm.remove_all(k)
            live = [p for p in live if p[0] != k]
        else:
            k = rng.randrange(60)
            mm.insert(k, i)
            live.append((k, i))
    assert mm.S.moves > 100
    assert mm.S.separation_violations == 0
    assert mm.audit() == []
