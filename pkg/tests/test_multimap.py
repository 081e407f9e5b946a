import random

import pytest

from exmm import BASIC, DEAMORTIZED, NULL, DuplicatePairError, Multimap, NotFoundError
from exmm.multiqueue import pair_key

VARIANTS = [BASIC, DEAMORTIZED]


def toy(variant, **kw):
    kw.setdefault("block_bytes", 144)
    kw.setdefault("cache_bytes", 4 * 144)
    kw.setdefault("header_capacity", 256)
    kw.setdefault("pair_capacity", 2048)
    return Multimap(variant, **kw)


def cold(mm, fn):
    mm.store.flush()
    mm.op_boundary()
    out = fn()
    return out, mm.op_boundary()


@pytest.mark.parametrize("variant", VARIANTS)
def test_insert_into_empty_map(variant):
    mm = toy(variant)
    assert not mm.is_member(1, 1)
    mm.insert(1, 1)
    assert mm.count(1) == 1 and mm.is_member(1, 1)
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_duplicate_insert_rejected(variant):
    mm = toy(variant)
    mm.insert(1, 1)
    with pytest.raises(DuplicatePairError):
        mm.insert(1, 1)
    assert mm.count(1) == 1


@pytest.mark.parametrize("variant", VARIANTS)
def test_remove_absent_pair(variant):
    mm = toy(variant)
    with pytest.raises(NotFoundError):
        mm.remove(3, 3)
    mm.insert(3, 4)
    with pytest.raises(NotFoundError):
        mm.remove(3, 3)


@pytest.mark.parametrize("variant", VARIANTS)
def test_insert_then_remove_nulls_header(variant):
    mm = toy(variant)
    mm.insert(5, 1)
    mm.remove(5, 1)
    assert mm.count(5) == 0 and not mm.is_member(5, 1)
    assert mm.T.lookup(5).p == NULL
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_find_all_and_count(variant):
    mm = toy(variant)
    assert mm.find_all(9) == [] and mm.count(9) == 0
    for v in (10, 20, 30):
        mm.insert(9, v)
    assert sorted(mm.find_all(9)) == [(9, 10), (9, 20), (9, 30)]
    mm.remove(9, 20)
    assert mm.count(9) == 2


@pytest.mark.parametrize("variant", VARIANTS)
def test_remove_all(variant):
    mm = toy(variant)
    assert mm.remove_all(4) == 0
    for v in range(5):
        mm.insert(4, v)
    mm.insert(6, 0)
    assert mm.remove_all(4) == 5
    assert mm.find_all(4) == [] and mm.count(4) == 0
    assert mm.contents() == {6: {0}}
    assert mm.audit() == []


def test_basic_remove_all_drops_header_and_dictionary_entries():
    mm = toy(BASIC)
    for v in range(3):
        mm.insert(2, v)
    mm.remove_all(2)
    assert mm.T.lookup(2) is None
    assert all(pair_key(2, v) not in mm.D for v in range(3))
    assert not mm.is_spurious(2, 0)


def test_deamortized_remove_all_leaves_spurious_entries():
    mm = toy(DEAMORTIZED)
    for v in range(3):
        mm.insert(2, v)
    mm.remove_all(2)
    assert pair_key(2, 0) in mm.D
    assert mm.is_spurious(2, 0) and not mm.is_member(2, 0)
    assert mm.audit() == []
    # remove of a spurious pair is an error and changes nothing
    before = len(mm.D)
    with pytest.raises(NotFoundError):
        mm.remove(2, 1)
    assert len(mm.D) == before
    # re-inserting replaces the spurious entry
    mm.insert(2, 0)
    assert mm.is_member(2, 0) and not mm.is_spurious(2, 0)
    assert mm.D.lookup(pair_key(2, 0)) != NULL
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_is_spurious_false_cases(variant):
    mm = toy(variant)
    assert not mm.is_spurious(1, 1)
    mm.insert(1, 1)
    assert not mm.is_spurious(1, 1)


def test_spurious_entries_never_block_inserts():
    mm = toy(DEAMORTIZED, pair_capacity=300)
    rng = random.Random(0)
    live = {}
    nxt = {}
    for step in range(1000):
        k = rng.randrange(20)
        u = rng.random()
        if u < 0.05:
            mm.remove_all(k)
            live.pop(k, None)
        elif u < 0.35 and live.get(k):
            v = live[k].pop()
            mm.remove(k, v)
        else:
            v = nxt.get(k, 0)
            nxt[k] = v + 1
            mm.insert(k, v)
            live.setdefault(k, set()).add(v)
    assert mm.contents() == {k: s for k, s in live.items() if s}
    assert mm.audit() == []


@pytest.mark.parametrize("variant", VARIANTS)
def test_cold_query_ceilings(variant):
    mm = toy(variant)
    rng = random.Random(1)
    pairs = []
    for i in range(400):
        k = rng.randrange(40)
        mm.insert(k, i)
        pairs.append((k, i))
    for k, v in pairs[:100]:
        _, n = cold(mm, lambda: mm.is_member(k, v))
        assert n <= 4
        _, n = cold(mm, lambda: mm.count(k))
        assert n <= 2
        _, n = cold(mm, lambda: mm.is_spurious(k, v))
        assert n <= 4


@pytest.mark.parametrize("variant", VARIANTS)
def test_find_all_over_four_heavy_blocks(variant):
    mm = toy(variant)
    k, v = 77, 0
    while len(mm.S.queue_blocks(k, mm.T.lookup(k)) if mm.T.lookup(k) else ()) < 4:
        mm.insert(k, v)
        v += 1
    got, n = cold(mm, lambda: mm.find_all(k))
    assert len(got) == v and n <= 2 + 4


@pytest.mark.parametrize("variant", VARIANTS)
def test_remove_ceiling_cold(variant):
    mm = toy(variant)
    rng = random.Random(2)
    live = []
    for i in range(600):
        k = rng.randrange(30)
        mm.insert(k, i)
        live.append((k, i))
    rng.shuffle(live)
    for k, v in live:
        _, n = cold(mm, lambda: mm.remove(k, v))
        assert n <= 4 + 12 * 2 + 8
    assert mm.contents() == {}
    assert mm.audit() == []
