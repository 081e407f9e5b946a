import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exmm.pagestore import NULL, PageStore, StoreError


def store(pages=4, block=64):
    return PageStore(block_bytes=block, cache_bytes=pages * block)


class BruteLRU:
    """Linear-scan LRU used as the reference for miss counting."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.pages = []
        self.misses = 0

    def read(self, p):
        if p in self.pages:
            self.pages.remove(p)
        else:
            self.misses += 1
            if len(self.pages) == self.capacity:
                self.pages.pop(0)
        self.pages.append(p)


def test_first_allocation_is_page_zero():
    assert store().allocate() == 0


def test_free_list_reuse_is_lifo():
    s = store()
    a, b = s.allocate(), s.allocate()
    s.free(a)
    s.free(b)
    assert s.allocate() == b
    assert s.allocate() == a


def test_payload_survives_free_list():
    s = store()
    p = s.allocate()
    s.read(p).payload[:4] = b"MARK"
    s.free(p)
    assert s.allocate() == p
    assert bytes(s.read(p).payload[:4]) == b"MARK"


def test_free_and_live_counts():
    s = store()
    a, b = s.allocate(), s.allocate()
    s.free(a)
    assert s.free_list_len() == 1
    assert s.live_count() == 1


def test_double_free_is_an_error():
    s = store()
    p = s.allocate()
    s.free(p)
    with pytest.raises(StoreError):
        s.free(p)


def test_null_read_is_an_error():
    with pytest.raises(StoreError):
        store().read(NULL)


def test_cold_read_counts_once():
    s = store()
    p = s.allocate()
    s.flush()
    s.read(p)
    assert s.stats.reads_from_disk == 1
    s.read(p)
    assert s.stats.reads_from_disk == 1


def test_lru_eviction_with_two_slots():
    s = store(pages=2)
    p0, p1, p2 = s.allocate(), s.allocate(), s.allocate()
    s.flush()
    for p in (p0, p1, p2, p0):
        s.read(p)
    assert s.stats.reads_from_disk == 4


def test_new_pages_are_not_charged():
    s = store()
    for _ in range(10):
        s.allocate()
    assert s.stats.reads_from_disk == 0


def test_reused_free_page_is_charged_when_cold():
    s = store(pages=2)
    pages = [s.allocate() for _ in range(4)]
    s.free(pages[0])
    s.flush()
    p = s.allocate()
    s.read(p)
    assert s.stats.reads_from_disk == 1


def test_op_boundary_counts_only_transfers():
    s = store(pages=8)
    pages = [s.allocate() for _ in range(3)]
    assert s.op_boundary() == 0
    s.flush()
    s.read(pages[0])
    s.read(pages[1])
    for _ in range(5):
        s.read(pages[0])
    assert s.op_boundary() == 2
    assert s.op_boundary() == 0


def test_series_sums_to_total():
    s = PageStore(64, 128, keep_series=True)
    pages = [s.allocate() for _ in range(5)]
    for p in pages * 3:
        s.read(p)
        s.op_boundary()
    assert sum(n for _, n in s.stats.series) == s.stats.reads_from_disk


@pytest.mark.parametrize("block, cache", [(64, 64), (64, 100), (0, 64), (64, 0)])
def test_cache_config_validation(block, cache):
    with pytest.raises(ValueError):
        PageStore(block, cache)


def test_disk_image_round_trip(tmp_path):
    s = store()
    a, b = s.allocate(), s.allocate()
    s.read(a).payload[:3] = b"abc"
    s.read(b).payload[-2:] = b"yz"
    s.free(b)
    path = tmp_path / "img.bin"
    s.save(path)
    t = PageStore.load(path, cache_bytes=4 * 64, free_pages=[b])
    assert t.block_bytes == 64 and t.page_count() == 2
    assert bytes(t.peek(a).payload[:3]) == b"abc"
    assert bytes(t.peek(b).payload[-2:]) == b"yz"
    assert t.is_free(b) and not t.is_free(a)


def test_disk_image_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\0" * 64)
    with pytest.raises(StoreError):
        PageStore.load(path)


@settings(max_examples=200, deadline=None)
@given(cap=st.integers(2, 6), seq=st.lists(st.integers(0, 9), max_size=200))
def test_miss_count_matches_brute_force_lru(cap, seq):
    s = PageStore(16, 16 * cap)
    for _ in range(10):
        s.allocate()
    s.flush()
    ref = BruteLRU(cap)
    for p in seq:
        s.read(p)
        ref.read(p)
        assert s.cached_count() <= cap
    assert s.stats.reads_from_disk == ref.misses


@settings(max_examples=100, deadline=None)
@given(ops=st.lists(st.booleans(), max_size=100))
def test_live_plus_free_equals_created(ops):
    s = store()
    live = []
    for alloc in ops:
        if alloc or not live:
            live.append(s.allocate())
        else:
            s.free(live.pop())
        assert s.live_count() + s.free_list_len() == s.page_count()
        assert len(set(live)) == len(live)
