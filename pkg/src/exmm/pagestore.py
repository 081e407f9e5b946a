"""Simulated two-level memory: an unbounded page array behind an LRU cache.

Only transfers from disk into the cache are counted.  Every fetch is assumed
to be preceded by a write-back of the evicted page, which is not counted.
"""
import struct

from .kernels import LRUCache

NULL = -1

IMAGE_MAGIC = b"EXMMIMG1"
_IMAGE_HEADER = struct.Struct("<8sIQ")


class StoreError(Exception):
    """Contract violation against the page store (double free, NULL read...)."""


class Page:
    """One block of the store.

    ``payload`` is a ``bytearray`` of exactly ``block_bytes`` for raw pages.
    Higher layers may replace it with a structured object exposing
    ``to_bytes(block_bytes)``; the object then owns the byte layout.
    """

    __slots__ = ("payload",)

    def __init__(self, payload):
        self.payload = payload

    def raw(self, block_bytes):
        p = self.payload
        if isinstance(p, (bytes, bytearray)):
            return bytes(p)
        return p.to_bytes(block_bytes)


class IoStats:
    __slots__ = ("reads_from_disk", "per_op_reads", "series", "ops")

    def __init__(self, keep_series=False):
        self.reads_from_disk = 0
        self.per_op_reads = 0
        self.ops = 0
        self.series = [] if keep_series else None


class PageStore:
    def __init__(self, block_bytes=4096, cache_bytes=512 * 1024, keep_series=False):
        if block_bytes <= 0 or cache_bytes <= 0 or cache_bytes % block_bytes:
            raise ValueError("cache_bytes must be a positive multiple of block_bytes")
        capacity = cache_bytes // block_bytes
        if capacity < 2:
            raise ValueError("cache must hold at least two pages")
        self.block_bytes = block_bytes
        self.cache_bytes = cache_bytes
        self.capacity = capacity
        self.stats = IoStats(keep_series)
        self._pages = []
        self._free = []
        self._is_free = bytearray()
        self._cache = LRUCache(capacity)

    # -- allocation -------------------------------------------------------
    def allocate(self):
        """Return a page off the free list (LIFO), else a brand-new one.

        A reused page keeps its previous payload untouched.  A brand-new page
        is created directly in the cache, so no disk transfer is charged.
        """
        if self._free:
            p = self._free.pop()
            self._is_free[p] = 0
            return p
        p = len(self._pages)
        self._pages.append(Page(bytearray(self.block_bytes)))
        self._is_free.append(0)
        self._cache.install(p)
        return p

    def free(self, p):
        self._check(p)
        if self._is_free[p]:
            raise StoreError(f"double free of page {p}")
        self._is_free[p] = 1
        self._free.append(p)

    # -- access -----------------------------------------------------------
    def read(self, p):
        """Fetch page ``p`` through the cache, counting a miss as one I/O."""
        if p < 0:
            raise StoreError("NULL page dereferenced")
        if self._cache.access(p):
            st = self.stats
            st.reads_from_disk += 1
            st.per_op_reads += 1
        return self._pages[p]

    def peek(self, p):
        """Off-the-record access: no accounting, no recency update."""
        self._check(p)
        return self._pages[p]

    def op_boundary(self):
        """Close the current operation and return the reads it performed."""
        st = self.stats
        n = st.per_op_reads
        st.per_op_reads = 0
        if st.series is not None:
            st.series.append((st.ops, n))
        st.ops += 1
        return n

    def flush(self):
        """Write back and drop every cached page (the next reads are cold)."""
        self._cache.clear()

    # -- diagnostics ------------------------------------------------------
    def is_free(self, p):
        self._check(p)
        return bool(self._is_free[p])

    def is_cached(self, p):
        return p in self._cache

    def page_count(self):
        return len(self._pages)

    def free_list_len(self):
        return len(self._free)

    def live_count(self):
        return len(self._pages) - len(self._free)

    def cached_count(self):
        return len(self._cache)

    @property
    def writebacks(self):
        return self._cache.evictions

    def _check(self, p):
        if p < 0 or p >= len(self._pages):
            raise StoreError(f"invalid page reference {p}")

    # -- disk image -------------------------------------------------------
    def save(self, path):
        """Write a disk image: header (magic, block_bytes, page count) then raw pages."""
        bb = self.block_bytes
        with open(path, "wb") as fh:
            fh.write(_IMAGE_HEADER.pack(IMAGE_MAGIC, bb, len(self._pages)))
            for page in self._pages:
                data = page.raw(bb)
                if len(data) != bb:
                    raise StoreError("page serialised to the wrong size")
                fh.write(data)

    @classmethod
    def load(cls, path, cache_bytes=512 * 1024, free_pages=()):
        """Rebuild a store of raw pages from an image written by :meth:`save`."""
        with open(path, "rb") as fh:
            magic, bb, count = _IMAGE_HEADER.unpack(fh.read(_IMAGE_HEADER.size))
            if magic != IMAGE_MAGIC:
                raise StoreError("not an exmm disk image")
            store = cls(bb, max(cache_bytes, 2 * bb))
            for _ in range(count):
                data = fh.read(bb)
                if len(data) != bb:
                    raise StoreError("truncated disk image")
                store._pages.append(Page(bytearray(data)))
                store._is_free.append(0)
        for p in free_pages:
            store.free(p)
        return store
