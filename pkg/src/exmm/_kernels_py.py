"""Pure-Python versions of the hot kernels.

Used when the compiled ``_kernels`` extension is not available.  Both
implementations must produce bit-identical results for the same inputs.
"""
from collections import OrderedDict

MASK64 = (1 << 64) - 1


def mix64(z):
    """splitmix64 finalizer over a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def hash64(key, seed):
    """Seeded 64-bit hash of a non-negative integer key below 2**128."""
    hi = key >> 64
    lo = key & MASK64
    return mix64(lo ^ mix64(hi ^ seed))


def bucket_pair(key, seed0, seed1, nbuckets):
    return hash64(key, seed0) % nbuckets, hash64(key, seed1) % nbuckets


class LRUCache:
    """Set of resident page ids with least-recently-used replacement."""

    __slots__ = ("capacity", "evictions", "_od")

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.evictions = 0
        self._od = OrderedDict()

    def access(self, page):
        """Touch ``page``; return True when it had to be fetched (a miss)."""
        od = self._od
        if page in od:
            od.move_to_end(page)
            return False
        od[page] = None
        if len(od) > self.capacity:
            od.popitem(last=False)
            self.evictions += 1
        return True

    def install(self, page):
        """Make ``page`` resident as most-recently-used without a fetch."""
        self.access(page)

    def clear(self):
        self._od.clear()

    def __contains__(self, page):
        return page in self._od

    def __len__(self):
        return len(self._od)

    def resident(self):
        """Resident pages from least to most recently used."""
        return list(self._od)
