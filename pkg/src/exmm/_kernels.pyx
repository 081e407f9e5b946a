# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: splitmix64 hashing and an O(1) LRU page set.

Bit-identical to :mod:`exmm._kernels_py`.
"""
from cpython.long cimport PyLong_AsUnsignedLongLongMask
from libc.stdint cimport uint64_t
from libcpp.vector cimport vector

cdef object _M64 = 0xFFFFFFFFFFFFFFFF


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _hash(object key, uint64_t seed) except? 0:
    cdef uint64_t lo = PyLong_AsUnsignedLongLongMask(key)
    cdef uint64_t hi = 0
    if key > _M64:
        hi = PyLong_AsUnsignedLongLongMask(key >> 64)
    return _mix(lo ^ _mix(hi ^ seed))


def mix64(z):
    """splitmix64 finalizer over a 64-bit integer."""
    return _mix(PyLong_AsUnsignedLongLongMask(z))


def hash64(key, seed):
    """Seeded 64-bit hash of a non-negative integer key below 2**128."""
    return _hash(key, PyLong_AsUnsignedLongLongMask(seed))


def bucket_pair(key, seed0, seed1, Py_ssize_t nbuckets):
    cdef uint64_t lo = PyLong_AsUnsignedLongLongMask(key)
    cdef uint64_t hi = 0
    if key > _M64:
        hi = PyLong_AsUnsignedLongLongMask(key >> 64)
    cdef uint64_t s0 = PyLong_AsUnsignedLongLongMask(seed0)
    cdef uint64_t s1 = PyLong_AsUnsignedLongLongMask(seed1)
    cdef uint64_t n = <uint64_t>nbuckets
    return (<Py_ssize_t>(_mix(lo ^ _mix(hi ^ s0)) % n),
            <Py_ssize_t>(_mix(lo ^ _mix(hi ^ s1)) % n))


cdef class LRUCache:
    """Set of resident page ids with least-recently-used replacement.

    Pages are dense non-negative integers, so the recency list is kept in
    two index-addressed link arrays that grow with the largest page seen.
    """

    cdef public Py_ssize_t capacity
    cdef public long long evictions
    cdef vector[long long] _prev
    cdef vector[long long] _next
    cdef vector[char] _in
    cdef long long _head   # most recently used
    cdef long long _tail   # least recently used
    cdef Py_ssize_t _size

    def __init__(self, Py_ssize_t capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.evictions = 0
        self._head = -1
        self._tail = -1
        self._size = 0

    cdef inline void _grow(self, long long page):
        cdef size_t n = <size_t>(page + 1)
        if n > self._in.size():
            n = max(n, 2 * self._in.size())
            self._prev.resize(n, -1)
            self._next.resize(n, -1)
            self._in.resize(n, 0)

    cdef inline void _unlink(self, long long page):
        cdef long long p = self._prev[page]
        cdef long long q = self._next[page]
        if p >= 0:
            self._next[p] = q
        else:
            self._head = q
        if q >= 0:
            self._prev[q] = p
        else:
            self._tail = p

    cdef inline void _push_front(self, long long page):
        self._prev[page] = -1
        self._next[page] = self._head
        if self._head >= 0:
            self._prev[self._head] = page
        self._head = page
        if self._tail < 0:
            self._tail = page

    cpdef bint access(self, long long page):
        """Touch ``page``; return True when it had to be fetched (a miss)."""
        if page < 0:
            raise ValueError("negative page id")
        self._grow(page)
        if self._in[page]:
            if self._head != page:
                self._unlink(page)
                self._push_front(page)
            return False
        self._in[page] = 1
        self._push_front(page)
        self._size += 1
        cdef long long victim
        if self._size > self.capacity:
            victim = self._tail
            self._unlink(victim)
            self._in[victim] = 0
            self._size -= 1
            self.evictions += 1
        return True

    def install(self, long long page):
        """Make ``page`` resident as most-recently-used without a fetch."""
        self.access(page)

    def clear(self):
        cdef long long p = self._head
        cdef long long q
        while p >= 0:
            q = self._next[p]
            self._in[p] = 0
            p = q
        self._head = -1
        self._tail = -1
        self._size = 0

    def __contains__(self, page):
        cdef long long p = page
        return 0 <= p < <long long>self._in.size() and self._in[p] != 0

    def __len__(self):
        return self._size

    def resident(self):
        """Resident pages from least to most recently used."""
        out = []
        cdef long long p = self._tail
        while p >= 0:
            out.append(p)
            p = self._prev[p]
        return out
