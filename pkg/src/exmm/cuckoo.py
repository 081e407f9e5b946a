"""External-memory cuckoo hashing with page-sized buckets and two choices.

Each side ``T0``/``T1`` is an array of bucket pages in the shared
:class:`~exmm.pagestore.PageStore`.  A record lives in bucket ``h0(key)`` of
``T0`` or ``h1(key)`` of ``T1``.  Two insertion strategies are offered:

* random walk: when both buckets are full, evict a uniformly random resident
  of the current bucket and move it to its alternate bucket, repeating until
  a bucket with room is found or the kick budget runs out (then rehash);
* partitioned BFS: every bucket is split into ``subtable_count`` equal slot
  ranges, every key is hashed to one subtable, and a breadth-first search
  over that subtable's cuckoo graph finds an augmenting path.

Keys are non-negative integers below ``2**128``; payloads are opaque.
"""
import math
import random
import struct

from .kernels import bucket_pair, hash64, mix64
from .pagestore import NULL

RANDOM_WALK = "random_walk"
PARTITIONED_BFS = "partitioned_bfs"

# per bucket page: 2-byte occupancy count + 4-byte owner reference
BUCKET_HEADER_BYTES = 6
_BUCKET_HEADER = struct.Struct("<Hi")

MAX_REHASH_ATTEMPTS = 64


class DuplicateKeyError(KeyError):
    pass


class CapacityError(RuntimeError):
    """The table cannot hold another record (misconfigured size)."""


def partition_count(bucket_capacity, epsilon):
    """Number of subtables ``B/c`` with ``c = ceil(16 ln(1/epsilon))``, at least 1."""
    c = math.ceil(16 * math.log(1 / epsilon))
    return max(1, bucket_capacity // c)


class Bucket:
    """Payload of a bucket page: an unordered set of records plus one owner slot."""

    __slots__ = ("records", "meta", "sub_counts", "codec")

    def __init__(self, codec=None, nsub=0):
        self.records = {}
        self.meta = NULL
        self.sub_counts = [0] * nsub if nsub else None
        self.codec = codec

    def to_bytes(self, block_bytes):
        out = bytearray(block_bytes)
        _BUCKET_HEADER.pack_into(out, 0, len(self.records), self.meta)
        if self.codec is not None:
            off = BUCKET_HEADER_BYTES
            for k, v in self.records.items():
                rec = self.codec(k, v)
                out[off:off + len(rec)] = rec
                off += len(rec)
        return bytes(out)


class CuckooTable:
    def __init__(self, store, record_bytes, buckets_per_side, *, seed=0,
                 mode=RANDOM_WALK, max_kicks=500, subtable_count=None,
                 epsilon=0.07, codec=None, max_bfs_nodes=4096):
        if buckets_per_side < 1:
            raise ValueError("buckets_per_side must be positive")
        cap = (store.block_bytes - BUCKET_HEADER_BYTES) // record_bytes
        if cap < 1:
            raise ValueError("record does not fit in a bucket page")
        if mode not in (RANDOM_WALK, PARTITIONED_BFS):
            raise ValueError(f"unknown cuckoo mode {mode!r}")
        self.store = store
        self.record_bytes = record_bytes
        self.bucket_capacity = cap
        self.nbuckets = buckets_per_side
        self.mode = mode
        self.max_kicks = max_kicks
        self.epsilon = epsilon
        self.max_bfs_nodes = max_bfs_nodes
        self._seed = seed & 0xFFFFFFFFFFFFFFFF
        self.rng = random.Random(seed)
        self.generation = 0
        self.rehashes = 0
        self.kicks = 0
        self.evictions = 0
        self.bfs_inserts = 0
        self.bfs_nodes = 0
        self._n = 0

        if mode == PARTITIONED_BFS:
            nsub = subtable_count or partition_count(cap, epsilon)
            if nsub < 1 or cap // nsub < 1:
                raise ValueError("each subtable needs at least one slot per bucket")
            self.nsub = nsub
            self.sub_cap = cap // nsub
            self._sub_gen = [0] * nsub
            self._sub_total = [0] * nsub
        else:
            self.nsub = 0
            self.sub_cap = cap
        self._reseed()

        self.side = ([], [])
        for s in (0, 1):
            refs = self.side[s]
            for _ in range(buckets_per_side):
                ref = store.allocate()
                store.peek(ref).payload = Bucket(codec, self.nsub)
                refs.append(ref)
        self._index = {}
        for s in (0, 1):
            for i, ref in enumerate(self.side[s]):
                self._index[ref] = (s, i)

    @classmethod
    def for_capacity(cls, store, record_bytes, n_records, epsilon=0.07, **kw):
        """Size the table for ``n_records`` with space overhead ``epsilon``."""
        cap = (store.block_bytes - BUCKET_HEADER_BYTES) // record_bytes
        per_side = max(1, math.ceil((1 + epsilon) * n_records / (2 * cap)))
        return cls(store, record_bytes, per_side, epsilon=epsilon, **kw)

    # -- hashing ----------------------------------------------------------
    def _reseed(self):
        g = self.generation
        self._s0 = mix64(self._seed ^ mix64(2 * g + 1))
        self._s1 = mix64(self._seed ^ mix64(2 * g + 2))
        self._ssub = mix64(~self._seed ^ mix64(g + 7919))

    def _sub_of(self, key):
        return hash64(key, self._ssub) % self.nsub

    def _seeds(self, j):
        if self.nsub:
            gj = self._sub_gen[j]
            return (mix64(self._s0 ^ mix64(j * 1000003 + gj)),
                    mix64(self._s1 ^ mix64(j * 1000003 + gj)))
        return self._s0, self._s1

    def hash_pair(self, key):
        """Bucket indices ``(h0, h1)`` of ``key`` in the current generation."""
        if self.nsub:
            s0, s1 = self._seeds(self._sub_of(key))
            return bucket_pair(key, s0, s1, self.nbuckets)
        return bucket_pair(key, self._s0, self._s1, self.nbuckets)

    def refs_for(self, key):
        h0, h1 = self.hash_pair(key)
        return self.side[0][h0], self.side[1][h1]

    @property
    def capacity(self):
        return 2 * self.nbuckets * self.bucket_capacity

    def __len__(self):
        return self._n

    # -- point operations -------------------------------------------------
    def find(self, key):
        """Return ``(bucket_ref, payload)`` or ``None``; reads at most 2 pages."""
        h0, h1 = self.hash_pair(key)
        read = self.store.read
        ref = self.side[0][h0]
        recs = read(ref).payload.records
        if key in recs:
            return ref, recs[key]
        ref = self.side[1][h1]
        recs = read(ref).payload.records
        if key in recs:
            return ref, recs[key]
        return None

    def lookup(self, key):
        hit = self.find(key)
        return None if hit is None else hit[1]

    def __contains__(self, key):
        return self.find(key) is not None

    def remove(self, key):
        """Delete ``key``; returns False when it was absent."""
        for ref in self.refs_for(key):
            b = self.store.read(ref).payload
            if key in b.records:
                del b.records[key]
                if self.nsub:
                    j = self._sub_of(key)
                    b.sub_counts[j] -= 1
                    self._sub_total[j] -= 1
                self._n -= 1
                return True
        return False

    def update(self, key, payload):
        """Replace the payload of ``key`` where it sits; False when absent."""
        for ref in self.refs_for(key):
            recs = self.store.read(ref).payload.records
            if key in recs:
                recs[key] = payload
                return True
        return False

    def meta(self, ref):
        return self.store.read(ref).payload.meta

    def set_meta(self, ref, value):
        self.store.read(ref).payload.meta = value

    # -- insertion --------------------------------------------------------
    def insert(self, key, payload, evictable=None, check=True):
        """Store a new record.  Returns True when a full rehash was needed.

        ``evictable(key, payload)``, when given, marks records that may be
        deleted to make room (checked in every full bucket the walk visits).
        With ``check=False`` the caller vouches that ``key`` is absent, and
        the second bucket is only read when the first one is full.
        """
        r0, r1 = self.refs_for(key)
        read = self.store.read
        b0 = read(r0).payload
        if self._n >= self.capacity and evictable is None:
            raise CapacityError("cuckoo table is full")
        if key in b0.records:
            raise DuplicateKeyError(key)
        if not check and not self.nsub and len(b0.records) < self.bucket_capacity:
            b0.records[key] = payload
            self._n += 1
            return False
        b1 = read(r1).payload
        if key in b1.records:
            raise DuplicateKeyError(key)
        if self.nsub:
            return self._insert_bfs(key, payload, b0, b1)
        if len(b0.records) < self.bucket_capacity:
            b0.records[key] = payload
        elif len(b1.records) < self.bucket_capacity:
            b1.records[key] = payload
        elif evictable is not None and self._evict_one((b0, b1), evictable):
            room = b0 if len(b0.records) < self.bucket_capacity else b1
            room.records[key] = payload
        else:
            start = r0 if self.rng.random() < 0.5 else r1
            left = self._walk(key, payload, start, evictable, self.max_kicks)
            if left is not None:
                self._n += 1
                self._rehash_all([left])
                return True
        self._n += 1
        return False

    def _evict_one(self, buckets, evictable):
        for b in buckets:
            recs = b.records
            for k2 in list(recs):
                if evictable(k2, recs[k2]):
                    del recs[k2]
                    self._n -= 1
                    self.evictions += 1
                    return True
        return False

    def _walk(self, key, payload, ref, evictable, budget):
        """Random walk from the full bucket ``ref``; returns the homeless record or None."""
        read = self.store.read
        cap = self.bucket_capacity
        rng = self.rng
        index = self._index
        for _ in range(budget):
            b = read(ref).payload
            recs = b.records
            if len(recs) < cap:
                recs[key] = payload
                return None
            if evictable is not None:
                for k2 in list(recs):
                    if evictable(k2, recs[k2]):
                        del recs[k2]
                        self._n -= 1
                        self.evictions += 1
                        recs[key] = payload
                        return None
            keys = list(recs)
            victim = keys[int(rng.random() * len(keys))]
            vpay = recs.pop(victim)
            recs[key] = payload
            self.kicks += 1
            key, payload = victim, vpay
            side = index[ref][0]
            h = self.hash_pair(key)[1 - side]
            ref = self.side[1 - side][h]
        b = read(ref).payload
        if len(b.records) < cap:
            b.records[key] = payload
            return None
        return key, payload

    def _rehash_all(self, extra):
        """Re-insert every record under fresh hash functions."""
        records = list(extra)
        for s in (0, 1):
            for ref in self.side[s]:
                b = self.store.read(ref).payload
                records.extend(b.records.items())
        for _ in range(MAX_REHASH_ATTEMPTS):
            self.generation += 1
            self._reseed()
            if self.nsub:
                self._sub_gen = [0] * self.nsub
                self._sub_total = [0] * self.nsub
            self._clear_buckets()
            if all(self._place_fresh(k, p) for k, p in records):
                self.rehashes += 1
                return
        raise CapacityError("rehash failed repeatedly; table too small")

    def _clear_buckets(self):
        for s in (0, 1):
            for ref in self.side[s]:
                b = self.store.read(ref).payload
                b.records.clear()
                if b.sub_counts is not None:
                    b.sub_counts = [0] * self.nsub

    def _place_fresh(self, key, payload):
        r0, r1 = self.refs_for(key)
        if self.nsub:
            return self._bfs_place(key, payload, r0, r1)
        read = self.store.read
        for ref in (r0, r1):
            recs = read(ref).payload.records
            if len(recs) < self.bucket_capacity:
                recs[key] = payload
                return True
        return self._walk(key, payload, r0, None, self.max_kicks) is None

    # -- partitioned BFS --------------------------------------------------
    def _insert_bfs(self, key, payload, b0, b1):
        j = self._sub_of(key)
        self.bfs_inserts += 1
        limit = (1 + self.epsilon / 3) * self.capacity / (1 + self.epsilon) / self.nsub
        self._n += 1
        if self._sub_total[j] + 1 > limit:
            self._rehash_all([(key, payload)])
            return True
        r0, r1 = self.refs_for(key)
        if self._bfs_place(key, payload, r0, r1):
            return False
        # re-insert only this subtable under a fresh hash pair
        self._rehash_subtable(j, [(key, payload)])
        return True

    def _bfs_place(self, key, payload, r0, r1):
        j = self._sub_of(key)
        read = self.store.read
        sub_cap = self.sub_cap
        for ref in (r0, r1):
            b = read(ref).payload
            if b.sub_counts[j] < sub_cap:
                self._put(b, key, payload, j)
                return True
        parent = {r0: None, r1: None}
        frontier = [r0, r1]
        nodes = 0
        seeds = self._seeds(j)
        index = self._index
        while frontier and nodes < self.max_bfs_nodes:
            nxt = []
            for ref in frontier:
                nodes += 1
                b = read(ref).payload
                side = index[ref][0]
                for y in b.records:
                    if self._sub_of(y) != j:
                        continue
                    h = bucket_pair(y, seeds[0], seeds[1], self.nbuckets)[1 - side]
                    alt = self.side[1 - side][h]
                    if alt in parent:
                        continue
                    parent[alt] = (ref, y)
                    ab = read(alt).payload
                    if ab.sub_counts[j] < sub_cap:
                        self.bfs_nodes += nodes
                        self._apply_path(parent, alt, j)
                        self._put(self._first_free(r0, r1, j), key, payload, j)
                        return True
                    nxt.append(alt)
            frontier = nxt
        self.bfs_nodes += nodes
        return False

    def _first_free(self, r0, r1, j):
        read = self.store.read
        for ref in (r0, r1):
            b = read(ref).payload
            if b.sub_counts[j] < self.sub_cap:
                return b
        raise AssertionError("augmenting path did not free a start bucket")

    def _apply_path(self, parent, end, j):
        read = self.store.read
        ref = end
        while parent[ref] is not None:
            src, y = parent[ref]
            sb = read(src).payload
            pay = sb.records.pop(y)
            sb.sub_counts[j] -= 1
            db = read(ref).payload
            db.records[y] = pay
            db.sub_counts[j] += 1
            self.kicks += 1
            ref = src

    def _put(self, b, key, payload, j):
        b.records[key] = payload
        b.sub_counts[j] += 1
        self._sub_total[j] += 1

    def _rehash_subtable(self, j, extra):
        records = list(extra)
        for s in (0, 1):
            for ref in self.side[s]:
                b = self.store.read(ref).payload
                mine = [k for k in b.records if self._sub_of(k) == j]
                for k in mine:
                    records.append((k, b.records.pop(k)))
                b.sub_counts[j] = 0
        for _ in range(MAX_REHASH_ATTEMPTS):
            self._sub_gen[j] += 1
            self._sub_total[j] = 0
            if all(self._place_fresh(k, p) for k, p in records):
                self.rehashes += 1
                return
            for s in (0, 1):
                for ref in self.side[s]:
                    b = self.store.read(ref).payload
                    for k in [k for k in b.records if self._sub_of(k) == j]:
                        del b.records[k]
                    b.sub_counts[j] = 0
        raise CapacityError("subtable rehash failed repeatedly")

    # -- diagnostics ------------------------------------------------------
    def items(self):
        """All records, off the record (no I/O accounting)."""
        for s in (0, 1):
            for ref in self.side[s]:
                yield from self.store.peek(ref).payload.records.items()

    def bucket_load(self, ref):
        return len(self.store.peek(ref).payload.records)

    def audit(self):
        """Return a list of invariant violations (empty when consistent)."""
        errors = []
        seen = set()
        n = 0
        peek = self.store.peek
        for s in (0, 1):
            for i, ref in enumerate(self.side[s]):
                b = peek(ref).payload
                if len(b.records) > self.bucket_capacity:
                    errors.append(f"bucket {ref} over capacity")
                counts = [0] * self.nsub if self.nsub else None
                for k in b.records:
                    n += 1
                    if k in seen:
                        errors.append(f"key {k} stored twice")
                    seen.add(k)
                    if self.hash_pair(k)[s] != i:
                        errors.append(f"key {k} in a bucket it does not hash to")
                    if counts is not None:
                        counts[self._sub_of(k)] += 1
                if counts is not None:
                    if counts != b.sub_counts:
                        errors.append(f"bucket {ref} subtable counts out of sync")
                    if max(counts, default=0) > self.sub_cap:
                        errors.append(f"bucket {ref} subtable slot range overflow")
        if n != self._n:
            errors.append(f"record count {self._n} != stored {n}")
        return errors
