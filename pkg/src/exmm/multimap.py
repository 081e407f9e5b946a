"""The multimap ADT: header table ``T``, multiqueue ``S`` and dictionary ``D``.

All three structures share one :class:`~exmm.pagestore.PageStore`, so every
page touched by an operation goes through the same LRU cache and I/O
counter.  Keys are integers below ``2**32``; values are integers below
``2**64``.
"""
import struct

from .cuckoo import RANDOM_WALK, CuckooTable
from .multiqueue import (BASIC, DEAMORTIZED, Block, Header, MultiQueue,
                         Thresholds, pair_key, unpair)
from .pagestore import NULL, PageStore

HEADER_RECORD_BYTES = 12
DICT_RECORD_BYTES = 16
ELEMENT_BYTES = 12


class NotFoundError(KeyError):
    """Removal of a pair that is not stored (or whose D entry is spurious)."""


class DuplicatePairError(KeyError):
    """Insertion of a pair that is already stored."""


def _header_codec(k, h):
    return struct.pack("<IIi", k & 0xFFFFFFFF, h.count & 0xFFFFFFFF, h.p)


def _dict_codec(key, ref):
    k, v = unpair(key)
    return struct.pack("<IQi", k & 0xFFFFFFFF, v, ref)


class Multimap:
    """External-memory multimap.

    ``header_capacity`` sizes ``T`` (distinct keys) and ``pair_capacity``
    sizes ``D`` (stored pairs); both get ``epsilon`` space overhead.

    With ``verify_new=False`` the caller guarantees that inserted pairs are
    not already stored, so insert skips the duplicate lookup in ``D``
    (still performed while spurious entries exist).
    """

    def __init__(self, variant=BASIC, *, beta=3.0, gamma=4.0, block_bytes=4096,
                 cache_bytes=512 * 1024, header_capacity=1 << 20,
                 pair_capacity=1 << 20, epsilon=0.07, seed=0, max_kicks=500,
                 cuckoo_mode=RANDOM_WALK, keep_series=False, store=None,
                 verify_new=True):
        self.variant = variant
        self.verify_new = verify_new
        self.thresholds = Thresholds(block_bytes, ELEMENT_BYTES, beta, gamma, variant)
        self.store = store or PageStore(block_bytes, cache_bytes, keep_series)
        kw = dict(epsilon=epsilon, max_kicks=max_kicks, mode=cuckoo_mode)
        self.T = CuckooTable.for_capacity(self.store, HEADER_RECORD_BYTES, header_capacity,
                                          seed=seed * 2 + 1, codec=_header_codec, **kw)
        self.D = CuckooTable.for_capacity(self.store, DICT_RECORD_BYTES, pair_capacity,
                                          seed=seed * 2 + 2, codec=_dict_codec, **kw)
        self.S = MultiQueue(self.store, self.T, self.D, self.thresholds)
        self.pairs = 0
        self.deamortized = variant == DEAMORTIZED

    # -- ADT --------------------------------------------------------------
    def insert(self, k, v):
        mq = self.S
        check = self.verify_new or mq.spurious > 0
        if check:
            has, ref = mq.locate(k, v)
            if ref != NULL:
                raise DuplicatePairError((k, v))
            if has:
                if not self.deamortized:
                    raise DuplicatePairError((k, v))
                # a spurious leftover of removeAll
                self.D.remove(pair_key(k, v))
                mq.spurious -= 1
        hit = self.T.find(k)
        if hit is None:
            self.T.insert(k, Header())
            hit = self.T.find(k)
        yref, hdr = hit
        ref = mq.enqueue(k, v, hdr, yref)
        hdr.count += 1
        mq.register(k, v, ref, check)
        if self.deamortized:
            mq.fixup(ref)
        self.pairs += 1

    def is_member(self, k, v):
        return self.S.is_member(k, v)

    def is_spurious(self, k, v):
        """True when D still names ``(k, v)`` but the pair is gone."""
        has, ref = self.S.locate(k, v)
        return has and ref == NULL

    def remove(self, k, v):
        mq = self.S
        has, ref = mq.locate(k, v)
        if ref == NULL:
            raise NotFoundError((k, v))
        yref, hdr = self.T.find(k)
        mq.remove_at(k, v, ref, hdr, yref)
        hdr.count -= 1
        self.pairs -= 1

    def find_all(self, k):
        hit = self.T.find(k)
        if hit is None:
            return []
        return [(k, v) for v in self.S.values(k, hit[1])]

    def remove_all(self, k):
        hit = self.T.find(k)
        if hit is None:
            return 0
        yref, hdr = hit
        n = self.S.drop_queue(k, hdr, yref, purge_dictionary=not self.deamortized)
        self.pairs -= n
        if self.deamortized:
            hdr.count = 0
        else:
            self.T.remove(k)
        return n

    def count(self, k):
        hdr = self.T.lookup(k)
        return 0 if hdr is None else hdr.count

    # -- accounting -------------------------------------------------------
    def op_boundary(self):
        return self.store.op_boundary()

    @property
    def reads(self):
        return self.store.stats.reads_from_disk

    def live_data_blocks(self):
        return self.S.live_block_count()

    def load(self):
        """Minimum bytes for the stored pairs over bytes of live ``S`` blocks.

        Live means not on the free list. Header and dictionary pages are
        excluded; see :meth:`store_load` for the whole-store figure.
        """
        blocks = self.S.live_block_count()
        if not blocks:
            return 0.0
        return self.pairs * ELEMENT_BYTES / (blocks * self.store.block_bytes)

    def store_load(self):
        """Like :meth:`load` but over every live page, ``T`` and ``D`` included."""
        live = self.store.live_count()
        if not live:
            return 0.0
        return self.pairs * ELEMENT_BYTES / (live * self.store.block_bytes)

    def audit(self):
        from .audit import audit_multimap
        return audit_multimap(self)

    def contents(self):
        """``{key: set(values)}`` read off the record (no I/O accounting)."""
        out = {}
        for ref in self.S.live:
            b = self.store.peek(ref).payload
            for k, vals in b.queues.items():
                out.setdefault(k, set()).update(vals)
        return out

    def headers(self):
        return dict(self.T.items())


__all__ = ["Multimap", "NotFoundError", "DuplicatePairError", "BASIC", "DEAMORTIZED",
           "Block", "Header"]
