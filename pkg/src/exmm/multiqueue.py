"""Location-aware multiqueue over a table of shared or dedicated blocks.

A queue is *light* while it shares a block with other light queues and
*heavy* once it owns a doubly-linked chain of blocks.  The dictionary ``D``
maps every element to the block that stores it, so a point removal costs
O(1) I/Os.  Blocks below the deficiency threshold are only tolerated when
they are the designated deficient block ``d(Y)`` of a header page ``Y`` (for
light queues) or ``d(Q)`` of a heavy queue.

Two variants share this module:

``basic``
    Every element move immediately updates the affected ``T`` headers and
    ``D`` entries (amortized O(1)).
``deamortized``
    Moves only record a forwarding handle ``p(X)`` from the source to the
    sink and mark the moved elements stale; every enqueue/remove that targets
    a block repairs up to ``FIXUP_BUDGET`` stale elements of that block and
    of its forward.  Light-to-heavy transitions are folded into the split.

All sizes are compared in bytes: a block or queue of ``n`` elements has size
``n * element_bytes``.
"""
import struct
from dataclasses import dataclass

from .pagestore import NULL

BASIC = "basic"
DEAMORTIZED = "deamortized"

FIXUP_BUDGET = 12

_KEY_MASK = (1 << 64) - 1


def pair_key(k, v):
    """Dictionary key for the element ``(k, v)``."""
    return (k << 64) | v


def unpair(key):
    return key >> 64, key & _KEY_MASK


class InvariantError(RuntimeError):
    """Internal structure found inconsistent during an operation."""


@dataclass(frozen=True)
class Thresholds:
    block_bytes: int = 4096
    element_bytes: int = 12
    beta: float = 3.0
    gamma: float = 4.0
    variant: str = BASIC

    def __post_init__(self):
        if self.beta < 1 or self.gamma <= 1:
            raise ValueError("beta must be >= 1 and gamma > 1")
        if self.block_bytes // self.element_bytes < 2:
            raise ValueError("a block must hold at least two elements")
        if self.variant not in (BASIC, DEAMORTIZED):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def slots(self):
        return self.block_bytes // self.element_bytes

    @property
    def heavy_bytes(self):
        return self.block_bytes / self.beta

    @property
    def deficient_bytes(self):
        return self.block_bytes / self.gamma

    @property
    def merge_ceiling(self):
        return 2 * self.block_bytes / 3

    @property
    def third(self):
        return self.block_bytes / 3

    @property
    def heavy_to_light_bytes(self):
        return self.block_bytes / (6 if self.variant == DEAMORTIZED else 4)


class Header:
    """Per-key record stored in ``T``: count, head block, heavy flag, ``d(Q)``."""

    __slots__ = ("count", "p", "heavy", "dq")

    def __init__(self, count=0, p=NULL, heavy=False, dq=NULL):
        self.count = count
        self.p = p
        self.heavy = heavy
        self.dq = dq

    def __repr__(self):
        return f"Header(count={self.count}, p={self.p}, heavy={self.heavy}, dq={self.dq})"


_BLOCK_META = struct.Struct("<BHiiii")


class Block:
    """Payload of a page of ``S``.

    ``queues`` maps key -> insertion-ordered dict of values; the element
    array in the page is the concatenation of these segments.  ``stale``
    maps a not-up-to-date element to the block it was moved out of;
    ``stale_heads`` does the same for queues whose ``T`` header is behind.
    ``pending`` counts stale entries per origin block.  ``quiet`` counts
    targeted operations since this block last took part in a move.
    """

    __slots__ = ("heavy", "queues", "n", "prev", "next", "forward", "owner",
                 "stale", "stale_heads", "pending", "quiet")

    def __init__(self):
        self.heavy = False
        self.queues = {}
        self.n = 0
        self.prev = NULL
        self.next = NULL
        self.forward = NULL
        self.owner = NULL
        self.stale = {}
        self.stale_heads = {}
        self.pending = {}
        self.quiet = None

    def reset(self):
        """Clear contents on reallocation; the forwarding handle survives."""
        self.heavy = False
        self.queues = {}
        self.n = 0
        self.prev = NULL
        self.next = NULL
        self.owner = NULL
        self.stale = {}
        self.stale_heads = {}
        self.pending = {}

    def to_bytes(self, block_bytes):
        # element array (4-byte key, 8-byte value) with a 0xFFFFFFFF marker
        # between queues; link metadata lives in the fixed-size trailer
        out = bytearray(block_bytes)
        off = 0
        for k, vals in self.queues.items():
            for v in vals:
                if off + 12 > block_bytes:
                    break
                struct.pack_into("<IQ", out, off, k & 0xFFFFFFFF, v & _KEY_MASK)
                off += 12
        tail = block_bytes - _BLOCK_META.size
        if tail >= off:
            _BLOCK_META.pack_into(out, tail, int(self.heavy), self.n & 0xFFFF,
                                  self.prev, self.next, self.forward, self.owner)
        return bytes(out)


class MultiQueue:
    def __init__(self, store, headers, dictionary, thresholds):
        self.store = store
        self.T = headers
        self.D = dictionary
        self.th = thresholds
        self.deamortized = thresholds.variant == DEAMORTIZED
        self.live = set()
        self.pending_el = None
        self.spurious = 0
        # instrumentation
        self.moves = 0
        self.separation_violations = 0
        self.forced_fixups = 0
        self.max_merge_sink = 0
        self.actions = {"split": 0, "heavy_split": 0, "merge": 0, "d_alteration": 0,
                        "light_to_heavy": 0, "heavy_to_light": 0}
        eb = thresholds.element_bytes
        bb = thresholds.block_bytes
        self._eb = eb
        self._slots = thresholds.slots
        # element-count thresholds derived from the byte thresholds
        self._heavy_n = thresholds.heavy_bytes / eb
        self._deficient_n = thresholds.deficient_bytes / eb
        self._ceiling_n = thresholds.merge_ceiling / eb
        self._third_n = thresholds.third / eb
        self._h2l_n = thresholds.heavy_to_light_bytes / eb
        self._quiet_min = bb / (12 * eb)

    # -- page helpers -----------------------------------------------------
    def _blk(self, ref):
        return self.store.read(ref).payload

    def _alloc(self):
        ref = self.store.allocate()
        page = self.store.read(ref)
        if isinstance(page.payload, Block):
            page.payload.reset()
        else:
            page.payload = Block()
        self.live.add(ref)
        return ref

    def _free(self, ref, b):
        if b.owner != NULL:
            if self.T.meta(b.owner) == ref:
                self.T.set_meta(b.owner, NULL)
            b.owner = NULL
        b.reset()
        self.live.discard(ref)
        self.store.free(ref)

    def _designate(self, yref, ref, b):
        """Make ``ref`` the deficient block ``d(Y)`` of header page ``yref``."""
        old = self.T.meta(yref)
        if old != NULL and old != ref:
            self._blk(old).owner = NULL
        if b.owner != NULL and b.owner != yref:
            if self.T.meta(b.owner) == ref:
                self.T.set_meta(b.owner, NULL)
        b.owner = yref
        self.T.set_meta(yref, ref)

    def _undesignate(self, b):
        if b.owner != NULL:
            own = b.owner
            b.owner = NULL
            return own
        return NULL

    # -- stale bookkeeping (deamortized) ----------------------------------
    @staticmethod
    def _add_pending(b, origin):
        b.pending[origin] = b.pending.get(origin, 0) + 1

    @staticmethod
    def _drop_pending(b, origin):
        c = b.pending[origin] - 1
        if c:
            b.pending[origin] = c
        else:
            del b.pending[origin]

    def _fix_element(self, ref, b, el):
        origin = b.stale.pop(el)
        self._drop_pending(b, origin)
        if el != self.pending_el:
            self.D.update(pair_key(*el), ref)
        k = el[0]
        if k in b.stale_heads:
            self._fix_head(ref, b, k)

    def _fix_head(self, ref, b, k):
        origin = b.stale_heads.pop(k)
        if origin != ref:
            self._drop_pending(b, origin)
        hit = self.T.find(k)
        if hit is not None:
            self._sync_header(k, hit[1], ref, b)

    def _fix_some(self, ref, b, budget):
        if b.stale:
            for el in list(b.stale)[:budget]:
                self._fix_element(ref, b, el)
                budget -= 1
        while budget > 0 and b.stale_heads:
            self._fix_head(ref, b, next(iter(b.stale_heads)))
            budget -= 1

    def fixup(self, ref):
        """Lazy repair of ``ref`` and its forward (deamortized only)."""
        b = self._blk(ref)
        if b.stale or b.stale_heads:
            self._fix_some(ref, b, FIXUP_BUDGET)
        f = b.forward
        if f != NULL and f != ref:
            fb = self._blk(f)
            if fb.stale or fb.stale_heads:
                self._fix_some(f, fb, FIXUP_BUDGET)
            if ref not in fb.pending:
                # nothing moved out of ``ref`` is still unresolved
                b.forward = NULL

    def _force_fix_from(self, origin):
        """Repair everything still forwarded from ``origin`` before reusing p(origin)."""
        ob = self._blk(origin)
        f = ob.forward
        if f == NULL:
            return
        fb = self._blk(f)
        if origin in fb.pending:
            for el in [e for e, o in fb.stale.items() if o == origin]:
                self.forced_fixups += 1
                self._fix_element(f, fb, el)
            for k in [q for q, o in fb.stale_heads.items() if o == origin]:
                self.forced_fixups += 1
                self._fix_head(f, fb, k)
        ob.forward = NULL

    def _sync_header(self, k, hdr, ref, b):
        """Bring ``hdr`` in line with block ``ref``, which is known to hold queue ``k``."""
        if b.heavy:
            if not hdr.heavy:
                hdr.heavy = True
                hdr.p = ref
                hdr.dq = ref
        elif hdr.p != ref or hdr.heavy:
            hdr.p = ref
            hdr.heavy = False
            hdr.dq = NULL
        if k in b.stale_heads:
            origin = b.stale_heads.pop(k)
            if origin != ref:
                self._drop_pending(b, origin)

    # -- moving elements ----------------------------------------------------
    def _note_move(self, src, sb, dst, db):
        self.moves += 1
        if sb.quiet is not None and sb.quiet < self._quiet_min:
            self.separation_violations += 1
        sb.quiet = 0
        db.quiet = 0

    def _move_queues(self, src, sb, dst, db, keys, held):
        """Move whole queues ``keys`` from ``src`` to ``dst``.

        ``held`` maps keys whose header object the caller already holds.
        """
        deam = self.deamortized
        if deam:
            if sb.forward != NULL and sb.forward != dst:
                self._force_fix_from(src)
            for k in keys:
                for v in sb.queues[k]:
                    if (k, v) in sb.stale:
                        self.forced_fixups += 1
                        self._fix_element(src, sb, (k, v))
        self._note_move(src, sb, dst, db)
        eb_count = 0
        for k in keys:
            vals = sb.queues.pop(k)
            n = len(vals)
            eb_count += n
            if k in db.queues:
                db.queues[k].update(vals)
            else:
                db.queues[k] = vals
            if k in sb.stale_heads:
                origin = sb.stale_heads.pop(k)
                if origin != src:
                    self._drop_pending(sb, origin)
            if deam:
                for v in vals:
                    db.stale[(k, v)] = src
                db.pending[src] = db.pending.get(src, 0) + n
                hdr = held.get(k)
                if hdr is not None:
                    self._sync_header(k, hdr, dst, db)
                else:
                    db.stale_heads[k] = src
                    db.pending[src] += 1
            else:
                pel = self.pending_el
                upd = self.D.update
                for v in vals:
                    if (k, v) != pel:
                        upd(pair_key(k, v), dst)
                hdr = held.get(k)
                if hdr is None and not db.heavy:
                    hit = self.T.find(k)
                    hdr = hit[1]
                if hdr is not None and not db.heavy:
                    hdr.p = dst
        sb.n -= eb_count
        db.n += eb_count
        if deam:
            sb.forward = dst
        return eb_count

    # -- enqueue ------------------------------------------------------------
    def enqueue(self, k, v, hdr, yref):
        """Add ``(k, v)`` to the queue of ``hdr`` (header page ``yref``); return its block."""
        self.pending_el = (k, v)
        try:
            ref = self._place(k, v, hdr, yref)
        finally:
            self.pending_el = None
        return ref

    def _place(self, k, v, hdr, yref):
        slots = self._slots
        for _ in range(16):
            if hdr.heavy:
                ref = hdr.dq
                b = self._blk(ref)
                if b.n >= slots:
                    ref = self._heavy_split(k, hdr)
                    b = self._blk(ref)
                self._add(ref, b, k, v)
                return ref
            if hdr.p == NULL:
                ref = self.T.meta(yref)
                if ref == NULL:
                    ref = self._alloc()
                    self._designate(yref, ref, self._blk(ref))
            else:
                ref = self.resolve(k, hdr)
                if hdr.heavy:
                    continue
            b = self._blk(ref)
            if b.n >= slots:
                self._split(ref, b, k, hdr, yref)
                continue
            self._add(ref, b, k, v)
            hdr.p = ref
            if not self.deamortized and len(b.queues[k]) > self._heavy_n:
                return self._light_to_heavy(ref, b, k, hdr, yref)
            return ref
        raise InvariantError("enqueue did not converge")

    def _add(self, ref, b, k, v):
        q = b.queues.get(k)
        if q is None:
            b.queues[k] = {v: None}
        else:
            q[v] = None
        b.n += 1
        if b.quiet is not None:
            b.quiet += 1

    def resolve(self, k, hdr):
        """Block currently holding queue ``k``'s head, repairing a stale header."""
        ref = hdr.p
        b = self._blk(ref)
        if k in b.queues:
            if b.heavy != hdr.heavy or k in b.stale_heads:
                self._sync_header(k, hdr, ref, b)
            return ref
        f = b.forward
        if f != NULL:
            fb = self._blk(f)
            if k in fb.queues:
                self._sync_header(k, hdr, f, fb)
                return f
        raise InvariantError(f"queue {k} not found at its header block or forward")

    def _heavy_split(self, k, hdr):
        self.actions["heavy_split"] += 1
        ref = self._alloc()
        nb = self._blk(ref)
        nb.heavy = True
        nb.queues[k] = {}
        head = hdr.p
        nb.next = head
        self._blk(head).prev = ref
        hdr.p = ref
        hdr.dq = ref
        return ref

    def _split(self, ref, b, k, hdr, yref):
        """Split the full light block ``ref``; ``k`` is the key being enqueued."""
        self.actions["split"] += 1
        held = {k: hdr}
        if self.deamortized:
            big = max(b.queues, key=lambda q: len(b.queues[q]))
            nbig = len(b.queues[big])
            if nbig >= self._third_n:
                self._split_big_queue(ref, b, big, nbig, held, yref)
                return
        if len(b.queues) == 1:
            # a single light queue filling a block: dedicate the block to it
            only = next(iter(b.queues))
            self._make_heavy_in_place(ref, b, only, held)
            return
        sink = self._alloc()
        sb = self._blk(sink)
        moved = []
        size = 0
        keys = list(b.queues)
        for q in keys[:-1]:
            if size >= self._third_n:
                break
            moved.append(q)
            size += len(b.queues[q])
        self._move_queues(ref, b, sink, sb, moved, held)

    def _split_big_queue(self, ref, b, big, nbig, held, yref):
        if nbig <= self._ceiling_n:
            # move the big queue to a dedicated block
            sink = self._alloc()
            sb = self._blk(sink)
            sb.heavy = True
            self._move_queues(ref, b, sink, sb, [big], held)
            self.actions["light_to_heavy"] += 1
            return
        others = [q for q in b.queues if q != big]
        if others:
            dy = self.T.meta(yref)
            if dy != NULL and dy != ref and self._blk(dy).n < self._third_n:
                sink = dy
                sb = self._blk(dy)
            else:
                sink = self._alloc()
                sb = self._blk(sink)
                if b.owner == yref:
                    b.owner = NULL
                self._designate(yref, sink, sb)
            self._move_queues(ref, b, sink, sb, others, held)
        self._make_heavy_in_place(ref, b, big, held)

    def _make_heavy_in_place(self, ref, b, k, held):
        self.actions["light_to_heavy"] += 1
        if b.owner != NULL:
            own = self._undesignate(b)
            if self.T.meta(own) == ref:
                self.T.set_meta(own, NULL)
        b.heavy = True
        hdr = held.get(k)
        if hdr is not None:
            hdr.heavy = True
            hdr.p = ref
            hdr.dq = ref
            if k in b.stale_heads:
                self._sync_header(k, hdr, ref, b)
        elif self.deamortized:
            if k not in b.stale_heads:
                b.stale_heads[k] = ref
        else:
            h = self.T.find(k)[1]
            h.heavy = True
            h.p = ref
            h.dq = ref

    def _light_to_heavy(self, ref, b, k, hdr, yref):
        """Basic variant: move queue ``k`` to its own block; return that block."""
        self.actions["light_to_heavy"] += 1
        sink = self._alloc()
        sb = self._blk(sink)
        sb.heavy = True
        self._move_queues(ref, b, sink, sb, [k], {})
        hdr.p = sink
        hdr.heavy = True
        hdr.dq = sink
        self._settle_light(ref, b, yref, {})
        return sink

    # -- lookup -------------------------------------------------------------
    def locate(self, k, v):
        """Return ``(has_entry, block)``; block is NULL if ``(k, v)`` is not stored."""
        ref = self.D.lookup(pair_key(k, v))
        if ref is None:
            return False, NULL
        b = self._blk(ref)
        q = b.queues.get(k)
        if q is not None and v in q:
            return True, ref
        f = b.forward
        if f != NULL:
            q = self._blk(f).queues.get(k)
            if q is not None and v in q:
                return True, f
        return True, NULL

    def is_member(self, k, v):
        return self.locate(k, v)[1] != NULL

    def is_spurious_entry(self, key, ref):
        """True when the D entry ``key -> ref`` names an element no longer stored."""
        k, v = unpair(key)
        b = self._blk(ref)
        q = b.queues.get(k)
        if q is not None and v in q:
            return False
        f = b.forward
        if f != NULL:
            q = self._blk(f).queues.get(k)
            if q is not None and v in q:
                return False
        return True

    def _evict_spurious(self, key, ref):
        if self.is_spurious_entry(key, ref):
            self.spurious -= 1
            return True
        return False

    def register(self, k, v, ref, check=True):
        """Insert the D entry for a freshly enqueued element."""
        ev = self._evict_spurious if self.spurious > 0 else None
        self.D.insert(pair_key(k, v), ref, ev, check)

    # -- remove -------------------------------------------------------------
    def remove_at(self, k, v, ref, hdr, yref):
        """Remove ``(k, v)`` known to sit in block ``ref``; settles deficiency."""
        b = self._blk(ref)
        if self.deamortized:
            self._sync_header(k, hdr, ref, b)
        q = b.queues[k]
        del q[v]
        b.n -= 1
        if b.quiet is not None:
            b.quiet += 1
        el = (k, v)
        if el in b.stale:
            self._drop_pending(b, b.stale.pop(el))
        self.D.remove(pair_key(k, v))
        if not q:
            del b.queues[k]
            if k in b.stale_heads:
                origin = b.stale_heads.pop(k)
                if origin != ref:
                    self._drop_pending(b, origin)
        if b.heavy:
            self._settle_heavy(ref, b, k, hdr, yref)
        else:
            if not q:
                hdr.p = NULL
            self._settle_light(ref, b, yref, {k: hdr})
        if self.deamortized:
            self.fixup(ref)

    def _settle_light(self, ref, b, yref, held):
        if b.n == 0:
            self._free(ref, b)
            return
        if b.n >= self._deficient_n or b.owner != NULL:
            return
        d = self.T.meta(yref)
        if d == NULL:
            self._designate(yref, ref, b)
            return
        db = self._blk(d)
        if db.n >= self._ceiling_n or db.n + b.n > self._slots:
            self.actions["d_alteration"] += 1
            self._designate(yref, ref, b)
            return
        self.actions["merge"] += 1
        self._move_queues(ref, b, d, db, list(b.queues), held)
        self.max_merge_sink = max(self.max_merge_sink, db.n * self._eb)
        self._free(ref, b)

    def _unlink(self, ref, b, hdr):
        prev, nxt = b.prev, b.next
        if prev != NULL:
            self._blk(prev).next = nxt
        else:
            hdr.p = nxt
        if nxt != NULL:
            self._blk(nxt).prev = prev

    def _settle_heavy(self, ref, b, k, hdr, yref):
        if b.n == 0:
            self._unlink(ref, b, hdr)
            if hdr.dq == ref:
                hdr.dq = hdr.p
            if hdr.p == NULL:
                hdr.heavy = False
                hdr.dq = NULL
            self._free(ref, b)
            return
        if b.prev == NULL and b.next == NULL:
            if b.n < self._h2l_n:
                self.actions["heavy_to_light"] += 1
                b.heavy = False
                hdr.heavy = False
                hdr.dq = NULL
                hdr.p = ref
                self._settle_light(ref, b, yref, {k: hdr})
            return
        if b.n >= self._deficient_n or ref == hdr.dq:
            return
        d = hdr.dq
        db = self._blk(d)
        if db.n >= self._ceiling_n or db.n + b.n > self._slots:
            self.actions["d_alteration"] += 1
            hdr.dq = ref
            return
        self.actions["merge"] += 1
        self._move_queues(ref, b, d, db, [k], {k: hdr})
        self.max_merge_sink = max(self.max_merge_sink, db.n * self._eb)
        self._unlink(ref, b, hdr)
        self._free(ref, b)

    # -- whole-queue operations ---------------------------------------------
    def queue_blocks(self, k, hdr):
        """Blocks holding queue ``k``, head first."""
        if hdr.p == NULL:
            return []
        ref = self.resolve(k, hdr)
        if not hdr.heavy:
            return [ref]
        out = []
        while ref != NULL:
            out.append(ref)
            ref = self._blk(ref).next
        return out

    def values(self, k, hdr):
        vals = []
        for ref in self.queue_blocks(k, hdr):
            q = self._blk(ref).queues.get(k)
            if q:
                vals.extend(q)
        return vals

    def drop_queue(self, k, hdr, yref, purge_dictionary):
        """Delete every element of queue ``k`` from S; returns the number removed.

        With ``purge_dictionary`` the D entries go too; otherwise they are
        left behind as spurious entries.
        """
        if hdr.p == NULL:
            return 0
        blocks = self.queue_blocks(k, hdr)
        removed = 0
        heavy = hdr.heavy
        for ref in blocks:
            b = self._blk(ref)
            vals = b.queues.pop(k, {})
            removed += len(vals)
            b.n -= len(vals)
            if b.quiet is not None:
                # each dropped element counts as a removal targeting the block
                b.quiet += len(vals)
            if purge_dictionary:
                for v in vals:
                    self.D.remove(pair_key(k, v))
            for v in vals:
                if (k, v) in b.stale:
                    self._drop_pending(b, b.stale.pop((k, v)))
            if k in b.stale_heads:
                origin = b.stale_heads.pop(k)
                if origin != ref:
                    self._drop_pending(b, origin)
            if heavy:
                self._free(ref, b)
        hdr.p = NULL
        hdr.heavy = False
        hdr.dq = NULL
        if not heavy:
            ref = blocks[0]
            self._settle_light(ref, self._blk(ref), yref, {})
        if not purge_dictionary:
            self.spurious += removed
        return removed

    # -- diagnostics ----------------------------------------------------------
    def live_block_count(self):
        return len(self.live)

    def free_list_len(self):
        return self.store.free_list_len()
