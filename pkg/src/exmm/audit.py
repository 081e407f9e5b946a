"""Whole-structure consistency check, run off the record (no I/O is counted)."""
import math
from collections import Counter

from .multiqueue import DEAMORTIZED, pair_key, unpair
from .pagestore import NULL


def audit_multimap(mm, limit=20):
    """Return a list of violations; empty when every invariant holds."""
    errs = []
    peek = mm.store.peek
    mq = mm.S
    th = mm.thresholds
    eb = th.element_bytes
    bb = th.block_bytes
    deam = th.variant == DEAMORTIZED

    def blk(ref):
        return peek(ref).payload

    def err(msg):
        if len(errs) < limit:
            errs.append(msg)

    errs.extend(f"T: {e}" for e in mm.T.audit()[:limit])
    errs.extend(f"D: {e}" for e in mm.D.audit()[:limit])

    # blocks: occupancy, purity, free-list disjointness, stale bookkeeping
    where = {}
    per_key = Counter()
    for ref in mq.live:
        if mm.store.is_free(ref):
            err(f"block {ref} is live and on the free list")
        b = blk(ref)
        n = sum(len(q) for q in b.queues.values())
        if n != b.n:
            err(f"block {ref} count {b.n} != {n}")
        if n > th.slots:
            err(f"block {ref} over capacity ({n} > {th.slots})")
        if n == 0:
            err(f"live block {ref} is empty")
        if b.heavy and len(b.queues) != 1:
            err(f"heavy block {ref} holds {len(b.queues)} queues")
        for k, vals in b.queues.items():
            if not vals:
                err(f"block {ref} has an empty segment for key {k}")
            per_key[k] += len(vals)
            for v in vals:
                if (k, v) in where:
                    err(f"pair {(k, v)} stored twice")
                where[(k, v)] = ref
        pend = Counter()
        for el, origin in b.stale.items():
            if el[1] not in b.queues.get(el[0], ()):
                err(f"block {ref} marks absent pair {el} stale")
            pend[origin] += 1
        for k, origin in b.stale_heads.items():
            if origin != ref:
                pend[origin] += 1
        if pend != Counter(b.pending):
            err(f"block {ref} pending-origin counts out of sync")
        if not deam and (b.stale or b.stale_heads):
            err(f"basic block {ref} has stale references")

    # headers: counts, light confinement, heavy chains
    headers = dict(mm.T.items())
    heavy_queues = 0
    for k, h in headers.items():
        if h.count != per_key.get(k, 0):
            err(f"key {k}: header count {h.count} != stored {per_key.get(k, 0)}")
        if h.count == 0:
            if h.p != NULL:
                err(f"key {k}: empty queue with non-NULL head")
            continue
        if h.p == NULL:
            err(f"key {k}: non-empty queue with NULL head")
            continue
        ref = h.p
        b = blk(ref)
        if k not in b.queues and deam and b.forward != NULL:
            ref = b.forward
            b = blk(ref)
        if k not in b.queues:
            err(f"key {k}: header block {h.p} does not hold the queue")
            continue
        if b.heavy and not h.heavy:
            if not deam:
                err(f"key {k}: header light but queue is heavy")
            elif b.prev != NULL or b.next != NULL or k not in b.stale_heads:
                err(f"key {k}: unrecorded stale header for heavy queue")
            heavy_queues += 1
            continue
        if not h.heavy:
            if len(b.queues[k]) != h.count:
                err(f"key {k}: light queue spread over several blocks")
            if not deam and h.count > bb / th.beta / eb:
                err(f"key {k}: light queue above the heavy threshold")
            continue
        heavy_queues += 1
        if ref != h.p:
            err(f"key {k}: heavy header head is stale")
        seen = []
        prev = NULL
        total = 0
        cur = h.p
        while cur != NULL and len(seen) <= len(mq.live):
            cb = blk(cur)
            if not cb.heavy or set(cb.queues) != {k}:
                err(f"key {k}: chain block {cur} is not a pure heavy block")
                break
            if cb.prev != prev:
                err(f"key {k}: chain links not mutually inverse at {cur}")
            total += cb.n
            seen.append(cur)
            prev, cur = cur, cb.next
        if total != h.count and not errs:
            err(f"key {k}: chain holds {total} of {h.count} elements")
        if h.dq not in seen:
            err(f"key {k}: d(Q) {h.dq} is not in the chain")

    for k in per_key:
        if k not in headers:
            err(f"key {k} stored without a header")

    # D: location awareness and spurious entries
    spurious = 0
    for key, ref in mm.D.items():
        el = unpair(key)
        at = where.get(el)
        if at is None:
            if not deam:
                err(f"D entry for absent pair {el}")
            spurious += 1
            continue
        if ref == at:
            continue
        if not deam:
            err(f"D entry for {el} names {ref}, pair is in {at}")
        elif blk(ref).forward != at:
            err(f"D entry for {el} unresolved: {ref} -> {blk(ref).forward}, pair is in {at}")
        elif el not in blk(at).stale:
            err(f"pair {el} resolved via forward but not marked stale")
    dkeys = set(unpair(key) for key, _ in mm.D.items())
    for el in where:
        if el not in dkeys:
            err(f"pair {el} has no D entry")
    if spurious != mq.spurious:
        err(f"spurious entries {spurious} != tracked {mq.spurious}")

    # designations and deficiency discipline
    designated = 0
    for s in (0, 1):
        for yref in mm.T.side[s]:
            d = peek(yref).payload.meta
            if d == NULL:
                continue
            designated += 1
            if d not in mq.live:
                err(f"d(Y) of bucket {yref} names non-live block {d}")
            elif blk(d).owner != yref:
                err(f"d(Y) {d} does not record its owner {yref}")
            elif blk(d).heavy:
                err(f"d(Y) {d} is a heavy block")
    dqs = {h.dq for h in headers.values() if h.heavy}
    check_deficiency = bb / th.gamma <= bb / 3
    for ref in mq.live:
        b = blk(ref)
        if b.owner != NULL and peek(b.owner).payload.meta != ref:
            err(f"block {ref} claims owner {b.owner} that designates another block")
        if not check_deficiency or b.n * eb >= th.deficient_bytes:
            continue
        if b.owner != NULL or ref in dqs:
            continue
        if b.heavy and b.prev == NULL and b.next == NULL:
            if b.n * eb >= th.heavy_to_light_bytes:
                continue
            k = next(iter(b.queues))
            h = headers.get(k)
            if deam and h is not None and not h.heavy:
                continue
        err(f"undesignated deficient block {ref} ({b.n * eb} bytes)")

    # global bounds
    if mq.max_merge_sink > th.deficient_bytes + th.merge_ceiling:
        err(f"merge sink reached {mq.max_merge_sink} bytes")
    if mq.forced_fixups:
        err(f"{mq.forced_fixups} elements moved twice before their references were fixed")
    if deam and mq.separation_violations:
        err(f"{mq.separation_violations} separation violations")
    if check_deficiency:
        c0 = max(th.gamma, bb / th.heavy_to_light_bytes)
        bound = c0 * math.ceil(mm.pairs * eb / bb) + designated + heavy_queues
        if len(mq.live) > bound:
            err(f"space: {len(mq.live)} live blocks > bound {bound:.0f}")
    if mm.pairs != len(where):
        err(f"pair counter {mm.pairs} != stored {len(where)}")
    return errs[:limit]


__all__ = ["audit_multimap", "pair_key"]
