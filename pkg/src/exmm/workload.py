"""Key generation and the in-memory reference multimap."""
import numpy as np


class ZipfSampler:
    """Draw keys whose popularity ranks follow ``P(r) ~ r**-alpha`` on ``[1, universe]``.

    Rank ``r`` maps to key ``perm[r - 1]`` for a fixed pseudorandom
    permutation, so popular keys are scattered over the key space.
    Sampling inverts a precomputed cumulative table by binary search.
    """

    def __init__(self, alpha, universe, rng, batch=1 << 16):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        if universe < 1:
            raise ValueError("universe must be positive")
        self.alpha = alpha
        self.universe = universe
        self.rng = rng
        weights = np.arange(1, universe + 1, dtype=np.float64) ** -alpha
        cdf = np.cumsum(weights)
        self.cdf = cdf / cdf[-1]
        self.perm = rng.permutation(universe).astype(np.int64)
        self._batch = batch
        self._buf = []

    def probability(self, rank):
        """Exact probability of drawing the key with popularity ``rank`` (1-based)."""
        lo = self.cdf[rank - 2] if rank > 1 else 0.0
        return float(self.cdf[rank - 1] - lo)

    def ranks(self, n):
        """``n`` independent 1-based ranks."""
        u = self.rng.random(n)
        r = np.searchsorted(self.cdf, u, side="right")
        return np.minimum(r, self.universe - 1) + 1

    def sample(self):
        if not self._buf:
            self._buf = self.perm[self.ranks(self._batch) - 1].tolist()
            self._buf.reverse()
        return self._buf.pop()


class ReferenceOracle:
    """Brute-force multimap: key -> set of values, plus a live-pair list
    supporting uniform removal sampling in O(1) by swap-remove."""

    def __init__(self):
        self.values = {}
        self.live = []
        self._pos = {}
        self._next_value = {}

    def __len__(self):
        return len(self.live)

    def fresh_value(self, k):
        """Next unused value for key ``k`` (a per-key monotone counter)."""
        v = self._next_value.get(k, 0)
        self._next_value[k] = v + 1
        return v

    def insert(self, k, v):
        pair = (k, v)
        if pair in self._pos:
            raise KeyError(pair)
        self.values.setdefault(k, set()).add(v)
        self._pos[pair] = len(self.live)
        self.live.append(pair)

    def remove(self, k, v):
        pair = (k, v)
        i = self._pos.pop(pair)
        last = self.live.pop()
        if i < len(self.live):
            self.live[i] = last
            self._pos[last] = i
        vals = self.values[k]
        vals.discard(v)
        if not vals:
            del self.values[k]

    def remove_all(self, k):
        vals = list(self.values.get(k, ()))
        for v in vals:
            self.remove(k, v)
        return len(vals)

    def pick_removal(self, rng):
        """A live pair chosen uniformly at random (not removed)."""
        if not self.live:
            raise IndexError("no live pairs")
        return self.live[int(rng.integers(len(self.live)))]

    def is_member(self, k, v):
        return (k, v) in self._pos

    def count(self, k):
        return len(self.values.get(k, ()))

    def find_all(self, k):
        return set(self.values.get(k, ()))

    def contents(self):
        return {k: set(vs) for k, vs in self.values.items()}
