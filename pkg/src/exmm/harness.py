"""Experiment protocol, statistics and export.

Two workloads are supported:

``paper``
    ``warmup`` Zipf-keyed inserts, then ``alternating`` operations that
    alternate insert / remove, the removed pair drawn uniformly from the
    live pairs.
``mixed``
    the same warmup, then a random mix of every multimap operation, each
    result checked against the reference oracle (differential testing).
"""
import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .kernels import BACKEND
from .multimap import Multimap
from .multiqueue import BASIC, DEAMORTIZED
from .workload import ReferenceOracle, ZipfSampler

INSERT, REMOVE, IS_MEMBER, COUNT, FIND_ALL, REMOVE_ALL, IS_SPURIOUS = range(7)
OP_NAMES = ("insert", "remove", "is_member", "count", "find_all", "remove_all", "is_spurious")

# cumulative probabilities of the mixed workload, in OP order
MIXED_MIX = (0.44, 0.80, 0.86, 0.91, 0.96, 0.965, 1.00)

LOW_IO = 15
SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    variant: str = BASIC
    alpha: float = 0.99
    beta: float = 3.0
    gamma: float = 4.0
    block_bytes: int = 4096
    cache_bytes: int = 512 * 1024
    universe: int = 1 << 20
    warmup: int = 1 << 20
    alternating: int = 8 << 20
    seed: int = 0
    epsilon: float = 0.07
    max_kicks: int = 500
    audit_every: int = 0
    workload: str = "paper"
    load_every: int = 1 << 14
    steady_window: int = 1 << 20
    header_capacity: int = 0
    pair_capacity: int = 0

    def __post_init__(self):
        if self.variant not in (BASIC, DEAMORTIZED):
            raise ValueError(f"variant must be {BASIC!r} or {DEAMORTIZED!r}")
        if self.workload not in ("paper", "mixed"):
            raise ValueError("workload must be 'paper' or 'mixed'")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.warmup < 0 or self.alternating < 0 or self.universe < 1:
            raise ValueError("operation counts must be non-negative and universe positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def sizes(self):
        """Capacities of ``T`` (keys) and ``D`` (pairs) for this run."""
        inserts = self.warmup + (self.alternating + 1) // 2
        if self.workload == "mixed":
            inserts = self.warmup + int(self.alternating * MIXED_MIX[INSERT]) + 64
        pairs = self.pair_capacity or max(16, self.warmup + 1 if self.workload == "paper" else inserts)
        keys = self.header_capacity or max(16, min(self.universe, inserts))
        return keys, pairs


@dataclass
class ClassStats:
    count: int = 0
    mean: float = 0.0
    stddev: float = 0.0
    max: int = 0
    pct_ops: float = 0.0

    @classmethod
    def of(cls, x, total):
        if len(x) == 0:
            return cls()
        return cls(int(len(x)), float(x.mean()), float(x.std()), int(x.max()),
                   100.0 * len(x) / total if total else 0.0)


@dataclass
class StatsReport:
    config: dict
    classes: dict = field(default_factory=dict)
    op_max: dict = field(default_factory=dict)
    load_series: list = field(default_factory=list)
    final_load: float = 0.0
    steady_load: float = 0.0
    steady_store_load: float = 0.0
    counters: dict = field(default_factory=dict)
    audits: int = 0
    audit_failures: int = 0
    mismatches: int = 0
    messages: list = field(default_factory=list)
    runtime_s: float = 0.0
    backend: str = BACKEND

    @property
    def ok(self):
        return self.audit_failures == 0 and self.mismatches == 0

    def to_dict(self):
        d = asdict(self)
        d["schema"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema", None)
        d["classes"] = {k: ClassStats(**v) for k, v in d.get("classes", {}).items()}
        d["load_series"] = [tuple(x) for x in d.get("load_series", [])]
        return cls(**d)

    def summary(self):
        c = self.classes.get("all", ClassStats())
        return (f"{self.config.get('variant')} a={self.config.get('alpha')} "
                f"b={self.config.get('beta')} g={self.config.get('gamma')}: "
                f"mean {c.mean:.3f} sd {c.stddev:.3f} max {c.max} "
                f"steady load {self.steady_load:.3f} ({self.runtime_s:.0f}s)")


def summarize(reads, kinds, total_ops=None):
    """Per-class statistics from per-operation read counts and op kinds."""
    total = len(reads) if total_ops is None else total_ops
    out = {"all": ClassStats.of(reads, total)}
    for code, name in ((INSERT, "insert"), (REMOVE, "remove")):
        out[name] = ClassStats.of(reads[kinds == code], total)
    out["le15"] = ClassStats.of(reads[reads <= LOW_IO], total)
    out["gt15"] = ClassStats.of(reads[reads > LOW_IO], total)
    return out


def build_multimap(cfg):
    keys, pairs = cfg.sizes()
    return Multimap(cfg.variant, beta=cfg.beta, gamma=cfg.gamma,
                    block_bytes=cfg.block_bytes, cache_bytes=cfg.cache_bytes,
                    header_capacity=keys, pair_capacity=pairs,
                    epsilon=cfg.epsilon, seed=cfg.seed, max_kicks=cfg.max_kicks,
                    verify_new=cfg.workload == "mixed")


class _Run:
    def __init__(self, cfg, progress=None):
        self.cfg = cfg
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.zipf = ZipfSampler(cfg.alpha, cfg.universe, self.rng)
        self.mm = build_multimap(cfg)
        self.oracle = ReferenceOracle()
        n = cfg.warmup + cfg.alternating
        self.reads = np.zeros(n, dtype=np.int32)
        self.kinds = np.zeros(n, dtype=np.int8)
        self.report = StatsReport(config=asdict(cfg))
        self.progress = progress
        self.loads = []
        self.store_loads = []

    def mismatch(self, msg):
        r = self.report
        r.mismatches += 1
        if len(r.messages) < 20:
            r.messages.append(msg)

    def audit(self, i):
        mm, r = self.mm, self.report
        r.audits += 1
        errs = mm.audit()
        if mm.contents() != self.oracle.contents():
            errs.append("stored contents differ from the oracle")
        if errs:
            r.audit_failures += 1
            if len(r.messages) < 20:
                r.messages.append(f"audit after op {i}: {errs[:3]}")

    def insert(self):
        k = self.zipf.sample()
        v = self.oracle.fresh_value(k)
        self.mm.insert(k, v)
        self.oracle.insert(k, v)
        return INSERT

    def remove(self):
        k, v = self.oracle.pick_removal(self.rng)
        self.mm.remove(k, v)
        self.oracle.remove(k, v)
        return REMOVE

    def mixed_op(self):
        u = self.rng.random()
        if u < MIXED_MIX[INSERT] or not self.oracle.live:
            return self.insert()
        if u < MIXED_MIX[REMOVE]:
            return self.remove()
        mm, orc = self.mm, self.oracle
        k = self.zipf.sample()
        if u < MIXED_MIX[IS_MEMBER]:
            vals = orc.values.get(k)
            if vals and self.rng.random() < 0.5:
                v = next(iter(vals))
            else:
                v = int(self.rng.integers(orc._next_value.get(k, 0) + 2))
            got = mm.is_member(k, v)
            if got != orc.is_member(k, v):
                self.mismatch(f"is_member({k}, {v}) = {got}")
            return IS_MEMBER
        if u < MIXED_MIX[COUNT]:
            got = mm.count(k)
            if got != orc.count(k):
                self.mismatch(f"count({k}) = {got}, expected {orc.count(k)}")
            return COUNT
        if u < MIXED_MIX[FIND_ALL]:
            got = mm.find_all(k)
            want = orc.find_all(k)
            if len(got) != len(want) or {v for _, v in got} != want:
                self.mismatch(f"find_all({k}) differs")
            return FIND_ALL
        if u < MIXED_MIX[REMOVE_ALL]:
            got = mm.remove_all(k)
            want = orc.remove_all(k)
            if got != want:
                self.mismatch(f"remove_all({k}) removed {got}, expected {want}")
            return REMOVE_ALL
        v = int(self.rng.integers(orc._next_value.get(k, 0) + 1))
        if mm.is_spurious(k, v) and orc.is_member(k, v):
            self.mismatch(f"live pair ({k}, {v}) reported spurious")
        return IS_SPURIOUS

    def run(self):
        cfg, mm = self.cfg, self.mm
        t0 = time.perf_counter()
        reads, kinds = self.reads, self.kinds
        boundary = mm.store.op_boundary
        load_every = cfg.load_every
        audit_every = cfg.audit_every
        n = len(reads)
        mixed = cfg.workload == "mixed"
        for i in range(n):
            if i < cfg.warmup:
                kind = self.insert()
            elif mixed:
                kind = self.mixed_op()
            elif (i - cfg.warmup) % 2 == 0 or not self.oracle.live:
                kind = self.insert()
            else:
                kind = self.remove()
            reads[i] = boundary()
            kinds[i] = kind
            if (i + 1) % load_every == 0:
                self.loads.append((i + 1, mm.load()))
                self.store_loads.append((i + 1, mm.store_load()))
                if self.progress:
                    self.progress(i + 1, n)
            if audit_every and (i + 1) % audit_every == 0:
                self.audit(i)
        if audit_every and n % audit_every:
            self.audit(n - 1)
        self.finish(time.perf_counter() - t0)
        return self.report

    def finish(self, elapsed):
        cfg, mm, r = self.cfg, self.mm, self.report
        reads, kinds = self.reads, self.kinds
        if cfg.workload == "paper":
            r.classes = {k: v for k, v in summarize(reads, kinds).items()}
        else:
            r.classes = summarize(reads, kinds)
        r.op_max = {name: int(reads[kinds == code].max()) if (kinds == code).any() else 0
                    for code, name in enumerate(OP_NAMES)}
        r.load_series = self.loads
        r.final_load = mm.load()
        start = len(reads) - cfg.steady_window
        tail = [x for i, x in self.loads if i > start]
        r.steady_load = float(np.mean(tail)) if tail else r.final_load
        tail_s = [x for i, x in self.store_loads if i > start]
        r.steady_store_load = float(np.mean(tail_s)) if tail_s else mm.store_load()
        mq = mm.S
        r.counters = {
            "pairs": mm.pairs,
            "live_blocks": mq.live_block_count(),
            "pages": mm.store.page_count(),
            "free_list": mm.store.free_list_len(),
            "reads_from_disk": mm.reads,
            "moves": mq.moves,
            "separation_violations": mq.separation_violations,
            "forced_fixups": mq.forced_fixups,
            "spurious": mq.spurious,
            "max_merge_sink": mq.max_merge_sink,
            "T_rehashes": mm.T.rehashes,
            "D_rehashes": mm.D.rehashes,
            "D_evictions": mm.D.evictions,
            **{f"action_{k}": v for k, v in mq.actions.items()},
        }
        r.runtime_s = elapsed


def run_experiment(cfg, progress=None):
    """Execute one configuration and return its :class:`StatsReport`."""
    return _Run(cfg, progress).run()


# -- export ----------------------------------------------------------------
CSV_COLUMNS = ("class", "mean", "stddev", "max", "pct_ops")


def export(report, fmt):
    """Render the per-class table (``csv``) or the whole report (``json``)."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True).encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name, c in report.classes.items():
            w.writerow((name, f"{c.mean:.6f}", f"{c.stddev:.6f}", c.max, f"{c.pct_ops:.4f}"))
        return buf.getvalue().encode()
    raise ValueError(f"unknown export format {fmt!r}")


def export_load_series(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("op_index", "load"))
    for i, x in report.load_series:
        w.writerow((i, f"{x:.6f}"))
    return buf.getvalue().encode()
