"""External-memory multimap simulator: cuckoo tables plus a location-aware
multiqueue over a simulated LRU page cache that counts I/Os."""
from .cuckoo import PARTITIONED_BFS, RANDOM_WALK, CuckooTable
from .harness import RunConfig, StatsReport, run_experiment
from .kernels import BACKEND
from .multimap import DuplicatePairError, Multimap, NotFoundError
from .multiqueue import BASIC, DEAMORTIZED
from .pagestore import NULL, PageStore, StoreError

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BASIC", "DEAMORTIZED", "NULL", "PARTITIONED_BFS", "RANDOM_WALK",
    "CuckooTable", "DuplicatePairError", "Multimap", "NotFoundError", "PageStore",
    "RunConfig", "StatsReport", "StoreError", "run_experiment",
]
