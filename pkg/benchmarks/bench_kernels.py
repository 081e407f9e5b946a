"""Compare the compiled and pure-Python kernel backends.

Micro-benchmarks time the LRU cache and the bucket hash directly; the
end-to-end benchmark runs a short experiment under each backend in a
subprocess (backend choice happens at import time).

    python benchmarks/bench_kernels.py [--ops N]
"""
import argparse
import json
import os
import random
import subprocess
import sys
import time

from exmm import _kernels_py

try:
    from exmm import _kernels
except ImportError:
    _kernels = None

END_TO_END = """
import json, sys, time
from exmm import BACKEND, RunConfig, run_experiment
n = int(sys.argv[1])
cfg = RunConfig(variant="deamortized", gamma=5, warmup=n, alternating=n, seed=1)
t = time.perf_counter()
r = run_experiment(cfg)
print(json.dumps({"backend": BACKEND, "seconds": time.perf_counter() - t,
                  "mean_io": r.classes["all"].mean}))
"""


def time_lru(mod, n):
    rng = random.Random(0)
    pages = [int(rng.paretovariate(1.2)) % 5000 for _ in range(n)]
    cache = mod.LRUCache(128)
    t = time.perf_counter()
    misses = sum(map(cache.access, pages))
    return time.perf_counter() - t, misses


def time_hash(mod, n):
    rng = random.Random(0)
    keys = [rng.getrandbits(96) for _ in range(n)]
    bp = mod.bucket_pair
    t = time.perf_counter()
    acc = 0
    for k in keys:
        acc ^= bp(k, 12345, 67890, 4099)[0]
    return time.perf_counter() - t, acc


def end_to_end(ops, pure):
    env = dict(os.environ)
    env.pop("EXMM_PURE_PYTHON", None)
    if pure:
        env["EXMM_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", END_TO_END, str(ops)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ops", type=int, default=50000, help="warmup and alternating ops end to end")
    ap.add_argument("--micro", type=int, default=500000)
    args = ap.parse_args()

    mods = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'kernel':10s} {'backend':8s} {'seconds':>9s}")
    for name, fn in (("lru", time_lru), ("hash", time_hash)):
        results = {}
        for label, mod in mods:
            secs, check = fn(mod, args.micro)
            results[label] = check
            print(f"{name:10s} {label:8s} {secs:9.3f}")
        if len(set(results.values())) > 1:
            print(f"  backends disagree on {name}: {results}")
            return 1

    rows = [end_to_end(args.ops, pure=True)]
    if _kernels:
        rows.append(end_to_end(args.ops, pure=False))
    for r in rows:
        print(f"{'end-to-end':10s} {r['backend']:8s} {r['seconds']:9.3f}  mean I/O {r['mean_io']:.4f}")
    if len({round(r["mean_io"], 12) for r in rows}) > 1:
        print("  backends disagree end to end")
        return 1
    if len(rows) == 2:
        print(f"speedup {rows[0]['seconds'] / rows[1]['seconds']:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
