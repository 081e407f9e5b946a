"""Command line entry point: ``exmm run | sweep | audit``."""
import argparse
import json
import sys
from pathlib import Path

from .harness import RunConfig, export, export_load_series, run_experiment
from .multiqueue import BASIC, DEAMORTIZED

TOY = dict(block_bytes=144, cache_bytes=4 * 144, universe=512)


def _add_run_args(p, defaults):
    p.add_argument("--variant", choices=(BASIC, DEAMORTIZED), default=defaults.variant)
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--gamma", type=float, default=defaults.gamma)
    p.add_argument("--block-bytes", type=int, default=defaults.block_bytes)
    p.add_argument("--cache-bytes", type=int, default=defaults.cache_bytes)
    p.add_argument("--universe", type=int, default=defaults.universe)
    p.add_argument("--warmup", type=int, default=defaults.warmup)
    p.add_argument("--alternating", type=int, default=defaults.alternating)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--epsilon", type=float, default=defaults.epsilon)
    p.add_argument("--max-kicks", type=int, default=defaults.max_kicks)
    p.add_argument("--audit-every", type=int, default=defaults.audit_every)
    p.add_argument("--workload", choices=("paper", "mixed"), default=defaults.workload)


def _config(ns):
    return RunConfig(variant=ns.variant, alpha=ns.alpha, beta=ns.beta, gamma=ns.gamma,
                     block_bytes=ns.block_bytes, cache_bytes=ns.cache_bytes,
                     universe=ns.universe, warmup=ns.warmup, alternating=ns.alternating,
                     seed=ns.seed, epsilon=ns.epsilon, max_kicks=ns.max_kicks,
                     audit_every=ns.audit_every, workload=ns.workload)


def _write(report, out, fmt):
    data = export(report, fmt)
    if out is None or out == "-":
        sys.stdout.write(data.decode())
        return
    path = Path(out)
    path.write_bytes(data)
    if fmt == "csv":
        path.with_name(path.stem + ".load.csv").write_bytes(export_load_series(report))


def _progress(quiet):
    if quiet:
        return None

    def show(i, n):
        print(f"\r{i}/{n} ops", end="", file=sys.stderr, flush=True)
        if i >= n:
            print(file=sys.stderr)
    return show


def _report_problems(report):
    for m in report.messages:
        print(f"  {m}", file=sys.stderr)


def cmd_run(ns):
    report = run_experiment(_config(ns), _progress(ns.quiet))
    _write(report, ns.out, ns.format)
    print(report.summary(), file=sys.stderr)
    if not report.ok:
        _report_problems(report)
        return 1
    return 0


def cmd_sweep(ns):
    items = json.loads(Path(ns.config).read_text())
    if not isinstance(items, list):
        print("sweep config must be a JSON array of run configs", file=sys.stderr)
        return 2
    status = 0
    out_dir = Path(ns.out_dir) if ns.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for i, item in enumerate(items):
        item = dict(item)
        out = item.pop("out", None)
        fmt = item.pop("format", ns.format)
        cfg = RunConfig.from_dict(item)
        report = run_experiment(cfg, _progress(ns.quiet))
        if out is None and out_dir is not None:
            out = out_dir / f"run_{i:03d}.{fmt}"
        if out is not None:
            _write(report, str(out), fmt)
        print(f"[{i}] {report.summary()}{'' if report.ok else '  FAILED'}")
        if not report.ok:
            _report_problems(report)
            status = 1
    return status


def cmd_audit(ns):
    variants = (BASIC, DEAMORTIZED) if ns.variant == "both" else (ns.variant,)
    status = 0
    for variant in variants:
        for seed in range(ns.seed, ns.seed + ns.seeds):
            cfg = RunConfig(variant=variant, alpha=ns.alpha, beta=ns.beta, gamma=ns.gamma,
                            block_bytes=ns.block_bytes, cache_bytes=ns.cache_bytes,
                            universe=ns.universe, warmup=ns.warmup, alternating=ns.ops,
                            seed=seed, audit_every=ns.audit_every, workload="mixed",
                            load_every=1 << 30)
            r = run_experiment(cfg)
            c = r.counters
            line = (f"{variant:11s} seed {seed}: {'ok' if r.ok else 'FAILED'}  "
                    f"audits={r.audits} mismatches={r.mismatches} "
                    f"audit_failures={r.audit_failures} moves={c['moves']} "
                    f"separation_violations={c['separation_violations']} "
                    f"max_io={r.classes['all'].max} ({r.runtime_s:.1f}s)")
            print(line)
            if not r.ok:
                _report_problems(r)
                status = 1
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="exmm", description="External-memory multimap simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_run_args(p, RunConfig())
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a JSON array of configurations")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="toy-scale invariant soak against the oracle")
    p.add_argument("--variant", choices=(BASIC, DEAMORTIZED, "both"), default="both")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops", type=int, default=20000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--audit-every", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--gamma", type=float, default=4.0)
    p.add_argument("--block-bytes", type=int, default=TOY["block_bytes"])
    p.add_argument("--cache-bytes", type=int, default=TOY["cache_bytes"])
    p.add_argument("--universe", type=int, default=TOY["universe"])
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (ValueError, OSError) as e:
        print(f"exmm: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

