"""Command-line harness: ``rrsample validate|example1|kmc|ssa|bench``.

Exit status is 0 on success, 1 when a run completes but a check fails, and
2 for usage or configuration errors. All runs are seeded; the defaults below
are fixed so repeated invocations print identical numbers (wall times aside).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import kmc, singular, ssa, validation
from .core import Branch
from .errors import ExhaustedSystem, InvalidParams, NegativeCount, SamplingError
from .rng import RngStream
from .stats import ks_statistic, ks_threshold

DEFAULT_SEEDS = (11, 12, 13, 14, 15)
BENCH_SIZES = (10**2, 10**3, 10**4, 10**5, 10**6)

KMC_COLUMNS = ("backend", "seed", "observable", "interaction_count", "running_mean", "wall_time_ns", "proposals_total", "reinit_count")
BENCH_COLUMNS = ("n", "method", "runs", "mean_time_s", "var_time_s", "mean_proposals", "mean_reinit_count", "var_proposals")


class ConfigError(Exception):
    """Invalid command-line configuration (exit status 2)."""


# ------------------------------------------------------------------ output


def _write(rows: list[dict], columns, args, path: str | None = None) -> None:
    """Write ``rows`` as CSV or JSON to ``path`` (default ``--out`` or stdout)."""
    path = path if path is not None else args.out
    if args.format == "json":
        text = json.dumps([{k: _plain(r.get(k)) for k in columns} for r in rows], indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})
        text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return v


def _info(args, msg: str) -> None:
    # keep stdout clean when it carries the data
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(msg, file=stream)


def _pool(args, fn, jobs):
    workers = args.parallelism or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


# ------------------------------------------------------------------ validate


def cmd_validate(args) -> int:
    if args.instances < 1 or args.targets < 1 or args.samples < 1:
        raise ConfigError("--instances, --targets and --samples must be positive")
    seed = args.seed[0] if args.seed else 1
    results = validation.run_all(args.instances, args.targets, args.samples, seed)
    rows = [
        {"suite": r.name, "status": "PASS" if r.passed else "FAIL", "passed": r.n_pass, "total": r.n_total, "seconds": round(r.seconds, 3), "detail": r.detail}
        for r in results
    ]
    for r in results:
        _info(args, r.line())
    if args.out not in (None, "-"):
        _write(rows, ("suite", "status", "passed", "total", "seconds", "detail"), args)
    return 0 if all(r.passed for r in results) else 1


# ------------------------------------------------------------------ example1


def cmd_example1(args) -> int:
    if args.samples < 0:
        raise ConfigError("--samples must be >= 0")
    if args.bins < 0:
        raise ConfigError("--bins must be >= 0")
    seed = args.seed[0] if args.seed else DEFAULT_SEEDS[0]
    n = args.samples
    values, records = singular.sample_many(n, RngStream(seed))
    if args.bins:
        edges = np.linspace(0.0, 1.0, args.bins + 1)
        counts = np.histogram(values, edges)[0] if n else np.zeros(args.bins, dtype=np.int64)
        probs = np.diff(singular.cdf(edges))
        rows = [
            {"bin_lo": float(a), "bin_hi": float(b), "count": int(c), "expected": float(p * n)}
            for a, b, c, p in zip(edges[:-1], edges[1:], counts, probs)
        ]
        _write(rows, ("bin_lo", "bin_hi", "count", "expected"), args)
    else:
        rows = [{"value": float(v), "branch": r.branch.value} for v, r in zip(values, records)]
        _write(rows, ("value", "branch"), args)
    if n == 0:
        _info(args, "no samples requested")
        return 0
    rejections = sum(1 for r in records if r.branch is Branch.REPLACED_BY_EXCESS)
    excess = sum(1 for r in records if r.branch is Branch.EXCESS_DIRECT)
    ks = ks_statistic(values, singular.cdf).statistic
    thr = ks_threshold(n)
    _info(args, f"KS statistic {ks:.6f} (threshold {thr:.6f}); rejections {rejections}; excess-branch fraction {excess / n:.6f} (expected {5 / 13:.6f})")
    return 0 if ks < thr and rejections == 0 else 1


# ------------------------------------------------------------------ kmc


def _kmc_job(job: dict) -> dict:
    kmc.warm_up()
    rng = RngStream(job["seed"])
    system = kmc.ParticleSystem(
        job["n_particles"],
        job["alpha"],
        rng,
        backend=job["backend"],
        reinit_threshold=job["reinit_threshold"],
        allow_self_pairs=job["allow_self_pairs"],
        ar_refresh=job.get("ar_refresh"),
    )
    res = kmc.run(system, job["interactions"], kmc.OBSERVABLES, job.get("record_every"), job.get("checkpoints"))
    return {
        "job": job,
        "means": {k: e.mean for k, e in res.estimates.items()},
        "trace": [
            (tp.interaction_count, tp.running_means, tp.wall_time_ns, tp.proposals_total, tp.reinit_count)
            for tp in res.trace
        ],
        "selections": system.selections,
    }


def _kmc_common(args) -> None:
    if args.n_particles < 2:
        raise ConfigError("--n-particles must be >= 2")
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    if args.reinit_threshold is not None and args.reinit_threshold < 1:
        raise ConfigError("--reinit-threshold must be >= 1")
    if args.ar_refresh is not None and args.ar_refresh < 0:
        raise ConfigError("--ar-refresh must be >= 0")


def cmd_kmc(args) -> int:
    _kmc_common(args)
    if args.interactions < 1:
        raise ConfigError("--interactions must be >= 1")
    if args.record_every is not None and args.record_every < 1:
        raise ConfigError("--record-every must be >= 1")
    seeds = args.seed or list(DEFAULT_SEEDS)
    record = args.record_every or max(1, args.interactions // 100)
    jobs = [
        {
            "backend": b,
            "seed": s,
            "n_particles": args.n_particles,
            "alpha": args.alpha,
            "interactions": args.interactions,
            "reinit_threshold": args.reinit_threshold,
            "allow_self_pairs": args.allow_self_pairs,
            "ar_refresh": args.ar_refresh,
            "record_every": record,
        }
        for b in args.backend
        for s in seeds
    ]
    results = _pool(args, _kmc_job, jobs)
    rows = []
    for r in results:
        for count, means, wall, props, reinits in r["trace"]:
            for kind in kmc.OBSERVABLES:
                rows.append(
                    {
                        "backend": r["job"]["backend"],
                        "seed": r["job"]["seed"],
                        "observable": kind,
                        "interaction_count": count,
                        "running_mean": means[kind],
                        "wall_time_ns": wall,
                        "proposals_total": props,
                        "reinit_count": reinits,
                    }
                )
    _write(rows, KMC_COLUMNS, args)
    ok = True
    for b in args.backend:
        mine = [r for r in results if r["job"]["backend"] == b]
        for kind in kmc.OBSERVABLES:
            est = float(np.mean([r["means"][kind] for r in mine]))
            exp = kmc.expected_g(args.n_particles, args.alpha, kind)
            rel = abs(est - exp) / exp
            props = np.mean([r["trace"][-1][3] / r["selections"] for r in mine])
            _info(args, f"{b:>2} {kind:<15} estimate {est:.6f}  expected {exp:.6f}  rel.err {rel:.3%}  proposals/selection {props:.3f}")
            if args.tolerance is not None and rel > args.tolerance:
                ok = False
    return 0 if ok else 1


# ------------------------------------------------------------------ bench


def _slope(ns, ts) -> float:
    if len(ns) < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(ts), 1)[0])


def bench_records(results, sizes) -> list[dict]:
    rows = []
    for method in sorted({r["job"]["backend"] for r in results}):
        mine = [r for r in results if r["job"]["backend"] == method]
        for n in sizes:
            pts = [next(tp for tp in r["trace"] if tp[0] == n) for r in mine]
            times = np.array([p[2] for p in pts]) / 1e9
            props = np.array([p[3] for p in pts], dtype=np.float64)
            rows.append(
                {
                    "n": n,
                    "method": method,
                    "runs": len(pts),
                    "mean_time_s": float(times.mean()),
                    "var_time_s": float(times.var(ddof=1)) if len(pts) > 1 else 0.0,
                    "mean_proposals": float(props.mean()),
                    "mean_reinit_count": float(np.mean([p[4] for p in pts])),
                    "var_proposals": float(props.var(ddof=1)) if len(pts) > 1 else 0.0,
                }
            )
    return rows


def bench_slopes(rows, min_n: int = 10**4) -> dict[str, float]:
    out = {}
    for method in sorted({r["method"] for r in rows}):
        pts = [(r["n"], r["mean_time_s"]) for r in rows if r["method"] == method and r["n"] >= min_n]
        out[method] = _slope([p[0] for p in pts], [p[1] for p in pts])
    return out


def cmd_bench(args) -> int:
    _kmc_common(args)
    sizes = sorted(set(args.sizes))
    if not sizes or sizes[0] < 1:
        raise ConfigError("--sizes must be positive")
    seeds = args.seed or list(DEFAULT_SEEDS)
    jobs = [
        {
            "backend": b,
            "seed": s,
            "n_particles": args.n_particles,
            "alpha": args.alpha,
            "interactions": sizes[-1],
            "reinit_threshold": args.reinit_threshold,
            "allow_self_pairs": False,
            "ar_refresh": args.ar_refresh,
            "checkpoints": sizes,
        }
        for b in args.backend
        for s in seeds
    ]
    results = _pool(args, _kmc_job, jobs)
    rows = bench_records(results, sizes)
    _write(rows, BENCH_COLUMNS, args)
    slopes = bench_slopes(rows)
    for method, sl in slopes.items():
        _info(args, f"slope({method}) over n >= 1e4: {'NA' if math.isnan(sl) else f'{sl:.3f}'}")
    top = [r for r in rows if r["n"] == sizes[-1]]
    by = {r["method"]: r for r in top}
    if "rr" in by and "ar" in by:
        ratio = by["ar"]["mean_proposals"] / by["rr"]["mean_proposals"]
        _info(args, f"proposals ar/rr at n={sizes[-1]}: {ratio:.2f}")
    for r in rows:
        if r["method"] == "rr":
            _info(args, f"reinit_count rr n={r['n']}: {r['mean_reinit_count']:.1f}")
    return 0


# ------------------------------------------------------------------ ssa


def _ssa_job(job: dict) -> ssa.EnsembleResult:
    net = ssa.ReactionNetwork.from_dict(job["network"])
    if job["steps"] is not None:
        return _ssa_steps(net, job)
    return ssa.ensemble(
        net, job["backend"], job["t_end"], job["replicas"], job["seed"], sample_times=job["times"], replica_range=job["range"]
    )


def _ssa_steps(net, job) -> ssa.EnsembleResult:
    lo, hi = job["range"]
    streams = ssa.replica_streams(job["seed"], job["replicas"])[lo:hi]
    sim = ssa.Simulator(net, job["backend"], streams[0])
    counts = np.zeros((hi - lo, 1, len(net.species)), dtype=np.int64)
    finals = np.zeros(hi - lo)
    exhausted = np.zeros(hi - lo, dtype=bool)
    start = time.perf_counter_ns()
    for r, stream in enumerate(streams):
        sim.reset(stream)
        traj = sim.run_steps(job["steps"])
        counts[r] = traj.counts
        finals[r] = traj.t_final
        exhausted[r] = traj.exhausted
    return ssa.EnsembleResult(
        job["backend"], np.array([np.nan]), net.species, counts, exhausted, sim.firings, sim.selections, sim.proposals_total,
        time.perf_counter_ns() - start, {"t_final": finals, "reinit_count": sim.weights.reinit_count if job["backend"] == "rr" else 0},
    )


def cmd_ssa(args) -> int:
    if args.network is None:
        raise ConfigError("--network is required")
    path = Path(args.network)
    if not path.is_file():
        raise ConfigError(f"network file not found: {path}")
    try:
        net = ssa.ReactionNetwork.load(path)
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from exc
    if args.replicas < 1:
        raise ConfigError("--replicas must be >= 1")
    if (args.t_end is None) == (args.steps is None):
        raise ConfigError("give exactly one of --t-end or --steps")
    if args.t_end is not None and not args.t_end >= 0:
        raise ConfigError("--t-end must be >= 0")
    if args.steps is not None and args.steps < 0:
        raise ConfigError("--steps must be >= 0")
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    seed = args.seed[0] if args.seed else DEFAULT_SEEDS[0]
    times = None
    if args.t_end is not None:
        if args.t_end == 0:
            _write([], ("replica", "t", *net.species), args)
            return 0
        times = (np.arange(1, args.samples + 1) * (args.t_end / args.samples)).tolist()
        times[-1] = args.t_end
    workers = max(1, min(args.parallelism or os.cpu_count() or 1, args.replicas))
    bounds = np.linspace(0, args.replicas, workers + 1).astype(int)
    jobs = [
        {
            "network": net.to_dict(),
            "backend": b,
            "t_end": args.t_end,
            "steps": args.steps,
            "replicas": args.replicas,
            "seed": seed,
            "times": times,
            "range": (int(bounds[k]), int(bounds[k + 1])),
        }
        for b in args.backend
        for k in range(workers)
        if bounds[k + 1] > bounds[k]
    ]
    try:
        parts = _pool(args, _ssa_job, jobs)
    except (ExhaustedSystem, NegativeCount) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = []
    summary = []
    for b in args.backend:
        res = ssa.merge([p for p in parts if p.backend == b])
        for r in range(res.counts.shape[0]):
            for k in range(res.counts.shape[1]):
                t = res.extra["t_final"][r] if args.steps is not None else res.times[k]
                row = {"backend": b, "replica": r, "t": float(t)}
                row.update(zip(net.species, res.counts[r, k].tolist()))
                rows.append(row)
        final = res.counts[:, -1, :]
        stat = {
            "backend": b,
            "replicas": res.counts.shape[0],
            "firings": res.firings,
            "proposals_per_selection": res.proposals_per_selection,
            "wall_time_s": res.wall_time_ns / 1e9,
            "exhausted": int(res.exhausted.sum()),
            "reinit_count": res.extra.get("reinit_count", 0),
        }
        for i, name in enumerate(net.species):
            stat[f"mean_{name}"] = float(final[:, i].mean())
            stat[f"se_{name}"] = float(final[:, i].std(ddof=1) / math.sqrt(final.shape[0])) if final.shape[0] > 1 else float("nan")
        summary.append(stat)
    _write(rows, ("backend", "replica", "t", *net.species), args)
    cols = ["backend", "replicas", "firings", "proposals_per_selection", "wall_time_s", "exhausted", "reinit_count"]
    for name in net.species:
        cols += [f"mean_{name}", f"se_{name}"]
    if args.summary:
        _write(summary, cols, args, args.summary)
    for s in summary:
        means = "  ".join(f"{n}={s[f'mean_{n}']:.4f}±{s[f'se_{n}']:.4f}" for n in net.species)
        _info(args, f"{s['backend']:>6}: {means}  proposals/selection {s['proposals_per_selection']:.3f}")
    return 0


# ------------------------------------------------------------------ parser


def _seeds(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer seed: {text!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seeds must be unsigned 64-bit integers")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seeds, nargs="+", help="seed list (fixed defaults otherwise)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--parallelism", type=int, default=None, help="worker processes (default: all cores)")

    parser = argparse.ArgumentParser(prog="rrsample", description="Reduced Rejection sampling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="oracle and chi-square self-checks")
    p.add_argument("--instances", type=int, default=100, help="random targets for the exact oracle")
    p.add_argument("--targets", type=int, default=100, help="random targets per chi-square suite")
    p.add_argument("--samples", type=int, default=10**6, help="draws per chi-square target")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("example1", parents=[common], help="singular density on (0, 1)")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--bins", type=int, default=100, help="histogram bins; 0 writes raw samples")
    p.set_defaults(func=cmd_example1)

    def kmc_flags(p, n, m, backends, refresh):
        p.add_argument("--n-particles", type=int, default=n)
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--reinit-threshold", type=int, default=m, help="M (default ceil(4 sqrt(N)))")
        p.add_argument("--backend", nargs="+", choices=("rr", "ar"), default=backends)
        p.add_argument(
            "--ar-refresh",
            type=int,
            default=refresh,
            help="interactions between recomputations of the ar height; 0 keeps the running maximum",
        )

    p = sub.add_parser("kmc", parents=[common], help="interacting-particle kinetic Monte Carlo")
    kmc_flags(p, 100, None, ["rr"], None)
    p.add_argument("--interactions", type=int, default=10**6)
    p.add_argument("--record-every", type=int, default=None)
    p.add_argument("--allow-self-pairs", action="store_true")
    p.add_argument("--tolerance", type=float, default=None, help="fail if a relative error exceeds this")
    p.set_defaults(func=cmd_kmc)

    p = sub.add_parser("bench", parents=[common], help="cumulative time and proposals versus n")
    # The running-maximum height is the baseline whose cost grows like n**1.5.
    kmc_flags(p, 10**4, 4000, ["rr", "ar"], 0)
    p.add_argument("--sizes", type=int, nargs="+", default=list(BENCH_SIZES))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ssa", parents=[common], help="Gillespie simulation of a reaction network")
    p.add_argument("--network", help="JSON network file")
    p.add_argument("--backend", nargs="+", choices=tuple(ssa.BACKENDS), default=["direct"])
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--samples", type=int, default=10, help="sample times on (0, t_end]")
    p.add_argument("--summary", help="summary CSV/JSON path")
    p.set_defaults(func=cmd_ssa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.parallelism is not None and args.parallelism < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidParams, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SamplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
