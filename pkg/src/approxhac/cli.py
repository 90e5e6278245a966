"""Command line front end: ``approxhac {cluster,metrics,bench,invariant-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .engine import HacConfig, run_hac, invariant_check
from .geometry import DistanceBounds, compute_bounds, deduplicate
from .io import (ParseError, emit_stats, load_labels, load_points, read_dendrogram,
                 write_dendrogram, write_dendrogram_to)
from .metrics import (CutPolicy, ari, best_cut_score, dasgupta_cost, delta_inversions,
                      dendrogram_purity, nmi)

LOG_ENV = "APPROXHAC_LOG_LEVEL"
MODE_NAMES = {"exact": "exact", "heap": "heap_approx", "bucket": "bucket_approx"}
NNS_NAMES = {"exact": "exact", "lsh": "lsh_adaptive"}

log = logging.getLogger("approxhac")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, need_input: bool = True) -> None:
    p.add_argument("--input", required=need_input, help="dataset path")
    p.add_argument("--format", choices=("csv", "fvecs"), default=None,
                   help="dataset format (default: from extension, else csv)")
    p.add_argument("--mode", choices=tuple(MODE_NAMES), default="heap")
    p.add_argument("--nns", choices=tuple(NNS_NAMES), default="exact")
    p.add_argument("--epsilon", type=float, default=None, help="default 0.1, or 0 with --mode exact")
    p.add_argument("--c", type=float, default=2.0, help="target approximation of the LSH backend")
    p.add_argument("--lambda", dest="lam", type=float, default=1.5)
    p.add_argument("--delta", type=float, default=None, help="lower bound on the minimum distance")
    p.add_argument("--big-delta", type=float, default=None, help="upper bound on the diameter")
    p.add_argument("--lsh-k", type=int, default=None)
    p.add_argument("--lsh-l", type=int, default=None)
    p.add_argument("--lsh-gamma", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats-out", default=None, help="write run statistics JSON here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="approxhac", description="Approximate centroid-linkage HAC")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="cluster a dataset and write the dendrogram CSV")
    _common(p)
    p.add_argument("--output", default=None, help="dendrogram CSV (default: stdout)")

    p = sub.add_parser("metrics", help="score a dendrogram against ground-truth labels")
    _common(p, need_input=False)
    p.add_argument("--dendrogram", default=None, help="existing dendrogram CSV (otherwise cluster --input)")
    p.add_argument("--labels", required=True)
    p.add_argument("--cuts", choices=("all", "log"), default="all")
    p.add_argument("--output", default=None, help="scores JSON (default: stdout)")

    p = sub.add_parser("bench", help="time a run and print its statistics")
    _common(p)
    p.add_argument("--repeat", type=int, default=1)

    p = sub.add_parser("invariant-check", help="debug run with a step-wise brute-force oracle")
    _common(p)
    p.add_argument("--output", default=None, help="report JSON (default: stdout)")
    return parser


def config_from_args(args, points: Optional[np.ndarray] = None) -> HacConfig:
    mode = MODE_NAMES[args.mode]
    eps = args.epsilon
    if mode == "exact":
        if eps is not None and eps > 0.0:
            raise UsageError("--mode exact does not take --epsilon > 0")
        if args.nns != "exact":
            raise UsageError("--mode exact requires --nns exact")
        eps = 0.0
    elif eps is None:
        eps = 0.1
    bounds = None
    if args.delta is not None or args.big_delta is not None:
        if points is None:
            raise UsageError("--delta/--big-delta need --input")
        bounds = _bounds(points, args.delta, args.big_delta)
    try:
        return HacConfig(epsilon=eps, mode=mode, nns_backend=NNS_NAMES[args.nns],
                         c_target=args.c, lam=args.lam, bounds=bounds, seed=args.seed,
                         lsh_k=args.lsh_k, lsh_l=args.lsh_l, lsh_gamma=args.lsh_gamma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _bounds(points, delta, big_delta) -> DistanceBounds:
    unique = deduplicate(points).points
    try:
        if delta is not None and big_delta is not None:
            return DistanceBounds(delta, big_delta)
        b = compute_bounds(unique, delta)
        return DistanceBounds(b.delta, big_delta if big_delta is not None else b.big_delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args) -> np.ndarray:
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    return load_points(args.input, args.format)


def _stats_extra(args, config: HacConfig) -> dict:
    return {"seed": args.seed, "mode": config.mode, "nns_backend": config.nns_backend,
            "epsilon": config.epsilon}


def cmd_cluster(args) -> int:
    X = _load(args)
    config = config_from_args(args, X)
    dend, stats = run_hac(X, config)
    if args.output:
        write_dendrogram(dend, args.output)
    else:
        write_dendrogram_to(dend, sys.stdout)
    if args.stats_out:
        emit_stats(stats, args.stats_out, _stats_extra(args, config))
    log.info("clustered %d points in %d merges, gamma=%.6f", stats.n_points, stats.merges, stats.gamma)
    return 0


def cmd_metrics(args) -> int:
    X = None
    if args.input:
        X = _load(args)
    for path in (args.labels, args.dendrogram):
        if path and not os.path.exists(path):
            raise UsageError(f"input file not found: {path}")
    labels = load_labels(args.labels)
    if args.dendrogram:
        dend = read_dendrogram(args.dendrogram, n_leaves=len(labels))
        config = None
    elif X is not None:
        config = config_from_args(args, X)
        dend, stats = run_hac(X, config)
        if args.stats_out:
            emit_stats(stats, args.stats_out, _stats_extra(args, config))
    else:
        raise UsageError("metrics needs --dendrogram or --input")
    if dend.n_leaves != len(labels):
        raise UsageError(f"{len(labels)} labels for a dendrogram with {dend.n_leaves} leaves")
    policy = CutPolicy("all_thresholds" if args.cuts == "all" else "log_thresholds")
    scores = {
        "seed": args.seed,
        "cuts": args.cuts,
        "n_leaves": dend.n_leaves,
        "ari": best_cut_score(dend, labels, ari, policy),
        "nmi": best_cut_score(dend, labels, nmi, policy),
        "dendrogram_purity": dendrogram_purity(dend, labels, seed=args.seed),
        "delta_inversions_0": delta_inversions(dend, 0.0),
    }
    if args.delta is not None:
        scores["delta_inversions"] = {"delta": args.delta,
                                      "count": delta_inversions(dend, args.delta)}
    if X is not None:
        if X.shape[0] != dend.n_leaves:
            raise UsageError(f"{X.shape[0]} points for a dendrogram with {dend.n_leaves} leaves")
        scores["dasgupta_cost"] = dasgupta_cost(dend, X, seed=args.seed)
    text = json.dumps(scores, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    X = _load(args)
    config = config_from_args(args, X)
    times = []
    stats = None
    for _ in range(max(1, args.repeat)):
        t0 = time.perf_counter()
        _, stats = run_hac(X, config)
        times.append(time.perf_counter() - t0)
    row = stats.as_dict()
    phases = row.pop("phases")
    row["seconds_min"] = min(times)
    for k, v in phases.items():
        row[f"phase_{k}"] = v
    for k in sorted(row):
        v = row[k]
        sys.stdout.write(f"{k}\t{v:.6f}\n" if isinstance(v, float) else f"{k}\t{v}\n")
    if args.stats_out:
        emit_stats(stats, args.stats_out, dict(_stats_extra(args, config), seconds=times))
    return 0


def cmd_invariant_check(args) -> int:
    X = _load(args)
    config = config_from_args(args, X)
    report = invariant_check(X, config)
    report["seed"] = args.seed
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    ok = report["approx_violations"] == 0 and report["requeue_cap_ok"] and report["dendrogram_complete"]
    return 0 if ok else 1


COMMANDS = {"cluster": cmd_cluster, "metrics": cmd_metrics, "bench": cmd_bench,
            "invariant-check": cmd_invariant_check}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParseError, FileNotFoundError) as exc:
        sys.stderr.write(f"approxhac: error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        log.debug("run failed", exc_info=True)
        sys.stderr.write(f"approxhac: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
