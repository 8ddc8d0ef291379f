"""Command-line interface: ``exactcpd {detect,multi,network,simulate}``.

Machine-readable output goes to stdout as JSON lines (sorted keys, fixed float
formatting); human-readable summaries go to stderr. Exit status is 0 whenever
the analysis ran, whatever the test decision.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .asymptotic import asymptotic_cusum_test, default_window, simulate_bridge_null
from .errors import ExactCPDError
from .exact import DEFAULT_MC_COUNT, default_cache, exact_test, minp_multiplicity_test
from .ingest import (
    ChannelFilter,
    degree_channels,
    edge_channels,
    filter_channels,
    load_channel_matrix,
    load_network_series,
)
from .multichannel import local_test, location_histogram
from .simlab import bundled_scenario_path, bundled_scenarios, load_scenarios, report_rows, run_scenario, write_reports
from .statistics import ChannelSeries

DETECT_METHODS = ("minp", "lr", "cu05", "cu1", "bb05", "bb1")


def _emit(record):
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _say(*parts):
    print(*parts, file=sys.stderr)


def _detect(args):
    matrix = load_channel_matrix(args.input, args.kind)
    if matrix.m != 1:
        raise ExactCPDError(f"detect expects exactly one channel, found {matrix.m}; use 'multi'")
    series = ChannelSeries(matrix.data[0], args.kind)
    if args.method.startswith("bb"):
        delta = 0.5 if args.method == "bb05" else 1.0
        a, b = default_window(series.T)
        null = simulate_bridge_null(delta, a, b, args.grid, args.mc or 100_000, args.seed)
        out = asymptotic_cusum_test(series, delta, args.alpha, null)
    elif args.method == "minp":
        out = minp_multiplicity_test(series, args.alpha, args.mc or DEFAULT_MC_COUNT, args.seed)
    else:
        out = exact_test(series, args.method, args.alpha, args.mc or DEFAULT_MC_COUNT, args.seed)
    _emit({
        "channel": matrix.channel_ids[0],
        "method": args.method,
        "T": series.T,
        "total": series.total,
        "statistic": round(out.statistic, 12),
        "p_value": round(out.p_value, 12),
        "reject": bool(out.reject),
        "alpha": args.alpha,
        "changepoint": int(out.changepoint_estimate),
    })
    verdict = "change detected" if out.reject else "no change detected"
    _say(f"{matrix.channel_ids[0]}: {verdict} ({args.method}, p = {out.p_value:.4g}, "
         f"alpha = {args.alpha}); estimated changepoint t = {out.changepoint_estimate}")
    return 0


def _run_local(matrix, args, dropped, extra=None):
    record = {"type": "summary", "m_input": matrix.m + len(dropped), "dropped": len(dropped),
              "test": args.test, "fdr": args.fdr, "alpha": args.alpha}
    if extra:
        record.update(extra)
    for cid in dropped:
        _emit({"type": "dropped", "channel": cid})
    if matrix.m == 0:
        record.update({"m_tested": 0, "rejected": 0, "global_reject": False,
                       "note": "every channel was filtered out; nothing to test"})
        _emit(record)
        _say("All channels were filtered out; nothing to test.")
        return 0
    res = local_test(matrix, args.test, args.fdr, args.alpha, args.mc, args.seed)
    rejected = res.rejections.rejected
    rows = []
    for j, cid in enumerate(matrix.channel_ids):
        row = {"type": "channel", "channel": cid, "p_value": round(float(res.pvals.p[j]), 12),
               "rejected": j in rejected,
               "changepoint": res.changepoint_estimates.get(cid)}
        rows.append(row)
        _emit(row)
    hist = location_histogram(res)
    for loc, count in hist:
        _emit({"type": "histogram", "location": loc, "count": count})
    record.update({"m_tested": matrix.m, "rejected": len(rejected),
                   "global_reject": res.global_reject})
    _emit(record)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "channels.tsv", "w") as fh:
            fh.write("channel\tp_value\trejected\tchangepoint\n")
            for r in rows:
                cp = "" if r["changepoint"] is None else r["changepoint"]
                fh.write(f"{r['channel']}\t{r['p_value']:.6g}\t{int(r['rejected'])}\t{cp}\n")
        with open(out / "histogram.tsv", "w") as fh:
            fh.write("location\tcount\n")
            for loc, count in hist:
                fh.write(f"{loc}\t{count}\n")
        with open(out / "dropped.txt", "w") as fh:
            fh.writelines(f"{cid}\n" for cid in dropped)
    _say(f"{len(rejected)} of {matrix.m} channels rejected ({args.test}-{args.fdr.upper()}, "
         f"alpha = {args.alpha}); {len(dropped)} dropped by the filter.")
    if hist:
        peak = max(hist, key=lambda kv: (kv[1], -kv[0]))
        _say(f"Most frequent estimated changepoint: t = {peak[0]} ({peak[1]} channels).")
    return 0


def _multi(args):
    matrix = load_channel_matrix(args.input, args.kind)
    dropped = []
    if args.filter is not None:
        matrix, dropped = filter_channels(matrix, ChannelFilter(args.filter))
    return _run_local(matrix, args, dropped)


def _network(args):
    series = load_network_series(args.input)
    if args.channels == "edges":
        matrix = edge_channels(series, args.mode)
    else:
        matrix = degree_channels(series)
    m_before = matrix.m
    dropped = []
    if args.filter is not None:
        matrix, dropped = filter_channels(matrix, ChannelFilter(args.filter))
    _say(f"{args.channels} channels: m = {m_before} before filtering, T = {series.T}.")
    extra = {"channels": args.channels, "kind": matrix.kind, "nodes": series.n, "T": series.T}
    return _run_local(matrix, args, dropped, extra)


def _simulate(args):
    if args.list:
        for name in bundled_scenarios():
            print(name)
        return 0
    if args.config is None:
        raise ExactCPDError("simulate needs --config (a file or a bundled scenario name)")
    path = Path(args.config)
    if not path.exists():
        path = bundled_scenario_path(args.config)
    overrides = {}
    for key in ("replicates", "mc_count", "permutations", "seed"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    cfgs = load_scenarios(path, **overrides)
    reports = []
    for cfg in cfgs:
        rep = run_scenario(cfg, workers=args.workers)
        _say(f"{cfg.name} n_cp={cfg.n_cp}: {cfg.replicates} replicates in {rep.wall_time:.1f}s")
        reports.append(rep)
    stem = cfgs[0].name or path.stem
    table, records = write_reports(reports, args.out, stem)
    for row in report_rows(reports):
        _say("\t".join(row))
    _say(f"wrote {table} and {records}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="exactcpd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="test one binary or count series for a changepoint")
    d.add_argument("--input", required=True)
    d.add_argument("--kind", required=True, choices=("binary", "count"))
    d.add_argument("--method", required=True, choices=DETECT_METHODS)
    d.add_argument("--alpha", type=float, default=0.1)
    d.add_argument("--mc", type=int, default=None,
                   help="null draws (default 50000 exact, 100000 for the bridge)")
    d.add_argument("--grid", type=int, default=1000, help="bridge grid size (bb methods)")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=_detect)

    def local_flags(q):
        q.add_argument("--test", required=True, choices=("minp", "lr", "cu1"))
        q.add_argument("--fdr", default="bh", choices=("bh", "abh", "sts"))
        q.add_argument("--alpha", type=float, default=0.1)
        q.add_argument("--filter", type=int, default=None, metavar="MAX",
                       help="drop channels with more than MAX zeros (or ones, if binary)")
        q.add_argument("--mc", type=int, default=DEFAULT_MC_COUNT)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", default=None, help="directory for TSV reports")

    mu = sub.add_parser("multi", help="local testing of a multichannel file with FDR control")
    mu.add_argument("--input", required=True)
    mu.add_argument("--kind", required=True, choices=("binary", "count"))
    local_flags(mu)
    mu.set_defaults(func=_multi)

    nw = sub.add_parser("network", help="edge or degree channels from network snapshots")
    nw.add_argument("--input", required=True)
    nw.add_argument("--channels", required=True, choices=("edges", "degrees"))
    nw.add_argument("--mode", default="binary", choices=("binary", "weighted"))
    local_flags(nw)
    nw.set_defaults(func=_network)

    s = sub.add_parser("simulate", help="run a simulation scenario and write power tables")
    s.add_argument("--config", default=None, help="scenario file or bundled scenario name")
    s.add_argument("--out", default=".")
    s.add_argument("--list", action="store_true", help="list bundled scenarios")
    s.add_argument("--replicates", type=int, default=None)
    s.add_argument("--mc-count", dest="mc_count", type=int, default=None)
    s.add_argument("--permutations", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExactCPDError, OSError) as exc:
        _say(f"exactcpd {args.command}: error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
