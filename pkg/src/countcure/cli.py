"""Command-line entry point.

Exit codes: 0 success, 2 stage failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, CountcureError
from .model import Metric, SourceId, to_increments
from .pipeline import (
    CurationDecision,
    append_decision,
    load_config,
    read_decisions,
    run_pipeline,
)

EXIT_OK = 0
EXIT_STAGE_FAILURE = 2
EXIT_CONFIG_ERROR = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="countcure",
        description="Compare, detect, and repair multi-source cumulative count panels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="pipeline config (JSON)")
        p.add_argument("--offline", action="store_true", default=None,
                       help="refuse network fetches regardless of config")
        p.add_argument("--source", help="restrict to one source")
        p.add_argument("--metric", help="restrict to one metric")
        p.add_argument("--level", help="override aggregation level")
        p.add_argument("--out", help="override output directory")

    p = sub.add_parser("fetch", help="fetch and cache source snapshots")
    common(p)

    p = sub.add_parser("compare", help="rank cross-source discrepancies")
    common(p)
    p.add_argument("--top", type=int, default=10)

    p = sub.add_parser("seasonality", help="run the weekly-cycle test battery")
    common(p)
    p.add_argument("--alpha", type=float, default=None)

    p = sub.add_parser("detect", help="detect anomalies and change points")
    common(p)
    p.add_argument("--alpha", type=float, default=None,
                   help="change-point significance level")

    p = sub.add_parser("repair", help="repair stage with current decisions")
    common(p)

    p = sub.add_parser("run", help="full pipeline run")
    common(p)

    p = sub.add_parser("decide", help="append a curation decision")
    p.add_argument("--config", required=True)
    p.add_argument("--id", required=True, help="anomaly id")
    p.add_argument("--verdict", required=True, choices=["Confirm", "Dismiss"])
    p.add_argument("--note", default="")
    p.add_argument("--period", help="period override LO:HI (1-based day indices)")
    p.add_argument("--method", help="method override (clep|ingarch|manual)")
    p.add_argument("--value", type=float, help="manual replacement value")
    p.add_argument("--actor", default="curator")

    p = sub.add_parser("serve", help="start the review service on a run directory")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    return parser


def _load(args) -> "PipelineConfig":
    config = load_config(args.config, offline=getattr(args, "offline", None))
    if getattr(args, "out", None):
        config.out_dir = Path(args.out).resolve()
    if getattr(args, "level", None):
        from .model import Level
        config.level = Level(args.level)
    if getattr(args, "source", None):
        wanted = SourceId(args.source)
        if wanted not in config.endpoints:
            raise ConfigError(f"source {args.source} not configured")
        config.endpoints = {wanted: config.endpoints[wanted]}
    if getattr(args, "metric", None):
        wanted = Metric(args.metric)
        if wanted not in config.metrics:
            raise ConfigError(f"metric {args.metric} not configured")
        config.metrics = [wanted]
    if getattr(args, "alpha", None) is not None:
        config.detection.alpha_cp = args.alpha
        config.detection.alpha_seasonal = args.alpha
    return config


def _cmd_fetch(args) -> int:
    from .ingest import fetch_source
    config = _load(args)
    failures = 0
    for source in sorted(config.endpoints, key=lambda s: s.value):
        for metric in config.metrics:
            endpoint = config.endpoints[source].get(metric)
            if endpoint is None:
                continue
            try:
                snapshot = fetch_source(source, endpoint, offline=config.offline,
                                        cache_dir=config.cache_dir)
                print(f"{source.value} {metric.value}: {snapshot.sha256[:12]} "
                      f"({len(snapshot.payload)} bytes)")
            except CountcureError as exc:
                print(f"{source.value} {metric.value}: FAILED {exc}", file=sys.stderr)
                failures += 1
    return EXIT_STAGE_FAILURE if failures else EXIT_OK


def _cmd_run(args) -> int:
    config = _load(args)
    report = run_pipeline(config)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_STAGE_FAILURE if report.failures else EXIT_OK


def _cmd_compare(args) -> int:
    from .compare import rank_dissimilar
    from .model import align_panels
    config = _load(args)
    panels = _ingest_panels(config)
    failures = 0
    for metric in config.metrics:
        group = [p for (s, m), p in sorted(panels.items(), key=lambda kv: kv[0][0].value)
                 if m == metric]
        if len(group) < 2:
            print(f"{metric.value}: need at least two sources", file=sys.stderr)
            failures += 1
            continue
        ranked = rank_dissimilar(align_panels(group), metric, top_n=args.top)
        for (a, b), records in sorted(ranked.items(),
                                      key=lambda kv: (kv[0][0].value, kv[0][1].value)):
            print(f"# {metric.value}: {a.value} vs {b.value}")
            for rec in records:
                print(f"  {rec.key.ident:24s} d={rec.d:.6f}")
    return EXIT_STAGE_FAILURE if failures else EXIT_OK


def _cmd_seasonality(args) -> int:
    from .seasonality import ensemble_seasonal, report_to_row
    from .errors import InsufficientDataError
    config = _load(args)
    panels = _ingest_panels(config)
    for (source, metric), panel in sorted(panels.items(),
                                          key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        for key in panel.sorted_keys():
            try:
                report = ensemble_seasonal(to_increments(panel[key]),
                                           alpha=config.detection.alpha_seasonal)
            except InsufficientDataError:
                continue
            row = report_to_row(report)
            tests = " ".join(
                f"{name}={row[f'{name}_p']}" for name in
                ("QS", "Friedman", "KruskalWallis", "Welch") if row[f"{name}_p"] != "")
            print(f"{source.value} {metric.value} {key.ident}: "
                  f"ensemble={'YES' if row['ensemble'] else 'no'} {tests}")
    return EXIT_OK


def _cmd_detect(args) -> int:
    from .detect import detect_od_violations, detect_point_anomalies, detect_change_points, change_point_record
    config = _load(args)
    panels = _ingest_panels(config)
    count = 0
    for (source, metric), panel in sorted(panels.items(),
                                          key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        for key in panel.sorted_keys():
            series = panel[key]
            records = detect_od_violations(series)
            try:
                records += detect_point_anomalies(series, config.detection.speed)
            except CountcureError:
                pass
            from .repair import repair_od
            z = to_increments(repair_od(series))
            try:
                fit = detect_change_points(z, link=config.detection.cp_link,
                                           alpha_cp=config.detection.alpha_cp,
                                           n_boot=config.detection.cp_boot,
                                           seed=config.detection.cp_seed)
            except CountcureError:
                fit = None
            if fit is not None:
                records.append(change_point_record(z, fit))
            for rec in records:
                count += 1
                print(f"{rec.id} {rec.kind.value:13s} {source.value} {metric.value} "
                      f"{rec.key.ident} {rec.date} magnitude={rec.magnitude:g}")
    print(f"# {count} anomalies", file=sys.stderr)
    return EXIT_OK


def _cmd_repair(args) -> int:
    from .pipeline import rerun_repair
    config = _load(args)
    if not (config.out_dir / "canonical").exists():
        report = run_pipeline(config)
    else:
        report = rerun_repair(config.out_dir, config)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    return EXIT_STAGE_FAILURE if report.failures else EXIT_OK


def _cmd_decide(args) -> int:
    config = load_config(args.config)
    period = None
    if args.period:
        lo, hi = args.period.split(":")
        period = (int(lo), int(hi))
    decision = CurationDecision(
        anomaly_id=args.id, verdict=args.verdict, period_override=period,
        method_override=args.method, manual_value=args.value,
        note=args.note, actor=args.actor)
    append_decision(config.decision_log, decision)
    effective, _ = read_decisions(config.decision_log)
    print(f"decision recorded; {len(effective)} effective decision(s)")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    config = load_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _ingest_panels(config):
    from .ingest import fetch_source, normalize_geography, parse_source
    panels = {}
    for source in sorted(config.endpoints, key=lambda s: s.value):
        for metric in config.metrics:
            endpoint = config.endpoints[source].get(metric)
            if endpoint is None:
                continue
            snapshot = fetch_source(source, endpoint, offline=config.offline,
                                    cache_dir=config.cache_dir)
            panel, _ = parse_source(snapshot, metric, config.geo_rules)
            panel, _ = normalize_geography(panel, config.geo_rules)
            panels[(source, metric)] = panel
    return panels


COMMANDS = {
    "fetch": _cmd_fetch,
    "compare": _cmd_compare,
    "seasonality": _cmd_seasonality,
    "detect": _cmd_detect,
    "repair": _cmd_repair,
    "run": _cmd_run,
    "decide": _cmd_decide,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except CountcureError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
