"""End-to-end curation runs: ingest, compare, seasonality, detect, repair.

Order-dependency violations are repaired automatically (the backward
clamp is deterministic and auditable); point anomalies and change points
are only ever repaired after a human Confirm lands in the decision log.
Confirmed change points never alter data; they fence repair-estimation
windows so a fit never crosses a regime boundary.

Two runs on identical snapshots and decisions produce byte-identical
artifacts: no artifact contains a timestamp, iteration is sorted, and the
one Monte Carlo step (change-point calibration) is seeded from series
identity.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compare import compare_report, rank_dissimilar
from .detect import (
    AnomalyKind,
    AnomalyRecord,
    AnomalyStatus,
    SpeedConstraintConfig,
    change_point_record,
    detect_change_points,
    detect_od_violations,
    detect_point_anomalies,
    export_anomalies,
    load_anomalies,
)
from .errors import ConfigError, CountcureError, InsufficientDataError
from .ingest import (
    GeoRuleSet,
    MergeRule,
    default_geo_rules,
    fetch_source,
    normalize_geography,
    parse_source,
    read_canonical,
    write_canonical,
)
from .model import (
    Level, Metric, Panel, SourceId, align_panels, to_cumulative, to_increments,
)
from .repair import integerize_increments, repair_od, repair_outliers
from .seasonality import ensemble_seasonal, report_to_row

ENV_CACHE_DIR = "COUNTCURE_CACHE_DIR"
ENV_ENDPOINT = "COUNTCURE_ENDPOINT_{source}_{metric}"


@dataclass
class DetectionConfig:
    speed: SpeedConstraintConfig = field(default_factory=SpeedConstraintConfig)
    alpha_cp: float = 0.01
    alpha_seasonal: float = 0.05
    cp_link: str = "log_quasipoisson"
    cp_boot: int = 500
    cp_seed: int = 2020


@dataclass
class RepairConfig:
    method: str = "clep"
    delta: float | None = None  # None -> scale-aware default rule
    window: int = 21
    ingarch_p: int = 7
    ingarch_q: int = 0
    od_method: str = "clamp"
    integerize: bool = False


@dataclass
class PipelineConfig:
    level: Level
    metrics: list[Metric]
    endpoints: dict[SourceId, dict[Metric, str]]
    out_dir: Path
    decision_log: Path
    offline: bool = True
    cache_dir: Path | None = None
    geo_rules: GeoRuleSet = field(default_factory=default_geo_rules)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    repair: RepairConfig = field(default_factory=RepairConfig)
    compare_top_n: int = 10
    compare_threshold: float = 0.5
    compare_norm: str = "l2"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.endpoints:
            raise ConfigError("at least one source must be enabled")
        if not self.metrics:
            raise ConfigError("at least one metric must be enabled")
        if self.level == Level.COUNTY and SourceId.ATLANTIC in self.endpoints:
            raise ConfigError("Atlantic provides no county-level data")


def _load_geo_rules(obj) -> GeoRuleSet:
    if obj is None:
        return default_geo_rules()
    if isinstance(obj, str):
        obj = json.loads(Path(obj).read_text())
    merges = [MergeRule(m["target_fips"], m["target_name"], tuple(m["members"]))
              for m in obj.get("merges", [])]
    return GeoRuleSet(merges=merges, exclusions=list(obj.get("exclusions", [])),
                      alias=dict(obj.get("alias", {})))


def load_config(path, *, offline: bool | None = None) -> PipelineConfig:
    """Read a JSON config; environment variables override endpoints/cache."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        level = Level(raw["level"])
        metrics = [Metric(m) for m in raw["metrics"]]
        endpoints: dict[SourceId, dict[Metric, str]] = {}
        base = path.parent
        for source_name, by_metric in raw["sources"].items():
            source = SourceId(source_name)
            endpoints[source] = {}
            for metric_name, endpoint in by_metric.items():
                metric = Metric(metric_name)
                env = os.environ.get(ENV_ENDPOINT.format(
                    source=source.value.upper(), metric=metric.value.upper()))
                if env:
                    endpoint = env
                if not endpoint.startswith(("http://", "https://")) and not os.path.isabs(endpoint):
                    endpoint = str((base / endpoint).resolve())
                endpoints[source][metric] = endpoint
        detection_raw = raw.get("detection", {})
        speed = SpeedConstraintConfig(
            window_w=detection_raw.get("window_w", 14),
            sc1=(float("inf") if detection_raw.get("sc1") in (None, "inf")
                 else float(detection_raw["sc1"])),
            sc2=detection_raw.get("sc2", 5.0),
            min_count=detection_raw.get("min_count", 30.0),
        )
        detection = DetectionConfig(
            speed=speed,
            alpha_cp=detection_raw.get("alpha_cp", 0.01),
            alpha_seasonal=detection_raw.get("alpha_seasonal", 0.05),
            cp_link=detection_raw.get("cp_link", "log_quasipoisson"),
            cp_boot=detection_raw.get("cp_boot", 500),
            cp_seed=detection_raw.get("cp_seed", 2020),
        )
        repair_raw = raw.get("repair", {})
        repair_cfg = RepairConfig(
            method=repair_raw.get("method", "clep"),
            delta=repair_raw.get("delta"),
            window=repair_raw.get("window", 21),
            ingarch_p=repair_raw.get("ingarch_p", 7),
            ingarch_q=repair_raw.get("ingarch_q", 0),
            od_method=repair_raw.get("od_method", "clamp"),
            integerize=repair_raw.get("integerize", False),
        )
        compare_raw = raw.get("compare", {})
        cache_dir = os.environ.get(ENV_CACHE_DIR) or raw.get("cache_dir")
        geo_rules_path = raw.get("geo_rules")
        if isinstance(geo_rules_path, str) and not os.path.isabs(geo_rules_path):
            geo_rules_path = str((base / geo_rules_path).resolve())
        config = PipelineConfig(
            level=level,
            metrics=metrics,
            endpoints=endpoints,
            out_dir=Path(raw["out_dir"]) if os.path.isabs(raw["out_dir"])
            else (base / raw["out_dir"]).resolve(),
            decision_log=Path(raw["decision_log"]) if os.path.isabs(raw["decision_log"])
            else (base / raw["decision_log"]).resolve(),
            offline=raw.get("offline", True) if offline is None else offline,
            cache_dir=Path(cache_dir) if cache_dir else None,
            geo_rules=_load_geo_rules(geo_rules_path),
            detection=detection,
            repair=repair_cfg,
            compare_top_n=compare_raw.get("top_n", 10),
            compare_threshold=compare_raw.get("threshold", 0.5),
            compare_norm=compare_raw.get("norm", "l2"),
            raw=raw,
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return config


# ---------------------------------------------------------------------------
# decision log


@dataclass(frozen=True)
class CurationDecision:
    anomaly_id: str
    verdict: str  # Confirm | Dismiss
    period_override: tuple[int, int] | None = None
    method_override: str | None = None
    manual_value: float | None = None
    note: str = ""
    decided_at: str = ""
    actor: str = "curator"

    def __post_init__(self):
        if self.verdict not in ("Confirm", "Dismiss"):
            raise ConfigError(f"verdict must be Confirm or Dismiss, got {self.verdict!r}")
        if not self.anomaly_id or not all(c in "0123456789abcdef" for c in self.anomaly_id):
            raise ConfigError(f"malformed anomaly id {self.anomaly_id!r}")
        if not self.decided_at:
            object.__setattr__(
                self, "decided_at",
                dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"))

    def to_json(self) -> str:
        return json.dumps({
            "anomaly_id": self.anomaly_id,
            "verdict": self.verdict,
            "period_override": list(self.period_override) if self.period_override else None,
            "method_override": self.method_override,
            "manual_value": self.manual_value,
            "note": self.note,
            "decided_at": self.decided_at,
            "actor": self.actor,
        })

    @staticmethod
    def from_json(line: str) -> "CurationDecision":
        obj = json.loads(line)
        period = obj.get("period_override")
        return CurationDecision(
            anomaly_id=obj["anomaly_id"], verdict=obj["verdict"],
            period_override=tuple(period) if period else None,
            method_override=obj.get("method_override"),
            manual_value=obj.get("manual_value"),
            note=obj.get("note", ""), decided_at=obj["decided_at"],
            actor=obj.get("actor", "curator"),
        )


def append_decision(log_path, decision: CurationDecision) -> None:
    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(decision.to_json() + "\n")


def read_decisions(log_path) -> tuple[dict[str, CurationDecision], list[int]]:
    """Effective (latest-wins) decision per anomaly id, plus corrupt line numbers."""
    log_path = Path(log_path)
    effective: dict[str, CurationDecision] = {}
    order: dict[str, tuple[str, int]] = {}
    corrupt: list[int] = []
    if not log_path.exists():
        return effective, corrupt
    with open(log_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                decision = CurationDecision.from_json(line)
            except (json.JSONDecodeError, KeyError, ConfigError):
                corrupt.append(line_no)
                continue
            stamp = (decision.decided_at, line_no)
            if decision.anomaly_id not in order or stamp >= order[decision.anomaly_id]:
                order[decision.anomaly_id] = stamp
                effective[decision.anomaly_id] = decision
    return effective, corrupt


# ---------------------------------------------------------------------------
# run


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="")
    os.replace(tmp, path)


def _dump_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _slug(source: SourceId, metric: Metric, level: Level) -> str:
    return f"{source.value}_{metric.value}_{level.value}"


def _panel_diff(before: Panel, after: Panel) -> list[dict]:
    cells = []
    for key in sorted(set(before.series) | set(after.series)):
        a = before[key].values
        b = after[key].values
        for i in np.nonzero(a != b)[0]:
            cells.append({
                "id": key.ident,
                "date": (before.start_date + dt.timedelta(days=int(i))).isoformat(),
                "before": float(a[i]),
                "after": float(b[i]),
            })
    return cells


def _warn(record: AnomalyRecord) -> None:
    print(f"warning: {record.kind.value} at {record.key.ident} "
          f"{record.metric.value} [{record.source.value}] on {record.date} "
          f"(magnitude {record.magnitude:g})", file=sys.stderr)


@dataclass
class RunReport:
    run_id: str = ""
    stages: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "stages": self.stages, "failures": self.failures}


def _seasonality_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    buf_rows = []
    header = list(rows[0].keys())
    for row in rows:
        buf_rows.append([row.get(col, "") for col in header])
    out = [",".join(header)]
    for row in buf_rows:
        out.append(",".join(str(v) for v in row))
    _atomic_write_text(path, "\n".join(out) + "\n")


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Execute all stages; independent stages keep running on failure."""
    report = RunReport()
    out = config.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    decisions, corrupt = read_decisions(config.decision_log)
    if corrupt:
        report.failures.append(f"decision log: skipped corrupt lines {corrupt}")

    # ingest
    panels: dict[tuple[SourceId, Metric], Panel] = {}
    snapshot_hashes: dict[str, str] = {}
    ingest_summary: dict[str, dict] = {}
    for source in sorted(config.endpoints, key=lambda s: s.value):
        for metric in config.metrics:
            endpoint = config.endpoints[source].get(metric)
            if endpoint is None:
                continue
            slug = _slug(source, metric, config.level)
            try:
                snapshot = fetch_source(source, endpoint, offline=config.offline,
                                        cache_dir=config.cache_dir)
                snapshot_hashes[slug] = snapshot.sha256
                panel, parse_report = parse_source(snapshot, metric, config.geo_rules)
                if panel.level != config.level:
                    raise ConfigError(
                        f"{slug}: payload is {panel.level.value}-level, "
                        f"config wants {config.level.value}")
                panel, norm_report = normalize_geography(panel, config.geo_rules)
                panels[(source, metric)] = panel
                write_canonical(panel, out / "canonical" / f"{slug}.csv")
                ingest_summary[slug] = {
                    "series": len(panel),
                    "days": panel.n_days(),
                    "row_errors": len(parse_report.row_errors),
                    "dropped_series": len(parse_report.dropped_series),
                    "excluded": len(norm_report.excluded),
                    "merges": sorted(norm_report.merges_applied),
                }
            except CountcureError as exc:
                report.failures.append(f"ingest {slug}: {exc}")
    report.stages["ingest"] = ingest_summary

    # compare
    compare_summary = {}
    for metric in config.metrics:
        group = [p for (src, m), p in sorted(panels.items(), key=lambda kv: kv[0][0].value)
                 if m == metric]
        if len(group) < 2:
            continue
        try:
            aligned = align_panels(group)
            path = out / "compare" / f"{metric.value}_{config.level.value}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            summary = compare_report(aligned, metric, path,
                                     threshold=config.compare_threshold,
                                     norm=config.compare_norm)
            ranked = rank_dissimilar(aligned, metric, top_n=config.compare_top_n,
                                     norm=config.compare_norm)
            summary["top"] = {
                f"{a.value}|{b.value}": [
                    {"id": r.key.ident, "d": round(r.d, 9)} for r in records]
                for (a, b), records in sorted(
                    ranked.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))
            }
            compare_summary[metric.value] = summary
        except CountcureError as exc:
            report.failures.append(f"compare {metric.value}: {exc}")
    report.stages["compare"] = compare_summary

    # seasonality
    season_summary = {}
    for (source, metric), panel in sorted(
            panels.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        slug = _slug(source, metric, config.level)
        rows = []
        n_seasonal = 0
        for key in panel.sorted_keys():
            z = to_increments(panel[key])
            try:
                season_report = ensemble_seasonal(z, alpha=config.detection.alpha_seasonal)
            except InsufficientDataError:
                continue
            rows.append(report_to_row(season_report))
            n_seasonal += season_report.ensemble_verdict
        _seasonality_csv(out / "seasonality" / f"{slug}.csv", rows)
        season_summary[slug] = {"tested": len(rows), "seasonal": n_seasonal}
    report.stages["seasonality"] = season_summary

    # detect + auto OD repair
    detect_summary = {}
    od_repaired: dict[tuple[SourceId, Metric], Panel] = {}
    all_anomalies: dict[tuple[SourceId, Metric], list[AnomalyRecord]] = {}
    for (source, metric), panel in sorted(
            panels.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        slug = _slug(source, metric, config.level)
        records: list[AnomalyRecord] = []
        fixed = Panel(source, metric, config.level, panel.start_date)
        for key in panel.sorted_keys():
            series = panel[key]
            od_records = detect_od_violations(series)
            for rec in od_records:
                _warn(rec)
            if od_records:
                if config.repair.od_method == "model":
                    from .repair import repair_od_model
                    series, _ = repair_od_model(
                        series, method=config.repair.method,
                        window=config.repair.window)
                else:
                    series = repair_od(series)
                od_records = [
                    rec.with_status(AnomalyStatus.CONFIRMED).with_status(AnomalyStatus.REPAIRED)
                    for rec in od_records]
            records.extend(od_records)
            fixed.add(series)
            try:
                point_records = detect_point_anomalies(series, config.detection.speed)
            except InsufficientDataError:
                point_records = []
            for rec in point_records:
                _warn(rec)
            records.extend(point_records)
            z = to_increments(series)
            try:
                fit = detect_change_points(
                    z, link=config.detection.cp_link,
                    alpha_cp=config.detection.alpha_cp,
                    n_boot=config.detection.cp_boot,
                    seed=config.detection.cp_seed)
            except (CountcureError, ValueError):
                fit = None
            if fit is not None:
                rec = change_point_record(z, fit)
                _warn(rec)
                records.append(rec)
        od_repaired[(source, metric)] = fixed
        # apply decisions
        updated = []
        for rec in records:
            decision = decisions.get(rec.id)
            if rec.status == AnomalyStatus.DETECTED and decision is not None:
                rec = rec.with_status(AnomalyStatus.CONFIRMED if decision.verdict == "Confirm"
                                      else AnomalyStatus.DISMISSED)
            updated.append(rec)
        all_anomalies[(source, metric)] = updated
        detect_summary[slug] = {
            "od": sum(r.kind == AnomalyKind.OD_VIOLATION for r in updated),
            "point": sum(r.kind == AnomalyKind.POINT_ANOMALY for r in updated),
            "change_point": sum(r.kind == AnomalyKind.CHANGE_POINT for r in updated),
            "confirmed": sum(r.status == AnomalyStatus.CONFIRMED for r in updated),
            "dismissed": sum(r.status == AnomalyStatus.DISMISSED for r in updated),
        }
    report.stages["detect"] = detect_summary

    # repair
    repair_summary = _repair_stage(config, panels, od_repaired, all_anomalies,
                                   decisions, out, report)
    report.stages["repair"] = repair_summary

    # anomaly export with final statuses
    (out / "anomalies").mkdir(parents=True, exist_ok=True)
    for (source, metric), records in sorted(
            all_anomalies.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        slug = _slug(source, metric, config.level)
        export_anomalies(records, out / "anomalies" / f"{slug}.jsonl")

    # manifest + report
    _dump_json(out / "snapshot_manifest.json", snapshot_hashes)
    config_text = json.dumps(config.raw, sort_keys=True)
    decision_text = json.dumps(
        {k: decisions[k].to_json() for k in sorted(decisions)}, sort_keys=True)
    report.run_id = hashlib.sha256(
        (config_text + json.dumps(snapshot_hashes, sort_keys=True) + decision_text)
        .encode()).hexdigest()[:12]
    _dump_json(out / "config_used.json", config.raw)
    _dump_json(out / "run_report.json", report.to_dict())
    return report


def _repair_stage(config, panels, od_repaired, all_anomalies, decisions, out, report):
    repair_summary = {}
    for (source, metric), panel in sorted(
            od_repaired.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        slug = _slug(source, metric, config.level)
        try:
            records = all_anomalies[(source, metric)]
            by_key: dict = {}
            for rec in records:
                by_key.setdefault(rec.key, []).append(rec)
            repaired_panel = Panel(source, metric, config.level, panel.start_date)
            repair_lines = []
            repaired_ids = set()
            for key in panel.sorted_keys():
                series = panel[key]
                key_records = [r for r in by_key.get(key, [])
                               if r.kind == AnomalyKind.POINT_ANOMALY]
                change_points = [r.t_index for r in by_key.get(key, [])
                                 if r.kind == AnomalyKind.CHANGE_POINT
                                 and r.status == AnomalyStatus.CONFIRMED]
                overrides = {}
                for rec in key_records:
                    decision = decisions.get(rec.id)
                    if decision is None:
                        continue
                    entry = {}
                    if decision.period_override:
                        entry["period"] = list(decision.period_override)
                    if decision.method_override:
                        entry["method"] = decision.method_override
                    if decision.manual_value is not None:
                        entry["value"] = decision.manual_value
                    if entry:
                        overrides[rec.id] = entry
                z = to_increments(series)
                repaired_z, results = repair_outliers(
                    z, key_records, method=config.repair.method,
                    delta=config.repair.delta, window=config.repair.window,
                    ingarch_order=(config.repair.ingarch_p, config.repair.ingarch_q),
                    change_points=change_points, overrides=overrides)
                values = repaired_z.values
                if config.repair.integerize and any(r.applied for r in results):
                    values = integerize_increments(values)
                    repaired_z = repaired_z.with_values(values)
                repaired_panel.add(to_cumulative(repaired_z))
                for result in results:
                    if result.applied:
                        repaired_ids.add(result.anomaly_id)
                    repair_lines.append(json.dumps({
                        "anomaly_id": result.anomaly_id,
                        "id": key.ident,
                        "t_m": result.t_m,
                        "method": result.method,
                        "z_hat": result.z_hat,
                        "delta": result.delta,
                        "period": [result.period[0], result.period[-1]] if result.period else None,
                        "conservation_receipt": list(result.conservation_receipt),
                        "applied": result.applied,
                        "skip_reason": result.skip_reason,
                        "flags": result.flags,
                    }))
            write_canonical(repaired_panel, out / "repaired" / f"{slug}.csv")
            cells = _panel_diff(panels[(source, metric)], repaired_panel)
            _dump_json(out / "repaired" / f"{slug}.provenance.json",
                       {"slug": slug, "cells": cells})
            _atomic_write_text(out / "repairs" / f"{slug}.jsonl",
                               "".join(line + "\n" for line in repair_lines))
            all_anomalies[(source, metric)] = [
                rec.with_status(AnomalyStatus.REPAIRED) if rec.id in repaired_ids else rec
                for rec in all_anomalies[(source, metric)]]
            repair_summary[slug] = {
                "repaired_points": len(repaired_ids),
                "skipped": sum(1 for line in repair_lines
                               if not json.loads(line)["applied"]),
                "cells_changed": len(cells),
            }
        except CountcureError as exc:
            report.failures.append(f"repair {slug}: {exc}")
    return repair_summary


def rerun_repair(out_dir, config: PipelineConfig) -> RunReport:
    """Re-run detect-status resolution and repair from stored canonical
    panels with the current decision log; rewrites repaired artifacts."""
    out = Path(out_dir)
    report = RunReport()
    decisions, _ = read_decisions(config.decision_log)
    panels: dict[tuple[SourceId, Metric], Panel] = {}
    od_repaired: dict[tuple[SourceId, Metric], Panel] = {}
    all_anomalies: dict[tuple[SourceId, Metric], list[AnomalyRecord]] = {}
    for source in sorted(config.endpoints, key=lambda s: s.value):
        for metric in config.metrics:
            slug = _slug(source, metric, config.level)
            canonical = out / "canonical" / f"{slug}.csv"
            anomalies_path = out / "anomalies" / f"{slug}.jsonl"
            if not canonical.exists() or not anomalies_path.exists():
                continue
            panel = read_canonical(canonical, source, metric)
            panels[(source, metric)] = panel
            fixed = Panel(source, metric, config.level, panel.start_date)
            for key in panel.sorted_keys():
                series = panel[key]
                if np.any(np.diff(series.values) < 0):
                    if config.repair.od_method == "model":
                        from .repair import repair_od_model
                        series, _ = repair_od_model(series, method=config.repair.method,
                                                    window=config.repair.window)
                    else:
                        series = repair_od(series)
                fixed.add(series)
            od_repaired[(source, metric)] = fixed
            records = []
            for rec in load_anomalies(anomalies_path):
                decision = decisions.get(rec.id)
                if rec.kind == AnomalyKind.OD_VIOLATION:
                    records.append(rec)
                    continue
                status = AnomalyStatus.DETECTED
                if decision is not None:
                    status = (AnomalyStatus.CONFIRMED if decision.verdict == "Confirm"
                              else AnomalyStatus.DISMISSED)
                records.append(AnomalyRecord(
                    id=rec.id, key=rec.key, metric=rec.metric, source=rec.source,
                    kind=rec.kind, t_index=rec.t_index, date=rec.date,
                    magnitude=rec.magnitude, detail=rec.detail, status=status))
            all_anomalies[(source, metric)] = records
    report.stages["repair"] = _repair_stage(config, panels, od_repaired,
                                            all_anomalies, decisions, out, report)
    for (source, metric), records in sorted(
            all_anomalies.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)):
        slug = _slug(source, metric, config.level)
        export_anomalies(records, out / "anomalies" / f"{slug}.jsonl")
    manifest = json.loads((out / "snapshot_manifest.json").read_text()) \
        if (out / "snapshot_manifest.json").exists() else {}
    config_text = json.dumps(config.raw, sort_keys=True)
    decision_text = json.dumps(
        {k: decisions[k].to_json() for k in sorted(decisions)}, sort_keys=True)
    report.run_id = hashlib.sha256(
        (config_text + json.dumps(manifest, sort_keys=True) + decision_text)
        .encode()).hexdigest()[:12]
    _dump_json(out / "run_report.json", report.to_dict())
    return report
