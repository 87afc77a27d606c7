"""HTTP façade for human review of one pipeline run.

The service never touches panel data directly: every mutation is an
append to the decision log followed by a repair rerun, so the artifacts
on disk remain the single source of truth and the whole review trail is
auditable.  Reads are pure functions of (run artifacts, decision log).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .detect import AnomalyKind, AnomalyRecord, AnomalyStatus, load_anomalies
from .errors import ConfigError
from .ingest import read_canonical
from .model import Metric, Panel, SourceId, to_increments
from .pipeline import (
    CurationDecision,
    PipelineConfig,
    append_decision,
    read_decisions,
    rerun_repair,
)
from .repair import repair_outliers

PAGE_CAP = 500


class ReviewSession:
    """Artifacts and decision log for exactly one run directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out_dir = Path(config.out_dir)
        self.lock = threading.Lock()
        self.rerun_state = "idle"
        self.rerun_error = ""
        self.reload()

    def reload(self) -> None:
        report_path = self.out_dir / "run_report.json"
        if not report_path.exists():
            raise ConfigError(f"no run artifacts in {self.out_dir}; run the pipeline first")
        self.run_id = json.loads(report_path.read_text()).get("run_id", "")
        self.records: dict[str, AnomalyRecord] = {}
        self.record_slug: dict[str, str] = {}
        for path in sorted((self.out_dir / "anomalies").glob("*.jsonl")):
            slug = path.stem
            for record in load_anomalies(path):
                self.records[record.id] = record
                self.record_slug[record.id] = slug
        self._panels: dict[tuple[str, str, str], Panel] = {}

    def panel(self, kind: str, source: SourceId, metric: Metric) -> Panel | None:
        slug = f"{source.value}_{metric.value}_{self.config.level.value}"
        cache_key = (kind, source.value, metric.value)
        if cache_key not in self._panels:
            path = self.out_dir / kind / f"{slug}.csv"
            if not path.exists():
                return None
            self._panels[cache_key] = read_canonical(path, source, metric)
        return self._panels[cache_key]

    def decisions(self) -> dict[str, CurationDecision]:
        effective, _ = read_decisions(self.config.decision_log)
        return effective

    def effective_status(self, record: AnomalyRecord,
                         decisions: dict[str, CurationDecision]) -> AnomalyStatus:
        if record.status == AnomalyStatus.REPAIRED:
            return AnomalyStatus.REPAIRED
        decision = decisions.get(record.id)
        if decision is None:
            return record.status
        return (AnomalyStatus.CONFIRMED if decision.verdict == "Confirm"
                else AnomalyStatus.DISMISSED)


class DecisionBody(BaseModel):
    verdict: str
    period_override: tuple[int, int] | None = None
    method_override: str | None = None
    manual_value: float | None = None
    note: str = ""
    actor: str = "curator"


def _record_json(record: AnomalyRecord, status: AnomalyStatus) -> dict:
    obj = json.loads(record.to_json())
    obj["status"] = status.value
    return obj


def create_app(config: PipelineConfig, token: str | None = None) -> FastAPI:
    session = ReviewSession(config)
    app = FastAPI(title="countcure review service")
    app.state.session = session
    if token is None:
        token = (config.raw.get("service") or {}).get("token")

    def auth(request: Request) -> None:
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise HTTPException(401, "missing or invalid bearer token")

    @app.get("/api/run", dependencies=[Depends(auth)])
    def run_info():
        return {
            "run_id": session.run_id,
            "level": config.level.value,
            "metrics": [m.value for m in config.metrics],
            "sources": sorted(s.value for s in config.endpoints),
            "anomalies": len(session.records),
        }

    @app.get("/api/anomalies", dependencies=[Depends(auth)])
    def list_anomalies(status: str | None = None, kind: str | None = None,
                       state: str | None = None, metric: str | None = None,
                       source: str | None = None, limit: int = 100, offset: int = 0):
        try:
            status_f = AnomalyStatus(status) if status else None
            kind_f = AnomalyKind(kind) if kind else None
            metric_f = Metric(metric) if metric else None
            source_f = SourceId(source) if source else None
        except ValueError as exc:
            raise HTTPException(400, f"unknown filter value: {exc}") from exc
        if limit < 1 or offset < 0:
            raise HTTPException(400, "limit must be >= 1 and offset >= 0")
        limit = min(limit, PAGE_CAP)
        decisions = session.decisions()
        rows = []
        for record in session.records.values():
            effective = session.effective_status(record, decisions)
            if status_f and effective != status_f:
                continue
            if kind_f and record.kind != kind_f:
                continue
            if state and (record.key.state_name or "") != state:
                continue
            if metric_f and record.metric != metric_f:
                continue
            if source_f and record.source != source_f:
                continue
            rows.append((record, effective))
        rows.sort(key=lambda pair: (pair[0].date, pair[0].key, pair[0].kind.value,
                                    pair[0].source.value))
        page = rows[offset:offset + limit]
        return {
            "run_id": session.run_id,
            "total": len(rows),
            "offset": offset,
            "limit": limit,
            "items": [_record_json(r, s) for r, s in page],
        }

    @app.get("/api/series/{key_id}/{metric}", dependencies=[Depends(auth)])
    def series_payload(key_id: str, metric: str, source: str | None = None):
        try:
            metric_v = Metric(metric)
        except ValueError as exc:
            raise HTTPException(400, f"unknown metric {metric!r}") from exc
        try:
            source_v = SourceId(source) if source else sorted(
                config.endpoints, key=lambda s: s.value)[0]
        except ValueError as exc:
            raise HTTPException(400, f"unknown source {source!r}") from exc
        canonical = session.panel("canonical", source_v, metric_v)
        if canonical is None:
            raise HTTPException(404, f"no {source_v.value}/{metric_v.value} panel in this run")
        match = next((k for k in canonical.sorted_keys() if k.ident == key_id), None)
        if match is None:
            raise HTTPException(404, f"unknown key {key_id!r}")
        raw = canonical[match]
        z = to_increments(raw)
        repaired_panel = session.panel("repaired", source_v, metric_v)
        decisions = session.decisions()
        markers = []
        pending: list[AnomalyRecord] = []
        overrides = {}
        for record in session.records.values():
            if record.key != match or record.metric != metric_v or record.source != source_v:
                continue
            effective = session.effective_status(record, decisions)
            markers.append(_record_json(record, effective))
            if (record.kind == AnomalyKind.POINT_ANOMALY
                    and effective in (AnomalyStatus.DETECTED, AnomalyStatus.CONFIRMED)):
                pending.append(record.with_status(AnomalyStatus.CONFIRMED)
                               if record.status == AnomalyStatus.DETECTED else record)
                decision = decisions.get(record.id)
                if decision is not None:
                    entry = {}
                    if decision.period_override:
                        entry["period"] = list(decision.period_override)
                    if decision.method_override:
                        entry["method"] = decision.method_override
                    if decision.manual_value is not None:
                        entry["value"] = decision.manual_value
                    if entry:
                        overrides[record.id] = entry
        markers.sort(key=lambda m: (m["date"], m["kind"]))
        payload = {
            "run_id": session.run_id,
            "key": {"level": match.level.value, "id": match.ident,
                    "county": match.county_name, "state": match.state_name},
            "metric": metric_v.value,
            "source": source_v.value,
            "start_date": raw.start_date.isoformat(),
            "raw": raw.values.tolist(),
            "increments": z.values.tolist(),
            "repaired": (repaired_panel[match].values.tolist()
                         if repaired_panel is not None and match in repaired_panel else None),
            "anomalies": markers,
            "overlay": None,
        }
        if pending:
            from .repair import repair_od
            base = to_increments(repair_od(raw))
            change_points = [r.t_index for r in session.records.values()
                             if r.key == match and r.metric == metric_v
                             and r.source == source_v
                             and r.kind == AnomalyKind.CHANGE_POINT
                             and session.effective_status(r, decisions)
                             == AnomalyStatus.CONFIRMED]
            try:
                proposed, results = repair_outliers(
                    base, pending, method=config.repair.method,
                    delta=config.repair.delta, window=config.repair.window,
                    ingarch_order=(config.repair.ingarch_p, config.repair.ingarch_q),
                    change_points=change_points, overrides=overrides)
                payload["overlay"] = {
                    "pending_ids": [r.id for r in pending],
                    "increments": proposed.values.tolist(),
                    "cumulative": np.cumsum(proposed.values).tolist(),
                    "estimates": {res.anomaly_id: res.z_hat for res in results
                                  if res.applied},
                }
            except Exception as exc:  # preview failure must not break the view
                payload["overlay"] = {"error": str(exc), "pending_ids": [r.id for r in pending]}
        return payload

    @app.post("/api/anomalies/{anomaly_id}/decision", dependencies=[Depends(auth)])
    def decide(anomaly_id: str, body: DecisionBody):
        record = session.records.get(anomaly_id)
        if record is None:
            raise HTTPException(404, f"unknown anomaly {anomaly_id!r}")
        if record.status == AnomalyStatus.REPAIRED:
            raise HTTPException(409, "anomaly already repaired in this run")
        if body.verdict not in ("Confirm", "Dismiss"):
            raise HTTPException(400, f"invalid verdict {body.verdict!r}")
        if body.period_override is not None:
            lo, hi = body.period_override
            if lo > hi or (lo <= record.t_index <= hi):
                raise HTTPException(400, "period override must exclude the flagged day")
        decision = CurationDecision(
            anomaly_id=anomaly_id, verdict=body.verdict,
            period_override=body.period_override,
            method_override=body.method_override,
            manual_value=body.manual_value,
            note=body.note, actor=body.actor)
        with session.lock:
            append_decision(session.config.decision_log, decision)
        status = session.effective_status(record, session.decisions())
        out = _record_json(record, status)
        out["run_id"] = session.run_id
        return out

    @app.post("/api/pipeline/rerun", dependencies=[Depends(auth)])
    def rerun():
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "a rerun is already in progress")
        session.rerun_state = "running"

        def work():
            try:
                rerun_repair(session.out_dir, session.config)
                session.reload()
                session.rerun_state = "done"
            except Exception as exc:
                session.rerun_error = str(exc)
                session.rerun_state = "failed"
            finally:
                session.lock.release()

        thread = threading.Thread(target=work, daemon=True)
        thread.start()
        return JSONResponse(status_code=202, content={
            "state": "running",
            "run_id": session.run_id,
            "progress": "/api/pipeline/rerun/status",
        })

    @app.get("/api/pipeline/rerun/status", dependencies=[Depends(auth)])
    def rerun_status():
        return {
            "state": session.rerun_state,
            "run_id": session.run_id,
            "error": session.rerun_error or None,
        }

    static_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if static_dir.exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
