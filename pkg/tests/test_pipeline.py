import datetime as dt
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from countcure.detect import AnomalyKind, AnomalyStatus, load_anomalies
from countcure.errors import ConfigError
from countcure.ingest import read_canonical
from countcure.model import Level, Metric, SeriesKey, SourceId
from countcure.pipeline import (
    CurationDecision,
    append_decision,
    load_config,
    read_decisions,
    rerun_repair,
    run_pipeline,
)

FIXTURES = Path(__file__).parent / "fixtures"


def write_config(tmp_path, level="state", sources=None, **overrides) -> Path:
    if sources is None:
        sources = {
            "NYT": {"infection": str(FIXTURES / "nyt_states.csv"),
                    "death": str(FIXTURES / "nyt_states.csv")},
        }
    raw = {
        "level": level,
        "metrics": ["infection", "death"],
        "sources": sources,
        "offline": True,
        "out_dir": str(tmp_path / "out"),
        "decision_log": str(tmp_path / "decisions.jsonl"),
        "detection": {"window_w": 14, "sc2": 5.0, "min_count": 30, "alpha_cp": 0.01},
        "repair": {"method": "clep", "window": 21},
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def county_sources():
    return {
        "NYT": {"infection": str(FIXTURES / "nyt_counties.csv"),
                "death": str(FIXTURES / "nyt_counties.csv")},
        "JHU": {"infection": str(FIXTURES / "jhu_confirmed_counties.csv"),
                "death": str(FIXTURES / "jhu_deaths_counties.csv")},
        "USAFacts": {"infection": str(FIXTURES / "usafacts_confirmed_counties.csv"),
                     "death": str(FIXTURES / "usafacts_deaths_counties.csv")},
    }


def out_bytes(out_dir: Path) -> dict[str, bytes]:
    return {str(p.relative_to(out_dir)): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()}


class TestDecisionLog:
    def test_append_then_read(self, tmp_path):
        log = tmp_path / "log.jsonl"
        decision = CurationDecision(anomaly_id="ab12cd34ef56ab12", verdict="Confirm")
        append_decision(log, decision)
        effective, corrupt = read_decisions(log)
        assert effective["ab12cd34ef56ab12"].verdict == "Confirm"
        assert corrupt == []

    def test_latest_wins(self, tmp_path):
        log = tmp_path / "log.jsonl"
        append_decision(log, CurationDecision(
            anomaly_id="ab12cd34ef56ab12", verdict="Dismiss",
            decided_at="2020-08-01T00:00:00+00:00"))
        append_decision(log, CurationDecision(
            anomaly_id="ab12cd34ef56ab12", verdict="Confirm",
            decided_at="2020-08-02T00:00:00+00:00"))
        effective, _ = read_decisions(log)
        assert effective["ab12cd34ef56ab12"].verdict == "Confirm"

    def test_corrupt_line_skipped_and_reported(self, tmp_path):
        log = tmp_path / "log.jsonl"
        append_decision(log, CurationDecision(anomaly_id="ab12cd34ef56ab12",
                                              verdict="Confirm"))
        with open(log, "a") as fh:
            fh.write("{not json\n")
        append_decision(log, CurationDecision(anomaly_id="ff12cd34ef56ab12",
                                              verdict="Dismiss"))
        effective, corrupt = read_decisions(log)
        assert len(effective) == 2
        assert corrupt == [2]

    def test_effective_map_size(self, tmp_path):
        log = tmp_path / "log.jsonl"
        rng = np.random.default_rng(0)
        ids = [f"{i:016x}" for i in range(137)]
        for k in range(1000):
            anomaly = ids[int(rng.integers(0, len(ids)))]
            verdict = "Confirm" if rng.random() < 0.5 else "Dismiss"
            append_decision(log, CurationDecision(
                anomaly_id=anomaly, verdict=verdict,
                decided_at=f"2020-08-01T{k // 3600:02d}:{(k // 60) % 60:02d}:{k % 60:02d}+00:00"))
        effective, _ = read_decisions(log)
        assert set(effective) <= set(ids)
        assert len(effective) == len({line.split('"anomaly_id": "')[1][:16]
                                      for line in log.read_text().splitlines()})

    def test_bad_verdict_rejected(self):
        with pytest.raises(ConfigError):
            CurationDecision(anomaly_id="ab12cd34ef56ab12", verdict="Maybe")


class TestConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_invalid_level(self, tmp_path):
        path = write_config(tmp_path, level="galaxy")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_atlantic_county_rejected(self, tmp_path):
        path = write_config(tmp_path, level="county", sources={
            "Atlantic": {"infection": str(FIXTURES / "atlantic_states.csv")}})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_env_endpoint_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path)
        monkeypatch.setenv("COUNTCURE_ENDPOINT_NYT_INFECTION", "/elsewhere.csv")
        config = load_config(path)
        assert config.endpoints[SourceId.NYT][Metric.INFECTION] == "/elsewhere.csv"

    def test_env_cache_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path)
        monkeypatch.setenv("COUNTCURE_CACHE_DIR", str(tmp_path / "cache"))
        config = load_config(path)
        assert config.cache_dir == tmp_path / "cache"


class TestRunPipeline:
    def test_empty_decision_log_only_od_repairs(self, tmp_path):
        config = load_config(write_config(tmp_path, level="county",
                                          sources=county_sources()))
        run_pipeline(config)
        out = config.out_dir
        # USAFacts Westchester deaths carries a planted OD violation
        slug = "USAFacts_death_county"
        canonical = read_canonical(out / "canonical" / f"{slug}.csv",
                                   SourceId.USAFACTS, Metric.DEATH)
        repaired = read_canonical(out / "repaired" / f"{slug}.csv",
                                  SourceId.USAFACTS, Metric.DEATH)
        west = SeriesKey(Level.COUNTY, fips="36119", county_name="Westchester")
        assert np.any(np.diff(canonical[west].values) < 0)
        assert np.all(np.diff(repaired[west].values) >= 0)
        # every changed cell is an OD clamp (no confirmed point repairs)
        provenance = json.loads((out / "repaired" / f"{slug}.provenance.json").read_text())
        assert provenance["cells"]
        for cell in provenance["cells"]:
            assert cell["after"] <= cell["before"]
        # panels without violations are unchanged
        clean = json.loads((out / "repaired" / "NYT_infection_county.provenance.json")
                           .read_text())
        grimes_untouched = [c for c in clean["cells"]]
        assert grimes_untouched == []  # spikes detected but not confirmed

    def test_provenance_equals_diff(self, tmp_path):
        config = load_config(write_config(tmp_path, level="county",
                                          sources=county_sources()))
        run_pipeline(config)
        out = config.out_dir
        for slug_path in sorted((out / "repaired").glob("*.provenance.json")):
            slug = slug_path.name.replace(".provenance.json", "")
            source, metric, _ = slug.split("_")
            canonical = read_canonical(out / "canonical" / f"{slug}.csv",
                                       SourceId(source), Metric(metric))
            repaired = read_canonical(out / "repaired" / f"{slug}.csv",
                                      SourceId(source), Metric(metric))
            cells = json.loads(slug_path.read_text())["cells"]
            diff = []
            for key in sorted(canonical.series):
                a, b = canonical[key].values, repaired[key].values
                for i in np.nonzero(a != b)[0]:
                    diff.append((key.ident,
                                 (canonical.start_date + dt.timedelta(days=int(i))).isoformat(),
                                 float(a[i]), float(b[i])))
            assert [(c["id"], c["date"], c["before"], c["after"]) for c in cells] == diff

    def test_determinism_byte_identical(self, tmp_path):
        config_path = write_config(tmp_path)
        config = load_config(config_path)
        run_pipeline(config)
        first = out_bytes(config.out_dir)
        run_pipeline(load_config(config_path))
        second = out_bytes(config.out_dir)
        assert first == second

    def test_confirmed_spike_repaired_with_conservation(self, tmp_path):
        config_path = write_config(tmp_path)
        config = load_config(config_path)
        run_pipeline(config)
        out = config.out_dir
        slug = "NYT_death_state"
        records = load_anomalies(out / "anomalies" / f"{slug}.jsonl")
        spikes = [r for r in records if r.kind == AnomalyKind.POINT_ANOMALY
                  and r.key.state_name == "New Jersey"]
        assert len(spikes) == 1
        assert spikes[0].date == dt.date(2020, 6, 25)
        assert spikes[0].status == AnomalyStatus.DETECTED
        append_decision(config.decision_log, CurationDecision(
            anomaly_id=spikes[0].id, verdict="Confirm", note="probable deaths backfill"))
        run_pipeline(load_config(config_path))
        repaired = read_canonical(out / "repaired" / f"{slug}.csv",
                                  SourceId.NYT, Metric.DEATH)
        canonical = read_canonical(out / "canonical" / f"{slug}.csv",
                                   SourceId.NYT, Metric.DEATH)
        nj = SeriesKey(Level.STATE, state_name="New Jersey")
        assert np.all(np.diff(repaired[nj].values) >= 0)
        assert repaired[nj].values[-1] == pytest.approx(canonical[nj].values[-1], rel=1e-9)
        spike_idx = (dt.date(2020, 6, 25) - repaired.start_date).days
        z_before = np.diff(np.r_[0.0, canonical[nj].values])
        z_after = np.diff(np.r_[0.0, repaired[nj].values])
        assert z_after[spike_idx] < z_before[spike_idx] / 5  # spike absorbed
        records = load_anomalies(out / "anomalies" / f"{slug}.jsonl")
        status = {r.id: r.status for r in records}
        assert status[spikes[0].id] == AnomalyStatus.REPAIRED

    def test_dismissed_never_alters_data(self, tmp_path):
        config_path = write_config(tmp_path)
        config = load_config(config_path)
        run_pipeline(config)
        out = config.out_dir
        slug = "NYT_death_state"
        records = load_anomalies(out / "anomalies" / f"{slug}.jsonl")
        spike = [r for r in records if r.kind == AnomalyKind.POINT_ANOMALY][0]
        baseline = (out / "repaired" / f"{slug}.csv").read_bytes()
        append_decision(config.decision_log, CurationDecision(
            anomaly_id=spike.id, verdict="Dismiss"))
        run_pipeline(load_config(config_path))
        assert (out / "repaired" / f"{slug}.csv").read_bytes() == baseline
        records = load_anomalies(out / "anomalies" / f"{slug}.jsonl")
        assert {r.id: r.status for r in records}[spike.id] == AnomalyStatus.DISMISSED

    def test_rerun_repair_matches_full_run(self, tmp_path):
        config_path = write_config(tmp_path)
        config = load_config(config_path)
        run_pipeline(config)
        out = config.out_dir
        records = load_anomalies(out / "anomalies" / "NYT_death_state.jsonl")
        spike = [r for r in records if r.kind == AnomalyKind.POINT_ANOMALY][0]
        append_decision(config.decision_log, CurationDecision(
            anomaly_id=spike.id, verdict="Confirm"))
        rerun_report = rerun_repair(out, load_config(config_path))
        rerun_files = out_bytes(out)
        full_report = run_pipeline(load_config(config_path))
        full_files = out_bytes(out)
        # every data artifact matches; the run report differs only in that a
        # rerun re-executes (and therefore reports) just the repair stage
        rerun_files.pop("run_report.json")
        full_files.pop("run_report.json")
        assert rerun_files == full_files
        assert rerun_report.run_id == full_report.run_id

    def test_run_id_changes_with_decisions(self, tmp_path):
        config_path = write_config(tmp_path)
        config = load_config(config_path)
        report1 = run_pipeline(config)
        records = load_anomalies(config.out_dir / "anomalies" / "NYT_death_state.jsonl")
        append_decision(config.decision_log, CurationDecision(
            anomaly_id=records[0].id, verdict="Dismiss"))
        report2 = run_pipeline(load_config(config_path))
        assert report1.run_id != report2.run_id

    def test_stage_failure_isolated(self, tmp_path):
        sources = {
            "NYT": {"infection": str(FIXTURES / "nyt_states.csv"),
                    "death": str(FIXTURES / "nyt_states.csv")},
            "JHU": {"infection": str(tmp_path / "missing.csv"),
                    "death": str(FIXTURES / "jhu_deaths_states.csv")},
        }
        config = load_config(write_config(tmp_path, sources=sources))
        report = run_pipeline(config)
        assert any("JHU_infection" in f for f in report.failures)
        assert (config.out_dir / "canonical" / "NYT_infection_state.csv").exists()
        assert (config.out_dir / "compare" / "death_state.csv").exists()


class TestCli:
    def run_cli(self, *argv):
        return subprocess.run([sys.executable, "-m", "countcure.cli", *argv],
                              capture_output=True, text=True, cwd=str(Path(__file__).parent.parent))

    def test_run_exit_zero(self, tmp_path):
        config_path = write_config(tmp_path)
        proc = self.run_cli("run", "--config", str(config_path))
        assert proc.returncode == 0, proc.stderr
        assert "run_id" in proc.stdout
        assert "warning: PointAnomaly" in proc.stderr

    def test_config_error_exit_three(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        proc = self.run_cli("run", "--config", str(bad))
        assert proc.returncode == 3

    def test_stage_failure_exit_two(self, tmp_path):
        sources = {"NYT": {"infection": str(tmp_path / "missing.csv")}}
        config_path = write_config(tmp_path, sources=sources,
                                   metrics=["infection"])
        proc = self.run_cli("run", "--config", str(config_path))
        assert proc.returncode == 2

    def test_decide_and_detect(self, tmp_path):
        config_path = write_config(tmp_path)
        proc = self.run_cli("detect", "--config", str(config_path), "--metric", "death",
                            "--source", "NYT")
        assert proc.returncode == 0
        lines = [l for l in proc.stdout.splitlines() if "PointAnomaly" in l]
        assert lines
        anomaly_id = lines[0].split()[0]
        proc = self.run_cli("decide", "--config", str(config_path),
                            "--id", anomaly_id, "--verdict", "Confirm",
                            "--note", "batch release")
        assert proc.returncode == 0
        effective, _ = read_decisions(tmp_path / "decisions.jsonl")
        assert anomaly_id in effective

    def test_compare_and_seasonality_commands(self, tmp_path):
        sources = {
            "NYT": {"infection": str(FIXTURES / "nyt_states.csv"),
                    "death": str(FIXTURES / "nyt_states.csv")},
            "JHU": {"infection": str(FIXTURES / "jhu_confirmed_states.csv"),
                    "death": str(FIXTURES / "jhu_deaths_states.csv")},
        }
        config_path = write_config(tmp_path, sources=sources)
        proc = self.run_cli("compare", "--config", str(config_path), "--top", "3")
        assert proc.returncode == 0
        assert "JHU vs NYT" in proc.stdout
        proc = self.run_cli("seasonality", "--config", str(config_path),
                            "--metric", "death", "--source", "NYT")
        assert proc.returncode == 0
        assert "ensemble=YES" in proc.stdout


class TestCountyFlow:
    def test_grimes_two_spikes_confirmed_and_repaired(self, tmp_path):
        config_path = write_config(tmp_path, level="county", sources=county_sources())
        config = load_config(config_path)
        run_pipeline(config)
        out = config.out_dir
        slug = "NYT_infection_county"
        records = load_anomalies(out / "anomalies" / f"{slug}.jsonl")
        grimes = [r for r in records if r.key.fips == "48185"
                  and r.kind == AnomalyKind.POINT_ANOMALY]
        assert len(grimes) == 2
        assert sorted(r.date.isoformat() for r in grimes) == ["2020-05-31", "2020-07-08"]
        for rec in grimes:
            append_decision(config.decision_log, CurationDecision(
                anomaly_id=rec.id, verdict="Confirm", note="prison-system batch"))
        run_pipeline(load_config(config_path))
        canonical = read_canonical(out / "canonical" / f"{slug}.csv",
                                   SourceId.NYT, Metric.INFECTION)
        repaired = read_canonical(out / "repaired" / f"{slug}.csv",
                                  SourceId.NYT, Metric.INFECTION)
        key = SeriesKey(Level.COUNTY, fips="48185", county_name="Grimes")
        y0, y1 = canonical[key].values, repaired[key].values
        assert y1[-1] == pytest.approx(y0[-1], rel=1e-9)  # final value unchanged
        assert np.all(np.diff(y1) >= 0)
        for rec in grimes:  # both spike days flattened
            i = (rec.date - canonical.start_date).days
            assert y1[i] - y1[i - 1] < (y0[i] - y0[i - 1]) / 3
        statuses = {r.id: r.status for r in
                    load_anomalies(out / "anomalies" / f"{slug}.jsonl")}
        assert all(statuses[r.id] == AnomalyStatus.REPAIRED for r in grimes)

    def test_weekly_max_profile_on_national_fixture(self):
        import collections
        from countcure.ingest import fetch_source, parse_source
        from countcure.model import to_increments
        from countcure.seasonality import weekly_max_profile
        snapshot = fetch_source(SourceId.NYT, str(FIXTURES / "nyt_national.csv"))
        panel, _ = parse_source(snapshot, Metric.INFECTION)
        z = to_increments(panel[SeriesKey(Level.NATIONAL)])
        profile = weekly_max_profile(z)
        pre_april = collections.Counter(
            weekday for _, week_start, weekday in profile.rows
            if week_start < dt.date(2020, 4, 1))
        assert pre_april.most_common(1)[0][0] == 6  # Saturday

    def test_model_based_od_repair_flag(self, tmp_path):
        config_path = write_config(
            tmp_path, level="county",
            sources={"USAFacts": {"death": str(FIXTURES / "usafacts_deaths_counties.csv")}},
            metrics=["death"],
            repair={"method": "clep", "window": 21, "od_method": "model"})
        config = load_config(config_path)
        run_pipeline(config)
        repaired = read_canonical(
            config.out_dir / "repaired" / "USAFacts_death_county.csv",
            SourceId.USAFACTS, Metric.DEATH)
        canonical = read_canonical(
            config.out_dir / "canonical" / "USAFacts_death_county.csv",
            SourceId.USAFACTS, Metric.DEATH)
        west = SeriesKey(Level.COUNTY, fips="36119", county_name="Westchester")
        assert np.all(np.diff(repaired[west].values) >= -1e-9)
        assert repaired[west].values[-1] == pytest.approx(
            canonical[west].values[-1], rel=1e-9)
