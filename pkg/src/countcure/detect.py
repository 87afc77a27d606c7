"""Anomaly detection for cumulative count series.

Three detectors: order-dependency violations (a cumulative series must be
nondecreasing), speed-constraint point anomalies (a one-day jump large
relative to the average growth of windows covering it), and a single
change point in the increment trend (piecewise-linear predictor on the
link scale, profile search over integer break candidates).

Change-point significance is assessed with a sup-score statistic over all
candidate breaks, calibrated by a Gaussian-multiplier bootstrap of the
score process (the selection of the break by the same data makes a naive
single-candidate test anti-conservative).  The bootstrap is seeded from
the series content, so identical inputs always give identical output.
"""

from __future__ import annotations

import datetime as dt
import enum
import hashlib
import json
import math
import os
from pathlib import Path
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, DomainError, InsufficientDataError
from .model import CumulativeSeries, IncrementSeries, Metric, SeriesKey, SourceId
from .numerics import irls_glm, ols_fit


class AnomalyKind(str, enum.Enum):
    OD_VIOLATION = "OdViolation"
    POINT_ANOMALY = "PointAnomaly"
    CHANGE_POINT = "ChangePoint"


class AnomalyStatus(str, enum.Enum):
    DETECTED = "Detected"
    CONFIRMED = "Confirmed"
    DISMISSED = "Dismissed"
    REPAIRED = "Repaired"


_LEGAL_TRANSITIONS = {
    AnomalyStatus.DETECTED: {AnomalyStatus.CONFIRMED, AnomalyStatus.DISMISSED},
    AnomalyStatus.CONFIRMED: {AnomalyStatus.REPAIRED},
    AnomalyStatus.DISMISSED: set(),
    AnomalyStatus.REPAIRED: set(),
}


def anomaly_id(key: SeriesKey, metric: Metric, source: SourceId,
               kind: AnomalyKind, date: dt.date) -> str:
    """Stable id: identical inputs yield identical ids across runs."""
    text = f"{key.level.value}|{key.ident}|{metric.value}|{source.value}|{kind.value}|{date.isoformat()}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AnomalyRecord:
    id: str
    key: SeriesKey
    metric: Metric
    source: SourceId
    kind: AnomalyKind
    t_index: int
    date: dt.date
    magnitude: float
    detail: dict = field(default_factory=dict)
    status: AnomalyStatus = AnomalyStatus.DETECTED

    def with_status(self, status: AnomalyStatus) -> "AnomalyRecord":
        if status == self.status:
            return self
        if status not in _LEGAL_TRANSITIONS[self.status]:
            raise DomainError(f"illegal status transition {self.status.value} -> {status.value}")
        return replace(self, status=status)

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id,
            "level": self.key.level.value,
            "fips": self.key.fips,
            "county": self.key.county_name,
            "state": self.key.state_name,
            "metric": self.metric.value,
            "source": self.source.value,
            "kind": self.kind.value,
            "t_index": self.t_index,
            "date": self.date.isoformat(),
            "magnitude": self.magnitude,
            "detail": self.detail,
            "status": self.status.value,
        })

    @staticmethod
    def from_json(line: str) -> "AnomalyRecord":
        obj = json.loads(line)
        from .model import Level
        level = Level(obj["level"])
        if level == Level.COUNTY:
            key = SeriesKey(level, fips=obj["fips"], county_name=obj["county"],
                            state_name=obj["state"])
        elif level == Level.STATE:
            key = SeriesKey(level, state_name=obj["state"])
        else:
            key = SeriesKey(level)
        return AnomalyRecord(
            id=obj["id"], key=key, metric=Metric(obj["metric"]),
            source=SourceId(obj["source"]), kind=AnomalyKind(obj["kind"]),
            t_index=obj["t_index"], date=dt.date.fromisoformat(obj["date"]),
            magnitude=obj["magnitude"], detail=obj.get("detail", {}),
            status=AnomalyStatus(obj["status"]),
        )


@dataclass(frozen=True)
class SpeedConstraintConfig:
    """Window span and thresholds for the jump detector."""

    window_w: int = 14
    sc1: float = math.inf
    sc2: float = 5.0
    min_count: float = 30.0

    def __post_init__(self):
        if self.window_w < 2:
            raise DomainError("window_w must be at least 2")
        if self.sc2 <= 1:
            raise DomainError("sc2 must exceed 1")
        if self.min_count < 0:
            raise DomainError("min_count must be nonnegative")


def detect_od_violations(y: CumulativeSeries) -> list[AnomalyRecord]:
    """One record per day whose cumulative value drops below the previous day."""
    values = y.values
    if values.size < 2:
        return []
    out = []
    drops = np.nonzero(values[1:] < values[:-1])[0]
    for i in drops:
        t = int(i) + 2  # 1-based day of the drop
        magnitude = float(values[t - 1] - values[t - 2])
        out.append(AnomalyRecord(
            id=anomaly_id(y.key, y.metric, y.source, AnomalyKind.OD_VIOLATION, y.date_at(t)),
            key=y.key, metric=y.metric, source=y.source,
            kind=AnomalyKind.OD_VIOLATION, t_index=t, date=y.date_at(t),
            magnitude=magnitude,
            detail={"previous": float(values[t - 2]), "value": float(values[t - 1])},
        ))
    return out


def detect_point_anomalies(y: CumulativeSeries,
                           cfg: SpeedConstraintConfig | None = None) -> list[AnomalyRecord]:
    """Days whose one-day jump outruns the growth of windows covering them.

    A day t is flagged when, over any window [t1, t1+w] containing it, the
    window average speed reaches SC1, or the jump-to-speed ratio reaches
    SC2 with the jump itself at least min_count.  A zero-speed window with
    a positive jump counts as infinite ratio.  Each day is reported once,
    with its most extreme covering window.
    """
    cfg = cfg or SpeedConstraintConfig()
    values = y.values
    t_len = values.size
    w = cfg.window_w
    if t_len < w + 1:
        raise InsufficientDataError(f"need at least window_w+1 = {w + 1} days, have {t_len}")
    out = []
    for t in range(2, t_len + 1):
        jump = float(values[t - 1] - values[t - 2])
        best_ratio = -math.inf
        best = None
        speed_cap_hit = False
        for t1 in range(max(1, t - w), t):
            t2 = t1 + w
            if t2 > t_len:
                break
            speed = float(values[t2 - 1] - values[t1 - 1]) / w
            if speed >= cfg.sc1:
                speed_cap_hit = True
            if speed > 0:
                ratio = jump / speed
            elif jump > 0:
                ratio = math.inf
            else:
                ratio = 0.0
            if ratio > best_ratio:
                best_ratio = ratio
                best = (t1, t2, speed)
        jump_flag = best_ratio >= cfg.sc2 and jump >= cfg.min_count
        if not (jump_flag or speed_cap_hit):
            continue
        t1, t2, speed = best  # type: ignore[misc]
        out.append(AnomalyRecord(
            id=anomaly_id(y.key, y.metric, y.source, AnomalyKind.POINT_ANOMALY, y.date_at(t)),
            key=y.key, metric=y.metric, source=y.source,
            kind=AnomalyKind.POINT_ANOMALY, t_index=t, date=y.date_at(t),
            magnitude=jump,
            detail={
                "window": [t1, t2],
                "window_speed": speed,
                "ratio": None if math.isinf(best_ratio) else best_ratio,
                "sc2": cfg.sc2,
            },
        ))
    return out


@dataclass(frozen=True)
class ChangePointFit:
    phi: float
    beta0: float
    beta1: float
    beta2: float
    se_beta2: float
    wald_p: float  # search-adjusted significance of the difference-in-slopes
    profile: list[tuple[int, float]]


CP_MARGIN = 5


def _seed_from(z, key_text: str | None) -> list[int]:
    if key_text is None:
        digest = hashlib.sha256(np.ascontiguousarray(z).tobytes()).digest()
    else:
        digest = hashlib.sha256(key_text.encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "big") for i in range(0, 16, 4)]


def _sup_score_p(t: np.ndarray, y: np.ndarray, candidates: np.ndarray,
                 link: str, n_boot: int, seed: list[int]) -> tuple[float, float]:
    """Max standardized score for adding a break regressor, bootstrap p."""
    n = y.size
    x0 = np.column_stack([np.ones(n), t])
    if link == "log_quasipoisson":
        fit = irls_glm(x0, y, "quasipoisson_log")
        mu = fit.fitted
        weights = mu.copy()
        dispersion = fit.dispersion
    else:
        fit = ols_fit(x0, y)
        mu = fit.fitted
        weights = np.ones(n)
        dispersion = fit.dispersion
    resid = y - mu
    if not math.isfinite(dispersion) or dispersion <= 1e-12:
        return 0.0, 1.0  # the null model already fits perfectly
    a = np.maximum(0.0, t[:, None] - candidates[None, :])  # n x C
    wx0 = x0 * weights[:, None]
    gram = x0.T @ wx0
    coef = np.linalg.solve(gram, wx0.T @ a)
    a_tilde = a - x0 @ coef
    info = np.einsum("ij,ij->j", a_tilde * weights[:, None], a_tilde)
    ok = info > 1e-12
    if not np.any(ok):
        return 0.0, 1.0
    scores = resid @ a_tilde
    stat = np.max(scores[ok] ** 2 / (dispersion * info[ok]))
    m = (a_tilde * np.sqrt(weights)[:, None])[:, ok] / np.sqrt(info[ok])[None, :]
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((n, n_boot))
    boot = np.max((m.T @ draws) ** 2, axis=0)
    p = (1.0 + float(np.sum(boot >= stat))) / (n_boot + 1.0)
    return float(stat), p


def _segmented_fit(t: np.ndarray, y: np.ndarray, phi: float, link: str):
    design = np.column_stack([np.ones_like(t), t, np.maximum(0.0, t - phi)])
    if link == "log_quasipoisson":
        return irls_glm(design, y, "quasipoisson_log")
    return ols_fit(design, y)


def detect_change_points(z, link: str = "log_quasipoisson", alpha_cp: float = 0.01,
                         n_boot: int = 500, seed: int = 2020) -> ChangePointFit | None:
    """Profile search for one break in the increment trend.

    Returns the fitted break only when the search-adjusted p-value clears
    alpha_cp; otherwise None.  Raises if no break candidate admits a
    converged fit.
    """
    if link not in ("log_quasipoisson", "identity_gaussian"):
        raise DomainError(f"unknown link {link!r}")
    if isinstance(z, IncrementSeries):
        values = np.asarray(z.values, dtype=float)
        key_text = f"{z.key.level.value}|{z.key.ident}|{z.metric.value}|{z.source.value}|{seed}"
    else:
        values = np.asarray(z, dtype=float)
        key_text = None
    t_len = values.size
    if t_len < 4 * CP_MARGIN:
        raise InsufficientDataError(f"need at least {4 * CP_MARGIN} points, have {t_len}")
    if link == "log_quasipoisson":
        if np.any(values < 0):
            raise DomainError("negative increments: repair order violations first")
        if not np.any(values > 0):
            return None
    t = np.arange(1.0, t_len + 1.0)
    candidates = np.arange(CP_MARGIN + 1, t_len - CP_MARGIN + 1, dtype=float)
    boot_seed = _seed_from(values, key_text)
    if key_text is None:
        boot_seed = boot_seed + [seed]
    _, p_value = _sup_score_p(t, values, candidates, link, n_boot, boot_seed)
    if p_value >= alpha_cp:
        return None

    profile: list[tuple[int, float]] = []
    best_phi = None
    best_dev = math.inf
    best_fit = None
    for phi in candidates:
        try:
            fit = _segmented_fit(t, values, phi, link)
        except (ConvergenceError, DomainError):
            profile.append((int(phi), math.inf))
            continue
        profile.append((int(phi), fit.deviance))
        if fit.deviance < best_dev - 1e-12:
            best_dev = fit.deviance
            best_phi = phi
            best_fit = fit
    if best_fit is None:
        raise ConvergenceError("no break candidate admitted a converged fit")
    se = float(best_fit.se()[2])
    return ChangePointFit(
        phi=float(best_phi),
        beta0=float(best_fit.coefficients[0]),
        beta1=float(best_fit.coefficients[1]),
        beta2=float(best_fit.coefficients[2]),
        se_beta2=se,
        wald_p=p_value,
        profile=profile,
    )


def change_point_record(z: IncrementSeries, fit: ChangePointFit) -> AnomalyRecord:
    t = int(round(fit.phi))
    date = z.date_at(t)
    return AnomalyRecord(
        id=anomaly_id(z.key, z.metric, z.source, AnomalyKind.CHANGE_POINT, date),
        key=z.key, metric=z.metric, source=z.source,
        kind=AnomalyKind.CHANGE_POINT, t_index=t, date=date,
        magnitude=fit.beta2,
        detail={
            "beta0": fit.beta0, "beta1": fit.beta1, "beta2": fit.beta2,
            "se_beta2": fit.se_beta2, "p": fit.wald_p,
        },
    )


def export_anomalies(records: list[AnomalyRecord], path) -> None:
    """JSON-lines export with stable field order, one record per line."""
    ordered = sorted(records, key=lambda r: (r.date, r.key, r.kind.value))
    out = Path(path)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text("".join(rec.to_json() + "\n" for rec in ordered), encoding="utf-8")
    os.replace(tmp, out)


def load_anomalies(path) -> list[AnomalyRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(AnomalyRecord.from_json(line))
    return out
