"""Seven-day-cycle testing and removal for daily increment series.

Four detectors are provided: a Ljung-Box-style statistic on the seasonal
autocorrelations of the differenced series (positive lags only), the
Friedman rank test over calendar-week blocks, the Kruskal-Wallis rank
test across weekday groups, and Welch's heteroscedastic one-way ANOVA.
An ensemble verdict takes the majority of whichever tests could run.

Weeks run Sunday through Saturday; leading and trailing partial weeks are
dropped from block-based computations.  Degenerate inputs (all-constant
weekday groups) get boundary p-values with an explicit flag instead of
NaN so that all-zero county series flow through the pipeline.
"""

from __future__ import annotations

import datetime as dt
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError
from .model import IncrementSeries, Metric, SeriesKey
from .numerics import chisq_sf, f_sf, midranks, ols_fit

WEEKDAY_NAMES = ("Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday")


def _sunday_anchor(date: dt.date) -> int:
    """Weekday index with Sunday = 0."""
    return (date.weekday() + 1) % 7


def _series_values(z, anchor_weekday: int) -> tuple[np.ndarray, int]:
    if isinstance(z, IncrementSeries):
        return np.asarray(z.values, dtype=float), _sunday_anchor(z.start_date)
    arr = np.asarray(z, dtype=float)
    if arr.ndim != 1:
        raise DomainError("increment input must be one-dimensional")
    return arr, anchor_weekday % 7


def _week_blocks(values: np.ndarray, anchor: int, period: int = 7) -> np.ndarray:
    """Rows are complete anchor-aligned weeks."""
    lead = (period - anchor) % period
    usable = values[lead:]
    b = usable.size // period
    return usable[:b * period].reshape(b, period)


def _weekday_groups(values: np.ndarray, anchor: int, period: int = 7) -> list[np.ndarray]:
    idx = (np.arange(values.size) + anchor) % period
    return [values[idx == j] for j in range(period)]


@dataclass(frozen=True)
class TestResult:
    test: str
    statistic: float
    df: tuple[float, ...]
    p_value: float
    significant: bool
    degenerate: bool = False


@dataclass(frozen=True)
class SeasonalityReport:
    key: SeriesKey | None
    metric: Metric | None
    results: dict[str, TestResult]
    skipped: dict[str, str]
    ensemble_verdict: bool
    alpha: float
    n_weeks_used: int


def friedman_test(z, period: int = 7, anchor_weekday: int = 0) -> tuple[float, float, float]:
    """Friedman rank test over complete weeks; returns (statistic, df, p)."""
    values, anchor = _series_values(z, anchor_weekday)
    blocks = _week_blocks(values, anchor, period)
    b, k = blocks.shape
    if b < 3:
        raise InsufficientDataError(f"need at least 3 complete weeks, have {b}")
    ranks = np.vstack([midranks(row) for row in blocks])
    rank_sums = ranks.sum(axis=0)
    stat = 12.0 / (b * k * (k + 1)) * float(rank_sums @ rank_sums) - 3.0 * b * (k + 1)
    ties = 0.0
    for row in blocks:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts.astype(float) ** 3 - counts))
    correction = 1.0 - ties / (b * k * (k * k - 1))
    if correction <= 0.0:
        return 0.0, float(k - 1), 1.0
    stat /= correction
    return stat, float(k - 1), chisq_sf(stat, k - 1)


def kruskal_wallis_test(z, period: int = 7, anchor_weekday: int = 0) -> tuple[float, float, float]:
    """Kruskal-Wallis H across weekday groups; returns (statistic, df, p)."""
    values, anchor = _series_values(z, anchor_weekday)
    groups = _weekday_groups(values, anchor, period)
    if any(g.size < 2 for g in groups):
        raise InsufficientDataError("every weekday group needs at least 2 observations")
    n = values.size
    ranks = midranks(values)
    idx = (np.arange(n) + anchor) % period
    h = 0.0
    for j in range(period):
        rj = ranks[idx == j]
        h += float(rj.sum()) ** 2 / rj.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(values, return_counts=True)
    ties = float(np.sum(counts.astype(float) ** 3 - counts))
    correction = 1.0 - ties / (float(n) ** 3 - n)
    if correction <= 0.0:
        return 0.0, float(period - 1), 1.0
    h /= correction
    return h, float(period - 1), chisq_sf(h, period - 1)


def welch_anova_test(z, period: int = 7,
                     anchor_weekday: int = 0) -> tuple[float, float, float, float, bool]:
    """Welch's heteroscedastic one-way ANOVA across weekday groups.

    Returns (statistic, df1, df2, p, degenerate).  Zero-variance groups
    force a boundary p (0 when group means differ, 1 when they do not).
    """
    values, anchor = _series_values(z, anchor_weekday)
    groups = _weekday_groups(values, anchor, period)
    if any(g.size < 2 for g in groups):
        raise InsufficientDataError("every weekday group needs at least 2 observations")
    k = len(groups)
    means = np.array([g.mean() for g in groups])
    variances = np.array([g.var(ddof=1) for g in groups])
    sizes = np.array([g.size for g in groups], dtype=float)
    distinct_means = not np.allclose(means, means[0], rtol=0.0, atol=1e-12)
    if np.any(variances == 0.0):
        if distinct_means:
            return float("inf"), float(k - 1), float("nan"), 0.0, True
        return 0.0, float(k - 1), float("nan"), 1.0, True
    w = sizes / variances
    w_total = w.sum()
    grand = float(w @ means) / w_total
    a = float(w @ (means - grand) ** 2) / (k - 1)
    tail = float(np.sum((1.0 - w / w_total) ** 2 / (sizes - 1.0)))
    b = 1.0 + 2.0 * (k - 2) / (k * k - 1.0) * tail
    stat = a / b
    df1 = float(k - 1)
    df2 = (k * k - 1.0) / (3.0 * tail)
    return stat, df1, df2, f_sf(stat, df1, df2), False


def qs_test(z, period: int = 7, anchor_weekday: int = 0) -> tuple[float, float, float]:
    """Seasonal-lag autocorrelation test on the differenced series.

    First-differences the increments, takes the sample autocorrelations at
    lags ``period`` and ``2*period``, truncates negatives to zero (only
    positive seasonal correlation counts as a cycle), and scales them
    Ljung-Box style into a 2-df chi-square statistic.
    """
    values, _ = _series_values(z, anchor_weekday)
    if values.size < 3 * period + 1:
        raise InsufficientDataError(
            f"need at least {3 * period + 1} observations, have {values.size}")
    w = np.diff(values)
    n = w.size
    centered = w - w.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        return 0.0, 2.0, 1.0
    stat = 0.0
    for lag in (period, 2 * period):
        rho = float(centered[lag:] @ centered[:-lag]) / denom
        stat += max(0.0, rho) ** 2 / (n - lag)
    stat *= n * (n + 2.0)
    return stat, 2.0, chisq_sf(stat, 2)


def ensemble_seasonal(z, alpha: float = 0.05, period: int = 7,
                      anchor_weekday: int = 0) -> SeasonalityReport:
    """Run all four tests and take a majority vote among those that ran."""
    key = z.key if isinstance(z, IncrementSeries) else None
    metric = z.metric if isinstance(z, IncrementSeries) else None
    values, anchor = _series_values(z, anchor_weekday)
    n_weeks = _week_blocks(values, anchor, period).shape[0]

    results: dict[str, TestResult] = {}
    skipped: dict[str, str] = {}

    def run(name, fn):
        try:
            out = fn()
        except InsufficientDataError as exc:
            skipped[name] = str(exc)
            return
        if name == "Welch":
            stat, df1, df2, p, degenerate = out
            df = (df1, df2)
        else:
            stat, df1, p = out
            df, degenerate = (df1,), False
        results[name] = TestResult(name, stat, df, p, p < alpha, degenerate)

    run("QS", lambda: qs_test(values, period, anchor))
    run("Friedman", lambda: friedman_test(values, period, anchor))
    run("KruskalWallis", lambda: kruskal_wallis_test(values, period, anchor))
    run("Welch", lambda: welch_anova_test(values, period, anchor))

    if len(results) < 3:
        raise InsufficientDataError(
            f"only {len(results)} of 4 seasonality tests could run: {skipped}")
    votes = sum(1 for r in results.values() if r.significant)
    verdict = votes > len(results) / 2
    return SeasonalityReport(key, metric, results, skipped, verdict, alpha, n_weeks)


@dataclass
class WeeklyMaxProfile:
    """Weekday of the weekly maximum for each complete week of each series."""

    rows: list[tuple[SeriesKey | None, dt.date, int]] = field(default_factory=list)
    n_partial_weeks_skipped: int = 0

    def by_state(self) -> dict[str, Counter]:
        out: dict[str, Counter] = {}
        for key, _, weekday in self.rows:
            state = key.state_name if key is not None and key.state_name else "US"
            out.setdefault(state, Counter())[WEEKDAY_NAMES[weekday]] += 1
        return out

    def by_week(self) -> dict[dt.date, Counter]:
        out: dict[dt.date, Counter] = {}
        for _, week_start, weekday in self.rows:
            out.setdefault(week_start, Counter())[WEEKDAY_NAMES[weekday]] += 1
        return out


def weekly_max_profile(series_list) -> WeeklyMaxProfile:
    """Per complete Sunday-Saturday week, the weekday with the highest count.

    Ties go to the earliest weekday.  Takes one IncrementSeries or an
    iterable of them.
    """
    if isinstance(series_list, IncrementSeries):
        series_list = [series_list]
    profile = WeeklyMaxProfile()
    for z in series_list:
        values = np.asarray(z.values, dtype=float)
        anchor = _sunday_anchor(z.start_date)
        lead = (7 - anchor) % 7
        blocks = _week_blocks(values, anchor)
        profile.n_partial_weeks_skipped += (1 if lead else 0) + (
            1 if (values.size - lead) % 7 else 0)
        for i, row in enumerate(blocks):
            weekday = int(np.argmax(row))  # argmax takes the earliest on ties
            week_start = z.start_date + dt.timedelta(days=lead + 7 * i)
            profile.rows.append((z.key, week_start, weekday))
    return profile


@dataclass(frozen=True)
class CycleRemoval:
    """A detrended series plus everything needed to restore the original."""

    method: str
    values: np.ndarray      # transformed series
    removed: np.ndarray     # component removed, aligned with values
    head: np.ndarray        # original leading entries not covered
    tail: np.ndarray        # original trailing entries not covered
    start_index: int        # 1-based index of values[0] in the original

    def restore(self) -> np.ndarray:
        return np.concatenate([self.head, self.values + self.removed, self.tail])


def remove_weekly_cycle(z, method: str, period: int = 7,
                        anchor_weekday: int = 0) -> CycleRemoval:
    """Strip the weekly cycle by differencing, smoothing, or regression.

    diff7 subtracts the value one period back; ma7 subtracts a centered
    period-length moving mean; weekday_dummies and harmonic subtract an
    OLS weekday effect (the two span the same space and give identical
    residuals).
    """
    values, anchor = _series_values(z, anchor_weekday)
    n = values.size
    if method in ("diff7", "ma7"):
        if n < 2 * period + 1:
            raise InsufficientDataError(f"{method} needs at least {2 * period + 1} points")
    elif method in ("weekday_dummies", "harmonic"):
        if n < 3 * period:
            raise InsufficientDataError(f"{method} needs at least {3 * period} points")
    else:
        raise DomainError(f"unknown cycle-removal method {method!r}")

    if method == "diff7":
        removed = values[:-period].copy()
        out = values[period:] - removed
        return CycleRemoval(method, out, removed, values[:period].copy(),
                            np.empty(0), period + 1)
    if method == "ma7":
        half = period // 2
        kernel = np.full(period, 1.0 / period)
        smooth = np.convolve(values, kernel, mode="valid")
        out = values[half:n - half] - smooth
        return CycleRemoval(method, out, smooth, values[:half].copy(),
                            values[n - half:].copy(), half + 1)

    if method == "weekday_dummies":
        idx = (np.arange(n) + anchor) % period
        design = np.column_stack(
            [np.ones(n)] + [(idx == j).astype(float) for j in range(1, period)])
    else:
        t = np.arange(n) + anchor
        cols = [np.ones(n)]
        for j in range(1, period // 2 + 1):
            cols.append(np.sin(2.0 * np.pi * j * t / period))
            cols.append(np.cos(2.0 * np.pi * j * t / period))
        design = np.column_stack(cols)
    fit = ols_fit(design, values)
    fitted = design @ fit.coefficients
    return CycleRemoval(method, values - fitted, fitted, np.empty(0), np.empty(0), 1)


def report_to_row(report: SeasonalityReport) -> dict:
    """Flatten a report into CSV-friendly columns."""
    row: dict = {
        "level": report.key.level.value if report.key else "",
        "id": report.key.ident if report.key else "",
        "metric": report.metric.value if report.metric else "",
        "alpha": report.alpha,
        "n_weeks": report.n_weeks_used,
    }
    for name in ("QS", "Friedman", "KruskalWallis", "Welch"):
        r = report.results.get(name)
        if r is None:
            row[f"{name}_stat"] = ""
            row[f"{name}_p"] = ""
            row[f"{name}_sig"] = ""
        else:
            row[f"{name}_stat"] = f"{r.statistic:.6g}"
            row[f"{name}_p"] = f"{r.p_value:.6g}"
            row[f"{name}_sig"] = int(r.significant)
    row["ensemble"] = int(report.ensemble_verdict)
    return row
