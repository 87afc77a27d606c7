"""Replacement estimation and residual redistribution for flagged days.

The repair of a confirmed point anomaly has two parts: a model-based
estimate of what the day should have been (count GLM with lagged terms,
or an error-weighted blend of trend forecasters), and a redistribution of
the removed mass proportionally over a problematic period, conserving the
cumulative total exactly.  Order-dependency violations have a cheaper,
deterministic fix: clamp the series backward from its final value.

Outliers are processed in time order so later estimates see earlier
repairs; within one series the loop is strictly sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, InsufficientDataError
from .model import CumulativeSeries, IncrementSeries
from .detect import AnomalyRecord, AnomalyStatus
from .numerics import GlmFit, irls_glm, ols_fit

ETA_CLIP = 30.0


def _values_of(z) -> np.ndarray:
    if isinstance(z, (IncrementSeries, CumulativeSeries)):
        return np.asarray(z.values, dtype=float)
    return np.asarray(z, dtype=float)


# ---------------------------------------------------------------------------
# count models


@dataclass
class IngarchFit:
    """Count regression with lagged observations and lagged log-means."""

    p: int
    q: int
    beta0: float
    beta: np.ndarray
    alpha: np.ndarray
    nu: np.ndarray          # fitted log-mean sequence, aligned with the input
    fit: GlmFit
    log_lags: bool
    nu_init: float

    def forecast_one(self, values: np.ndarray) -> float:
        """Conditional mean for the day after the end of ``values``."""
        values = np.asarray(values, dtype=float)
        t_next = values.size  # 0-based index of the forecast day
        nu = self.beta0
        for k in range(1, self.p + 1):
            lag = values[t_next - k]
            nu += self.beta[k - 1] * (math.log1p(lag) if self.log_lags else lag)
        for l in range(1, self.q + 1):
            idx = t_next - l
            nu += self.alpha[l - 1] * (self.nu[idx] if 0 <= idx < self.nu.size else self.nu_init)
        return math.exp(min(max(nu, -ETA_CLIP), ETA_CLIP))


def _ingarch_design(values: np.ndarray, p: int, log_lags: bool, start: int) -> np.ndarray:
    n = values.size
    lagged = np.log1p(values) if log_lags else values
    cols = [np.ones(n - start)]
    for k in range(1, p + 1):
        cols.append(lagged[start - k:n - k])
    return np.column_stack(cols)


def _filtered_design(x: np.ndarray, alpha: np.ndarray, nu_init: float):
    """Fold the lagged-log-mean recursion into a design and offset.

    With the autoregressive weights fixed, the log-mean is affine in the
    remaining coefficients; each row picks up the filtered history of the
    raw design, and the offset carries the warm-start values.
    """
    n, k = x.shape
    q = alpha.size
    xf = np.zeros_like(x)
    off = np.zeros(n)
    for t in range(n):
        xf[t] = x[t]
        for l in range(1, q + 1):
            if t - l >= 0:
                xf[t] += alpha[l - 1] * xf[t - l]
                off[t] += alpha[l - 1] * off[t - l]
            else:
                off[t] += alpha[l - 1] * nu_init
    return xf, off


def fit_ingarch(z, p: int, q: int, max_iter: int = 50, tol: float = 1e-8,
                log_lags: bool = False) -> IngarchFit:
    """Quasi-likelihood fit of the lagged count regression.

    With q = 0 this is exactly a log-link quasi-Poisson GLM on the lagged
    counts (log1p-transformed when log_lags is set).  With q >= 1 the
    autoregressive weights are profiled: for each candidate weight vector
    the model is affine in the remaining coefficients and is fit by IRLS
    with a filtered design; a golden-section/coordinate search minimizes
    the profile deviance.
    """
    values = _values_of(z)
    if p < 0 or q < 0:
        raise DomainError("lag orders must be nonnegative")
    if np.any(values < 0):
        raise DomainError("negative increments: repair order violations first")
    if values.size < 10 + p + q:
        raise InsufficientDataError(
            f"need at least {10 + p + q} observations for order ({p}, {q})")
    start = max(p, q)
    nu_init = math.log(float(values.mean()) + 1.0)
    y = values[start:]
    x_full = _ingarch_design(values, p, log_lags, start)
    # constant lag columns (flat history) are collinear with the intercept;
    # fit without them and report zero coefficients for the dropped lags
    keep = [0] + [j for j in range(1, p + 1) if np.ptp(x_full[:, j]) > 1e-12]
    x = x_full[:, keep]

    def expand(coefs: np.ndarray) -> np.ndarray:
        full = np.zeros(p + 1)
        full[keep] = coefs
        return full

    def assemble(fit: GlmFit, alpha: np.ndarray) -> IngarchFit:
        if alpha.size == 0:
            eta = x @ fit.coefficients
        else:
            xf, off = _filtered_design(x, alpha, nu_init)
            eta = xf @ fit.coefficients + off
        nu = np.concatenate([np.full(start, nu_init), np.clip(eta, -ETA_CLIP, ETA_CLIP)])
        coefs = expand(fit.coefficients)
        return IngarchFit(
            p=p, q=q, beta0=float(coefs[0]),
            beta=coefs[1:1 + p].copy(), alpha=alpha, nu=nu, fit=fit,
            log_lags=log_lags, nu_init=nu_init,
        )

    if q == 0:
        fit = irls_glm(x, y, "quasipoisson_log", max_iter=max_iter, tol=tol)
        if not fit.converged:
            raise ConvergenceError("lagged count regression did not converge", last_fit=fit)
        return assemble(fit, np.empty(0))

    def profile_deviance(alpha: np.ndarray) -> tuple[float, GlmFit]:
        xf, off = _filtered_design(x, alpha, nu_init)
        fit = irls_glm(xf, y, "quasipoisson_log", max_iter=max_iter, tol=tol, offset=off)
        return fit.deviance, fit

    bound = 0.95

    def golden(fn, lo: float, hi: float, iters: int = 28) -> float:
        inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        fc, fd = fn(c), fn(d)
        for _ in range(iters):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = fn(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = fn(d)
        return (a + b) / 2.0

    alpha = np.zeros(q)
    best_dev = math.inf
    for _ in range(8):  # coordinate sweeps
        previous = best_dev
        for l in range(q):
            def along(v: float) -> float:
                trial = alpha.copy()
                trial[l] = v
                try:
                    dev, _ = profile_deviance(trial)
                except (ConvergenceError, DomainError):
                    return math.inf
                return dev
            # coarse grid then golden refinement keeps the search deterministic
            grid = np.linspace(-bound, bound, 21)
            dev_grid = [along(v) for v in grid]
            j = int(np.argmin(dev_grid))
            lo = grid[max(0, j - 1)]
            hi = grid[min(len(grid) - 1, j + 1)]
            alpha[l] = golden(along, lo, hi)
        best_dev, best_fit = profile_deviance(alpha)
        if abs(previous - best_dev) < tol * (abs(best_dev) + 0.1):
            break
    if not best_fit.converged:
        raise ConvergenceError("profile fit did not converge", last_fit=best_fit)
    return assemble(best_fit, alpha.copy())


# ---------------------------------------------------------------------------
# one-day trend forecasters


@dataclass
class TrendModel:
    kind: str  # exp_trend | lin_trend | exp_ar
    fit: GlmFit

    def predict_at(self, t: float) -> float:
        b = self.fit.coefficients
        if self.kind == "exp_trend":
            return math.exp(min(max(b[0] + b[1] * t, -ETA_CLIP), ETA_CLIP))
        if self.kind == "lin_trend":
            return float(b[0] + b[1] * t)
        raise DomainError("exp_ar predicts from the previous value, not from t")

    def predict_from(self, z_prev: float) -> float:
        if self.kind != "exp_ar":
            raise DomainError(f"{self.kind} predicts from t")
        b = self.fit.coefficients
        eta = b[0] + (b[1] * math.log1p(max(z_prev, 0.0)) if b.size > 1 else 0.0)
        return math.exp(min(max(eta, -ETA_CLIP), ETA_CLIP))

    def one_day(self, t: float, z_prev: float) -> float:
        return self.predict_from(z_prev) if self.kind == "exp_ar" else self.predict_at(t)


def _window_arrays(values: np.ndarray, t_indices) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(sorted(t_indices), dtype=int)
    if idx.size < 5:
        raise InsufficientDataError("fitting window needs at least 5 days")
    if idx.min() < 1 or idx.max() > values.size:
        raise DomainError("window indices outside the series")
    return idx.astype(float), values[idx - 1]


def fit_exp_trend(z, t_indices) -> TrendModel:
    """log E(Z_t) linear in t, fit by quasi-Poisson IRLS."""
    values = _values_of(z)
    t, y = _window_arrays(values, t_indices)
    fit = irls_glm(np.column_stack([np.ones_like(t), t]), y, "quasipoisson_log")
    return TrendModel("exp_trend", fit)


def fit_lin_trend(z, t_indices) -> TrendModel:
    """E(Z_t) linear in t, fit by OLS."""
    values = _values_of(z)
    t, y = _window_arrays(values, t_indices)
    return TrendModel("lin_trend", ols_fit(np.column_stack([np.ones_like(t), t]), y))


def fit_exp_ar(z, t_indices) -> TrendModel:
    """log E(Z_t) linear in log(Z_{t-1} + 1), fit by quasi-Poisson IRLS.

    A numerically constant lag column (constant history) collapses to an
    intercept-only fit, so the prediction falls back to the window mean.
    """
    values = _values_of(z)
    idx = np.asarray(sorted(t_indices), dtype=int)
    idx = idx[idx >= 2]
    t, y = _window_arrays(values, idx)
    lag = np.log1p(values[idx - 2])
    if np.ptp(lag) < 1e-12:
        fit = irls_glm(np.ones((y.size, 1)), y, "quasipoisson_log")
    else:
        fit = irls_glm(np.column_stack([np.ones_like(lag), lag]), y, "quasipoisson_log")
    return TrendModel("exp_ar", fit)


def clep_combine(predictors: list[tuple[float, list[float]]], eps: float = 1e-6) -> float:
    """Blend one-day predictions, weighting by inverse recent MAE.

    ``predictors`` holds (prediction, recent absolute errors) pairs; with
    no error history anywhere the blend is a plain average.
    """
    if not predictors:
        raise DomainError("need at least one predictor")
    if any(len(errs) == 0 for _, errs in predictors):
        weights = np.full(len(predictors), 1.0 / len(predictors))
    else:
        raw = np.array([1.0 / (float(np.mean(np.abs(errs))) + eps) for _, errs in predictors])
        weights = raw / raw.sum()
    preds = np.array([pred for pred, _ in predictors])
    return float(weights @ preds)


CLEP_HOLDOUT = 5


def _clep_estimate(values: np.ndarray, t_m: int, window_idx: list[int]) -> float:
    fitters = (fit_exp_trend, fit_lin_trend, fit_exp_ar)
    holdout = window_idx[-CLEP_HOLDOUT:] if len(window_idx) >= CLEP_HOLDOUT + 5 else []
    train = [t for t in window_idx if t not in holdout]
    members = []
    for fitter in fitters:
        errors: list[float] = []
        if holdout:
            try:
                trained = fitter(values, train)
                for t in holdout:
                    pred = trained.one_day(t, values[t - 2] if t >= 2 else 0.0)
                    errors.append(abs(values[t - 1] - pred))
            except (ConvergenceError, DomainError, InsufficientDataError):
                errors = []
        try:
            full = fitter(values, window_idx)
        except (ConvergenceError, DomainError, InsufficientDataError):
            continue
        pred = full.one_day(t_m, values[t_m - 2] if t_m >= 2 else 0.0)
        members.append((pred, errors))
    if not members:
        raise ConvergenceError("no combined-predictor member could be fit")
    if any(len(e) == 0 for _, e in members):
        members = [(p, []) for p, _ in members]
    return clep_combine(members)


def estimate_replacement(z, t_m: int, method: str = "clep", window: int = 21,
                         ingarch_order: tuple[int, int] = (7, 0),
                         history_start: int = 1, log_lags: bool = False) -> float:
    """Model-based estimate for the flagged day t_m; the day itself never
    enters any fitting window."""
    values = _values_of(z)
    if not 1 <= t_m <= values.size:
        raise DomainError(f"t_m={t_m} outside the series")
    method = method.lower()
    if method == "clep":
        lo = max(history_start, t_m - window)
        window_idx = list(range(lo, t_m))
        est = _clep_estimate(values, t_m, window_idx)
    elif method == "ingarch":
        history = values[history_start - 1:t_m - 1]
        fit = fit_ingarch(history, *ingarch_order, log_lags=log_lags)
        est = fit.forecast_one(history)
    else:
        raise DomainError(f"unknown replacement method {method!r}")
    return max(0.0, est)


# ---------------------------------------------------------------------------
# Algorithm: proportional residual redistribution


@dataclass
class RepairResult:
    anomaly_id: str
    method: str  # Ingarch | Clep | Manual
    z_hat: float
    delta: float
    period: list[int]
    repaired_increments: list[float]   # over period then t_m, in index order
    conservation_receipt: tuple[float, float]
    t_m: int
    applied: bool = True
    skip_reason: str | None = None
    flags: list[str] = field(default_factory=list)


def redistribute_residual(z, t_m: int, z_hat: float, period,
                          anomaly_id: str = "", method: str = "Manual",
                          delta: float = 0.0) -> RepairResult:
    """Spread the day's excess (or deficit) over the problematic period.

    Each period day moves proportionally to its own value; the flagged day
    takes the estimate; the total over period plus flagged day is conserved
    exactly.  An all-zero period falls back to a uniform spread; negative
    intermediate values are clamped to zero and their mass re-spread over
    the remaining positive days.
    """
    values = _values_of(z)
    period = sorted(int(t) for t in period)
    if not period:
        raise DomainError("problematic period must be nonempty")
    if t_m in period:
        raise DomainError("problematic period must exclude the flagged day")
    if min(period) < 1 or max(period) > values.size or not 1 <= t_m <= values.size:
        raise DomainError("period or flagged day outside the series")
    flags: list[str] = []
    z_m = float(values[t_m - 1])
    residual = z_m - z_hat
    current = values[np.asarray(period) - 1].astype(float)
    total_before = float(current.sum() + z_m)
    pool = float(current.sum())
    if pool > 0:
        new = current + residual * current / pool
    else:
        new = current + residual / len(period)
        flags.append("uniform_fallback")
    target_mass = float(current.sum()) + residual
    for _ in range(len(period)):
        if np.all(new >= -1e-12):
            break
        if "clamped" not in flags:
            flags.append("clamped")
        deficit = float(np.sum(new[new < 0.0]))
        new = np.maximum(new, 0.0)
        positive = new > 0.0
        if not np.any(positive):
            break
        new[positive] += deficit * new[positive] / float(new[positive].sum())
    new = np.maximum(new, 0.0)
    new_z_hat = z_hat
    shortfall = target_mass + z_hat - (float(new.sum()) + z_hat)
    if abs(shortfall) > 1e-9 * max(1.0, abs(total_before)):
        # period could not absorb the mass; conservation wins over the estimate
        new_z_hat = max(0.0, z_hat + shortfall)
        flags.append("absorbed_into_flagged_day")
    total_after = float(new.sum() + new_z_hat)
    return RepairResult(
        anomaly_id=anomaly_id, method=method, z_hat=new_z_hat, delta=delta,
        period=period, repaired_increments=[*map(float, new), float(new_z_hat)],
        conservation_receipt=(total_before, total_after), t_m=t_m,
        flags=flags,
    )


def apply_repair(values: np.ndarray, result: RepairResult) -> np.ndarray:
    out = np.array(values, dtype=float)
    for idx, value in zip(result.period, result.repaired_increments):
        out[idx - 1] = value
    out[result.t_m - 1] = result.repaired_increments[-1]
    return out


def default_delta(z_hat: float) -> float:
    """Spike threshold: three Poisson scales above the estimate, floor 10."""
    return max(3.0 * math.sqrt(z_hat + 1.0), 10.0)


def repair_outliers(z, anomalies: list[AnomalyRecord], *, method: str = "clep",
                    delta=None, window: int = 21, ingarch_order: tuple[int, int] = (7, 0),
                    change_points: list[int] | None = None,
                    overrides: dict | None = None,
                    log_lags: bool = False):
    """Run the repairing loop over confirmed outliers in time order.

    Later estimates see earlier repairs.  ``overrides`` maps anomaly id to
    {"period": [lo, hi], "method": name, "value": manual estimate}.  The
    default problematic period runs from the series start (or the latest
    confirmed change point before the day) up to the day before the
    outlier.  Returns (repaired values or IncrementSeries, results).
    """
    values = _values_of(z).copy()
    overrides = overrides or {}
    change_points = sorted(change_points or [])
    confirmed = sorted(
        (a for a in anomalies if a.status == AnomalyStatus.CONFIRMED),
        key=lambda a: a.t_index)
    results: list[RepairResult] = []
    for anomaly in confirmed:
        t_m = anomaly.t_index
        override = overrides.get(anomaly.id, {})
        this_method = str(override.get("method", method)).lower()
        history_start = 1
        for cp in change_points:
            if cp < t_m:
                history_start = cp + 1
        try:
            if this_method == "manual":
                if "value" not in override:
                    raise DomainError("manual repair needs an override value")
                z_hat = max(0.0, float(override["value"]))
                method_label = "Manual"
            else:
                z_hat = estimate_replacement(
                    values, t_m, method=this_method, window=window,
                    ingarch_order=ingarch_order, history_start=history_start,
                    log_lags=log_lags)
                method_label = "Ingarch" if this_method == "ingarch" else "Clep"
            delta_val = float(delta(z_hat)) if callable(delta) else (
                float(delta) if delta is not None else default_delta(z_hat))
            if abs(values[t_m - 1] - z_hat) <= delta_val:
                results.append(RepairResult(
                    anomaly_id=anomaly.id, method=method_label, z_hat=z_hat,
                    delta=delta_val, period=[], repaired_increments=[],
                    conservation_receipt=(float(values[t_m - 1]), float(values[t_m - 1])),
                    t_m=t_m, applied=False, skip_reason="below_threshold"))
                continue
            if "period" in override and override["period"]:
                lo, hi = override["period"]
                period = [t for t in range(int(lo), int(hi) + 1) if t != t_m]
            else:
                period = list(range(history_start, t_m))
            if not period:
                raise DomainError("empty problematic period")
            result = redistribute_residual(
                values, t_m, z_hat, period, anomaly_id=anomaly.id,
                method=method_label, delta=delta_val)
            values = apply_repair(values, result)
            results.append(result)
        except (ConvergenceError, DomainError, InsufficientDataError) as exc:
            results.append(RepairResult(
                anomaly_id=anomaly.id, method=this_method.capitalize(), z_hat=math.nan,
                delta=math.nan, period=[], repaired_increments=[],
                conservation_receipt=(math.nan, math.nan), t_m=t_m,
                applied=False, skip_reason=f"estimation_failed: {exc}"))
    if isinstance(z, IncrementSeries):
        return z.with_values(values), results
    return values, results


# ---------------------------------------------------------------------------
# order-dependency repair


def repair_od(y: CumulativeSeries | np.ndarray):
    """Backward clamp: the largest nondecreasing series under Y that keeps
    the final value.  Idempotent; later reports supersede earlier ones."""
    values = _values_of(y)
    repaired = np.minimum.accumulate(values[::-1])[::-1]
    if isinstance(y, CumulativeSeries):
        return y.with_values(repaired)
    return repaired


def repair_od_model(y: CumulativeSeries, method: str = "clep", window: int = 21,
                    **kwargs):
    """Model-based alternative: treat each negative increment as an outlier,
    estimate a replacement, and push the correction into the prior period."""
    from .model import to_increments
    z = to_increments(y)
    values = z.values.copy()
    results = []
    for t in range(2, values.size + 1):
        if values[t - 1] >= 0:
            continue
        clean = np.maximum(values, 0.0)
        z_hat = estimate_replacement(clean, t, method=method, window=window, **kwargs)
        result = redistribute_residual(values, t, z_hat, list(range(1, t)),
                                       method="Clep" if method == "clep" else "Ingarch")
        values = apply_repair(values, result)
        results.append(result)
    repaired = y.with_values(np.cumsum(values))
    return repaired, results


def integerize_increments(values, total: float | None = None) -> np.ndarray:
    """Largest-remainder rounding that conserves the (integral) total."""
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0):
        raise DomainError("integerization expects nonnegative increments")
    target = int(round(float(arr.sum() if total is None else total)))
    floors = np.floor(arr).astype(int)
    leftover = target - int(floors.sum())
    if leftover < 0:
        raise DomainError("total below the sum of floors; nothing to remove")
    remainders = arr - floors
    order = np.lexsort((np.arange(arr.size), -remainders))
    floors[order[:leftover]] += 1
    return floors.astype(float)
