"""Treatment-effect estimators and percentile bootstrap intervals.

All estimators take precomputed nuisance predictions; fitting them (T-learner
outcome models, cross-fitting) is the pipeline's job.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._accel import USE_NUMBA, njit
from .errors import (
    DegenerateTreatmentResiduals,
    EmulaError,
    NoMatches,
    ResampleFailure,
    ZeroControlMean,
)

log = logging.getLogger(__name__)


class EstimandKind(str, Enum):
    RiskDifference = "RiskDifference"
    RiskRatio = "RiskRatio"


@dataclass(frozen=True)
class PotentialMeans:
    m1: float
    m0: float

    def contrast(self, estimand=EstimandKind.RiskDifference) -> float:
        if EstimandKind(estimand) is EstimandKind.RiskRatio:
            if self.m0 == 0:
                raise ZeroControlMean("risk ratio undefined for a zero control mean")
            return self.m1 / self.m0
        return self.m1 - self.m0


def _arrays(*vs):
    out = [np.asarray(v, dtype=float) for v in vs]
    n = out[0].size
    if n == 0 or any(v.shape != (n,) for v in out):
        raise ValueError("inputs must be non-empty 1-D vectors of equal length")
    return out


def ate_gformula(mu1_hat, mu0_hat, estimand=EstimandKind.RiskDifference) -> tuple[PotentialMeans, float]:
    """Average the modeled potential outcomes over the cohort."""
    mu1, mu0 = _arrays(mu1_hat, mu0_hat)
    pm = PotentialMeans(float(np.mean(mu1)), float(np.mean(mu0)))
    return pm, pm.contrast(estimand)


def _check_clip(clip):
    if not 0 < clip < 0.5:
        raise ValueError("clip must lie in (0, 0.5)")


@dataclass
class WeightedFit:
    """Point estimate with the pieces that produced it."""

    point: float
    means: PotentialMeans
    e_clipped: np.ndarray
    weights: np.ndarray


def ipw(e_hat, a, y, clip: float = 0.01, estimand=EstimandKind.RiskDifference) -> WeightedFit:
    """Horvitz-Thompson inverse propensity weighting with clipped propensities."""
    _check_clip(clip)
    e, a, y = _arrays(e_hat, a, y)
    e = np.clip(e, clip, 1 - clip)
    w = np.where(a == 1, 1.0 / e, 1.0 / (1.0 - e))
    m1 = float(np.mean(a * y / e))
    m0 = float(np.mean((1 - a) * y / (1 - e)))
    pm = PotentialMeans(m1, m0)
    return WeightedFit(pm.contrast(estimand), pm, e, w)


def ate_ipw(e_hat, a, y, clip: float = 0.01, estimand=EstimandKind.RiskDifference) -> float:
    return ipw(e_hat, a, y, clip, estimand).point


def aipw(mu1_hat, mu0_hat, e_hat, a, y, clip: float = 0.01, estimand=EstimandKind.RiskDifference) -> WeightedFit:
    """Augmented IPW (doubly robust) potential means and contrast."""
    _check_clip(clip)
    mu1, mu0, e, a, y = _arrays(mu1_hat, mu0_hat, e_hat, a, y)
    e = np.clip(e, clip, 1 - clip)
    psi1 = mu1 + a * (y - mu1) / e
    psi0 = mu0 + (1 - a) * (y - mu0) / (1 - e)
    pm = PotentialMeans(float(np.mean(psi1)), float(np.mean(psi0)))
    if EstimandKind(estimand) is EstimandKind.RiskDifference:
        # one pass over the per-row contributions, as in the textbook form
        point = float(np.mean(mu1 - mu0 + a * (y - mu1) / e - (1 - a) * (y - mu0) / (1 - e)))
    else:
        point = pm.contrast(estimand)
    w = np.where(a == 1, 1.0 / e, 1.0 / (1.0 - e))
    return WeightedFit(point, pm, e, w)


def ate_aipw(mu1_hat, mu0_hat, e_hat, a, y, clip: float = 0.01, estimand=EstimandKind.RiskDifference) -> float:
    return aipw(mu1_hat, mu0_hat, e_hat, a, y, clip, estimand).point


def ate_dml(m_hat, e_hat, a, y, clip: float = 0.01) -> float:
    """Constant-effect minimizer of the R-loss (residual-on-residual slope)."""
    _check_clip(clip)
    m, e, a, y = _arrays(m_hat, e_hat, a, y)
    e = np.clip(e, clip, 1 - clip)
    ra = a - e
    denom = float(np.sum(ra * ra))
    if denom < 1e-12:
        raise DegenerateTreatmentResiduals("treatment residuals are numerically zero")
    return float(np.sum(ra * (y - m)) / denom)


# --- matching -------------------------------------------------------------

@njit(cache=True)
def _greedy_match_numba(lt, lc, caliper):
    n_t = lt.shape[0]
    n_c = lc.shape[0]
    used = np.zeros(n_c, dtype=np.bool_)
    pair = np.full(n_t, -1, dtype=np.int64)
    for i in range(n_t):
        best = -1
        best_d = np.inf
        for j in range(n_c):
            if used[j]:
                continue
            dist = abs(lt[i] - lc[j])
            if dist < best_d:
                best_d = dist
                best = j
        if best >= 0 and best_d <= caliper:
            used[best] = True
            pair[i] = best
    return pair


def _greedy_match_numpy(lt, lc, caliper):
    used = np.zeros(lc.size, dtype=bool)
    pair = np.full(lt.size, -1, dtype=np.int64)
    for i in range(lt.size):
        dist = np.abs(lt[i] - lc)
        dist[used] = np.inf
        j = int(np.argmin(dist))
        if dist[j] <= caliper:
            used[j] = True
            pair[i] = j
    return pair


greedy_match = _greedy_match_numba if USE_NUMBA else _greedy_match_numpy


def _logit(p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return np.log(p) - np.log1p(-p)


@dataclass
class MatchResult:
    point: float
    n_matched: int
    treated_idx: np.ndarray
    control_idx: np.ndarray
    caliper: float


def psm(e_hat, a, y, caliper_sd: float = 0.2) -> MatchResult:
    """1:1 greedy nearest-neighbour matching on logit(e) without replacement.

    Treated units are processed by descending propensity; each takes the
    closest unused control within ``caliper_sd * SD(logit e)``. The contrast
    is averaged over matched pairs, so the target is the ATT.
    """
    e, a, y = _arrays(e_hat, a, y)
    t_idx = np.flatnonzero(a == 1)
    c_idx = np.flatnonzero(a == 0)
    if t_idx.size == 0 or c_idx.size == 0:
        raise NoMatches("both arms must be non-empty")
    lg = _logit(e)
    caliper = caliper_sd * float(np.std(lg))
    t_idx = t_idx[np.argsort(-e[t_idx], kind="stable")]
    pair = greedy_match(np.ascontiguousarray(lg[t_idx]), np.ascontiguousarray(lg[c_idx]), caliper)
    ok = pair >= 0
    if not ok.any():
        raise NoMatches("no treated unit has a control within the caliper")
    ti = t_idx[ok]
    ci = c_idx[pair[ok]]
    return MatchResult(float(np.mean(y[ti] - y[ci])), int(ok.sum()), ti, ci, caliper)


def ate_psm(e_hat, a, y, caliper_sd: float = 0.2) -> tuple[float, int]:
    r = psm(e_hat, a, y, caliper_sd)
    return r.point, r.n_matched


# --- bootstrap ------------------------------------------------------------

MAX_REDRAWS = 5


def _replicate(pipeline, n_rows, seed, r):
    for attempt in range(MAX_REDRAWS + 1):
        rng = np.random.default_rng([int(seed), r, attempt])
        idx = rng.integers(0, n_rows, size=n_rows)
        try:
            return float(pipeline(idx))
        except EmulaError as exc:
            log.debug("bootstrap replicate %d attempt %d failed: %s", r, attempt, exc)
    raise ResampleFailure(f"replicate {r} failed after {MAX_REDRAWS} redraws")


def bootstrap_samples(pipeline, n_rows: int, B: int = 50, seed: int = 0, n_jobs: int = 1) -> np.ndarray:
    """Statistic on ``B`` resamples of row indices (with replacement).

    ``pipeline(idx)`` must re-run every data-dependent step on rows ``idx``.
    Replicate ``r`` uses its own stream derived from ``(seed, r)``, so results
    do not depend on ``n_jobs``.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if n_jobs > 1:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(_replicate)(pipeline, n_rows, seed, r) for r in range(B))
    else:
        out = [_replicate(pipeline, n_rows, seed, r) for r in range(B)]
    return np.asarray(out, dtype=float)


def percentile_ci(samples, alpha: float = 0.05) -> tuple[float, float]:
    lo, hi = np.quantile(np.asarray(samples, dtype=float), [alpha / 2, 1 - alpha / 2], method="linear")
    return float(lo), float(hi)


def bootstrap_ci(pipeline, n_rows: int, B: int = 50, alpha: float = 0.05, seed: int = 0,
                 n_jobs: int = 1) -> tuple[float, float]:
    """Percentile interval (linear interpolation between order statistics)."""
    return percentile_ci(bootstrap_samples(pipeline, n_rows, B, seed, n_jobs), alpha)


# --- reporting ------------------------------------------------------------

CSV_FIELDS = ("estimator_id", "estimand", "point", "ci_low", "ci_high", "n_boot",
              "aggregation", "nuisance", "window_h", "seed", "target", "caveat", "error")


@dataclass
class EffectEstimate:
    estimator_id: str
    estimand: EstimandKind = EstimandKind.RiskDifference
    point: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    n_boot: int = 0
    choices: dict = field(default_factory=dict)
    target: str = "ATE"
    caveat: str = ""
    error: str = ""

    def __post_init__(self):
        self.estimand = EstimandKind(self.estimand)
        if self.n_boot and not self.error and not self.ci_low <= self.ci_high:
            raise ValueError("ci_low must not exceed ci_high")

    @property
    def ok(self) -> bool:
        return not self.error

    def covers(self, value: float) -> bool:
        return self.ok and self.ci_low <= value <= self.ci_high

    def to_json(self) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {"estimator_id": self.estimator_id, "estimand": self.estimand.value,
                "point": num(self.point), "ci_low": num(self.ci_low), "ci_high": num(self.ci_high),
                "n_boot": self.n_boot, "target": self.target, "choices": dict(self.choices),
                "caveat": self.caveat, "error": self.error}

    def csv_row(self) -> list:
        def num(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))

        c = self.choices
        return [self.estimator_id, self.estimand.value, num(self.point), num(self.ci_low), num(self.ci_high),
                self.n_boot, c.get("aggregation", ""), c.get("nuisance", ""),
                num(c.get("window_h")), c.get("seed", ""), self.target, self.caveat, self.error]


def write_estimates_csv(estimates, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for est in estimates:
            w.writerow(est.csv_row())
