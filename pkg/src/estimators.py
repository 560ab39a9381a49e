# estimators.py - 실험 통계 도구 (Wilson 구간, 로그-로그 지수 적합, 꼬리 회귀, 중앙 차분)
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel
from scipy import stats

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 4
MIN_FIT_OCTAVES = 3.0
MIN_TAIL_EVENTS = 5


class FitResult(BaseModel):
    """log y = intercept + slope * log x 최소제곱 적합"""

    slope: float
    intercept: float
    stderr: float
    intercept_stderr: float
    r2: float
    n_points: int


class TailFit(BaseModel):
    """log P = a - c * A^(3/2) 회귀. c_hat = -기울기"""

    c_hat: float
    stderr: float
    ci_low: float
    ci_high: float
    n_points: int

    @property
    def excludes_zero(self):
        return self.ci_low > 0 or self.ci_high < 0


def wilson_interval(events, trials, confidence=0.95):
    """이항 비율의 Wilson 점수 구간"""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ci = stats.binomtest(int(events), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def fit_power_law(x, y, min_points=MIN_FIT_POINTS, min_octaves=MIN_FIT_OCTAVES) -> Optional[FitResult]:
    """양수 점이 min_points 개 미만이거나 x 범위가 min_octaves 옥타브 미만이면 적합 거부 (None)"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size < min_points:
        logger.warning("⚠️ fit refused: %d points (need %d)", x.size, min_points)
        return None
    octaves = math.log2(x.max() / x.min())
    if octaves < min_octaves:
        logger.warning("⚠️ fit refused: x spans %.2f octaves (need %.1f)", octaves, min_octaves)
        return None
    return _linear_fit(np.log(x), np.log(y))


def _linear_fit(x, y):
    res = stats.linregress(x, y)
    return FitResult(
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(res.stderr),
        intercept_stderr=float(res.intercept_stderr),
        r2=float(res.rvalue ** 2),
        n_points=int(x.size),
    )


def loglog_slope(x, y, min_points=3) -> Optional[FitResult]:
    """옥타브 조건 없이 양수 점들로 로그-로그 기울기"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (x > 0) & (y > 0)
    if keep.sum() < min_points:
        return None
    return _linear_fit(np.log(x[keep]), np.log(y[keep]))


def tail_regression(A_values, events, trials, min_events=MIN_TAIL_EVENTS, confidence=0.95) -> Optional[TailFit]:
    """사건 수가 min_events 이상인 A 만 사용. 3 점 미만이면 None"""
    A = np.asarray(A_values, dtype=np.float64)
    events = np.asarray(events, dtype=np.float64)
    keep = events >= min_events
    if keep.sum() < 3:
        logger.warning("⚠️ tail regression refused: %d usable points", int(keep.sum()))
        return None
    x = A[keep] ** 1.5
    y = np.log(events[keep] / trials)
    res = stats.linregress(x, y)
    half = stats.t.ppf(0.5 + confidence / 2.0, df=x.size - 2) * res.stderr
    c_hat = -float(res.slope)
    return TailFit(
        c_hat=c_hat,
        stderr=float(res.stderr),
        ci_low=c_hat - float(half),
        ci_high=c_hat + float(half),
        n_points=int(x.size),
    )


def central_differences(x, y):
    """비균등 격자 2차 중앙 차분 (끝점은 한쪽 차분)"""
    return np.gradient(np.asarray(y, dtype=np.float64), np.asarray(x, dtype=np.float64))


def standard_error(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))
