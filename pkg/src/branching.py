# branching.py - Galton-Watson 비교 대상 (총 자손 수 샘플링/정확 분포, 꼬리, 레벨 평균, 트리 저항, 지배 검사)
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pandas as pd
from scipy import stats
from scipy.sparse import csgraph

from components import component_of
from graph_core import CapExceededError, GraphError, edges_to_csr, percolate

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_CAP = 10 ** 7
EXACT_BINOMIAL_TRIALS = 60
EXHAUSTIVE_EDGE_CAP = 20
EXPLORATION_WALK_CAP = 50000
OVERFLOW_CODE = -1


class _Overflow:
    """총 자손 수가 cap 을 넘은 경우"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OVERFLOW"


OVERFLOW = _Overflow()


@dataclass(frozen=True)
class GwSpec:
    """루트 자식 수 Bin(d, p), 나머지 Bin(d-1, p)"""

    d: int
    p: object  # float 또는 Fraction

    def __post_init__(self):
        if self.d < 3:
            raise GraphError(f"d must be >= 3, got {self.d}")
        if not 0 <= self.p <= 1:
            raise GraphError(f"p must lie in [0, 1], got {self.p}")

    @property
    def mean_offspring(self):
        return (self.d - 1) * self.p

    @property
    def is_supercritical(self):
        return self.mean_offspring > 1


@dataclass(frozen=True)
class ProgenyPmf:
    masses: np.ndarray  # masses[i] = P(|T| = i + 1)
    overflow_mass: float
    overflow_independent: bool = True  # False 면 overflow = 1 - 합 (잔차 검사 무의미)

    @property
    def m_max(self):
        return int(self.masses.shape[0])

    def pmf(self, m):
        if not 1 <= m <= self.m_max:
            raise GraphError(f"m={m} outside 1..{self.m_max}")
        return float(self.masses[m - 1])

    def tail(self, M):
        """P(|T| >= M), M <= m_max + 1"""
        if M <= 1:
            return 1.0
        if M > self.m_max + 1:
            raise GraphError(f"tail at M={M} needs m_max >= {M - 1}")
        return math.fsum(self.masses[M - 1:].tolist()) + self.overflow_mass

    def normalization_residual(self):
        return abs(math.fsum(self.masses.tolist()) + self.overflow_mass - 1.0)


@dataclass(frozen=True)
class GwTailReport:
    table: pd.DataFrame
    c_hat: float


# ---------------------------------------------------------------------------
# 샘플링
# ---------------------------------------------------------------------------

def gw_sample_total(spec, seed, cap=DEFAULT_SAMPLE_CAP):
    """세대별 큐 시뮬레이션. 세대 크기 합은 Bin((d-1) x 세대, p)"""
    if cap < 1:
        raise GraphError(f"cap must be >= 1, got {cap}")
    rng = seed.generator()
    p = float(spec.p)
    generation = int(rng.binomial(spec.d, p))
    total = 1 + generation
    while generation > 0:
        if total > cap:
            return OVERFLOW
        generation = int(rng.binomial((spec.d - 1) * generation, p))
        total += generation
    return total if total <= cap else OVERFLOW


def gw_sample_many(spec, seed, count, cap=DEFAULT_SAMPLE_CAP):
    """count 개 독립 총 자손 수. cap 초과는 OVERFLOW_CODE(-1)"""
    if cap < 1:
        raise GraphError(f"cap must be >= 1, got {cap}")
    rng = seed.generator()
    p = float(spec.p)
    generation = rng.binomial(spec.d, p, size=count).astype(np.int64)
    total = 1 + generation
    active = (generation > 0) & (total <= cap)
    while active.any():
        idx = np.flatnonzero(active)
        generation[idx] = rng.binomial((spec.d - 1) * generation[idx], p)
        total[idx] += generation[idx]
        active[idx] = (generation[idx] > 0) & (total[idx] <= cap)
    total[total > cap] = OVERFLOW_CODE
    return total


# ---------------------------------------------------------------------------
# 정확 분포
# ---------------------------------------------------------------------------

def _binomial_pmf(trials, k, p):
    """작은 trials 는 정수 이항계수, 나머지는 로그 공간"""
    if trials <= EXACT_BINOMIAL_TRIALS:
        if k < 0 or k > trials:
            return 0.0
        return math.comb(trials, k) * float(p) ** k * (1.0 - float(p)) ** (trials - k)
    return float(np.exp(stats.binom.logpmf(k, trials, float(p))))


def homogeneous_total_pmf(d, p, m_max):
    """Bin(d-1, p) 트리: P(|T'| = m) = P(Bin((d-1)m, p) = m - 1) / m, 인덱스 m (0 번은 0)"""
    out = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        out[m] = _binomial_pmf((d - 1) * m, m - 1, p) / m
    if not np.isfinite(out).all():
        raise GraphError(f"progeny pmf underflowed/overflowed for d={d}, p={p}")
    return out


def _exploration_walk(spec, m_max):
    """탐색 걸음 S_1 ~ Bin(d, p), S_j = S_{j-1} - 1 + Bin(d-1, p) 를 0 에서 죽인다.

    |T| 는 S 가 처음 0 에 닿는 시각이고 |T| >= j + S_j 이므로 j + S_j > m_max 인 질량은
    바로 escaped 로 넘긴다. 반환: (killed[j-1] = P(|T| = j), P(|T| > m_max))
    """
    live = np.array([_binomial_pmf(spec.d, s, spec.p) for s in range(spec.d + 1)])
    kernel = np.array([_binomial_pmf(spec.d - 1, s, spec.p) for s in range(spec.d)])
    killed = np.zeros(m_max)
    escaped = []
    killed[0] = live[0]
    live[0] = 0.0
    for j in range(1, m_max + 1):
        keep = m_max - j + 1
        escaped.append(float(live[keep:].sum()))
        live = live[:keep]
        if j == m_max:
            break
        live = np.convolve(live, kernel)[1:]
        killed[j] = live[0]
        live[0] = 0.0
    return killed, math.fsum(escaped)


def gw_total_pmf_exact(spec, m_max):
    """루트의 Bin(d, p) 와 독립 복사본들의 잘린 합성곱. m_max 너머 질량은 탐색 걸음으로 따로 계산"""
    if m_max < 1:
        raise GraphError(f"m_max must be >= 1, got {m_max}")
    sub = homogeneous_total_pmf(spec.d, spec.p, m_max)
    # power[s] = P(j 개 부분트리 크기 합 = s), s <= m_max - 1
    power = np.zeros(m_max)
    power[0] = 1.0
    full = np.zeros(m_max + 1)
    for j in range(spec.d + 1):
        weight = _binomial_pmf(spec.d, j, spec.p)
        full[1:] += weight * power
        power = np.convolve(power, sub[:m_max])[:m_max]
    masses = np.clip(full[1:], 0.0, None)
    if m_max > EXPLORATION_WALK_CAP:
        logger.warning(f"⚠️ m_max={m_max} > {EXPLORATION_WALK_CAP}: overflow 를 1 - 합으로 대체")
        return ProgenyPmf(masses, max(0.0, 1.0 - math.fsum(masses.tolist())), overflow_independent=False)
    _, overflow = _exploration_walk(spec, m_max)
    return ProgenyPmf(masses, overflow)


def gw_tail_check(spec, M_values):
    """P(|T| >= M) 와 sqrt(M) x 꼬리, c_hat = 최대값"""
    if spec.is_supercritical:
        raise GraphError(f"supercritical spec: (d-1)p = {float(spec.mean_offspring):.6g} > 1")
    M_values = sorted(int(M) for M in M_values)
    if not M_values or M_values[0] < 1:
        raise GraphError("M values must be positive integers")
    pmf = gw_total_pmf_exact(spec, max(M_values[-1] - 1, 1))
    tails = [pmf.tail(M) for M in M_values]
    table = pd.DataFrame({
        "M": M_values,
        "tail": tails,
        "scaled_tail": [math.sqrt(M) * t for M, t in zip(M_values, tails)],
    })
    return GwTailReport(table, float(table["scaled_tail"].max()))


# ---------------------------------------------------------------------------
# 레벨 크기
# ---------------------------------------------------------------------------

def _simulate_levels(spec, k_max, trials, seed):
    """(trials, k_max) 레벨 크기 |L_k|"""
    rng = seed.generator()
    p = float(spec.p)
    sizes = np.zeros((trials, k_max), dtype=np.int64)
    level = rng.binomial(spec.d, p, size=trials).astype(np.int64)
    sizes[:, 0] = level
    for k in range(1, k_max):
        level = rng.binomial((spec.d - 1) * level, p)
        sizes[:, k] = level
    return sizes


def level_mean_exact(spec, k):
    return spec.d * (spec.d - 1) ** (k - 1) * float(spec.p) ** k


def level_mean_check(spec, k_max, trials, seed, n=None, lam=None):
    """E|L_k| = d(d-1)^(k-1) p^k 와 Monte Carlo 비교, 임계 구간 상한 플래그"""
    if k_max < 1 or trials < 2:
        raise GraphError("need k_max >= 1 and trials >= 2")
    sizes = _simulate_levels(spec, k_max, trials, seed)
    ks = np.arange(1, k_max + 1)
    exact = np.array([level_mean_exact(spec, k) for k in ks])
    mean = sizes.mean(axis=0)
    sigma = sizes.std(axis=0, ddof=1) / math.sqrt(trials)
    table = pd.DataFrame({"k": ks, "exact": exact, "mc_mean": mean, "sigma": sigma})
    table["within_3sigma"] = np.abs(mean - exact) <= 3 * sigma + 1e-12

    p = float(spec.p)
    bound = np.full(k_max, np.nan)
    if p * (spec.d - 1) <= 1 + 1e-15:
        bound[:] = 2.0
    if n is not None and lam is not None and p <= (1 + lam * n ** (-1.0 / 3.0)) / (spec.d - 1):
        # 음의 lam 에서는 2e^lam 이 k=1 에서 이미 깨지므로 lam^+ 사용
        window = ks <= n ** (1.0 / 3.0)
        bound[window] = np.fmin(bound[window], 2.0 * math.exp(max(lam, 0.0)))
    table["bound"] = bound
    table["bound_ok"] = np.isnan(bound) | (exact <= bound + 1e-12)
    return table


def tree_resistance(spec, k):
    """루트에서 레벨 k 까지: sum_i (1-p) p^-i / (d (d-1)^(i-1)). Fraction p 는 정확 계산"""
    if not 0 < spec.p < 1:
        raise GraphError(f"tree resistance needs 0 < p < 1, got {spec.p}")
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    p = spec.p
    if isinstance(p, Fraction):
        return sum((1 - p) / (p ** i * spec.d * (spec.d - 1) ** (i - 1)) for i in range(1, k + 1))
    return math.fsum((1 - p) * p ** (-i) / (spec.d * (spec.d - 1) ** (i - 1)) for i in range(1, k + 1))


def survival_bound_check(spec, k_max, trials, seed):
    """Monte Carlo P(L_k 비어있지 않음) <= 2 / (1 + R_k) + 3 sigma"""
    if trials < 1:
        raise GraphError("trials must be >= 1")
    sizes = _simulate_levels(spec, k_max, trials, seed)
    q = (sizes > 0).mean(axis=0)
    sigma = np.sqrt(q * (1 - q) / trials)
    ks = np.arange(1, k_max + 1)
    bound = np.array([2.0 / (1.0 + float(tree_resistance(spec, int(k)))) for k in ks])
    return pd.DataFrame({
        "k": ks,
        "survival": q,
        "sigma": sigma,
        "bound": bound,
        "ok": q <= bound + 3 * sigma + 1e-12,
    })


# ---------------------------------------------------------------------------
# 지배 검사
# ---------------------------------------------------------------------------

def _check_degree(g, spec):
    if g.max_degree > spec.d:
        raise GraphError(f"graph max degree {g.max_degree} exceeds d={spec.d}")


def domination_check(g, spec, p, trials, M_values, seed):
    """임의 정점 클러스터 꼬리 P(|C(v)| >= M) 와 정확 GW 꼬리 비교"""
    _check_degree(g, spec)
    if trials < 1:
        raise GraphError("trials must be >= 1")
    M_values = sorted(int(M) for M in M_values)
    sizes = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        stream = seed.spawn(t)
        mask = percolate(g, p, stream)
        v = int(stream.derive(1).generator().integers(g.n))
        sizes[t] = component_of(g, mask, v).size
    pmf = gw_total_pmf_exact(spec, max(M_values[-1] - 1, 1))
    cluster = np.array([(sizes >= M).mean() for M in M_values])
    sigma = np.sqrt(cluster * (1 - cluster) / trials)
    gw = np.array([pmf.tail(M) for M in M_values])
    return pd.DataFrame({
        "M": M_values,
        "cluster_tail": cluster,
        "sigma": sigma,
        "gw_tail": gw,
        "ok": cluster <= gw + 3 * sigma + 1e-12,
    })


def domination_exact(g, spec, p, M_values):
    """2^m 개 마스크 전수 열거로 정점 평균 클러스터 꼬리를 정확히 계산 (m <= 20)"""
    _check_degree(g, spec)
    if g.m > EXHAUSTIVE_EDGE_CAP:
        raise CapExceededError(f"{g.m} edges exceed exhaustive cap {EXHAUSTIVE_EDGE_CAP}")
    M_values = sorted(int(M) for M in M_values)
    p = float(p)
    cluster = np.zeros(len(M_values))
    thresholds = np.array(M_values)
    for bits in range(2 ** g.m):
        chosen = np.array([(bits >> e) & 1 for e in range(g.m)], dtype=bool)
        kept = int(chosen.sum())
        weight = p ** kept * (1 - p) ** (g.m - kept)
        if weight == 0.0:
            continue
        adj = edges_to_csr(g.n, g.edges[chosen])
        _, labels = csgraph.connected_components(adj, directed=False)
        size_of = np.bincount(labels)[labels]
        cluster += weight * (size_of[:, None] >= thresholds[None, :]).mean(axis=0)
    pmf = gw_total_pmf_exact(spec, max(M_values[-1] - 1, 1))
    gw = np.array([pmf.tail(M) for M in M_values])
    return pd.DataFrame({
        "M": M_values,
        "cluster_tail": cluster,
        "gw_tail": gw,
        "ok": cluster <= gw + 1e-12,
    })
