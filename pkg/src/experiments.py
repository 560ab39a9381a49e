# experiments.py - 실험 오케스트레이션 (스케일링 적합, 꼬리 실험, 임계 구간, chi 곡선)
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.cluster.hierarchy import DisjointSet
from scipy import sparse
from scipy.sparse import csgraph

from components import (
    _bfs_levels,
    component_diameter,
    component_of,
    components,
    counting_profile,
    estimate_conditions,
    is_lane_rich,
    lanes,
    thin_good_levels,
    thin_level_chain,
)
from config import config as lab_config
from estimators import (
    FitResult,
    TailFit,
    central_differences,
    fit_power_law,
    loglog_slope,
    standard_error,
    tail_regression,
    wilson_interval,
)
from graph_core import (
    UINT64_MAX,
    GraphError,
    RngSeed,
    complete_graph,
    hypercube,
    percolate,
    random_regular,
    torus,
)
from mixing import LazyChain, certify, critical_lane_schedule

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GRAPH_STREAM = 0x6772617068
CONDITION_STREAM = 0x636F6E64
LANE_STREAM = 0x6C616E65

EXPECTED_EXPONENTS = {"size": 2.0 / 3.0, "diameter": 1.0 / 3.0, "t_mix": 1.0}


# ---------------------------------------------------------------------------
# 설정 / 레코드 모델
# ---------------------------------------------------------------------------

class ExperimentConfig(BaseModel):
    """실험 설정 (JSON 문서 하나로 읽는다)"""

    model_config = ConfigDict(extra="forbid")

    family: Literal["complete", "regular", "hypercube", "torus"] = "complete"
    d: Optional[int] = None
    dim: Optional[int] = None
    side: Optional[int] = None
    n_grid: List[int] = Field(default_factory=list)

    p_rule: Literal["window", "explicit", "grid"] = "window"
    lam: float = 0.0
    p: Optional[float] = None
    p_grid: Optional[List[float]] = None

    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, le=UINT64_MAX)
    components_per_trial: int = Field(default=1, ge=1)
    exact_diameter_cap: Optional[int] = Field(default=None, ge=1)
    exact_mixing_cap: Optional[int] = Field(default=None, ge=1)
    mixing: bool = True
    lane_certificate: bool = True
    beta: float = Field(default=1.0, gt=0)
    D: float = Field(default=2.0, gt=0)

    threads: Optional[int] = Field(default=None, ge=1)
    output: Optional[str] = None
    format: Literal["jsonl", "csv"] = "jsonl"
    timing: bool = False

    @field_validator("n_grid")
    @classmethod
    def _ascending(cls, grid):
        if any(n < 1 for n in grid):
            raise ValueError("n_grid entries must be positive")
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be strictly ascending")
        return grid

    @field_validator("p")
    @classmethod
    def _probability(cls, p):
        if p is not None and not 0.0 <= p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        return p

    @field_validator("p_grid")
    @classmethod
    def _probability_grid(cls, grid):
        if grid is None:
            return grid
        if any(not 0.0 <= p <= 1.0 for p in grid):
            raise ValueError("p_grid values must lie in [0, 1]")
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("p_grid must be strictly increasing")
        return grid

    @model_validator(mode="after")
    def _family_shape(self):
        if not self.n_grid and self.family == "torus" and self.side is not None:
            self.n_grid = [self.side ** (self.dim or 2)]
        if not self.n_grid and self.family == "hypercube" and self.dim is not None:
            self.n_grid = [2 ** self.dim]
        if not self.n_grid:
            raise ValueError("n_grid must not be empty")
        if self.p_rule == "explicit" and self.p is None:
            raise ValueError("p_rule 'explicit' needs p")
        if self.p_rule == "grid" and not self.p_grid:
            raise ValueError("p_rule 'grid' needs p_grid")
        if self.family == "regular":
            if self.d is None:
                raise ValueError("family 'regular' needs d")
            for n in self.n_grid:
                if not 3 <= self.d < n or (n * self.d) % 2:
                    raise ValueError(f"regular graph needs 3 <= d < n and n*d even (n={n}, d={self.d})")
        if self.family == "hypercube":
            for n in self.n_grid:
                if n < 2 or n & (n - 1):
                    raise ValueError(f"hypercube size must be a power of two, got {n}")
        if self.family == "torus":
            dim = self.dim or 2
            for n in self.n_grid:
                side = round(n ** (1.0 / dim))
                if side ** dim != n or side < 3:
                    raise ValueError(f"torus size {n} is not side^{dim} with side >= 3")
        return self


class ExperimentRecord(BaseModel):
    """성분 하나의 측정값. JSONL 한 줄"""

    schema_: int = Field(default=SCHEMA_VERSION, alias="schema", serialization_alias="schema")
    family: str
    n: int
    p: float
    lam: Optional[float] = None
    trial_id: int
    component_rank: int
    size: int
    edge_count: int
    diameter: Optional[int] = None
    diameter_lower: int
    diameter_upper: int
    t_mix: Optional[int] = None
    t_mix_lower: Optional[int] = None
    t_mix_upper: Optional[int] = None
    mixing_method: Literal["exact", "bounds", "skipped"] = "skipped"
    upper_diam: Optional[int] = None
    upper_hit: Optional[int] = None
    lower_lane: Optional[int] = None
    lane_failure: List[str] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    wall_time: Optional[float] = None

    model_config = {"populate_by_name": True}

    def sort_key(self):
        return (self.n, self.p, self.trial_id, self.component_rank)

    def consistent(self):
        """lower_lane <= t_mix <= min(upper_diam, upper_hit)"""
        if self.t_mix is None:
            return True
        uppers = [u for u in (self.upper_diam, self.upper_hit) if u is not None]
        lower = self.lower_lane or 0
        return lower <= self.t_mix <= min(uppers, default=self.t_mix)

    def to_json(self, timing=False):
        exclude = None if timing else {"wall_time"}
        return self.model_dump_json(by_alias=True, exclude=exclude)


# ---------------------------------------------------------------------------
# 그래프 / p / 시드
# ---------------------------------------------------------------------------

def family_degree(cfg, n):
    if cfg.family == "complete":
        return n - 1
    if cfg.family == "regular":
        return cfg.d
    if cfg.family == "hypercube":
        return int(round(math.log2(n)))
    return 2 * (cfg.dim or 2)


def window_p(cfg, n, lam=None):
    """임계 구간 p. 완전그래프는 (1 + lam n^-1/3) / n, 나머지는 / (d - 1)"""
    lam = cfg.lam if lam is None else lam
    denominator = n if cfg.family == "complete" else family_degree(cfg, n) - 1
    return float(min(1.0, max(0.0, (1.0 + lam * n ** (-1.0 / 3.0)) / denominator)))


def p_values(cfg, n):
    if cfg.p_rule == "window":
        return [window_p(cfg, n)]
    if cfg.p_rule == "explicit":
        return [cfg.p]
    return list(cfg.p_grid)


def task_seed(cfg, n, trial_id):
    return RngSeed(cfg.seed).derive(n).spawn(trial_id)


@lru_cache(maxsize=8)
def _fixed_graph(family, n, dim):
    if family == "complete":
        return complete_graph(n)
    if family == "hypercube":
        return hypercube(int(round(math.log2(n))))
    side = round(n ** (1.0 / dim))
    return torus(side, dim)


def build_graph(cfg, n, seed):
    if cfg.family == "regular":
        return random_regular(n, cfg.d, seed.derive(GRAPH_STREAM))
    return _fixed_graph(cfg.family, n, cfg.dim or 2)


def run_tasks(fn, tasks, threads=None):
    """프로세스 풀로 실행하되 결과는 항상 task 순서대로"""
    threads = threads or lab_config.THREADS
    if threads <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# 분석
# ---------------------------------------------------------------------------

def analyze_component(c, cfg, *, n, p, trial_id, rank):
    started = time.perf_counter()
    flags = []
    diameter, lower, upper, exact = component_diameter(c, cfg.exact_diameter_cap)
    if not exact:
        flags.append("diameter_bounds")
    record = dict(
        family=cfg.family, n=n, p=p, lam=cfg.lam if cfg.p_rule == "window" else None,
        trial_id=trial_id, component_rank=rank, size=c.size, edge_count=c.edge_count,
        diameter=diameter, diameter_lower=lower, diameter_upper=upper,
    )
    if cfg.mixing:
        chain = LazyChain(c)
        lane_params = critical_lane_schedule(n, cfg.beta, cfg.D) if cfg.lane_certificate else None
        cert = certify(chain, diam=upper, lane_params=lane_params, mixing_cap=cfg.exact_mixing_cap)
        record.update(
            t_mix=cert.t_mix, t_mix_lower=cert.t_lower, t_mix_upper=cert.t_upper,
            mixing_method=cert.method, upper_diam=cert.upper_diam, upper_hit=cert.upper_hit,
        )
        if cert.method == "bounds":
            flags.append("mixing_bounds")
        if cert.lower_lane is not None:
            record["lower_lane"] = cert.lower_lane.bound
            record["lane_failure"] = list(cert.lower_lane.failed)
            if cert.lower_lane.fired:
                flags.append("lane_certified")
    else:
        flags.append("mixing_skipped")
    record["flags"] = flags
    if cfg.timing:
        record["wall_time"] = round(time.perf_counter() - started, 6)
    return ExperimentRecord(**record)


def analyze_trial(cfg, n, trial_id):
    """마스크 하나, 상위 components_per_trial 개 성분. grid 규칙은 같은 난수로 p 마다 재임계"""
    seed = task_seed(cfg, n, trial_id)
    g = build_graph(cfg, n, seed)
    records = []
    mask = None
    for p in p_values(cfg, n):
        mask = percolate(g, p, seed) if mask is None or not mask.coupled else mask.at(p)
        for rank, c in enumerate(components(g, mask)[:cfg.components_per_trial]):
            records.append(analyze_component(c, cfg, n=n, p=p, trial_id=trial_id, rank=rank))
    return records


def _analyze_task(task):
    cfg, n, trial_id = task
    return analyze_trial(cfg, n, trial_id)


def analyze_all(cfg):
    tasks = [(cfg, n, t) for n in cfg.n_grid for t in range(cfg.trials)]
    logger.info("🚀 analyzing %d trials (%s, n_grid=%s)", len(tasks), cfg.family, cfg.n_grid)
    batches = run_tasks(_analyze_task, tasks, cfg.threads)
    records = sorted((r for batch in batches for r in batch), key=ExperimentRecord.sort_key)
    bad = [r for r in records if not r.consistent()]
    if bad:
        raise GraphError(f"{len(bad)} records violate the mixing bound sandwich")
    return records


def records_frame(records):
    frame = pd.DataFrame([r.model_dump(by_alias=True) for r in records])
    if frame.empty:
        return frame
    for column in ("diameter", "t_mix", "t_mix_lower", "t_mix_upper", "upper_diam", "upper_hit", "lower_lane"):
        frame[column] = pd.to_numeric(frame[column])
    frame["diameter_value"] = frame["diameter"].where(
        frame["diameter"].notna(), (frame["diameter_lower"] + frame["diameter_upper"]) / 2.0)
    return frame


@dataclass
class ScalingResult:
    records: list
    fits: dict
    medians: pd.DataFrame
    quantiles: pd.DataFrame

    def summary(self):
        return {
            name: {"expected": EXPECTED_EXPONENTS[name], **(fit.model_dump() if fit else {"refused": True})}
            for name, fit in self.fits.items()
        }


def run_scaling(cfg):
    """|C_1| ~ n^(2/3), diam ~ n^(1/3), T_mix ~ n 지수 적합 (n 별 중앙값)"""
    records = analyze_all(cfg)
    frame = records_frame(records)
    largest = frame[frame["component_rank"] == 0]
    if cfg.p_rule == "grid":
        logger.warning("⚠️ p grid given: scaling fits use the first grid value only")
        largest = largest[largest["p"] == largest.groupby("n")["p"].transform("min")]

    medians = largest.groupby("n").agg(
        size=("size", "median"), diameter=("diameter_value", "median")).reset_index()
    mixing_cap = cfg.exact_mixing_cap or lab_config.EXACT_MIXING_CAP
    t_mix = largest.groupby("n")["t_mix"].agg(
        lambda s: s.median() if s.notna().all() else np.nan)
    medians["t_mix"] = medians["n"].map(t_mix)

    fits = {
        "size": fit_power_law(medians["n"], medians["size"]),
        "diameter": fit_power_law(medians["n"], medians["diameter"]),
    }
    mixable = medians[(medians["n"] ** (2.0 / 3.0) <= mixing_cap) & medians["t_mix"].notna()]
    fits["t_mix"] = fit_power_law(mixable["n"], mixable["t_mix"]) if cfg.mixing else None

    columns = [c for c in ("size", "edge_count", "diameter_value", "t_mix") if c in largest]
    quantiles = largest.groupby("n")[columns].quantile([0.1, 0.5, 0.9]).unstack()
    quantiles.columns = [f"{col}_q{int(q * 100)}" for col, q in quantiles.columns]
    for name, fit in fits.items():
        if fit is not None:
            logger.info("✅ %s slope %.4f ± %.4f (expected %.4f)",
                        name, fit.slope, fit.stderr, EXPECTED_EXPONENTS[name])
    return ScalingResult(records, fits, medians, quantiles.reset_index())


# ---------------------------------------------------------------------------
# 꼬리 실험
# ---------------------------------------------------------------------------

def _require_family(cfg, allowed):
    if cfg.family not in allowed:
        raise GraphError(f"experiment needs family in {sorted(allowed)}, got {cfg.family}")


def _trial_mask(cfg, n, trial_id):
    seed = task_seed(cfg, n, trial_id)
    g = build_graph(cfg, n, seed)
    return g, percolate(g, p_values(cfg, n)[0], seed)


def _max_diameter(comps, cap):
    """크기 내림차순 성분에서 최대 지름 (하한, 상한). size-1 <= 현재 하한이면 중단"""
    best_lower, best_upper = 0, 0
    for c in comps:
        if c.size - 1 <= best_lower:
            break
        _, lower, upper, _ = component_diameter(c, cap)
        best_lower, best_upper = max(best_lower, lower), max(best_upper, upper)
    return best_lower, max(best_upper, best_lower)


def _tail_diam_task(task):
    cfg, n, trial_id = task
    g, mask = _trial_mask(cfg, n, trial_id)
    lower, upper = _max_diameter(components(g, mask), cfg.exact_diameter_cap)
    return n, trial_id, lower, upper


def _exceedance_rows(n, label, values, events, trials, ambiguous=None):
    rows = []
    for i, value in enumerate(values):
        low, high = wilson_interval(events[i], trials)
        row = {"n": n, label: value, "trials": trials, "events": int(events[i]),
               "p_hat": events[i] / trials, "ci_low": low, "ci_high": high,
               "upper_only": bool(events[i] == 0)}
        if ambiguous is not None:
            row["ambiguous"] = int(ambiguous[i])
        rows.append(row)
    return rows


@dataclass
class TailResult:
    table: pd.DataFrame
    fits: dict = field(default_factory=dict)


def run_tail_diam(cfg, A_grid):
    """P(max diam > A n^(1/3)) 와 log P ~ -c A^(3/2) 회귀"""
    _require_family(cfg, {"complete", "regular"})
    A_grid = sorted(float(a) for a in A_grid)
    tasks = [(cfg, n, t) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_tail_diam_task, tasks, cfg.threads)
    rows, fits = [], {}
    for n in cfg.n_grid:
        got = [(lo, hi) for m, _, lo, hi in results if m == n]
        lo = np.array([x[0] for x in got])
        hi = np.array([x[1] for x in got])
        thresholds = np.array(A_grid) * n ** (1.0 / 3.0)
        events = [(lo > thr).sum() for thr in thresholds]
        ambiguous = [((lo <= thr) & (hi > thr)).sum() for thr in thresholds]
        rows.extend(_exceedance_rows(n, "A", A_grid, events, cfg.trials, ambiguous))
        fits[n] = tail_regression(A_grid, events, cfg.trials)
        if fits[n] is not None:
            logger.info("✅ n=%d tail c_hat %.4f [%.4f, %.4f]", n, fits[n].c_hat, fits[n].ci_low, fits[n].ci_high)
    return TailResult(pd.DataFrame(rows), fits)


def _small_diam_task(task):
    cfg, n, trial_id, M = task
    g, mask = _trial_mask(cfg, n, trial_id)
    small = [c for c in components(g, mask) if c.size < M]
    lower, _ = _max_diameter(small, cfg.exact_diameter_cap)
    return n, trial_id, lower


def run_small_component_diam(cfg, M, D2_grid, D1):
    """|C| < M 이면서 diam > D2 sqrt(M log(n / M^(3/2))) 인 성분 존재 확률 vs (M^(3/2)/n)^D1"""
    for n in cfg.n_grid:
        if not M < n ** (2.0 / 3.0) / 2.0:
            raise GraphError(f"need M < n^(2/3)/2 (M={M}, n={n})")
    D2_grid = sorted(float(x) for x in D2_grid)
    tasks = [(cfg, n, t, M) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_small_diam_task, tasks, cfg.threads)
    rows = []
    for n in cfg.n_grid:
        diam = np.array([d for m, _, d in results if m == n])
        scale = math.sqrt(M * math.log(n / M ** 1.5))
        events = [(diam > D2 * scale).sum() for D2 in D2_grid]
        bound = (M ** 1.5 / n) ** D1
        for row in _exceedance_rows(n, "D2", D2_grid, events, cfg.trials):
            row.update(M=M, D1=D1, bound=bound, below_bound=row["ci_low"] <= bound)
            rows.append(row)
    return TailResult(pd.DataFrame(rows))


def _edge_tail_task(task):
    cfg, n, trial_id = task
    g, mask = _trial_mask(cfg, n, trial_id)
    count, labels = csgraph.connected_components(mask.subgraph, directed=False)
    edges = mask.retained_edges()
    if edges.shape[0] == 0:
        return n, trial_id, 0
    return n, trial_id, int(np.bincount(labels[edges[:, 0]], minlength=count).max())


def run_edge_tail(cfg, A_grid):
    """P(max |E(C)| > A n^(2/3)) 와 로그-로그 감소 기울기 (<= -0.8 이면 decay_ok)"""
    A_grid = sorted(float(a) for a in A_grid)
    tasks = [(cfg, n, t) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_edge_tail_task, tasks, cfg.threads)
    rows, fits = [], {}
    for n in cfg.n_grid:
        edges = np.array([e for m, _, e in results if m == n])
        events = [(edges > A * n ** (2.0 / 3.0)).sum() for A in A_grid]
        table = _exceedance_rows(n, "A", A_grid, events, cfg.trials)
        usable = [(A, r["p_hat"]) for A, r in zip(A_grid, table) if r["events"] >= 5]
        fit = loglog_slope([u[0] for u in usable], [u[1] for u in usable])
        fits[n] = fit
        for row in table:
            row["decay_ok"] = bool(fit is not None and fit.slope <= -0.8)
        rows.extend(table)
    return TailResult(pd.DataFrame(rows), fits)


# ---------------------------------------------------------------------------
# 경계 대조 실험 (마르코프 경계, 레인 사건, 작은 성분 지름)
# ---------------------------------------------------------------------------

def _mean_row(n, quantity, values, bound, in_range):
    """평균 - 3 se <= bound 이면 bound_ok"""
    values = np.asarray(values, dtype=np.float64)
    mean, se = float(values.mean()), standard_error(values)
    return {"n": n, "quantity": quantity, "kind": "mean", "trials": int(values.size),
            "estimate": mean, "ci_low": mean - 3 * se, "ci_high": mean + 3 * se,
            "bound": float(bound), "bound_ok": bool(mean - 3 * se <= bound), "in_range": bool(in_range)}


def _event_row(n, quantity, events, trials, bound, in_range):
    """Wilson 하한 <= bound 이면 bound_ok"""
    low, high = wilson_interval(int(events), trials)
    return {"n": n, "quantity": quantity, "kind": "prob", "trials": trials,
            "estimate": events / trials, "ci_low": low, "ci_high": high,
            "bound": float(bound), "bound_ok": bool(low <= bound), "in_range": bool(in_range)}


def _condition_constants(cfg, c1, c2):
    ref1, ref2 = condition_references(cfg.lam)
    return (ref1 if c1 is None else c1), (ref2 if c2 is None else c2)


def _profile_task(task):
    cfg, n, trial_id, M, R, r = task
    g, mask = _trial_mask(cfg, n, trial_id)
    return n, counting_profile(g, mask, M, R, r)


def run_markov_bounds(cfg, M, R, r, A_tilde=(1.0, 2.0, 4.0), c1=None, c2=None):
    """diam > R / diam < r 계수 변수의 평균과 존재 확률을 각 마르코프 경계와 비교.

    |C_1| 평균은 (2c1 + c2 + 2) n^(2/3), P(|C_1| >= A n^(2/3)) 는 그 값 / A 와 비교한다.
    in_range 는 경계가 성립하는 R < 2 n^(1/3), r < n^(1/3) 범위 표시.
    """
    _require_family(cfg, {"complete", "regular"})
    if M < 1 or R < 1 or r < 1:
        raise GraphError(f"need positive M, R, r (got M={M}, R={R}, r={r})")
    c1, c2 = _condition_constants(cfg, c1, c2)
    tasks = [(cfg, n, t, M, R, r) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_profile_task, tasks, cfg.threads)
    rows = []
    for n in cfg.n_grid:
        got = [prof for m, prof in results if m == n]
        trials = len(got)
        cube = n ** (1.0 / 3.0)
        long_ok, short_ok = R < 2 * cube, r < cube
        rows.append(_mean_row(n, "diam_gt_R_fraction", [p.long_vertices / n for p in got], 2 * c2 / R, long_ok))
        rows.append(_event_row(n, "large_long_exists", sum(p.large_long for p in got), trials,
                               2 * c2 * n / (M * R), long_ok))
        rows.append(_mean_row(n, "large_short_fraction", [p.large_short_vertices / n for p in got],
                              c1 * r / M, short_ok))
        rows.append(_event_row(n, "large_short_exists", sum(p.large_short for p in got), trials,
                               c1 * r * n / M ** 2, short_ok))
        scale = n ** (2.0 / 3.0)
        largest = np.array([p.largest for p in got], dtype=np.float64)
        mean_bound = 2 * c1 + c2 + 2
        rows.append(_mean_row(n, "largest_scaled", largest / scale, mean_bound, True))
        for a in sorted(float(x) for x in A_tilde):
            row = _event_row(n, "largest_ge_A", int((largest >= a * scale).sum()), trials, mean_bound / a, True)
            row["A"] = a
            rows.append(row)
    table = pd.DataFrame(rows)
    broken = table[table["in_range"] & ~table["bound_ok"]]
    if not broken.empty:
        logger.warning("⚠️ %d in-range rows exceed their bound: %s", len(broken), broken["quantity"].tolist())
    return TailResult(table)


def _lane_event_task(task):
    cfg, n, trial_id, params, beta = task
    g, mask = _trial_mask(cfg, n, trial_id)
    v = int(task_seed(cfg, n, trial_id).derive(LANE_STREAM).generator().integers(g.n))
    c = component_of(g, mask, v)
    h, r = params["h"], params["r"]
    levels = _bfs_levels(c.adjacency, c.local_index(v), limit=max(h, r))
    large = c.size > beta * n ** (2.0 / 3.0)
    small_ball = int(np.count_nonzero((levels >= 0) & (levels <= h))) < params["m"]

    ecc = int(levels.max())
    # 레벨 r 에 닿지 못하면 레인이 없다
    rich = ecc >= r and is_lane_rich(lanes(c, v, r), params["L"], params["k"])

    coo = sparse.triu(c.adjacency).tocoo()
    lu, lv = levels[coo.row], levels[coo.col]
    ball_edges = int(np.count_nonzero((lu >= 0) & (lu <= r) & (lv >= 0) & (lv <= r)))
    dense_ball = ball_edges >= params["alpha"] * r ** 2
    return n, bool(large and small_ball), bool(rich), bool(dense_ball)


def _lane_params(cfg, n, params):
    if params is None:
        params = dict(critical_lane_schedule(n, cfg.beta, cfg.D))
        params["alpha"] = params["L"] / 20.0
    missing = {"h", "m", "k", "r", "L", "alpha"} - set(params)
    if missing:
        raise GraphError(f"lane parameters missing {sorted(missing)}")
    if not 1 <= params["k"] < params["r"]:
        raise GraphError(f"need 1 <= k < r, got k={params['k']}, r={params['r']}")
    if params["h"] < 1 or params["m"] < 1 or params["L"] < 1 or params["alpha"] <= 0:
        raise GraphError(f"lane parameters must be positive: {params}")
    return {key: params[key] for key in ("h", "m", "k", "r", "L", "alpha")}


def run_lane_events(cfg, params=None, beta=None, c1=None, c2=None):
    """임의 정점 v 의 세 사건 빈도를 각 상한과 비교.

    small_ball: |C(v)| > beta n^(2/3) 이고 |B_p(v,h)| < m, 상한 4 m c2^2 / h^3 + 4 c1 h / (beta n^(2/3))
    lane_rich: v 가 (k, r) 에 대해 L-레인 풍부, 상한 8 c1 c2 / (L r)
    dense_ball: |E(B_p(v,r))| >= alpha r^2, 상한 c1 / (alpha r)
    params 가 None 이면 n 별 critical_lane_schedule 과 alpha = L / 20.
    """
    _require_family(cfg, {"complete", "regular"})
    beta = cfg.beta if beta is None else beta
    c1, c2 = _condition_constants(cfg, c1, c2)
    rows = []
    for n in cfg.n_grid:
        got = _lane_params(cfg, n, params)
        h, m, k, r, L, alpha = (got[key] for key in ("h", "m", "k", "r", "L", "alpha"))
        tasks = [(cfg, n, t, got, beta) for t in range(cfg.trials)]
        flags = np.array([res[1:] for res in run_tasks(_lane_event_task, tasks, cfg.threads)], dtype=bool)
        cube = n ** (1.0 / 3.0)
        bounds = [
            ("small_ball", 4 * m * c2 ** 2 / h ** 3 + 4 * c1 * h / (beta * n ** (2.0 / 3.0)), h < cube / 4),
            ("lane_rich", 8 * c1 * c2 / (L * r), k <= r / 2 and r < cube),
            ("dense_ball", c1 / (alpha * r), r < cube),
        ]
        for j, (name, bound, in_range) in enumerate(bounds):
            row = _event_row(n, name, int(flags[:, j].sum()), cfg.trials, bound, in_range)
            row.update(h=h, m=m, k=k, r=r, L=L, alpha=alpha)
            rows.append(row)
    return TailResult(pd.DataFrame(rows))


def small_diameter_bounds(n, M, R, c2):
    """작은 성분이 긴 지름을 가질 확률의 (정점별, 존재) 상한과 각 가정 충족 여부"""
    head = max(2.0 / R, n ** (-1.0 / 3.0))
    slope = 64 * c2 + 2
    vertex = c2 * head * 2.0 ** (-R ** 2 / (slope * M))
    exists = 4 * c2 * head * 2.0 ** (-R ** 2 / (2 * slope * M)) * n / M
    vertex_ok = R > 16 * c2 * M * n ** (-1.0 / 3.0)
    exists_ok = R > 32 * c2 * M * n ** (-1.0 / 3.0) and R > math.sqrt(4 * slope * M)
    return vertex, exists, vertex_ok, exists_ok


def run_small_diam_bounds(cfg, M, R, c2=None):
    """|C| <= M 이고 diam > 2R 인 정점 비율과 그런 성분의 존재 빈도를 상한과 비교"""
    _require_family(cfg, {"complete", "regular"})
    if M < 1 or R < 1:
        raise GraphError(f"need positive M and R (got M={M}, R={R})")
    _, c2 = _condition_constants(cfg, None, c2)
    tasks = [(cfg, n, t, M, R, None) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_profile_task, tasks, cfg.threads)
    rows = []
    for n in cfg.n_grid:
        got = [prof for m, prof in results if m == n]
        vertex, exists, vertex_ok, exists_ok = small_diameter_bounds(n, M, R, c2)
        rows.append(_mean_row(n, "small_long_fraction", [p.small_long_vertices / n for p in got], vertex, vertex_ok))
        rows.append(_event_row(n, "small_long_exists", sum(p.small_long for p in got), len(got), exists, exists_ok))
    table = pd.DataFrame(rows)
    table["hypotheses_ok"] = table["in_range"]
    if not table["hypotheses_ok"].any():
        logger.warning("⚠️ M=%d, R=%d: no row meets the bound hypotheses at these n", M, R)
    return TailResult(table)


# ---------------------------------------------------------------------------
# 임계 구간 (무작위 정칙 그래프)
# ---------------------------------------------------------------------------

def condition_references(lam):
    """c1 = 2e^(lam+), c2 = 6 (lam <= 0) 또는 8e^lam"""
    c1 = 2.0 * math.exp(max(lam, 0.0))
    c2 = 6.0 if lam <= 0 else 8.0 * math.exp(lam)
    return c1, c2


def _window_task(task):
    d, n, p, seed, threshold = task
    g = random_regular(n, d, seed.derive(GRAPH_STREAM))
    mask = percolate(g, p, seed)
    _, labels = csgraph.connected_components(mask.subgraph, directed=False)
    return bool(np.bincount(labels).max() > threshold)


@dataclass
class WindowResult:
    table: pd.DataFrame
    increasing: bool


def run_window(d, n, lambdas, trials, beta, k_max, seed, threads=None):
    """lam 별 P(|C_1| > beta n^(2/3)) 와 성장 조건 상수 추정"""
    lambdas = sorted(float(x) for x in lambdas)
    base = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    threshold = beta * n ** (2.0 / 3.0)
    rows = []
    for i, lam in enumerate(lambdas):
        p = min(1.0, (1.0 + lam * n ** (-1.0 / 3.0)) / (d - 1))
        lam_seed = base.derive(i)
        hits = run_tasks(_window_task, [(d, n, p, lam_seed.spawn(t), threshold) for t in range(trials)], threads)
        events = int(sum(hits))
        low, high = wilson_interval(events, trials)
        g = random_regular(n, d, lam_seed.derive(CONDITION_STREAM))
        estimate = estimate_conditions(g, p, k_max, trials, lam_seed.derive(CONDITION_STREAM + 1))
        c1, c2 = condition_references(lam)
        ok1, ok2 = estimate.satisfies(c1, c2)
        rows.append({
            "lam": lam, "p": p, "trials": trials, "prob_large": events / trials,
            "ci_low": low, "ci_high": high,
            "c1_hat": estimate.c1_hat, "c1_se": estimate.c1_se, "c1_ref": c1, "c1_ok": ok1,
            "c2_hat": estimate.c2_hat, "c2_se": estimate.c2_se, "c2_ref": c2, "c2_ok": ok2,
        })
        logger.info("✅ lam=%.2f P(large)=%.3f c1=%.3f c2=%.3f", lam, events / trials, estimate.c1_hat, estimate.c2_hat)
    table = pd.DataFrame(rows)
    return WindowResult(table, bool(np.all(np.diff(table["prob_large"]) >= 0)))


# ---------------------------------------------------------------------------
# 얇은/좋은 레벨
# ---------------------------------------------------------------------------

def _good_level_task(task):
    cfg, n, trial_id, M, R, span = task
    g, mask = _trial_mask(cfg, n, trial_id)
    h = max(2, math.ceil(M / R))
    span = span if span is not None else math.ceil(16 * 6.0 * h)
    checked = chain_levels = good_in_chain = thin_total = good_thin_total = 0
    for c in components(g, mask):
        if c.size > M or c.size - 1 <= 2 * R:
            continue
        diameter, _, upper, _ = component_diameter(c, cfg.exact_diameter_cap)
        if (diameter if diameter is not None else upper) <= 2 * R:
            continue
        far = int(np.argmax(_bfs_levels(c.adjacency, c.local_index(c.root))))
        v = int(c.vertices[far])
        levels = thin_good_levels(c, v, h, span)
        chain = thin_level_chain(levels, R / 2.0, span)
        checked += 1
        chain_levels += len(chain)
        good_in_chain += int(levels.good[chain].sum()) if chain else 0
        thin_total += int(levels.thin.sum())
        good_thin_total += int((levels.thin & levels.good).sum())
    return n, checked, chain_levels, good_in_chain, thin_total, good_thin_total


def run_good_level_check(cfg, M, R, span=None):
    """|C| <= M, diam > 2R 성분에서 P(good | thin) 경험값 (1/2 이하 기대)"""
    if not 2 * R < M:
        raise GraphError(f"need 2R < M (R={R}, M={M})")
    tasks = [(cfg, n, t, M, R, span) for n in cfg.n_grid for t in range(cfg.trials)]
    results = run_tasks(_good_level_task, tasks, cfg.threads)
    rows = []
    for n in cfg.n_grid:
        sums = np.array([r[1:] for r in results if r[0] == n]).sum(axis=0)
        checked, chain_levels, good_chain, thin_total, good_thin = (int(x) for x in sums)
        rate = good_chain / chain_levels if chain_levels else float("nan")
        sigma = math.sqrt(rate * (1 - rate) / chain_levels) if chain_levels else float("nan")
        rows.append({
            "n": n, "M": M, "R": R, "components": checked,
            "chain_levels": chain_levels, "good_chain_levels": good_chain,
            "p_good_given_thin": rate,
            "thin_levels": thin_total, "good_thin_levels": good_thin,
            "bound_ok": bool(not chain_levels or rate <= 0.5 + 3 * sigma),
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# chi(p) 와 임계 확률 탐색
# ---------------------------------------------------------------------------

@dataclass
class ChiCurve:
    table: pd.DataFrame
    n: int


@dataclass
class CriticalEstimate:
    p_hat: float
    ratio_max: float
    p_chi_target: Optional[float] = None
    chi_lambda: Optional[float] = None


def _chi_trial(g, p_grid, stream):
    """하나의 균등난수 집합으로 p 격자 전체를 union-find 스윕"""
    uniforms = stream.uniforms(g.m)
    root = int(stream.derive(1).generator().integers(g.n))
    order = np.argsort(uniforms, kind="stable")
    sets = DisjointSet(range(g.n))
    out = np.empty(len(p_grid))
    pos = 0
    for i, p in enumerate(p_grid):
        while pos < g.m and uniforms[order[pos]] < p:
            u, v = g.edges[order[pos]]
            sets.merge(int(u), int(v))
            pos += 1
        out[i] = sets.subset_size(root)
    return out


def chi_curve(g, p_grid, trials, seed):
    """chi(p) = E|C(v)| 추정 (임의 루트), chi' 중앙 차분, chi'/chi"""
    if g.is_implicit:
        raise GraphError("chi sweep needs an explicit edge list")
    p_grid = [float(p) for p in p_grid]
    if len(p_grid) < 3:
        raise GraphError("p grid needs at least 3 points for differencing")
    if any(a >= b for a, b in zip(p_grid, p_grid[1:])) or p_grid[0] < 0 or p_grid[-1] > 1:
        raise GraphError("p grid must be strictly increasing inside [0, 1]")
    if trials < 1:
        raise GraphError("trials must be >= 1")
    samples = np.array([_chi_trial(g, p_grid, seed.spawn(t)) for t in range(trials)])
    chi = samples.mean(axis=0)
    table = pd.DataFrame({
        "p": p_grid,
        "chi": chi,
        "sigma": [standard_error(samples[:, i]) for i in range(len(p_grid))],
    })
    table["chi_prime"] = central_differences(table["p"], table["chi"])
    table["ratio"] = table["chi_prime"] / table["chi"]
    return ChiCurve(table, g.n)


def critical_p(curve, chi_lambda=None):
    """argmax chi'/chi (동률은 작은 p), 그리고 chi(p) = lam |V|^(1/3) 교차점 (선형 보간)"""
    table = curve.table
    best = int(np.argmax(table["ratio"].to_numpy()))
    estimate = CriticalEstimate(float(table.at[best, "p"]), float(table.at[best, "ratio"]))
    if chi_lambda is not None:
        target = chi_lambda * curve.n ** (1.0 / 3.0)
        chi = table["chi"].to_numpy()
        above = np.flatnonzero(chi >= target)
        if above.size:
            i = int(above[0])
            if i == 0:
                p_b = float(table.at[0, "p"])
            else:
                p0, p1 = table.at[i - 1, "p"], table.at[i, "p"]
                c0, c1 = chi[i - 1], chi[i]
                p_b = float(p0 + (target - c0) * (p1 - p0) / (c1 - c0))
            estimate.p_chi_target = p_b
        estimate.chi_lambda = chi_lambda
    return estimate
