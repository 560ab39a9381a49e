# components.py - 연결 성분 추출, 정확 지름, BFS 레벨, 구조 통계 (레인/얇은 레벨/조건 추정)
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import pandas as pd
from scipy.sparse import csgraph

from config import config
from graph_core import CapExceededError, GraphError, edges_to_csr, percolate

logger = logging.getLogger(__name__)

DIAMETER_CHUNK = 256


@dataclass(frozen=True, eq=False)
class Component:
    """G_p 의 연결 성분 하나. vertices 는 전역 번호 오름차순"""

    vertices: np.ndarray
    edge_count: int
    host_adjacency: object
    graph: object = None
    mask: object = None
    root_hint: Optional[int] = None

    @property
    def size(self):
        return int(self.vertices.shape[0])

    def __len__(self):
        return self.size

    @cached_property
    def adjacency(self):
        """성분 내부 번호(0..size-1) 기준 CSR"""
        sub = self.host_adjacency[self.vertices][:, self.vertices]
        return sub.tocsr()

    @cached_property
    def degrees(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    @property
    def is_tree(self):
        return self.edge_count == self.size - 1

    def local_index(self, v):
        pos = int(np.searchsorted(self.vertices, v))
        if pos >= self.size or self.vertices[pos] != v:
            raise GraphError(f"vertex {v} is not in this component")
        return pos

    def contains(self, v):
        pos = int(np.searchsorted(self.vertices, v))
        return pos < self.size and self.vertices[pos] == v

    @property
    def root(self):
        return self.root_hint if self.root_hint is not None else int(self.vertices[0])


@dataclass(frozen=True)
class BfsLayers:
    origin: int
    layers: list
    level_of: np.ndarray

    @property
    def eccentricity(self):
        return len(self.layers) - 1

    def sizes(self):
        return np.array([len(layer) for layer in self.layers], dtype=np.int64)


@dataclass(frozen=True)
class LaneReport:
    v: int
    r: int
    lanes_per_level: np.ndarray  # 인덱스 j = 1..r, 0 번은 사용하지 않음

    def lanes_at(self, j):
        if not 1 <= j <= self.r:
            raise GraphError(f"level {j} outside 1..{self.r}")
        return int(self.lanes_per_level[j])


@dataclass(frozen=True)
class ThinGoodLevels:
    v: int
    h: int
    span: int
    sizes: np.ndarray
    thin: np.ndarray
    good: np.ndarray


@dataclass(frozen=True)
class ConditionEstimate:
    """성장 조건 Monte Carlo 추정 (k 별 표 + 최대값)"""

    table: pd.DataFrame
    c1_hat: float
    c1_se: float
    c2_hat: float
    c2_se: float
    trials: int

    def satisfies(self, c1, c2, sigmas=3.0):
        """모든 k 에서 한쪽 검정: 추정치 <= 상수 + sigmas * 표준오차"""
        t = self.table
        ok1 = (t["edges_per_k"] <= c1 + sigmas * t["edges_per_k_se"]).all()
        ok2 = (t["k_survival"] <= c2 + sigmas * t["k_survival_se"]).all()
        return bool(ok1), bool(ok2)


# ---------------------------------------------------------------------------
# 성분 추출
# ---------------------------------------------------------------------------

def components(g, mask):
    """크기 내림차순, 동률은 가장 작은 정점 번호 순"""
    if mask.graph is not g and mask.graph != g:
        raise GraphError("mask does not belong to this graph")
    adj = mask.subgraph
    count, labels = csgraph.connected_components(adj, directed=False)
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=count)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    first_vertex = order[starts]
    edges = mask.retained_edges()
    edge_counts = np.bincount(labels[edges[:, 0]], minlength=count) if edges.shape[0] else np.zeros(count, np.int64)
    ranking = np.lexsort((first_vertex, -sizes))
    result = []
    for label in ranking.tolist():
        lo = starts[label]
        verts = order[lo:lo + sizes[label]]
        result.append(Component(verts, int(edge_counts[label]), adj, g, mask))
    return result


def largest_component(g, mask):
    return components(g, mask)[0]


def component_of(g, mask, v):
    adj = mask.subgraph
    dist = csgraph.dijkstra(adj, directed=False, indices=v, unweighted=True)
    verts = np.flatnonzero(np.isfinite(dist))
    edges = mask.retained_edges()
    inside = np.isfinite(dist[edges[:, 0]]) if edges.shape[0] else np.zeros(0, bool)
    return Component(verts, int(inside.sum()), adj, g, mask, root_hint=int(v))


def whole_graph_component(g, root_hint=None):
    """연결 그래프 전체를 하나의 성분으로 (손으로 만든 예제용)"""
    adj = edges_to_csr(g.n, g.edges)
    count, _ = csgraph.connected_components(adj, directed=False)
    if count != 1:
        raise GraphError(f"graph {g.name} is not connected ({count} components)")
    return Component(np.arange(g.n, dtype=np.int64), g.m, adj, g, None, root_hint)


def component_sizes(g, mask):
    """모든 성분 크기만 (내림차순) - 큰 n 실험에서 가벼운 경로"""
    _, labels = csgraph.connected_components(mask.subgraph, directed=False)
    return np.sort(np.bincount(labels))[::-1]


# ---------------------------------------------------------------------------
# 거리, 지름
# ---------------------------------------------------------------------------

def _bfs_levels(adj, source, limit=np.inf):
    dist = csgraph.dijkstra(adj, directed=False, indices=source, unweighted=True, limit=limit)
    levels = np.full(dist.shape[0], -1, dtype=np.int64)
    finite = np.isfinite(dist)
    levels[finite] = dist[finite].astype(np.int64)
    return levels


def eccentricity(c, v):
    return int(_bfs_levels(c.adjacency, c.local_index(v)).max())


def diameter_exact(c, cap=None):
    """모든 정점에서 BFS. 상한 초과 시 diameter_bounds 를 써야 한다"""
    cap = config.EXACT_DIAMETER_CAP if cap is None else cap
    if c.size > cap:
        raise CapExceededError(
            f"component of size {c.size} exceeds exact-diameter cap {cap}")
    if c.size <= 1:
        return 0
    adj = c.adjacency
    best = 0
    for lo in range(0, c.size, DIAMETER_CHUNK):
        idx = np.arange(lo, min(lo + DIAMETER_CHUNK, c.size))
        dist = csgraph.shortest_path(adj, method="D", directed=False, unweighted=True, indices=idx)
        best = max(best, int(dist.max()))
    return best


def diameter_bounds(c, sweeps=4):
    """반복 double-sweep 하한, 2 x (관측된 최소 이심률) 상한. 트리에서는 정확"""
    if c.size <= 1:
        return 0, 0
    adj = c.adjacency
    lower, upper = 0, math.inf
    current = c.local_index(c.root) if c.contains(c.root) else 0
    seen = set()
    for _ in range(sweeps):
        if current in seen:
            break
        seen.add(current)
        d0 = _bfs_levels(adj, current)
        upper = min(upper, 2 * int(d0.max()))
        a = int(np.argmax(d0))
        da = _bfs_levels(adj, a)
        ecc_a = int(da.max())
        lower = max(lower, ecc_a)
        upper = min(upper, 2 * ecc_a)
        b = int(np.argmax(da))
        db = _bfs_levels(adj, b)
        lower = max(lower, int(db.max()))
        # a-b 최단경로의 중간점
        on_path = np.flatnonzero((da + db == ecc_a) & (da == ecc_a // 2))
        if on_path.size:
            dm = _bfs_levels(adj, int(on_path[0]))
            upper = min(upper, 2 * int(dm.max()))
        current = b
    if c.is_tree:
        upper = lower
    return int(lower), int(upper)


def component_diameter(c, cap=None):
    """(지름 또는 None, 하한, 상한, exact 여부)"""
    if c.size <= (config.EXACT_DIAMETER_CAP if cap is None else cap):
        diam = diameter_exact(c, cap)
        return diam, diam, diam, True
    lower, upper = diameter_bounds(c)
    return (lower if lower == upper else None), lower, upper, lower == upper


def bfs_layers(c, v):
    levels = _bfs_levels(c.adjacency, c.local_index(v))
    ecc = int(levels.max())
    order = np.argsort(levels, kind="stable")
    counts = np.bincount(levels, minlength=ecc + 1)
    splits = np.cumsum(counts)[:-1]
    layers = [c.vertices[chunk] for chunk in np.split(order, splits)]
    return BfsLayers(int(v), layers, levels)


# ---------------------------------------------------------------------------
# 성장 조건 추정
# ---------------------------------------------------------------------------

def integer_cube_root_ceil(n):
    k = max(1, int(round(n ** (1.0 / 3.0))))
    while k ** 3 < n:
        k += 1
    while k > 1 and (k - 1) ** 3 >= n:
        k -= 1
    return k


def estimate_conditions(g, p, k_max, trials, seed):
    """k 별 E|E(B_p(v,k))|/k 와 k * P(|dB_p(v,k)| > 0) 추정"""
    if trials < 1:
        raise GraphError("trials must be >= 1")
    k_cap = integer_cube_root_ceil(g.n)
    if not 1 <= k_max <= k_cap:
        raise GraphError(f"k_max must lie in [1, ceil(n^(1/3))] = [1, {k_cap}], got {k_max}")
    edges_in_ball = np.zeros((trials, k_max + 1), dtype=np.float64)
    survived = np.zeros((trials, k_max + 1), dtype=np.float64)
    for t in range(trials):
        stream = seed.spawn(t)
        mask = percolate(g, p, stream)
        v = int(stream.derive(1).generator().integers(g.n))
        levels = _bfs_levels(mask.subgraph, v, limit=k_max)
        edges = mask.retained_edges()
        if edges.shape[0]:
            lu, lv = levels[edges[:, 0]], levels[edges[:, 1]]
            inside = (lu >= 0) & (lv >= 0)
            hist = np.bincount(np.maximum(lu[inside], lv[inside]), minlength=k_max + 1)
            edges_in_ball[t] = np.cumsum(hist[:k_max + 1])
        reached = np.bincount(levels[levels >= 0], minlength=k_max + 1)[:k_max + 1]
        survived[t] = reached > 0

    ks = np.arange(1, k_max + 1)
    mean_edges = edges_in_ball[:, 1:].mean(axis=0)
    se_edges = edges_in_ball[:, 1:].std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(k_max)
    q = survived[:, 1:].mean(axis=0)
    se_q = np.sqrt(q * (1 - q) / trials)
    table = pd.DataFrame({
        "k": ks,
        "mean_edges": mean_edges,
        "edges_per_k": mean_edges / ks,
        "edges_per_k_se": se_edges / ks,
        "survival": q,
        "k_survival": ks * q,
        "k_survival_se": ks * se_q,
    })
    i1 = int(table["edges_per_k"].idxmax())
    i2 = int(table["k_survival"].idxmax())
    return ConditionEstimate(
        table,
        float(table.at[i1, "edges_per_k"]), float(table.at[i1, "edges_per_k_se"]),
        float(table.at[i2, "k_survival"]), float(table.at[i2, "k_survival_se"]),
        trials,
    )


# ---------------------------------------------------------------------------
# 계수 변수 X, Y
# ---------------------------------------------------------------------------

def _diameter_exceeds(c, R):
    if c.size - 1 <= R:
        return False
    lower, upper = diameter_bounds(c)
    if lower > R:
        return True
    if upper <= R:
        return False
    return diameter_exact(c) > R


def _diameter_below(c, r):
    lower, upper = diameter_bounds(c)
    if upper < r:
        return True
    if lower >= r:
        return False
    return diameter_exact(c) < r


def count_large_diam_vertices(g, mask, R):
    """X = |{v : diam(C(v)) > R}|"""
    return int(sum(c.size for c in components(g, mask) if _diameter_exceeds(c, R)))


def count_large_small(g, mask, M, r):
    """Y = |{v : |C(v)| > M 이고 diam(C(v)) < r}|"""
    return int(sum(c.size for c in components(g, mask) if c.size > M and _diameter_below(c, r)))


def count_large_vertices(g, mask, M):
    """|{v : |C(v)| > M}| (p 에 대해 경로별 단조)"""
    sizes = component_sizes(g, mask)
    return int(sizes[sizes > M].sum())


@dataclass(frozen=True)
class CountingProfile:
    """마스크 하나의 계수 변수. 정점 수는 모두 해당 성분 크기의 합"""

    largest: int
    long_vertices: int  # diam > R
    large_long: bool  # |C| > M 이고 diam > R 인 성분 존재
    large_short_vertices: int  # |C| > M 이고 diam < r
    large_short: bool
    small_long_vertices: int  # |C| <= M 이고 diam > 2R
    small_long: bool


def counting_profile(g, mask, M, R, r=None):
    """성분 한 번 순회로 X, Y, 작은-긴 성분 계수. r=None 이면 Y 는 0"""
    long_v = large_short_v = small_long_v = 0
    large_long = large_short = small_long = False
    comps = components(g, mask)
    for c in comps:
        if _diameter_exceeds(c, R):
            long_v += c.size
            large_long = large_long or c.size > M
            if c.size <= M and _diameter_exceeds(c, 2 * R):
                small_long_v += c.size
                small_long = True
        if r is not None and c.size > M and _diameter_below(c, r):
            large_short_v += c.size
            large_short = True
    return CountingProfile(
        comps[0].size if comps else 0,
        int(long_v), bool(large_long), int(large_short_v), bool(large_short),
        int(small_long_v), bool(small_long),
    )


# ---------------------------------------------------------------------------
# 레인, 얇은/좋은 레벨
# ---------------------------------------------------------------------------

def _reachable_from_level(adj, levels, floor_level, target_level):
    """레벨 >= floor_level 유도 부분그래프에서 target_level 정점과 연결된 정점 표시"""
    allowed = np.flatnonzero(levels >= floor_level)
    reach = np.zeros(levels.shape[0], dtype=bool)
    if allowed.size == 0:
        return reach
    sub = adj[allowed][:, allowed]
    _, labels = csgraph.connected_components(sub, directed=False)
    hit = np.unique(labels[levels[allowed] == target_level])
    reach[allowed[np.isin(labels, hit)]] = True
    return reach


def _down_edges(adj, levels):
    """레벨 j-1 -> j 간선 (a, b) 목록, b 가 위쪽"""
    coo = adj.tocoo()
    a, b = coo.row.astype(np.int64), coo.col.astype(np.int64)
    keep = levels[b] == levels[a] + 1
    return a[keep], b[keep]


def lanes(c, v, r):
    """레벨 j 의 레인 수: j-1 -> j 간선 중 레벨 >= j 만 지나 레벨 r 에 닿는 것"""
    adj = c.adjacency
    levels = _bfs_levels(adj, c.local_index(v))
    ecc = int(levels.max())
    if not 1 <= r <= ecc:
        raise GraphError(f"radius {r} outside [1, eccentricity={ecc}]")
    a, b = _down_edges(adj, levels)
    counts = np.zeros(r + 1, dtype=np.int64)
    for j in range(1, r + 1):
        reach = _reachable_from_level(adj, levels, j, r)
        counts[j] = int(np.count_nonzero((levels[b] == j) & reach[b]))
    return LaneReport(int(v), int(r), counts)


def is_lane_rich(report, L, k):
    """[k/2, k] 의 정수 레벨 중 과반(엄격)이 L 개 이상의 레인을 가지는가"""
    if not k < report.r:
        raise GraphError(f"need k < r, got k={k}, r={report.r}")
    lo, hi = max(1, math.ceil(k / 2)), math.floor(k)
    if lo > hi:
        raise GraphError(f"empty level range [{k / 2}, {k}]")
    rich = sum(1 for j in range(lo, hi + 1) if report.lanes_per_level[j] >= L)
    return 2 * rich > hi - lo + 1


def thin_good_levels(c, v, h, span):
    """thin: |dB(v,j)| <= 8h. good: 레벨 j 의 어떤 w 가 레벨 > j 만 지나 j+span 에 도달"""
    if h < 1:
        raise GraphError(f"h must be >= 1, got {h}")
    if span < 0:
        raise GraphError(f"span must be >= 0, got {span}")
    adj = c.adjacency
    levels = _bfs_levels(adj, c.local_index(v))
    ecc = int(levels.max())
    sizes = np.bincount(levels, minlength=ecc + 1)
    thin = sizes <= 8 * h
    good = np.zeros(ecc + 1, dtype=bool)
    a, b = _down_edges(adj, levels)
    for j in range(ecc + 1):
        target = j + span
        if target > ecc:
            continue
        if span == 0:
            good[j] = True
            continue
        reach = _reachable_from_level(adj, levels, j + 1, target)
        good[j] = bool(np.any((levels[a] == j) & reach[b]))
    return ThinGoodLevels(int(v), int(h), int(span), sizes, thin, good)


def thin_level_chain(levels, start, gap):
    """j_1 = start 보다 큰 첫 얇은 레벨, j_i = j_{i-1}+gap 보다 큰 첫 얇은 레벨"""
    chain = []
    bound = start
    thin = np.flatnonzero(levels.thin)
    while True:
        nxt = thin[thin > bound]
        if nxt.size == 0:
            return chain
        chain.append(int(nxt[0]))
        bound = nxt[0] + gap
