# graph_core.py - 기반 그래프 생성, 시드 고정 본드 퍼콜레이션, 간선 목록 입출력
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import sparse

from config import config

logger = logging.getLogger(__name__)

UINT64_MAX = (1 << 64) - 1
VERTEX_BUDGET = (1 << 31) - 1
REGULAR_RETRY_CAP = 1000


class LabError(Exception):
    """실험실 공통 예외"""


class GraphError(LabError, ValueError):
    """입력/파라미터 검증 실패"""


class CapExceededError(LabError):
    """정확 계산 상한 초과"""


class SolverError(LabError):
    """수치 해법 실패"""


# ---------------------------------------------------------------------------
# 카운터 기반 난수 (SplitMix64 finalizer)
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


def hash64(seed, stream_id, counters):
    """(seed, stream_id, counter) -> 64비트 해시. 호출 순서와 무관"""
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _mix64(np.array([seed], dtype=np.uint64) ^ _mix64(np.array([stream_id], dtype=np.uint64) + _GOLDEN))
        return _mix64(key + (counters + np.uint64(1)) * _GOLDEN)


def parse_seed(text):
    """CLI 시드 파싱: 10진수 또는 0x 16진수"""
    try:
        value = int(str(text).strip(), 0)
    except ValueError as exc:
        raise GraphError(f"invalid seed: {text!r}") from exc
    if not 0 <= value <= UINT64_MAX:
        raise GraphError(f"seed out of 64-bit range: {text!r}")
    return value


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) <= UINT64_MAX:
                raise GraphError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def uniforms(self, count, start=0):
        """counter start..start+count-1 에 대한 [0,1) 균등 난수"""
        counters = np.arange(start, start + count, dtype=np.uint64)
        bits = hash64(self.seed, self.stream_id, counters) >> np.uint64(11)
        return bits.astype(np.float64) * (1.0 / (1 << 53))

    def generator(self):
        """같은 (seed, stream_id) 에 대해 항상 같은 Philox 스트림"""
        return np.random.Generator(np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64)))

    def spawn(self, stream_id):
        return RngSeed(self.seed, int(stream_id))

    def derive(self, label):
        """하위 실험용 시드 (예: n 별 스트림 분리)"""
        mixed = int(hash64(self.seed, int(label), [UINT64_MAX])[0])
        return RngSeed(mixed, self.stream_id)


# ---------------------------------------------------------------------------
# 그래프
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Graph:
    """단순 무방향 그래프. edges=None 이면 간선을 저장하지 않는 완전그래프"""

    n: int
    edges: Optional[np.ndarray]
    name: str = "graph"

    @property
    def is_implicit(self):
        return self.edges is None

    @property
    def m(self):
        if self.edges is None:
            return self.n * (self.n - 1) // 2
        return int(self.edges.shape[0])

    @cached_property
    def degrees(self):
        if self.edges is None:
            return np.full(self.n, self.n - 1, dtype=np.int64)
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)

    @property
    def max_degree(self):
        return int(self.degrees.max()) if self.n else 0

    @cached_property
    def adjacency(self):
        """(indptr, neighbor, edge_index) CSR 배열"""
        self._require_explicit("adjacency")
        m = self.m
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=indptr[1:])
        return indptr, dst[order].astype(np.int64), eid[order].astype(np.int64)

    def neighbors(self, v):
        indptr, nbr, eid = self.adjacency
        lo, hi = indptr[v], indptr[v + 1]
        return list(zip(nbr[lo:hi].tolist(), eid[lo:hi].tolist()))

    def to_csr(self):
        self._require_explicit("to_csr")
        return edges_to_csr(self.n, self.edges)

    def _require_explicit(self, what):
        if self.edges is None:
            raise GraphError(f"{what} is not available on the implicit complete graph K_{self.n}")

    def __eq__(self, other):
        if not isinstance(other, Graph) or self.n != other.n:
            return False
        if self.edges is None or other.edges is None:
            return self.edges is None and other.edges is None
        return np.array_equal(self.edges, other.edges)

    __hash__ = object.__hash__

    def __repr__(self):
        kind = "implicit" if self.is_implicit else "explicit"
        return f"Graph(name={self.name!r}, n={self.n}, m={self.m}, {kind})"


def edges_to_csr(n, edges):
    """간선 배열 -> 대칭 0/1 scipy CSR"""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.int8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def graph_from_edges(n, edges, name="graph"):
    """검증을 거쳐 Graph 생성 (루프/중복/범위 오류 시 GraphError)"""
    if n < 1:
        raise GraphError(f"vertex count must be >= 1, got {n}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise GraphError("edge endpoint out of range")
    loops = edges[:, 0] == edges[:, 1]
    if np.any(loops):
        u = int(edges[loops][0, 0])
        raise GraphError(f"self-loop at vertex {u}")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    norm = np.stack([lo, hi], axis=1)
    keys = lo * n + hi
    uniq, counts = np.unique(keys, return_counts=True)
    if np.any(counts > 1):
        dup = int(uniq[counts > 1][0])
        raise GraphError(f"duplicate edge ({dup // n}, {dup % n})")
    return Graph(int(n), norm, name)


def complete_graph(n, materialize=None):
    """K_n. 간선 수가 예산을 넘으면 implicit 으로 만든다"""
    if n < 1:
        raise GraphError(f"complete graph needs n >= 1, got {n}")
    m = n * (n - 1) // 2
    if materialize is None:
        materialize = m <= config.COMPLETE_EDGE_BUDGET
    if not materialize:
        logger.info("K_%d (m=%d) 는 implicit 표현으로 생성", n, m)
        return Graph(int(n), None, f"complete_{n}")
    iu, ju = np.triu_indices(n, k=1)
    return Graph(int(n), np.stack([iu, ju], axis=1).astype(np.int64), f"complete_{n}")


def random_regular(n, d, seed):
    """configuration model + 루프/다중간선 거절 (최대 1000회)"""
    if (n * d) % 2 != 0:
        raise GraphError("n * d must be even")
    if not 3 <= d < n:
        raise GraphError(f"need 3 <= d < n, got d={d}, n={n}")
    rng = seed.generator()
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for attempt in range(1, REGULAR_RETRY_CAP + 1):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            continue
        if attempt > 1:
            logger.debug("random_regular(n=%d, d=%d): %d번째 시도에서 단순 그래프", n, d, attempt)
        return Graph(int(n), np.stack([lo, hi], axis=1), f"regular_{d}_{n}")
    raise GraphError(f"configuration model failed to produce a simple graph in {REGULAR_RETRY_CAP} attempts")


def hypercube(dim):
    if dim < 1:
        raise GraphError(f"hypercube dimension must be >= 1, got {dim}")
    if dim >= 31:
        raise CapExceededError(f"hypercube of dimension {dim} exceeds the vertex budget")
    n = 1 << dim
    verts = np.arange(n, dtype=np.int64)
    blocks = []
    for b in range(dim):
        low = verts[(verts >> b) & 1 == 0]
        blocks.append(np.stack([low, low | (1 << b)], axis=1))
    return Graph(n, np.concatenate(blocks), f"hypercube_{dim}")


def torus(side, dim):
    """주기 격자 [side]^dim, 차수 2*dim"""
    if dim < 1:
        raise GraphError(f"torus dimension must be >= 1, got {dim}")
    if side < 3:
        raise GraphError(f"torus side must be >= 3, got {side}")
    if side ** dim > VERTEX_BUDGET:
        raise CapExceededError(f"torus {side}^{dim} exceeds the vertex budget")
    n = side ** dim
    verts = np.arange(n, dtype=np.int64)
    blocks = []
    for axis in range(dim):
        stride = side ** axis
        coord = (verts // stride) % side
        nxt = verts + np.where(coord == side - 1, -(side - 1) * stride, stride)
        blocks.append(np.stack([np.minimum(verts, nxt), np.maximum(verts, nxt)], axis=1))
    return Graph(n, np.concatenate(blocks), f"torus_{side}_{dim}")


def path_graph(n):
    verts = np.arange(n - 1, dtype=np.int64)
    return Graph(int(n), np.stack([verts, verts + 1], axis=1), f"path_{n}")


def cycle_graph(n):
    if n < 3:
        raise GraphError(f"cycle needs n >= 3, got {n}")
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)], f"cycle_{n}")


def star_graph(leaves):
    return Graph(leaves + 1, np.array([(0, i) for i in range(1, leaves + 1)], dtype=np.int64).reshape(-1, 2),
                 f"star_{leaves}")


# ---------------------------------------------------------------------------
# 퍼콜레이션
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PercolationMask:
    """간선별 균등난수와 임계값 p. retained(e) = u_e < p"""

    graph: Graph
    p: float
    seed: RngSeed
    edge_uniforms: Optional[np.ndarray] = None
    retained_pairs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def coupled(self):
        return self.edge_uniforms is not None

    @cached_property
    def retained(self):
        if not self.coupled:
            raise GraphError("implicit K_n mask has no per-edge uniforms")
        return self.edge_uniforms < self.p

    def retained_edges(self):
        if self.coupled:
            return self.graph.edges[self.retained]
        return self.retained_pairs

    @property
    def retained_count(self):
        return int(self.retained_edges().shape[0])

    def at(self, p):
        """같은 난수로 p' 에서 다시 임계 처리 (단조 결합)"""
        _check_probability(p)
        if not self.coupled:
            raise GraphError("implicit K_n mask cannot be re-thresholded (coupling dropped)")
        return PercolationMask(self.graph, float(p), self.seed, self.edge_uniforms)

    @cached_property
    def subgraph(self):
        """G_p 의 대칭 CSR 인접행렬"""
        return edges_to_csr(self.graph.n, self.retained_edges())


def _check_probability(p):
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise GraphError(f"probability must lie in [0, 1], got {p}")


def _decode_pairs(idx, n):
    """사전순 간선 번호 -> (i, j), i < j"""
    idx = np.asarray(idx, dtype=np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * idx, 0.0))) / 2).astype(np.int64)
    i = np.clip(i, 0, n - 2)

    def row_start(r):
        return r * (2 * n - r - 1) // 2

    for _ in range(2):
        i = np.where(row_start(i) > idx, i - 1, i)
        i = np.where(row_start(i + 1) <= idx, i + 1, i)
    j = idx - row_start(i) + i + 1
    return np.stack([i, j], axis=1)


def percolate(g, p, seed):
    """본드 퍼콜레이션. implicit K_n 은 Binomial 개수 + 비복원 추출 (결합 없음)"""
    _check_probability(p)
    if not g.is_implicit:
        return PercolationMask(g, float(p), seed, seed.uniforms(g.m))
    rng = seed.generator()
    k = int(rng.binomial(g.m, p))
    if k == g.m:
        picked = np.arange(g.m, dtype=np.int64)
    else:
        picked = np.sort(rng.choice(g.m, size=k, replace=False))
    return PercolationMask(g, float(p), seed, None, _decode_pairs(picked, g.n))


# ---------------------------------------------------------------------------
# 간선 목록 입출력
# ---------------------------------------------------------------------------

def save_edge_list(g, path):
    """첫 줄 "n m", 이후 "u v" (0-index, u<v)"""
    g._require_explicit("save_edge_list")
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{g.n} {g.m}\n")
        for u, v in g.edges.tolist():
            f.write(f"{u} {v}\n")


def load_edge_list(path):
    try:
        with open(path, "r", encoding="ascii") as f:
            lines = [line.strip() for line in f if line.strip()]
    except UnicodeDecodeError as e:
        raise GraphError(f"{path}: malformed line (non-ASCII byte at offset {e.start})") from e
    if not lines:
        raise GraphError(f"{path}: empty edge-list file")

    def parse(lineno, line):
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected two integers, got {line!r}")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphError(f"{path}:{lineno}: malformed line {line!r}") from exc

    n, m = parse(1, lines[0])
    body = [parse(i + 2, line) for i, line in enumerate(lines[1:])]
    if len(body) != m:
        raise GraphError(f"{path}: header declares {m} edges, found {len(body)}")
    for lineno, (u, v) in enumerate(body, start=2):
        if u == v:
            raise GraphError(f"{path}:{lineno}: self-loop at vertex {u}")
        if u > v:
            raise GraphError(f"{path}:{lineno}: edge must be written with u < v")
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return graph_from_edges(n, np.array(body, dtype=np.int64).reshape(-1, 2), name)
