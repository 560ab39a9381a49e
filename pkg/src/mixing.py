# mixing.py - 게으른 랜덤워크 혼합시간 (정확 계산, 스펙트럼 진단, 상/하한 인증서)
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg

from components import _bfs_levels, diameter_exact, is_lane_rich, lanes
from config import config
from electrical import ResistanceNetwork, hitting_time_matrix
from graph_core import CapExceededError, GraphError, SolverError

logger = logging.getLogger(__name__)

TV_THRESHOLD = 0.25
GUARD_BAND = 1e-9
EIGEN_TOL = 1e-10
RETURN_PROB_TOL = 1e-12


class LazyChain:
    """P = I/2 + D^-1 A / 2, pi = deg / 2|E| (성분 단위)"""

    def __init__(self, component):
        self.component = component
        self.size = component.size
        self.edge_count = int(component.edge_count)
        self.degrees = component.degrees.astype(np.int64)

    def __repr__(self):
        return f"LazyChain(size={self.size}, edges={self.edge_count})"

    @cached_property
    def transition(self):
        """dense 행렬은 처음 쓸 때 만든다 (큰 성분은 상/하한만 계산)"""
        if self.size == 1:
            return np.ones((1, 1))
        adj = self.component.adjacency.toarray().astype(np.float64)
        return 0.5 * np.eye(self.size) + adj / (2.0 * self.degrees[:, None])

    @cached_property
    def stationary(self):
        if self.size == 1:
            return np.ones(1)
        return self.degrees / (2.0 * self.edge_count)

    @cached_property
    def flow(self):
        """Q(x,y) = pi(x) P(x,y): 간선 위에서 1/(4|E|)"""
        if self.size == 1:
            return np.ones((1, 1))
        adj = self.component.adjacency.toarray().astype(np.float64)
        return adj / (4.0 * self.edge_count) + np.diag(self.stationary / 2.0)


@dataclass(frozen=True)
class LaneCertificate:
    v: int
    h: int
    m: int
    k: int
    r: int
    L: int
    flags: dict
    failed: list
    bound: Optional[int] = None

    @property
    def fired(self):
        return self.bound is not None


@dataclass(frozen=True)
class MixingCertificate:
    method: str  # "exact" 또는 "bounds"
    t_lower: int
    t_upper: int
    upper_diam: int
    upper_hit: Optional[int] = None
    lower_lane: Optional[LaneCertificate] = None
    diam: Optional[int] = None

    @property
    def t_mix(self):
        return self.t_lower if self.method == "exact" else None


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    in_range: bool
    return_prob_monotone: bool
    max_return_increase: float
    spectral_gap: float
    checked: list = field(default_factory=list)

    @property
    def relaxation_time(self):
        return math.inf if self.spectral_gap <= 0 else 1.0 / self.spectral_gap


def tv_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GraphError(f"shape mismatch {a.shape} vs {b.shape}")
    if (a < 0).any() or (b < 0).any():
        raise GraphError("probability vectors must be nonnegative")
    if abs(math.fsum(a) - 1.0) > 1e-12 or abs(math.fsum(b) - 1.0) > 1e-12:
        raise GraphError("probability vectors must sum to 1")
    return 0.5 * float(np.abs(a - b).sum())


def _worst_tv(rows, pi):
    """max_x ||rows[x] - pi||_TV. 1/4 근처는 보정 합산으로 다시 계산"""
    diff = np.abs(rows - pi[None, :])
    worst = 0.5 * float(diff.sum(axis=1).max())
    if abs(worst - TV_THRESHOLD) < GUARD_BAND:
        worst = max(0.5 * math.fsum(row) for row in diff.tolist())
    return worst


def _require_exact_size(chain, cap=None):
    cap = config.EXACT_MIXING_CAP if cap is None else cap
    if chain.size > cap:
        raise CapExceededError(
            f"component of size {chain.size} exceeds exact-mixing cap {cap}")


def mixing_upper_diam(chain, diam):
    return 8 * chain.edge_count * int(diam)


def mixing_time_exact(chain, upper=None, cap=None):
    """d(t) <= 1/4 인 최소 t. 제곱 사다리 + 이진 올림, 상한은 8|E| diam"""
    _require_exact_size(chain, cap)
    if chain.size == 1:
        return 0
    if upper is None:
        upper = mixing_upper_diam(chain, diameter_exact(chain.component))
    P, pi = chain.transition, chain.stationary

    ladder = [P]
    while 2 ** len(ladder) <= upper:
        ladder.append(ladder[-1] @ ladder[-1])

    # 불변식: d(t) > 1/4, current = P^t
    t = 0
    current = np.eye(chain.size)
    for level in range(len(ladder) - 1, -1, -1):
        step = 2 ** level
        if t + step >= upper:
            continue
        candidate = current @ ladder[level]
        if _worst_tv(candidate, pi) > TV_THRESHOLD:
            t += step
            current = candidate
    result = t + 1
    if _worst_tv(current @ P, pi) > TV_THRESHOLD:
        raise SolverError(f"mixing time exceeds its bracket {upper} (size {chain.size})")
    logger.debug("mixing time %d for component of size %d", result, chain.size)
    return result


def mixing_time_iterated(chain, t_max):
    """한 걸음씩 반복하는 오라클. t_max 안에 섞이지 않으면 CapExceededError"""
    current = np.eye(chain.size)
    for t in range(t_max + 1):
        if _worst_tv(current, chain.stationary) <= TV_THRESHOLD:
            return t
        current = current @ chain.transition
    raise CapExceededError(f"chain did not mix within {t_max} steps")


def tv_profile(chain, t_max):
    """t = 0..t_max 의 최악 시작점 TV 거리"""
    current = np.eye(chain.size)
    out = np.empty(t_max + 1)
    for t in range(t_max + 1):
        out[t] = _worst_tv(current, chain.stationary)
        current = current @ chain.transition
    return out


def mixing_upper_hitting(chain, net=None):
    if chain.size == 1:
        return 0
    net = net or ResistanceNetwork.from_component(chain.component)
    worst = float(hitting_time_matrix(net).max())
    return int(math.ceil(2.0 * worst * (1.0 - 1e-12)))


def mixing_lower_lane(chain, v, h, m, k, r, L):
    """네 가정을 모두 계산으로 확인한 뒤 floor(mk / 12L) 를 하한으로 준다"""
    h, m, k, r, L = int(h), int(m), int(k), int(r), int(L)
    if min(h, m, k, r, L) < 1:
        raise GraphError("lane parameters must all be positive integers")
    c = chain.component
    levels = _bfs_levels(c.adjacency, c.local_index(v))
    ecc = int(levels.max())

    ball_size = int(np.count_nonzero(levels <= h))
    coo = c.adjacency.tocoo()
    upper = coo.row < coo.col
    inside = (levels[coo.row[upper]] <= r) & (levels[coo.col[upper]] <= r)
    ball_edges = int(np.count_nonzero(inside))

    if r <= ecc and k < r:
        not_rich = not is_lane_rich(lanes(c, v, r), L, k)
    else:
        not_rich = False
    flags = {
        "ball_size": ball_size >= m,
        "not_lane_rich": bool(not_rich),
        "ball_edges": 3 * ball_edges < chain.edge_count,
        "h_small": 4 * L * h < k,
    }
    failed = [name for name, ok in flags.items() if not ok]
    bound = (m * k) // (12 * L) if not failed else None
    return LaneCertificate(int(v), h, m, k, r, L, flags, failed, bound)


def critical_lane_schedule(n, beta, D):
    """L = beta^-3 D^2, h = beta^5 D^-3 n^(1/3) / 4, k = 5Lh, r = 10Lh, m = h^3 beta D^-1 n^(-1/3)"""
    if n < 1 or beta <= 0 or D <= 0:
        raise GraphError("schedule needs n >= 1, beta > 0, D > 0")
    cube = n ** (1.0 / 3.0)
    L = max(1, math.ceil(D ** 2 / beta ** 3))
    h = max(1, math.floor(beta ** 5 * cube / (4 * D ** 3)))
    m = max(1, math.floor(h ** 3 * beta / (D * cube)))
    return {"h": h, "m": m, "k": 5 * L * h, "r": 10 * L * h, "L": L}


def spectral_diagnostics(chain, t_max=32, samples=16, seed=None):
    """pi-대칭화 연산자의 고유값과 귀환확률 p^t(x,x) 단조성"""
    if chain.size > config.DENSE_SOLVER_CAP:
        raise CapExceededError(
            f"component of size {chain.size} exceeds dense eigensolve cap {config.DENSE_SOLVER_CAP}")
    root_pi = np.sqrt(chain.stationary)
    sym = root_pi[:, None] * chain.transition / root_pi[None, :]
    sym = 0.5 * (sym + sym.T)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(sym)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"eigensolver failed: {e}") from e
    in_range = bool(eigenvalues.min() >= -EIGEN_TOL and eigenvalues.max() <= 1 + EIGEN_TOL)

    if seed is None or chain.size <= samples:
        starts = np.arange(chain.size)
    else:
        starts = np.sort(seed.generator().choice(chain.size, size=samples, replace=False))
    powers = eigenvalues[:, None] ** np.arange(t_max + 1)[None, :]
    returns = (vectors[starts] ** 2) @ powers
    increase = float(np.diff(returns, axis=1).max()) if t_max > 0 else 0.0
    top = np.sort(eigenvalues)[::-1]
    gap = float(1.0 - top[1]) if chain.size > 1 else 1.0
    return SpectralReport(
        eigenvalues=np.sort(eigenvalues),
        in_range=in_range,
        return_prob_monotone=increase <= RETURN_PROB_TOL,
        max_return_increase=max(increase, 0.0),
        spectral_gap=gap,
        checked=starts.tolist(),
    )


def return_probabilities(chain, x, t_max):
    """직접 거듭제곱으로 p^t(x,x), t = 0..t_max"""
    i = chain.component.local_index(x)
    row = np.zeros(chain.size)
    row[i] = 1.0
    out = np.empty(t_max + 1)
    for t in range(t_max + 1):
        out[t] = row[i]
        row = row @ chain.transition
    return out


def certify(chain, diam=None, lane_params=None, lane_root=None, mixing_cap=None):
    """정확 혼합시간(가능하면)과 상/하한을 묶은 인증서. 샌드위치 위반은 SolverError"""
    c = chain.component
    if diam is None:
        diam = diameter_exact(c)
    upper_diam = mixing_upper_diam(chain, diam)
    upper_hit = mixing_upper_hitting(chain) if chain.size <= config.DENSE_SOLVER_CAP else None

    lane = None
    if lane_params is not None and chain.size > 1:
        root = c.root if lane_root is None else lane_root
        lane = mixing_lower_lane(chain, root, **lane_params)
    lower = lane.bound if lane is not None and lane.fired else 0

    ceiling = upper_diam if upper_hit is None else min(upper_diam, upper_hit)
    mixing_cap = config.EXACT_MIXING_CAP if mixing_cap is None else mixing_cap
    if chain.size <= mixing_cap:
        # 두 상한을 각각 검사하도록 탐색 구간은 큰 쪽으로 잡는다
        bracket = max(upper_diam, upper_hit or 0, 1)
        t_mix = mixing_time_exact(chain, upper=bracket, cap=mixing_cap)
        violated = []
        if t_mix < lower:
            violated.append("lower_lane")
        if t_mix > upper_diam:
            violated.append("upper_diam")
        if upper_hit is not None and t_mix > upper_hit:
            violated.append("upper_hit")
        if violated:
            raise SolverError(
                f"bound sandwich violated ({', '.join(violated)}): lower={lower} t_mix={t_mix} "
                f"upper_diam={upper_diam} upper_hit={upper_hit}")
        return MixingCertificate("exact", t_mix, t_mix, upper_diam, upper_hit, lane, int(diam))
    if lower > ceiling:
        raise SolverError(f"lane bound {lower} exceeds upper bound {ceiling}")
    return MixingCertificate("bounds", lower, ceiling, upper_diam, upper_hit, lane, int(diam))


def reversibility_residual(chain):
    """max |pi(x)p(x,y) - pi(y)p(y,x)| 를 유리수로 계산 (항상 0)"""
    if chain.size == 1:
        return 0.0
    two_m = 2 * chain.edge_count
    coo = chain.component.adjacency.tocoo()
    worst = Fraction(0)
    for x, y in zip(coo.row.tolist(), coo.col.tolist()):
        dx, dy = int(chain.degrees[x]), int(chain.degrees[y])
        forward = Fraction(dx, two_m) * Fraction(1, 2 * dx)
        backward = Fraction(dy, two_m) * Fraction(1, 2 * dy)
        worst = max(worst, abs(forward - backward))
    return float(worst)
