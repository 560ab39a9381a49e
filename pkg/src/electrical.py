# electrical.py - 단위 저항 전기회로 계산 (유효저항, 집합 접지, Nash-Williams 하한, 도달시간)
import logging
import threading

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import cg

from config import config
from graph_core import CapExceededError, GraphError, SolverError

logger = logging.getLogger(__name__)

CG_RTOL = 1e-10


class ResistanceNetwork:
    """성분 위의 전기회로. 접지 라플라시안 분해를 lock 아래에서 한 번만 만든다"""

    def __init__(self, conductance, labels, component=None):
        conductance = sparse.csr_matrix(conductance, dtype=np.float64)
        conductance.setdiag(0.0)
        conductance.eliminate_zeros()
        if conductance.shape[0] != len(labels):
            raise GraphError("conductance matrix and labels disagree in size")
        if conductance.shape[0] == 0:
            raise GraphError("empty network")
        count, _ = csgraph.connected_components(conductance, directed=False)
        if count != 1:
            raise GraphError(f"network is disconnected ({count} pieces)")

        self.component = component
        self.conductance = conductance
        self.labels = np.asarray(labels, dtype=np.int64)
        self.size = conductance.shape[0]
        self.degrees = np.asarray(conductance.sum(axis=1)).ravel()
        self.total_conductance = float(self.degrees.sum() / 2.0)
        self._lock = threading.Lock()
        self._factor = None
        self._grounded = None
        self._resistances = None

    @classmethod
    def from_component(cls, c):
        return cls(c.adjacency, c.vertices, component=c)

    def __repr__(self):
        return f"ResistanceNetwork(size={self.size}, edges={self.total_conductance:g})"

    @property
    def is_dense(self):
        return self.size <= config.DENSE_SOLVER_CAP

    def local(self, v):
        pos = np.flatnonzero(self.labels == v)
        if pos.size == 0:
            raise GraphError(f"vertex {v} is not in the network")
        return int(pos[0])

    def laplacian(self):
        return csgraph.laplacian(self.conductance)

    def _grounded_system(self):
        """0 번 노드를 접지한 라플라시안 (lock 안에서 호출)"""
        if self._grounded is None:
            self._grounded = self.laplacian().tocsr()[1:, 1:]
        return self._grounded

    def _dense_factor(self):
        with self._lock:
            if self._factor is None:
                grounded = self._grounded_system().toarray()
                try:
                    self._factor = scipy.linalg.cho_factor(grounded, lower=True)
                except np.linalg.LinAlgError as e:
                    raise SolverError(f"Cholesky failed on grounded Laplacian: {e}") from e
            return self._factor

    def solve(self, rhs):
        """L phi = rhs (rhs 합 0, phi[0] = 0)"""
        rhs = np.asarray(rhs, dtype=np.float64)
        phi = np.zeros(self.size, dtype=np.float64)
        if self.size == 1:
            return phi
        if self.is_dense:
            phi[1:] = scipy.linalg.cho_solve(self._dense_factor(), rhs[1:])
            return phi
        with self._lock:
            system = self._grounded_system()
        inv_diag = sparse.diags(1.0 / system.diagonal())
        x, info = cg(system, rhs[1:], rtol=CG_RTOL, atol=0.0, M=inv_diag, maxiter=20 * self.size)
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge (info={info}, size={self.size})")
        phi[1:] = x
        return phi

    def resistance_matrix(self):
        """모든 쌍 유효저항 (dense 경로 전용, 캐시)"""
        if not self.is_dense:
            raise CapExceededError(
                f"network of size {self.size} exceeds dense solver cap {config.DENSE_SOLVER_CAP}")
        with self._lock:
            if self._resistances is not None:
                return self._resistances
        green = np.zeros((self.size, self.size), dtype=np.float64)
        if self.size > 1:
            green[1:, 1:] = scipy.linalg.cho_solve(self._dense_factor(), np.eye(self.size - 1))
        diag = np.diag(green)
        resistances = diag[:, None] + diag[None, :] - 2.0 * green
        resistances = 0.5 * (resistances + resistances.T)
        np.fill_diagonal(resistances, 0.0)
        with self._lock:
            self._resistances = resistances
        return resistances


def effective_resistance(net, x, y):
    i, j = net.local(x), net.local(y)
    if i == j:
        return 0.0
    rhs = np.zeros(net.size)
    rhs[i], rhs[j] = 1.0, -1.0
    phi = net.solve(rhs)
    return max(0.0, float(phi[i] - phi[j]))


def resistance_matrix(net):
    return net.resistance_matrix()


def glue(net, U):
    """U 를 하나의 노드로 합친 회로. 합쳐진 노드는 마지막 번호, 라벨 -1"""
    local = sorted({net.local(u) for u in U})
    if not local:
        raise GraphError("target set must be nonempty")
    keep = np.setdiff1d(np.arange(net.size), local)
    mapping = np.empty(net.size, dtype=np.int64)
    mapping[keep] = np.arange(keep.size)
    mapping[local] = keep.size
    contract = sparse.csr_matrix(
        (np.ones(net.size), (np.arange(net.size), mapping)), shape=(net.size, keep.size + 1))
    glued = (contract.T @ net.conductance @ contract).tocsr()
    labels = np.concatenate([net.labels[keep], [-1]])
    return ResistanceNetwork(glued, labels)


def effective_resistance_to_set(net, v, U):
    U = list(U)
    if not U:
        raise GraphError("target set must be nonempty")
    if v in set(int(u) for u in U):
        raise GraphError(f"source {v} lies in the target set")
    net.local(v)
    glued = glue(net, U)
    return effective_resistance(glued, v, -1)


class CutsetFamily:
    """v 와 U 를 분리하는 서로소 간선 절단 집합들. 생성 시 검증"""

    def __init__(self, component, source, target, cutsets):
        self.component = component
        self.source = int(source)
        self.target = sorted(int(u) for u in target)
        if not self.target:
            raise GraphError("target set must be nonempty")
        if self.source in self.target:
            raise GraphError(f"source {self.source} lies in the target set")
        if not component.contains(self.source):
            raise GraphError(f"source {self.source} is not in the component")
        for u in self.target:
            if not component.contains(u):
                raise GraphError(f"target vertex {u} is not in the component")

        adj = component.adjacency
        self.cutsets = []
        seen = set()
        for j, cut in enumerate(cutsets):
            edges = {tuple(sorted((int(a), int(b)))) for a, b in cut}
            if not edges:
                raise GraphError(f"cutset {j} is empty")
            for a, b in edges:
                if not (component.contains(a) and component.contains(b)) or \
                        adj[component.local_index(a), component.local_index(b)] == 0:
                    raise GraphError(f"cutset {j} names non-edge ({a}, {b})")
            overlap = seen & edges
            if overlap:
                raise GraphError(f"cutset {j} overlaps an earlier cutset at {sorted(overlap)[0]}")
            seen |= edges
            if not self._separates(edges):
                raise GraphError(f"cutset {j} does not separate {self.source} from the target set")
            self.cutsets.append(sorted(edges))

    def _separates(self, edges):
        c = self.component
        adj = c.adjacency.tolil(copy=True)
        for a, b in edges:
            i, j = c.local_index(a), c.local_index(b)
            adj[i, j] = 0
            adj[j, i] = 0
        adj = adj.tocsr()
        adj.eliminate_zeros()
        dist = csgraph.dijkstra(adj, directed=False, indices=c.local_index(self.source), unweighted=True)
        targets = [c.local_index(u) for u in self.target]
        return not np.isfinite(dist[targets]).any()

    def __len__(self):
        return len(self.cutsets)


def nash_williams_bound(family):
    return float(sum(1.0 / len(cut) for cut in family.cutsets))


def hitting_time_matrix(net):
    """게으른 걸음 H[v, z] = E_v tau_z = sum_u deg(u) [R(v,z) + R(z,u) - R(u,v)]"""
    resistances = net.resistance_matrix()
    weighted = resistances @ net.degrees
    hits = 2.0 * net.total_conductance * resistances + weighted[None, :] - weighted[:, None]
    np.fill_diagonal(hits, 0.0)
    return np.maximum(hits, 0.0)


def hitting_time(net, v, z):
    i, j = net.local(v), net.local(z)
    if i == j:
        return 0.0
    resistances = net.resistance_matrix()
    value = float(np.dot(net.degrees, resistances[i, j] + resistances[j, :] - resistances[:, i]))
    return max(0.0, value)


def commute_identity_check(net, x, y):
    """|E_y tau_x + E_x tau_y - 4|E| R(x,y)| / (4|E| R(x,y))"""
    rhs = 4.0 * net.total_conductance * effective_resistance(net, x, y)
    lhs = hitting_time(net, x, y) + hitting_time(net, y, x)
    if rhs == 0.0:
        return abs(lhs)
    return abs(lhs - rhs) / rhs
