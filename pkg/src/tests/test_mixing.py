# test_mixing.py - 게으른 걸음 혼합시간, 상/하한 인증서, 스펙트럼 진단
import numpy as np
import pytest

from components import components, diameter_exact, whole_graph_component
from graph_core import (
    CapExceededError,
    GraphError,
    RngSeed,
    SolverError,
    complete_graph,
    graph_from_edges,
    path_graph,
    percolate,
    random_regular,
)
from mixing import (
    LazyChain,
    certify,
    critical_lane_schedule,
    mixing_lower_lane,
    mixing_time_exact,
    mixing_time_iterated,
    mixing_upper_diam,
    mixing_upper_hitting,
    return_probabilities,
    reversibility_residual,
    spectral_diagnostics,
    tv_distance,
    tv_profile,
)


def _chain(g):
    return LazyChain(whole_graph_component(g))


def _random_components(count, max_size=100):
    out = []
    for i in range(count):
        seed = RngSeed(1000 + i)
        g = random_regular(80, 3, seed)
        c = components(g, percolate(g, 0.5, seed))[0]
        if 1 < c.size <= max_size:
            out.append(c)
    return out


def test_tv_distance_examples():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.25)
    with pytest.raises(GraphError):
        tv_distance([1.5, -0.5], [0.5, 0.5])
    with pytest.raises(GraphError):
        tv_distance([0.5, 0.4], [0.5, 0.5])


def test_lazy_chain_structure(c4):
    chain = _chain(c4)
    P = chain.transition
    assert np.allclose(P.sum(axis=1), 1.0)
    assert np.all(np.diag(P) == 0.5)
    assert np.allclose(chain.stationary @ P, chain.stationary)
    assert np.allclose(chain.flow, chain.flow.T)
    assert reversibility_residual(chain) == 0.0


def test_single_vertex_and_single_edge(k2, seed):
    g = path_graph(3)
    lone = components(g, percolate(g, 0.0, seed))[0]
    assert mixing_time_exact(LazyChain(lone)) == 0
    chain = _chain(k2)
    assert mixing_time_exact(chain) == 1
    assert mixing_time_iterated(chain, 10) == 1
    assert mixing_upper_diam(chain, 1) == 8
    assert mixing_upper_hitting(chain) == 4


def test_exact_matches_iteration_oracle():
    for c in _random_components(8):
        chain = LazyChain(c)
        exact = mixing_time_exact(chain)
        assert exact == mixing_time_iterated(chain, exact + 5)
        assert exact <= mixing_upper_diam(chain, diameter_exact(c))
        assert exact <= mixing_upper_hitting(chain)


def test_path_bounds_hold():
    for n in (3, 5, 10, 20):
        chain = _chain(path_graph(n))
        exact = mixing_time_exact(chain)
        assert exact == mixing_time_iterated(chain, 8 * (n - 1) ** 2)
        assert exact <= 8 * (n - 1) ** 2
        assert exact <= mixing_upper_hitting(chain)


def test_worst_start_tv_is_non_increasing():
    profile = tv_profile(_chain(path_graph(7)), 60)
    assert np.all(np.diff(profile) <= 1e-12)


def test_exact_mixing_cap():
    chain = _chain(path_graph(30))
    with pytest.raises(CapExceededError):
        mixing_time_exact(chain, cap=10)
    with pytest.raises(CapExceededError):
        mixing_time_iterated(chain, 3)


def test_lane_lower_bound_fires_on_long_path():
    chain = _chain(path_graph(300))
    cert = mixing_lower_lane(chain, 0, h=4, m=5, k=40, r=80, L=2)
    assert cert.failed == []
    assert cert.fired and cert.bound == 8
    assert mixing_time_exact(chain) >= cert.bound


def test_lane_lower_bound_reports_failed_hypotheses():
    # 100 정점 경로: B(v, 80) 의 간선 80 개가 |E|/3 보다 많고 4Lh = k
    chain = _chain(path_graph(100))
    cert = mixing_lower_lane(chain, 0, h=5, m=5, k=40, r=80, L=2)
    assert not cert.fired
    assert set(cert.failed) == {"ball_edges", "h_small"}
    k5 = _chain(complete_graph(5))
    cert = mixing_lower_lane(k5, 0, h=1, m=1, k=1, r=2, L=1)
    assert "not_lane_rich" in cert.failed
    with pytest.raises(GraphError):
        mixing_lower_lane(k5, 0, h=0, m=1, k=1, r=2, L=1)


def test_lane_schedule_shape():
    params = critical_lane_schedule(10 ** 6, 1.0, 2.0)
    assert params["L"] == 4
    assert params["k"] == 5 * params["L"] * params["h"]
    assert params["r"] == 10 * params["L"] * params["h"]
    with pytest.raises(GraphError):
        critical_lane_schedule(100, 0.0, 1.0)


def test_certify_exact_and_bounds():
    chain = _chain(path_graph(12))
    cert = certify(chain)
    assert cert.method == "exact"
    assert cert.t_mix == mixing_time_exact(chain)
    assert cert.t_mix <= min(cert.upper_diam, cert.upper_hit)
    loose = certify(chain, mixing_cap=5)
    assert loose.method == "bounds" and loose.t_mix is None
    assert loose.t_lower <= cert.t_mix <= loose.t_upper


def test_certify_checks_each_upper_bound(monkeypatch):
    chain = _chain(path_graph(12))
    monkeypatch.setattr("mixing.mixing_upper_hitting", lambda chain, net=None: 1)
    with pytest.raises(SolverError, match=r"\(upper_hit\)"):
        certify(chain)
    monkeypatch.undo()

    monkeypatch.setattr("mixing.mixing_upper_diam", lambda chain, diam: 1)
    with pytest.raises(SolverError, match=r"\(upper_diam\)"):
        certify(chain)


def test_certify_with_lane_parameters():
    chain = _chain(path_graph(300))
    cert = certify(chain, lane_params={"h": 4, "m": 5, "k": 40, "r": 80, "L": 2}, lane_root=0)
    assert cert.lower_lane.bound == 8
    assert cert.t_lower == cert.t_mix >= 8


def test_spectral_diagnostics_on_single_edge(k2):
    report = spectral_diagnostics(_chain(k2))
    assert np.allclose(report.eigenvalues, [0.0, 1.0], atol=1e-12)
    assert report.in_range and report.return_prob_monotone
    assert report.spectral_gap == pytest.approx(1.0)


def test_spectral_decomposition_reproduces_return_probabilities():
    c = _random_components(3)[0]
    chain = LazyChain(c)
    report = spectral_diagnostics(chain, t_max=20)
    assert report.in_range and report.return_prob_monotone
    direct = return_probabilities(chain, int(c.vertices[0]), 20)
    assert np.all(np.diff(direct) <= 1e-12)
    root_pi = np.sqrt(chain.stationary)
    sym = root_pi[:, None] * chain.transition / root_pi[None, :]
    values, vectors = np.linalg.eigh(0.5 * (sym + sym.T))
    spectral = (vectors[0] ** 2) @ (values[:, None] ** np.arange(21)[None, :])
    assert np.allclose(direct, spectral, atol=1e-8)


def test_spectral_single_vertex(seed):
    g = graph_from_edges(2, [])
    lone = components(g, percolate(g, 0.0, seed))[0]
    report = spectral_diagnostics(LazyChain(lone))
    assert report.eigenvalues.tolist() == pytest.approx([1.0])
