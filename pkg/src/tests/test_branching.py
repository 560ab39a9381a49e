# test_branching.py - Galton-Watson 총 자손 분포, 꼬리, 레벨 평균, 트리 저항, 지배 검사
from fractions import Fraction

import numpy as np
import pytest

from branching import (
    OVERFLOW,
    OVERFLOW_CODE,
    GwSpec,
    ProgenyPmf,
    _exploration_walk,
    domination_check,
    domination_exact,
    gw_sample_many,
    gw_sample_total,
    gw_tail_check,
    gw_total_pmf_exact,
    homogeneous_total_pmf,
    level_mean_check,
    level_mean_exact,
    survival_bound_check,
    tree_resistance,
)
from graph_core import CapExceededError, GraphError, RngSeed, complete_graph, random_regular, star_graph


def test_spec_validation():
    with pytest.raises(GraphError):
        GwSpec(2, 0.5)
    with pytest.raises(GraphError):
        GwSpec(3, 1.5)
    assert GwSpec(3, 0.6).is_supercritical
    assert not GwSpec(3, 0.5).is_supercritical


def test_small_progeny_masses():
    pmf = gw_total_pmf_exact(GwSpec(3, 0.5), 10)
    assert pmf.pmf(1) == pytest.approx(1 / 8)
    # 루트 자식 1 (3/8), 그 자식은 자식 0 (1/4)
    assert pmf.pmf(2) == pytest.approx(3 / 32)
    assert pmf.tail(1) == 1.0
    assert pmf.tail(11) == pytest.approx(pmf.overflow_mass)
    with pytest.raises(GraphError):
        pmf.tail(12)
    with pytest.raises(GraphError):
        pmf.pmf(0)


def test_homogeneous_pmf_first_terms():
    sub = homogeneous_total_pmf(3, 0.5, 5)
    assert sub[0] == 0.0
    assert sub[1] == pytest.approx(0.25)
    # |T'| = 2: 자식 정확히 1 (1/2) 후 그 자식 0 (1/4)
    assert sub[2] == pytest.approx(0.125)


def test_subcritical_masses_sum_to_one():
    pmf = gw_total_pmf_exact(GwSpec(3, 0.3), 400)
    assert pmf.overflow_mass < 1e-10
    assert pmf.normalization_residual() < 1e-12


def test_large_trial_counts_use_log_space():
    pmf = gw_total_pmf_exact(GwSpec(4, 1 / 3), 300)
    assert np.all(np.isfinite(pmf.masses))
    assert np.all(pmf.masses >= 0)


def test_sampling_matches_exact_distribution():
    spec = GwSpec(3, 0.5)
    sizes = gw_sample_many(spec, RngSeed(9), 20000, cap=10 ** 5)
    pmf = gw_total_pmf_exact(spec, 5)
    for m in (1, 2, 3):
        freq = float(np.mean(sizes == m))
        sigma = np.sqrt(pmf.pmf(m) * (1 - pmf.pmf(m)) / sizes.size)
        assert abs(freq - pmf.pmf(m)) <= 5 * sigma


def test_overflow_sentinel():
    spec = GwSpec(3, 1.0)
    assert gw_sample_total(spec, RngSeed(1), cap=100) is OVERFLOW
    assert np.all(gw_sample_many(spec, RngSeed(1), 5, cap=100) == OVERFLOW_CODE)
    assert gw_sample_total(GwSpec(3, 0.0), RngSeed(1)) == 1


def test_critical_tail_scales_like_inverse_root():
    report = gw_tail_check(GwSpec(3, 0.5), [10, 100, 1000])
    scaled = report.table["scaled_tail"].to_numpy()
    assert np.all(scaled > 0.1) and np.all(scaled < 3.0)
    assert report.c_hat == pytest.approx(scaled.max())
    with pytest.raises(GraphError):
        gw_tail_check(GwSpec(3, 0.7), [10])


def test_level_means():
    spec = GwSpec(3, 0.5)
    assert level_mean_exact(spec, 4) == pytest.approx(1.5)
    table = level_mean_check(spec, 5, 4000, RngSeed(3))
    assert np.allclose(table["exact"], 1.5)
    assert np.all(np.abs(table["mc_mean"] - table["exact"]) <= 5 * table["sigma"])
    assert table["bound_ok"].all()


def test_level_mean_window_bound():
    n = 1000
    spec = GwSpec(3, (1 + 1.0 * n ** (-1 / 3)) / 2)
    table = level_mean_check(spec, 5, 200, RngSeed(4), n=n, lam=1.0)
    assert table["bound_ok"].all()


def test_tree_resistance_values():
    assert tree_resistance(GwSpec(3, 0.5), 1) == pytest.approx(1 / 3)
    exact = tree_resistance(GwSpec(3, Fraction(1, 2)), 6)
    assert exact == Fraction(6, 3)
    for k in range(1, 8):
        assert tree_resistance(GwSpec(4, Fraction(1, 3)), k) >= Fraction(k, 3)
    with pytest.raises(GraphError):
        tree_resistance(GwSpec(3, 0.0), 2)


def test_survival_bound():
    table = survival_bound_check(GwSpec(3, 0.5), 8, 2000, RngSeed(5))
    assert table["ok"].all()
    assert (table["survival"].diff().dropna() <= 0).all()


def test_domination_exact_on_small_graphs():
    spec = GwSpec(3, 0.5)
    table = domination_exact(complete_graph(4), spec, 0.5, [1, 2, 3, 4])
    assert table["ok"].all()
    assert table["cluster_tail"].iloc[0] == pytest.approx(1.0)
    star = domination_exact(star_graph(3), spec, 0.5, [2, 3])
    assert star["ok"].all()


def test_domination_exact_caps():
    with pytest.raises(CapExceededError):
        domination_exact(complete_graph(8), GwSpec(7, 0.1), 0.1, [2])
    with pytest.raises(GraphError):
        domination_exact(complete_graph(5), GwSpec(3, 0.5), 0.5, [2])


def test_domination_monte_carlo(seed):
    g = random_regular(60, 3, seed)
    table = domination_check(g, GwSpec(3, 0.5), 0.5, 400, [2, 5, 10], seed)
    assert table["ok"].all()


def test_overflow_mass_comes_from_exploration_walk():
    spec = GwSpec(3, 0.5)
    pmf = gw_total_pmf_exact(spec, 200)
    assert pmf.overflow_independent
    assert pmf.normalization_residual() <= 1e-12
    killed, overflow = _exploration_walk(spec, 200)
    assert np.allclose(killed, pmf.masses, rtol=0.0, atol=1e-13)
    assert overflow == pytest.approx(pmf.overflow_mass, rel=1e-12)
    # 질량이 틀리면 잔차가 0 이 아니다
    skewed = ProgenyPmf(pmf.masses * (1 + 1e-6), pmf.overflow_mass)
    assert skewed.normalization_residual() > 1e-8


def test_exploration_walk_single_step():
    killed, overflow = _exploration_walk(GwSpec(4, 0.25), 1)
    assert killed[0] == pytest.approx(0.75 ** 4)
    assert overflow == pytest.approx(1 - 0.75 ** 4)


@pytest.mark.slow
def test_sampled_progeny_matches_exact_up_to_fifty():
    spec = GwSpec(3, 0.5)
    sizes = gw_sample_many(spec, RngSeed(0xB0), 10 ** 6, cap=10 ** 4)
    pmf = gw_total_pmf_exact(spec, 50)
    assert pmf.normalization_residual() <= 1e-12
    counts = np.bincount(sizes[(sizes >= 1) & (sizes <= 50)], minlength=51)[1:]
    freq = counts / sizes.size
    sigma = np.sqrt(pmf.masses * (1 - pmf.masses) / sizes.size)
    assert np.all(np.abs(freq - pmf.masses) <= 4 * sigma)


def test_survival_bound_up_to_thirty_levels():
    spec = GwSpec(3, 0.5)
    table = survival_bound_check(spec, 30, 20000, RngSeed(30))
    assert len(table) == 30
    assert table["ok"].all()
    # p = 1/(d-1) 에서 각 레벨 저항은 정확히 1/d
    exact = GwSpec(3, Fraction(1, 2))
    for k in range(1, 31):
        assert tree_resistance(exact, k) == Fraction(k, 3)
    for k in (1, 10, 30):
        assert tree_resistance(GwSpec(5, Fraction(1, 4)), k) >= Fraction(k, 5)


def test_subcritical_scaled_tail_vanishes():
    report = gw_tail_check(GwSpec(3, 0.3), [10, 100, 1000, 10000])
    scaled = report.table["scaled_tail"].to_numpy()
    assert np.all(np.diff(scaled) <= 0)
    assert scaled[-1] < 1e-6
    assert report.c_hat == pytest.approx(scaled[0])
