# test_experiments.py - 실험 설정 검증, 분석 파이프라인, 꼬리/임계 구간/chi 실험
import math

import numpy as np
import pytest
from pydantic import ValidationError

from experiments import (
    ExperimentConfig,
    ExperimentRecord,
    analyze_all,
    chi_curve,
    condition_references,
    critical_p,
    p_values,
    records_frame,
    run_edge_tail,
    run_good_level_check,
    run_lane_events,
    run_markov_bounds,
    run_scaling,
    run_small_component_diam,
    run_small_diam_bounds,
    small_diameter_bounds,
    run_tail_diam,
    run_window,
    task_seed,
    window_p,
)
from graph_core import GraphError, RngSeed, random_regular


def _config(**kwargs):
    base = {"family": "complete", "n_grid": [64], "trials": 2, "seed": 7, "threads": 1}
    base.update(kwargs)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValidationError):
        _config(n_grid=[128, 64])
    with pytest.raises(ValidationError):
        _config(family="regular", d=None)
    with pytest.raises(ValidationError):
        _config(family="regular", d=3, n_grid=[65])
    with pytest.raises(ValidationError):
        _config(family="hypercube", n_grid=[48])
    with pytest.raises(ValidationError):
        _config(p_rule="explicit")
    with pytest.raises(ValidationError):
        _config(p_grid=[0.2, 0.1], p_rule="grid")
    with pytest.raises(ValidationError, match="trails"):
        _config(trails=50)
    torus = _config(family="torus", n_grid=[], side=5, dim=2)
    assert torus.n_grid == [25]


def test_window_p():
    cfg = _config(n_grid=[1000], lam=1.0)
    assert window_p(cfg, 1000) == pytest.approx(1.1 / 1000)
    reg = _config(family="regular", d=4, n_grid=[1000], lam=0.0)
    assert window_p(reg, 1000) == pytest.approx(1.0 / 3.0)
    assert p_values(_config(p=0.2, p_rule="explicit"), 64) == [0.2]


def test_task_seeds_are_stable_and_distinct():
    cfg = _config()
    assert task_seed(cfg, 64, 0) == task_seed(cfg, 64, 0)
    assert task_seed(cfg, 64, 0) != task_seed(cfg, 64, 1)
    assert task_seed(cfg, 64, 0) != task_seed(cfg, 128, 0)


def test_analyze_records_are_sorted_and_consistent():
    cfg = _config(n_grid=[64, 128], components_per_trial=2)
    records = analyze_all(cfg)
    assert len(records) == 2 * 2 * 2
    assert [r.sort_key() for r in records] == sorted(r.sort_key() for r in records)
    for r in records:
        assert r.consistent()
        assert r.mixing_method == "exact"
        assert r.diameter == r.diameter_lower == r.diameter_upper
        assert r.t_mix <= r.upper_diam
        assert r.wall_time is None
    assert '"schema":1' in records[0].to_json()


def test_analyze_is_deterministic_across_threads():
    one = analyze_all(_config(family="regular", d=3, n_grid=[100], trials=3, threads=1))
    two = analyze_all(_config(family="regular", d=3, n_grid=[100], trials=3, threads=2))
    assert [r.to_json() for r in one] == [r.to_json() for r in two]


def test_analyze_with_p_grid_reuses_mask():
    cfg = _config(family="regular", d=3, n_grid=[200], trials=1, p_grid=[0.3, 0.5, 0.7], p_rule="grid", mixing=False)
    records = analyze_all(cfg)
    sizes = [r.size for r in records]
    assert [r.p for r in records] == [0.3, 0.5, 0.7]
    assert sizes == sorted(sizes)
    assert all("mixing_skipped" in r.flags for r in records)


def test_caps_switch_to_bounds():
    cfg = _config(n_grid=[400], trials=1, lam=3.0, exact_diameter_cap=2, exact_mixing_cap=2)
    record = analyze_all(cfg)[0]
    if record.size > 2:
        assert record.mixing_method == "bounds"
        assert "mixing_bounds" in record.flags
        assert record.t_mix is None
        assert record.diameter_lower <= record.diameter_upper


def test_records_frame_and_record_round_trip():
    records = analyze_all(_config(trials=1, timing=True))
    frame = records_frame(records)
    assert "diameter_value" in frame
    assert records[0].wall_time is not None
    again = ExperimentRecord.model_validate_json(records[0].to_json(timing=True))
    assert again == records[0]


def test_scaling_fits():
    cfg = _config(n_grid=[64, 128, 256, 512], trials=2, lane_certificate=False)
    result = run_scaling(cfg)
    assert result.fits["size"] is not None
    assert result.fits["diameter"] is not None
    summary = result.summary()
    assert summary["size"]["expected"] == pytest.approx(2.0 / 3.0)
    assert list(result.medians["n"]) == [64, 128, 256, 512]
    assert "size_q50" in result.quantiles


def test_scaling_refuses_short_grid():
    result = run_scaling(_config(n_grid=[64, 128], trials=1, mixing=False))
    assert result.fits["size"] is None
    assert result.summary()["size"]["refused"]


def test_tail_diam_table():
    cfg = _config(n_grid=[200], trials=6)
    result = run_tail_diam(cfg, [0.5, 1.0, 2.0])
    table = result.table
    assert list(table["A"]) == [0.5, 1.0, 2.0]
    assert (table["events"].diff().dropna() <= 0).all()
    assert ((table["ci_low"] <= table["p_hat"] + 1e-12) & (table["p_hat"] <= table["ci_high"] + 1e-12)).all()
    with pytest.raises(GraphError):
        run_tail_diam(_config(family="torus", n_grid=[25]), [1.0])


def test_edge_tail_table():
    result = run_edge_tail(_config(n_grid=[200], trials=6), [0.1, 0.5, 1.0])
    assert len(result.table) == 3
    assert set(result.table["decay_ok"]) <= {True, False}


def test_small_component_diam():
    cfg = _config(family="regular", d=3, n_grid=[1000], trials=3)
    table = run_small_component_diam(cfg, 10, [0.5, 1.0], 1.0).table
    assert list(table["D2"]) == [0.5, 1.0]
    assert table["bound"].tolist() == pytest.approx([10 ** 1.5 / 1000] * 2)
    with pytest.raises(GraphError):
        run_small_component_diam(cfg, 60, [1.0], 1.0)


def test_condition_references():
    assert condition_references(-1.0) == (2.0, 6.0)
    c1, c2 = condition_references(1.0)
    assert c1 == pytest.approx(2 * math.e)
    assert c2 == pytest.approx(8 * math.e)


def test_markov_bounds_table():
    cfg = _config(family="regular", d=3, n_grid=[1000], trials=20)
    table = run_markov_bounds(cfg, 50, 8, 4, [1.0, 3.0]).table
    assert len(table) == 7
    assert set(table["quantity"]) == {"diam_gt_R_fraction", "large_long_exists", "large_short_fraction",
                                      "large_short_exists", "largest_scaled", "largest_ge_A"}
    rows = table.set_index("quantity")
    c1, c2 = condition_references(0.0)
    assert rows.loc["diam_gt_R_fraction", "bound"] == pytest.approx(2 * c2 / 8)
    assert rows.loc["large_long_exists", "bound"] == pytest.approx(2 * c2 * 1000 / (50 * 8))
    assert rows.loc["large_short_fraction", "bound"] == pytest.approx(c1 * 4 / 50)
    assert rows.loc["large_short_exists", "bound"] == pytest.approx(c1 * 4 * 1000 / 50 ** 2)
    # 최대 차수 3: 반지름 3 공은 22 정점 이하라 |C| > 50 이면 diam >= 4
    assert rows.loc["large_short_fraction", "estimate"] == 0.0
    assert table["in_range"].all() and table["bound_ok"].all()
    assert table.loc[table["quantity"] == "largest_ge_A", "A"].tolist() == [1.0, 3.0]
    with pytest.raises(GraphError):
        run_markov_bounds(_config(family="torus", n_grid=[25]), 5, 2, 2)


def test_lane_events_on_complete_graph():
    cfg = _config(n_grid=[64], p=1.0, p_rule="explicit", trials=3)
    params = {"h": 1, "m": 100, "k": 1, "r": 2, "L": 1, "alpha": 1.0}
    table = run_lane_events(cfg, params).table
    assert table["quantity"].tolist() == ["small_ball", "lane_rich", "dense_ball"]
    # K_64: B(v,1) 은 64 < m 정점, 이심률 1 이라 레벨 2 레인 없음, 공 간선 2016 >= r^2
    assert table["estimate"].tolist() == [1.0, 0.0, 1.0]
    c1, c2 = condition_references(0.0)
    assert table.loc[1, "bound"] == pytest.approx(8 * c1 * c2 / 2)
    assert table.loc[2, "bound"] == pytest.approx(c1 / 2)
    with pytest.raises(GraphError):
        run_lane_events(cfg, {**params, "k": 2})
    with pytest.raises(GraphError):
        run_lane_events(cfg, {"h": 1})


def test_lane_events_default_schedule():
    cfg = _config(family="regular", d=3, n_grid=[1000], trials=4)
    table = run_lane_events(cfg).table
    assert len(table) == 3
    assert ((table["estimate"] >= 0) & (table["estimate"] <= 1)).all()
    assert table["alpha"].iloc[0] == pytest.approx(table["L"].iloc[0] / 20)


def test_small_diameter_bound_formulas():
    vertex, exists, vertex_ok, exists_ok = small_diameter_bounds(1000, 10, 100, 6.0)
    assert vertex == pytest.approx(6.0 * 0.1 * 2.0 ** (-100 ** 2 / (386 * 10)))
    assert exists == pytest.approx(4 * 6.0 * 0.1 * 2.0 ** (-100 ** 2 / (2 * 386 * 10)) * 100)
    assert vertex_ok and not exists_ok


def test_small_diam_bounds_table():
    cfg = _config(family="regular", d=3, n_grid=[1000], trials=4)
    table = run_small_diam_bounds(cfg, 10, 3).table
    assert table["quantity"].tolist() == ["small_long_fraction", "small_long_exists"]
    assert "hypotheses_ok" in table
    # |C| <= 10 인 성분의 지름은 9 이하
    assert run_small_diam_bounds(cfg, 10, 5).table["estimate"].tolist() == [0.0, 0.0]


def test_window_experiment():
    result = run_window(3, 216, [-1.0, 0.0, 1.0], 6, 1.0, 4, RngSeed(3), threads=1)
    table = result.table
    assert list(table["lam"]) == [-1.0, 0.0, 1.0]
    assert isinstance(result.increasing, bool)
    assert {"c1_hat", "c2_hat", "c1_ok", "c2_ok"} <= set(table.columns)


def test_good_level_check():
    cfg = _config(family="regular", d=3, n_grid=[400], trials=2)
    table = run_good_level_check(cfg, 200, 4)
    assert len(table) == 1
    assert table.loc[0, "M"] == 200
    with pytest.raises(GraphError):
        run_good_level_check(cfg, 8, 4)


def test_chi_curve_is_monotone_and_peaks_inside(seed):
    g = random_regular(300, 3, seed)
    grid = np.linspace(0.2, 0.9, 15).tolist()
    curve = chi_curve(g, grid, 20, seed)
    chi = curve.table["chi"].to_numpy()
    assert np.all(np.diff(chi) >= 0)
    assert chi[0] >= 1
    estimate = critical_p(curve, chi_lambda=1.0)
    assert estimate.p_hat in grid
    assert estimate.chi_lambda == 1.0
    if estimate.p_chi_target is not None:
        assert grid[0] <= estimate.p_chi_target <= grid[-1]
    with pytest.raises(GraphError):
        chi_curve(g, [0.1, 0.2], 5, seed)
    with pytest.raises(GraphError):
        chi_curve(g, [0.3, 0.2, 0.4], 5, seed)


@pytest.mark.slow
def test_largest_component_exponent_acceptance():
    cfg = _config(family="regular", d=3, n_grid=[1000, 2000, 4000, 8000, 16000], trials=20,
                  mixing=False, threads=None)
    result = run_scaling(cfg)
    assert abs(result.fits["size"].slope - 2.0 / 3.0) < 0.15


@pytest.mark.slow
def test_complete_graph_scaling_acceptance():
    # G(n, 1/n), n = 2^12 .. 2^17, 200 번 시행
    cfg = _config(family="complete", n_grid=[2 ** k for k in range(12, 18)], trials=200,
                  lam=0.0, mixing=False, threads=None)
    result = run_scaling(cfg)
    assert abs(result.fits["diameter"].slope - 1.0 / 3.0) <= 0.08
    assert abs(result.fits["size"].slope - 2.0 / 3.0) <= 0.07


@pytest.mark.slow
def test_mixing_time_scaling_acceptance():
    # 2^16 은 n^(2/3) 이 정확 혼합 상한 1500 을 넘어 어차피 적합에서 빠진다. 2^15 의 큰 C_1 은 3000 까지 정확 계산
    cfg = _config(family="complete", n_grid=[2 ** k for k in range(12, 16)], trials=100,
                  lam=0.0, lane_certificate=False, exact_mixing_cap=3000, threads=None)
    result = run_scaling(cfg)
    assert result.fits["t_mix"] is not None
    assert abs(result.fits["t_mix"].slope - 1.0) <= 0.2


@pytest.mark.slow
def test_diameter_tail_decays_acceptance():
    n = 2 ** 15
    cfg = _config(family="complete", n_grid=[n], trials=10 ** 4, lam=0.0, threads=None)
    result = run_tail_diam(cfg, [1, 2, 3, 4, 5, 6])
    fit = result.fits[n]
    assert fit is not None
    # log P 의 A^(3/2) 기울기는 음수이고 신뢰구간이 0 을 포함하지 않는다
    assert fit.c_hat > 0 and fit.ci_low > 0
