# conftest.py - 테스트 공통 설정 (src/ 경로, 손으로 만든 그래프, 임시 저장소)
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import config as lab_config  # noqa: E402
from graph_core import RngSeed, graph_from_edges, path_graph  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 긴 Monte Carlo 수용 실험")


@pytest.fixture
def seed():
    return RngSeed(0x5EED)


@pytest.fixture
def path5():
    return path_graph(5)


@pytest.fixture
def c4():
    return graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)], "c4")


@pytest.fixture
def k2():
    return graph_from_edges(2, [(0, 1)], "k2")


@pytest.fixture
def doubled_path():
    """0 에서 갈라져 레벨 4 의 정점 9 에서 다시 만나는 두 갈래 경로"""
    edges = [(0, 1), (1, 2), (2, 3), (3, 9), (0, 5), (5, 6), (6, 7), (7, 9)]
    return graph_from_edges(10, edges + [(4, 9), (4, 8)], "doubled_path")


@pytest.fixture
def random_tree():
    rng = np.random.default_rng(7)
    parents = [int(rng.integers(v)) for v in range(1, 200)]
    return graph_from_edges(200, [(p, v) for v, p in zip(range(1, 200), parents)], "tree_200")


@pytest.fixture
def temp_store(tmp_path, monkeypatch):
    """config.DB_PATH 를 임시 파일로 바꾼다"""
    path = str(tmp_path / "critwalk_test.db")
    monkeypatch.setattr(lab_config, "DB_PATH", path)
    return path
