# test_lab_api.py - FastAPI 실행/조회 엔드포인트
import pytest
from fastapi.testclient import TestClient

from lab_api import API_MAX_N, app


@pytest.fixture
def client(temp_store):
    return TestClient(app)


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["version"] == "1.0.0"


def test_analyze_then_read_back(client):
    response = client.post("/analyze", json={"n_grid": [64], "trials": 2, "seed": 5})
    assert response.status_code == 200
    body = response.json()
    assert len(body["records"]) == 2
    run_id = body["run_id"]

    runs = client.get("/runs").json()["runs"]
    assert [run["id"] for run in runs] == [run_id]

    stored = client.get(f"/runs/{run_id}/records").json()
    assert stored["command"] == "analyze"
    assert stored["records"] == body["records"]
    assert stored["config"]["n_grid"] == [64]


def test_unknown_run_is_404(client):
    assert client.get("/runs/run_missing/records").status_code == 404


def test_rejects_oversized_and_invalid_jobs(client):
    assert client.post("/analyze", json={"n_grid": [API_MAX_N * 2]}).status_code == 400
    assert client.post("/analyze", json={"n_grid": [64], "family": "regular"}).status_code == 422
    assert client.post("/analyze", json={"trials": 1}).status_code == 422
