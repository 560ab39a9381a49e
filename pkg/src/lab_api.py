# lab_api.py - 실험 결과 조회/실행 API 서버
import logging
from typing import List, Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, ValidationError

from config import setup_logging
from experiments import ExperimentConfig, analyze_all
from graph_core import CapExceededError, GraphError, LabError
from record_store import RecordStore

# 로깅 설정
setup_logging()
logger = logging.getLogger(__name__)

# API 로 돌리는 작업은 작게 유지
API_MAX_N = 4096
API_MAX_TRIALS = 16

# FastAPI 앱 생성
app = FastAPI(
    title="critwalk 실험 API",
    description="임계 퍼콜레이션 지름/혼합시간 실험 결과 조회 및 소규모 분석 실행",
    version="1.0.0"
)

# CORS 설정
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class AnalyzeRequest(BaseModel):
    family: Literal["complete", "regular", "hypercube", "torus"] = "complete"
    n_grid: List[int] = Field(min_length=1)
    d: Optional[int] = None
    dim: Optional[int] = None
    lam: float = 0.0
    p: Optional[float] = None
    trials: int = Field(default=1, ge=1, le=API_MAX_TRIALS)
    seed: int = Field(default=0, ge=0)
    components_per_trial: int = Field(default=1, ge=1)
    mixing: bool = True

    def to_config(self):
        if max(self.n_grid) > API_MAX_N:
            raise GraphError(f"API runs are limited to n <= {API_MAX_N}")
        data = self.model_dump(exclude_none=True)
        data["p_rule"] = "explicit" if self.p is not None else "window"
        data["threads"] = 1
        return ExperimentConfig.model_validate(data)


def get_store():
    return RecordStore()


@app.on_event("startup")
async def startup_event():
    """서버 시작 시 저장소 초기화"""
    get_store()
    logger.info("🚀 critwalk API 시작")


@app.get("/")
async def root():
    return {"message": "critwalk 실험 API", "version": "1.0.0"}


@app.get("/runs")
async def list_runs():
    try:
        return {"runs": get_store().list_runs()}
    except Exception as e:
        logger.error(f"❌ 실행 목록 조회 실패: {e}")
        raise HTTPException(status_code=500, detail=f"실행 목록 조회 실패: {str(e)}")


@app.get("/runs/{run_id}/records")
async def get_run_records(run_id: str):
    store = get_store()
    run = store.get_run(run_id)
    if run is None:
        raise HTTPException(status_code=404, detail="실행을 찾을 수 없습니다.")
    records = store.get_records(run_id)
    return {
        "run_id": run_id,
        "command": run["command"],
        "config": run["config"].model_dump(),
        "records": [r.model_dump(by_alias=True) for r in records],
    }


@app.post("/analyze")
def analyze(request: AnalyzeRequest):
    """작은 analyze 작업을 동기 실행하고 저장"""
    try:
        cfg = request.to_config()
        records = analyze_all(cfg)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except (GraphError, CapExceededError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except LabError as e:
        logger.error(f"❌ 분석 실패: {e}")
        raise HTTPException(status_code=500, detail=f"분석 실패: {str(e)}")

    run_id = get_store().save_run("analyze", cfg, records)
    logger.info(f"✅ API 분석 완료: {run_id} ({len(records)} records)")
    return {
        "run_id": run_id,
        "records": [r.model_dump(by_alias=True) for r in records],
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
