# config.py - 실험실 전역 설정 (.env 기반)
import logging
import os

import psutil
from dotenv import load_dotenv

# .env 파일 로드
load_dotenv()


def _env_int(name, default):
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    return int(value, 0)


class LabConfig:
    def __init__(self):
        # 병렬 처리
        default_threads = psutil.cpu_count(logical=False) or 1
        self.THREADS = _env_int("CRITWALK_THREADS", default_threads)

        # 저장소 경로
        self.DB_PATH = os.getenv("CRITWALK_DB_PATH", os.path.join("data", "critwalk.db"))
        self.OUTPUT_DIR = os.getenv("CRITWALK_OUTPUT_DIR", os.path.join("data", "runs"))
        self.LOG_LEVEL = os.getenv("CRITWALK_LOG_LEVEL", "INFO").upper()

        # 정확 계산 상한
        self.EXACT_DIAMETER_CAP = _env_int("CRITWALK_EXACT_DIAMETER_CAP", 20000)
        self.EXACT_MIXING_CAP = _env_int("CRITWALK_EXACT_MIXING_CAP", 1500)
        self.DENSE_SOLVER_CAP = _env_int("CRITWALK_DENSE_SOLVER_CAP", 2000)
        self.COMPLETE_EDGE_BUDGET = _env_int("CRITWALK_COMPLETE_EDGE_BUDGET", 2_000_000)

    def as_dict(self):
        """현재 설정값 (로그/리포트용)"""
        return {
            "threads": self.THREADS,
            "db_path": self.DB_PATH,
            "output_dir": self.OUTPUT_DIR,
            "log_level": self.LOG_LEVEL,
            "exact_diameter_cap": self.EXACT_DIAMETER_CAP,
            "exact_mixing_cap": self.EXACT_MIXING_CAP,
            "dense_solver_cap": self.DENSE_SOLVER_CAP,
            "complete_edge_budget": self.COMPLETE_EDGE_BUDGET,
        }


# 전역 설정 인스턴스
config = LabConfig()


def setup_logging(level=None):
    """로깅 설정 (stderr, 한 번만 적용)"""
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
