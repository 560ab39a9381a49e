# record_store.py - 실험 결과 저장소 (sqlite 실행 이력 + JSONL/CSV 내보내기)
import json
import logging
import os
import sqlite3
import sys
from datetime import datetime

import pandas as pd

from config import config
from experiments import ExperimentConfig, ExperimentRecord, records_frame

logger = logging.getLogger(__name__)


class RecordStore:
    """실행(run) 단위로 설정과 레코드를 sqlite 에 보관"""

    def __init__(self, db_path=None):
        self.db_path = db_path or config.DB_PATH
        self.init_database()

    def get_connection(self):
        """데이터베이스 연결"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def init_database(self):
        """데이터베이스 초기화"""
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        conn = self.get_connection()
        cursor = conn.cursor()

        # 실행 이력 테이블
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id TEXT PRIMARY KEY,
                command TEXT NOT NULL,
                config_json TEXT NOT NULL,
                record_count INTEGER DEFAULT 0,
                summary_json TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')

        # 성분 레코드 테이블
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS records (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id TEXT NOT NULL,
                n INTEGER NOT NULL,
                p REAL NOT NULL,
                trial_id INTEGER NOT NULL,
                component_rank INTEGER NOT NULL,
                payload TEXT NOT NULL,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_records_run ON records (run_id)')

        conn.commit()
        conn.close()
        logger.debug("record store ready at %s", self.db_path)

    def create_run(self, command, cfg, summary=None):
        run_id = f"run_{datetime.now().strftime('%Y%m%d_%H%M%S_%f')}"
        conn = self.get_connection()
        try:
            conn.execute(
                "INSERT INTO runs (id, command, config_json, summary_json) VALUES (?, ?, ?, ?)",
                (run_id, command, cfg.model_dump_json(), json.dumps(summary) if summary is not None else None),
            )
            conn.commit()
        finally:
            conn.close()
        return run_id

    def add_records(self, run_id, records):
        conn = self.get_connection()
        try:
            conn.executemany(
                "INSERT INTO records (run_id, n, p, trial_id, component_rank, payload) VALUES (?, ?, ?, ?, ?, ?)",
                [(run_id, r.n, r.p, r.trial_id, r.component_rank, r.to_json(timing=True)) for r in records],
            )
            conn.execute(
                "UPDATE runs SET record_count = record_count + ? WHERE id = ?", (len(records), run_id))
            conn.commit()
        except sqlite3.Error:
            conn.rollback()
            raise
        finally:
            conn.close()
        logger.info("✅ stored %d records in %s", len(records), run_id)

    def save_run(self, command, cfg, records, summary=None):
        run_id = self.create_run(command, cfg, summary)
        self.add_records(run_id, records)
        return run_id

    def list_runs(self):
        conn = self.get_connection()
        try:
            rows = conn.execute(
                "SELECT id, command, record_count, created_at FROM runs ORDER BY created_at DESC, id DESC"
            ).fetchall()
            return [dict(row) for row in rows]
        finally:
            conn.close()

    def get_run(self, run_id):
        conn = self.get_connection()
        try:
            row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        finally:
            conn.close()
        if row is None:
            return None
        run = dict(row)
        run["config"] = ExperimentConfig.model_validate_json(run.pop("config_json"))
        summary = run.pop("summary_json")
        run["summary"] = json.loads(summary) if summary else None
        return run

    def get_records(self, run_id):
        conn = self.get_connection()
        try:
            rows = conn.execute(
                "SELECT payload FROM records WHERE run_id = ? ORDER BY n, p, trial_id, component_rank",
                (run_id,),
            ).fetchall()
        finally:
            conn.close()
        return [ExperimentRecord.model_validate_json(row["payload"]) for row in rows]


# ---------------------------------------------------------------------------
# 파일 출력
# ---------------------------------------------------------------------------

def _open_output(path):
    if path in (None, "-"):
        return sys.stdout, False
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="\n"), True


def write_jsonl(records, path=None, timing=False):
    """(n, p, trial_id, component_rank) 정렬, schema 1, 키 순서 고정"""
    out, owned = _open_output(path)
    try:
        for record in sorted(records, key=ExperimentRecord.sort_key):
            out.write(record.to_json(timing=timing))
            out.write("\n")
    finally:
        if owned:
            out.close()


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [ExperimentRecord.model_validate_json(line) for line in f if line.strip()]


def write_csv(records, path=None, timing=False):
    """평평한 CSV (리스트 필드는 ';' 로 합친다)"""
    frame = records_frame(sorted(records, key=ExperimentRecord.sort_key))
    if frame.empty:
        frame = pd.DataFrame(columns=list(ExperimentRecord.model_fields))
    for column in ("lane_failure", "flags"):
        if column in frame:
            frame[column] = frame[column].map(lambda items: ";".join(items) if isinstance(items, list) else "")
    if not timing and "wall_time" in frame:
        frame = frame.drop(columns=["wall_time"])
    out, owned = _open_output(path)
    try:
        frame.to_csv(out, index=False, lineterminator="\n")
    finally:
        if owned:
            out.close()


def write_table(frame, path=None, fmt="jsonl"):
    """실험 요약 표 출력"""
    out, owned = _open_output(path)
    try:
        if fmt == "csv":
            frame.to_csv(out, index=False, lineterminator="\n")
        else:
            for row in frame.to_dict(orient="records"):
                out.write(json.dumps(row, default=_json_default))
                out.write("\n")
    finally:
        if owned:
            out.close()


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
