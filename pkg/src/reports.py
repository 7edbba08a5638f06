"""
Sweep report cache

Sweeps over generated streams are deterministic in (seed, count, windows),
so their JSON reports are cached in SQLite and served from there afterwards.
"""
from __future__ import annotations

import json
import logging
import os
import sqlite3
from datetime import datetime
from typing import Optional, Sequence

import config

logger = logging.getLogger('offload.reports')

REPORTS_CACHE_DB = config.REPORTS_CACHE_DB


def report_key(seed: int, count: int, windows: Sequence[int]) -> str:
    return f"{seed}:{count}:{','.join(str(n) for n in windows)}"


class ReportCache:
    def __init__(self, cache_path: Optional[str] = None):
        self.cache_path = cache_path or REPORTS_CACHE_DB
        self.init_table()

    def init_table(self):
        """Initialize the SQLite database for caching sweep reports"""
        directory = os.path.dirname(self.cache_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        conn = sqlite3.connect(self.cache_path)
        cursor = conn.cursor()
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS sweep_reports (
                report_key TEXT PRIMARY KEY,
                report TEXT,
                created_at TIMESTAMP
            )
        ''')
        conn.commit()
        conn.close()

    def get_cached_report(self, key: str) -> Optional[dict]:
        """Retrieve a cached report, None when it was never stored"""
        conn = sqlite3.connect(self.cache_path)
        cursor = conn.cursor()
        cursor.execute('SELECT report FROM sweep_reports WHERE report_key = ?', (key,))
        result = cursor.fetchone()
        conn.close()

        if result:
            return json.loads(result[0])
        return None

    def save_report_to_cache(self, key: str, report: dict):
        conn = sqlite3.connect(self.cache_path)
        cursor = conn.cursor()
        cursor.execute('''
            INSERT OR REPLACE INTO sweep_reports
            (report_key, report, created_at)
            VALUES (?, ?, ?)
        ''', (key, json.dumps(report), datetime.now()))
        conn.commit()
        conn.close()
        logger.debug(f"Cached sweep report {key}")
