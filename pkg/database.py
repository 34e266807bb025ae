import sqlite3
import json
import logging
from datetime import datetime

from models import RunConfig, RunRecord, create_run_from_row


def get_db_connection(path):
    """Get a database connection"""
    conn = sqlite3.connect(path)
    conn.row_factory = sqlite3.Row
    return conn


def init_database(path):
    """Initialize the run ledger"""
    conn = get_db_connection(path)
    cursor = conn.cursor()

    cursor.execute('''
        CREATE TABLE IF NOT EXISTS Runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            config_json TEXT NOT NULL,
            report_json TEXT,
            seed INTEGER,
            created_date TEXT
        )
    ''')

    conn.commit()
    conn.close()
    logging.debug(f"Run ledger ready at {path}")


def record_run(path, config: RunConfig, report_text: str):
    """Append one run to the ledger and return its id, or None if the write failed"""
    try:
        init_database(path)
        conn = get_db_connection(path)
        cursor = conn.cursor()

        # created_date lives only in the ledger, never in the report itself
        cursor.execute("""
            INSERT INTO Runs (command, config_json, report_json, seed, created_date)
            VALUES (?, ?, ?, ?, ?)
        """, (
            config.command,
            json.dumps(config.to_dict(), sort_keys=True),
            report_text,
            config.seed,
            datetime.now().isoformat(),
        ))

        run_id = cursor.lastrowid
        conn.commit()
        conn.close()

        logging.info(f"Recorded run {run_id} ({config.command}) in {path}")
        return run_id

    except Exception as e:
        logging.error(f"Error recording run: {str(e)}")
        return None


def get_run(path, run_id) -> RunRecord:
    """Fetch one ledger row; None when it does not exist"""
    init_database(path)
    conn = get_db_connection(path)
    cursor = conn.cursor()
    cursor.execute("""
        SELECT id, command, config_json, report_json, seed, created_date
        FROM Runs WHERE id = ?
    """, (run_id,))
    row = cursor.fetchone()
    conn.close()
    return create_run_from_row(tuple(row)) if row else None


def list_runs(path, limit=20):
    """Most recent runs first"""
    init_database(path)
    conn = get_db_connection(path)
    cursor = conn.cursor()
    cursor.execute("""
        SELECT id, command, config_json, report_json, seed, created_date
        FROM Runs ORDER BY id DESC LIMIT ?
    """, (limit,))
    rows = cursor.fetchall()
    conn.close()
    return [create_run_from_row(tuple(row)) for row in rows]
