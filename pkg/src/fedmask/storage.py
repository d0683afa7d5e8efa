"""Embedded persistence for accounts and project records.

The coordination service stores user accounts and project state through
this interface. The sqlite implementation keeps everything in one file
(or in memory for tests and simulation runs); project records are opaque
JSON blobs serialized by the server, so the schema stays two tables.
"""

from __future__ import annotations

import json
import sqlite3
import threading


class Storage:
    """Interface the server codes against."""

    def put_user(self, username: str, password_digest: str) -> bool:
        """Insert an account; returns False if the username exists."""
        raise NotImplementedError

    def get_user(self, username: str):
        """Return the stored password digest or None."""
        raise NotImplementedError

    def put_project(self, project_id: str, record: dict) -> None:
        raise NotImplementedError

    def get_project(self, project_id: str):
        """Return the stored record dict or None."""
        raise NotImplementedError

    def list_projects(self) -> list:
        """All stored (project_id, record) pairs in insertion order."""
        raise NotImplementedError

    def close(self) -> None:
        pass


class SqliteStorage(Storage):
    def __init__(self, path: str = ":memory:"):
        self.path = path
        # One connection shared across server threads; sqlite serializes
        # writes itself, the lock keeps cursor use race-free.
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock, self._conn:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS users ("
                " username TEXT PRIMARY KEY,"
                " password_digest TEXT NOT NULL)"
            )
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS projects ("
                " id TEXT PRIMARY KEY,"
                " seq INTEGER,"
                " record TEXT NOT NULL)"
            )

    def put_user(self, username: str, password_digest: str) -> bool:
        with self._lock, self._conn:
            try:
                self._conn.execute(
                    "INSERT INTO users (username, password_digest) VALUES (?, ?)",
                    (username, password_digest),
                )
            except sqlite3.IntegrityError:
                return False
        return True

    def get_user(self, username: str):
        with self._lock:
            row = self._conn.execute(
                "SELECT password_digest FROM users WHERE username = ?", (username,)
            ).fetchone()
        return row[0] if row else None

    def put_project(self, project_id: str, record: dict) -> None:
        blob = json.dumps(record, sort_keys=True)
        with self._lock, self._conn:
            row = self._conn.execute(
                "SELECT seq FROM projects WHERE id = ?", (project_id,)
            ).fetchone()
            if row is None:
                top = self._conn.execute("SELECT MAX(seq) FROM projects").fetchone()
                seq = (top[0] or 0) + 1
                self._conn.execute(
                    "INSERT INTO projects (id, seq, record) VALUES (?, ?, ?)",
                    (project_id, seq, blob),
                )
            else:
                self._conn.execute(
                    "UPDATE projects SET record = ? WHERE id = ?", (blob, project_id)
                )

    def get_project(self, project_id: str):
        with self._lock:
            row = self._conn.execute(
                "SELECT record FROM projects WHERE id = ?", (project_id,)
            ).fetchone()
        return json.loads(row[0]) if row else None

    def list_projects(self) -> list:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id, record FROM projects ORDER BY seq"
            ).fetchall()
        return [(project_id, json.loads(blob)) for project_id, blob in rows]

    def close(self) -> None:
        with self._lock:
            self._conn.close()
