"""Append-only event log persistence.

One NDJSON file per study. Every state mutation is one appended event;
full state is reconstructed by replaying the file, so a crash between
append and in-memory apply loses nothing (the log is the truth).
"""

from __future__ import annotations

import json
import os
from typing import Iterator


class EventLog:
    def __init__(self, path: str):
        self.path = path
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)

    def append(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def replay(self) -> Iterator[dict]:
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)


def study_log_path(data_dir: str, study_id: str) -> str:
    return os.path.join(data_dir, "studies", f"{study_id}.ndjson")


def list_study_ids(data_dir: str) -> list[str]:
    studies_dir = os.path.join(data_dir, "studies")
    if not os.path.isdir(studies_dir):
        return []
    return sorted(
        name[: -len(".ndjson")]
        for name in os.listdir(studies_dir)
        if name.endswith(".ndjson")
    )
