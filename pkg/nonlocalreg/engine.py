from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from typing import List, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np

from nonlocalreg.kinds import ReportFormat
from nonlocalreg.report_log import Record, RecordLog, _jsonable, emit_report

if TYPE_CHECKING:
    from nonlocalreg.setup_run import Settings

logger = logging.getLogger(__name__)


class Engine:
    """State of one command run: settings, records, randomness and outputs."""

    def __init__(self, settings: Settings, out_dir: str, seed: int = 0,
                 fmt: ReportFormat = ReportFormat.JSON, command: str = ""):
        self.settings = settings
        self.record_log = RecordLog(self)
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.out_dir = out_dir
        self.format = fmt
        self.command = command
        self.outputs: List[str] = []
        self.started = time.perf_counter()
        self.history: List[Tuple[str, str, float]] = [("start", command, 0.0)]

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started

    def log_step(self, step: str, detail: str = "") -> None:
        self.history.append((step, detail, round(self.elapsed, 6)))
        logger.info("%s %s (%.2fs)", step, detail, self.elapsed)

    def add_records(self, records: Sequence[Record]) -> None:
        self.record_log.extend(records)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def register(self, path: str) -> str:
        self.outputs.append(path)
        return path

    def emit(self, name: str = "report", records: Optional[Sequence[Record]] = None) -> str:
        """Write records (the whole log by default) in the run's report format."""
        records = self.record_log.records if records is None else records
        suffix = "jsonl" if self.format is ReportFormat.JSON else "csv"
        return self.register(emit_report(records, self.path(f"{name}.{suffix}"), self.format))

    def write_json(self, name: str, payload: dict) -> str:
        path = self.path(name)
        os.makedirs(self.out_dir, exist_ok=True)
        with open(path, "w") as f:
            json.dump(_jsonable(payload), f, sort_keys=True, indent=2)
        return self.register(path)

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "config_sha256": self.settings.sha256 if self.settings is not None else None,
            "seed": self.seed,
            "wall_time": self.elapsed,
            **self.record_log.pass_counts,
            "outputs": {path: file_sha256(path) for path in self.outputs if os.path.exists(path)},
            "history": [list(h) for h in self.history],
        }

    def save_manifest(self) -> str:
        return self.write_json("manifest.json", self.manifest())


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
