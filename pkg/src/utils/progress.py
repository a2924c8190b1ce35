# src/utils/progress.py

import os
import time
import logging
import threading
from typing import Dict, Optional

logger = logging.getLogger(__name__)


def worker_count(default: Optional[int] = None) -> int:
    """Thread cap for parallel work: TOKTIDE_THREADS, else the CPU count."""
    env = os.environ.get("TOKTIDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring non-integer TOKTIDE_THREADS={env!r}")
    return max(1, default or os.cpu_count() or 1)


class ProgressTracker:
    """Thread-safe completion counter that reports through the logger."""

    def __init__(self, total: int, label: str = "items", report_every: float = 5.0):
        self.total = total
        self.label = label
        self.report_every = report_every
        self.done = 0
        self.failed = 0
        self.lock = threading.Lock()
        self.start_time = time.time()
        self.last_update_time = self.start_time

    def update(self, status: str = "done"):
        with self.lock:
            if status == "failed":
                self.failed += 1
            else:
                self.done += 1

            current_time = time.time()
            finished = self.done + self.failed >= self.total
            if finished or current_time - self.last_update_time >= self.report_every:
                self._report()
                self.last_update_time = current_time

    def _report(self):
        processed = self.done + self.failed
        elapsed = time.time() - self.start_time
        rate = processed / elapsed if elapsed > 0 else 0.0
        percent = (processed / self.total) * 100 if self.total > 0 else 100.0

        if rate > 0:
            eta_seconds = (self.total - processed) / rate
            eta = f"{int(eta_seconds // 60):02d}:{int(eta_seconds % 60):02d}"
        else:
            eta = "unknown"

        logger.info(f"Progress: {processed}/{self.total} {self.label} ({percent:.1f}%) - "
                    f"failed: {self.failed} - ETA: {eta}")

    def get_summary(self) -> Dict:
        elapsed = time.time() - self.start_time
        return {
            'done': self.done,
            'failed': self.failed,
            'total': self.total,
            'elapsed_seconds': elapsed,
        }
